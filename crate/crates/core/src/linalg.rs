//! Small dense kernels over [`Real`], row-major `n x n` slices.

use crate::real::Real;

pub fn matmul<T: Real>(a: &[T], b: &[T], n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = a[i * n].clone() * &b[j];
            for k in 1..n {
                acc = acc + a[i * n + k].clone() * &b[k * n + j];
            }
            out.push(acc);
        }
    }
    out
}

/// `phi * v * phi^T`, exactly symmetric by construction.
pub fn congruence<T: Real>(phi: &[T], v: &[T], n: usize) -> Vec<T> {
    let w = matmul(phi, v, n);
    let mut out: Vec<Option<T>> = vec![None; n * n];
    for i in 0..n {
        for j in i..n {
            let mut acc = w[i * n].clone() * &phi[j * n];
            for k in 1..n {
                acc = acc + w[i * n + k].clone() * &phi[j * n + k];
            }
            out[j * n + i] = Some(acc.clone());
            out[i * n + j] = Some(acc);
        }
    }
    out.into_iter().map(|x| x.expect("filled")).collect()
}

pub fn symmetrize<T: Real>(v: &mut [T], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            let half = v[i * n + j].lift(0.5);
            let m = (v[i * n + j].clone() + &v[j * n + i]) * &half;
            v[i * n + j] = m.clone();
            v[j * n + i] = m;
        }
    }
}

pub fn det2<T: Real>(a: &T, b: &T, c: &T, d: &T) -> T {
    a.clone() * d - b.clone() * c
}

/// Determinant by Gaussian elimination with full pivoting.
pub fn det<T: Real>(a: &[T], n: usize) -> T {
    let mut m = a.to_vec();
    let mut sign_flip = false;
    let mut out = m[0].lift(1.0);
    for k in 0..n {
        let (mut pr, mut pc) = (k, k);
        let mut best = m[k * n + k].abs();
        for i in k..n {
            for j in k..n {
                let x = m[i * n + j].abs();
                if x > best {
                    best = x;
                    pr = i;
                    pc = j;
                }
            }
        }
        if best.is_zero() {
            return m[0].zero_like();
        }
        if pr != k {
            for j in 0..n {
                m.swap(k * n + j, pr * n + j);
            }
            sign_flip = !sign_flip;
        }
        if pc != k {
            for i in 0..n {
                m.swap(i * n + k, i * n + pc);
            }
            sign_flip = !sign_flip;
        }
        let piv = m[k * n + k].clone();
        for i in (k + 1)..n {
            let f = m[i * n + k].clone() / &piv;
            for j in (k + 1)..n {
                let t = f.clone() * &m[k * n + j];
                m[i * n + j] = m[i * n + j].clone() - t;
            }
        }
        out = out * &piv;
    }
    if sign_flip {
        -out
    } else {
        out
    }
}

/// Inverse by Gauss-Jordan elimination with full pivoting.
pub fn inverse<T: Real>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut m = a.to_vec();
    let zero = a[0].zero_like();
    let one = a[0].lift(1.0);
    let mut inv: Vec<T> = (0..n * n)
        .map(|i| if i / n == i % n { one.clone() } else { zero.clone() })
        .collect();
    let mut col_perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pr, mut pc) = (k, k);
        let mut best = m[k * n + k].abs();
        for i in k..n {
            for j in k..n {
                let x = m[i * n + j].abs();
                if x > best {
                    best = x;
                    pr = i;
                    pc = j;
                }
            }
        }
        if best.is_zero() {
            return None;
        }
        if pr != k {
            for j in 0..n {
                m.swap(k * n + j, pr * n + j);
                inv.swap(k * n + j, pr * n + j);
            }
        }
        if pc != k {
            for i in 0..n {
                m.swap(i * n + k, i * n + pc);
            }
            col_perm.swap(k, pc);
        }
        let piv = m[k * n + k].clone();
        for j in 0..n {
            m[k * n + j] = m[k * n + j].clone() / &piv;
            inv[k * n + j] = inv[k * n + j].clone() / &piv;
        }
        for i in 0..n {
            if i == k || m[i * n + k].is_zero() {
                continue;
            }
            let f = m[i * n + k].clone();
            for j in 0..n {
                let t = f.clone() * &m[k * n + j];
                m[i * n + j] = m[i * n + j].clone() - t;
                let t = f.clone() * &inv[k * n + j];
                inv[i * n + j] = inv[i * n + j].clone() - t;
            }
        }
    }
    // Column swaps of the input permute the rows of the inverse.
    let mut out = inv.clone();
    for (k, &orig) in col_perm.iter().enumerate() {
        for j in 0..n {
            out[orig * n + j] = inv[k * n + j].clone();
        }
    }
    Some(out)
}

pub fn trace<T: Real>(a: &[T], n: usize) -> T {
    let mut acc = a[0].clone();
    for i in 1..n {
        acc = acc + &a[i * n + i];
    }
    acc
}

/// `log2` of the largest absolute entry, `-inf` for the zero matrix.
pub fn log2_max_abs<T: Real>(a: &[T]) -> f64 {
    a.iter()
        .filter(|x| !x.is_zero())
        .map(|x| x.log2_abs())
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn lift_all<T: Real>(like: &T, a: &[f64]) -> Vec<T> {
    a.iter().map(|&x| like.lift(x)).collect()
}
