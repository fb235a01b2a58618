//! Gaussian state: quadrature means and covariance matrix.
//!
//! Quadratures are `x = (c + c^dag)/sqrt2`, `p = -i(c - c^dag)/sqrt2`, ordered
//! mode by mode, so the vacuum has variance 1/2. The three-mode ordering is
//! `(a1, b, a2)`, keeping the mechanical mode second in both layouts.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, log2_max_abs};
use crate::params::SystemParams;
use crate::real::Real;
use crate::wide::Wide;

/// Entries larger than `2^REBASE_LOG2` trigger a rebase of the shared exponent.
pub const REBASE_LOG2: f64 = 512.0;

/// Index of the mechanical mode in both layouts.
pub const MECHANICAL_MODE: usize = 1;

#[derive(Clone, Debug)]
pub struct CovarianceMatrix<T> {
    dim: usize,
    entries: Vec<T>,
    scale_exponent: i64,
    frame: Option<Vec<f64>>,
}

impl<T: Real> CovarianceMatrix<T> {
    pub fn from_entries(dim: usize, entries: Vec<T>, scale_exponent: i64) -> Self {
        assert_eq!(entries.len(), dim * dim);
        let mut v = CovarianceMatrix { dim, entries, scale_exponent, frame: None };
        linalg::symmetrize(&mut v.entries, dim);
        v
    }

    pub fn from_f64(dim: usize, entries: &[f64], bits: u32) -> Self {
        let like = T::from_f64_bits(0.0, bits);
        Self::from_entries(dim, linalg::lift_all(&like, entries), 0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_modes(&self) -> usize {
        self.dim / 2
    }

    pub fn scale_exponent(&self) -> i64 {
        self.scale_exponent
    }

    pub fn bits(&self) -> u32 {
        self.entries[0].bits()
    }

    /// Stored entries; in the quadrature basis unless a frame is attached.
    pub fn raw(&self) -> &[T] {
        &self.entries
    }

    pub fn frame(&self) -> Option<&[f64]> {
        self.frame.as_deref()
    }

    /// Replace the stored core, frame and exponent wholesale.
    pub fn set_parts(&mut self, entries: Vec<T>, frame: Option<Vec<f64>>, scale_exponent: i64) {
        assert_eq!(entries.len(), self.dim * self.dim);
        self.entries = entries;
        self.frame = frame;
        self.scale_exponent = scale_exponent;
    }

    /// `V * 2^-scale_exponent` in the quadrature basis.
    pub fn scaled(&self) -> Vec<T> {
        match &self.frame {
            None => self.entries.clone(),
            Some(q) => {
                let like = &self.entries[0];
                let qt = linalg::lift_all(like, q);
                linalg::congruence(&qt, &self.entries, self.dim)
            }
        }
    }

    /// Entry `(i, j)`, zero-based.
    pub fn element(&self, i: usize, j: usize) -> Wide {
        let s = self.scaled();
        Wide::from_real(&s[i * self.dim + j], self.scale_exponent)
    }

    pub fn log2_max_abs(&self) -> f64 {
        log2_max_abs(&self.entries) + self.scale_exponent as f64
    }

    /// Pull a power of two out of the entries once they pass `2^512`.
    pub fn rebase(&mut self) {
        let m = log2_max_abs(&self.entries);
        if m.is_finite() && m > REBASE_LOG2 {
            let k = m.floor() as i64;
            for x in &mut self.entries {
                *x = x.ldexp(-k);
            }
            self.scale_exponent += k;
        }
    }

    /// Same state with the shared exponent moved by `k` (the value is unchanged).
    pub fn shifted(&self, k: i64) -> Self {
        let mut out = self.clone();
        for x in &mut out.entries {
            *x = x.ldexp(-k);
        }
        out.scale_exponent += k;
        out
    }

    pub fn with_bits(&self, bits: u32) -> Self {
        CovarianceMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(|x| x.with_bits(bits)).collect(),
            scale_exponent: self.scale_exponent,
            frame: self.frame.clone(),
        }
    }

    pub fn convert<U: Real>(&self, bits: u32) -> CovarianceMatrix<U> {
        let like = U::from_f64_bits(0.0, bits);
        let entries = self
            .entries
            .iter()
            .map(|x| {
                let (m, e) = x.frexp();
                like.lift(m).ldexp(e)
            })
            .collect();
        CovarianceMatrix {
            dim: self.dim,
            entries,
            scale_exponent: self.scale_exponent,
            frame: self.frame.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|x| x.is_finite())
    }

    /// Snapshot as `f64` mantissas under a common exponent.
    pub fn snapshot(&self) -> Snapshot {
        let s = self.scaled();
        let m = log2_max_abs(&s);
        let k = if m.is_finite() { m.ceil() as i64 } else { 0 };
        Snapshot {
            dim: self.dim,
            entries: s.iter().map(|x| x.ldexp(-k).to_f64()).collect(),
            exp2: k + self.scale_exponent,
        }
    }
}

/// Covariance entries as `entries * 2^exp2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub dim: usize,
    pub entries: Vec<f64>,
    pub exp2: i64,
}

impl Snapshot {
    pub fn element(&self, i: usize, j: usize) -> Wide {
        Wide::new(self.entries[i * self.dim + j], self.exp2)
    }

    /// Plain `f64` matrix; saturates outside the double range.
    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|&x| Wide::new(x, self.exp2).to_f64()).collect()
    }
}

/// Real quadrature means with their own shared exponent, plus the analytic
/// displacement of each cavity mode.
#[derive(Clone, Debug)]
pub struct MeanVector<T> {
    pub quadratures: Vec<T>,
    pub scale_exponent: i64,
    pub displacement: Vec<Complex64>,
}

impl<T: Real> MeanVector<T> {
    pub fn zeros(dim: usize, cavities: usize, bits: u32) -> Self {
        MeanVector {
            quadratures: (0..dim).map(|_| T::from_f64_bits(0.0, bits)).collect(),
            scale_exponent: 0,
            displacement: vec![Complex64::new(0.0, 0.0); cavities],
        }
    }

    /// Complex amplitude `<c_k> = (<x_k> + i<p_k>)/sqrt2` of mode `k`.
    pub fn amplitude(&self, k: usize) -> (Wide, Wide) {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let re = Wide::from_real(&self.quadratures[2 * k], self.scale_exponent).scale(r);
        let im = Wide::from_real(&self.quadratures[2 * k + 1], self.scale_exponent).scale(r);
        (re, im)
    }

    pub fn rebase(&mut self) {
        let m = log2_max_abs(&self.quadratures);
        if m.is_finite() && m > REBASE_LOG2 {
            let k = m.floor() as i64;
            for x in &mut self.quadratures {
                *x = x.ldexp(-k);
            }
            self.scale_exponent += k;
        }
    }

    pub fn with_bits(&self, bits: u32) -> Self {
        MeanVector {
            quadratures: self.quadratures.iter().map(|x| x.with_bits(bits)).collect(),
            scale_exponent: self.scale_exponent,
            displacement: self.displacement.clone(),
        }
    }

    pub fn convert<U: Real>(&self, bits: u32) -> MeanVector<U> {
        let like = U::from_f64_bits(0.0, bits);
        MeanVector {
            quadratures: self
                .quadratures
                .iter()
                .map(|x| {
                    let (m, e) = x.frexp();
                    like.lift(m).ldexp(e)
                })
                .collect(),
            scale_exponent: self.scale_exponent,
            displacement: self.displacement.clone(),
        }
    }
}

/// Cavity vacuum times a thermal mechanical state, all means zero.
pub fn initial_state(params: &SystemParams, n_modes: usize) -> Result<(MeanVector<f64>, CovarianceMatrix<f64>)> {
    if !(2..=3).contains(&n_modes) {
        return Err(Error::InvalidModes(n_modes));
    }
    let dim = 2 * n_modes;
    let mut v = vec![0.0; dim * dim];
    for mode in 0..n_modes {
        let var = if mode == MECHANICAL_MODE { params.n_th + 0.5 } else { 0.5 };
        v[(2 * mode) * dim + 2 * mode] = var;
        v[(2 * mode + 1) * dim + 2 * mode + 1] = var;
    }
    Ok((
        MeanVector::zeros(dim, n_modes - 1, 53),
        CovarianceMatrix::from_f64(dim, &v, 53),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::Big;

    fn params(n_th: f64) -> SystemParams {
        SystemParams { kappa: 1.0, g_m: 1e-4, omega_m: 10.0, gamma_m: 1e-5, n_th, n_c: 0.0 }
    }

    #[test]
    fn thermal_mechanics_vacuum_cavity() {
        let (mu, v) = initial_state(&params(6e4), 2).unwrap();
        let s = v.scaled();
        assert_eq!(s, vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 60000.5, 0.0, 0.0, 0.0, 0.0, 60000.5]);
        assert!(mu.quadratures.iter().all(|&x| x == 0.0));

        let (_, v3) = initial_state(&params(4e4), 3).unwrap();
        let diag: Vec<f64> = (0..6).map(|i| v3.scaled()[i * 7]).collect();
        assert_eq!(diag, vec![0.5, 0.5, 40000.5, 40000.5, 0.5, 0.5]);
    }

    #[test]
    fn rejects_other_mode_counts() {
        assert!(matches!(initial_state(&params(0.0), 4), Err(Error::InvalidModes(4))));
        assert!(initial_state(&params(0.0), 1).is_err());
    }

    #[test]
    fn rebase_preserves_value() {
        let v: CovarianceMatrix<Big> = CovarianceMatrix::from_f64(2, &[3.0, 1.0, 1.0, 2.0], 128);
        let mut big = v.shifted(-600);
        assert_eq!(big.scale_exponent(), -600);
        assert!(big.log2_max_abs() < 2.0);
        big.rebase();
        assert!(big.scale_exponent() > -600);
        assert_eq!(big.element(0, 0).to_f64(), 3.0);
        assert_eq!(big.element(0, 1).to_f64(), 1.0);
    }
}
