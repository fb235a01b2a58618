//! Entanglement, purity and occupation numbers of Gaussian states, plus
//! late-time statistics of entanglement trajectories.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{det, det2, inverse, lift_all, log2_max_abs, matmul};
use crate::real::{Big, Real};
use crate::state::{CovarianceMatrix, MeanVector, MECHANICAL_MODE};
use crate::wide::Wide;

/// Relative slack on `Sigma^2 - 4 det V` before a state is declared unphysical.
const DISCRIMINANT_TOL: f64 = 1e-9;

/// `Sigma^2 - 4 det V` below this fraction of `Sigma^2` triggers a wider evaluation.
const NEAR_DEGENERATE: f64 = 1.0 / 1048576.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Negativity {
    pub e_n: f64,
    /// Smallest symplectic eigenvalue of the partial transpose.
    pub eta_minus: f64,
    /// `-ln(2 eta_minus)` before clamping at zero.
    pub raw: f64,
}

/// Symplectic form on `n` modes, optionally with the momentum of mode 2 flipped.
fn symplectic_form(n_modes: usize, flip_second: bool) -> Vec<f64> {
    let dim = 2 * n_modes;
    let mut o = vec![0.0; dim * dim];
    for k in 0..n_modes {
        let s = if flip_second && k == 1 { -1.0 } else { 1.0 };
        o[(2 * k) * dim + 2 * k + 1] = s;
        o[(2 * k + 1) * dim + 2 * k] = -s;
    }
    o
}

/// `Q^T O Q` for an orthogonal frame `Q`.
fn form_in_frame(o: &[f64], q: &[f64], n: usize) -> Vec<f64> {
    let qm = DMatrix::from_row_slice(n, n, q);
    let om = DMatrix::from_row_slice(n, n, o);
    let r = qm.transpose() * om * qm;
    (0..n * n).map(|i| r[(i / n, i % n)]).collect()
}

/// Entries normalised so the largest is of order one, with the exponent removed.
struct Normalised<T> {
    w: Vec<T>,
    exp2: i64,
}

fn normalised<T: Real>(v: &CovarianceMatrix<T>) -> Normalised<T> {
    let m = log2_max_abs(v.raw());
    let k = if m.is_finite() { m.ceil() as i64 } else { 0 };
    Normalised {
        w: v.raw().iter().map(|x| x.ldexp(-k)).collect(),
        exp2: k + v.scale_exponent(),
    }
}

/// `-tr((O W)^2) / 2`, the sum of squared symplectic eigenvalues for form `O`.
fn squared_sum<T: Real>(o: &[f64], w: &[T], n: usize) -> T {
    let ol = lift_all(&w[0], o);
    let p = matmul(&ol, w, n);
    let mut acc = w[0].zero_like();
    for i in 0..n {
        for j in 0..n {
            acc = acc + p[i * n + j].clone() * &p[j * n + i];
        }
    }
    acc * &w[0].lift(-0.5)
}

fn blocks_invariant<T: Real>(w: &[T], sign: f64) -> T {
    let at = |i: usize, j: usize| &w[i * 4 + j];
    let da = det2(at(0, 0), at(0, 1), at(1, 0), at(1, 1));
    let db = det2(at(2, 2), at(2, 3), at(3, 2), at(3, 3));
    let dc = det2(at(0, 2), at(0, 3), at(1, 2), at(1, 3));
    da + db + dc * &w[0].lift(2.0 * sign)
}

/// `Sigma` (partial transpose) or `Delta` (plain) for a normalised two-mode core.
fn two_mode_invariant<T: Real>(v: &CovarianceMatrix<T>, w: &[T], transposed: bool) -> T {
    match v.frame() {
        None => blocks_invariant(w, if transposed { -1.0 } else { 1.0 }),
        Some(q) => {
            let o = form_in_frame(&symplectic_form(2, transposed), q, 4);
            squared_sum(&o, w, 4)
        }
    }
}

/// Logarithmic negativity of a two-mode state via
/// `eta^2 = 2 det V / (Sigma + sqrt(Sigma^2 - 4 det V))`.
pub fn log_negativity<T: Real>(v: &CovarianceMatrix<T>) -> Result<Negativity> {
    negativity_at(v, true)
}

fn negativity_at<T: Real>(v: &CovarianceMatrix<T>, refine: bool) -> Result<Negativity> {
    if v.dim() != 4 {
        return Err(Error::Domain(format!("negativity needs a two-mode state, got dim {}", v.dim())));
    }
    let Normalised { w, exp2 } = normalised(v);
    let det_v = det(&w, 4);
    let sigma = two_mode_invariant(v, &w, true);
    if !(det_v > det_v.zero_like()) {
        return Err(Error::NonPhysical(format!("det V = {:e}", Wide::from_real(&det_v, 4 * exp2).to_f64())));
    }
    if !(sigma > sigma.zero_like()) {
        return Err(Error::NonPhysical("Sigma <= 0".into()));
    }
    let sq = sigma.clone() * &sigma;
    let four = det_v.lift(4.0);
    let mut disc = sq.clone() - four * &det_v;
    // A near-degenerate spectrum leaves the square root with half the digits;
    // the entries are exact, so redo the invariants with twice the width.
    if refine && disc.abs() < sq.clone() * &sq.lift(NEAR_DEGENERATE) {
        let bits = 2 * det_v.bits() + 64;
        return negativity_at(&v.convert::<Big>(bits), false);
    }
    if disc.is_negative() {
        if disc.abs() > sq.clone() * &sq.lift(DISCRIMINANT_TOL) {
            return Err(Error::NonPhysical("Sigma^2 < 4 det V".into()));
        }
        disc = disc.zero_like();
    }
    let eta2 = det_v.lift(2.0) * &det_v / (sigma + disc.sqrt());
    let log2_eta2 = eta2.log2_abs() + 2.0 * exp2 as f64;
    let raw = -(LN_2 + 0.5 * log2_eta2 * LN_2);
    Ok(Negativity {
        e_n: raw.max(0.0),
        eta_minus: (0.5 * log2_eta2).exp2(),
        raw,
    })
}

/// `Tr rho^2 = 1 / (2^N sqrt(det V))`.
pub fn purity<T: Real>(v: &CovarianceMatrix<T>) -> Wide {
    let Normalised { w, exp2 } = normalised(v);
    let n = v.dim();
    let d = det(&w, n);
    if !(d > d.zero_like()) {
        return Wide::from_f64(f64::NAN);
    }
    let log2_det = d.log2_abs() + (n as i64 * exp2) as f64;
    Wide::from_log2(-(v.n_modes() as f64) - 0.5 * log2_det)
}

/// `(V_xx + V_pp - 1) / 2` of one mode.
fn mode_occupation<T: Real>(v: &CovarianceMatrix<T>, mode: usize) -> Wide {
    let dim = v.dim();
    let s = v.scaled();
    let sum = s[(2 * mode) * dim + 2 * mode].clone() + &s[(2 * mode + 1) * dim + 2 * mode + 1];
    Wide::from_real(&sum, v.scale_exponent())
        .add(Wide::from_f64(-1.0))
        .scale(0.5)
}

/// Thermal phonon number of the mechanical mode.
pub fn phonon_number<T: Real>(v: &CovarianceMatrix<T>) -> Wide {
    mode_occupation(v, MECHANICAL_MODE)
}

/// Photon number of cavity mode `mode` including the coherent displacement `d`.
pub fn photon_number<T: Real>(mean: &MeanVector<T>, v: &CovarianceMatrix<T>, mode: usize, d: Complex64) -> Wide {
    let (re, im) = mean.amplitude(mode);
    let re = re.add(Wide::from_f64(d.re));
    let im = im.add(Wide::from_f64(d.im));
    re.mul(re).add(im.mul(im)).add(mode_occupation(v, mode))
}

/// Symplectic spectrum in ascending order, evaluated at working precision.
///
/// Two modes use the closed form in `Delta` and `det V`; three modes solve the
/// cubic in `nu^2` from `sum nu^2`, `det V * sum nu^-2` and `det V`.
pub fn symplectic_spectrum<T: Real>(v: &CovarianceMatrix<T>) -> Result<Vec<Wide>> {
    let Normalised { w, exp2 } = normalised(v);
    let n = v.dim();
    let d = det(&w, n);
    if !(d > d.zero_like()) {
        return Err(Error::NonPhysical("det V <= 0".into()));
    }
    let form = match v.frame() {
        None => symplectic_form(v.n_modes(), false),
        Some(q) => form_in_frame(&symplectic_form(v.n_modes(), false), q, n),
    };
    let nu2: Vec<T> = match v.n_modes() {
        2 => {
            let delta = if v.frame().is_none() {
                blocks_invariant(&w, 1.0)
            } else {
                squared_sum(&form, &w, n)
            };
            let mut disc = delta.clone() * &delta - d.lift(4.0) * &d;
            if disc.is_negative() {
                disc = disc.zero_like();
            }
            let small = d.lift(2.0) * &d / (delta + disc.sqrt());
            let large = d.clone() / &small;
            vec![small, large]
        }
        3 => {
            let e1 = squared_sum(&form, &w, n);
            let inv = inverse(&w, n).ok_or_else(|| Error::NonPhysical("singular V".into()))?;
            let e2 = d.clone() * squared_sum(&form, &inv, n);
            let e3 = d.clone();
            let p = |x: &T| {
                let x2 = x.clone() * x;
                x2.clone() * x - e1.clone() * &x2 + e2.clone() * x - &e3
            };
            let dp = |x: &T| {
                let x2 = x.clone() * x;
                x2 * &x.lift(3.0) - e1.clone() * x * &x.lift(2.0) + &e2
            };
            // Newton from zero climbs monotonically to the smallest root.
            let mut x = d.zero_like();
            for _ in 0..400 {
                let step = p(&x) / dp(&x);
                x = x - &step;
                if step.is_zero() || step.log2_abs() < x.log2_abs() - (x.bits() as f64 - 4.0) {
                    break;
                }
            }
            let q = e1.clone() - &x;
            let prod = e3 / &x;
            let mut disc = q.clone() * &q - prod.lift(4.0) * &prod;
            if disc.is_negative() {
                disc = disc.zero_like();
            }
            let large = (q + disc.sqrt()) * &x.lift(0.5);
            let mid = prod / &large;
            vec![x, mid, large]
        }
        m => return Err(Error::InvalidModes(m)),
    };
    let mut out: Vec<Wide> = nu2
        .iter()
        .map(|x| Wide::from_log2(0.5 * (x.log2_abs() + 2.0 * exp2 as f64)))
        .collect();
    out.sort_by(|a, b| a.log2_abs().total_cmp(&b.log2_abs()));
    Ok(out)
}

/// Moduli of the eigenvalues of `i Omega V`, one per mode, ascending.
pub fn symplectic_eigs(v: &[f64], dim: usize) -> Vec<f64> {
    let o = DMatrix::from_row_slice(dim, dim, &symplectic_form(dim / 2, false));
    let vm = DMatrix::from_row_slice(dim, dim, v);
    let Some(chol) = vm.cholesky() else {
        return vec![f64::NAN; dim / 2];
    };
    let l = chol.l();
    // L^T O L is antisymmetric, hence normal, with eigenvalues +-i nu; its
    // singular values are each nu twice.
    let k = l.transpose() * o * &l;
    let mut m: Vec<f64> = k.singular_values().iter().copied().collect();
    m.sort_by(f64::total_cmp);
    m.into_iter().step_by(2).collect()
}

/// Flip the momentum of mode 2 (partial transposition on the second mode).
pub fn partial_transpose(v: &[f64], dim: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    for i in 0..dim {
        for j in 0..dim {
            let flips = (i == 3) as u8 + (j == 3) as u8;
            if flips == 1 {
                out[i * dim + j] = -out[i * dim + j];
            }
        }
    }
    out
}

/// Late fraction of a run used for stabilized statistics.
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub stabilized_peak: f64,
    pub stabilized_mean: f64,
    pub esd_intervals: Vec<(f64, f64)>,
    pub window_fraction: f64,
    pub window: (f64, f64),
    pub n_peaks: usize,
}

/// Late-window statistics of an entanglement trace.
///
/// `values` may carry the unclamped `-ln(2 eta_minus)`; sudden-death edges are
/// then located by linear interpolation of its zero crossings.
pub fn trajectory_stats(times: &[f64], values: &[f64], window_fraction: f64, period: Option<f64>) -> Result<TrajectoryStats> {
    if times.len() != values.len() || times.len() < 3 {
        return Err(Error::WindowTooShort(format!("{} samples", times.len())));
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Config(format!("window fraction {window_fraction} not in (0, 1]")));
    }
    let t0 = times[0];
    let t1 = *times.last().unwrap();
    let start = t1 - window_fraction * (t1 - t0);
    let first = times.iter().position(|&t| t >= start - 1e-12 * t1.abs().max(1.0)).unwrap();
    let span = t1 - times[first];
    if times.len() - first < 3 {
        return Err(Error::WindowTooShort(format!("{} samples in window", times.len() - first)));
    }
    if let Some(p) = period {
        if span < 5.0 * p * (1.0 - 1e-9) {
            return Err(Error::WindowTooShort(format!(
                "window of {span} covers fewer than 5 periods of {p}"
            )));
        }
    }
    // NaN marks samples without a trusted value and poisons the window.
    let e: Vec<f64> = values.iter().map(|&v| if v.is_nan() { v } else { v.max(0.0) }).collect();
    let poisoned = e[first..].iter().any(|v| v.is_nan());

    let mut area = 0.0;
    for i in first..times.len() - 1 {
        area += 0.5 * (e[i] + e[i + 1]) * (times[i + 1] - times[i]);
    }
    let mean = if span > 0.0 { area / span } else { e[first] };

    let mut peaks: Vec<f64> = (first.max(1)..times.len() - 1)
        .filter(|&i| e[i - 1] < e[i] && e[i] > e[i + 1])
        .map(|i| e[i])
        .collect();
    let n_peaks = peaks.len();
    let peak = if peaks.is_empty() {
        e[first..].iter().cloned().fold(0.0, f64::max)
    } else {
        peaks.sort_by(f64::total_cmp);
        let m = peaks.len();
        if m % 2 == 1 {
            peaks[m / 2]
        } else {
            0.5 * (peaks[m / 2 - 1] + peaks[m / 2])
        }
    };

    let stride = (t1 - t0) / (times.len() - 1) as f64;
    let mut esd = Vec::new();
    let mut i = 0;
    while i < values.len() {
        if values[i] > 0.0 {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < values.len() && values[j + 1] <= 0.0 {
            j += 1;
        }
        let edge = |a: usize, b: usize| {
            let (va, vb) = (values[a], values[b]);
            if va == vb {
                times[b]
            } else {
                times[a] + (times[b] - times[a]) * va / (va - vb)
            }
        };
        let lo = if i > 0 { edge(i - 1, i) } else { times[i] };
        let hi = if j + 1 < values.len() { edge(j, j + 1) } else { times[j] };
        if hi - lo > stride * (1.0 + 1e-9) {
            esd.push((lo, hi));
        }
        i = j + 1;
    }

    let peak = if poisoned { f64::NAN } else { peak.max(mean) };
    Ok(TrajectoryStats {
        stabilized_peak: peak,
        stabilized_mean: mean,
        esd_intervals: esd,
        window_fraction,
        window: (times[first], t1),
        n_peaks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::Big;

    fn tmsv(r: f64) -> Vec<f64> {
        let (c, s) = ((2.0 * r).cosh() / 2.0, (2.0 * r).sinh() / 2.0);
        vec![
            c, 0.0, s, 0.0, //
            0.0, c, 0.0, -s, //
            s, 0.0, c, 0.0, //
            0.0, -s, 0.0, c,
        ]
    }

    fn diag(d: &[f64]) -> Vec<f64> {
        let n = d.len();
        let mut v = vec![0.0; n * n];
        for (i, x) in d.iter().enumerate() {
            v[i * n + i] = *x;
        }
        v
    }

    #[test]
    fn weakly_entangled_squeezed_pair_keeps_full_accuracy() {
        let d = [30.0, 1.0 / 30.0, 30.0, 1.0 / 30.0];
        let r = 1e-6;
        let v: Vec<f64> = tmsv(r).iter().enumerate().map(|(k, x)| x * d[k / 4] * d[k % 4]).collect();
        let fast: CovarianceMatrix<f64> = CovarianceMatrix::from_f64(4, &v, 53);
        let wide: CovarianceMatrix<Big> = CovarianceMatrix::from_f64(4, &v, 512);
        let a = log_negativity(&fast).unwrap().eta_minus;
        let b = log_negativity(&wide).unwrap().eta_minus.to_f64();
        assert!(((a - b) / b).abs() < 1e-14, "{a} vs {b}");
        assert!((b - 0.5 * (-2.0 * r).exp()).abs() < 1e-15);
    }

    #[test]
    fn vacuum_and_product_states_are_separable() {
        let v: CovarianceMatrix<f64> = CovarianceMatrix::from_f64(4, &diag(&[0.5; 4]), 53);
        let n = log_negativity(&v).unwrap();
        assert_eq!(n.e_n, 0.0);
        assert!((n.eta_minus - 0.5).abs() < 1e-15);
        for n_th in [0.0, 3.0, 6e4] {
            let v: CovarianceMatrix<f64> =
                CovarianceMatrix::from_f64(4, &diag(&[0.5, 0.5, n_th + 0.5, n_th + 0.5]), 53);
            assert_eq!(log_negativity(&v).unwrap().e_n, 0.0);
            let mu = purity(&v).to_f64();
            assert!((mu - 1.0 / (2.0 * n_th + 1.0)).abs() < 1e-15);
            assert_eq!(phonon_number(&v).to_f64(), n_th);
        }
    }

    #[test]
    fn squeezed_vacuum() {
        let v: CovarianceMatrix<Big> = CovarianceMatrix::from_f64(4, &tmsv(1.0), 256);
        let n = log_negativity(&v).unwrap();
        assert!((n.e_n - 2.0).abs() < 1e-12);
        assert!((n.eta_minus - (-2.0f64).exp() / 2.0).abs() < 1e-14);
        assert!((purity(&v).to_f64() - 1.0).abs() < 1e-12);
        assert!((phonon_number(&v).to_f64() - 1f64.sinh().powi(2)).abs() < 1e-12);

        let pt = partial_transpose(&tmsv(1.0), 4);
        let eigs = symplectic_eigs(&pt, 4);
        assert!((eigs[0] - (-2.0f64).exp() / 2.0).abs() < 1e-12);
        assert!((eigs[1] - 2f64.exp() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_of_thermal_modes() {
        let d = diag(&[0.5, 0.5, 7.5, 7.5]);
        let e = symplectic_eigs(&d, 4);
        assert!((e[0] - 0.5).abs() < 1e-14 && (e[1] - 7.5).abs() < 1e-13);
        let v: CovarianceMatrix<f64> = CovarianceMatrix::from_f64(4, &d, 53);
        let s = symplectic_spectrum(&v).unwrap();
        assert!((s[0].to_f64() - 0.5).abs() < 1e-14 && (s[1].to_f64() - 7.5).abs() < 1e-13);

        let d3 = diag(&[2.5, 2.5, 0.5, 0.5, 40.5, 40.5]);
        let v3: CovarianceMatrix<Big> = CovarianceMatrix::from_f64(6, &d3, 192);
        let s = symplectic_spectrum(&v3).unwrap();
        let got: Vec<f64> = s.iter().map(|w| w.to_f64()).collect();
        for (g, e) in got.iter().zip([0.5, 2.5, 40.5]) {
            assert!((g - e).abs() < 1e-12 * e, "{got:?}");
        }
    }

    #[test]
    fn unphysical_matrix_is_rejected() {
        let v: CovarianceMatrix<f64> = CovarianceMatrix::from_f64(4, &diag(&[1.0, -1.0, 1.0, 1.0]), 53);
        assert!(matches!(log_negativity(&v), Err(Error::NonPhysical(_))));
    }

    #[test]
    fn rebasing_does_not_move_negativity() {
        let v: CovarianceMatrix<Big> = CovarianceMatrix::from_f64(4, &tmsv(0.7), 256);
        let a = log_negativity(&v).unwrap();
        for k in [-700, -3, 9, 1200] {
            let b = log_negativity(&v.shifted(k)).unwrap();
            assert_eq!(a.e_n, b.e_n);
        }
    }

    #[test]
    fn constant_trace_statistics() {
        let t: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let v = vec![0.3; t.len()];
        let s = trajectory_stats(&t, &v, 0.2, None).unwrap();
        assert!((s.stabilized_peak - 0.3).abs() < 1e-15);
        assert!((s.stabilized_mean - 0.3).abs() < 1e-15);
        assert!(s.esd_intervals.is_empty());
    }

    #[test]
    fn half_wave_statistics() {
        let w = 3.0;
        let dt = 1e-3;
        let t: Vec<f64> = (0..=20000).map(|i| i as f64 * dt).collect();
        let clamped: Vec<f64> = t.iter().map(|&x| (0.1 * (w * x).sin()).max(0.0)).collect();
        let s = trajectory_stats(&t, &clamped, 1.0, Some(2.0 * std::f64::consts::PI / w)).unwrap();
        assert!((s.stabilized_peak - 0.1).abs() < 1e-6);
        assert!(!s.esd_intervals.is_empty());
        for (a, b) in &s.esd_intervals[..s.esd_intervals.len() - 1] {
            assert!(((b - a) - std::f64::consts::PI / w).abs() < 2.0 * dt);
        }
        let raw: Vec<f64> = t.iter().map(|&x| 0.1 * (w * x).sin()).collect();
        let s = trajectory_stats(&t, &raw, 1.0, None).unwrap();
        let (a, b) = s.esd_intervals[0];
        assert!((a - std::f64::consts::PI / w).abs() < 1e-6);
        assert!((b - 2.0 * std::f64::consts::PI / w).abs() < 1e-6);
    }

    #[test]
    fn short_window_is_an_error() {
        let t: Vec<f64> = (0..=10).map(|i| i as f64 * 0.01).collect();
        let v = vec![0.1; t.len()];
        assert!(matches!(trajectory_stats(&t, &v, 0.2, Some(0.6)), Err(Error::WindowTooShort(_))));
    }
}
