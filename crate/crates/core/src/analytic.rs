//! Closed-form results for the period-averaged (resolved-sideband) models.

use nalgebra::{DMatrix, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LinearModel;

pub const HBAR: f64 = 1.054571817e-34;
pub const BOLTZMANN: f64 = 1.380649e-23;

/// Above this `gamma_m / kappa` the steady-state formula is outside its regime.
pub const GAMMA_RATIO_LIMIT: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub e_n: f64,
    /// `-ln(argument)` before clamping at zero.
    pub raw: f64,
    pub argument: f64,
}

/// Steady logarithmic negativity of the averaged two-mode model with
/// squeezing rate `j` and thermal decoherence rate `gamma_n = gamma_m n_th`.
pub fn steady_negativity(j: f64, gamma_n: f64, kappa: f64) -> Result<SteadyState> {
    if !(j > 0.0 && kappa > 0.0 && gamma_n >= 0.0) {
        return Err(Error::Domain(format!("need j > 0, kappa > 0, gamma_n >= 0 (j={j}, gamma_n={gamma_n}, kappa={kappa})")));
    }
    let s = (4.0 * j * j + kappa * kappa).sqrt();
    // kappa s - kappa^2 = 4 kappa j^2 / (s + kappa), without cancellation.
    let loss = 4.0 * kappa * j * j / (s + kappa);
    let numer = j * j * (kappa + 2.0 * gamma_n) - loss * gamma_n;
    let argument = numer / (j * j * s);
    if !(argument > 0.0) || !argument.is_finite() {
        return Err(Error::Domain(format!("formula argument {argument} is not positive")));
    }
    let raw = -argument.ln();
    Ok(SteadyState { e_n: raw.max(0.0), raw, argument })
}

/// Warning text when the weak-damping assumption behind
/// [`steady_negativity`] does not hold.
pub fn regime_warning(gamma_m: f64, kappa: f64) -> Option<String> {
    let r = gamma_m / kappa;
    (r > GAMMA_RATIO_LIMIT).then(|| format!("gamma_m/kappa = {r} exceeds {GAMMA_RATIO_LIMIT}; steady formula assumes kappa >> gamma_m"))
}

/// Closed-form decoherence rate at which the steady negativity vanishes.
pub fn boundary_closed_form(j: f64, kappa: f64) -> f64 {
    0.5 * (kappa + (kappa * kappa + 4.0 * j * j).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub j: f64,
    pub gamma_n: f64,
    pub relative_offset: f64,
}

/// Bisect `f` on `[lo, hi]` for a sign change, to `rel_tol` relative width.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, rel_tol: f64) -> Result<f64> {
    let (a, b) = (lo, hi);
    let mut flo = f(lo);
    let fhi = f(hi);
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return Err(Error::NoRoot { lo: a, hi: b });
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel_tol * mid.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Zero crossing of the steady negativity along `gamma_n` at fixed `j`.
pub fn boundary(j: f64, kappa: f64) -> Result<BoundaryPoint> {
    let raw = |gn: f64| steady_negativity(j, gn, kappa).map(|s| s.raw).unwrap_or(f64::NAN);
    let mut hi = j.max(kappa);
    while raw(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e12 * j.max(kappa) {
            return Err(Error::NoRoot { lo: 0.0, hi });
        }
    }
    let gamma_n = bisect(raw, 0.0, hi, 1e-12)?;
    Ok(BoundaryPoint { j, gamma_n, relative_offset: (gamma_n - j).abs() / j })
}

/// Bose-Einstein occupation at `temp_k` kelvin for angular frequency `omega` (rad/s).
pub fn thermal_occupation(temp_k: f64, omega: f64) -> Result<f64> {
    if !(temp_k > 0.0 && omega > 0.0) {
        return Err(Error::Domain(format!("temperature {temp_k} K and frequency {omega} rad/s must be positive")));
    }
    Ok(1.0 / (HBAR * omega / (BOLTZMANN * temp_k)).exp_m1())
}

/// Eigenvalues of the averaged two-mode drift, `-(k+g)/2 +- sqrt(((k-g)/2)^2 + j^2)`.
pub fn two_mode_rates(j: f64, kappa: f64, gamma: f64) -> (f64, f64) {
    let c = -0.5 * (kappa + gamma);
    let r = (0.25 * (kappa - gamma).powi(2) + j * j).sqrt();
    (c + r, c - r)
}

/// Squeezing rate above which the averaged two-mode dynamics is unstable.
pub fn stability_threshold_two_mode(kappa: f64, gamma: f64) -> f64 {
    (kappa * gamma).sqrt()
}

/// Exchange rate at which the averaged three-mode drift becomes marginal.
pub fn stability_threshold_three_mode(j1: f64, kappa: f64, gamma: f64) -> Option<f64> {
    let d = j1 * j1 - kappa * gamma;
    (d >= 0.0).then(|| d.sqrt())
}

/// Largest real part in the spectrum of the drift at time `t`.
pub fn max_growth_rate(model: &dyn LinearModel, t: f64) -> Result<f64> {
    let n = model.dim();
    let m = DMatrix::from_row_slice(n, n, &model.drift(t));
    let schur = Schur::try_new(m, 1e-15, 10_000)
        .ok_or_else(|| Error::NonPhysical("drift spectrum did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub j: f64,
    pub gamma_n: f64,
    pub e_n: f64,
}

/// Steady negativity on a regular `nj x ngn` grid (row-major in `j`).
pub fn phase_grid(j_range: (f64, f64), gn_range: (f64, f64), nj: usize, ngn: usize, kappa: f64) -> Vec<PhasePoint> {
    let axis = |(a, b): (f64, f64), n: usize, i: usize| if n < 2 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 };
    let mut out = Vec::with_capacity(nj * ngn);
    for a in 0..nj {
        let j = axis(j_range, nj, a);
        for b in 0..ngn {
            let gamma_n = axis(gn_range, ngn, b);
            let e_n = steady_negativity(j, gamma_n, kappa).map(|s| s.e_n).unwrap_or(f64::NAN);
            out.push(PhasePoint { j, gamma_n, e_n });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{asymptotic_three_mode, asymptotic_two_mode};
    use crate::params::{NoiseToggle, SystemParams};

    #[test]
    fn steady_value_matches_direct_evaluation() {
        // Direct transcription with the subtraction left in.
        let (j, gn, k): (f64, f64, f64) = (2.5, 1.0, 1.0);
        let s = (4.0 * j * j + k * k).sqrt();
        let direct = -((j * j * (k + 2.0 * gn) - (k * s - k * k) * gn) / (j * j * s)).ln();
        let got = steady_negativity(j, gn, k).unwrap();
        assert!((got.raw - direct).abs() < 1e-14);
        assert!((got.e_n - 0.77712).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(steady_negativity(0.0, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(steady_negativity(1.0, -1.0, 1.0), Err(Error::Domain(_))));
        assert!(regime_warning(0.05, 1.0).is_some());
        assert!(regime_warning(1e-5, 1.0).is_none());
    }

    #[test]
    fn bisection_finds_closed_form() {
        for j in [0.3, 1.0, 5.0, 100.0] {
            let b = boundary(j, 1.0).unwrap();
            let exact = boundary_closed_form(j, 1.0);
            assert!((b.gamma_n - exact).abs() <= 1e-9 * exact, "{j}: {} vs {exact}", b.gamma_n);
            assert!(steady_negativity(j, exact * 1.001, 1.0).unwrap().e_n == 0.0);
        }
        assert!(matches!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-10), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn room_temperature_occupation() {
        let n = thermal_occupation(300.0, 2.0 * std::f64::consts::PI * 1e8).unwrap();
        assert!((6.0e4..6.5e4).contains(&n), "{n}");
        let x: f64 = HBAR * 1e9 / (BOLTZMANN * 0.01);
        assert!((thermal_occupation(0.01, 1e9).unwrap() - 1.0 / (x.exp() - 1.0)).abs() < 1e-12);
        assert!(thermal_occupation(0.0, 1.0).is_err());
    }

    #[test]
    fn drift_spectrum_matches_rates() {
        let p = SystemParams { kappa: 1.0, g_m: 1e-4, omega_m: 10.0, gamma_m: 1e-3, n_th: 0.0, n_c: 0.0 };
        for j in [0.01, 0.5, 2.0] {
            let m = asymptotic_two_mode(j, &p, NoiseToggle::default());
            let got = max_growth_rate(&m, 0.0).unwrap();
            assert!((got - two_mode_rates(j, 1.0, 1e-3).0).abs() < 1e-12);
        }
        let thr = stability_threshold_two_mode(1.0, 1e-3);
        let m = asymptotic_two_mode(thr, &p, NoiseToggle::default());
        assert!(max_growth_rate(&m, 0.0).unwrap().abs() < 1e-12);

        let j2 = stability_threshold_three_mode(1.0, 1.0, 1e-3).unwrap();
        let m = asymptotic_three_mode(1.0, j2, &p, NoiseToggle::default());
        assert!(max_growth_rate(&m, 0.0).unwrap().abs() < 1e-10);
    }
}
