//! Invariant suite behind `optomech check`, plus random physical states.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analytic::{boundary, boundary_closed_form, steady_negativity};
use crate::integrate::{integrate, IntegratorConfig};
use crate::linalg::congruence;
use crate::measures::{log_negativity, DEFAULT_WINDOW_FRACTION, partial_transpose, symplectic_eigs};
use crate::model::{asymptotic_two_mode, full_two_mode};
use crate::params::{DriveSpec, NoiseToggle, SystemParams};
use crate::precision::PrecisionPolicy;
use crate::state::{initial_state, CovarianceMatrix};

fn identity(n: usize) -> Vec<f64> {
    (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect()
}

fn compose(s: &mut Vec<f64>, op: &[f64], n: usize) {
    *s = crate::linalg::matmul(op, s, n);
}

/// Random symplectic matrix from passive rotations, beam splitters and
/// one- and two-mode squeezers with squeezing up to `max_r` each.
pub fn random_symplectic<R: Rng>(rng: &mut R, n_modes: usize, layers: usize, max_r: f64) -> Vec<f64> {
    let n = 2 * n_modes;
    let mut s = identity(n);
    for _ in 0..layers {
        let a = rng.gen_range(0..n_modes);
        let b = if n_modes > 1 { (a + rng.gen_range(1..n_modes)) % n_modes } else { a };
        let mut op = identity(n);
        let kinds = if n_modes > 1 { 4 } else { 2 };
        match rng.gen_range(0..kinds) {
            0 => {
                let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let (c, si) = (th.cos(), th.sin());
                op[2 * a * n + 2 * a] = c;
                op[2 * a * n + 2 * a + 1] = -si;
                op[(2 * a + 1) * n + 2 * a] = si;
                op[(2 * a + 1) * n + 2 * a + 1] = c;
            }
            1 => {
                let r: f64 = rng.gen_range(-max_r..max_r);
                op[2 * a * n + 2 * a] = r.exp();
                op[(2 * a + 1) * n + 2 * a + 1] = (-r).exp();
            }
            2 => {
                let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let (c, si) = (th.cos(), th.sin());
                for q in 0..2 {
                    let (ia, ib) = (2 * a + q, 2 * b + q);
                    op[ia * n + ia] = c;
                    op[ia * n + ib] = si;
                    op[ib * n + ia] = -si;
                    op[ib * n + ib] = c;
                }
            }
            _ => {
                let r: f64 = rng.gen_range(0.0..max_r);
                let (ch, sh) = (r.cosh(), r.sinh());
                for q in 0..2 {
                    let (ia, ib) = (2 * a + q, 2 * b + q);
                    let sign = if q == 0 { 1.0 } else { -1.0 };
                    op[ia * n + ia] = ch;
                    op[ib * n + ib] = ch;
                    op[ia * n + ib] = sign * sh;
                    op[ib * n + ia] = sign * sh;
                }
            }
        }
        compose(&mut s, &op, n);
    }
    s
}

/// `S diag(nu) S^T` with symplectic eigenvalues `nu >= 1/2`.
pub fn random_covariance<R: Rng>(rng: &mut R, n_modes: usize) -> Vec<f64> {
    let n = 2 * n_modes;
    let s = random_symplectic(rng, n_modes, 6, 1.2);
    let mut d = vec![0.0; n * n];
    for k in 0..n_modes {
        let nu = 0.5 + if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..20.0f64) };
        d[2 * k * n + 2 * k] = nu;
        d[(2 * k + 1) * n + 2 * k + 1] = nu;
    }
    congruence(&s, &d, n)
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// Smallest symplectic eigenvalue of the partial transpose, two routes.
pub fn negativity_routes(v: &[f64]) -> (f64, f64) {
    let cm: CovarianceMatrix<f64> = CovarianceMatrix::from_f64(4, v, 53);
    let direct = log_negativity(&cm).map(|n| n.eta_minus).unwrap_or(f64::NAN);
    let oracle = symplectic_eigs(&partial_transpose(v, 4), 4)[0];
    (direct, oracle)
}

fn check_negativity(seed: u64, samples: usize) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut excess): (f64, f64) = (0.0, 0.0);
    for _ in 0..samples {
        let v = random_covariance(&mut rng, 2);
        let (a, b) = negativity_routes(&v);
        let gap = ((a - b) / b).abs();
        // Squeezed states lose about eps * max|V| / eta to rounding.
        let largest = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tol = (64.0 * f64::EPSILON * largest / b).max(1e-10);
        worst = worst.max(gap);
        excess = excess.max(gap / tol);
    }
    outcome(
        "negativity_routes_agree",
        excess <= 1.0,
        format!("{samples} states, worst relative gap {worst:.2e} ({excess:.2} of the conditioning bound)"),
    )
}

fn check_boundary() -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for j in [0.5, 5.0, 10.0, 20.0, 100.0] {
        match boundary(j, 1.0) {
            Ok(b) => worst = worst.max((b.gamma_n / boundary_closed_form(j, 1.0) - 1.0).abs()),
            Err(_) => worst = f64::INFINITY,
        }
    }
    outcome("boundary_bisection", worst < 1e-9, format!("worst relative gap to closed form {worst:.2e}"))
}

fn fig3_params() -> SystemParams {
    SystemParams { kappa: 1.0, g_m: 1e-4, omega_m: 10.0, gamma_m: 1e-5, n_th: 6e4, n_c: 0.0 }
}

fn check_steady_state() -> CheckOutcome {
    let p = SystemParams { kappa: 1.0, g_m: 1e-4, omega_m: 10.0, gamma_m: 1e-5, n_th: 1e5, n_c: 0.0 };
    let m = asymptotic_two_mode(2.5, &p, NoiseToggle::default());
    let (mu, v) = initial_state(&p, 2).expect("two modes");
    let cfg = IntegratorConfig { max_step: Some(0.05), ..Default::default() };
    let exact = steady_negativity(2.5, 1.0, 1.0).map(|s| s.e_n).unwrap_or(f64::NAN);
    match integrate(&m, &mu, &v, 30.0, &cfg) {
        Ok(t) => {
            let got = t.stats(DEFAULT_WINDOW_FRACTION).map(|s| s.stabilized_mean).unwrap_or(f64::NAN);
            outcome("steady_state_matches_formula", (got - exact).abs() < 1e-3, format!("numeric {got:.6}, formula {exact:.6}"))
        }
        Err(f) => outcome("steady_state_matches_formula", false, f.error.to_string()),
    }
}

fn check_physicality() -> CheckOutcome {
    let p = fig3_params();
    let m = full_two_mode(&p, DriveSpec::blue(1e5, &p), NoiseToggle::default());
    let (mu, v) = initial_state(&p, 2).expect("two modes");
    let cfg = IntegratorConfig { sample_dt: 0.05, ..Default::default() };
    match integrate(&m, &mu, &v, 10.0, &cfg) {
        Ok(t) => {
            let mu0 = t.samples[0].measures.purity.to_f64();
            let mut min_nu = f64::INFINITY;
            let mut max_mu = 0.0f64;
            for s in &t.samples {
                if let Some(nu) = s.measures.spectrum.first() {
                    min_nu = min_nu.min(nu.to_f64());
                }
                max_mu = max_mu.max(s.measures.purity.to_f64() / mu0);
            }
            let ok = min_nu >= 0.5 * (1.0 - 1e-9) && max_mu <= 1.0 + 1e-9;
            outcome("physicality", ok, format!("min nu {min_nu:.12}, max purity ratio {max_mu:.12}"))
        }
        Err(f) => outcome("physicality", false, f.error.to_string()),
    }
}

fn check_precision() -> CheckOutcome {
    let p = SystemParams { kappa: 1.0, g_m: 1e-4, omega_m: 10.0, gamma_m: 1e-5, n_th: 1e5, n_c: 0.0 };
    let m = asymptotic_two_mode(2.5, &p, NoiseToggle::default());
    let (mu, v) = initial_state(&p, 2).expect("two modes");
    let fast = IntegratorConfig { scheme: "frame".into(), precision: PrecisionPolicy::Double, max_step: Some(0.05), ..Default::default() };
    let wide = IntegratorConfig { precision: PrecisionPolicy::Extended { bits: 256 }, max_step: Some(0.05), ..Default::default() };
    match (integrate(&m, &mu, &v, 15.0, &fast), integrate(&m, &mu, &v, 15.0, &wide)) {
        (Ok(a), Ok(b)) => {
            let worst = a
                .e_n()
                .iter()
                .zip(b.e_n())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, |m: f64, d| if d.is_nan() { f64::INFINITY } else { m.max(d) });
            outcome("double_matches_extended", worst <= 1e-6, format!("max |dE_N| {worst:.2e} up to t = 15"))
        }
        (Err(f), _) | (_, Err(f)) => outcome("double_matches_extended", false, f.error.to_string()),
    }
}

/// Run the suite; `samples` random states feed the negativity comparison.
pub fn run_checks(seed: u64, samples: usize) -> Vec<CheckOutcome> {
    vec![
        check_negativity(seed, samples),
        check_boundary(),
        check_steady_state(),
        check_physicality(),
        check_precision(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_states_are_physical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n_modes in [2, 3] {
            for _ in 0..50 {
                let v = random_covariance(&mut rng, n_modes);
                let nu = symplectic_eigs(&v, 2 * n_modes);
                assert!(nu[0] >= 0.5 * (1.0 - 1e-9), "{nu:?}");
            }
        }
    }
}
