use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use optomech::analytic::{
    boundary, boundary_closed_form, max_growth_rate, steady_negativity, two_mode_rates,
};
use optomech::checks::{negativity_routes, random_covariance};
use optomech::integrate::{integrate, lyapunov_residual, IntegratorConfig};
use optomech::measures::{log_negativity, purity, symplectic_eigs, DEFAULT_WINDOW_FRACTION};
use optomech::model::{asymptotic_two_mode, full_two_mode, ComplexForm, LinearModel};
use optomech::params::{DriveSpec, NoiseToggle, SystemParams};
use optomech::precision::PrecisionPolicy;
use optomech::state::{initial_state, CovarianceMatrix};

fn params(omega_m: f64, gamma_m: f64, n_th: f64) -> SystemParams {
    SystemParams { kappa: 1.0, g_m: 1e-4, omega_m, gamma_m, n_th, n_c: 0.0 }
}

fn fast() -> IntegratorConfig {
    IntegratorConfig {
        scheme: "frame".into(),
        precision: PrecisionPolicy::Double,
        max_step: Some(0.05),
        sample_dt: 0.05,
        ..Default::default()
    }
}

/// Real drift by the quadrature change of basis `r = T z`, `z = (c, c^dag)` per mode.
fn drift_by_transform(form: &ComplexForm) -> DMatrix<Complex64> {
    let n = form.a.nrows();
    let dim = 2 * n;
    let mut big = DMatrix::<Complex64>::zeros(dim, dim);
    for k in 0..n {
        for j in 0..n {
            big[(2 * k, 2 * j)] = form.a[(k, j)];
            big[(2 * k, 2 * j + 1)] = form.b[(k, j)];
            big[(2 * k + 1, 2 * j)] = form.b[(k, j)].conj();
            big[(2 * k + 1, 2 * j + 1)] = form.a[(k, j)].conj();
        }
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut t = DMatrix::<Complex64>::zeros(dim, dim);
    for k in 0..n {
        t[(2 * k, 2 * k)] = Complex64::new(s, 0.0);
        t[(2 * k, 2 * k + 1)] = Complex64::new(s, 0.0);
        t[(2 * k + 1, 2 * k)] = Complex64::new(0.0, -s);
        t[(2 * k + 1, 2 * k + 1)] = Complex64::new(0.0, s);
    }
    let t_inv = t.clone().try_inverse().unwrap();
    t * big * t_inv
}

fn complex_entries(n: usize, seed: u64) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = || Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
    let a = DMatrix::from_fn(n, n, |_, _| z());
    let b = DMatrix::from_fn(n, n, |_, _| z());
    // The b block must be symmetric for the real form to be consistent.
    let b = (&b + b.transpose()) * Complex64::new(0.5, 0.0);
    (a, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn real_drift_matches_change_of_basis(seed in any::<u64>(), n in 2usize..=3) {
        let (a, b) = complex_entries(n, seed);
        let form = ComplexForm { a, b, f: nalgebra::DVector::zeros(n) };
        let real = form.real_drift();
        let oracle = drift_by_transform(&form);
        let dim = 2 * n;
        for i in 0..dim {
            for j in 0..dim {
                let z = oracle[(i, j)];
                prop_assert!(z.im.abs() < 1e-12);
                prop_assert!((real[i * dim + j] - z.re).abs() < 1e-12, "({i},{j}) {} vs {}", real[i * dim + j], z.re);
            }
        }
    }

    #[test]
    fn period_average_is_asymptotic_model(omega in 5.0f64..200.0, e in 1e4f64..1e6, phase in 0.0f64..1.0) {
        let p = params(omega, 1e-5, 10.0);
        let full = full_two_mode(&p, DriveSpec::blue(e, &p), NoiseToggle::default());
        let j = DriveSpec::blue(e, &p).coupling(&p);
        // Flipping the cavity quadratures maps the averaged coupling onto +j.
        let asym = asymptotic_two_mode(j, &p, NoiseToggle::default());
        let period = 2.0 * std::f64::consts::PI / omega;
        let t0 = phase * period;
        let steps = 4096;
        let mut avg = vec![0.0; 16];
        for k in 0..steps {
            let m = full.drift(t0 + period * k as f64 / steps as f64);
            avg.iter_mut().zip(&m).for_each(|(s, x)| *s += x / steps as f64);
        }
        let target = asym.drift(0.0);
        let flip = [-1.0, -1.0, 1.0, 1.0];
        for i in 0..4 {
            for k in 0..4 {
                let want = flip[i] * flip[k] * target[i * 4 + k];
                prop_assert!((avg[i * 4 + k] - want).abs() < 1e-9 * (1.0 + j), "({i},{k}) {} vs {want}", avg[i * 4 + k]);
            }
        }
    }

    #[test]
    fn averaged_rates_match_spectrum(j in 0.0f64..10.0, gamma in 1e-6f64..0.5) {
        let p = params(10.0, gamma, 0.0);
        let m = asymptotic_two_mode(j, &p, NoiseToggle::default());
        let (up, _) = two_mode_rates(j, 1.0, gamma);
        let got = max_growth_rate(&m, 0.0).unwrap();
        prop_assert!((got - up).abs() < 1e-9 * (1.0 + up.abs()), "{got} vs {up}");
    }

    #[test]
    fn initial_state_is_vacuum_times_thermal(n_th in 0.0f64..1e6, modes in 2usize..=3) {
        let p = params(10.0, 1e-5, n_th);
        let (_, v) = initial_state(&p, modes).unwrap();
        let nu = symplectic_eigs(&v.scaled(), 2 * modes);
        let mut want = vec![0.5; modes];
        want[modes - 1] = n_th + 0.5;
        want.sort_by(f64::total_cmp);
        for (a, b) in nu.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-12 * b);
        }
        if modes == 2 {
            let mu = purity(&v).to_f64();
            prop_assert!((mu - 1.0 / (2.0 * n_th + 1.0)).abs() <= 1e-12 * mu);
        }
    }

    #[test]
    fn negativity_routes_agree_up_to_conditioning(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_covariance(&mut rng, 2);
        let (direct, oracle) = negativity_routes(&v);
        // Rounding in double moves eta by about eps * max|V| / eta on squeezed states.
        let largest = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tol = (64.0 * f64::EPSILON * largest / oracle).max(1e-10);
        prop_assert!(((direct - oracle) / oracle).abs() <= tol, "{direct} vs {oracle}");
    }

    #[test]
    fn rebasing_leaves_measures_unchanged(seed in any::<u64>(), k in -600i64..600) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_covariance(&mut rng, 2);
        let cm = CovarianceMatrix::<f64>::from_f64(4, &v, 53);
        let moved = cm.shifted(k);
        let a = log_negativity(&cm).unwrap();
        let b = log_negativity(&moved).unwrap();
        prop_assert_eq!(a.e_n == 0.0, b.e_n == 0.0);
        prop_assert!((a.raw - b.raw).abs() < 1e-12 * (1.0 + a.raw.abs()));
        prop_assert!((purity(&cm).log2_abs() - purity(&moved).log2_abs()).abs() < 1e-12);
    }

    #[test]
    fn local_noise_on_product_states_never_entangles(seed in any::<u64>(), noise in 0.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let one = random_covariance(&mut rng, 1);
        let two = random_covariance(&mut rng, 1);
        let mut v = vec![0.0; 16];
        for i in 0..2 {
            for j in 0..2 {
                v[i * 4 + j] = one[i * 2 + j];
                v[(i + 2) * 4 + j + 2] = two[i * 2 + j];
            }
        }
        for i in 0..4 {
            v[i * 4 + i] += noise;
        }
        let cm = CovarianceMatrix::<f64>::from_f64(4, &v, 53);
        prop_assert_eq!(log_negativity(&cm).unwrap().e_n, 0.0);
    }

    #[test]
    fn steady_formula_decreases_in_damping(j in 0.1f64..100.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let star = boundary_closed_form(j, 1.0);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        let f = |gn: f64| steady_negativity(j, gn * star, 1.0).map(|s| s.raw).unwrap_or(f64::NEG_INFINITY);
        prop_assert!(f(lo) > f(hi));
    }

    #[test]
    fn steady_formula_sign_follows_boundary(j in 5.0f64..100.0, u in 0.0f64..0.999, w in 1.001f64..10.0) {
        let star = boundary_closed_form(j, 1.0);
        let below = steady_negativity(j, (u * j).min(u * star), 1.0).unwrap().e_n;
        prop_assert!(below > 0.0);
        let above = steady_negativity(j, w * star, 1.0).map(|s| s.e_n).unwrap_or(0.0);
        prop_assert_eq!(above, 0.0);
        let b = boundary(j, 1.0).unwrap();
        prop_assert!((b.gamma_n / star - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn short_runs_stay_physical_and_lose_purity(j in 0.1f64..3.0, gamma in 1e-4f64..0.5, n_th in 0.0f64..100.0) {
        let p = params(10.0, gamma, n_th);
        let m = asymptotic_two_mode(j, &p, NoiseToggle::default());
        let (mu, v) = initial_state(&p, 2).unwrap();
        let cfg = IntegratorConfig { max_step: Some(0.05), sample_dt: 0.05, ..Default::default() };
        let t = integrate(&m, &mu, &v, 8.0, &cfg).unwrap();
        let p0 = t.samples[0].measures.purity.log2_abs();
        for s in t.samples.iter().filter(|s| s.healthy()) {
            prop_assert_eq!(s.measures.spectrum.len(), 2);
            let nu = s.measures.spectrum[0].to_f64();
            prop_assert!(nu >= 0.5 * (1.0 - 1e-9), "t = {} nu = {nu}", s.t);
            prop_assert!(s.measures.purity.log2_abs() <= p0 + 1e-9, "t = {}", s.t);
        }
    }
}

#[test]
fn moments_obey_the_lyapunov_equation() {
    let p = params(10.0, 1e-5, 6e4);
    let m = full_two_mode(&p, DriveSpec::blue(1e5, &p), NoiseToggle::default());
    let (mu, v) = initial_state(&p, 2).unwrap();
    let h = 1e-3;
    let cfg = IntegratorConfig { sample_dt: h, rel_tol: 1e-12, abs_tol: 1e-16, precision: PrecisionPolicy::Extended { bits: 128 }, ..Default::default() };
    let t = integrate(&m, &mu, &v, 2.0, &cfg).unwrap();
    for k in [300, 900, 1500, 1990] {
        let (a, b, c) = (&t.samples[k - 1], &t.samples[k], &t.samples[k + 1]);
        let (va, vb, vc) = (a.cov.to_f64(), b.cov.to_f64(), c.cov.to_f64());
        let rhs = lyapunov_residual(&m, b.t, &vb);
        let scale = vb.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        for i in 0..16 {
            let fd = (vc[i] - va[i]) / (c.t - a.t);
            assert!((fd - rhs[i]).abs() <= 1e-4 * scale.max(1.0), "t = {} entry {i}: {fd} vs {}", b.t, rhs[i]);
        }
    }
}

#[test]
fn double_and_wide_runs_agree_while_healthy() {
    let p = params(10.0, 1e-5, 6e4);
    let m = full_two_mode(&p, DriveSpec::blue(1e5, &p), NoiseToggle::default());
    let (mu, v) = initial_state(&p, 2).unwrap();
    let double = IntegratorConfig { precision: PrecisionPolicy::Double, sample_dt: 0.05, ..Default::default() };
    let wide = IntegratorConfig { precision: PrecisionPolicy::Extended { bits: 256 }, ..double.clone() };
    let a = integrate(&m, &mu, &v, 10.0, &double).unwrap();
    let b = integrate(&m, &mu, &v, 10.0, &wide).unwrap();
    let mut compared = 0;
    for (x, y) in a.samples.iter().zip(&b.samples) {
        if let (Some(ex), Some(ey)) = (x.measures.e_n, y.measures.e_n) {
            assert!((ex - ey).abs() < 1e-6, "t = {}: {ex} vs {ey}", x.t);
            compared += 1;
        }
    }
    assert!(compared > 20);
}

#[test]
fn asymptotic_dynamics_matches_formula_on_grid() {
    for j in [0.5, 1.625, 2.75, 3.875, 5.0] {
        for gn in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let gamma = 1e-4;
            let p = params(1e3, gamma, gn / gamma);
            let m = asymptotic_two_mode(j, &p, NoiseToggle::default());
            let (mu, v) = initial_state(&p, 2).unwrap();
            let cfg = IntegratorConfig { precision: PrecisionPolicy::Extended { bits: 128 }, ..fast() };
            let t = integrate(&m, &mu, &v, 40.0, &cfg).unwrap();
            let got = t.stats(DEFAULT_WINDOW_FRACTION).unwrap().stabilized_mean;
            let want = steady_negativity(j, gn, 1.0).unwrap().e_n;
            assert!((got - want).abs() < 1e-3, "j = {j}, gn = {gn}: {got} vs {want}");
        }
    }
}
