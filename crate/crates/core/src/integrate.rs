//! Moment propagation for linear models.
//!
//! Between consecutive samples the step propagator `Phi`, the accumulated
//! noise `Q` and the driven mean offset `c` of the interval are integrated in
//! `f64` from `(I, 0, 0)` by an adaptive embedded Runge-Kutta pair:
//!
//! ```text
//! dPhi/dt = M Phi,   dQ/dt = M Q + Q M^T + D,   dc/dt = M c + lambda
//! ```
//!
//! The state is then advanced at working precision, `V <- Phi V Phi^T + Q`
//! and `mu <- Phi mu + c`. Truncation errors thereby act as a congruence of
//! `V` instead of an additive error on its huge entries, and the rounding
//! floor is set by the working precision alone.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{congruence, inverse, lift_all, log2_max_abs, matmul};
use crate::measures::{self, log_negativity, phonon_number, photon_number, purity, symplectic_spectrum};
use crate::model::LinearModel;
use crate::precision::{round_bits, PrecisionPolicy};
use crate::real::{Big, Real};
use crate::rk::{MethodRegistry, StepMethod};
use crate::state::{CovarianceMatrix, MeanVector, Snapshot};
use crate::wide::Wide;

/// Margin (bits) below which a sample's small-scale structure is not trusted.
pub const HEALTHY_MARGIN_BITS: f64 = 24.0;

/// Propagator, noise and drive accumulated over one interval.
#[derive(Clone, Debug)]
pub struct StepMap {
    pub dim: usize,
    pub phi: Vec<f64>,
    pub noise: Vec<f64>,
    pub drive: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: String,
    pub scheme: String,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Steps per mechanical period, at least 20.
    pub oversample: f64,
    /// Step cap for models without an oscillating drift.
    pub max_step: Option<f64>,
    pub sample_dt: f64,
    pub precision: PrecisionPolicy,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: "dopri5".into(),
            scheme: "full".into(),
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            oversample: 40.0,
            max_step: None,
            sample_dt: 0.01,
            precision: PrecisionPolicy::default(),
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.oversample < 20.0 {
            return Err(Error::Config(format!("oversample {} < 20", self.oversample)));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.sample_dt > 0.0) {
            return Err(Error::Config("sample_dt must be positive".into()));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::Config("max_step must be positive".into()));
            }
        }
        Ok(())
    }

    fn step_cap(&self, model: &dyn LinearModel) -> f64 {
        let from_period = model.period().map(|p| p / self.oversample).unwrap_or(f64::INFINITY);
        from_period.min(self.max_step.unwrap_or(f64::INFINITY))
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct StepCounts {
    pub accepted: u64,
    pub rejected: u64,
}

/// Integrate the augmented system over `[t0, t1]`; `h` carries the step
/// size between calls.
pub fn step_map(
    model: &dyn LinearModel,
    method: &dyn StepMethod,
    t0: f64,
    t1: f64,
    h: &mut f64,
    cfg: &IntegratorConfig,
    counts: &mut StepCounts,
) -> Result<StepMap> {
    let n = model.dim();
    let nn = n * n;
    let len = 2 * nn + n;
    let diffusion = model.diffusion().to_vec();
    let mut y = vec![0.0; len];
    for i in 0..n {
        y[i * n + i] = 1.0;
    }
    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let form = model.complex_form(t);
        let m = form.real_drift();
        let lam = form.real_coherent();
        let (phi, rest) = y.split_at(nn);
        let (q, c) = rest.split_at(nn);
        for i in 0..n {
            for j in 0..n {
                let mut dp = 0.0;
                let mut mq = 0.0;
                let mut qm = 0.0;
                for k in 0..n {
                    dp += m[i * n + k] * phi[k * n + j];
                    mq += m[i * n + k] * q[k * n + j];
                    qm += q[i * n + k] * m[j * n + k];
                }
                dy[i * n + j] = dp;
                dy[nn + i * n + j] = mq + qm + diffusion[i * n + j];
            }
            let mut dc = lam[i];
            for k in 0..n {
                dc += m[i * n + k] * c[k];
            }
            dy[2 * nn + i] = dc;
        }
    };
    let cap = cfg.step_cap(model);
    let blocks = [(0, nn), (nn, 2 * nn), (2 * nn, len)];
    let mut y_new = vec![0.0; len];
    let mut err = vec![0.0; len];
    let expo = 1.0 / (method.error_order() as f64 + 1.0);
    let mut t = t0;
    if !(*h > 0.0) || !h.is_finite() {
        *h = cap.min(t1 - t0).min(1e-2);
    }
    while t < t1 {
        let remaining = t1 - t;
        if remaining <= 1e-14 * t1.abs().max(1.0) {
            break;
        }
        let wanted = h.min(cap);
        let step = wanted.min(remaining);
        if step < 1e-13 * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h: step });
        }
        method.step(&mut rhs, t, &y, step, &mut y_new, &mut err);
        let mut norm: f64 = 0.0;
        for &(a, b) in &blocks {
            let scale = y[a..b]
                .iter()
                .chain(&y_new[a..b])
                .fold(0.0f64, |m, x| m.max(x.abs()));
            let tol = cfg.abs_tol + cfg.rel_tol * scale;
            for e in &err[a..b] {
                norm = norm.max(e.abs() / tol);
            }
        }
        if !norm.is_finite() {
            counts.rejected += 1;
            *h = step * 0.2;
            continue;
        }
        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-expo)).clamp(0.2, 5.0) };
        if norm <= 1.0 {
            counts.accepted += 1;
            t += step;
            y.copy_from_slice(&y_new);
            if step >= wanted * (1.0 - 1e-12) {
                *h = step * factor;
            }
        } else {
            counts.rejected += 1;
            *h = step * factor;
        }
    }
    Ok(StepMap {
        dim: n,
        phi: y[..nn].to_vec(),
        noise: y[nn..2 * nn].to_vec(),
        drive: y[2 * nn..].to_vec(),
    })
}

/// How the covariance is stored and advanced by a [`StepMap`].
pub trait Propagation<T: Real>: Send + Sync {
    fn prepare(&self, cov: &mut CovarianceMatrix<T>);
    fn advance(&self, cov: &mut CovarianceMatrix<T>, step: &StepMap);
    /// Bits left for order-one structure under the large entries.
    fn margin_bits(&self, cov: &CovarianceMatrix<T>) -> f64;
    /// Working width the stored representation needs now.
    fn required_bits(&self, cov: &CovarianceMatrix<T>, base_bits: u32, growth: f64) -> u32;
    /// Whether non-transposed symplectic invariants are resolvable.
    fn resolves_spectrum(&self) -> bool;
}

pub trait Scheme: Propagation<f64> + Propagation<Big> {
    fn name(&self) -> &'static str;
}

/// Full covariance matrix in the quadrature basis.
#[derive(Clone, Copy, Debug, Default)]
pub struct FullScheme;

/// Covariance carried as `Q C Q^T` with an orthogonal `f64` frame `Q` that
/// follows the growing subspace and an upper-triangular update of the core,
/// so large directions never mix into the small ones.
#[derive(Clone, Copy, Debug, Default)]
pub struct FrameScheme;

fn log2_condition<T: Real>(w: &[T], n: usize) -> f64 {
    let m = log2_max_abs(w);
    if !m.is_finite() {
        return f64::INFINITY;
    }
    let k = m.ceil() as i64;
    let norm: Vec<T> = w.iter().map(|x| x.ldexp(-k)).collect();
    match inverse(&norm, n) {
        Some(inv) if inv.iter().all(|x| x.is_finite()) => log2_max_abs(&norm) + log2_max_abs(&inv),
        _ => f64::INFINITY,
    }
}

impl<T: Real> Propagation<T> for FullScheme {
    fn prepare(&self, _cov: &mut CovarianceMatrix<T>) {}

    fn advance(&self, cov: &mut CovarianceMatrix<T>, step: &StepMap) {
        let n = step.dim;
        let like = cov.raw()[0].clone();
        let phi = lift_all(&like, &step.phi);
        let s = cov.scale_exponent();
        let mut next = congruence(&phi, cov.raw(), n);
        for (x, q) in next.iter_mut().zip(&step.noise) {
            if *q != 0.0 {
                *x = x.clone() + like.lift(*q).ldexp(-s);
            }
        }
        cov.set_parts(next, None, s);
        cov.rebase();
    }

    fn margin_bits(&self, cov: &CovarianceMatrix<T>) -> f64 {
        cov.bits() as f64 - log2_condition(cov.raw(), cov.dim())
    }

    fn required_bits(&self, cov: &CovarianceMatrix<T>, base_bits: u32, growth: f64) -> u32 {
        let by_size = PrecisionPolicy::required_bits(base_bits, growth, cov.log2_max_abs());
        let cond = log2_condition(cov.raw(), cov.dim());
        let by_cond = if cond.is_finite() { base_bits + cond.ceil().max(0.0) as u32 } else { u32::MAX / 2 };
        by_size.max(by_cond)
    }

    fn resolves_spectrum(&self) -> bool {
        true
    }
}

fn identity(n: usize) -> Vec<f64> {
    (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect()
}

impl<T: Real> Propagation<T> for FrameScheme {
    fn prepare(&self, cov: &mut CovarianceMatrix<T>) {
        if cov.frame().is_none() {
            let s = cov.scale_exponent();
            let core = cov.raw().to_vec();
            cov.set_parts(core, Some(identity(cov.dim())), s);
        }
    }

    fn advance(&self, cov: &mut CovarianceMatrix<T>, step: &StepMap) {
        let n = step.dim;
        let q = DMatrix::from_row_slice(n, n, cov.frame().expect("frame attached"));
        let phi = DMatrix::from_row_slice(n, n, &step.phi);
        let qr = (phi * q).qr();
        let mut q_new = qr.q();
        let mut r = qr.r();
        for i in 0..n {
            if r[(i, i)] < 0.0 {
                for j in 0..n {
                    r[(i, j)] = -r[(i, j)];
                    q_new[(j, i)] = -q_new[(j, i)];
                }
            }
        }
        let noise = DMatrix::from_row_slice(n, n, &step.noise);
        let noise_core = q_new.transpose() * noise * &q_new;
        let like = cov.raw()[0].clone();
        let r_rows: Vec<f64> = (0..n * n).map(|i| r[(i / n, i % n)]).collect();
        let rl = lift_all(&like, &r_rows);
        let s = cov.scale_exponent();
        let mut next = congruence(&rl, cov.raw(), n);
        for i in 0..n {
            for j in 0..n {
                let v = 0.5 * (noise_core[(i, j)] + noise_core[(j, i)]);
                if v != 0.0 {
                    next[i * n + j] = next[i * n + j].clone() + like.lift(v).ldexp(-s);
                }
            }
        }
        let frame: Vec<f64> = (0..n * n).map(|i| q_new[(i / n, i % n)]).collect();
        cov.set_parts(next, Some(frame), s);
        cov.rebase();
    }

    fn margin_bits(&self, cov: &CovarianceMatrix<T>) -> f64 {
        let bits = cov.bits() as f64 - 8.0;
        let Some(emax) = T::MAX_EXP else {
            return bits;
        };
        // Determinants multiply `dim` core entries spread below the largest.
        let n = cov.dim();
        let core = cov.raw();
        let top = log2_max_abs(core);
        let bottom = (0..n).map(|i| core[i * n + i].log2_abs()).fold(f64::INFINITY, f64::min);
        let spread = top - bottom;
        if !spread.is_finite() || spread * n as f64 > (emax - 64) as f64 {
            f64::NEG_INFINITY
        } else {
            bits
        }
    }

    fn required_bits(&self, _cov: &CovarianceMatrix<T>, base_bits: u32, _growth: f64) -> u32 {
        base_bits
    }

    fn resolves_spectrum(&self) -> bool {
        false
    }
}

impl Scheme for FullScheme {
    fn name(&self) -> &'static str {
        "full"
    }
}

impl Scheme for FrameScheme {
    fn name(&self) -> &'static str {
        "frame"
    }
}

pub struct SchemeRegistry {
    schemes: BTreeMap<&'static str, Arc<dyn Scheme>>,
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        let mut reg = SchemeRegistry { schemes: BTreeMap::new() };
        reg.register(Arc::new(FullScheme));
        reg.register(Arc::new(FrameScheme));
        reg
    }
}

impl SchemeRegistry {
    pub fn register(&mut self, scheme: Arc<dyn Scheme>) {
        self.schemes.insert(scheme.name(), scheme);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Scheme>> {
        self.schemes.get(name).cloned().ok_or_else(|| Error::Unknown {
            kind: "propagation scheme",
            name: name.to_string(),
            available: self.schemes.keys().copied().collect::<Vec<_>>().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.schemes.keys().copied().collect()
    }
}

/// Working scalars that can pick their view of a [`Scheme`].
pub trait Working: Real {
    fn view(scheme: &dyn Scheme) -> &dyn Propagation<Self>;
}

impl Working for f64 {
    fn view(scheme: &dyn Scheme) -> &dyn Propagation<f64> {
        scheme
    }
}

impl Working for Big {
    fn view(scheme: &dyn Scheme) -> &dyn Propagation<Big> {
        scheme
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSample {
    /// Two-mode models only.
    pub e_n: Option<f64>,
    pub eta_minus: Option<f64>,
    /// `-ln(2 eta_minus)` before clamping.
    pub negativity_raw: Option<f64>,
    pub purity: Wide,
    pub n_m: Wide,
    /// One entry per cavity mode.
    pub n_p: Vec<Wide>,
    /// Symplectic eigenvalues, ascending; empty when not resolvable.
    pub spectrum: Vec<Wide>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub bits: u32,
    pub margin_bits: f64,
    pub cov: Snapshot,
    /// Complex amplitude `(re, im)` of each mode.
    pub means: Vec<(Wide, Wide)>,
    pub displacement: Vec<(f64, f64)>,
    pub measures: MeasureSample,
}

impl Sample {
    pub fn healthy(&self) -> bool {
        self.margin_bits >= HEALTHY_MARGIN_BITS
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub policy: PrecisionPolicy,
    pub scheme: String,
    pub method: String,
    pub initial_bits: u32,
    pub max_bits: u32,
    pub steps: StepCounts,
    pub min_margin_bits: f64,
    /// Last sample time up to which every sample was healthy.
    pub healthy_until: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: String,
    pub n_modes: usize,
    pub period: Option<f64>,
    pub samples: Vec<Sample>,
    pub meta: RunMeta,
}

impl Trajectory {
    /// No samples yet; used for runs that fail before the first step.
    pub fn empty(model: &str, n_modes: usize, period: Option<f64>, cfg: &IntegratorConfig) -> Trajectory {
        Trajectory {
            model: model.into(),
            n_modes,
            period,
            samples: Vec::new(),
            meta: RunMeta {
                policy: cfg.precision,
                scheme: cfg.scheme.clone(),
                method: cfg.method.clone(),
                initial_bits: 0,
                max_bits: 0,
                steps: StepCounts::default(),
                min_margin_bits: f64::NAN,
                healthy_until: 0.0,
                wall_seconds: 0.0,
            },
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Unclamped `-ln(2 eta_minus)`; NaN where unavailable.
    pub fn negativity_raw(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| s.measures.negativity_raw.unwrap_or(f64::NAN))
            .collect()
    }

    pub fn e_n(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.measures.e_n.unwrap_or(f64::NAN)).collect()
    }

    pub fn stats(&self, window_fraction: f64) -> Result<measures::TrajectoryStats> {
        measures::trajectory_stats(&self.times(), &self.negativity_raw(), window_fraction, self.period)
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

/// Integration aborted; `partial` holds every sample taken before the failure.
#[derive(Debug)]
pub struct Failure {
    pub error: Error,
    pub partial: Trajectory,
}

pub type Outcome = std::result::Result<Trajectory, Box<Failure>>;

fn measure<T: Real>(
    model: &dyn LinearModel,
    cov: &CovarianceMatrix<T>,
    mean: &MeanVector<T>,
    t: f64,
    spectrum: bool,
    trusted: bool,
) -> Result<MeasureSample> {
    // Cancellation-sensitive quantities are only reported on healthy samples.
    let neg = if trusted && cov.n_modes() == 2 { Some(log_negativity(cov)?) } else { None };
    let spectrum = if trusted && spectrum { symplectic_spectrum(cov)? } else { Vec::new() };
    let purity = if trusted { purity(cov) } else { Wide::new(f64::NAN, 0) };
    let disp = model.displacement(t);
    let n_p = model
        .cavity_modes()
        .iter()
        .zip(&disp)
        .map(|(&m, &d)| photon_number(mean, cov, m, d))
        .collect();
    Ok(MeasureSample {
        e_n: neg.map(|n| n.e_n),
        eta_minus: neg.map(|n| n.eta_minus),
        negativity_raw: neg.map(|n| n.raw),
        purity,
        n_m: phonon_number(cov),
        n_p,
        spectrum,
    })
}

fn advance_mean<T: Real>(mean: &mut MeanVector<T>, step: &StepMap) {
    let n = step.dim;
    let like = mean.quadratures[0].clone();
    let phi = lift_all(&like, &step.phi);
    let s = mean.scale_exponent;
    let mut next = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = like.lift(step.drive[i]).ldexp(-s);
        for k in 0..n {
            acc = acc + phi[i * n + k].clone() * &mean.quadratures[k];
        }
        next.push(acc);
    }
    mean.quadratures = next;
    mean.rebase();
}

/// Integrate from `(mean0, cov0)` at `t = 0` to `t_end`, sampling every
/// `cfg.sample_dt`.
pub fn integrate(model: &dyn LinearModel, mean0: &MeanVector<f64>, cov0: &CovarianceMatrix<f64>, t_end: f64, cfg: &IntegratorConfig) -> Outcome {
    integrate_with(model, mean0, cov0, t_end, cfg, &MethodRegistry::default(), &SchemeRegistry::default())
}

pub fn integrate_with(
    model: &dyn LinearModel,
    mean0: &MeanVector<f64>,
    cov0: &CovarianceMatrix<f64>,
    t_end: f64,
    cfg: &IntegratorConfig,
    methods: &MethodRegistry,
    schemes: &SchemeRegistry,
) -> Outcome {
    let empty = |error: Error| {
        Box::new(Failure {
            error,
            partial: Trajectory::empty(model.kind(), model.n_modes(), model.period(), cfg),
        })
    };
    if let Err(e) = cfg.validate() {
        return Err(empty(e));
    }
    if !(t_end > 0.0) {
        return Err(empty(Error::Config(format!("t_end must be positive, got {t_end}"))));
    }
    if cov0.dim() != model.dim() {
        return Err(empty(Error::Config(format!(
            "initial state has dim {}, model needs {}",
            cov0.dim(),
            model.dim()
        ))));
    }
    let method = match methods.get(&cfg.method) {
        Ok(m) => m,
        Err(e) => return Err(empty(e)),
    };
    let scheme = match schemes.get(&cfg.scheme) {
        Ok(s) => s,
        Err(e) => return Err(empty(e)),
    };
    match cfg.precision {
        PrecisionPolicy::Double => run::<f64>(model, mean0, cov0, t_end, cfg, method.as_ref(), scheme.as_ref(), 53),
        PrecisionPolicy::Extended { bits } => {
            run::<Big>(model, mean0, cov0, t_end, cfg, method.as_ref(), scheme.as_ref(), round_bits(bits))
        }
        PrecisionPolicy::Adaptive { base_bits, growth, .. } => {
            let probe: CovarianceMatrix<Big> = cov0.convert(round_bits(base_bits));
            let need = <Big as Working>::view(scheme.as_ref()).required_bits(&probe, base_bits, growth);
            run::<Big>(model, mean0, cov0, t_end, cfg, method.as_ref(), scheme.as_ref(), round_bits(need + 64))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run<T: Working>(
    model: &dyn LinearModel,
    mean0: &MeanVector<f64>,
    cov0: &CovarianceMatrix<f64>,
    t_end: f64,
    cfg: &IntegratorConfig,
    method: &dyn StepMethod,
    scheme: &dyn Scheme,
    bits: u32,
) -> Outcome {
    let started = Instant::now();
    let prop = T::view(scheme);
    let mut cov: CovarianceMatrix<T> = cov0.convert(bits);
    let mut mean: MeanVector<T> = mean0.convert(bits);
    prop.prepare(&mut cov);
    let spectrum = prop.resolves_spectrum();

    let mut traj = Trajectory {
        model: model.kind().into(),
        n_modes: model.n_modes(),
        period: model.period(),
        samples: Vec::new(),
        meta: RunMeta {
            policy: cfg.precision,
            scheme: scheme.name().into(),
            method: method.name().into(),
            initial_bits: cov.bits(),
            max_bits: cov.bits(),
            steps: StepCounts::default(),
            min_margin_bits: f64::INFINITY,
            healthy_until: 0.0,
            wall_seconds: 0.0,
        },
    };
    let mut all_healthy = true;

    let record = |traj: &mut Traj<'_>, cov: &CovarianceMatrix<T>, mean: &MeanVector<T>, t: f64| -> Result<()> {
        let margin = prop.margin_bits(cov);
        let healthy = margin >= HEALTHY_MARGIN_BITS;
        let measures = measure(model, cov, mean, t, spectrum, healthy)?;
        let n_modes = cov.n_modes();
        traj.push(
            Sample {
                t,
                bits: cov.bits(),
                margin_bits: margin,
                cov: cov.snapshot(),
                means: (0..n_modes).map(|k| mean.amplitude(k)).collect(),
                displacement: model.displacement(t).iter().map(|d| (d.re, d.im)).collect(),
                measures,
            },
            healthy,
        );
        Ok(())
    };

    let mut sink = Traj { traj: &mut traj, all_healthy: &mut all_healthy };
    let fail = |sink: Traj<'_>, error: Error, started: Instant| {
        sink.traj.meta.wall_seconds = started.elapsed().as_secs_f64();
        Box::new(Failure { error, partial: sink.traj.clone() })
    };

    if let Err(e) = record(&mut sink, &cov, &mean, 0.0) {
        return Err(fail(sink, e, started));
    }
    let n_chunks = (t_end / cfg.sample_dt - 1e-9).ceil().max(1.0) as usize;
    let mut h = f64::NAN;
    let mut counts = StepCounts::default();
    for k in 1..=n_chunks {
        let t0 = (k - 1) as f64 * cfg.sample_dt;
        let t1 = if k == n_chunks { t_end } else { k as f64 * cfg.sample_dt };
        let step = match step_map(model, method, t0, t1, &mut h, cfg, &mut counts) {
            Ok(s) => s,
            Err(e) => {
                sink.traj.meta.steps = counts;
                return Err(fail(sink, e, started));
            }
        };
        sink.traj.meta.steps = counts;
        prop.advance(&mut cov, &step);
        advance_mean(&mut mean, &step);
        if !cov.is_finite() {
            return Err(fail(sink, Error::NonPhysical(format!("non-finite covariance at t = {t1}")), started));
        }
        if let PrecisionPolicy::Adaptive { base_bits, growth, max_bits } = cfg.precision {
            let need = prop.required_bits(&cov, base_bits, growth);
            if need > cov.bits() {
                if need > max_bits {
                    return Err(fail(sink, Error::PrecisionExhausted { t: t1, needed: need, cap: max_bits }, started));
                }
                let wider = round_bits((need + (need / 4).max(64)).min(max_bits));
                cov = cov.with_bits(wider);
                mean = mean.with_bits(wider);
                sink.traj.meta.max_bits = sink.traj.meta.max_bits.max(wider);
            }
        }
        if let Err(e) = record(&mut sink, &cov, &mean, t1) {
            return Err(fail(sink, e, started));
        }
    }
    sink.traj.meta.wall_seconds = started.elapsed().as_secs_f64();
    Ok(traj)
}

struct Traj<'a> {
    traj: &'a mut Trajectory,
    all_healthy: &'a mut bool,
}

impl Traj<'_> {
    fn push(&mut self, s: Sample, healthy: bool) {
        let meta = &mut self.traj.meta;
        meta.min_margin_bits = meta.min_margin_bits.min(s.margin_bits);
        meta.max_bits = meta.max_bits.max(s.bits);
        if healthy && *self.all_healthy {
            meta.healthy_until = s.t;
        } else {
            *self.all_healthy = false;
        }
        self.traj.samples.push(s);
    }
}

/// `M V + V M^T + D` for a plain `f64` covariance.
pub fn lyapunov_residual(model: &dyn LinearModel, t: f64, v: &[f64]) -> Vec<f64> {
    let n = model.dim();
    let m = model.drift(t);
    let mv = matmul(&m, v, n);
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = mv[i * n + j] + mv[j * n + i] + model.diffusion()[i * n + j];
        }
    }
    out
}
