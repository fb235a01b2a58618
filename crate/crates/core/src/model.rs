//! Linearised Langevin models: drift, diffusion and coherent drive.
//!
//! Each model states its equations in complex form,
//! `dc_k/dt = sum_j (A_kj c_j + B_kj c_j^dag) + f_k`, and the real quadrature
//! drift is derived from that form once, for every model alike.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::{DriveSpec, NoiseToggle, SystemParams};
use crate::state::MECHANICAL_MODE;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Complex-mode coefficients at one instant.
#[derive(Clone, Debug)]
pub struct ComplexForm {
    pub a: DMatrix<Complex64>,
    pub b: DMatrix<Complex64>,
    pub f: DVector<Complex64>,
}

impl ComplexForm {
    fn zeros(n: usize) -> Self {
        ComplexForm {
            a: DMatrix::zeros(n, n),
            b: DMatrix::zeros(n, n),
            f: DVector::zeros(n),
        }
    }

    /// Real drift in quadrature order, row-major.
    pub fn real_drift(&self) -> Vec<f64> {
        let n = self.a.nrows();
        let dim = 2 * n;
        let mut m = vec![0.0; dim * dim];
        for k in 0..n {
            for j in 0..n {
                let (a, b) = (self.a[(k, j)], self.b[(k, j)]);
                m[(2 * k) * dim + 2 * j] = a.re + b.re;
                m[(2 * k) * dim + 2 * j + 1] = -a.im + b.im;
                m[(2 * k + 1) * dim + 2 * j] = a.im + b.im;
                m[(2 * k + 1) * dim + 2 * j + 1] = a.re - b.re;
            }
        }
        m
    }

    pub fn real_coherent(&self) -> Vec<f64> {
        self.f.iter().flat_map(|f| [SQRT_2 * f.re, SQRT_2 * f.im]).collect()
    }
}

pub trait LinearModel: Send + Sync {
    fn kind(&self) -> &'static str;
    fn n_modes(&self) -> usize;
    fn complex_form(&self, t: f64) -> ComplexForm;
    /// Constant diffusion matrix, row-major.
    fn diffusion(&self) -> &[f64];
    /// Analytic displacement of each cavity mode.
    fn displacement(&self, t: f64) -> Vec<Complex64>;
    /// Mechanical period when the drift oscillates.
    fn period(&self) -> Option<f64>;
    /// Mode indices of the cavity modes, in displacement order.
    fn cavity_modes(&self) -> Vec<usize>;

    fn dim(&self) -> usize {
        2 * self.n_modes()
    }

    fn drift(&self, t: f64) -> Vec<f64> {
        self.complex_form(t).real_drift()
    }

    fn coherent(&self, t: f64) -> Vec<f64> {
        self.complex_form(t).real_coherent()
    }
}

/// Closed-form cavity displacement for a constant drive switched on at `t = 0`.
pub fn displacement(drive: &DriveSpec, t: f64) -> Complex64 {
    if drive.detuning == 0.0 {
        return c(drive.amplitude * t);
    }
    let phase = Complex64::from_polar(1.0, drive.detuning * t);
    c(drive.amplitude) * (phase - 1.0) / (I * drive.detuning)
}

fn diffusion_matrix(params: &SystemParams, noise: NoiseToggle, n_modes: usize) -> Vec<f64> {
    let dim = 2 * n_modes;
    let mut d = vec![0.0; dim * dim];
    for mode in 0..n_modes {
        let v = if mode == MECHANICAL_MODE {
            if noise.mechanical {
                params.gamma_m * (2.0 * params.n_th + 1.0)
            } else {
                0.0
            }
        } else if noise.cavity {
            params.kappa * (2.0 * params.n_c + 1.0)
        } else {
            0.0
        };
        d[(2 * mode) * dim + 2 * mode] = v;
        d[(2 * mode + 1) * dim + 2 * mode + 1] = v;
    }
    d
}

/// One cavity coupled to the mechanics through the oscillating displacement.
pub struct FullTwoMode {
    params: SystemParams,
    drive: DriveSpec,
    diffusion: Vec<f64>,
}

pub fn full_two_mode(params: &SystemParams, drive: DriveSpec, noise: NoiseToggle) -> FullTwoMode {
    FullTwoMode {
        params: params.clone(),
        drive,
        diffusion: diffusion_matrix(params, noise, 2),
    }
}

/// Fill the cavity-mechanics coupling for cavity `k` with displacement `d`.
fn couple(form: &mut ComplexForm, k: usize, d: Complex64, g: f64, w: f64, t: f64) {
    let m = MECHANICAL_MODE;
    let up = Complex64::from_polar(1.0, w * t);
    let down = up.conj();
    form.a[(k, m)] = I * g * d * down;
    form.b[(k, m)] = I * g * d * up;
    form.a[(m, k)] = I * g * up * d.conj();
    form.b[(m, k)] = I * g * up * d;
}

impl LinearModel for FullTwoMode {
    fn kind(&self) -> &'static str {
        "full-two-mode"
    }
    fn n_modes(&self) -> usize {
        2
    }
    fn complex_form(&self, t: f64) -> ComplexForm {
        let p = &self.params;
        let d = displacement(&self.drive, t);
        let mut form = ComplexForm::zeros(2);
        form.a[(0, 0)] = c(-p.kappa);
        form.a[(1, 1)] = c(-p.gamma_m);
        couple(&mut form, 0, d, p.g_m, p.omega_m, t);
        form.f[0] = -p.kappa * d;
        form.f[1] = I * p.g_m * Complex64::from_polar(1.0, p.omega_m * t) * d.norm_sqr();
        form
    }
    fn diffusion(&self) -> &[f64] {
        &self.diffusion
    }
    fn displacement(&self, t: f64) -> Vec<Complex64> {
        vec![displacement(&self.drive, t)]
    }
    fn period(&self) -> Option<f64> {
        Some(2.0 * PI / self.params.omega_m)
    }
    fn cavity_modes(&self) -> Vec<usize> {
        vec![0]
    }
}

/// Resolved-sideband limit: constant two-mode squeezing at rate `j`.
pub struct AsymptoticTwoMode {
    params: SystemParams,
    j: f64,
    diffusion: Vec<f64>,
}

pub fn asymptotic_two_mode(j: f64, params: &SystemParams, noise: NoiseToggle) -> AsymptoticTwoMode {
    AsymptoticTwoMode {
        params: params.clone(),
        j,
        diffusion: diffusion_matrix(params, noise, 2),
    }
}

impl AsymptoticTwoMode {
    pub fn coupling(&self) -> f64 {
        self.j
    }
}

impl LinearModel for AsymptoticTwoMode {
    fn kind(&self) -> &'static str {
        "asymptotic-two-mode"
    }
    fn n_modes(&self) -> usize {
        2
    }
    fn complex_form(&self, _t: f64) -> ComplexForm {
        let p = &self.params;
        let mut form = ComplexForm::zeros(2);
        form.a[(0, 0)] = c(-p.kappa);
        form.a[(1, 1)] = c(-p.gamma_m);
        form.b[(0, 1)] = c(self.j);
        form.b[(1, 0)] = c(self.j);
        if p.g_m > 0.0 {
            form.f[0] = I * p.kappa * self.j / p.g_m;
            form.f[1] = -I * self.j * self.j / p.g_m;
        }
        form
    }
    fn diffusion(&self) -> &[f64] {
        &self.diffusion
    }
    fn displacement(&self, _t: f64) -> Vec<Complex64> {
        // Period average of the oscillating displacement.
        let d = if self.params.g_m > 0.0 { -self.j / self.params.g_m } else { 0.0 };
        vec![Complex64::new(0.0, d)]
    }
    fn period(&self) -> Option<f64> {
        None
    }
    fn cavity_modes(&self) -> Vec<usize> {
        vec![0]
    }
}

/// Two cavity fields (blue and red drive) sharing one mechanical mode,
/// ordered `(a1, b, a2)`.
pub struct ThreeMode {
    params: SystemParams,
    drives: [DriveSpec; 2],
    diffusion: Vec<f64>,
}

pub fn three_mode(params: &SystemParams, first: DriveSpec, second: DriveSpec, noise: NoiseToggle) -> ThreeMode {
    ThreeMode {
        params: params.clone(),
        drives: [first, second],
        diffusion: diffusion_matrix(params, noise, 3),
    }
}

impl LinearModel for ThreeMode {
    fn kind(&self) -> &'static str {
        "three-mode"
    }
    fn n_modes(&self) -> usize {
        3
    }
    fn complex_form(&self, t: f64) -> ComplexForm {
        let p = &self.params;
        let d1 = displacement(&self.drives[0], t);
        let d2 = displacement(&self.drives[1], t);
        let mut form = ComplexForm::zeros(3);
        form.a[(0, 0)] = c(-p.kappa);
        form.a[(1, 1)] = c(-p.gamma_m);
        form.a[(2, 2)] = c(-p.kappa);
        couple(&mut form, 0, d1, p.g_m, p.omega_m, t);
        couple(&mut form, 2, d2, p.g_m, p.omega_m, t);
        form.f[0] = -p.kappa * d1;
        // No cross terms between the two drives in the mechanical drive.
        form.f[1] = I * p.g_m * Complex64::from_polar(1.0, p.omega_m * t) * (d1.norm_sqr() + d2.norm_sqr());
        form.f[2] = -p.kappa * d2;
        form
    }
    fn diffusion(&self) -> &[f64] {
        &self.diffusion
    }
    fn displacement(&self, t: f64) -> Vec<Complex64> {
        vec![displacement(&self.drives[0], t), displacement(&self.drives[1], t)]
    }
    fn period(&self) -> Option<f64> {
        Some(2.0 * PI / self.params.omega_m)
    }
    fn cavity_modes(&self) -> Vec<usize> {
        vec![0, 2]
    }
}

/// Period average of the three-mode equations: squeezing `j1` on the first
/// cavity and beam-splitter exchange `j2` on the second.
pub struct AsymptoticThreeMode {
    params: SystemParams,
    j: [f64; 2],
    diffusion: Vec<f64>,
}

pub fn asymptotic_three_mode(j1: f64, j2: f64, params: &SystemParams, noise: NoiseToggle) -> AsymptoticThreeMode {
    AsymptoticThreeMode {
        params: params.clone(),
        j: [j1, j2],
        diffusion: diffusion_matrix(params, noise, 3),
    }
}

impl LinearModel for AsymptoticThreeMode {
    fn kind(&self) -> &'static str {
        "asymptotic-three-mode"
    }
    fn n_modes(&self) -> usize {
        3
    }
    fn complex_form(&self, _t: f64) -> ComplexForm {
        let p = &self.params;
        let [j1, j2] = self.j;
        let mut form = ComplexForm::zeros(3);
        form.a[(0, 0)] = c(-p.kappa);
        form.a[(1, 1)] = c(-p.gamma_m);
        form.a[(2, 2)] = c(-p.kappa);
        form.b[(0, 1)] = c(-j1);
        form.b[(1, 0)] = c(-j1);
        form.a[(1, 2)] = c(-j2);
        form.a[(2, 1)] = c(j2);
        if p.g_m > 0.0 {
            form.f[0] = I * p.kappa * j1 / p.g_m;
            form.f[1] = -I * (j1 * j1 + j2 * j2) / p.g_m;
            form.f[2] = -I * p.kappa * j2 / p.g_m;
        }
        form
    }
    fn diffusion(&self) -> &[f64] {
        &self.diffusion
    }
    fn displacement(&self, _t: f64) -> Vec<Complex64> {
        let g = self.params.g_m;
        if g > 0.0 {
            vec![Complex64::new(0.0, -self.j[0] / g), Complex64::new(0.0, self.j[1] / g)]
        } else {
            vec![Complex64::new(0.0, 0.0); 2]
        }
    }
    fn period(&self) -> Option<f64> {
        None
    }
    fn cavity_modes(&self) -> Vec<usize> {
        vec![0, 2]
    }
}

/// Everything a model factory may draw on.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub params: SystemParams,
    pub drives: Vec<DriveSpec>,
    pub noise: NoiseToggle,
}

pub trait ModelFactory: Send + Sync {
    fn name(&self) -> &'static str;
    fn n_drives(&self) -> usize;
    fn build(&self, spec: &ModelSpec) -> Box<dyn LinearModel>;
}

struct FullTwoModeFactory;
struct AsymptoticTwoModeFactory;
struct ThreeModeFactory;
struct AsymptoticThreeModeFactory;

impl ModelFactory for FullTwoModeFactory {
    fn name(&self) -> &'static str {
        "full-two-mode"
    }
    fn n_drives(&self) -> usize {
        1
    }
    fn build(&self, s: &ModelSpec) -> Box<dyn LinearModel> {
        Box::new(full_two_mode(&s.params, s.drives[0], s.noise))
    }
}

impl ModelFactory for AsymptoticTwoModeFactory {
    fn name(&self) -> &'static str {
        "asymptotic-two-mode"
    }
    fn n_drives(&self) -> usize {
        1
    }
    fn build(&self, s: &ModelSpec) -> Box<dyn LinearModel> {
        let j = s.drives[0].coupling(&s.params);
        Box::new(asymptotic_two_mode(j, &s.params, s.noise))
    }
}

impl ModelFactory for ThreeModeFactory {
    fn name(&self) -> &'static str {
        "three-mode"
    }
    fn n_drives(&self) -> usize {
        2
    }
    fn build(&self, s: &ModelSpec) -> Box<dyn LinearModel> {
        Box::new(three_mode(&s.params, s.drives[0], s.drives[1], s.noise))
    }
}

impl ModelFactory for AsymptoticThreeModeFactory {
    fn name(&self) -> &'static str {
        "asymptotic-three-mode"
    }
    fn n_drives(&self) -> usize {
        2
    }
    fn build(&self, s: &ModelSpec) -> Box<dyn LinearModel> {
        let j1 = s.drives[0].coupling(&s.params);
        let j2 = s.drives[1].coupling(&s.params);
        Box::new(asymptotic_three_mode(j1, j2, &s.params, s.noise))
    }
}

pub struct ModelRegistry {
    factories: BTreeMap<&'static str, Arc<dyn ModelFactory>>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut reg = ModelRegistry { factories: BTreeMap::new() };
        reg.register(FullTwoModeFactory);
        reg.register(AsymptoticTwoModeFactory);
        reg.register(ThreeModeFactory);
        reg.register(AsymptoticThreeModeFactory);
        reg
    }
}

impl ModelRegistry {
    pub fn register<F: ModelFactory + 'static>(&mut self, factory: F) {
        self.factories.insert(factory.name(), Arc::new(factory));
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ModelFactory>> {
        self.factories.get(name).cloned().ok_or_else(|| Error::Unknown {
            kind: "model",
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn build(&self, name: &str, spec: &ModelSpec) -> Result<Box<dyn LinearModel>> {
        let factory = self.get(name)?;
        if spec.drives.len() != factory.n_drives() {
            return Err(Error::Config(format!(
                "model `{name}` takes {} drive(s), got {}",
                factory.n_drives(),
                spec.drives.len()
            )));
        }
        Ok(factory.build(spec))
    }
}
