//! Euler-Maruyama sampling of the linear quadrature Langevin equations,
//! an independent check on the moment equations.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LinearModel;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Ascending, all positive or zero.
    pub sample_times: Vec<f64>,
    pub batches: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { paths: 20_000, dt: 1e-3, seed: 0, sample_times: vec![1.0], batches: 64 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McMoments {
    pub t: f64,
    pub paths: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub cov_se: Vec<f64>,
}

struct Sums {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    count: usize,
}

impl Sums {
    fn new(n_times: usize, dim: usize) -> Self {
        Sums {
            first: vec![vec![0.0; dim]; n_times],
            second: vec![vec![0.0; dim * dim]; n_times],
            count: 0,
        }
    }

    fn merge(mut self, other: Sums) -> Sums {
        for (a, b) in self.first.iter_mut().zip(&other.first) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.second.iter_mut().zip(&other.second) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.count += other.count;
        self
    }
}

fn run_batch(model: &dyn LinearModel, chol: &DMatrix<f64>, mean0: &[f64], cfg: &McConfig, batch: usize, paths: usize) -> Sums {
    let n = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(batch as u64 + 1);
    let noise: Vec<f64> = (0..n).map(|i| model.diffusion()[i * n + i].max(0.0).sqrt()).collect();
    let mut xs = vec![0.0; paths * n];
    let mut z = vec![0.0; n];
    for p in 0..paths {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        for i in 0..n {
            let mut acc = mean0[i];
            for k in 0..=i {
                acc += chol[(i, k)] * z[k];
            }
            xs[p * n + i] = acc;
        }
    }
    let mut sums = Sums::new(cfg.sample_times.len(), n);
    sums.count = paths;
    let mut record = |slot: usize, xs: &[f64]| {
        for p in 0..paths {
            let x = &xs[p * n..(p + 1) * n];
            for i in 0..n {
                sums.first[slot][i] += x[i];
                for j in 0..n {
                    sums.second[slot][i * n + j] += x[i] * x[j];
                }
            }
        }
    };
    let sq_dt = cfg.dt.sqrt();
    let mut t = 0.0;
    let mut next = vec![0.0; n];
    for (slot, &target) in cfg.sample_times.iter().enumerate() {
        let steps = ((target - t) / cfg.dt).round().max(0.0) as usize;
        for _ in 0..steps {
            let m = model.drift(t);
            let lam = model.coherent(t);
            for p in 0..paths {
                let x = &xs[p * n..(p + 1) * n];
                for i in 0..n {
                    let mut d = lam[i];
                    for k in 0..n {
                        d += m[i * n + k] * x[k];
                    }
                    let w: f64 = StandardNormal.sample(&mut rng);
                    next[i] = x[i] + d * cfg.dt + noise[i] * sq_dt * w;
                }
                xs[p * n..(p + 1) * n].copy_from_slice(&next);
            }
            t += cfg.dt;
        }
        t = target;
        record(slot, &xs);
    }
    sums
}

/// Sample `cfg.paths` trajectories from the Gaussian state `(mean0, cov0)`
/// at `t = 0` and return moments at each sample time.
pub fn sample_moments(model: &dyn LinearModel, mean0: &[f64], cov0: &[f64], cfg: &McConfig) -> Result<Vec<McMoments>> {
    let n = model.dim();
    if mean0.len() != n || cov0.len() != n * n {
        return Err(Error::Config(format!("initial moments do not match dimension {n}")));
    }
    if cfg.paths < 2 || !(cfg.dt > 0.0) || cfg.batches == 0 {
        return Err(Error::Config("need at least two paths, dt > 0 and one batch".into()));
    }
    if cfg.sample_times.windows(2).any(|w| w[1] < w[0]) || cfg.sample_times.iter().any(|&t| t < 0.0) {
        return Err(Error::Config("sample times must be ascending and non-negative".into()));
    }
    let chol = DMatrix::from_row_slice(n, n, cov0)
        .cholesky()
        .ok_or_else(|| Error::NonPhysical("initial covariance is not positive definite".into()))?
        .l();
    let batches = cfg.batches.min(cfg.paths);
    let total = (0..batches)
        .into_par_iter()
        .map(|b| {
            let share = cfg.paths / batches + usize::from(b < cfg.paths % batches);
            run_batch(model, &chol, mean0, cfg, b, share)
        })
        .reduce(|| Sums::new(cfg.sample_times.len(), n), Sums::merge);

    let count = total.count as f64;
    Ok(cfg
        .sample_times
        .iter()
        .enumerate()
        .map(|(slot, &t)| {
            let mean: Vec<f64> = total.first[slot].iter().map(|s| s / count).collect();
            let mut cov = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    cov[i * n + j] = (total.second[slot][i * n + j] - count * mean[i] * mean[j]) / (count - 1.0);
                }
            }
            let mean_se = (0..n).map(|i| (cov[i * n + i] / count).sqrt()).collect();
            let cov_se = (0..n * n)
                .map(|k| {
                    let (i, j) = (k / n, k % n);
                    ((cov[i * n + i] * cov[j * n + j] + cov[k] * cov[k]) / count).sqrt()
                })
                .collect();
            McMoments { t, paths: total.count, mean, cov, mean_se, cov_se }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::asymptotic_two_mode;
    use crate::params::{NoiseToggle, SystemParams};

    #[test]
    fn thermal_state_is_stationary() {
        // Beam-splitter-free damping with matched noise keeps vacuum/thermal variances.
        let p = SystemParams { kappa: 1.0, g_m: 1e-4, omega_m: 10.0, gamma_m: 0.5, n_th: 2.0, n_c: 0.0 };
        let m = asymptotic_two_mode(0.0, &p, NoiseToggle::default());
        let v0 = [0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 2.5, 0.0, 0.0, 0.0, 0.0, 2.5];
        let cfg = McConfig { paths: 4000, dt: 1e-3, seed: 7, sample_times: vec![0.0, 0.5], batches: 8 };
        let out = sample_moments(&m, &[0.0; 4], &v0, &cfg).unwrap();
        for mom in &out {
            for k in [0, 5, 10, 15] {
                assert!((mom.cov[k] - v0[k]).abs() < 5.0 * mom.cov_se[k], "t={} k={k}: {}", mom.t, mom.cov[k]);
            }
        }
        let again = sample_moments(&m, &[0.0; 4], &v0, &cfg).unwrap();
        assert_eq!(out[1].cov, again[1].cov);
    }
}
