//! Physical parameters in units of the cavity damping rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn one() -> f64 {
    1.0
}

/// Rates are measured in units of `kappa`, which is fixed to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    #[serde(default = "one")]
    pub kappa: f64,
    pub g_m: f64,
    pub omega_m: f64,
    pub gamma_m: f64,
    pub n_th: f64,
    #[serde(default)]
    pub n_c: f64,
}

impl SystemParams {
    /// Mechanical quality factor `omega_m / gamma_m`.
    pub fn quality_factor(&self) -> f64 {
        self.omega_m / self.gamma_m
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa != 1.0 {
            return Err(Error::Config(format!("kappa must be 1 (got {})", self.kappa)));
        }
        let checks = [
            (self.omega_m > 0.0, "omega_m must be positive"),
            (self.gamma_m > 0.0, "gamma_m must be positive"),
            (self.n_th >= 0.0, "n_th must be non-negative"),
            (self.n_c >= 0.0, "n_c must be non-negative"),
            (self.g_m >= 0.0, "g_m must be non-negative"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSpec {
    pub amplitude: f64,
    pub detuning: f64,
}

impl DriveSpec {
    /// Drive on the blue mechanical sideband, `detuning = -omega_m`.
    pub fn blue(amplitude: f64, params: &SystemParams) -> Self {
        DriveSpec { amplitude, detuning: -params.omega_m }
    }

    pub fn red(amplitude: f64, params: &SystemParams) -> Self {
        DriveSpec { amplitude, detuning: params.omega_m }
    }

    /// Effective squeezing rate `g_m E / omega_m`.
    pub fn coupling(&self, params: &SystemParams) -> f64 {
        params.g_m * self.amplitude / params.omega_m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseToggle {
    #[serde(default = "yes")]
    pub cavity: bool,
    #[serde(default = "yes")]
    pub mechanical: bool,
}

fn yes() -> bool {
    true
}

impl Default for NoiseToggle {
    fn default() -> Self {
        NoiseToggle { cavity: true, mechanical: true }
    }
}

impl NoiseToggle {
    pub fn both_on(&self) -> bool {
        self.cavity && self.mechanical
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Pass,
    Warn,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidityItem {
    pub name: &'static str,
    pub value: f64,
    pub level: Level,
    pub note: String,
}

/// Ratios that govern the approximations behind the linearised dynamics.
pub fn validity_report(params: &SystemParams) -> Vec<ValidityItem> {
    let item = |name, value: f64, warn: bool, note: &str| ValidityItem {
        name,
        value,
        level: if warn { Level::Warn } else { Level::Pass },
        note: note.to_string(),
    };
    let g_over_w = params.g_m / params.omega_m;
    let gamma = params.gamma_m / params.kappa;
    let q_over_n = if params.n_th > 0.0 {
        params.quality_factor() / params.n_th
    } else {
        f64::INFINITY
    };
    vec![
        item(
            "g_m/omega_m",
            g_over_w,
            g_over_w > 0.01,
            if g_over_w > 0.01 {
                "weak-coupling approximation invalid"
            } else {
                "weak coupling"
            },
        ),
        item(
            "omega_m/kappa",
            params.omega_m / params.kappa,
            params.omega_m < params.kappa,
            "sideband resolution",
        ),
        item(
            "gamma_m/kappa",
            gamma,
            gamma > 1e-2,
            "mechanical damping relative to the cavity",
        ),
        item(
            "Q/n_th",
            q_over_n,
            q_over_n < 1.0,
            "quality factor per thermal phonon",
        ),
    ]
}
