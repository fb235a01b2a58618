//! Scenario documents: loading, unit resolution and validation.
//!
//! Documents are TOML or JSON. Convenience keys are resolved into the
//! canonical parameter set before validation:
//!
//! | key | becomes |
//! |-----|---------|
//! | `params.quality_factor` | `gamma_m = omega_m / Q` |
//! | `params.temperature_k` + `params.mechanical_frequency_hz` | `n_th` (Bose-Einstein) |
//! | `params.gamma_n` | `n_th = gamma_n / gamma_m` |
//! | `drives[i].coupling` | `amplitude = coupling * omega_m / g_m` |
//! | `drives[i].detuning_over_omega_m` | `detuning` |
//!
//! A drive without a detuning sits on the blue sideband.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analytic::thermal_occupation;
use crate::error::{Error, Result};
use crate::integrate::IntegratorConfig;
use crate::model::{ModelRegistry, ModelSpec};
use crate::params::{DriveSpec, NoiseToggle, SystemParams};

fn default_outputs() -> Vec<String> {
    ["E_N", "purity", "n_p", "n_m"].iter().map(|s| s.to_string()).collect()
}

fn default_window() -> f64 {
    crate::measures::DEFAULT_WINDOW_FRACTION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub model: String,
    pub params: SystemParams,
    pub drives: Vec<DriveSpec>,
    #[serde(default)]
    pub noise: NoiseToggle,
    pub t_end: f64,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<String>,
    /// Trailing fraction of the run used for late-time statistics.
    #[serde(default = "default_window")]
    pub window_fraction: f64,
    /// Free-form note, e.g. why an unprinted value was chosen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Scenario {
    pub fn from_value(mut v: Value) -> Result<Scenario> {
        resolve(&mut v)?;
        let s: Scenario = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_str(text: &str, format: Format) -> Result<Scenario> {
        Scenario::from_value(parse_document(text, format)?)
    }

    /// Scenario file, or the sidecar written next to a previous run.
    pub fn from_path(path: &Path) -> Result<Scenario> {
        let v = read_document(path)?;
        match v.get("config") {
            Some(inner) if v.get("status").is_some() => Scenario::from_value(inner.clone()),
            _ => Scenario::from_value(v),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("scenario name `{}` is not a plain file stem", self.name)));
        }
        self.params.validate()?;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return Err(Error::Config(format!("window_fraction {} not in (0, 1]", self.window_fraction)));
        }
        for d in &self.drives {
            if !(d.amplitude >= 0.0 && d.amplitude.is_finite() && d.detuning.is_finite()) {
                return Err(Error::Config(format!("bad drive {d:?}")));
            }
        }
        self.integrator.validate()?;
        let reg = ModelRegistry::default();
        let factory = reg.get(&self.model)?;
        if factory.n_drives() != self.drives.len() {
            return Err(Error::Config(format!(
                "model `{}` takes {} drive(s), got {}",
                self.model,
                factory.n_drives(),
                self.drives.len()
            )));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec { params: self.params.clone(), drives: self.drives.clone(), noise: self.noise }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("scenario serialises")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

pub fn parse_document(text: &str, format: Format) -> Result<Value> {
    match format {
        Format::Json => serde_json::from_str(text).map_err(|e| Error::Config(e.to_string())),
        Format::Toml => {
            let t: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
            serde_json::to_value(t).map_err(|e| Error::Config(e.to_string()))
        }
    }
}

pub fn read_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_document(&text, Format::from_path(path))
}

fn num(map: &Map<String, Value>, key: &str) -> Result<Option<f64>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::Config(format!("`{key}` must be a number, got {v}"))),
    }
}

fn exclusive(map: &Map<String, Value>, a: &str, b: &str) -> Result<()> {
    if map.contains_key(a) && map.contains_key(b) {
        return Err(Error::Config(format!("give either `{a}` or `{b}`, not both")));
    }
    Ok(())
}

/// Rewrite convenience keys into canonical ones, in place.
pub fn resolve(v: &mut Value) -> Result<()> {
    let root = v.as_object_mut().ok_or_else(|| Error::Config("document must be a table".into()))?;
    let params = root
        .get_mut("params")
        .and_then(Value::as_object_mut)
        .ok_or_else(|| Error::Config("missing [params] table".into()))?;

    let omega = num(params, "omega_m")?.ok_or_else(|| Error::Config("params.omega_m is required".into()))?;
    exclusive(params, "gamma_m", "quality_factor")?;
    if let Some(q) = num(params, "quality_factor")? {
        params.remove("quality_factor");
        params.insert("gamma_m".into(), (omega / q).into());
    }
    let gamma = num(params, "gamma_m")?;
    let has_temp = params.contains_key("temperature_k") || params.contains_key("mechanical_frequency_hz");
    let n_ways = [params.contains_key("n_th"), has_temp, params.contains_key("gamma_n")]
        .iter()
        .filter(|&&b| b)
        .count();
    if n_ways > 1 {
        return Err(Error::Config("give one of `n_th`, `temperature_k`/`mechanical_frequency_hz`, `gamma_n`".into()));
    }
    if has_temp {
        let t = num(params, "temperature_k")?.ok_or_else(|| Error::Config("temperature_k needs mechanical_frequency_hz".into()))?;
        let f = num(params, "mechanical_frequency_hz")?
            .ok_or_else(|| Error::Config("mechanical_frequency_hz needs temperature_k".into()))?;
        params.remove("temperature_k");
        params.remove("mechanical_frequency_hz");
        let n = thermal_occupation(t, 2.0 * PI * f).map_err(|e| Error::Config(e.to_string()))?;
        params.insert("n_th".into(), n.into());
    }
    if let Some(gn) = num(params, "gamma_n")? {
        let g = gamma.ok_or_else(|| Error::Config("gamma_n needs gamma_m or quality_factor".into()))?;
        params.remove("gamma_n");
        params.insert("n_th".into(), (gn / g).into());
    }
    let g_m = num(params, "g_m")?;

    if let Some(drives) = root.get_mut("drives").and_then(Value::as_array_mut) {
        for d in drives {
            let d = d.as_object_mut().ok_or_else(|| Error::Config("each drive must be a table".into()))?;
            exclusive(d, "amplitude", "coupling")?;
            exclusive(d, "detuning", "detuning_over_omega_m")?;
            if let Some(j) = num(d, "coupling")? {
                let g = g_m.filter(|&g| g > 0.0).ok_or_else(|| Error::Config("drive coupling needs g_m > 0".into()))?;
                d.remove("coupling");
                d.insert("amplitude".into(), (j * omega / g).into());
            }
            if let Some(r) = num(d, "detuning_over_omega_m")? {
                d.remove("detuning_over_omega_m");
                d.insert("detuning".into(), (r * omega).into());
            }
            if !d.contains_key("detuning") {
                d.insert("detuning".into(), (-omega).into());
            }
        }
    }
    Ok(())
}

/// Set the value at a dotted path such as `params.n_th` or `drives.1.amplitude`.
pub fn set_path(v: &mut Value, path: &str, x: Value) -> Result<()> {
    let mut cur = v;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), x);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()))
            }
            Value::Array(items) => {
                let k: usize = part.parse().map_err(|_| Error::Config(format!("`{part}` in `{path}` is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(k)
                    .ok_or_else(|| Error::Config(format!("index {k} in `{path}` out of range ({len})")))?;
                if last {
                    *slot = x;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("`{path}` does not lead into a table"))),
        };
    }
    Err(Error::Config("empty path".into()))
}

/// Remove keys that would conflict with a value set at `path`.
pub fn clear_alternatives(v: &mut Value, path: &str) {
    let groups: &[&[&str]] = &[
        &["gamma_m", "quality_factor"],
        &["n_th", "temperature_k", "gamma_n"],
        &["amplitude", "coupling"],
        &["detuning", "detuning_over_omega_m"],
    ];
    let (parent, key) = match path.rsplit_once('.') {
        Some((p, k)) => (Some(p), k),
        None => (None, path),
    };
    let Some(group) = groups.iter().find(|g| g.contains(&key)) else {
        return;
    };
    let mut cur = Some(v);
    if let Some(p) = parent {
        for part in p.split('.') {
            cur = cur.and_then(|c| match c {
                Value::Object(m) => m.get_mut(part),
                Value::Array(a) => part.parse::<usize>().ok().and_then(|k| a.get_mut(k)),
                _ => None,
            });
        }
    }
    if let Some(Value::Object(m)) = cur {
        for other in group.iter().filter(|o| **o != key) {
            m.remove(*other);
            if *other == "temperature_k" && key != "temperature_k" {
                m.remove("mechanical_frequency_hz");
            }
        }
    }
}
