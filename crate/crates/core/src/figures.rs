//! Canonical figure bundles shipped with the crate.
//!
//! A bundle holds scenarios and sweeps; scenario entries are deep-merged
//! over the bundle's `defaults` table.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_document, Format, Scenario};
use crate::error::{Error, Result};
use crate::scenario::{run_scenario, write_atomic, RunOptions, ScenarioReport, VERSION};
use crate::sweep::{run_sweep, SweepConfig, SweepReport};

const BUNDLES: &[(&str, &str)] = &[
    ("fig2", include_str!("../figures/fig2.toml")),
    ("fig3", include_str!("../figures/fig3.toml")),
    ("fig4", include_str!("../figures/fig4.toml")),
    ("fig5", include_str!("../figures/fig5.toml")),
    ("fig6", include_str!("../figures/fig6.toml")),
    ("fig7", include_str!("../figures/fig7.toml")),
    ("fig8a", include_str!("../figures/fig8a.toml")),
    ("fig8b", include_str!("../figures/fig8b.toml")),
    ("fig9", include_str!("../figures/fig9.toml")),
    ("figs1", include_str!("../figures/figs1.toml")),
    ("figs2", include_str!("../figures/figs2.toml")),
    ("section5", include_str!("../figures/section5.toml")),
];

pub fn ids() -> Vec<&'static str> {
    BUNDLES.iter().map(|(id, _)| *id).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct FigureBundle {
    pub id: String,
    pub title: String,
    /// Why unprinted values were chosen as they are.
    pub open: Option<String>,
    pub scenarios: Vec<Scenario>,
    pub sweeps: Vec<SweepConfig>,
}

/// `over` wins; tables merge recursively.
pub fn merge(base: &Value, over: &Value) -> Value {
    match (base, over) {
        (Value::Object(a), Value::Object(b)) => {
            let mut out = a.clone();
            for (k, v) in b {
                let merged = match a.get(k) {
                    Some(old) => merge(old, v),
                    None => v.clone(),
                };
                out.insert(k.clone(), merged);
            }
            Value::Object(out)
        }
        _ => over.clone(),
    }
}

impl FigureBundle {
    pub fn from_value(v: &Value) -> Result<FigureBundle> {
        let s = |k: &str| v.get(k).and_then(Value::as_str).map(str::to_string);
        let id = s("id").ok_or_else(|| Error::Config("bundle needs an id".into()))?;
        let defaults = v.get("defaults").cloned().unwrap_or(json!({}));
        let list = |k: &str| v.get(k).and_then(Value::as_array).cloned().unwrap_or_default();
        let scenarios = list("scenarios")
            .iter()
            .map(|sc| Scenario::from_value(merge(&defaults, sc)))
            .collect::<Result<_>>()?;
        let sweeps = list("sweeps")
            .into_iter()
            .map(|mut sw| {
                if let Some(base) = sw.get("base") {
                    let merged = merge(&defaults, base);
                    sw["base"] = merged;
                }
                SweepConfig::from_value(sw)
            })
            .collect::<Result<_>>()?;
        Ok(FigureBundle { id, title: s("title").unwrap_or_default(), open: s("open"), scenarios, sweeps })
    }

    pub fn load(id: &str) -> Result<FigureBundle> {
        let text = BUNDLES
            .iter()
            .find(|(k, _)| *k == id)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::Unknown { kind: "figure", name: id.into(), available: ids().join(", ") })?;
        FigureBundle::from_value(&parse_document(text, Format::Toml)?)
    }
}

#[derive(Debug)]
pub struct FigureReport {
    pub dir: PathBuf,
    pub scenarios: Vec<ScenarioReport>,
    pub sweeps: Vec<SweepReport>,
}

impl FigureReport {
    /// Scenario runs that stopped early plus failed sweep points.
    pub fn failures(&self) -> usize {
        self.scenarios.iter().filter(|r| r.error.is_some()).count() + self.sweeps.iter().map(SweepReport::failed).sum::<usize>()
    }
}

/// Run every member of bundle `id` into `out_dir/<id>/`.
pub fn run_figure(id: &str, out_dir: &Path, opts: &RunOptions) -> Result<FigureReport> {
    let bundle = FigureBundle::load(id)?;
    let dir = out_dir.join(&bundle.id);
    std::fs::create_dir_all(&dir)?;
    let scenarios = bundle
        .scenarios
        .iter()
        .map(|s| run_scenario(s, &dir, opts))
        .collect::<Result<Vec<_>>>()?;
    let sweeps = bundle.sweeps.iter().map(|s| run_sweep(s, &dir, opts)).collect::<Result<Vec<_>>>()?;
    let index = json!({
        "id": bundle.id,
        "title": bundle.title,
        "open": bundle.open,
        "version": VERSION,
        "scenarios": scenarios.iter().map(|r| json!({
            "csv": r.csv.file_name().map(|f| f.to_string_lossy().into_owned()),
            "status": if r.error.is_some() { "failed" } else { "ok" },
        })).collect::<Vec<_>>(),
        "sweeps": sweeps.iter().map(|r| json!({
            "csv": r.csv.file_name().map(|f| f.to_string_lossy().into_owned()),
            "failed_points": r.failed(),
        })).collect::<Vec<_>>(),
    });
    write_atomic(&dir.join("figure.json"), serde_json::to_string_pretty(&index).expect("json").as_bytes())?;
    Ok(FigureReport { dir, scenarios, sweeps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundle_loads() {
        for id in ids() {
            let b = FigureBundle::load(id).unwrap_or_else(|e| panic!("{id}: {e}"));
            assert!(!b.scenarios.is_empty() || !b.sweeps.is_empty(), "{id}");
        }
        assert!(FigureBundle::load("fig99").is_err());
    }

    #[test]
    fn defaults_merge_into_scenarios() {
        let b = FigureBundle::load("fig3").unwrap();
        assert_eq!(b.scenarios.len(), 2);
        assert!(b.scenarios[1].params.n_th > 3.0 * b.scenarios[0].params.n_th);
        assert_eq!(b.scenarios[0].params.omega_m, 10.0);
        let f7 = FigureBundle::load("fig7").unwrap();
        assert_eq!(f7.scenarios.len(), 12);
        assert_eq!(f7.scenarios[11].drives[0].amplitude, 2.4e6);
    }
}
