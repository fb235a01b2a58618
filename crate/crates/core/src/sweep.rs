//! Parameter sweeps over scenario documents.
//!
//! Axes address keys of the base scenario by dotted path (see
//! [`crate::config::set_path`]); every grid point is resolved as a full
//! scenario and reduced to one number by a named [`Statistic`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytic::{max_growth_rate, steady_negativity};
use crate::config::{clear_alternatives, parse_document, read_document, set_path, Format, Scenario};
use crate::error::{Error, Result};
use crate::model::ModelRegistry;
use crate::scenario::{csv_err, run_scenario, simulate, write_atomic, RunOptions, VERSION};
use crate::wide::format_f64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num: Option<usize>,
    #[serde(default)]
    pub log: bool,
}

impl Axis {
    pub fn points(&self) -> Result<Vec<f64>> {
        if let Some(v) = &self.values {
            if self.start.is_some() || self.stop.is_some() || self.num.is_some() {
                return Err(Error::Config(format!("axis `{}`: give values or start/stop/num", self.path)));
            }
            if v.is_empty() {
                return Err(Error::Config(format!("axis `{}` has no values", self.path)));
            }
            return Ok(v.clone());
        }
        let (Some(a), Some(b), Some(n)) = (self.start, self.stop, self.num) else {
            return Err(Error::Config(format!("axis `{}` needs values or start/stop/num", self.path)));
        };
        if n == 0 || (self.log && !(a > 0.0 && b > 0.0)) {
            return Err(Error::Config(format!("axis `{}`: bad range", self.path)));
        }
        let frac = |i: usize| if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        Ok((0..n)
            .map(|i| {
                if self.log {
                    (a.ln() + (b.ln() - a.ln()) * frac(i)).exp()
                } else {
                    a + (b - a) * frac(i)
                }
            })
            .collect())
    }
}

fn default_window() -> f64 {
    crate::measures::DEFAULT_WINDOW_FRACTION
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub name: String,
    pub statistic: String,
    pub base: Value,
    pub axes: Vec<Axis>,
    /// Worker threads; 0 or absent uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Also write each point's trajectory CSV.
    #[serde(default)]
    pub save_trajectories: bool,
    #[serde(default = "default_window")]
    pub window_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl SweepConfig {
    pub fn from_value(v: Value) -> Result<SweepConfig> {
        let s: SweepConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        if s.axes.is_empty() {
            return Err(Error::Config("sweep needs at least one axis".into()));
        }
        for a in &s.axes {
            a.points()?;
        }
        StatisticRegistry::default().get(&s.statistic)?;
        Ok(s)
    }

    pub fn from_str(text: &str, format: Format) -> Result<SweepConfig> {
        SweepConfig::from_value(parse_document(text, format)?)
    }

    pub fn from_path(path: &Path) -> Result<SweepConfig> {
        let v = read_document(path)?;
        match v.get("config") {
            Some(inner) if v.get("status").is_some() => SweepConfig::from_value(inner.clone()),
            _ => SweepConfig::from_value(v),
        }
    }

    pub fn grid(&self) -> Result<Vec<Vec<f64>>> {
        let axes: Vec<Vec<f64>> = self.axes.iter().map(Axis::points).collect::<Result<_>>()?;
        let mut out = vec![vec![]];
        for ax in &axes {
            out = out
                .into_iter()
                .flat_map(|prefix: Vec<f64>| {
                    ax.iter().map(move |&x| {
                        let mut p = prefix.clone();
                        p.push(x);
                        p
                    })
                })
                .collect();
        }
        Ok(out)
    }

    /// Resolved scenario at one grid point.
    pub fn scenario_at(&self, coords: &[f64], index: usize) -> Result<Scenario> {
        let mut v = self.base.clone();
        for (ax, &x) in self.axes.iter().zip(coords) {
            clear_alternatives(&mut v, &ax.path);
            set_path(&mut v, &ax.path, x.into())?;
        }
        set_path(&mut v, "name", format!("{}_{index:05}", self.name).into())?;
        if let Some(obj) = v.as_object_mut() {
            obj.entry("window_fraction").or_insert(self.window_fraction.into());
        }
        Scenario::from_value(v)
    }
}

/// Reduces one scenario to a number.
pub trait Statistic: Send + Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, scn: &Scenario) -> Result<f64>;
}

struct Stabilized {
    peak: bool,
}

impl Statistic for Stabilized {
    fn name(&self) -> &'static str {
        if self.peak {
            "stabilized_peak"
        } else {
            "stabilized_mean"
        }
    }
    fn evaluate(&self, scn: &Scenario) -> Result<f64> {
        let traj = simulate(scn).map_err(|f| f.error)?;
        let st = traj.stats(scn.window_fraction)?;
        let x = if self.peak { st.stabilized_peak } else { st.stabilized_mean };
        if x.is_nan() {
            return Err(Error::NonPhysical("window contains samples below the precision margin".into()));
        }
        Ok(x)
    }
}

struct SteadyFormula;

impl Statistic for SteadyFormula {
    fn name(&self) -> &'static str {
        "analytic"
    }
    fn evaluate(&self, scn: &Scenario) -> Result<f64> {
        let p = &scn.params;
        let j = scn.drives[0].coupling(p);
        Ok(steady_negativity(j, p.gamma_m * p.n_th, p.kappa)?.e_n)
    }
}

struct GrowthRate;

impl Statistic for GrowthRate {
    fn name(&self) -> &'static str {
        "max_growth_rate"
    }
    fn evaluate(&self, scn: &Scenario) -> Result<f64> {
        let model = ModelRegistry::default().build(&scn.model, &scn.model_spec())?;
        max_growth_rate(model.as_ref(), 0.0)
    }
}

pub struct StatisticRegistry {
    stats: BTreeMap<&'static str, Arc<dyn Statistic>>,
}

impl Default for StatisticRegistry {
    fn default() -> Self {
        let mut reg = StatisticRegistry { stats: BTreeMap::new() };
        reg.register(Arc::new(Stabilized { peak: true }));
        reg.register(Arc::new(Stabilized { peak: false }));
        reg.register(Arc::new(SteadyFormula));
        reg.register(Arc::new(GrowthRate));
        reg
    }
}

impl StatisticRegistry {
    pub fn register(&mut self, s: Arc<dyn Statistic>) {
        self.stats.insert(s.name(), s);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Statistic>> {
        self.stats.get(name).cloned().ok_or_else(|| Error::Unknown {
            kind: "statistic",
            name: name.into(),
            available: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.stats.keys().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub index: usize,
    pub coords: Vec<f64>,
    /// NaN when the point failed.
    pub value: f64,
    pub reason: Option<String>,
}

#[derive(Debug)]
pub struct SweepReport {
    pub csv: PathBuf,
    pub heatmap: Option<PathBuf>,
    pub sidecar: PathBuf,
    pub points: Vec<PointResult>,
}

impl SweepReport {
    pub fn failed(&self) -> usize {
        self.points.iter().filter(|p| p.reason.is_some()).count()
    }
}

fn point(cfg: &SweepConfig, stat: &dyn Statistic, index: usize, coords: &[f64], dir: &Path, opts: &RunOptions) -> Result<PointResult> {
    let outcome = cfg.scenario_at(coords, index).and_then(|scn| {
        let scn = opts.apply(&scn);
        if cfg.save_trajectories {
            run_scenario(&scn, &dir.join("trajectories"), opts)?;
        }
        stat.evaluate(&scn)
    });
    let (value, reason) = match outcome {
        Ok(x) => (x, None),
        Err(e) => {
            log::warn!("{} point {index} {coords:?}: {e}", cfg.name);
            (f64::NAN, Some(e.to_string()))
        }
    };
    let r = PointResult { index, coords: coords.to_vec(), value, reason };
    let file = dir.join(format!("{}.points", cfg.name)).join(format!("{index:05}.json"));
    write_atomic(&file, serde_json::to_string(&r).expect("json").as_bytes())?;
    Ok(r)
}

fn sweep_csv(cfg: &SweepConfig, points: &[PointResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = cfg.axes.iter().map(|a| a.path.clone()).collect();
    header.push(cfg.statistic.clone());
    header.push("reason".into());
    w.write_record(&header).map_err(csv_err)?;
    for p in points {
        let mut row: Vec<String> = p.coords.iter().map(|&x| format_f64(x)).collect();
        row.push(format_f64(p.value));
        row.push(p.reason.clone().unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn heatmap_csv(cfg: &SweepConfig, points: &[PointResult]) -> Result<Vec<u8>> {
    let rows = cfg.axes[0].points()?;
    let cols = cfg.axes[1].points()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![format!("{}\\{}", cfg.axes[0].path, cfg.axes[1].path)];
    header.extend(cols.iter().map(|&x| format_f64(x)));
    w.write_record(&header).map_err(csv_err)?;
    for (i, &r) in rows.iter().enumerate() {
        let mut row = vec![format_f64(r)];
        row.extend((0..cols.len()).map(|j| format_f64(points[i * cols.len() + j].value)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Evaluate every grid point in parallel and write `<name>.csv`,
/// `<name>.heatmap.csv` (two axes only) and `<name>.json` into `out_dir`.
pub fn run_sweep(cfg: &SweepConfig, out_dir: &Path, opts: &RunOptions) -> Result<SweepReport> {
    let stat = StatisticRegistry::default().get(&cfg.statistic)?;
    let grid = cfg.grid()?;
    // Surface config errors before spawning work.
    cfg.scenario_at(&grid[0], 0)?;
    std::fs::create_dir_all(out_dir)?;
    let work = || -> Result<Vec<PointResult>> {
        grid.par_iter()
            .enumerate()
            .map(|(i, c)| point(cfg, stat.as_ref(), i, c, out_dir, opts))
            .collect()
    };
    let points = match cfg.threads.filter(|&n| n > 0) {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let csv = out_dir.join(format!("{}.csv", cfg.name));
    write_atomic(&csv, &sweep_csv(cfg, &points)?)?;
    let heatmap = if cfg.axes.len() == 2 {
        let p = out_dir.join(format!("{}.heatmap.csv", cfg.name));
        write_atomic(&p, &heatmap_csv(cfg, &points)?)?;
        Some(p)
    } else {
        None
    };
    let failed = points.iter().filter(|p| p.reason.is_some()).count();
    let sidecar = out_dir.join(format!("{}.json", cfg.name));
    let doc = json!({
        "config": cfg,
        "version": VERSION,
        "status": if failed == 0 { "ok" } else { "partial" },
        "points": points.len(),
        "failed_points": failed,
        "precision_override": opts.precision,
    });
    write_atomic(&sidecar, serde_json::to_string_pretty(&doc).expect("json").as_bytes())?;
    let _ = std::fs::remove_dir_all(out_dir.join(format!("{}.points", cfg.name)));
    Ok(SweepReport { csv, heatmap, sidecar, points })
}
