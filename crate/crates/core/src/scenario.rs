//! Running a scenario and writing its CSV and JSON sidecar.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Scenario;
use crate::error::{Error, Result};
use crate::integrate::{integrate, Failure, Outcome, Sample, Trajectory};
use crate::measures::TrajectoryStats;
use crate::model::ModelRegistry;
use crate::params::{validity_report, Level};
use crate::precision::PrecisionPolicy;
use crate::state::initial_state;
use crate::wide::{format_f64, Wide};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides the scenario's precision policy.
    pub precision: Option<PrecisionPolicy>,
}

impl RunOptions {
    pub fn apply(&self, scn: &Scenario) -> Scenario {
        let mut s = scn.clone();
        if let Some(p) = self.precision {
            s.integrator.precision = p;
        }
        s
    }
}

/// Integrate a scenario without writing anything.
pub fn simulate(scn: &Scenario) -> Outcome {
    let build = || -> Result<_> {
        let model = ModelRegistry::default().build(&scn.model, &scn.model_spec())?;
        let (mean, cov) = initial_state(&scn.params, model.n_modes())?;
        Ok((model, mean, cov))
    };
    let (model, mean, cov) = match build() {
        Ok(x) => x,
        Err(error) => {
            let partial = Trajectory::empty(&scn.model, 0, None, &scn.integrator);
            return Err(Box::new(Failure { error, partial }));
        }
    };
    integrate(model.as_ref(), &mean, &cov, scn.t_end, &scn.integrator)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Column {
    En,
    EtaMinus,
    NegRaw,
    Purity,
    Np(usize),
    Nm,
    V(usize, usize),
    Nu(usize),
    Mean(usize),
    Bits,
    Margin,
}

pub const OUTPUT_NAMES: &[&str] = &[
    "E_N", "eta_minus", "negativity_raw", "purity", "n_p", "n_p<k>", "n_m", "V", "V<i><j>", "nu", "mean", "bits", "margin_bits",
];

fn parse_columns(outputs: &[String], n_modes: usize) -> Result<Vec<(String, Column)>> {
    let dim = 2 * n_modes;
    let n_cav = n_modes - 1;
    let mut cols = Vec::new();
    let unknown = |name: &str| Error::Unknown {
        kind: "output",
        name: name.to_string(),
        available: OUTPUT_NAMES.join(", "),
    };
    for name in outputs {
        match name.as_str() {
            "E_N" => cols.push((name.clone(), Column::En)),
            "eta_minus" => cols.push((name.clone(), Column::EtaMinus)),
            "negativity_raw" => cols.push((name.clone(), Column::NegRaw)),
            "purity" => cols.push((name.clone(), Column::Purity)),
            "n_m" => cols.push((name.clone(), Column::Nm)),
            "bits" => cols.push((name.clone(), Column::Bits)),
            "margin_bits" => cols.push((name.clone(), Column::Margin)),
            "n_p" if n_cav == 1 => cols.push(("n_p".into(), Column::Np(0))),
            "n_p" => (0..n_cav).for_each(|k| cols.push((format!("n_p{}", k + 1), Column::Np(k)))),
            "V" => {
                for i in 0..dim {
                    for j in i..dim {
                        cols.push((format!("V{}{}", i + 1, j + 1), Column::V(i, j)));
                    }
                }
            }
            "nu" => (0..n_modes).for_each(|k| cols.push((format!("nu{}", k + 1), Column::Nu(k)))),
            "mean" => {
                for k in 0..n_modes {
                    cols.push((format!("re_mean{}", k + 1), Column::Mean(2 * k)));
                    cols.push((format!("im_mean{}", k + 1), Column::Mean(2 * k + 1)));
                }
            }
            other => {
                let digits = |s: &str| s.chars().map(|c| c.to_digit(10).map(|d| d as usize)).collect::<Option<Vec<_>>>();
                if let Some(rest) = other.strip_prefix("n_p") {
                    match rest.parse::<usize>() {
                        Ok(k) if (1..=n_cav).contains(&k) => cols.push((name.clone(), Column::Np(k - 1))),
                        _ => return Err(unknown(other)),
                    }
                } else if let Some(d) = other.strip_prefix('V').and_then(digits) {
                    match d[..] {
                        [i, j] if (1..=dim).contains(&i) && (1..=dim).contains(&j) => {
                            cols.push((name.clone(), Column::V(i - 1, j - 1)))
                        }
                        _ => return Err(unknown(other)),
                    }
                } else {
                    return Err(unknown(other));
                }
            }
        }
    }
    Ok(cols)
}

fn opt(x: Option<f64>) -> String {
    format_f64(x.unwrap_or(f64::NAN))
}

fn cell(s: &Sample, c: Column) -> String {
    let m = &s.measures;
    match c {
        Column::En => opt(m.e_n),
        Column::EtaMinus => opt(m.eta_minus),
        Column::NegRaw => opt(m.negativity_raw),
        Column::Purity => m.purity.to_string(),
        Column::Np(k) => m.n_p.get(k).map(Wide::to_string).unwrap_or_else(|| "NaN".into()),
        Column::Nm => m.n_m.to_string(),
        Column::V(i, j) => s.cov.element(i, j).to_string(),
        Column::Nu(k) => m.spectrum.get(k).map(Wide::to_string).unwrap_or_else(|| "NaN".into()),
        Column::Mean(q) => {
            let (re, im) = s.means[q / 2];
            if q % 2 == 0 { re } else { im }.to_string()
        }
        Column::Bits => s.bits.to_string(),
        Column::Margin => format_f64(s.margin_bits),
    }
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn trajectory_csv(traj: &Trajectory, outputs: &[String]) -> Result<Vec<u8>> {
    let cols = parse_columns(outputs, traj.n_modes)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(cols.iter().map(|(n, _)| n.clone()));
    w.write_record(&header).map_err(csv_err)?;
    for s in &traj.samples {
        let mut row = vec![format_f64(s.t)];
        row.extend(cols.iter().map(|&(_, c)| cell(s, c)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[derive(Clone, Debug, Serialize)]
pub struct PrecisionSummary {
    pub policy: PrecisionPolicy,
    pub scheme: String,
    pub method: String,
    pub initial_bits: u32,
    pub max_bits: u32,
    pub min_margin_bits: f64,
    pub healthy_until: f64,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
}

impl PrecisionSummary {
    fn of(t: &Trajectory) -> Self {
        let m = &t.meta;
        PrecisionSummary {
            policy: m.policy,
            scheme: m.scheme.clone(),
            method: m.method.clone(),
            initial_bits: m.initial_bits,
            max_bits: m.max_bits,
            min_margin_bits: m.min_margin_bits,
            healthy_until: m.healthy_until,
            accepted_steps: m.steps.accepted,
            rejected_steps: m.steps.rejected,
        }
    }
}

#[derive(Debug)]
pub struct ScenarioReport {
    pub csv: PathBuf,
    pub sidecar: PathBuf,
    pub trajectory: Trajectory,
    pub stats: Option<TrajectoryStats>,
    pub error: Option<Error>,
}

fn sidecar(scn: &Scenario, traj: &Trajectory, stats: &Option<TrajectoryStats>, error: Option<&Error>) -> Value {
    json!({
        "config": scn.to_value(),
        "version": VERSION,
        "status": if error.is_some() { "failed" } else { "ok" },
        "error": error.map(|e| e.to_string()),
        "precision": PrecisionSummary::of(traj),
        "samples": traj.samples.len(),
        "wall_seconds": traj.meta.wall_seconds,
        "stats": stats,
        "validity": validity_report(&scn.params),
    })
}

/// Integrate and write `<name>.csv` and `<name>.json` into `out_dir`.
///
/// Outputs are written even when the run fails part-way; the report then
/// carries the error and the trajectory up to the failure.
pub fn run_scenario(scn: &Scenario, out_dir: &Path, opts: &RunOptions) -> Result<ScenarioReport> {
    let scn = opts.apply(scn);
    scn.validate()?;
    parse_columns(&scn.outputs, ModelRegistry::default().build(&scn.model, &scn.model_spec())?.n_modes())?;
    let (traj, error) = match simulate(&scn) {
        Ok(t) => (t, None),
        Err(f) if f.error.is_config() => return Err(f.error),
        Err(f) => (f.partial, Some(f.error)),
    };
    for item in validity_report(&scn.params).iter().filter(|i| i.level == Level::Warn) {
        log::warn!("{}: {} = {:.3e}, {}", scn.name, item.name, item.value, item.note);
    }
    if let Some(e) = &error {
        log::warn!("{}: stopped early: {e}", scn.name);
    }
    let stats = if traj.n_modes == 2 { traj.stats(scn.window_fraction).ok() } else { None };
    let csv = out_dir.join(format!("{}.csv", scn.name));
    let side = out_dir.join(format!("{}.json", scn.name));
    write_atomic(&csv, &trajectory_csv(&traj, &scn.outputs)?)?;
    let doc = sidecar(&scn, &traj, &stats, error.as_ref());
    write_atomic(&side, serde_json::to_string_pretty(&doc).expect("json").as_bytes())?;
    Ok(ScenarioReport { csv, sidecar: side, trajectory: traj, stats, error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Format;

    fn small() -> Scenario {
        Scenario::from_str(
            r#"
name = "small"
model = "asymptotic-two-mode"
t_end = 2.0
outputs = ["E_N", "purity", "n_p", "n_m", "V13", "nu", "bits"]
[params]
g_m = 1e-4
omega_m = 10.0
gamma_m = 1e-3
n_th = 10.0
[[drives]]
coupling = 0.5
[integrator]
sample_dt = 0.5
max_step = 0.05
"#,
            Format::Toml,
        )
        .unwrap()
    }

    #[test]
    fn writes_csv_and_reloadable_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let rep = run_scenario(&small(), dir.path(), &RunOptions::default()).unwrap();
        assert!(rep.error.is_none());
        let text = std::fs::read_to_string(&rep.csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,E_N,purity,n_p,n_m,V13,nu1,nu2,bits");
        assert_eq!(lines.count(), 5);
        let again = Scenario::from_path(&rep.sidecar).unwrap();
        assert_eq!(again, small());
    }

    #[test]
    fn bad_output_name_is_config_error() {
        let mut s = small();
        s.outputs.push("V17".into());
        let dir = tempfile::tempdir().unwrap();
        assert!(run_scenario(&s, dir.path(), &RunOptions::default()).unwrap_err().is_config());
    }
}
