use std::path::Path;

use optomech::analytic::boundary_closed_form;
use optomech::config::{Format, Scenario};
use optomech::figures::FigureBundle;
use optomech::scenario::{run_scenario, RunOptions};
use optomech::sweep::{run_sweep, SweepConfig};
use optomech::Error;

const BASE: &str = r#"
name = "base"
model = "full-two-mode"
t_end = 2.0
outputs = ["E_N", "purity", "n_p", "n_m", "V", "nu", "mean"]
[params]
g_m = 1e-4
omega_m = 10.0
quality_factor = 1e6
n_th = 100.0
[[drives]]
amplitude = 1e5
detuning_over_omega_m = -1.0
[integrator]
sample_dt = 0.1
"#;

fn scenario(text: &str) -> Scenario {
    Scenario::from_str(text, Format::Toml).unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn undriven_ground_state_stays_put() {
    let text = BASE.replace("n_th = 100.0", "n_th = 0.0").replace("amplitude = 1e5", "amplitude = 0.0");
    let dir = tempfile::tempdir().unwrap();
    let rep = run_scenario(&scenario(&text), dir.path(), &RunOptions::default()).unwrap();
    let csv = read(&rep.csv);
    let mut lines = csv.lines();
    let header: Vec<_> = lines.next().unwrap().split(',').collect();
    for line in lines {
        for (name, cell) in header.iter().zip(line.split(',')).skip(1) {
            let x: f64 = cell.parse().unwrap();
            let want = match *name {
                "purity" => 1.0,
                "V11" | "V22" | "V33" | "V44" | "nu1" | "nu2" => 0.5,
                _ => 0.0,
            };
            assert!((x - want).abs() < 1e-9, "{name} = {x}");
        }
    }
}

#[test]
fn reruns_and_sidecar_reloads_are_byte_identical() {
    let scn = scenario(BASE);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let first = run_scenario(&scn, a.path(), &RunOptions::default()).unwrap();
    let second = run_scenario(&scn, b.path(), &RunOptions::default()).unwrap();
    assert_eq!(read(&first.csv), read(&second.csv));
    let again = Scenario::from_path(&first.sidecar).unwrap();
    let third = run_scenario(&again, c.path(), &RunOptions::default()).unwrap();
    assert_eq!(read(&first.csv), read(&third.csv));
    let side: serde_json::Value = serde_json::from_str(&read(&first.sidecar)).unwrap();
    assert_eq!(side["status"], "ok");
    assert!(side["version"].is_string());
    assert!(side["precision"]["initial_bits"].as_u64().unwrap() >= 53);
}

#[test]
fn convenience_keys_resolve() {
    let scn = scenario(&BASE.replace("n_th = 100.0", "temperature_k = 300.0\nmechanical_frequency_hz = 1e8"));
    assert!((6.0e4..6.5e4).contains(&scn.params.n_th));
    assert!((scn.params.gamma_m - 1e-5).abs() < 1e-18);
    assert_eq!(scn.drives[0].detuning, -10.0);
    let clash = BASE.replace("quality_factor = 1e6", "quality_factor = 1e6\ngamma_m = 1e-5");
    assert!(Scenario::from_str(&clash, Format::Toml).unwrap_err().is_config());
}

#[test]
fn config_errors_name_the_problem() {
    let typo = BASE.replace("t_end", "t_ned");
    let msg = Scenario::from_str(&typo, Format::Toml).unwrap_err().to_string();
    assert!(msg.contains("t_ned"), "{msg}");
    let broken = BASE.replace("sample_dt = 0.1", "sample_dt = ");
    let msg = Scenario::from_str(&broken, Format::Toml).unwrap_err().to_string();
    assert!(msg.contains("line"), "{msg}");
    let bad_model = BASE.replace("full-two-mode", "four-mode");
    assert!(matches!(Scenario::from_str(&bad_model, Format::Toml), Err(Error::Unknown { .. })));
}

const SWEEP: &str = r#"
name = "iso"
statistic = "stabilized_peak"
[base]
name = "p"
model = "asymptotic-two-mode"
t_end = 20.0
[base.params]
g_m = 1e-4
omega_m = 10.0
gamma_m = 1e-4
n_th = 1.0
[[base.drives]]
coupling = 1.0
[base.integrator]
max_step = 0.05
sample_dt = 0.05
[[axes]]
path = "params.n_th"
values = [1000.0, -5.0, 2000.0]
"#;

#[test]
fn failing_point_does_not_disturb_neighbours() {
    let cfg = SweepConfig::from_str(SWEEP, Format::Toml).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rep = run_sweep(&cfg, dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(rep.failed(), 1);
    assert!(rep.points[1].value.is_nan());
    assert!(rep.points[1].reason.as_deref().unwrap().contains("n_th"));
    let alone = |v: f64| {
        let single = SweepConfig::from_str(&SWEEP.replace("[1000.0, -5.0, 2000.0]", &format!("[{v:?}]")), Format::Toml).unwrap();
        let d = tempfile::tempdir().unwrap();
        run_sweep(&single, d.path(), &RunOptions::default()).unwrap().points[0].value
    };
    assert_eq!(rep.points[0].value, alone(1000.0));
    assert_eq!(rep.points[2].value, alone(2000.0));
    let csv = read(&rep.csv);
    let rows: Vec<_> = csv.lines().collect();
    assert_eq!(rows[0], "params.n_th,stabilized_peak,reason");
    assert!(rows[2].starts_with("-5,NaN,"));
}

#[test]
fn single_point_sweep_matches_scenario_statistic() {
    let cfg = SweepConfig::from_str(&SWEEP.replace("[1000.0, -5.0, 2000.0]", "[1000.0]"), Format::Toml).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rep = run_sweep(&cfg, dir.path(), &RunOptions::default()).unwrap();
    let scn = cfg.scenario_at(&[1000.0], 0).unwrap();
    let run = run_scenario(&scn, dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(rep.points[0].value, run.stats.unwrap().stabilized_peak);
}

#[test]
fn phase_map_vanishes_beyond_the_boundary() {
    let bundle = FigureBundle::load("fig9").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rep = run_sweep(&bundle.sweeps[0], dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(rep.points.len(), 2500);
    assert_eq!(rep.failed(), 0);
    for p in &rep.points {
        let (j, gn) = (p.coords[0], p.coords[1]);
        if gn > boundary_closed_form(j, 1.0) {
            assert_eq!(p.value, 0.0, "j = {j}, gn = {gn}");
        } else if gn < 0.99 * boundary_closed_form(j, 1.0) {
            assert!(p.value > 0.0, "j = {j}, gn = {gn}");
        }
    }
    let heat = read(rep.heatmap.as_ref().unwrap());
    assert_eq!(heat.lines().count(), 51);
    assert_eq!(heat.lines().next().unwrap().split(',').count(), 51);
}
