use optomech::figures::{run_figure, FigureBundle};
use optomech::integrate::Trajectory;
use optomech::scenario::{simulate, RunOptions};
use optomech::sweep::run_sweep;

fn run(bundle: &FigureBundle, name: &str) -> Trajectory {
    let scn = bundle.scenarios.iter().find(|s| s.name == name).unwrap_or_else(|| panic!("no scenario {name}"));
    simulate(scn).unwrap_or_else(|f| panic!("{name}: {}", f.error))
}

#[test]
fn finite_temperature_runs_heat_up_and_settle() {
    let b = FigureBundle::load("fig3").unwrap();
    for name in ["room_temperature", "hot"] {
        let t = run(&b, name);
        let first = &t.samples[0].measures;
        let last = &t.last().unwrap().measures;
        assert!(last.n_m.log10_abs() > first.n_m.log10_abs() + 10.0, "{name}: phonons {} -> {}", first.n_m, last.n_m);
        assert!(last.n_p[0].log10_abs() > 10.0, "{name}: photons {}", last.n_p[0]);
        let st = t.stats(0.2).unwrap();
        assert!(st.stabilized_peak.is_finite() && st.stabilized_peak < 3.0, "{name}: {}", st.stabilized_peak);
    }
    let room = run(&b, "room_temperature").stats(0.2).unwrap();
    let hot = run(&b, "hot").stats(0.2).unwrap();
    assert!(room.n_peaks >= 5 && room.stabilized_peak > 0.0);
    assert!(room.stabilized_peak > hot.stabilized_peak, "{} vs {}", room.stabilized_peak, hot.stabilized_peak);
}

#[test]
fn stronger_drive_shows_periodic_sudden_death() {
    let b = FigureBundle::load("fig4").unwrap();
    let weak = run(&b, "weak").stats(0.2).unwrap();
    let strong = run(&b, "strong").stats(0.2).unwrap();
    assert!(weak.esd_intervals.is_empty() && weak.stabilized_mean > 0.0);
    assert!(strong.esd_intervals.len() >= 3, "{}", strong.esd_intervals.len());
}

#[test]
fn drive_ramp_saturates() {
    let b = FigureBundle::load("fig7").unwrap();
    let upper: Vec<f64> = b.scenarios[6..]
        .iter()
        .map(|s| simulate(s).unwrap().stats(s.window_fraction).unwrap().stabilized_peak)
        .collect();
    let hi = upper.iter().copied().fold(f64::MIN, f64::max);
    let lo = upper.iter().copied().fold(f64::MAX, f64::min);
    assert!((hi - lo) / hi < 0.15, "{upper:?}");
}

#[test]
fn entanglement_sets_in_past_unit_quality_ratio() {
    let b = FigureBundle::load("fig8a").unwrap();
    let sw = &b.sweeps[0];
    let n_th = sw.scenario_at(&[1e6, 6e4], 0).unwrap().params.n_th;
    let peak = |ratio: f64| {
        let s = sw.scenario_at(&[1e6, ratio * n_th], 0).unwrap();
        simulate(&s).unwrap().stats(s.window_fraction).unwrap().stabilized_peak
    };
    assert_eq!(peak(0.5), 0.0);
    assert_eq!(peak(1.0), 0.0);
    let at_two = peak(2.0);
    assert!((0.03..0.5).contains(&at_two), "{at_two}");
    assert!(peak(10.0) > at_two);
}

#[test]
fn hotter_baths_entangle_less() {
    let b = FigureBundle::load("fig8b").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rep = run_sweep(&b.sweeps[0], dir.path(), &RunOptions::default()).unwrap();
    let v: Vec<f64> = rep.points.iter().map(|p| p.value).collect();
    assert!(v.windows(2).all(|w| w[1] <= w[0]), "{v:?}");
    let at_900 = rep.points.iter().find(|p| p.coords[0] == 900.0).unwrap();
    assert!(at_900.value > 0.0, "{v:?}");
}

#[test]
fn three_mode_growth_changes_sign_near_matched_rates() {
    let dir = tempfile::tempdir().unwrap();
    let rep = run_figure("figs2", dir.path(), &RunOptions::default()).unwrap();
    let pts = &rep.sweeps[0].points;
    for p in pts {
        let ratio = p.coords[0];
        if ratio < 0.99 {
            assert!(p.value > 0.0, "{ratio}: {}", p.value);
        } else if ratio > 1.01 {
            assert!(p.value < 0.0, "{ratio}: {}", p.value);
        }
    }
    assert!(dir.path().join("figs2").join("figure.json").exists());
}
