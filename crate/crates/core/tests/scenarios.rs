use windvic::analysis::{
    compute_metrics, detect_secondary_dip, frequency_nadir, natural_frequency,
    oscillation_frequency, recovery_time, MetricsOptions,
};
use windvic::controllers::{ControllerKind, ControllerSpec};
use windvic::engine::{run_scenario, ScenarioConfig, TimeSeries, WtgSpec};
use windvic::scenario::Scenario;
use windvic::WtgParams;

const SINGLE: &str = include_str!("../../../scenarios/single_wtg.toml");
const MULTI: &str = include_str!("../../../scenarios/multi_wtg.toml");
const GRID_ONLY: &str = include_str!("../../../scenarios/grid_only.toml");

fn run(src: &str, kind: ControllerKind) -> TimeSeries {
    run_scenario(
        &Scenario::from_toml_str(src)
            .unwrap()
            .to_config_with(kind)
            .unwrap(),
    )
    .unwrap()
}

#[test]
fn grid_only_undershoots_its_steady_state() {
    let ts = run(GRID_ONLY, ControllerKind::None);
    let (nadir, _) = frequency_nadir(&ts).unwrap();
    assert!(nadir < 59.6505, "nadir {nadir}");
    let last = *ts.delta_omega.last().unwrap();
    assert!((last + 0.0058252).abs() < 1e-4);
}

#[test]
fn conventional_hold_release_causes_a_secondary_dip() {
    let ts = run(SINGLE, ControllerKind::Conventional);
    let dip = detect_secondary_dip(&ts, 30.0).expect("dip expected");
    assert!((38.0..=45.0).contains(&dip.time), "{dip:?}");
}

#[test]
fn proposed_controller_recovers_before_the_profile_ends() {
    let ts = run(SINGLE, ControllerKind::Proposed);
    let w0 = ts.wtgs[0].omega_g0;
    let t = recovery_time(&ts, 0, w0, 0.01).expect("rotor should recover");
    assert!(t < 89.0, "recovered at {t}");
    assert!(detect_secondary_dip(&ts, 30.0).is_none());
}

#[test]
fn torsional_oscillation_matches_the_natural_frequency() {
    let ts = run(SINGLE, ControllerKind::Conventional);
    let f = oscillation_frequency(&ts.t, &ts.torsional_slip(0), (20.0, 25.0)).unwrap();
    let f_n = natural_frequency(&WtgParams::default()) / (2.0 * std::f64::consts::PI);
    assert!((f - f_n).abs() / f_n < 0.15, "{f} vs {f_n}");
}

/// Over the full-support plateau the rotor only releases energy, and it
/// ends the support phase below its pre-event energy.
#[test]
fn rotor_energy_is_released_during_full_support() {
    let sc = Scenario::from_toml_str(SINGLE).unwrap();
    let cfg = sc.to_config_with(ControllerKind::Proposed).unwrap();
    let ControllerSpec::Proposed(p) = &cfg.controller else {
        unreachable!()
    };
    let g = p.g;
    let ts = run_scenario(&cfg).unwrap();
    let w = &ts.wtgs[0];
    let params = &cfg.wtgs[0].params;
    let energy: Vec<f64> = w
        .omega_t
        .iter()
        .zip(&w.omega_g)
        .map(|(t, gg)| params.h_t * t * t + params.h_g * gg * gg)
        .collect();
    let mut worst_rise: f64 = 0.0;
    for i in 1..ts.len() {
        if ts.t[i] > g.t_event && ts.t[i] <= g.t1 {
            worst_rise = worst_rise.max(energy[i] - energy[i - 1]);
        }
    }
    assert!(worst_rise <= 1e-9, "energy rose by {worst_rise:e}");
    let before = ts.t.iter().position(|&t| t >= g.t_event).unwrap();
    let crossover = ts.t.iter().position(|&t| t >= g.t_mid()).unwrap();
    assert!(energy[crossover] < energy[before]);
}

#[test]
fn halving_the_step_barely_moves_the_trajectory() {
    let coarse = Scenario::from_toml_str(SINGLE).unwrap();
    let fine = coarse.clone().with_dt(0.0005).unwrap();
    let a = run_scenario(&coarse.to_config_with(ControllerKind::Proposed).unwrap()).unwrap();
    let b = run_scenario(&fine.to_config_with(ControllerKind::Proposed).unwrap()).unwrap();
    assert_eq!(a.len(), b.len());
    let mut sup: f64 = 0.0;
    for i in 0..a.len() {
        assert!((a.t[i] - b.t[i]).abs() < 1e-9);
        sup = sup.max((a.delta_omega[i] - b.delta_omega[i]).abs());
        sup = sup.max((a.delta_p_g[i] - b.delta_p_g[i]).abs());
        for (wa, wb) in a.wtgs.iter().zip(&b.wtgs) {
            for (x, y) in [
                (&wa.omega_t, &wb.omega_t),
                (&wa.omega_g, &wb.omega_g),
                (&wa.theta_sh, &wb.theta_sh),
                (&wa.p_e, &wb.p_e),
            ] {
                sup = sup.max((x[i] - y[i]).abs());
            }
        }
    }
    assert!(sup < 1e-5, "sup-norm difference {sup:e}");
    let na = frequency_nadir(&a).unwrap().0 / 60.0;
    let nb = frequency_nadir(&b).unwrap().0 / 60.0;
    assert!((na - nb).abs() < 1e-6);
}

#[test]
fn identical_turbines_behave_identically() {
    let sc = Scenario::from_toml_str(SINGLE).unwrap();
    let mut cfg = sc.to_config_with(ControllerKind::Conventional).unwrap();
    cfg.wtgs = vec![WtgSpec::new(9.5); 3];
    cfg.sim.t_end = 40.0;
    let ts = run_scenario(&cfg).unwrap();
    for w in &ts.wtgs[1..] {
        assert_eq!(w.omega_t, ts.wtgs[0].omega_t);
        assert_eq!(w.p_e, ts.wtgs[0].p_e);
    }
}

#[test]
fn multi_turbine_shares_sum_to_the_total() {
    let ts = run(MULTI, ControllerKind::Proposed);
    for i in 0..ts.len() {
        let sum: f64 = ts.wtgs.iter().map(|w| w.p_vir[i] * 1.5 / 3.0).sum();
        assert!((sum - ts.p_vir_total[i]).abs() < 1e-10);
    }
    let dips: Vec<f64> = ts
        .wtgs
        .iter()
        .map(|w| w.omega_g0 - w.omega_g.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    assert!(dips[0] > dips[1] && dips[0] > dips[2]);
}

#[test]
fn single_turbine_multi_form_matches_single_form() {
    // one turbine through the multi-turbine share path is the single-turbine law
    let sc = Scenario::from_toml_str(SINGLE).unwrap();
    let cfg = sc.to_config_with(ControllerKind::Proposed).unwrap();
    let ts = run_scenario(&cfg).unwrap();
    for i in 0..ts.len() {
        assert!((ts.wtgs[0].p_vir[i] * 0.5 - ts.p_vir_total[i]).abs() < 1e-12);
    }
}

#[test]
fn metrics_cover_every_turbine() {
    let ts = run(MULTI, ControllerKind::Conventional);
    let m = compute_metrics(&ts, &MetricsOptions::default()).unwrap();
    assert_eq!(m.wtgs.len(), 3);
    assert!(m.nadir_hz < 60.0);
    assert!(m.nadir_time_s >= 20.0 && m.nadir_time_s <= 120.0);
    let flat = m.to_flat();
    assert!(flat.iter().any(|(k, _)| k == "wtg3_rotor_dip"));
}

#[test]
fn wind_sweep_points_all_run() {
    let sc = Scenario::from_toml_str(SINGLE).unwrap();
    for v in [7.5, 9.6, 11.5] {
        let cfg: ScenarioConfig = sc.clone().with_wind(v).to_config().unwrap();
        let ts = run_scenario(&cfg).unwrap();
        let (nadir, _) = frequency_nadir(&ts).unwrap();
        assert!(nadir > 58.5 && nadir < 60.0, "{v} m/s: {nadir}");
    }
}
