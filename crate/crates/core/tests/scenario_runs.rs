use rckf_core::filter::{rckf_update, run_filter_observed, CkfStrategy, FilterState, HuberConfig};
use rckf_core::machine::as_process_model;
use rckf_core::metrics::{MetricsReport, Variable};
use rckf_core::noise::{NoiseKind, OutlierSpec};
use rckf_core::scenario::{
    filter_measurement_covariance, run_scenario, simulate_truth, synthesize_measurements, FilterInputs, NoiseConfig,
    ScenarioConfig,
};

fn reports(cfg: &ScenarioConfig) -> (MetricsReport, MetricsReport) {
    let rec = run_scenario(cfg, &["ckf", "rckf"]).unwrap();
    let get = |name: &str| {
        let run = rec.estimates[name].as_ref().unwrap();
        MetricsReport::compute(name, &rec.truth, &run.estimates(), &rec.corrupted).unwrap()
    };
    (get("ckf"), get("rckf"))
}

#[test]
fn scenario_is_deterministic() {
    let cfg = ScenarioConfig {
        noise: NoiseConfig::table(NoiseKind::Laplace),
        outliers: OutlierSpec::window(2.0, 3.0),
        seed: 42,
        ..Default::default()
    };
    let a = run_scenario(&cfg, &["ckf", "rckf"]).unwrap();
    let b = run_scenario(&cfg, &["ckf", "rckf"]).unwrap();
    assert_eq!(a.corrupted, b.corrupted);
    for name in ["ckf", "rckf"] {
        let (x, y) = (a.estimates[name].as_ref().unwrap(), b.estimates[name].as_ref().unwrap());
        assert_eq!(x.run.states, y.run.states);
    }
}

#[test]
fn rckf_posterior_equals_ckf_when_all_residuals_are_inliers() {
    let cfg = ScenarioConfig {
        seed: 5,
        ..Default::default()
    };
    let truth = simulate_truth(&cfg).unwrap();
    let (_, corrupted) = synthesize_measurements(&truth, &cfg).unwrap();
    let prep = FilterInputs::prepare(&cfg, &truth, &corrupted);
    let model = as_process_model(cfg.machine, cfg.dt, cfg.torque_mode).unwrap();
    let r_of = |p: &FilterState, u: &nalgebra::DVector<f64>| filter_measurement_covariance(&cfg, &p.x_hat, u);
    let mut compared = 0;
    let mut worst = 0.0_f64;
    run_filter_observed(
        &model,
        &CkfStrategy,
        prep.init.clone(),
        &prep.inputs,
        &prep.measurements,
        &prep.q,
        &r_of,
        &mut |step, pred, outcome| {
            let u = &prep.inputs[step];
            let z = &prep.measurements[step - 1];
            let (post, _, huber) = rckf_update(pred, z, &model, u, &r_of(pred, u), &HuberConfig::default()).unwrap();
            if huber.all_inliers() {
                compared += 1;
                worst = worst
                    .max((&post.x_hat - &outcome.state.x_hat).abs().max())
                    .max((&post.covariance - &outcome.state.covariance).abs().max());
            }
        },
    )
    .unwrap();
    assert!(compared > 100, "only {compared} inlier steps");
    assert!(worst <= 1e-12, "worst {worst:e}");
}

#[test]
fn ckf_estimates_beat_raw_angle_measurements() {
    let (ckf, _) = reports(&ScenarioConfig::default());
    assert!(ckf.get(Variable::Delta).unwrap().epsilon1.unwrap() < 1.0);
    assert!(ckf.get(Variable::Delta).unwrap().epsilon2 < 1.0);
}

#[test]
fn rckf_wins_on_speed_under_cauchy_with_outlier_window() {
    for seed in 0..5 {
        let cfg = ScenarioConfig {
            noise: NoiseConfig::table(NoiseKind::Cauchy),
            outliers: OutlierSpec::window(2.0, 3.0),
            seed,
            ..Default::default()
        };
        let (ckf, rckf) = reports(&cfg);
        let e = |r: &MetricsReport| r.get(Variable::Omega).unwrap().epsilon1.unwrap();
        assert!(e(&rckf) < e(&ckf), "seed {seed}: {} vs {}", e(&rckf), e(&ckf));
    }
}

#[test]
fn single_outlier_moves_rckf_less() {
    let step = 300;
    let mut wins = 0;
    let seeds = 20;
    for seed in 0..seeds {
        let cfg = ScenarioConfig {
            outliers: OutlierSpec::single(6.0),
            seed,
            ..Default::default()
        };
        let rec = run_scenario(&cfg, &["ckf", "rckf"]).unwrap();
        let err = |name: &str| {
            let est = &rec.estimates[name].as_ref().unwrap().run.states[step];
            (est.x_hat[1] - rec.truth[step].delta_omega).abs()
        };
        if err("rckf") < err("ckf") {
            wins += 1;
        }
    }
    assert!(wins >= 19, "{wins}/{seeds}");
}
