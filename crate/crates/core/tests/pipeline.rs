mod common;

use rand::Rng;
use ratelqg::linalg;
use ratelqg::maxdet::{build_stationary_problem, solve};
use ratelqg::model::fixtures;
use ratelqg::riccati::solve_are;
use ratelqg::synthesis::{
    data_rate_asymptote, directed_info_analytic, operational_bounds, synthesize_tv, SynthesisDesign,
};
use ratelqg::{synthesize_stationary, Mat, PlantModel, StationaryPlant, SynthesisSettings};

/// Re-run the filter covariance recursion with the realized sensors.
fn kalman_mismatch(design: &SynthesisDesign, a: &[Mat]) -> f64 {
    let s = &design.schedule;
    let mut worst = 0.0f64;
    for t in 0..s.stages() {
        let pred = if t == 0 {
            s.p_pred[0].clone()
        } else {
            &a[t - 1] * &s.p_filt[t - 1] * a[t - 1].transpose() + &design.noise[t - 1]
        };
        let (c, v) = (&design.sensor.c[t], &design.sensor.v[t]);
        let info = linalg::spd_inverse(&pred).unwrap()
            + if c.nrows() > 0 {
                c.transpose() * linalg::spd_inverse(v).unwrap() * c
            } else {
                Mat::zeros(pred.nrows(), pred.nrows())
            };
        let filt = linalg::spd_inverse(&info).unwrap();
        worst = worst
            .max(linalg::rel_diff(&filt, &s.p_filt[t]))
            .max(linalg::rel_diff(&pred, &s.p_pred[t]));
    }
    worst
}

fn stationary_mismatch(design: &SynthesisDesign, plant: &StationaryPlant) -> f64 {
    let s = &design.schedule;
    let pred = &plant.a * &s.p_filt[0] * plant.a.transpose() + &plant.w;
    kalman_mismatch(design, std::slice::from_ref(&plant.a))
        .max(linalg::rel_diff(&pred, &s.p_pred[0]))
}

#[test]
fn four_state_designs_have_expected_ranks() {
    let plant = fixtures::four_state_example();
    let settings = SynthesisSettings::default();
    for (d, rank) in [(33.0, 3), (40.0, 2), (80.0, 1)] {
        let design = synthesize_stationary(&plant, d, &settings).unwrap();
        assert_eq!(design.max_rank(), rank, "D = {d}");
        assert!(design.j_analytic <= d + 1e-7 * (1.0 + d));
        assert!(stationary_mismatch(&design, &plant) < 1e-6);
    }
}

#[test]
fn four_state_single_channel_sensor() {
    let plant = fixtures::four_state_example();
    let design = synthesize_stationary(&plant, 80.0, &SynthesisSettings::default()).unwrap();
    let (c, v, snr) = (
        &design.sensor.c[0],
        &design.sensor.v[0],
        &design.sensor.snr[0],
    );
    assert_eq!(c.nrows(), 1);
    assert!(
        (v[(0, 0)] - 1.775).abs() / 1.775 < 0.02,
        "V = {}",
        v[(0, 0)]
    );
    let rebuilt = c.transpose() * linalg::spd_inverse(v).unwrap() * c;
    assert!(linalg::norm(&(rebuilt - snr)) <= 1e-6 * linalg::norm(snr));
    assert!((c * c.transpose() - Mat::identity(1, 1)).amax() < 1e-10);
}

#[test]
fn four_state_floor_is_vertical_asymptote() {
    let plant = fixtures::four_state_example();
    let bundle = solve_are(&plant).unwrap();
    let floor = (&plant.w * &bundle.s[0]).trace();
    let settings = SynthesisSettings::default();
    assert!(synthesize_stationary(&plant, floor * (1.0 - 1e-6), &settings).is_err());
    let near = synthesize_stationary(&plant, floor * 1.001, &settings).unwrap();
    let mid = synthesize_stationary(&plant, floor * 1.1, &settings).unwrap();
    assert!(near.di_bits > mid.di_bits + 1.0);
}

#[test]
fn scalar_closed_form_on_unstable_plants() {
    let mut rng = common::rng(21);
    for _ in 0..8 {
        let a: f64 = rng.random_range(1.0..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let w: f64 = rng.random_range(0.3..3.0);
        let one = Mat::from_element(1, 1, 1.0);
        let plant = StationaryPlant::new(
            Mat::from_element(1, 1, a),
            one.clone(),
            Mat::from_element(1, 1, w),
            one.clone(),
            one,
        );
        // Independent oracle: s^2 - a^2 s - 1 = 0 for b = q = r = 1.
        let s = 0.5 * (a * a + (a.powi(4) + 4.0).sqrt());
        let theta = a * a * s * s / (s + 1.0);
        let d = w * s + rng.random_range(0.1..5.0) * theta;
        let p = (d - w * s) / theta;
        let expected = 0.5 * (a * a + w / p).log2();
        let design = synthesize_stationary(&plant, d, &SynthesisSettings::default()).unwrap();
        assert!(
            (design.di_bits - expected).abs() < 1e-6,
            "a={a} w={w}: {} vs {expected}",
            design.di_bits
        );
    }
}

#[test]
fn random_stationary_designs_are_consistent() {
    let mut rng = common::rng(22);
    let settings = SynthesisSettings::default();
    for case in 0..8 {
        let n = 2 + case % 2;
        let plant = common::random_stationary(&mut rng, n, 1.2);
        let bundle = solve_are(&plant).unwrap();
        let floor = (&plant.w * &bundle.s[0]).trace();
        let d = floor * (1.0 + rng.random_range(0.05..2.0));
        let design = synthesize_stationary(&plant, d, &settings).unwrap();
        assert!(stationary_mismatch(&design, &plant) < 1e-6, "case {case}");
        // Objective identity.
        let analytic = directed_info_analytic(
            &design.schedule,
            std::slice::from_ref(&plant.a),
            &design.noise,
        )
        .unwrap();
        assert!((analytic - design.di_bits).abs() < 1e-6, "case {case}");
        // Factorization soundness.
        let c = &design.sensor.c[0];
        if c.nrows() > 0 {
            let rows = c * c.transpose();
            assert!((rows - Mat::identity(c.nrows(), c.nrows())).amax() < 1e-10);
        }
        // Budget tightness away from the asymptote.
        let asymptote = data_rate_asymptote(&plant.a);
        assert!(design.di_bits >= asymptote - 1e-6, "case {case}");
        if design.di_bits > asymptote + 1e-3 {
            assert!(
                d - design.j_analytic < 1e-6 * d,
                "case {case}: slack {}",
                d - design.j_analytic
            );
        }
    }
}

#[test]
fn large_budget_approaches_the_asymptote() {
    let mut rng = common::rng(23);
    let settings = SynthesisSettings::default();
    for case in 0..5 {
        let plant = common::random_stationary(&mut rng, 2, 0.8);
        let bundle = solve_are(&plant).unwrap();
        let floor = (&plant.w * &bundle.s[0]).trace();
        let design = synthesize_stationary(&plant, 100.0 * floor, &settings).unwrap();
        let asymptote = data_rate_asymptote(&plant.a);
        assert!(
            design.di_bits - asymptote < 0.05,
            "case {case}: {} vs {asymptote}",
            design.di_bits
        );
        assert!(design.di_bits >= asymptote - 1e-6);
    }
}

#[test]
fn stationary_objective_matches_solver_value() {
    let plant = fixtures::four_state_example();
    let bundle = solve_are(&plant).unwrap();
    let sol = solve(
        &build_stationary_problem(&plant, &bundle, 40.0).unwrap(),
        &Default::default(),
    )
    .unwrap();
    let design = synthesize_stationary(&plant, 40.0, &SynthesisSettings::default()).unwrap();
    assert!((sol.objective_nats / std::f64::consts::LN_2 - design.di_bits).abs() < 1e-9);
}

#[test]
fn time_varying_designs_are_consistent() {
    let mut rng = common::rng(24);
    let settings = SynthesisSettings::default();
    for case in 0..5 {
        let plant = common::random_tv(&mut rng, 2, 4);
        let floor =
            ratelqg::synthesis::budget_floor(&PlantModel::TimeVarying(plant.clone())).unwrap();
        let d = floor * (1.0 + rng.random_range(0.05..1.0));
        let design = synthesize_tv(&plant, d, &settings).unwrap();
        assert!(kalman_mismatch(&design, &plant.a) < 1e-6, "case {case}");
        let analytic = directed_info_analytic(&design.schedule, &plant.a, &plant.w).unwrap();
        assert!((analytic - design.di_bits).abs() < 1e-6, "case {case}");
        assert!(design.j_analytic <= d + 1e-7 * (1.0 + d));
        for t in 0..plant.horizon() {
            assert!(linalg::is_psd(
                &(&design.schedule.p_pred[t] - &design.schedule.p_filt[t])
            ));
        }
    }
}

#[test]
fn operational_bound_examples() {
    let (lo, hi) = operational_bounds(1.602, 1);
    assert_eq!(lo, 1.602);
    assert!((hi - 3.357).abs() < 5e-4);
    assert_eq!(operational_bounds(0.0, 0), (0.0, 1.0));
    assert!((operational_bounds(6.133, 3).1 - 9.397).abs() < 5e-4);
}
