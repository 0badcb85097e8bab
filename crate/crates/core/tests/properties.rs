mod common;

use proptest::prelude::*;
use rand::Rng;
use ratelqg::linalg;
use ratelqg::maxdet::{
    build_tv_problem, build_tv_singular_problem, build_vstar_problem, solve, SolverSettings,
};
use ratelqg::model::is_stabilizable;
use ratelqg::riccati::{backward_riccati, solve_are};
use ratelqg::synthesis::{data_rate_asymptote, tradeoff_curve};
use ratelqg::{Mat, PlantModel, SynthesisSettings};

/// Stabilizability from the controllable subspace: every mode outside it
/// must be strictly stable.
fn stabilizable_oracle(a: &Mat, b: &Mat) -> bool {
    let n = a.nrows();
    let mut krylov = b.clone();
    let mut block = b.clone();
    for _ in 1..n {
        block = a * &block;
        krylov = Mat::from_fn(n, krylov.ncols() + block.ncols(), |i, j| {
            if j < krylov.ncols() {
                krylov[(i, j)]
            } else {
                block[(i, j - krylov.ncols())]
            }
        });
    }
    let svd = krylov.clone().svd(true, false);
    let top = svd.singular_values.max();
    let u = svd.u.unwrap();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-9 * top.max(1.0))
        .count();
    if rank == n {
        return true;
    }
    // Singular values come sorted, so the trailing columns span the complement.
    let complement = u.columns(rank, n - rank).into_owned();
    let reduced = complement.transpose() * a * &complement;
    linalg::spectral_radius(&reduced) < 1.0
}

/// `A = T diag(A1, A2) T^{-1}`, `B = T [B1; 0]`, so `A2` is uncontrollable.
fn split_plant(seed: u64, unstable_hidden: bool) -> (Mat, Mat) {
    let mut rng = common::rng(seed);
    let n = 3;
    let k = rng.random_range(1..n);
    let a1 = common::random_matrix(&mut rng, k, k, 1.5);
    let mags: Vec<f64> = (0..n - k)
        .map(|_| {
            if unstable_hidden {
                rng.random_range(1.2..2.0)
            } else {
                rng.random_range(0.1..0.8)
            }
        })
        .collect();
    let mut core = Mat::zeros(n, n);
    core.view_mut((0, 0), (k, k)).copy_from(&a1);
    for (i, m) in mags.iter().enumerate() {
        core[(k + i, k + i)] = if rng.random_bool(0.5) { *m } else { -*m };
    }
    let mut b0 = Mat::zeros(n, 2);
    b0.view_mut((0, 0), (k, 2))
        .copy_from(&common::random_matrix(&mut rng, k, 2, 1.0));
    let t = Mat::identity(n, n) + common::random_matrix(&mut rng, n, n, 0.4);
    let t_inv = t.clone().try_inverse().unwrap();
    (&t * core * &t_inv, &t * b0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pbh_matches_controllable_subspace(seed in any::<u64>(), hidden in any::<bool>(), full in any::<bool>()) {
        let (a, b) = if full {
            let mut rng = common::rng(seed);
            (common::random_matrix(&mut rng, 3, 3, 1.5), common::random_matrix(&mut rng, 3, 1, 1.0))
        } else {
            split_plant(seed, hidden)
        };
        prop_assert_eq!(is_stabilizable(&a, &b), stabilizable_oracle(&a, &b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn tradeoff_curve_is_monotone_and_convex(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let plant = common::random_stationary(&mut rng, 2, 1.2);
        let floor = (&plant.w * &solve_are(&plant).unwrap().s[0]).trace();
        let grid: Vec<f64> = (0..9).map(|k| floor * (1.05 + 0.4 * k as f64)).collect();
        let curve = tradeoff_curve(&PlantModel::Stationary(plant.clone()), &grid, &SynthesisSettings::default()).unwrap();
        let di: Vec<f64> = curve.samples.iter().map(|s| s.di_bits.unwrap()).collect();
        let asymptote = data_rate_asymptote(&plant.a);
        for w in di.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-6);
        }
        for w in di.windows(3) {
            prop_assert!(w[1] <= 0.5 * (w[0] + w[2]) + 1e-6);
        }
        for v in &di {
            prop_assert!(*v >= asymptote - 1e-6);
        }
    }

    #[test]
    fn vstar_is_monotone_in_noise(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let n = 2 + (seed % 2) as usize;
        let a = common::random_matrix(&mut rng, n, n, 1.5);
        let w1 = common::random_pd(&mut rng, n, 0.1);
        let g = common::random_matrix(&mut rng, n, n, 1.0);
        let w2 = &w1 + &g * g.transpose() * rng.random_range(0.0..3.0);
        let settings = SolverSettings::default();
        let v1 = solve(&build_vstar_problem(&a, &w1).unwrap(), &settings).unwrap();
        let v2 = solve(&build_vstar_problem(&a, &w2).unwrap(), &settings).unwrap();
        prop_assert!(v1.is_optimal() && v2.is_optimal());
        prop_assert!(v1.objective_nats <= v2.objective_nats + 1e-7, "{} > {}", v1.objective_nats, v2.objective_nats);
    }

    #[test]
    fn factored_builder_agrees_with_direct(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let plant = common::random_tv(&mut rng, 2, 3);
        let bundle = backward_riccati(&plant).unwrap();
        let floor = ratelqg::maxdet::tv_budget_floor(&plant, &bundle);
        let d = floor * (1.0 + rng.random_range(0.05..1.0));
        let settings = SolverSettings::default();
        let direct = solve(&build_tv_problem(&plant, &bundle, d).unwrap(), &settings).unwrap();
        let factored = solve(&build_tv_singular_problem(&plant, &bundle, d).unwrap(), &settings).unwrap();
        prop_assert!(direct.is_optimal() && factored.is_optimal());
        let scale = direct.objective_nats.abs().max(1e-3);
        prop_assert!((direct.objective_nats - factored.objective_nats).abs() <= 1e-6 * scale,
            "{} vs {}", direct.objective_nats, factored.objective_nats);
    }

    #[test]
    fn tv_objective_is_monotone_and_convex_in_budget(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let plant = common::random_tv(&mut rng, 2, 3);
        let bundle = backward_riccati(&plant).unwrap();
        let floor = ratelqg::maxdet::tv_budget_floor(&plant, &bundle);
        let settings = SolverSettings::default();
        let values: Vec<f64> = [1.1, 1.4, 1.7]
            .iter()
            .map(|f| solve(&build_tv_problem(&plant, &bundle, floor * f).unwrap(), &settings).unwrap().objective_nats)
            .collect();
        prop_assert!(values[1] <= values[0] + 1e-6 && values[2] <= values[1] + 1e-6);
        prop_assert!(values[1] <= 0.5 * (values[0] + values[2]) + 1e-6);
    }
}
