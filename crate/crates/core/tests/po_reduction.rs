mod common;

use rand::Rng;
use ratelqg::linalg;
use ratelqg::synthesis::{budget_floor, synthesize_po, synthesize_tv};
use ratelqg::{Mat, PartiallyObservedPlant, PlantModel, SynthesisSettings, TimeVaryingPlant};

fn perfect_sensors(base: TimeVaryingPlant) -> PartiallyObservedPlant {
    let n = base.state_dim();
    let stages = base.horizon() + 1;
    PartiallyObservedPlant {
        base,
        h: vec![Mat::identity(n, n); stages],
        g: vec![Mat::zeros(n, n); stages],
    }
}

fn close(a: &Mat, b: &Mat) -> bool {
    linalg::norm(&(a - b)) <= 1e-6 * (1.0 + linalg::norm(b))
}

#[test]
fn perfect_measurements_reduce_to_full_observation() {
    let mut rng = common::rng(31);
    let settings = SynthesisSettings::default();
    for case in 0..10 {
        let n = 1 + case % 3;
        let base = common::random_tv(&mut rng, n, 2 + case % 3);
        let floor = budget_floor(&PlantModel::TimeVarying(base.clone())).unwrap();
        let d = floor * (1.0 + rng.random_range(0.05..1.0));
        let full = synthesize_tv(&base, d, &settings).unwrap();
        let po = synthesize_po(&perfect_sensors(base), d, &settings).unwrap();
        assert!(
            (po.di_bits - full.di_bits).abs() <= 1e-6 * (1.0 + full.di_bits.abs()),
            "case {case}"
        );
        assert!(
            (po.j_analytic - full.j_analytic).abs() <= 1e-6 * (1.0 + full.j_analytic),
            "case {case}"
        );
        for t in 0..full.schedule.stages() {
            assert!(
                close(&po.schedule.p_filt[t], &full.schedule.p_filt[t]),
                "case {case} stage {t}"
            );
            assert!(
                close(&po.schedule.p_pred[t], &full.schedule.p_pred[t]),
                "case {case} stage {t}"
            );
            assert_eq!(
                po.sensor.rank[t], full.sensor.rank[t],
                "case {case} stage {t}"
            );
            let (lp, lf) = (&po.l[t] * &po.sensor.c[t], &full.l[t] * &full.sensor.c[t]);
            assert!(close(&lp, &lf), "case {case} stage {t}");
        }
    }
}

fn scalar(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

fn scalar_po(g: f64) -> PartiallyObservedPlant {
    PartiallyObservedPlant {
        base: TimeVaryingPlant {
            a: vec![scalar(2.0); 2],
            b: vec![scalar(1.0); 2],
            w: vec![scalar(1.0); 2],
            q: vec![scalar(1.0); 2],
            r: vec![scalar(1.0); 2],
            p_init: scalar(1.0),
        },
        h: vec![scalar(1.0); 3],
        g: vec![scalar(g); 3],
    }
}

#[test]
fn noisy_sensor_needs_at_least_as_much_information() {
    let plant = scalar_po(1.0);
    let settings = SynthesisSettings::default();
    let floor = budget_floor(&PlantModel::PartiallyObserved(plant.clone())).unwrap();
    let full_floor = budget_floor(&PlantModel::TimeVarying(plant.base.clone())).unwrap();
    assert!(floor > full_floor);
    for factor in [1.1, 1.5, 3.0] {
        let d = floor * factor;
        let po = synthesize_po(&plant, d, &settings).unwrap();
        let full = synthesize_tv(&plant.base, d, &settings).unwrap();
        // A fully observing controller can simulate the noisy sensor itself.
        assert!(
            po.di_bits >= full.di_bits - 1e-9,
            "{} < {}",
            po.di_bits,
            full.di_bits
        );
        assert!(po.j_analytic <= d + 1e-7 * (1.0 + d));
    }
}

#[test]
fn very_noisy_sensor_raises_the_floor() {
    let plant = scalar_po(1e6);
    let floor = budget_floor(&PlantModel::PartiallyObserved(plant.clone())).unwrap();
    let full_floor = budget_floor(&PlantModel::TimeVarying(plant.base.clone())).unwrap();
    // The pre-filter learns nothing, so its error is the open-loop
    // covariance: 1 -> 5 -> 21, of which stages 2 and 3 are charged.
    assert!((floor - 26.0).abs() < 1e-3, "{floor}");
    assert!(floor > 3.0 * full_floor);
    let d = 0.5 * (floor + full_floor);
    assert!(synthesize_po(&plant, d, &SynthesisSettings::default()).is_err());
}
