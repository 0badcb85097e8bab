//! Benchmark fixtures.

use ratelqg::model::fixtures;
use ratelqg::{PlantModel, StationaryPlant, TimeVaryingPlant};

pub fn four_state() -> StationaryPlant {
    fixtures::four_state_example()
}

/// The four-state plant unrolled over `horizon` stages from `P_init = W`.
pub fn four_state_horizon(horizon: usize) -> TimeVaryingPlant {
    let plant = four_state();
    let p_init = plant.w.clone();
    TimeVaryingPlant::from_stationary(&plant, horizon, p_init)
}

pub fn four_state_model() -> PlantModel {
    PlantModel::Stationary(four_state())
}

/// Evenly spaced budgets above the four-state cost floor.
pub fn budget_grid(points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| 33.0 + 87.0 * k as f64 / (points - 1).max(1) as f64)
        .collect()
}
