//! Rate/cost trade-off curves.

use rayon::prelude::*;

use super::{budget_floor, data_rate_asymptote, operational_bounds, synthesize, SynthesisSettings};
use crate::error::{Error, Result};
use crate::model::PlantModel;

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample {
    pub d: f64,
    /// `None` when the budget is infeasible.
    pub di_bits: Option<f64>,
    /// Largest sensor rank over the horizon.
    pub rank: Option<usize>,
    /// Coding-rate upper bound; stationary plants only.
    pub r_upper_bits: Option<f64>,
}

impl CurveSample {
    pub fn feasible(&self) -> bool {
        self.di_bits.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffCurve {
    pub samples: Vec<CurveSample>,
    /// Stabilization rate; stationary plants only.
    pub asymptote_bits: Option<f64>,
    pub d_min: f64,
}

/// Synthesize at every budget of `grid`. Budgets at or below the cost floor
/// become infeasible samples; other failures abort.
pub fn tradeoff_curve(
    plant: &PlantModel,
    grid: &[f64],
    settings: &SynthesisSettings,
) -> Result<TradeoffCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("budget grid is empty".into()));
    }
    if grid.iter().any(|d| !(d.is_finite() && *d > 0.0)) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput(
            "budget grid must be sorted, positive, and finite".into(),
        ));
    }
    let d_min = budget_floor(plant)?;
    let stationary = matches!(plant, PlantModel::Stationary(_));
    let samples = grid
        .par_iter()
        .map(|&d| match synthesize(plant, d, settings) {
            Ok(design) => {
                let rank = design.max_rank();
                Ok(CurveSample {
                    d,
                    di_bits: Some(design.di_bits),
                    rank: Some(rank),
                    r_upper_bits: stationary.then(|| operational_bounds(design.di_bits, rank).1),
                })
            }
            Err(Error::Infeasible { .. } | Error::ProblemInfeasible(_)) => Ok(CurveSample {
                d,
                di_bits: None,
                rank: None,
                r_upper_bits: None,
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let asymptote_bits = match plant {
        PlantModel::Stationary(p) => Some(data_rate_asymptote(&p.a)),
        _ => None,
    };
    Ok(TradeoffCurve {
        samples,
        asymptote_bits,
        d_min,
    })
}
