//! Minimum directed-information LQG synthesis.
//!
//! Given a linear-Gaussian plant and a quadratic cost budget `D`, find the
//! smallest information flow from the plant state to the control input
//! that still meets `D`, and build the virtual sensor, Kalman filter, and
//! certainty-equivalence controller that achieve it.

pub mod error;
pub mod linalg;
pub mod maxdet;
pub mod model;
pub mod riccati;
pub mod simulator;
pub mod synthesis;

pub use error::{Error, Result};
pub use linalg::Mat;
pub use maxdet::{MaxDetProblem, MaxDetSolution, SolveStatus, SolverSettings};
pub use model::{
    load_plant, Budget, PartiallyObservedPlant, PlantModel, StationaryPlant, TimeVaryingPlant,
};
pub use riccati::RiccatiBundle;
pub use simulator::{simulate_closed_loop, SimConfig, SimResult};
pub use synthesis::{
    synthesize, synthesize_po, synthesize_stationary, synthesize_tv, CovarianceSchedule,
    PreKFDesign, SensorDesign, SynthesisDesign, SynthesisSettings, TradeoffCurve,
};
