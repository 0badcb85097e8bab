//! Synthesis pipelines: Riccati gains, the covariance schedule from the
//! max-det problem, the virtual sensor, and the Kalman filter realizing it.

mod curve;
mod prekf;
mod record;

pub use curve::{tradeoff_curve, CurveSample, TradeoffCurve};
pub use prekf::{prekf_design, prekf_inverse, reduced_plant, PreKFDesign, ReducedPlant};
pub use record::{design_from_json, design_to_json, DesignRecord};

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::maxdet::{
    self, build_po_problem, build_stationary_problem, build_tv_problem, build_tv_singular_problem,
    MaxDetProblem, MaxDetSolution, SolveStatus, SolverSettings,
};
use crate::model::{PartiallyObservedPlant, PlantModel, StationaryPlant, TimeVaryingPlant};
use crate::riccati::{backward_riccati, solve_are, RiccatiBundle};

/// Relative eigenvalue truncation of the SNR matrix.
pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-3;

/// SNR eigenvalues below this fraction of `|P_filt^{-1}|` are roundoff from
/// the interior-point solution and are zeroed before factoring.
const SNR_NOISE_FLOOR: f64 = 1e-7;

/// `(1/2) log2(4 pi e / 12)`, the per-dimension quantization overhead.
pub fn quantization_overhead_bits() -> f64 {
    0.5 * (std::f64::consts::PI * std::f64::consts::E / 3.0).log2()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSettings {
    pub solver: SolverSettings,
    pub rank_threshold: f64,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        SynthesisSettings {
            solver: SolverSettings::default(),
            rank_threshold: DEFAULT_RANK_THRESHOLD,
        }
    }
}

/// Filtered and predicted covariances; stationary designs hold one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSchedule {
    pub p_filt: Vec<Mat>,
    /// `p_pred[0]` is the prior covariance of the first state.
    pub p_pred: Vec<Mat>,
}

impl CovarianceSchedule {
    pub fn stages(&self) -> usize {
        self.p_filt.len()
    }
}

/// Virtual sensors `y_t = C_t x_t + v_t`, `v_t ~ N(0, V_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorDesign {
    pub snr: Vec<Mat>,
    pub rank: Vec<usize>,
    pub c: Vec<Mat>,
    pub v: Vec<Mat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    Stationary,
    TimeVarying,
    PartiallyObserved,
}

impl DesignKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DesignKind::Stationary => "stationary",
            DesignKind::TimeVarying => "tv",
            DesignKind::PartiallyObserved => "po",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisDesign {
    pub kind: DesignKind,
    pub bundle: RiccatiBundle,
    pub schedule: CovarianceSchedule,
    pub sensor: SensorDesign,
    /// Kalman gains on the virtual sensor outputs; `n x 0` where `r_t = 0`.
    pub l: Vec<Mat>,
    pub prekf: Option<PreKFDesign>,
    /// Noise driving the filtered model (`W_t`, or `Psi_t` when partially observed).
    pub noise: Vec<Mat>,
    /// Total bits over the horizon, or bits per stage when stationary.
    pub di_bits: f64,
    pub j_analytic: f64,
    pub d_requested: f64,
    pub gap_estimate: f64,
}

impl SynthesisDesign {
    pub fn max_rank(&self) -> usize {
        self.sensor.rank.iter().copied().max().unwrap_or(0)
    }
}

/// `SNR_t = P_{t|t}^{-1} - P_{t|t-1}^{-1}`, with roundoff-level eigenvalues zeroed.
pub fn snr_from_schedule(schedule: &CovarianceSchedule) -> Result<Vec<Mat>> {
    schedule
        .p_filt
        .iter()
        .zip(&schedule.p_pred)
        .enumerate()
        .map(|(t, (filt, pred))| {
            let info = linalg::spd_inverse(filt)?;
            let snr = linalg::symmetrize(&(&info - linalg::spd_inverse(pred)?));
            let floor = SNR_NOISE_FLOOR * linalg::norm(&info);
            let (values, vectors) = linalg::sym_eigen_desc(&snr);
            if let Some(&low) = values.last() {
                if low < -floor.max(1e-8 * (1.0 + linalg::norm(&snr))) {
                    return Err(Error::Numerical(format!(
                        "stage {}: filtered covariance exceeds the prediction (SNR eigenvalue {low:.3e})",
                        t + 1
                    )));
                }
            }
            let n = snr.nrows();
            let mut clean = Mat::zeros(n, n);
            for (i, &l) in values.iter().enumerate() {
                if l > floor {
                    let v = vectors.column(i);
                    clean += v * v.transpose() * l;
                }
            }
            Ok(clean)
        })
        .collect()
}

/// Factor `SNR = C' V^{-1} C` keeping eigenvalues `>= rel_threshold * lambda_max`.
/// Rows of `C` are unit eigenvectors and `V = diag(1 / lambda)`.
pub fn factor_snr(snr: &Mat, rel_threshold: f64) -> (Mat, Mat, usize) {
    let n = snr.nrows();
    let (values, vectors) = linalg::sym_eigen_desc(snr);
    let top = values.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return (Mat::zeros(0, n), Mat::zeros(0, 0), 0);
    }
    let kept: Vec<usize> = (0..n)
        .filter(|&i| values[i] >= rel_threshold * top && values[i] > 0.0)
        .collect();
    let r = kept.len();
    let c = Mat::from_fn(r, n, |i, j| vectors[(j, kept[i])]);
    let v = Mat::from_fn(
        r,
        r,
        |i, j| if i == j { 1.0 / values[kept[i]] } else { 0.0 },
    );
    (c, v, r)
}

/// `L = P C' (C P C' + V)^{-1}`; `n x 0` when the sensor is null.
pub fn kalman_gain(p_pred: &Mat, c: &Mat, v: &Mat) -> Result<Mat> {
    let n = p_pred.nrows();
    if c.nrows() == 0 {
        return Ok(Mat::zeros(n, 0));
    }
    let s = linalg::symmetrize(&(c * p_pred * c.transpose() + v));
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
    Ok(chol.solve(&(c * p_pred)).transpose())
}

/// Sum of `1/2 log det P_{t|t-1} - 1/2 log det P_{t|t}` in bits, with the
/// predictions rebuilt from `a` and `noise` after the first stage.
pub fn directed_info_analytic(
    schedule: &CovarianceSchedule,
    a: &[Mat],
    noise: &[Mat],
) -> Result<f64> {
    let mut nats = 0.0;
    for t in 0..schedule.stages() {
        let pred = if t == 0 {
            schedule.p_pred[0].clone()
        } else {
            &a[t - 1] * &schedule.p_filt[t - 1] * a[t - 1].transpose() + &noise[t - 1]
        };
        nats += 0.5 * (linalg::log_det_spd(&pred)? - linalg::log_det_spd(&schedule.p_filt[t])?);
    }
    Ok(nats / LN_2)
}

/// Exact LQG cost of a design: `Tr(Phi_1 P_{1|0}) + sum_t Tr(W_t S_t) + Tr(Theta_t P_{t|t})`,
/// or `Tr(W S) + Tr(Theta P)` per stage for stationary plants. Partially
/// observed plants add the pre-filter error cost.
pub fn cost_analytic(
    bundle: &RiccatiBundle,
    schedule: &CovarianceSchedule,
    plant: &PlantModel,
) -> Result<f64> {
    let control: f64 = bundle
        .theta
        .iter()
        .zip(&schedule.p_filt)
        .map(|(th, p)| (th * p).trace())
        .sum();
    match plant {
        PlantModel::Stationary(p) => Ok((&p.w * &bundle.s[0]).trace() + control),
        PlantModel::TimeVarying(p) => Ok(maxdet::tv_budget_floor(p, bundle) + control),
        PlantModel::PartiallyObserved(p) => {
            let reduced = reduced_plant(p, &prekf_design(p)?)?;
            Ok(maxdet::tv_budget_floor(&reduced.plant, bundle) + reduced.cost_offset + control)
        }
    }
}

/// `sum log2 |lambda|` over eigenvalues of `A` on or outside the unit circle.
pub fn data_rate_asymptote(a: &Mat) -> f64 {
    linalg::eigenvalues(a)
        .iter()
        .map(|l| l.norm())
        .filter(|&m| m >= 1.0)
        .map(f64::log2)
        .sum()
}

/// Bounds on the operational coding rate: `(DI, DI + r/2 log2(4 pi e / 12) + 1)`.
pub fn operational_bounds(di_bits: f64, rank: usize) -> (f64, f64) {
    (
        di_bits,
        di_bits + rank as f64 * quantization_overhead_bits() + 1.0,
    )
}

fn solve_checked(problem: &MaxDetProblem, settings: &SolverSettings) -> Result<MaxDetSolution> {
    let sol = maxdet::solve(problem, settings)?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol),
        SolveStatus::Infeasible => Err(Error::ProblemInfeasible(
            sol.phase1_infeasibility.unwrap_or(f64::NAN),
        )),
        SolveStatus::NumericalFailure => Err(Error::Solver(
            sol.message
                .unwrap_or_else(|| "max-det solver failed".into()),
        )),
    }
}

fn realize(schedule: &CovarianceSchedule, rank_threshold: f64) -> Result<(SensorDesign, Vec<Mat>)> {
    let snr = snr_from_schedule(schedule)?;
    let mut sensor = SensorDesign {
        snr: Vec::with_capacity(snr.len()),
        rank: Vec::new(),
        c: Vec::new(),
        v: Vec::new(),
    };
    let mut gains = Vec::with_capacity(snr.len());
    for (t, s) in snr.into_iter().enumerate() {
        let (c, v, r) = factor_snr(&s, rank_threshold);
        gains.push(kalman_gain(&schedule.p_pred[t], &c, &v)?);
        sensor.snr.push(s);
        sensor.rank.push(r);
        sensor.c.push(c);
        sensor.v.push(v);
    }
    Ok((sensor, gains))
}

fn horizon_schedule(plant: &TimeVaryingPlant, sol: &MaxDetSolution) -> Result<CovarianceSchedule> {
    let horizon = plant.horizon();
    let mut p_filt = Vec::with_capacity(horizon);
    let mut p_pred = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let p = sol
            .value(&maxdet::p_block(t))
            .ok_or_else(|| Error::Solver(format!("solution lacks block {}", maxdet::p_block(t))))?;
        let pred = if t == 0 {
            plant.p_init.clone()
        } else {
            linalg::symmetrize(
                &(&plant.a[t - 1] * &p_filt[t - 1] * plant.a[t - 1].transpose() + &plant.w[t - 1]),
            )
        };
        p_filt.push(linalg::symmetrize(p));
        p_pred.push(pred);
    }
    Ok(CovarianceSchedule { p_filt, p_pred })
}

fn check_settings(d: f64, settings: &SynthesisSettings) -> Result<()> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidInput(format!(
            "budget must be a positive finite number, got {d}"
        )));
    }
    if !(settings.rank_threshold > 0.0 && settings.rank_threshold < 1.0) {
        return Err(Error::InvalidInput(format!(
            "rank threshold must lie in (0, 1), got {}",
            settings.rank_threshold
        )));
    }
    settings.solver.check()
}

/// Solve a finite-horizon (reduced) plant and realize its schedule.
fn synthesize_horizon(
    plant: &TimeVaryingPlant,
    bundle: RiccatiBundle,
    problem: MaxDetProblem,
    settings: &SynthesisSettings,
) -> Result<(SynthesisDesign, f64)> {
    let sol = solve_checked(&problem, &settings.solver)?;
    let schedule = horizon_schedule(plant, &sol)?;
    let (sensor, l) = realize(&schedule, settings.rank_threshold)?;
    let control: f64 = bundle
        .theta
        .iter()
        .zip(&schedule.p_filt)
        .map(|(th, p)| (th * p).trace())
        .sum();
    let j = maxdet::tv_budget_floor(plant, &bundle) + control;
    let design = SynthesisDesign {
        kind: DesignKind::TimeVarying,
        bundle,
        schedule,
        sensor,
        l,
        prekf: None,
        noise: plant.w.clone(),
        di_bits: sol.objective_nats / LN_2,
        j_analytic: j,
        d_requested: 0.0,
        gap_estimate: sol.gap_estimate,
    };
    Ok((design, j))
}

fn horizon_problem(
    plant: &TimeVaryingPlant,
    bundle: &RiccatiBundle,
    d: f64,
) -> Result<MaxDetProblem> {
    match build_tv_problem(plant, bundle, d) {
        Err(Error::InvalidInput(msg)) if msg.contains("singular") => {
            build_tv_singular_problem(plant, bundle, d)
        }
        other => other,
    }
}

/// Finite-horizon synthesis; singular `W_t` switches to the factored-noise problem.
pub fn synthesize_tv(
    plant: &TimeVaryingPlant,
    d: f64,
    settings: &SynthesisSettings,
) -> Result<SynthesisDesign> {
    check_settings(d, settings)?;
    let bundle = backward_riccati(plant)?;
    let problem = horizon_problem(plant, &bundle, d)?;
    let (mut design, _) = synthesize_horizon(plant, bundle, problem, settings)?;
    design.d_requested = d;
    Ok(design)
}

pub fn synthesize_stationary(
    plant: &StationaryPlant,
    d: f64,
    settings: &SynthesisSettings,
) -> Result<SynthesisDesign> {
    check_settings(d, settings)?;
    let bundle = solve_are(plant)?;
    let problem = build_stationary_problem(plant, &bundle, d)?;
    let sol = solve_checked(&problem, &settings.solver)?;
    let p = linalg::symmetrize(
        sol.value("P")
            .ok_or_else(|| Error::Solver("solution lacks block P".into()))?,
    );
    let pred = linalg::symmetrize(&(&plant.a * &p * plant.a.transpose() + &plant.w));
    let schedule = CovarianceSchedule {
        p_filt: vec![p],
        p_pred: vec![pred],
    };
    let (sensor, l) = realize(&schedule, settings.rank_threshold)?;
    let j = (&plant.w * &bundle.s[0]).trace() + (&bundle.theta[0] * &schedule.p_filt[0]).trace();
    Ok(SynthesisDesign {
        kind: DesignKind::Stationary,
        bundle,
        schedule,
        sensor,
        l,
        prekf: None,
        noise: vec![plant.w.clone()],
        di_bits: sol.objective_nats / LN_2,
        j_analytic: j,
        d_requested: d,
        gap_estimate: sol.gap_estimate,
    })
}

/// Pre-filter, then the fully observed synthesis of the innovations plant.
pub fn synthesize_po(
    plant: &PartiallyObservedPlant,
    d: f64,
    settings: &SynthesisSettings,
) -> Result<SynthesisDesign> {
    check_settings(d, settings)?;
    let prekf = prekf_design(plant)?;
    let reduced = reduced_plant(plant, &prekf)?;
    let bundle = backward_riccati(&plant.base)?;
    let problem = build_po_problem(plant, &bundle, &prekf, d)?;
    let (mut design, j) = synthesize_horizon(&reduced.plant, bundle, problem, settings)?;
    design.kind = DesignKind::PartiallyObserved;
    design.j_analytic = j + reduced.cost_offset;
    design.d_requested = d;
    design.prekf = Some(prekf);
    Ok(design)
}

/// Dispatch on the plant kind.
pub fn synthesize(
    plant: &PlantModel,
    d: f64,
    settings: &SynthesisSettings,
) -> Result<SynthesisDesign> {
    match plant {
        PlantModel::Stationary(p) => synthesize_stationary(p, d, settings),
        PlantModel::TimeVarying(p) => synthesize_tv(p, d, settings),
        PlantModel::PartiallyObserved(p) => synthesize_po(p, d, settings),
    }
}

/// Smallest achievable cost: `Tr(W S)`, `c2`, or `c2` plus the pre-filter error cost.
pub fn budget_floor(plant: &PlantModel) -> Result<f64> {
    match plant {
        PlantModel::Stationary(p) => {
            let bundle = solve_are(p)?;
            Ok((&p.w * &bundle.s[0]).trace())
        }
        PlantModel::TimeVarying(p) => Ok(maxdet::tv_budget_floor(p, &backward_riccati(p)?)),
        PlantModel::PartiallyObserved(p) => {
            let reduced = reduced_plant(p, &prekf_design(p)?)?;
            let bundle = backward_riccati(&p.base)?;
            Ok(maxdet::tv_budget_floor(&reduced.plant, &bundle) + reduced.cost_offset)
        }
    }
}
