//! Max-det instances for the finite-horizon, noise-factored, stationary,
//! partially observed, and asymptotic-rate problems.
//!
//! Every builder attaches a strictly feasible starting point computed in
//! closed form, so the solver only falls back to phase I when roundoff
//! defeats it.

use nalgebra::DVector;

use super::{AffineExpr, MaxDetProblem, VariableBlock};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{PartiallyObservedPlant, StationaryPlant, TimeVaryingPlant};
use crate::riccati::RiccatiBundle;
use crate::synthesis::{reduced_plant, PreKFDesign};

/// Relative eigenvalue level below which a noise covariance counts as singular.
const SINGULAR_TOL: f64 = 1e-10;

/// Cap `P <= kappa I` on the asymptotic-rate problem. For unstable `A` the
/// infimum is only approached as `P` grows without bound; the cap leaves a
/// bias of order `|W| / kappa` per unstable mode. It is absolute rather than
/// scaled by `W`, which keeps the capped value monotone in `W`.
pub const VSTAR_COVARIANCE_CAP: f64 = 1e4;

/// Constant terms of the finite-horizon problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvConstants {
    /// Added to the log-det objective (nats).
    pub c1: f64,
    /// Cost incurred even with perfect state information.
    pub c2: f64,
}

/// Name of the filtered-covariance block of 0-based stage `t`.
pub fn p_block(t: usize) -> String {
    format!("P[{}]", t + 1)
}

fn pi_block(t: usize) -> String {
    format!("Pi[{}]", t + 1)
}

fn delta_block(t: usize) -> String {
    format!("Delta[{}]", t + 1)
}

fn check_stages(plant: &TimeVaryingPlant, bundle: &RiccatiBundle) -> Result<()> {
    if plant.horizon() == 0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    if bundle.stages() != plant.horizon() {
        return Err(Error::Dimension(format!(
            "Riccati bundle has {} stages, plant has {}",
            bundle.stages(),
            plant.horizon()
        )));
    }
    Ok(())
}

fn check_budget(d: f64) -> Result<()> {
    if d.is_finite() && d > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "budget must be a positive finite number, got {d}"
        )))
    }
}

fn is_singular(w: &Mat) -> bool {
    let top = linalg::max_eigenvalue(w).max(0.0);
    top == 0.0 || linalg::min_eigenvalue(w) < SINGULAR_TOL * top
}

/// `Tr(Phi_1 P_{1|0}) + sum_t Tr(W_t S_t)`: the smallest achievable cost.
pub fn tv_budget_floor(plant: &TimeVaryingPlant, bundle: &RiccatiBundle) -> f64 {
    (&bundle.phi[0] * &plant.p_init).trace()
        + plant
            .w
            .iter()
            .zip(&bundle.s)
            .map(|(w, s)| (w * s).trace())
            .sum::<f64>()
}

fn tv_constants(
    plant: &TimeVaryingPlant,
    bundle: &RiccatiBundle,
    factored: bool,
) -> Result<TvConstants> {
    let horizon = plant.horizon();
    let mut c1 = 0.5 * linalg::log_det_spd(&plant.p_init)?;
    for t in 0..horizon - 1 {
        c1 += if factored {
            plant.a[t].determinant().abs().ln()
        } else {
            0.5 * linalg::log_det_spd(&plant.w[t])?
        };
    }
    Ok(TvConstants {
        c1,
        c2: tv_budget_floor(plant, bundle),
    })
}

/// Covariance schedule `P_1 = P_{1|0} / 2`, `P_{t+1} = (A_t P_t A_t' + W_t) / 2`,
/// shrunk so the budget has slack.
fn initial_schedule(plant: &TimeVaryingPlant, theta: &[Mat], slack: f64) -> Vec<Mat> {
    let mut p = Vec::with_capacity(plant.horizon());
    p.push(&plant.p_init * 0.5);
    for t in 0..plant.horizon() - 1 {
        let next = (&plant.a[t] * &p[t] * plant.a[t].transpose() + &plant.w[t]) * 0.5;
        p.push(linalg::symmetrize(&next));
    }
    let usage: f64 = theta.iter().zip(&p).map(|(th, pt)| (th * pt).trace()).sum();
    if usage > 0.0 {
        let alpha = (0.5 * slack / usage).min(1.0);
        p.iter_mut().for_each(|pt| *pt *= alpha);
    }
    p
}

fn budget_lmi(d: f64, c2: f64, terms: &[(Mat, VariableBlock)]) -> AffineExpr {
    let mut expr = AffineExpr::scalar(d - c2);
    for (theta, block) in terms {
        expr = expr - AffineExpr::var(block).trace_with(theta);
    }
    expr
}

fn infeasible_floor(d: f64, floor: f64, what: &'static str) -> Result<()> {
    if !(d > floor) {
        Err(Error::Infeasible {
            budget: d,
            floor,
            what,
        })
    } else {
        Ok(())
    }
}

/// Finite-horizon problem for `W_t > 0`, with `Pi_T` replaced by `P_T`.
pub fn build_tv_problem(
    plant: &TimeVaryingPlant,
    bundle: &RiccatiBundle,
    d: f64,
) -> Result<MaxDetProblem> {
    build_tv_with_offset(plant, bundle, d, 0.0)
}

/// `offset` is cost outside the problem's control (the partially observed
/// estimation error), already subtracted from `d`; it only affects error reports.
fn build_tv_with_offset(
    plant: &TimeVaryingPlant,
    bundle: &RiccatiBundle,
    d: f64,
    offset: f64,
) -> Result<MaxDetProblem> {
    check_stages(plant, bundle)?;
    let horizon = plant.horizon();
    let n = plant.state_dim();
    if let Some(t) = (0..horizon.saturating_sub(1)).find(|&t| is_singular(&plant.w[t])) {
        return Err(Error::InvalidInput(format!(
            "W[{}] is singular; use the factored-noise formulation",
            t + 1
        )));
    }
    let consts = tv_constants(plant, bundle, false)?;
    infeasible_floor(d + offset, consts.c2 + offset, "c2")?;

    let mut prob = MaxDetProblem::new();
    prob.constant_offset = consts.c1;
    let p: Vec<VariableBlock> = (0..horizon)
        .map(|t| prob.add_block(p_block(t), n))
        .collect();
    let pi: Vec<VariableBlock> = (0..horizon - 1)
        .map(|t| prob.add_block(pi_block(t), n))
        .collect();

    for block in &pi {
        prob.add_log_det(0.5, AffineExpr::var(block));
    }
    prob.add_log_det(0.5, AffineExpr::var(&p[horizon - 1]));

    let terms: Vec<(Mat, VariableBlock)> = bundle
        .theta
        .iter()
        .cloned()
        .zip(p.iter().cloned())
        .collect();
    prob.add_lmi("budget", budget_lmi(d, consts.c2, &terms));
    prob.add_lmi(
        "P[1] <= P_init",
        AffineExpr::constant(plant.p_init.clone()) - AffineExpr::var(&p[0]),
    );
    for t in 0..horizon - 1 {
        let (a, w) = (&plant.a[t], &plant.w[t]);
        let apa =
            AffineExpr::congruence(a, &p[t], &a.transpose()) + AffineExpr::constant(w.clone());
        prob.add_lmi(
            format!("P[{}] <= A P A' + W", t + 2),
            apa.clone() - AffineExpr::var(&p[t + 1]),
        );
        let pat = AffineExpr::congruence(&Mat::identity(n, n), &p[t], &a.transpose());
        prob.add_lmi(
            format!("block LMI {}", t + 1),
            AffineExpr::block2(
                &(AffineExpr::var(&p[t]) - AffineExpr::var(&pi[t])),
                &pat,
                &pat.transpose(),
                &apa,
            ),
        );
    }

    let schedule = initial_schedule(plant, &bundle.theta, d - consts.c2);
    let mut x0 = DVector::zeros(prob.num_vars());
    for t in 0..horizon {
        p[t].pack(&schedule[t], &mut x0);
    }
    for t in 0..horizon - 1 {
        let (a, w) = (&plant.a[t], &plant.w[t]);
        let info = linalg::spd_inverse(&schedule[t])? + a.transpose() * linalg::spd_inverse(w)? * a;
        pi[t].pack(&(linalg::spd_inverse(&info)? * 0.5), &mut x0);
    }
    prob.initial_point = Some(x0);
    Ok(prob)
}

/// Finite-horizon problem with `W_t = F_t F_t'` factored, for singular noise.
/// Requires `A_t` nonsingular for `t < T`.
pub fn build_tv_singular_problem(
    plant: &TimeVaryingPlant,
    bundle: &RiccatiBundle,
    d: f64,
) -> Result<MaxDetProblem> {
    build_tv_singular_with_offset(plant, bundle, d, 0.0)
}

fn build_tv_singular_with_offset(
    plant: &TimeVaryingPlant,
    bundle: &RiccatiBundle,
    d: f64,
    offset: f64,
) -> Result<MaxDetProblem> {
    check_stages(plant, bundle)?;
    let horizon = plant.horizon();
    let n = plant.state_dim();
    for t in 0..horizon - 1 {
        let a = &plant.a[t];
        let sv = a.clone().svd(false, false).singular_values;
        let top = sv.max();
        if top == 0.0 || sv.min() < 1e-12 * top {
            return Err(Error::InvalidInput(format!(
                "A[{}] is singular; the factored-noise formulation requires nonsingular A_t for t < T",
                t + 1
            )));
        }
    }
    let consts = tv_constants(plant, bundle, true)?;
    infeasible_floor(d + offset, consts.c2 + offset, "c2")?;
    let f: Vec<Mat> = plant
        .w
        .iter()
        .map(|w| linalg::psd_factor(w, SINGULAR_TOL))
        .collect();

    let mut prob = MaxDetProblem::new();
    prob.constant_offset = consts.c1;
    let p: Vec<VariableBlock> = (0..horizon)
        .map(|t| prob.add_block(p_block(t), n))
        .collect();
    let delta: Vec<Option<VariableBlock>> = (0..horizon - 1)
        .map(|t| (f[t].ncols() > 0).then(|| prob.add_block(delta_block(t), f[t].ncols())))
        .collect();

    for block in delta.iter().flatten() {
        prob.add_log_det(0.5, AffineExpr::var(block));
    }
    prob.add_log_det(0.5, AffineExpr::var(&p[horizon - 1]));

    let terms: Vec<(Mat, VariableBlock)> = bundle
        .theta
        .iter()
        .cloned()
        .zip(p.iter().cloned())
        .collect();
    prob.add_lmi("budget", budget_lmi(d, consts.c2, &terms));
    prob.add_lmi(
        "P[1] <= P_init",
        AffineExpr::constant(plant.p_init.clone()) - AffineExpr::var(&p[0]),
    );
    for t in 0..horizon - 1 {
        let a = &plant.a[t];
        let ff = &f[t] * f[t].transpose();
        let apa = AffineExpr::congruence(a, &p[t], &a.transpose()) + AffineExpr::constant(ff);
        prob.add_lmi(format!("P[{}] > 0", t + 1), AffineExpr::var(&p[t]));
        prob.add_lmi(
            format!("P[{}] <= A P A' + F F'", t + 2),
            apa.clone() - AffineExpr::var(&p[t + 1]),
        );
        if let Some(dt) = &delta[t] {
            let r = dt.dim;
            let ident = AffineExpr::constant(Mat::identity(r, r));
            let ft = AffineExpr::constant(f[t].transpose());
            prob.add_lmi(
                format!("block LMI {}", t + 1),
                AffineExpr::block2(&(ident - AffineExpr::var(dt)), &ft, &ft.transpose(), &apa),
            );
        }
    }

    let schedule = initial_schedule(plant, &bundle.theta, d - consts.c2);
    let mut x0 = DVector::zeros(prob.num_vars());
    for t in 0..horizon {
        p[t].pack(&schedule[t], &mut x0);
    }
    for t in 0..horizon - 1 {
        if let Some(dt) = &delta[t] {
            let a = &plant.a[t];
            let apa_inv = linalg::spd_inverse(&(a * &schedule[t] * a.transpose()))?;
            let bound = Mat::identity(dt.dim, dt.dim) + f[t].transpose() * apa_inv * &f[t];
            dt.pack(&(linalg::spd_inverse(&bound)? * 0.5), &mut x0);
        }
    }
    prob.initial_point = Some(x0);
    Ok(prob)
}

/// Variables `P`, `Pi` of the stationary problem, with the block LMI and
/// `P <= A P A' + W`; the caller adds budget or cap constraints.
fn stationary_core(a: &Mat, w: &Mat) -> Result<(MaxDetProblem, VariableBlock, VariableBlock)> {
    let n = a.nrows();
    if a.ncols() != n || w.shape() != (n, n) {
        return Err(Error::Dimension(
            "A and W must be square of equal size".into(),
        ));
    }
    if is_singular(w) {
        return Err(Error::InvalidInput(
            "W is singular; the stationary problem requires W positive definite".into(),
        ));
    }
    let mut prob = MaxDetProblem::new();
    prob.constant_offset = 0.5 * linalg::log_det_spd(w)?;
    let p = prob.add_block("P", n);
    let pi = prob.add_block("Pi", n);
    prob.add_log_det(0.5, AffineExpr::var(&pi));
    let apa = AffineExpr::congruence(a, &p, &a.transpose()) + AffineExpr::constant(w.clone());
    prob.add_lmi("P <= A P A' + W", apa.clone() - AffineExpr::var(&p));
    let pat = AffineExpr::congruence(&Mat::identity(n, n), &p, &a.transpose());
    prob.add_lmi(
        "block LMI",
        AffineExpr::block2(
            &(AffineExpr::var(&p) - AffineExpr::var(&pi)),
            &pat,
            &pat.transpose(),
            &apa,
        ),
    );
    Ok((prob, p, pi))
}

/// Interior point `P = alpha I`, `Pi = (P^{-1} + A'W^{-1}A)^{-1} / 2`.
fn stationary_start(
    prob: &mut MaxDetProblem,
    p: &VariableBlock,
    pi: &VariableBlock,
    a: &Mat,
    w: &Mat,
    alpha: f64,
) -> Result<()> {
    let n = a.nrows();
    let pm = Mat::identity(n, n) * alpha;
    let info = Mat::identity(n, n) / alpha + a.transpose() * linalg::spd_inverse(w)? * a;
    let mut x0 = DVector::zeros(prob.num_vars());
    p.pack(&pm, &mut x0);
    pi.pack(&(linalg::spd_inverse(&info)? * 0.5), &mut x0);
    prob.initial_point = Some(x0);
    Ok(())
}

/// Stationary problem: minimize the per-stage rate subject to
/// `Tr(Theta P) + Tr(W S) <= D`.
pub fn build_stationary_problem(
    plant: &StationaryPlant,
    bundle: &RiccatiBundle,
    d: f64,
) -> Result<MaxDetProblem> {
    check_budget(d)?;
    let (s, theta) = (&bundle.s[0], &bundle.theta[0]);
    let floor = (&plant.w * s).trace();
    infeasible_floor(d, floor, "Tr(WS)")?;
    let (mut prob, p, pi) = stationary_core(&plant.a, &plant.w)?;
    prob.add_lmi(
        "budget",
        budget_lmi(d, floor, &[(theta.clone(), p.clone())]),
    );

    let mut alpha = 0.5 * linalg::min_eigenvalue(&plant.w);
    let usage = theta.trace();
    if usage > 0.0 {
        alpha = alpha.min(0.5 * (d - floor) / usage);
    }
    stationary_start(&mut prob, &p, &pi, &plant.a, &plant.w, alpha)?;
    Ok(prob)
}

/// Partially observed problem: the fully observed problem for the
/// innovations plant driven by `Psi_t`, started from `Cov(x~_1)`, with the
/// budget reduced by the irreducible estimation cost. Singular `Psi_t` uses
/// the factored-noise formulation.
pub fn build_po_problem(
    plant: &PartiallyObservedPlant,
    bundle: &RiccatiBundle,
    prekf: &PreKFDesign,
    d: f64,
) -> Result<MaxDetProblem> {
    check_budget(d)?;
    let reduced = reduced_plant(plant, prekf)?;
    let d_reduced = d - reduced.cost_offset;
    let horizon = reduced.plant.horizon();
    if (0..horizon.saturating_sub(1)).any(|t| is_singular(&reduced.plant.w[t])) {
        build_tv_singular_with_offset(&reduced.plant, bundle, d_reduced, reduced.cost_offset)
    } else {
        build_tv_with_offset(&reduced.plant, bundle, d_reduced, reduced.cost_offset)
    }
}

/// Asymptotic rate problem: infimum over `P <= A P A' + W` of
/// `1/2 log det(A P A' + W) - 1/2 log det P`, with `P <= kappa I`.
pub fn build_vstar_problem(a: &Mat, w: &Mat) -> Result<MaxDetProblem> {
    build_vstar_problem_capped(a, w, VSTAR_COVARIANCE_CAP)
}

/// Same as [`build_vstar_problem`] with an explicit cap `P <= kappa I`.
pub fn build_vstar_problem_capped(a: &Mat, w: &Mat, kappa: f64) -> Result<MaxDetProblem> {
    let (mut prob, p, pi) = stationary_core(a, w)?;
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidInput(format!(
            "covariance cap must be positive and finite, got {kappa}"
        )));
    }
    let n = a.nrows();
    prob.add_lmi(
        "P <= kappa I",
        AffineExpr::constant(Mat::identity(n, n) * kappa) - AffineExpr::var(&p),
    );
    let alpha = 0.5 * linalg::min_eigenvalue(w);
    stationary_start(&mut prob, &p, &pi, a, w, alpha)?;
    Ok(prob)
}
