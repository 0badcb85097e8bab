//! Path-following barrier method for max-det problems.
//!
//! Each centering step minimizes
//! `t (c'x - sum_j w_j log det G_j(x)) - sum_k log det F_k(x)`
//! by damped Newton; `t` grows geometrically until `theta / t` drops below the
//! tolerance, with `theta` the summed LMI dimensions.

use nalgebra::{DMatrix, DVector};

use super::{AffineExpr, MaxDetProblem, MaxDetSolution, SolveStatus, SolverSettings};
use crate::error::Result;
use crate::linalg::{self, Mat};

/// Centering is considered done once half the squared Newton decrement is below this.
const NEWTON_DECREMENT_TOL: f64 = 1e-10;
/// Relative precision assumed for barrier values.
const VALUE_ROUNDOFF: f64 = 1e-12;
/// Once roundoff stops Newton steps from paying off, an iterate whose half
/// squared decrement is below this is close enough to the center for the
/// `theta / t` gap bound to hold up to a small factor.
const QUADRATIC_REGION: f64 = 0.25;
const MAX_OUTER: usize = 200;
/// Iterates this far from the origin signal an unbounded problem.
const DIVERGENCE_NORM: f64 = 1e12;

struct Term<'a> {
    expr: &'a AffineExpr,
    /// Multiplier on `-log det`; log-det objective terms get `t * w`.
    objective_weight: Option<f64>,
}

struct Barrier<'a> {
    linear: &'a [f64],
    terms: Vec<Term<'a>>,
    n: usize,
}

struct Derivatives {
    value: f64,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
}

impl<'a> Barrier<'a> {
    fn new(problem: &'a MaxDetProblem) -> Self {
        let mut terms: Vec<Term<'a>> = problem
            .constraints
            .iter()
            .map(|c| Term {
                expr: &c.expr,
                objective_weight: None,
            })
            .collect();
        terms.extend(problem.log_det.iter().map(|l| Term {
            expr: &l.expr,
            objective_weight: Some(l.weight),
        }));
        Barrier {
            linear: &problem.linear,
            terms,
            n: problem.num_vars(),
        }
    }

    fn weight(term: &Term<'_>, t: f64) -> f64 {
        term.objective_weight.map_or(1.0, |w| t * w)
    }

    fn value(&self, x: &DVector<f64>, t: f64) -> Option<f64> {
        let mut v = t * self
            .linear
            .iter()
            .zip(x.iter())
            .map(|(c, xi)| c * xi)
            .sum::<f64>();
        for term in &self.terms {
            let m = term.expr.eval(x);
            if m.nrows() == 0 {
                continue;
            }
            let chol = m.cholesky()?;
            let log_det = 2.0
                * chol
                    .l_dirty()
                    .diagonal()
                    .iter()
                    .map(|d| d.ln())
                    .sum::<f64>();
            v -= Self::weight(term, t) * log_det;
        }
        v.is_finite().then_some(v)
    }

    fn derivatives(&self, x: &DVector<f64>, t: f64) -> Option<Derivatives> {
        let mut value = t * self
            .linear
            .iter()
            .zip(x.iter())
            .map(|(c, xi)| c * xi)
            .sum::<f64>();
        let mut gradient = DVector::from_iterator(self.n, self.linear.iter().map(|c| t * c));
        let mut hessian = DMatrix::zeros(self.n, self.n);
        for term in &self.terms {
            let m = term.expr.eval(x);
            if m.nrows() == 0 {
                continue;
            }
            let alpha = Self::weight(term, t);
            let chol = m.cholesky()?;
            value -= alpha
                * 2.0
                * chol
                    .l_dirty()
                    .diagonal()
                    .iter()
                    .map(|d| d.ln())
                    .sum::<f64>();
            let inv = chol.inverse();
            // Y_i = F^{-1} F_i; grad_i = -Tr(Y_i), hess_ij = Tr(Y_i Y_j)
            let ys: Vec<(usize, Mat)> = term
                .expr
                .terms
                .iter()
                .map(|(&i, fi)| (i, &inv * fi))
                .collect();
            for (a, (i, yi)) in ys.iter().enumerate() {
                gradient[*i] -= alpha * yi.trace();
                for (j, yj) in ys.iter().skip(a) {
                    let tr = yi.component_mul(&yj.transpose()).sum();
                    hessian[(*i, *j)] += alpha * tr;
                    if i != j {
                        hessian[(*j, *i)] += alpha * tr;
                    }
                }
            }
        }
        value.is_finite().then_some(Derivatives {
            value,
            gradient,
            hessian,
        })
    }

    /// Square-root factor `J` of the Hessian, `H = J'J`: column `i` stacks
    /// `sqrt(alpha) L^{-1} F_i L^{-T}` over all terms, `F = L L'`.
    fn jacobian(&self, x: &DVector<f64>, t: f64) -> Option<DMatrix<f64>> {
        let rows = self
            .terms
            .iter()
            .map(|term| term.expr.constant.nrows().pow(2))
            .sum();
        let mut jac = DMatrix::zeros(rows, self.n);
        let mut offset = 0;
        for term in &self.terms {
            let m = term.expr.eval(x);
            let dim = m.nrows();
            if dim == 0 {
                continue;
            }
            let scale = Self::weight(term, t).sqrt();
            let l = m.cholesky()?.unpack();
            for (&i, fi) in &term.expr.terms {
                let half = l.solve_lower_triangular(fi)?;
                let z = l.solve_lower_triangular(&half.transpose())?;
                jac.view_mut((offset, i), (dim * dim, 1))
                    .copy_from_slice((z * scale).as_slice());
            }
            offset += dim * dim;
        }
        Some(jac)
    }
}

/// Reciprocal condition number of the scaled Hessian below which the Newton
/// system is solved from a QR factorization of the Hessian's square root.
const SQRT_SWITCH: f64 = 1e-10;

/// Solve `H dx = -g` after symmetric Jacobi scaling. When the scaled Hessian
/// is too ill-conditioned to trust, `H = J'J` is refactored as `R'R` from a
/// QR decomposition of `J`, which avoids squaring the condition number.
fn newton_direction(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    jacobian: impl FnOnce() -> Option<DMatrix<f64>>,
) -> Option<DVector<f64>> {
    let n = h.nrows();
    let scale = DVector::from_iterator(
        n,
        h.diagonal()
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 }),
    );
    let hs = DMatrix::from_fn(n, n, |i, j| h[(i, j)] * scale[i] * scale[j]);
    let gs = g.component_mul(&scale);
    if let Some(chol) = hs.clone().cholesky() {
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        if (lo / hi).powi(2) > SQRT_SWITCH {
            return Some(-chol.solve(&gs).component_mul(&scale));
        }
    }
    let mut jac = jacobian()?;
    for (j, mut col) in jac.column_iter_mut().enumerate() {
        col *= scale[j];
    }
    if jac.nrows() < n {
        return None;
    }
    let r = jac.qr().r();
    let top = r.diagonal().amax();
    if !(top > 0.0) || !top.is_finite() {
        return None;
    }
    // Columns the barrier cannot see at all are held fixed.
    let mut r = r;
    for k in 0..n {
        if r[(k, k)].abs() <= top * f64::EPSILON {
            r[(k, k)] = top * f64::EPSILON;
        }
    }
    let z = r.tr_solve_upper_triangular(&gs)?;
    let dx = r.solve_upper_triangular(&z)?;
    Some(-dx.component_mul(&scale))
}

enum Centering {
    Done,
    /// Early-exit predicate fired.
    Stopped,
    Failed(String),
}

struct PathFollower<'a> {
    barrier: Barrier<'a>,
    settings: &'a SolverSettings,
    theta: f64,
    iterations: usize,
}

impl PathFollower<'_> {
    fn center(
        &mut self,
        x: &mut DVector<f64>,
        t: f64,
        stop: &dyn Fn(&DVector<f64>) -> bool,
    ) -> Centering {
        let mut idle = 0;
        for _ in 0..self.settings.max_newton {
            let Some(d) = self.barrier.derivatives(x, t) else {
                return Centering::Failed("iterate left the feasible region".into());
            };
            let Some(dx) =
                newton_direction(&d.hessian, &d.gradient, || self.barrier.jacobian(x, t))
            else {
                return Centering::Failed("singular Newton system".into());
            };
            let slope = d.gradient.dot(&dx);
            let decrement = -slope;
            // The achievable decrease is bounded by roundoff in the barrier value.
            let floor = NEWTON_DECREMENT_TOL.max(VALUE_ROUNDOFF * d.value.abs());
            if decrement / 2.0 <= floor {
                return Centering::Done;
            }
            let mut step = 1.0;
            let accepted = loop {
                let trial = &*x + &dx * step;
                if let Some(v) = self.barrier.value(&trial, t) {
                    if v < d.value && v <= d.value + self.settings.armijo * step * slope {
                        break Some(trial);
                    }
                }
                step *= self.settings.backtrack;
                if step < 1e-14 {
                    break None;
                }
            };
            self.iterations += 1;
            match accepted {
                Some(next) => {
                    // Near the center the Newton system can be too ill-conditioned to make
                    // further progress; a few idle steps inside the quadratic region suffice.
                    let gained = d.value - self.barrier.value(&next, t).unwrap_or(d.value);
                    idle = if gained <= 1e-9 * (1.0 + d.value.abs()) {
                        idle + 1
                    } else {
                        0
                    };
                    *x = next;
                    if idle >= 5 && decrement / 2.0 <= QUADRATIC_REGION {
                        return Centering::Done;
                    }
                    if idle >= 20 {
                        return Centering::Failed(format!(
                            "Newton steps stagnate (decrement {decrement:.3e})"
                        ));
                    }
                }
                None if decrement / 2.0 <= QUADRATIC_REGION => return Centering::Done,
                None => {
                    return Centering::Failed(format!(
                        "line search stalled (decrement {decrement:.3e})"
                    ))
                }
            }
            if x.norm() > DIVERGENCE_NORM {
                return Centering::Failed("iterates diverge; the problem looks unbounded".into());
            }
            if stop(x) {
                return Centering::Stopped;
            }
        }
        Centering::Failed(format!(
            "centering did not converge within {} Newton steps",
            self.settings.max_newton
        ))
    }

    /// Follow the central path from a strictly feasible `x`; returns the final `t`.
    fn run(
        &mut self,
        x: &mut DVector<f64>,
        stop: &dyn Fn(&DVector<f64>) -> bool,
    ) -> std::result::Result<(f64, bool), String> {
        let mut t = 1.0;
        for _ in 0..MAX_OUTER {
            match self.center(x, t, stop) {
                Centering::Done => {}
                Centering::Stopped => return Ok((t, true)),
                Centering::Failed(msg) => return Err(msg),
            }
            if self.theta / t < self.settings.tolerance {
                return Ok((t, false));
            }
            t *= self.settings.growth;
        }
        Err("barrier parameter limit reached".into())
    }
}

fn strictly_feasible(problem: &MaxDetProblem, x: &DVector<f64>) -> bool {
    problem
        .constraints
        .iter()
        .map(|c| &c.expr)
        .chain(problem.log_det.iter().map(|l| &l.expr))
        .all(|e| e.nrows() == 0 || e.eval(x).cholesky().is_some())
}

enum PhaseOne {
    Feasible(DVector<f64>),
    Infeasible(f64),
    Failed(String),
}

/// Minimize `s` subject to `F_k(x) + s I >= 0`, `G_j(x) + s I >= 0`, `s >= -1`,
/// inside a large box on `x`.
fn phase_one(
    problem: &MaxDetProblem,
    start: &DVector<f64>,
    settings: &SolverSettings,
    iterations: &mut usize,
) -> PhaseOne {
    let n = problem.num_vars();
    let s_index = n;
    let mut aux = MaxDetProblem::new();
    aux.blocks = problem.blocks.clone();
    aux.add_block("__phase1_s", 1);
    aux.linear = vec![0.0; n + 1];
    aux.linear[s_index] = 1.0;

    let shifted = |e: &AffineExpr| {
        let mut e = e.clone();
        if e.nrows() > 0 {
            e.terms.insert(s_index, Mat::identity(e.nrows(), e.nrows()));
        }
        e
    };
    let mut worst = 0.0f64;
    for (label, expr) in problem
        .constraints
        .iter()
        .map(|c| (c.label.clone(), &c.expr))
        .chain(
            problem
                .log_det
                .iter()
                .map(|l| ("log-det domain".to_string(), &l.expr)),
        )
    {
        if expr.nrows() == 0 {
            continue;
        }
        worst = worst.max(-linalg::min_eigenvalue(&expr.eval(start)));
        aux.add_lmi(label, shifted(expr));
    }
    let mut lower = AffineExpr::scalar(1.0);
    lower.terms.insert(s_index, Mat::from_element(1, 1, 1.0));
    aux.add_lmi("s >= -1", lower);
    let radius = 1e6 * (1.0 + start.amax());
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = AffineExpr::scalar(radius);
            e.terms.insert(i, Mat::from_element(1, 1, -sign));
            aux.add_lmi("box", e);
        }
    }

    let mut x = DVector::zeros(n + 1);
    x.rows_mut(0, n).copy_from(start);
    x[s_index] = worst.max(0.0) + 1.0;

    let exit_level = -1e-3;
    let mut follower = PathFollower {
        barrier: Barrier::new(&aux),
        settings,
        theta: aux.barrier_parameter() as f64,
        iterations: 0,
    };
    let outcome = follower.run(&mut x, &|x: &DVector<f64>| x[s_index] < exit_level);
    *iterations += follower.iterations;
    let s = x[s_index];
    let point = x.rows(0, n).into_owned();
    match outcome {
        Ok(_) if s < -settings.phase1_margin && strictly_feasible(problem, &point) => {
            PhaseOne::Feasible(point)
        }
        Ok(_) => PhaseOne::Infeasible(s),
        Err(msg) => PhaseOne::Failed(msg),
    }
}

fn finish(
    problem: &MaxDetProblem,
    status: SolveStatus,
    x: DVector<f64>,
    iterations: usize,
    gap: f64,
    message: Option<String>,
) -> MaxDetSolution {
    let values = problem
        .blocks
        .iter()
        .map(|b| (b.name.clone(), b.unpack(&x)))
        .collect();
    MaxDetSolution {
        status,
        objective_nats: problem.objective_at(&x).unwrap_or(f64::NAN),
        min_constraint_eig: problem.min_constraint_eig(&x),
        values,
        x,
        iterations,
        gap_estimate: gap,
        phase1_infeasibility: None,
        message,
    }
}

/// Solve a max-det problem. Errors only for malformed problems or settings;
/// infeasibility and numerical trouble are reported through the status.
pub fn solve(problem: &MaxDetProblem, settings: &SolverSettings) -> Result<MaxDetSolution> {
    problem.check()?;
    settings.check()?;
    let n = problem.num_vars();
    let mut iterations = 0;

    let start = problem
        .initial_point
        .clone()
        .unwrap_or_else(|| DVector::zeros(n));
    let mut x = if strictly_feasible(problem, &start) {
        start
    } else {
        match phase_one(problem, &start, settings, &mut iterations) {
            PhaseOne::Feasible(x) => x,
            PhaseOne::Infeasible(s) => {
                let mut sol = finish(
                    problem,
                    SolveStatus::Infeasible,
                    start,
                    iterations,
                    f64::INFINITY,
                    None,
                );
                sol.phase1_infeasibility = Some(s);
                sol.message = Some(format!(
                    "no strictly feasible point (minimized infeasibility {s:.3e})"
                ));
                return Ok(sol);
            }
            PhaseOne::Failed(msg) => {
                return Ok(finish(
                    problem,
                    SolveStatus::NumericalFailure,
                    start,
                    iterations,
                    f64::INFINITY,
                    Some(format!("phase I: {msg}")),
                ))
            }
        }
    };

    let theta = problem.barrier_parameter() as f64;
    let mut follower = PathFollower {
        barrier: Barrier::new(problem),
        settings,
        theta,
        iterations: 0,
    };
    let outcome = follower.run(&mut x, &|_: &DVector<f64>| false);
    iterations += follower.iterations;
    Ok(match outcome {
        Ok((t, _)) => finish(
            problem,
            SolveStatus::Optimal,
            x,
            iterations,
            theta / t,
            None,
        ),
        Err(msg) => finish(
            problem,
            SolveStatus::NumericalFailure,
            x,
            iterations,
            f64::INFINITY,
            Some(msg),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxdet::AffineExpr;
    use approx::assert_relative_eq;

    #[test]
    fn identity_bound_optimum() {
        let mut p = MaxDetProblem::new();
        let pi = p.add_block("Pi", 1);
        p.add_log_det(1.0, AffineExpr::var(&pi));
        p.add_lmi("Pi <= 1", AffineExpr::scalar(1.0) - AffineExpr::var(&pi));
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert!(sol.is_optimal());
        assert_relative_eq!(sol.value("Pi").unwrap()[(0, 0)], 1.0, epsilon = 1e-7);
        assert!(sol.objective_nats.abs() < 1e-7);
        assert!(sol.gap_estimate <= 1e-8);
    }

    #[test]
    fn trace_budget_optimum() {
        let mut p = MaxDetProblem::new();
        let big = p.add_block("P", 1);
        let pi = p.add_block("Pi", 1);
        p.add_log_det(1.0, AffineExpr::var(&pi));
        p.add_lmi("Pi <= P", AffineExpr::var(&big) - AffineExpr::var(&pi));
        p.add_lmi("tr P <= 2", AffineExpr::scalar(2.0) - AffineExpr::var(&big));
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert!(sol.is_optimal());
        assert_relative_eq!(sol.objective_nats, -(2f64.ln()), epsilon = 1e-7);
        assert_relative_eq!(sol.value("P").unwrap()[(0, 0)], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn empty_feasible_set_is_infeasible() {
        let mut p = MaxDetProblem::new();
        let pi = p.add_block("Pi", 1);
        p.add_log_det(1.0, AffineExpr::var(&pi));
        p.add_lmi("Pi >= 2", AffineExpr::var(&pi) - AffineExpr::scalar(2.0));
        p.add_lmi("Pi <= 1", AffineExpr::scalar(1.0) - AffineExpr::var(&pi));
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(sol.phase1_infeasibility.unwrap() > 1e-6);
    }

    #[test]
    fn matrix_log_det_with_linear_cost() {
        // min tr(X) - log det X  has optimum X = I, value n.
        let mut p = MaxDetProblem::new();
        let x = p.add_block("X", 3);
        p.add_linear_trace(&x, &Mat::identity(3, 3));
        p.add_log_det(1.0, AffineExpr::var(&x));
        p.add_lmi(
            "X <= 10 I",
            AffineExpr::constant(Mat::identity(3, 3) * 10.0) - AffineExpr::var(&x),
        );
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert!(sol.is_optimal(), "{:?}", sol.message);
        assert_relative_eq!(sol.objective_nats, 3.0, epsilon = 1e-7);
        let err = (sol.value("X").unwrap() - Mat::identity(3, 3)).norm();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn malformed_problem_is_an_error() {
        let mut p = MaxDetProblem::new();
        let x = p.add_block("X", 1);
        p.linear[x.offset] = 1.0;
        assert!(solve(&p, &SolverSettings::default()).is_err());
        let bad = SolverSettings {
            growth: 1.0,
            ..SolverSettings::default()
        };
        assert!(bad.check().is_err());
    }
}
