//! Determinant-maximization problems: minimize `c'x - sum_j w_j log det G_j(x)`
//! subject to affine LMIs `F_k(x) >= 0`, plus builders for the synthesis
//! problems.

mod builders;
mod expr;
mod solver;

pub use builders::{
    build_po_problem, build_stationary_problem, build_tv_problem, build_tv_singular_problem,
    build_vstar_problem, build_vstar_problem_capped, p_block, tv_budget_floor, TvConstants,
    VSTAR_COVARIANCE_CAP,
};
pub use expr::{smat, svec, AffineExpr, VariableBlock};
pub use solver::solve;

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, PartialEq)]
pub struct LogDetTerm {
    pub weight: f64,
    pub expr: AffineExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiConstraint {
    pub label: String,
    pub expr: AffineExpr,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaxDetProblem {
    pub blocks: Vec<VariableBlock>,
    /// Linear objective over the stacked variable vector.
    pub linear: Vec<f64>,
    /// Terms `weight * log det G(x)` subtracted from the objective; each `G` must stay positive definite.
    pub log_det: Vec<LogDetTerm>,
    pub constraints: Vec<LmiConstraint>,
    pub constant_offset: f64,
    /// Optional strictly feasible starting point.
    pub initial_point: Option<DVector<f64>>,
}

impl MaxDetProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn add_block(&mut self, name: impl Into<String>, dim: usize) -> VariableBlock {
        let block = VariableBlock {
            name: name.into(),
            dim,
            offset: self.num_vars(),
        };
        self.blocks.push(block.clone());
        self.linear.resize(self.num_vars(), 0.0);
        block
    }

    pub fn block(&self, name: &str) -> Option<&VariableBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Require `expr >= 0`.
    pub fn add_lmi(&mut self, label: impl Into<String>, expr: AffineExpr) {
        self.constraints.push(LmiConstraint {
            label: label.into(),
            expr,
        });
    }

    /// Subtract `weight * log det expr` from the objective.
    pub fn add_log_det(&mut self, weight: f64, expr: AffineExpr) {
        self.log_det.push(LogDetTerm { weight, expr });
    }

    /// Add `Tr(weight * X)` for block `X` to the linear objective.
    pub fn add_linear_trace(&mut self, block: &VariableBlock, weight: &Mat) {
        let coeffs = svec(&linalg::symmetrize(weight));
        for (k, c) in coeffs.iter().enumerate() {
            self.linear[block.offset + k] += c;
        }
    }

    /// Total self-concordance parameter of the constraint barrier.
    pub fn barrier_parameter(&self) -> usize {
        self.constraints.iter().map(|c| c.expr.nrows()).sum()
    }

    /// Objective value at `x`, or `None` outside the domain of the log-det terms.
    pub fn objective_at(&self, x: &DVector<f64>) -> Option<f64> {
        let mut value = self.constant_offset;
        value += self
            .linear
            .iter()
            .zip(x.iter())
            .map(|(c, xi)| c * xi)
            .sum::<f64>();
        for term in &self.log_det {
            value -= term.weight * linalg::log_det_spd(&term.expr.eval(x)).ok()?;
        }
        Some(value)
    }

    /// Smallest eigenvalue over all LMIs at `x`.
    pub fn min_constraint_eig(&self, x: &DVector<f64>) -> f64 {
        self.constraints
            .iter()
            .map(|c| linalg::min_eigenvalue(&c.expr.eval(x)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Check shapes, symmetry, and that every objective variable is constrained.
    pub fn check(&self) -> Result<()> {
        let n = self.num_vars();
        if self.linear.len() != n {
            return Err(Error::InvalidInput(
                "linear objective length mismatch".into(),
            ));
        }
        let exprs = self
            .constraints
            .iter()
            .map(|c| (c.label.as_str(), &c.expr))
            .chain(self.log_det.iter().map(|t| ("log-det term", &t.expr)));
        let mut constrained = vec![false; n];
        for (label, expr) in exprs {
            if !expr.is_symmetric(1e-12) {
                return Err(Error::InvalidInput(format!(
                    "{label}: expression is not symmetric"
                )));
            }
            if expr.max_index().is_some_and(|i| i >= n) {
                return Err(Error::InvalidInput(format!(
                    "{label}: variable index out of range"
                )));
            }
            for &i in expr.terms.keys() {
                constrained[i] = true;
            }
        }
        for term in &self.log_det {
            if !(term.weight > 0.0) {
                return Err(Error::InvalidInput(
                    "log-det weights must be positive".into(),
                ));
            }
        }
        if let Some(i) = (0..n).find(|&i| self.linear[i] != 0.0 && !constrained[i]) {
            return Err(Error::InvalidInput(format!(
                "objective variable {i} appears in no constraint"
            )));
        }
        if let Some(x0) = &self.initial_point {
            if x0.len() != n {
                return Err(Error::InvalidInput("initial point length mismatch".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxDetSolution {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub values: BTreeMap<String, Mat>,
    /// Objective in nats, including the constant offset.
    pub objective_nats: f64,
    pub iterations: usize,
    /// Barrier bound on suboptimality, `theta / t`.
    pub gap_estimate: f64,
    pub min_constraint_eig: f64,
    /// Minimized max-infeasibility when phase I failed.
    pub phase1_infeasibility: Option<f64>,
    pub message: Option<String>,
}

impl MaxDetSolution {
    pub fn value(&self, name: &str) -> Option<&Mat> {
        self.values.get(name)
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Stop when the barrier gap bound falls below this.
    pub tolerance: f64,
    pub growth: f64,
    pub max_newton: usize,
    pub backtrack: f64,
    pub armijo: f64,
    pub phase1_margin: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-8,
            growth: 10.0,
            max_newton: 100,
            backtrack: 0.5,
            armijo: 0.01,
            phase1_margin: 1e-6,
        }
    }
}

impl SolverSettings {
    pub fn check(&self) -> Result<()> {
        let positive = [
            self.tolerance,
            self.backtrack,
            self.armijo,
            self.phase1_margin,
        ]
        .iter()
        .all(|&v| v > 0.0 && v.is_finite());
        if !positive
            || self.max_newton == 0
            || !(self.growth > 1.0)
            || self.backtrack >= 1.0
            || self.armijo >= 0.5
        {
            return Err(Error::InvalidInput(format!(
                "invalid solver settings {self:?}"
            )));
        }
        Ok(())
    }
}
