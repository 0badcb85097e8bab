//! Plant descriptions, their validation, and the plant file format.

pub(crate) mod file;
pub mod fixtures;

pub use file::{load_plant, parse_plant, plant_to_json, save_plant};

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Finite-horizon plant `x_{t+1} = A_t x_t + B_t u_t + w_t`, `t = 0..T-1` (stage index is 0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVaryingPlant {
    pub a: Vec<Mat>,
    pub b: Vec<Mat>,
    pub w: Vec<Mat>,
    pub q: Vec<Mat>,
    pub r: Vec<Mat>,
    /// Covariance of the initial state `x_1`.
    pub p_init: Mat,
}

impl TimeVaryingPlant {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn state_dim(&self) -> usize {
        self.p_init.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.first().map_or(0, |b| b.ncols())
    }

    /// Repeat a time-invariant plant over `horizon` stages.
    pub fn from_stationary(plant: &StationaryPlant, horizon: usize, p_init: Mat) -> Self {
        TimeVaryingPlant {
            a: vec![plant.a.clone(); horizon],
            b: vec![plant.b.clone(); horizon],
            w: vec![plant.w.clone(); horizon],
            q: vec![plant.q.clone(); horizon],
            r: vec![plant.r.clone(); horizon],
            p_init,
        }
    }
}

/// Time-invariant plant for the infinite-horizon average-cost problem.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPlant {
    pub a: Mat,
    pub b: Mat,
    pub w: Mat,
    pub q: Mat,
    pub r: Mat,
    /// Optional initial covariance; only used when simulating.
    pub p_init: Option<Mat>,
}

impl StationaryPlant {
    pub fn new(a: Mat, b: Mat, w: Mat, q: Mat, r: Mat) -> Self {
        StationaryPlant {
            a,
            b,
            w,
            q,
            r,
            p_init: None,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Time-varying plant observed through `y_t = H_t x_t + g_t`.
///
/// `h`/`g` hold either `T` or `T + 1` entries. The pre-filter needs a
/// measurement at `T + 1`; with `T` entries the last one is reused there.
#[derive(Debug, Clone, PartialEq)]
pub struct PartiallyObservedPlant {
    pub base: TimeVaryingPlant,
    pub h: Vec<Mat>,
    pub g: Vec<Mat>,
}

impl PartiallyObservedPlant {
    pub fn output_dim(&self) -> usize {
        self.h.first().map_or(0, |h| h.nrows())
    }

    /// Observation matrix at 0-based stage `t`, `t <= T`.
    pub fn h_at(&self, t: usize) -> &Mat {
        &self.h[t.min(self.h.len() - 1)]
    }

    pub fn g_at(&self, t: usize) -> &Mat {
        &self.g[t.min(self.g.len() - 1)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlantModel {
    Stationary(StationaryPlant),
    TimeVarying(TimeVaryingPlant),
    PartiallyObserved(PartiallyObservedPlant),
}

impl PlantModel {
    pub fn kind(&self) -> &'static str {
        match self {
            PlantModel::Stationary(_) => "stationary",
            PlantModel::TimeVarying(_) => "tv",
            PlantModel::PartiallyObserved(_) => "po",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            PlantModel::Stationary(p) => p.state_dim(),
            PlantModel::TimeVarying(p) => p.state_dim(),
            PlantModel::PartiallyObserved(p) => p.base.state_dim(),
        }
    }

    /// Run the validation matching the plant's kind.
    pub fn validate(&mut self) -> Result<ValidationReport> {
        match self {
            PlantModel::Stationary(p) => validate_stationary(p),
            PlantModel::TimeVarying(p) => validate_tv_plant(p),
            PlantModel::PartiallyObserved(p) => validate_po_plant(p),
        }
    }
}

/// LQG cost budget `D > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Budget(f64);

impl Budget {
    pub fn new(d: f64) -> Result<Self> {
        if d.is_finite() && d > 0.0 {
            Ok(Budget(d))
        } else {
            Err(Error::InvalidInput(format!(
                "budget must be a positive finite number, got {d}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Outcome of a successful validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    /// Matrices that were nearly symmetric and got symmetrized in place.
    pub symmetrized: Vec<String>,
}

impl ValidationReport {
    pub fn symmetrization_applied(&self) -> bool {
        !self.symmetrized.is_empty()
    }
}

const SYM_TOL: f64 = 1e-9;

struct Checker {
    issues: Vec<String>,
    report: ValidationReport,
}

impl Checker {
    fn new() -> Self {
        Checker {
            issues: Vec::new(),
            report: ValidationReport::default(),
        }
    }

    fn shape(&mut self, m: &Mat, rows: usize, cols: usize, name: &str) -> bool {
        if m.nrows() != rows || m.ncols() != cols {
            self.issues.push(format!(
                "{name} is {}x{}, expected {rows}x{cols}",
                m.nrows(),
                m.ncols()
            ));
            return false;
        }
        if m.iter().any(|x| !x.is_finite()) {
            self.issues.push(format!("{name} has non-finite entries"));
            return false;
        }
        true
    }

    fn symmetric(&mut self, m: &mut Mat, name: &str) -> bool {
        let asym = linalg::asymmetry(m);
        if asym == 0.0 {
            return true;
        }
        if asym <= SYM_TOL * (1.0 + linalg::norm(m)) {
            *m = linalg::symmetrize(m);
            self.report.symmetrized.push(name.to_string());
            true
        } else {
            self.issues
                .push(format!("{name} is not symmetric (asymmetry {asym:.3e})"));
            false
        }
    }

    fn psd(&mut self, m: &mut Mat, n: usize, name: &str) {
        if self.shape(m, n, n, name) && self.symmetric(m, name) && !linalg::is_psd(m) {
            self.issues
                .push(format!("{name} not positive semidefinite"));
        }
    }

    fn pd(&mut self, m: &mut Mat, n: usize, name: &str) {
        if self.shape(m, n, n, name) && self.symmetric(m, name) && !linalg::is_pd(m) {
            self.issues.push(format!("{name} not positive definite"));
        }
    }

    fn finish(self) -> Result<ValidationReport> {
        if self.issues.is_empty() {
            Ok(self.report)
        } else if self.issues.iter().all(|i| i.contains(", expected ")) {
            Err(Error::Dimension(self.issues.join("; ")))
        } else {
            Err(Error::Validation(self.issues))
        }
    }
}

fn check_tv(plant: &mut TimeVaryingPlant, c: &mut Checker) {
    let horizon = plant.horizon();
    if horizon == 0 {
        c.issues.push("horizon T must be positive".into());
        return;
    }
    let n = plant.p_init.nrows();
    let m = plant.input_dim();
    for (name, len) in [
        ("B", plant.b.len()),
        ("W", plant.w.len()),
        ("Q", plant.q.len()),
        ("R", plant.r.len()),
    ] {
        if len != horizon {
            c.issues
                .push(format!("{name} has {len} stages, expected {horizon}"));
        }
    }
    if !c.issues.is_empty() {
        return;
    }
    c.pd(&mut plant.p_init, n, "P_init");
    for t in 0..horizon {
        let tag = |s: &str| {
            if horizon == 1 {
                s.to_string()
            } else {
                format!("{s}[{t}]")
            }
        };
        c.shape(&plant.a[t], n, n, &tag("A"));
        c.shape(&plant.b[t], n, m, &tag("B"));
        c.psd(&mut plant.w[t], n, &tag("W"));
        c.psd(&mut plant.q[t], n, &tag("Q"));
        c.pd(&mut plant.r[t], m, &tag("R"));
    }
}

/// Check dimensions and definiteness of a finite-horizon plant, symmetrizing
/// nearly-symmetric inputs in place.
pub fn validate_tv_plant(plant: &mut TimeVaryingPlant) -> Result<ValidationReport> {
    let mut c = Checker::new();
    check_tv(plant, &mut c);
    c.finish()
}

/// Validation for the partially observed plant: the base plant plus `W_t > 0`,
/// full-row-rank `H_t`, and PSD `G_t`.
pub fn validate_po_plant(plant: &mut PartiallyObservedPlant) -> Result<ValidationReport> {
    let mut c = Checker::new();
    check_tv(&mut plant.base, &mut c);
    if !c.issues.is_empty() {
        return c.finish();
    }
    let horizon = plant.base.horizon();
    let n = plant.base.state_dim();
    for t in 0..horizon {
        if !linalg::is_pd(&plant.base.w[t]) {
            c.issues.push(format!(
                "W[{t}] not positive definite (required with partial observation)"
            ));
        }
    }
    let len_ok = |len: usize| len == horizon || len == horizon + 1;
    if !len_ok(plant.h.len()) || !len_ok(plant.g.len()) {
        c.issues.push(format!(
            "H and G need T or T+1 stages (T = {horizon}), got {} and {}",
            plant.h.len(),
            plant.g.len()
        ));
        return c.finish();
    }
    let p = plant.output_dim();
    for t in 0..plant.h.len() {
        if c.shape(&plant.h[t], p, n, &format!("H[{t}]")) && linalg::rank(&plant.h[t], 1e-10) < p {
            c.issues.push(format!("H[{t}] does not have full row rank"));
        }
    }
    for t in 0..plant.g.len() {
        c.psd(&mut plant.g[t], p, &format!("G[{t}]"));
    }
    c.finish()
}

/// Validate a stationary plant: definiteness plus PBH stabilizability of
/// `(A, B)` and detectability of `(A, Q^{1/2})`.
pub fn validate_stationary(plant: &mut StationaryPlant) -> Result<ValidationReport> {
    let mut c = Checker::new();
    let n = plant.a.nrows();
    let m = plant.b.ncols();
    c.shape(&plant.a, n, n, "A");
    c.shape(&plant.b, n, m, "B");
    c.psd(&mut plant.w, n, "W");
    c.psd(&mut plant.q, n, "Q");
    c.pd(&mut plant.r, m, "R");
    if let Some(p) = plant.p_init.as_mut() {
        c.pd(p, n, "P_init");
    }
    if !c.issues.is_empty() {
        return c.finish();
    }
    if !is_stabilizable(&plant.a, &plant.b) {
        c.issues.push("(A, B) not stabilizable".into());
    }
    let q_half = linalg::psd_sqrt(&plant.q);
    if !is_stabilizable(&plant.a.transpose(), &q_half.transpose()) {
        c.issues.push("(A, Q^1/2) not detectable".into());
    }
    c.finish()
}

/// PBH test: `rank [lambda I - A, B] = n` for every eigenvalue with `|lambda| >= 1`.
pub fn is_stabilizable(a: &Mat, b: &Mat) -> bool {
    let n = a.nrows();
    let ac = linalg::to_complex(a);
    let bc = linalg::to_complex(b);
    linalg::eigenvalues(a)
        .into_iter()
        .filter(|l| l.norm() >= 1.0 - 1e-10)
        .all(|lambda| {
            let mut pencil = nalgebra::DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
            let shifted = nalgebra::DMatrix::<Complex<f64>>::identity(n, n) * lambda - &ac;
            pencil.view_mut((0, 0), (n, n)).copy_from(&shifted);
            pencil.view_mut((0, n), (n, b.ncols())).copy_from(&bc);
            linalg::complex_rank(&pencil, 1e-9) == n
        })
}
