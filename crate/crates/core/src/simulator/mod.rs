//! Monte-Carlo closed-loop simulation of synthesized designs.
//!
//! Trial `k` draws from a ChaCha8 stream selected by `(seed, k)`, and trial
//! statistics are reduced in trial order, so results do not depend on how
//! trials are scheduled across threads.

mod checks;

pub use checks::{
    empirical_cost, orthogonality_check, whiteness_check, OrthogonalityReport, WhitenessReport,
};

use std::io::Write;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::PlantModel;
use crate::synthesis::{DesignKind, SynthesisDesign};

/// States beyond this norm abort the trial.
pub const DIVERGENCE_NORM: f64 = 1e9;

/// Innovation autocorrelation lags tracked for the whiteness check.
pub const MAX_LAG: usize = 5;

/// Caps the worker threads used by [`simulate_closed_loop`] and trade-off curves.
pub const THREADS_ENV: &str = "RATELQG_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Stages per trial for stationary designs; finite-horizon designs always run their horizon.
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    /// Leading stages left out of the statistics (stationary designs only).
    pub burn_in: usize,
    pub max_stage_samples: u64,
}

impl SimConfig {
    pub fn new(steps: usize, trials: usize, seed: u64) -> Self {
        SimConfig {
            steps,
            trials,
            seed,
            burn_in: 0,
            max_stage_samples: 100_000_000,
        }
    }
}

/// Pooled innovation autocorrelation sums over all trials.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationLags {
    /// `sums[k][i]`: sum over `t` of `e_t[i] e_{t+k}[i]` for whitened innovations `e`.
    pub sums: Vec<Vec<f64>>,
    /// Number of products in `sums[k]`.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub trials: usize,
    /// Stages per trial entering the statistics.
    pub stages: usize,
    /// Per-trial mean stage cost.
    pub trial_costs: Vec<f64>,
    pub cost_per_stage: f64,
    pub cost_stderr: f64,
    /// Per-trial mean of `x^'Q(x - x^)`.
    pub trial_orthogonality: Vec<f64>,
    /// Sample covariance of `x_t - x^_t`, per stage (one pooled entry when stationary).
    pub filter_error_covariances: Vec<Mat>,
    /// Elementwise between-trial standard error of `filter_error_covariances`.
    pub filter_error_stderr: Vec<Mat>,
    /// Sample second moment of `x_t`, laid out like `filter_error_covariances`.
    pub state_second_moments: Vec<Mat>,
    /// Sample covariance of the raw innovations, laid out like `filter_error_covariances`.
    pub innovation_covariances: Vec<Mat>,
    /// `None` when the design has no innovation sequence of fixed dimension.
    pub innovation_lags: Option<InnovationLags>,
    pub max_state_norm: f64,
}

/// Run `f` on a pool capped by `RATELQG_THREADS` when it is set.
pub fn with_thread_cap<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok());
    match cap.filter(|&n| n > 0) {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sqrt: &Mat) -> DVector<f64> {
    let z = DVector::from_fn(sqrt.ncols(), |_, _| StandardNormal.sample(rng));
    sqrt * z
}

/// Inverse symmetric square root, for whitening innovations.
fn inv_sqrt(m: &Mat) -> Result<Mat> {
    linalg::spd_inverse(&linalg::psd_sqrt(m))
}

/// Everything a trial needs, resolved per stage.
struct Stage {
    a: Mat,
    b: Mat,
    q: Mat,
    r: Mat,
    k: Mat,
    c: Mat,
    l: Mat,
    w_sqrt: Mat,
    v_sqrt: Mat,
    /// Physical sensor and pre-filter gain, when partially observed.
    physical: Option<(Mat, Mat, Mat)>,
    /// Whitening transform of the tracked innovation.
    whiten: Option<Mat>,
}

struct Setup {
    stages: Vec<Stage>,
    stationary: bool,
    steps: usize,
    burn_in: usize,
    /// Covariances of `x_1 - x^_{1|0}` and `x^_{1|0}`.
    init_error_sqrt: Mat,
    init_estimate_sqrt: Mat,
    innovation_dim: Option<usize>,
}

fn check_dims(design: &SynthesisDesign, n: usize, m: usize) -> Result<()> {
    let ok = design.bundle.k.iter().all(|k| k.shape() == (m, n))
        && design.schedule.p_filt.iter().all(|p| p.shape() == (n, n))
        && design
            .sensor
            .c
            .iter()
            .zip(&design.l)
            .all(|(c, l)| c.ncols() == n && l.shape() == (n, c.nrows()));
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(
            "design does not match the plant dimensions".into(),
        ))
    }
}

fn setup(design: &SynthesisDesign, plant: &PlantModel, config: &SimConfig) -> Result<Setup> {
    let diag_sqrt = |v: &Mat| {
        Mat::from_fn(v.nrows(), v.ncols(), |i, j| {
            if i == j {
                v[(i, i)].max(0.0).sqrt()
            } else {
                0.0
            }
        })
    };
    match (design.kind, plant) {
        (DesignKind::Stationary, PlantModel::Stationary(p)) => {
            check_dims(design, p.state_dim(), p.input_dim())?;
            if config.burn_in >= config.steps {
                return Err(Error::InvalidInput(
                    "burn-in must be shorter than the run".into(),
                ));
            }
            let (c, v, l, k) = (
                &design.sensor.c[0],
                &design.sensor.v[0],
                &design.l[0],
                &design.bundle.k[0],
            );
            let p_pred = &design.schedule.p_pred[0];
            let r = c.nrows();
            let whiten = if r > 0 {
                Some(inv_sqrt(&(c * p_pred * c.transpose() + v))?)
            } else {
                None
            };
            let (init_error_sqrt, init_estimate_sqrt) = match &p.p_init {
                Some(p0) => (
                    linalg::psd_sqrt(p0),
                    Mat::zeros(p.state_dim(), p.state_dim()),
                ),
                None => {
                    // Start in steady state: x^_{1|0} ~ N(0, X) with X = Acl (X + P_pred - P) Acl'.
                    let acl = &p.a + &p.b * k;
                    let gain_cov = p_pred - &design.schedule.p_filt[0];
                    let x = linalg::discrete_lyapunov(&acl, &(&acl * gain_cov * acl.transpose()))?;
                    (linalg::psd_sqrt(p_pred), linalg::psd_sqrt(&x))
                }
            };
            Ok(Setup {
                stages: vec![Stage {
                    a: p.a.clone(),
                    b: p.b.clone(),
                    q: p.q.clone(),
                    r: p.r.clone(),
                    k: k.clone(),
                    c: c.clone(),
                    l: l.clone(),
                    w_sqrt: linalg::psd_sqrt(&p.w),
                    v_sqrt: diag_sqrt(v),
                    physical: None,
                    whiten,
                }],
                stationary: true,
                steps: config.steps,
                burn_in: config.burn_in,
                init_error_sqrt,
                init_estimate_sqrt,
                innovation_dim: (r > 0).then_some(r),
            })
        }
        (DesignKind::TimeVarying, PlantModel::TimeVarying(p)) => {
            check_dims(design, p.state_dim(), p.input_dim())?;
            let horizon = p.horizon();
            if design.bundle.k.len() != horizon || design.l.len() != horizon {
                return Err(Error::Dimension(
                    "design horizon does not match the plant".into(),
                ));
            }
            let ranks = &design.sensor.rank;
            let fixed = ranks
                .first()
                .copied()
                .filter(|&r| r > 0 && ranks.iter().all(|&x| x == r));
            let mut stages = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let (c, v) = (&design.sensor.c[t], &design.sensor.v[t]);
                let whiten = match fixed {
                    Some(_) => Some(inv_sqrt(
                        &(c * &design.schedule.p_pred[t] * c.transpose() + v),
                    )?),
                    None => None,
                };
                stages.push(Stage {
                    a: p.a[t].clone(),
                    b: p.b[t].clone(),
                    q: p.q[t].clone(),
                    r: p.r[t].clone(),
                    k: design.bundle.k[t].clone(),
                    c: c.clone(),
                    l: design.l[t].clone(),
                    w_sqrt: linalg::psd_sqrt(&p.w[t]),
                    v_sqrt: diag_sqrt(v),
                    physical: None,
                    whiten,
                });
            }
            let n = p.state_dim();
            Ok(Setup {
                stages,
                stationary: false,
                steps: horizon,
                burn_in: 0,
                init_error_sqrt: linalg::psd_sqrt(&p.p_init),
                init_estimate_sqrt: Mat::zeros(n, n),
                innovation_dim: fixed,
            })
        }
        (DesignKind::PartiallyObserved, PlantModel::PartiallyObserved(p)) => {
            let base = &p.base;
            check_dims(design, base.state_dim(), base.input_dim())?;
            let prekf = design.prekf.as_ref().ok_or_else(|| {
                Error::InvalidInput("partially observed design lacks its pre-filter".into())
            })?;
            let horizon = base.horizon();
            if design.bundle.k.len() != horizon || prekf.ltilde.len() < horizon {
                return Err(Error::Dimension(
                    "design horizon does not match the plant".into(),
                ));
            }
            let mut stages = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let (h, g) = (p.h_at(t), p.g_at(t));
                let s = h * &prekf.ptilde_pred[t] * h.transpose() + g;
                stages.push(Stage {
                    a: base.a[t].clone(),
                    b: base.b[t].clone(),
                    q: base.q[t].clone(),
                    r: base.r[t].clone(),
                    k: design.bundle.k[t].clone(),
                    c: design.sensor.c[t].clone(),
                    l: design.l[t].clone(),
                    w_sqrt: linalg::psd_sqrt(&base.w[t]),
                    v_sqrt: diag_sqrt(&design.sensor.v[t]),
                    physical: Some((h.clone(), linalg::psd_sqrt(g), prekf.ltilde[t].clone())),
                    whiten: Some(inv_sqrt(&s)?),
                });
            }
            let n = base.state_dim();
            Ok(Setup {
                stages,
                stationary: false,
                steps: horizon,
                burn_in: 0,
                init_error_sqrt: linalg::psd_sqrt(&base.p_init),
                init_estimate_sqrt: Mat::zeros(n, n),
                innovation_dim: Some(p.output_dim()),
            })
        }
        (kind, plant) => Err(Error::InvalidInput(format!(
            "a {} design cannot drive a {} plant",
            kind.as_str(),
            plant.kind()
        ))),
    }
}

/// One simulated stage, handed to trajectory recorders.
pub struct StageRecord<'a> {
    pub t: usize,
    pub x: &'a DVector<f64>,
    pub u: &'a DVector<f64>,
    pub xhat: &'a DVector<f64>,
}

struct TrialStats {
    cost: f64,
    orthogonality: f64,
    error_cov: Vec<Mat>,
    state_moment: Vec<Mat>,
    innovation_cov: Vec<Mat>,
    lag_sums: Vec<Vec<f64>>,
    lag_counts: Vec<usize>,
    max_norm: f64,
}

fn run_trial(
    setup: &Setup,
    config: &SimConfig,
    trial: usize,
    mut record: Option<&mut dyn FnMut(StageRecord<'_>)>,
) -> Result<TrialStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(trial as u64);
    let n = setup.init_error_sqrt.nrows();
    let slots = if setup.stationary { 1 } else { setup.steps };
    let counted = setup.steps - setup.burn_in;
    let inno_dim = setup.innovation_dim.unwrap_or(0);
    let mut stats = TrialStats {
        cost: 0.0,
        orthogonality: 0.0,
        error_cov: vec![Mat::zeros(n, n); slots],
        state_moment: vec![Mat::zeros(n, n); slots],
        innovation_cov: vec![Mat::zeros(inno_dim, inno_dim); slots],
        lag_sums: vec![vec![0.0; inno_dim]; MAX_LAG + 1],
        lag_counts: vec![0; MAX_LAG + 1],
        max_norm: 0.0,
    };
    let mut history: Vec<DVector<f64>> = Vec::with_capacity(MAX_LAG);

    let xhat_pred0 = gaussian(&mut rng, &setup.init_estimate_sqrt);
    let mut x = &xhat_pred0 + gaussian(&mut rng, &setup.init_error_sqrt);
    let mut xhat_pred = xhat_pred0;
    let mut xtilde_pred = DVector::zeros(n);

    for t in 0..setup.steps {
        let st = &setup.stages[if setup.stationary { 0 } else { t }];
        let counting = t >= setup.burn_in;
        let slot = if setup.stationary { 0 } else { t };

        // Signal seen by the virtual sensor, and the innovation tracked for whiteness.
        let (source, innovation) = match &st.physical {
            Some((h, g_sqrt, ltilde)) => {
                let y = h * &x + gaussian(&mut rng, g_sqrt);
                let nu = &y - h * &xtilde_pred;
                let xtilde = &xtilde_pred + ltilde * &nu;
                (xtilde, Some(nu))
            }
            None => (x.clone(), None),
        };
        let xhat = if st.c.nrows() > 0 {
            let y = &st.c * &source + gaussian(&mut rng, &st.v_sqrt);
            let nu = &y - &st.c * &xhat_pred;
            let xhat = &xhat_pred + &st.l * &nu;
            let innovation = innovation.or(Some(nu));
            track_innovation(
                setup,
                st,
                innovation,
                counting,
                slot,
                &mut stats,
                &mut history,
            );
            xhat
        } else {
            track_innovation(
                setup,
                st,
                innovation,
                counting,
                slot,
                &mut stats,
                &mut history,
            );
            xhat_pred.clone()
        };
        let u = &st.k * &xhat;
        let x_next = &st.a * &x + &st.b * &u + gaussian(&mut rng, &st.w_sqrt);

        if counting {
            let err = &x - &xhat;
            stats.cost += (x_next.transpose() * &st.q * &x_next)[(0, 0)]
                + (u.transpose() * &st.r * &u)[(0, 0)];
            stats.orthogonality += (xhat.transpose() * &st.q * &err)[(0, 0)];
            stats.error_cov[slot] += &err * err.transpose();
            stats.state_moment[slot] += &x * x.transpose();
        }
        if let Some(rec) = record.as_deref_mut() {
            rec(StageRecord {
                t: t + 1,
                x: &x,
                u: &u,
                xhat: &xhat,
            });
        }
        if st.physical.is_some() {
            xtilde_pred = &st.a * &source + &st.b * &u;
        }
        xhat_pred = &st.a * &xhat + &st.b * &u;
        x = x_next;
        let norm = x.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Diverged {
                trial,
                stage: t + 2,
            });
        }
        stats.max_norm = stats.max_norm.max(norm);
    }
    let scale = 1.0 / counted as f64;
    stats.cost *= scale;
    stats.orthogonality *= scale;
    if setup.stationary {
        stats.error_cov[0] *= scale;
        stats.state_moment[0] *= scale;
        stats.innovation_cov[0] *= scale;
    }
    Ok(stats)
}

fn track_innovation(
    setup: &Setup,
    st: &Stage,
    innovation: Option<DVector<f64>>,
    counting: bool,
    slot: usize,
    stats: &mut TrialStats,
    history: &mut Vec<DVector<f64>>,
) {
    let (Some(dim), Some(nu), Some(whiten)) =
        (setup.innovation_dim, innovation, st.whiten.as_ref())
    else {
        return;
    };
    if !counting || nu.len() != dim {
        return;
    }
    stats.innovation_cov[slot] += &nu * nu.transpose();
    let e = whiten * nu;
    for i in 0..dim {
        stats.lag_sums[0][i] += e[i] * e[i];
    }
    stats.lag_counts[0] += 1;
    for (back, prev) in history.iter().rev().enumerate() {
        let lag = back + 1;
        for i in 0..dim {
            stats.lag_sums[lag][i] += e[i] * prev[i];
        }
        stats.lag_counts[lag] += 1;
    }
    if history.len() == MAX_LAG {
        history.remove(0);
    }
    history.push(e);
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = linalg::pairwise_sum(xs) / k;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, (linalg::pairwise_sum(&dev) / (k - 1.0) / k).sqrt())
}

/// Elementwise trial mean and standard error of per-trial matrices.
fn matrix_stats(per_trial: &[&Mat]) -> (Mat, Mat) {
    let (rows, cols) = per_trial[0].shape();
    let mut mean = Mat::zeros(rows, cols);
    let mut stderr = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let xs: Vec<f64> = per_trial.iter().map(|m| m[(i, j)]).collect();
            let (m, s) = mean_and_stderr(&xs);
            mean[(i, j)] = m;
            stderr[(i, j)] = s;
        }
    }
    (mean, stderr)
}

/// Simulate `config.trials` independent closed-loop runs of `design` on `plant`.
pub fn simulate_closed_loop(
    design: &SynthesisDesign,
    plant: &PlantModel,
    config: &SimConfig,
) -> Result<SimResult> {
    if config.steps == 0 || config.trials == 0 {
        return Err(Error::InvalidInput(
            "steps and trials must be positive".into(),
        ));
    }
    let setup = setup(design, plant, config)?;
    let samples = setup.steps as u64 * config.trials as u64;
    if samples > config.max_stage_samples {
        return Err(Error::InvalidInput(format!(
            "{samples} stage samples exceed the cap of {}",
            config.max_stage_samples
        )));
    }
    let trials: Vec<TrialStats> = with_thread_cap(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|k| run_trial(&setup, config, k, None))
            .collect::<Result<Vec<_>>>()
    })?;

    let trial_costs: Vec<f64> = trials.iter().map(|s| s.cost).collect();
    let (cost_per_stage, cost_stderr) = mean_and_stderr(&trial_costs);
    let slots = trials[0].error_cov.len();
    let mut filter_error_covariances = Vec::with_capacity(slots);
    let mut filter_error_stderr = Vec::with_capacity(slots);
    let mut state_second_moments = Vec::with_capacity(slots);
    let mut innovation_covariances = Vec::with_capacity(slots);
    for slot in 0..slots {
        let (mean, se) = matrix_stats(
            &trials
                .iter()
                .map(|s| &s.error_cov[slot])
                .collect::<Vec<_>>(),
        );
        filter_error_covariances.push(mean);
        filter_error_stderr.push(se);
        state_second_moments.push(
            matrix_stats(
                &trials
                    .iter()
                    .map(|s| &s.state_moment[slot])
                    .collect::<Vec<_>>(),
            )
            .0,
        );
        innovation_covariances.push(
            matrix_stats(
                &trials
                    .iter()
                    .map(|s| &s.innovation_cov[slot])
                    .collect::<Vec<_>>(),
            )
            .0,
        );
    }
    let innovation_lags = setup.innovation_dim.map(|dim| InnovationLags {
        sums: (0..=MAX_LAG)
            .map(|lag| {
                (0..dim)
                    .map(|i| {
                        linalg::pairwise_sum(
                            &trials
                                .iter()
                                .map(|s| s.lag_sums[lag][i])
                                .collect::<Vec<_>>(),
                        )
                    })
                    .collect()
            })
            .collect(),
        counts: (0..=MAX_LAG)
            .map(|lag| trials.iter().map(|s| s.lag_counts[lag]).sum())
            .collect(),
    });
    Ok(SimResult {
        trials: config.trials,
        stages: setup.steps - setup.burn_in,
        trial_orthogonality: trials.iter().map(|s| s.orthogonality).collect(),
        trial_costs,
        cost_per_stage,
        cost_stderr,
        filter_error_covariances,
        filter_error_stderr,
        state_second_moments,
        innovation_covariances,
        innovation_lags,
        max_state_norm: trials.iter().map(|s| s.max_norm).fold(0.0, f64::max),
    })
}

/// Write trial `trial` as CSV with columns `t, x[i].., u[j].., xhat[i]..`.
pub fn write_trajectory_csv(
    design: &SynthesisDesign,
    plant: &PlantModel,
    config: &SimConfig,
    trial: usize,
    out: &mut dyn Write,
) -> Result<()> {
    let setup = setup(design, plant, config)?;
    let n = setup.init_error_sqrt.nrows();
    let m = setup.stages[0].b.ncols();
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|j| format!("u{j}")));
    header.extend((0..n).map(|i| format!("xhat{i}")));
    let mut text = header.join(",");
    text.push('\n');
    let mut rows = |r: StageRecord<'_>| {
        let mut fields = vec![r.t.to_string()];
        fields.extend(
            r.x.iter()
                .chain(r.u.iter())
                .chain(r.xhat.iter())
                .map(|v| format!("{v:.16e}")),
        );
        text.push_str(&fields.join(","));
        text.push('\n');
    };
    run_trial(&setup, config, trial, Some(&mut rows))?;
    out.write_all(text.as_bytes())?;
    Ok(())
}
