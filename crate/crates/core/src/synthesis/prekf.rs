//! Pre-filter for partially observed plants and the innovations plant it induces.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{PartiallyObservedPlant, TimeVaryingPlant};

/// Kalman filter on the physical measurements `y_t = H_t x_t + g_t`.
///
/// Gains and covariances cover stages `1..=T+1` (0-based `0..=T`); `psi`
/// covers `1..=T`, `psi[t]` being the covariance of the innovation entering
/// the estimate at stage `t + 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreKFDesign {
    pub ltilde: Vec<Mat>,
    pub ptilde_filt: Vec<Mat>,
    pub ptilde_pred: Vec<Mat>,
    pub psi: Vec<Mat>,
}

/// Fully observed plant driven by the pre-filter innovations.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedPlant {
    /// Noise `Psi_t`, initial covariance `Cov(x~_1) = P_init - P~_{1|1}`.
    pub plant: TimeVaryingPlant,
    /// `sum_t Tr(Q_t P~_{t+1|t+1})`, paid by every policy.
    pub cost_offset: f64,
}

pub fn prekf_design(plant: &PartiallyObservedPlant) -> Result<PreKFDesign> {
    let base = &plant.base;
    let horizon = base.horizon();
    let n = base.state_dim();
    let mut design = PreKFDesign {
        ltilde: Vec::with_capacity(horizon + 1),
        ptilde_filt: Vec::with_capacity(horizon + 1),
        ptilde_pred: Vec::with_capacity(horizon + 1),
        psi: Vec::with_capacity(horizon),
    };
    let mut pred = base.p_init.clone();
    for t in 0..=horizon {
        let (h, g) = (plant.h_at(t), plant.g_at(t));
        if linalg::rank(h, 1e-12) < h.nrows() {
            return Err(Error::Numerical(format!("H[{}] lost row rank", t + 1)));
        }
        let innovation = linalg::symmetrize(&(h * &pred * h.transpose() + g));
        let chol = innovation.cholesky().ok_or_else(|| {
            Error::Numerical(format!(
                "measurement covariance at stage {} is singular",
                t + 1
            ))
        })?;
        let gain = chol.solve(&(h * &pred)).transpose();
        let filt = linalg::symmetrize(&((Mat::identity(n, n) - &gain * h) * &pred));
        design.ltilde.push(gain);
        design.ptilde_filt.push(filt.clone());
        design.ptilde_pred.push(pred.clone());
        if t < horizon {
            pred = linalg::symmetrize(&(&base.a[t] * &filt * base.a[t].transpose() + &base.w[t]));
        }
    }
    for t in 0..horizon {
        let (h, g) = (plant.h_at(t + 1), plant.g_at(t + 1));
        let l = &design.ltilde[t + 1];
        let s = h * &design.ptilde_pred[t + 1] * h.transpose() + g;
        design
            .psi
            .push(linalg::symmetrize(&(l * s * l.transpose())));
    }
    Ok(design)
}

pub fn reduced_plant(plant: &PartiallyObservedPlant, prekf: &PreKFDesign) -> Result<ReducedPlant> {
    let base = &plant.base;
    let horizon = base.horizon();
    if prekf.psi.len() != horizon || prekf.ptilde_filt.len() != horizon + 1 {
        return Err(Error::Dimension(
            "pre-filter design does not match the plant horizon".into(),
        ));
    }
    let p_init = linalg::symmetrize(&(&base.p_init - &prekf.ptilde_filt[0]));
    if !linalg::is_pd(&p_init)
        || linalg::min_eigenvalue(&p_init) <= 1e-12 * linalg::norm(&base.p_init)
    {
        return Err(Error::InvalidInput(
            "covariance of the first state estimate is singular; partially observed synthesis needs as many independent measurements as states at the first stage".into(),
        ));
    }
    let cost_offset = (0..horizon)
        .map(|t| (&base.q[t] * &prekf.ptilde_filt[t + 1]).trace())
        .sum();
    Ok(ReducedPlant {
        plant: TimeVaryingPlant {
            a: base.a.clone(),
            b: base.b.clone(),
            w: prekf.psi.clone(),
            q: base.q.clone(),
            r: base.r.clone(),
            p_init,
        },
        cost_offset,
    })
}

/// Recover the measurement `y_t` from the pre-filter estimates.
///
/// `previous` holds `(x~_{t-1}, u_{t-1})`; pass `None` at the first stage,
/// where the prior estimate is zero.
pub fn prekf_inverse(
    xtilde: &DVector<f64>,
    previous: Option<(&DVector<f64>, &DVector<f64>)>,
    design: &PreKFDesign,
    plant: &PartiallyObservedPlant,
    t: usize,
) -> Result<DVector<f64>> {
    let l = design.ltilde.get(t).ok_or_else(|| {
        Error::InvalidInput(format!("stage {} is outside the pre-filter design", t + 1))
    })?;
    let pinv = linalg::left_pseudo_inverse(l)?;
    let mut y = &pinv * xtilde;
    if let Some((x_prev, u_prev)) = previous {
        if t == 0 {
            return Err(Error::InvalidInput(
                "the first stage has no predecessor".into(),
            ));
        }
        let base = &plant.base;
        let predicted = &base.a[t - 1] * x_prev + &base.b[t - 1] * u_prev;
        let n = l.nrows();
        y += &pinv * (l * plant.h_at(t) - Mat::identity(n, n)) * predicted;
    }
    Ok(y)
}
