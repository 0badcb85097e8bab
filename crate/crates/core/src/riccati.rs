//! Backward Riccati recursion and the stabilizing algebraic Riccati solution.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{StationaryPlant, TimeVaryingPlant};

/// Per-stage controller data. Stationary solutions hold a single stage.
///
/// `phi[t]` is the cost-to-go contribution `A'(S - S B M^{-1} B' S) A`,
/// so `s[t] = q[t] + phi[t + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiBundle {
    pub s: Vec<Mat>,
    pub phi: Vec<Mat>,
    /// `B' S B + R`
    pub m: Vec<Mat>,
    pub k: Vec<Mat>,
    /// `K' M K`
    pub theta: Vec<Mat>,
}

impl RiccatiBundle {
    pub fn stages(&self) -> usize {
        self.s.len()
    }
}

struct StageGains {
    phi: Mat,
    m: Mat,
    k: Mat,
    theta: Mat,
}

fn stage_gains(a: &Mat, b: &Mat, r: &Mat, s: &Mat) -> Result<StageGains> {
    let m = linalg::symmetrize(&(b.transpose() * s * b + r));
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("B'SB + R is not positive definite".into()))?;
    let bsa = b.transpose() * s * a;
    let k = -chol.solve(&bsa);
    // A'SA - A'SB M^{-1} B'SA
    let phi = linalg::symmetrize(&(a.transpose() * s * a - bsa.transpose() * chol.solve(&bsa)));
    let theta = linalg::symmetrize(&(k.transpose() * &m * &k));
    Ok(StageGains { phi, m, k, theta })
}

/// Finite-horizon recursion: `S_T = Q_T`, `S_t = Q_t + Phi_{t+1}`.
pub fn backward_riccati(plant: &TimeVaryingPlant) -> Result<RiccatiBundle> {
    let horizon = plant.horizon();
    let mut bundle = RiccatiBundle {
        s: Vec::with_capacity(horizon),
        phi: Vec::with_capacity(horizon),
        m: Vec::with_capacity(horizon),
        k: Vec::with_capacity(horizon),
        theta: Vec::with_capacity(horizon),
    };
    let mut next_phi: Option<Mat> = None;
    for t in (0..horizon).rev() {
        let s = match next_phi.take() {
            Some(phi) => &plant.q[t] + phi,
            None => plant.q[t].clone(),
        };
        let g = stage_gains(&plant.a[t], &plant.b[t], &plant.r[t], &s)?;
        next_phi = Some(g.phi.clone());
        bundle.s.push(s);
        bundle.phi.push(g.phi);
        bundle.m.push(g.m);
        bundle.k.push(g.k);
        bundle.theta.push(g.theta);
    }
    bundle.s.reverse();
    bundle.phi.reverse();
    bundle.m.reverse();
    bundle.k.reverse();
    bundle.theta.reverse();
    Ok(bundle)
}

const ARE_TOL: f64 = 1e-12;
const ARE_MAX_ITER: usize = 100_000;

/// Residual of `A'SA - S - A'SB(B'SB+R)^{-1}B'SA + Q`, relative to `1 + |S|`.
pub fn are_residual(plant: &StationaryPlant, s: &Mat) -> Result<f64> {
    let g = stage_gains(&plant.a, &plant.b, &plant.r, s)?;
    Ok((g.phi - s + &plant.q).norm() / (1.0 + s.norm()))
}

/// Stabilizing solution of the discrete algebraic Riccati equation by
/// fixed-point iteration of the Riccati map started from `S = Q`.
pub fn solve_are(plant: &StationaryPlant) -> Result<RiccatiBundle> {
    let mut s = plant.q.clone();
    let mut converged = false;
    for _ in 0..ARE_MAX_ITER {
        let g = stage_gains(&plant.a, &plant.b, &plant.r, &s)?;
        let next = &plant.q + g.phi;
        if next.iter().any(|x| !x.is_finite()) {
            break;
        }
        let change = (&next - &s).norm();
        s = next;
        if change <= ARE_TOL * (1.0 + s.norm()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(
            "Riccati iteration did not converge; plant may not be stabilizable/detectable".into(),
        ));
    }
    let g = stage_gains(&plant.a, &plant.b, &plant.r, &s)?;
    let closed_loop = &plant.a + &plant.b * &g.k;
    if linalg::spectral_radius(&closed_loop) >= 1.0 {
        return Err(Error::Numerical(
            "Riccati solution is not stabilizing".into(),
        ));
    }
    Ok(RiccatiBundle {
        s: vec![s],
        phi: vec![g.phi],
        m: vec![g.m],
        k: vec![g.k],
        theta: vec![g.theta],
    })
}

/// Unique PSD fixed point of `P = A P A' + W`.
pub fn lyapunov_stationary(a: &Mat, w: &Mat) -> Result<Mat> {
    let rho = linalg::spectral_radius(a);
    if rho >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "A is not Schur stable (spectral radius {rho})"
        )));
    }
    linalg::discrete_lyapunov(a, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;
    use approx::assert_relative_eq;

    fn scalar(x: f64) -> Mat {
        Mat::from_element(1, 1, x)
    }

    fn scalar_plant(a: f64, horizon: usize) -> TimeVaryingPlant {
        TimeVaryingPlant {
            a: vec![scalar(a); horizon],
            b: vec![scalar(1.0); horizon],
            w: vec![scalar(1.0); horizon],
            q: vec![scalar(1.0); horizon],
            r: vec![scalar(1.0); horizon],
            p_init: scalar(1.0),
        }
    }

    #[test]
    fn zero_dynamics_kill_the_gain() {
        let b = backward_riccati(&scalar_plant(0.0, 1)).unwrap();
        assert_eq!(b.s[0][(0, 0)], 1.0);
        assert_eq!(b.k[0][(0, 0)], 0.0);
        assert_eq!(b.theta[0][(0, 0)], 0.0);
        assert_eq!(b.phi[0][(0, 0)], 0.0);
    }

    #[test]
    fn two_stage_hand_recursion() {
        let b = backward_riccati(&scalar_plant(2.0, 2)).unwrap();
        assert_relative_eq!(b.s[1][(0, 0)], 1.0);
        assert_relative_eq!(b.phi[1][(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(b.s[0][(0, 0)], 3.0, epsilon = 1e-14);
        assert_relative_eq!(b.k[0][(0, 0)], -1.5, epsilon = 1e-14);
        assert_relative_eq!(b.theta[0][(0, 0)], 9.0, epsilon = 1e-13);
    }

    #[test]
    fn scalar_are_matches_quadratic_root() {
        let b = solve_are(&fixtures::scalar_unstable()).unwrap();
        let s = 2.0 + 5f64.sqrt();
        assert_relative_eq!(b.s[0][(0, 0)], s, epsilon = 1e-10);
        assert_relative_eq!(b.k[0][(0, 0)], -(1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-10);
        assert_relative_eq!(b.theta[0][(0, 0)], 4.0 * s * s / (s + 1.0), epsilon = 1e-9);
    }

    #[test]
    fn zero_dynamics_are_is_q() {
        let n = 3;
        let p = StationaryPlant::new(
            Mat::zeros(n, n),
            Mat::identity(n, n),
            Mat::identity(n, n),
            Mat::identity(n, n),
            Mat::identity(n, n),
        );
        let b = solve_are(&p).unwrap();
        assert!((&b.s[0] - Mat::identity(n, n)).norm() < 1e-14);
        assert!(b.k[0].norm() < 1e-14);
    }

    #[test]
    fn four_state_are_residual_and_stability() {
        let p = fixtures::four_state_example();
        let b = solve_are(&p).unwrap();
        assert!(are_residual(&p, &b.s[0]).unwrap() < 1e-10);
        assert!(linalg::spectral_radius(&(&p.a + &p.b * &b.k[0])) < 1.0);
    }

    #[test]
    fn long_horizon_recursion_converges_to_are() {
        let p = fixtures::four_state_example();
        let are = solve_are(&p).unwrap();
        let tv = TimeVaryingPlant::from_stationary(&p, 400, Mat::identity(4, 4));
        let bundle = backward_riccati(&tv).unwrap();
        assert!((&bundle.s[0] - &are.s[0]).norm() < 1e-9);
    }

    #[test]
    fn theta_and_phi_bounds_hold_per_stage() {
        let p = fixtures::four_state_example();
        let tv = TimeVaryingPlant::from_stationary(&p, 6, Mat::identity(4, 4));
        let b = backward_riccati(&tv).unwrap();
        for t in 0..6 {
            assert!(linalg::min_eigenvalue(&b.theta[t]) >= -1e-10 * (1.0 + b.theta[t].norm()));
            let gap = tv.a[t].transpose() * &b.s[t] * &tv.a[t] - &b.phi[t];
            assert!(linalg::min_eigenvalue(&gap) >= -1e-10 * (1.0 + gap.norm()));
            let recomputed = b.k[t].transpose() * &b.m[t] * &b.k[t];
            assert!(linalg::rel_diff(&recomputed, &b.theta[t]) < 1e-10);
        }
    }

    #[test]
    fn lyapunov_cases() {
        assert_relative_eq!(
            lyapunov_stationary(&scalar(0.5), &scalar(1.0)).unwrap()[(0, 0)],
            4.0 / 3.0,
            epsilon = 1e-14
        );
        let w = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        assert!((lyapunov_stationary(&Mat::zeros(2, 2), &w).unwrap() - &w).norm() < 1e-14);
        let err = lyapunov_stationary(&scalar(1.0), &scalar(1.0)).unwrap_err();
        assert!(err.to_string().contains("not Schur stable"));
    }
}
