#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratelqg::{Mat, StationaryPlant, TimeVaryingPlant};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// `G G' + floor I` for a random square `G`.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Mat {
    let g = random_matrix(rng, n, n, 1.0);
    &g * g.transpose() + Mat::identity(n, n) * floor
}

/// Random plant with full-rank square `B`, so it is always stabilizable.
pub fn random_stationary(rng: &mut ChaCha8Rng, n: usize, a_scale: f64) -> StationaryPlant {
    let a = random_matrix(rng, n, n, a_scale);
    let b = Mat::identity(n, n) + random_matrix(rng, n, n, 0.3);
    let w = random_pd(rng, n, 0.2);
    StationaryPlant::new(a, b, w, Mat::identity(n, n), Mat::identity(n, n))
}

pub fn random_tv(rng: &mut ChaCha8Rng, n: usize, horizon: usize) -> TimeVaryingPlant {
    let mut plant = TimeVaryingPlant {
        a: Vec::new(),
        b: Vec::new(),
        w: Vec::new(),
        q: Vec::new(),
        r: Vec::new(),
        p_init: random_pd(rng, n, 0.5),
    };
    for _ in 0..horizon {
        plant.a.push(random_matrix(rng, n, n, 1.0));
        plant
            .b
            .push(Mat::identity(n, n) + random_matrix(rng, n, n, 0.3));
        plant.w.push(random_pd(rng, n, 0.2));
        plant.q.push(random_pd(rng, n, 0.5));
        plant.r.push(Mat::identity(n, n));
    }
    plant
}

/// Minimize a convex function over `[lo, hi]` by repeated grid refinement.
pub fn grid_min_1d(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let points = 41;
    let mut best = (f64::INFINITY, lo);
    for _ in 0..60 {
        let h = (hi - lo) / (points - 1) as f64;
        for k in 0..points {
            let x = lo + h * k as f64;
            let v = f(x);
            if v < best.0 {
                best = (v, x);
            }
        }
        lo = (best.1 - 2.0 * h).max(lo);
        hi = (best.1 + 2.0 * h).min(hi);
        if hi - lo < 1e-14 * (1.0 + best.1.abs()) {
            break;
        }
    }
    best
}

/// Nested grid refinement for a jointly convex `f(x, y)`: the inner
/// minimum over `y` is itself convex in `x`. `y_range(x)` bounds the inner search.
pub fn grid_min_2d(
    f: impl Fn(f64, f64) -> f64,
    (x0, x1): (f64, f64),
    y_range: impl Fn(f64) -> (f64, f64),
) -> (f64, f64, f64) {
    let inner = |x: f64| {
        let (y0, y1) = y_range(x);
        if y0 >= y1 {
            return (f64::INFINITY, y0);
        }
        grid_min_1d(|y| f(x, y), y0, y1)
    };
    let (best, x) = grid_min_1d(|x| inner(x).0, x0, x1);
    (best, x, inner(x).1)
}
