//! Reference plants used by tests, benchmarks, and the bundled data files.

use crate::linalg::Mat;
use crate::model::StationaryPlant;

/// Four-state, four-input plant with randomly generated `A`, `B`, `W`
/// (two-decimal values) and `Q = R = I`.
pub fn four_state_example() -> StationaryPlant {
    #[rustfmt::skip]
    let a = Mat::from_row_slice(4, 4, &[
         0.12,  0.63, -0.52, 0.33,
         0.26, -1.28,  1.57, 1.13,
        -1.77, -0.30,  0.77, 0.25,
        -0.16,  0.20, -0.58, 0.56,
    ]);
    #[rustfmt::skip]
    let w = Mat::from_row_slice(4, 4, &[
         4.94, -0.10, 1.29, 0.35,
        -0.10,  5.55, 2.07, 0.31,
         1.29,  2.07, 2.02, 1.43,
         0.35,  0.31, 1.43, 3.10,
    ]);
    #[rustfmt::skip]
    let b = Mat::from_row_slice(4, 4, &[
         0.66, -0.58,  0.03, -0.20,
         2.61, -0.91,  0.87, -0.07,
        -0.64, -1.12, -0.19,  0.61,
         0.93,  0.58, -1.18, -1.21,
    ]);
    StationaryPlant::new(a, b, w, Mat::identity(4, 4), Mat::identity(4, 4))
}

/// Scalar unstable plant `a = 2, b = w = q = r = 1`.
pub fn scalar_unstable() -> StationaryPlant {
    let one = Mat::from_element(1, 1, 1.0);
    StationaryPlant::new(
        Mat::from_element(1, 1, 2.0),
        one.clone(),
        one.clone(),
        one.clone(),
        one,
    )
}
