//! Built-in problem instances.

use crate::error::Result;
use crate::problem::{BoxSet, ConvexProblem, DualBox, ProblemSpec};

/// Constraint matrix of the ten-agent quartic example, 6 x 10 row-major.
#[rustfmt::skip]
pub const QUARTIC10_A: [f64; 60] = [
    -1.0, 0.0, -3.0, 0.0,  0.0, 4.0, 0.0, 0.0, 10.0,  0.0,
     0.0, 1.0,  5.0, 1.0,  1.0, 0.0, 0.0, 2.0,  0.0,  5.0,
     0.0, 0.0,  1.0, 1.0, -5.0, 1.0, 4.0, 0.0,  0.0,  0.0,
     0.0, 0.0, -2.0, 0.0,  0.0, 8.0, 1.0, 1.0, -3.0,  1.0,
     0.0, 0.0,  0.0, 0.0, -3.0, 0.0, 1.0, 1.0,  1.0,  0.0,
     0.0, 4.0,  0.0, 0.0,  0.0, 0.0, 0.0, 2.0,  1.0, -4.0,
];

pub const QUARTIC10_B: [f64; 6] = [-2.0, 4.0, -10.0, 5.0, 1.0, 8.0];

/// Dual radius used for the quartic example. That instance has no Slater
/// point (row 2 is at least 15 on the box but must stay below 4), so the
/// bound cannot be derived and is supplied instead.
pub const QUARTIC10_DUAL_RADIUS: f64 = 10.0;

/// `h(x) = sum x_i^4 + (1/20) sum_i sum_{j != i} (x_i - x_j)^2` on `[1, 10]^10`
/// with `g(x) = A x - b` and `delta = 0.001`.
pub fn quartic10_spec() -> ProblemSpec {
    ProblemSpec::quartic_pairwise(
        1.0,
        0.05,
        QUARTIC10_A.to_vec(),
        QUARTIC10_B.to_vec(),
        BoxSet::uniform(10, 1.0, 10.0).expect("valid box"),
        0.001,
    )
}

pub fn quartic10_problem() -> Result<ConvexProblem> {
    quartic10_spec().build()
}

pub fn quartic10_dual_box() -> DualBox {
    DualBox::user_supplied(
        QUARTIC10_DUAL_RADIUS,
        "user-supplied: the instance has no Slater point (row 2 min over X is 15 > b_2 = 4), \
         so no multiplier bound can be derived",
    )
    .expect("valid radius")
}

/// `h(x) = x^2`, `g(x) = x - 1`, `X = [-2, 2]`.
pub fn toy_1d_spec(delta: f64) -> ProblemSpec {
    ProblemSpec::quadratic(
        vec![2.0],
        vec![0.0],
        0.0,
        vec![1.0],
        vec![1.0],
        BoxSet::uniform(1, -2.0, 2.0).expect("valid box"),
        delta,
    )
}

/// `h(x) = (x - 1)^2`, `g(x) = x`, `X = [-1, 1]`; Slater point `-0.5`.
pub fn slater_toy_spec(delta: f64) -> ProblemSpec {
    ProblemSpec::quadratic(
        vec![2.0],
        vec![-2.0],
        1.0,
        vec![1.0],
        vec![0.0],
        BoxSet::uniform(1, -1.0, 1.0).expect("valid box"),
        delta,
    )
}
