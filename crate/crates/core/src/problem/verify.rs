//! Certification: diagonal dominance, the primal step-size bound, the
//! contraction matrices `G`/`F`, and the Slater-based dual bound.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ConvexProblem, DualBox, DualProvenance, IntervalMatrix};
use crate::error::{check_len, Error, Result};

/// Safety factor applied to the step-size bound when the Hessian maxima are
/// only sampled rather than enclosed.
pub const GRID_GAMMA_SAFETY: f64 = 0.9;

/// Uniform random points added to the corner/midpoint grid in sampling mode.
const GRID_RANDOM_POINTS: usize = 256;
/// Full corner enumeration is used up to this dimension.
const GRID_MAX_CORNER_DIM: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CertificationMethod {
    /// Entrywise interval enclosure of `H` over `X x M`; the result is a
    /// guaranteed bound.
    IntervalBound,
    /// Evaluation on box corners (n <= 10), the midpoint and seeded uniform
    /// samples, each paired with `mu in {0, R*1, R*e_c}`.
    GridSample { points: usize },
}

/// Sample point with the smallest dominance margin seen during certification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub row: usize,
    pub margin: f64,
}

/// Certified `beta` such that `|H_ii| - beta >= sum_{j != i} |H_ij|` on `X x M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCertificate {
    pub beta: f64,
    pub method: CertificationMethod,
    pub witness: Witness,
    /// `max_i max_{X x M} sum_j |H_ij|` under the same method.
    pub max_row_sum: f64,
}

/// Enclosure of `H(x, mu)` over `X x M`, if every piece of the problem
/// provides one.
pub fn hessian_enclosure(p: &ConvexProblem, dual_box: &DualBox) -> Option<IntervalMatrix> {
    let mut enc = p.objective().hessian_enclosure(p.bounds())?;
    for c in 0..p.m() {
        let gc = p.constraints().hessian_enclosure(c, p.bounds())?;
        enc = enc.add(&gc.scale_by_range(dual_box.radius()));
    }
    enc.is_finite().then_some(enc)
}

fn sample_points(p: &ConvexProblem, dual_box: &DualBox) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = p.n();
    let b = p.bounds();
    let mut xs = vec![b.midpoint()];
    if n <= GRID_MAX_CORNER_DIM {
        xs.extend((0..(1u64 << n)).map(|mask| b.corner(mask)));
    } else {
        xs.push(b.lower().to_vec());
        xs.push(b.upper().to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..GRID_RANDOM_POINTS {
        xs.push(
            (0..n)
                .map(|i| {
                    let (l, u) = (b.lower()[i], b.upper()[i]);
                    l + (u - l) * rng.random::<f64>()
                })
                .collect(),
        );
    }
    let m = p.m();
    let r = dual_box.radius();
    let mut mus = vec![vec![0.0; m]];
    if m > 0 && r > 0.0 {
        mus.push(vec![r; m]);
        for c in 0..m {
            let mut e = vec![0.0; m];
            e[c] = r;
            mus.push(e);
        }
    }
    (xs, mus)
}

fn row_margins(h: &DMatrix<f64>) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
    (0..h.nrows()).map(move |i| {
        let off: f64 = (0..h.ncols())
            .filter(|&j| j != i)
            .map(|j| h[(i, j)].abs())
            .sum();
        let diag = h[(i, i)].abs();
        (i, diag - off, diag + off)
    })
}

/// Largest `beta` certified over `X x M`.
///
/// Uses the interval enclosure when the problem supplies one, otherwise the
/// sampling grid described on [`CertificationMethod::GridSample`]. Either
/// way the worst sampled point is returned as the witness.
pub fn verify_dominance(p: &ConvexProblem, dual_box: &DualBox) -> Result<DominanceCertificate> {
    let (xs, mus) = sample_points(p, dual_box);
    let mut witness: Option<Witness> = None;
    let mut sampled_row_max = 0.0f64;
    for x in &xs {
        for mu in &mus {
            let h = p.hessian_x(x, mu)?;
            for (row, margin, row_sum) in row_margins(&h) {
                sampled_row_max = sampled_row_max.max(row_sum);
                if witness.as_ref().is_none_or(|w| margin < w.margin) {
                    witness = Some(Witness {
                        x: x.clone(),
                        mu: mu.clone(),
                        row,
                        margin,
                    });
                }
            }
        }
    }
    let witness = witness.expect("at least one sample point");

    let (beta, max_row_sum, method) = match hessian_enclosure(p, dual_box) {
        Some(enc) => {
            let n = p.n();
            let mut beta = f64::INFINITY;
            let mut row_max = 0.0f64;
            for i in 0..n {
                let off: f64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| enc.magnitude(i, j))
                    .sum();
                beta = beta.min(enc.mignitude(i, i) - off);
                row_max = row_max.max(enc.magnitude(i, i) + off);
            }
            (beta, row_max, CertificationMethod::IntervalBound)
        }
        None => (
            witness.margin,
            sampled_row_max,
            CertificationMethod::GridSample {
                points: xs.len() * mus.len(),
            },
        ),
    };

    if !(beta > 0.0) {
        return Err(Error::DominanceViolated {
            margin: beta,
            row: witness.row,
            x: witness.x,
        });
    }
    Ok(DominanceCertificate {
        beta,
        method,
        witness,
        max_row_sum,
    })
}

/// Upper bound on the primal step: `1 / max_i max_{X x M} sum_j |H_ij|`,
/// times [`GRID_GAMMA_SAFETY`] when the maxima were only sampled. Any step
/// strictly below the returned value is admissible.
pub fn gamma_bound(p: &ConvexProblem, dual_box: &DualBox) -> Result<f64> {
    let cert = verify_dominance(p, dual_box)?;
    gamma_bound_from(&cert)
}

pub(crate) fn gamma_bound_from(cert: &DominanceCertificate) -> Result<f64> {
    if !(cert.max_row_sum.is_finite() && cert.max_row_sum > 0.0) {
        return Err(Error::UnboundedHessian);
    }
    let raw = 1.0 / cert.max_row_sum;
    Ok(match cert.method {
        CertificationMethod::IntervalBound => raw,
        CertificationMethod::GridSample { .. } => GRID_GAMMA_SAFETY * raw,
    })
}

/// Contraction matrices: `G_ii = |H_ii|`, `G_ij = -|H_ij|`, `F = I - gamma G`.
///
/// Both must come out strictly diagonally dominant with positive diagonal
/// (hence positive definite by Gershgorin), otherwise the step is rejected.
pub fn build_g_f(h: &DMatrix<f64>, gamma: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !h.is_square() {
        return Err(Error::InvalidInput("H must be square".into()));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::StepSize(format!("gamma must be > 0, got {gamma}")));
    }
    let n = h.nrows();
    let g = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            h[(i, j)].abs()
        } else {
            -h[(i, j)].abs()
        }
    });
    let f = DMatrix::identity(n, n) - &g * gamma;
    for (name, mat) in [("G", &g), ("F", &f)] {
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| mat[(i, j)].abs()).sum();
            let d = mat[(i, i)];
            if !(d > 0.0 && d > off) {
                return Err(Error::StepSize(format!(
                    "{name} is not strictly diagonally dominant at row {i} \
                     (diag {d}, off-diagonal sum {off}) for gamma = {gamma}"
                )));
            }
        }
    }
    Ok((g, f))
}

/// Compact dual set from a Slater point:
/// `radius = (h(x_bar) - h_lower) / min_j (-g_j(x_bar))`.
///
/// `h_lower` must not exceed `min_X h`; 0 is valid whenever `h >= 0` on X
/// (see [`default_h_lower`]).
pub fn dual_bound(p: &ConvexProblem, slater_point: &[f64], h_lower: f64) -> Result<DualBox> {
    check_len("slater point", p.n(), slater_point.len())?;
    if !p.bounds().contains(slater_point) {
        return Err(Error::SlaterViolated(format!(
            "slater point {slater_point:?} is outside X"
        )));
    }
    let g = p.constraint_values(slater_point)?;
    if let Some((c, v)) = g.iter().enumerate().find(|(_, v)| !(**v < 0.0)) {
        return Err(Error::SlaterViolated(format!(
            "g_{c}(x_bar) = {v} is not strictly negative"
        )));
    }
    let h_bar = p.objective_value(slater_point)?;
    if h_bar < h_lower {
        return Err(Error::InvalidInput(format!(
            "h_lower = {h_lower} exceeds h(x_bar) = {h_bar}; it must lower-bound min_X h"
        )));
    }
    let slack = g.iter().map(|v| -v).fold(f64::INFINITY, f64::min);
    let radius = if g.is_empty() {
        0.0
    } else {
        (h_bar - h_lower) / slack
    };
    DualBox::with_provenance(
        radius,
        DualProvenance::Slater {
            point: slater_point.to_vec(),
            h_lower,
        },
    )
}

/// 0 when `h` is known to be nonnegative on X, else whatever bound the
/// objective can offer; `None` means the caller must supply one.
pub fn default_h_lower(p: &ConvexProblem) -> Option<f64> {
    p.objective().lower_bound_on(p.bounds())
}

/// Per-row minimum of `g_c(x) = a_c^T x - b_c` over the box. A row whose
/// minimum is `>= 0` proves no Slater point exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaterScreen {
    pub row_minima: Vec<f64>,
    /// Minimizer of the summed violation `sum_c max(0, g_c)` is not searched;
    /// these are just the rows that can never be strictly negative.
    pub infeasible_rows: Vec<usize>,
}

impl SlaterScreen {
    pub fn passes(&self) -> bool {
        self.infeasible_rows.is_empty()
    }
}

/// Exact per-row screen for affine constraints; `None` for nonlinear `g`.
pub fn screen_affine_slater(p: &ConvexProblem) -> Option<SlaterScreen> {
    let aff = p.constraints().as_affine()?;
    let b = p.bounds();
    let row_minima: Vec<f64> = (0..aff.a().nrows())
        .map(|c| {
            let lin: f64 = aff
                .a()
                .row(c)
                .iter()
                .enumerate()
                .map(|(j, &a)| {
                    if a >= 0.0 {
                        a * b.lower()[j]
                    } else {
                        a * b.upper()[j]
                    }
                })
                .sum();
            lin - aff.b()[c]
        })
        .collect();
    let infeasible_rows = row_minima
        .iter()
        .enumerate()
        .filter_map(|(c, &v)| (v >= 0.0).then_some(c))
        .collect();
    Some(SlaterScreen {
        row_minima,
        infeasible_rows,
    })
}

/// Validated step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub gamma: f64,
    pub rho: f64,
    pub gamma_max: f64,
    pub rho_interval: (f64, f64),
}

impl StepSizes {
    /// Requires `0 < gamma < gamma_max` and `rho` strictly inside the
    /// interval on which the dual contraction factor is below one.
    pub fn new(gamma: f64, rho: f64, gamma_max: f64, delta: f64) -> Result<Self> {
        let rho_interval = crate::rates::rho_interval(delta)?;
        if !(gamma > 0.0 && gamma < gamma_max) {
            return Err(Error::StepSize(format!(
                "gamma = {gamma} must lie in (0, {gamma_max})"
            )));
        }
        if !(rho > rho_interval.0 && rho < rho_interval.1) {
            return Err(Error::StepSize(format!(
                "rho = {rho} must lie in ({}, {})",
                rho_interval.0, rho_interval.1
            )));
        }
        Ok(StepSizes {
            gamma,
            rho,
            gamma_max,
            rho_interval,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{BoxSet, ProblemSpec};
    use approx::assert_relative_eq;

    fn const_hessian(q: Vec<f64>, n: usize) -> ConvexProblem {
        ProblemSpec::quadratic(
            q,
            vec![0.0; n],
            0.0,
            vec![1.0; n],
            vec![1.0],
            BoxSet::uniform(n, -1.0, 1.0).unwrap(),
            0.1,
        )
        .build()
        .unwrap()
    }

    fn radius(r: f64) -> DualBox {
        DualBox::user_supplied(r, "test").unwrap()
    }

    #[test]
    fn identity_hessian() {
        let p = const_hessian(vec![1.0, 0.0, 0.0, 1.0], 2);
        let cert = verify_dominance(&p, &radius(1.0)).unwrap();
        assert_eq!(cert.beta, 1.0);
        assert_eq!(cert.method, CertificationMethod::IntervalBound);
        assert_eq!(gamma_bound(&p, &radius(1.0)).unwrap(), 1.0);
    }

    #[test]
    fn two_by_two_hessian() {
        let p = const_hessian(vec![2.0, -0.5, -0.5, 2.0], 2);
        let cert = verify_dominance(&p, &radius(1.0)).unwrap();
        assert_relative_eq!(cert.beta, 1.5, epsilon = 1e-12);
        assert_relative_eq!(gamma_bound(&p, &radius(1.0)).unwrap(), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn non_dominant_reports_witness() {
        let p = const_hessian(vec![1.0, 0.9, 0.9, 1.0], 2);
        // PSD (eigenvalues 0.1, 1.9) but margin 0.1 ... still dominant
        assert!(verify_dominance(&p, &radius(1.0)).is_ok());
        let p = const_hessian(vec![1.0, 1.0, 1.0, 1.0], 2);
        match verify_dominance(&p, &radius(1.0)) {
            Err(Error::DominanceViolated { margin, x, .. }) => {
                assert_eq!(margin, 0.0);
                assert_eq!(x.len(), 2);
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn g_f_example() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, -0.5, -0.5, 2.0]);
        let (g, f) = build_g_f(&h, 0.2).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[2.0, -0.5, -0.5, 2.0]));
        let want = DMatrix::from_row_slice(2, 2, &[0.6, 0.1, 0.1, 0.6]);
        assert!((f.clone() - want).abs().max() < 1e-12);
        // row sums of F are <= 1 - gamma * beta
        for i in 0..2 {
            assert!(f.row(i).sum() <= 1.0 - 0.2 * 1.5 + 1e-12);
        }
        // too large a step breaks F
        assert!(matches!(build_g_f(&h, 0.5), Err(Error::StepSize(_))));
    }

    #[test]
    fn g_f_diagonal() {
        let h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0]));
        let (g, f) = build_g_f(&h, 0.1).unwrap();
        assert_eq!(g, h);
        assert_relative_eq!(f[(0, 0)], 0.9, epsilon = 1e-15);
        assert_relative_eq!(f[(1, 1)], 0.7, epsilon = 1e-15);
        assert_eq!(f[(0, 1)], 0.0);
    }

    /// h(x) = (x - 1)^2 on [-1, 1], g(x) = scale * x.
    fn bound_toy(scale: f64) -> ConvexProblem {
        ProblemSpec::quadratic(
            vec![2.0],
            vec![-2.0],
            1.0,
            vec![scale],
            vec![0.0],
            BoxSet::uniform(1, -1.0, 1.0).unwrap(),
            0.1,
        )
        .build()
        .unwrap()
    }

    #[test]
    fn dual_bound_examples() {
        let d = dual_bound(&bound_toy(1.0), &[-0.5], 0.0).unwrap();
        assert_relative_eq!(d.radius(), 4.5, epsilon = 1e-12);
        // doubling g doubles the slack and halves the radius
        let d = dual_bound(&bound_toy(2.0), &[-0.5], 0.0).unwrap();
        assert_relative_eq!(d.radius(), 2.25, epsilon = 1e-12);
        let d = dual_bound(&bound_toy(0.5), &[-0.5], 0.0).unwrap();
        assert_relative_eq!(d.radius(), 9.0, epsilon = 1e-12);
        // h(x_bar) == h_lower
        let d = dual_bound(&bound_toy(1.0), &[-0.5], 2.25).unwrap();
        assert_eq!(d.radius(), 0.0);
        assert_eq!(d.project(&[3.0]), vec![0.0]);
    }

    #[test]
    fn dual_bound_errors() {
        assert!(matches!(
            dual_bound(&bound_toy(1.0), &[0.5], 0.0),
            Err(Error::SlaterViolated(_))
        ));
        assert!(matches!(
            dual_bound(&bound_toy(1.0), &[-2.0], 0.0),
            Err(Error::SlaterViolated(_))
        ));
        assert!(dual_bound(&bound_toy(1.0), &[-0.5], 5.0).is_err());
    }

    #[test]
    fn quartic10_certificates() {
        let p = crate::presets::quartic10_problem().unwrap();
        let d = radius(10.0);
        let cert = verify_dominance(&p, &d).unwrap();
        assert!((cert.beta - 12.0).abs() < 1e-9);
        assert_eq!(cert.witness.x, vec![1.0; 10]);
        assert_relative_eq!(gamma_bound(&p, &d).unwrap(), 1.0 / 1203.6, epsilon = 1e-15);
        let screen = screen_affine_slater(&p).unwrap();
        assert_eq!(screen.infeasible_rows, vec![1]);
        assert_relative_eq!(screen.row_minima[1], 11.0, epsilon = 1e-12);
        assert_eq!(default_h_lower(&p), Some(0.0));
    }

    #[test]
    fn step_sizes_validation() {
        assert!(StepSizes::new(8e-4, 1000.0, 1.0 / 1203.6, 0.001).is_ok());
        assert!(StepSizes::new(9e-4, 1000.0, 1.0 / 1203.6, 0.001).is_err());
        assert!(StepSizes::new(8e-4, 400.0, 1.0 / 1203.6, 0.001).is_err());
        assert!(StepSizes::new(0.0, 1000.0, 1.0, 0.001).is_err());
    }
}
