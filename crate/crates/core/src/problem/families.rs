//! Built-in analytic problem families.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{BoxSet, Constraints, IntervalMatrix, Objective};
use crate::error::{check_len, Error, Result};

/// `h(x) = scale * (sum_i x_i^4 + w * sum_i sum_{j != i} (x_i - x_j)^2)`.
///
/// Its Hessian has diagonal `scale * (12 x_i^2 + 4 w (n - 1))` and constant
/// off-diagonal `-4 w scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarticPairwise {
    n: usize,
    scale: f64,
    pair_weight: f64,
}

impl QuarticPairwise {
    pub fn new(n: usize, scale: f64, pair_weight: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidProblem("n must be >= 1".into()));
        }
        if !(scale.is_finite() && scale >= 0.0 && pair_weight.is_finite() && pair_weight >= 0.0) {
            return Err(Error::InvalidProblem(
                "quartic family needs scale >= 0 and pair_weight >= 0 (convexity)".into(),
            ));
        }
        Ok(QuarticPairwise {
            n,
            scale,
            pair_weight,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn pair_weight(&self) -> f64 {
        self.pair_weight
    }
}

impl Objective for QuarticPairwise {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        let quartic: f64 = x.iter().map(|v| v.powi(4)).sum();
        let mut pairs = 0.0;
        for (i, xi) in x.iter().enumerate() {
            for (j, xj) in x.iter().enumerate() {
                if i != j {
                    pairs += (xi - xj) * (xi - xj);
                }
            }
        }
        self.scale * (quartic + self.pair_weight * pairs)
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let n = x.len() as f64;
        let sum: f64 = x.iter().sum();
        DVector::from_iterator(
            x.len(),
            x.iter().map(|&xi| {
                self.scale * (4.0 * xi.powi(3) + 4.0 * self.pair_weight * (n * xi - sum))
            }),
        )
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let off = -4.0 * self.pair_weight * self.scale;
        let diag_const = 4.0 * self.pair_weight * (n as f64 - 1.0);
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.scale * (12.0 * x[i] * x[i] + diag_const)
            } else {
                off
            }
        })
    }

    fn hessian_enclosure(&self, bounds: &BoxSet) -> Option<IntervalMatrix> {
        let n = self.n;
        let off = -4.0 * self.pair_weight * self.scale;
        let diag_const = 4.0 * self.pair_weight * (n as f64 - 1.0);
        let mut lo = DMatrix::from_element(n, n, off);
        let mut hi = lo.clone();
        for i in 0..n {
            let (l, u) = (bounds.lower()[i], bounds.upper()[i]);
            // x^2 is monotone on each side of zero
            let sq_min = if l <= 0.0 && u >= 0.0 {
                0.0
            } else {
                (l * l).min(u * u)
            };
            let sq_max = (l * l).max(u * u);
            lo[(i, i)] = self.scale * (12.0 * sq_min + diag_const);
            hi[(i, i)] = self.scale * (12.0 * sq_max + diag_const);
        }
        Some(IntervalMatrix { lo, hi })
    }

    fn nonnegative_on(&self, _bounds: &BoxSet) -> bool {
        // both sums are nonnegative everywhere
        true
    }
}

/// `h(x) = 1/2 x^T Q x + r^T x + constant` with `Q` symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    q: DMatrix<f64>,
    r: DVector<f64>,
    constant: f64,
}

impl QuadraticObjective {
    pub fn new(q: DMatrix<f64>, r: DVector<f64>, constant: f64) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::InvalidProblem("Q must be square".into()));
        }
        check_len("r", q.nrows(), r.len())?;
        if q.iter().chain(r.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("Q and r must be finite".into()));
        }
        let asym = (&q - q.transpose()).abs().max();
        if asym > 1e-12 * q.abs().max().max(1.0) {
            return Err(Error::InvalidProblem(format!(
                "Q must be symmetric (max asymmetry {asym:e})"
            )));
        }
        let min_eig = q.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-10 * q.abs().max().max(1.0) {
            return Err(Error::InvalidProblem(format!(
                "Q must be positive semidefinite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(QuadraticObjective { q, r, constant })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.q * &x)) + self.r.dot(&x) + self.constant
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        &self.q * DVector::from_column_slice(x) + &self.r
    }

    fn hessian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.q.clone()
    }

    fn hessian_enclosure(&self, _bounds: &BoxSet) -> Option<IntervalMatrix> {
        Some(IntervalMatrix::point(self.q.clone()))
    }

    /// Unconstrained minimum when `Q` is positive definite.
    fn lower_bound_on(&self, _bounds: &BoxSet) -> Option<f64> {
        let chol = self.q.clone().cholesky()?;
        Some(self.constant - 0.5 * self.r.dot(&chol.solve(&self.r)))
    }
}

/// `g(x) = A x - b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraints {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl AffineConstraints {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_len("b", a.nrows(), b.len())?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("A and b must be finite".into()));
        }
        Ok(AffineConstraints { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// `max_j |A_cj|`, the max-norm of the (constant) gradient of `g_c`.
    pub fn row_max_abs(&self, c: usize) -> f64 {
        self.a.row(c).iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

impl Constraints for AffineConstraints {
    fn len(&self) -> usize {
        self.a.nrows()
    }

    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &[f64]) -> DVector<f64> {
        &self.a * DVector::from_column_slice(x) - &self.b
    }

    fn value_component(&self, c: usize, x: &[f64]) -> f64 {
        self.a.row(c).iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - self.b[c]
    }

    fn gradient(&self, c: usize, _x: &[f64]) -> DVector<f64> {
        self.a.row(c).transpose()
    }

    fn hessian(&self, _c: usize, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    fn hessian_enclosure(&self, _c: usize, bounds: &BoxSet) -> Option<IntervalMatrix> {
        Some(IntervalMatrix::zeros(bounds.dim()))
    }

    fn as_affine(&self) -> Option<&AffineConstraints> {
        Some(self)
    }
}

/// `s * h` for an arbitrary objective `h`.
#[derive(Debug, Clone)]
pub struct ScaledObjective {
    inner: Arc<dyn Objective>,
    scale: f64,
}

impl ScaledObjective {
    pub fn new(inner: Arc<dyn Objective>, scale: f64) -> Self {
        ScaledObjective { inner, scale }
    }
}

impl Objective for ScaledObjective {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.scale * self.inner.value(x)
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        self.inner.gradient(x) * self.scale
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        self.inner.hessian(x) * self.scale
    }

    fn hessian_enclosure(&self, bounds: &BoxSet) -> Option<IntervalMatrix> {
        self.inner
            .hessian_enclosure(bounds)
            .map(|e| IntervalMatrix {
                lo: e.lo * self.scale,
                hi: e.hi * self.scale,
            })
    }

    fn nonnegative_on(&self, bounds: &BoxSet) -> bool {
        self.scale >= 0.0 && self.inner.nonnegative_on(bounds)
    }

    fn lower_bound_on(&self, bounds: &BoxSet) -> Option<f64> {
        if self.scale >= 0.0 {
            self.inner.lower_bound_on(bounds).map(|v| v * self.scale)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_enclosure_contains_samples() {
        let h = QuarticPairwise::new(3, 2.0, 0.05).unwrap();
        let b = BoxSet::new(vec![-1.0, 0.5, 2.0], vec![3.0, 1.0, 4.0]).unwrap();
        let enc = h.hessian_enclosure(&b).unwrap();
        for mask in 0..8u64 {
            for t in [0.0, 0.3, 1.0] {
                let c = b.corner(mask);
                let x: Vec<f64> = c
                    .iter()
                    .zip(b.midpoint())
                    .map(|(ci, mi)| t * ci + (1.0 - t) * mi)
                    .collect();
                let hx = h.hessian(&x);
                for i in 0..3 {
                    for j in 0..3 {
                        assert!(hx[(i, j)] >= enc.lo[(i, j)] - 1e-12);
                        assert!(hx[(i, j)] <= enc.hi[(i, j)] + 1e-12);
                    }
                }
            }
        }
        // interval straddles zero on the first coordinate
        assert_eq!(enc.lo[(0, 0)], 2.0 * (4.0 * 0.05 * 2.0));
    }

    #[test]
    fn quadratic_rejects_asymmetric_and_indefinite() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(QuadraticObjective::new(q, DVector::zeros(2), 0.0).is_err());
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(QuadraticObjective::new(q, DVector::zeros(2), 0.0).is_err());
    }
}
