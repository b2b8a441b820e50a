//! Constrained convex problems, the regularized Lagrangian, and the
//! machinery that certifies a problem is fit for the block primal-dual
//! iteration (diagonal dominance, dual bound, step-size bound).

mod families;
mod schema;
mod verify;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub use families::{AffineConstraints, QuadraticObjective, QuarticPairwise, ScaledObjective};
pub use schema::{Family, ProblemSpec};
pub use verify::{
    build_g_f, default_h_lower, dual_bound, gamma_bound, hessian_enclosure, screen_affine_slater,
    verify_dominance, CertificationMethod, DominanceCertificate, SlaterScreen, StepSizes, Witness,
    GRID_GAMMA_SAFETY,
};

/// Entrywise interval enclosure of a matrix-valued function.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMatrix {
    pub lo: DMatrix<f64>,
    pub hi: DMatrix<f64>,
}

impl IntervalMatrix {
    pub fn point(m: DMatrix<f64>) -> Self {
        IntervalMatrix {
            lo: m.clone(),
            hi: m,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::point(DMatrix::zeros(n, n))
    }

    /// Largest absolute value attained by entry (i, j).
    pub fn magnitude(&self, i: usize, j: usize) -> f64 {
        self.lo[(i, j)].abs().max(self.hi[(i, j)].abs())
    }

    /// Smallest absolute value attained by entry (i, j).
    pub fn mignitude(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = (self.lo[(i, j)], self.hi[(i, j)]);
        if lo <= 0.0 && hi >= 0.0 {
            0.0
        } else {
            lo.abs().min(hi.abs())
        }
    }

    pub fn add(&self, other: &IntervalMatrix) -> IntervalMatrix {
        IntervalMatrix {
            lo: &self.lo + &other.lo,
            hi: &self.hi + &other.hi,
        }
    }

    /// Product with the scalar interval `[0, s]`, `s >= 0`.
    pub fn scale_by_range(&self, s: f64) -> IntervalMatrix {
        IntervalMatrix {
            lo: self.lo.map(|v| (v * s).min(0.0)),
            hi: self.hi.map(|v| (v * s).max(0.0)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lo.iter().chain(self.hi.iter()).all(|v| v.is_finite())
    }
}

/// Twice differentiable convex objective `h`.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> DVector<f64>;
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;

    /// Entrywise enclosure of the Hessian over `bounds`, when one is cheap to
    /// derive. `None` makes certification fall back to sampling.
    fn hessian_enclosure(&self, _bounds: &BoxSet) -> Option<IntervalMatrix> {
        None
    }

    /// `true` only when `h >= 0` is known to hold on `bounds`.
    fn nonnegative_on(&self, _bounds: &BoxSet) -> bool {
        false
    }

    /// A number `<= min_{bounds} h`, if one is known.
    fn lower_bound_on(&self, bounds: &BoxSet) -> Option<f64> {
        self.nonnegative_on(bounds).then_some(0.0)
    }
}

/// Constraint map `g : R^n -> R^m`, each component convex and C².
pub trait Constraints: Send + Sync + fmt::Debug {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> DVector<f64>;
    fn gradient(&self, c: usize, x: &[f64]) -> DVector<f64>;
    /// `None` means the Hessian of `g_c` vanishes identically.
    fn hessian(&self, c: usize, x: &[f64]) -> Option<DMatrix<f64>>;

    fn value_component(&self, c: usize, x: &[f64]) -> f64 {
        self.value(x)[c]
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn hessian_enclosure(&self, _c: usize, _bounds: &BoxSet) -> Option<IntervalMatrix> {
        None
    }

    fn as_affine(&self) -> Option<&AffineConstraints> {
        None
    }
}

/// Axis-aligned box `X = [lower_1, upper_1] x ... x [lower_n, upper_n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("box upper bounds", lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidProblem("box must have dimension >= 1".into()));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::InvalidProblem(format!(
                    "box bound {i} is not finite (X must be compact)"
                )));
            }
            if l > u {
                return Err(Error::InvalidProblem(format!(
                    "box bound {i}: lower {l} > upper {u}"
                )));
            }
        }
        Ok(BoxSet { lower, upper })
    }

    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; n], vec![upper; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn clamp_component(&self, i: usize, v: f64) -> f64 {
        v.clamp(self.lower[i], self.upper[i])
    }

    /// Euclidean projection, which for a box is the componentwise clamp.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| self.clamp_component(i, v))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    /// `max_{x,y in X} ||x - y||_max`.
    pub fn diameter_max(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .fold(0.0, f64::max)
    }

    /// Vertex selected by the bits of `mask` (bit i set => upper bound).
    pub fn corner(&self, mask: u64) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                if i < 64 && mask >> i & 1 == 1 {
                    self.upper[i]
                } else {
                    self.lower[i]
                }
            })
            .collect()
    }
}

/// Where a dual radius came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DualProvenance {
    /// Computed from a Slater point and a lower bound on `min_X h`.
    Slater { point: Vec<f64>, h_lower: f64 },
    /// Supplied by the user, e.g. because no Slater point exists.
    UserSupplied { note: String },
}

/// Compact dual set `M`: every multiplier lives in `[0, radius]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualBox {
    radius: f64,
    provenance: DualProvenance,
}

impl DualBox {
    pub fn user_supplied(radius: f64, note: impl Into<String>) -> Result<Self> {
        Self::with_provenance(radius, DualProvenance::UserSupplied { note: note.into() })
    }

    pub fn with_provenance(radius: f64, provenance: DualProvenance) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "dual radius must be finite and >= 0, got {radius}"
            )));
        }
        Ok(DualBox { radius, provenance })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn provenance(&self) -> &DualProvenance {
        &self.provenance
    }

    pub fn project_component(&self, v: f64) -> f64 {
        v.clamp(0.0, self.radius)
    }

    pub fn project(&self, mu: &[f64]) -> Vec<f64> {
        mu.iter().map(|&v| self.project_component(v)).collect()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.iter().all(|&v| (0.0..=self.radius).contains(&v))
    }
}

/// `min h(x) s.t. g(x) <= 0, x in X`, together with the Tikhonov weight
/// `delta` used by the regularized Lagrangian
/// `L(x, mu) = h(x) + mu^T g(x) - (delta / 2) ||mu||^2`.
#[derive(Clone)]
pub struct ConvexProblem {
    objective: Arc<dyn Objective>,
    constraints: Arc<dyn Constraints>,
    bounds: BoxSet,
    delta: f64,
    spec: Option<ProblemSpec>,
}

impl fmt::Debug for ConvexProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvexProblem")
            .field("n", &self.n())
            .field("m", &self.m())
            .field("objective", &self.objective)
            .field("constraints", &self.constraints)
            .field("bounds", &self.bounds)
            .field("delta", &self.delta)
            .finish()
    }
}

impl ConvexProblem {
    pub fn new(
        objective: Arc<dyn Objective>,
        constraints: Arc<dyn Constraints>,
        bounds: BoxSet,
        delta: f64,
    ) -> Result<Self> {
        let n = objective.dim();
        check_len("constraint input dimension", n, constraints.dim())?;
        check_len("box dimension", n, bounds.dim())?;
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "regularization delta must be > 0, got {delta}"
            )));
        }
        Ok(ConvexProblem {
            objective,
            constraints,
            bounds,
            delta,
            spec: None,
        })
    }

    pub fn n(&self) -> usize {
        self.objective.dim()
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn bounds(&self) -> &BoxSet {
        &self.bounds
    }

    pub fn objective(&self) -> &dyn Objective {
        &*self.objective
    }

    pub fn constraints(&self) -> &dyn Constraints {
        &*self.constraints
    }

    /// The serializable description, for problems built from one.
    pub fn spec(&self) -> Option<&ProblemSpec> {
        self.spec.as_ref()
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let mut p = Self::new(
            self.objective.clone(),
            self.constraints.clone(),
            self.bounds.clone(),
            delta,
        )?;
        p.spec = self.spec.clone().map(|mut s| {
            s.delta = delta;
            s
        });
        Ok(p)
    }

    /// Same problem with `h` replaced by `scale * h`.
    pub fn with_objective_scale(&self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "objective scale must be > 0, got {scale}"
            )));
        }
        match &self.spec {
            Some(spec) => spec.scaled(scale).build(),
            None => Self::new(
                Arc::new(ScaledObjective::new(self.objective.clone(), scale)),
                self.constraints.clone(),
                self.bounds.clone(),
                self.delta,
            ),
        }
    }

    fn check_point(&self, x: &[f64], mu: &[f64]) -> Result<()> {
        check_len("x", self.n(), x.len())?;
        check_len("mu", self.m(), mu.len())
    }

    /// `h(x) + mu^T g(x) - (delta/2) ||mu||^2`.
    pub fn eval_lagrangian(&self, x: &[f64], mu: &[f64]) -> Result<f64> {
        self.check_point(x, mu)?;
        if mu.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("mu must be componentwise >= 0".into()));
        }
        let g = self.constraints.value(x);
        let coupling: f64 = mu.iter().zip(g.iter()).map(|(m, gc)| m * gc).sum();
        let reg: f64 = mu.iter().map(|m| m * m).sum();
        Ok(self.objective.value(x) + coupling - 0.5 * self.delta * reg)
    }

    /// `grad h(x) + sum_c mu_c grad g_c(x)`.
    pub fn grad_x(&self, x: &[f64], mu: &[f64]) -> Result<DVector<f64>> {
        self.check_point(x, mu)?;
        Ok(self.grad_x_unchecked(x, mu))
    }

    pub(crate) fn grad_x_unchecked(&self, x: &[f64], mu: &[f64]) -> DVector<f64> {
        let mut grad = self.objective.gradient(x);
        match self.constraints.as_affine() {
            Some(aff) => {
                for (c, &mc) in mu.iter().enumerate() {
                    if mc != 0.0 {
                        for j in 0..grad.len() {
                            grad[j] += mc * aff.a()[(c, j)];
                        }
                    }
                }
            }
            None => {
                for (c, &mc) in mu.iter().enumerate() {
                    if mc != 0.0 {
                        grad += self.constraints.gradient(c, x) * mc;
                    }
                }
            }
        }
        grad
    }

    /// `g(x) - delta * mu`.
    pub fn grad_mu(&self, x: &[f64], mu: &[f64]) -> Result<DVector<f64>> {
        self.check_point(x, mu)?;
        let g = self.constraints.value(x);
        Ok(DVector::from_iterator(
            mu.len(),
            g.iter().zip(mu).map(|(gc, m)| gc - self.delta * m),
        ))
    }

    /// `grad^2 h(x) + sum_c mu_c grad^2 g_c(x)`.
    pub fn hessian_x(&self, x: &[f64], mu: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x, mu)?;
        let mut h = self.objective.hessian(x);
        for (c, &mc) in mu.iter().enumerate() {
            if mc != 0.0 {
                if let Some(hc) = self.constraints.hessian(c, x) {
                    h += hc * mc;
                }
            }
        }
        Ok(h)
    }

    /// Componentwise clamp onto `X`.
    pub fn project_box(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("x", self.n(), x.len())?;
        Ok(self.bounds.project(x))
    }

    /// One projected primal step on block `i`:
    /// `clamp_i(x_i - gamma * d/dx_i L(x, mu))`.
    ///
    /// Both the synchronous iteration and the simulator go through this so
    /// that their floating-point paths coincide.
    pub(crate) fn primal_block_step(
        &self,
        i: usize,
        grad: &DVector<f64>,
        x_i: f64,
        gamma: f64,
    ) -> f64 {
        self.bounds.clamp_component(i, x_i - gamma * grad[i])
    }

    /// One projected dual step on component `c`:
    /// `clamp_[0,R](mu_c + rho * (g_c - delta * mu_c))`.
    pub(crate) fn dual_component_step(
        &self,
        dual_box: &DualBox,
        g_c: f64,
        mu_c: f64,
        rho: f64,
    ) -> f64 {
        dual_box.project_component(mu_c + rho * (g_c - self.delta * mu_c))
    }

    /// Pattern of essential neighbours: `needs[i]` lists the blocks `j != i`
    /// whose values enter `d/dx_i L`. Derived from the union of Hessian
    /// nonzeros at the box corners (for small n), the midpoint, and
    /// `mu in {0, R * 1}`.
    pub fn dependency_pattern(&self, dual_box: &DualBox) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut nz = vec![vec![false; n]; n];
        let mut points = vec![self.bounds.midpoint()];
        if n <= 8 {
            for mask in 0..(1u64 << n) {
                points.push(self.bounds.corner(mask));
            }
        } else {
            points.push(self.bounds.lower().to_vec());
            points.push(self.bounds.upper().to_vec());
        }
        let mus = [vec![0.0; self.m()], vec![dual_box.radius(); self.m()]];
        for x in &points {
            for mu in &mus {
                let h = self.hessian_x(x, mu).expect("dimensions checked");
                for i in 0..n {
                    for j in 0..n {
                        if i != j && h[(i, j)] != 0.0 {
                            nz[i][j] = true;
                        }
                    }
                }
            }
        }
        nz.into_iter()
            .map(|row| {
                row.into_iter()
                    .enumerate()
                    .filter_map(|(j, on)| on.then_some(j))
                    .collect()
            })
            .collect()
    }

    /// `h` on its own, for dual-bound computations.
    pub fn objective_value(&self, x: &[f64]) -> Result<f64> {
        check_len("x", self.n(), x.len())?;
        Ok(self.objective.value(x))
    }

    pub fn constraint_values(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_len("x", self.n(), x.len())?;
        Ok(self.constraints.value(x))
    }

    pub(crate) fn set_spec(&mut self, spec: ProblemSpec) {
        self.spec = Some(spec);
    }
}

/// Maximum norm `max_i |v_i|`.
pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// `||a - b||_max`.
pub fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// h(x) = x^2, g(x) = x - 1 on [-2, 2].
    pub(crate) fn toy_1d(delta: f64) -> ConvexProblem {
        ProblemSpec::quadratic(
            vec![2.0],
            vec![0.0],
            0.0,
            vec![1.0],
            vec![1.0],
            BoxSet::uniform(1, -2.0, 2.0).unwrap(),
            delta,
        )
        .build()
        .unwrap()
    }

    #[test]
    fn lagrangian_hand_values() {
        let p = toy_1d(0.1);
        assert_relative_eq!(
            p.eval_lagrangian(&[2.0], &[3.0]).unwrap(),
            6.55,
            epsilon = 1e-12
        );
        assert_relative_eq!(p.grad_x(&[2.0], &[3.0]).unwrap()[0], 7.0, epsilon = 1e-12);
        assert_relative_eq!(p.grad_mu(&[2.0], &[3.0]).unwrap()[0], 0.7, epsilon = 1e-12);
        // mu = 0 reduces to h
        assert_eq!(p.eval_lagrangian(&[1.5], &[0.0]).unwrap(), 2.25);
        assert_eq!(p.grad_x(&[1.5], &[0.0]).unwrap()[0], 3.0);
        assert_eq!(p.grad_mu(&[1.5], &[0.0]).unwrap()[0], 0.5);
    }

    #[test]
    fn quartic10_all_ones_value() {
        let p = crate::presets::quartic10_problem().unwrap();
        let x = vec![1.0; 10];
        assert_eq!(p.eval_lagrangian(&x, &[0.0; 6]).unwrap(), 10.0);
    }

    #[test]
    fn quartic10_hessian_entries() {
        let p = crate::presets::quartic10_problem().unwrap();
        let x: Vec<f64> = (0..10).map(|i| 1.0 + 0.7 * i as f64).collect();
        let mu = vec![0.3, 1.0, 0.0, 2.0, 5.0, 9.0];
        let h = p.hessian_x(&x, &mu).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let want = if i == j {
                    12.0 * x[i] * x[i] + 1.8
                } else {
                    -0.2
                };
                assert_relative_eq!(h[(i, j)], want, epsilon = 1e-12);
            }
        }
        // affine g: the Hessian ignores mu
        assert_eq!(h, p.hessian_x(&x, &[0.0; 6]).unwrap());
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn dimension_errors() {
        let p = toy_1d(0.1);
        assert!(matches!(
            p.eval_lagrangian(&[1.0, 2.0], &[0.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            p.grad_mu(&[1.0], &[]),
            Err(Error::Dimension { .. })
        ));
        assert!(p.eval_lagrangian(&[1.0], &[-1.0]).is_err());
    }

    #[test]
    fn box_projection_examples() {
        let b = BoxSet::uniform(1, 1.0, 10.0).unwrap();
        assert_eq!(b.project(&[12.0]), vec![10.0]);
        assert_eq!(b.project(&[4.0]), vec![4.0]);
        let d = DualBox::user_supplied(4.5, "test").unwrap();
        assert_eq!(d.project(&[-1.0, 5.0]), vec![0.0, 4.5]);
        assert!(BoxSet::new(vec![2.0], vec![1.0]).is_err());
        assert!(DualBox::user_supplied(-1.0, "x").is_err());
    }

    #[test]
    fn invalid_delta_rejected() {
        let p = toy_1d(0.1);
        assert!(p.with_delta(0.0).is_err());
        assert!(p.with_delta(-1.0).is_err());
    }

    #[test]
    fn quartic10_is_fully_coupled() {
        let p = crate::presets::quartic10_problem().unwrap();
        let d = DualBox::user_supplied(10.0, "t").unwrap();
        let pattern = p.dependency_pattern(&d);
        for (i, row) in pattern.iter().enumerate() {
            assert_eq!(row.len(), 9, "row {i}");
        }
    }
}
