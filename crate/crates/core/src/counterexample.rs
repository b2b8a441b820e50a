//! Quadratic instances where two close multiplier vectors have minimizers
//! of the Lagrangian that lie far apart.
//!
//! With `h(x) = 1/2 x^T Q x + r^T x` and `g(x) = A x`, the minimizer for a
//! fixed `mu` is `-Q^{-1}(r + A^T mu)`, so two minimizers differ by
//! `Q^{-1} A^T (mu1 - mu2)`. If the rows of `A` are orthonormal eigenvectors
//! of `Q`, the singular values of `Q^{-1} A^T` are `1 / lambda_i(Q)` and the
//! gap is at least `||mu1 - mu2|| / lambda_max(Q)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::problem::{
    l2_dist, l2_norm, AffineConstraints, BoxSet, ConvexProblem, DualBox, ProblemSpec,
    QuadraticObjective,
};
use crate::sim::{run, RunOptions, Schedule, ScheduleSpec, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleInstance {
    pub n: usize,
    pub m: usize,
    /// Symmetric positive definite, row-major.
    pub q: Vec<f64>,
    /// Orthonormal rows, each an eigenvector of `Q`; row-major.
    pub a: Vec<f64>,
    pub r: Vec<f64>,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub epsilon: f64,
    pub l: f64,
    /// `X = [-box_halfwidth, box_halfwidth]^n`.
    pub box_halfwidth: f64,
}

/// The quantities the construction promises, as measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    /// `||mu1 - mu2||_2`
    pub mu_gap: f64,
    /// `||x1 - x2||_2`
    pub x_gap: f64,
    /// `sigma_min(Q^{-1} A^T)`, from an SVD.
    pub sigma_min: f64,
    /// `||mu1 - mu2|| / lambda_max(Q)`
    pub lower_bound: f64,
    pub lambda_max: f64,
    pub epsilon: f64,
    pub l: f64,
}

fn check_params(epsilon: f64, l: f64, n: usize) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    if !(l > epsilon && l.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need L > epsilon, got L = {l}, epsilon = {epsilon}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    Ok(())
}

/// Random orthogonal matrix: Q factor of a Gaussian matrix, columns signed
/// so that R has a positive diagonal.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

impl CounterexampleInstance {
    /// Random instance with `m = n`: eigenvalues of `Q` log-uniform in
    /// `[0.05, 0.5] * epsilon / L`, `mu1` uniform in `[0, 1)^n`, and
    /// `mu2 = mu1 + 0.9 epsilon e` for a random nonnegative unit vector `e`.
    /// The gap is then at least `0.9 epsilon / lambda_max >= 1.8 L`.
    pub fn build(epsilon: f64, l: f64, n: usize, seed: u64) -> Result<Self> {
        check_params(epsilon, l, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_orthogonal(n, &mut rng).transpose();
        let scale = epsilon / l;
        let (lo, hi) = ((0.05f64).ln(), (0.5f64).ln());
        let lambda: Vec<f64> = (0..n)
            .map(|_| scale * (lo + (hi - lo) * rng.random::<f64>()).exp())
            .collect();
        let q = v.transpose() * DMatrix::from_diagonal(&DVector::from_vec(lambda)) * &v;
        // exact symmetry
        let q = (&q + q.transpose()) * 0.5;
        let mu1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut e: Vec<f64> = (0..n)
            .map(|_| StandardNormal.sample(&mut rng))
            .map(|v: f64| v.abs())
            .collect();
        let norm = l2_norm(&e);
        e.iter_mut().for_each(|v| *v /= norm);
        let mu2 = mu1
            .iter()
            .zip(&e)
            .map(|(m, d)| m + 0.9 * epsilon * d)
            .collect();
        Self::from_parts(
            q.transpose().as_slice().to_vec(),
            v.transpose().as_slice().to_vec(),
            vec![0.0; n],
            mu1,
            mu2,
            epsilon,
            l,
        )
    }

    /// Checks every invariant and sizes the box to hold both minimizers.
    pub fn from_parts(
        q: Vec<f64>,
        a: Vec<f64>,
        r: Vec<f64>,
        mu1: Vec<f64>,
        mu2: Vec<f64>,
        epsilon: f64,
        l: f64,
    ) -> Result<Self> {
        let n = r.len();
        check_params(epsilon, l, n)?;
        check_len("Q", n * n, q.len())?;
        check_len("A", n * n, a.len())?;
        check_len("mu1", n, mu1.len())?;
        check_len("mu2", n, mu2.len())?;
        if mu1.iter().chain(&mu2).any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidInput(
                "multipliers must be nonnegative".into(),
            ));
        }
        let qm = DMatrix::from_row_slice(n, n, &q);
        let am = DMatrix::from_row_slice(n, n, &a);
        if (&qm - qm.transpose()).abs().max() > 1e-12 * qm.abs().max() {
            return Err(Error::InvalidInput("Q must be symmetric".into()));
        }
        let eig = qm.clone().symmetric_eigen().eigenvalues;
        if !(eig.min() > 0.0) {
            return Err(Error::InvalidInput("Q must be positive definite".into()));
        }
        if !(eig.max() < epsilon / l) {
            return Err(Error::InvalidInput(format!(
                "lambda_max(Q) = {} must be below epsilon / L = {}",
                eig.max(),
                epsilon / l
            )));
        }
        let gram = &am * am.transpose() - DMatrix::identity(n, n);
        if gram.abs().max() > 1e-12 {
            return Err(Error::InvalidInput("rows of A must be orthonormal".into()));
        }
        for c in 0..n {
            let row = am.row(c).transpose();
            let qa = &qm * &row;
            let lam = row.dot(&qa);
            if (qa - row * lam).abs().max() > 1e-9 * eig.max() {
                return Err(Error::InvalidInput(format!(
                    "row {c} of A is not an eigenvector of Q"
                )));
            }
        }
        if !(l2_dist(&mu1, &mu2) < epsilon) {
            return Err(Error::InvalidInput(format!(
                "||mu1 - mu2|| = {} must be below epsilon = {epsilon}",
                l2_dist(&mu1, &mu2)
            )));
        }
        let mut inst = CounterexampleInstance {
            n,
            m: n,
            q,
            a,
            r,
            mu1,
            mu2,
            epsilon,
            l,
            box_halfwidth: f64::INFINITY,
        };
        let reach = [inst.mu1.clone(), inst.mu2.clone()]
            .iter()
            .map(|mu| {
                unconstrained_min(&inst, mu).map(|x| x.iter().fold(0.0f64, |a, v| a.max(v.abs())))
            })
            .collect::<Result<Vec<_>>>()?;
        inst.box_halfwidth = 1.1 * reach.iter().fold(0.0f64, |a, &b| a.max(b)) + 1.0;
        Ok(inst)
    }

    pub fn q_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.q)
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.m, self.n, &self.a)
    }

    /// Problem JSON form: quadratic objective, `b = 0`.
    pub fn to_spec(&self, delta: f64) -> ProblemSpec {
        ProblemSpec::quadratic(
            self.q.clone(),
            self.r.clone(),
            0.0,
            self.a.clone(),
            vec![0.0; self.m],
            BoxSet::uniform(self.n, -self.box_halfwidth, self.box_halfwidth).expect("finite box"),
            delta,
        )
    }

    pub fn to_problem(&self, delta: f64) -> Result<ConvexProblem> {
        ConvexProblem::new(
            Arc::new(QuadraticObjective::new(
                self.q_matrix(),
                DVector::from_column_slice(&self.r),
                0.0,
            )?),
            Arc::new(AffineConstraints::new(
                self.a_matrix(),
                DVector::zeros(self.m),
            )?),
            BoxSet::uniform(self.n, -self.box_halfwidth, self.box_halfwidth)?,
            delta,
        )
    }

    /// Singular values of `Q^{-1} A^T`, ascending.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        let qinv = self
            .q_matrix()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("Q is not positive definite".into()))?
            .inverse();
        let mut s: Vec<f64> = (qinv * self.a_matrix().transpose())
            .singular_values()
            .iter()
            .copied()
            .collect();
        s.sort_by(f64::total_cmp);
        Ok(s)
    }

    /// `1 / lambda_i(Q)`, ascending.
    pub fn inverse_eigenvalues(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self
            .q_matrix()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|l| 1.0 / l)
            .collect();
        s.sort_by(f64::total_cmp);
        s
    }
}

fn unconstrained_min(inst: &CounterexampleInstance, mu: &[f64]) -> Result<Vec<f64>> {
    check_len("mu", inst.m, mu.len())?;
    let rhs = -(DVector::from_column_slice(&inst.r)
        + inst.a_matrix().transpose() * DVector::from_column_slice(mu));
    let chol = inst
        .q_matrix()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("Q is not positive definite".into()))?;
    Ok(chol.solve(&rhs).as_slice().to_vec())
}

/// `-Q^{-1}(r + A^T mu)`; the box must contain it.
pub fn argmin_lagrangian(inst: &CounterexampleInstance, mu: &[f64]) -> Result<Vec<f64>> {
    let x = unconstrained_min(inst, mu)?;
    if let Some((i, &v)) = x
        .iter()
        .enumerate()
        .find(|(_, v)| v.abs() > inst.box_halfwidth)
    {
        return Err(Error::BoxTooSmall { index: i, value: v });
    }
    Ok(x)
}

/// Measures the four quantities without judging them.
pub fn report(inst: &CounterexampleInstance) -> Result<CounterexampleReport> {
    let x1 = argmin_lagrangian(inst, &inst.mu1)?;
    let x2 = argmin_lagrangian(inst, &inst.mu2)?;
    let mu_gap = l2_dist(&inst.mu1, &inst.mu2);
    let lambda_max = inst.q_matrix().symmetric_eigen().eigenvalues.max();
    Ok(CounterexampleReport {
        mu_gap,
        x_gap: l2_dist(&x1, &x2),
        sigma_min: inst.singular_values()?[0],
        lower_bound: mu_gap / lambda_max,
        lambda_max,
        epsilon: inst.epsilon,
        l: inst.l,
    })
}

/// Relative tolerance on the singular-value lower bound.
pub const SIGMA_REL_TOL: f64 = 1e-9;

/// [`report`] plus the checks `||mu1 - mu2|| < epsilon`, `||x1 - x2|| > L`
/// and `||x1 - x2|| >= sigma_min ||mu1 - mu2||` with
/// `sigma_min = 1 / lambda_max(Q)`.
pub fn verify(inst: &CounterexampleInstance) -> Result<CounterexampleReport> {
    let rep = report(inst)?;
    if !(rep.mu_gap < rep.epsilon) {
        return Err(Error::Verification(format!(
            "||mu1 - mu2|| < epsilon fails: {} >= {}",
            rep.mu_gap, rep.epsilon
        )));
    }
    if !(rep.x_gap > rep.l) {
        return Err(Error::Verification(format!(
            "||x1 - x2|| > L fails: {} <= {}",
            rep.x_gap, rep.l
        )));
    }
    let sigma_expected = 1.0 / rep.lambda_max;
    if (rep.sigma_min - sigma_expected).abs() > SIGMA_REL_TOL * sigma_expected {
        return Err(Error::Verification(format!(
            "sigma_min(Q^-1 A^T) = 1 / lambda_max(Q) fails: {} vs {}",
            rep.sigma_min, sigma_expected
        )));
    }
    if rep.x_gap < rep.lower_bound * (1.0 - SIGMA_REL_TOL) {
        return Err(Error::Verification(format!(
            "||x1 - x2|| >= sigma_min ||mu1 - mu2|| fails: {} < {}",
            rep.x_gap, rep.lower_bound
        )));
    }
    Ok(rep)
}

/// Two primal runs, one per multiplier vector, with `mu` frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceDemo {
    pub trace1: Trace,
    pub trace2: Trace,
    /// `||x(T; mu1) - x(T; mu2)||_2` at the last tick.
    pub terminal_gap: f64,
    /// Gap between the exact minimizers.
    pub analytic_gap: f64,
}

/// Runs the simulator twice with frozen multipliers `mu1` and `mu2` and the
/// given schedule, starting from the origin, with step
/// `1 / max_i sum_j |Q_ij|`.
pub fn demo_divergence(
    inst: &CounterexampleInstance,
    schedule: &ScheduleSpec,
    ticks: u64,
) -> Result<DivergenceDemo> {
    let p = inst.to_problem(1.0)?;
    let qm = inst.q_matrix();
    let row_max = (0..inst.n)
        .map(|i| qm.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let gamma = 1.0 / row_max;
    let radius = inst
        .mu1
        .iter()
        .chain(&inst.mu2)
        .fold(0.0f64, |a, &b| a.max(b));
    let dual_box = DualBox::user_supplied(radius, "covers both multiplier vectors")?;
    let go = |mu: &[f64]| -> Result<Trace> {
        let x_ref = argmin_lagrangian(inst, mu)?;
        run(
            &p,
            &dual_box,
            Schedule::new(schedule.clone(), inst.n, inst.m)?,
            gamma,
            1.0,
            ticks,
            RunOptions {
                x0: Some(vec![0.0; inst.n]),
                mu0: Some(mu.to_vec()),
                frozen_mu: true,
                reference: Some(crate::sim::Reference {
                    x: x_ref,
                    mu: mu.to_vec(),
                }),
                check_steps: false,
                ..Default::default()
            },
        )
    };
    let trace1 = go(&inst.mu1)?;
    let trace2 = go(&inst.mu2)?;
    let terminal_gap = l2_dist(trace1.own_x.last().unwrap(), trace2.own_x.last().unwrap());
    let analytic_gap = report(inst)?.x_gap;
    Ok(DivergenceDemo {
        trace1,
        trace2,
        terminal_gap,
        analytic_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn hand_instance() -> CounterexampleInstance {
        CounterexampleInstance::from_parts(
            vec![0.005, 0.0, 0.0, 0.005],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![0.09, 0.0],
            0.1,
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn hand_instance_gap() {
        let inst = hand_instance();
        let x2 = argmin_lagrangian(&inst, &inst.mu2).unwrap();
        assert_relative_eq!(x2[0], -18.0, epsilon = 1e-12);
        assert_eq!(x2[1], 0.0);
        assert_eq!(
            argmin_lagrangian(&inst, &[0.0, 0.0]).unwrap(),
            vec![0.0, 0.0]
        );
        let rep = verify(&inst).unwrap();
        assert_relative_eq!(rep.x_gap, 18.0, epsilon = 1e-12);
        assert_relative_eq!(rep.lower_bound, 18.0, epsilon = 1e-12);
    }

    #[test]
    fn preconditions() {
        assert!(CounterexampleInstance::build(0.1, 0.1, 2, 0).is_err());
        assert!(CounterexampleInstance::build(1.0, 0.5, 2, 0).is_err());
        assert!(CounterexampleInstance::build(0.1, 10.0, 0, 0).is_err());
        // lambda_max not below epsilon / L
        assert!(CounterexampleInstance::from_parts(
            vec![0.01],
            vec![1.0],
            vec![0.0],
            vec![0.0],
            vec![0.05],
            0.1,
            10.0
        )
        .is_err());
    }

    #[test]
    fn scalar_case() {
        let inst = CounterexampleInstance::from_parts(
            vec![0.9 * 0.1 / 10.0],
            vec![1.0],
            vec![0.0],
            vec![0.0],
            vec![0.0],
            0.1,
            10.0,
        );
        // lambda_max == 0.9 epsilon / L < epsilon / L is fine
        let inst = inst.unwrap();
        let rep = report(&inst).unwrap();
        assert_eq!(rep.x_gap, 0.0);
        assert_eq!(rep.lower_bound, 0.0);
        assert!(matches!(verify(&inst), Err(Error::Verification(_))));
    }

    #[test]
    fn random_instances_verify() {
        for seed in 0..20 {
            let inst = CounterexampleInstance::build(0.05, 100.0, 5, seed).unwrap();
            let rep = verify(&inst).unwrap();
            assert!(rep.x_gap >= 180.0 * (1.0 - 1e-12));
            let s = inst.singular_values().unwrap();
            let e = inst.inverse_eigenvalues();
            for (a, b) in s.iter().zip(&e) {
                assert!((a - b).abs() <= 1e-9 * b);
            }
        }
    }

    #[test]
    fn offset_r_does_not_change_the_gap() {
        let base = hand_instance();
        let shifted = CounterexampleInstance::from_parts(
            base.q.clone(),
            base.a.clone(),
            vec![0.01, -0.02],
            base.mu1.clone(),
            base.mu2.clone(),
            0.1,
            10.0,
        )
        .unwrap();
        assert_relative_eq!(
            report(&shifted).unwrap().x_gap,
            report(&base).unwrap().x_gap,
            epsilon = 1e-9
        );
    }

    #[test]
    fn box_too_small() {
        let mut inst = hand_instance();
        inst.box_halfwidth = 5.0;
        assert!(matches!(
            argmin_lagrangian(&inst, &inst.mu2.clone()),
            Err(Error::BoxTooSmall { index: 0, .. })
        ));
    }

    #[test]
    fn demo_reaches_the_gap() {
        let inst = hand_instance();
        let demo = demo_divergence(&inst, &ScheduleSpec::AllTicks, 2000).unwrap();
        assert!(demo.terminal_gap > 10.0);
        assert_relative_eq!(demo.terminal_gap, 18.0, epsilon = 1e-6);
    }
}
