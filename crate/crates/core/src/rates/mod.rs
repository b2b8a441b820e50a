//! Closed-form rate quantities: primal/dual contraction factors, the dual
//! step interval, the asynchrony penalty and the dual error envelope.
//! Trace audits against these live in [`audit`].

pub mod audit;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{max_norm, ConvexProblem, DualBox};

/// `q_p = 1 - gamma * beta`, which must land in `[0, 1)`.
pub fn qp(gamma: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::StepSize(format!(
            "dominance margin beta must be > 0, got {beta}"
        )));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::StepSize(format!("gamma must be > 0, got {gamma}")));
    }
    let q = 1.0 - gamma * beta;
    if !(0.0..1.0).contains(&q) {
        return Err(Error::StepSize(format!(
            "q_p = 1 - gamma*beta = {q} is outside [0, 1)"
        )));
    }
    Ok(q)
}

/// `q_d = 3 (1 - rho * delta)^2`. Values `>= 1` are returned as is; see
/// [`rho_interval`] for where the factor contracts.
pub fn qd(rho: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "delta must be > 0, got {delta}"
        )));
    }
    if !rho.is_finite() {
        return Err(Error::StepSize(format!("rho must be finite, got {rho}")));
    }
    let s = 1.0 - rho * delta;
    Ok(3.0 * s * s)
}

/// Open interval `((3 - sqrt 3) / (3 delta), (3 + sqrt 3) / (3 delta))` on
/// which `q_d < 1`.
pub fn rho_interval(delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "delta must be > 0, got {delta}"
        )));
    }
    let r3 = 3f64.sqrt();
    Ok(((3.0 - r3) / (3.0 * delta), (3.0 + r3) / (3.0 * delta)))
}

/// `2 rho^2 M^2 D^2 + 2 rho^2 M^2 q_p^(2 ops) L^2 + 2 rho^2 M^2 D q_p^ops L`.
///
/// The first summand does not decay with `ops`; it is the asynchrony penalty.
pub fn penalty_terms(rho: f64, m_gc: f64, d_x: f64, l_x: f64, q_p: f64, ops: u64) -> f64 {
    let k = 2.0 * rho * rho * m_gc * m_gc;
    let decay = pow_ops(q_p, ops);
    k * d_x * d_x + k * decay * decay * l_x * l_x + k * d_x * decay * l_x
}

/// Only the non-decaying part `2 rho^2 M^2 D^2`.
pub fn asynchrony_penalty(rho: f64, m_gc: f64, d_x: f64) -> f64 {
    2.0 * rho * rho * m_gc * m_gc * d_x * d_x
}

/// Worst case of [`penalty_terms`] over all ops, reached at `ops = 0`:
/// `2 rho^2 M^2 (D^2 + L^2 + D L)`.
pub fn p_max(rho: f64, m_gc: f64, d_x: f64, l_x: f64) -> f64 {
    2.0 * rho * rho * m_gc * m_gc * (d_x * d_x + l_x * l_x + d_x * l_x)
}

/// `q^ops` with `ops` possibly beyond `i32`.
pub(crate) fn pow_ops(q: f64, ops: u64) -> f64 {
    if ops <= i32::MAX as u64 {
        q.powi(ops as i32)
    } else {
        q.powf(ops as f64)
    }
}

/// `q_d^(t_c + 1) e_0 + (1 - q_d^(t_c + 2)) / (1 - q_d) * p`.
pub fn dual_envelope(mu0_err_sq: f64, q_d: f64, p_max: f64, t_c: u64) -> Result<f64> {
    if !(0.0..1.0).contains(&q_d) {
        return Err(Error::EnvelopeUndefined(format!(
            "q_d = {q_d} is outside [0, 1)"
        )));
    }
    let geo = (1.0 - pow_ops(q_d, t_c + 2)) / (1.0 - q_d);
    Ok(pow_ops(q_d, t_c + 1) * mu0_err_sq + geo * p_max)
}

/// `lim_{t_c -> inf}` of [`dual_envelope`]: `p / (1 - q_d)`.
pub fn dual_asymptote(q_d: f64, p_max: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q_d) {
        return Err(Error::EnvelopeUndefined(format!(
            "q_d = {q_d} is outside [0, 1)"
        )));
    }
    Ok(p_max / (1.0 - q_d))
}

/// `max_{x in X} ||grad g_c(x)||_max` for each constraint. Exact for affine
/// constraints, sampled otherwise.
pub fn constraint_gradient_bounds(p: &ConvexProblem) -> Vec<f64> {
    if let Some(aff) = p.constraints().as_affine() {
        return (0..p.m()).map(|c| aff.row_max_abs(c)).collect();
    }
    let b = p.bounds();
    let mut pts = vec![b.midpoint(), b.lower().to_vec(), b.upper().to_vec()];
    if p.n() <= 10 {
        pts.extend((0..(1u64 << p.n())).map(|m| b.corner(m)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..256 {
        pts.push(
            (0..p.n())
                .map(|i| b.lower()[i] + (b.upper()[i] - b.lower()[i]) * rng.random::<f64>())
                .collect(),
        );
    }
    (0..p.m())
        .map(|c| {
            pts.iter()
                .map(|x| max_norm(p.constraints().gradient(c, x).as_slice()))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Problem- and step-dependent constants of the rate bounds. `L_x` is not
/// included since it changes with every dual epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    pub gamma: f64,
    pub rho: f64,
    pub beta: f64,
    pub q_p: f64,
    pub q_d: f64,
    /// Per constraint, `max_X ||grad g_c||_max`.
    pub m_gc: Vec<f64>,
    /// `max_{x,y in X} ||x - y||_max`.
    pub d_x: f64,
}

impl RateConstants {
    pub fn new(p: &ConvexProblem, beta: f64, gamma: f64, rho: f64) -> Result<Self> {
        Ok(RateConstants {
            gamma,
            rho,
            beta,
            q_p: qp(gamma, beta)?,
            q_d: qd(rho, p.delta())?,
            m_gc: constraint_gradient_bounds(p),
            d_x: p.bounds().diameter_max(),
        })
    }

    /// Certifies `beta` on `p` and builds the constants.
    pub fn certify(p: &ConvexProblem, dual_box: &DualBox, gamma: f64, rho: f64) -> Result<Self> {
        let cert = crate::problem::verify_dominance(p, dual_box)?;
        Self::new(p, cert.beta, gamma, rho)
    }

    pub fn penalty(&self, c: usize, l_x: f64, ops: u64) -> f64 {
        penalty_terms(self.rho, self.m_gc[c], self.d_x, l_x, self.q_p, ops)
    }

    pub fn p_max(&self, c: usize, l_x: f64) -> f64 {
        p_max(self.rho, self.m_gc[c], self.d_x, l_x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn qp_examples() {
        assert_relative_eq!(qp(8e-4, 12.0).unwrap(), 0.9904, epsilon = 1e-12);
        assert!(qp(1e-12, 12.0).unwrap() > 1.0 - 1e-10);
        assert!(qp(8e-4, 0.0).is_err());
        assert!(qp(1.0, 12.0).is_err());
    }

    #[test]
    fn qd_examples() {
        assert_eq!(qd(1000.0, 0.001).unwrap(), 0.0);
        assert_relative_eq!(qd(500.0, 0.001).unwrap(), 0.75, epsilon = 1e-12);
        let (lo, hi) = rho_interval(0.001).unwrap();
        assert_relative_eq!(lo, 422.649730810374, epsilon = 1e-9);
        assert_relative_eq!(hi, 1577.350269189626, epsilon = 1e-9);
        assert_relative_eq!(qd(lo, 0.001).unwrap(), 1.0, epsilon = 1e-12);
        assert!(qd(100.0, 0.001).unwrap() > 1.0);
        assert!(rho_interval(0.0).is_err());
    }

    #[test]
    fn penalty_examples() {
        assert_relative_eq!(
            penalty_terms(1.0, 1.0, 1.0, 1.0, 0.5, 1),
            3.5,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            penalty_terms(1.0, 1.0, 1.0, 1.0, 0.5, 10_000),
            asynchrony_penalty(1.0, 1.0, 1.0),
            epsilon = 1e-12
        );
        assert_eq!(
            penalty_terms(2.0, 3.0, 1.5, 0.7, 0.9, 0),
            p_max(2.0, 3.0, 1.5, 0.7)
        );
    }

    #[test]
    fn envelope_examples() {
        assert_relative_eq!(
            dual_envelope(1.0, 0.75, 0.1, 0).unwrap(),
            0.925,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            dual_envelope(2.0, 0.5, 0.0, 3).unwrap(),
            2.0 * 0.5f64.powi(4),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            dual_envelope(1.0, 0.75, 0.1, 5000).unwrap(),
            dual_asymptote(0.75, 0.1).unwrap(),
            epsilon = 1e-12
        );
        assert!(matches!(
            dual_envelope(1.0, 1.0, 0.1, 0),
            Err(Error::EnvelopeUndefined(_))
        ));
    }

    #[test]
    fn quartic10_constants() {
        let p = crate::presets::quartic10_problem().unwrap();
        let m = constraint_gradient_bounds(&p);
        assert_eq!(m, vec![10.0, 5.0, 5.0, 8.0, 3.0, 4.0]);
        assert_eq!(p.bounds().diameter_max(), 9.0);
    }
}
