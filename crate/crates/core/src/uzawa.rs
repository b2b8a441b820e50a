//! Synchronous projected primal-dual (Uzawa) iteration and the fixed-point
//! solvers used as reference solutions.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::problem::{max_dist, max_norm, ConvexProblem, DualBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncIterate {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub k: u64,
}

impl SyncIterate {
    pub fn new(x: Vec<f64>, mu: Vec<f64>) -> Self {
        SyncIterate { x, mu, k: 0 }
    }

    /// Box midpoint and `mu = 0`.
    pub fn initial(p: &ConvexProblem) -> Self {
        Self::new(p.bounds().midpoint(), vec![0.0; p.m()])
    }
}

/// Which primal iterate the dual step reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    /// Both steps read `(x(k), mu(k))`.
    #[default]
    Jacobi,
    /// The dual step reads the freshly updated `x(k+1)`. This is the order
    /// the asynchronous simulator reduces to when every event fires on
    /// every tick.
    PrimalFirst,
}

/// One Jacobi step:
/// `x+ = P_X[x - gamma grad_x L]`, `mu+ = P_M[mu + rho grad_mu L]`.
pub fn uzawa_step(
    p: &ConvexProblem,
    dual_box: &DualBox,
    it: &SyncIterate,
    gamma: f64,
    rho: f64,
) -> Result<SyncIterate> {
    uzawa_step_ordered(p, dual_box, it, gamma, rho, UpdateOrder::Jacobi)
}

pub fn uzawa_step_ordered(
    p: &ConvexProblem,
    dual_box: &DualBox,
    it: &SyncIterate,
    gamma: f64,
    rho: f64,
    order: UpdateOrder,
) -> Result<SyncIterate> {
    check_len("x", p.n(), it.x.len())?;
    check_len("mu", p.m(), it.mu.len())?;
    Ok(step_unchecked(p, dual_box, it, gamma, rho, order))
}

fn step_unchecked(
    p: &ConvexProblem,
    dual_box: &DualBox,
    it: &SyncIterate,
    gamma: f64,
    rho: f64,
    order: UpdateOrder,
) -> SyncIterate {
    let grad = p.grad_x_unchecked(&it.x, &it.mu);
    let x: Vec<f64> = (0..p.n())
        .map(|i| p.primal_block_step(i, &grad, it.x[i], gamma))
        .collect();
    let read = match order {
        UpdateOrder::Jacobi => &it.x,
        UpdateOrder::PrimalFirst => &x,
    };
    let mu = (0..p.m())
        .map(|c| {
            let g_c = p.constraints().value_component(c, read);
            p.dual_component_step(dual_box, g_c, it.mu[c], rho)
        })
        .collect();
    SyncIterate { x, mu, k: it.k + 1 }
}

/// Runs `steps` iterations and returns every iterate, the initial one
/// included.
pub fn trajectory(
    p: &ConvexProblem,
    dual_box: &DualBox,
    start: SyncIterate,
    gamma: f64,
    rho: f64,
    order: UpdateOrder,
    steps: usize,
) -> Result<Vec<SyncIterate>> {
    check_len("x", p.n(), start.x.len())?;
    check_len("mu", p.m(), start.mu.len())?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(start);
    for _ in 0..steps {
        let next = step_unchecked(p, dual_box, out.last().unwrap(), gamma, rho, order);
        out.push(next);
    }
    Ok(out)
}

/// Regularized saddle point `(x_hat, mu_hat)` together with solver stats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Saddle {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub iterations: u64,
    /// `||x+ - x||_max + ||mu+ - mu||_max` at the returned point.
    pub residual: f64,
    pub gamma: f64,
    pub rho: f64,
}

/// Iterates Jacobi steps from the box midpoint and `mu = 0` until
/// `||x+ - x||_max + ||mu+ - mu||_max < tol`.
pub fn solve_saddle(
    p: &ConvexProblem,
    dual_box: &DualBox,
    gamma: f64,
    rho: f64,
    tol: f64,
    max_iters: u64,
) -> Result<Saddle> {
    solve_saddle_from(
        p,
        dual_box,
        SyncIterate::initial(p),
        gamma,
        rho,
        tol,
        max_iters,
    )
}

pub fn solve_saddle_from(
    p: &ConvexProblem,
    dual_box: &DualBox,
    start: SyncIterate,
    gamma: f64,
    rho: f64,
    tol: f64,
    max_iters: u64,
) -> Result<Saddle> {
    check_len("x", p.n(), start.x.len())?;
    check_len("mu", p.m(), start.mu.len())?;
    if !(gamma > 0.0 && rho > 0.0) {
        return Err(Error::StepSize("gamma and rho must be positive".into()));
    }
    let mut it = SyncIterate {
        x: p.bounds().project(&start.x),
        mu: dual_box.project(&start.mu),
        k: 0,
    };
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let next = step_unchecked(p, dual_box, &it, gamma, rho, UpdateOrder::Jacobi);
        residual = max_dist(&next.x, &it.x) + max_dist(&next.mu, &it.mu);
        if !residual.is_finite() {
            break;
        }
        it = next;
        if residual < tol {
            return Ok(Saddle {
                x: it.x,
                mu: it.mu,
                iterations: it.k,
                residual,
                gamma,
                rho,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: it.k as usize,
        residual,
    })
}

/// Fixed point `x*(mu)` of `f(x) = P_X[x - gamma grad_x L(x, mu)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub x: Vec<f64>,
    pub iterations: u64,
    /// `||f(x) - x||_max` at the returned point.
    pub residual: f64,
    /// Largest ratio of consecutive residuals observed before round-off
    /// took over; a contraction keeps this below `1 - gamma beta`.
    pub max_ratio: f64,
}

/// Iterates `f` from the box midpoint with `mu` held fixed.
pub fn inner_primal_fixed_point(
    p: &ConvexProblem,
    mu_fixed: &[f64],
    gamma: f64,
    tol: f64,
    max_iters: u64,
) -> Result<FixedPoint> {
    inner_primal_fixed_point_from(p, &p.bounds().midpoint(), mu_fixed, gamma, tol, max_iters)
}

pub fn inner_primal_fixed_point_from(
    p: &ConvexProblem,
    x0: &[f64],
    mu_fixed: &[f64],
    gamma: f64,
    tol: f64,
    max_iters: u64,
) -> Result<FixedPoint> {
    check_len("x", p.n(), x0.len())?;
    check_len("mu", p.m(), mu_fixed.len())?;
    if mu_fixed.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("mu must be componentwise >= 0".into()));
    }
    let mut x = p.bounds().project(x0);
    let mut prev_res = f64::NAN;
    let mut max_ratio = 0.0f64;
    for k in 0..max_iters {
        let grad = p.grad_x_unchecked(&x, mu_fixed);
        let next: Vec<f64> = (0..p.n())
            .map(|i| p.primal_block_step(i, &grad, x[i], gamma))
            .collect();
        let res = max_dist(&next, &x);
        if !res.is_finite() {
            break;
        }
        // ratios are only meaningful well above the round-off floor
        let floor = 1e-6 * (1.0 + max_norm(&x));
        if prev_res > floor && res > floor {
            max_ratio = max_ratio.max(res / prev_res);
        }
        prev_res = res;
        x = next;
        if res < tol {
            return Ok(FixedPoint {
                x,
                iterations: k + 1,
                residual: res,
                max_ratio,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iters as usize,
        residual: prev_res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{slater_toy_spec, toy_1d_spec};
    use approx::assert_relative_eq;

    fn radius(r: f64) -> DualBox {
        DualBox::user_supplied(r, "test").unwrap()
    }

    #[test]
    fn one_step_examples() {
        let p = toy_1d_spec(0.1).build().unwrap();
        let d = radius(4.5);
        let it = uzawa_step(&p, &d, &SyncIterate::new(vec![1.0], vec![0.0]), 0.1, 0.1).unwrap();
        assert_relative_eq!(it.x[0], 0.8, epsilon = 1e-15);
        assert_eq!(it.mu[0], 0.0);
        assert_eq!(it.k, 1);
        let it = uzawa_step(&p, &d, &SyncIterate::new(vec![-2.0], vec![0.0]), 0.1, 0.1).unwrap();
        assert_relative_eq!(it.x[0], -1.6, epsilon = 1e-15);
        // g(-2) = -3 < 0 pushes mu below zero; clamped
        assert_eq!(it.mu[0], 0.0);
    }

    #[test]
    fn saddle_is_fixed() {
        let p = toy_1d_spec(0.1).build().unwrap();
        let d = radius(4.5);
        let s = SyncIterate::new(vec![0.0], vec![0.0]);
        let next = uzawa_step(&p, &d, &s, 0.1, 0.1).unwrap();
        assert_eq!(next.x, s.x);
        assert_eq!(next.mu, s.mu);
    }

    #[test]
    fn solve_toy() {
        let p = toy_1d_spec(0.1).build().unwrap();
        let s = solve_saddle(&p, &radius(4.5), 0.1, 0.1, 1e-10, 100_000).unwrap();
        assert!(s.x[0].abs() < 1e-9);
        assert_eq!(s.mu[0], 0.0);
    }

    #[test]
    fn active_constraint_saddle() {
        // h = (x-1)^2, g = x: KKT of the regularized problem gives
        // mu = x / delta and 2(x - 1) + mu = 0  =>  x = 2 delta / (2 delta + 1)
        let delta = 0.5;
        let p = slater_toy_spec(delta).build().unwrap();
        let s = solve_saddle(&p, &radius(4.5), 0.2, 0.5, 1e-12, 1_000_000).unwrap();
        let x = 2.0 * delta / (2.0 * delta + 1.0);
        assert_relative_eq!(s.x[0], x, epsilon = 1e-9);
        assert_relative_eq!(s.mu[0], x / delta, epsilon = 1e-9);
    }

    #[test]
    fn larger_delta_shrinks_mu() {
        let mu_norm = |delta: f64| {
            let p = slater_toy_spec(delta).build().unwrap();
            let s = solve_saddle(&p, &radius(4.5), 0.2, 0.5, 1e-12, 1_000_000).unwrap();
            s.mu[0]
        };
        assert!(mu_norm(1.0) < mu_norm(0.5));
    }

    #[test]
    fn fixed_point_examples() {
        let p = toy_1d_spec(0.1).build().unwrap();
        let fp = inner_primal_fixed_point(&p, &[0.0], 0.1, 1e-14, 100_000).unwrap();
        assert!(fp.x[0].abs() < 1e-12);
        let fp = inner_primal_fixed_point(&p, &[1.0], 0.1, 1e-14, 100_000).unwrap();
        assert_relative_eq!(fp.x[0], -0.5, epsilon = 1e-12);
        // H = 2, beta = 2, q_p = 1 - 0.2
        assert!(fp.max_ratio <= 0.8 + 1e-9);
    }

    #[test]
    fn jacobi_and_primal_first_differ() {
        let p = toy_1d_spec(0.1).build().unwrap();
        let d = radius(4.5);
        let s = SyncIterate::new(vec![2.0], vec![0.0]);
        let j = uzawa_step_ordered(&p, &d, &s, 0.1, 1.0, UpdateOrder::Jacobi).unwrap();
        let g = uzawa_step_ordered(&p, &d, &s, 0.1, 1.0, UpdateOrder::PrimalFirst).unwrap();
        assert_eq!(j.x, g.x);
        assert_relative_eq!(j.mu[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(g.mu[0], 0.6, epsilon = 1e-15);
    }
}
