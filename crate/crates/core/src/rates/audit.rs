//! Audits of simulator traces against the rate bounds.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{pow_ops, RateConstants};
use crate::error::{Error, Result};
use crate::problem::{l2_dist, max_dist, ConvexProblem};
use crate::sim::{EnvelopeColumns, Trace};
use crate::uzawa::inner_primal_fixed_point;

/// Absolute slack used by every audit.
/// Relative size below which cycle ratios are not measured.
pub const RATIO_FLOOR: f64 = 1e-8;

pub const AUDIT_SLACK: f64 = 1e-9;

const ORACLE_TOL: f64 = 1e-13;
const ORACLE_MAX_ITERS: u64 = 50_000_000;

/// `x*(t)` for every epoch of a trace, solved once per distinct `mu`.
pub fn epoch_fixed_points(p: &ConvexProblem, trace: &Trace, gamma: f64) -> Result<Vec<Vec<f64>>> {
    let mut cache: HashMap<Vec<u64>, Vec<f64>> = HashMap::new();
    trace
        .epochs
        .iter()
        .map(|e| {
            let key: Vec<u64> = e.mu.iter().map(|v| v.to_bits()).collect();
            if let Some(x) = cache.get(&key) {
                return Ok(x.clone());
            }
            let fp = inner_primal_fixed_point(p, &e.mu, gamma, ORACLE_TOL, ORACLE_MAX_ITERS)?;
            cache.insert(key, fp.x.clone());
            Ok(fp.x)
        })
        .collect()
}

/// `L_x` per epoch: `max_j ||x^j(epoch start) - x*(t)||_max`.
pub fn epoch_initial_errors(trace: &Trace, x_stars: &[Vec<f64>]) -> Vec<f64> {
    trace
        .epochs
        .iter()
        .zip(x_stars)
        .map(|(e, xs)| {
            e.start_locals
                .iter()
                .map(|x| max_dist(x, xs))
                .fold(0.0, f64::max)
        })
        .collect()
}

fn epoch_of_rows(trace: &Trace) -> Vec<usize> {
    let mut out = Vec::with_capacity(trace.rows.len());
    let mut e = 0;
    for r in &trace.rows {
        while e + 1 < trace.epochs.len() && trace.epochs[e + 1].start_tick <= r.k {
            e += 1;
        }
        out.push(e);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalEnvelopeReport {
    pub q_p: f64,
    /// `q_p^ops(k,t) * L_x(t)` per tick.
    pub bound: Vec<f64>,
    /// `max_i` of agent `i`'s error over the blocks it reads, per tick.
    pub observed: Vec<f64>,
    /// Ticks where `observed > bound + slack`.
    pub violations: Vec<u64>,
    pub max_excess: f64,
    /// Largest `E_{s+1} / E_s`, where `E_s` is the observed error at the
    /// tick the cycle count first reaches `s`. Only pairs with
    /// `E_s > RATIO_FLOOR * L_x(t)` count; below that the ratio is round-off.
    pub max_cycle_ratio: f64,
    /// Cycle boundaries where `E_{s+1} > q_p E_s + slack`.
    pub ratio_violations: usize,
}

impl PrimalEnvelopeReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty() && self.ratio_violations == 0
    }

    pub fn columns(&self) -> EnvelopeColumns {
        EnvelopeColumns {
            bound: self.bound.clone(),
            observed: self.observed.clone(),
        }
    }
}

/// Checks `||x^i(k) - x*(t)||_max <= q_p^ops(k,t) max_j ||x^j(k_t) - x*(t)||_max`
/// at every recorded tick. Needs a trace recorded with local copies.
pub fn primal_envelope(
    p: &ConvexProblem,
    trace: &Trace,
    gamma: f64,
    q_p: f64,
) -> Result<PrimalEnvelopeReport> {
    let locals = trace.locals.as_ref().ok_or_else(|| {
        Error::InvalidInput("primal envelope audit needs a trace with local copies".into())
    })?;
    let x_stars = epoch_fixed_points(p, trace, gamma)?;
    let l0 = epoch_initial_errors(trace, &x_stars);
    let epochs = epoch_of_rows(trace);
    let mut bound = Vec::with_capacity(trace.rows.len());
    let mut observed = Vec::with_capacity(trace.rows.len());
    let mut violations = Vec::new();
    let mut max_excess = f64::NEG_INFINITY;
    let mut max_cycle_ratio = 0.0f64;
    let mut ratio_violations = 0;
    let mut last_cycle: Option<(usize, u64, f64)> = None;
    for (idx, row) in trace.rows.iter().enumerate() {
        let e = epochs[idx];
        let xs = &x_stars[e];
        let obs = locals[idx]
            .iter()
            .enumerate()
            .map(|(i, x)| {
                std::iter::once(i)
                    .chain(trace.needs[i].iter().copied())
                    .map(|j| (x[j] - xs[j]).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let b = pow_ops(q_p, row.ops) * l0[e];
        if obs > b + AUDIT_SLACK {
            violations.push(row.k);
        }
        max_excess = max_excess.max(obs - b);
        match last_cycle {
            Some((le, s, prev)) if le == e && row.ops == s + 1 => {
                if prev > RATIO_FLOOR * l0[e] {
                    max_cycle_ratio = max_cycle_ratio.max(obs / prev);
                }
                if obs > q_p * prev + AUDIT_SLACK {
                    ratio_violations += 1;
                }
                last_cycle = Some((e, row.ops, obs));
            }
            Some((le, s, _)) if le == e && row.ops == s => {}
            _ => last_cycle = Some((e, row.ops, obs)),
        }
        bound.push(b);
        observed.push(obs);
    }
    Ok(PrimalEnvelopeReport {
        q_p,
        bound,
        observed,
        violations,
        max_excess,
        max_cycle_ratio,
        ratio_violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneStepReport {
    pub checked: usize,
    pub violations: usize,
    /// `max (lhs - rhs)` over all dual updates.
    pub max_excess: f64,
    /// Largest `lhs / rhs` seen.
    pub max_ratio: f64,
}

impl OneStepReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Every dual update against
/// `|mu+ - mu_hat|^2 <= q_d |mu - mu_hat|^2 + penalty(ops(k_c, t))`.
pub fn one_step_audit(
    p: &ConvexProblem,
    trace: &Trace,
    rc: &RateConstants,
    mu_hat: &[f64],
) -> Result<OneStepReport> {
    let x_stars = epoch_fixed_points(p, trace, rc.gamma)?;
    let l0 = epoch_initial_errors(trace, &x_stars);
    let mut report = OneStepReport {
        checked: 0,
        violations: 0,
        max_excess: f64::NEG_INFINITY,
        max_ratio: 0.0,
    };
    for u in &trace.dual_updates {
        let lhs = (u.mu_after - mu_hat[u.c]).powi(2);
        let prev = (u.mu_before - mu_hat[u.c]).powi(2);
        let rhs = rc.q_d * prev + rc.penalty(u.c, l0[u.epoch], u.ops_first);
        report.checked += 1;
        if lhs > rhs + AUDIT_SLACK {
            report.violations += 1;
        }
        report.max_excess = report.max_excess.max(lhs - rhs);
        if rhs > 0.0 {
            report.max_ratio = report.max_ratio.max(lhs / rhs);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoteReport {
    /// `p_max / (1 - q_d)` per dual agent.
    pub asymptote: Vec<f64>,
    /// Largest `(mu_c - mu_hat_c)^2` over the tail of the trace.
    pub tail_max: Vec<f64>,
}

impl AsymptoteReport {
    pub fn holds(&self) -> bool {
        self.tail_max
            .iter()
            .zip(&self.asymptote)
            .all(|(o, a)| *o <= a + AUDIT_SLACK)
    }
}

/// Dual error over the last `tail_fraction` of ticks against the limit of
/// the dual envelope, with `p_max` taken at the largest per-epoch `L_x`.
pub fn dual_asymptote_audit(
    p: &ConvexProblem,
    trace: &Trace,
    rc: &RateConstants,
    tail_fraction: f64,
) -> Result<AsymptoteReport> {
    let x_stars = epoch_fixed_points(p, trace, rc.gamma)?;
    let l_max = epoch_initial_errors(trace, &x_stars)
        .into_iter()
        .fold(0.0, f64::max);
    let asymptote = (0..trace.m)
        .map(|c| super::dual_asymptote(rc.q_d, rc.p_max(c, l_max)))
        .collect::<Result<Vec<_>>>()?;
    let start = ((1.0 - tail_fraction.clamp(0.0, 1.0)) * trace.rows.len() as f64) as usize;
    let tail_max = (0..trace.m)
        .map(|c| {
            trace.rows[start.min(trace.rows.len() - 1)..]
                .iter()
                .map(|r| r.dual_err_sq[c])
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(AsymptoteReport {
        asymptote,
        tail_max,
    })
}

/// Result of fitting `y <= K1 a + K2 b` with `K1, K2 >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub k1: f64,
    pub k2: f64,
    pub holds: bool,
    /// Row with the largest `y - K1 a - K2 b`.
    pub worst_row: usize,
    pub worst_violation: f64,
}

/// Smallest `K1 + K2` (both nonnegative) with `y_r <= K1 a_r + K2 b_r` for
/// every row `(a_r, b_r, y_r)`. The objective is convex in `K2` once `K1` is
/// eliminated, so a ternary search over `K2` suffices.
pub fn fit_envelope(rows: &[(f64, f64, f64)]) -> EnvelopeFit {
    if rows.is_empty() {
        return EnvelopeFit {
            k1: 0.0,
            k2: 0.0,
            holds: true,
            worst_row: 0,
            worst_violation: 0.0,
        };
    }
    // rows with a = 0 force K2 >= y / b
    let mut k2_min = 0.0f64;
    for &(a, b, y) in rows {
        if a <= 0.0 && y > 0.0 {
            k2_min = k2_min.max(if b > 0.0 { y / b } else { f64::INFINITY });
        }
    }
    let k1_for = |k2: f64| {
        rows.iter()
            .filter(|r| r.0 > 0.0)
            .map(|&(a, b, y)| (y - k2 * b) / a)
            .fold(0.0, f64::max)
    };
    let (k1, k2) = if k2_min.is_finite() {
        let hi = rows
            .iter()
            .filter(|r| r.1 > 0.0)
            .map(|&(_, b, y)| y / b)
            .fold(k2_min, f64::max);
        let (mut lo, mut hi) = (k2_min, hi);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if k1_for(m1) + m1 <= k1_for(m2) + m2 {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let k2 = 0.5 * (lo + hi);
        (k1_for(k2), k2)
    } else {
        (k1_for(0.0), 0.0)
    };
    let (worst_row, worst_violation) = rows
        .iter()
        .enumerate()
        .map(|(i, &(a, b, y))| (i, y - k1 * a - k2 * b))
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, v| if v.1 > acc.1 { v } else { acc },
        );
    let scale = rows.iter().map(|r| r.2.abs()).fold(1.0, f64::max);
    EnvelopeFit {
        k1,
        k2,
        holds: k2_min.is_finite() && worst_violation <= 1e-12 * scale,
        worst_row,
        worst_violation,
    }
}

/// Feasibility of `||x^i(k;t) - x_hat||_2 <= K1 q_p^ops(k,t) + K2 ||mu(t) - mu_hat||_2`
/// over every tick and agent of the trace (own blocks when local copies were
/// not recorded).
pub fn fit_overall_envelope(trace: &Trace, q_p: f64) -> Result<EnvelopeFit> {
    let (x_hat, mu_hat) = match (&trace.reference_x, &trace.reference_mu) {
        (Some(x), Some(mu)) => (x, mu),
        _ => {
            return Err(Error::InvalidInput(
                "envelope fit needs a trace with a reference saddle".into(),
            ))
        }
    };
    let epochs = epoch_of_rows(trace);
    let mut rows = Vec::new();
    for (idx, row) in trace.rows.iter().enumerate() {
        let a = pow_ops(q_p, row.ops);
        let b = l2_dist(&trace.epochs[epochs[idx]].mu, mu_hat);
        match &trace.locals {
            Some(locals) => {
                for x in &locals[idx] {
                    rows.push((a, b, l2_dist(x, x_hat)));
                }
            }
            None => rows.push((a, b, l2_dist(&trace.own_x[idx], x_hat))),
        }
    }
    Ok(fit_envelope(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_at_optimum_is_zero() {
        let f = fit_envelope(&[(1.0, 0.0, 0.0), (0.5, 0.0, 0.0)]);
        assert!(f.holds);
        assert_eq!((f.k1, f.k2), (0.0, 0.0));
    }

    #[test]
    fn fit_needs_k2_when_a_vanishes() {
        let f = fit_envelope(&[(1.0, 1.0, 2.0), (0.0, 0.5, 1.0)]);
        assert!(f.holds);
        assert!((f.k2 - 2.0).abs() < 1e-9);
        assert!(f.k1.abs() < 1e-9);
        let f = fit_envelope(&[(0.0, 0.0, 1.0)]);
        assert!(!f.holds);
    }

    #[test]
    fn fit_prefers_cheaper_combination() {
        // y = 1 at (a=1, b=0) and (a=0.01, b=1): K1 = 1 and K2 = 0.99
        let f = fit_envelope(&[(1.0, 0.0, 1.0), (0.01, 1.0, 1.0)]);
        assert!(f.holds);
        assert!((f.k1 - 1.0).abs() < 1e-9);
        assert!((f.k2 - 0.99).abs() < 1e-9);
    }
}
