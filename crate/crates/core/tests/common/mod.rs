#![allow(dead_code)]

use blockpd::problem::ProblemSpec;
use blockpd::sim::{BernoulliSpec, DeterministicSchedule, ScheduleSpec, TimeSet};
use blockpd::BoxSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strictly diagonally dominant QP with `m` random affine constraints that
/// hold strictly at the box midpoint.
pub fn random_dd_qp(seed: u64, n: usize, m: usize) -> ProblemSpec {
    let mut r = rng(seed);
    let mut q = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = r.random_range(-1.0..1.0);
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| q[i * n + j].abs()).sum();
        q[i * n + i] = off + r.random_range(0.5..3.0);
    }
    let lin: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let a: Vec<f64> = (0..m * n).map(|_| r.random_range(-1.0..1.0)).collect();
    // midpoint is 0, so b > 0 makes it strictly feasible
    let b: Vec<f64> = (0..m).map(|_| r.random_range(0.5..2.0)).collect();
    ProblemSpec::quadratic(
        q,
        lin,
        0.0,
        a,
        b,
        BoxSet::uniform(n, -5.0, 5.0).unwrap(),
        0.01,
    )
}

fn random_timeset(r: &mut ChaCha8Rng, max_period: u64) -> TimeSet {
    match r.random_range(0..4) {
        0 => TimeSet::All,
        1 | 2 => {
            let period = r.random_range(1..=max_period);
            TimeSet::Periodic {
                period,
                offset: r.random_range(0..period),
            }
        }
        _ => {
            let mut ticks: Vec<u64> = (0..2000).filter(|_| r.random_bool(0.3)).collect();
            ticks.sort_unstable();
            TimeSet::List { ticks }
        }
    }
}

/// Either a Bernoulli schedule with random rates or a deterministic one
/// built from random periodic and listed time sets.
pub fn random_schedule(seed: u64, n: usize, m: usize) -> ScheduleSpec {
    let mut r = rng(seed ^ 0x5eed);
    if r.random_bool(0.5) {
        ScheduleSpec::Bernoulli(BernoulliSpec {
            seed,
            comm_prob: r.random_range(0.05..=1.0),
            compute_prob: r.random_range(0.2..=1.0),
            dual_comm_prob: Some(r.random_range(0.05..=1.0)),
        })
    } else {
        ScheduleSpec::Deterministic(DeterministicSchedule {
            compute: (0..n).map(|_| random_timeset(&mut r, 5)).collect(),
            primal_send: (0..n)
                .map(|_| (0..n).map(|_| random_timeset(&mut r, 7)).collect())
                .collect(),
            dual_send: (0..n)
                .map(|_| (0..m).map(|_| random_timeset(&mut r, 7)).collect())
                .collect(),
        })
    }
}

pub fn random_point(r: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(l, h)| r.random_range(*l..=*h))
        .collect()
}
