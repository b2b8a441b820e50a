//! Computation and communication schedules.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of ticks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeSet {
    All,
    Never,
    /// `{offset, offset + period, offset + 2 period, ...}`
    Periodic {
        period: u64,
        offset: u64,
    },
    /// Explicit ticks, any order.
    List {
        ticks: Vec<u64>,
    },
}

impl TimeSet {
    pub fn contains(&self, k: u64) -> bool {
        match self {
            TimeSet::All => true,
            TimeSet::Never => false,
            TimeSet::Periodic { period, offset } => {
                k >= *offset && (k - offset).is_multiple_of(*period)
            }
            TimeSet::List { ticks } => ticks.contains(&k),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TimeSet::Periodic { period: 0, .. } => Err(Error::Schedule(
                "periodic time set needs period >= 1".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Every window `[s, s + w)` with `s + w <= horizon` meets the set.
    pub fn meets_every_window(&self, w: u64, horizon: u64) -> bool {
        if w == 0 {
            return false;
        }
        let mut last_hit: Option<u64> = None;
        for k in 0..horizon {
            if self.contains(k) {
                last_hit = Some(k);
            }
            // window ending at k (inclusive) starts at k + 1 - w
            if k + 1 >= w {
                let start = k + 1 - w;
                if last_hit.is_none_or(|h| h < start) {
                    return false;
                }
            }
        }
        true
    }
}

/// Explicit per-agent and per-edge time sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicSchedule {
    /// `compute[i]`: ticks at which primal agent `i` updates its block.
    pub compute: Vec<TimeSet>,
    /// `primal_send[j][i]`: ticks at which agent `j` sends its block to `i`.
    pub primal_send: Vec<Vec<TimeSet>>,
    /// `dual_send[i][c]`: ticks at which agent `i` sends its block to dual
    /// agent `c`.
    pub dual_send: Vec<Vec<TimeSet>>,
}

impl DeterministicSchedule {
    pub fn all_ticks(n: usize, m: usize) -> Self {
        DeterministicSchedule {
            compute: vec![TimeSet::All; n],
            primal_send: vec![vec![TimeSet::All; n]; n],
            dual_send: vec![vec![TimeSet::All; m]; n],
        }
    }

    /// Checks that each set relevant to the run meets every window of length
    /// `w` up to `horizon`. Primal edges are only checked where `needs`
    /// says the receiver uses the sender's block.
    pub fn validate_window(&self, needs: &[Vec<usize>], w: u64, horizon: u64) -> Result<()> {
        for (i, s) in self.compute.iter().enumerate() {
            if !s.meets_every_window(w, horizon) {
                return Err(Error::Schedule(format!(
                    "agent {i} does not compute in some window of length {w}"
                )));
            }
        }
        for (i, row) in needs.iter().enumerate() {
            for &j in row {
                if !self.primal_send[j][i].meets_every_window(w, horizon) {
                    return Err(Error::Schedule(format!(
                        "edge {j} -> {i} is silent in some window of length {w}"
                    )));
                }
            }
        }
        for (i, row) in self.dual_send.iter().enumerate() {
            for (c, s) in row.iter().enumerate() {
                if !s.meets_every_window(w, horizon) {
                    return Err(Error::Schedule(format!(
                        "edge {i} -> dual {c} is silent in some window of length {w}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Independent coin flips per (edge, tick).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliSpec {
    pub seed: u64,
    /// Probability that `j` sends to `i` at a given tick.
    pub comm_prob: f64,
    #[serde(default = "one")]
    pub compute_prob: f64,
    /// Probability for primal -> dual sends; defaults to `comm_prob`.
    #[serde(default)]
    pub dual_comm_prob: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl BernoulliSpec {
    pub fn new(seed: u64, comm_prob: f64) -> Self {
        BernoulliSpec {
            seed,
            comm_prob,
            compute_prob: 1.0,
            dual_comm_prob: None,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("comm_prob", self.comm_prob),
            ("compute_prob", self.compute_prob),
            (
                "dual_comm_prob",
                self.dual_comm_prob.unwrap_or(self.comm_prob),
            ),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Schedule(format!(
                    "{name} must be in (0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Serializable schedule description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScheduleSpec {
    AllTicks,
    Deterministic(DeterministicSchedule),
    Bernoulli(BernoulliSpec),
}

impl ScheduleSpec {
    pub fn comm_prob(&self) -> Option<f64> {
        match self {
            ScheduleSpec::AllTicks => Some(1.0),
            ScheduleSpec::Deterministic(_) => None,
            ScheduleSpec::Bernoulli(b) => Some(b.comm_prob),
        }
    }

    pub fn build(&self, n: usize, m: usize) -> Result<Schedule> {
        Schedule::new(self.clone(), n, m)
    }
}

/// Coins for one (kind, edge) pair. A ChaCha stream per edge, positioned by
/// tick, so a draw depends only on (seed, edge, tick).
#[derive(Debug, Clone)]
struct Coin {
    rng: ChaCha8Rng,
    threshold: u64,
    always: bool,
}

impl Coin {
    fn new(seed: u64, stream: u64, prob: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Coin {
            rng,
            // P(u < threshold) = prob for u uniform on [0, 2^64)
            threshold: (prob * 2f64.powi(64)).min(u64::MAX as f64) as u64,
            always: prob >= 1.0,
        }
    }

    fn flip(&mut self, k: u64) -> bool {
        if self.always {
            return true;
        }
        self.rng.set_word_pos(2 * k as u128);
        self.rng.next_u64() < self.threshold
    }
}

/// Runtime schedule.
#[derive(Debug, Clone)]
pub struct Schedule {
    spec: ScheduleSpec,
    n: usize,
    m: usize,
    coins: Option<BernoulliCoins>,
}

#[derive(Debug, Clone)]
struct BernoulliCoins {
    compute: Vec<Coin>,
    primal: Vec<Coin>,
    dual: Vec<Coin>,
}

impl Schedule {
    pub fn new(spec: ScheduleSpec, n: usize, m: usize) -> Result<Self> {
        let coins = match &spec {
            ScheduleSpec::AllTicks => None,
            ScheduleSpec::Deterministic(d) => {
                let bad = d.compute.len() != n
                    || d.primal_send.len() != n
                    || d.primal_send.iter().any(|r| r.len() != n)
                    || d.dual_send.len() != n
                    || d.dual_send.iter().any(|r| r.len() != m);
                if bad {
                    return Err(Error::Schedule(format!(
                        "deterministic schedule must have compute[{n}], primal_send[{n}][{n}], dual_send[{n}][{m}]"
                    )));
                }
                d.compute
                    .iter()
                    .chain(d.primal_send.iter().flatten())
                    .chain(d.dual_send.iter().flatten())
                    .try_for_each(TimeSet::validate)?;
                None
            }
            ScheduleSpec::Bernoulli(b) => {
                b.validate()?;
                let dual_prob = b.dual_comm_prob.unwrap_or(b.comm_prob);
                let (n64, m64) = (n as u64, m as u64);
                Some(BernoulliCoins {
                    compute: (0..n64)
                        .map(|i| Coin::new(b.seed, i, b.compute_prob))
                        .collect(),
                    primal: (0..n64 * n64)
                        .map(|e| Coin::new(b.seed, n64 + e, b.comm_prob))
                        .collect(),
                    dual: (0..n64 * m64)
                        .map(|e| Coin::new(b.seed, n64 + n64 * n64 + e, dual_prob))
                        .collect(),
                })
            }
        };
        Ok(Schedule { spec, n, m, coins })
    }

    pub fn all_ticks(n: usize, m: usize) -> Self {
        Schedule {
            spec: ScheduleSpec::AllTicks,
            n,
            m,
            coins: None,
        }
    }

    pub fn spec(&self) -> &ScheduleSpec {
        &self.spec
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    /// `k in K^i`.
    pub fn computes(&mut self, i: usize, k: u64) -> bool {
        match (&self.spec, &mut self.coins) {
            (ScheduleSpec::Deterministic(d), _) => d.compute[i].contains(k),
            (_, Some(c)) => c.compute[i].flip(k),
            _ => true,
        }
    }

    /// Agent `from` sends its block to agent `to` at tick `k`.
    pub fn sends_primal(&mut self, from: usize, to: usize, k: u64) -> bool {
        let n = self.n;
        match (&self.spec, &mut self.coins) {
            (ScheduleSpec::Deterministic(d), _) => d.primal_send[from][to].contains(k),
            (_, Some(c)) => c.primal[from * n + to].flip(k),
            _ => true,
        }
    }

    /// Agent `from` sends its block to dual agent `c` at tick `k`.
    pub fn sends_dual(&mut self, from: usize, c: usize, k: u64) -> bool {
        let m = self.m;
        match (&self.spec, &mut self.coins) {
            (ScheduleSpec::Deterministic(d), _) => d.dual_send[from][c].contains(k),
            (_, Some(coins)) => coins.dual[from * m + c].flip(k),
            _ => true,
        }
    }
}
