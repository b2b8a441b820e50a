//! Agent states and the message handling rules.

use serde::{Deserialize, Serialize};

use crate::problem::{ConvexProblem, DualBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MessageKind {
    Primal {
        from: usize,
        to: usize,
    },
    PrimalToDual {
        from: usize,
        to: usize,
    },
    /// Carries the sender's iteration count after the update.
    DualBroadcast {
        from: usize,
        t_c: u64,
    },
}

/// A message. Transit is instantaneous: it is received on `send_tick`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageEvent {
    pub kind: MessageKind,
    pub payload: f64,
    /// Sender's dual-iteration vector `t` (for broadcasts, the vector after
    /// the update).
    pub stamp: Vec<u64>,
    pub send_tick: u64,
    /// Sender's `ops` counter when the message left.
    pub ops_at_send: u64,
}

/// Outcome of [`PrimalAgentState::absorb_primal_message`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Absorb {
    Accepted,
    /// Computed under an older dual vector; dropped.
    Stale,
    /// Computed under a dual vector this agent has not seen yet; kept in
    /// the inbox until the matching broadcast arrives.
    Buffered,
}

fn older(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalAgentState {
    pub i: usize,
    /// `x^i_j` for every block `j`.
    pub x_local: Vec<f64>,
    /// `mu^i_c` for every constraint `c`.
    pub mu_local: Vec<f64>,
    pub t_stamp: Vec<u64>,
    /// `sum(t_stamp)` under which each entry of `x_local` was produced or
    /// relabelled; every entry must match before a gradient is taken.
    pub entry_epoch: Vec<u64>,
    pub inbox: Vec<MessageEvent>,
}

impl PrimalAgentState {
    pub fn new(i: usize, x0: Vec<f64>, mu0: Vec<f64>) -> Self {
        let m = mu0.len();
        let n = x0.len();
        PrimalAgentState {
            i,
            x_local: x0,
            mu_local: mu0,
            t_stamp: vec![0; m],
            entry_epoch: vec![0; n],
            inbox: Vec::new(),
        }
    }

    pub fn epoch(&self) -> u64 {
        self.t_stamp.iter().sum()
    }

    /// Overwrites `x^i_j` when the stamp matches exactly, drops messages
    /// from older dual vectors and buffers ones from newer.
    pub fn absorb_primal_message(&mut self, msg: &MessageEvent) -> Absorb {
        let MessageKind::Primal { from, to } = msg.kind else {
            panic!("absorb_primal_message needs a primal-to-primal message");
        };
        debug_assert_eq!(to, self.i);
        if msg.stamp == self.t_stamp {
            self.x_local[from] = msg.payload;
            self.entry_epoch[from] = self.epoch();
            Absorb::Accepted
        } else if older(&msg.stamp, &self.t_stamp) {
            Absorb::Stale
        } else {
            self.inbox.push(msg.clone());
            Absorb::Buffered
        }
    }

    /// Takes in a dual update: `mu^i_c = mu^c_c`, `t_c` from the message.
    /// Local block values are carried into the new epoch.
    pub fn absorb_broadcast(&mut self, msg: &MessageEvent) {
        let MessageKind::DualBroadcast { from, t_c } = msg.kind else {
            panic!("absorb_broadcast needs a dual broadcast");
        };
        self.mu_local[from] = msg.payload;
        self.t_stamp[from] = t_c;
        let e = self.epoch();
        self.entry_epoch.iter_mut().for_each(|v| *v = e);
    }

    /// Replays buffered messages whose stamp now matches. Returns the
    /// senders that were accepted.
    pub fn drain_inbox(&mut self) -> Vec<usize> {
        let pending = std::mem::take(&mut self.inbox);
        let mut accepted = Vec::new();
        for msg in pending {
            if let (Absorb::Accepted, MessageKind::Primal { from, .. }) =
                (self.absorb_primal_message(&msg), &msg.kind)
            {
                accepted.push(*from);
            }
        }
        accepted
    }

    /// Step on the own block, using the full local copy.
    pub fn gradient_step(&mut self, p: &ConvexProblem, gamma: f64) -> f64 {
        let e = self.epoch();
        assert!(
            self.entry_epoch.iter().all(|&v| v == e),
            "agent {} would mix block values from different dual epochs",
            self.i
        );
        let grad = p.grad_x_unchecked(&self.x_local, &self.mu_local);
        let v = p.primal_block_step(self.i, &grad, self.x_local[self.i], gamma);
        self.x_local[self.i] = v;
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualAgentState {
    pub c: usize,
    /// `mu^c_c`.
    pub mu_own: f64,
    pub t_c: u64,
    /// `x^c_i`: latest block value received from each primal agent.
    pub x_snapshot: Vec<f64>,
    /// `v^c_i`: snapshots accepted from agent `i` under the current dual
    /// vector since this agent's last update.
    pub fresh: Vec<u32>,
    /// Newest dual vector seen in any snapshot.
    pub stamp_seen: Vec<u64>,
    /// `ops` carried by the first snapshot accepted under `stamp_seen`.
    pub first_ops: Option<u64>,
}

/// Outcome of a snapshot delivery to a dual agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotOutcome {
    Accepted,
    Stale,
}

impl DualAgentState {
    pub fn new(c: usize, mu0: f64, x0: Vec<f64>, m: usize) -> Self {
        let n = x0.len();
        DualAgentState {
            c,
            mu_own: mu0,
            t_c: 0,
            x_snapshot: x0,
            fresh: vec![0; n],
            stamp_seen: vec![0; m],
            first_ops: None,
        }
    }

    /// Keeps the latest value per primal agent for the newest dual vector.
    /// A snapshot from a newer vector invalidates everything collected so far.
    pub fn absorb_snapshot(&mut self, msg: &MessageEvent) -> SnapshotOutcome {
        let MessageKind::PrimalToDual { from, to } = msg.kind else {
            panic!("absorb_snapshot needs a primal-to-dual message");
        };
        debug_assert_eq!(to, self.c);
        if msg.stamp != self.stamp_seen {
            if older(&msg.stamp, &self.stamp_seen) {
                return SnapshotOutcome::Stale;
            }
            self.stamp_seen = msg.stamp.clone();
            self.fresh.iter_mut().for_each(|v| *v = 0);
            self.first_ops = None;
        }
        self.x_snapshot[from] = msg.payload;
        self.fresh[from] += 1;
        self.first_ops.get_or_insert(msg.ops_at_send);
        SnapshotOutcome::Accepted
    }

    pub fn is_ready(&self, current: &[u64]) -> bool {
        self.stamp_seen == current && self.fresh.iter().all(|&v| v > 0)
    }

    /// Fires `mu^c_c <- P_[0,R][mu^c_c + rho (g_c(x^c) - delta mu^c_c)]` when
    /// every primal agent has reported under `current`. Returns the new value
    /// (the caller increments `t_c` once the broadcast is queued).
    pub fn dual_gate_and_update(
        &mut self,
        p: &ConvexProblem,
        dual_box: &DualBox,
        rho: f64,
        current: &[u64],
    ) -> Option<f64> {
        if !self.is_ready(current) {
            return None;
        }
        let g_c = p.constraints().value_component(self.c, &self.x_snapshot);
        self.mu_own = p.dual_component_step(dual_box, g_c, self.mu_own, rho);
        self.fresh.iter_mut().for_each(|v| *v = 0);
        Some(self.mu_own)
    }
}
