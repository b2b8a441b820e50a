//! Cycle counter `ops(k, t)`.
//!
//! One cycle is complete once every primal agent has computed at least one
//! update and each of those updates (or a later one) has reached every agent
//! that uses the block. Any dual broadcast restarts the count at zero.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpsCounter {
    value: u64,
    computed: Vec<bool>,
    /// `delivered[j][r]`: the `r`-th dependent of `j` has a post-update value.
    delivered: Vec<Vec<bool>>,
    /// `dependents[j]`: agents that use block `j`.
    dependents: Vec<Vec<usize>>,
    current_stamp: Vec<u64>,
}

impl OpsCounter {
    pub fn new(dependents: Vec<Vec<usize>>, m: usize) -> Self {
        let delivered = dependents.iter().map(|d| vec![false; d.len()]).collect();
        OpsCounter {
            value: 0,
            computed: vec![false; dependents.len()],
            delivered,
            dependents,
            current_stamp: vec![0; m],
        }
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn current_stamp(&self) -> &[u64] {
        &self.current_stamp
    }

    pub fn on_compute(&mut self, i: usize) {
        self.computed[i] = true;
    }

    /// An accepted delivery of `from`'s block to `to`. Only counts after
    /// `from` has computed in the current cycle.
    pub fn on_delivery(&mut self, from: usize, to: usize) {
        if !self.computed[from] {
            return;
        }
        if let Some(r) = self.dependents[from].iter().position(|&d| d == to) {
            self.delivered[from][r] = true;
        }
    }

    fn clear(&mut self) {
        self.computed.iter_mut().for_each(|v| *v = false);
        self.delivered.iter_mut().flatten().for_each(|v| *v = false);
    }

    /// Called when a new dual vector takes effect.
    pub fn on_stamp_change(&mut self, stamp: &[u64]) {
        self.value = 0;
        self.current_stamp = stamp.to_vec();
        self.clear();
    }

    /// Closes the cycle if it is complete. Returns whether it advanced.
    pub fn check_cycle(&mut self) -> bool {
        let done =
            self.computed.iter().all(|&c| c) && self.delivered.iter().all(|d| d.iter().all(|&v| v));
        if done {
            self.value += 1;
            self.clear();
        }
        done
    }
}
