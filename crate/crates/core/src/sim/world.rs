//! The event loop.

use crate::error::{check_len, Error, Result};
use crate::problem::{gamma_bound, l2_dist, l2_norm, ConvexProblem, DualBox};
use crate::rates::rho_interval;

use super::agents::{
    Absorb, DualAgentState, MessageEvent, MessageKind, PrimalAgentState, SnapshotOutcome,
};
use super::ops::OpsCounter;
use super::schedule::Schedule;
use super::trace::{DualUpdateRecord, Epoch, MessageStats, Trace, TraceLabels, TraceRow};

/// Saddle point the error columns are measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Defaults to the box midpoint.
    pub x0: Option<Vec<f64>>,
    /// Defaults to zero.
    pub mu0: Option<Vec<f64>>,
    /// Keep `mu` at `mu0`: no primal-to-dual traffic and no dual updates.
    pub frozen_mu: bool,
    pub reference: Option<Reference>,
    /// Store every agent's full local copy at every tick.
    pub record_locals: bool,
    pub labels: TraceLabels,
    /// Final relative error below which the run counts as converged.
    pub convergence_tol: f64,
    /// Reject steps outside the admissible ranges. Sweeps that probe
    /// inadmissible steps on purpose switch this off.
    pub check_steps: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            x0: None,
            mu0: None,
            frozen_mu: false,
            reference: None,
            record_locals: false,
            labels: TraceLabels::default(),
            convergence_tol: 1e-6,
            check_steps: true,
        }
    }
}

/// All agents plus the global tick. Every tick runs, in order: primal
/// updates, primal-to-dual sends, `k += 1`, snapshot intake, gated dual
/// updates and broadcasts, then primal-to-primal sends, broadcast intake
/// and the cycle check for the new `k`.
#[derive(Debug)]
pub struct World {
    p: ConvexProblem,
    dual_box: DualBox,
    gamma: f64,
    rho: f64,
    schedule: Schedule,
    needs: Vec<Vec<usize>>,
    primal: Vec<PrimalAgentState>,
    dual: Vec<DualAgentState>,
    k: u64,
    ops: OpsCounter,
    pending: Vec<MessageEvent>,
    opts: RunOptions,
    trace: Trace,
}

impl World {
    pub fn new(
        p: &ConvexProblem,
        dual_box: &DualBox,
        schedule: Schedule,
        gamma: f64,
        rho: f64,
        opts: RunOptions,
    ) -> Result<Self> {
        let (n, m) = (p.n(), p.m());
        if schedule.dims() != (n, m) {
            return Err(Error::Schedule(format!(
                "schedule built for {:?}, problem has (n, m) = ({n}, {m})",
                schedule.dims()
            )));
        }
        if !(gamma > 0.0 && rho > 0.0 && gamma.is_finite() && rho.is_finite()) {
            return Err(Error::StepSize("gamma and rho must be positive".into()));
        }
        if opts.check_steps {
            let g_max = gamma_bound(p, dual_box)?;
            if gamma >= g_max {
                return Err(Error::StepSize(format!("gamma = {gamma} >= bound {g_max}")));
            }
            let (lo, hi) = rho_interval(p.delta())?;
            if !opts.frozen_mu && !(rho > lo && rho < hi) {
                return Err(Error::StepSize(format!("rho = {rho} outside ({lo}, {hi})")));
            }
        }
        let x0 = opts.x0.clone().unwrap_or_else(|| p.bounds().midpoint());
        let mu0 = opts.mu0.clone().unwrap_or_else(|| vec![0.0; m]);
        check_len("x0", n, x0.len())?;
        check_len("mu0", m, mu0.len())?;
        if !p.bounds().contains(&x0) {
            return Err(Error::InvalidInput("x0 must lie in X".into()));
        }
        if !dual_box.contains(&mu0) {
            return Err(Error::InvalidInput("mu0 must lie in M".into()));
        }
        if let Some(r) = &opts.reference {
            check_len("reference x", n, r.x.len())?;
            check_len("reference mu", m, r.mu.len())?;
        }

        let needs = p.dependency_pattern(dual_box);
        let mut dependents = vec![Vec::new(); n];
        for (i, row) in needs.iter().enumerate() {
            for &j in row {
                dependents[j].push(i);
            }
        }
        let primal = (0..n)
            .map(|i| PrimalAgentState::new(i, x0.clone(), mu0.clone()))
            .collect();
        let dual = (0..m)
            .map(|c| DualAgentState::new(c, mu0[c], x0.clone(), m))
            .collect();
        let trace = Trace {
            labels: opts.labels.clone(),
            n,
            m,
            gamma,
            rho,
            frozen_mu: opts.frozen_mu,
            rows: Vec::new(),
            own_x: Vec::new(),
            own_mu: Vec::new(),
            locals: opts.record_locals.then(Vec::new),
            needs: needs.clone(),
            epochs: vec![Epoch {
                start_tick: 0,
                stamp: vec![0; m],
                mu: mu0.clone(),
                start_locals: vec![x0.clone(); n],
            }],
            dual_updates: Vec::new(),
            stats: MessageStats::default(),
            reference_x: opts.reference.as_ref().map(|r| r.x.clone()),
            reference_mu: opts.reference.as_ref().map(|r| r.mu.clone()),
            converged: false,
            envelope: None,
        };
        let mut world = World {
            p: p.clone(),
            dual_box: dual_box.clone(),
            gamma,
            rho,
            schedule,
            needs,
            primal,
            dual,
            k: 0,
            ops: OpsCounter::new(dependents, m),
            pending: Vec::new(),
            opts,
            trace,
        };
        world.receive_phase();
        Ok(world)
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn ops(&self) -> u64 {
        self.ops.value()
    }

    pub fn primal_agents(&self) -> &[PrimalAgentState] {
        &self.primal
    }

    pub fn dual_agents(&self) -> &[DualAgentState] {
        &self.dual
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    fn stamp(&self) -> Vec<u64> {
        self.primal[0].t_stamp.clone()
    }

    /// Advances one tick.
    pub fn tick(&mut self) {
        self.compute_phase();
        self.receive_phase();
    }

    fn compute_phase(&mut self) {
        let k = self.k;
        let (n, m) = (self.p.n(), self.p.m());
        for i in 0..n {
            if self.schedule.computes(i, k) {
                self.primal[i].gradient_step(&self.p, self.gamma);
                self.ops.on_compute(i);
                self.trace.stats.computes += 1;
            }
        }
        let mut snaps = Vec::new();
        if !self.opts.frozen_mu {
            for i in 0..n {
                for c in 0..m {
                    if self.schedule.sends_dual(i, c, k + 1) {
                        snaps.push(MessageEvent {
                            kind: MessageKind::PrimalToDual { from: i, to: c },
                            payload: self.primal[i].x_local[i],
                            stamp: self.primal[i].t_stamp.clone(),
                            send_tick: k + 1,
                            ops_at_send: self.ops.value(),
                        });
                    }
                }
            }
        }
        self.k += 1;
        for msg in &snaps {
            let MessageKind::PrimalToDual { to, .. } = msg.kind else {
                unreachable!()
            };
            self.trace.stats.snapshots_sent += 1;
            if self.dual[to].absorb_snapshot(msg) == SnapshotOutcome::Stale {
                self.trace.stats.snapshots_stale += 1;
            }
        }
        if self.opts.frozen_mu {
            return;
        }
        let current = self.stamp();
        let epoch = self.trace.epochs.len() - 1;
        for c in 0..m {
            let before = self.dual[c].mu_own;
            let t_c = self.dual[c].t_c;
            let ops_first = self.dual[c].first_ops.unwrap_or(0);
            if let Some(after) =
                self.dual[c].dual_gate_and_update(&self.p, &self.dual_box, self.rho, &current)
            {
                self.trace.dual_updates.push(DualUpdateRecord {
                    tick: self.k,
                    c,
                    t_c,
                    mu_before: before,
                    mu_after: after,
                    stamp: current.clone(),
                    epoch,
                    ops_first,
                    snapshot: self.dual[c].x_snapshot.clone(),
                });
                self.dual[c].t_c += 1;
                let mut stamp = current.clone();
                stamp[c] = self.dual[c].t_c;
                self.pending.push(MessageEvent {
                    kind: MessageKind::DualBroadcast {
                        from: c,
                        t_c: self.dual[c].t_c,
                    },
                    payload: after,
                    stamp,
                    send_tick: self.k,
                    ops_at_send: self.ops.value(),
                });
            }
        }
    }

    fn receive_phase(&mut self) {
        let k = self.k;
        let n = self.p.n();
        for i in 0..n {
            for idx in 0..self.needs[i].len() {
                let j = self.needs[i][idx];
                if !self.schedule.sends_primal(j, i, k) {
                    continue;
                }
                let msg = MessageEvent {
                    kind: MessageKind::Primal { from: j, to: i },
                    payload: self.primal[j].x_local[j],
                    stamp: self.primal[j].t_stamp.clone(),
                    send_tick: k,
                    ops_at_send: self.ops.value(),
                };
                self.trace.stats.primal_sent += 1;
                match self.primal[i].absorb_primal_message(&msg) {
                    Absorb::Accepted => {
                        self.trace.stats.primal_accepted += 1;
                        self.ops.on_delivery(j, i);
                    }
                    Absorb::Stale => self.trace.stats.primal_stale += 1,
                    Absorb::Buffered => self.trace.stats.primal_buffered += 1,
                }
            }
        }
        if !self.pending.is_empty() {
            let broadcasts = std::mem::take(&mut self.pending);
            for b in &broadcasts {
                self.trace.stats.broadcasts += 1;
                for agent in &mut self.primal {
                    agent.absorb_broadcast(b);
                }
            }
            let stamp = self.stamp();
            self.ops.on_stamp_change(&stamp);
            for i in 0..n {
                for j in self.primal[i].drain_inbox() {
                    self.ops.on_delivery(j, i);
                }
            }
            self.trace.epochs.push(Epoch {
                start_tick: k,
                stamp,
                mu: self.primal[0].mu_local.clone(),
                start_locals: self.primal.iter().map(|a| a.x_local.clone()).collect(),
            });
        }
        self.ops.check_cycle();
        self.record();
    }

    fn record(&mut self) {
        let own_x: Vec<f64> = self.primal.iter().map(|a| a.x_local[a.i]).collect();
        let own_mu: Vec<f64> = self.dual.iter().map(|d| d.mu_own).collect();
        let (rel, dual_err_sq) = match &self.opts.reference {
            Some(r) => (
                l2_dist(&own_x, &r.x) / l2_norm(&r.x),
                own_mu
                    .iter()
                    .zip(&r.mu)
                    .map(|(a, b)| (a - b) * (a - b))
                    .collect(),
            ),
            None => (f64::NAN, vec![f64::NAN; own_mu.len()]),
        };
        let viol = self
            .p
            .constraints()
            .value(&own_x)
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v));
        let s = &self.trace.stats;
        self.trace.rows.push(TraceRow {
            k: self.k,
            ops: self.ops.value(),
            t: self.stamp(),
            rel_primal_err: rel,
            dual_err_sq,
            constraint_violation_max: viol,
            discards: s.primal_stale + s.snapshots_stale,
        });
        if let Some(locals) = &mut self.trace.locals {
            locals.push(self.primal.iter().map(|a| a.x_local.clone()).collect());
        }
        self.trace.own_x.push(own_x);
        self.trace.own_mu.push(own_mu);
    }

    pub fn finish(mut self) -> Trace {
        let last = self.trace.final_row().rel_primal_err;
        self.trace.converged = last <= self.opts.convergence_tol;
        self.trace
    }
}

/// Runs `ticks` ticks and returns the trace (`ticks + 1` rows).
pub fn run(
    p: &ConvexProblem,
    dual_box: &DualBox,
    schedule: Schedule,
    gamma: f64,
    rho: f64,
    ticks: u64,
    opts: RunOptions,
) -> Result<Trace> {
    let mut world = World::new(p, dual_box, schedule, gamma, rho, opts)?;
    for _ in 0..ticks {
        world.tick();
    }
    Ok(world.finish())
}
