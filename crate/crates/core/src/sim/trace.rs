//! Per-tick records and their CSV form.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Labels copied into every CSV row.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceLabels {
    pub seed: Option<u64>,
    pub comm_prob: Option<f64>,
    pub beta_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: u64,
    pub ops: u64,
    /// Dual iteration vector held by the primal agents.
    pub t: Vec<u64>,
    /// `||(x^i_i)_i - x_hat|| / ||x_hat||`, NaN without a reference.
    pub rel_primal_err: f64,
    /// `(mu^c_c - mu_hat_c)^2` per dual agent.
    pub dual_err_sq: Vec<f64>,
    /// `max(0, max_c g_c((x^i_i)_i))`.
    pub constraint_violation_max: f64,
    /// Messages dropped for carrying an outdated dual vector, cumulative.
    pub discards: u64,
}

/// A period with a fixed dual vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub start_tick: u64,
    pub stamp: Vec<u64>,
    /// `mu(t)` as held by every primal agent.
    pub mu: Vec<f64>,
    /// Each primal agent's full local copy when the epoch began.
    pub start_locals: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualUpdateRecord {
    pub tick: u64,
    pub c: usize,
    /// Iteration count before this update.
    pub t_c: u64,
    pub mu_before: f64,
    pub mu_after: f64,
    /// Dual vector the snapshot was collected under.
    pub stamp: Vec<u64>,
    /// Index into [`Trace::epochs`] of that vector.
    pub epoch: usize,
    /// `ops` when the first snapshot under `stamp` was sent.
    pub ops_first: u64,
    pub snapshot: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageStats {
    pub computes: u64,
    pub primal_sent: u64,
    pub primal_accepted: u64,
    pub primal_stale: u64,
    pub primal_buffered: u64,
    pub snapshots_sent: u64,
    pub snapshots_stale: u64,
    pub broadcasts: u64,
}

/// Optional audit columns appended to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeColumns {
    pub bound: Vec<f64>,
    pub observed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub labels: TraceLabels,
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub rho: f64,
    pub frozen_mu: bool,
    pub rows: Vec<TraceRow>,
    /// `x^i_i` per tick.
    pub own_x: Vec<Vec<f64>>,
    /// `mu^c_c` per tick.
    pub own_mu: Vec<Vec<f64>>,
    /// Full local copies per tick and agent, when recorded.
    pub locals: Option<Vec<Vec<Vec<f64>>>>,
    /// `needs[i]`: blocks agent `i` reads besides its own.
    pub needs: Vec<Vec<usize>>,
    pub epochs: Vec<Epoch>,
    pub dual_updates: Vec<DualUpdateRecord>,
    pub stats: MessageStats,
    pub reference_x: Option<Vec<f64>>,
    pub reference_mu: Option<Vec<f64>>,
    pub converged: bool,
    pub envelope: Option<EnvelopeColumns>,
}

impl Trace {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["k", "seed", "comm_prob", "beta_scale", "ops"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend((1..=self.m).map(|c| format!("t_{c}")));
        h.push("rel_primal_err".into());
        h.extend((1..=self.m).map(|c| format!("dual_err_sq_{c}")));
        h.push("constraint_violation_max".into());
        h.push("discards".into());
        if self.envelope.is_some() {
            h.push("primal_env_bound".into());
            h.push("primal_env_observed".into());
        }
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        let opt_u = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (idx, r) in self.rows.iter().enumerate() {
            let mut rec = vec![
                r.k.to_string(),
                opt_u(self.labels.seed),
                opt_f(self.labels.comm_prob),
                opt_f(self.labels.beta_scale),
                r.ops.to_string(),
            ];
            rec.extend(r.t.iter().map(u64::to_string));
            rec.push(r.rel_primal_err.to_string());
            rec.extend(r.dual_err_sq.iter().map(f64::to_string));
            rec.push(r.constraint_violation_max.to_string());
            rec.push(r.discards.to_string());
            if let Some(env) = &self.envelope {
                rec.push(env.bound[idx].to_string());
                rec.push(env.observed[idx].to_string());
            }
            out.write_record(rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn final_row(&self) -> &TraceRow {
        self.rows
            .last()
            .expect("a trace always has its initial row")
    }

    /// First tick at which the relative error is at most `tol` and stays
    /// there until the end of the trace.
    pub fn settling_tick(&self, tol: f64) -> Option<u64> {
        let mut first = None;
        for r in &self.rows {
            if r.rel_primal_err <= tol {
                first.get_or_insert(r.k);
            } else {
                first = None;
            }
        }
        first
    }

    /// First tick at which the relative error is at most `tol`.
    pub fn first_hit(&self, tol: f64) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.rel_primal_err <= tol)
            .map(|r| r.k)
    }
}
