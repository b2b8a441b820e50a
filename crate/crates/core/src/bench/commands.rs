use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{with_comm_prob, with_seed, LoadedConfig, Resolved, Setup, SweepParam};
use crate::counterexample::{
    demo_divergence, verify, CounterexampleInstance, CounterexampleReport,
};
use crate::error::{Error, Result};
use crate::problem::{
    gamma_bound, screen_affine_slater, verify_dominance, DominanceCertificate, DualProvenance,
};
use crate::rates::audit::{one_step_audit, primal_envelope};
use crate::rates::{qd, qp, rho_interval, RateConstants};
use crate::sim::{run, Reference, RunOptions, ScheduleSpec, Trace, TraceLabels};
use crate::uzawa::Saddle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    /// Per-row minima of affine constraints over the box.
    pub row_minima: Option<Vec<f64>>,
    pub dual_radius: Option<f64>,
    pub dual_provenance: Option<DualProvenance>,
    pub certificate: Option<DominanceCertificate>,
    pub gamma_bound: Option<f64>,
    pub rho_interval: Option<(f64, f64)>,
    pub gamma: Option<f64>,
    pub rho: Option<f64>,
    pub q_p: Option<f64>,
    pub q_d: Option<f64>,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n = {}, m = {}, delta = {}", self.n, self.m, self.delta)?;
        for c in &self.checks {
            let tag = if c.pass { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Checks every standing assumption and reports the derived constants.
/// Never fails on a violated assumption; only on unreadable input.
pub fn cmd_verify(loaded: &LoadedConfig) -> Result<VerifyReport> {
    let config = &loaded.config;
    let mut spec = config.problem.load(loaded.base_dir.as_deref())?;
    if let Some(d) = config.delta.value() {
        spec.delta = d;
    }
    let mut checks = Vec::new();
    let p = match spec.build() {
        Ok(p) => p,
        Err(e) => {
            checks.push(Check::new("convexity", false, e.to_string()));
            return Ok(VerifyReport {
                n: spec.n,
                m: spec.m,
                delta: spec.delta,
                row_minima: None,
                dual_radius: None,
                dual_provenance: None,
                certificate: None,
                gamma_bound: None,
                rho_interval: None,
                gamma: None,
                rho: None,
                q_p: None,
                q_d: None,
                checks,
            });
        }
    };
    checks.push(Check::new(
        "convexity",
        true,
        "objective family and affine constraints are convex by construction",
    ));

    let screen = screen_affine_slater(&p);
    let slater_point = match &config.slater_point {
        Some(x) => {
            let ok = p.bounds().contains(x) && p.constraint_values(x)?.iter().all(|v| *v < 0.0);
            ok.then(|| x.clone())
        }
        None => super::find_slater_point(&p),
    };
    let slater_ok = screen.as_ref().is_none_or(|s| s.passes()) && slater_point.is_some();
    let slater_detail = match (&screen, &slater_point) {
        (Some(s), _) if !s.passes() => format!(
            "rows {:?} are nonnegative everywhere on the box (row minima {:?})",
            s.infeasible_rows, s.row_minima
        ),
        (_, Some(x)) => format!("strictly feasible point {x:?}"),
        _ => "no strictly feasible point found".into(),
    };
    checks.push(Check::new("slater", slater_ok, slater_detail));

    let dual_box = super::dual_box_for(config, &p);
    match &dual_box {
        Ok(d) => checks.push(Check::new(
            "dual_bound",
            true,
            match d.provenance() {
                DualProvenance::Slater { point, h_lower } => format!(
                    "radius {} from slater point {point:?}, h_lower {h_lower}",
                    d.radius()
                ),
                DualProvenance::UserSupplied { note } => {
                    format!("radius {} (user-supplied: {note})", d.radius())
                }
            },
        )),
        Err(e) => checks.push(Check::new("dual_bound", false, e.to_string())),
    }

    let mut report = VerifyReport {
        n: p.n(),
        m: p.m(),
        delta: p.delta(),
        row_minima: screen.map(|s| s.row_minima),
        dual_radius: dual_box.as_ref().ok().map(|d| d.radius()),
        dual_provenance: dual_box.as_ref().ok().map(|d| d.provenance().clone()),
        certificate: None,
        gamma_bound: None,
        rho_interval: rho_interval(p.delta()).ok(),
        gamma: None,
        rho: None,
        q_p: None,
        q_d: None,
        checks,
    };
    let Ok(dual_box) = dual_box else {
        return Ok(report);
    };

    match verify_dominance(&p, &dual_box) {
        Ok(cert) => {
            report.checks.push(Check::new(
                "diagonal_dominance",
                true,
                format!("beta = {} ({:?})", cert.beta, cert.method),
            ));
            report.certificate = Some(cert);
        }
        Err(e) => report
            .checks
            .push(Check::new("diagonal_dominance", false, e.to_string())),
    }
    let Some(cert) = report.certificate.clone() else {
        return Ok(report);
    };
    let gb = gamma_bound(&p, &dual_box)?;
    report.gamma_bound = Some(gb);
    let gamma = config
        .gamma
        .value()
        .unwrap_or(super::AUTO_GAMMA_FACTOR * gb);
    let rho = config.rho.value().unwrap_or(1.0 / p.delta());
    report.gamma = Some(gamma);
    report.rho = Some(rho);
    report.q_p = qp(gamma, cert.beta).ok();
    report.q_d = qd(rho, p.delta()).ok();
    report.checks.push(Check::new(
        "primal_step",
        gamma > 0.0 && gamma < gb,
        format!("gamma = {gamma}, bound {gb}"),
    ));
    let (lo, hi) = rho_interval(p.delta())?;
    report.checks.push(Check::new(
        "dual_step",
        rho > lo && rho < hi,
        format!("rho = {rho}, interval ({lo}, {hi})"),
    ));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdicts {
    pub primal_envelope_holds: bool,
    pub primal_envelope_violations: usize,
    pub primal_cycle_ratio_max: f64,
    pub one_step_holds: Option<bool>,
    pub one_step_checked: usize,
    pub one_step_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub csv: String,
    pub final_rel_err: f64,
    pub final_dual_err_sq: Vec<f64>,
    pub final_constraint_violation: f64,
    pub converged: bool,
    /// First tick with relative error at most `hit_tol`.
    pub first_hit: Option<u64>,
    /// First tick after which the error stays at most `hit_tol`.
    pub settling_tick: Option<u64>,
    pub tail_mean: f64,
    pub tail_var: f64,
    pub dual_updates: usize,
    pub discards: u64,
    pub audit: Option<AuditVerdicts>,
}

/// Mean and population variance of the relative error over the last
/// `window + 1` rows.
pub fn tail_stats(trace: &Trace, window: u64) -> (f64, f64) {
    let start = trace.rows.len().saturating_sub(window as usize + 1);
    let xs: Vec<f64> = trace.rows[start..]
        .iter()
        .map(|r| r.rel_primal_err)
        .collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

struct RunJob<'a> {
    setup: &'a Setup,
    reference: &'a Saddle,
    schedule: ScheduleSpec,
    seed: u64,
    labels: TraceLabels,
    csv: PathBuf,
}

fn run_job(loaded: &LoadedConfig, job: RunJob<'_>) -> Result<(Trace, RunSummary)> {
    let c = &loaded.config;
    let s = job.setup;
    let schedule = with_seed(&job.schedule, job.seed).build(s.problem.n(), s.problem.m())?;
    let mut trace = run(
        &s.problem,
        &s.dual_box,
        schedule,
        s.gamma,
        s.rho,
        c.ticks,
        RunOptions {
            reference: Some(Reference {
                x: job.reference.x.clone(),
                mu: job.reference.mu.clone(),
            }),
            record_locals: c.audit,
            labels: job.labels,
            check_steps: c.check_steps,
            ..Default::default()
        },
    )?;
    let audit = if c.audit {
        let q_p = qp(s.gamma, s.certificate.beta)?;
        let env = primal_envelope(&s.problem, &trace, s.gamma, q_p)?;
        let one_step = RateConstants::new(&s.problem, s.certificate.beta, s.gamma, s.rho)
            .and_then(|rc| one_step_audit(&s.problem, &trace, &rc, &job.reference.mu))
            .ok();
        trace.envelope = Some(env.columns());
        trace.locals = None;
        Some(AuditVerdicts {
            primal_envelope_holds: env.holds(),
            primal_envelope_violations: env.violations.len(),
            primal_cycle_ratio_max: env.max_cycle_ratio,
            one_step_holds: one_step.as_ref().map(|r| r.holds()),
            one_step_checked: one_step.as_ref().map_or(0, |r| r.checked),
            one_step_violations: one_step.as_ref().map_or(0, |r| r.violations),
        })
    } else {
        None
    };
    ensure_parent(&job.csv)?;
    trace.write_csv(fs::File::create(&job.csv)?)?;
    let last = trace.final_row().clone();
    let (tail_mean, tail_var) = tail_stats(&trace, c.tail_window());
    let summary = RunSummary {
        seed: job.seed,
        csv: job.csv.display().to_string(),
        final_rel_err: last.rel_primal_err,
        final_dual_err_sq: last.dual_err_sq.clone(),
        final_constraint_violation: last.constraint_violation_max,
        converged: trace.converged,
        first_hit: trace.first_hit(c.hit_tol),
        settling_tick: trace.settling_tick(c.hit_tol),
        tail_mean,
        tail_var,
        dual_updates: trace.dual_updates.len(),
        discards: last.discards,
        audit,
    };
    Ok((trace, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub iterations: u64,
    pub residual: f64,
    pub gamma: f64,
    pub rho: f64,
}

impl From<&Saddle> for ReferenceSummary {
    fn from(s: &Saddle) -> Self {
        ReferenceSummary {
            x: s.x.clone(),
            mu: s.mu.clone(),
            iterations: s.iterations,
            residual: s.residual,
            gamma: s.gamma,
            rho: s.rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub resolved: Resolved,
    pub reference: ReferenceSummary,
    pub runs: Vec<RunSummary>,
    /// Runs whose final relative error exceeds the convergence tolerance.
    pub not_converged: Vec<u64>,
    pub summary_path: String,
}

/// Synchronous reference, then one asynchronous run per seed. Writes
/// `<output>_seed<s>.csv` per run and `<output>_summary.json`.
pub fn cmd_solve(loaded: &LoadedConfig) -> Result<SolveSummary> {
    let c = &loaded.config;
    let setup = Setup::resolve(loaded, None)?;
    let reference = setup.reference(c.reference_tol)?;
    let runs = c
        .seeds
        .par_iter()
        .map(|&seed| {
            run_job(
                loaded,
                RunJob {
                    setup: &setup,
                    reference: &reference,
                    schedule: c.schedule.clone(),
                    seed,
                    labels: TraceLabels {
                        seed: Some(seed),
                        comm_prob: c.schedule.comm_prob(),
                        beta_scale: Some(1.0),
                    },
                    csv: PathBuf::from(format!("{}_seed{seed}.csv", c.output)),
                },
            )
            .map(|(_, s)| s)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary_path = format!("{}_summary.json", c.output);
    let summary = SolveSummary {
        resolved: Resolved::from(&setup),
        reference: ReferenceSummary::from(&reference),
        not_converged: runs
            .iter()
            .filter(|r| !r.converged)
            .map(|r| r.seed)
            .collect(),
        runs,
        summary_path: summary_path.clone(),
    };
    write_json(Path::new(&summary_path), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingSummary {
    pub value: f64,
    pub resolved: Option<Resolved>,
    pub reference: Option<ReferenceSummary>,
    pub runs: Vec<RunSummary>,
    /// Set when this setting could not be run at all.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub param: SweepParam,
    pub settings: Vec<SettingSummary>,
    pub summary_path: String,
    pub table_path: String,
}

impl SweepSummary {
    pub fn setting(&self, value: f64) -> Option<&SettingSummary> {
        self.settings.iter().find(|s| s.value == value)
    }
}

fn sweep_setting(loaded: &LoadedConfig, param: SweepParam, value: f64) -> Result<SettingSummary> {
    let mut local = loaded.clone();
    let c = &mut local.config;
    let mut beta_scale = None;
    match param {
        SweepParam::BetaScale => beta_scale = Some(value),
        SweepParam::CommProb => c.schedule = with_comm_prob(&c.schedule, value)?,
        SweepParam::Rho => c.rho = super::Param::Value(value),
        SweepParam::Gamma => c.gamma = super::Param::Value(value),
    }
    let setup = Setup::resolve(&local, beta_scale)?;
    let reference = setup.reference(local.config.reference_tol)?;
    let c = &local.config;
    let runs = c
        .seeds
        .par_iter()
        .map(|&seed| {
            run_job(
                &local,
                RunJob {
                    setup: &setup,
                    reference: &reference,
                    schedule: c.schedule.clone(),
                    seed,
                    labels: TraceLabels {
                        seed: Some(seed),
                        comm_prob: c.schedule.comm_prob(),
                        beta_scale: Some(beta_scale.unwrap_or(1.0)),
                    },
                    csv: PathBuf::from(format!(
                        "{}_{}{value}_seed{seed}.csv",
                        c.output,
                        param.name()
                    )),
                },
            )
            .map(|(_, s)| s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SettingSummary {
        value,
        resolved: Some(Resolved::from(&setup)),
        reference: Some(ReferenceSummary::from(&reference)),
        runs,
        error: None,
    })
}

/// Runs every sweep value for every seed. A setting that fails is
/// recorded in the summary rather than aborting the sweep. Writes one CSV
/// per run, `<output>_sweep.json` and the table `<output>_sweep.csv`.
pub fn cmd_sweep(loaded: &LoadedConfig) -> Result<SweepSummary> {
    let c = &loaded.config;
    let sweep = c
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("config has no sweep".into()))?;
    if sweep.values.is_empty() {
        return Err(Error::Config("sweep values are empty".into()));
    }
    let settings: Vec<SettingSummary> = sweep
        .values
        .par_iter()
        .map(|&v| {
            sweep_setting(loaded, sweep.param, v).unwrap_or_else(|e| SettingSummary {
                value: v,
                resolved: None,
                reference: None,
                runs: Vec::new(),
                error: Some(e.to_string()),
            })
        })
        .collect();
    let table_path = format!("{}_sweep.csv", c.output);
    let summary_path = format!("{}_sweep.json", c.output);
    ensure_parent(Path::new(&table_path))?;
    let mut w = csv::Writer::from_path(&table_path)?;
    w.write_record([
        sweep.param.name(),
        "seed",
        "final_rel_err",
        "first_hit",
        "settling_tick",
        "tail_mean",
        "tail_var",
        "converged",
        "error",
    ])?;
    let opt = |v: Option<u64>| v.map(|t| t.to_string()).unwrap_or_default();
    for s in &settings {
        if let Some(e) = &s.error {
            w.write_record([&s.value.to_string(), "", "", "", "", "", "", "", e])?;
        }
        for r in &s.runs {
            w.write_record([
                s.value.to_string(),
                r.seed.to_string(),
                r.final_rel_err.to_string(),
                opt(r.first_hit),
                opt(r.settling_tick),
                r.tail_mean.to_string(),
                r.tail_var.to_string(),
                r.converged.to_string(),
                String::new(),
            ])?;
        }
    }
    w.flush()?;
    let summary = SweepSummary {
        param: sweep.param,
        settings,
        summary_path: summary_path.clone(),
        table_path,
    };
    write_json(Path::new(&summary_path), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSummary {
    pub report: CounterexampleReport,
    pub demo_terminal_gap: f64,
    pub demo_analytic_gap: f64,
    pub instance_path: String,
    pub problem_path: String,
}

impl fmt::Display for CounterexampleSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.report;
        writeln!(f, "||mu1 - mu2|| = {} < epsilon = {}", r.mu_gap, r.epsilon)?;
        writeln!(f, "||x1 - x2||   = {} > L = {}", r.x_gap, r.l)?;
        writeln!(
            f,
            "sigma_min     = {} (1 / lambda_max = {})",
            r.sigma_min,
            1.0 / r.lambda_max
        )?;
        writeln!(f, "lower bound   = {}", r.lower_bound)?;
        writeln!(
            f,
            "simulated gap = {} (exact {})",
            self.demo_terminal_gap, self.demo_analytic_gap
        )
    }
}

/// Ticks for the two frozen-multiplier demo runs.
pub const DEMO_TICKS: u64 = 5000;

/// Builds and verifies an instance, runs the divergence demo and writes
/// `<out>_instance.json` and `<out>_problem.json`.
pub fn cmd_counterexample(
    epsilon: f64,
    l: f64,
    n: usize,
    seed: u64,
    out: &str,
) -> Result<CounterexampleSummary> {
    let inst = CounterexampleInstance::build(epsilon, l, n, seed)?;
    let report = verify(&inst)?;
    let demo = demo_divergence(&inst, &ScheduleSpec::AllTicks, DEMO_TICKS)?;
    let instance_path = format!("{out}_instance.json");
    let problem_path = format!("{out}_problem.json");
    write_json(Path::new(&instance_path), &inst)?;
    write_json(Path::new(&problem_path), &inst.to_spec(0.001))?;
    Ok(CounterexampleSummary {
        report,
        demo_terminal_gap: demo.terminal_gap,
        demo_analytic_gap: demo.analytic_gap,
        instance_path,
        problem_path,
    })
}
