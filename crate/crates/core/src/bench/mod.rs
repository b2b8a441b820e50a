//! Experiment plumbing behind the command-line tool: configs, the
//! synchronous reference, and the `verify` / `solve` / `sweep` /
//! `counterexample` commands.

mod commands;
mod config;

pub use commands::{
    cmd_counterexample, cmd_solve, cmd_sweep, cmd_verify, tail_stats, AuditVerdicts, Check,
    CounterexampleSummary, RunSummary, SettingSummary, SolveSummary, SweepSummary, VerifyReport,
};
pub use config::{
    AutoKeyword, ExperimentConfig, LoadedConfig, Param, ProblemSource, Sweep, SweepParam, PRESETS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{
    default_h_lower, dual_bound, gamma_bound, screen_affine_slater, verify_dominance,
    ConvexProblem, DominanceCertificate, DualBox, ProblemSpec,
};
use crate::sim::{BernoulliSpec, ScheduleSpec};
use crate::uzawa::{solve_saddle, Saddle};

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub ticks: Option<u64>,
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seeds = vec![s];
        }
        if let Some(t) = o.ticks {
            self.ticks = t;
        }
        if let Some(out) = &o.out {
            self.output = out.clone();
        }
    }
}

/// Safety factor applied to the step bound by `"auto"`.
pub const AUTO_GAMMA_FACTOR: f64 = 0.9;

/// Everything a run needs, with `"auto"` entries filled in.
#[derive(Debug, Clone)]
pub struct Setup {
    pub spec: ProblemSpec,
    pub problem: ConvexProblem,
    pub dual_box: DualBox,
    pub certificate: DominanceCertificate,
    pub gamma_bound: f64,
    pub gamma: f64,
    pub rho: f64,
}

/// Projected subgradient descent on `max_c g_c` over the box; returns the
/// most interior point found if it is strictly feasible.
pub fn find_slater_point(p: &ConvexProblem) -> Option<Vec<f64>> {
    if p.m() == 0 {
        return Some(p.bounds().midpoint());
    }
    let diam = p.bounds().diameter_max().max(1e-12);
    let mut x = p.bounds().midpoint();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for it in 0..5000u32 {
        let g = p.constraint_values(&x).ok()?;
        let (c, &worst) = g.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
        if best.as_ref().is_none_or(|(v, _)| worst < *v) {
            best = Some((worst, x.clone()));
        }
        let d = p.constraints().gradient(c, &x);
        let norm = d.norm();
        if norm == 0.0 {
            break;
        }
        let step = diam / (f64::from(it) + 1.0).sqrt();
        let moved: Vec<f64> = x
            .iter()
            .zip(d.iter())
            .map(|(xi, di)| xi - step * di / norm)
            .collect();
        x = p.bounds().project(&moved);
    }
    best.filter(|(v, _)| *v < 0.0).map(|(_, x)| x)
}

fn dual_box_for(config: &ExperimentConfig, p: &ConvexProblem) -> Result<DualBox> {
    if let Some(r) = config.dual_radius_override {
        return DualBox::user_supplied(r, "dual_radius_override from the experiment config");
    }
    if let Some(screen) = screen_affine_slater(p) {
        if !screen.passes() {
            return Err(Error::SlaterViolated(format!(
                "rows {:?} cannot be strictly negative on the box (row minima {:?}); \
                 set dual_radius_override",
                screen.infeasible_rows, screen.row_minima
            )));
        }
    }
    let point = match &config.slater_point {
        Some(x) => x.clone(),
        None => find_slater_point(p).ok_or_else(|| {
            Error::SlaterViolated(
                "no strictly feasible point found; set dual_radius_override".into(),
            )
        })?,
    };
    let h_lower = default_h_lower(p).ok_or_else(|| {
        Error::Config("no lower bound on h over the box is known; set dual_radius_override".into())
    })?;
    dual_bound(p, &point, h_lower)
}

impl Setup {
    /// `beta_scale` multiplies the objective.
    pub fn resolve(loaded: &LoadedConfig, beta_scale: Option<f64>) -> Result<Self> {
        let config = &loaded.config;
        let mut spec = config.problem.load(loaded.base_dir.as_deref())?;
        if let Some(d) = config.delta.value() {
            spec.delta = d;
        }
        if let Some(s) = beta_scale {
            spec = spec.scaled(s);
        }
        let problem = spec.build()?;
        let dual_box = dual_box_for(config, &problem)?;
        let certificate = verify_dominance(&problem, &dual_box)?;
        let gb = gamma_bound(&problem, &dual_box)?;
        Ok(Setup {
            gamma: config.gamma.value().unwrap_or(AUTO_GAMMA_FACTOR * gb),
            rho: config.rho.value().unwrap_or(1.0 / problem.delta()),
            spec,
            problem,
            dual_box,
            certificate,
            gamma_bound: gb,
        })
    }

    /// High-accuracy synchronous saddle point with `gamma = 0.9 gamma_bound`
    /// and `rho = 1 / delta`, halving `rho` up to four times if that stalls.
    pub fn reference(&self, tol: f64) -> Result<Saddle> {
        let gamma = AUTO_GAMMA_FACTOR * self.gamma_bound;
        let mut rho = 1.0 / self.problem.delta();
        let mut last = None;
        for _ in 0..5 {
            match solve_saddle(
                &self.problem,
                &self.dual_box,
                gamma,
                rho,
                tol,
                REFERENCE_MAX_ITERS,
            ) {
                Ok(s) => return Ok(s),
                Err(e @ Error::NonConvergence { .. }) => last = Some(e),
                Err(e) => return Err(e),
            }
            rho *= 0.5;
        }
        Err(last.expect("at least one attempt"))
    }
}

pub const REFERENCE_MAX_ITERS: u64 = 20_000_000;

/// `spec` with its Bernoulli seed replaced.
pub fn with_seed(spec: &ScheduleSpec, seed: u64) -> ScheduleSpec {
    match spec {
        ScheduleSpec::Bernoulli(b) => ScheduleSpec::Bernoulli(BernoulliSpec { seed, ..b.clone() }),
        other => other.clone(),
    }
}

/// `spec` with its communication probability replaced; all-ticks schedules
/// become Bernoulli schedules.
pub fn with_comm_prob(spec: &ScheduleSpec, comm_prob: f64) -> Result<ScheduleSpec> {
    match spec {
        ScheduleSpec::AllTicks => Ok(ScheduleSpec::Bernoulli(BernoulliSpec::new(0, comm_prob))),
        ScheduleSpec::Bernoulli(b) => Ok(ScheduleSpec::Bernoulli(BernoulliSpec {
            comm_prob,
            ..b.clone()
        })),
        ScheduleSpec::Deterministic(_) => Err(Error::Config(
            "comm_prob sweeps need an all_ticks or bernoulli schedule".into(),
        )),
    }
}

/// Objective scales used for the dominance sweep.
pub const BETA_SCALES: [f64; 4] = [0.9, 1.0, 10.0, 100.0];
/// Communication rates used for the communication sweep.
pub const COMM_PROBS: [f64; 3] = [1.0, 0.5, 0.1];
/// Fixed primal step for both sweeps on the quartic instance.
pub const SWEEP_GAMMA: f64 = 8e-4;

/// Dominance sweep on the quartic instance: fixed step, full communication.
pub fn beta_sweep_config() -> ExperimentConfig {
    let mut c = quartic10_config();
    c.gamma = Param::Value(SWEEP_GAMMA);
    // the step is admissible only for scales <= 1
    c.check_steps = false;
    c.sweep = Some(Sweep {
        param: SweepParam::BetaScale,
        values: BETA_SCALES.to_vec(),
    });
    c.ticks = 3000;
    c.output = "out/beta_sweep".into();
    c
}

/// Communication sweep on the quartic instance, 20 seeds.
pub fn comm_sweep_config() -> ExperimentConfig {
    let mut c = quartic10_config();
    c.gamma = Param::Value(SWEEP_GAMMA);
    c.schedule = ScheduleSpec::Bernoulli(BernoulliSpec::new(0, 1.0));
    c.sweep = Some(Sweep {
        param: SweepParam::CommProb,
        values: COMM_PROBS.to_vec(),
    });
    c.seeds = (0..20).collect();
    c.ticks = 3000;
    c.tail_window = Some(300);
    c.output = "out/comm_sweep".into();
    c
}

/// The quartic instance with its supplied dual radius.
pub fn quartic10_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::for_problem(ProblemSource::Preset {
        preset: "quartic10".into(),
    });
    c.dual_radius_override = Some(crate::presets::QUARTIC10_DUAL_RADIUS);
    c
}

/// Values of a parameter, for summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub beta: f64,
    pub gamma_bound: f64,
    pub gamma: f64,
    pub rho: f64,
}

impl From<&Setup> for Resolved {
    fn from(s: &Setup) -> Self {
        Resolved {
            beta: s.certificate.beta,
            gamma_bound: s.gamma_bound,
            gamma: s.gamma,
            rho: s.rho,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quartic_setup_resolves_auto() {
        let s = Setup::resolve(&LoadedConfig::inline(quartic10_config()), None).unwrap();
        assert_relative_eq!(s.certificate.beta, 12.0, epsilon = 1e-9);
        assert_relative_eq!(s.gamma, 0.9 / 1203.6, epsilon = 1e-15);
        assert_relative_eq!(s.rho, 1000.0, epsilon = 1e-9);
    }

    #[test]
    fn quartic_without_override_fails_slater() {
        let c = ExperimentConfig::for_problem(ProblemSource::Preset {
            preset: "quartic10".into(),
        });
        assert!(matches!(
            Setup::resolve(&LoadedConfig::inline(c), None),
            Err(Error::SlaterViolated(_))
        ));
    }

    #[test]
    fn slater_toy_radius() {
        let mut c = ExperimentConfig::for_problem(ProblemSource::Preset {
            preset: "slater_toy".into(),
        });
        c.slater_point = Some(vec![-0.5]);
        let s = Setup::resolve(&LoadedConfig::inline(c.clone()), None).unwrap();
        assert_relative_eq!(s.dual_box.radius(), 4.5, epsilon = 1e-12);
        // the search goes to the most interior point, x = -1
        c.slater_point = None;
        let s = Setup::resolve(&LoadedConfig::inline(c), None).unwrap();
        assert_relative_eq!(s.dual_box.radius(), 4.0, epsilon = 1e-9);
    }

    #[test]
    fn beta_scale_scales_beta() {
        let loaded = LoadedConfig::inline(quartic10_config());
        for s in BETA_SCALES {
            let setup = Setup::resolve(&loaded, Some(s)).unwrap();
            assert_relative_eq!(setup.certificate.beta, 12.0 * s, max_relative = 1e-9);
        }
    }

    #[test]
    fn schedule_rewrites() {
        let b = with_comm_prob(&ScheduleSpec::AllTicks, 0.5).unwrap();
        assert_eq!(b.comm_prob(), Some(0.5));
        match with_seed(&b, 7) {
            ScheduleSpec::Bernoulli(s) => assert_eq!(s.seed, 7),
            _ => unreachable!(),
        }
    }
}
