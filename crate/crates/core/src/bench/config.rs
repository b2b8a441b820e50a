//! Experiment files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::presets;
use crate::problem::ProblemSpec;
use crate::sim::ScheduleSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

/// A number or the string `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Auto(AutoKeyword),
    Value(f64),
}

impl Default for Param {
    fn default() -> Self {
        Param::Auto(AutoKeyword::Auto)
    }
}

impl Param {
    pub const AUTO: Param = Param::Auto(AutoKeyword::Auto);

    pub fn value(&self) -> Option<f64> {
        match self {
            Param::Auto(_) => None,
            Param::Value(v) => Some(*v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    /// `{"preset": "quartic10"}`
    Preset {
        preset: String,
    },
    /// `{"file": "problem.json"}`, relative to the config file.
    File {
        file: PathBuf,
    },
    Inline(Box<ProblemSpec>),
}

pub const PRESETS: [&str; 3] = ["quartic10", "toy_1d", "slater_toy"];

impl ProblemSource {
    pub fn load(&self, base_dir: Option<&Path>) -> Result<ProblemSpec> {
        match self {
            ProblemSource::Preset { preset } => match preset.as_str() {
                "quartic10" => Ok(presets::quartic10_spec()),
                "toy_1d" => Ok(presets::toy_1d_spec(0.1)),
                "slater_toy" => Ok(presets::slater_toy_spec(0.1)),
                other => Err(Error::Config(format!(
                    "unknown preset {other:?}, expected one of {PRESETS:?}"
                ))),
            },
            ProblemSource::File { file } => {
                let path = match base_dir {
                    Some(d) if file.is_relative() => d.join(file),
                    _ => file.clone(),
                };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                ProblemSpec::from_json(&text)
            }
            ProblemSource::Inline(spec) => Ok((**spec).clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Multiplies `h` by the value.
    BetaScale,
    CommProb,
    Rho,
    Gamma,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::BetaScale => "beta_scale",
            SweepParam::CommProb => "comm_prob",
            SweepParam::Rho => "rho",
            SweepParam::Gamma => "gamma",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_ticks() -> u64 {
    1000
}

fn default_output() -> String {
    "out/run".into()
}

fn default_reference_tol() -> f64 {
    1e-12
}

fn default_true() -> bool {
    true
}

fn default_hit_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    #[serde(default)]
    pub dual_radius_override: Option<f64>,
    /// Slater point for the dual bound; searched for when absent.
    #[serde(default)]
    pub slater_point: Option<Vec<f64>>,
    /// `"auto"`: `0.9 * gamma_bound`.
    #[serde(default)]
    pub gamma: Param,
    /// `"auto"`: `1 / delta`.
    #[serde(default)]
    pub rho: Param,
    /// `"auto"`: the problem's own `delta`.
    #[serde(default)]
    pub delta: Param,
    #[serde(default = "all_ticks")]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// Each seed replaces the Bernoulli schedule seed.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_ticks")]
    pub ticks: u64,
    /// Path prefix for every file written.
    #[serde(default = "default_output")]
    pub output: String,
    /// Stopping tolerance of the synchronous reference solve.
    #[serde(default = "default_reference_tol")]
    pub reference_tol: f64,
    /// Reject inadmissible `gamma`/`rho`.
    #[serde(default = "default_true")]
    pub check_steps: bool,
    /// Run the primal envelope and one-step audits (slower).
    #[serde(default)]
    pub audit: bool,
    /// Ticks in the tail window of the sweep table; default `ticks / 10`.
    #[serde(default)]
    pub tail_window: Option<u64>,
    /// Relative error whose first hit is reported.
    #[serde(default = "default_hit_tol")]
    pub hit_tol: f64,
}

fn all_ticks() -> ScheduleSpec {
    ScheduleSpec::AllTicks
}

impl ExperimentConfig {
    pub fn for_problem(problem: ProblemSource) -> Self {
        ExperimentConfig {
            problem,
            dual_radius_override: None,
            slater_point: None,
            gamma: Param::AUTO,
            rho: Param::AUTO,
            delta: Param::AUTO,
            schedule: ScheduleSpec::AllTicks,
            sweep: None,
            seeds: default_seeds(),
            ticks: default_ticks(),
            output: default_output(),
            reference_tol: default_reference_tol(),
            check_steps: true,
            audit: false,
            tail_window: None,
            hit_tol: default_hit_tol(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn tail_window(&self) -> u64 {
        self.tail_window.unwrap_or(self.ticks / 10).max(1)
    }
}

/// The loaded config plus the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: Option<PathBuf>,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(LoadedConfig {
            config: ExperimentConfig::from_json(&text)?,
            base_dir: path.parent().map(Path::to_path_buf),
        })
    }

    pub fn inline(config: ExperimentConfig) -> Self {
        LoadedConfig {
            config,
            base_dir: None,
        }
    }
}
