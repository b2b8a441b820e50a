//! JSON document for problem instances:
//! `{n, m, family, coefficients, A (row-major), b, box_lower, box_upper, delta}`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AffineConstraints, BoxSet, ConvexProblem, QuadraticObjective, QuarticPairwise};
use crate::error::{check_len, Error, Result};

/// Objective family plus its coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "coefficients", rename_all = "snake_case")]
pub enum Family {
    /// `scale * (sum x_i^4 + pair_weight * sum_{i != j} (x_i - x_j)^2)`
    QuarticPairwise { scale: f64, pair_weight: f64 },
    /// `1/2 x^T Q x + r^T x + constant`, `Q` row-major.
    Quadratic {
        #[serde(rename = "Q")]
        q: Vec<f64>,
        r: Vec<f64>,
        #[serde(default)]
        constant: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: usize,
    pub m: usize,
    #[serde(flatten)]
    pub family: Family,
    /// Constraint matrix, `m x n`, row-major.
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub box_lower: Vec<f64>,
    pub box_upper: Vec<f64>,
    pub delta: f64,
}

impl ProblemSpec {
    pub fn quadratic(
        q: Vec<f64>,
        r: Vec<f64>,
        constant: f64,
        a: Vec<f64>,
        b: Vec<f64>,
        bounds: BoxSet,
        delta: f64,
    ) -> Self {
        ProblemSpec {
            n: bounds.dim(),
            m: b.len(),
            family: Family::Quadratic { q, r, constant },
            a,
            b,
            box_lower: bounds.lower().to_vec(),
            box_upper: bounds.upper().to_vec(),
            delta,
        }
    }

    pub fn quartic_pairwise(
        scale: f64,
        pair_weight: f64,
        a: Vec<f64>,
        b: Vec<f64>,
        bounds: BoxSet,
        delta: f64,
    ) -> Self {
        ProblemSpec {
            n: bounds.dim(),
            m: b.len(),
            family: Family::QuarticPairwise { scale, pair_weight },
            a,
            b,
            box_lower: bounds.lower().to_vec(),
            box_upper: bounds.upper().to_vec(),
            delta,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The same instance with the objective multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.family = match &self.family {
            Family::QuarticPairwise { scale, pair_weight } => Family::QuarticPairwise {
                scale: scale * s,
                pair_weight: *pair_weight,
            },
            Family::Quadratic { q, r, constant } => Family::Quadratic {
                q: q.iter().map(|v| v * s).collect(),
                r: r.iter().map(|v| v * s).collect(),
                constant: constant * s,
            },
        };
        out
    }

    pub fn build(&self) -> Result<ConvexProblem> {
        let (n, m) = (self.n, self.m);
        if n == 0 {
            return Err(Error::InvalidProblem("n must be >= 1".into()));
        }
        check_len("A (row-major m*n)", m * n, self.a.len())?;
        check_len("b", m, self.b.len())?;
        check_len("box_lower", n, self.box_lower.len())?;
        check_len("box_upper", n, self.box_upper.len())?;
        let bounds = BoxSet::new(self.box_lower.clone(), self.box_upper.clone())?;
        let constraints = AffineConstraints::new(
            DMatrix::from_row_slice(m, n, &self.a),
            DVector::from_column_slice(&self.b),
        )?;
        let mut problem = match &self.family {
            Family::QuarticPairwise { scale, pair_weight } => ConvexProblem::new(
                Arc::new(QuarticPairwise::new(n, *scale, *pair_weight)?),
                Arc::new(constraints),
                bounds,
                self.delta,
            )?,
            Family::Quadratic { q, r, constant } => {
                check_len("Q (row-major n*n)", n * n, q.len())?;
                check_len("r", n, r.len())?;
                ConvexProblem::new(
                    Arc::new(QuadraticObjective::new(
                        DMatrix::from_row_slice(n, n, q),
                        DVector::from_column_slice(r),
                        *constant,
                    )?),
                    Arc::new(constraints),
                    bounds,
                    self.delta,
                )?
            }
        };
        problem.set_spec(self.clone());
        Ok(problem)
    }
}
