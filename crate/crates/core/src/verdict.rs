//! Verdict types shared by the boolean and quantitative checkers.
//!
//! Verdicts are plain data: they serialize to JSON for reports and carry the
//! deterministic (scan-order smallest, or worst-margin) witness so failures
//! are diffable across runs and across worker counts.

use serde::Serialize;

use crate::quant::SamplePlan;

/// Outcome of an exhaustive boolean check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoolVerdict {
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<BoolFailure>,
}

/// First failing condition in the checker's fixed scan order (carriers are
/// scanned in declaration order, so this is the lexicographically smallest
/// counterexample).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoolFailure {
    /// Stable identifier of the violated condition, e.g.
    /// `"guarantee-implication"`.
    pub condition: String,
    /// The symbols witnessing the violation, outermost first.
    pub witness: Vec<String>,
}

impl BoolVerdict {
    pub fn pass() -> Self {
        BoolVerdict {
            holds: true,
            failure: None,
        }
    }

    pub fn fail(condition: &str, witness: Vec<String>) -> Self {
        BoolVerdict {
            holds: false,
            failure: Some(BoolFailure {
                condition: condition.to_string(),
                witness,
            }),
        }
    }

    /// Render the witness as `condition @ (s, a)` for error messages.
    pub fn describe_failure(&self) -> String {
        match &self.failure {
            None => String::from("no failure"),
            Some(f) => format!("{} at ({})", f.condition, f.witness.join(", ")),
        }
    }
}

/// Options shared by grid-based checks.
#[derive(Clone, Copy, Debug)]
pub struct CheckOpts {
    /// Slack tolerance for certificate inequalities: a sample fails only if
    /// its margin drops below `-tol`.
    pub tol: f64,
    /// Number of workers to partition grids across. Results are identical
    /// for every value.
    pub jobs: usize,
}

impl Default for CheckOpts {
    fn default() -> Self {
        CheckOpts {
            tol: 1e-8,
            jobs: 1,
        }
    }
}

impl CheckOpts {
    pub fn with_tol(tol: f64) -> Self {
        CheckOpts {
            tol,
            ..Default::default()
        }
    }
}

/// Tolerances a quantitative verdict was computed under, echoed for
/// reproducibility.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    /// Certificate inequality slack.
    pub tol: f64,
    /// Definiteness threshold for storage functions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_def: Option<f64>,
    /// Exclusion radius around the base point for definiteness sampling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_excl: Option<f64>,
}

impl Tolerances {
    pub fn new(tol: f64, tol_def: Option<f64>, r_excl: Option<f64>) -> Self {
        Tolerances {
            tol,
            tol_def,
            r_excl,
        }
    }

    pub fn plain(tol: f64) -> Self {
        Tolerances::new(tol, None, None)
    }
}

/// Result of the symbolic-vs-finite-difference gradient cross-check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientCheck {
    /// Largest relative error seen over all grid samples and state
    /// dimensions.
    pub max_rel_err: f64,
    /// Sample point realizing it.
    pub at: Vec<f64>,
    pub points_checked: usize,
}

/// Outcome of a grid-based quantitative check.
///
/// `worst_margin` is the minimum margin over all samples and conditions;
/// the check holds when it stays above `-tol`. The witness is selected
/// deterministically by (margin, sample index, condition), so verdicts are
/// byte-identical across runs and worker counts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantVerdict {
    pub holds: bool,
    pub worst_margin: f64,
    /// Grid coordinates of the worst sample (observation/state coordinates
    /// first, then action/input coordinates).
    pub witness_point: Vec<f64>,
    /// Stable identifier of the condition the worst margin belongs to.
    pub condition: String,
    pub grid: SamplePlan,
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_check: Option<GradientCheck>,
    /// Sampled-evidence flag: set when the guarantee keeps growing toward
    /// the domain boundary and the view image keeps widening. Never a claim
    /// of global verification.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global_capable: Option<bool>,
}

impl QuantVerdict {
    pub fn describe(&self) -> String {
        format!(
            "{} (worst margin {:e} for {} at {:?})",
            if self.holds { "holds" } else { "violated" },
            self.worst_margin,
            self.condition,
            self.witness_point
        )
    }
}
