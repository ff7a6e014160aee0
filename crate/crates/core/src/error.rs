use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One violated constraint of the ACS hyperparameter region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub detail: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("validation error for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("numeric failure in {op} at {at}: {detail}")]
    Numeric {
        op: &'static str,
        at: f64,
        detail: String,
    },

    #[error("integration diverged after t = {last_valid_time}")]
    Divergence { last_valid_time: f64 },

    #[error("sampler state became non-finite at step {step}")]
    SamplerDivergence { step: usize },

    #[error("schedule denominator vanishes at t = {at} within the horizon")]
    SingularSchedule { at: f64 },

    #[error(
        "requested SNR {requested:e} outside achievable interval [{achievable_min:e}, {achievable_max:e}]"
    )]
    Coverage {
        requested: f64,
        achievable_min: f64,
        achievable_max: f64,
        steps: Vec<usize>,
    },

    #[error("infeasible hyperparameters: {}", format_violations(.0))]
    Infeasible(Vec<Violation>),

    #[error("trajectory too coarse near t = {at}: relative jump {jump:.3} between adjacent points")]
    Resolution { at: f64, jump: f64 },

    #[error("standard error {stderr:e} exceeds {limit_pct}% of {quantity} = {value:e}; increase the sample count")]
    Imprecise {
        quantity: &'static str,
        value: f64,
        stderr: f64,
        limit_pct: f64,
    },

    #[error("cannot serialize schedule of kind `{0}`; tabulate it first")]
    NotSerializable(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at `{path}`: {detail}")]
    Parse { path: String, detail: String },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("{} ({})", x.constraint, x.detail))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn numeric(op: &'static str, at: f64, detail: impl Into<String>) -> Self {
        Error::Numeric {
            op,
            at,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for user-correctable input problems (bad parameters, infeasible
    /// hyperparameters, coverage gaps) as opposed to numeric breakdowns.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::Validation { .. }
                | Error::Infeasible(_)
                | Error::Coverage { .. }
                | Error::SingularSchedule { .. }
                | Error::Parse { .. }
                | Error::NotSerializable(_)
                | Error::Imprecise { .. }
                | Error::Resolution { .. }
        )
    }
}
