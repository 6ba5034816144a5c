use std::fmt;

use crate::interval::Interval;
use crate::taskdl::Diagnostic;

/// Why an expression could not be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalFault {
    DivisionByZero,
    NegativeSqrt(f64),
    NonFinite,
}

impl fmt::Display for EvalFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalFault::DivisionByZero => write!(f, "division by zero"),
            EvalFault::NegativeSqrt(x) => write!(f, "square root of negative value {x}"),
            EvalFault::NonFinite => write!(f, "result is not a finite number"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{0}` is not assigned")]
    MissingVariable(String),
    #[error("variable `{0}` is declared twice")]
    DuplicateVariable(String),
    #[error("more than one transition rule targets `{0}`")]
    DuplicateRule(String),
    #[error("domain {domain} of `{name}` is empty")]
    EmptyDomain { name: String, domain: Interval },
    #[error("value {value} of `{name}` lies outside its domain {domain}")]
    OutOfDomain {
        name: String,
        value: f64,
        domain: Interval,
    },
    #[error("initial state violates relation `{0}`")]
    InitialRelation(String),
    #[error("restriction {restriction} of `{name}` is not within the parent domain {domain}")]
    RestrictionOutsideDomain {
        name: String,
        restriction: Interval,
        domain: Interval,
    },
    #[error("environments are slices of different worlds")]
    WorldMismatch,
    #[error("{fault} in rule for `{rule}`{}", time.map(|t| format!(" at time {t}")).unwrap_or_default())]
    Eval {
        rule: String,
        time: Option<f64>,
        fault: EvalFault,
    },
    #[error("`{0}` is not an actuator of the agent body")]
    NotAnActuator(String),
    #[error("unknown body `{0}`")]
    UnknownBody(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("unknown variant spec `{0}`")]
    UnknownVariant(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{}", format_diagnostics(.0))]
    Parse(Vec<Diagnostic>),
    #[error("action space of {total} sequences exceeds the cap of {cap}; use a coarser grid or decompose the task serially")]
    CapExceeded { total: f64, cap: u64 },
    #[error("controller failed: {0}")]
    Controller(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
