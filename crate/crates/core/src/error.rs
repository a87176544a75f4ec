use thiserror::Error;

use crate::coupling::CausalityWitness;
use crate::rational::Rational;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library reports. Each variant maps to a stable
/// machine-readable code via [`Error::code`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("masses must sum to exactly 1, got {actual}")]
    MassSumNotOne { actual: Rational },

    #[error("negative mass on path {path:?}")]
    NegativeMass { path: Vec<String> },

    #[error("unknown label at step {step} in path {path:?}")]
    UnknownLabel { path: Vec<String>, step: usize },

    #[error("step {step} out of range for a {steps}-step space")]
    StepOutOfRange { step: usize, steps: usize },

    #[error("map undefined on support path {path:?}")]
    UndefinedOnSupport { path: Vec<String> },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid path space: {0}")]
    InvalidSpace(String),

    #[error("spaces do not match: {0}")]
    SpaceMismatch(String),

    #[error("cannot parse {0:?} as a rational")]
    Parse(String),

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("row total {rows} differs from column total {cols}")]
    UnbalancedMasses { rows: Box<Rational>, cols: Box<Rational> },

    #[error("cost is not stepwise separable; use the enumeration oracle")]
    NonSeparableCost,

    #[error("incomplete cost table: {0}")]
    IncompleteCost(String),

    #[error("metric value is not exactly representable: {0}")]
    InexactMetric(String),

    #[error("instance too large: {work} candidate vertices exceed the limit {limit}")]
    TooLarge { work: u128, limit: u128 },

    #[error("coupling is not bicausal: {0}")]
    NotBicausal(Box<CausalityWitness>),

    #[error("micro-path count {required} exceeds the budget {budget}")]
    BudgetExceeded { required: String, budget: u64 },

    #[error("refinement plan invalid at step {step} for history {history:?}")]
    PlanInvalid { step: usize, history: Vec<String> },

    #[error("plan does not refine the coarse plan at step {step}")]
    PlanNotRefining { step: usize },

    #[error("cell agreement fails; the mesh bound needs exact cell masses")]
    CellAgreementRequired,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed document: {0}")]
    Schema(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::MassSumNotOne { .. } => "MASS_SUM_NOT_ONE",
            Error::NegativeMass { .. } => "NEGATIVE_MASS",
            Error::UnknownLabel { .. } => "UNKNOWN_LABEL",
            Error::StepOutOfRange { .. } => "STEP_OUT_OF_RANGE",
            Error::UndefinedOnSupport { .. } => "UNDEFINED_ON_SUPPORT",
            Error::DimensionMismatch(_) => "DIMENSION_MISMATCH",
            Error::InvalidSpace(_) => "INVALID_SPACE",
            Error::SpaceMismatch(_) => "SPACE_MISMATCH",
            Error::Parse(_) => "PARSE_ERROR",
            Error::InvalidCoupling(_) => "INVALID_COUPLING",
            Error::UnbalancedMasses { .. } => "UNBALANCED_MASSES",
            Error::NonSeparableCost => "NON_SEPARABLE_COST",
            Error::IncompleteCost(_) => "INCOMPLETE_COST",
            Error::InexactMetric(_) => "INEXACT_METRIC",
            Error::TooLarge { .. } => "TOO_LARGE",
            Error::NotBicausal(_) => "NOT_BICAUSAL",
            Error::BudgetExceeded { .. } => "BUDGET_EXCEEDED",
            Error::PlanInvalid { .. } => "PLAN_INVALID",
            Error::PlanNotRefining { .. } => "PLAN_NOT_REFINING",
            Error::CellAgreementRequired => "CELL_AGREEMENT_REQUIRED",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::Schema(_) => "SCHEMA_ERROR",
        }
    }
}
