//! Crate-wide error type.

use thiserror::Error;

use crate::dsl::ParseError;

#[derive(Debug, Error)]
pub enum AglError {
    #[error("duplicate symbol `{0}` in carrier")]
    DuplicateSymbol(String),

    #[error("unknown symbol `{symbol}` (carrier is {{{carrier}}})")]
    UnknownSymbol { symbol: String, carrier: String },

    #[error("interface mismatch: {0}")]
    InterfaceMismatch(String),

    #[error("carrier mismatch: {0}")]
    CarrierMismatch(String),

    #[error("action `{action}` is not in the fiber over `{obs}`")]
    FiberMismatch { obs: String, action: String },

    #[error("interface is not simple: fiber over `{obs}` differs from fiber over `{first}`")]
    NonSimpleInterface { obs: String, first: String },

    #[error("certificate ill-formed at o=`{obs}`, a=`{action}`: the assumption holds but the guarantee does not; assumptions must imply guarantees")]
    IllFormedCertificate { obs: String, action: String },

    #[error("mixed change structures: {0}")]
    MixedChangeStructure(String),

    #[error("machine is nondeterministic; {0} requires a deterministic machine")]
    RequiresDeterministic(&'static str),

    #[error("trace action at step {step} is outside the fiber over the current view: {detail}")]
    TraceActionMismatch { step: usize, detail: String },

    #[error("{rule} premise failed — {condition}{witness}")]
    PremiseFailed {
        rule: &'static str,
        condition: String,
        witness: String,
    },

    #[error("internal soundness violation in {rule}: the conclusion failed re-verification ({detail}); this indicates a bug in the checker itself")]
    InternalSoundness { rule: &'static str, detail: String },

    #[error("piecewise-linear function invalid: {0}")]
    InvalidPlFun(String),

    #[error("negative argument {0} to a piecewise-linear function defined on [0, ∞)")]
    NegativePlArg(f64),

    #[error("slack must be of class 𝒦∞⁰ (strictly increasing from 0, or identically 0); {0}")]
    SlackClass(String),

    #[error("comparison-function class violation: {0}")]
    ComparisonClass(String),

    #[error("unbound variable {0} (dimensions declared: {1})")]
    UnboundVariable(String, String),

    #[error("division by zero while evaluating an expression")]
    DivisionByZero,

    #[error("zero base raised to negative power {0}")]
    ZeroToNegativePower(i32),

    #[error("cannot differentiate through `{0}`; rewrite the function in smooth form")]
    NonSmooth(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sample plan invalid: {0}")]
    InvalidSamplePlan(String),

    #[error("candidate invalid: {0}")]
    InvalidCandidate(String),

    #[error("not an equilibrium: |field(x0,a0)| = {residual:e} exceeds {tol:e}")]
    NotEquilibrium { residual: f64, tol: f64 },

    #[error("point {0} lies outside the declared domain box")]
    OutsideDomain(String),

    #[error("gradient cross-check failed at {point}: symbolic vs finite-difference relative error {rel_err:e} exceeds {limit:e}")]
    GradientGate {
        point: String,
        rel_err: f64,
        limit: f64,
    },

    #[error("storage check failed: {0}")]
    StorageCheck(String),

    #[error("simulation setup invalid: {0}")]
    InvalidSimulation(String),

    #[error("state became non-finite at integration step {step}")]
    NonFiniteState { step: usize },

    #[error("input signal invalid: {0}")]
    InvalidSignal(String),

    #[error(transparent)]
    Parse(#[from] ParseError),
}
