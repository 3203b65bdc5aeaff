use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("log of non-positive value {arg}")]
    Domain { arg: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SystemError {
    #[error("malformed system: {0}")]
    Shape(String),
    #[error("in {field}: {source}")]
    Expr { field: String, source: ExprError },
    #[error("branch {element} is not Markov (endpoint residual {residual:e})")]
    NotMarkov { element: usize, residual: f64 },
    #[error("map is not expanding (min |T'| = {lambda})")]
    NotExpanding { lambda: f64 },
    #[error("roof out of range: inf r = {min}, sup r = {max} (need 0 < r <= 1)")]
    RoofOutOfRange { min: f64, max: f64 },
    #[error("transition graph is not covering")]
    NotCovering,
    #[error("{count} admissible words exceed the cap {cap}")]
    CapExceeded { count: u64, cap: u64 },
    #[error("word {0:?} is not admissible")]
    NotAdmissible(alloc::vec::Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OperatorError {
    #[error("power iteration did not converge in {iterations} iterations (spread {spread:e})")]
    NoConvergence { iterations: usize, spread: f64 },
    #[error("grid needs at least {min} nodes per element, got {got}")]
    GridTooSmall { min: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GibbsError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("|b| = {b} is below the partition threshold {required}")]
    FrequencyTooSmall { b: f64, required: f64 },
    #[error("no sign change of log lambda for pressure in [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UniError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("branch pair has empty common domain")]
    EmptyDomain,
    #[error("points are not siblings: |T^n x1 - T^n x2| = {gap:e}")]
    NotSiblings { gap: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DolgopyatError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Uni(#[from] UniError),
    #[error("no cancellation witness in partition element {element} ({left}, {right})")]
    NoCancellationWitness { element: usize, left: f64, right: f64 },
    #[error("parameter gate failed: {0}")]
    Gate(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("only {usable} time points carry signal, need at least 4")]
    InsufficientSignal { usable: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}
