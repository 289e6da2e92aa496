use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("solution status is {0:?}, expected Optimal")]
    StatusError(crate::lp::LpStatus),
    #[error("malformed LP: {0}")]
    BadProblem(String),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("stage-1 problem is infeasible from x0")]
    InfeasibleRoot,
    #[error("scenario index {0} out of range (N = {1})")]
    IndexError(usize, usize),
    #[error("point outside the box domain beyond tolerance")]
    OutOfDomain,
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("iteration bound violated: ran {ran} iterations, analysis cap {cap}")]
    IterationOverflow { ran: usize, cap: usize },
    #[error("subproblem {scenario} infeasible at the current search point")]
    SubproblemInfeasible { scenario: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pdsa(#[from] PdsaError),
}

#[derive(Debug, Error)]
pub enum PdsaError {
    #[error("oracle subgradient norm {norm} exceeds the declared bound {bound}")]
    OracleError { norm: f64, bound: f64 },
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}
