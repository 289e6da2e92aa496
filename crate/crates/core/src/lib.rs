//! Solvers for discounted infinite-horizon stochastic programs.
//!
//! The crate implements explorative dual dynamic programming and its
//! variants (a faster single-loop variant, an upper/lower-bound variant,
//! and stochastic sampling), plus a hierarchical mode where stage
//! subproblems are two-stage stochastic programs solved inexactly by a
//! primal-dual stochastic approximation method. A truncated extensive-form
//! oracle provides ground truth for testing.
//!
//! The numeric kernel (dense linear algebra and the simplex core) is
//! generic over the scalar type; the solver stack runs on `f64`, and the
//! same pivoting code instantiates with exact rationals for reference
//! checks.

pub mod num;
pub mod linalg;
pub mod error;
pub mod lp;
pub mod assemble;
mod simplex;
pub mod model;
pub mod format;
pub mod cuts;
pub mod upper;
pub mod saturation;
pub mod stage;
pub mod benchmarks;
pub mod oracle;
pub mod engine;
pub mod pdsa;
pub mod hddp;
pub mod trace;

pub use error::{EngineError, LpError, ModelError, PdsaError};
pub use lp::{parametric_dual, solve_lp, LpProblem, LpSolution, LpStatus};
pub use model::{HierarchicalInstance, PiecewiseLinearCost, Scenario, StationaryInstance};
pub use format::{load_hierarchical, load_instance, parse_instance, write_instance};
pub use cuts::{init_lower, Cut, LowerModel};
pub use upper::{init_upper, UpperModel};
pub use saturation::SaturationMap;

/// LP over the production scalar.
pub type LpProblem64 = LpProblem<f64>;
pub type LpSolution64 = LpSolution<f64>;
/// LP over exact rationals (reference instantiation of the same core).
pub type LpProblemExact = LpProblem<num_rational::BigRational>;
pub type Mat64 = linalg::Mat<f64>;
