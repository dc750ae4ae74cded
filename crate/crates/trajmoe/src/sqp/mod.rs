pub mod nlp;
pub mod qp;
pub mod rk4;
pub mod solver;

pub use solver::{kkt_residual, solve, SolveResult, SolveStatus, SolverConfig};
