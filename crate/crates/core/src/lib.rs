//! Solver and cycle/energy model of a near-L1-cache ILP accelerator.
//!
//! The crate is organised the way the modeled hardware is: a fetch/control
//! pass ([`fc`]) classifies constraints, then either the sparsity-aware
//! engine ([`sa`]) or the Jacobi engine ([`sle`]) followed by branch and
//! bound ([`bnb`]) solves the instance. [`pim`], [`divider`] and [`cost`]
//! model the datapath and its cycle/energy ledger; [`sim`] ties the phases
//! together. [`oracle`] holds independent reference solvers.

pub mod bnb;
pub mod cost;
pub mod divider;
pub mod error;
pub mod fc;
pub mod format;
pub mod generate;
pub mod oracle;
pub mod pim;
pub mod problem;
pub mod rational;
pub mod relax;
pub mod sa;
pub mod sim;
pub mod sle;
pub mod verify;

pub use error::{Error, Result};
pub use fc::{detect_sparsity, SparsityPartition};
pub use format::{parse_problem, to_json};
pub use problem::{
    check_feasibility, evaluate_objective, Constraint, IlpProblem, Sense, Solution, Status,
};
pub use rational::Rational;
pub use sim::{run, run_matrix, SimConfig, SimReport};

