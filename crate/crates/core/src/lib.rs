//! Load-balanced distributed assembly of symmetric normal equations over
//! simulated ranks, with eigen-based and iterative solvers and an
//! irregular-access kernel study.
//!
//! The pipeline: [`partition`] splits rows across ranks, [`sym_assign`]
//! decides which cells each row computes so every symmetric pair is built
//! exactly once, [`assembly`] reduces the input data into those cells,
//! [`rank_net`] moves mirrored values between ranks, and
//! [`spectral_solver`] / [`iterative_solver`] solve the result. [`oracle`]
//! holds the brute-force references everything is checked against.

pub mod assembly;
pub mod cli;
pub mod dump;
pub mod error;
pub mod exec;
pub mod gather_kernel;
pub mod iterative_solver;
pub mod matrix;
pub mod oracle;
pub mod partition;
pub mod rank_net;
pub mod report;
pub mod spectral_solver;
pub mod sym_assign;

pub use error::{Error, Result};
pub use matrix::Matrix;
