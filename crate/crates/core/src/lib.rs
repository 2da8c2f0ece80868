//! Numerical laboratory for intrinsic parabolic geometry, Lipschitz
//! truncation and higher integrability of very weak solutions to
//! p-Laplace type equations.

pub mod bounds;
pub mod calculus;
pub mod capacity;
pub mod error;
pub mod estimates;
mod fem;
pub mod grid;
pub mod linalg;
pub mod maximal;
pub mod report;
pub mod solver;
pub mod truncation;
pub mod whitney;

pub use error::{Error, Result};
pub use report::EstimateReport;
