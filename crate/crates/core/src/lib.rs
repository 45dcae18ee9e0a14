//! Robust transmit covariance design for MIMO two-way full-duplex links
//! with a partially known eavesdropper.
//!
//! The eavesdropper channel error is only known through its mean and
//! covariance. Two convex restrictions of the resulting outage-constrained
//! sum secrecy rate problem are provided (an expectation bound and a
//! worst-case CVaR semidefinite program), each solved inside a
//! difference-of-concave loop by a small log-barrier interior-point solver.

pub mod channel;
pub mod dc;
pub mod error;
pub mod linalg;
pub mod optimizer;
pub mod rng;
pub mod solver;
pub mod validation;

pub use error::{Error, Result};
