//! Secrecy-rate maximization for MIMO wiretap links assisted by a
//! beyond-diagonal RIS, solved with a penalty-based Riemannian conjugate
//! gradient method on a product manifold.

pub mod baselines;
pub mod channel;
pub mod config;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod manifold;
pub mod objective;
pub mod solver;

pub use error::{Error, Result};
