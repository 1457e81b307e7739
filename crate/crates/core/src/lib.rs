//! Penalized Gaussian laws, their Stein operators, zero-bias transforms and the
//! numerical checks of the associated approximation bounds.

pub mod error;
pub mod experiments;
pub mod levy;
pub mod numerics;
pub mod phi4;
pub mod penalize;
pub mod report;
pub mod stein;
pub mod zerobias;

pub use error::{Error, Result};
