//! Parallel consensus-ADMM trajectory optimization with learned online
//! re-splitting of stagnating segments.

pub mod admm;
pub mod env;
pub mod geometry;
pub mod problem;
pub mod trajectory;
