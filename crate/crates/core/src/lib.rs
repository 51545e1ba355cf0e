//! Alpha-fair routing and spectrum allocation (RSA) for elastic optical
//! networks under tidal traffic.
//!
//! The pipeline is: route every connection on a fixed shortest path
//! ([`topology`]), sample demand fluctuations and derive peak demands
//! ([`traffic`]), build the discrete allocation menu and its normalization
//! ([`welfare`]), solve the alpha-fair allocation problem ([`solver`]), and
//! evaluate the result ([`metrics`]). [`harness`] ties these together into
//! reproducible alpha sweeps.

pub mod harness;
pub mod metrics;
pub mod solver;
pub mod topology;
pub mod traffic;
pub mod welfare;

pub use solver::{solve_alpha_fair, Allocation, RsaInstance, SolverConfig, SolverMode};
pub use welfare::Alpha;
