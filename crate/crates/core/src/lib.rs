//! Virtual Markov chains: level paths and their projections, virtual
//! transition matrices, balayages and the simplex of marginal sequences,
//! staircase chains, coupled simulation with the staircase decomposition,
//! and a zero-one law evaluator for the tail σ-algebra.

pub mod cli;
pub mod error;
pub mod kernels;
pub mod levels;
pub mod rational;
pub mod rng;
pub mod simplex;
pub mod smc;
pub mod vmcsim;
pub mod zolaw;

pub use error::{Result, VmcError};
pub use rational::Rational;
