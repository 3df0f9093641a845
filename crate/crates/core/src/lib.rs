//! Higher-order kernel mean embeddings of stochastic processes.
//!
//! The signature kernel of two piecewise-linear paths is the terminal value of
//! a Goursat problem `u_st = <dx_s, dy_t> u` with unit boundary data. Solving
//! that problem on every pair of path prefixes gives a *Gram field*, from which
//! conditional kernel mean embeddings along the filtration can be estimated.
//! Feeding those estimates back into the same PDE yields Gram matrices of the
//! predictive embedding processes and hence MMDs of any order.
//!
//! On top of the estimators the crate provides a permutation two-sample test,
//! a Hilbert–Schmidt conditional-independence criterion with a kPC skeleton
//! search, kernel ridge distribution regression over bags of sample paths, and
//! seeded generators for the synthetic processes used in the test-suite.

pub mod causal;
pub mod condind;
pub mod datagen;
pub mod dataset;
pub mod dr;
mod error;
pub mod higherorder;
pub mod json;
mod linalg;
pub mod mmdtest;
pub mod path;
pub mod rng;
pub mod sigkernel;

pub use error::{Error, Result};
pub use higherorder::{HigherOrderConfig, MmdEstimate, Variant};
pub use path::{Ensemble, Path};
pub use sigkernel::{GramField, PdeSolver, Scheme};
