//! Compositional approximate inference over copy-discard categories of channels.
//!
//! Two concrete instances are provided: finite-discrete channels (row-stochastic
//! matrices, [`discrete`]) and affine-Gaussian channels ([`gaussian`]). On top of
//! these sit coparameterized Bayesian lenses ([`lens`]), state-dependent loss
//! functions and the four loss models KL, MLE, FE and LFE ([`loss`]), and
//! statistical games with their composition witnesses ([`games`]).
//!
//! Composition retains intermediate variables ("copy-composition") rather than
//! marginalizing them, so the composite of a channel `A -> M⊗B` with a channel
//! `B -> N⊗C` is a channel `A -> ((M⊗B)⊗N)⊗C`. Coparameters are laid out
//! row-major, which makes the bracketing of a product irrelevant to the flat
//! index of an outcome; equality checks always compare flattened forms.
//!
//! The [`harness`] module turns each compositional law into a seeded,
//! reproducible pass/fail suite checked against brute-force oracles.

pub mod demo;
pub mod discrete;
mod error;
pub mod games;
pub mod gaussian;
pub mod harness;
pub mod io;
pub mod lens;
pub mod loss;

pub use error::{Error, Result};

/// Tolerance on row sums and total mass when validating distributions.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Default tolerance for numerical comparisons.
pub const COMPARISON_TOL: f64 = 1e-9;
