//! Alternating left/right Bregman projections between closed sets.
//!
//! The building block is `a →l→ b →r→ a⁺ →l→ b⁺`: a left projection onto `B`
//! followed by a right projection onto `A`, both measured by the Bregman
//! divergence of a Legendre-type generator. The crate provides the
//! generators, projection oracles, the alternating driver, geometric
//! diagnostics and em-algorithm instances built on top of them.

pub mod alternator;
pub mod diagnostics;
pub mod em;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod geometry;
pub mod io;
pub mod legendre;
pub mod sets;
pub mod solver;

pub use error::{Error, Result};

/// Points, gradients and parameters are dense column vectors.
pub type Point = nalgebra::DVector<f64>;
