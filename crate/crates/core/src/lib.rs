//! Information-theoretic toolkit for Bayes-optimal inference in the standard
//! linear model `y = A x + w`.
//!
//! The scalar-channel and replica modules are generic over the float type
//! ([`Real`]); the matrix-valued modules work in `f64`. Aliases for the
//! common `f64` instantiations live at the crate root.

// `!(x > 0.0)` is the NaN-rejecting form used throughout for argument checks;
// quadrature constants are kept at their published precision.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod amp;
pub mod error;
pub mod exact;
pub mod info_sequences;
pub mod linear_model;
pub mod quadrature;
pub mod real;
pub mod replica;
pub mod rng;
pub mod scalar_channel;
pub mod stats;
pub mod subset;
pub mod table;

pub use error::{Error, Result};
pub use real::Real;

pub type Prior = scalar_channel::ScalarPrior<f64>;
pub type BgParams = scalar_channel::BgPosteriorParams<f64>;
pub type Curve = scalar_channel::ScalarCurve<f64>;
pub type Solution = replica::ReplicaSolution<f64>;
pub type Transition = replica::PhaseTransition<f64>;
pub type Instance = linear_model::LinearModelInstance;
