//! Rate, distortion and privacy-leakage trade-offs for privacy-constrained
//! source coding with an arbitrary encoded attribute set `R ⊆ E ⊆ K`.
//!
//! The crate is organized bottom-up:
//!
//! - [`prob`]: pmfs, joint distributions, channels and information measures.
//! - [`model`]: attribute schema, revealed/hidden partition, encoded set and
//!   evaluation of a single test channel.
//! - [`region`]: boundary curves of the achievable region (rate-distortion by
//!   Blahut-Arimoto, minimum leakage by Frank-Wolfe), membership, and an
//!   exhaustive grid oracle.
//! - [`types`]: types, conditional types, strong typicality and exhaustive
//!   checks of the typical-set lemmas.
//! - [`codec`]: random typical codebooks, the typicality encoder, and exact
//!   or Monte-Carlo measurement of rate, distortion and equivocation.
//!
//! Probability bookkeeping is generic over [`Scalar`] (`f32`, `f64`,
//! [`Rational64`]); information measures need [`Real`]. The solvers in
//! [`region`] work in `f64`.

pub mod codec;
pub mod error;
pub mod model;
pub mod prob;
pub mod region;
pub mod scalar;
pub mod types;

pub use error::{Error, Result};
pub use num_rational::Rational64;
pub use scalar::{Real, Scalar};

pub type Pmf64 = prob::Pmf<f64>;
pub type JointPmf64 = prob::JointPmf<f64>;
pub type Channel64 = prob::Channel<f64>;
pub type SourceModel64 = model::SourceModel<f64>;
pub type PointEval64 = model::PointEval<f64>;

pub type PmfQ = prob::Pmf<Rational64>;
pub type ChannelQ = prob::Channel<Rational64>;
pub type SourceModelQ = model::SourceModel<Rational64>;
