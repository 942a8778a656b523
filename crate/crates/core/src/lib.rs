//! Misanthrope-type particle systems with product blocking measures.
//!
//! The crate covers the full pipeline from model definition to numerical
//! verification:
//!
//! * [`model`] — the factorized rate framework and the builtin catalog
//!   (ASEP, K-exclusion, zero range variants, are-you-alone, bricklayers);
//! * [`state`] — windowed blocking configurations, conserved quantities,
//!   jumps and shifts;
//! * [`measures`] — product blocking measures, marginals, the discrete
//!   Gaussian sector law, and exact samplers;
//! * [`dynamics`] — event-driven continuous-time simulation;
//! * [`standup`] — the lay-down / stand-up bijection between half-line
//!   stack configurations and 0-1 exclusion configurations;
//! * [`verify`] — finite-chain enumeration oracles, identity checkers, and
//!   the Jacobi triple product.
//!
//! All core math is generic over [`scalar::Scalar`]; the aliases below pin
//! `f64`, the precision every shipped tolerance is calibrated for.

pub mod dynamics;
pub mod error;
pub mod ext_int;
pub mod measures;
pub mod model;
pub mod scalar;
pub mod standup;
pub mod state;
pub mod verify;

pub use error::{Error, Result};
pub use ext_int::ExtInt;
pub use scalar::Scalar;

/// Default concrete scalar.
pub type Real = f64;

pub type ModelSpec = model::ModelSpec<Real>;
pub type RateKernel = model::RateKernel<Real>;
pub type BuiltinParams = model::BuiltinParams<Real>;
pub type MarginalLaw = measures::MarginalLaw<Real>;
pub type SectorWeight = measures::SectorWeight<Real>;



