//! Discrete-event simulation of ATM ABR explicit-rate switch algorithms.
//!
//! The crate compares four ways for a switch port to divide its ABR
//! capacity: ERICA with a cells-seen active count, ERICA with the
//! max-allocation fairness step, and the effective-number-of-active-VCs
//! method fed either by the CCR field or by per-connection rate measurement.
//! [`maxmin`] holds the offline fairness mathematics used as an oracle.

// Negated comparisons are how argument checks reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
pub mod error;
pub mod maxmin;
pub mod report;
pub mod scalar;
pub mod scenario;
pub mod source;
pub mod switch;
pub mod trace;
pub mod types;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use types::{Cell, CellKind, Rate, RmPayload, SimTime, VcId};

/// Demand profile over `f64` rates.
pub type DemandProfile = maxmin::DemandProfile<f64>;
/// Demand profile over `f32` rates.
pub type DemandProfileF32 = maxmin::DemandProfile<f32>;
/// Demand profile over exact rationals.
pub type ExactDemandProfile = maxmin::DemandProfile<num_rational::Rational64>;

pub type Cap = maxmin::Cap<f64>;
pub type ExactCap = maxmin::Cap<num_rational::Rational64>;

pub type NetworkModel = maxmin::NetworkModel<f64>;
pub type ExactNetworkModel = maxmin::NetworkModel<num_rational::Rational64>;

pub type FixedPointResult = maxmin::FixedPointResult<f64>;
pub type WaterLevel = maxmin::WaterLevel<f64>;
