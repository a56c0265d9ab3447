//! Per-bid activation limits that keep feeder-connected flexibility from
//! violating distribution grid constraints when it clears in a
//! transmission-level balancing market.
//!
//! The crate clears a balancing market under three regimes (no distribution
//! constraints, full distribution constraints, operating-envelope boxes),
//! computes envelopes with a two-step LP method and a one-step QP method,
//! verifies distribution grid safety with a linearised branch-flow power flow
//! and evaluates the outcome over seeded Monte Carlo scenario sets.
//!
//! All numerical code is generic over a [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! harness and the command line tool use.

pub mod caseio;
pub mod clearing;
pub mod cli;
pub mod envelopes;
pub mod mcharness;
pub mod metrics;
pub mod netmodel;
pub mod optcore;
pub mod pfcheck;

mod linalg;
mod svg;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the models and solvers are generic over.
pub trait Scalar: clarabel::algebra::FloatT + Serialize + DeserializeOwned {
    /// Converts an `f64` constant.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub use netmodel::{Direction, NetworkId, RadialError};

pub type FlexResource = netmodel::FlexResource<f64>;
pub type TransmissionNetwork = netmodel::TransmissionNetwork<f64>;
pub type DistributionNetwork = netmodel::DistributionNetwork<f64>;
pub type PolygonApprox = netmodel::PolygonApprox<f64>;
pub type GridModel = netmodel::GridModel<f64>;
pub type Ptdf = netmodel::Ptdf<f64>;

pub type ConvexProblem = optcore::ConvexProblem<f64>;
pub type SolveResult = optcore::SolveResult<f64>;

pub type Envelope = envelopes::Envelope<f64>;
pub type WeightAssignment = envelopes::WeightAssignment<f64>;

pub type MarketSolution = clearing::MarketSolution<f64>;

pub type PfState = pfcheck::PfState<f64>;
pub type ViolationReport = pfcheck::ViolationReport<f64>;

pub use envelopes::{OeMethod, WeightRule};
pub use clearing::Regime;
pub use metrics::InstanceReport;
