//! Market efficiency and envelope restrictiveness metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clearing::Regime;
use crate::envelopes::{Envelope, OeMethod, WeightRule};
use crate::netmodel::{Direction, FlexResource};
use crate::Scalar;

/// Reference costs below this magnitude make the relative inefficiency undefined.
pub const IDEAL_COST_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no envelope for resource {0}")]
    MissingEnvelope(String),
}

/// Cost excess over the reference clearing, percent of `|ideal|`.
///
/// `None` when the reference cost is (numerically) zero.
pub fn inefficiency<S: Scalar>(cost: S, ideal: S) -> Option<S> {
    if ideal.abs() < S::lit(IDEAL_COST_EPS) {
        None
    } else {
        Some((cost - ideal) / ideal.abs() * S::lit(100.0))
    }
}

/// Share of technical flexibility removed by the envelopes, per direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct UnqualifiedFlex<S> {
    /// `sum(p_max - eps_max) / sum(p_max)` over upward bids, percent.
    pub up: Option<S>,
    /// `sum(|p_min - eps_min|) / sum(|p_min|)` over downward bids, percent.
    pub down: Option<S>,
}

/// Computes the unqualified share over `resources`, matching envelopes by id.
/// A direction without technical volume yields `None`.
pub fn unqualified_flex<S: Scalar>(
    resources: &[FlexResource<S>],
    envelopes: &[Envelope<S>],
) -> Result<UnqualifiedFlex<S>, MetricsError> {
    let (mut up_env, mut up_tech, mut down_env, mut down_tech) = (S::zero(), S::zero(), S::zero(), S::zero());
    for r in resources {
        let e = envelopes
            .iter()
            .find(|e| e.resource == r.id)
            .ok_or_else(|| MetricsError::MissingEnvelope(r.id.clone()))?;
        match r.direction {
            Direction::Upward => {
                up_env += r.p_max - e.eps_max;
                up_tech += r.p_max;
            }
            Direction::Downward => {
                down_env += (r.p_min - e.eps_min).abs();
                down_tech += r.p_min.abs();
            }
        }
    }
    let share = |cut: S, tech: S| (tech > S::zero()).then(|| cut / tech * S::lit(100.0));
    Ok(UnqualifiedFlex { up: share(up_env, up_tech), down: share(down_env, down_tech) })
}

/// Outcome of one market variant of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub regime: Regime,
    pub method: Option<OeMethod>,
    pub weight_rule: Option<WeightRule>,
    pub cost: f64,
    /// Inefficiency against the full-network clearing, percent.
    pub eta_pct: Option<f64>,
    pub violations_v: usize,
    pub violations_flow: usize,
    pub delta_u_pct: Option<f64>,
    pub delta_d_pct: Option<f64>,
}

impl VariantOutcome {
    /// Label used in result files: `no_dn`, `full_dn`, `oe_two_step`, `oe_one_step`.
    pub fn label(&self) -> String {
        variant_label(self.regime, self.method)
    }
}

pub fn variant_label(regime: Regime, method: Option<OeMethod>) -> String {
    match (regime, method) {
        (Regime::Oe, Some(m)) => format!("oe_{}", m.as_str()),
        (r, _) => r.as_str().to_string(),
    }
}

/// Per-instance record of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub instance_id: usize,
    /// Clearing without network constraints was already safe.
    pub discarded: bool,
    /// Reason the instance could not be evaluated, if any.
    pub failure: Option<String>,
    pub n_dn_resources: usize,
    /// Scenario draws needed to reach a safe base case.
    pub attempts: usize,
    pub variants: Vec<VariantOutcome>,
    /// Envelopes per OE variant: (method, rule, envelopes).
    #[serde(skip)]
    pub envelopes: Vec<(OeMethod, WeightRule, Vec<Envelope<f64>>)>,
}

impl InstanceReport {
    pub fn retained(&self) -> bool {
        !self.discarded && self.failure.is_none()
    }
}
