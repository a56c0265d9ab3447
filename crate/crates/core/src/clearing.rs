//! Balancing market clearing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelopes::Envelope;
use crate::netmodel::{GridModel, NetworkId, PolygonApprox};
use crate::optcore::{self, add_dn_constraint_set, add_tn_constraints, ConvexProblem, DnInterface, OptError, SolveStatus, VarId};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Transmission constraints only.
    NoDn,
    /// Full linearised distribution constraints.
    FullDn,
    /// Distribution bids boxed by operating envelopes.
    Oe,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::NoDn => "no_dn",
            Regime::FullDn => "full_dn",
            Regime::Oe => "oe",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_dn" | "no-dn" => Ok(Regime::NoDn),
            "full_dn" | "full-dn" => Ok(Regime::FullDn),
            "oe" => Ok(Regime::Oe),
            _ => Err(format!("unknown regime '{s}' (expected no_dn, full_dn or oe)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClearingError {
    #[error("market is infeasible")]
    Infeasible,
    #[error("market solve ended with status {0:?}")]
    Solver(SolveStatus),
    #[error("no envelope for distribution resource {0}")]
    MissingEnvelope(String),
    #[error(transparent)]
    Opt(#[from] OptError),
}

/// Cleared market, activations aligned with `GridModel::resources`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MarketSolution<S> {
    pub regime: Regime,
    pub resource_ids: Vec<String>,
    pub cleared: Vec<S>,
    /// Interface import per distribution network after activation, MW.
    pub interface: Vec<S>,
    /// Net injection per transmission bus, MW.
    pub tn_injections: Vec<S>,
    /// `sum(price * p)`.
    pub cost: S,
    pub status: SolveStatus,
}

enum DnMode<'a, S> {
    Ignore,
    Full(&'a PolygonApprox<S>),
    Boxes(&'a [Envelope<S>]),
}

/// Clears against transmission constraints only.
pub fn clear_no_dn<S: Scalar>(model: &GridModel<S>) -> Result<MarketSolution<S>, ClearingError> {
    clear(model, Regime::NoDn, DnMode::Ignore)
}

/// Clears with every distribution network's constraint set embedded.
pub fn clear_full_dn<S: Scalar>(model: &GridModel<S>, polygon: &PolygonApprox<S>) -> Result<MarketSolution<S>, ClearingError> {
    clear(model, Regime::FullDn, DnMode::Full(polygon))
}

/// Clears with distribution bids restricted to `envelopes` (matched by id).
pub fn clear_oe<S: Scalar>(model: &GridModel<S>, envelopes: &[Envelope<S>]) -> Result<MarketSolution<S>, ClearingError> {
    clear(model, Regime::Oe, DnMode::Boxes(envelopes))
}

fn clear<S: Scalar>(model: &GridModel<S>, regime: Regime, mode: DnMode<'_, S>) -> Result<MarketSolution<S>, ClearingError> {
    let mut problem = ConvexProblem::new();
    let mut vars: Vec<Option<VarId>> = vec![None; model.resources.len()];
    let mut interfaces = Vec::with_capacity(model.dns.len());

    for dn in &model.dns {
        let idx = model.dn_resource_indices(dn.id);
        let z = match mode {
            DnMode::Full(poly) => {
                let rs: Vec<_> = idx.iter().map(|&i| model.resources[i].clone()).collect();
                let h = add_dn_constraint_set(&mut problem, dn, &rs, poly)?;
                for (&i, v) in idx.iter().zip(h.p) {
                    vars[i] = Some(v);
                }
                h.z
            }
            _ => problem.add_free(format!("dn{}.z", dn.id)),
        };
        interfaces.push(DnInterface { dn: dn.id, z, z0: dn.z0(), z_limit: dn.z_limit });
    }
    for (i, r) in model.resources.iter().enumerate() {
        let v = *vars[i].get_or_insert_with(|| problem.add_free(format!("p[{}]", r.id)));
        if let (DnMode::Boxes(envs), NetworkId::Distribution(_)) = (&mode, r.network) {
            let e = envs
                .iter()
                .find(|e| e.resource == r.id)
                .ok_or_else(|| ClearingError::MissingEnvelope(r.id.clone()))?;
            problem.tighten_bounds(v, Some(e.eps_min), Some(e.eps_max));
        }
        problem.add_linear_cost(v, r.price);
    }
    let vars: Vec<VarId> = vars.into_iter().map(|v| v.expect("every resource has a variable")).collect();
    let pairs: Vec<_> = model.resources.iter().zip(vars.iter().copied()).collect();
    let tn = add_tn_constraints(&mut problem, &model.tn, &pairs, &interfaces)?;

    let sol = optcore::solve(&problem)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(ClearingError::Infeasible),
        s => return Err(ClearingError::Solver(s)),
    }

    // clip solver noise back into the admissible boxes
    let cleared: Vec<S> = model
        .resources
        .iter()
        .zip(&vars)
        .map(|(r, &v)| {
            let (mut lo, mut hi) = (r.p_min, r.p_max);
            if let (DnMode::Boxes(envs), NetworkId::Distribution(_)) = (&mode, r.network) {
                if let Some(e) = envs.iter().find(|e| e.resource == r.id) {
                    lo = lo.max(e.eps_min);
                    hi = hi.min(e.eps_max);
                }
            }
            sol.value(v).max(lo).min(hi)
        })
        .collect();
    let interface = model
        .dns
        .iter()
        .map(|dn| {
            model
                .dn_resource_indices(dn.id)
                .into_iter()
                .fold(dn.z0(), |z, i| z - cleared[i])
        })
        .collect();
    let cost = model.resources.iter().zip(&cleared).fold(S::zero(), |c, (r, &p)| c + r.price * p);
    Ok(MarketSolution {
        regime,
        resource_ids: model.resources.iter().map(|r| r.id.clone()).collect(),
        cleared,
        interface,
        tn_injections: tn.phi.iter().map(|&v| sol.value(v)).collect(),
        cost,
        status: sol.status,
    })
}
