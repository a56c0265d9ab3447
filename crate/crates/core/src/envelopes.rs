//! Operating envelopes.
//!
//! Each distribution operator turns its network model into a per-resource
//! interval `[eps_min, eps_max]` that the market may use without consulting
//! the network. Two methods are provided:
//!
//! * two-step: one LP maximising the weighted upward volume with every
//!   downward bid held at zero, then one LP minimising the weighted downward
//!   volume with every upward bid held at zero;
//! * one-step: a single QP pulling every bid towards its technical limit,
//!   weighted per resource, with all bids active at the same time.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{Direction, DistributionNetwork, FlexResource, PolygonApprox};
use crate::optcore::{self, add_dn_constraint_set, add_interface_bound, ConvexProblem, OptError, SolveStatus, FEAS_TOL};
use crate::Scalar;

/// Solver values this close to a technical limit (relative) are snapped onto it.
pub const SNAP_TOL: f64 = 1e-7;

/// One-step bids within this relative distance of their target are tried at the target.
pub const POLISH_TOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvelopeError {
    #[error("resource {id} has a non-positive price under the price rule")]
    NonPositivePrice { id: String },
    #[error("base case of distribution network {dn} is infeasible")]
    InfeasibleBaseCase { dn: usize },
    #[error("envelope problem of distribution network {dn} ended with status {status:?}")]
    Solver { dn: usize, status: SolveStatus },
    #[error("{0} weights for {1} resources")]
    WeightMismatch(usize, usize),
    #[error(transparent)]
    Opt(#[from] OptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    Equal,
    Price,
    Quantity,
}

impl WeightRule {
    pub const ALL: [WeightRule; 3] = [WeightRule::Equal, WeightRule::Price, WeightRule::Quantity];

    pub fn as_str(self) -> &'static str {
        match self {
            WeightRule::Equal => "equal",
            WeightRule::Price => "price",
            WeightRule::Quantity => "quantity",
        }
    }
}

impl fmt::Display for WeightRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equal" => Ok(WeightRule::Equal),
            "price" => Ok(WeightRule::Price),
            "quantity" => Ok(WeightRule::Quantity),
            _ => Err(format!("unknown weight rule '{s}' (expected equal, price or quantity)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OeMethod {
    TwoStep,
    OneStep,
}

impl OeMethod {
    pub const ALL: [OeMethod; 2] = [OeMethod::TwoStep, OeMethod::OneStep];

    pub fn as_str(self) -> &'static str {
        match self {
            OeMethod::TwoStep => "two_step",
            OeMethod::OneStep => "one_step",
        }
    }
}

impl fmt::Display for OeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OeMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "two-step" | "two_step" => Ok(OeMethod::TwoStep),
            "one-step" | "one_step" => Ok(OeMethod::OneStep),
            _ => Err(format!("unknown method '{s}' (expected two-step or one-step)")),
        }
    }
}

/// Feasible activation interval of one resource, MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Envelope<S> {
    pub resource: String,
    pub eps_min: S,
    pub eps_max: S,
}

impl<S: Scalar> Envelope<S> {
    /// Envelope equal to the technical limits of `r`.
    pub fn technical(r: &FlexResource<S>) -> Self {
        Self { resource: r.id.clone(), eps_min: r.p_min, eps_max: r.p_max }
    }

    pub fn contains(&self, p: S) -> bool {
        self.eps_min <= p && p <= self.eps_max
    }
}

/// Weights aligned with the resource slice they were computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct WeightAssignment<S> {
    pub rule: WeightRule,
    pub weights: Vec<S>,
}

impl<S: Scalar> WeightAssignment<S> {
    pub fn scaled(&self, factor: S) -> Self {
        Self { rule: self.rule, weights: self.weights.iter().map(|&w| w * factor).collect() }
    }
}

/// Weights of the resources of one distribution network.
///
/// The price rule normalises by the most expensive bid of the whole network
/// (both directions): downward bids get `c / c_max`, upward bids `c_max / c`.
/// The quantity rule uses the technical volume `max(p_max, -p_min)`.
pub fn weights<S: Scalar>(resources: &[FlexResource<S>], rule: WeightRule) -> Result<WeightAssignment<S>, EnvelopeError> {
    let weights = match rule {
        WeightRule::Equal => vec![S::one(); resources.len()],
        WeightRule::Quantity => resources.iter().map(|r| r.quantity()).collect(),
        WeightRule::Price => {
            if let Some(r) = resources.iter().find(|r| !(r.price > S::zero())) {
                return Err(EnvelopeError::NonPositivePrice { id: r.id.clone() });
            }
            let c_max = resources.iter().fold(S::zero(), |m, r| m.max(r.price));
            resources
                .iter()
                .map(|r| match r.direction {
                    Direction::Downward => r.price / c_max,
                    Direction::Upward => c_max / r.price,
                })
                .collect()
        }
    };
    Ok(WeightAssignment { rule, weights })
}

/// Clips `value` into `[lo, hi]` and snaps values within [`SNAP_TOL`] of an
/// end point onto it.
pub(crate) fn settle<S: Scalar>(value: S, lo: S, hi: S) -> S {
    let tol = S::lit(SNAP_TOL);
    let v = value.max(lo).min(hi);
    if (hi - v).abs() <= tol * (S::one() + hi.abs()) {
        hi
    } else if (v - lo).abs() <= tol * (S::one() + lo.abs()) {
        lo
    } else {
        v
    }
}

/// Result of the two LPs of the two-step method.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepOutcome<S> {
    pub envelopes: Vec<Envelope<S>>,
    /// Optimal `sum w p` over upward bids (step one), if any upward bid exists.
    pub upward_objective: Option<S>,
    /// Optimal `sum w p` over downward bids (step two), if any downward bid exists.
    pub downward_objective: Option<S>,
}

/// Two-step envelopes with the step objectives.
pub fn oe_two_step_detailed<S: Scalar>(
    dn: &DistributionNetwork<S>,
    resources: &[FlexResource<S>],
    weights: &WeightAssignment<S>,
    polygon: &PolygonApprox<S>,
) -> Result<TwoStepOutcome<S>, EnvelopeError> {
    if weights.weights.len() != resources.len() {
        return Err(EnvelopeError::WeightMismatch(weights.weights.len(), resources.len()));
    }
    let mut envelopes: Vec<Envelope<S>> = resources
        .iter()
        .map(|r| Envelope { resource: r.id.clone(), eps_min: S::zero(), eps_max: S::zero() })
        .collect();
    let mut objectives = [None, None];

    for (step, dir) in [Direction::Upward, Direction::Downward].into_iter().enumerate() {
        if !resources.iter().any(|r| r.direction == dir) {
            continue;
        }
        let mut problem = ConvexProblem::new();
        let h = add_dn_constraint_set(&mut problem, dn, resources, polygon)?;
        add_interface_bound(&mut problem, h.z, dn.z_limit);
        // step one: 0 <= p <= p_max, maximise; step two: p_min <= p <= 0, minimise
        let sign = if dir == Direction::Upward { -S::one() } else { S::one() };
        for ((r, &v), &w) in resources.iter().zip(&h.p).zip(&weights.weights) {
            match dir {
                Direction::Upward => problem.set_bounds(v, Some(S::zero()), Some(r.p_max)),
                Direction::Downward => problem.set_bounds(v, Some(r.p_min), Some(S::zero())),
            }
            problem.add_linear_cost(v, sign * w);
        }
        let sol = solve_dn(&problem, dn.id)?;
        let mut obj = S::zero();
        for ((r, &v), (env, &w)) in resources.iter().zip(&h.p).zip(envelopes.iter_mut().zip(&weights.weights)) {
            if r.direction != dir {
                continue;
            }
            let p = sol.value(v);
            obj += w * p;
            match dir {
                Direction::Upward => env.eps_max = settle(p, S::zero(), r.p_max),
                Direction::Downward => env.eps_min = settle(p, r.p_min, S::zero()),
            }
        }
        objectives[step] = Some(obj);
    }
    Ok(TwoStepOutcome { envelopes, upward_objective: objectives[0], downward_objective: objectives[1] })
}

/// Two-step envelopes, aligned with `resources`.
pub fn oe_two_step<S: Scalar>(
    dn: &DistributionNetwork<S>,
    resources: &[FlexResource<S>],
    weights: &WeightAssignment<S>,
    polygon: &PolygonApprox<S>,
) -> Result<Vec<Envelope<S>>, EnvelopeError> {
    oe_two_step_detailed(dn, resources, weights, polygon).map(|o| o.envelopes)
}

/// One-step envelopes, aligned with `resources`.
pub fn oe_one_step<S: Scalar>(
    dn: &DistributionNetwork<S>,
    resources: &[FlexResource<S>],
    weights: &WeightAssignment<S>,
    polygon: &PolygonApprox<S>,
) -> Result<Vec<Envelope<S>>, EnvelopeError> {
    if weights.weights.len() != resources.len() {
        return Err(EnvelopeError::WeightMismatch(weights.weights.len(), resources.len()));
    }
    if resources.is_empty() {
        return Ok(Vec::new());
    }
    let mut problem = ConvexProblem::new();
    let h = add_dn_constraint_set(&mut problem, dn, resources, polygon)?;
    add_interface_bound(&mut problem, h.z, dn.z_limit);
    for ((r, &v), &w) in resources.iter().zip(&h.p).zip(&weights.weights) {
        problem.set_bounds(v, Some(r.p_min), Some(r.p_max));
        let target = match r.direction {
            Direction::Upward => r.p_max,
            Direction::Downward => r.p_min,
        };
        problem.set_quadratic_cost(v, w, target)?;
    }
    let mut sol = solve_dn(&problem, dn.id)?;

    // A bid whose optimum sits on its target has a zero gradient there, which
    // slows interior-point convergence to ~sqrt(tol). Fix near-target bids and
    // keep the result if it is feasible and no worse.
    let mut polished = problem.clone();
    let mut any = false;
    for (r, &v) in resources.iter().zip(&h.p) {
        let target = if r.is_upward() { r.p_max } else { r.p_min };
        if (sol.value(v) - target).abs() <= S::lit(POLISH_TOL) * (S::one() + target.abs()) {
            polished.set_bounds(v, Some(target), Some(target));
            any = true;
        }
    }
    if any {
        if let Ok(alt) = optcore::solve(&polished) {
            let slack = S::lit(FEAS_TOL) * (S::one() + sol.objective.abs());
            if alt.is_optimal() && alt.objective <= sol.objective + slack {
                sol = alt;
            }
        }
    }
    Ok(resources
        .iter()
        .zip(&h.p)
        .map(|(r, &v)| {
            let p = sol.value(v);
            match r.direction {
                Direction::Upward => {
                    Envelope { resource: r.id.clone(), eps_min: S::zero(), eps_max: settle(p, S::zero(), r.p_max) }
                }
                Direction::Downward => {
                    Envelope { resource: r.id.clone(), eps_min: settle(p, r.p_min, S::zero()), eps_max: S::zero() }
                }
            }
        })
        .collect())
}

/// Dispatches on `method`.
pub fn compute_envelopes<S: Scalar>(
    method: OeMethod,
    dn: &DistributionNetwork<S>,
    resources: &[FlexResource<S>],
    weights: &WeightAssignment<S>,
    polygon: &PolygonApprox<S>,
) -> Result<Vec<Envelope<S>>, EnvelopeError> {
    match method {
        OeMethod::TwoStep => oe_two_step(dn, resources, weights, polygon),
        OeMethod::OneStep => oe_one_step(dn, resources, weights, polygon),
    }
}

fn solve_dn<S: Scalar>(problem: &ConvexProblem<S>, dn: usize) -> Result<optcore::SolveResult<S>, EnvelopeError> {
    let sol = optcore::solve(problem)?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol),
        SolveStatus::Infeasible => Err(EnvelopeError::InfeasibleBaseCase { dn }),
        status => Err(EnvelopeError::Solver { dn, status }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{make_polygon, DistributionNetworkData, DnLine, NetworkId};
    use crate::pfcheck::{count_violations, run_linear_pf};

    fn up(id: &str, bus: usize, p_max: f64, price: f64, alpha: f64) -> FlexResource<f64> {
        FlexResource::upward(id, NetworkId::Distribution(0), bus, p_max, price, alpha).unwrap()
    }

    fn down(id: &str, bus: usize, p_min: f64, price: f64) -> FlexResource<f64> {
        FlexResource::downward(id, NetworkId::Distribution(0), bus, p_min, price, 0.0).unwrap()
    }

    fn feeder(s_max: f64, z_limit: f64) -> DistributionNetwork<f64> {
        DistributionNetwork::new(DistributionNetworkData {
            id: 0,
            name: "feeder".into(),
            bus_ids: vec![1, 2],
            injection: vec![0.0, 0.0],
            injection_re: vec![0.0, 0.0],
            root: 0,
            lines: vec![DnLine { from: 0, to: 1, r: 0.001, x: 0.001, s_max }],
            v0: 1.0,
            v_min: vec![0.81, 0.81],
            v_max: vec![1.21, 1.21],
            z_limit,
            z_re_min: -100.0,
            z_re_max: 100.0,
            base_mva: 100.0,
        })
        .unwrap()
    }

    #[test]
    fn weight_rules() {
        let ds = [down("a", 1, -1.0, 14.0), down("b", 1, -1.0, 34.0)];
        let w = weights(&ds, WeightRule::Price).unwrap().weights;
        assert!((w[0] - 14.0 / 34.0).abs() < 1e-15 && w[1] == 1.0);

        let mixed = [up("a", 1, 1.0, 40.0, 0.0), up("b", 1, 3.0, 50.0, 0.0), down("c", 1, -2.0, 20.0)];
        assert_eq!(weights(&mixed, WeightRule::Quantity).unwrap().weights, vec![1.0, 3.0, 2.0]);
        assert_eq!(weights(&mixed, WeightRule::Equal).unwrap().weights, vec![1.0; 3]);
        // upward weights use the maximum over both directions
        let w = weights(&mixed, WeightRule::Price).unwrap().weights;
        assert!((w[0] - 50.0 / 40.0).abs() < 1e-15 && w[1] == 1.0 && (w[2] - 0.4).abs() < 1e-15);

        let mut bad = up("z", 1, 1.0, 40.0, 0.0);
        bad.price = 0.0;
        assert!(matches!(weights(&[bad], WeightRule::Price), Err(EnvelopeError::NonPositivePrice { .. })));
    }

    #[test]
    fn light_feeder_gets_technical_limits() {
        let dn = feeder(100.0, 100.0);
        let rs = [up("u", 1, 2.0, 40.0, 0.33), down("d", 1, -3.0, 20.0)];
        let poly = make_polygon(12, 1.0).unwrap();
        for rule in WeightRule::ALL {
            let w = weights(&rs, rule).unwrap();
            for method in OeMethod::ALL {
                let env = compute_envelopes(method, &dn, &rs, &w, &poly).unwrap();
                assert_eq!(env[0], Envelope { resource: "u".into(), eps_min: 0.0, eps_max: 2.0 });
                assert_eq!(env[1], Envelope { resource: "d".into(), eps_min: -3.0, eps_max: 0.0 });
            }
        }
    }

    /// Largest activation of a single resource that keeps the feeder safe,
    /// found by bisection on the power flow check.
    fn bisect_hosting(dn: &DistributionNetwork<f64>, r: &FlexResource<f64>, poly_sides: usize) -> f64 {
        let safe = |p: f64| {
            let st = run_linear_pf(dn, std::slice::from_ref(r), &[p]).unwrap();
            let rep = count_violations(&st, dn, 0.0);
            let in_poly = dn.lines.iter().enumerate().all(|(k, l)| {
                make_polygon(poly_sides, l.s_max).unwrap().contains(st.pf[k], st.qf[k])
            });
            rep.n_voltage == 0 && in_poly && st.z.abs() <= dn.z_limit
        };
        let (mut lo, mut hi) = (0.0, r.p_max);
        if safe(hi) {
            return hi;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if safe(mid) {
                lo = mid
            } else {
                hi = mid
            }
        }
        lo
    }

    #[test]
    fn two_step_matches_bisection_on_line_limit() {
        let dn = feeder(4.0, 100.0);
        let r = up("u", 1, 10.0, 40.0, 0.0);
        let oracle = bisect_hosting(&dn, &r, 12);
        assert!((oracle - 4.0).abs() < 1e-9);
        let w = weights(std::slice::from_ref(&r), WeightRule::Equal).unwrap();
        let env = oe_two_step(&dn, std::slice::from_ref(&r), &w, &make_polygon(12, 1.0).unwrap()).unwrap();
        assert!((env[0].eps_max - oracle).abs() < 1e-6, "{:?}", env);
        assert_eq!(env[0].eps_min, 0.0);
    }

    #[test]
    fn two_step_matches_bisection_on_interface_limit() {
        let dn = feeder(100.0, 4.0);
        let r = up("u", 1, 10.0, 40.0, 0.33);
        let oracle = bisect_hosting(&dn, &r, 12);
        let w = weights(std::slice::from_ref(&r), WeightRule::Equal).unwrap();
        let env = oe_two_step(&dn, std::slice::from_ref(&r), &w, &make_polygon(12, 1.0).unwrap()).unwrap();
        assert!((env[0].eps_max - oracle).abs() < 1e-6);
    }

    #[test]
    fn no_resources_no_envelopes() {
        let dn = feeder(1.0, 1.0);
        let w = weights::<f64>(&[], WeightRule::Equal).unwrap();
        let poly = make_polygon(12, 1.0).unwrap();
        assert!(oe_two_step(&dn, &[], &w, &poly).unwrap().is_empty());
        assert!(oe_one_step(&dn, &[], &w, &poly).unwrap().is_empty());
    }

    #[test]
    fn one_step_symmetric_split() {
        // both bids at the same bus; the interface caps their sum at 8
        let dn = feeder(100.0, 8.0);
        let rs = [up("a", 1, 6.0, 40.0, 0.0), up("b", 1, 6.0, 40.0, 0.0)];
        let poly = make_polygon(12, 1.0).unwrap();
        let env = oe_one_step(&dn, &rs, &weights(&rs, WeightRule::Equal).unwrap(), &poly).unwrap();
        assert!((env[0].eps_max - 4.0).abs() < 1e-6 && (env[1].eps_max - 4.0).abs() < 1e-6, "{env:?}");
    }

    #[test]
    fn one_step_weighted_split_matches_kkt() {
        // KKT of min w1 (p1-6)^2 + w2 (p2-6)^2 s.t. p1 + p2 = 8:
        // p_i = 6 - lambda / (2 w_i), lambda = 2 * (12 - 8) / (1/w1 + 1/w2)
        let (w1, w2) = (1.0, 3.0);
        let lambda: f64 = 2.0 * 4.0 / (1.0 / w1 + 1.0 / w2);
        let (p1, p2) = (6.0 - lambda / (2.0 * w1), 6.0 - lambda / (2.0 * w2));
        assert!((p1 - 3.0).abs() < 1e-12 && (p2 - 5.0).abs() < 1e-12);

        let dn = feeder(100.0, 8.0);
        let rs = [up("a", 1, 6.0, 40.0, 0.0), up("b", 1, 6.0, 40.0, 0.0)];
        let w = WeightAssignment { rule: WeightRule::Equal, weights: vec![w1, w2] };
        let env = oe_one_step(&dn, &rs, &w, &make_polygon(12, 1.0).unwrap()).unwrap();
        assert!((env[0].eps_max - p1).abs() < 1e-6 && (env[1].eps_max - p2).abs() < 1e-6, "{env:?}");
        assert!(env[1].eps_max > env[0].eps_max);
    }

    #[test]
    fn one_step_lets_opposite_bids_cancel() {
        // a co-located up/down pair offsets itself in the joint problem
        let dn = feeder(1.0, 100.0);
        let rs = [up("u", 1, 3.0, 40.0, 0.0), down("d", 1, -3.0, 20.0)];
        let poly = make_polygon(12, 1.0).unwrap();
        let w = weights(&rs, WeightRule::Equal).unwrap();
        let one = oe_one_step(&dn, &rs, &w, &poly).unwrap();
        assert_eq!((one[0].eps_max, one[1].eps_min), (3.0, -3.0));
        let two = oe_two_step(&dn, &rs, &w, &poly).unwrap();
        assert!((two[0].eps_max - 1.0).abs() < 1e-6 && (two[1].eps_min + 1.0).abs() < 1e-6, "{two:?}");
    }

    #[test]
    fn infeasible_base_case_is_reported() {
        let mut dn = feeder(100.0, 100.0);
        dn.injection[1] = -500.0; // voltage collapses below the band
        let rs = [up("u", 1, 1.0, 40.0, 0.0)];
        let w = weights(&rs, WeightRule::Equal).unwrap();
        let poly = make_polygon(12, 1.0).unwrap();
        assert_eq!(
            oe_two_step(&dn, &rs, &w, &poly).unwrap_err(),
            EnvelopeError::InfeasibleBaseCase { dn: 0 }
        );
    }

    #[test]
    fn settle_snaps_and_clips() {
        assert_eq!(settle(2.0 - 1e-9, 0.0, 2.0), 2.0);
        assert_eq!(settle(2.1, 0.0, 2.0), 2.0);
        assert_eq!(settle(1e-10, 0.0, 2.0), 0.0);
        assert_eq!(settle(1.0, 0.0, 2.0), 1.0);
    }
}
