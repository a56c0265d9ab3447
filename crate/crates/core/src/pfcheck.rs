//! Linearised branch-flow power flow and distribution grid safety checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{DistributionNetwork, FlexResource, GridModel, NetworkId};
use crate::Scalar;

/// Default tolerance of [`count_violations`]: absolute on pu², relative on flow.
pub const VIOLATION_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PfError {
    #[error("resource {id} is not located in distribution network {dn}")]
    UnknownResource { id: String, dn: usize },
    #[error("{activations} activations for {resources} resources")]
    LengthMismatch { activations: usize, resources: usize },
}

/// Power flow solution of one distribution network, MW/MVAr and pu².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PfState<S> {
    pub v: Vec<S>,
    pub p_in: Vec<S>,
    pub q_in: Vec<S>,
    /// Per line, indexed like `dn.lines`, oriented parent to child.
    pub pf: Vec<S>,
    pub qf: Vec<S>,
    pub z: S,
    pub z_re: S,
}

/// Violation counts of one state. Voltage violations count buses, flow
/// violations count lines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ViolationReport<S> {
    pub n_voltage: usize,
    pub n_flow: usize,
    /// Largest distance outside the voltage band, pu² (zero if none).
    pub worst_voltage_dev: S,
    /// Largest `|S_f| / s_max` over lines.
    pub worst_flow_ratio: S,
}

impl<S: Scalar> ViolationReport<S> {
    pub fn zero() -> Self {
        Self { n_voltage: 0, n_flow: 0, worst_voltage_dev: S::zero(), worst_flow_ratio: S::zero() }
    }

    pub fn total(&self) -> usize {
        self.n_voltage + self.n_flow
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            n_voltage: self.n_voltage + other.n_voltage,
            n_flow: self.n_flow + other.n_flow,
            worst_voltage_dev: self.worst_voltage_dev.max(other.worst_voltage_dev),
            worst_flow_ratio: self.worst_flow_ratio.max(other.worst_flow_ratio),
        }
    }
}

/// Solves the linearised branch-flow equations of `dn` with `resources`
/// activated at `activations` (aligned, MW).
///
/// On a radial network the solution is unique: flows follow from a
/// leaves-to-root sweep of the flow balances, voltages from a root-to-leaves
/// sweep of the voltage-drop equations.
pub fn run_linear_pf<S: Scalar>(
    dn: &DistributionNetwork<S>,
    resources: &[FlexResource<S>],
    activations: &[S],
) -> Result<PfState<S>, PfError> {
    if resources.len() != activations.len() {
        return Err(PfError::LengthMismatch { activations: activations.len(), resources: resources.len() });
    }
    let n = dn.n_buses();
    let mut p_in = dn.injection.clone();
    let mut q_in = dn.injection_re.clone();
    for (r, &p) in resources.iter().zip(activations) {
        if r.network != NetworkId::Distribution(dn.id) || r.bus >= n {
            return Err(PfError::UnknownResource { id: r.id.clone(), dn: dn.id });
        }
        p_in[r.bus] += p;
        q_in[r.bus] += r.alpha * p;
    }

    let m = dn.lines.len();
    let mut pf = vec![S::zero(); m];
    let mut qf = vec![S::zero(); m];
    let (mut z, mut z_re) = (S::zero(), S::zero());
    for &i in dn.order().iter().rev() {
        let (mut sp, mut sq) = (S::zero(), S::zero());
        for &c in dn.children(i) {
            let k = dn.line_into(c).expect("child has a feeding line");
            sp += pf[k];
            sq += qf[k];
        }
        match dn.line_into(i) {
            Some(k) => {
                pf[k] = sp - p_in[i];
                qf[k] = sq - q_in[i];
            }
            None => {
                z = sp - p_in[i];
                z_re = sq - q_in[i];
            }
        }
    }

    let two = S::lit(2.0);
    let mut v = vec![S::zero(); n];
    v[dn.root] = dn.v0;
    for &i in dn.order() {
        if let Some(k) = dn.line_into(i) {
            let l = &dn.lines[k];
            v[i] = v[l.from] - two * (l.r * pf[k] + l.x * qf[k]) / dn.base_mva;
        }
    }
    Ok(PfState { v, p_in, q_in, pf, qf, z, z_re })
}

/// Counts buses outside `[v_min - tol, v_max + tol]` and lines with
/// `sqrt(P² + Q²) > s_max (1 + tol)`.
pub fn count_violations<S: Scalar>(state: &PfState<S>, dn: &DistributionNetwork<S>, tol: S) -> ViolationReport<S> {
    let mut rep = ViolationReport::<S>::zero();
    for (i, &v) in state.v.iter().enumerate() {
        let dev = (dn.v_min[i] - v).max(v - dn.v_max[i]).max(S::zero());
        rep.worst_voltage_dev = rep.worst_voltage_dev.max(dev);
        if v < dn.v_min[i] - tol || v > dn.v_max[i] + tol {
            rep.n_voltage += 1;
        }
    }
    for (k, l) in dn.lines.iter().enumerate() {
        let s = (state.pf[k] * state.pf[k] + state.qf[k] * state.qf[k]).sqrt();
        rep.worst_flow_ratio = rep.worst_flow_ratio.max(s / l.s_max);
        if s > l.s_max * (S::one() + tol) {
            rep.n_flow += 1;
        }
    }
    rep
}

/// Power flow and violations of every distribution network of `model` under
/// the market activations `cleared` (aligned with `model.resources`).
pub fn check_market<S: Scalar>(
    model: &GridModel<S>,
    cleared: &[S],
    tol: S,
) -> Result<Vec<(PfState<S>, ViolationReport<S>)>, PfError> {
    if cleared.len() != model.resources.len() {
        return Err(PfError::LengthMismatch { activations: cleared.len(), resources: model.resources.len() });
    }
    model
        .dns
        .iter()
        .map(|dn| {
            let idx = model.dn_resource_indices(dn.id);
            let rs: Vec<FlexResource<S>> = idx.iter().map(|&i| model.resources[i].clone()).collect();
            let act: Vec<S> = idx.iter().map(|&i| cleared[i]).collect();
            let st = run_linear_pf(dn, &rs, &act)?;
            let rep = count_violations(&st, dn, tol);
            Ok((st, rep))
        })
        .collect()
}

/// Summed violation counts over all distribution networks.
pub fn total_violations<S: Scalar>(model: &GridModel<S>, cleared: &[S], tol: S) -> Result<ViolationReport<S>, PfError> {
    Ok(check_market(model, cleared, tol)?
        .into_iter()
        .fold(ViolationReport::zero(), |acc, (_, r)| acc.merge(r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{DistributionNetworkData, DnLine};

    fn chain(n: usize, inj: f64) -> DistributionNetwork<f64> {
        DistributionNetwork::new(DistributionNetworkData {
            id: 0,
            name: "chain".into(),
            bus_ids: (1..=n as u32).collect(),
            injection: (0..n).map(|i| if i == 0 { 0.0 } else { inj }).collect(),
            injection_re: vec![0.0; n],
            root: 0,
            lines: (1..n).map(|i| DnLine { from: i - 1, to: i, r: 0.01, x: 0.02, s_max: 1.0 }).collect(),
            v0: 1.0,
            v_min: vec![0.9025; n],
            v_max: vec![1.1025; n],
            z_limit: 100.0,
            z_re_min: -100.0,
            z_re_max: 100.0,
            base_mva: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn two_bus_voltage_drop() {
        // R=0.01, X=0.02, load 0.05 + j0.02 pu on a 1 MVA base
        let mut dn = chain(2, -0.05);
        dn.injection_re[1] = -0.02;
        let st = run_linear_pf(&dn, &[], &[]).unwrap();
        assert!((st.pf[0] - 0.05).abs() < 1e-15 && (st.qf[0] - 0.02).abs() < 1e-15);
        assert!((st.v[1] - (1.0 - 2.0 * (0.01 * 0.05 + 0.02 * 0.02))).abs() < 1e-15);
        assert!((st.z - 0.05).abs() < 1e-15);
        assert_eq!(count_violations(&st, &dn, 1e-6).total(), 0);
    }

    #[test]
    fn chain_flows_accumulate() {
        let dn = chain(4, -0.1);
        let st = run_linear_pf(&dn, &[], &[]).unwrap();
        for (k, want) in [0.3, 0.2, 0.1].into_iter().enumerate() {
            assert!((st.pf[k] - want).abs() < 1e-12);
        }
        assert!((st.z - dn.z0()).abs() < 1e-12);
    }

    #[test]
    fn counts_overloads_and_undervoltage() {
        let dn = chain(3, -0.6);
        let st = run_linear_pf(&dn, &[], &[]).unwrap();
        let rep = count_violations(&st, &dn, 1e-6);
        // line 0 carries 1.2 MW over a 1 MVA rating
        assert_eq!(rep.n_flow, 1);
        assert!((rep.worst_flow_ratio - 1.2).abs() < 1e-12);
        let low = dn.with_voltage_bounds(0.99, 1.01);
        assert_eq!(count_violations(&st, &low, 1e-6).n_voltage, 2);
    }

    #[test]
    fn crafted_states() {
        let dn = chain(2, 0.0);
        let mut st = run_linear_pf(&dn, &[], &[]).unwrap();
        assert!(st.pf[0] == 0.0 && st.v.iter().all(|&v| v == 1.0));
        assert_eq!(count_violations(&st, &dn, 1e-6).total(), 0);
        st.v[1] = 0.89;
        assert_eq!(count_violations(&st, &dn, 1e-6).n_voltage, 1);
        st.v[1] = 1.0;
        st.pf[0] = 0.8;
        st.qf[0] = 0.8;
        let rep = count_violations(&st, &dn, 1e-6);
        assert_eq!(rep.n_flow, 1);
        assert!((rep.worst_flow_ratio - 0.8 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn activation_shifts_injection() {
        let dn = chain(2, -0.5);
        let r = FlexResource::upward("g", NetworkId::Distribution(0), 1, 1.0, 40.0, 0.5).unwrap();
        let st = run_linear_pf(&dn, std::slice::from_ref(&r), &[0.5]).unwrap();
        assert!(st.pf[0].abs() < 1e-15 && (st.qf[0] + 0.25).abs() < 1e-15);
        let foreign = FlexResource::upward("t", NetworkId::Transmission, 1, 1.0, 40.0, 0.5).unwrap();
        assert!(run_linear_pf(&dn, &[foreign], &[0.1]).is_err());
        assert!(run_linear_pf(&dn, std::slice::from_ref(&r), &[]).is_err());
    }
}
