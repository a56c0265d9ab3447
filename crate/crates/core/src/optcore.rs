//! Convex (LP/QP) problem assembly and the solver contract.
//!
//! Problems are built row by row from named scalar variables and handed to
//! the Clarabel interior-point solver. The network constraint builders in
//! this module are shared by the envelope calculations and the market
//! clearings.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{DistributionNetwork, FlexResource, NetworkId, PolygonApprox, TransmissionNetwork};
use crate::Scalar;

/// Feasibility tolerance an optimal point must meet (scaled per row).
pub const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("quadratic coefficient {coeff} of {var} is negative")]
    NonConvex { var: String, coeff: f64 },
    #[error("resource {id} does not belong to distribution network {dn}")]
    ForeignResource { id: String, dn: usize },
    #[error("no interface variable for distribution network {0}")]
    MissingInterface(usize),
    #[error("solver setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable<S> {
    pub name: String,
    pub lower: Option<S>,
    pub upper: Option<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row<S> {
    pub label: String,
    pub terms: Vec<(VarId, S)>,
    pub kind: RowKind,
    pub rhs: S,
}

impl<S: Scalar> Row<S> {
    fn activity(&self, x: &[S]) -> (S, S) {
        self.terms.iter().fold((S::zero(), S::zero()), |(a, m), &(v, c)| {
            let t = c * x[v.0];
            (a + t, m + t.abs())
        })
    }

    /// Constraint violation at `x` divided by `1 + max(|rhs|, sum |a_j x_j|)`.
    pub fn scaled_violation(&self, x: &[S]) -> S {
        let (act, mag) = self.activity(x);
        let raw = match self.kind {
            RowKind::Eq => (act - self.rhs).abs(),
            RowKind::Le => (act - self.rhs).max(S::zero()),
            RowKind::Ge => (self.rhs - act).max(S::zero()),
        };
        raw / (S::one() + self.rhs.abs().max(mag))
    }
}

/// Minimisation problem with linear rows, variable bounds and a separable
/// convex quadratic objective `sum c_j x_j + sum q_j (x_j - o_j)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProblem<S> {
    vars: Vec<Variable<S>>,
    linear: Vec<S>,
    quadratic: Vec<Option<(S, S)>>,
    rows: Vec<Row<S>>,
}

impl<S: Scalar> Default for ConvexProblem<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ConvexProblem<S> {
    pub fn new() -> Self {
        Self { vars: Vec::new(), linear: Vec::new(), quadratic: Vec::new(), rows: Vec::new() }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: Option<S>, upper: Option<S>) -> VarId {
        self.vars.push(Variable { name: name.into(), lower, upper });
        self.linear.push(S::zero());
        self.quadratic.push(None);
        VarId(self.vars.len() - 1)
    }

    pub fn add_free(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, None, None)
    }

    fn check(&self, v: VarId) {
        assert!(v.0 < self.vars.len(), "variable {} is not declared in this problem", v.0);
    }

    /// Intersects the bounds of `v` with `[lower, upper]`.
    pub fn tighten_bounds(&mut self, v: VarId, lower: Option<S>, upper: Option<S>) {
        self.check(v);
        let var = &mut self.vars[v.0];
        if let Some(l) = lower {
            var.lower = Some(var.lower.map_or(l, |cur| cur.max(l)));
        }
        if let Some(u) = upper {
            var.upper = Some(var.upper.map_or(u, |cur| cur.min(u)));
        }
    }

    pub fn set_bounds(&mut self, v: VarId, lower: Option<S>, upper: Option<S>) {
        self.check(v);
        self.vars[v.0].lower = lower;
        self.vars[v.0].upper = upper;
    }

    pub fn add_linear_cost(&mut self, v: VarId, c: S) {
        self.check(v);
        self.linear[v.0] += c;
    }

    /// Sets the term `coeff * (x - offset)^2` on `v`.
    pub fn set_quadratic_cost(&mut self, v: VarId, coeff: S, offset: S) -> Result<(), OptError> {
        self.check(v);
        if !(coeff >= S::zero()) {
            return Err(OptError::NonConvex { var: self.vars[v.0].name.clone(), coeff: coeff.as_f64() });
        }
        self.quadratic[v.0] = Some((coeff, offset));
        Ok(())
    }

    pub fn add_row(&mut self, label: impl Into<String>, terms: Vec<(VarId, S)>, kind: RowKind, rhs: S) {
        for &(v, _) in &terms {
            self.check(v);
        }
        self.rows.push(Row { label: label.into(), terms, kind, rhs });
    }

    pub fn add_eq(&mut self, label: impl Into<String>, terms: Vec<(VarId, S)>, rhs: S) {
        self.add_row(label, terms, RowKind::Eq, rhs);
    }

    pub fn add_le(&mut self, label: impl Into<String>, terms: Vec<(VarId, S)>, rhs: S) {
        self.add_row(label, terms, RowKind::Le, rhs);
    }

    pub fn add_ge(&mut self, label: impl Into<String>, terms: Vec<(VarId, S)>, rhs: S) {
        self.add_row(label, terms, RowKind::Ge, rhs);
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn vars(&self) -> &[Variable<S>] {
        &self.vars
    }

    pub fn rows(&self) -> &[Row<S>] {
        &self.rows
    }

    pub fn var(&self, v: VarId) -> &Variable<S> {
        &self.vars[v.0]
    }

    pub fn find_var(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn objective_at(&self, x: &[S]) -> S {
        let mut obj = S::zero();
        for (j, &xj) in x.iter().enumerate() {
            obj += self.linear[j] * xj;
            if let Some((q, o)) = self.quadratic[j] {
                obj += q * (xj - o) * (xj - o);
            }
        }
        obj
    }

    /// Largest scaled violation over rows and bounds.
    pub fn max_violation(&self, x: &[S]) -> S {
        let rows = self.rows.iter().map(|r| r.scaled_violation(x));
        let bounds = self.vars.iter().zip(x).map(|(v, &xj)| {
            let lo = v.lower.map_or(S::zero(), |l| (l - xj).max(S::zero()) / (S::one() + l.abs()));
            let hi = v.upper.map_or(S::zero(), |u| (xj - u).max(S::zero()) / (S::one() + u.abs()));
            lo.max(hi)
        });
        rows.chain(bounds).fold(S::zero(), |m, v| m.max(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult<S> {
    pub status: SolveStatus,
    pub values: Vec<S>,
    pub objective: S,
    pub iterations: u32,
}

impl<S: Scalar> SolveResult<S> {
    pub fn value(&self, v: VarId) -> S {
        self.values[v.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Solves `problem` with an interior-point method.
///
/// A result is reported optimal only if the returned point satisfies every
/// row and bound to [`FEAS_TOL`]; anything else that is not a certified
/// infeasibility or unboundedness is a numerical failure.
pub fn solve<S: Scalar>(problem: &ConvexProblem<S>) -> Result<SolveResult<S>, OptError> {
    let n = problem.vars.len();
    let two = S::lit(2.0);

    let mut q = problem.linear.clone();
    let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
    for (j, quad) in problem.quadratic.iter().enumerate() {
        if let Some((c, o)) = *quad {
            if c > S::zero() {
                pi.push(j);
                pj.push(j);
                pv.push(two * c);
                q[j] -= two * c * o;
            }
        }
    }
    let p_mat = CscMatrix::new_from_triplets(n, n, pi, pj, pv);

    // rows: equalities (zero cone) first, then inequalities as `a x <= b`
    let (mut ai, mut aj, mut av, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut push_row = |terms: &mut dyn Iterator<Item = (usize, S)>, rhs: S, b: &mut Vec<S>| {
        let r = b.len();
        for (j, c) in terms {
            ai.push(r);
            aj.push(j);
            av.push(c);
        }
        b.push(rhs);
    };
    for row in problem.rows.iter().filter(|r| r.kind == RowKind::Eq) {
        push_row(&mut row.terms.iter().map(|&(v, c)| (v.0, c)), row.rhs, &mut b);
    }
    let n_eq = b.len();
    for row in problem.rows.iter() {
        match row.kind {
            RowKind::Eq => {}
            RowKind::Le => push_row(&mut row.terms.iter().map(|&(v, c)| (v.0, c)), row.rhs, &mut b),
            RowKind::Ge => push_row(&mut row.terms.iter().map(|&(v, c)| (v.0, -c)), -row.rhs, &mut b),
        }
    }
    for (j, var) in problem.vars.iter().enumerate() {
        if let Some(u) = var.upper {
            push_row(&mut std::iter::once((j, S::one())), u, &mut b);
        }
        if let Some(l) = var.lower {
            push_row(&mut std::iter::once((j, -S::one())), -l, &mut b);
        }
    }
    if b.is_empty() {
        // the solver wants at least one row
        push_row(&mut std::iter::empty(), S::one(), &mut b);
    }
    let m = b.len();
    let a_mat = CscMatrix::new_from_triplets(m, n, ai, aj, av);
    let mut cones = Vec::new();
    if n_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(n_eq));
    }
    if m > n_eq {
        cones.push(SupportedConeT::NonnegativeConeT(m - n_eq));
    }

    let settings = DefaultSettings::<S> {
        verbose: false,
        max_iter: 200,
        tol_gap_abs: S::lit(1e-9),
        tol_gap_rel: S::lit(1e-9),
        tol_feas: S::lit(1e-9),
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &b, &cones, settings)
        .map_err(|e| OptError::Setup(e.to_string()))?;
    solver.solve();
    let sol = &solver.solution;
    let values = sol.x.clone();
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            if problem.max_violation(&values) <= S::lit(FEAS_TOL) {
                SolveStatus::Optimal
            } else {
                SolveStatus::NumericalFailure
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalFailure,
    };
    let objective = problem.objective_at(&values);
    Ok(SolveResult { status, values, objective, iterations: sol.iterations })
}

/// Variables created for one distribution network.
#[derive(Debug, Clone, PartialEq)]
pub struct DnHandles {
    /// Active activation of each resource, aligned with the `resources` argument.
    pub p: Vec<VarId>,
    pub p_in: Vec<VarId>,
    pub q_in: Vec<VarId>,
    pub v: Vec<VarId>,
    /// Per line, indexed like `dn.lines`.
    pub pf: Vec<VarId>,
    pub qf: Vec<VarId>,
    pub z: VarId,
    pub z_re: VarId,
}

/// Adds the linearised branch-flow constraint set of `dn`: nodal active and
/// reactive balances, tree flow balances, the squared-voltage recursion,
/// polygonal apparent-power limits, voltage bounds and reactive interface
/// bounds. Activations are created as free variables; callers impose the
/// resource bounds they need.
///
/// `polygon` provides the face normals; each line uses them with its own
/// limit `s_max`.
pub fn add_dn_constraint_set<S: Scalar>(
    problem: &mut ConvexProblem<S>,
    dn: &DistributionNetwork<S>,
    resources: &[FlexResource<S>],
    polygon: &PolygonApprox<S>,
) -> Result<DnHandles, OptError> {
    let n = dn.n_buses();
    for r in resources {
        if r.network != NetworkId::Distribution(dn.id) || r.bus >= n {
            return Err(OptError::ForeignResource { id: r.id.clone(), dn: dn.id });
        }
    }
    let tag = |what: &str, i: usize| format!("dn{}.{what}[{i}]", dn.id);
    let p: Vec<VarId> = resources.iter().map(|r| problem.add_free(format!("p[{}]", r.id))).collect();
    let p_in: Vec<VarId> = (0..n).map(|i| problem.add_free(tag("P_in", i))).collect();
    let q_in: Vec<VarId> = (0..n).map(|i| problem.add_free(tag("Q_in", i))).collect();
    let v: Vec<VarId> = (0..n)
        .map(|i| problem.add_var(tag("v", i), Some(dn.v_min[i]), Some(dn.v_max[i])))
        .collect();
    let pf: Vec<VarId> = (0..dn.lines.len()).map(|k| problem.add_free(tag("Pf", k))).collect();
    let qf: Vec<VarId> = (0..dn.lines.len()).map(|k| problem.add_free(tag("Qf", k))).collect();
    let z = problem.add_free(format!("dn{}.z", dn.id));
    let z_re = problem.add_var(format!("dn{}.z_re", dn.id), Some(dn.z_re_min), Some(dn.z_re_max));

    for i in 0..n {
        let mut act = vec![(p_in[i], S::one())];
        let mut react = vec![(q_in[i], S::one())];
        for (r, &pv) in resources.iter().zip(&p) {
            if r.bus == i {
                act.push((pv, -S::one()));
                react.push((pv, -r.alpha));
            }
        }
        problem.add_eq(tag("active_injection", i), act, dn.injection[i]);
        problem.add_eq(tag("reactive_injection", i), react, dn.injection_re[i]);

        let mut pbal = vec![(p_in[i], S::one())];
        let mut qbal = vec![(q_in[i], S::one())];
        for &c in dn.children(i) {
            let k = dn.line_into(c).expect("child has a feeding line");
            pbal.push((pf[k], -S::one()));
            qbal.push((qf[k], -S::one()));
        }
        match dn.line_into(i) {
            None => {
                pbal.push((z, S::one()));
                qbal.push((z_re, S::one()));
            }
            Some(k) => {
                pbal.push((pf[k], S::one()));
                qbal.push((qf[k], S::one()));
            }
        }
        problem.add_eq(tag("active_flow_balance", i), pbal, S::zero());
        problem.add_eq(tag("reactive_flow_balance", i), qbal, S::zero());
    }

    let two = S::lit(2.0);
    problem.add_eq(tag("voltage", dn.root), vec![(v[dn.root], S::one())], dn.v0);
    for (k, line) in dn.lines.iter().enumerate() {
        // v_i - v_parent + 2 (R P + X Q) / base = 0, powers in MW/MVAr
        problem.add_eq(
            tag("voltage", line.to),
            vec![
                (v[line.to], S::one()),
                (v[line.from], -S::one()),
                (pf[k], two * line.r / dn.base_mva),
                (qf[k], two * line.x / dn.base_mva),
            ],
            S::zero(),
        );
        for (f, &(ep, eq, es)) in polygon.rows.iter().enumerate() {
            problem.add_le(
                format!("dn{}.flow_limit[{k}][{f}]", dn.id),
                vec![(pf[k], ep), (qf[k], eq)],
                es * line.s_max,
            );
        }
    }
    Ok(DnHandles { p, p_in, q_in, v, pf, qf, z, z_re })
}

/// Bounds the active interface flow to `[-limit, limit]`.
pub fn add_interface_bound<S: Scalar>(problem: &mut ConvexProblem<S>, z: VarId, limit: S) {
    problem.tighten_bounds(z, Some(-limit), Some(limit));
}

/// Interface of one distribution network as seen from the transmission side.
#[derive(Debug, Clone, PartialEq)]
pub struct DnInterface<S> {
    pub dn: usize,
    pub z: VarId,
    pub z0: S,
    pub z_limit: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TnHandles {
    /// Net injection variable per transmission bus.
    pub phi: Vec<VarId>,
}

/// Adds the transmission-side market constraints: resource bounds, nodal
/// injections, PTDF flow limits on `phi - D z`, distribution aggregate
/// balances, interface limits and the system balance `1'(phi - D z) = 0`.
///
/// `resource_vars` must list every resource of the market with its variable.
pub fn add_tn_constraints<S: Scalar>(
    problem: &mut ConvexProblem<S>,
    tn: &TransmissionNetwork<S>,
    resource_vars: &[(&FlexResource<S>, VarId)],
    dn_interfaces: &[DnInterface<S>],
) -> Result<TnHandles, OptError> {
    let iface = |m: usize| dn_interfaces.iter().find(|d| d.dn == m);
    for m in 0..tn.dn_attach.len() {
        if iface(m).is_none() {
            return Err(OptError::MissingInterface(m));
        }
    }
    let nb = tn.n_buses();
    let phi: Vec<VarId> = (0..nb).map(|i| problem.add_free(format!("tn.phi[{i}]"))).collect();

    for (r, v) in resource_vars {
        problem.tighten_bounds(*v, Some(r.p_min), Some(r.p_max));
    }
    for i in 0..nb {
        let mut terms = vec![(phi[i], S::one())];
        terms.extend(
            resource_vars
                .iter()
                .filter(|(r, _)| r.network == NetworkId::Transmission && r.bus == i)
                .map(|(_, v)| (*v, -S::one())),
        );
        problem.add_eq(format!("tn.injection[{i}]"), terms, tn.injection[i]);
    }

    let mut attached: Vec<Vec<VarId>> = vec![Vec::new(); nb];
    for d in dn_interfaces {
        let bus = *tn.dn_attach.get(d.dn).ok_or(OptError::MissingInterface(d.dn))?;
        attached[bus].push(d.z);
    }
    let eps = S::lit(1e-14);
    for (l, line) in tn.lines.iter().enumerate() {
        let mut terms = Vec::new();
        for i in 0..nb {
            let c = tn.ptdf.get(l, i);
            if c.abs() <= eps {
                continue;
            }
            terms.push((phi[i], c));
            terms.extend(attached[i].iter().map(|&z| (z, -c)));
        }
        if terms.is_empty() {
            continue;
        }
        problem.add_le(format!("tn.flow_max[{l}]"), terms.clone(), line.limit);
        problem.add_ge(format!("tn.flow_min[{l}]"), terms, -line.limit);
    }

    for d in dn_interfaces {
        let mut terms = vec![(d.z, S::one())];
        for (r, v) in resource_vars {
            match r.network {
                NetworkId::Distribution(m) if m == d.dn => terms.push((*v, S::one())),
                NetworkId::Distribution(m) if iface(m).is_none() => {
                    return Err(OptError::MissingInterface(m))
                }
                _ => {}
            }
        }
        problem.add_eq(format!("dn{}.aggregate_balance", d.dn), terms, d.z0);
        add_interface_bound(problem, d.z, d.z_limit);
    }

    let mut balance: Vec<(VarId, S)> = phi.iter().map(|&p| (p, S::one())).collect();
    balance.extend(dn_interfaces.iter().map(|d| (d.z, -S::one())));
    problem.add_eq("tn.system_balance", balance, S::zero());
    Ok(TnHandles { phi })
}
