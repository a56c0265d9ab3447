//! Network and resource models.
//!
//! Transmission networks are meshed and described by a PTDF matrix; each
//! distribution network is radial and described by its parent map, line
//! impedances and operating bounds. Power quantities are stored in MW/MVAr;
//! impedances are per unit on the system base `base_mva`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::DenseLu;
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("bus {bus} cannot be reached from bus {from}")]
    Disconnected { bus: usize, from: usize },
    #[error("line {line} has non-positive reactance")]
    BadReactance { line: usize },
    #[error("bus index {bus} out of range ({n} buses)")]
    BusOutOfRange { bus: usize, n: usize },
    #[error("reduced susceptance matrix is singular")]
    Singular,
    #[error("invalid resource {id}: {reason}")]
    InvalidResource { id: String, reason: String },
    #[error("invalid network {name}: {reason}")]
    InvalidNetwork { name: String, reason: String },
    #[error("polygon needs at least 4 sides, got {0}")]
    TooFewSides(usize),
    #[error(transparent)]
    Radial(#[from] RadialError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RadialError {
    #[error("cycle through bus {bus}")]
    Cycle { bus: usize },
    #[error("bus {bus} is not reachable from the root")]
    Unreachable { bus: usize },
    #[error("multiple root buses: {roots:?}")]
    MultipleRoots { roots: Vec<usize> },
    #[error("no root bus")]
    NoRoot,
    #[error("bus {bus} out of range")]
    OutOfRange { bus: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Upward,
    Downward,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Upward => "upward",
            Direction::Downward => "downward",
        }
    }
}

/// Network a resource or bus belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkId {
    Transmission,
    Distribution(usize),
}

/// A single-block flexibility bid.
///
/// Upward bids span `[0, p_max]`, downward bids `[p_min, 0]`. `bus` is the
/// internal bus index inside `network`; quantities are in MW and `price` in
/// currency per MWh. `alpha` ties the reactive activation to the active one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct FlexResource<S> {
    pub id: String,
    pub network: NetworkId,
    pub bus: usize,
    pub direction: Direction,
    pub p_min: S,
    pub p_max: S,
    pub price: S,
    pub alpha: S,
}

impl<S: Scalar> FlexResource<S> {
    pub fn upward(
        id: impl Into<String>,
        network: NetworkId,
        bus: usize,
        p_max: S,
        price: S,
        alpha: S,
    ) -> Result<Self, ModelError> {
        let r = Self {
            id: id.into(),
            network,
            bus,
            direction: Direction::Upward,
            p_min: S::zero(),
            p_max,
            price,
            alpha,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn downward(
        id: impl Into<String>,
        network: NetworkId,
        bus: usize,
        p_min: S,
        price: S,
        alpha: S,
    ) -> Result<Self, ModelError> {
        let r = Self {
            id: id.into(),
            network,
            bus,
            direction: Direction::Downward,
            p_min,
            p_max: S::zero(),
            price,
            alpha,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| {
            Err(ModelError::InvalidResource { id: self.id.clone(), reason: reason.to_string() })
        };
        match self.direction {
            Direction::Upward if !(self.p_min == S::zero() && self.p_max > S::zero()) => {
                return bad("upward resource needs p_min = 0 < p_max");
            }
            Direction::Downward if !(self.p_max == S::zero() && self.p_min < S::zero()) => {
                return bad("downward resource needs p_min < 0 = p_max");
            }
            _ => {}
        }
        if !(self.price > S::zero()) || !self.price.is_finite() {
            return bad("price must be positive");
        }
        if !(self.alpha >= S::zero()) {
            return bad("alpha must be non-negative");
        }
        Ok(())
    }

    /// Technical volume, `max(p_max, -p_min)`.
    pub fn quantity(&self) -> S {
        self.p_max.max(-self.p_min)
    }

    pub fn is_upward(&self) -> bool {
        self.direction == Direction::Upward
    }
}

/// Dense PTDF matrix, `lines x buses`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Ptdf<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Ptdf<S> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, line: usize, bus: usize) -> S {
        self.data[line * self.cols + bus]
    }

    pub fn row(&self, line: usize) -> &[S] {
        &self.data[line * self.cols..(line + 1) * self.cols]
    }

    /// Line flows caused by the nodal injections `inj`.
    pub fn flows(&self, inj: &[S]) -> Vec<S> {
        (0..self.rows)
            .map(|l| self.row(l).iter().zip(inj).fold(S::zero(), |acc, (c, p)| acc + *c * *p))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TnLine<S> {
    pub from: usize,
    pub to: usize,
    /// Series reactance, per unit.
    pub reactance: S,
    /// Thermal limit in MW.
    pub limit: S,
}

/// Builds the PTDF matrix of a lossless DC network by inverting the nodal
/// susceptance matrix with the slack row and column removed.
///
/// Flows are oriented `from -> to`; the slack column is zero.
pub fn build_ptdf<S: Scalar>(
    n_buses: usize,
    lines: &[TnLine<S>],
    slack: usize,
) -> Result<Ptdf<S>, ModelError> {
    if slack >= n_buses {
        return Err(ModelError::BusOutOfRange { bus: slack, n: n_buses });
    }
    let mut adj = vec![Vec::new(); n_buses];
    for (k, l) in lines.iter().enumerate() {
        for b in [l.from, l.to] {
            if b >= n_buses {
                return Err(ModelError::BusOutOfRange { bus: b, n: n_buses });
            }
        }
        if !(l.reactance > S::zero()) {
            return Err(ModelError::BadReactance { line: k });
        }
        adj[l.from].push(l.to);
        adj[l.to].push(l.from);
    }
    let seen = bfs_reach(&adj, slack);
    if let Some(bus) = seen.iter().position(|s| !s) {
        return Err(ModelError::Disconnected { bus, from: slack });
    }

    // reduced index: skip the slack
    let red = |b: usize| if b < slack { Some(b) } else if b == slack { None } else { Some(b - 1) };
    let n = n_buses - 1;
    let mut b_red = vec![S::zero(); n * n];
    for l in lines {
        let y = S::one() / l.reactance;
        let (f, t) = (red(l.from), red(l.to));
        if let Some(f) = f {
            b_red[f * n + f] += y;
        }
        if let Some(t) = t {
            b_red[t * n + t] += y;
        }
        if let (Some(f), Some(t)) = (f, t) {
            b_red[f * n + t] -= y;
            b_red[t * n + f] -= y;
        }
    }
    let mut data = vec![S::zero(); lines.len() * n_buses];
    if n > 0 {
        let lu = DenseLu::new(n, b_red, S::lit(1e-12)).ok_or(ModelError::Singular)?;
        let mut unit = vec![S::zero(); n];
        for bus in 0..n_buses {
            let Some(k) = red(bus) else { continue };
            unit.iter_mut().for_each(|u| *u = S::zero());
            unit[k] = S::one();
            let theta = lu.solve(&unit);
            let angle = |b: usize| red(b).map_or(S::zero(), |i| theta[i]);
            for (li, l) in lines.iter().enumerate() {
                data[li * n_buses + bus] = (angle(l.from) - angle(l.to)) / l.reactance;
            }
        }
    }
    Ok(Ptdf { rows: lines.len(), cols: n_buses, data })
}

fn bfs_reach(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(b) = queue.pop_front() {
        for &nb in &adj[b] {
            if !seen[nb] {
                seen[nb] = true;
                queue.push_back(nb);
            }
        }
    }
    seen
}

/// Meshed transmission network with its PTDF and the attachment bus of each
/// distribution network (the selection matrix `D`, stored column-wise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TransmissionNetwork<S> {
    pub bus_ids: Vec<u32>,
    /// Base net injection per bus, MW.
    pub injection: Vec<S>,
    pub lines: Vec<TnLine<S>>,
    pub slack: usize,
    pub ptdf: Ptdf<S>,
    /// `dn_attach[m]` is the transmission bus distribution network `m` hangs off.
    pub dn_attach: Vec<usize>,
}

impl<S: Scalar> TransmissionNetwork<S> {
    pub fn new(
        bus_ids: Vec<u32>,
        injection: Vec<S>,
        lines: Vec<TnLine<S>>,
        slack: usize,
        dn_attach: Vec<usize>,
    ) -> Result<Self, ModelError> {
        let n = bus_ids.len();
        if injection.len() != n {
            return Err(ModelError::InvalidNetwork {
                name: "transmission".into(),
                reason: format!("{} injections for {} buses", injection.len(), n),
            });
        }
        if let Some(&bus) = dn_attach.iter().find(|&&b| b >= n) {
            return Err(ModelError::BusOutOfRange { bus, n });
        }
        let ptdf = build_ptdf(n, &lines, slack)?;
        Ok(Self { bus_ids, injection, lines, slack, ptdf, dn_attach })
    }

    pub fn n_buses(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn with_injections(&self, injection: Vec<S>) -> Self {
        assert_eq!(injection.len(), self.n_buses());
        Self { injection, ..self.clone() }
    }

    pub fn with_line_limits(&self, limits: &[S]) -> Self {
        let mut out = self.clone();
        for (l, &lim) in out.lines.iter_mut().zip(limits) {
            l.limit = lim;
        }
        out
    }
}

/// Line of a radial network, oriented parent -> child.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DnLine<S> {
    pub from: usize,
    pub to: usize,
    pub r: S,
    pub x: S,
    /// Apparent power limit, MVA.
    pub s_max: S,
}

/// Everything needed to build a [`DistributionNetwork`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DistributionNetworkData<S> {
    pub id: usize,
    pub name: String,
    pub bus_ids: Vec<u32>,
    pub injection: Vec<S>,
    pub injection_re: Vec<S>,
    pub root: usize,
    pub lines: Vec<DnLine<S>>,
    /// Squared root voltage, pu².
    pub v0: S,
    pub v_min: Vec<S>,
    pub v_max: Vec<S>,
    pub z_limit: S,
    pub z_re_min: S,
    pub z_re_max: S,
    pub base_mva: S,
}

/// Radial distribution network.
///
/// `v` values are squared voltage magnitudes. The interface flow `z` is the
/// active power imported from the transmission bus, so the pre-market value
/// is `z0 = -sum(injection)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DistributionNetwork<S> {
    pub id: usize,
    pub name: String,
    pub bus_ids: Vec<u32>,
    pub injection: Vec<S>,
    pub injection_re: Vec<S>,
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    pub lines: Vec<DnLine<S>>,
    pub v0: S,
    pub v_min: Vec<S>,
    pub v_max: Vec<S>,
    pub z_limit: S,
    pub z_re_min: S,
    pub z_re_max: S,
    pub base_mva: S,
    line_into: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl<S: Scalar> DistributionNetwork<S> {
    pub fn new(data: DistributionNetworkData<S>) -> Result<Self, ModelError> {
        let n = data.bus_ids.len();
        let bad = |reason: String| ModelError::InvalidNetwork { name: data.name.clone(), reason };
        for (what, len) in [
            ("injection", data.injection.len()),
            ("injection_re", data.injection_re.len()),
            ("v_min", data.v_min.len()),
            ("v_max", data.v_max.len()),
        ] {
            if len != n {
                return Err(bad(format!("{what} has {len} entries for {n} buses")));
            }
        }
        if data.root >= n {
            return Err(ModelError::BusOutOfRange { bus: data.root, n });
        }
        if data.lines.len() + 1 != n {
            return Err(bad(format!("{} lines for {} buses", data.lines.len(), n)));
        }
        let mut parent = vec![None; n];
        let mut line_into = vec![None; n];
        for (k, l) in data.lines.iter().enumerate() {
            if l.from >= n || l.to >= n {
                return Err(ModelError::BusOutOfRange { bus: l.from.max(l.to), n });
            }
            if parent[l.to].is_some() {
                return Err(bad(format!("bus {} has two parents", l.to)));
            }
            if !(l.s_max > S::zero()) {
                return Err(bad(format!("line {k} has non-positive limit")));
            }
            if l.r < S::zero() || l.x < S::zero() {
                return Err(bad(format!("line {k} has negative impedance")));
            }
            parent[l.to] = Some(l.from);
            line_into[l.to] = Some(k);
        }
        let topo = validate_radial(data.root, &parent)?;
        for i in 0..n {
            if !(data.v_min[i] < data.v_max[i]) {
                return Err(bad(format!("empty voltage band at bus {i}")));
            }
        }
        if !(data.z_limit > S::zero()) || !(data.z_re_min <= data.z_re_max) {
            return Err(bad("invalid interface bounds".into()));
        }
        Ok(Self {
            id: data.id,
            name: data.name,
            bus_ids: data.bus_ids,
            injection: data.injection,
            injection_re: data.injection_re,
            root: data.root,
            parent,
            lines: data.lines,
            v0: data.v0,
            v_min: data.v_min,
            v_max: data.v_max,
            z_limit: data.z_limit,
            z_re_min: data.z_re_min,
            z_re_max: data.z_re_max,
            base_mva: data.base_mva,
            line_into,
            children: topo.children,
            order: topo.order,
        })
    }

    pub fn n_buses(&self) -> usize {
        self.bus_ids.len()
    }

    /// Pre-market interface import, `-sum(e)`, MW.
    pub fn z0(&self) -> S {
        -self.injection.iter().fold(S::zero(), |a, &e| a + e)
    }

    /// Pre-market reactive import, MVAr.
    pub fn z0_re(&self) -> S {
        -self.injection_re.iter().fold(S::zero(), |a, &e| a + e)
    }

    /// Index of the line feeding `bus` (none for the root).
    pub fn line_into(&self, bus: usize) -> Option<usize> {
        self.line_into[bus]
    }

    pub fn children(&self, bus: usize) -> &[usize] {
        &self.children[bus]
    }

    /// Buses in root-first (pre-)order; every parent precedes its children.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Injection of `bus` in per unit of the system base.
    pub fn injection_pu(&self, bus: usize) -> S {
        self.injection[bus] / self.base_mva
    }

    pub fn with_injections(&self, injection: Vec<S>, injection_re: Vec<S>) -> Self {
        assert_eq!(injection.len(), self.n_buses());
        assert_eq!(injection_re.len(), self.n_buses());
        Self { injection, injection_re, ..self.clone() }
    }

    pub fn with_load_scale(&self, factor: S) -> Self {
        self.with_injections(
            self.injection.iter().map(|&e| e * factor).collect(),
            self.injection_re.iter().map(|&e| e * factor).collect(),
        )
    }

    pub fn with_line_limits(&self, limits: &[S]) -> Self {
        let mut out = self.clone();
        for (l, &lim) in out.lines.iter_mut().zip(limits) {
            l.s_max = lim;
        }
        out
    }

    pub fn with_voltage_bounds(&self, v_min: S, v_max: S) -> Self {
        let n = self.n_buses();
        Self { v_min: vec![v_min; n], v_max: vec![v_max; n], ..self.clone() }
    }

    pub fn with_interface_limits(&self, z_limit: S, z_re_min: S, z_re_max: S) -> Self {
        Self { z_limit, z_re_min, z_re_max, ..self.clone() }
    }
}

/// Children lists and a root-first visiting order of a validated tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadialTopology {
    pub children: Vec<Vec<usize>>,
    pub order: Vec<usize>,
}

/// Checks that `parent` describes a tree rooted at `root` that covers every bus.
pub fn validate_radial(root: usize, parent: &[Option<usize>]) -> Result<RadialTopology, RadialError> {
    let n = parent.len();
    if root >= n {
        return Err(RadialError::OutOfRange { bus: root });
    }
    if let Some(p) = parent[root] {
        // the root's parent chain necessarily loops back
        return Err(RadialError::Cycle { bus: p });
    }
    // 0 = unvisited, 1 = on current path, 2 = known to reach the root
    let mut state = vec![0u8; n];
    state[root] = 2;
    let mut path = Vec::new();
    for start in 0..n {
        let mut b = start;
        while state[b] == 0 {
            state[b] = 1;
            path.push(b);
            match parent[b] {
                Some(p) if p >= n => return Err(RadialError::OutOfRange { bus: p }),
                Some(p) => b = p,
                None => return Err(RadialError::Unreachable { bus: b }),
            }
        }
        if state[b] == 1 {
            return Err(RadialError::Cycle { bus: b });
        }
        for v in path.drain(..) {
            state[v] = 2;
        }
    }
    let mut children = vec![Vec::new(); n];
    for (b, p) in parent.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(b);
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![root];
    while let Some(b) = stack.pop() {
        order.push(b);
        stack.extend(children[b].iter().rev());
    }
    Ok(RadialTopology { children, order })
}

/// Orients an undirected edge list into a parent map rooted at the single
/// entry of `roots`.
pub fn tree_from_edges(
    n: usize,
    roots: &[usize],
    edges: &[(usize, usize)],
) -> Result<Vec<Option<usize>>, RadialError> {
    let root = match roots {
        [] => return Err(RadialError::NoRoot),
        [r] => *r,
        _ => return Err(RadialError::MultipleRoots { roots: roots.to_vec() }),
    };
    if root >= n {
        return Err(RadialError::OutOfRange { bus: root });
    }
    let mut adj = vec![Vec::new(); n];
    for (k, &(a, b)) in edges.iter().enumerate() {
        if a >= n || b >= n {
            return Err(RadialError::OutOfRange { bus: a.max(b) });
        }
        adj[a].push((b, k));
        adj[b].push((a, k));
    }
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    let mut used = vec![false; edges.len()];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(b) = queue.pop_front() {
        for &(nb, k) in &adj[b] {
            if used[k] {
                continue;
            }
            used[k] = true;
            if seen[nb] {
                return Err(RadialError::Cycle { bus: nb });
            }
            seen[nb] = true;
            parent[nb] = Some(b);
            queue.push_back(nb);
        }
    }
    if let Some(bus) = seen.iter().position(|s| !s) {
        // edges among unreachable buses may still hide a cycle; report reachability first
        return Err(RadialError::Unreachable { bus });
    }
    Ok(parent)
}

/// Regular polygon inscribed in the apparent power disk `P² + Q² <= S²`.
///
/// Each row `(ep, eq, es)` encodes `ep P + eq Q <= es S` with `(ep, eq)` a
/// unit normal; vertex `j` sits at angle `2πj/k`, so `(S, 0)` is a vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PolygonApprox<S> {
    pub rows: Vec<(S, S, S)>,
    pub sides: usize,
    pub limit: S,
}

pub fn make_polygon<S: Scalar>(sides: usize, limit: S) -> Result<PolygonApprox<S>, ModelError> {
    if sides < 4 {
        return Err(ModelError::TooFewSides(sides));
    }
    let k = S::from_usize(sides).unwrap();
    let half = S::PI() / k;
    let es = half.cos();
    let rows = (0..sides)
        .map(|j| {
            let theta = S::from_usize(2 * j + 1).unwrap() * half;
            (theta.cos(), theta.sin(), es)
        })
        .collect();
    Ok(PolygonApprox { rows, sides, limit })
}

impl<S: Scalar> PolygonApprox<S> {
    pub fn contains(&self, p: S, q: S) -> bool {
        self.contains_with_limit(p, q, self.limit)
    }

    pub fn contains_with_limit(&self, p: S, q: S, limit: S) -> bool {
        self.rows.iter().all(|&(ep, eq, es)| ep * p + eq * q <= es * limit)
    }

    pub fn vertices(&self) -> Vec<(S, S)> {
        let k = S::from_usize(self.sides).unwrap();
        (0..self.sides)
            .map(|j| {
                let a = S::from_usize(2 * j).unwrap() * S::PI() / k;
                (self.limit * a.cos(), self.limit * a.sin())
            })
            .collect()
    }
}

/// Transmission network, distribution networks and all flexibility bids of
/// one market instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GridModel<S> {
    pub tn: TransmissionNetwork<S>,
    pub dns: Vec<DistributionNetwork<S>>,
    pub resources: Vec<FlexResource<S>>,
}

impl<S: Scalar> GridModel<S> {
    pub fn new(
        tn: TransmissionNetwork<S>,
        dns: Vec<DistributionNetwork<S>>,
        resources: Vec<FlexResource<S>>,
    ) -> Result<Self, ModelError> {
        let model = Self { tn, dns, resources };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.tn.dn_attach.len() != self.dns.len() {
            return Err(ModelError::InvalidNetwork {
                name: "transmission".into(),
                reason: format!(
                    "{} attachments for {} distribution networks",
                    self.tn.dn_attach.len(),
                    self.dns.len()
                ),
            });
        }
        for (m, dn) in self.dns.iter().enumerate() {
            if dn.id != m {
                return Err(ModelError::InvalidNetwork {
                    name: dn.name.clone(),
                    reason: format!("id {} stored at position {}", dn.id, m),
                });
            }
        }
        let mut ids = std::collections::HashSet::new();
        for r in &self.resources {
            r.validate()?;
            if !ids.insert(r.id.as_str()) {
                return Err(ModelError::InvalidResource {
                    id: r.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
            let n = match r.network {
                NetworkId::Transmission => self.tn.n_buses(),
                NetworkId::Distribution(m) => match self.dns.get(m) {
                    Some(dn) => dn.n_buses(),
                    None => {
                        return Err(ModelError::InvalidResource {
                            id: r.id.clone(),
                            reason: format!("unknown distribution network {m}"),
                        })
                    }
                },
            };
            if r.bus >= n {
                return Err(ModelError::BusOutOfRange { bus: r.bus, n });
            }
        }
        Ok(())
    }

    /// Indices into `resources` of the bids located in distribution network `m`.
    pub fn dn_resource_indices(&self, m: usize) -> Vec<usize> {
        self.resources
            .iter()
            .enumerate()
            .filter(|(_, r)| r.network == NetworkId::Distribution(m))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn dn_resources(&self, m: usize) -> Vec<FlexResource<S>> {
        self.dn_resource_indices(m).into_iter().map(|i| self.resources[i].clone()).collect()
    }

    /// Net system injection before any activation: transmission injections
    /// minus all distribution imports. Flexibility has to cancel it.
    pub fn system_imbalance(&self) -> S {
        let tn = self.tn.injection.iter().fold(S::zero(), |a, &e| a + e);
        self.dns.iter().fold(tn, |a, dn| a - dn.z0())
    }
}
