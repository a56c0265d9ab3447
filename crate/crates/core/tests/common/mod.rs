//! Independent reference implementations shared by the integration tests and
//! the acceptance suite. Nothing here calls into the solver or the power flow
//! under test.
#![allow(dead_code)]

use oeflex::netmodel::{DistributionNetwork, DistributionNetworkData, DnLine, FlexResource, NetworkId};
use rand::seq::SliceRandom;
use rand::Rng;

/// Settings of [`random_radial`].
#[derive(Debug, Clone, Copy)]
pub struct RadialSpec {
    pub n: usize,
    /// Line rating, MVA.
    pub s_max: f64,
    pub v_bounds: (f64, f64),
    pub z_limit: f64,
}

impl RadialSpec {
    pub fn loose(n: usize) -> Self {
        Self { n, s_max: 1e4, v_bounds: (0.01, 100.0), z_limit: 1e4 }
    }
}

/// Random radial feeder with shuffled bus labels and a random root.
pub fn random_radial<R: Rng>(rng: &mut R, spec: RadialSpec) -> DistributionNetwork<f64> {
    let n = spec.n;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let root = perm[0];
    let mut lines = Vec::new();
    for k in 1..n {
        let parent = perm[rng.random_range(0..k)];
        lines.push(DnLine {
            from: parent,
            to: perm[k],
            r: rng.random_range(0.001..0.05),
            x: rng.random_range(0.001..0.05),
            s_max: spec.s_max,
        });
    }
    lines.shuffle(rng);
    let injection: Vec<f64> = (0..n).map(|i| if i == root { 0.0 } else { rng.random_range(-0.3..0.1) }).collect();
    let injection_re: Vec<f64> = (0..n).map(|i| if i == root { 0.0 } else { rng.random_range(-0.15..0.05) }).collect();
    DistributionNetwork::new(DistributionNetworkData {
        id: 0,
        name: "random".into(),
        bus_ids: (1..=n as u32).collect(),
        injection,
        injection_re,
        root,
        lines,
        v0: 1.0,
        v_min: vec![spec.v_bounds.0; n],
        v_max: vec![spec.v_bounds.1; n],
        z_limit: spec.z_limit,
        z_re_min: -spec.z_limit,
        z_re_max: spec.z_limit,
        base_mva: 10.0,
    })
    .expect("valid random feeder")
}

/// Random bids on non-root buses: `pairs` co-located up/down pairs and `gens` upward bids.
pub fn random_resources<R: Rng>(rng: &mut R, dn: &DistributionNetwork<f64>, pairs: usize, gens: usize, qmax: f64) -> Vec<FlexResource<f64>> {
    let buses: Vec<usize> = (0..dn.n_buses()).filter(|&b| b != dn.root).collect();
    let net = NetworkId::Distribution(dn.id);
    let mut out = Vec::new();
    for k in 0..pairs {
        let bus = buses[rng.random_range(0..buses.len())];
        let q = rng.random_range(0.01..qmax);
        out.push(FlexResource::upward(format!("u{k}"), net, bus, q, rng.random_range(35.0..55.0), 0.33).unwrap());
        out.push(FlexResource::downward(format!("d{k}"), net, bus, -q, rng.random_range(14.0..34.0), 0.33).unwrap());
    }
    for k in 0..gens {
        let bus = buses[rng.random_range(0..buses.len())];
        let q = rng.random_range(0.01..qmax);
        out.push(FlexResource::upward(format!("g{k}"), net, bus, q, rng.random_range(35.0..55.0), 0.0).unwrap());
    }
    out
}

/// Power flow by explicit path walks: the flow into bus `b` is the negated
/// injection total of every bus whose path to the root passes through `b`,
/// and the squared voltage drops along the root path.
pub struct PathOracle {
    pub v: Vec<f64>,
    /// Flow into each bus from its parent (zero at the root).
    pub p_into: Vec<f64>,
    pub q_into: Vec<f64>,
    pub z: f64,
}

pub fn path_oracle(dn: &DistributionNetwork<f64>, p_in: &[f64], q_in: &[f64]) -> PathOracle {
    let n = dn.n_buses();
    let mut parent = vec![None; n];
    let mut line_of = vec![None; n];
    for (k, l) in dn.lines.iter().enumerate() {
        parent[l.to] = Some(l.from);
        line_of[l.to] = Some(k);
    }
    let path = |mut b: usize| {
        let mut p = vec![b];
        while let Some(a) = parent[b] {
            p.push(a);
            b = a;
        }
        p
    };
    let mut p_into = vec![0.0; n];
    let mut q_into = vec![0.0; n];
    for b in 0..n {
        for &a in &path(b) {
            if a != dn.root {
                p_into[a] -= p_in[b];
                q_into[a] -= q_in[b];
            }
        }
    }
    let mut v = vec![0.0; n];
    for b in 0..n {
        let mut drop = 0.0;
        for &a in &path(b) {
            if let Some(k) = line_of[a] {
                let l = &dn.lines[k];
                drop += 2.0 * (l.r * p_into[a] + l.x * q_into[a]) / dn.base_mva;
            }
        }
        v[b] = dn.v0 - drop;
    }
    PathOracle { v, p_into, q_into, z: -p_in.iter().sum::<f64>() }
}

/// Nodal injections after activating `resources` at `p`.
pub fn injections(dn: &DistributionNetwork<f64>, resources: &[FlexResource<f64>], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pi = dn.injection.clone();
    let mut qi = dn.injection_re.clone();
    for (r, &x) in resources.iter().zip(p) {
        pi[r.bus] += x;
        qi[r.bus] += r.alpha * x;
    }
    (pi, qi)
}

/// Dense Gaussian elimination with partial pivoting; `None` if singular.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Small bounded LP: minimise `c'x` s.t. `le` rows `a'x <= b`, `eq` rows `a'x = b`, `lo <= x <= hi`.
#[derive(Debug, Clone)]
pub struct SmallLp {
    pub c: Vec<f64>,
    pub le: Vec<(Vec<f64>, f64)>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SmallLp {
    pub fn feasible(&self, x: &[f64], tol: f64) -> bool {
        let dot = |a: &[f64]| a.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        self.le.iter().all(|(a, b)| dot(a) <= b + tol)
            && self.eq.iter().all(|(a, b)| (dot(a) - b).abs() <= tol)
            && x.iter().zip(&self.lo).all(|(x, l)| *x >= l - tol)
            && x.iter().zip(&self.hi).all(|(x, h)| *x <= h + tol)
    }

    /// Random feasible LP with `n` variables, `m` inequality rows and `e` equalities.
    pub fn random<R: Rng>(rng: &mut R, n: usize, m: usize, e: usize) -> Self {
        let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..0.0)).collect();
        let hi: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..5.0)).collect();
        let x0: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l..*h)).collect();
        let row = |rng: &mut R| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
        let dot = |a: &[f64]| a.iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>();
        let le = (0..m)
            .map(|_| {
                let a = row(rng);
                let slack = rng.random_range(0.0..2.0);
                let b = dot(&a) + slack;
                (a, b)
            })
            .collect();
        let eq = (0..e)
            .map(|_| {
                let a = row(rng);
                let b = dot(&a);
                (a, b)
            })
            .collect();
        let c = row(rng);
        Self { c, le, eq, lo, hi }
    }
}

/// Optimum of a bounded feasible LP by enumerating every basic solution.
pub fn lp_vertex_oracle(lp: &SmallLp) -> Option<f64> {
    let n = lp.c.len();
    // candidate active constraints: inequality rows and both bounds per variable
    let mut cands: Vec<(Vec<f64>, f64)> = lp.le.clone();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cands.push((e.clone(), lp.lo[j]));
        cands.push((e, lp.hi[j]));
    }
    let need = n.checked_sub(lp.eq.len())?;
    let mut best: Option<f64> = None;
    let mut pick = Vec::new();
    fn rec(
        start: usize,
        need: usize,
        pick: &mut Vec<usize>,
        cands: &[(Vec<f64>, f64)],
        lp: &SmallLp,
        best: &mut Option<f64>,
    ) {
        if pick.len() == need {
            let mut a: Vec<Vec<f64>> = lp.eq.iter().map(|(r, _)| r.clone()).collect();
            let mut b: Vec<f64> = lp.eq.iter().map(|(_, v)| *v).collect();
            for &i in pick.iter() {
                a.push(cands[i].0.clone());
                b.push(cands[i].1);
            }
            if let Some(x) = gauss_solve(a, b) {
                if lp.feasible(&x, 1e-9) {
                    let obj: f64 = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
                    if best.is_none_or(|v| obj < v) {
                        *best = Some(obj);
                    }
                }
            }
            return;
        }
        for i in start..cands.len() {
            pick.push(i);
            rec(i + 1, need, pick, cands, lp, best);
            pick.pop();
        }
    }
    rec(0, need, &mut pick, &cands, lp, &mut best);
    best
}

/// Separable QP `min sum a_i (x_i - t_i)^2` over a box with `sum x = total`:
/// the KKT point is `clip(t_i - lambda / (2 a_i))`, `lambda` found by bisection.
pub fn separable_qp_kkt(a: &[f64], t: &[f64], lo: &[f64], hi: &[f64], total: Option<f64>) -> Vec<f64> {
    let x_of = |lam: f64| -> Vec<f64> {
        (0..a.len()).map(|i| (t[i] - lam / (2.0 * a[i])).clamp(lo[i], hi[i])).collect()
    };
    let Some(total) = total else { return x_of(0.0) };
    let (mut l, mut h) = (-1e9, 1e9);
    for _ in 0..400 {
        let m = 0.5 * (l + h);
        if x_of(m).iter().sum::<f64>() > total {
            l = m;
        } else {
            h = m;
        }
    }
    x_of(0.5 * (l + h))
}
