//! Seeded Monte Carlo experiments over sampled balancing scenarios.
//!
//! Every instance owns a ChaCha8 stream selected by its index, so results do
//! not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caseio::{self, load_case, CaseError, EnvelopeRow, ResultRow, ScenarioConfig, GEN_BUS, GEN_STATUS, PD, PG};
use crate::clearing::{clear_full_dn, clear_no_dn, clear_oe, Regime};
use crate::envelopes::{compute_envelopes, weights, Envelope, OeMethod, WeightRule};
use crate::metrics::{inefficiency, unqualified_flex, InstanceReport, VariantOutcome};
use crate::netmodel::{make_polygon, DistributionNetwork, GridModel, PolygonApprox, TransmissionNetwork};
use crate::pfcheck::{count_violations, run_linear_pf, total_violations, VIOLATION_TOL};
use crate::svg;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("nothing to run: {0}")]
    EmptyPlan(&'static str),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// What to run and how.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub config: ScenarioConfig,
    pub n_instances: usize,
    pub regimes: Vec<Regime>,
    pub methods: Vec<OeMethod>,
    pub weight_rules: Vec<WeightRule>,
    /// Worker threads; `None` uses the global pool.
    pub parallelism: Option<usize>,
    pub violation_tol: f64,
    /// Keep drawing further batches of `n_instances` until this many
    /// instances are retained, up to `max_instances` in total.
    pub min_retained: Option<usize>,
    pub max_instances: usize,
}

impl RunPlan {
    /// All regimes, methods and weight rules.
    pub fn new(config: ScenarioConfig, n_instances: usize) -> Self {
        Self {
            config,
            n_instances,
            regimes: vec![Regime::NoDn, Regime::FullDn, Regime::Oe],
            methods: OeMethod::ALL.to_vec(),
            weight_rules: WeightRule::ALL.to_vec(),
            parallelism: None,
            violation_tol: VIOLATION_TOL,
            min_retained: None,
            max_instances: 10 * n_instances.max(1),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_instances == 0 {
            return Err(HarnessError::EmptyPlan("n_instances is 0"));
        }
        if self.regimes.is_empty() {
            return Err(HarnessError::EmptyPlan("no regimes selected"));
        }
        if self.regimes.contains(&Regime::Oe) && (self.methods.is_empty() || self.weight_rules.is_empty()) {
            return Err(HarnessError::EmptyPlan("oe regime needs at least one method and weight rule"));
        }
        if self.parallelism == Some(0) {
            return Err(HarnessError::EmptyPlan("parallelism is 0"));
        }
        self.config.validate()?;
        Ok(())
    }
}

/// Networks of a scenario set before any sampling.
#[derive(Debug, Clone)]
pub struct CaseBundle {
    pub tn: TransmissionNetwork<f64>,
    /// Nominal transmission load per bus, MW.
    pub tn_load: Vec<f64>,
    /// Share of total generation per transmission bus.
    pub tn_gen_share: Vec<f64>,
    pub dns: Vec<DistributionNetwork<f64>>,
    /// Candidate buses for distributed generation bids, per network.
    pub dg_buses: Vec<Vec<usize>>,
    pub polygon: PolygonApprox<f64>,
}

pub fn load_bundle(cfg: &ScenarioConfig) -> Result<CaseBundle, CaseError> {
    let raw_tn = load_case(&cfg.tn_case)?;
    let attach: Vec<u32> = cfg.dn_cases.iter().map(|d| d.attach_bus).collect();
    let tn = caseio::to_transmission_network(&raw_tn, &cfg.tn_options(), &attach)?;
    let tn_load: Vec<f64> = raw_tn.bus.iter().map(|r| r[PD]).collect();

    let mut gen = vec![0.0; tn_load.len()];
    for g in raw_tn.gen.iter().filter(|g| g[GEN_STATUS] > 0.0) {
        let i = raw_tn.bus_index(g[GEN_BUS] as u32).expect("validated on parse");
        gen[i] += g[PG].max(0.0);
    }
    let total: f64 = gen.iter().sum();
    let tn_gen_share = if total > 0.0 {
        gen.iter().map(|g| g / total).collect()
    } else {
        let mut share = vec![0.0; gen.len()];
        share[tn.slack] = 1.0;
        share
    };

    let mut dns = Vec::new();
    let mut dg_buses = Vec::new();
    for (m, spec) in cfg.dn_cases.iter().enumerate() {
        let raw = load_case(&spec.path)?;
        let name = spec.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let dn = caseio::to_distribution_network(&raw, &cfg.dn_options(m, &name))?;
        let free = raw.generator_free_buses();
        dg_buses.push(if free.is_empty() { (0..dn.n_buses()).filter(|&i| i != dn.root).collect() } else { free });
        dns.push(dn);
    }
    let polygon = make_polygon(cfg.polygon_sides, 1.0)?;
    Ok(CaseBundle { tn, tn_load, tn_gen_share, dns, dg_buses, polygon })
}

/// The rng stream of instance `index`.
pub fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// A sampled market together with the number of draws it took.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: GridModel<f64>,
    pub attempts: usize,
    pub imbalance: f64,
}

/// Samples instance `index`. Draws whose distribution base case already
/// violates a bound are rejected and redrawn from the same stream.
pub fn sample_scenario(bundle: &CaseBundle, cfg: &ScenarioConfig, index: usize) -> Result<Scenario, String> {
    let mut rng = instance_rng(cfg.seed, index);
    let tol = VIOLATION_TOL;
    for attempt in 1..=cfg.max_resample {
        let tn_scale = uniform(&mut rng, cfg.load_scale_range);
        let dns: Vec<DistributionNetwork<f64>> =
            bundle.dns.iter().map(|dn| dn.with_load_scale(uniform(&mut rng, cfg.load_scale_range))).collect();
        let fraction = uniform(&mut rng, cfg.imbalance_fraction);
        let resources = caseio::attach_resources(&bundle.tn, &dns, &bundle.dg_buses, cfg, &mut rng).map_err(|e| e.to_string())?;

        let safe = dns.iter().all(|dn| {
            let st = run_linear_pf(dn, &[], &[]).expect("no resources");
            count_violations(&st, dn, tol).total() == 0 && dn.z0().abs() <= dn.z_limit
        });
        if !safe {
            continue;
        }

        let tn_load: f64 = bundle.tn_load.iter().sum::<f64>() * tn_scale;
        let dn_load: f64 = dns.iter().map(|dn| dn.z0()).sum();
        let total_load = tn_load + dn_load;
        let residual = cfg.imbalance_sign() * fraction * total_load;
        let generation = total_load + residual;
        let injection: Vec<f64> = bundle
            .tn_load
            .iter()
            .zip(&bundle.tn_gen_share)
            .map(|(&pd, &share)| share * generation - tn_scale * pd)
            .collect();
        let tn = bundle.tn.with_injections(injection);
        let model = GridModel::new(tn, dns, resources).map_err(|e| e.to_string())?;
        return Ok(Scenario { model, attempts: attempt, imbalance: residual });
    }
    Err(format!("no congestion-free base case in {} draws", cfg.max_resample))
}

/// Clears every requested variant of one instance.
pub fn run_instance(plan: &RunPlan, bundle: &CaseBundle, index: usize) -> InstanceReport {
    let mut report = InstanceReport {
        instance_id: index,
        discarded: false,
        failure: None,
        n_dn_resources: 0,
        attempts: 0,
        variants: Vec::new(),
        envelopes: Vec::new(),
    };
    if let Err(e) = evaluate(plan, bundle, index, &mut report) {
        log::warn!("instance {index}: {e}");
        report.failure = Some(e);
    }
    report
}

fn evaluate(plan: &RunPlan, bundle: &CaseBundle, index: usize, report: &mut InstanceReport) -> Result<(), String> {
    let sc = sample_scenario(bundle, &plan.config, index)?;
    report.attempts = sc.attempts;
    let model = &sc.model;
    report.n_dn_resources = model.resources.iter().filter(|r| r.network != crate::NetworkId::Transmission).count();
    let want = |r: Regime| plan.regimes.contains(&r);
    let tol = plan.violation_tol;

    let no_dn = clear_no_dn(model).map_err(|e| format!("no_dn: {e}"))?;
    let v_no = total_violations(model, &no_dn.cleared, tol).map_err(|e| e.to_string())?;
    let outcome = |regime, method, weight_rule, cost: f64, v: crate::pfcheck::ViolationReport<f64>| VariantOutcome {
        regime,
        method,
        weight_rule,
        cost,
        eta_pct: None,
        violations_v: v.n_voltage,
        violations_flow: v.n_flow,
        delta_u_pct: None,
        delta_d_pct: None,
    };
    let mut variants = vec![outcome(Regime::NoDn, None, None, no_dn.cost, v_no)];
    if v_no.total() == 0 {
        report.discarded = true;
        if want(Regime::NoDn) {
            report.variants = variants;
        }
        return Ok(());
    }

    let full = clear_full_dn(model, &bundle.polygon).map_err(|e| format!("full_dn: {e}"))?;
    let v_full = total_violations(model, &full.cleared, tol).map_err(|e| e.to_string())?;
    variants.push(outcome(Regime::FullDn, None, None, full.cost, v_full));

    if want(Regime::Oe) {
        let dn_resources: Vec<_> = model.resources.iter().filter(|r| r.network != crate::NetworkId::Transmission).cloned().collect();
        for &method in &plan.methods {
            for &rule in &plan.weight_rules {
                let mut envs: Vec<Envelope<f64>> = Vec::new();
                for dn in &model.dns {
                    let rs = model.dn_resources(dn.id);
                    let w = weights(&rs, rule).map_err(|e| e.to_string())?;
                    envs.extend(
                        compute_envelopes(method, dn, &rs, &w, &bundle.polygon)
                            .map_err(|e| format!("{} {rule} envelopes: {e}", method.as_str()))?,
                    );
                }
                let sol = clear_oe(model, &envs).map_err(|e| format!("oe {} {rule}: {e}", method.as_str()))?;
                let v = total_violations(model, &sol.cleared, tol).map_err(|e| e.to_string())?;
                let delta = unqualified_flex(&dn_resources, &envs).map_err(|e| e.to_string())?;
                let mut o = outcome(Regime::Oe, Some(method), Some(rule), sol.cost, v);
                o.delta_u_pct = delta.up;
                o.delta_d_pct = delta.down;
                variants.push(o);
                report.envelopes.push((method, rule, envs));
            }
        }
    }
    for o in &mut variants {
        o.eta_pct = inefficiency(o.cost, full.cost);
    }
    report.variants = variants.into_iter().filter(|o| want(o.regime)).collect();
    Ok(())
}

/// Runs instances `range` in parallel, in index order.
fn run_range(plan: &RunPlan, bundle: &CaseBundle, range: std::ops::Range<usize>) -> Vec<InstanceReport> {
    range.into_par_iter().map(|i| run_instance(plan, bundle, i)).collect()
}

/// All instance reports plus their aggregate.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<InstanceReport>,
    pub summary: Summary,
}

pub fn run_plan(plan: &RunPlan) -> Result<RunOutcome, HarnessError> {
    plan.validate()?;
    let bundle = load_bundle(&plan.config)?;
    run_plan_with(plan, &bundle)
}

/// Like [`run_plan`] with networks already loaded.
pub fn run_plan_with(plan: &RunPlan, bundle: &CaseBundle) -> Result<RunOutcome, HarnessError> {
    plan.validate()?;
    let go = || {
        let mut reports = run_range(plan, bundle, 0..plan.n_instances);
        if let Some(target) = plan.min_retained {
            while reports.iter().filter(|r| r.retained()).count() < target && reports.len() < plan.max_instances {
                let start = reports.len();
                let end = (start + plan.n_instances).min(plan.max_instances);
                reports.extend(run_range(plan, bundle, start..end));
            }
        }
        reports
    };
    let reports = match plan.parallelism {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Pool(e.to_string()))?
            .install(go),
        None => go(),
    };
    let summary = summarize(plan, &reports);
    Ok(RunOutcome { reports, summary })
}

// ---------------------------------------------------------------------------
// aggregation

/// Mean, median and max of one metric over retained instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: svg::quantile(&v, 0.5),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub weight_rule: Option<WeightRule>,
    pub cost: Option<Stats>,
    pub eta_pct: Option<Stats>,
    pub violations: Option<Stats>,
    /// Instances with at least one violation.
    pub unsafe_instances: usize,
    pub delta_u_pct: Option<Stats>,
    pub delta_d_pct: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub case_set: u8,
    pub seed: u64,
    pub n_instances: usize,
    pub n_retained: usize,
    pub n_discarded: usize,
    pub n_failed: usize,
    pub mean_dn_resources: f64,
    pub variants: Vec<VariantSummary>,
    /// `instance_id: reason` for every failed instance.
    pub failures: Vec<String>,
}

fn variant_key(o: &VariantOutcome) -> (String, Option<WeightRule>) {
    (o.label(), o.weight_rule)
}

pub fn summarize(plan: &RunPlan, reports: &[InstanceReport]) -> Summary {
    let retained: Vec<&InstanceReport> = reports.iter().filter(|r| r.retained()).collect();
    let sampled: Vec<&InstanceReport> = reports.iter().filter(|r| r.attempts > 0).collect();
    let mut order: Vec<(String, Option<WeightRule>)> = Vec::new();
    let mut groups: BTreeMap<(String, Option<WeightRule>), Vec<&VariantOutcome>> = BTreeMap::new();
    for r in &retained {
        for o in &r.variants {
            let key = variant_key(o);
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().push(o);
        }
    }
    let variants = order
        .into_iter()
        .map(|key| {
            let os = &groups[&key];
            let col = |f: &dyn Fn(&VariantOutcome) -> Option<f64>| Stats::of(&os.iter().filter_map(|o| f(o)).collect::<Vec<_>>());
            VariantSummary {
                variant: key.0.clone(),
                weight_rule: key.1,
                cost: col(&|o| Some(o.cost)),
                eta_pct: col(&|o| o.eta_pct),
                violations: col(&|o| Some((o.violations_v + o.violations_flow) as f64)),
                unsafe_instances: os.iter().filter(|o| o.violations_v + o.violations_flow > 0).count(),
                delta_u_pct: col(&|o| o.delta_u_pct),
                delta_d_pct: col(&|o| o.delta_d_pct),
            }
        })
        .collect();
    Summary {
        case_set: plan.config.case_set,
        seed: plan.config.seed,
        n_instances: reports.len(),
        n_retained: retained.len(),
        n_discarded: reports.iter().filter(|r| r.discarded).count(),
        n_failed: reports.iter().filter(|r| r.failure.is_some()).count(),
        mean_dn_resources: if sampled.is_empty() {
            0.0
        } else {
            sampled.iter().map(|r| r.n_dn_resources as f64).sum::<f64>() / sampled.len() as f64
        },
        variants,
        failures: reports.iter().filter_map(|r| r.failure.as_ref().map(|f| format!("{}: {f}", r.instance_id))).collect(),
    }
}

// ---------------------------------------------------------------------------
// output files

/// One CSV row per reported variant; an instance without variants gets a
/// single row with empty metric fields.
pub fn result_rows(reports: &[InstanceReport]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for r in reports {
        let flag = u8::from(r.discarded);
        if r.variants.is_empty() {
            rows.push(ResultRow {
                instance_id: r.instance_id,
                regime: String::new(),
                weight_rule: String::new(),
                cost: None,
                eta_pct: None,
                violations_v: None,
                violations_flow: None,
                delta_u_pct: None,
                delta_d_pct: None,
                discarded_flag: flag,
            });
        }
        for o in &r.variants {
            rows.push(ResultRow {
                instance_id: r.instance_id,
                regime: o.label(),
                weight_rule: o.weight_rule.map(|w| w.as_str().to_string()).unwrap_or_default(),
                cost: Some(o.cost),
                eta_pct: o.eta_pct,
                violations_v: Some(o.violations_v),
                violations_flow: Some(o.violations_flow),
                delta_u_pct: o.delta_u_pct,
                delta_d_pct: o.delta_d_pct,
                discarded_flag: flag,
            });
        }
    }
    rows
}

pub fn envelope_rows(reports: &[InstanceReport]) -> Vec<EnvelopeRow> {
    let mut rows = Vec::new();
    for r in reports {
        for (method, rule, envs) in &r.envelopes {
            for e in envs {
                rows.push(EnvelopeRow {
                    instance_id: r.instance_id,
                    resource_id: e.resource.clone(),
                    eps_min: e.eps_min,
                    eps_max: e.eps_max,
                    method: method.as_str().to_string(),
                    weight_rule: rule.as_str().to_string(),
                });
            }
        }
    }
    rows
}

pub const RESULTS_FILE: &str = "results.csv";
pub const ENVELOPES_FILE: &str = "envelopes.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Writes results, envelopes and summary into `dir`, plus boxplots when
/// `plots` is set. Files written before a failure stay on disk.
pub fn write_outputs(dir: &Path, outcome: &RunOutcome, plots: bool) -> Result<Vec<PathBuf>, HarnessError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();

    let path = dir.join(RESULTS_FILE);
    let file = std::fs::File::create(&path).map_err(io(&path))?;
    caseio::write_csv(&result_rows(&outcome.reports), std::io::BufWriter::new(file))?;
    written.push(path);

    let path = dir.join(ENVELOPES_FILE);
    let file = std::fs::File::create(&path).map_err(io(&path))?;
    caseio::write_csv(&envelope_rows(&outcome.reports), std::io::BufWriter::new(file))?;
    written.push(path);

    let path = dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&outcome.summary).expect("summary serialises");
    std::fs::write(&path, json + "\n").map_err(io(&path))?;
    written.push(path);

    if plots {
        for (path, text) in plot_files(dir, &result_rows(&outcome.reports)) {
            std::fs::write(&path, text).map_err(io(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Boxplots of the retained rows: inefficiency, violations, unqualified flexibility.
pub fn plot_files(dir: &Path, rows: &[ResultRow]) -> Vec<(PathBuf, String)> {
    type Metric = fn(&ResultRow) -> Option<f64>;
    let metrics: [(&str, &str, &str, Metric); 4] = [
        ("eta.svg", "Inefficiency", "%", |r| r.eta_pct),
        ("violations.svg", "Violations per instance", "count", |r| {
            Some((r.violations_v? + r.violations_flow?) as f64)
        }),
        ("delta_u.svg", "Unqualified upward flexibility", "%", |r| r.delta_u_pct),
        ("delta_d.svg", "Unqualified downward flexibility", "%", |r| r.delta_d_pct),
    ];
    let mut order: Vec<String> = Vec::new();
    for r in rows.iter().filter(|r| r.discarded_flag == 0 && !r.regime.is_empty()) {
        let name = series_name(r);
        if !order.contains(&name) {
            order.push(name);
        }
    }
    metrics
        .iter()
        .map(|(file, title, unit, f)| {
            let series: Vec<(String, Vec<f64>)> = order
                .iter()
                .map(|name| {
                    let v = rows
                        .iter()
                        .filter(|r| r.discarded_flag == 0 && &series_name(r) == name)
                        .filter_map(f)
                        .collect();
                    (name.clone(), v)
                })
                .filter(|(_, v): &(String, Vec<f64>)| !v.is_empty())
                .collect();
            (dir.join(file), svg::boxplot(title, unit, &series))
        })
        .collect()
}

fn series_name(r: &ResultRow) -> String {
    if r.weight_rule.is_empty() {
        r.regime.clone()
    } else {
        format!("{} ({})", r.regime, r.weight_rule)
    }
}

/// Rebuilds the summary tables of a finished run from its `results.csv`.
pub fn report_from_rows(rows: &[ResultRow]) -> Vec<(String, Option<Stats>, Option<Stats>, usize, usize)> {
    let mut order: Vec<String> = Vec::new();
    for r in rows.iter().filter(|r| r.discarded_flag == 0 && !r.regime.is_empty()) {
        let name = series_name(r);
        if !order.contains(&name) {
            order.push(name);
        }
    }
    order
        .into_iter()
        .map(|name| {
            let sel: Vec<&ResultRow> = rows.iter().filter(|r| r.discarded_flag == 0 && series_name(r) == name).collect();
            let eta: Vec<f64> = sel.iter().filter_map(|r| r.eta_pct).collect();
            let du: Vec<f64> = sel.iter().filter_map(|r| r.delta_u_pct).collect();
            let unsafe_n = sel.iter().filter(|r| r.violations_v.unwrap_or(0) + r.violations_flow.unwrap_or(0) > 0).count();
            (name, Stats::of(&eta), Stats::of(&du), unsafe_n, sel.len())
        })
        .collect()
}
