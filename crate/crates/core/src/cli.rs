//! Command line front end.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 solver failure or
//! infeasibility, 3 I/O failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::caseio::{self, CaseError, ResultRow, ScenarioConfig};
use crate::clearing::{clear_full_dn, clear_no_dn, clear_oe, ClearingError, MarketSolution, Regime};
use crate::envelopes::{compute_envelopes, weights, Envelope, EnvelopeError, OeMethod, WeightRule};
use crate::mcharness::{self, HarnessError, RunPlan};
use crate::netmodel::{GridModel, NetworkId};
use crate::pfcheck::{check_market, VIOLATION_TOL};

/// Environment variable naming the directory relative config paths are resolved against.
pub const CONFIG_DIR_ENV: &str = "OEFLEX_CONFIG_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    JsonLines,
}

#[derive(Debug, Parser)]
#[command(name = "oeflex", version, about = "Grid-safe bid limits for feeder flexibility in balancing markets")]
struct Cli {
    /// Output format of printing verbs.
    #[arg(long, global = true, value_enum, default_value = "table")]
    format: Format,
    /// Omit the timestamp line of `mc` and `report`.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ScenarioArgs {
    /// Scenario configuration (TOML). Built-in defaults when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Built-in case set used without --scenario.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    case_set: u8,
    /// Instance index within the scenario set.
    #[arg(long, default_value_t = 0)]
    instance: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Summarise a MATPOWER case file.
    Parse { case: PathBuf },
    /// Compute operating envelopes of every distribution network.
    Envelope {
        #[arg(long, value_parser = parse_method, default_value = "two-step")]
        method: OeMethod,
        #[arg(long, value_parser = parse_rule, default_value = "equal")]
        weights: WeightRule,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Clear the balancing market of one scenario instance.
    Clear {
        #[arg(long, value_parser = parse_regime)]
        regime: Regime,
        /// Envelope method for `--regime oe`.
        #[arg(long, value_parser = parse_method, default_value = "two-step")]
        method: OeMethod,
        #[arg(long, value_parser = parse_rule, default_value = "equal")]
        weights: WeightRule,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Save the solution for `verify`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Power flow check of a saved solution.
    Verify {
        solution: PathBuf,
        #[arg(long, default_value_t = VIOLATION_TOL)]
        tol: f64,
    },
    /// Run a Monte Carlo plan.
    Mc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Draw further batches until this many instances are retained.
        #[arg(long)]
        min_retained: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
        /// Also write boxplots as SVG files.
        #[arg(long)]
        plots: bool,
    },
    /// Aggregate the results of a finished run.
    Report { dir: PathBuf },
}

fn parse_method(s: &str) -> Result<OeMethod, String> {
    s.parse()
}

fn parse_rule(s: &str) -> Result<WeightRule, String> {
    s.parse()
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    s.parse()
}

/// Error carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn invalid(m: impl ToString) -> Self {
        Self { code: EXIT_INVALID, message: m.to_string() }
    }

    fn solver(m: impl ToString) -> Self {
        Self { code: EXIT_SOLVER, message: m.to_string() }
    }

    fn io(m: impl ToString) -> Self {
        Self { code: EXIT_IO, message: m.to_string() }
    }
}

impl From<CaseError> for CliError {
    fn from(e: CaseError) -> Self {
        match &e {
            CaseError::Io { .. } => Self::io(e),
            CaseError::Csv(c) if c.is_io_error() => Self::io(e),
            _ => Self::invalid(e),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Case(c) => c.into(),
            HarnessError::Io { .. } => Self::io(e),
            HarnessError::EmptyPlan(_) => Self::invalid(e),
            HarnessError::Pool(_) => Self::io(e),
        }
    }
}

impl From<ClearingError> for CliError {
    fn from(e: ClearingError) -> Self {
        match e {
            ClearingError::MissingEnvelope(_) => Self::invalid(e),
            _ => Self::solver(e),
        }
    }
}

impl From<EnvelopeError> for CliError {
    fn from(e: EnvelopeError) -> Self {
        match e {
            EnvelopeError::NonPositivePrice { .. } | EnvelopeError::WeightMismatch(..) => Self::invalid(e),
            _ => Self::solver(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e)
    }
}

/// Parses `args` (including the program name), runs the verb and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_INVALID
                }
            };
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let f = cli.format;
    match &cli.command {
        Command::Parse { case } => cmd_parse(case, f, out),
        Command::Envelope { method, weights, scenario } => cmd_envelope(*method, *weights, scenario, f, out),
        Command::Clear { regime, method, weights, scenario, out: save } => {
            cmd_clear(*regime, *method, *weights, scenario, save.as_deref(), f, out)
        }
        Command::Verify { solution, tol } => cmd_verify(solution, *tol, f, out),
        Command::Mc { config, out: dir, instances, min_retained, threads, plots } => {
            let mut plan = RunPlan::new(load_config(config)?, *instances);
            plan.parallelism = *threads;
            if let Some(n) = min_retained {
                plan.min_retained = Some(*n);
                plan.max_instances = plan.max_instances.max(10 * n);
            }
            cmd_mc(&plan, dir, *plots, !cli.no_timestamp, f, out)
        }
        Command::Report { dir } => cmd_report(dir, !cli.no_timestamp, f, out),
    }
}

/// Resolves a relative config path against `$OEFLEX_CONFIG_DIR` when set.
pub fn resolve_config_path(path: &Path) -> PathBuf {
    match std::env::var_os(CONFIG_DIR_ENV) {
        Some(dir) if path.is_relative() && !dir.is_empty() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    Ok(caseio::load_config(&resolve_config_path(path))?)
}

fn scenario_config(args: &ScenarioArgs) -> Result<ScenarioConfig, CliError> {
    match &args.scenario {
        Some(p) => load_config(p),
        None => Ok(ScenarioConfig::case_set(args.case_set)),
    }
}

fn build_model(cfg: &ScenarioConfig, instance: usize) -> Result<(mcharness::CaseBundle, GridModel<f64>), CliError> {
    let bundle = mcharness::load_bundle(cfg)?;
    let sc = mcharness::sample_scenario(&bundle, cfg, instance).map_err(CliError::invalid)?;
    Ok((bundle, sc.model))
}

// ---------------------------------------------------------------------------
// output helpers

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn print(&self, f: Format, out: &mut dyn Write) -> std::io::Result<()> {
        match f {
            Format::Table => {
                let mut width: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
                for r in &self.rows {
                    for (w, c) in width.iter_mut().zip(r) {
                        *w = (*w).max(c.len());
                    }
                }
                let line = |cells: Vec<&str>| {
                    cells.iter().zip(&width).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ")
                };
                writeln!(out, "{}", line(self.header.clone()))?;
                for r in &self.rows {
                    writeln!(out, "{}", line(r.iter().map(String::as_str).collect()))?;
                }
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.header).map_err(std::io::Error::other)?;
                for r in &self.rows {
                    w.write_record(r).map_err(std::io::Error::other)?;
                }
                out.write_all(&w.into_inner().map_err(std::io::Error::other)?)?;
            }
            Format::JsonLines => {
                for r in &self.rows {
                    let obj: serde_json::Map<String, serde_json::Value> = self
                        .header
                        .iter()
                        .zip(r)
                        .map(|(h, c)| (h.to_string(), json_cell(c)))
                        .collect();
                    writeln!(out, "{}", serde_json::Value::Object(obj))?;
                }
            }
        }
        Ok(())
    }
}

fn json_cell(c: &str) -> serde_json::Value {
    if c.is_empty() {
        return serde_json::Value::Null;
    }
    if let Ok(i) = c.parse::<i64>() {
        return serde_json::json!(i);
    }
    match c.parse::<f64>() {
        Ok(v) if v.is_finite() => serde_json::json!(v),
        _ => serde_json::Value::String(c.to_string()),
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn timestamp(out: &mut dyn Write) -> std::io::Result<()> {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    writeln!(out, "# generated at unix time {secs}")
}

// ---------------------------------------------------------------------------
// verbs

fn cmd_parse(path: &Path, f: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let case = caseio::load_case(path)?;
    let s = case.summary();
    let yes_no = if s.radial { "yes" } else { "no" };
    match f {
        Format::Table => writeln!(out, "{} buses, {} branches, radial: {yes_no}", s.buses, s.branches)?,
        _ => {
            let mut t = Table::new(vec!["buses", "branches", "generators", "radial"]);
            t.push(vec![s.buses.to_string(), s.branches.to_string(), s.generators.to_string(), yes_no.into()]);
            t.print(f, out)?;
        }
    }
    Ok(())
}

fn dn_envelopes(
    model: &GridModel<f64>,
    bundle: &mcharness::CaseBundle,
    method: OeMethod,
    rule: WeightRule,
) -> Result<Vec<Envelope<f64>>, CliError> {
    let mut envs = Vec::new();
    for dn in &model.dns {
        let rs = model.dn_resources(dn.id);
        let w = weights(&rs, rule)?;
        envs.extend(compute_envelopes(method, dn, &rs, &w, &bundle.polygon)?);
    }
    Ok(envs)
}

fn network_name(model: &GridModel<f64>, n: NetworkId) -> String {
    match n {
        NetworkId::Transmission => "tn".into(),
        NetworkId::Distribution(m) => model.dns[m].name.clone(),
    }
}

fn cmd_envelope(method: OeMethod, rule: WeightRule, sc: &ScenarioArgs, f: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = scenario_config(sc)?;
    let (bundle, model) = build_model(&cfg, sc.instance)?;
    let envs = dn_envelopes(&model, &bundle, method, rule)?;
    let mut t = Table::new(vec!["resource_id", "network", "bus", "direction", "p_min", "p_max", "eps_min", "eps_max", "method", "weight_rule"]);
    for e in &envs {
        let r = model.resources.iter().find(|r| r.id == e.resource).expect("envelope of a model resource");
        let dn = match r.network {
            NetworkId::Distribution(m) => &model.dns[m],
            NetworkId::Transmission => unreachable!("transmission bids have no envelope"),
        };
        t.push(vec![
            e.resource.clone(),
            network_name(&model, r.network),
            dn.bus_ids[r.bus].to_string(),
            r.direction.as_str().to_string(),
            num(r.p_min),
            num(r.p_max),
            num(e.eps_min),
            num(e.eps_max),
            method.as_str().to_string(),
            rule.as_str().to_string(),
        ]);
    }
    t.print(f, out)?;
    Ok(())
}

/// Contents of a solution file written by `clear --out`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionFile {
    pub config: ScenarioConfig,
    pub instance: usize,
    pub method: Option<OeMethod>,
    pub weight_rule: Option<WeightRule>,
    pub solution: MarketSolution<f64>,
}

fn cmd_clear(
    regime: Regime,
    method: OeMethod,
    rule: WeightRule,
    sc: &ScenarioArgs,
    save: Option<&Path>,
    f: Format,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = scenario_config(sc)?;
    let (bundle, model) = build_model(&cfg, sc.instance)?;
    let sol = match regime {
        Regime::NoDn => clear_no_dn(&model)?,
        Regime::FullDn => clear_full_dn(&model, &bundle.polygon)?,
        Regime::Oe => clear_oe(&model, &dn_envelopes(&model, &bundle, method, rule)?)?,
    };
    if f == Format::Table {
        writeln!(out, "regime: {}  status: {:?}  cost: {}", sol.regime, sol.status, num(sol.cost))?;
        for (m, z) in sol.interface.iter().enumerate() {
            writeln!(out, "interface {}: {} MW", model.dns[m].name, num(*z))?;
        }
    }
    let mut t = Table::new(vec!["resource_id", "network", "direction", "price", "p_min", "p_max", "cleared"]);
    for (r, p) in model.resources.iter().zip(&sol.cleared) {
        t.push(vec![
            r.id.clone(),
            network_name(&model, r.network),
            r.direction.as_str().to_string(),
            num(r.price),
            num(r.p_min),
            num(r.p_max),
            num(*p),
        ]);
    }
    t.print(f, out)?;
    if let Some(path) = save {
        let file = SolutionFile {
            config: cfg,
            instance: sc.instance,
            method: (regime == Regime::Oe).then_some(method),
            weight_rule: (regime == Regime::Oe).then_some(rule),
            solution: sol,
        };
        let text = serde_json::to_string_pretty(&file).expect("solution serialises");
        std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_verify(path: &Path, tol: f64, f: Format, out: &mut dyn Write) -> Result<(), CliError> {
    if !(tol >= 0.0) {
        return Err(CliError::invalid("tolerance must be non-negative"));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let file: SolutionFile = serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    file.config.validate()?;
    let (_, model) = build_model(&file.config, file.instance)?;
    let ids: Vec<&String> = model.resources.iter().map(|r| &r.id).collect();
    if file.solution.resource_ids.iter().collect::<Vec<_>>() != ids {
        return Err(CliError::invalid("solution does not match the scenario's resources"));
    }
    let checks = check_market(&model, &file.solution.cleared, tol).map_err(CliError::invalid)?;
    let mut t = Table::new(vec!["network", "voltage_violations", "flow_violations", "worst_voltage_dev", "worst_flow_ratio", "interface"]);
    for (dn, (st, rep)) in model.dns.iter().zip(&checks) {
        t.push(vec![
            dn.name.clone(),
            rep.n_voltage.to_string(),
            rep.n_flow.to_string(),
            format!("{:.3e}", rep.worst_voltage_dev),
            format!("{:.4}", rep.worst_flow_ratio),
            num(st.z),
        ]);
    }
    t.print(f, out)?;
    if f == Format::Table {
        let total: usize = checks.iter().map(|(_, r)| r.total()).sum();
        writeln!(out, "total violations: {total}")?;
    }
    Ok(())
}

fn summary_table(rows: &[ResultRow]) -> Table {
    let mut t = Table::new(vec![
        "variant", "n", "eta_mean", "eta_median", "eta_max", "unsafe", "du_mean", "du_median",
    ]);
    for (name, eta, du, unsafe_n, n) in mcharness::report_from_rows(rows) {
        t.push(vec![
            name,
            n.to_string(),
            opt(eta.map(|s| s.mean)),
            opt(eta.map(|s| s.median)),
            opt(eta.map(|s| s.max)),
            unsafe_n.to_string(),
            opt(du.map(|s| s.mean)),
            opt(du.map(|s| s.median)),
        ]);
    }
    t
}

fn cmd_mc(plan: &RunPlan, dir: &Path, plots: bool, stamp: bool, f: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let outcome = mcharness::run_plan(plan)?;
    let written = mcharness::write_outputs(dir, &outcome, plots)?;
    let s = &outcome.summary;
    if f == Format::Table {
        if stamp {
            timestamp(out)?;
        }
        writeln!(
            out,
            "{} instances: {} retained, {} discarded, {} failed",
            s.n_instances, s.n_retained, s.n_discarded, s.n_failed
        )?;
    }
    summary_table(&mcharness::result_rows(&outcome.reports)).print(f, out)?;
    if f == Format::Table {
        for p in written {
            writeln!(out, "wrote {}", p.display())?;
        }
    }
    Ok(())
}

fn cmd_report(dir: &Path, stamp: bool, f: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let path = dir.join(mcharness::RESULTS_FILE);
    let file = std::fs::File::open(&path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let rows: Vec<ResultRow> = caseio::read_csv(file)?;
    if f == Format::Table {
        if stamp {
            timestamp(out)?;
        }
        let mut ids: Vec<usize> = rows.iter().map(|r| r.instance_id).collect();
        ids.dedup();
        let discarded = rows.iter().filter(|r| r.discarded_flag == 1 && r.regime == "no_dn").count();
        writeln!(out, "{} instances, {} discarded", ids.len(), discarded)?;
    }
    summary_table(&rows).print(f, out)?;
    Ok(())
}
