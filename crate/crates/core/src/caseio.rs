//! Case files, scenario configuration, resource placement and result files.
//!
//! The MATPOWER reader understands the plain-text subset used by the bundled
//! cases: `mpc.baseMVA`, the `bus`, `gen` and `branch` matrices, scalar
//! variables, and the column-wise unit conversions that some distribution
//! cases append (`mpc.branch(:, [BR_R BR_X]) = ... / (Vbase^2 / Sbase);`).
//! Anything else is skipped with a warning.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{
    tree_from_edges, DistributionNetwork, DistributionNetworkData, DnLine, FlexResource, ModelError,
    NetworkId, RadialError, TnLine, TransmissionNetwork,
};
use crate::pfcheck::run_linear_pf;
use crate::Scalar;

// zero-based MATPOWER columns
pub const BUS_I: usize = 0;
pub const BUS_TYPE: usize = 1;
pub const PD: usize = 2;
pub const QD: usize = 3;
pub const VM: usize = 7;
pub const BASE_KV: usize = 9;
pub const GEN_BUS: usize = 0;
pub const PG: usize = 1;
pub const QG: usize = 2;
pub const GEN_STATUS: usize = 7;
pub const F_BUS: usize = 0;
pub const T_BUS: usize = 1;
pub const BR_R: usize = 2;
pub const BR_X: usize = 3;
pub const RATE_A: usize = 5;
pub const BR_STATUS: usize = 10;

const REF_BUS: f64 = 3.0;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("missing block mpc.{0}")]
    MissingBlock(&'static str),
    #[error("mpc.{block} row {row}: expected {expected} columns, found {found}")]
    ColumnCount { block: String, row: usize, expected: usize, found: usize },
    #[error("mpc.{block} has {found} columns, at least {needed} required")]
    TooFewColumns { block: String, found: usize, needed: usize },
    #[error("mpc.{block} row {row}: non-numeric token '{token}'")]
    NonNumeric { block: String, row: usize, token: String },
    #[error("invalid bus id {0}")]
    BadBusId(f64),
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("{table} references unknown bus {id}")]
    UnknownBus { table: &'static str, id: f64 },
    #[error("cannot evaluate '{stmt}': {reason}")]
    Expression { stmt: String, reason: String },
    #[error("case has no reference bus")]
    NoReference,
    #[error("case is not radial: {0}")]
    NonRadial(RadialError),
    #[error("branch {0} has non-positive reactance")]
    BadReactance(usize),
    #[error("no eligible bus for {0}")]
    EmptyBusSet(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CaseError + '_ {
    move |source| CaseError::Io { path: path.to_path_buf(), source }
}

/// Numeric tables of a MATPOWER case, columns as in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCase {
    pub name: String,
    pub base_mva: f64,
    pub bus: Vec<Vec<f64>>,
    pub gen: Vec<Vec<f64>>,
    pub branch: Vec<Vec<f64>>,
    index: HashMap<u32, usize>,
}

/// Counts printed by `parse`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CaseSummary {
    pub buses: usize,
    pub branches: usize,
    pub generators: usize,
    pub radial: bool,
}

impl RawCase {
    /// Validates bus ids and branch/generator references.
    pub fn from_tables(name: String, base_mva: f64, bus: Vec<Vec<f64>>, gen: Vec<Vec<f64>>, branch: Vec<Vec<f64>>) -> Result<Self, CaseError> {
        let mut index = HashMap::new();
        for (i, row) in bus.iter().enumerate() {
            let id = bus_id(row[BUS_I])?;
            if index.insert(id, i).is_some() {
                return Err(CaseError::DuplicateBus(id));
            }
        }
        let case = Self { name, base_mva, bus, gen, branch, index };
        for row in &case.branch {
            case.index_of("branch", row[F_BUS])?;
            case.index_of("branch", row[T_BUS])?;
        }
        for row in &case.gen {
            case.index_of("gen", row[GEN_BUS])?;
        }
        Ok(case)
    }

    /// Original bus ids in table order.
    pub fn bus_ids(&self) -> Vec<u32> {
        self.bus.iter().map(|r| r[BUS_I] as u32).collect()
    }

    /// Internal (row) index of the bus with original id `id`.
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    fn index_of(&self, table: &'static str, id: f64) -> Result<usize, CaseError> {
        bus_id(id)
            .ok()
            .and_then(|id| self.bus_index(id))
            .ok_or(CaseError::UnknownBus { table, id })
    }

    /// Rows of branches in service (a missing status column means in service).
    pub fn in_service_branches(&self) -> impl Iterator<Item = (usize, &Vec<f64>)> {
        self.branch
            .iter()
            .enumerate()
            .filter(|(_, r)| r.get(BR_STATUS).is_none_or(|&s| s != 0.0))
    }

    fn in_service_gens(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.gen.iter().filter(|r| r.get(GEN_STATUS).is_none_or(|&s| s > 0.0))
    }

    fn reference_buses(&self) -> Vec<usize> {
        (0..self.bus.len()).filter(|&i| self.bus[i][BUS_TYPE] == REF_BUS).collect()
    }

    /// Parent map over in-service branches, rooted at the reference bus.
    pub fn radial_parents(&self) -> Result<Vec<Option<usize>>, CaseError> {
        let edges: Vec<(usize, usize)> = self
            .in_service_branches()
            .map(|(_, r)| (self.index[&(r[F_BUS] as u32)], self.index[&(r[T_BUS] as u32)]))
            .collect();
        tree_from_edges(self.bus.len(), &self.reference_buses(), &edges).map_err(|e| match e {
            RadialError::NoRoot => CaseError::NoReference,
            e => CaseError::NonRadial(e),
        })
    }

    pub fn summary(&self) -> CaseSummary {
        CaseSummary {
            buses: self.bus.len(),
            branches: self.in_service_branches().count(),
            generators: self.gen.len(),
            radial: self.radial_parents().is_ok(),
        }
    }

    /// Non-reference buses without an in-service generator.
    pub fn generator_free_buses(&self) -> Vec<usize> {
        let mut has_gen = vec![false; self.bus.len()];
        for g in self.in_service_gens() {
            has_gen[self.index[&(g[GEN_BUS] as u32)]] = true;
        }
        (0..self.bus.len())
            .filter(|&i| !has_gen[i] && self.bus[i][BUS_TYPE] != REF_BUS)
            .collect()
    }
}

fn bus_id(v: f64) -> Result<u32, CaseError> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u32)
    } else {
        Err(CaseError::BadBusId(v))
    }
}

pub fn load_case(path: &Path) -> Result<RawCase, CaseError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_matpower_case(&text)
}

/// Removes `%` comments and joins `...` continuation lines.
fn preprocess(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut in_str = false;
        let mut cut = line.len();
        for (i, c) in line.char_indices() {
            match c {
                '\'' => in_str = !in_str,
                '%' if !in_str => {
                    cut = i;
                    break;
                }
                _ => {}
            }
        }
        let code = line[..cut].trim_end();
        match code.strip_suffix("...") {
            Some(head) => {
                out.push_str(head);
                out.push(' ');
            }
            None => {
                out.push_str(code);
                out.push('\n');
            }
        }
    }
    out
}

/// Splits at `;` and newlines outside brackets, braces and parentheses.
fn statements(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut depth = 0i32;
    let mut in_str = false;
    for c in text.chars() {
        match c {
            '\'' => in_str = !in_str,
            '[' | '{' | '(' if !in_str => depth += 1,
            ']' | '}' | ')' if !in_str => depth -= 1,
            _ => {}
        }
        if depth <= 0 && !in_str && (c == ';' || c == '\n') {
            let s = cur.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            cur.clear();
        } else {
            cur.push(c);
        }
    }
    let s = cur.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

fn parse_matrix(block: &str, body: &str) -> Result<Vec<Vec<f64>>, CaseError> {
    let inner = body.trim();
    let inner = inner.strip_prefix('[').unwrap_or(inner);
    let inner = inner.strip_suffix(']').unwrap_or(inner);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in inner.split([';', '\n']) {
        let toks: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
        if toks.is_empty() {
            continue;
        }
        let row_no = rows.len() + 1;
        let row = toks
            .iter()
            .map(|t| {
                t.parse::<f64>().map_err(|_| CaseError::NonNumeric {
                    block: block.to_string(),
                    row: row_no,
                    token: t.to_string(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CaseError::ColumnCount {
                    block: block.to_string(),
                    row: row_no,
                    expected: first.len(),
                    found: row.len(),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Parses the supported MATPOWER subset.
pub fn parse_matpower_case(text: &str) -> Result<RawCase, CaseError> {
    let mut name = String::new();
    let mut base_mva = None;
    let mut tables: HashMap<&'static str, Vec<Vec<f64>>> = HashMap::new();
    let mut conversions = Vec::new();

    for stmt in statements(&preprocess(text)) {
        if let Some(rest) = stmt.strip_prefix("function") {
            name = rest.rsplit('=').next().unwrap_or("").trim().to_string();
            continue;
        }
        let Some((lhs, rhs)) = split_assignment(&stmt) else {
            log::warn!("ignoring statement '{stmt}'");
            continue;
        };
        match lhs {
            "mpc.version" => {}
            "mpc.baseMVA" => {
                base_mva = Some(rhs.parse::<f64>().map_err(|_| CaseError::NonNumeric {
                    block: "baseMVA".into(),
                    row: 1,
                    token: rhs.to_string(),
                })?)
            }
            "mpc.bus" | "mpc.gen" | "mpc.branch" if rhs.starts_with('[') => {
                let key = match lhs {
                    "mpc.bus" => "bus",
                    "mpc.gen" => "gen",
                    _ => "branch",
                };
                tables.insert(key, parse_matrix(key, rhs)?);
            }
            _ if lhs.starts_with('[') && rhs.starts_with("idx_") => {}
            _ if lhs.starts_with("mpc.") && !lhs.contains('(') => log::warn!("ignoring block {lhs}"),
            _ => conversions.push(stmt.clone()),
        }
    }

    let base_mva = base_mva.ok_or(CaseError::MissingBlock("baseMVA"))?;
    let mut bus = tables.remove("bus").ok_or(CaseError::MissingBlock("bus"))?;
    let mut branch = tables.remove("branch").ok_or(CaseError::MissingBlock("branch"))?;
    let mut gen = tables.remove("gen").unwrap_or_default();
    for (block, rows, needed) in [("bus", &bus, 13), ("branch", &branch, 11), ("gen", &gen, 8)] {
        if let Some(r) = rows.first() {
            if r.len() < needed {
                return Err(CaseError::TooFewColumns { block: block.into(), found: r.len(), needed });
            }
        }
    }

    let mut interp = Interp { vars: HashMap::new(), base_mva };
    for stmt in &conversions {
        interp.exec(stmt, &mut bus, &mut gen, &mut branch)?;
    }
    RawCase::from_tables(name, interp.base_mva, bus, gen, branch)
}

fn split_assignment(stmt: &str) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    for (i, c) in stmt.char_indices() {
        match c {
            '[' | '(' | '{' => depth += 1,
            ']' | ')' | '}' => depth -= 1,
            '=' if depth == 0 => {
                let next = stmt[i + 1..].chars().next();
                let prev = stmt[..i].chars().last();
                if next != Some('=') && !matches!(prev, Some('=' | '<' | '>' | '~')) {
                    return Some((stmt[..i].trim(), stmt[i + 1..].trim()));
                }
            }
            _ => {}
        }
    }
    None
}

/// Writes `case` in the format read by [`parse_matpower_case`].
pub fn write_matpower_case(case: &RawCase) -> String {
    let mut out = String::new();
    let name = if case.name.is_empty() { "case" } else { &case.name };
    let _ = writeln!(out, "function mpc = {name}\nmpc.version = '2';\nmpc.baseMVA = {};", case.base_mva);
    for (block, rows) in [("bus", &case.bus), ("gen", &case.gen), ("branch", &case.branch)] {
        let _ = writeln!(out, "mpc.{block} = [");
        for r in rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "\t{};", cells.join("\t"));
        }
        let _ = writeln!(out, "];");
    }
    out
}

// ---------------------------------------------------------------------------
// conversion statements

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(s: &str) -> Result<Vec<Tok>, String> {
    let cs: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && cs.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < cs.len() && (cs[i].is_ascii_digit() || cs[i] == '.') {
                i += 1;
            }
            if i < cs.len() && (cs[i] == 'e' || cs[i] == 'E') {
                let mut j = i + 1;
                if j < cs.len() && (cs[j] == '+' || cs[j] == '-') {
                    j += 1;
                }
                if j < cs.len() && cs[j].is_ascii_digit() {
                    i = j;
                    while i < cs.len() && cs[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = cs[start..i].iter().collect();
            out.push(Tok::Num(text.parse().map_err(|_| format!("bad number '{text}'"))?));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < cs.len() && (cs[i].is_alphanumeric() || cs[i] == '_' || (cs[i] == '.' && cs.get(i + 1).is_some_and(|d| d.is_alphabetic()))) {
                i += 1;
            }
            out.push(Tok::Ident(cs[start..i].iter().collect()));
        } else if c == '.' && matches!(cs.get(i + 1), Some('*' | '/' | '^')) {
            // element-wise operators behave like their plain forms here
            out.push(Tok::Sym(cs[i + 1]));
            i += 2;
        } else if "+-*/^(),:[]".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(format!("unexpected character '{c}'"));
        }
    }
    Ok(out)
}

/// Scalar or dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
enum Val {
    Scalar(f64),
    Mat { rows: usize, cols: usize, data: Vec<f64> },
}

impl Val {
    fn elements(&self) -> Vec<f64> {
        match self {
            Val::Scalar(v) => vec![*v],
            Val::Mat { data, .. } => data.clone(),
        }
    }

    fn map(self, f: impl Fn(f64) -> f64) -> Val {
        match self {
            Val::Scalar(v) => Val::Scalar(f(v)),
            Val::Mat { rows, cols, data } => Val::Mat { rows, cols, data: data.into_iter().map(f).collect() },
        }
    }

    fn zip(self, other: Val, f: impl Fn(f64, f64) -> f64) -> Result<Val, String> {
        Ok(match (self, other) {
            (Val::Scalar(a), Val::Scalar(b)) => Val::Scalar(f(a, b)),
            (Val::Scalar(a), m) => m.map(|b| f(a, b)),
            (m, Val::Scalar(b)) => m.map(|a| f(a, b)),
            (Val::Mat { rows, cols, data }, Val::Mat { rows: r2, cols: c2, data: d2 }) => {
                if (rows, cols) != (r2, c2) {
                    return Err(format!("shape mismatch {rows}x{cols} vs {r2}x{c2}"));
                }
                Val::Mat { rows, cols, data: data.iter().zip(&d2).map(|(&a, &b)| f(a, b)).collect() }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Sel {
    All,
    Some(Vec<usize>),
}

impl Sel {
    fn resolve(&self, n: usize) -> Result<Vec<usize>, String> {
        match self {
            Sel::All => Ok((0..n).collect()),
            Sel::Some(ix) => {
                if let Some(&bad) = ix.iter().find(|&&i| i >= n) {
                    Err(format!("index {} out of range 1..{n}", bad + 1))
                } else {
                    Ok(ix.clone())
                }
            }
        }
    }
}

fn column_constant(name: &str) -> Option<f64> {
    const NAMES: &[(&str, f64)] = &[
        ("PQ", 1.0), ("PV", 2.0), ("REF", 3.0), ("NONE", 4.0),
        ("BUS_I", 1.0), ("BUS_TYPE", 2.0), ("PD", 3.0), ("QD", 4.0), ("GS", 5.0), ("BS", 6.0),
        ("BUS_AREA", 7.0), ("VM", 8.0), ("VA", 9.0), ("BASE_KV", 10.0), ("ZONE", 11.0),
        ("VMAX", 12.0), ("VMIN", 13.0),
        ("F_BUS", 1.0), ("T_BUS", 2.0), ("BR_R", 3.0), ("BR_X", 4.0), ("BR_B", 5.0),
        ("RATE_A", 6.0), ("RATE_B", 7.0), ("RATE_C", 8.0), ("TAP", 9.0), ("SHIFT", 10.0),
        ("BR_STATUS", 11.0), ("ANGMIN", 12.0), ("ANGMAX", 13.0),
        ("GEN_BUS", 1.0), ("PG", 2.0), ("QG", 3.0), ("QMAX", 4.0), ("QMIN", 5.0), ("VG", 6.0),
        ("MBASE", 7.0), ("GEN_STATUS", 8.0), ("PMAX", 9.0), ("PMIN", 10.0),
    ];
    NAMES.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
}

struct Interp {
    vars: HashMap<String, f64>,
    base_mva: f64,
}

struct Tables<'a> {
    bus: &'a mut Vec<Vec<f64>>,
    gen: &'a mut Vec<Vec<f64>>,
    branch: &'a mut Vec<Vec<f64>>,
}

impl Tables<'_> {
    fn get(&self, name: &str) -> Option<&Vec<Vec<f64>>> {
        match name {
            "mpc.bus" => Some(self.bus),
            "mpc.gen" => Some(self.gen),
            "mpc.branch" => Some(self.branch),
            _ => None,
        }
    }

    fn get_mut(&mut self, name: &str) -> Option<&mut Vec<Vec<f64>>> {
        match name {
            "mpc.bus" => Some(self.bus),
            "mpc.gen" => Some(self.gen),
            "mpc.branch" => Some(self.branch),
            _ => None,
        }
    }
}

struct Parser<'a, 'b> {
    toks: &'a [Tok],
    pos: usize,
    interp: &'a Interp,
    tables: &'a Tables<'b>,
}

impl Parser<'_, '_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), String> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(format!("expected '{c}'"))
        }
    }

    fn expr(&mut self) -> Result<Val, String> {
        let mut v = self.term()?;
        loop {
            if self.eat('+') {
                v = v.zip(self.term()?, |a, b| a + b)?;
            } else if self.eat('-') {
                v = v.zip(self.term()?, |a, b| a - b)?;
            } else {
                return Ok(v);
            }
        }
    }

    fn term(&mut self) -> Result<Val, String> {
        let mut v = self.unary()?;
        loop {
            if self.eat('*') {
                v = v.zip(self.unary()?, |a, b| a * b)?;
            } else if self.eat('/') {
                v = v.zip(self.unary()?, |a, b| a / b)?;
            } else {
                return Ok(v);
            }
        }
    }

    fn unary(&mut self) -> Result<Val, String> {
        if self.eat('-') {
            Ok(self.unary()?.map(|a| -a))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Val, String> {
        let base = self.primary()?;
        if self.eat('^') {
            let exp = self.unary()?;
            base.zip(exp, f64::powf)
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Val, String> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Val::Scalar(v))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let v = self.expr()?;
                self.expect(')')?;
                Ok(v)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                self.ident(&name)
            }
            other => Err(format!("unexpected token {other:?}")),
        }
    }

    fn ident(&mut self, name: &str) -> Result<Val, String> {
        if let Some(table) = self.tables.get(name) {
            self.expect('(')?;
            let (rs, cs) = self.selection()?;
            let ncols = table.first().map_or(0, |r| r.len());
            let rows = rs.resolve(table.len())?;
            let cols = cs.resolve(ncols)?;
            let data: Vec<f64> = rows.iter().flat_map(|&r| cols.iter().map(move |&c| table[r][c])).collect();
            return Ok(if data.len() == 1 {
                Val::Scalar(data[0])
            } else {
                Val::Mat { rows: rows.len(), cols: cols.len(), data }
            });
        }
        if name == "mpc.baseMVA" {
            return Ok(Val::Scalar(self.interp.base_mva));
        }
        let f: Option<fn(f64) -> f64> = match name {
            "sin" => Some(f64::sin),
            "cos" => Some(f64::cos),
            "tan" => Some(f64::tan),
            "asin" => Some(f64::asin),
            "acos" => Some(f64::acos),
            "atan" => Some(f64::atan),
            "sqrt" => Some(f64::sqrt),
            "abs" => Some(f64::abs),
            "exp" => Some(f64::exp),
            _ => None,
        };
        if let Some(f) = f {
            self.expect('(')?;
            let v = self.expr()?;
            self.expect(')')?;
            return Ok(v.map(f));
        }
        if let Some(&v) = self.interp.vars.get(name) {
            return Ok(Val::Scalar(v));
        }
        match name {
            "pi" => Ok(Val::Scalar(std::f64::consts::PI)),
            _ => column_constant(name).map(Val::Scalar).ok_or_else(|| format!("unknown name '{name}'")),
        }
    }

    fn index_list(&mut self) -> Result<Sel, String> {
        if self.eat(':') {
            return Ok(Sel::All);
        }
        let mut vals = Vec::new();
        if self.eat('[') {
            while !self.eat(']') {
                vals.extend(self.expr()?.elements());
                self.eat(',');
                if self.peek().is_none() {
                    return Err("unterminated index list".into());
                }
            }
        } else {
            vals.extend(self.expr()?.elements());
        }
        vals.into_iter()
            .map(|v| {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize - 1)
                } else {
                    Err(format!("invalid index {v}"))
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Sel::Some)
    }

    fn selection(&mut self) -> Result<(Sel, Sel), String> {
        let rows = self.index_list()?;
        self.expect(',')?;
        let cols = self.index_list()?;
        self.expect(')')?;
        Ok((rows, cols))
    }

    fn done(&self) -> Result<(), String> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(format!("trailing token {t:?}")),
        }
    }
}

impl Interp {
    fn exec(
        &mut self,
        stmt: &str,
        bus: &mut Vec<Vec<f64>>,
        gen: &mut Vec<Vec<f64>>,
        branch: &mut Vec<Vec<f64>>,
    ) -> Result<(), CaseError> {
        let fail = |reason: String| CaseError::Expression { stmt: stmt.to_string(), reason };
        let Some((lhs, rhs)) = split_assignment(stmt) else {
            log::warn!("ignoring statement '{stmt}'");
            return Ok(());
        };
        let mut tables = Tables { bus, gen, branch };
        let rhs_toks = tokenize(rhs).map_err(fail)?;
        let lhs_toks = tokenize(lhs).map_err(fail)?;

        let eval = |interp: &Interp, tables: &Tables<'_>| -> Result<Val, String> {
            let mut p = Parser { toks: &rhs_toks, pos: 0, interp, tables };
            let v = p.expr()?;
            p.done()?;
            Ok(v)
        };

        match lhs_toks.as_slice() {
            [Tok::Ident(name)] if name == "mpc.baseMVA" => {
                match eval(self, &tables).map_err(fail)? {
                    Val::Scalar(v) => self.base_mva = v,
                    _ => return Err(fail("baseMVA must be scalar".into())),
                }
            }
            [Tok::Ident(name)] if !name.contains('.') => match eval(self, &tables) {
                Ok(Val::Scalar(v)) => {
                    self.vars.insert(name.clone(), v);
                }
                Ok(_) => log::warn!("ignoring non-scalar assignment '{stmt}'"),
                Err(e) => log::warn!("ignoring '{stmt}': {e}"),
            },
            [Tok::Ident(name), Tok::Sym('('), ..] if tables.get(name).is_some() => {
                let value = eval(self, &tables).map_err(fail)?;
                let (rs, cs) = {
                    let mut p = Parser { toks: &lhs_toks[2..], pos: 0, interp: self, tables: &tables };
                    let sel = p.selection().map_err(fail)?;
                    p.done().map_err(fail)?;
                    sel
                };
                let table = tables.get_mut(name).expect("checked above");
                let ncols = table.first().map_or(0, |r| r.len());
                let rows = rs.resolve(table.len()).map_err(fail)?;
                let cols = cs.resolve(ncols).map_err(fail)?;
                match value {
                    Val::Scalar(v) => {
                        for &r in &rows {
                            for &c in &cols {
                                table[r][c] = v;
                            }
                        }
                    }
                    Val::Mat { data, .. } => {
                        if data.len() != rows.len() * cols.len() {
                            return Err(fail(format!(
                                "{} values for a {}x{} selection",
                                data.len(),
                                rows.len(),
                                cols.len()
                            )));
                        }
                        let mut it = data.into_iter();
                        for &r in &rows {
                            for &c in &cols {
                                table[r][c] = it.next().expect("length checked");
                            }
                        }
                    }
                }
            }
            _ => log::warn!("ignoring statement '{stmt}'"),
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// network construction

/// Conversion settings of a distribution case.
#[derive(Debug, Clone, PartialEq)]
pub struct DnOptions {
    pub id: usize,
    pub name: String,
    pub system_base_mva: f64,
    /// Squared voltage bounds, pu².
    pub voltage_bounds: [f64; 2],
    /// Line limit for `rateA = 0`: this factor times the base-case flow...
    pub line_limit_factor: f64,
    /// ...but never below this value, MVA.
    pub min_line_limit_mva: f64,
    /// Interface limit as a multiple of the total apparent load.
    pub interface_limit_factor: f64,
}

impl Default for DnOptions {
    fn default() -> Self {
        Self {
            id: 0,
            name: String::new(),
            system_base_mva: 100.0,
            voltage_bounds: [0.95 * 0.95, 1.05 * 1.05],
            line_limit_factor: 1.5,
            min_line_limit_mva: 0.1,
            interface_limit_factor: 2.0,
        }
    }
}

/// Builds a radial distribution network rooted at the case's reference bus.
///
/// Loads and non-reference generators become net injections in MW/MVAr,
/// impedances are rebased to `system_base_mva`.
pub fn to_distribution_network<S: Scalar>(raw: &RawCase, opts: &DnOptions) -> Result<DistributionNetwork<S>, CaseError> {
    let parent = raw.radial_parents()?;
    let n = raw.bus.len();
    let root = parent.iter().position(|p| p.is_none()).ok_or(CaseError::NoReference)?;

    let mut pair_row = HashMap::new();
    for (k, r) in raw.in_service_branches() {
        let (a, b) = (raw.index[&(r[F_BUS] as u32)], raw.index[&(r[T_BUS] as u32)]);
        pair_row.entry((a.min(b), a.max(b))).or_insert(k);
    }
    let rebase = opts.system_base_mva / raw.base_mva;
    let mut lines = Vec::with_capacity(n.saturating_sub(1));
    let mut rate = Vec::with_capacity(n.saturating_sub(1));
    for (i, p) in parent.iter().enumerate() {
        if let Some(p) = *p {
            let row = &raw.branch[pair_row[&(i.min(p), i.max(p))]];
            lines.push(DnLine { from: p, to: i, r: S::lit(row[BR_R] * rebase), x: S::lit(row[BR_X] * rebase), s_max: S::one() });
            rate.push(row[RATE_A]);
        }
    }

    let mut inj: Vec<f64> = raw.bus.iter().map(|r| -r[PD]).collect();
    let mut inj_re: Vec<f64> = raw.bus.iter().map(|r| -r[QD]).collect();
    for g in raw.in_service_gens() {
        let i = raw.index[&(g[GEN_BUS] as u32)];
        if i != root {
            inj[i] += g[PG];
            inj_re[i] += g[QG];
        }
    }
    inj[root] = 0.0;
    inj_re[root] = 0.0;
    let total_s: f64 = inj.iter().zip(&inj_re).map(|(p, q)| p.hypot(*q)).sum();
    let z_limit = (opts.interface_limit_factor * total_s).max(1e-3);

    let [v_lo, v_hi] = opts.voltage_bounds;
    let v0 = raw.bus[root][VM].powi(2);
    let data = DistributionNetworkData {
        id: opts.id,
        name: if opts.name.is_empty() { raw.name.clone() } else { opts.name.clone() },
        bus_ids: raw.bus_ids(),
        injection: inj.iter().map(|&v| S::lit(v)).collect(),
        injection_re: inj_re.iter().map(|&v| S::lit(v)).collect(),
        root,
        lines,
        v0: S::lit(v0),
        v_min: vec![S::lit(v_lo); n],
        v_max: vec![S::lit(v_hi); n],
        z_limit: S::lit(z_limit),
        z_re_min: S::lit(-z_limit),
        z_re_max: S::lit(z_limit),
        base_mva: S::lit(opts.system_base_mva),
    };
    let dn = DistributionNetwork::new(data)?;
    let base = run_linear_pf(&dn, &[], &[]).expect("no resources");
    let limits: Vec<S> = rate
        .iter()
        .enumerate()
        .map(|(k, &ra)| {
            if ra > 0.0 {
                S::lit(ra)
            } else {
                let s = base.pf[k].as_f64().hypot(base.qf[k].as_f64());
                S::lit((opts.line_limit_factor * s).max(opts.min_line_limit_mva))
            }
        })
        .collect();
    Ok(dn.with_line_limits(&limits))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TnOptions {
    /// Limit for `rateA = 0`: this factor times the base-case DC flow...
    pub line_limit_factor: f64,
    /// ...but never below this value, MW.
    pub min_line_limit_mw: f64,
}

impl Default for TnOptions {
    fn default() -> Self {
        Self { line_limit_factor: 1.5, min_line_limit_mw: 30.0 }
    }
}

/// Builds the PTDF transmission model; `dn_attach` lists original bus ids.
pub fn to_transmission_network<S: Scalar>(
    raw: &RawCase,
    opts: &TnOptions,
    dn_attach: &[u32],
) -> Result<TransmissionNetwork<S>, CaseError> {
    let refs = raw.reference_buses();
    let slack = match refs.as_slice() {
        [] => return Err(CaseError::NoReference),
        [s, ..] => *s,
    };
    let mut inj: Vec<f64> = raw.bus.iter().map(|r| -r[PD]).collect();
    for g in raw.in_service_gens() {
        inj[raw.index[&(g[GEN_BUS] as u32)]] += g[PG];
    }
    let mut lines = Vec::new();
    let mut rate = Vec::new();
    for (k, r) in raw.in_service_branches() {
        if !(r[BR_X] > 0.0) {
            return Err(CaseError::BadReactance(k));
        }
        lines.push(TnLine {
            from: raw.index[&(r[F_BUS] as u32)],
            to: raw.index[&(r[T_BUS] as u32)],
            reactance: S::lit(r[BR_X]),
            limit: S::one(),
        });
        rate.push(r[RATE_A]);
    }
    let attach = dn_attach
        .iter()
        .map(|&id| raw.bus_index(id).ok_or(CaseError::UnknownBus { table: "dn attachment", id: id as f64 }))
        .collect::<Result<Vec<_>, _>>()?;
    let tn = TransmissionNetwork::new(raw.bus_ids(), inj.iter().map(|&v| S::lit(v)).collect(), lines, slack, attach)?;
    let flows = tn.ptdf.flows(&tn.injection);
    let limits: Vec<S> = rate
        .iter()
        .zip(&flows)
        .map(|(&ra, f)| {
            if ra > 0.0 {
                S::lit(ra)
            } else {
                S::lit((opts.line_limit_factor * f.as_f64().abs()).max(opts.min_line_limit_mw))
            }
        })
        .collect();
    Ok(tn.with_line_limits(&limits))
}

// ---------------------------------------------------------------------------
// scenario configuration

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DnCaseSpec {
    pub path: PathBuf,
    /// Original id of the transmission bus the feeder hangs off.
    pub attach_bus: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceCounts {
    pub tn_upward: usize,
    pub tn_downward: usize,
    /// Co-located upward/downward pairs per distribution network.
    pub dn_shiftable_pairs: usize,
    /// Extra upward generation bids per distribution network.
    pub dn_generators: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceRanges {
    pub dn_upward: [f64; 2],
    pub dn_downward: [f64; 2],
    pub tn_upward: [f64; 2],
    pub tn_downward: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    pub dn_line_limit_factor: f64,
    pub dn_min_line_limit_mva: f64,
    pub dn_interface_limit_factor: f64,
    pub tn_line_limit_factor: f64,
    pub tn_min_line_limit_mw: f64,
}

/// Everything needed to replay a scenario set. Paths are absolute after
/// [`load_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub case_set: u8,
    pub tn_case: PathBuf,
    pub dn_cases: Vec<DnCaseSpec>,
    /// Load multiplier range, sampled per network and instance.
    pub load_scale_range: [f64; 2],
    /// Imbalance as a share of transmission load, sampled per instance.
    pub imbalance_fraction: [f64; 2],
    pub resource_counts: ResourceCounts,
    pub price_ranges: PriceRanges,
    /// Distribution bid volume range, MW.
    pub quantity_range: [f64; 2],
    /// Transmission bid volume range, MW.
    pub tn_quantity_range: [f64; 2],
    pub polygon_sides: usize,
    /// Squared voltage bounds, pu².
    pub voltage_bounds: [f64; 2],
    pub alpha: f64,
    pub system_base_mva: f64,
    pub limits: LimitConfig,
    /// Draws allowed per instance to find a congestion-free base case.
    pub max_resample: usize,
}

fn bundled(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(file)
}

impl ScenarioConfig {
    /// Built-in defaults of case set 1 (downward need, shiftable loads) or
    /// case set 2 (upward need, shiftable loads and generation).
    pub fn case_set(n: u8) -> Self {
        let mut cfg = Self {
            schema_version: SCHEMA_VERSION,
            seed: 20240101,
            case_set: n,
            tn_case: bundled("case14.m"),
            dn_cases: vec![
                DnCaseSpec { path: bundled("case69.m"), attach_bus: 9 },
                DnCaseSpec { path: bundled("case141.m"), attach_bus: 14 },
            ],
            load_scale_range: [0.4, 0.7],
            imbalance_fraction: [0.02, 0.04],
            resource_counts: ResourceCounts { tn_upward: 5, tn_downward: 5, dn_shiftable_pairs: 5, dn_generators: 0 },
            price_ranges: PriceRanges {
                dn_upward: [35.0, 55.0],
                dn_downward: [14.0, 34.0],
                tn_upward: [65.0, 75.0],
                tn_downward: [1.0, 11.0],
            },
            quantity_range: [0.05, 0.2],
            tn_quantity_range: [5.0, 15.0],
            polygon_sides: 12,
            voltage_bounds: [0.95 * 0.95, 1.05 * 1.05],
            alpha: 0.33,
            system_base_mva: 100.0,
            limits: LimitConfig {
                dn_line_limit_factor: 1.5,
                dn_min_line_limit_mva: 0.1,
                dn_interface_limit_factor: 2.0,
                tn_line_limit_factor: 1.5,
                tn_min_line_limit_mw: 30.0,
            },
            max_resample: 50,
        };
        if n == 2 {
            cfg.seed = 20240202;
            cfg.resource_counts.dn_generators = 16;
            cfg.imbalance_fraction = [0.04, 0.08];
        }
        cfg
    }

    /// `+1` for a generation surplus (downward need), `-1` for a deficit.
    pub fn imbalance_sign(&self) -> f64 {
        if self.case_set == 2 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        let bad = |m: String| Err(CaseError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        if !matches!(self.case_set, 1 | 2) {
            return bad(format!("case_set must be 1 or 2, got {}", self.case_set));
        }
        let ranges = [
            ("load_scale_range", self.load_scale_range, 0.0),
            ("imbalance_fraction", self.imbalance_fraction, 0.0),
            ("quantity_range", self.quantity_range, f64::MIN_POSITIVE),
            ("tn_quantity_range", self.tn_quantity_range, f64::MIN_POSITIVE),
            ("price_ranges.dn_upward", self.price_ranges.dn_upward, f64::MIN_POSITIVE),
            ("price_ranges.dn_downward", self.price_ranges.dn_downward, f64::MIN_POSITIVE),
            ("price_ranges.tn_upward", self.price_ranges.tn_upward, f64::MIN_POSITIVE),
            ("price_ranges.tn_downward", self.price_ranges.tn_downward, f64::MIN_POSITIVE),
        ];
        for (name, [lo, hi], min) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo >= min && lo <= hi) {
                return bad(format!("{name} must satisfy {min} <= lo <= hi, got [{lo}, {hi}]"));
            }
        }
        if self.polygon_sides < 4 {
            return bad("polygon_sides must be at least 4".into());
        }
        let [vl, vh] = self.voltage_bounds;
        if !(vl > 0.0 && vl < vh) {
            return bad("voltage_bounds must satisfy 0 < lo < hi".into());
        }
        if !(self.alpha >= 0.0) || !(self.system_base_mva > 0.0) {
            return bad("alpha must be >= 0 and system_base_mva > 0".into());
        }
        let l = &self.limits;
        if ![l.dn_line_limit_factor, l.dn_min_line_limit_mva, l.dn_interface_limit_factor, l.tn_line_limit_factor, l.tn_min_line_limit_mw]
            .iter()
            .all(|&v| v > 0.0)
        {
            return bad("limit settings must be positive".into());
        }
        if self.dn_cases.is_empty() {
            return bad("at least one distribution case is required".into());
        }
        let rc = &self.resource_counts;
        if rc.dn_shiftable_pairs + rc.dn_generators == 0 {
            return bad("distribution networks need at least one resource".into());
        }
        if self.max_resample == 0 {
            return bad("max_resample must be at least 1".into());
        }
        Ok(())
    }

    pub fn dn_options(&self, id: usize, name: &str) -> DnOptions {
        DnOptions {
            id,
            name: name.to_string(),
            system_base_mva: self.system_base_mva,
            voltage_bounds: self.voltage_bounds,
            line_limit_factor: self.limits.dn_line_limit_factor,
            min_line_limit_mva: self.limits.dn_min_line_limit_mva,
            interface_limit_factor: self.limits.dn_interface_limit_factor,
        }
    }

    pub fn tn_options(&self) -> TnOptions {
        TnOptions { line_limit_factor: self.limits.tn_line_limit_factor, min_line_limit_mw: self.limits.tn_min_line_limit_mw }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::case_set(1)
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses a TOML scenario. Missing keys take the defaults of the file's
/// `case_set`; relative paths are resolved against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ScenarioConfig, CaseError> {
    let user: toml::Value = toml::from_str(text).map_err(|e| CaseError::Config(e.to_string()))?;
    let case_set = match user.get("case_set") {
        None => 1,
        Some(v) => v
            .as_integer()
            .and_then(|i| u8::try_from(i).ok())
            .ok_or_else(|| CaseError::Config("case_set must be 1 or 2".into()))?,
    };
    let mut merged = toml::Value::try_from(ScenarioConfig::case_set(case_set)).map_err(|e| CaseError::Config(e.to_string()))?;
    merge(&mut merged, user);
    let mut cfg: ScenarioConfig = merged.try_into().map_err(|e: toml::de::Error| CaseError::Config(e.to_string()))?;
    if cfg.tn_case.is_relative() {
        cfg.tn_case = base_dir.join(&cfg.tn_case);
    }
    for d in &mut cfg.dn_cases {
        if d.path.is_relative() {
            d.path = base_dir.join(&d.path);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, CaseError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

// ---------------------------------------------------------------------------
// resources

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn pick<R: Rng>(rng: &mut R, buses: &[usize]) -> usize {
    buses[rng.random_range(0..buses.len())]
}

/// Transmission bids at uniformly drawn buses.
pub fn attach_tn_resources<S: Scalar, R: Rng>(
    tn: &TransmissionNetwork<S>,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<Vec<FlexResource<S>>, CaseError> {
    let buses: Vec<usize> = (0..tn.n_buses()).collect();
    if buses.is_empty() {
        return Err(CaseError::EmptyBusSet("transmission resources".into()));
    }
    let mut out = Vec::new();
    for k in 0..cfg.resource_counts.tn_upward {
        let bus = pick(rng, &buses);
        let q = uniform(rng, cfg.tn_quantity_range);
        let c = uniform(rng, cfg.price_ranges.tn_upward);
        out.push(FlexResource::upward(format!("T-up{k}"), NetworkId::Transmission, bus, S::lit(q), S::lit(c), S::lit(cfg.alpha))?);
    }
    for k in 0..cfg.resource_counts.tn_downward {
        let bus = pick(rng, &buses);
        let q = uniform(rng, cfg.tn_quantity_range);
        let c = uniform(rng, cfg.price_ranges.tn_downward);
        out.push(FlexResource::downward(format!("T-dn{k}"), NetworkId::Transmission, bus, S::lit(-q), S::lit(c), S::lit(cfg.alpha))?);
    }
    Ok(out)
}

/// Distribution bids: shiftable-load pairs at non-root buses, then
/// generation bids at `dg_buses`.
pub fn attach_dn_resources<S: Scalar, R: Rng>(
    dn: &DistributionNetwork<S>,
    dg_buses: &[usize],
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<Vec<FlexResource<S>>, CaseError> {
    let counts = &cfg.resource_counts;
    let buses: Vec<usize> = (0..dn.n_buses()).filter(|&i| i != dn.root).collect();
    if buses.is_empty() && counts.dn_shiftable_pairs > 0 {
        return Err(CaseError::EmptyBusSet(format!("shiftable loads in {}", dn.name)));
    }
    if dg_buses.is_empty() && counts.dn_generators > 0 {
        return Err(CaseError::EmptyBusSet(format!("generation in {}", dn.name)));
    }
    let net = NetworkId::Distribution(dn.id);
    let alpha = S::lit(cfg.alpha);
    let mut out = Vec::new();
    for k in 0..counts.dn_shiftable_pairs {
        let bus = pick(rng, &buses);
        let q = S::lit(uniform(rng, cfg.quantity_range));
        let c_up = S::lit(uniform(rng, cfg.price_ranges.dn_upward));
        let c_dn = S::lit(uniform(rng, cfg.price_ranges.dn_downward));
        out.push(FlexResource::upward(format!("D{}-sl{k}-up", dn.id), net, bus, q, c_up, alpha)?);
        out.push(FlexResource::downward(format!("D{}-sl{k}-dn", dn.id), net, bus, -q, c_dn, alpha)?);
    }
    for k in 0..counts.dn_generators {
        let bus = pick(rng, dg_buses);
        let q = S::lit(uniform(rng, cfg.quantity_range));
        let c = S::lit(uniform(rng, cfg.price_ranges.dn_upward));
        out.push(FlexResource::upward(format!("D{}-dg{k}", dn.id), net, bus, q, c, alpha)?);
    }
    Ok(out)
}

/// All bids of one instance: transmission first, then each distribution
/// network in order. `dg_buses[m]` lists generation candidates of network `m`.
pub fn attach_resources<S: Scalar, R: Rng>(
    tn: &TransmissionNetwork<S>,
    dns: &[DistributionNetwork<S>],
    dg_buses: &[Vec<usize>],
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<Vec<FlexResource<S>>, CaseError> {
    let mut out = attach_tn_resources(tn, cfg, rng)?;
    for (dn, dg) in dns.iter().zip(dg_buses) {
        out.extend(attach_dn_resources(dn, dg, cfg, rng)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// result files

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance_id: usize,
    pub regime: String,
    pub weight_rule: String,
    pub cost: Option<f64>,
    pub eta_pct: Option<f64>,
    pub violations_v: Option<usize>,
    pub violations_flow: Option<usize>,
    pub delta_u_pct: Option<f64>,
    pub delta_d_pct: Option<f64>,
    pub discarded_flag: u8,
}

/// One row of the envelope sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub instance_id: usize,
    pub resource_id: String,
    pub eps_min: f64,
    pub eps_max: f64,
    pub method: String,
    pub weight_rule: String,
}

pub fn write_csv<T: Serialize, W: io::Write>(rows: &[T], out: W) -> Result<(), CaseError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| CaseError::Io { path: PathBuf::from("<csv>"), source })?;
    Ok(())
}

pub fn read_csv<T: serde::de::DeserializeOwned, R: io::Read>(input: R) -> Result<Vec<T>, CaseError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(CaseError::from)).collect()
}
