//! Batch front end: text specs for measures, test functions and frequency
//! grids, a serializable run configuration, and the report writers behind
//! the `pklab` binary.
//!
//! Measure specs:
//!
//! ```text
//! gaussian(dim=N)
//! product(hermite6(delta=D) x K)        also `×` or `*`, or `, dim=N`
//! product(gaussian_var(s1,...,sN))
//! product(normal, hermite6(0.004) x 2)  factors may be mixed
//! ```
//!
//! Test functions for `stein`: `cosine(t1,...,tN)` or
//! `poly(x1^3 - 0.5*x1*x2 + 2)`. Frequency grids: `default` or
//! `log(lo,hi,count)`.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{
    build_gauss_hermite, build_product, check_moments, MarginalSpec, MeasureKind, MomentReport, QuadratureMeasure,
    DEFAULT_MOMENT_TOL,
};
use crate::polyfield::{MultiIndex, Polynomial};
use crate::spectral::{cpk_lower_bound, EstimateResiduals};
use crate::stein::{stein_report, ScalarField};
use crate::zolotarev::{
    stability_report_with, theta_grid, zol2_lower, CosineTest, DEFAULT_GRID_COUNT, DEFAULT_GRID_RANGE, DEFAULT_SLACK,
    RHS_CONSTANT,
};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "PKLAB_THREADS";

/// A parsed measure description; [`MeasureSpec::build`] turns it into a
/// quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureSpec {
    Gaussian { dim: usize },
    Product(Vec<MarginalSpec>),
}

impl MeasureSpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { dim } => *dim,
            Self::Product(f) => f.len(),
        }
    }

    pub fn build(&self, nodes_per_axis: usize) -> Result<QuadratureMeasure> {
        match self {
            Self::Gaussian { dim } => build_gauss_hermite(*dim, nodes_per_axis),
            Self::Product(f) => build_product(f, nodes_per_axis),
        }
    }

    /// Inverse of the `kind`/`params` pair of a measure dump.
    pub fn from_kind(kind: &MeasureKind, dim: usize) -> Result<Self> {
        match kind {
            MeasureKind::Gaussian => Ok(Self::Gaussian { dim }),
            MeasureKind::Product(f) => Ok(Self::Product(f.clone())),
            MeasureKind::Custom => Err(Error::InvalidArgument("custom measures have no spec".into())),
        }
    }
}

impl fmt::Display for MeasureSpec {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian { dim } => write!(out, "gaussian(dim={dim})"),
            Self::Product(factors) => {
                // runs of equal factors print as `f x K`
                let mut parts = Vec::new();
                let mut i = 0;
                while i < factors.len() {
                    let mut j = i + 1;
                    while j < factors.len() && factors[j] == factors[i] {
                        j += 1;
                    }
                    let name = match factors[i] {
                        MarginalSpec::StandardNormal => "normal".to_string(),
                        MarginalSpec::Hermite6 { delta } => format!("hermite6(delta={delta})"),
                        MarginalSpec::GaussianVar { sigma2 } => format!("gaussian_var({sigma2})"),
                    };
                    parts.push(if j - i > 1 { format!("{name} x {}", j - i) } else { name });
                    i = j;
                }
                write!(out, "product({})", parts.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(String),
    Symbol(char),
}

impl Token {
    fn text(&self) -> String {
        match self {
            Token::Ident(s) | Token::Number(s) => s.clone(),
            Token::Symbol(c) => c.to_string(),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if c.is_ascii_digit() || c == '.' || ((c == '-' || c == '+') && starts_number(&chars, i + 1)) {
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push(Token::Number(chars[start..i].iter().collect()));
        } else if "(),=×*".contains(c) {
            out.push(Token::Symbol(c));
            i += 1;
        } else {
            return Err(Error::Parse { token: c.to_string(), message: "unexpected character".into() });
        }
    }
    Ok(out)
}

fn starts_number(chars: &[char], i: usize) -> bool {
    chars.get(i).is_some_and(|c| c.is_ascii_digit() || *c == '.')
}

struct Cursor {
    tokens: Vec<Token>,
    pos: usize,
}

impl Cursor {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&Token> {
        self.tokens.get(self.pos + offset)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn here(&self) -> String {
        self.peek().map_or_else(|| "<end>".to_string(), Token::text)
    }

    fn expect_symbol(&mut self, c: char) -> Result<()> {
        match self.next() {
            Some(Token::Symbol(s)) if s == c => Ok(()),
            other => Err(Error::Parse {
                token: other.map_or_else(|| "<end>".to_string(), |t| t.text()),
                message: format!("expected `{c}`"),
            }),
        }
    }

    fn eat_symbol(&mut self, c: char) -> bool {
        if self.peek() == Some(&Token::Symbol(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn number(&mut self) -> Result<f64> {
        match self.next() {
            Some(Token::Number(s)) => {
                s.parse::<f64>().map_err(|_| Error::Parse { token: s.clone(), message: "not a number".into() })
            }
            other => Err(Error::Parse {
                token: other.map_or_else(|| "<end>".to_string(), |t| t.text()),
                message: "expected a number".into(),
            }),
        }
    }

    fn count(&mut self) -> Result<usize> {
        let tok = self.here();
        let v = self.number()?;
        if v < 1.0 || v.fract() != 0.0 || v > 1e6 {
            return Err(Error::Parse { token: tok, message: "expected a positive integer".into() });
        }
        Ok(v as usize)
    }

    /// `key=` prefix, if present.
    fn eat_key(&mut self, key: &str) -> bool {
        if self.peek() == Some(&Token::Ident(key.into())) && self.peek_at(1) == Some(&Token::Symbol('=')) {
            self.pos += 2;
            true
        } else {
            false
        }
    }

    fn finish(&self) -> Result<()> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(Error::Parse { token: t.text(), message: "trailing input".into() }),
        }
    }
}

pub fn parse_measure_spec(text: &str) -> Result<MeasureSpec> {
    let mut cur = Cursor { tokens: tokenize(text)?, pos: 0 };
    let head = cur.next();
    let spec = match head {
        Some(Token::Ident(ref name)) if name == "gaussian" => {
            cur.expect_symbol('(')?;
            if !cur.eat_key("dim") {
                return Err(Error::Parse { token: cur.here(), message: "expected `dim=`".into() });
            }
            let dim = cur.count()?;
            cur.expect_symbol(')')?;
            MeasureSpec::Gaussian { dim }
        }
        Some(Token::Ident(ref name)) if name == "product" => {
            cur.expect_symbol('(')?;
            let mut factors: Vec<MarginalSpec> = Vec::new();
            let mut dim = None;
            loop {
                if cur.eat_key("dim") {
                    dim = Some(cur.count()?);
                } else {
                    let group = parse_factor(&mut cur)?;
                    let repeat = if cur.eat_symbol('×')
                        || cur.eat_symbol('*')
                        || (cur.peek() == Some(&Token::Ident("x".into())) && cur.next().is_some())
                    {
                        cur.count()?
                    } else {
                        1
                    };
                    for _ in 0..repeat {
                        factors.extend_from_slice(&group);
                    }
                }
                if !cur.eat_symbol(',') {
                    break;
                }
            }
            cur.expect_symbol(')')?;
            if let Some(n) = dim {
                if factors.len() == 1 {
                    factors = vec![factors[0]; n];
                } else if factors.len() != n {
                    return Err(Error::Parse {
                        token: format!("dim={n}"),
                        message: format!("product has {} factors", factors.len()),
                    });
                }
            }
            if factors.is_empty() {
                return Err(Error::Parse { token: text.into(), message: "product has no factors".into() });
            }
            MeasureSpec::Product(factors)
        }
        other => {
            return Err(Error::Parse {
                token: other.map_or_else(|| "<end>".to_string(), |t| t.text()),
                message: "unknown measure kind (expected `gaussian` or `product`)".into(),
            })
        }
    };
    cur.finish()?;
    if spec.dim() < 2 {
        return Err(Error::InvalidArgument(format!("dimension must be at least 2, got {}", spec.dim())));
    }
    if let MeasureSpec::Product(f) = &spec {
        for m in f {
            m.validate()?;
        }
    }
    Ok(spec)
}

fn parse_factor(cur: &mut Cursor) -> Result<Vec<MarginalSpec>> {
    let tok = cur.here();
    match cur.next() {
        Some(Token::Ident(name)) => match name.as_str() {
            "hermite6" => {
                cur.expect_symbol('(')?;
                cur.eat_key("delta");
                let delta = cur.number()?;
                cur.expect_symbol(')')?;
                Ok(vec![MarginalSpec::Hermite6 { delta }])
            }
            "gaussian_var" => {
                cur.expect_symbol('(')?;
                let mut out = vec![MarginalSpec::GaussianVar { sigma2: cur.number()? }];
                while cur.eat_symbol(',') {
                    out.push(MarginalSpec::GaussianVar { sigma2: cur.number()? });
                }
                cur.expect_symbol(')')?;
                Ok(out)
            }
            "normal" | "standard_normal" => {
                if cur.eat_symbol('(') {
                    cur.expect_symbol(')')?;
                }
                Ok(vec![MarginalSpec::StandardNormal])
            }
            _ => Err(Error::Parse { token: tok, message: "unknown marginal kind".into() }),
        },
        _ => Err(Error::Parse { token: tok, message: "expected a marginal".into() }),
    }
}

/// `cosine(t1,...,tN)` or `poly(<sum of monomials in x1..xN>)`.
pub fn parse_field_spec(text: &str, dim: usize) -> Result<ScalarField> {
    let trimmed = text.trim();
    let (head, body) = trimmed
        .split_once('(')
        .filter(|_| trimmed.ends_with(')'))
        .ok_or_else(|| Error::Parse { token: trimmed.into(), message: "expected `name(...)`".into() })?;
    let body = &body[..body.len() - 1];
    match head.trim() {
        "cosine" | "cos" => {
            let theta = body
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse { token: s.trim().into(), message: "not a number".into() })
                })
                .collect::<Result<Vec<_>>>()?;
            if theta.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: theta.len() });
            }
            ScalarField::cosine(theta)
        }
        "poly" => Ok(ScalarField::Polynomial(parse_polynomial(body, dim)?)),
        other => Err(Error::Parse { token: other.into(), message: "unknown test function".into() }),
    }
}

/// Sum of terms `c*x1^a*x2^b`, with `+`/`-` between terms.
pub fn parse_polynomial(text: &str, dim: usize) -> Result<Polynomial> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err(Error::Parse { token: text.into(), message: "empty polynomial".into() });
    }
    // split on + and - that are not exponent signs
    let chars: Vec<char> = compact.chars().collect();
    let mut terms = Vec::new();
    let mut start = 0;
    for i in 1..chars.len() {
        let c = chars[i];
        if (c == '+' || c == '-') && !matches!(chars[i - 1], 'e' | 'E' | '^' | '*') {
            terms.push(chars[start..i].iter().collect::<String>());
            start = i;
        }
    }
    terms.push(chars[start..].iter().collect());
    let mut p = Polynomial::zero(dim);
    for term in terms {
        let (sign, rest) = match term.strip_prefix('-') {
            Some(r) => (-1.0, r),
            None => (1.0, term.strip_prefix('+').unwrap_or(&term)),
        };
        let mut coeff = sign;
        let mut exps = vec![0u32; dim];
        for factor in rest.split('*') {
            if let Some(var) = factor.strip_prefix('x') {
                let (idx, pow) = match var.split_once('^') {
                    Some((i, e)) => (i, e),
                    None => (var, "1"),
                };
                let k: usize = idx.parse().ok().filter(|k| (1..=dim).contains(k)).ok_or_else(|| Error::Parse {
                    token: factor.into(),
                    message: format!("variable must be x1..x{dim}"),
                })?;
                let e: u32 =
                    pow.parse().map_err(|_| Error::Parse { token: factor.into(), message: "bad exponent".into() })?;
                exps[k - 1] += e;
            } else {
                coeff *= factor
                    .parse::<f64>()
                    .map_err(|_| Error::Parse { token: factor.into(), message: "expected a number or x<k>".into() })?;
            }
        }
        p.add_term(MultiIndex::new(exps), coeff);
    }
    Ok(p)
}

/// Frequency grid description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaGridSpec {
    /// 64 log-spaced magnitudes in `[0.25, 8]`.
    Default,
    Log {
        lo: f64,
        hi: f64,
        count: usize,
    },
}

impl ThetaGridSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t == "default" {
            return Ok(Self::Default);
        }
        let mut cur = Cursor { tokens: tokenize(t)?, pos: 0 };
        match cur.next() {
            Some(Token::Ident(name)) if name == "log" => {
                cur.expect_symbol('(')?;
                let lo = cur.number()?;
                cur.expect_symbol(',')?;
                let hi = cur.number()?;
                cur.expect_symbol(',')?;
                let count = cur.count()?;
                cur.expect_symbol(')')?;
                cur.finish()?;
                Ok(Self::Log { lo, hi, count })
            }
            other => Err(Error::Parse {
                token: other.map_or_else(|| "<end>".to_string(), |t| t.text()),
                message: "expected `default` or `log(lo,hi,count)`".into(),
            }),
        }
    }

    pub fn build(&self, dim: usize) -> Result<Vec<CosineTest>> {
        match *self {
            Self::Default => theta_grid(dim, DEFAULT_GRID_RANGE.0, DEFAULT_GRID_RANGE.1, DEFAULT_GRID_COUNT),
            Self::Log { lo, hi, count } => theta_grid(dim, lo, hi, count),
        }
    }
}

impl fmt::Display for ThetaGridSpec {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Default => write!(out, "default"),
            Self::Log { lo, hi, count } => write!(out, "log({lo},{hi},{count})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Moments,
    Cpk,
    Stein,
    Zol2,
    Stability,
    Sweep,
}

/// Everything one invocation needs. Absent fields take per-command defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: Command,
    pub measure: Option<String>,
    pub degree: usize,
    /// Nodes per axis; `2·degree + 2` when absent.
    pub nodes_per_axis: Option<usize>,
    pub theta_grid: String,
    pub outputs: Vec<PathBuf>,
    pub slack: f64,
    pub rhs_constant: f64,
    /// Sweep parameters.
    pub family: String,
    pub deltas: Vec<f64>,
    pub dim: usize,
    /// Test function for `stein`.
    pub f: Option<String>,
    /// Second measure for `zol2`; the standard Gaussian when absent.
    pub reference: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Moments,
            measure: None,
            degree: 4,
            nodes_per_axis: None,
            theta_grid: "default".into(),
            outputs: Vec::new(),
            slack: DEFAULT_SLACK,
            rhs_constant: RHS_CONSTANT,
            family: "hermite6".into(),
            deltas: vec![0.002, 0.004, 0.008],
            dim: 2,
            f: None,
            reference: None,
        }
    }
}

impl RunConfig {
    pub fn nodes(&self) -> usize {
        self.nodes_per_axis.unwrap_or(2 * self.degree + 2)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.nodes();
        if m < 2 || !m.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("nodes per axis must be even and ≥ 2, got {m}")));
        }
        if matches!(self.command, Command::Cpk | Command::Stability | Command::Sweep) {
            if self.degree < 2 {
                return Err(Error::InvalidArgument(format!("degree must be ≥ 2, got {}", self.degree)));
            }
            if m < 2 * self.degree + 2 {
                return Err(Error::InvalidArgument(format!(
                    "nodes per axis must be ≥ 2·degree + 2 = {}, got {m}",
                    2 * self.degree + 2
                )));
            }
        }
        if self.command != Command::Sweep && self.measure.is_none() {
            return Err(Error::InvalidArgument("--measure is required".into()));
        }
        if self.slack.is_nan() || self.slack < 0.0 || self.rhs_constant.is_nan() || self.rhs_constant <= 0.0 {
            return Err(Error::InvalidArgument("slack must be ≥ 0 and the rhs constant > 0".into()));
        }
        Ok(())
    }

    fn measure_spec(&self) -> Result<MeasureSpec> {
        parse_measure_spec(self.measure.as_deref().unwrap_or_default())
    }
}

/// Serialized measure: spec fields, size, and its moment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureDump {
    pub dim: usize,
    pub m: usize,
    #[serde(flatten)]
    pub kind: MeasureKind,
    pub node_count: usize,
    pub moment_report: MomentReport,
}

impl MeasureDump {
    pub fn new(mu: &QuadratureMeasure) -> Self {
        Self {
            dim: mu.dim(),
            m: mu.nodes_per_axis(),
            kind: mu.kind().clone(),
            node_count: mu.len(),
            moment_report: check_moments(mu, DEFAULT_MOMENT_TOL),
        }
    }

    pub fn spec(&self) -> Result<MeasureSpec> {
        MeasureSpec::from_kind(&self.kind, self.dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpkReport {
    pub measure_spec: String,
    pub degree: usize,
    pub basis_size: usize,
    pub cpk_lower: f64,
    pub witness_coeffs: Vec<f64>,
    pub residuals: CpkResiduals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpkResiduals {
    #[serde(flatten)]
    pub estimate: EstimateResiduals,
    pub exact_quadrature: bool,
    pub moments: MomentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaGridInfo {
    pub spec: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zol2Report {
    pub measure_spec: String,
    pub reference_spec: String,
    pub zol2_lower: f64,
    pub theta_grid: ThetaGridInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityJson {
    pub measure_spec: String,
    pub degree: usize,
    pub cpk_lower: f64,
    pub zol2_lower: f64,
    pub rhs_constant: f64,
    pub rhs: f64,
    pub consistent: bool,
    pub theta_grid: ThetaGridInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub cpk_lower: f64,
    pub zol2_lower: f64,
    pub rhs: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// RFC 4180 table with 17 significant digits per number.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,cpk_lower,zol2_lower,rhs,consistent\r\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\r\n",
                sig17(r.delta),
                sig17(r.cpk_lower),
                sig17(r.zol2_lower),
                sig17(r.rhs),
                r.consistent
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header.trim_end() != "delta,cpk_lower,zol2_lower,rhs,consistent" {
            return Err(Error::Parse { token: header.into(), message: "unexpected sweep header".into() });
        }
        let num =
            |s: &str| s.parse::<f64>().map_err(|_| Error::Parse { token: s.into(), message: "not a number".into() });
        let rows = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let cells: Vec<&str> = l.trim_end().split(',').collect();
                if cells.len() != 5 {
                    return Err(Error::Parse { token: l.into(), message: "expected 5 columns".into() });
                }
                Ok(SweepRow {
                    delta: num(cells[0])?,
                    cpk_lower: num(cells[1])?,
                    zol2_lower: num(cells[2])?,
                    rhs: num(cells[3])?,
                    consistent: cells[4]
                        .parse()
                        .map_err(|_| Error::Parse { token: cells[4].into(), message: "not a bool".into() })?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }
}

/// Decimal rendering with 17 significant digits; exponent form outside
/// `[1e-5, 1e17)`.
pub fn sig17(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { format!("{v}") };
    }
    let mag = v.abs().log10().floor() as i32;
    if (-5..17).contains(&mag) {
        let decimals = (16 - mag).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.16e}")
    }
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Process exit status: 0 success, 2 when the moment assumption fails.
    pub status: i32,
    /// Rendered primary artifact (JSON, or CSV for sweeps).
    pub body: String,
    pub written: Vec<PathBuf>,
}

pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let (status, json, csv) = match config.command {
        Command::Moments => {
            let mu = config.measure_spec()?.build(config.nodes_per_axis.unwrap_or(8))?;
            let dump = MeasureDump::new(&mu);
            let status = if dump.moment_report.passes { 0 } else { 2 };
            (status, to_json(&dump)?, None)
        }
        Command::Cpk => {
            let spec = config.measure_spec()?;
            let mu = spec.build(config.nodes())?;
            let est = cpk_lower_bound(&mu, config.degree)?;
            let report = CpkReport {
                measure_spec: spec.to_string(),
                degree: est.degree,
                basis_size: est.basis_size,
                cpk_lower: est.value,
                witness_coeffs: est.witness_coeffs.clone(),
                residuals: CpkResiduals {
                    estimate: est.residuals.clone(),
                    exact_quadrature: est.exact,
                    moments: check_moments(&mu, DEFAULT_MOMENT_TOL),
                },
            };
            (0, to_json(&report)?, None)
        }
        Command::Stein => {
            let spec = config.measure_spec()?;
            let mu = spec.build(config.nodes())?;
            let default_f = {
                let mut theta = vec!["0".to_string(); spec.dim()];
                theta[0] = "1".into();
                format!("cosine({})", theta.join(","))
            };
            let f_text = config.f.clone().unwrap_or(default_f);
            let f = parse_field_spec(&f_text, spec.dim())?;
            (0, to_json(&stein_report(&f, &f_text, &mu)?)?, None)
        }
        Command::Zol2 => {
            let spec = config.measure_spec()?;
            let reference = match &config.reference {
                Some(r) => parse_measure_spec(r)?,
                None => MeasureSpec::Gaussian { dim: spec.dim() },
            };
            let grid_spec = ThetaGridSpec::parse(&config.theta_grid)?;
            let grid = grid_spec.build(spec.dim())?;
            let mu = spec.build(config.nodes())?;
            let nu = reference.build(config.nodes())?;
            let report = Zol2Report {
                measure_spec: spec.to_string(),
                reference_spec: reference.to_string(),
                zol2_lower: zol2_lower(&mu, &nu, &grid)?,
                theta_grid: ThetaGridInfo { spec: grid_spec.to_string(), size: grid.len() },
            };
            (0, to_json(&report)?, None)
        }
        Command::Stability => {
            let spec = config.measure_spec()?;
            let grid_spec = ThetaGridSpec::parse(&config.theta_grid)?;
            let grid = grid_spec.build(spec.dim())?;
            let mu = spec.build(config.nodes())?;
            let r = stability_report_with(&mu, config.degree, &grid, config.slack, config.rhs_constant)?;
            let report = StabilityJson {
                measure_spec: spec.to_string(),
                degree: r.degree,
                cpk_lower: r.cpk_lower,
                zol2_lower: r.zol2_lower,
                rhs_constant: r.rhs_constant,
                rhs: r.rhs,
                consistent: r.consistent,
                theta_grid: ThetaGridInfo { spec: grid_spec.to_string(), size: r.theta_grid_size },
            };
            (0, to_json(&report)?, None)
        }
        Command::Sweep => {
            let result = sweep(config)?;
            (0, to_json(&result)?, Some(result.to_csv()))
        }
    };
    let mut written = Vec::new();
    for path in &config.outputs {
        let is_json = path.extension().is_some_and(|e| e == "json");
        let body = match (&csv, is_json) {
            (Some(c), false) => c,
            _ => &json,
        };
        write_file(path, body)?;
        written.push(path.clone());
    }
    Ok(RunOutcome { status, body: csv.unwrap_or(json), written })
}

fn sweep(config: &RunConfig) -> Result<SweepResult> {
    if config.family != "hermite6" {
        return Err(Error::Parse {
            token: config.family.clone(),
            message: "unknown family (expected `hermite6`)".into(),
        });
    }
    if config.deltas.is_empty() {
        return Err(Error::InvalidArgument("--deltas is empty".into()));
    }
    let grid = ThetaGridSpec::parse(&config.theta_grid)?.build(config.dim)?;
    let mut deltas = config.deltas.clone();
    deltas.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(deltas.len());
    for delta in deltas {
        let spec = MeasureSpec::Product(vec![MarginalSpec::Hermite6 { delta }; config.dim]);
        if let MeasureSpec::Product(f) = &spec {
            f[0].validate()?;
        }
        let mu = spec.build(config.nodes())?;
        let r = stability_report_with(&mu, config.degree, &grid, config.slack, config.rhs_constant)?;
        if r.cpk_lower < 1.0 - 1e-8 {
            return Err(Error::Conditioning(format!("estimate {} below one at delta {delta}", r.cpk_lower)));
        }
        rows.push(SweepRow {
            delta,
            cpk_lower: r.cpk_lower,
            zol2_lower: r.zol2_lower,
            rhs: r.rhs,
            consistent: r.consistent,
        });
    }
    Ok(SweepResult { rows })
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut file = fs::File::create(path)?;
    file.write_all(body.as_bytes())?;
    Ok(())
}

/// Caps the global worker pool at `PKLAB_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().ok().filter(|n| *n >= 1).ok_or_else(|| Error::Parse {
            token: v.clone(),
            message: format!("{THREADS_ENV} must be a positive integer"),
        })?;
        // a pool may already exist when embedded; keep it then
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Command-line interface of the `pklab` binary.
#[derive(Debug, Parser)]
#[command(name = "pklab", version, about = "Poincaré–Korn constants, Stein residuals and Zolotarev bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Check the moment assumption and dump the measure.
    Moments(CliArgs),
    /// Galerkin lower bound on the Poincaré–Korn constant.
    Cpk(CliArgs),
    /// Solve the Stein equation for a test function and report residuals.
    Stein(CliArgs),
    /// Cosine lower bound on the Zolotarev-2 distance.
    Zol2(CliArgs),
    /// Both sides of the stability inequality.
    Stability(CliArgs),
    /// Stability over a family of perturbation sizes, as CSV.
    Sweep(CliArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CliArgs {
    /// Measure spec, e.g. "product(hermite6(delta=0.008) x 2)".
    #[arg(long)]
    pub measure: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub degree: usize,
    /// Gauss–Hermite nodes per axis (even).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.002,0.004,0.008")]
    pub deltas: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value = "default")]
    pub theta_grid: String,
    /// Output file; repeatable. Standard output when absent.
    #[arg(long)]
    pub out: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SLACK)]
    pub slack: f64,
    #[arg(long, default_value_t = RHS_CONSTANT)]
    pub rhs_constant: f64,
    #[arg(long, default_value = "hermite6")]
    pub family: String,
    /// Test function for `stein`, e.g. "cosine(1,0)" or "poly(x1^3 - x2)".
    #[arg(long)]
    pub f: Option<String>,
    /// Second measure for `zol2`.
    #[arg(long)]
    pub reference: Option<String>,
    /// JSON run configuration; replaces all other flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Cli {
    pub fn into_config(self) -> Result<RunConfig> {
        let (command, a) = match self.command {
            CliCommand::Moments(a) => (Command::Moments, a),
            CliCommand::Cpk(a) => (Command::Cpk, a),
            CliCommand::Stein(a) => (Command::Stein, a),
            CliCommand::Zol2(a) => (Command::Zol2, a),
            CliCommand::Stability(a) => (Command::Stability, a),
            CliCommand::Sweep(a) => (Command::Sweep, a),
        };
        if let Some(path) = a.config {
            let text = fs::read_to_string(&path)?;
            let mut cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| Error::Parse { token: path.display().to_string(), message: e.to_string() })?;
            cfg.command = command;
            return Ok(cfg);
        }
        Ok(RunConfig {
            command,
            measure: a.measure,
            degree: a.degree,
            nodes_per_axis: a.m,
            theta_grid: a.theta_grid,
            outputs: a.out,
            slack: a.slack,
            rhs_constant: a.rhs_constant,
            family: a.family,
            deltas: a.deltas,
            dim: a.dim,
            f: a.f,
            reference: a.reference,
        })
    }
}

/// Parses arguments, runs, prints, and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = configure_threads().and_then(|_| cli.into_config()).and_then(|cfg| run(&cfg));
    match outcome {
        Ok(out) => {
            if out.written.is_empty() {
                print!("{}", out.body);
            }
            if out.status == 2 {
                eprintln!("pklab: measure fails the moment assumption");
            }
            out.status
        }
        Err(e) => {
            eprintln!("pklab: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::max_delta_h6;

    #[test]
    fn gaussian_spec() {
        assert_eq!(parse_measure_spec("gaussian(dim=3)").unwrap(), MeasureSpec::Gaussian { dim: 3 });
        assert!(parse_measure_spec("gaussian(3)").is_err());
    }

    #[test]
    fn product_spec_variants() {
        let h = MarginalSpec::Hermite6 { delta: 0.008 };
        let expect = MeasureSpec::Product(vec![h, h]);
        for text in [
            "product(hermite6(delta=0.008) x 2)",
            "product(hermite6(delta=0.008) × 2)",
            "product(hermite6(0.008)*2)",
            "product(hermite6(delta=0.008), dim=2)",
            "product(hermite6(delta=0.008) x 2, dim=2)",
        ] {
            assert_eq!(parse_measure_spec(text).unwrap(), expect, "{text}");
        }
        let v = parse_measure_spec("product(gaussian_var(2,1))").unwrap();
        assert_eq!(
            v,
            MeasureSpec::Product(vec![
                MarginalSpec::GaussianVar { sigma2: 2.0 },
                MarginalSpec::GaussianVar { sigma2: 1.0 }
            ])
        );
        let mixed = parse_measure_spec("product(normal, hermite6(0.004) x 2)").unwrap();
        assert_eq!(mixed.dim(), 3);
    }

    #[test]
    fn spec_display_round_trips() {
        for text in [
            "gaussian(dim=2)",
            "product(hermite6(delta=0.008) x 2)",
            "product(gaussian_var(2), gaussian_var(1))",
            "product(normal, hermite6(delta=0.004) x 2)",
        ] {
            let spec = parse_measure_spec(text).unwrap();
            assert_eq!(spec.to_string(), text);
            assert_eq!(parse_measure_spec(&spec.to_string()).unwrap(), spec);
        }
    }

    #[test]
    fn spec_errors_name_the_token() {
        match parse_measure_spec("laplace(dim=2)") {
            Err(Error::Parse { token, .. }) => assert_eq!(token, "laplace"),
            other => panic!("{other:?}"),
        }
        match parse_measure_spec("product(hermite7(0.001) x 2)") {
            Err(Error::Parse { token, .. }) => assert_eq!(token, "hermite7"),
            other => panic!("{other:?}"),
        }
        match parse_measure_spec("product(hermite6(0.001) x 2") {
            Err(Error::Parse { token, .. }) => assert_eq!(token, "<end>"),
            other => panic!("{other:?}"),
        }
        assert!(parse_measure_spec("product(hermite6(0.001) x 2, dim=3)").is_err());
        assert!(parse_measure_spec("gaussian(dim=1)").is_err());
        assert!(matches!(parse_measure_spec("product(hermite6(-0.001) x 2)"), Err(Error::PositivityViolation { .. })));
    }

    #[test]
    fn out_of_range_delta_cites_threshold() {
        let err = parse_measure_spec("product(hermite6(delta=0.05) x 2)").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(&format!("{:.6}", max_delta_h6())), "{msg}");
        assert!(msg.contains("0.0096"));
    }

    #[test]
    fn measure_dump_round_trips() {
        let spec = parse_measure_spec("product(hermite6(delta=0.008) x 2)").unwrap();
        let mu = spec.build(8).unwrap();
        let dump = MeasureDump::new(&mu);
        let json = serde_json::to_string(&dump).unwrap();
        let back: MeasureDump = serde_json::from_str(&json).unwrap();
        assert_eq!(back, dump);
        assert_eq!(back.spec().unwrap(), spec);
        let rebuilt = back.spec().unwrap().build(back.m).unwrap();
        assert_eq!(rebuilt.weights(), mu.weights());
    }

    #[test]
    fn field_specs() {
        let c = parse_field_spec("cosine(1, -0.5)", 2).unwrap();
        assert_eq!(c, ScalarField::Cosine { theta: vec![1.0, -0.5] });
        assert!(parse_field_spec("cosine(1)", 2).is_err());
        let p = parse_polynomial("x1^3 - 0.5*x1*x2 + 2 - x2^2*x1^0", 2).unwrap();
        let expect = Polynomial::from_terms(
            2,
            vec![(vec![3, 0], 1.0), (vec![1, 1], -0.5), (vec![0, 0], 2.0), (vec![0, 2], -1.0)],
        )
        .unwrap();
        assert_eq!(p, expect);
        assert!(parse_polynomial("x3", 2).is_err());
        assert!(parse_polynomial("2*y1", 2).is_err());
        assert_eq!(parse_polynomial("1e-3*x1", 2).unwrap().coefficient(&[1, 0]), 1e-3);
    }

    #[test]
    fn theta_grid_specs() {
        assert_eq!(ThetaGridSpec::parse("default").unwrap(), ThetaGridSpec::Default);
        let g = ThetaGridSpec::parse("log(0.5, 4, 10)").unwrap();
        assert_eq!(g, ThetaGridSpec::Log { lo: 0.5, hi: 4.0, count: 10 });
        assert_eq!(g.build(2).unwrap().len(), 30);
        assert!(ThetaGridSpec::parse("linear(0,1,2)").is_err());
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(sig17(0.002), "0.0020000000000000000");
        assert_eq!(sig17(1.0), "1.0000000000000000");
        assert_eq!(sig17(0.0), "0");
        for v in [0.123_456_789_012_345_68, 3.0e-9, 1.2345e20, -7.25] {
            assert_eq!(sig17(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig { command: Command::Cpk, measure: Some("gaussian(dim=2)".into()), ..Default::default() };
        assert!(c.validate().is_ok());
        c.nodes_per_axis = Some(7);
        assert!(c.validate().is_err());
        c.nodes_per_axis = Some(6);
        assert!(c.validate().is_err());
        c.degree = 1;
        c.nodes_per_axis = None;
        assert!(c.validate().is_err());
        let json = serde_json::to_string(&RunConfig::default()).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), RunConfig::default());
        let partial: RunConfig = serde_json::from_str(r#"{"command":"cpk","measure":"gaussian(dim=2)"}"#).unwrap();
        assert_eq!(partial.degree, 4);
    }
}
