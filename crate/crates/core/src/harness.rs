//! Convergence studies: configuration, execution and report files.
//!
//! A study fixes the derivative kind, a list of orders, a source and a mesh
//! ladder `m = 10 · 2^k`. Every `(α, k)` pair is solved independently, so the
//! pairs run in parallel and the report is assembled in request order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::analytic::{example_case, example_suite, primal_solution, ExampleId};
use crate::assembly::{solve_problem, DerivativeKind, Formulation, Potential};
use crate::error::{FracError, Result};
use crate::femspace::Mesh;
use crate::fracpoly::{
    caputo_derivative, riemann_derivative, FracOrder, PiecewiseLinear, PowerSum, Side, Term,
};
use crate::metrics::{error_record, l2_error, step_rate, ErrorRecord};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Largest mesh level; `m = 5120` is the largest dense system accepted.
pub const MAX_LEVEL: u32 = 9;
pub const THREADS_ENV: &str = "FRACFEM_THREADS";

pub const CSV_HEADER: &str =
    "derivative,alpha,example,k,m,h,l2_error,halpha_error,coefficient,l2_rate_step,halpha_rate_step";
pub const DIAGNOSTICS_HEADER: &str =
    "derivative,alpha,example,k,m,h,cauchy_l2,relative_residual,cauchy_rate_step";

/// Source of a study.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Example(ExampleId),
    /// A left-sided source; an empty sum means the source is still missing.
    Custom(PowerSum),
}

impl SourceSpec {
    pub fn label(&self) -> String {
        match self {
            SourceSpec::Example(id) => id.to_string(),
            SourceSpec::Custom(_) => "custom".into(),
        }
    }

    pub fn source(&self) -> PowerSum {
        match self {
            SourceSpec::Example(id) => example_case(*id).source,
            SourceSpec::Custom(f) => f.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub kind: DerivativeKind,
    pub alphas: Vec<f64>,
    pub source: SourceSpec,
    /// Potential `q`; the empty sum is `q = 0`.
    pub potential: PowerSum,
    pub levels: Vec<u32>,
    pub output_dir: PathBuf,
    /// Relative tolerance for checking the exact solution of a custom source.
    pub tol: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            kind: DerivativeKind::RiemannLiouville,
            alphas: vec![1.5],
            source: SourceSpec::Example(ExampleId::A),
            potential: PowerSum::zero(),
            levels: (1..=7).collect(),
            output_dir: PathBuf::from("out"),
            tol: 1e-12,
        }
    }
}

impl StudyConfig {
    /// Parses a `key = value` file body over the defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = StudyConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                FracError::Config(format!(
                    "line {}: expected key = value, got '{line}'",
                    n + 1
                ))
            })?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| FracError::Config(format!("line {}: {}", n + 1, strip_config(e))))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| FracError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Applies one setting; later settings win.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "derivative" => {
                self.kind = value
                    .parse()
                    .map_err(|e| FracError::Config(strip_config(e)))?
            }
            "alpha" => self.alphas = parse_list(value)?,
            "example" => {
                self.source = match value.trim().to_ascii_lowercase().as_str() {
                    "custom" => match &self.source {
                        SourceSpec::Custom(f) => SourceSpec::Custom(f.clone()),
                        SourceSpec::Example(_) => SourceSpec::Custom(PowerSum::zero()),
                    },
                    letter => SourceSpec::Example(letter.parse()?),
                }
            }
            "source" => self.source = SourceSpec::Custom(parse_power_sum(value)?),
            "q" => self.potential = parse_power_sum(value)?,
            "levels" => self.levels = parse_levels(value)?,
            "out" => self.output_dir = PathBuf::from(value),
            "tol" => self.tol = parse_number(value)?,
            other => return Err(FracError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(FracError::Config("alpha list is empty".into()));
        }
        for (i, a) in self.alphas.iter().enumerate() {
            if !(*a > 1.0 && *a < 2.0) {
                return Err(FracError::Config(format!("alpha {a} outside (1, 2)")));
            }
            if self.alphas[..i].iter().any(|b| (a - b).abs() < 1e-12) {
                return Err(FracError::Config(format!("alpha {a} listed twice")));
            }
        }
        if self.levels.is_empty() {
            return Err(FracError::Config("level list is empty".into()));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FracError::Config(
                "levels must be strictly ascending".into(),
            ));
        }
        if let Some(k) = self.levels.iter().find(|&&k| k > MAX_LEVEL) {
            return Err(FracError::Config(format!(
                "level {k} exceeds the maximum {MAX_LEVEL}"
            )));
        }
        if !(self.tol > 0.0 && self.tol < 1e-2) {
            return Err(FracError::Config(format!(
                "tol {} outside (0, 1e-2)",
                self.tol
            )));
        }
        if let SourceSpec::Custom(f) = &self.source {
            if f.is_zero() {
                return Err(FracError::Config(
                    "example = custom needs a nonzero source".into(),
                ));
            }
            if self.potential.is_zero() {
                if let Some(t) = f.terms().iter().find(|t| t.side != Side::Left) {
                    return Err(FracError::Config(format!(
                        "exact solutions need a left-sided source, found a term anchored at {} on the right",
                        t.anchor
                    )));
                }
            }
        }
        Ok(())
    }

    /// The configuration as `key = value` lines.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "derivative = {}", self.kind.short_name());
        let alphas: Vec<String> = self.alphas.iter().map(|&a| alpha_label(a)).collect();
        let _ = writeln!(s, "alpha = {}", alphas.join(", "));
        let _ = writeln!(s, "example = {}", self.source.label());
        if let SourceSpec::Custom(f) = &self.source {
            let _ = writeln!(s, "source = {f}");
        }
        let _ = writeln!(s, "q = {}", self.potential);
        let levels: Vec<String> = self.levels.iter().map(u32::to_string).collect();
        let _ = writeln!(s, "levels = {}", levels.join(", "));
        let _ = writeln!(s, "tol = {:e}", self.tol);
        s
    }

    pub fn has_potential(&self) -> bool {
        !self.potential.is_zero()
    }
}

fn strip_config(e: FracError) -> String {
    match e {
        FracError::Config(s) => s,
        other => other.to_string(),
    }
}

/// Parses a real number or a fraction `p/q`, either optionally signed.
pub fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || FracError::Config(format!("'{s}' is not a number"));
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            let q: f64 = q.trim().parse().map_err(|_| bad())?;
            if q == 0.0 {
                return Err(bad());
            }
            p / q
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_number).collect()
}

/// Parses `lo..hi` (inclusive) or a comma-separated list of levels.
pub fn parse_levels(s: &str) -> Result<Vec<u32>> {
    let bad = |p: &str| FracError::Config(format!("'{p}' is not a mesh level"));
    let level = |p: &str| p.trim().parse::<u32>().map_err(|_| bad(p));
    if let Some((lo, hi)) = s.split_once("..") {
        let (lo, hi) = (level(lo)?, level(hi.trim_start_matches('='))?);
        if lo > hi {
            return Err(FracError::Config(format!("empty level range {s}")));
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(level).collect()
}

/// Tokens of the source/potential grammar.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Num(f64),
    X,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Open,
    Close,
}

fn tokenize(s: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            'x' | 'X' => {
                out.push(Tok::X);
                i += 1;
            }
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '/' => {
                out.push(Tok::Slash);
                i += 1;
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                out.push(Tok::Open);
                i += 1;
            }
            ')' => {
                out.push(Tok::Close);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v = text
                    .parse::<f64>()
                    .map_err(|_| FracError::Config(format!("bad number '{text}'")))?;
                out.push(Tok::Num(v));
            }
            other => return Err(FracError::Config(format!("unexpected character '{other}'"))),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

/// A product factor: a constant or a power `coef · base^p`.
enum Factor {
    Const(f64),
    Power {
        anchor: f64,
        side: Side,
        exponent: f64,
    },
}

impl Parser {
    fn peek(&self) -> Option<Tok> {
        self.toks.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.peek();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(FracError::Config(format!(
                "expected {want:?}, found {other:?}"
            ))),
        }
    }

    fn sum(&mut self) -> Result<Vec<Term>> {
        let mut terms = Vec::new();
        let mut sign = match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                -1.0
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                1.0
            }
            _ => 1.0,
        };
        loop {
            terms.push(self.product(sign)?);
            match self.next() {
                None => return Ok(terms),
                Some(Tok::Plus) => sign = 1.0,
                Some(Tok::Minus) => sign = -1.0,
                Some(t) => return Err(FracError::Config(format!("unexpected {t:?}"))),
            }
        }
    }

    fn product(&mut self, sign: f64) -> Result<Term> {
        let mut coef = sign;
        let mut power: Option<(f64, Side, f64)> = None;
        loop {
            match self.factor()? {
                Factor::Const(c) => coef *= c,
                Factor::Power {
                    anchor,
                    side,
                    exponent,
                } => {
                    if power.is_some() {
                        return Err(FracError::Config("at most one power per term".into()));
                    }
                    power = Some((anchor, side, exponent));
                }
            }
            if self.peek() == Some(Tok::Star) {
                self.pos += 1;
            } else {
                break;
            }
        }
        let (anchor, side, exponent) = power.unwrap_or((0.0, Side::Left, 0.0));
        Term::new(coef, anchor, exponent, side).map_err(|e| FracError::Config(e.to_string()))
    }

    fn number(&mut self) -> Result<f64> {
        let neg = if self.peek() == Some(Tok::Minus) {
            self.pos += 1;
            true
        } else {
            false
        };
        let v = match self.next() {
            Some(Tok::Num(v)) => v,
            other => {
                return Err(FracError::Config(format!(
                    "expected a number, found {other:?}"
                )))
            }
        };
        Ok(if neg { -v } else { v })
    }

    /// `n`, `n/d`, `-n` or a parenthesised fraction.
    fn exponent(&mut self) -> Result<f64> {
        if self.peek() == Some(Tok::Open) {
            self.pos += 1;
            let v = self.fraction()?;
            self.expect(Tok::Close)?;
            Ok(v)
        } else {
            self.fraction()
        }
    }

    fn fraction(&mut self) -> Result<f64> {
        let p = self.number()?;
        if self.peek() == Some(Tok::Slash) {
            self.pos += 1;
            let q = self.number()?;
            if q == 0.0 {
                return Err(FracError::Config("division by zero".into()));
            }
            return Ok(p / q);
        }
        Ok(p)
    }

    fn power_suffix(&mut self) -> Result<f64> {
        if self.peek() == Some(Tok::Caret) {
            self.pos += 1;
            self.exponent()
        } else {
            Ok(1.0)
        }
    }

    fn factor(&mut self) -> Result<Factor> {
        match self.peek() {
            Some(Tok::X) => {
                self.pos += 1;
                let exponent = self.power_suffix()?;
                Ok(Factor::Power {
                    anchor: 0.0,
                    side: Side::Left,
                    exponent,
                })
            }
            Some(Tok::Num(_)) => Ok(Factor::Const(self.fraction()?)),
            Some(Tok::Open) => {
                self.pos += 1;
                let (anchor, side) = match self.peek() {
                    Some(Tok::X) => {
                        self.pos += 1;
                        self.expect(Tok::Minus)?;
                        (self.fraction()?, Side::Left)
                    }
                    _ => {
                        let a = self.fraction()?;
                        if self.peek() == Some(Tok::Close) {
                            // parenthesised constant
                            self.pos += 1;
                            return Ok(Factor::Const(a));
                        }
                        self.expect(Tok::Minus)?;
                        self.expect(Tok::X)?;
                        (a, Side::Right)
                    }
                };
                self.expect(Tok::Close)?;
                let exponent = self.power_suffix()?;
                Ok(Factor::Power {
                    anchor,
                    side,
                    exponent,
                })
            }
            other => Err(FracError::Config(format!("unexpected {other:?}"))),
        }
    }
}

/// Parses a truncated power sum such as `x - x^2`, `-1/4*x^(-1/4)`,
/// `2*(1-x)^0.5 + (x-0.3)^1.5` or a constant. `0` is the empty sum.
pub fn parse_power_sum(s: &str) -> Result<PowerSum> {
    let toks = tokenize(s)?;
    if toks.is_empty() {
        return Err(FracError::Config("empty expression".into()));
    }
    let mut p = Parser { toks, pos: 0 };
    let terms = p
        .sum()
        .map_err(|e| FracError::Config(format!("in '{}': {}", s.trim(), strip_config(e))))?;
    Ok(PowerSum::from_terms(terms))
}

/// `p/q` for orders that are simple fractions, the decimal value otherwise.
pub fn alpha_label(a: f64) -> String {
    for q in 1..=12u32 {
        let p = a * q as f64;
        if (p - p.round()).abs() < 1e-9 {
            let p = p.round() as i64;
            return if q == 1 {
                p.to_string()
            } else {
                format!("{p}/{q}")
            };
        }
    }
    format!("{a}")
}

/// Rates predicted by the error estimates for the benchmark examples, as
/// `(L², H^{α/2})`.
pub fn predicted_rates(id: ExampleId, kind: DerivativeKind, alpha: f64) -> (f64, f64) {
    let lift = alpha / 2.0 - 0.5;
    let h = match kind {
        DerivativeKind::RiemannLiouville => lift,
        DerivativeKind::Caputo => {
            let source_smoothness = match id {
                ExampleId::A => f64::INFINITY,
                ExampleId::B => 0.5,
                ExampleId::C => 0.25,
            };
            (2.0 - alpha / 2.0).min(alpha / 2.0 + source_smoothness)
        }
    };
    (h + lift, h)
}

/// Outcome of one `(α, k)` solve.
#[derive(Debug, Clone)]
pub enum LevelOutcome {
    Errors(ErrorRecord),
    /// `q ≠ 0`: no exact solution, only the discrete solution and residual.
    Diagnostics {
        relative_residual: f64,
        u_h: PiecewiseLinear,
    },
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct LevelResult {
    pub k: u32,
    pub m: usize,
    pub h: f64,
    pub outcome: LevelOutcome,
    pub l2_rate_step: Option<f64>,
    pub halpha_rate_step: Option<f64>,
    /// `‖u_{h_k} - u_{h_{k+1}}‖_{L²}` for `q ≠ 0` studies.
    pub cauchy_l2: Option<f64>,
    pub cauchy_rate_step: Option<f64>,
}

impl LevelResult {
    pub fn record(&self) -> Option<&ErrorRecord> {
        match &self.outcome {
            LevelOutcome::Errors(r) => Some(r),
            _ => None,
        }
    }
}

/// Rates between the coarsest and finest solved levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedRates {
    pub l2: f64,
    pub halpha: f64,
    pub coefficient: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AlphaBlock {
    pub alpha: f64,
    pub levels: Vec<LevelResult>,
    pub fitted: Option<FittedRates>,
    pub cauchy_fitted: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub config: StudyConfig,
    pub blocks: Vec<AlphaBlock>,
    /// Wall time; not written to the report files.
    pub elapsed: Duration,
    pub version: &'static str,
}

impl ConvergenceReport {
    pub fn is_partial(&self) -> bool {
        self.failures().next().is_some()
    }

    /// `(α, k, message)` for every failed level.
    pub fn failures(&self) -> impl Iterator<Item = (f64, u32, &str)> {
        self.blocks.iter().flat_map(|b| {
            b.levels.iter().filter_map(move |l| match &l.outcome {
                LevelOutcome::Failed(msg) => Some((b.alpha, l.k, msg.as_str())),
                _ => None,
            })
        })
    }
}

/// Thread count from `FRACFEM_THREADS`; unset or `0` means automatic.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| FracError::Config(format!("{THREADS_ENV}='{v}' is not a thread count"))),
    }
}

/// Exact solution for one order, checked against the equation when the
/// source is custom.
fn exact_solution(config: &StudyConfig, alpha: FracOrder) -> Result<(PowerSum, PowerSum)> {
    match &config.source {
        SourceSpec::Example(id) => example_suite(*id, alpha, config.kind),
        SourceSpec::Custom(f) => {
            let u = primal_solution(f, alpha, config.kind)?;
            let d = match config.kind {
                DerivativeKind::RiemannLiouville => riemann_derivative(&u, alpha, Side::Left)?,
                DerivativeKind::Caputo => caputo_derivative(&u, alpha, Side::Left)?,
            };
            if !(-d).approx_eq(f, config.tol) {
                return Err(FracError::Parameter(format!(
                    "exact solution {u} fails the equation"
                )));
            }
            Ok((f.clone(), u))
        }
    }
}

fn solve_level(config: &StudyConfig, alpha: f64, k: u32) -> LevelOutcome {
    let run = || -> Result<LevelOutcome> {
        let order = FracOrder::alpha(alpha)?;
        let mesh = Mesh::level(k)?;
        let potential = if config.has_potential() {
            Potential::Power(config.potential.clone())
        } else {
            Potential::Zero
        };
        let form = Formulation::new(config.kind, alpha, potential)?;
        if config.has_potential() {
            let sol = solve_problem(&mesh, &form, &config.source.source())?;
            let relative_residual = sol.system.relative_residual().unwrap_or(f64::NAN);
            return Ok(LevelOutcome::Diagnostics {
                relative_residual,
                u_h: sol.u_h,
            });
        }
        let (f, u) = exact_solution(config, order)?;
        let sol = solve_problem(&mesh, &form, &f)?;
        Ok(LevelOutcome::Errors(error_record(
            &u,
            &sol.u_h,
            order,
            config.kind,
        )?))
    };
    match run() {
        Ok(o) => o,
        Err(e) => LevelOutcome::Failed(format!("alpha = {}, k = {k}: {e}", alpha_label(alpha))),
    }
}

/// Rate between the coarsest and finest solved levels.
fn span_rate(points: &[(f64, f64)]) -> Option<f64> {
    let (first, last) = (points.first()?, points.last()?);
    step_rate(*first, *last).ok()
}

fn finish_block(alpha: f64, mut levels: Vec<LevelResult>) -> AlphaBlock {
    for i in 1..levels.len() {
        let (prev, cur) = (levels[i - 1].record().copied(), levels[i].record().copied());
        if let (Some(p), Some(c)) = (prev, cur) {
            levels[i].l2_rate_step = step_rate((p.h, p.l2_error), (c.h, c.l2_error)).ok();
            levels[i].halpha_rate_step =
                step_rate((p.h, p.halpha_error), (c.h, c.halpha_error)).ok();
        }
    }
    let records: Vec<ErrorRecord> = levels.iter().filter_map(|l| l.record().copied()).collect();
    let fitted = if records.len() >= 2 {
        let l2: Vec<(f64, f64)> = records.iter().map(|r| (r.h, r.l2_error)).collect();
        let ha: Vec<(f64, f64)> = records.iter().map(|r| (r.h, r.halpha_error)).collect();
        let co: Vec<(f64, f64)> = records.iter().map(|r| (r.h, r.coefficient.abs())).collect();
        match (span_rate(&l2), span_rate(&ha)) {
            (Some(l2), Some(halpha)) => Some(FittedRates {
                l2,
                halpha,
                coefficient: span_rate(&co),
            }),
            _ => None,
        }
    } else {
        None
    };

    // Cauchy differences between consecutive discrete solutions
    for i in 0..levels.len().saturating_sub(1) {
        if let (
            LevelOutcome::Diagnostics { u_h: a, .. },
            LevelOutcome::Diagnostics { u_h: b, .. },
        ) = (&levels[i].outcome, &levels[i + 1].outcome)
        {
            levels[i].cauchy_l2 = l2_error(&a.to_power_sum(), b).ok();
        }
    }
    for i in 1..levels.len() {
        if let (Some(p), Some(c)) = (levels[i - 1].cauchy_l2, levels[i].cauchy_l2) {
            levels[i].cauchy_rate_step = step_rate((levels[i - 1].h, p), (levels[i].h, c)).ok();
        }
    }
    let cauchy: Vec<(f64, f64)> = levels
        .iter()
        .filter_map(|l| l.cauchy_l2.map(|c| (l.h, c)))
        .collect();
    let cauchy_fitted = if cauchy.len() >= 2 {
        span_rate(&cauchy)
    } else {
        None
    };

    AlphaBlock {
        alpha,
        levels,
        fitted,
        cauchy_fitted,
    }
}

/// Solves every `(α, k)` of the study. Level failures are recorded in the
/// report; only an invalid configuration is an error.
pub fn run_study(config: &StudyConfig) -> Result<ConvergenceReport> {
    run_study_with_threads(config, thread_count()?)
}

/// [`run_study`] on `threads` workers (`0` = automatic).
pub fn run_study_with_threads(config: &StudyConfig, threads: usize) -> Result<ConvergenceReport> {
    config.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| FracError::Config(format!("thread pool: {e}")))?;
    let jobs: Vec<(usize, u32)> = (0..config.alphas.len())
        .flat_map(|i| config.levels.iter().map(move |&k| (i, k)))
        .collect();
    let outcomes: Vec<LevelOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, k)| solve_level(config, config.alphas[i], k))
            .collect()
    });
    let mut outcomes = outcomes.into_iter();
    let blocks = config
        .alphas
        .iter()
        .map(|&alpha| {
            let levels = config
                .levels
                .iter()
                .map(|&k| {
                    let m = 10usize << k;
                    LevelResult {
                        k,
                        m,
                        h: 1.0 / m as f64,
                        outcome: outcomes.next().expect("one outcome per job"),
                        l2_rate_step: None,
                        halpha_rate_step: None,
                        cauchy_l2: None,
                        cauchy_rate_step: None,
                    }
                })
                .collect();
            finish_block(alpha, levels)
        })
        .collect();
    Ok(ConvergenceReport {
        config: config.clone(),
        blocks,
        elapsed: start.elapsed(),
        version: VERSION,
    })
}

fn sci(v: f64) -> String {
    format!("{v:.5e}")
}

fn opt_rate(v: Option<f64>) -> String {
    v.map(|r| format!("{r:.2}")).unwrap_or_default()
}

/// `report.csv` body for one or more studies, header first.
pub fn render_csv(reports: &[ConvergenceReport]) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for report in reports {
        let kind = report.config.kind.short_name();
        let example = report.config.source.label();
        for block in &report.blocks {
            let alpha = format!("{:.6}", block.alpha);
            for l in &block.levels {
                let (l2, ha, co) = match l.record() {
                    Some(r) => (sci(r.l2_error), sci(r.halpha_error), sci(r.coefficient)),
                    None => Default::default(),
                };
                let _ = writeln!(
                    s,
                    "{kind},{alpha},{example},{},{},{},{l2},{ha},{co},{},{}",
                    l.k,
                    l.m,
                    sci(l.h),
                    opt_rate(l.l2_rate_step),
                    opt_rate(l.halpha_rate_step)
                );
            }
            if let Some(f) = block.fitted {
                let _ = writeln!(
                    s,
                    "{kind},{alpha},{example},fit,,,,,,{:.2},{:.2}",
                    f.l2, f.halpha
                );
            }
        }
    }
    s
}

/// Residual and Cauchy-difference table for studies with a potential.
pub fn render_diagnostics_csv(reports: &[ConvergenceReport]) -> String {
    let mut s = String::new();
    s.push_str(DIAGNOSTICS_HEADER);
    s.push('\n');
    for report in reports {
        let kind = report.config.kind.short_name();
        let example = report.config.source.label();
        for block in &report.blocks {
            let alpha = format!("{:.6}", block.alpha);
            for l in &block.levels {
                let residual = match &l.outcome {
                    LevelOutcome::Diagnostics {
                        relative_residual, ..
                    } => sci(*relative_residual),
                    _ => String::new(),
                };
                let cauchy = l.cauchy_l2.map(sci).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{kind},{alpha},{example},{},{},{},{cauchy},{residual},{}",
                    l.k,
                    l.m,
                    sci(l.h),
                    opt_rate(l.cauchy_rate_step)
                );
            }
            if let Some(r) = block.cauchy_fitted {
                let _ = writeln!(s, "{kind},{alpha},{example},fit,,,,,{r:.2}");
            }
        }
    }
    s
}

/// Layout of `report.txt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportView {
    /// One row per norm and order, levels across.
    Errors,
    /// The adjoint-singularity coefficient, one row per study.
    Coefficient,
}

fn kind_title(kind: DerivativeKind) -> &'static str {
    match kind {
        DerivativeKind::RiemannLiouville => "Riemann-Liouville",
        DerivativeKind::Caputo => "Caputo",
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2e}"))
        .unwrap_or_else(|| "failed".into())
}

fn render_errors(out: &mut String, report: &ConvergenceReport) {
    let c = &report.config;
    let _ = writeln!(
        out,
        "Example ({}), {} derivative, f(x) = {}, h = 1/(10*2^k)",
        c.source.label(),
        kind_title(c.kind),
        c.source.source()
    );
    if c.has_potential() {
        let _ = writeln!(
            out,
            "q(x) = {}: Cauchy differences |u_k - u_(k+1)| in L2",
            c.potential
        );
    }
    let mut header = format!("{:<6} | {:<9}", "alpha", "norm");
    for k in &c.levels {
        let _ = write!(header, " | {:>8}", format!("k={k}"));
    }
    header.push_str(" | rate");
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "{}", "-".repeat(header.len() + 8));
    for block in &report.blocks {
        let label = alpha_label(block.alpha);
        if c.has_potential() {
            let mut row = format!("{label:<6} | {:<9}", "cauchy");
            for l in &block.levels {
                let _ = write!(
                    row,
                    " | {:>8}",
                    l.cauchy_l2
                        .map(|v| format!("{v:.2e}"))
                        .unwrap_or("-".into())
                );
            }
            let _ = writeln!(row, " | {}", opt_rate(block.cauchy_fitted));
            out.push_str(&row);
            continue;
        }
        let predicted = match c.source {
            SourceSpec::Example(id) => Some(predicted_rates(id, c.kind, block.alpha)),
            SourceSpec::Custom(_) => None,
        };
        let rows: [(&str, fn(&ErrorRecord) -> f64, Option<f64>, Option<f64>); 2] = [
            (
                "L2",
                |r| r.l2_error,
                block.fitted.map(|f| f.l2),
                predicted.map(|p| p.0),
            ),
            (
                "H^(a/2)",
                |r| r.halpha_error,
                block.fitted.map(|f| f.halpha),
                predicted.map(|p| p.1),
            ),
        ];
        for (i, (name, get, fit, theory)) in rows.iter().enumerate() {
            let lead = if i == 0 { label.as_str() } else { "" };
            let mut row = format!("{lead:<6} | {name:<9}");
            for l in &block.levels {
                let _ = write!(row, " | {:>8}", cell(l.record().map(get)));
            }
            let rate = match (fit, theory) {
                (Some(f), Some(t)) => format!("{f:.2} ({t:.2})"),
                (Some(f), None) => format!("{f:.2}"),
                _ => "-".into(),
            };
            let _ = writeln!(row, " | {rate}");
            out.push_str(&row);
        }
    }
}

fn render_coefficients(out: &mut String, reports: &[ConvergenceReport]) {
    let Some(first) = reports.first() else {
        return;
    };
    let alphas: Vec<String> = first
        .config
        .alphas
        .iter()
        .map(|&a| alpha_label(a))
        .collect();
    let _ = writeln!(
        out,
        "Adjoint singular coefficient, example ({}), alpha = {}, h = 1/(10*2^k)",
        first.config.source.label(),
        alphas.join(", ")
    );
    let mut header = format!("{:<22}", "k");
    for k in &first.config.levels {
        let _ = write!(header, " | {k:>8}");
    }
    header.push_str(" | rate");
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "{}", "-".repeat(header.len() + 6));
    for report in reports {
        for block in &report.blocks {
            let name = format!(
                "{} {}",
                kind_title(report.config.kind),
                alpha_label(block.alpha)
            );
            let mut row = format!("{name:<22}");
            for l in &block.levels {
                let _ = write!(
                    row,
                    " | {:>8}",
                    cell(l.record().map(|r| r.coefficient.abs()))
                );
            }
            let rate = block.fitted.and_then(|f| f.coefficient);
            let _ = writeln!(
                row,
                " | {}",
                rate.map(|r| format!("{r:.2}")).unwrap_or("-".into())
            );
            out.push_str(&row);
        }
    }
}

/// `report.txt` body: configuration echo, then the tables.
pub fn render_text(reports: &[ConvergenceReport], view: ReportView) -> String {
    let mut out = format!("fracfem {VERSION}\n");
    let partial = reports.iter().any(ConvergenceReport::is_partial);
    let _ = writeln!(
        out,
        "status: {}",
        if partial { "partial" } else { "complete" }
    );
    for report in reports {
        out.push('\n');
        out.push_str(&report.config.echo());
    }
    out.push('\n');
    match view {
        ReportView::Errors => {
            for (i, report) in reports.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                render_errors(&mut out, report);
            }
        }
        ReportView::Coefficient => render_coefficients(&mut out, reports),
    }
    if partial {
        out.push_str("\nfailures:\n");
        for report in reports {
            for (_, _, msg) in report.failures() {
                let _ = writeln!(out, "  {} {msg}", report.config.kind.short_name());
            }
        }
    }
    out
}

fn write_file(path: PathBuf, body: &str) -> Result<()> {
    fs::write(&path, body).map_err(|source| FracError::Io { path, source })
}

/// Writes `report.csv`, `report.txt` and, for studies with a potential,
/// `diagnostics.csv` into `dir`.
pub fn emit_tables(
    reports: &[ConvergenceReport],
    view: ReportView,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| FracError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = vec![dir.join("report.csv"), dir.join("report.txt")];
    write_file(written[0].clone(), &render_csv(reports))?;
    write_file(written[1].clone(), &render_text(reports, view))?;
    if reports.iter().any(|r| r.config.has_potential()) {
        let p = dir.join("diagnostics.csv");
        write_file(p.clone(), &render_diagnostics_csv(reports))?;
        written.push(p);
    }
    Ok(written)
}

/// Studies reproducing one published table, numbered 1 to 7: errors for
/// example (a) RL and Caputo (1, 2), the coefficient table (3), then
/// examples (b) and (c), RL before Caputo (4 to 7).
pub fn paper_preset(table: u32, output_dir: &Path) -> Result<(Vec<StudyConfig>, ReportView)> {
    let orders = vec![1.75, 1.5, 4.0 / 3.0];
    let study = |id, kind, alphas: &Vec<f64>| StudyConfig {
        kind,
        alphas: alphas.clone(),
        source: SourceSpec::Example(id),
        output_dir: output_dir.to_path_buf(),
        ..StudyConfig::default()
    };
    use DerivativeKind::{Caputo, RiemannLiouville as Rl};
    let (configs, view) = match table {
        1 => (vec![study(ExampleId::A, Rl, &orders)], ReportView::Errors),
        2 => (
            vec![study(ExampleId::A, Caputo, &orders)],
            ReportView::Errors,
        ),
        3 => (
            vec![
                study(ExampleId::A, Rl, &vec![1.5]),
                study(ExampleId::A, Caputo, &vec![1.5]),
            ],
            ReportView::Coefficient,
        ),
        4 => (vec![study(ExampleId::B, Rl, &orders)], ReportView::Errors),
        5 => (
            vec![study(ExampleId::B, Caputo, &orders)],
            ReportView::Errors,
        ),
        6 => (vec![study(ExampleId::C, Rl, &orders)], ReportView::Errors),
        7 => (
            vec![study(ExampleId::C, Caputo, &orders)],
            ReportView::Errors,
        ),
        n => return Err(FracError::Config(format!("no table {n}; choose 1 to 7"))),
    };
    Ok((configs, view))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_and_fractions() {
        assert_eq!(parse_number("4/3").unwrap(), 4.0 / 3.0);
        assert_eq!(parse_number(" -1/4 ").unwrap(), -0.25);
        assert_eq!(parse_number("1e-12").unwrap(), 1e-12);
        assert!(parse_number("1/0").is_err());
        assert!(parse_number("abc").is_err());
    }

    #[test]
    fn level_lists() {
        assert_eq!(parse_levels("1..7").unwrap(), (1..=7).collect::<Vec<_>>());
        assert_eq!(parse_levels("2, 4").unwrap(), vec![2, 4]);
        assert!(parse_levels("3..1").is_err());
        assert!(parse_levels("x").is_err());
    }

    #[test]
    fn expressions() {
        let f = parse_power_sum("x - x^2").unwrap();
        assert!(f.approx_eq(&example_case(ExampleId::A).source, 1e-15));
        let g = parse_power_sum("x^(-1/4)").unwrap();
        assert!(g.approx_eq(&PowerSum::monomial(1.0, -0.25).unwrap(), 1e-15));
        let h = parse_power_sum("-2*(1-x)^0.5 + 3 + 1/2*(x-0.25)^1.5 - (0.5-x)").unwrap();
        let t = h.terms();
        assert_eq!(t.len(), 4);
        assert!(
            (h.evaluate(0.3).unwrap()
                - (-2.0 * 0.7f64.sqrt() + 3.0 + 0.5 * 0.05f64.powf(1.5) - 0.2))
                .abs()
                < 1e-14
        );
        assert!(parse_power_sum("0").unwrap().is_zero());
        assert!(parse_power_sum("x^-2").is_err());
        assert!(parse_power_sum("x*x").is_err());
        assert!(parse_power_sum("y").is_err());
        assert!(parse_power_sum("").is_err());
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "x - x^2",
            "x^(-0.25)",
            "-2*(1-x)^0.5 + 3 + 0.5*(x-0.25)^1.5",
            "(0.5-x)",
        ] {
            let f = parse_power_sum(text).unwrap();
            let again = parse_power_sum(&f.to_string()).unwrap();
            assert_eq!(f, again, "{text} -> {f}");
        }
        assert_eq!(parse_power_sum("x - x^2").unwrap().to_string(), "x - x^2");
    }

    #[test]
    fn config_file_and_overrides() {
        let text = "# study\nderivative = caputo\nalpha = 7/4, 3/2\nexample = b\nlevels = 1..3\nout = /tmp/x\n";
        let mut c = StudyConfig::parse(text).unwrap();
        assert_eq!(c.kind, DerivativeKind::Caputo);
        assert_eq!(c.alphas, vec![1.75, 1.5]);
        assert_eq!(c.levels, vec![1, 2, 3]);
        c.set("example", "a").unwrap();
        assert_eq!(c.source, SourceSpec::Example(ExampleId::A));
        c.validate().unwrap();
        assert!(StudyConfig::parse("alpha = 2.5")
            .unwrap()
            .validate()
            .is_err());
        assert!(StudyConfig::parse("colour = red").is_err());
        assert!(StudyConfig::parse("levels").is_err());
        assert!(StudyConfig::parse("example = custom")
            .unwrap()
            .validate()
            .is_err());
        let custom = StudyConfig::parse("example = custom\nsource = x^0.5").unwrap();
        custom.validate().unwrap();
        assert!(StudyConfig::parse("source = (1-x)^0.5")
            .unwrap()
            .validate()
            .is_err());
        assert!(StudyConfig::parse("levels = 2, 1")
            .unwrap()
            .validate()
            .is_err());
    }

    #[test]
    fn alpha_labels() {
        assert_eq!(alpha_label(4.0 / 3.0), "4/3");
        assert_eq!(alpha_label(1.75), "7/4");
        assert_eq!(alpha_label(1.5), "3/2");
        assert_eq!(alpha_label(1.2345), "1.2345");
    }

    #[test]
    fn predicted_rates_match_examples() {
        let (l2, h) = predicted_rates(ExampleId::C, DerivativeKind::Caputo, 4.0 / 3.0);
        assert!((l2 - 13.0 / 12.0).abs() < 1e-12 && (h - 11.0 / 12.0).abs() < 1e-12);
        let (l2, h) = predicted_rates(ExampleId::A, DerivativeKind::RiemannLiouville, 1.75);
        assert!((l2 - 0.75).abs() < 1e-12 && (h - 0.375).abs() < 1e-12);
    }

    #[test]
    fn presets() {
        for n in 1..=7 {
            let (c, _) = paper_preset(n, Path::new("out")).unwrap();
            c.iter().for_each(|s| s.validate().unwrap());
        }
        assert!(paper_preset(8, Path::new("out")).is_err());
    }
}
