//! Closed-form fractional calculus on finite sums of truncated powers.
//!
//! A [`PowerSum`] is a linear combination of `(x - a)₊^p` (left-sided) and
//! `(a - x)₊^p` (right-sided) terms. Riemann–Liouville integrals and
//! derivatives map each term to a single term of the same kind, so the
//! operators below never approximate anything. Inner products are exact up to
//! rounding: same-anchor products integrate in closed form, opposite-sided
//! products reduce to a Beta function, and the remaining shifted products use
//! a convergent binomial series near the anchor plus Gauss–Legendre panels
//! that stay away from every singularity.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use crate::error::{FracError, Result};
use crate::quadrature::{gauss_legendre, QuadRule};
use crate::special::{as_nonneg_integer, beta, gamma, power_gain, rgamma, INTEGER_TOL};

/// Coefficients below this magnitude are dropped during canonicalization.
pub const COEF_FLOOR: f64 = 1e-300;
/// Exponents closer than this are treated as equal.
pub const EXPONENT_TOL: f64 = 1e-12;
const ANCHOR_TOL: f64 = 4.0 * f64::EPSILON;

/// Admissible interval for a [`FracOrder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderRange {
    /// (0, 1)
    Unit,
    /// (1, 2), the order of the differential equation
    Pde,
    /// (0, 2)
    UpToTwo,
    /// [0, ∞), integration orders
    NonNegative,
}

impl OrderRange {
    fn contains(self, v: f64) -> bool {
        match self {
            OrderRange::Unit => v > 0.0 && v < 1.0,
            OrderRange::Pde => v > 1.0 && v < 2.0,
            OrderRange::UpToTwo => v > 0.0 && v < 2.0,
            OrderRange::NonNegative => v >= 0.0 && v.is_finite(),
        }
    }

    fn describe(self) -> &'static str {
        match self {
            OrderRange::Unit => "(0, 1)",
            OrderRange::Pde => "(1, 2)",
            OrderRange::UpToTwo => "(0, 2)",
            OrderRange::NonNegative => "[0, inf)",
        }
    }
}

/// A validated fractional order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracOrder {
    value: f64,
    range: OrderRange,
}

impl FracOrder {
    pub fn new(value: f64, range: OrderRange) -> Result<Self> {
        if range.contains(value) {
            Ok(FracOrder { value, range })
        } else {
            Err(FracError::Parameter(format!(
                "order {value} outside admissible range {}",
                range.describe()
            )))
        }
    }

    /// Order of the differential operator, α ∈ (1, 2).
    pub fn alpha(value: f64) -> Result<Self> {
        Self::new(value, OrderRange::Pde)
    }

    /// Integration order γ ≥ 0.
    pub fn integral(value: f64) -> Result<Self> {
        Self::new(value, OrderRange::NonNegative)
    }

    /// Derivative order β ∈ (0, 2).
    pub fn derivative(value: f64) -> Result<Self> {
        Self::new(value, OrderRange::UpToTwo)
    }

    pub fn value(self) -> f64 {
        self.value
    }

    pub fn range(self) -> OrderRange {
        self.range
    }
}

/// Orientation of a truncated power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    /// `(x - a)₊^p`, supported right of the anchor
    Left,
    /// `(a - x)₊^p`, supported left of the anchor
    Right,
}

impl Side {
    fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    /// Endpoint of (0, 1) at which operators of this side start.
    fn base_point(self) -> f64 {
        match self {
            Side::Left => 0.0,
            Side::Right => 1.0,
        }
    }
}

/// One truncated power `coef · (x - anchor)₊^exponent` or `coef · (anchor - x)₊^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coef: f64,
    pub anchor: f64,
    pub exponent: f64,
    pub side: Side,
}

impl Term {
    pub fn new(coef: f64, anchor: f64, exponent: f64, side: Side) -> Result<Self> {
        if !coef.is_finite() {
            return Err(FracError::Parameter(format!(
                "non-finite coefficient {coef}"
            )));
        }
        if !(0.0..=1.0).contains(&anchor) {
            return Err(FracError::Parameter(format!(
                "anchor {anchor} outside [0, 1]"
            )));
        }
        if !(exponent > -1.0) || !exponent.is_finite() {
            return Err(FracError::Representability { exponent });
        }
        Ok(Term {
            coef,
            anchor,
            exponent: snap_integer(exponent),
            side,
        })
    }

    /// Distance from the anchor into the support; negative outside.
    fn reach(&self, x: f64) -> f64 {
        match self.side {
            Side::Left => x - self.anchor,
            Side::Right => self.anchor - x,
        }
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        let t = self.reach(x);
        if t > 0.0 {
            Ok(self.coef * t.powf(self.exponent))
        } else if t < 0.0 || self.exponent > 0.0 {
            Ok(0.0)
        } else if self.exponent == 0.0 {
            Ok(self.coef)
        } else {
            Err(FracError::Singularity { x })
        }
    }

    fn key_cmp(&self, other: &Term) -> Ordering {
        self.anchor
            .total_cmp(&other.anchor)
            .then(self.exponent.total_cmp(&other.exponent))
            .then(self.side.cmp(&other.side))
    }

    fn same_key(&self, other: &Term) -> bool {
        self.side == other.side
            && (self.anchor - other.anchor).abs() <= ANCHOR_TOL
            && (self.exponent - other.exponent).abs() <= EXPONENT_TOL
    }
}

fn snap_integer(p: f64) -> f64 {
    let r = p.round();
    if (p - r).abs() <= INTEGER_TOL {
        r
    } else {
        p
    }
}

/// A finite sum of truncated powers, kept in canonical form: terms sorted by
/// `(anchor, exponent, side)`, no duplicated keys, no zero coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerSum {
    terms: Vec<Term>,
}

impl PowerSum {
    pub fn zero() -> Self {
        PowerSum { terms: Vec::new() }
    }

    pub fn from_terms(terms: Vec<Term>) -> Self {
        let mut ps = PowerSum { terms };
        ps.canonicalize();
        ps
    }

    /// Checked constructor for a single term.
    pub fn term(coef: f64, anchor: f64, exponent: f64, side: Side) -> Result<Self> {
        Ok(Self::from_terms(vec![Term::new(
            coef, anchor, exponent, side,
        )?]))
    }

    /// `coef · x^exponent`.
    pub fn monomial(coef: f64, exponent: f64) -> Result<Self> {
        Self::term(coef, 0.0, exponent, Side::Left)
    }

    /// `coef · (1 - x)^exponent`.
    pub fn reflected_monomial(coef: f64, exponent: f64) -> Result<Self> {
        Self::term(coef, 1.0, exponent, Side::Right)
    }

    pub fn constant(c: f64) -> Self {
        Self::from_terms(vec![Term {
            coef: c,
            anchor: 0.0,
            exponent: 0.0,
            side: Side::Left,
        }])
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_abs_coef(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, t| m.max(t.coef.abs()))
    }

    fn canonicalize(&mut self) {
        for t in &mut self.terms {
            t.exponent = snap_integer(t.exponent);
        }
        self.terms.sort_by(Term::key_cmp);
        let mut out: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match out.iter_mut().rev().find(|o| o.same_key(&t)) {
                Some(o) => o.coef += t.coef,
                None => out.push(t),
            }
        }
        out.retain(|t| t.coef.abs() >= COEF_FLOOR);
        out.sort_by(Term::key_cmp);
        self.terms = out;
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .map(|t| Term {
                    coef: t.coef * c,
                    ..*t
                })
                .collect(),
        )
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        self.terms.iter().map(|t| t.evaluate(x)).sum()
    }

    /// Classical derivative. A jump (exponent 0) is only allowed at the base
    /// point of its side, where it is constant on (0, 1).
    pub fn derivative(&self) -> Result<Self> {
        let mut out = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            if t.exponent == 0.0 {
                if (t.anchor - t.side.base_point()).abs() <= ANCHOR_TOL {
                    continue;
                }
                return Err(FracError::Representability { exponent: -1.0 });
            }
            let p = t.exponent - 1.0;
            if !(p > -1.0) {
                return Err(FracError::Representability { exponent: p });
            }
            let sign = match t.side {
                Side::Left => 1.0,
                Side::Right => -1.0,
            };
            out.push(Term {
                coef: sign * t.coef * t.exponent,
                exponent: p,
                ..*t
            });
        }
        Ok(Self::from_terms(out))
    }

    /// `∫_lo^hi self(x) dx` in closed form.
    pub fn integrate_over(&self, lo: f64, hi: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * unit_term_integral(t, lo, hi))
            .sum()
    }

    fn check_side(&self, side: Side) -> Result<()> {
        match self.terms.iter().find(|t| t.side != side) {
            Some(t) => Err(FracError::Sidedness {
                expected: side.name(),
                anchor: t.anchor,
            }),
            None => Ok(()),
        }
    }

    /// True when every coefficient, anchor and exponent of `self` matches
    /// `other` to `rel` relative to the largest coefficient of either sum.
    pub fn approx_eq(&self, other: &PowerSum, rel: f64) -> bool {
        let diff = self - other;
        let scale = self
            .max_abs_coef()
            .max(other.max_abs_coef())
            .max(f64::MIN_POSITIVE);
        diff.terms.iter().all(|t| t.coef.abs() <= rel * scale)
    }
}

impl Add for &PowerSum {
    type Output = PowerSum;
    fn add(self, rhs: &PowerSum) -> PowerSum {
        PowerSum::from_terms(self.terms.iter().chain(&rhs.terms).copied().collect())
    }
}

impl Add for PowerSum {
    type Output = PowerSum;
    fn add(self, rhs: PowerSum) -> PowerSum {
        &self + &rhs
    }
}

impl Sub for &PowerSum {
    type Output = PowerSum;
    fn sub(self, rhs: &PowerSum) -> PowerSum {
        self + &rhs.scale(-1.0)
    }
}

impl Sub for PowerSum {
    type Output = PowerSum;
    fn sub(self, rhs: PowerSum) -> PowerSum {
        &self - &rhs
    }
}

impl Neg for PowerSum {
    type Output = PowerSum;
    fn neg(self) -> PowerSum {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &PowerSum {
    type Output = PowerSum;
    fn mul(self, c: f64) -> PowerSum {
        self.scale(c)
    }
}

impl Mul<f64> for PowerSum {
    type Output = PowerSum;
    fn mul(self, c: f64) -> PowerSum {
        self.scale(c)
    }
}

impl fmt::Display for PowerSum {
    /// Prints in the grammar accepted by the study configuration parser,
    /// e.g. `0.5*x^1.5 - 2*(1-x)^0.5 + 3*(x-0.25)^2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            let (sign, mag) = if t.coef < 0.0 {
                ("-", -t.coef)
            } else {
                ("+", t.coef)
            };
            if i == 0 {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let base = match (t.side, t.anchor) {
                (Side::Left, a) if a == 0.0 => "x".to_string(),
                (Side::Left, a) => format!("(x-{a})"),
                (Side::Right, a) if a == 1.0 => "(1-x)".to_string(),
                (Side::Right, a) => format!("({a}-x)"),
            };
            if t.exponent == 0.0 && t.anchor == t.side.base_point() {
                write!(f, "{mag}")?;
            } else {
                if mag != 1.0 {
                    write!(f, "{mag}*")?;
                }
                match t.exponent {
                    p if p == 1.0 => write!(f, "{base}")?,
                    p if p < 0.0 => write!(f, "{base}^({p})")?,
                    p => write!(f, "{base}^{p}")?,
                }
            }
        }
        Ok(())
    }
}

/// Left Riemann–Liouville integral of order γ from 0:
/// `(x - a)₊^p ↦ Γ(p+1)/Γ(p+γ+1) (x - a)₊^(p+γ)`.
pub fn left_frac_integral(f: &PowerSum, gamma_order: FracOrder) -> Result<PowerSum> {
    f.check_side(Side::Left)?;
    frac_integral(f, gamma_order.value())
}

/// Right Riemann–Liouville integral of order γ towards 1:
/// `(a - x)₊^p ↦ Γ(p+1)/Γ(p+γ+1) (a - x)₊^(p+γ)`.
pub fn right_frac_integral(f: &PowerSum, gamma_order: FracOrder) -> Result<PowerSum> {
    f.check_side(Side::Right)?;
    frac_integral(f, gamma_order.value())
}

fn frac_integral(f: &PowerSum, g: f64) -> Result<PowerSum> {
    if !(g >= 0.0) {
        return Err(FracError::Parameter(format!(
            "integration order {g} is negative"
        )));
    }
    if g == 0.0 {
        return Ok(f.clone());
    }
    Ok(PowerSum::from_terms(
        f.terms
            .iter()
            .map(|t| Term {
                coef: t.coef * power_gain(t.exponent, g),
                exponent: t.exponent + g,
                ..*t
            })
            .collect(),
    ))
}

fn check_derivative_order(beta_order: FracOrder) -> Result<f64> {
    let b = beta_order.value();
    if b > 0.0 && b < 2.0 {
        Ok(b)
    } else {
        Err(FracError::Parameter(format!(
            "derivative order {b} outside (0, 2)"
        )))
    }
}

fn riemann_term(t: &Term, b: f64) -> Result<Option<Term>> {
    let p = t.exponent - b;
    let denominator_arg = p + 1.0;
    if crate::special::nonpositive_integer(denominator_arg) {
        return Ok(None);
    }
    if !(p > -1.0) {
        return Err(FracError::Representability { exponent: p });
    }
    Ok(Some(Term {
        coef: t.coef * gamma(t.exponent + 1.0) * rgamma(denominator_arg),
        exponent: p,
        ..*t
    }))
}

/// Riemann–Liouville derivative of order β ∈ (0, 2) on the given side.
/// Integer powers below β are annihilated (1/Γ at a pole is zero).
pub fn riemann_derivative(f: &PowerSum, beta_order: FracOrder, side: Side) -> Result<PowerSum> {
    let b = check_derivative_order(beta_order)?;
    f.check_side(side)?;
    let mut out = Vec::with_capacity(f.terms.len());
    for t in &f.terms {
        if let Some(r) = riemann_term(t, b)? {
            out.push(r);
        }
    }
    Ok(PowerSum::from_terms(out))
}

/// Caputo derivative of order β ∈ (0, 2) on the given side.
///
/// Equals the Riemann–Liouville derivative minus the Taylor correction at the
/// base point; on this function class that removes exactly the integer powers
/// of degree below ⌈β⌉ anchored at the base point. Terms anchored at the base
/// point with a non-integer exponent below ⌈β⌉ − 1 have no value or
/// derivative there and are rejected.
pub fn caputo_derivative(f: &PowerSum, beta_order: FracOrder, side: Side) -> Result<PowerSum> {
    let b = check_derivative_order(beta_order)?;
    f.check_side(side)?;
    let order_ceil = b.ceil();
    let mut out = Vec::with_capacity(f.terms.len());
    for t in &f.terms {
        let at_base = (t.anchor - side.base_point()).abs() <= ANCHOR_TOL;
        if at_base {
            match as_nonneg_integer(t.exponent) {
                Some(n) if (n as f64) < order_ceil => continue,
                Some(_) => {}
                None if t.exponent < order_ceil - 1.0 => {
                    return Err(FracError::Evaluability(format!(
                        "term {}·|x - {}|^{} lacks a derivative of order {} at the base point",
                        t.coef,
                        t.anchor,
                        t.exponent,
                        order_ceil - 1.0
                    )));
                }
                None => {}
            }
        }
        if let Some(r) = riemann_term(t, b)? {
            out.push(r);
        }
    }
    Ok(PowerSum::from_terms(out))
}

/// Pointwise value of `f` at `x`.
pub fn evaluate(f: &PowerSum, x: f64) -> Result<f64> {
    f.evaluate(x)
}

/// A continuous piecewise-linear function on the uniform mesh with `m` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    values: Vec<f64>,
}

impl PiecewiseLinear {
    /// Nodal values `v_0..v_m`; needs at least two.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(FracError::Parameter(
                "piecewise linear needs >= 2 nodal values".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FracError::Parameter("non-finite nodal value".into()));
        }
        Ok(PiecewiseLinear { values })
    }

    pub fn cells(&self) -> usize {
        self.values.len() - 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells() as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        node(j, self.cells())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Slope on cell `j`.
    pub fn slope(&self, j: usize) -> f64 {
        (self.values[j + 1] - self.values[j]) * self.cells() as f64
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let m = self.cells();
        if x <= 0.0 {
            return self.values[0];
        }
        if x >= 1.0 {
            return self.values[m];
        }
        let j = ((x * m as f64).floor() as usize).min(m - 1);
        let (lo, hi) = (self.node(j), self.node(j + 1));
        let s = (x - lo) / (hi - lo);
        self.values[j] * (1.0 - s) + self.values[j + 1] * s
    }

    /// Equivalent power sum: `v_0 + s_0 x + Σ_k (s_k - s_{k-1}) (x - x_k)₊`.
    pub fn to_power_sum(&self) -> PowerSum {
        let m = self.cells();
        let mut terms = vec![
            Term {
                coef: self.values[0],
                anchor: 0.0,
                exponent: 0.0,
                side: Side::Left,
            },
            Term {
                coef: self.slope(0),
                anchor: 0.0,
                exponent: 1.0,
                side: Side::Left,
            },
        ];
        for k in 1..m {
            terms.push(Term {
                coef: self.slope(k) - self.slope(k - 1),
                anchor: self.node(k),
                exponent: 1.0,
                side: Side::Left,
            });
        }
        PowerSum::from_terms(terms)
    }
}

/// Node `j` of the uniform mesh with `m` cells. Every module computes nodes
/// through this function so that anchors and element ends compare exactly.
pub fn node(j: usize, m: usize) -> f64 {
    j as f64 / m as f64
}

/// Either representation, for [`inner_product`].
#[derive(Debug, Clone, Copy)]
pub enum FunctionRef<'a> {
    Power(&'a PowerSum),
    Linear(&'a PiecewiseLinear),
}

impl<'a> From<&'a PowerSum> for FunctionRef<'a> {
    fn from(p: &'a PowerSum) -> Self {
        FunctionRef::Power(p)
    }
}

impl<'a> From<&'a PiecewiseLinear> for FunctionRef<'a> {
    fn from(p: &'a PiecewiseLinear) -> Self {
        FunctionRef::Linear(p)
    }
}

/// `∫_0^1 f g dx`.
pub fn inner_product<'a, 'b>(
    f: impl Into<FunctionRef<'a>>,
    g: impl Into<FunctionRef<'b>>,
    tol: f64,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(FracError::Parameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    match (f.into(), g.into()) {
        (FunctionRef::Power(a), FunctionRef::Power(b)) => power_power(a, b),
        (FunctionRef::Power(a), FunctionRef::Linear(v))
        | (FunctionRef::Linear(v), FunctionRef::Power(a)) => Ok(power_linear(a, v)),
        (FunctionRef::Linear(a), FunctionRef::Linear(b)) => Ok(linear_linear(a, b)),
    }
}

fn power_power(a: &PowerSum, b: &PowerSum) -> Result<f64> {
    let mut acc = 0.0;
    for s in &a.terms {
        for t in &b.terms {
            acc += s.coef * t.coef * unit_term_product(s, t)?;
        }
    }
    Ok(acc)
}

/// `∫_0^1` of the product of two unit-coefficient terms.
fn unit_term_product(s: &Term, t: &Term) -> Result<f64> {
    match (s.side, t.side) {
        (Side::Left, Side::Right) | (Side::Right, Side::Left) => {
            let (l, r) = if s.side == Side::Left { (s, t) } else { (t, s) };
            let width = r.anchor - l.anchor;
            if width <= 0.0 {
                return Ok(0.0);
            }
            Ok(
                width.powf(l.exponent + r.exponent + 1.0)
                    * beta(l.exponent + 1.0, r.exponent + 1.0),
            )
        }
        (side, _) => {
            // near: the anchor closer to the support's far end; far: the other
            let (near, far) = match side {
                Side::Left => {
                    if s.anchor >= t.anchor {
                        (s, t)
                    } else {
                        (t, s)
                    }
                }
                Side::Right => {
                    if s.anchor <= t.anchor {
                        (s, t)
                    } else {
                        (t, s)
                    }
                }
            };
            let len = match side {
                Side::Left => 1.0 - near.anchor,
                Side::Right => near.anchor,
            };
            let d = (near.anchor - far.anchor).abs();
            if d <= ANCHOR_TOL {
                let e = near.exponent + far.exponent;
                if !(e > -1.0) {
                    return Err(FracError::Integrability {
                        exponent: e,
                        at: near.anchor,
                    });
                }
                return Ok(if len > 0.0 {
                    len.powf(e + 1.0) / (e + 1.0)
                } else {
                    0.0
                });
            }
            Ok(shifted_power_moment(far.exponent, near.exponent, d, len))
        }
    }
}

fn unit_term_integral(t: &Term, lo: f64, hi: f64) -> f64 {
    let (lo, hi) = (lo.max(0.0), hi.min(1.0));
    if hi <= lo {
        return 0.0;
    }
    match t.side {
        Side::Left => {
            let start = lo.max(t.anchor);
            if hi <= start {
                0.0
            } else {
                shifted_power_moment(t.exponent, 0.0, start - t.anchor, hi - start)
            }
        }
        Side::Right => {
            let end = hi.min(t.anchor);
            if end <= lo {
                0.0
            } else {
                shifted_power_moment(t.exponent, 0.0, t.anchor - end, end - lo)
            }
        }
    }
}

fn legendre_30() -> &'static QuadRule {
    static RULE: OnceLock<QuadRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(30).expect("valid rule"))
}

/// `Σ_k C(p, k) r^k / (q + k + 1)`, which is `∫_0^1 (1 + r s)^p s^q ds` for `r < 1`.
fn binomial_series(p: f64, q: f64, r: f64) -> f64 {
    let mut c = 1.0;
    let mut rk = 1.0;
    let mut sum = 1.0 / (q + 1.0);
    for k in 0..600 {
        c *= (p - k as f64) / (k as f64 + 1.0);
        rk *= r;
        let term = c * rk / (q + k as f64 + 2.0);
        sum += term;
        if c == 0.0 || term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// `∫_0^L (d + t)^p t^q dt` for `d > 0`, `q > -1`.
///
/// Near the anchor (`t ≤ d/2`) the binomial series converges at ratio 1/2;
/// further out the integrand is smooth on geometrically growing panels
/// `[s, 2s]`, where Gauss–Legendre converges to round-off.
pub(crate) fn shifted_power_moment(p: f64, q: f64, d: f64, len: f64) -> f64 {
    if len <= 0.0 {
        return 0.0;
    }
    if d <= 0.0 {
        return len.powf(p + q + 1.0) / (p + q + 1.0);
    }
    let r = len / d;
    if q == 0.0 {
        let k = p + 1.0;
        let l1 = r.ln_1p();
        return if k == 0.0 {
            l1
        } else {
            d.powf(k) * (k * l1).exp_m1() / k
        };
    }
    if r <= 0.5 {
        return d.powf(p) * len.powf(q + 1.0) * binomial_series(p, q, r);
    }
    let head = 0.5 * d;
    let mut acc = d.powf(p) * head.powf(q + 1.0) * binomial_series(p, q, 0.5);
    let rule = legendre_30();
    let mut a = head;
    while a < len {
        let b = (2.0 * a).min(len);
        acc += rule.integrate(a, b, |t| (d + t).powf(p) * t.powf(q));
        a = b;
    }
    acc
}

fn power_linear(a: &PowerSum, v: &PiecewiseLinear) -> f64 {
    let m = v.cells();
    let mut acc = 0.0;
    for j in 0..m {
        let (vl, vh) = (v.values[j], v.values[j + 1]);
        if vl == 0.0 && vh == 0.0 {
            continue;
        }
        let (lo, hi) = (v.node(j), v.node(j + 1));
        for t in &a.terms {
            acc += t.coef * term_times_linear(t, lo, hi, vl, vh);
        }
    }
    acc
}

/// `∫_lo^hi` of a unit term times the linear function with end values `vl`, `vh`.
pub(crate) fn term_times_linear(t: &Term, lo: f64, hi: f64, vl: f64, vh: f64) -> f64 {
    let p = t.exponent;
    // integral over [0, len] of (d + s)^p times the linear function that
    // is `v_near` at s = 0 and `v_far` at s = len
    let piece = |d: f64, len: f64, v_near: f64, v_far: f64| -> f64 {
        if len <= 0.0 {
            return 0.0;
        }
        let m0 = shifted_power_moment(p, 0.0, d, len);
        let m1 = shifted_power_moment(p, 1.0, d, len) / len;
        v_near * (m0 - m1) + v_far * m1
    };
    let lerp = |x: f64| vl + (vh - vl) * (x - lo) / (hi - lo);
    match t.side {
        Side::Left => {
            let c = t.anchor;
            if c >= hi {
                0.0
            } else if c <= lo {
                piece(lo - c, hi - lo, vl, vh)
            } else {
                piece(0.0, hi - c, lerp(c), vh)
            }
        }
        Side::Right => {
            let c = t.anchor;
            if c <= lo {
                0.0
            } else if c >= hi {
                piece(c - hi, hi - lo, vh, vl)
            } else {
                piece(0.0, c - lo, lerp(c), vl)
            }
        }
    }
}

fn linear_linear(a: &PiecewiseLinear, b: &PiecewiseLinear) -> f64 {
    let mut breaks: Vec<f64> = (0..=a.cells())
        .map(|j| a.node(j))
        .chain((0..=b.cells()).map(|j| b.node(j)))
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|x, y| (*x - *y).abs() <= ANCHOR_TOL);
    breaks
        .windows(2)
        .map(|w| {
            let (x0, x1) = (w[0], w[1]);
            let xm = 0.5 * (x0 + x1);
            (x1 - x0) / 6.0
                * (a.evaluate(x0) * b.evaluate(x0)
                    + 4.0 * a.evaluate(xm) * b.evaluate(xm)
                    + a.evaluate(x1) * b.evaluate(x1))
        })
        .sum()
}
