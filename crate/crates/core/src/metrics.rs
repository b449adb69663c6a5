//! Error norms of `e = u - u_h` and convergence-rate estimation.
//!
//! All norms are integrated directly on `e`, cell by cell, rather than by
//! expanding `(u - u_h, u - u_h)` into separate products: the expansion
//! cancels to a few digits once the error is small. Cells touching an
//! algebraic singularity of `u` use geometric grading; the rest are smooth
//! and a fixed high-order Gauss rule is exact to round-off.
//!
//! The energy `A(e, e) = (I^{2-α} e', e')` needs `I^{2-α} u_h'`, a sum of
//! `(x - x_k)₊^{2-α}` over all nodes left of `x`. On a uniform mesh those
//! powers at the Gauss points of cell `j` only depend on `j - k`, so one
//! table serves every cell; the term anchored at the cell's own left node is
//! integrated separately with a Gauss–Jacobi rule.

use crate::assembly::DerivativeKind;
use crate::error::{FracError, Result};
use crate::fracpoly::{left_frac_integral, FracOrder, PiecewiseLinear, PowerSum, Side, Term};
use crate::quadrature::{
    gauss_jacobi_rule, gauss_legendre, integrate_graded, QuadRule, SingularEnds,
};
use crate::special::{as_nonneg_integer, gamma};

const SMOOTH_NODES: usize = 24;
const GRADED_TOL: f64 = 1e-13;

/// Errors of one discrete solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub m: usize,
    pub h: f64,
    pub l2_error: f64,
    /// `√A(e, e)`, the energy norm of the error; this is the quantity
    /// reported as the `H^{α/2}` error.
    pub halpha_error: f64,
    /// `√(A(e, e) / cos((1 - α/2)π))`, the Fourier `H^{α/2}(ℝ)` seminorm of
    /// the zero extension of `e`.
    pub energy_seminorm: f64,
    /// The adjoint-singularity coefficient of `e`, see [`singular_coefficient`].
    pub coefficient: f64,
}

/// A sub-interval of one mesh cell on which `u` is smooth except possibly
/// at the flagged ends.
#[derive(Debug, Clone, Copy)]
struct Piece {
    lo: f64,
    hi: f64,
    cell: usize,
    ends: SingularEnds,
}

fn nonsmooth(t: &Term) -> bool {
    as_nonneg_integer(t.exponent).is_none()
}

/// Splits every cell at the anchors of `u` that fall inside it and flags
/// ends that sit at, or within one piece-width of, a non-integer power.
fn pieces(u: &PowerSum, m: usize) -> Vec<Piece> {
    let tol = 4.0 * f64::EPSILON;
    let singular_anchors: Vec<&Term> = u.terms().iter().filter(|t| nonsmooth(t)).collect();
    let mut anchors: Vec<f64> = u
        .terms()
        .iter()
        .map(|t| t.anchor)
        .filter(|&a| a > 0.0 && a < 1.0)
        .collect();
    anchors.sort_by(f64::total_cmp);
    anchors.dedup();
    let mut out = Vec::with_capacity(m);
    for cell in 0..m {
        let (lo, hi) = (cell as f64 / m as f64, (cell + 1) as f64 / m as f64);
        let mut cuts = vec![lo];
        cuts.extend(
            anchors
                .iter()
                .copied()
                .filter(|&a| a > lo + tol && a < hi - tol),
        );
        cuts.push(hi);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let width = b - a;
            let near = |x: f64| {
                singular_anchors.iter().any(|t| {
                    let outside = match t.side {
                        Side::Left => t.anchor <= x + tol,
                        Side::Right => t.anchor >= x - tol,
                    };
                    (t.anchor - x).abs() <= width * 0.5 && outside
                })
            };
            let left = singular_anchors.iter().any(|t| {
                (t.side == Side::Left && (t.anchor - a).abs() <= tol)
                    || (t.anchor < a - tol && near(a))
            });
            let right = singular_anchors.iter().any(|t| {
                (t.side == Side::Right && (t.anchor - b).abs() <= tol)
                    || (t.anchor > b + tol && near(b))
            });
            out.push(Piece {
                lo: a,
                hi: b,
                cell,
                ends: SingularEnds { left, right },
            });
        }
    }
    out
}

/// Value of `u` at an interior point that is not an anchor of a negative power.
fn value(u: &PowerSum, x: f64) -> f64 {
    u.evaluate(x).unwrap_or(f64::NAN)
}

fn linear_on_cell(v: &PiecewiseLinear, cell: usize, x: f64) -> f64 {
    let m = v.cells() as f64;
    let lo = cell as f64 / m;
    let s = (x - lo) * m;
    let vals = v.values();
    vals[cell] + (vals[cell + 1] - vals[cell]) * s
}

fn integrate_piece<F: Fn(f64) -> f64>(piece: &Piece, rule: &QuadRule, f: F) -> Result<f64> {
    if piece.ends == SingularEnds::NONE {
        let v = rule.integrate(piece.lo, piece.hi, &f);
        if !v.is_finite() {
            return Err(FracError::Convergence {
                last: v,
                previous: v,
                depth: 0,
            });
        }
        Ok(v)
    } else {
        integrate_graded(f, (piece.lo, piece.hi), piece.ends, GRADED_TOL)
    }
}

fn check_mesh(u_h: &PiecewiseLinear) -> Result<()> {
    let v = u_h.values();
    if v[0] != 0.0 || v[v.len() - 1] != 0.0 {
        return Err(FracError::Parameter(
            "discrete solution must vanish at both ends".into(),
        ));
    }
    Ok(())
}

/// `‖u - u_h‖_{L²(0,1)}`.
pub fn l2_error(u: &PowerSum, u_h: &PiecewiseLinear) -> Result<f64> {
    let rule = gauss_legendre(SMOOTH_NODES)?;
    let mut total = 0.0;
    for p in pieces(u, u_h.cells()) {
        total += integrate_piece(&p, &rule, |x| {
            let e = value(u, x) - linear_on_cell(u_h, p.cell, x);
            e * e
        })?;
    }
    Ok(total.max(0.0).sqrt())
}

/// `(1/Γ(α)) ∫ ω e` with `ω = x^{α-1}` (Riemann–Liouville) or `ω = x`
/// (Caputo): the weight of `(1 - x)^{α-1}` in the adjoint solution with
/// source `e`.
pub fn singular_coefficient(
    u: &PowerSum,
    u_h: &PiecewiseLinear,
    alpha: FracOrder,
    kind: DerivativeKind,
) -> Result<f64> {
    let a = alpha.value();
    let p = match kind {
        DerivativeKind::RiemannLiouville => a - 1.0,
        DerivativeKind::Caputo => 1.0,
    };
    let rule = gauss_legendre(SMOOTH_NODES)?;
    let mut total = 0.0;
    for piece in pieces(u, u_h.cells()) {
        total += integrate_piece(&piece, &rule, |x| {
            x.powf(p) * (value(u, x) - linear_on_cell(u_h, piece.cell, x))
        })?;
    }
    Ok(total / gamma(a))
}

/// `A(e, e) = (I^{2-α} e', e')` for `e = u - u_h`; `u` must be left-sided
/// with `u(0) = 0` and `u_h` must vanish at both ends.
pub fn energy_form(u: &PowerSum, u_h: &PiecewiseLinear, alpha: FracOrder) -> Result<f64> {
    check_mesh(u_h)?;
    let a = alpha.value();
    let du = u.derivative()?;
    let wu = left_frac_integral(&du, FracOrder::integral(2.0 - a)?)?;
    let fast = u
        .terms()
        .iter()
        .all(|t| t.side == Side::Left && t.anchor == 0.0);
    let value = if fast {
        energy_uniform(&du, &wu, u_h, a)?
    } else {
        energy_general(u, &du, &wu, u_h, a)?
    };
    Ok(value.max(0.0))
}

/// Slope jumps `d_0 = s_0`, `d_k = s_k - s_{k-1}`.
fn slope_jumps(u_h: &PiecewiseLinear) -> Vec<f64> {
    let m = u_h.cells();
    let mut d = Vec::with_capacity(m);
    d.push(u_h.slope(0));
    for k in 1..m {
        d.push(u_h.slope(k) - u_h.slope(k - 1));
    }
    d
}

fn energy_uniform(du: &PowerSum, wu: &PowerSum, u_h: &PiecewiseLinear, a: f64) -> Result<f64> {
    let m = u_h.cells();
    let h = u_h.h();
    let s = 2.0 - a;
    let inv_g = 1.0 / gamma(3.0 - a);
    let jumps = slope_jumps(u_h);
    let gl = gauss_legendre(SMOOTH_NODES)?;
    let gj = gauss_jacobi_rule(SMOOTH_NODES, 0.0, s)?;
    // unit-cell Gauss points t_q in (0, 1)
    let t: Vec<f64> = gl.nodes.iter().map(|z| 0.5 * (z + 1.0)).collect();
    let wq: Vec<f64> = gl.weights.iter().map(|w| 0.5 * w * h).collect();
    let nq = t.len();
    // table[l][q] = ((l + t_q) h)^s / Γ(3-α), l = 1..m-1
    let hs = h.powf(s) * inv_g;
    let table: Vec<f64> = (0..m)
        .flat_map(|l| t.iter().map(move |tq| (l as f64 + tq).powf(s) * hs))
        .collect();

    let mut total = 0.0;
    // cell 0: everything is singular at the origin
    {
        let s0 = jumps[0];
        let f = |x: f64| {
            let w = value(wu, x) - s0 * x.powf(s) * inv_g;
            w * (value(du, x) - s0)
        };
        total += integrate_graded(f, (0.0, h), SingularEnds::LEFT, GRADED_TOL)?;
    }
    let mut smooth_part = vec![0.0; nq];
    for j in 1..m {
        let lo = j as f64 * h;
        let sj = u_h.slope(j);
        smooth_part.iter_mut().for_each(|v| *v = 0.0);
        for l in 1..=j {
            let d = jumps[j - l];
            if d == 0.0 {
                continue;
            }
            let row = &table[l * nq..(l + 1) * nq];
            for (acc, tv) in smooth_part.iter_mut().zip(row) {
                *acc += d * tv;
            }
        }
        let mut cell = 0.0;
        for q in 0..nq {
            let x = lo + t[q] * h;
            let ep = value(du, x) - sj;
            cell += wq[q] * (value(wu, x) - smooth_part[q]) * ep;
        }
        let dj = jumps[j];
        if dj != 0.0 {
            let sing = gj.integrate(lo, lo + h, |x| value(du, x) - sj);
            cell -= dj * inv_g * sing;
        }
        total += cell;
    }
    Ok(total)
}

fn energy_general(
    u: &PowerSum,
    du: &PowerSum,
    wu: &PowerSum,
    u_h: &PiecewiseLinear,
    a: f64,
) -> Result<f64> {
    let m = u_h.cells();
    let s = 2.0 - a;
    let inv_g = 1.0 / gamma(3.0 - a);
    let jumps = slope_jumps(u_h);
    let mut total = 0.0;
    for p in pieces(u, m) {
        let sj = u_h.slope(p.cell);
        let f = |x: f64| {
            let mut wh = 0.0;
            for (k, d) in jumps.iter().enumerate().take(p.cell + 1) {
                let r = x - u_h.node(k);
                if r > 0.0 {
                    wh += d * r.powf(s);
                }
            }
            (value(wu, x) - wh * inv_g) * (value(du, x) - sj)
        };
        let ends = SingularEnds {
            left: true,
            right: p.ends.right,
        };
        total += integrate_graded(f, (p.lo, p.hi), ends, GRADED_TOL)?;
    }
    Ok(total)
}

/// Energy norm `√A(e, e)`.
pub fn energy_norm(u: &PowerSum, u_h: &PiecewiseLinear, alpha: FracOrder) -> Result<f64> {
    Ok(energy_form(u, u_h, alpha)?.sqrt())
}

/// `cos((1 - α/2)π)`, the factor between `A(v, v)` and `|v|²_{H^{α/2}(ℝ)}`.
pub fn energy_factor(alpha: FracOrder) -> f64 {
    ((1.0 - alpha.value() / 2.0) * std::f64::consts::PI).cos()
}

/// `|e|_{H^{α/2}} = √(A(e, e) / cos((1 - α/2)π))`.
pub fn energy_error(u: &PowerSum, u_h: &PiecewiseLinear, alpha: FracOrder) -> Result<f64> {
    let a = alpha.value();
    if !(a > 1.0 && a < 2.0) {
        return Err(FracError::Parameter(format!("alpha {a} outside (1, 2)")));
    }
    Ok((energy_form(u, u_h, alpha)? / energy_factor(alpha)).sqrt())
}

/// All error measures for one discrete solution.
pub fn error_record(
    u: &PowerSum,
    u_h: &PiecewiseLinear,
    alpha: FracOrder,
    kind: DerivativeKind,
) -> Result<ErrorRecord> {
    let energy = energy_form(u, u_h, alpha)?;
    Ok(ErrorRecord {
        m: u_h.cells(),
        h: u_h.h(),
        l2_error: l2_error(u, u_h)?,
        halpha_error: energy.sqrt(),
        energy_seminorm: (energy / energy_factor(alpha)).sqrt(),
        coefficient: singular_coefficient(u, u_h, alpha, kind)?,
    })
}

/// Observed convergence rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    /// `log(e_k / e_{k+1}) / log(h_k / h_{k+1})` for consecutive levels.
    pub per_step: Vec<f64>,
    /// Least-squares slope of `log e` against `log h`.
    pub fitted: f64,
}

/// Rates from `(h, error)` pairs with `h` halving from one entry to the next.
pub fn convergence_rates(errors: &[(f64, f64)]) -> Result<Rates> {
    if errors.len() < 2 {
        return Err(FracError::RateUndefined("need at least two levels".into()));
    }
    for (h, e) in errors {
        if !(*e > 0.0) || !e.is_finite() {
            return Err(FracError::RateUndefined(format!(
                "error {e} at h = {h} is not positive"
            )));
        }
        if !(*h > 0.0) {
            return Err(FracError::RateUndefined(format!(
                "mesh size {h} is not positive"
            )));
        }
    }
    for w in errors.windows(2) {
        let ratio = w[0].0 / w[1].0;
        if (ratio - 2.0).abs() > 1e-9 {
            return Err(FracError::RateUndefined(format!(
                "mesh sizes {} -> {} do not halve",
                w[0].0, w[1].0
            )));
        }
    }
    let per_step = errors
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect();
    Ok(Rates {
        per_step,
        fitted: fitted_slope(errors),
    })
}

/// Least-squares slope of `log e` against `log h` for any distinct mesh sizes.
pub fn fitted_rate(errors: &[(f64, f64)]) -> Result<f64> {
    if errors.len() < 2 {
        return Err(FracError::RateUndefined("need at least two levels".into()));
    }
    for (h, e) in errors {
        if !(*e > 0.0 && e.is_finite() && *h > 0.0) {
            return Err(FracError::RateUndefined(format!(
                "error {e} at h = {h} is not positive"
            )));
        }
    }
    let slope = fitted_slope(errors);
    if !slope.is_finite() {
        return Err(FracError::RateUndefined(
            "mesh sizes are not distinct".into(),
        ));
    }
    Ok(slope)
}

/// Rate between two levels, `log(e_0 / e_1) / log(h_0 / h_1)`.
pub fn step_rate(coarse: (f64, f64), fine: (f64, f64)) -> Result<f64> {
    fitted_rate(&[coarse, fine])
}

fn fitted_slope(errors: &[(f64, f64)]) -> f64 {
    let n = errors.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = errors.iter().map(|(h, e)| (h.ln(), e.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
