//! Assembly and solution of the discrete problems.
//!
//! The bilinear form is used as `A(u, v) = (I^{2-α} u', v')`. For hats on a
//! uniform mesh this is a fourth difference of `(x)₊^{3-α}`, so the stiffness
//! matrix is an explicit Toeplitz matrix. The Caputo test functions differ
//! from hats by a multiple of the left half-hat, which adds a rank-one term.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{FracError, Result};
use crate::femspace::{caputo_test_basis, CaputoTestBasis, Mesh};
use crate::fracpoly::{
    inner_product, left_frac_integral, term_times_linear, FracOrder, FunctionRef, PiecewiseLinear,
    PowerSum, Side, Term,
};
use crate::quadrature::{gauss_legendre, integrate_graded, QuadRule, SingularEnds};
use crate::special::{binomial, gamma};

/// Which fractional derivative appears in the equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DerivativeKind {
    RiemannLiouville,
    Caputo,
}

impl DerivativeKind {
    pub fn short_name(self) -> &'static str {
        match self {
            DerivativeKind::RiemannLiouville => "rl",
            DerivativeKind::Caputo => "caputo",
        }
    }
}

impl fmt::Display for DerivativeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for DerivativeKind {
    type Err = FracError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rl" | "riemann-liouville" | "riemann_liouville" | "riemann" => {
                Ok(DerivativeKind::RiemannLiouville)
            }
            "caputo" | "c" => Ok(DerivativeKind::Caputo),
            other => Err(FracError::Config(format!(
                "unknown derivative kind '{other}'"
            ))),
        }
    }
}

/// The potential `q` in `-D^α u + q u = f`.
#[derive(Clone, Default)]
pub enum Potential {
    #[default]
    Zero,
    Power(PowerSum),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Zero => write!(f, "Zero"),
            Potential::Power(p) => write!(f, "Power({p})"),
            Potential::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Potential {
    pub fn is_zero(&self) -> bool {
        match self {
            Potential::Zero => true,
            Potential::Power(p) => p.is_zero(),
            Potential::Custom(_) => false,
        }
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        match self {
            Potential::Zero => Ok(0.0),
            Potential::Power(p) => p.evaluate(x),
            Potential::Custom(f) => Ok(f(x)),
        }
    }
}

/// Problem data other than the source.
#[derive(Debug, Clone)]
pub struct Formulation {
    pub kind: DerivativeKind,
    pub alpha: FracOrder,
    pub potential: Potential,
}

impl Formulation {
    pub fn new(kind: DerivativeKind, alpha: f64, potential: Potential) -> Result<Self> {
        Ok(Formulation {
            kind,
            alpha: FracOrder::alpha(alpha)?,
            potential,
        })
    }
}

/// Dense Petrov–Galerkin system for the interior nodal values.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub solution: Option<DVector<f64>>,
}

/// Relative pivot threshold below which a system counts as singular.
pub const PIVOT_TOL: f64 = 1e-14;
/// Relative residual bound checked after every solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

impl LinearSystem {
    pub fn new(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != rhs.len() {
            return Err(FracError::Parameter(format!(
                "system shape mismatch: {}x{} matrix, rhs of length {}",
                matrix.nrows(),
                matrix.ncols(),
                rhs.len()
            )));
        }
        if matrix.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
            return Err(FracError::Parameter(
                "non-finite entry in linear system".into(),
            ));
        }
        Ok(LinearSystem {
            matrix,
            rhs,
            solution: None,
        })
    }

    /// LU with partial pivoting; stores and returns the solution.
    pub fn solve(&mut self) -> Result<&DVector<f64>> {
        let x = solve(&self.matrix, &self.rhs)?;
        self.solution = Some(x);
        Ok(self.solution.as_ref().expect("just set"))
    }

    /// `‖A x - b‖∞ / (‖A‖∞ ‖x‖∞ + ‖b‖∞)` for the stored solution.
    pub fn relative_residual(&self) -> Option<f64> {
        self.solution
            .as_ref()
            .map(|x| relative_residual(&self.matrix, &self.rhs, x))
    }
}

fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn relative_residual(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let r = (a * x - b).amax();
    let scale = inf_norm(a) * x.amax() + b.amax();
    if scale == 0.0 {
        r
    } else {
        r / scale
    }
}

/// Solves `A x = b` by LU with partial pivoting, rejecting pivots below
/// [`PIVOT_TOL`] times the max-norm of the matching (permuted) row of `A`.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    if !a.is_square() || b.len() != n {
        return Err(FracError::Parameter("solve needs a square system".into()));
    }
    let lu = a.clone().lu();
    let mut permuted = a.clone();
    lu.p().permute_rows(&mut permuted);
    let u = lu.u();
    for i in 0..n {
        let scale = permuted.row(i).amax();
        let pivot = u[(i, i)];
        if !(pivot.abs() > PIVOT_TOL * scale) {
            return Err(FracError::NearSingular {
                pivot,
                row: i,
                scale,
            });
        }
    }
    let x = lu.solve(b).ok_or(FracError::NearSingular {
        pivot: 0.0,
        row: 0,
        scale: 0.0,
    })?;
    let bound = RESIDUAL_TOL * (inf_norm(a) * x.amax() + b.amax());
    let residual = (a * &x - b).amax();
    if !(residual <= bound) {
        return Err(FracError::Residual { residual, bound });
    }
    Ok(x)
}

/// `Σ_r w_r (d + r)₊^s` with `w = (1, -4, 6, -4, 1)`, `r = -2..2`.
///
/// For large `d` the direct sum cancels catastrophically; the binomial
/// expansion `d^s Σ_k C(s, k) S_k d^{-k}` with `S_k = Σ_r w_r r^k` only keeps
/// even `k ≥ 4` and converges fast.
fn fourth_difference(d: i64, s: f64) -> f64 {
    if d <= -2 {
        return 0.0;
    }
    if d < 20 {
        let w = [1.0, -4.0, 6.0, -4.0, 1.0];
        return (-2..=2)
            .zip(w)
            .map(|(r, wr)| {
                let t = (d + r) as f64;
                if t > 0.0 {
                    wr * t.powf(s)
                } else {
                    0.0
                }
            })
            .sum();
    }
    let df = d as f64;
    let inv2 = 1.0 / (df * df);
    let mut sum = 0.0;
    let mut dk = inv2 * inv2;
    let mut k = 4;
    loop {
        let sk = 2.0 * 2f64.powi(k as i32) - 8.0;
        let term = binomial(s, k) * sk * dk;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() || k > 60 {
            break;
        }
        k += 2;
        dk *= inv2;
    }
    df.powf(s) * sum
}

/// `A(φ_j, φ_i)` for interior hats on the mesh; depends on `i - j` only.
pub fn stiffness_entry(mesh: &Mesh, alpha: FracOrder, i: usize, j: usize) -> f64 {
    let a = alpha.value();
    let scale = -mesh.h().powf(1.0 - a) / gamma(4.0 - a);
    scale * fourth_difference(i as i64 - j as i64, 3.0 - a)
}

/// `A(φ_j, ψ_0)` with `ψ_0` the left half-hat: nonzero only for `j = 1`.
pub fn half_hat_entry(mesh: &Mesh, alpha: FracOrder, j: usize) -> f64 {
    let a = alpha.value();
    if j == 1 {
        -mesh.h().powf(1.0 - a) / gamma(4.0 - a)
    } else {
        0.0
    }
}

/// Stiffness matrix with entry `(i, j) = A(φ_j, t_i)`, where `t_i = φ_i`
/// (Riemann–Liouville) or `t_i = η_i` (Caputo).
pub fn assemble_stiffness(mesh: &Mesh, formulation: &Formulation) -> Result<DMatrix<f64>> {
    let n = mesh.cells() - 1;
    let a = formulation.alpha.value();
    let scale = -mesh.h().powf(1.0 - a) / gamma(4.0 - a);
    let s = 3.0 - a;
    // symbol[d + n] = A(φ_j, φ_i) for d = i - j
    let symbol: Vec<f64> = (-(n as i64)..=n as i64)
        .map(|d| scale * fourth_difference(d, s))
        .collect();
    let mut m = DMatrix::from_fn(n, n, |r, c| {
        symbol[(r as i64 - c as i64 + n as i64) as usize]
    });
    if formulation.kind == DerivativeKind::Caputo {
        let basis = caputo_test_basis(mesh, formulation.alpha)?;
        let corner = half_hat_entry(mesh, formulation.alpha, 1);
        for r in 0..n {
            m[(r, 0)] -= basis.ratio(r + 1) * corner;
        }
    }
    Ok(m)
}

fn test_basis(mesh: &Mesh, formulation: &Formulation) -> Result<Option<CaputoTestBasis>> {
    match formulation.kind {
        DerivativeKind::RiemannLiouville => Ok(None),
        DerivativeKind::Caputo => caputo_test_basis(mesh, formulation.alpha).map(Some),
    }
}

/// Load vector `(f, t_i)`. Caputo entries expand to `(f, ψ_i) - (μ_i/μ_0)(f, ψ_0)`.
pub fn assemble_load(mesh: &Mesh, formulation: &Formulation, f: &PowerSum) -> Result<DVector<f64>> {
    let m = mesh.cells();
    // falling[e] = (f, (x_{e+1} - x)/h on cell e), rising[e] = (f, (x - x_e)/h on cell e)
    let mut falling = vec![0.0; m];
    let mut rising = vec![0.0; m];
    for e in 0..m {
        let (lo, hi) = (mesh.node(e), mesh.node(e + 1));
        for t in f.terms() {
            falling[e] += t.coef * term_times_linear(t, lo, hi, 1.0, 0.0);
            rising[e] += t.coef * term_times_linear(t, lo, hi, 0.0, 1.0);
        }
    }
    let mut b = DVector::from_fn(m - 1, |r, _| rising[r] + falling[r + 1]);
    if let Some(basis) = test_basis(mesh, formulation)? {
        let f_psi0 = falling[0];
        for r in 0..m - 1 {
            b[r] -= basis.ratio(r + 1) * f_psi0;
        }
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(FracError::Integrability {
            exponent: f64::NAN,
            at: 0.0,
        });
    }
    Ok(b)
}

const POTENTIAL_START_NODES: usize = 4;
const POTENTIAL_MAX_NODES: usize = 256;
const POTENTIAL_TOL: f64 = 1e-12;

/// Anchors of non-smooth terms of a power-sum potential in `[lo, hi]`.
fn potential_breaks(q: &Potential, lo: f64, hi: f64) -> Vec<f64> {
    let Potential::Power(p) = q else {
        return Vec::new();
    };
    let mut breaks: Vec<f64> = p
        .terms()
        .iter()
        .filter(|t| {
            t.exponent.fract() != 0.0 || t.exponent < 0.0 || (t.anchor > lo && t.anchor < hi)
        })
        .map(|t| t.anchor)
        .filter(|&a| a >= lo && a <= hi)
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    breaks
}

/// Graded quadrature on the sub-pieces of a cell split at `breaks`.
fn local_potential_graded(
    q: &Potential,
    lo: f64,
    hi: f64,
    breaks: &[f64],
) -> Result<[[f64; 2]; 2]> {
    let mut cuts = vec![lo];
    cuts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
    cuts.push(hi);
    let len = hi - lo;
    let mut acc = [[0.0; 2]; 2];
    for w in cuts.windows(2) {
        let ends = SingularEnds {
            left: breaks.contains(&w[0]),
            right: breaks.contains(&w[1]),
        };
        for a in 0..2 {
            for b in a..2 {
                let v = integrate_graded(
                    |x| {
                        let n1 = (x - lo) / len;
                        let n = [1.0 - n1, n1];
                        q.evaluate(x).unwrap_or(f64::NAN) * n[a] * n[b]
                    },
                    (w[0], w[1]),
                    ends,
                    POTENTIAL_TOL,
                )?;
                acc[a][b] += v;
            }
        }
    }
    acc[1][0] = acc[0][1];
    Ok(acc)
}

/// `[∫ q N_a N_b]` on one cell for the two local linear shape functions.
fn local_potential(q: &Potential, lo: f64, hi: f64, rules: &[QuadRule]) -> Result<[[f64; 2]; 2]> {
    let breaks = potential_breaks(q, lo, hi);
    if !breaks.is_empty() {
        return local_potential_graded(q, lo, hi, &breaks);
    }
    let eval = |rule: &QuadRule| -> Result<[[f64; 2]; 2]> {
        let mut acc = [[0.0; 2]; 2];
        let len = hi - lo;
        for (x, w) in rule.mapped(lo, hi) {
            let qx = q.evaluate(x)?;
            let n1 = (x - lo) / len;
            let n = [1.0 - n1, n1];
            for a in 0..2 {
                for b in 0..2 {
                    acc[a][b] += w * qx * n[a] * n[b];
                }
            }
        }
        Ok(acc)
    };
    let mut prev = eval(&rules[0])?;
    let mut before = prev;
    for rule in &rules[1..] {
        let cur = eval(rule)?;
        let scale = cur.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = cur
            .iter()
            .flatten()
            .zip(prev.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if diff <= POTENTIAL_TOL * scale.max((hi - lo) * 1e-300) {
            return Ok(cur);
        }
        before = prev;
        prev = cur;
    }
    Err(FracError::Convergence {
        last: prev[0][0],
        previous: before[0][0],
        depth: rules.len(),
    })
}

/// Matrix with entry `(i, j) = (q φ_j, t_i)`, by per-cell Gauss–Legendre with
/// node doubling; the zero potential short-circuits to the zero matrix.
pub fn assemble_potential(mesh: &Mesh, formulation: &Formulation) -> Result<DMatrix<f64>> {
    let m = mesh.cells();
    let n = m - 1;
    if formulation.potential.is_zero() {
        return Ok(DMatrix::zeros(n, n));
    }
    let mut rules = Vec::new();
    let mut k = POTENTIAL_START_NODES;
    while k <= POTENTIAL_MAX_NODES {
        rules.push(gauss_legendre(k)?);
        k *= 2;
    }
    // global node-to-node matrix G[p][r] = (q ψ_r, ψ_p), tridiagonal
    let mut diag = vec![0.0; m + 1];
    let mut upper = vec![0.0; m];
    let mut lower = vec![0.0; m];
    for e in 0..m {
        let loc = local_potential(
            &formulation.potential,
            mesh.node(e),
            mesh.node(e + 1),
            &rules,
        )?;
        diag[e] += loc[0][0];
        diag[e + 1] += loc[1][1];
        upper[e] += loc[0][1];
        lower[e] += loc[1][0];
    }
    let g = |p: usize, r: usize| -> f64 {
        if p == r {
            diag[p]
        } else if r == p + 1 {
            upper[p]
        } else if p == r + 1 {
            lower[r]
        } else {
            0.0
        }
    };
    let mut out = DMatrix::from_fn(n, n, |r, c| g(r + 1, c + 1));
    if let Some(basis) = test_basis(mesh, formulation)? {
        for r in 0..n {
            let ratio = basis.ratio(r + 1);
            for c in 0..n {
                out[(r, c)] -= ratio * g(0, c + 1);
            }
        }
    }
    Ok(out)
}

/// Assembled and solved discrete problem.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub system: LinearSystem,
    /// Discrete solution with zero boundary values.
    pub u_h: PiecewiseLinear,
}

/// Assembles `A + Q` and the load for `f`, solves, and returns `u_h`.
pub fn solve_problem(
    mesh: &Mesh,
    formulation: &Formulation,
    f: &PowerSum,
) -> Result<Discretization> {
    let mut matrix = assemble_stiffness(mesh, formulation)?;
    if !formulation.potential.is_zero() {
        matrix += assemble_potential(mesh, formulation)?;
    }
    let rhs = assemble_load(mesh, formulation, f)?;
    let mut system = LinearSystem::new(matrix, rhs)?;
    let coeffs = system.solve()?.as_slice().to_vec();
    let u_h = mesh.trial_function(&coeffs)?;
    Ok(Discretization {
        mesh: *mesh,
        system,
        u_h,
    })
}

fn steps_of(v: &PiecewiseLinear) -> PowerSum {
    let m = v.cells();
    let mut terms = vec![Term {
        coef: v.slope(0),
        anchor: 0.0,
        exponent: 0.0,
        side: Side::Left,
    }];
    for k in 1..m {
        terms.push(Term {
            coef: v.slope(k) - v.slope(k - 1),
            anchor: v.node(k),
            exponent: 0.0,
            side: Side::Left,
        });
    }
    PowerSum::from_terms(terms)
}

/// `A(u, v) = (I^{2-α} u', v')` for `u` with `u(0) = 0` and `v` with `v(1) = 0`.
/// A power-sum `u` must be left-sided.
pub fn bilinear_form<'a, 'b>(
    u: impl Into<FunctionRef<'a>>,
    v: impl Into<FunctionRef<'b>>,
    alpha: FracOrder,
) -> Result<f64> {
    let g = FracOrder::integral(2.0 - alpha.value())?;
    let du = match u.into() {
        FunctionRef::Power(p) => p.derivative()?,
        FunctionRef::Linear(l) => steps_of(l),
    };
    let w = left_frac_integral(&du, g)?;
    match v.into() {
        FunctionRef::Linear(l) => Ok((0..l.cells())
            .map(|j| l.slope(j) * w.integrate_over(l.node(j), l.node(j + 1)))
            .sum()),
        FunctionRef::Power(p) => inner_product(&w, &p.derivative()?, 1e-12),
    }
}
