//! Uniform meshes, hat-function spaces and the constrained Caputo test basis.

use crate::error::{FracError, Result};
use crate::fracpoly::{node, term_times_linear, FracOrder, PiecewiseLinear, PowerSum, Side, Term};

/// Uniform partition of (0, 1) into `m` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mesh {
    m: usize,
}

impl Mesh {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(FracError::Parameter(format!(
                "mesh needs m >= 2 cells, got {m}"
            )));
        }
        Ok(Mesh { m })
    }

    /// Mesh with `10 · 2^k` cells.
    pub fn level(k: u32) -> Result<Self> {
        if k > 40 {
            return Err(FracError::Parameter(format!("mesh level {k} too large")));
        }
        Self::new(10usize << k)
    }

    pub fn cells(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        node(j, self.m)
    }

    /// The nodal hat at `j` (half-hats at `0` and `m`).
    pub fn hat(&self, j: usize) -> PiecewiseLinear {
        let mut v = vec![0.0; self.m + 1];
        v[j] = 1.0;
        PiecewiseLinear::new(v).expect("m >= 2")
    }

    /// Piecewise linear function from the interior coefficients `c_1..c_{m-1}`,
    /// zero at both ends.
    pub fn trial_function(&self, coeffs: &[f64]) -> Result<PiecewiseLinear> {
        if coeffs.len() != self.m - 1 {
            return Err(FracError::Parameter(format!(
                "expected {} coefficients, got {}",
                self.m - 1,
                coeffs.len()
            )));
        }
        let mut v = Vec::with_capacity(self.m + 1);
        v.push(0.0);
        v.extend_from_slice(coeffs);
        v.push(0.0);
        PiecewiseLinear::new(v)
    }
}

/// Interior hats `φ_1..φ_{m-1}`, vanishing at 0 and 1.
#[derive(Debug, Clone, Copy)]
pub struct TrialBasis {
    pub mesh: Mesh,
}

impl TrialBasis {
    pub fn new(mesh: Mesh) -> Self {
        TrialBasis { mesh }
    }

    pub fn dim(&self) -> usize {
        self.mesh.m - 1
    }

    /// `φ_i` for `i` in `1..m`.
    pub fn function(&self, i: usize) -> PiecewiseLinear {
        assert!(
            (1..self.mesh.m).contains(&i),
            "trial index {i} out of range"
        );
        self.mesh.hat(i)
    }

    /// `φ_i'` as a combination of unit steps.
    pub fn derivative(&self, i: usize) -> PowerSum {
        assert!(
            (1..self.mesh.m).contains(&i),
            "trial index {i} out of range"
        );
        let inv_h = self.mesh.m as f64;
        let step = |c: f64, j: usize| Term {
            coef: c * inv_h,
            anchor: self.mesh.node(j),
            exponent: 0.0,
            side: Side::Left,
        };
        PowerSum::from_terms(vec![step(1.0, i - 1), step(-2.0, i), step(1.0, i + 1)])
    }
}

/// `μ_i = ∫ x^{1-α} ψ_i dx`, with `ψ_i` the hat at node `i < m` (`ψ_0` is
/// the left half-hat).
pub fn weight_moment(mesh: &Mesh, alpha: FracOrder, i: usize) -> Result<f64> {
    if i >= mesh.m {
        return Err(FracError::Parameter(format!(
            "moment index {i} out of range 0..{}",
            mesh.m
        )));
    }
    let a = alpha_value(alpha)?;
    let w = Term {
        coef: 1.0,
        anchor: 0.0,
        exponent: 1.0 - a,
        side: Side::Left,
    };
    let mut mu = 0.0;
    if i > 0 {
        mu += term_times_linear(&w, mesh.node(i - 1), mesh.node(i), 0.0, 1.0);
    }
    mu += term_times_linear(&w, mesh.node(i), mesh.node(i + 1), 1.0, 0.0);
    Ok(mu)
}

fn alpha_value(alpha: FracOrder) -> Result<f64> {
    let a = alpha.value();
    if a > 1.0 && a < 2.0 {
        Ok(a)
    } else {
        Err(FracError::Parameter(format!("alpha {a} outside (1, 2)")))
    }
}

/// Test basis `η_i = ψ_i - (μ_i/μ_0) ψ_0`, `i = 1..m-1`, for the Caputo
/// problem. Every `η_i` vanishes at 1 and is orthogonal to `x^{1-α}`.
#[derive(Debug, Clone)]
pub struct CaputoTestBasis {
    pub mesh: Mesh,
    pub alpha: FracOrder,
    /// `μ_0..μ_{m-1}`.
    pub moments: Vec<f64>,
}

impl CaputoTestBasis {
    pub fn dim(&self) -> usize {
        self.mesh.m - 1
    }

    /// `μ_i / μ_0`.
    pub fn ratio(&self, i: usize) -> f64 {
        self.moments[i] / self.moments[0]
    }

    /// `η_i` for `i` in `1..m`.
    pub fn function(&self, i: usize) -> PiecewiseLinear {
        assert!((1..self.mesh.m).contains(&i), "test index {i} out of range");
        let mut v = vec![0.0; self.mesh.m + 1];
        v[i] = 1.0;
        v[0] = -self.ratio(i);
        PiecewiseLinear::new(v).expect("m >= 2")
    }
}

pub fn caputo_test_basis(mesh: &Mesh, alpha: FracOrder) -> Result<CaputoTestBasis> {
    let moments = (0..mesh.m)
        .map(|i| weight_moment(mesh, alpha, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(CaputoTestBasis {
        mesh: *mesh,
        alpha,
        moments,
    })
}

/// Which endpoint values the interpolant is forced to zero at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Free,
    BothEndsZero,
    RightEndZero,
}

/// Nodal interpolant of `f`. Forced-zero endpoints are not evaluated.
pub fn interpolate<F>(f: F, mesh: &Mesh, boundary: Boundary) -> Result<PiecewiseLinear>
where
    F: Fn(f64) -> Result<f64>,
{
    let m = mesh.m;
    let mut v = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let forced = match boundary {
            Boundary::Free => false,
            Boundary::BothEndsZero => j == 0 || j == m,
            Boundary::RightEndZero => j == m,
        };
        if forced {
            v.push(0.0);
            continue;
        }
        let x = mesh.node(j);
        let y = f(x).map_err(|e| FracError::Evaluability(format!("at node x = {x}: {e}")))?;
        if !y.is_finite() {
            return Err(FracError::Evaluability(format!(
                "value {y} at node x = {x}"
            )));
        }
        v.push(y);
    }
    PiecewiseLinear::new(v)
}

/// Convenience wrapper for power sums.
pub fn interpolate_power_sum(
    f: &PowerSum,
    mesh: &Mesh,
    boundary: Boundary,
) -> Result<PiecewiseLinear> {
    interpolate(|x| f.evaluate(x), mesh, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracpoly::inner_product;
    use crate::quadrature::integrate_singular;

    #[test]
    fn small_mesh_rejected() {
        assert!(Mesh::new(1).is_err());
        assert_eq!(Mesh::level(1).unwrap().cells(), 20);
        assert_eq!(Mesh::level(7).unwrap().cells(), 1280);
    }

    #[test]
    fn first_moment_on_two_cells() {
        let mesh = Mesh::new(2).unwrap();
        let mu0 = weight_moment(&mesh, FracOrder::alpha(1.5).unwrap(), 0).unwrap();
        assert!((mu0 - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-14);
    }

    #[test]
    fn moments_sum_to_weight_mass() {
        for (m, a) in [(5, 1.5), (17, 4.0 / 3.0), (40, 1.75)] {
            let mesh = Mesh::new(m).unwrap();
            let alpha = FracOrder::alpha(a).unwrap();
            let mut total: f64 = (0..m)
                .map(|i| weight_moment(&mesh, alpha, i).unwrap())
                .sum();
            let w = PowerSum::monomial(1.0, 1.0 - a).unwrap();
            total += inner_product(&w, &mesh.hat(m), 1e-12).unwrap();
            assert!((total - 1.0 / (2.0 - a)).abs() < 1e-13);
        }
    }

    #[test]
    fn moments_match_quadrature() {
        let a = 4.0 / 3.0;
        let mesh = Mesh::new(10).unwrap();
        let alpha = FracOrder::alpha(a).unwrap();
        for i in 0..10 {
            let hat = mesh.hat(i);
            let lo = mesh.node(i.saturating_sub(1));
            let hi = mesh.node(i + 1);
            let mut want = 0.0;
            for (x0, x1) in [(lo, mesh.node(i)), (mesh.node(i), hi)] {
                if x1 <= x0 {
                    continue;
                }
                let le = if x0 == 0.0 { 1.0 - a } else { 0.0 };
                want += integrate_singular(
                    |x| x.powf(1.0 - a) * hat.evaluate(x),
                    (x0, x1),
                    le,
                    0.0,
                    1e-14,
                )
                .unwrap();
            }
            let got = weight_moment(&mesh, alpha, i).unwrap();
            assert!(((got - want) / want).abs() < 1e-11, "{i}: {got} vs {want}");
        }
    }

    #[test]
    fn caputo_basis_satisfies_constraint() {
        for (m, a) in [(2, 1.5), (160, 1.75), (33, 4.0 / 3.0)] {
            let mesh = Mesh::new(m).unwrap();
            let basis = caputo_test_basis(&mesh, FracOrder::alpha(a).unwrap()).unwrap();
            assert_eq!(basis.dim(), m - 1);
            let w = PowerSum::monomial(1.0, 1.0 - a).unwrap();
            for i in 1..m {
                let eta = basis.function(i);
                assert_eq!(eta.evaluate(1.0), 0.0);
                let r = inner_product(&w, &eta, 1e-12).unwrap();
                assert!(r.abs() < 1e-12, "m={m} i={i}: {r}");
            }
        }
    }

    #[test]
    fn interpolation_of_x_and_hat() {
        let mesh = Mesh::new(4).unwrap();
        let v = interpolate(Ok, &mesh, Boundary::Free).unwrap();
        assert_eq!(v.values(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let hat = mesh.hat(2);
        let again = interpolate(|x| Ok(hat.evaluate(x)), &mesh, Boundary::BothEndsZero).unwrap();
        assert_eq!(again, hat);
    }

    #[test]
    fn interpolation_rejects_singular_node() {
        let mesh = Mesh::new(4).unwrap();
        let f = PowerSum::monomial(1.0, -0.25).unwrap();
        assert!(matches!(
            interpolate_power_sum(&f, &mesh, Boundary::Free),
            Err(FracError::Evaluability(_))
        ));
        assert!(interpolate_power_sum(&f, &mesh, Boundary::BothEndsZero).is_ok());
    }

    #[test]
    fn trial_derivative_is_hat_slope() {
        let mesh = Mesh::new(8).unwrap();
        let basis = TrialBasis::new(mesh);
        let d = basis.derivative(3);
        assert!((d.evaluate(0.3).unwrap() - 8.0).abs() < 1e-12);
        assert!((d.evaluate(0.45).unwrap() + 8.0).abs() < 1e-12);
        assert_eq!(d.evaluate(0.7).unwrap(), 0.0);
    }
}
