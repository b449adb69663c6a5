//! Exact solutions for `q = 0` and the three benchmark examples.
//!
//! The sign convention is that of `-D^α u = f`, so the solution operators
//! carry a minus sign in front of the fractional integral of `f`.

use std::fmt;
use std::str::FromStr;

use crate::assembly::DerivativeKind;
use crate::error::{FracError, Result};
use crate::fracpoly::{
    inner_product, left_frac_integral, right_frac_integral, FracOrder, PowerSum, Side, Term,
};
use crate::special::{as_nonneg_integer, binomial, gamma};

/// One of the benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExampleId {
    /// `f = x(1 - x)`
    A,
    /// `f = 1`
    B,
    /// `f = x^{-1/4}`
    C,
}

impl ExampleId {
    pub const ALL: [ExampleId; 3] = [ExampleId::A, ExampleId::B, ExampleId::C];

    pub fn letter(self) -> char {
        match self {
            ExampleId::A => 'a',
            ExampleId::B => 'b',
            ExampleId::C => 'c',
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for ExampleId {
    type Err = FracError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(ExampleId::A),
            "b" => Ok(ExampleId::B),
            "c" => Ok(ExampleId::C),
            other => Err(FracError::Config(format!("unknown example '{other}'"))),
        }
    }
}

/// Source term of a benchmark problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleCase {
    pub id: ExampleId,
    pub source: PowerSum,
    pub regularity_note: &'static str,
}

pub fn example_case(id: ExampleId) -> ExampleCase {
    let mono = |c, p| PowerSum::monomial(c, p).expect("valid exponent");
    match id {
        ExampleId::A => ExampleCase {
            id,
            source: mono(1.0, 1.0) - mono(1.0, 2.0),
            regularity_note: "smooth source vanishing at both ends",
        },
        ExampleId::B => ExampleCase {
            id,
            source: PowerSum::constant(1.0),
            regularity_note: "smooth source that does not vanish at the boundary",
        },
        ExampleId::C => ExampleCase {
            id,
            source: mono(1.0, -0.25),
            regularity_note: "source singular at the origin, in L^p only for p < 4",
        },
    }
}

fn primal_kernel(alpha: f64, kind: DerivativeKind) -> PowerSum {
    let p = match kind {
        DerivativeKind::RiemannLiouville => alpha - 1.0,
        DerivativeKind::Caputo => 1.0,
    };
    PowerSum::monomial(1.0, p).expect("alpha > 1")
}

/// `u = -I^α f + (I^α f)(1) x^{α-1}` (Riemann–Liouville) or
/// `u = -I^α f + (I^α f)(1) x` (Caputo). Requires a left-sided `f`.
pub fn primal_solution(f: &PowerSum, alpha: FracOrder, kind: DerivativeKind) -> Result<PowerSum> {
    let a = alpha.value();
    let g = left_frac_integral(f, FracOrder::integral(a)?)?;
    let end = g.evaluate(1.0)?;
    Ok(primal_kernel(a, kind).scale(end) - g)
}

/// Rewrites integer powers `x^n` as polynomials in `(1 - x)`; anything else
/// left-sided has no right-sided representation and is rejected.
fn to_right_sided(f: &PowerSum) -> Result<PowerSum> {
    let mut terms = Vec::new();
    for t in f.terms() {
        match t.side {
            Side::Right => terms.push(*t),
            Side::Left => {
                let n = match as_nonneg_integer(t.exponent) {
                    Some(n) if t.anchor == 0.0 => n as usize,
                    _ => {
                        return Err(FracError::Sidedness {
                            expected: "right",
                            anchor: t.anchor,
                        });
                    }
                };
                // x^n = Σ_j C(n, j) (-1)^j (1 - x)^j
                for j in 0..=n {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    terms.push(Term {
                        coef: t.coef * binomial(n as f64, j) * sign,
                        anchor: 1.0,
                        exponent: j as f64,
                        side: Side::Right,
                    });
                }
            }
        }
    }
    Ok(PowerSum::from_terms(terms))
}

/// Adjoint solution: `w = -I₁^α f + (I₁^α f)(0) (1-x)^{α-1}` (Riemann–Liouville)
/// or `w = c_f (1-x)^{α-1} - I₁^α f` with `c_f = (x, f)/Γ(α)` (Caputo).
/// Left-sided polynomial parts of `f` are re-expanded around 1.
pub fn adjoint_solution(f: &PowerSum, alpha: FracOrder, kind: DerivativeKind) -> Result<PowerSum> {
    let a = alpha.value();
    let fr = to_right_sided(f)?;
    let g = right_frac_integral(&fr, FracOrder::integral(a)?)?;
    let kernel = PowerSum::reflected_monomial(1.0, a - 1.0)?;
    let c = match kind {
        DerivativeKind::RiemannLiouville => g.evaluate(0.0)?,
        DerivativeKind::Caputo => {
            inner_product(&PowerSum::monomial(1.0, 1.0)?, f, 1e-14)? / gamma(a)
        }
    };
    Ok(kernel.scale(c) - g)
}

/// Source and exact solution as printed for the benchmark, checked against
/// the solution representation.
pub fn example_suite(
    id: ExampleId,
    alpha: FracOrder,
    kind: DerivativeKind,
) -> Result<(PowerSum, PowerSum)> {
    let a = alpha.value();
    let f = example_case(id).source;
    let k = primal_kernel(a, kind);
    let mono = |c: f64, p: f64| PowerSum::monomial(c, p);
    let u = match id {
        ExampleId::A => {
            (&k - &mono(1.0, a + 1.0)?).scale(1.0 / gamma(a + 2.0))
                - (&k - &mono(1.0, a + 2.0)?).scale(2.0 / gamma(a + 3.0))
        }
        ExampleId::B => (&k - &mono(1.0, a)?).scale(1.0 / gamma(a + 1.0)),
        ExampleId::C => (&k - &mono(1.0, a - 0.25)?).scale(gamma(0.75) / gamma(a + 0.75)),
    };
    let built = primal_solution(&f, alpha, kind)?;
    if !built.approx_eq(&u, 1e-12) {
        return Err(FracError::Parameter(format!(
            "solution representation {built} disagrees with the closed form {u}"
        )));
    }
    Ok((f, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracpoly::{caputo_derivative, riemann_derivative};

    const ALPHAS: [f64; 3] = [4.0 / 3.0, 1.5, 1.75];
    const KINDS: [DerivativeKind; 2] = [DerivativeKind::RiemannLiouville, DerivativeKind::Caputo];

    #[test]
    fn suite_is_consistent() {
        for id in ExampleId::ALL {
            for a in ALPHAS {
                for kind in KINDS {
                    let (f, u) = example_suite(id, FracOrder::alpha(a).unwrap(), kind).unwrap();
                    assert!(u.evaluate(0.0).unwrap().abs() < 1e-15);
                    assert!(u.evaluate(1.0).unwrap().abs() < 1e-14);
                    let d = match kind {
                        DerivativeKind::RiemannLiouville => {
                            riemann_derivative(&u, FracOrder::alpha(a).unwrap(), Side::Left)
                        }
                        DerivativeKind::Caputo => {
                            caputo_derivative(&u, FracOrder::alpha(a).unwrap(), Side::Left)
                        }
                    }
                    .unwrap();
                    assert!(d.approx_eq(&f.scale(-1.0), 1e-12), "{id} {a} {kind}");
                }
            }
        }
    }

    #[test]
    fn example_b_rl_closed_form() {
        let a = 1.5;
        let u = primal_solution(
            &PowerSum::constant(1.0),
            FracOrder::alpha(a).unwrap(),
            DerivativeKind::RiemannLiouville,
        )
        .unwrap();
        let want = (PowerSum::monomial(1.0, a - 1.0).unwrap()
            - PowerSum::monomial(1.0, a).unwrap())
        .scale(1.0 / gamma(a + 1.0));
        assert!(u.approx_eq(&want, 1e-14));
    }

    #[test]
    fn example_a_caputo_seven_quarters() {
        let a = 1.75;
        let (_, u) = example_suite(
            ExampleId::A,
            FracOrder::alpha(a).unwrap(),
            DerivativeKind::Caputo,
        )
        .unwrap();
        let x = PowerSum::monomial(1.0, 1.0).unwrap();
        let want = (&x - &PowerSum::monomial(1.0, 2.75).unwrap()).scale(1.0 / gamma(3.75))
            - (&x - &PowerSum::monomial(1.0, 3.75).unwrap()).scale(2.0 / gamma(4.75));
        assert!(u.approx_eq(&want, 1e-13));
    }

    #[test]
    fn adjoint_of_one() {
        let a = 1.5;
        let alpha = FracOrder::alpha(a).unwrap();
        let w = adjoint_solution(
            &PowerSum::constant(1.0),
            alpha,
            DerivativeKind::RiemannLiouville,
        )
        .unwrap();
        let want = (PowerSum::reflected_monomial(1.0, a - 1.0).unwrap()
            - PowerSum::reflected_monomial(1.0, a).unwrap())
        .scale(1.0 / gamma(a + 1.0));
        assert!(w.approx_eq(&want, 1e-14));
        let w = adjoint_solution(&PowerSum::constant(1.0), alpha, DerivativeKind::Caputo).unwrap();
        let kernel_coef = w
            .terms()
            .iter()
            .find(|t| (t.exponent - (a - 1.0)).abs() < 1e-12)
            .unwrap()
            .coef;
        assert!((kernel_coef - 0.5 / gamma(a)).abs() < 1e-14);
    }

    #[test]
    fn caputo_adjoint_satisfies_constraint() {
        let a = 1.5;
        let w = adjoint_solution(
            &PowerSum::monomial(1.0, 1.0).unwrap(),
            FracOrder::alpha(a).unwrap(),
            DerivativeKind::Caputo,
        )
        .unwrap();
        assert_eq!(w.evaluate(1.0).unwrap(), 0.0);
        let r = inner_product(&PowerSum::monomial(1.0, 1.0 - a).unwrap(), &w, 1e-12).unwrap();
        assert!(r.abs() < 1e-10, "{r}");
    }

    #[test]
    fn adjoint_rejects_nonpolynomial_left_source() {
        let f = PowerSum::monomial(1.0, -0.25).unwrap();
        assert!(
            adjoint_solution(&f, FracOrder::alpha(1.5).unwrap(), DerivativeKind::Caputo).is_err()
        );
    }
}
