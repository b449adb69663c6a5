//! Gamma-family helpers on top of `statrs`.
//!
//! Everything here is a thin layer: the only additions are the
//! reciprocal-Gamma convention used by the fractional operators and a
//! generalized binomial coefficient for real upper index.

/// Tolerance used to decide that a real number is an integer.
pub const INTEGER_TOL: f64 = 1e-12;

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// 1/Γ(x), with the convention 1/Γ(x) = 0 at the poles x = 0, -1, -2, ...
pub fn rgamma(x: f64) -> f64 {
    if nonpositive_integer(x) {
        0.0
    } else {
        1.0 / gamma(x)
    }
}

pub fn beta(a: f64, b: f64) -> f64 {
    if a + b > 170.0 {
        let ln = statrs::function::gamma::ln_gamma(a) + statrs::function::gamma::ln_gamma(b)
            - statrs::function::gamma::ln_gamma(a + b);
        ln.exp()
    } else {
        gamma(a) * gamma(b) / gamma(a + b)
    }
}

/// Γ(p + 1) / Γ(p + 1 + shift), the coefficient picked up by a truncated
/// power under a fractional integral of order `shift` (negative `shift` is
/// a derivative). Poles of the denominator give zero.
pub fn power_gain(p: f64, shift: f64) -> f64 {
    gamma(p + 1.0) * rgamma(p + 1.0 + shift)
}

/// Generalized binomial coefficient C(p, k) for real p.
pub fn binomial(p: f64, k: usize) -> f64 {
    let mut c = 1.0;
    for j in 0..k {
        c *= (p - j as f64) / (j as f64 + 1.0);
    }
    c
}

/// Returns `Some(n)` if `x` is within [`INTEGER_TOL`] of the non-negative integer `n`.
pub fn as_nonneg_integer(x: f64) -> Option<u32> {
    let r = x.round();
    if r >= 0.0 && (x - r).abs() <= INTEGER_TOL && r < u32::MAX as f64 {
        Some(r as u32)
    } else {
        None
    }
}

pub fn nonpositive_integer(x: f64) -> bool {
    let r = x.round();
    r <= 0.0 && (x - r).abs() <= INTEGER_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gamma_reference_values() {
        let cases = [
            (0.5, PI.sqrt()),
            (1.0, 1.0),
            (1.5, 0.5 * PI.sqrt()),
            (2.5, 0.75 * PI.sqrt()),
            (5.0, 24.0),
            (0.25, 3.625_609_908_221_908_3),
            (0.75, 1.225_416_702_465_177_6),
            (-0.5, -2.0 * PI.sqrt()),
            (4.75, 16.586_206_539_225_94),
        ];
        for (x, want) in cases {
            let got = gamma(x);
            assert!(
                ((got - want) / want).abs() < 1e-13,
                "Γ({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn reciprocal_gamma_vanishes_at_poles() {
        assert_eq!(rgamma(0.0), 0.0);
        assert_eq!(rgamma(-2.0), 0.0);
        assert_eq!(rgamma(1e-15 - 1.0), 0.0);
        assert!((rgamma(3.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn beta_half_three_halves() {
        assert!((beta(0.5, 1.5) - PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn binomial_matches_integers() {
        assert_eq!(binomial(5.0, 2), 10.0);
        assert_eq!(binomial(2.0, 3), 0.0);
        assert!((binomial(0.5, 2) + 0.125).abs() < 1e-16);
    }
}
