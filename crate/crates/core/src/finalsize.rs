//! Attack probability from the final-size relation
//! `1 + μ0 − τ − exp(−τ R0) = 0`, and expected infections.

use chrono::Month;
use thiserror::Error;

/// Left end of the bisection bracket; excludes the trivial root at 0.
pub const BRACKET_EPS: f64 = 1e-9;
/// Right end of the bracket, at least `1 + μ0` for every admissible μ0. Held
/// fixed so all solves bisect the same dyadic grid and τ is exactly
/// monotone in R0 and μ0.
pub const BRACKET_HI: f64 = 2.0;
pub const ABS_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum FinalSizeError {
    #[error("bisection did not converge for r0={r0}, mu0={mu0}")]
    NoConvergence { r0: f64, mu0: f64 },
    #[error("invalid input r0={r0}, mu0={mu0}")]
    InvalidInput { r0: f64, mu0: f64 },
}

/// `1 + μ0 − τ − e^{−τ R0}`, evaluated as `μ0 − τ − expm1(−τ R0)` to keep
/// precision near τ = 0.
pub fn final_size_residual(tau: f64, r0: f64, mu0: f64) -> f64 {
    mu0 - tau - (-tau * r0).exp_m1()
}

/// Attack probability τ ∈ [0, 1].
///
/// τ is 0 when R0 < 1. Otherwise the positive root, which lies in
/// `(0, 1 + μ0]`, is bisected on `[1e-9, 2]` to an absolute width of
/// 1e-10. When the residual is already nonpositive at the left end (R0 = 1
/// with no imported infections) the only root is 0.
pub fn solve_attack_probability(r0: f64, mu0: f64) -> Result<f64, FinalSizeError> {
    if !(r0 >= 0.0) || !r0.is_finite() || !(0.0..=1.0).contains(&mu0) {
        return Err(FinalSizeError::InvalidInput { r0, mu0 });
    }
    if r0 < 1.0 {
        return Ok(0.0);
    }
    let f = |t: f64| final_size_residual(t, r0, mu0);
    let mut lo = BRACKET_EPS;
    let mut hi = BRACKET_HI;
    let f_lo = f(lo);
    if f_lo <= 0.0 {
        return Ok(0.0);
    }
    if f(hi) >= 0.0 {
        return Err(FinalSizeError::NoConvergence { r0, mu0 });
    }
    for _ in 0..MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= ABS_TOLERANCE {
            return Ok((0.5 * (lo + hi)).clamp(0.0, 1.0));
        }
    }
    Err(FinalSizeError::NoConvergence { r0, mu0 })
}

/// E(infections) = τ × susceptibles.
pub fn expected_infections(tau: f64, susceptibles: u64) -> f64 {
    tau * susceptibles as f64
}

/// Risk summary for one region, month and prevalence scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskOutcome {
    pub region_id: String,
    pub month: Month,
    pub prevalence: f64,
    pub median_r0: f64,
    pub q05_r0: f64,
    pub q95_r0: f64,
    pub mu0: f64,
    pub tau: f64,
    pub expected_infections: f64,
}

impl RiskOutcome {
    /// Solves for τ at the Monte Carlo median R0 and scales by population.
    #[allow(clippy::too_many_arguments)]
    pub fn assess(
        region_id: &str,
        month: Month,
        prevalence: f64,
        median_r0: f64,
        q05_r0: f64,
        q95_r0: f64,
        mu0: f64,
        population: u64,
    ) -> Result<Self, FinalSizeError> {
        let tau = solve_attack_probability(median_r0, mu0)?;
        Ok(Self {
            region_id: region_id.to_string(),
            month,
            prevalence,
            median_r0,
            q05_r0,
            q95_r0,
            mu0,
            tau,
            expected_infections: expected_infections(tau, population),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: fixed-point iteration τ ← 1 + μ0 − e^{−R0 τ}
    /// from τ = 1 + μ0, which converges monotonically to the upper root.
    fn fixed_point(r0: f64, mu0: f64) -> f64 {
        let mut t = 1.0 + mu0;
        for _ in 0..100_000 {
            let next = 1.0 + mu0 - (-r0 * t).exp();
            if (next - t).abs() < 1e-15 {
                return next;
            }
            t = next;
        }
        t
    }

    #[test]
    fn residual_examples() {
        assert_eq!(final_size_residual(0.0, 3.0, 0.07), 0.07);
        let r = final_size_residual(1.1, 2.0, 0.1);
        assert!((r + (-2.2f64).exp()).abs() < 1e-15);
        assert!(r < 0.0);
        assert!((final_size_residual(0.5, 2.0, 0.0) - 0.132121).abs() < 1e-6);
    }

    #[test]
    fn subcritical_is_zero() {
        assert_eq!(solve_attack_probability(0.8, 0.1), Ok(0.0));
        assert_eq!(solve_attack_probability(0.0, 0.0), Ok(0.0));
    }

    #[test]
    fn frozen_values() {
        // Values from the fixed-point oracle above, rounded to 4 places.
        for (r0, mu0, tau) in [(2.0, 0.0, 0.7968), (2.0, 0.1, 0.9506), (1.5, 0.0, 0.5828)] {
            let got = solve_attack_probability(r0, mu0).unwrap();
            assert!((got - tau).abs() < 1e-4, "r0={r0} mu0={mu0}: {got}");
            assert!((got - fixed_point(r0, mu0)).abs() < 1e-9);
        }
    }

    #[test]
    fn threshold_edge_cases() {
        assert_eq!(solve_attack_probability(1.0, 0.0), Ok(0.0));
        let t = solve_attack_probability(1.0 + 1e-6, 0.0).unwrap();
        assert!(t > 0.0 && t < 0.01, "{t}");
        assert!(solve_attack_probability(1.0, 0.05).unwrap() > 0.0);
    }

    #[test]
    fn clamped_when_root_exceeds_one() {
        assert_eq!(solve_attack_probability(3.0, 0.1), Ok(1.0));
        assert!(fixed_point(3.0, 0.1) > 1.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(solve_attack_probability(-1.0, 0.0).is_err());
        assert!(solve_attack_probability(2.0, 1.5).is_err());
        assert!(solve_attack_probability(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn assessment_respects_threshold() {
        let o = RiskOutcome::assess("R", Month::July, 0.1, 0.9, 0.5, 1.5, 0.2, 1000).unwrap();
        assert_eq!((o.tau, o.expected_infections), (0.0, 0.0));
        let o = RiskOutcome::assess("R", Month::July, 0.1, 2.0, 1.0, 3.0, 0.0, 1000).unwrap();
        assert_eq!(o.expected_infections, o.tau * 1000.0);
        assert!((o.tau - 0.7968).abs() < 1e-4);
    }

    #[test]
    fn infections() {
        assert_eq!(expected_infections(0.2, 5000), 1000.0);
        assert_eq!(expected_infections(0.0, 5000), 0.0);
        assert_eq!(expected_infections(1.0, 1234), 1234.0);
    }

    proptest! {
        #[test]
        fn root_satisfies_equation(r0 in 1.0..20.0f64, mu0 in 0.0..1.0f64) {
            let t = solve_attack_probability(r0, mu0).unwrap();
            prop_assert!((0.0..=1.0).contains(&t));
            let unclamped_root = t < 1.0;
            if unclamped_root {
                prop_assert!(final_size_residual(t, r0, mu0).abs() <= 1e-8);
            }
        }

        #[test]
        fn monotone_in_r0_and_mu0(a in 0.0..10.0f64, b in 0.0..10.0f64, m1 in 0.0..0.5f64, m2 in 0.0..0.5f64) {
            let (r_lo, r_hi) = if a <= b { (a, b) } else { (b, a) };
            let (u_lo, u_hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            prop_assert!(solve_attack_probability(r_hi, u_lo).unwrap() >= solve_attack_probability(r_lo, u_lo).unwrap());
            prop_assert!(solve_attack_probability(r_hi, u_hi).unwrap() >= solve_attack_probability(r_hi, u_lo).unwrap());
        }
    }
}
