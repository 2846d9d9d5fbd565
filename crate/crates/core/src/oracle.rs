//! Brute-force stochastic epidemic used to cross-check the final-size solver.
//!
//! Each run uses the Sellke construction. `N` susceptibles receive
//! independent Exp(1) resistance thresholds; `⌈μ0 N⌉` imported infectives
//! are introduced on top of them; every infective has an Exp(1) infectious
//! period and exerts pressure `R0/N` per unit time on each susceptible. A
//! susceptible is infected once the accumulated pressure passes its
//! threshold. This is the homogeneous-mixing SIR process whose mean-field
//! final size obeys `1 + μ0 − τ = exp(−R0 τ)` with τ counting all infections
//! (imported ones included) per susceptible.
//!
//! Sorted thresholds are generated lazily via the Rényi representation
//! `Q(k+1) = Q(k) + E/(N − k)`, so a run costs O(final size).

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng;

pub const MIN_POPULATION: u64 = 1_000;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("population must be at least {MIN_POPULATION}, got {0}")]
    BadPopulation(u64),
    #[error("need at least one run")]
    NoRuns,
    #[error("invalid input r0={r0}, mu0={mu0}")]
    InvalidInput { r0: f64, mu0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub r0: f64,
    pub mu0: f64,
    pub population: u64,
    pub runs: usize,
    pub seed: u64,
    /// Ever-infected count over `N`, capped at 1, one per run.
    pub fractions: Vec<f64>,
    pub mean_attack_fraction: f64,
}

impl OracleResult {
    pub fn min(&self) -> f64 {
        self.fractions.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.fractions.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Number of imported infectives for fraction `mu0` of `n`.
pub fn initial_infectives(mu0: f64, n: u64) -> u64 {
    // The small offset keeps 0.1 * 1e5 from rounding up to 10001.
    (mu0 * n as f64 - 1e-9).ceil().max(0.0) as u64
}

/// Ever-infected count (imported included) for one run.
pub fn sellke_run<R: Rng + ?Sized>(r0: f64, initial: u64, n: u64, rng: &mut R) -> u64 {
    let per_unit = r0 / n as f64;
    let mut pressure = 0.0;
    for _ in 0..initial {
        let period: f64 = rng.sample(Exp1);
        pressure += per_unit * period;
    }
    let mut threshold = 0.0;
    let mut infected = 0u64;
    while infected < n {
        let gap: f64 = rng.sample(Exp1);
        threshold += gap / (n - infected) as f64;
        if threshold > pressure {
            break;
        }
        infected += 1;
        let period: f64 = rng.sample(Exp1);
        pressure += per_unit * period;
    }
    initial + infected
}

/// Runs `runs` independent epidemics; run `i` draws from the stream keyed
/// by `(seed, "oracle", 0, i)`, so results do not depend on thread count.
pub fn simulate_attack_fraction(r0: f64, mu0: f64, population: u64, runs: usize, seed: u64) -> Result<OracleResult, OracleError> {
    if population < MIN_POPULATION {
        return Err(OracleError::BadPopulation(population));
    }
    if runs == 0 {
        return Err(OracleError::NoRuns);
    }
    if !(r0 >= 0.0) || !r0.is_finite() || !(0.0..=1.0).contains(&mu0) {
        return Err(OracleError::InvalidInput { r0, mu0 });
    }
    let initial = initial_infectives(mu0, population);
    let fractions: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, "oracle", 0, i as u64);
            let total = sellke_run(r0, initial, population, &mut rng);
            (total as f64 / population as f64).min(1.0)
        })
        .collect();
    let mean_attack_fraction = fractions.iter().sum::<f64>() / runs as f64;
    Ok(OracleResult { r0, mu0, population, runs, seed, fractions, mean_attack_fraction })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_transmission_leaves_only_imports() {
        let res = simulate_attack_fraction(0.0, 0.1, 100_000, 5, 1).unwrap();
        assert!(res.fractions.iter().all(|f| *f == 0.1));
        assert_eq!(initial_infectives(0.1, 100_000), 10_000);
        assert_eq!(initial_infectives(0.0, 100_000), 0);
        assert_eq!(initial_infectives(0.00101, 1000), 2);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = simulate_attack_fraction(2.0, 0.01, 10_000, 20, 5).unwrap();
        let b = simulate_attack_fraction(2.0, 0.01, 10_000, 20, 5).unwrap();
        assert_eq!(a, b);
        let c = simulate_attack_fraction(2.0, 0.01, 10_000, 20, 6).unwrap();
        assert_ne!(a.fractions, c.fractions);
    }

    #[test]
    fn rejects_small_population() {
        assert_eq!(simulate_attack_fraction(2.0, 0.01, 999, 1, 0), Err(OracleError::BadPopulation(999)));
        assert_eq!(simulate_attack_fraction(2.0, 0.01, 1000, 0, 0), Err(OracleError::NoRuns));
    }

    #[test]
    fn attack_fraction_at_least_imports_and_mean_within_range() {
        let res = simulate_attack_fraction(1.2, 0.02, 5_000, 30, 3).unwrap();
        assert!(res.fractions.iter().all(|f| *f >= 0.02 && *f <= 1.0));
        assert!(res.mean_attack_fraction >= res.min() && res.mean_attack_fraction <= res.max());
    }

    #[test]
    fn large_r0_infects_nearly_everyone() {
        let res = simulate_attack_fraction(10.0, 0.001, 100_000, 10, 11).unwrap();
        assert!(res.mean_attack_fraction > 0.99, "{}", res.mean_attack_fraction);
    }
}
