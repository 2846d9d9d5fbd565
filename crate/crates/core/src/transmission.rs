//! Vectorial capacity, the basic reproduction number, and the Monte Carlo
//! summary of R0 for a region-month.

use std::fmt;
use std::str::FromStr;

use chrono::Month;
use thiserror::Error;

use crate::climate::{ClimateError, TemperatureWindow};
use crate::entomology::{sample_parameters, EntomologyError, ParamSpecs, ParameterSample};
use crate::rng;

pub const DEFAULT_N_SAMPLES: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum TransmissionError {
    #[error("mosquito mortality must be positive, got {0}")]
    NonpositiveMortality(f64),
    #[error("biting rate must be positive, got {0}")]
    NonpositiveBitingRate(f64),
    #[error("recovery rate must be positive, got {0}")]
    NonpositiveRecoveryRate(f64),
    #[error("need at least one Monte Carlo sample")]
    NoSamples,
    #[error(transparent)]
    Sampling(#[from] EntomologyError),
}

/// Which vectorial capacity formula to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CapacityModel {
    /// `m α² e^{−g v} / g`
    Basic,
    /// `m α² e^{−g (δ + v + 1/α)} / g`, with the pre-bloodmeal delay.
    #[default]
    Delayed,
}

impl CapacityModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            CapacityModel::Basic => "basic",
            CapacityModel::Delayed => "delayed",
        }
    }

    pub fn capacity(&self, s: &ParameterSample) -> Result<f64, TransmissionError> {
        match self {
            CapacityModel::Basic => vectorial_capacity_basic(s.m, s.alpha, s.g, s.v),
            CapacityModel::Delayed => vectorial_capacity(s.m, s.alpha, s.g, s.v, s.delta),
        }
    }
}

impl fmt::Display for CapacityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CapacityModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "basic" | "eq2" => Ok(CapacityModel::Basic),
            "delayed" | "eq3" => Ok(CapacityModel::Delayed),
            other => Err(format!("unknown capacity model {other:?} (basic|delayed)")),
        }
    }
}

pub fn vectorial_capacity_basic(m: f64, alpha: f64, g: f64, v: f64) -> Result<f64, TransmissionError> {
    if !(g > 0.0) {
        return Err(TransmissionError::NonpositiveMortality(g));
    }
    Ok(m * alpha * alpha * (-g * v).exp() / g)
}

pub fn vectorial_capacity(m: f64, alpha: f64, g: f64, v: f64, delta: f64) -> Result<f64, TransmissionError> {
    if !(g > 0.0) {
        return Err(TransmissionError::NonpositiveMortality(g));
    }
    if !(alpha > 0.0) {
        return Err(TransmissionError::NonpositiveBitingRate(alpha));
    }
    Ok(m * alpha * alpha * (-g * (delta + v + 1.0 / alpha)).exp() / g)
}

/// R0 = V b c / r.
pub fn basic_reproduction_number(capacity: f64, b: f64, c: f64, r: f64) -> Result<f64, TransmissionError> {
    if !(r > 0.0) {
        return Err(TransmissionError::NonpositiveRecoveryRate(r));
    }
    Ok(capacity * b * c / r)
}

/// Linear-interpolation quantile of an ascending slice (R's default, type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(quantile_sorted(&v, 0.5))
}

/// One (capacity, R0) pair per draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionSample {
    pub capacity: f64,
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionEstimate {
    pub region_id: String,
    pub month: Month,
    pub samples: Vec<TransmissionSample>,
    pub median_r0: f64,
    pub q05_r0: f64,
    pub q95_r0: f64,
}

impl TransmissionEstimate {
    fn from_samples(region_id: &str, month: Month, samples: Vec<TransmissionSample>) -> Self {
        let mut r0: Vec<f64> = samples.iter().map(|s| s.r0).collect();
        r0.sort_by(f64::total_cmp);
        Self {
            region_id: region_id.to_string(),
            month,
            median_r0: quantile_sorted(&r0, 0.5),
            q05_r0: quantile_sorted(&r0, 0.05),
            q95_r0: quantile_sorted(&r0, 0.95),
            samples,
        }
    }
}

/// Maps one parameter draw through the capacity model and R0.
pub fn sample_r0(s: &ParameterSample, model: CapacityModel) -> Result<TransmissionSample, TransmissionError> {
    let capacity = model.capacity(s)?;
    let r0 = basic_reproduction_number(capacity, s.b, s.c, s.r)?;
    Ok(TransmissionSample { capacity, r0 })
}

/// Draws `n_samples` parameter sets for a region-month and summarizes R0.
///
/// Draw `i` uses the stream keyed by `(master_seed, region_id, month, i)`.
/// Windows with no viable day yield all-zero samples.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_r0(
    region_id: &str,
    month: Month,
    window: &TemperatureWindow,
    specs: &ParamSpecs,
    m: f64,
    n_samples: usize,
    master_seed: u64,
    model: CapacityModel,
) -> Result<TransmissionEstimate, TransmissionError> {
    if n_samples == 0 {
        return Err(TransmissionError::NoSamples);
    }
    specs.validate()?;
    let slot = month.number_from_month();
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let mut rng = rng::stream(master_seed, region_id, slot, i as u64);
        match sample_parameters(specs, m, window, &mut rng) {
            Ok(p) => samples.push(sample_r0(&p, model)?),
            Err(EntomologyError::Climate(ClimateError::NoViableDay)) => {
                samples = vec![TransmissionSample { capacity: 0.0, r0: 0.0 }; n_samples];
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(TransmissionEstimate::from_samples(region_id, month, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::climate::first_saturday_window;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn basic_capacity_examples() {
        assert_eq!(vectorial_capacity_basic(0.0, 0.3, 0.1, 10.0), Ok(0.0));
        let v = vectorial_capacity_basic(1.0, 0.3, 0.1, 10.0).unwrap();
        assert!(close(v, 0.331091, 1e-6), "{v}");
        assert_eq!(vectorial_capacity_basic(1.0, 0.3, 0.0, 10.0), Err(TransmissionError::NonpositiveMortality(0.0)));
    }

    #[test]
    fn delayed_capacity_examples() {
        let v = vectorial_capacity(1.0, 0.3, 0.1, 10.0, 2.0).unwrap();
        assert!(close(v, 0.194234, 1e-6), "{v}");
        assert_eq!(vectorial_capacity(0.0, 0.3, 0.1, 10.0, 2.0), Ok(0.0));
        let v0 = vectorial_capacity(1.0, 0.3, 0.1, 10.0, 0.0).unwrap();
        let expected = 0.09 * (-0.1f64 * (10.0 + 1.0 / 0.3)).exp() / 0.1;
        assert!(close(v0, expected, 1e-12), "{v0}");
        assert!(v0 < vectorial_capacity_basic(1.0, 0.3, 0.1, 10.0).unwrap());
        assert_eq!(vectorial_capacity(1.0, 0.0, 0.1, 10.0, 2.0), Err(TransmissionError::NonpositiveBitingRate(0.0)));
        assert!(vectorial_capacity(1.0, 0.3, -0.1, 10.0, 2.0).is_err());
    }

    #[test]
    fn r0_examples() {
        let r0 = basic_reproduction_number(0.194234, 0.5, 0.5, 0.01).unwrap();
        assert!(close(r0, 4.85585, 1e-6), "{r0}");
        assert_eq!(basic_reproduction_number(0.0, 0.5, 0.5, 0.01), Ok(0.0));
        assert_eq!(basic_reproduction_number(1.0, 0.5, 0.5, 0.0), Err(TransmissionError::NonpositiveRecoveryRate(0.0)));
    }

    #[test]
    fn median_and_quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.5));
        assert_eq!(median(&[]), None);
        let s: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(quantile_sorted(&s, 0.05), 5.0);
        assert_eq!(quantile_sorted(&s, 0.95), 95.0);
    }

    fn window(t: f64) -> TemperatureWindow {
        TemperatureWindow::constant(first_saturday_window(2012, Month::July).unwrap(), t)
    }

    #[test]
    fn point_specs_give_deterministic_median() {
        let specs = ParamSpecs::point(0.3, 0.5, 0.01, 10.0);
        let w = window(25.0);
        let est = monte_carlo_r0("R1", Month::July, &w, &specs, 0.5, 101, 7, CapacityModel::Delayed).unwrap();
        let s = sample_parameters(&specs, 0.5, &w, &mut rng::stream(0, "", 0, 0)).unwrap();
        let expected = sample_r0(&s, CapacityModel::Delayed).unwrap().r0;
        assert_eq!(est.median_r0, expected);
        assert_eq!(est.q05_r0, expected);
        assert_eq!(est.samples.len(), 101);
    }

    #[test]
    fn single_sample_median() {
        let w = window(25.0);
        let est = monte_carlo_r0("R1", Month::July, &w, &ParamSpecs::default(), 0.5, 1, 3, CapacityModel::Delayed).unwrap();
        assert_eq!(est.median_r0, est.samples[0].r0);
        assert!(matches!(
            monte_carlo_r0("R1", Month::July, &w, &ParamSpecs::default(), 0.5, 0, 3, CapacityModel::Delayed),
            Err(TransmissionError::NoSamples)
        ));
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let w = window(24.0);
        let run = || monte_carlo_r0("R9", Month::August, &w, &ParamSpecs::default(), 0.05, 1000, 1, CapacityModel::Delayed).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.median_r0.to_bits(), b.median_r0.to_bits());
        assert_eq!(a, b);
    }

    #[test]
    fn cold_window_yields_zeros() {
        let est = monte_carlo_r0("R1", Month::July, &window(1.0), &ParamSpecs::default(), 1.0, 10, 1, CapacityModel::Delayed).unwrap();
        assert!(est.samples.iter().all(|s| s.capacity == 0.0 && s.r0 == 0.0));
        assert_eq!(est.median_r0, 0.0);
    }

    #[test]
    fn model_parses() {
        assert_eq!("eq2".parse(), Ok(CapacityModel::Basic));
        assert_eq!("basic".parse(), Ok(CapacityModel::Basic));
        assert_eq!("EQ3".parse(), Ok(CapacityModel::Delayed));
        assert!("eq4".parse::<CapacityModel>().is_err());
    }

    proptest! {
        #[test]
        fn capacity_linear_in_m(m in 0.0..10.0f64, a in 0.05..1.0f64, g in 0.01..0.5f64, v in 1.0..20.0f64, d in 0.0..10.0f64) {
            let once = vectorial_capacity(m, a, g, v, d).unwrap();
            let twice = vectorial_capacity(2.0 * m, a, g, v, d).unwrap();
            prop_assert_eq!(twice, 2.0 * once);
        }

        #[test]
        fn delayed_never_exceeds_basic(m in 0.01..10.0f64, a in 0.05..1.0f64, g in 0.01..0.5f64, v in 1.0..20.0f64, d in 0.0..10.0f64) {
            prop_assert!(vectorial_capacity(m, a, g, v, d).unwrap() <= vectorial_capacity_basic(m, a, g, v).unwrap());
        }

        #[test]
        fn median_inside_range(xs in prop::collection::vec(0.0..100.0f64, 1..50)) {
            let med = median(&xs).unwrap();
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(med >= lo && med <= hi);
        }
    }
}
