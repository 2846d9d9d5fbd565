//! Mosquito abundance and the literature-based parameter distributions.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::Month;
use rand::Rng;
use rand_distr::{Distribution as _, Triangular, Uniform};
use thiserror::Error;

use crate::climate::{pre_bloodmeal_delay, window_mortality_rate, ClimateError, TemperatureWindow};
use crate::ingest::{MosquitoRatioOverride, TrapRecord};
use crate::model::{DateWindow, Region};

/// Probability a mosquito is infected when biting an infectious human.
pub const DEFAULT_C_TRANSMISSION: f64 = 0.5;
pub const DEFAULT_KAPPA_EXPANSION: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum EntomologyError {
    #[error("population must be positive")]
    ZeroPopulation,
    #[error("trap expansion factor must be positive, got {0}")]
    NonpositiveKappa(f64),
    #[error("mean trap count must be nonnegative, got {0}")]
    NegativeCount(f64),
    #[error("invalid spec for {name}: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error(transparent)]
    Climate(#[from] ClimateError),
}

fn invalid(name: &str, reason: impl Into<String>) -> EntomologyError {
    EntomologyError::InvalidSpec { name: name.to_string(), reason: reason.into() }
}

/// m: mosquitoes per human, from the mean females per trap-night scaled by
/// an expansion factor.
pub fn mosquito_human_ratio(mean_trap_count: f64, kappa: f64, population: u64) -> Result<f64, EntomologyError> {
    if population == 0 {
        return Err(EntomologyError::ZeroPopulation);
    }
    if !(kappa > 0.0) {
        return Err(EntomologyError::NonpositiveKappa(kappa));
    }
    if !(mean_trap_count >= 0.0) {
        return Err(EntomologyError::NegativeCount(mean_trap_count));
    }
    Ok(mean_trap_count * kappa / population as f64)
}

/// A sampling distribution for one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Point(f64),
    Uniform { lo: f64, hi: f64 },
    Triangular { lo: f64, mode: f64, hi: f64 },
}

impl Distribution {
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Distribution::Point(v) => (v, v),
            Distribution::Uniform { lo, hi } | Distribution::Triangular { lo, hi, .. } => (lo, hi),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Point(v) => v,
            Distribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            Distribution::Triangular { lo, mode, hi } => (lo + mode + hi) / 3.0,
        }
    }

    fn check_shape(&self) -> Result<(), String> {
        let vals: &[f64] = match self {
            Distribution::Point(v) => &[*v],
            Distribution::Uniform { lo, hi } => &[*lo, *hi],
            Distribution::Triangular { lo, mode, hi } => &[*lo, *mode, *hi],
        };
        if vals.iter().any(|v| !v.is_finite()) {
            return Err("values must be finite".into());
        }
        if vals.windows(2).any(|w| w[0] > w[1]) {
            return Err("bounds must satisfy lo <= mode <= hi".into());
        }
        Ok(())
    }

    /// Draws one value. Degenerate ranges collapse to a point and consume
    /// no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.support();
        if lo == hi {
            return lo;
        }
        let x = match *self {
            Distribution::Point(v) => v,
            Distribution::Uniform { lo, hi } => {
                Uniform::new_inclusive(lo, hi).expect("validated bounds").sample(rng)
            }
            Distribution::Triangular { lo, mode, hi } => {
                Triangular::new(lo, hi, mode).expect("validated bounds").sample(rng)
            }
        };
        x.clamp(lo, hi)
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Point(v) => write!(f, "point({v})"),
            Distribution::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            Distribution::Triangular { lo, mode, hi } => write!(f, "triangular({lo},{mode},{hi})"),
        }
    }
}

impl FromStr for Distribution {
    type Err = String;

    /// Accepts `point(v)`, `uniform(lo,hi)`, `triangular(lo,mode,hi)` or a bare number.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(v) = s.parse::<f64>() {
            return Ok(Distribution::Point(v));
        }
        let (name, rest) = s.split_once('(').ok_or_else(|| format!("cannot parse distribution {s:?}"))?;
        let args = rest.strip_suffix(')').ok_or_else(|| format!("missing ')' in {s:?}"))?;
        let nums = args
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|e| format!("{a:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        let d = match (name.trim().to_ascii_lowercase().as_str(), nums.as_slice()) {
            ("point", [v]) => Distribution::Point(*v),
            ("uniform", [lo, hi]) => Distribution::Uniform { lo: *lo, hi: *hi },
            ("triangular", [lo, mode, hi]) => Distribution::Triangular { lo: *lo, mode: *mode, hi: *hi },
            (other, args) => return Err(format!("unknown distribution {other}/{}", args.len())),
        };
        d.check_shape()?;
        Ok(d)
    }
}

/// Distributions for the sampled parameters plus the fixed c.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpecs {
    /// Human biting rate α, per day.
    pub alpha: Distribution,
    /// Probability a bite infects a human.
    pub b: Distribution,
    /// Human recovery rate, per day.
    pub r: Distribution,
    /// Mosquito latent period, days.
    pub v: Distribution,
    pub c: f64,
}

impl Default for ParamSpecs {
    fn default() -> Self {
        Self {
            alpha: Distribution::Uniform { lo: 0.2, hi: 0.4 },
            b: Distribution::Uniform { lo: 0.3, hi: 0.5 },
            r: Distribution::Uniform { lo: 0.005, hi: 0.02 },
            v: Distribution::Triangular { lo: 8.0, mode: 10.0, hi: 14.0 },
            c: DEFAULT_C_TRANSMISSION,
        }
    }
}

impl ParamSpecs {
    pub const NAMES: [&'static str; 4] = ["alpha", "b", "r", "v"];

    pub fn point(alpha: f64, b: f64, r: f64, v: f64) -> Self {
        Self {
            alpha: Distribution::Point(alpha),
            b: Distribution::Point(b),
            r: Distribution::Point(r),
            v: Distribution::Point(v),
            c: DEFAULT_C_TRANSMISSION,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Distribution> {
        match name {
            "alpha" => Some(&self.alpha),
            "b" => Some(&self.b),
            "r" => Some(&self.r),
            "v" => Some(&self.v),
            _ => None,
        }
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Distribution> {
        match name {
            "alpha" => Some(&mut self.alpha),
            "b" => Some(&mut self.b),
            "r" => Some(&mut self.r),
            "v" => Some(&mut self.v),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), EntomologyError> {
        for name in Self::NAMES {
            let d = self.get(name).expect("known name");
            d.check_shape().map_err(|e| invalid(name, e))?;
            let (lo, hi) = d.support();
            match name {
                "b" if lo < 0.0 || hi > 1.0 => return Err(invalid(name, "probability must lie in [0,1]")),
                "alpha" | "r" | "v" if lo <= 0.0 => return Err(invalid(name, "must be positive")),
                _ => {}
            }
        }
        if !(0.0..=1.0).contains(&self.c) {
            return Err(invalid("c", "probability must lie in [0,1]"));
        }
        Ok(())
    }
}

/// One Monte Carlo draw of every quantity entering vectorial capacity and R0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterSample {
    pub m: f64,
    pub alpha: f64,
    pub b: f64,
    pub r: f64,
    pub v: f64,
    pub delta: f64,
    pub g: f64,
    pub c: f64,
}

/// Draws α, b, r, v (in that order) and attaches the window's δ and g.
///
/// Fails with [`ClimateError::NoViableDay`] for a window too cold for any
/// vector; callers treat that as zero capacity.
pub fn sample_parameters<R: Rng + ?Sized>(
    specs: &ParamSpecs,
    m: f64,
    window: &TemperatureWindow,
    rng: &mut R,
) -> Result<ParameterSample, EntomologyError> {
    specs.validate()?;
    let g = window_mortality_rate(window)?;
    let delta = pre_bloodmeal_delay(window.mean_temp);
    Ok(ParameterSample {
        m,
        alpha: specs.alpha.sample(rng),
        b: specs.b.sample(rng),
        r: specs.r.sample(rng),
        v: specs.v.sample(rng),
        delta,
        g,
        c: specs.c,
    })
}

/// Where a region-month's m came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioSource {
    Override,
    RegionMonth,
    RegionSeason,
    StudyMonth,
    StudySeason,
    NoTraps,
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    sum: f64,
    n: u64,
}

impl Tally {
    fn add(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Resolves m for each region and month from overrides and trap data.
///
/// Trap records are assigned to a month when their date falls in that
/// month's temperature window. Lookup falls back from the region's own traps
/// in that window, to the region's whole-season mean, to the study-wide mean
/// for the window, to the study-wide season mean.
#[derive(Debug, Clone)]
pub struct MosquitoRatios {
    kappa: f64,
    region_month: HashMap<(String, u32), Tally>,
    region_season: HashMap<String, Tally>,
    study_month: HashMap<u32, Tally>,
    study_season: Tally,
    overrides: HashMap<(String, Option<u32>), f64>,
}

impl MosquitoRatios {
    pub fn new(
        traps: &[TrapRecord],
        overrides: &[MosquitoRatioOverride],
        windows: &[(Month, DateWindow)],
        kappa: f64,
    ) -> Result<Self, EntomologyError> {
        if !(kappa > 0.0) {
            return Err(EntomologyError::NonpositiveKappa(kappa));
        }
        let mut s = Self {
            kappa,
            region_month: HashMap::new(),
            region_season: HashMap::new(),
            study_month: HashMap::new(),
            study_season: Tally::default(),
            overrides: overrides
                .iter()
                .map(|o| ((o.region_id.clone(), o.month.map(|m| m.number_from_month())), o.m))
                .collect(),
        };
        for t in traps {
            let count = t.anopheles_female_count as f64;
            let mut in_season = false;
            for (month, w) in windows {
                if w.contains(t.date) {
                    let key = month.number_from_month();
                    s.region_month.entry((t.region_id.clone(), key)).or_default().add(count);
                    s.study_month.entry(key).or_default().add(count);
                    in_season = true;
                }
            }
            if in_season {
                s.region_season.entry(t.region_id.clone()).or_default().add(count);
                s.study_season.add(count);
            }
        }
        Ok(s)
    }

    pub fn ratio(&self, region: &Region, month: Month) -> Result<(f64, RatioSource), EntomologyError> {
        let key = month.number_from_month();
        let id = region.region_id.clone();
        if let Some(m) = self
            .overrides
            .get(&(id.clone(), Some(key)))
            .or_else(|| self.overrides.get(&(id.clone(), None)))
        {
            return Ok((*m, RatioSource::Override));
        }
        let candidates = [
            (self.region_month.get(&(id.clone(), key)).and_then(Tally::mean), RatioSource::RegionMonth),
            (self.region_season.get(&id).and_then(Tally::mean), RatioSource::RegionSeason),
            (self.study_month.get(&key).and_then(Tally::mean), RatioSource::StudyMonth),
            (self.study_season.mean(), RatioSource::StudySeason),
        ];
        for (mean, source) in candidates {
            if let Some(mean) = mean {
                return Ok((mosquito_human_ratio(mean, self.kappa, region.population)?, source));
            }
        }
        if region.population == 0 {
            return Err(EntomologyError::ZeroPopulation);
        }
        Ok((0.0, RatioSource::NoTraps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::climate::first_saturday_window;
    use crate::model::{ProjectedPoint, RegionClass};
    use crate::rng::stream;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn warm_window() -> TemperatureWindow {
        TemperatureWindow::constant(first_saturday_window(2012, Month::July).unwrap(), 25.0)
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(mosquito_human_ratio(10.0, 100.0, 1000), Ok(1.0));
        assert_eq!(mosquito_human_ratio(0.0, 100.0, 1000), Ok(0.0));
        assert_eq!(mosquito_human_ratio(10.0, 100.0, 0), Err(EntomologyError::ZeroPopulation));
        assert_eq!(mosquito_human_ratio(10.0, 0.0, 10), Err(EntomologyError::NonpositiveKappa(0.0)));
    }

    #[test]
    fn distribution_parse_and_display() {
        assert_eq!("uniform(0.2, 0.4)".parse(), Ok(Distribution::Uniform { lo: 0.2, hi: 0.4 }));
        assert_eq!("0.5".parse(), Ok(Distribution::Point(0.5)));
        let t: Distribution = "triangular(8,10,14)".parse().unwrap();
        assert_eq!(t.to_string(), "triangular(8,10,14)");
        assert_eq!(t.to_string().parse(), Ok(t));
        assert!("uniform(0.4,0.2)".parse::<Distribution>().is_err());
        assert!("triangular(1,5,3)".parse::<Distribution>().is_err());
        assert!("normal(0,1)".parse::<Distribution>().is_err());
        assert!("uniform(0.2".parse::<Distribution>().is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ParamSpecs::default().validate().is_ok());
        let mut s = ParamSpecs::default();
        s.b = Distribution::Uniform { lo: 0.5, hi: 1.5 };
        assert!(matches!(s.validate(), Err(EntomologyError::InvalidSpec { name, .. }) if name == "b"));
        let mut s = ParamSpecs::default();
        s.r = Distribution::Point(0.0);
        assert!(s.validate().is_err());
        let mut s = ParamSpecs::default();
        s.c = 2.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn point_specs_are_reproduced() {
        let specs = ParamSpecs::point(0.3, 0.5, 0.01, 10.0);
        let s = sample_parameters(&specs, 1.0, &warm_window(), &mut stream(1, "R", 7, 0)).unwrap();
        assert_eq!((s.alpha, s.b, s.r, s.v, s.c), (0.3, 0.5, 0.01, 10.0, 0.5));
        assert_eq!(s.delta, pre_bloodmeal_delay(25.0));
        assert_eq!(s.g, 1.0 / 26.475);
    }

    #[test]
    fn uniform_support_and_mean() {
        let mut specs = ParamSpecs::default();
        specs.alpha = Distribution::Uniform { lo: 0.2, hi: 0.4 };
        let w = warm_window();
        let mut rng = stream(42, "R", 7, 0);
        let draws: Vec<f64> =
            (0..10_000).map(|_| sample_parameters(&specs, 1.0, &w, &mut rng).unwrap().alpha).collect();
        assert!(draws.iter().all(|a| (0.2..=0.4).contains(a)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.3).abs() < 0.01, "{mean}");
    }

    #[test]
    fn same_stream_same_samples() {
        let specs = ParamSpecs::default();
        let w = warm_window();
        let a: Vec<_> = (0..50).map(|i| sample_parameters(&specs, 1.0, &w, &mut stream(9, "X", 5, i)).unwrap()).collect();
        let b: Vec<_> = (0..50).rev().map(|i| sample_parameters(&specs, 1.0, &w, &mut stream(9, "X", 5, i)).unwrap()).collect();
        assert!(a.iter().eq(b.iter().rev()));
    }

    #[test]
    fn cold_window_short_circuits() {
        let w = TemperatureWindow::constant(first_saturday_window(2012, Month::April).unwrap(), 2.0);
        assert_eq!(
            sample_parameters(&ParamSpecs::default(), 1.0, &w, &mut stream(1, "R", 4, 0)),
            Err(EntomologyError::Climate(ClimateError::NoViableDay))
        );
    }

    fn region(id: &str, pop: u64) -> Region {
        Region {
            region_id: id.into(),
            year: 2012,
            region_class: RegionClass::Rural,
            centroid: ProjectedPoint::new(0.0, 0.0),
            altitude: 0.0,
            population: pop,
            nearest_larvae_site: None,
        }
    }

    fn trap(region: &str, date: NaiveDate, n: u64) -> TrapRecord {
        TrapRecord { trap_id: format!("T{region}"), region_id: region.into(), date, anopheles_female_count: n }
    }

    #[test]
    fn ratio_fallback_chain() {
        let jun = first_saturday_window(2012, Month::June).unwrap();
        let jul = first_saturday_window(2012, Month::July).unwrap();
        let windows = [(Month::June, jun), (Month::July, jul)];
        let d = jun.start_date();
        let traps = vec![trap("A", d, 10), trap("A", d.succ_opt().unwrap(), 30), trap("B", jul.start_date(), 4)];
        let overrides = vec![MosquitoRatioOverride { region_id: "C".into(), month: None, m: 0.7 }];
        let r = MosquitoRatios::new(&traps, &overrides, &windows, 2.0).unwrap();

        assert_eq!(r.ratio(&region("A", 100), Month::June).unwrap(), (0.4, RatioSource::RegionMonth));
        assert_eq!(r.ratio(&region("A", 100), Month::July).unwrap(), (0.4, RatioSource::RegionSeason));
        assert_eq!(r.ratio(&region("Z", 100), Month::July).unwrap(), (0.08, RatioSource::StudyMonth));
        let (m, src) = r.ratio(&region("Z", 100), Month::June).unwrap();
        assert_eq!(src, RatioSource::StudyMonth);
        assert_eq!(m, 0.4);
        assert_eq!(r.ratio(&region("C", 100), Month::June).unwrap(), (0.7, RatioSource::Override));

        let aug = [(Month::August, first_saturday_window(2012, Month::August).unwrap())];
        let r = MosquitoRatios::new(&traps, &[], &aug, 1.0).unwrap();
        assert_eq!(r.ratio(&region("A", 100), Month::August).unwrap(), (0.0, RatioSource::NoTraps));
    }

    proptest! {
        #[test]
        fn draws_stay_in_support(lo in 0.01..5.0f64, w1 in 0.0..5.0f64, w2 in 0.0..5.0f64, seed in any::<u64>()) {
            let mut rng = stream(seed, "p", 0, 0);
            let u = Distribution::Uniform { lo, hi: lo + w1 };
            let t = Distribution::Triangular { lo, mode: lo + w1, hi: lo + w1 + w2 };
            for _ in 0..100 {
                let x = u.sample(&mut rng);
                prop_assert!(x >= lo && x <= lo + w1);
                let y = t.sample(&mut rng);
                prop_assert!(y >= lo && y <= lo + w1 + w2);
            }
        }
    }
}
