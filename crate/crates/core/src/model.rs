//! Domain records shared across the pipeline, plus planar geometry.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{Duration, Month, NaiveDate};

/// A location on a projected planar grid, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
}

impl ProjectedPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Euclidean distance in meters.
    pub fn distance_m(&self, other: &ProjectedPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Euclidean distance between two projected points, in kilometers.
pub fn planar_distance(a: &ProjectedPoint, b: &ProjectedPoint) -> f64 {
    a.distance_m(b) / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionClass {
    Urban,
    Rural,
}

impl RegionClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionClass::Urban => "urban",
            RegionClass::Rural => "rural",
        }
    }
}

impl fmt::Display for RegionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegionClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "urban" => Ok(RegionClass::Urban),
            "rural" => Ok(RegionClass::Rural),
            other => Err(format!("unknown region class {other:?} (expected urban or rural)")),
        }
    }
}

/// An administrative sub-region; the unit at which risk is estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub region_id: String,
    pub year: i32,
    pub region_class: RegionClass,
    pub centroid: ProjectedPoint,
    pub altitude: f64,
    /// Number of susceptibles.
    pub population: u64,
    pub nearest_larvae_site: Option<ProjectedPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegionViolation {
    NonPositivePopulation,
    NegativeAltitude,
    NonFiniteCoordinate,
    DuplicateId(String),
}

impl fmt::Display for RegionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionViolation::NonPositivePopulation => f.write_str("population must be positive"),
            RegionViolation::NegativeAltitude => f.write_str("altitude must be nonnegative"),
            RegionViolation::NonFiniteCoordinate => f.write_str("centroid must be finite"),
            RegionViolation::DuplicateId(id) => write!(f, "duplicate region_id {id:?} within year"),
        }
    }
}

/// Checks a single region's own invariants. Duplicate ids need the whole
/// collection, see [`validate_regions`].
pub fn validate_region(r: &Region) -> Vec<RegionViolation> {
    let mut out = Vec::new();
    if r.population == 0 {
        out.push(RegionViolation::NonPositivePopulation);
    }
    if !(r.altitude >= 0.0) {
        out.push(RegionViolation::NegativeAltitude);
    }
    if !r.centroid.is_finite() {
        out.push(RegionViolation::NonFiniteCoordinate);
    }
    out
}

/// Validates every region and flags repeated `(region_id, year)` pairs.
/// Returns `(index, violation)` pairs in input order.
pub fn validate_regions(regions: &[Region]) -> Vec<(usize, RegionViolation)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, r) in regions.iter().enumerate() {
        out.extend(validate_region(r).into_iter().map(|v| (i, v)));
        if !seen.insert((r.region_id.as_str(), r.year)) {
            out.push((i, RegionViolation::DuplicateId(r.region_id.clone())));
        }
    }
    out
}

/// A run of 30 consecutive days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DateWindow {
    start: NaiveDate,
}

impl DateWindow {
    pub const LENGTH_DAYS: usize = 30;

    pub fn starting(start: NaiveDate) -> Self {
        Self { start }
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start
    }

    /// Last day inside the window (inclusive).
    pub fn end_date(&self) -> NaiveDate {
        self.start + Duration::days(Self::LENGTH_DAYS as i64 - 1)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && date <= self.end_date()
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..Self::LENGTH_DAYS as i64).map(move |d| self.start + Duration::days(d))
    }
}

/// Three-letter English abbreviation used in file names and CSV columns.
pub fn month_abbrev(m: Month) -> &'static str {
    &m.name()[..3]
}

/// Parses "Jul", "july" or "7".
pub fn parse_month(s: &str) -> Option<Month> {
    let s = s.trim();
    if let Ok(n) = s.parse::<u8>() {
        return Month::try_from(n).ok();
    }
    if s.len() < 3 {
        return None;
    }
    Month::from_str(s).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(pop: u64, alt: f64) -> Region {
        Region {
            region_id: "R1".into(),
            year: 2012,
            region_class: RegionClass::Rural,
            centroid: ProjectedPoint::new(0.0, 0.0),
            altitude: alt,
            population: pop,
            nearest_larvae_site: None,
        }
    }

    #[test]
    fn distance_examples() {
        let o = ProjectedPoint::new(0.0, 0.0);
        assert_eq!(planar_distance(&o, &ProjectedPoint::new(3000.0, 4000.0)), 5.0);
        assert_eq!(planar_distance(&o, &ProjectedPoint::new(1000.0, 0.0)), 1.0);
        let p = ProjectedPoint::new(412_345.5, 4_210_000.25);
        assert_eq!(planar_distance(&p, &p), 0.0);
    }

    #[test]
    fn region_validation_messages() {
        assert!(validate_region(&region(1200, 40.0)).is_empty());
        let v = validate_region(&region(0, 40.0));
        assert_eq!(v, vec![RegionViolation::NonPositivePopulation]);
        assert_eq!(v[0].to_string(), "population must be positive");
        let v = validate_region(&region(10, -5.0));
        assert_eq!(v[0].to_string(), "altitude must be nonnegative");
    }

    #[test]
    fn duplicate_ids_flagged_per_year() {
        let a = region(10, 1.0);
        let mut b = region(10, 1.0);
        let v = validate_regions(&[a.clone(), b.clone()]);
        assert_eq!(v, vec![(1, RegionViolation::DuplicateId("R1".into()))]);
        b.year = 2013;
        assert!(validate_regions(&[a, b]).is_empty());
    }

    #[test]
    fn month_names() {
        assert_eq!(month_abbrev(Month::September), "Sep");
        assert_eq!(parse_month("Jul"), Some(Month::July));
        assert_eq!(parse_month("november"), Some(Month::November));
        assert_eq!(parse_month("4"), Some(Month::April));
        assert_eq!(parse_month("Ju"), None);
        assert_eq!(parse_month("13"), None);
    }

    #[test]
    fn window_spans_thirty_days() {
        let w = DateWindow::starting(NaiveDate::from_ymd_opt(2012, 4, 7).unwrap());
        let days: Vec<_> = w.days().collect();
        assert_eq!(days.len(), 30);
        assert_eq!(*days.last().unwrap(), w.end_date());
        assert_eq!(w.end_date(), NaiveDate::from_ymd_opt(2012, 5, 6).unwrap());
        assert!(w.contains(w.end_date()));
        assert!(!w.contains(w.end_date().succ_opt().unwrap()));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pt() -> impl Strategy<Value = ProjectedPoint> {
            (-1e6..1e6f64, -1e6..1e6f64).prop_map(|(x, y)| ProjectedPoint::new(x, y))
        }

        proptest! {
            #[test]
            fn symmetric_and_triangle(a in pt(), b in pt(), c in pt()) {
                prop_assert_eq!(planar_distance(&a, &b), planar_distance(&b, &a));
                let ab = planar_distance(&a, &b);
                let bc = planar_distance(&b, &c);
                let ac = planar_distance(&a, &c);
                prop_assert!(ac <= ab + bc + 1e-9);
                prop_assert!(ab >= 0.0);
            }

            #[test]
            fn scales_linearly(a in pt(), b in pt(), k in 0.01..100.0f64) {
                let ka = ProjectedPoint::new(k * a.x, k * a.y);
                let kb = ProjectedPoint::new(k * b.x, k * b.y);
                let lhs = planar_distance(&ka, &kb);
                let rhs = k * planar_distance(&a, &b);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
            }
        }
    }
}
