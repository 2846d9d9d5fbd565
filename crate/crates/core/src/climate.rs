//! Temperature windows, station interpolation and the temperature-driven
//! entomological curves (pre-bloodmeal delay and daily mortality).

use chrono::{Month, NaiveDate, Weekday};
use thiserror::Error;

use crate::ingest::StationSeries;
use crate::model::{DateWindow, ProjectedPoint};

pub const DEFAULT_IDW_POWER: f64 = 2.0;

/// Targets closer than this to a station take the station's reading verbatim.
const EXACT_HIT_M: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum ClimateError {
    #[error("{0:?} is outside the April-November transmission season")]
    MonthOutOfSeason(Month),
    #[error("no station reading available")]
    NoStations,
    #[error("IDW power must be positive, got {0}")]
    InvalidPower(f64),
    #[error("no temperature available for {0}")]
    MissingDay(NaiveDate),
    #[error("window needs {expected} daily values, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("mosquito lifespan is nonpositive at {0} °C")]
    NonviableTemperature(f64),
    #[error("no day in the window is warm enough for a viable vector")]
    NoViableDay,
}

/// Months in which transmission is modeled.
pub fn in_season(month: Month) -> bool {
    (4..=11).contains(&month.number_from_month())
}

/// The 30-day window starting on the first Saturday of `month`.
pub fn first_saturday_window(year: i32, month: Month) -> Result<DateWindow, ClimateError> {
    if !in_season(month) {
        return Err(ClimateError::MonthOutOfSeason(month));
    }
    let start = NaiveDate::from_weekday_of_month_opt(year, month.number_from_month(), Weekday::Sat, 1)
        .expect("every month has a first Saturday");
    Ok(DateWindow::starting(start))
}

/// Inverse-distance-weighted value at `target`.
///
/// Weights are `d^-power`; a station within 1 m of the target wins outright.
pub fn idw_temperature(
    target: &ProjectedPoint,
    stations: &[(ProjectedPoint, f64)],
    power: f64,
) -> Result<f64, ClimateError> {
    if !(power > 0.0) {
        return Err(ClimateError::InvalidPower(power));
    }
    if stations.is_empty() {
        return Err(ClimateError::NoStations);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (loc, t) in stations {
        let d = target.distance_m(loc);
        if d < EXACT_HIT_M {
            return Ok(*t);
        }
        let w = d.powf(-power);
        num += w * t;
        den += w;
        lo = lo.min(*t);
        hi = hi.max(*t);
    }
    // A weighted mean lies in [lo, hi]; the clamp only absorbs rounding.
    Ok((num / den).clamp(lo, hi))
}

/// Daily temperatures over a window together with their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureWindow {
    pub window: DateWindow,
    pub daily_temps: Vec<f64>,
    pub mean_temp: f64,
}

impl TemperatureWindow {
    pub fn from_daily(window: DateWindow, daily_temps: Vec<f64>) -> Result<Self, ClimateError> {
        if daily_temps.len() != DateWindow::LENGTH_DAYS {
            return Err(ClimateError::WrongLength { expected: DateWindow::LENGTH_DAYS, got: daily_temps.len() });
        }
        let mean_temp = daily_temps.iter().sum::<f64>() / daily_temps.len() as f64;
        Ok(Self { window, daily_temps, mean_temp })
    }

    /// A window held at a single temperature; convenient for fixtures.
    pub fn constant(window: DateWindow, temp: f64) -> Self {
        Self { window, daily_temps: vec![temp; DateWindow::LENGTH_DAYS], mean_temp: temp }
    }
}

/// Builds the window from per-day values in window order; `None` marks a
/// day with no temperature.
pub fn mean_window_temperature(
    window: DateWindow,
    daily: &[Option<f64>],
) -> Result<TemperatureWindow, ClimateError> {
    if daily.len() != DateWindow::LENGTH_DAYS {
        return Err(ClimateError::WrongLength { expected: DateWindow::LENGTH_DAYS, got: daily.len() });
    }
    let temps = window
        .days()
        .zip(daily)
        .map(|(date, t)| t.ok_or(ClimateError::MissingDay(date)))
        .collect::<Result<Vec<_>, _>>()?;
    TemperatureWindow::from_daily(window, temps)
}

/// Interpolates every day of `window` at `target` from whichever stations
/// reported that day.
pub fn interpolate_window(
    target: &ProjectedPoint,
    stations: &[StationSeries],
    window: DateWindow,
    power: f64,
) -> Result<TemperatureWindow, ClimateError> {
    let mut daily = Vec::with_capacity(DateWindow::LENGTH_DAYS);
    for date in window.days() {
        let readings: Vec<(ProjectedPoint, f64)> = stations
            .iter()
            .filter_map(|s| s.readings.get(&date).map(|t| (s.location, *t)))
            .collect();
        match idw_temperature(target, &readings, power) {
            Ok(t) => daily.push(Some(t)),
            Err(ClimateError::NoStations) => daily.push(None),
            Err(e) => return Err(e),
        }
    }
    mean_window_temperature(window, &daily)
}

/// Pre-bloodmeal period δ in days: `0.0163 T² − 0.95 T + 14.769`, floored at 0.
pub fn pre_bloodmeal_delay(temp_c: f64) -> f64 {
    (0.0163 * temp_c * temp_c - 0.95 * temp_c + 14.769).max(0.0)
}

/// Mosquito lifespan in days, `−4.4 + 1.31 T − 0.003 T²`.
fn lifespan_days(temp_c: f64) -> f64 {
    -4.4 + 1.31 * temp_c - 0.003 * temp_c * temp_c
}

/// Daily mortality g = 1 / lifespan. Fails where the lifespan is not positive.
pub fn daily_mortality_rate(temp_c: f64) -> Result<f64, ClimateError> {
    let life = lifespan_days(temp_c);
    if life > 0.0 {
        Ok(1.0 / life)
    } else {
        Err(ClimateError::NonviableTemperature(temp_c))
    }
}

/// Largest daily mortality over the window's viable days.
pub fn window_mortality_rate(w: &TemperatureWindow) -> Result<f64, ClimateError> {
    w.daily_temps
        .iter()
        .filter_map(|t| daily_mortality_rate(*t).ok())
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.max(g))))
        .ok_or(ClimateError::NoViableDay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Datelike;
    use proptest::prelude::*;

    fn window() -> DateWindow {
        first_saturday_window(2012, Month::July).unwrap()
    }

    #[test]
    fn first_saturday_examples() {
        let w = first_saturday_window(2012, Month::April).unwrap();
        assert_eq!(w.start_date(), NaiveDate::from_ymd_opt(2012, 4, 7).unwrap());
        let w = first_saturday_window(2013, Month::May).unwrap();
        assert_eq!(w.start_date(), NaiveDate::from_ymd_opt(2013, 5, 4).unwrap());
        assert_eq!(
            first_saturday_window(2012, Month::January),
            Err(ClimateError::MonthOutOfSeason(Month::January))
        );
        assert!(first_saturday_window(2012, Month::December).is_err());
        assert!(first_saturday_window(2012, Month::November).is_ok());
    }

    #[test]
    fn idw_examples() {
        let s = ProjectedPoint::new(100.0, 200.0);
        assert_eq!(idw_temperature(&s, &[(s, 22.4), (ProjectedPoint::new(0.0, 0.0), 10.0)], 2.0), Ok(22.4));

        let o = ProjectedPoint::new(0.0, 0.0);
        let two = [(ProjectedPoint::new(-1000.0, 0.0), 20.0), (ProjectedPoint::new(0.0, 1000.0), 30.0)];
        assert!((idw_temperature(&o, &two, 2.0).unwrap() - 25.0).abs() < 1e-12);

        let near_far = [(ProjectedPoint::new(1000.0, 0.0), 20.0), (ProjectedPoint::new(-2000.0, 0.0), 30.0)];
        assert!((idw_temperature(&o, &near_far, 2.0).unwrap() - 22.0).abs() < 1e-12);

        assert_eq!(idw_temperature(&o, &[], 2.0), Err(ClimateError::NoStations));
        assert_eq!(idw_temperature(&o, &two, 0.0), Err(ClimateError::InvalidPower(0.0)));
    }

    #[test]
    fn window_means() {
        let w = window();
        let tw = mean_window_temperature(w, &[Some(25.0); 30]).unwrap();
        assert_eq!(tw.mean_temp, 25.0);

        let mut half: Vec<Option<f64>> = vec![Some(20.0); 15];
        half.extend(vec![Some(30.0); 15]);
        assert_eq!(mean_window_temperature(w, &half).unwrap().mean_temp, 25.0);

        let mut missing = vec![Some(25.0); 30];
        missing[3] = None;
        let day4 = w.days().nth(3).unwrap();
        assert_eq!(mean_window_temperature(w, &missing), Err(ClimateError::MissingDay(day4)));
    }

    #[test]
    fn interpolation_uses_stations_reporting_that_day() {
        let w = window();
        let mut a = StationSeries {
            station_id: "A".into(),
            location: ProjectedPoint::new(-1000.0, 0.0),
            readings: w.days().map(|d| (d, 20.0)).collect(),
        };
        let b = StationSeries {
            station_id: "B".into(),
            location: ProjectedPoint::new(1000.0, 0.0),
            readings: w.days().skip(1).map(|d| (d, 30.0)).collect(),
        };
        let o = ProjectedPoint::new(0.0, 0.0);
        let tw = interpolate_window(&o, &[a.clone(), b.clone()], w, 2.0).unwrap();
        assert_eq!(tw.daily_temps[0], 20.0);
        assert!((tw.daily_temps[1] - 25.0).abs() < 1e-12);

        a.readings.remove(&w.start_date());
        assert_eq!(
            interpolate_window(&o, &[a, b], w, 2.0),
            Err(ClimateError::MissingDay(w.start_date()))
        );
    }

    #[test]
    fn delay_examples() {
        assert!((pre_bloodmeal_delay(20.0) - 2.289).abs() < 1e-9);
        assert!((pre_bloodmeal_delay(25.0) - 1.2065).abs() < 1e-9);
        assert!((pre_bloodmeal_delay(30.0) - 0.939).abs() < 1e-9);
    }

    #[test]
    fn mortality_examples() {
        assert!((daily_mortality_rate(25.0).unwrap() - 1.0 / 26.475).abs() < 1e-15);
        assert!((daily_mortality_rate(25.0).unwrap() - 0.0377715).abs() < 1e-7);
        assert!((daily_mortality_rate(15.0).unwrap() - 0.0686106).abs() < 1e-7);
        assert_eq!(daily_mortality_rate(2.0), Err(ClimateError::NonviableTemperature(2.0)));
        assert!(daily_mortality_rate(3.38).is_err());
        assert!(daily_mortality_rate(3.39).is_ok());
    }

    #[test]
    fn window_mortality_takes_max() {
        let w = window();
        let alt: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 15.0 } else { 25.0 }).collect();
        let tw = TemperatureWindow::from_daily(w, alt).unwrap();
        assert_eq!(window_mortality_rate(&tw).unwrap(), daily_mortality_rate(15.0).unwrap());
        assert!((window_mortality_rate(&TemperatureWindow::constant(w, 25.0)).unwrap() - 0.0377715).abs() < 1e-7);
        assert_eq!(window_mortality_rate(&TemperatureWindow::constant(w, 2.0)), Err(ClimateError::NoViableDay));

        let mut mixed = vec![2.0; 30];
        mixed[7] = 20.0;
        let tw = TemperatureWindow::from_daily(w, mixed).unwrap();
        assert_eq!(window_mortality_rate(&tw).unwrap(), daily_mortality_rate(20.0).unwrap());
    }

    proptest! {
        #[test]
        fn idw_within_station_range(
            stations in prop::collection::vec((-5e4..5e4f64, -5e4..5e4f64, -10.0..40.0f64), 1..12),
            tx in -5e4..5e4f64, ty in -5e4..5e4f64, power in 0.5..4.0f64,
        ) {
            let st: Vec<_> = stations.iter().map(|(x, y, t)| (ProjectedPoint::new(*x, *y), *t)).collect();
            let v = idw_temperature(&ProjectedPoint::new(tx, ty), &st, power).unwrap();
            let lo = st.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
            let hi = st.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= lo && v <= hi);
        }

        #[test]
        fn delay_nonnegative_and_decreasing(t in 20.0..29.0f64) {
            let h = 1e-3;
            prop_assert!(pre_bloodmeal_delay(t) >= 0.0);
            prop_assert!(pre_bloodmeal_delay(t + h) < pre_bloodmeal_delay(t));
        }

        #[test]
        fn window_g_dominates_daily(temps in prop::collection::vec(4.0..40.0f64, 30)) {
            let tw = TemperatureWindow::from_daily(window(), temps.clone()).unwrap();
            let g = window_mortality_rate(&tw).unwrap();
            for t in temps {
                let gd = daily_mortality_rate(t).unwrap();
                prop_assert!(gd > 0.0);
                prop_assert!(g >= gd);
            }
        }

        #[test]
        fn window_starts_on_early_saturday(year in 1900..2100i32, m in 4..=11u8) {
            let w = first_saturday_window(year, Month::try_from(m).unwrap()).unwrap();
            prop_assert_eq!(w.start_date().weekday(), Weekday::Sat);
            prop_assert!(w.start_date().day() <= 7);
        }
    }
}
