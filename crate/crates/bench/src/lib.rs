//! Shared fixtures for the benchmarks.

use chrono::Month;
use resurgence_core::climate::{first_saturday_window, TemperatureWindow};
use resurgence_core::surface::WeightedPoint;
use resurgence_core::ProjectedPoint;

/// A July window warming linearly from 22 to 28 °C.
pub fn july_window() -> TemperatureWindow {
    let w = first_saturday_window(2012, Month::July).expect("July is in season");
    let temps = (0..30).map(|i| 22.0 + 6.0 * i as f64 / 29.0).collect();
    TemperatureWindow::from_daily(w, temps).expect("30 values")
}

/// `n` points on a diagonal lattice inside a 40 km square.
pub fn lattice_points(n: usize) -> Vec<WeightedPoint> {
    (0..n)
        .map(|i| WeightedPoint {
            location: ProjectedPoint::new(5_000.0 + (i * 7_919 % 30_000) as f64, 5_000.0 + (i * 6_271 % 30_000) as f64),
            weight: 1.0 + (i % 5) as f64 * 0.25,
        })
        .collect()
}
