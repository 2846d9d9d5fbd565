//! Imported-host exposure: the initially infected fraction of a region,
//! built from migrant counts weighted by an exponential distance kernel.

use thiserror::Error;

use crate::ingest::{LarvaeSite, MigrantObservation, MonitoringPeriod};
use crate::model::{planar_distance, ProjectedPoint, Region};

pub const DEFAULT_KERNEL_LAMBDA_PER_KM: f64 = 1.0;
pub const BASELINE_PREVALENCE: f64 = 0.10;

#[derive(Debug, Error, PartialEq)]
pub enum ExposureError {
    #[error("kernel decay must be positive, got {0}")]
    NonpositiveDecay(f64),
    #[error("distance must be nonnegative, got {0}")]
    NegativeDistance(f64),
    #[error("population must be positive")]
    ZeroPopulation,
    #[error("prevalence must lie in (0, 1], got {0}")]
    InvalidPrevalence(f64),
}

/// Asymptomatic prevalence among migrants, in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Prevalence(f64);

impl Prevalence {
    pub fn new(p: f64) -> Result<Self, ExposureError> {
        if p > 0.0 && p <= 1.0 {
            Ok(Self(p))
        } else {
            Err(ExposureError::InvalidPrevalence(p))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// The low, baseline and high prevalence scenarios.
pub fn prevalence_scenarios() -> [Prevalence; 3] {
    [Prevalence(0.05), Prevalence(BASELINE_PREVALENCE), Prevalence(0.20)]
}

/// W(d) = λ e^{−λ d}, d in km and λ per km.
pub fn kernel_weight(d_km: f64, lambda_per_km: f64) -> Result<f64, ExposureError> {
    if !(lambda_per_km > 0.0) {
        return Err(ExposureError::NonpositiveDecay(lambda_per_km));
    }
    if !(d_km >= 0.0) {
        return Err(ExposureError::NegativeDistance(d_km));
    }
    Ok(lambda_per_km * (-lambda_per_km * d_km).exp())
}

/// Closest ever-positive larvae site to `from`, if any.
pub fn nearest_positive_site(from: &ProjectedPoint, sites: &[LarvaeSite]) -> Option<ProjectedPoint> {
    sites
        .iter()
        .filter(|s| s.ever_positive())
        .map(|s| s.location)
        .min_by(|a, b| from.distance_m(a).total_cmp(&from.distance_m(b)))
}

/// Point migrant distances are measured from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceAnchor {
    LarvaeSite(ProjectedPoint),
    /// No positive larvae site was available.
    Centroid(ProjectedPoint),
}

impl DistanceAnchor {
    pub fn point(&self) -> ProjectedPoint {
        match self {
            DistanceAnchor::LarvaeSite(p) | DistanceAnchor::Centroid(p) => *p,
        }
    }
}

/// Per-period contribution to the region's exposure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodTerm {
    pub period: MonitoringPeriod,
    /// Attributed migrants over region population.
    pub mu0: f64,
    pub distance_km: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureEstimate {
    pub region_id: String,
    /// Periods with at least one attributed migrant site.
    pub terms: Vec<PeriodTerm>,
    pub anchor: DistanceAnchor,
    pub prevalence: Prevalence,
    /// `prevalence × Σ mu0·W` before clamping.
    pub unclamped_mu0: f64,
    /// Initially infected fraction, clamped to [0, 1].
    pub mu0: f64,
}

/// Exposure of one region.
///
/// For each monitoring period the migrants attributed to the region are
/// divided by its population, and weighted by the kernel at the distance
/// between the region's nearest positive larvae site and the closest of
/// that period's attributed migrant sites. The weighted sum is scaled by
/// the prevalence scenario. Regions with no positive larvae site measure
/// from their centroid instead.
pub fn initial_infected_fraction(
    region: &Region,
    migrants: &[MigrantObservation],
    larvae_sites: &[LarvaeSite],
    lambda_per_km: f64,
    prevalence: Prevalence,
) -> Result<ExposureEstimate, ExposureError> {
    if region.population == 0 {
        return Err(ExposureError::ZeroPopulation);
    }
    if !(lambda_per_km > 0.0) {
        return Err(ExposureError::NonpositiveDecay(lambda_per_km));
    }
    let anchor = match region
        .nearest_larvae_site
        .or_else(|| nearest_positive_site(&region.centroid, larvae_sites))
    {
        Some(p) => DistanceAnchor::LarvaeSite(p),
        None => {
            log::warn!("region {}: no positive larvae site, measuring from centroid", region.region_id);
            DistanceAnchor::Centroid(region.centroid)
        }
    };
    let anchor_pt = anchor.point();

    let mut terms = Vec::new();
    for period in MonitoringPeriod::ALL {
        let attributed: Vec<&MigrantObservation> = migrants
            .iter()
            .filter(|m| m.period == period && m.region_id == region.region_id)
            .collect();
        let Some(closest) = attributed
            .iter()
            .map(|m| planar_distance(&m.location, &anchor_pt))
            .min_by(f64::total_cmp)
        else {
            continue;
        };
        let count: u64 = attributed.iter().map(|m| m.migrant_count).sum();
        terms.push(PeriodTerm {
            period,
            mu0: count as f64 / region.population as f64,
            distance_km: closest,
            weight: kernel_weight(closest, lambda_per_km)?,
        });
    }
    let weighted: f64 = terms.iter().map(|t| t.mu0 * t.weight).sum();
    let unclamped_mu0 = prevalence.get() * weighted;
    Ok(ExposureEstimate {
        region_id: region.region_id.clone(),
        terms,
        anchor,
        prevalence,
        unclamped_mu0,
        mu0: unclamped_mu0.clamp(0.0, 1.0),
    })
}
