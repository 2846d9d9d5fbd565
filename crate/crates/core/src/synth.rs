//! Seeded synthetic study area: regions, stations, larvae sites, migrant
//! sites, traps and a DEM, written in the same formats the engine reads.
//!
//! Daily temperature follows a seasonal cosine peaking in late July plus
//! bounded noise, so every station's July mean exceeds its April mean.
//! Urban regions are more populous and have fewer mosquitoes per person.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ingest::{
    write_larvae_sites, write_migrant_observations, write_regions, write_stations, write_trap_records, LarvaeObservation,
    LarvaeSite, MigrantObservation, MonitoringPeriod, StationSeries, TrapRecord,
};
use crate::model::{ProjectedPoint, Region, RegionClass};
use crate::rng;
use crate::surface::{write_ascii_grid_to, Raster};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad synthesis spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Shape of the generated study area.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_regions: usize,
    pub n_stations: usize,
    pub n_larvae_sites: usize,
    pub n_migrant_sites: usize,
    pub year: i32,
    /// Lower-left corner of the study area.
    pub origin: ProjectedPoint,
    pub width_m: f64,
    pub height_m: f64,
    /// Margin of DEM beyond the study area on every side.
    pub dem_margin_m: f64,
    pub dem_cellsize_m: f64,
    /// Annual mean and half-range of the seasonal temperature cosine.
    pub temp_mean_c: f64,
    pub temp_amplitude_c: f64,
    /// Day of year of the seasonal maximum.
    pub temp_peak_doy: u32,
    /// Half-width of the uniform daily noise.
    pub temp_noise_c: f64,
    pub urban_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_regions: 50,
            n_stations: 6,
            n_larvae_sites: 24,
            n_migrant_sites: 16,
            year: 2012,
            origin: ProjectedPoint::new(400_000.0, 4_200_000.0),
            width_m: 60_000.0,
            height_m: 40_000.0,
            dem_margin_m: 5_000.0,
            dem_cellsize_m: 500.0,
            temp_mean_c: 19.0,
            temp_amplitude_c: 8.0,
            temp_peak_doy: 205,
            temp_noise_c: 1.5,
            urban_fraction: 0.3,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::BadSpec(m.to_string()));
        if self.n_regions == 0 {
            return fail("at least one region is required");
        }
        if self.n_stations == 0 {
            return fail("at least one station is required");
        }
        if !(self.width_m > 0.0 && self.height_m > 0.0) {
            return fail("study area must have positive width and height");
        }
        if !(self.dem_cellsize_m > 0.0 && self.dem_margin_m >= 0.0) {
            return fail("DEM cellsize must be positive and margin nonnegative");
        }
        if !(self.temp_amplitude_c > self.temp_noise_c) {
            return fail("seasonal amplitude must exceed the noise so July stays warmer than April");
        }
        if !(0.0..=1.0).contains(&self.urban_fraction) {
            return fail("urban fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

/// A complete generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub regions: Vec<Region>,
    pub stations: Vec<StationSeries>,
    pub larvae_sites: Vec<LarvaeSite>,
    pub migrants: Vec<MigrantObservation>,
    pub traps: Vec<TrapRecord>,
    pub dem: Raster,
    pub year: i32,
}

/// File names written by [`write_dataset`].
pub const FILES: [&str; 7] = ["regions.csv", "stations.csv", "larvae.csv", "migrants.csv", "traps.csv", "dem.asc", "run.conf"];

/// Terrain: a coastal plain rising to a ridge along the northern edge, with
/// gentle east-west undulation. Nonnegative everywhere.
fn terrain_m(spec: &SynthSpec, p: &ProjectedPoint) -> f64 {
    let u = (p.x - spec.origin.x) / spec.width_m;
    let v = ((p.y - spec.origin.y) / spec.height_m).clamp(-0.2, 1.2);
    let ridge = 650.0 * (v.max(0.0)).powi(3);
    let hills = 40.0 * (1.0 + (2.0 * PI * 2.0 * u).sin()) * (0.5 + 0.5 * v.max(0.0));
    (5.0 + ridge + hills).max(0.0)
}

fn seasonal_temp(spec: &SynthSpec, date: NaiveDate) -> f64 {
    let phase = 2.0 * PI * (date.ordinal() as f64 - spec.temp_peak_doy as f64) / 365.25;
    spec.temp_mean_c + spec.temp_amplitude_c * phase.cos()
}

/// Relative mosquito abundance over the season, peaking with temperature.
fn seasonal_abundance(spec: &SynthSpec, date: NaiveDate) -> f64 {
    let phase = 2.0 * PI * (date.ordinal() as f64 - spec.temp_peak_doy as f64) / 365.25;
    0.8 + 0.4 * phase.cos()
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn point_in(rng: &mut ChaCha8Rng, spec: &SynthSpec, inset: f64) -> ProjectedPoint {
    ProjectedPoint::new(
        spec.origin.x + uniform(rng, inset, spec.width_m - inset),
        spec.origin.y + uniform(rng, inset, spec.height_m - inset),
    )
}

/// Positions are rounded to whole meters so the CSVs stay readable.
fn whole(p: ProjectedPoint) -> ProjectedPoint {
    ProjectedPoint::new(p.x.round(), p.y.round())
}

fn dem_raster(spec: &SynthSpec) -> Raster {
    let cs = spec.dem_cellsize_m;
    let ncols = ((spec.width_m + 2.0 * spec.dem_margin_m) / cs).ceil() as usize;
    let nrows = ((spec.height_m + 2.0 * spec.dem_margin_m) / cs).ceil() as usize;
    let mut r = Raster::filled(
        ncols,
        nrows,
        spec.origin.x - spec.dem_margin_m,
        spec.origin.y - spec.dem_margin_m,
        cs,
        0.0,
    );
    for row in 0..nrows {
        for col in 0..ncols {
            let c = r.cell_center(row, col);
            r.cells[row * ncols + col] = (terrain_m(spec, &c) * 10.0).round() / 10.0;
        }
    }
    r
}

/// Generates the dataset. Identical `(spec, seed)` gives identical data.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<SyntheticDataset, SynthError> {
    spec.validate()?;
    let dem = dem_raster(spec);
    let season_start = NaiveDate::from_ymd_opt(spec.year, 4, 1).ok_or_else(|| SynthError::BadSpec("bad year".into()))?;
    let season_end = NaiveDate::from_ymd_opt(spec.year, 12, 31).expect("valid date");

    let mut rng = rng::stream(seed, "synth-regions", 0, 0);
    let inset = 1_000.0_f64.min(spec.width_m / 4.0).min(spec.height_m / 4.0);
    let n_urban = (spec.n_regions as f64 * spec.urban_fraction).round() as usize;
    let mut regions = Vec::with_capacity(spec.n_regions);
    let mut region_m = Vec::with_capacity(spec.n_regions);
    for i in 0..spec.n_regions {
        let class = if i < n_urban { RegionClass::Urban } else { RegionClass::Rural };
        let centroid = whole(point_in(&mut rng, spec, inset));
        let (population, m) = match class {
            RegionClass::Urban => (rng.random_range(5_000..20_000u64), uniform(&mut rng, 0.02, 0.06)),
            RegionClass::Rural => (rng.random_range(500..3_000u64), uniform(&mut rng, 0.05, 0.15)),
        };
        let altitude = dem.sample(&centroid).unwrap_or_else(|| terrain_m(spec, &centroid));
        regions.push(Region {
            region_id: format!("R{:03}", i + 1),
            year: spec.year,
            region_class: class,
            centroid,
            altitude,
            population,
            nearest_larvae_site: None,
        });
        region_m.push(m);
    }

    let mut rng = rng::stream(seed, "synth-stations", 0, 0);
    let mut stations = Vec::with_capacity(spec.n_stations);
    for i in 0..spec.n_stations {
        let location = whole(point_in(&mut rng, spec, 0.0));
        let offset = uniform(&mut rng, -0.5, 0.5);
        let mut readings = std::collections::BTreeMap::new();
        let mut d = season_start;
        while d <= season_end {
            let noise = uniform(&mut rng, -spec.temp_noise_c, spec.temp_noise_c);
            let t = seasonal_temp(spec, d) + offset + noise;
            readings.insert(d, (t * 10.0).round() / 10.0);
            d += Duration::days(1);
        }
        stations.push(StationSeries { station_id: format!("S{:02}", i + 1), location, readings });
    }

    let mut rng = rng::stream(seed, "synth-larvae", 0, 0);
    let mut larvae_sites = Vec::with_capacity(spec.n_larvae_sites);
    for i in 0..spec.n_larvae_sites {
        let location = whole(point_in(&mut rng, spec, 0.0));
        let p_positive = if rng.random::<f64>() < 0.25 { 0.0 } else { uniform(&mut rng, 0.1, 0.6) };
        let mut observations = Vec::new();
        let mut d = season_start;
        while d.month() <= 10 {
            let positive = rng.random::<f64>() < p_positive;
            let larvae_count = if positive { rng.random_range(1..60u64) } else { 0 };
            observations.push(LarvaeObservation { date: d, positive, larvae_count });
            d += Duration::days(7);
        }
        larvae_sites.push(LarvaeSite { site_id: format!("L{:02}", i + 1), location, observations });
    }

    let mut rng = rng::stream(seed, "synth-migrants", 0, 0);
    let mut migrants = Vec::new();
    for i in 0..spec.n_migrant_sites {
        let location = whole(point_in(&mut rng, spec, 0.0));
        let region_id = regions
            .iter()
            .min_by(|a, b| a.centroid.distance_m(&location).total_cmp(&b.centroid.distance_m(&location)))
            .map(|r| r.region_id.clone())
            .expect("at least one region");
        let size = uniform(&mut rng, 20.0, 200.0);
        for period in MonitoringPeriod::ALL {
            let migrant_count = (size * uniform(&mut rng, 0.6, 1.4)).round() as u64;
            migrants.push(MigrantObservation {
                site_id: format!("M{:02}", i + 1),
                location,
                period,
                migrant_count,
                region_id: region_id.clone(),
            });
        }
    }

    let mut rng = rng::stream(seed, "synth-traps", 0, 0);
    let mut traps = Vec::new();
    for (i, (region, m)) in regions.iter().zip(&region_m).enumerate() {
        let mut d = season_start + Duration::days(rng.random_range(0..12));
        while d <= season_end - Duration::days(21) {
            let expected = region.population as f64 * m * seasonal_abundance(spec, d);
            let count = (expected * uniform(&mut rng, 0.85, 1.15)).round() as u64;
            traps.push(TrapRecord {
                trap_id: format!("T{:03}", i + 1),
                region_id: region.region_id.clone(),
                date: d,
                anopheles_female_count: count,
            });
            d += Duration::days(12);
        }
    }

    Ok(SyntheticDataset { regions, stations, larvae_sites, migrants, traps, dem, year: spec.year })
}

fn create(dir: &Path, name: &str) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes every input file plus `run.conf`, whose paths are relative to `dir`.
pub fn write_dataset(ds: &SyntheticDataset, dir: &Path) -> Result<Vec<PathBuf>, SynthError> {
    fs::create_dir_all(dir)?;
    write_regions(create(dir, "regions.csv")?, &ds.regions)?;
    write_stations(create(dir, "stations.csv")?, &ds.stations)?;
    write_larvae_sites(create(dir, "larvae.csv")?, &ds.larvae_sites)?;
    write_migrant_observations(create(dir, "migrants.csv")?, &ds.migrants)?;
    write_trap_records(create(dir, "traps.csv")?, &ds.traps)?;
    write_ascii_grid_to(&ds.dem, create(dir, "dem.asc")?)?;
    let mut conf = create(dir, "run.conf")?;
    write!(
        conf,
        "# Synthetic study area.\n\
         regions = regions.csv\n\
         stations = stations.csv\n\
         larvae = larvae.csv\n\
         migrants = migrants.csv\n\
         traps = traps.csv\n\
         dem = dem.asc\n\
         year = {}\n",
        ds.year
    )?;
    conf.flush()?;
    Ok(FILES.iter().map(|f| dir.join(f)).collect())
}
