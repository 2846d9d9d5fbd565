//! End-to-end orchestration: load inputs, estimate R0 per region-month,
//! assess exposure and attack probability per prevalence, build surfaces,
//! and write the output bundle with its manifest.
//!
//! Work is spread over a rayon pool; every random draw comes from a stream
//! keyed by `(seed, region, month, sample)`, so output bytes never depend
//! on the thread count.

use std::env;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Month;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::climate::{first_saturday_window, interpolate_window, ClimateError, TemperatureWindow};
use crate::config::{is_path_key, ConfigError, RunConfig};
use crate::entomology::{EntomologyError, MosquitoRatios, RatioSource};
use crate::exposure::{initial_infected_fraction, nearest_positive_site, ExposureError, Prevalence};
use crate::finalsize::{FinalSizeError, RiskOutcome};
use crate::ingest::{self, IngestError, LarvaeSite, MigrantObservation, MosquitoRatioOverride, StationSeries, TrapRecord};
use crate::model::{month_abbrev, Region};
use crate::surface::{
    apply_altitude_mask, filter_hotspots, kde_on_grid, kde_raster, read_ascii_grid, write_ascii_grid,
    write_hotspots_geojson, Extent, Hotspot, Raster, SurfaceError, WeightedPoint, HOTSPOT_THRESHOLD,
};
use crate::tables::{
    aggregate_outcomes, fmt_sig6, write_aggregate, write_aggregate_wide, write_outcomes, write_sensitivity,
    AggregateMetric, AggregateTable, OutcomeRecord, SensitivityTable, TableError,
};
use crate::transmission::{median, monte_carlo_r0, TransmissionError};

/// Caps worker threads when no explicit count is configured.
pub const THREADS_ENV: &str = "RESURGENCE_THREADS";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("a seed is required")]
    MissingSeed,
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Ingest(Vec<IngestError>),
    #[error("{path}: {source}")]
    Dem { path: PathBuf, source: SurfaceError },
    #[error("no regions for year {0}")]
    NoRegions(i32),
    #[error("region {region_id}, {month}: {reason}")]
    RegionMonth { region_id: String, month: &'static str, reason: String },
    #[error("region {region_id}: {source}")]
    Exposure { region_id: String, source: ExposureError },
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn at_region_month(region_id: &str, month: Month, reason: impl ToString) -> PipelineError {
    PipelineError::RegionMonth { region_id: region_id.to_string(), month: month_abbrev(month), reason: reason.to_string() }
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Thread count from the explicit value, else from `RESURGENCE_THREADS`.
pub fn thread_count(explicit: Option<usize>) -> Option<usize> {
    explicit.or_else(|| env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|n: &usize| *n > 0))
}

/// Runs `f` on a dedicated pool sized by [`thread_count`].
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(threads) {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Parsed and validated inputs for one run.
#[derive(Debug, Clone)]
pub struct Inputs {
    /// Regions of the configured year, with their nearest positive larvae site filled in.
    pub regions: Vec<Region>,
    pub stations: Vec<StationSeries>,
    pub larvae_sites: Vec<LarvaeSite>,
    pub migrants: Vec<MigrantObservation>,
    pub traps: Vec<TrapRecord>,
    pub overrides: Vec<MosquitoRatioOverride>,
    pub dem: Option<Raster>,
    pub warnings: Vec<String>,
    /// `(config key, path)` of every file read, for the manifest.
    pub files: Vec<(&'static str, PathBuf)>,
}

fn take<T>(
    key: &'static str,
    path: &Path,
    result: Result<ingest::Parsed<T>, IngestError>,
    errors: &mut Vec<IngestError>,
    warnings: &mut Vec<String>,
) -> Vec<T> {
    match result {
        Ok(p) => {
            warnings.extend(p.warnings.into_iter().map(|w| format!("{key} ({}): {w}", path.display())));
            p.records
        }
        Err(e) => {
            errors.push(e);
            Vec::new()
        }
    }
}

/// Reads every configured input, reporting all defects across all files
/// before giving up.
pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs, PipelineError> {
    let p = &cfg.inputs;
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let mut files = vec![("regions", p.regions.clone()), ("stations", p.stations.clone())];
    files.push(("larvae", p.larvae.clone()));
    files.push(("migrants", p.migrants.clone()));

    let all_regions = take("regions", &p.regions, ingest::parse_regions(&p.regions), &mut errors, &mut warnings);
    let stations = take("stations", &p.stations, ingest::parse_stations(&p.stations), &mut errors, &mut warnings);
    let larvae_sites = take("larvae", &p.larvae, ingest::parse_larvae_sites(&p.larvae), &mut errors, &mut warnings);
    let migrants =
        take("migrants", &p.migrants, ingest::parse_migrant_observations(&p.migrants), &mut errors, &mut warnings);
    let traps = match &p.traps {
        Some(path) => {
            files.push(("traps", path.clone()));
            take("traps", path, ingest::parse_trap_records(path), &mut errors, &mut warnings)
        }
        None => Vec::new(),
    };
    let overrides = match &p.m_overrides {
        Some(path) => {
            files.push(("m_overrides", path.clone()));
            take("m_overrides", path, ingest::parse_m_overrides(path), &mut errors, &mut warnings)
        }
        None => Vec::new(),
    };
    if !errors.is_empty() {
        return Err(PipelineError::Ingest(errors));
    }
    let dem = match &p.dem {
        Some(path) => {
            files.push(("dem", path.clone()));
            Some(read_ascii_grid(path).map_err(|source| PipelineError::Dem { path: path.clone(), source })?)
        }
        None => None,
    };

    let mut regions: Vec<Region> = all_regions.into_iter().filter(|r| r.year == cfg.year).collect();
    if regions.is_empty() {
        return Err(PipelineError::NoRegions(cfg.year));
    }
    for r in &mut regions {
        r.nearest_larvae_site = nearest_positive_site(&r.centroid, &larvae_sites);
    }
    let known: std::collections::HashSet<&str> = regions.iter().map(|r| r.region_id.as_str()).collect();
    for m in &migrants {
        if !known.contains(m.region_id.as_str()) {
            warnings.push(format!("migrant site {} is attributed to unknown region {}", m.site_id, m.region_id));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Inputs { regions, stations, larvae_sites, migrants, traps, overrides, dem, warnings, files })
}

/// Monte Carlo summary for one region-month, with what went into it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMonthEstimate {
    pub region_index: usize,
    pub month: Month,
    pub window: TemperatureWindow,
    pub m: f64,
    pub m_source: RatioSource,
    pub median_r0: f64,
    pub q05_r0: f64,
    pub q95_r0: f64,
}

/// R0 for every region and configured month, in region-major order.
pub fn estimate_transmission(cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<RegionMonthEstimate>, PipelineError> {
    let seed = cfg.seed.ok_or(PipelineError::MissingSeed)?;
    let windows = cfg
        .months
        .iter()
        .map(|m| first_saturday_window(cfg.year, *m).map(|w| (*m, w)))
        .collect::<Result<Vec<_>, ClimateError>>()
        .map_err(|e| PipelineError::Config(ConfigError::BadValue { key: "months".into(), reason: e.to_string() }))?;
    let ratios = MosquitoRatios::new(&inputs.traps, &inputs.overrides, &windows, cfg.kappa_expansion)
        .map_err(|e: EntomologyError| ConfigError::BadValue { key: "kappa_expansion".into(), reason: e.to_string() })?;

    let jobs: Vec<(usize, usize)> =
        (0..inputs.regions.len()).flat_map(|i| (0..windows.len()).map(move |j| (i, j))).collect();
    jobs.par_iter()
        .map(|&(i, j)| {
            let region = &inputs.regions[i];
            let (month, window) = windows[j];
            let id = region.region_id.as_str();
            let temps = interpolate_window(&region.centroid, &inputs.stations, window, cfg.idw_power)
                .map_err(|e| at_region_month(id, month, e))?;
            let (m, m_source) = ratios.ratio(region, month).map_err(|e| at_region_month(id, month, e))?;
            let est = monte_carlo_r0(id, month, &temps, &cfg.params, m, cfg.n_samples, seed, cfg.capacity_model)
                .map_err(|e: TransmissionError| at_region_month(id, month, e))?;
            Ok(RegionMonthEstimate {
                region_index: i,
                month,
                window: temps,
                m,
                m_source,
                median_r0: est.median_r0,
                q05_r0: est.q05_r0,
                q95_r0: est.q95_r0,
            })
        })
        .collect()
}

/// Exposure and final size for one prevalence, in estimate order.
pub fn assess(
    cfg: &RunConfig,
    inputs: &Inputs,
    estimates: &[RegionMonthEstimate],
    prevalence: Prevalence,
) -> Result<Vec<RiskOutcome>, PipelineError> {
    let mu0: Vec<f64> = inputs
        .regions
        .par_iter()
        .map(|r| {
            initial_infected_fraction(r, &inputs.migrants, &inputs.larvae_sites, cfg.kernel_lambda_per_km, prevalence)
                .map(|e| e.mu0)
                .map_err(|source| PipelineError::Exposure { region_id: r.region_id.clone(), source })
        })
        .collect::<Result<_, _>>()?;
    estimates
        .par_iter()
        .map(|e| {
            let r = &inputs.regions[e.region_index];
            RiskOutcome::assess(
                &r.region_id,
                e.month,
                prevalence.get(),
                e.median_r0,
                e.q05_r0,
                e.q95_r0,
                mu0[e.region_index],
                r.population,
            )
            .map_err(|err: FinalSizeError| at_region_month(&r.region_id, e.month, err))
        })
        .collect()
}

/// The grid all surfaces share: the DEM's, else the regions' extent padded
/// by the kernel radius.
fn surface_template(cfg: &RunConfig, inputs: &Inputs) -> Result<Raster, PipelineError> {
    if let Some(dem) = &inputs.dem {
        return Ok(Raster { cells: vec![0.0; dem.cells.len()], ..dem.clone() });
    }
    let extent = Extent::around(inputs.regions.iter().map(|r| r.centroid), cfg.kde_radius_m)
        .expect("regions are nonempty");
    Ok(kde_raster(&[], &extent, cfg.kde_cellsize_m, cfg.kde_radius_m)?)
}

fn surface(cfg: &RunConfig, inputs: &Inputs, template: &Raster, points: &[WeightedPoint]) -> Result<Raster, PipelineError> {
    let r = kde_on_grid(points, template, cfg.kde_radius_m)?;
    match &inputs.dem {
        Some(dem) => Ok(apply_altitude_mask(&r, dem, cfg.altitude_min_m, cfg.altitude_max_m)?),
        None => Ok(r),
    }
}

/// Per-region annual point: the median over months of the monthly median
/// R0, kept when above the hotspot threshold.
pub fn annual_points(inputs: &Inputs, estimates: &[RegionMonthEstimate]) -> Vec<WeightedPoint> {
    let mut by_region: Vec<Vec<f64>> = vec![Vec::new(); inputs.regions.len()];
    for e in estimates {
        by_region[e.region_index].push(e.median_r0);
    }
    inputs
        .regions
        .iter()
        .zip(by_region)
        .filter_map(|(r, v)| median(&v).filter(|m| *m > HOTSPOT_THRESHOLD).map(|m| WeightedPoint { location: r.centroid, weight: m }))
        .collect()
}

/// Everything a run produces, before serialization.
#[derive(Debug, Clone)]
pub struct RunBundle {
    pub estimates: Vec<RegionMonthEstimate>,
    /// Per prevalence in config order, each in estimate order.
    pub outcomes: Vec<(Prevalence, Vec<RiskOutcome>)>,
    pub baseline: Prevalence,
    pub aggregate: AggregateTable,
    pub hotspots: Vec<Hotspot>,
    pub monthly_surfaces: Vec<(Month, Raster)>,
    pub annual_surface: Raster,
}

impl RunBundle {
    pub fn baseline_outcomes(&self) -> &[RiskOutcome] {
        self.outcomes.iter().find(|(p, _)| *p == self.baseline).map(|(_, o)| o.as_slice()).unwrap_or(&[])
    }

    /// All outcomes ordered by region, month, then prevalence.
    pub fn outcome_records(&self) -> Vec<OutcomeRecord> {
        let n = self.estimates.len();
        let mut out = Vec::with_capacity(n * self.outcomes.len());
        for k in 0..n {
            for (_, o) in &self.outcomes {
                out.push(OutcomeRecord::from(&o[k]));
            }
        }
        out
    }
}

/// Computes the full bundle for every configured prevalence.
pub fn compute(cfg: &RunConfig, inputs: &Inputs) -> Result<RunBundle, PipelineError> {
    let estimates = estimate_transmission(cfg, inputs)?;
    compute_from_estimates(cfg, inputs, estimates, &cfg.prevalence)
}

fn compute_from_estimates(
    cfg: &RunConfig,
    inputs: &Inputs,
    estimates: Vec<RegionMonthEstimate>,
    prevalences: &[Prevalence],
) -> Result<RunBundle, PipelineError> {
    let outcomes = prevalences
        .iter()
        .map(|p| assess(cfg, inputs, &estimates, *p).map(|o| (*p, o)))
        .collect::<Result<Vec<_>, _>>()?;
    let baseline = cfg.baseline_prevalence();
    let baseline = if prevalences.contains(&baseline) { baseline } else { prevalences[0] };
    let base: &[RiskOutcome] = &outcomes.iter().find(|(p, _)| *p == baseline).expect("baseline present").1;

    let records: Vec<OutcomeRecord> = base.iter().map(OutcomeRecord::from).collect();
    let aggregate = aggregate_outcomes(&records, &inputs.regions)?;
    let hotspots = filter_hotspots(base, &inputs.regions);

    let template = surface_template(cfg, inputs)?;
    let monthly_surfaces = cfg
        .months
        .par_iter()
        .map(|m| {
            let pts: Vec<WeightedPoint> = hotspots.iter().filter(|h| h.month == *m).map(Hotspot::weighted_point).collect();
            surface(cfg, inputs, &template, &pts).map(|r| (*m, r))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let annual_surface = surface(cfg, inputs, &template, &annual_points(inputs, &estimates))?;

    Ok(RunBundle { estimates, outcomes, baseline, aggregate, hotspots, monthly_surfaces, annual_surface })
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    File::create(path).map(BufWriter::new).map_err(io_at(path))
}

fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes the bundle's tables, GeoJSON and grids; returns file names in
/// write order.
pub fn write_bundle(bundle: &RunBundle, dir: &Path) -> Result<Vec<String>, PipelineError> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let mut names = Vec::new();
    let mut table = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> Result<(), TableError>| -> Result<(), PipelineError> {
        let path = dir.join(name);
        let mut w = create(&path)?;
        f(&mut w)?;
        w.flush().map_err(io_at(&path))?;
        names.push(name.to_string());
        Ok(())
    };
    let records = bundle.outcome_records();
    table("outcomes.csv", &|w| write_outcomes(w, &records))?;
    table("aggregate.csv", &|w| write_aggregate(w, &bundle.aggregate))?;
    for (name, metric) in [
        ("aggregate_r0_by_month.csv", AggregateMetric::MedianR0),
        ("aggregate_tau_by_month.csv", AggregateMetric::MedianTau),
        ("aggregate_infections_by_month.csv", AggregateMetric::MedianInfections),
    ] {
        table(name, &|w| write_aggregate_wide(w, &bundle.aggregate, metric))?;
    }

    let path = dir.join("hotspots.geojson");
    write_hotspots_geojson(&bundle.hotspots, &path).map_err(io_at(&path))?;
    names.push("hotspots.geojson".into());
    for (m, r) in &bundle.monthly_surfaces {
        let name = format!("risk_{}.asc", month_abbrev(*m));
        let path = dir.join(&name);
        write_ascii_grid(r, &path).map_err(io_at(&path))?;
        names.push(name);
    }
    let path = dir.join("risk_annual.asc");
    write_ascii_grid(&bundle.annual_surface, &path).map_err(io_at(&path))?;
    names.push("risk_annual.asc".into());
    Ok(names)
}

/// Writes `manifest.txt`: canonical config, seed, prevalences, and sha256
/// of every input and output file. Inputs are listed by file name, so the
/// manifest does not depend on where the data live.
pub fn write_manifest(
    cfg: &RunConfig,
    inputs: &Inputs,
    prevalences: &[Prevalence],
    dir: &Path,
    outputs: &[String],
) -> Result<PathBuf, PipelineError> {
    let path = dir.join("manifest.txt");
    let mut text = String::from("# resurgence run manifest\n");
    text.push_str(&format!("seed = {}\n", cfg.seed.map(|s| s.to_string()).unwrap_or_default()));
    text.push_str(&format!(
        "prevalences = {}\n",
        prevalences.iter().map(|p| fmt_sig6(p.get())).collect::<Vec<_>>().join(",")
    ));
    text.push_str(&format!("regions = {}\n", inputs.regions.len()));
    text.push_str("\n[config]\n");
    for (k, v) in cfg.canonical_entries().into_iter().filter(|(k, _)| !is_path_key(k)) {
        text.push_str(&format!("{k} = {v}\n"));
    }
    text.push_str("\n[inputs]\n");
    for (key, p) in &inputs.files {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        text.push_str(&format!("{}  {key}  {name}\n", sha256_file(p)?));
    }
    text.push_str("\n[outputs]\n");
    for name in outputs {
        text.push_str(&format!("{}  {name}\n", sha256_file(&dir.join(name))?));
    }
    fs::write(&path, text).map_err(io_at(&path))?;
    Ok(path)
}

/// What a completed run wrote.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub manifest: PathBuf,
    pub regions: usize,
    pub hotspots: usize,
    pub warnings: Vec<String>,
}

/// Loads, computes and writes a full run into `cfg.output_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport, PipelineError> {
    if cfg.seed.is_none() {
        return Err(PipelineError::MissingSeed);
    }
    let inputs = load_inputs(cfg)?;
    let bundle = with_threads(cfg.threads, || compute(cfg, &inputs))??;
    let dir = &cfg.output_dir;
    let files = write_bundle(&bundle, dir)?;
    let manifest = write_manifest(cfg, &inputs, &cfg.prevalence, dir, &files)?;
    Ok(RunReport {
        output_dir: dir.clone(),
        files,
        manifest,
        regions: inputs.regions.len(),
        hotspots: bundle.hotspots.len(),
        warnings: inputs.warnings,
    })
}

/// Outcomes for several prevalences from one set of R0 draws.
#[derive(Debug, Clone)]
pub struct SensitivityRun {
    pub bundle: RunBundle,
    pub table: SensitivityTable,
}

/// Runs every prevalence on the same R0 estimates; only exposure changes.
pub fn sensitivity(cfg: &RunConfig, inputs: &Inputs, prevalences: &[Prevalence]) -> Result<SensitivityRun, PipelineError> {
    if prevalences.len() < 2 {
        return Err(TableError::TooFewPrevalences(prevalences.len()).into());
    }
    let estimates = estimate_transmission(cfg, inputs)?;
    let bundle = compute_from_estimates(cfg, inputs, estimates, prevalences)?;
    let runs: Vec<(f64, Vec<OutcomeRecord>)> = bundle
        .outcomes
        .iter()
        .map(|(p, o)| (p.get(), o.iter().map(OutcomeRecord::from).collect()))
        .collect();
    let table = SensitivityTable::from_runs(&runs)?;
    Ok(SensitivityRun { bundle, table })
}

/// Writes `sensitivity.csv` and one aggregate per prevalence next to the
/// usual bundle, then the manifest.
pub fn run_sensitivity(cfg: &RunConfig, prevalences: &[Prevalence]) -> Result<RunReport, PipelineError> {
    if cfg.seed.is_none() {
        return Err(PipelineError::MissingSeed);
    }
    let inputs = load_inputs(cfg)?;
    let run = with_threads(cfg.threads, || sensitivity(cfg, &inputs, prevalences))??;
    let dir = &cfg.output_dir;
    let mut files = write_bundle(&run.bundle, dir)?;

    let path = dir.join("sensitivity.csv");
    let mut w = create(&path)?;
    write_sensitivity(&mut w, &run.table)?;
    w.flush().map_err(io_at(&path))?;
    files.push("sensitivity.csv".into());

    for (p, outcomes) in &run.bundle.outcomes {
        let recs: Vec<OutcomeRecord> = outcomes.iter().map(OutcomeRecord::from).collect();
        let agg = aggregate_outcomes(&recs, &inputs.regions)?;
        let name = format!("aggregate_p{}.csv", fmt_sig6(p.get()));
        let path = dir.join(&name);
        let mut w = create(&path)?;
        write_aggregate(&mut w, &agg)?;
        w.flush().map_err(io_at(&path))?;
        files.push(name);
    }
    let manifest = write_manifest(cfg, &inputs, prevalences, dir, &files)?;
    Ok(RunReport {
        output_dir: dir.clone(),
        files,
        manifest,
        regions: inputs.regions.len(),
        hotspots: run.bundle.hotspots.len(),
        warnings: inputs.warnings,
    })
}
