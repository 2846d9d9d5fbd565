use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use resurgence_core::config::{self, RunConfig};
use resurgence_core::exposure::{prevalence_scenarios, Prevalence, BASELINE_PREVALENCE};
use resurgence_core::finalsize::solve_attack_probability;
use resurgence_core::ingest::parse_regions;
use resurgence_core::oracle::simulate_attack_fraction;
use resurgence_core::pipeline::{self, PipelineError};
use resurgence_core::synth::{self, SynthSpec};
use resurgence_core::tables::{
    aggregate_outcomes, read_outcomes, write_aggregate, write_aggregate_wide, AggregateMetric, OutcomeRecord,
};

#[derive(Parser)]
#[command(name = "resurgence", version, about = "Spatial malaria resurgence risk engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write the output bundle.
    Run(RunArgs),
    /// Re-run at several prevalences on the same R0 draws.
    Sensitivity {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated prevalences; defaults to the config list when it
        /// has two or more values, else 0.05,0.1,0.2.
        #[arg(long, value_delimiter = ',')]
        prevalence: Vec<f64>,
    },
    /// Median R0, tau and infections by month and region type from an outcomes file.
    Aggregate {
        #[arg(long)]
        outcomes: PathBuf,
        #[arg(long)]
        regions: PathBuf,
        /// Only regions of this year.
        #[arg(long)]
        year: Option<i32>,
        /// Prevalence rows to aggregate; defaults to 0.1 if present, else the first found.
        #[arg(long)]
        prevalence: Option<f64>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write a synthetic study area with a ready-to-run `run.conf`.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        regions: usize,
        #[arg(long, default_value_t = 6)]
        stations: usize,
        #[arg(long, default_value_t = 24)]
        larvae_sites: usize,
        #[arg(long, default_value_t = 16)]
        migrant_sites: usize,
        #[arg(long, default_value_t = 2012)]
        year: i32,
    },
    /// Stochastic epidemic check of the final-size solver.
    Oracle {
        #[arg(long)]
        r0: f64,
        #[arg(long)]
        mu0: f64,
        #[arg(long, default_value_t = 100_000)]
        pop: u64,
        #[arg(long, default_value_t = 200)]
        runs: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Parse and validate every configured input without computing.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    seed: u64,
    /// Output directory (config key `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; does not change results.
    #[arg(long)]
    threads: Option<usize>,
    /// `delayed` (default) or `basic`.
    #[arg(long)]
    capacity_model: Option<String>,
}

impl ConfigArgs {
    fn load(&self, extra: Vec<String>) -> Result<RunConfig> {
        let mut sets = self.set.clone();
        sets.extend(extra);
        Ok(config::load(self.config.as_deref(), &sets)?)
    }
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut extra = vec![format!("seed={}", self.seed)];
        if let Some(out) = &self.out {
            extra.push(format!("output_dir={}", out.display()));
        }
        if let Some(t) = self.threads {
            extra.push(format!("threads={t}"));
        }
        if let Some(m) = &self.capacity_model {
            extra.push(format!("capacity_model={m}"));
        }
        self.config.load(extra)
    }
}

fn report(r: &pipeline::RunReport) {
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} regions, {} hotspot region-months; wrote {} files to {}",
        r.regions,
        r.hotspots,
        r.files.len() + 1,
        r.output_dir.display()
    );
    println!("manifest: {}", r.manifest.display());
}

fn sensitivity_prevalences(cfg: &RunConfig, flag: &[f64]) -> Result<Vec<Prevalence>> {
    let ps = if !flag.is_empty() {
        flag.iter().map(|p| Prevalence::new(*p)).collect::<Result<Vec<_>, _>>()?
    } else if cfg.prevalence.len() >= 2 {
        cfg.prevalence.clone()
    } else {
        prevalence_scenarios().to_vec()
    };
    if ps.len() < 2 {
        bail!("sensitivity needs at least two prevalence values");
    }
    Ok(ps)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn aggregate(outcomes: &Path, regions: &Path, year: Option<i32>, prevalence: Option<f64>, out: &Path) -> Result<()> {
    let rows = read_outcomes(File::open(outcomes).with_context(|| format!("opening {}", outcomes.display()))?)
        .with_context(|| format!("reading {}", outcomes.display()))?;
    let regions: Vec<_> = parse_regions(regions)?
        .records
        .into_iter()
        .filter(|r| year.is_none_or(|y| r.year == y))
        .collect();
    let chosen = match prevalence {
        Some(p) => p,
        None if rows.iter().any(|r| r.prevalence == BASELINE_PREVALENCE) => BASELINE_PREVALENCE,
        None => rows.first().map(|r| r.prevalence).unwrap_or(BASELINE_PREVALENCE),
    };
    let selected: Vec<OutcomeRecord> = rows.into_iter().filter(|r| r.prevalence == chosen).collect();
    if selected.is_empty() {
        bail!("no outcome rows at prevalence {chosen}");
    }
    let table = aggregate_outcomes(&selected, &regions)?;
    fs::create_dir_all(out)?;
    write_file(&out.join("aggregate.csv"), |w| Ok(write_aggregate(w, &table)?))?;
    for (name, metric) in [
        ("aggregate_r0_by_month.csv", AggregateMetric::MedianR0),
        ("aggregate_tau_by_month.csv", AggregateMetric::MedianTau),
        ("aggregate_infections_by_month.csv", AggregateMetric::MedianInfections),
    ] {
        write_file(&out.join(name), |w| Ok(write_aggregate_wide(w, &table, metric)?))?;
    }
    println!("aggregated {} rows at prevalence {chosen} into {}", selected.len(), out.display());
    Ok(())
}

fn validate(cfg: &RunConfig) -> Result<bool> {
    match pipeline::load_inputs(cfg) {
        Ok(inputs) => {
            for w in &inputs.warnings {
                println!("warning: {w}");
            }
            println!(
                "ok: {} regions for {}, {} stations, {} larvae sites, {} migrant rows, {} trap records, {} m overrides{}",
                inputs.regions.len(),
                cfg.year,
                inputs.stations.len(),
                inputs.larvae_sites.len(),
                inputs.migrants.len(),
                inputs.traps.len(),
                inputs.overrides.len(),
                if inputs.dem.is_some() { ", DEM" } else { "" }
            );
            Ok(true)
        }
        Err(e @ (PipelineError::Ingest(_) | PipelineError::Dem { .. } | PipelineError::NoRegions(_))) => {
            println!("{e}");
            Ok(false)
        }
        Err(e) => Err(e.into()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            report(&pipeline::run_pipeline(&cfg)?);
        }
        Command::Sensitivity { run, prevalence } => {
            let cfg = run.load()?;
            let ps = sensitivity_prevalences(&cfg, &prevalence)?;
            report(&pipeline::run_sensitivity(&cfg, &ps)?);
        }
        Command::Aggregate { outcomes, regions, year, prevalence, out } => {
            aggregate(&outcomes, &regions, year, prevalence, &out)?;
        }
        Command::Synth { out, seed, regions, stations, larvae_sites, migrant_sites, year } => {
            let spec = SynthSpec {
                n_regions: regions,
                n_stations: stations,
                n_larvae_sites: larvae_sites,
                n_migrant_sites: migrant_sites,
                year,
                ..SynthSpec::default()
            };
            let ds = synth::generate(&spec, seed)?;
            synth::write_dataset(&ds, &out)?;
            println!("wrote synthetic dataset ({} regions) to {}", ds.regions.len(), out.display());
            println!("run it with: resurgence run --config {} --seed 1", out.join("run.conf").display());
        }
        Command::Oracle { r0, mu0, pop, runs, seed } => {
            let tau = solve_attack_probability(r0, mu0)?;
            let res = pipeline::with_threads(None, || simulate_attack_fraction(r0, mu0, pop, runs, seed))??;
            println!("r0,mu0,population,runs,seed,mean_attack_fraction,min_attack_fraction,max_attack_fraction,final_size_tau,abs_diff");
            println!(
                "{r0},{mu0},{pop},{runs},{seed},{:.6},{:.6},{:.6},{:.6},{:.6}",
                res.mean_attack_fraction,
                res.min(),
                res.max(),
                tau,
                (res.mean_attack_fraction - tau).abs()
            );
        }
        Command::Validate { config } => {
            let cfg = config.load(Vec::new())?;
            return validate(&cfg);
        }
    }
    Ok(true)
}
