//! Run configuration: a flat `key = value` text format layered as
//! built-in defaults, then a config file, then command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::Month;
use thiserror::Error;

use crate::climate::in_season;
use crate::entomology::{Distribution, ParamSpecs};
use crate::exposure::{Prevalence, BASELINE_PREVALENCE};
use crate::model::{month_abbrev, parse_month};
use crate::transmission::CapacityModel;

/// The shipped defaults, parsed before any user file.
pub const DEFAULTS: &str = include_str!("../config/defaults.conf");

const PATH_KEYS: [&str; 8] = ["regions", "stations", "larvae", "migrants", "traps", "m_overrides", "dem", "output_dir"];

/// Whether `key` names a file or directory.
pub fn is_path_key(key: &str) -> bool {
    PATH_KEYS.contains(&key)
}

/// Every recognized key, in canonical order.
pub const KEYS: [&str; 27] = [
    "regions",
    "stations",
    "larvae",
    "migrants",
    "traps",
    "m_overrides",
    "dem",
    "year",
    "months",
    "seed",
    "n_samples",
    "capacity_model",
    "idw_power",
    "kernel_lambda_per_km",
    "prevalence",
    "kappa_expansion",
    "param.alpha",
    "param.b",
    "param.r",
    "param.v",
    "c_transmission",
    "kde_radius_m",
    "kde_cellsize_m",
    "altitude_min_m",
    "altitude_max_m",
    "output_dir",
    "threads",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{source_name}:{line}: expected `key = value`, got `{text}`")]
    Syntax { source_name: String, line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { key: key.to_string(), reason: reason.into() }
}

/// Input file locations. Optional inputs may be absent.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPaths {
    pub regions: PathBuf,
    pub stations: PathBuf,
    pub larvae: PathBuf,
    pub migrants: PathBuf,
    pub traps: Option<PathBuf>,
    pub m_overrides: Option<PathBuf>,
    pub dem: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inputs: InputPaths,
    pub year: i32,
    /// In season, unique, in calendar order.
    pub months: Vec<Month>,
    pub seed: Option<u64>,
    pub n_samples: usize,
    pub capacity_model: CapacityModel,
    pub idw_power: f64,
    pub kernel_lambda_per_km: f64,
    /// Nonempty, unique, in the order given.
    pub prevalence: Vec<Prevalence>,
    pub kappa_expansion: f64,
    pub params: ParamSpecs,
    pub kde_radius_m: f64,
    pub kde_cellsize_m: f64,
    pub altitude_min_m: f64,
    pub altitude_max_m: f64,
    pub output_dir: PathBuf,
    /// Worker threads; `None` defers to the environment. Never affects output.
    pub threads: Option<usize>,
}

impl RunConfig {
    /// The prevalence used for hotspots and aggregate tables.
    pub fn baseline_prevalence(&self) -> Prevalence {
        self.prevalence
            .iter()
            .copied()
            .find(|p| p.get() == BASELINE_PREVALENCE)
            .unwrap_or(self.prevalence[0])
    }

    /// Key-value pairs in canonical order, re-parseable by [`ConfigBuilder`].
    /// `output_dir` and `threads` are omitted since they never change results.
    pub fn canonical_entries(&self) -> Vec<(&'static str, String)> {
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        vec![
            ("regions", self.inputs.regions.display().to_string()),
            ("stations", self.inputs.stations.display().to_string()),
            ("larvae", self.inputs.larvae.display().to_string()),
            ("migrants", self.inputs.migrants.display().to_string()),
            ("traps", opt_path(&self.inputs.traps)),
            ("m_overrides", opt_path(&self.inputs.m_overrides)),
            ("dem", opt_path(&self.inputs.dem)),
            ("year", self.year.to_string()),
            ("months", self.months.iter().map(|m| month_abbrev(*m)).collect::<Vec<_>>().join(",")),
            ("seed", self.seed.map(|s| s.to_string()).unwrap_or_default()),
            ("n_samples", self.n_samples.to_string()),
            ("capacity_model", self.capacity_model.to_string()),
            ("idw_power", self.idw_power.to_string()),
            ("kernel_lambda_per_km", self.kernel_lambda_per_km.to_string()),
            ("prevalence", self.prevalence.iter().map(|p| p.get().to_string()).collect::<Vec<_>>().join(",")),
            ("kappa_expansion", self.kappa_expansion.to_string()),
            ("param.alpha", self.params.alpha.to_string()),
            ("param.b", self.params.b.to_string()),
            ("param.r", self.params.r.to_string()),
            ("param.v", self.params.v.to_string()),
            ("c_transmission", self.params.c.to_string()),
            ("kde_radius_m", self.kde_radius_m.to_string()),
            ("kde_cellsize_m", self.kde_cellsize_m.to_string()),
            ("altitude_min_m", self.altitude_min_m.to_string()),
            ("altitude_max_m", self.altitude_max_m.to_string()),
        ]
    }

    pub fn canonical_text(&self) -> String {
        self.canonical_entries()
            .iter()
            .map(|(k, v)| if v.is_empty() { format!("{k} =\n") } else { format!("{k} = {v}\n") })
            .collect()
    }
}

/// Splits config text into `(line, key, value)` triples.
pub fn parse_entries(text: &str, source_name: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { source_name: source_name.to_string(), line: i + 1, text: line.to_string() });
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax { source_name: source_name.to_string(), line: i + 1, text: line.to_string() });
        }
        out.push((i + 1, key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Accumulates layers; later layers win key by key.
#[derive(Debug, Clone)]
pub struct ConfigBuilder {
    values: BTreeMap<String, String>,
}

impl Default for ConfigBuilder {
    fn default() -> Self {
        let mut b = Self { values: BTreeMap::new() };
        b.apply_text(DEFAULTS, "defaults", None).expect("shipped defaults parse");
        b
    }
}

impl ConfigBuilder {
    /// Applies a layer. Relative path values are joined onto `base_dir`.
    pub fn apply_text(&mut self, text: &str, source_name: &str, base_dir: Option<&Path>) -> Result<&mut Self, ConfigError> {
        for (_, key, value) in parse_entries(text, source_name)? {
            self.set_resolved(&key, &value, base_dir)?;
        }
        Ok(self)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<&mut Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf);
        self.apply_text(&text, &path.display().to_string(), base.as_deref())
    }

    /// A single override; paths are taken as given.
    pub fn set(&mut self, key: &str, value: &str) -> Result<&mut Self, ConfigError> {
        self.set_resolved(key, value, None)
    }

    /// Parses `key=value`.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<&mut Self, ConfigError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { source_name: "--set".into(), line: 0, text: assignment.to_string() })?;
        self.set(k.trim(), v.trim())
    }

    fn set_resolved(&mut self, key: &str, value: &str, base_dir: Option<&Path>) -> Result<&mut Self, ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        let value = match base_dir {
            Some(base) if PATH_KEYS.contains(&key) && !value.is_empty() && Path::new(value).is_relative() => {
                base.join(value).display().to_string()
            }
            _ => value.to_string(),
        };
        self.values.insert(key.to_string(), value);
        Ok(self)
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn required_path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        self.optional_path(key).ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    fn optional_path(&self, key: &str) -> Option<PathBuf> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    fn number<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key);
        if v.is_empty() {
            return Err(ConfigError::Missing(key.to_string()));
        }
        v.parse::<T>().map_err(|e| bad(key, format!("`{v}`: {e}")))
    }

    fn positive(&self, key: &str) -> Result<f64, ConfigError> {
        let x: f64 = self.number(key)?;
        if x > 0.0 && x.is_finite() {
            Ok(x)
        } else {
            Err(bad(key, format!("must be positive, got {x}")))
        }
    }

    fn distribution(&self, key: &str) -> Result<Distribution, ConfigError> {
        self.raw(key).parse().map_err(|e: String| bad(key, e))
    }

    pub fn build(&self) -> Result<RunConfig, ConfigError> {
        let inputs = InputPaths {
            regions: self.required_path("regions")?,
            stations: self.required_path("stations")?,
            larvae: self.required_path("larvae")?,
            migrants: self.required_path("migrants")?,
            traps: self.optional_path("traps"),
            m_overrides: self.optional_path("m_overrides"),
            dem: self.optional_path("dem"),
        };

        let mut months = Vec::new();
        for tok in self.raw("months").split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let m = parse_month(tok).ok_or_else(|| bad("months", format!("`{tok}` is not a month")))?;
            if !in_season(m) {
                return Err(bad("months", format!("{} is outside April-November", month_abbrev(m))));
            }
            if !months.contains(&m) {
                months.push(m);
            }
        }
        if months.is_empty() {
            return Err(bad("months", "at least one month is required"));
        }
        months.sort_by_key(|m| m.number_from_month());

        let seed = match self.raw("seed") {
            "" => None,
            s => Some(s.parse::<u64>().map_err(|e| bad("seed", format!("`{s}`: {e}")))?),
        };

        let n_samples: usize = self.number("n_samples")?;
        if n_samples == 0 {
            return Err(bad("n_samples", "must be at least 1"));
        }

        let mut prevalence: Vec<Prevalence> = Vec::new();
        for tok in self.raw("prevalence").split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let x: f64 = tok.parse().map_err(|e| bad("prevalence", format!("`{tok}`: {e}")))?;
            let p = Prevalence::new(x).map_err(|e| bad("prevalence", e.to_string()))?;
            if !prevalence.contains(&p) {
                prevalence.push(p);
            }
        }
        if prevalence.is_empty() {
            return Err(bad("prevalence", "at least one value is required"));
        }

        let params = ParamSpecs {
            alpha: self.distribution("param.alpha")?,
            b: self.distribution("param.b")?,
            r: self.distribution("param.r")?,
            v: self.distribution("param.v")?,
            c: self.number("c_transmission")?,
        };
        params.validate().map_err(|e| bad("param", e.to_string()))?;

        let capacity_model: CapacityModel = self
            .raw("capacity_model")
            .parse()
            .map_err(|e: String| bad("capacity_model", e))?;

        let kde_radius_m = self.positive("kde_radius_m")?;
        let kde_cellsize_m = self.positive("kde_cellsize_m")?;
        if kde_cellsize_m > kde_radius_m / 2.0 {
            return Err(bad("kde_cellsize_m", "must not exceed half of kde_radius_m"));
        }
        let altitude_min_m: f64 = self.number("altitude_min_m")?;
        let altitude_max_m: f64 = self.number("altitude_max_m")?;
        if !(altitude_min_m <= altitude_max_m) {
            return Err(bad("altitude_max_m", "must be at least altitude_min_m"));
        }

        let threads = match self.raw("threads") {
            "" => None,
            s => match s.parse::<usize>() {
                Ok(n) if n > 0 => Some(n),
                _ => return Err(bad("threads", format!("`{s}` is not a positive integer"))),
            },
        };

        Ok(RunConfig {
            inputs,
            year: self.number("year")?,
            months,
            seed,
            n_samples,
            capacity_model,
            idw_power: self.positive("idw_power")?,
            kernel_lambda_per_km: self.positive("kernel_lambda_per_km")?,
            prevalence,
            kappa_expansion: self.positive("kappa_expansion")?,
            params,
            kde_radius_m,
            kde_cellsize_m,
            altitude_min_m,
            altitude_max_m,
            output_dir: self.optional_path("output_dir").unwrap_or_else(|| PathBuf::from("out")),
            threads,
        })
    }
}

/// Defaults, then `file` if given, then each `key=value` in `overrides`.
pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut b = ConfigBuilder::default();
    if let Some(f) = file {
        b.apply_file(f)?;
    }
    for o in overrides {
        b.set_assignment(o)?;
    }
    b.build()
}
