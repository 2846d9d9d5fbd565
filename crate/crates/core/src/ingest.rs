//! CSV readers and writers for the field, climate and census inputs.
//!
//! Every reader insists on the exact header for its schema and collects all
//! row-level defects before failing, so a single pass over a messy export
//! reports everything that needs fixing.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use chrono::{Month, NaiveDate};
use thiserror::Error;

use crate::model::{
    month_abbrev, parse_month, validate_regions, ProjectedPoint, Region, RegionClass,
};

pub const REGIONS_HEADER: &[&str] = &[
    "region_id",
    "year",
    "region_class",
    "centroid_x_m",
    "centroid_y_m",
    "altitude_m",
    "population",
];
pub const STATIONS_HEADER: &[&str] = &["station_id", "x_m", "y_m", "date", "mean_temp_c"];
pub const LARVAE_HEADER: &[&str] = &["site_id", "x_m", "y_m", "date", "positive", "larvae_count"];
pub const MIGRANTS_HEADER: &[&str] =
    &["site_id", "x_m", "y_m", "period", "migrant_count", "region_id"];
pub const TRAPS_HEADER: &[&str] = &["trap_id", "region_id", "date", "anopheles_female_count"];
pub const M_OVERRIDES_HEADER: &[&str] = &["region_id", "month", "m"];

/// Plausible range for a daily mean air temperature.
pub const TEMPERATURE_RANGE_C: (f64, f64) = (-30.0, 60.0);

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Daily mean temperatures recorded at one meteorological station.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSeries {
    pub station_id: String,
    pub location: ProjectedPoint,
    pub readings: BTreeMap<NaiveDate, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LarvaeObservation {
    pub date: NaiveDate,
    pub positive: bool,
    pub larvae_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LarvaeSite {
    pub site_id: String,
    pub location: ProjectedPoint,
    pub observations: Vec<LarvaeObservation>,
}

impl LarvaeSite {
    /// Whether the site was positive for Anopheles larvae at least once.
    pub fn ever_positive(&self) -> bool {
        self.observations.iter().any(|o| o.positive)
    }
}

/// One of the three migrant monitoring rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MonitoringPeriod(u8);

impl MonitoringPeriod {
    pub const ALL: [MonitoringPeriod; 3] = [MonitoringPeriod(1), MonitoringPeriod(2), MonitoringPeriod(3)];

    pub fn new(k: u8) -> Option<Self> {
        (1..=3).contains(&k).then_some(Self(k))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MigrantObservation {
    pub site_id: String,
    pub location: ProjectedPoint,
    pub period: MonitoringPeriod,
    pub migrant_count: u64,
    /// Region the site's residents are attributed to.
    pub region_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapRecord {
    pub trap_id: String,
    pub region_id: String,
    pub date: NaiveDate,
    pub anopheles_female_count: u64,
}

/// A directly supplied mosquito-to-human ratio. `month == None` applies to
/// every month of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct MosquitoRatioOverride {
    pub region_id: String,
    pub month: Option<Month>,
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IssueKind {
    MissingColumn(String),
    UnexpectedColumn(String),
    ColumnOrder,
    BadNumber { field: String, value: String, reason: String },
    DuplicateId(String),
    Violation(String),
    Malformed(String),
}

/// A single defect, tied to a 1-based file line when it came from a row.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub line: Option<u64>,
    pub kind: IssueKind,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        match &self.kind {
            IssueKind::MissingColumn(c) => write!(f, "missing column {c:?}"),
            IssueKind::UnexpectedColumn(c) => write!(f, "unexpected column {c:?}"),
            IssueKind::ColumnOrder => f.write_str("columns out of order"),
            IssueKind::BadNumber { field, value, reason } => {
                write!(f, "bad value {value:?} for {field}: {reason}")
            }
            IssueKind::DuplicateId(id) => write!(f, "duplicate id {id}"),
            IssueKind::Violation(msg) => f.write_str(msg),
            IssueKind::Malformed(msg) => write!(f, "malformed row: {msg}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: io::Error,
    },
    #[error("{file}: {} defect(s)\n{}", issues.len(), format_issues(issues))]
    Invalid { file: String, issues: Vec<Issue> },
}

impl IngestError {
    pub fn issues(&self) -> &[Issue] {
        match self {
            IngestError::Invalid { issues, .. } => issues,
            IngestError::Io { .. } => &[],
        }
    }
}

fn format_issues(issues: &[Issue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

/// Records from a successfully parsed file plus non-fatal notes.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub warnings: Vec<String>,
}

impl<T> Parsed<T> {
    fn new(records: Vec<T>) -> Self {
        Self { records, warnings: Vec::new() }
    }
}

fn check_header(actual: &[String], expected: &[&str]) -> Vec<Issue> {
    if actual.iter().map(String::as_str).eq(expected.iter().copied()) {
        return Vec::new();
    }
    let mut issues: Vec<Issue> = expected
        .iter()
        .filter(|e| !actual.iter().any(|a| a == *e))
        .map(|e| Issue { line: Some(1), kind: IssueKind::MissingColumn(e.to_string()) })
        .collect();
    issues.extend(
        actual
            .iter()
            .filter(|a| !expected.contains(&a.as_str()))
            .map(|a| Issue { line: Some(1), kind: IssueKind::UnexpectedColumn(a.clone()) }),
    );
    if issues.is_empty() {
        issues.push(Issue { line: Some(1), kind: IssueKind::ColumnOrder });
    }
    issues
}

/// Field accessors that record a defect and yield `None` on failure.
struct Row<'a> {
    record: &'a csv::StringRecord,
    header: &'a [&'a str],
    line: u64,
    issues: &'a mut Vec<Issue>,
}

impl Row<'_> {
    fn raw(&self, field: &str) -> &str {
        let idx = self.header.iter().position(|h| *h == field).expect("field in schema");
        self.record.get(idx).unwrap_or("")
    }

    fn bad(&mut self, field: &str, reason: impl Into<String>) {
        let value = self.raw(field).to_string();
        self.issues.push(Issue {
            line: Some(self.line),
            kind: IssueKind::BadNumber { field: field.to_string(), value, reason: reason.into() },
        });
    }

    fn violation(&mut self, msg: impl Into<String>) {
        self.issues.push(Issue { line: Some(self.line), kind: IssueKind::Violation(msg.into()) });
    }

    fn text(&mut self, field: &str) -> Option<String> {
        let v = self.raw(field);
        if v.is_empty() {
            self.violation(format!("{field} must not be empty"));
            None
        } else {
            Some(v.to_string())
        }
    }

    fn real(&mut self, field: &str) -> Option<f64> {
        match self.raw(field).parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            Ok(_) => {
                self.bad(field, "not finite");
                None
            }
            Err(e) => {
                self.bad(field, e.to_string());
                None
            }
        }
    }

    fn count(&mut self, field: &str) -> Option<u64> {
        match self.raw(field).parse::<u64>() {
            Ok(v) => Some(v),
            Err(e) => {
                self.bad(field, e.to_string());
                None
            }
        }
    }

    fn date(&mut self, field: &str) -> Option<NaiveDate> {
        match NaiveDate::parse_from_str(self.raw(field), DATE_FORMAT) {
            Ok(d) => Some(d),
            Err(e) => {
                self.bad(field, format!("expected YYYY-MM-DD ({e})"));
                None
            }
        }
    }

    fn point(&mut self, x: &str, y: &str) -> Option<ProjectedPoint> {
        let x = self.real(x);
        let y = self.real(y);
        Some(ProjectedPoint::new(x?, y?))
    }
}

/// Reads every data row, handing each to `parse_row`. Returns the parsed
/// rows with their line numbers and the accumulated issues.
fn read_table<R: Read, T>(
    file: &str,
    reader: R,
    header: &[&str],
    mut parse_row: impl FnMut(&mut Row<'_>) -> Option<T>,
) -> Result<(Vec<(u64, T)>, Vec<Issue>), IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let actual: Vec<String> = match rdr.headers() {
        Ok(h) => h.iter().map(str::to_string).collect(),
        Err(e) => return Err(csv_failure(file, e)),
    };
    let header_issues = check_header(&actual, header);
    if !header_issues.is_empty() {
        return Err(IngestError::Invalid { file: file.to_string(), issues: header_issues });
    }

    let mut issues = Vec::new();
    let mut rows = Vec::new();
    for result in rdr.records() {
        match result {
            Ok(record) => {
                let line = record.position().map_or(0, |p| p.line());
                let mut row = Row { record: &record, header, line, issues: &mut issues };
                if let Some(t) = parse_row(&mut row) {
                    rows.push((line, t));
                }
            }
            Err(e) => {
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(csv_failure(file, e));
                }
                let line = e.position().map(|p| p.line());
                issues.push(Issue { line, kind: IssueKind::Malformed(e.to_string()) });
            }
        }
    }
    Ok((rows, issues))
}

fn csv_failure(file: &str, e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => IngestError::Io { file: file.to_string(), source },
        other => IngestError::Invalid {
            file: file.to_string(),
            issues: vec![Issue { line, kind: IssueKind::Malformed(format!("{other:?}")) }],
        },
    }
}

fn finish<T>(file: &str, issues: Vec<Issue>, records: Vec<T>) -> Result<Parsed<T>, IngestError> {
    if issues.is_empty() {
        let mut parsed = Parsed::new(records);
        if parsed.records.is_empty() {
            parsed.warnings.push(format!("{file}: no data rows"));
        }
        Ok(parsed)
    } else {
        let mut issues = issues;
        issues.sort_by_key(|i| i.line.unwrap_or(0));
        Err(IngestError::Invalid { file: file.to_string(), issues })
    }
}

fn open(path: &Path) -> Result<(String, File), IngestError> {
    let label = path.display().to_string();
    let f = File::open(path).map_err(|source| IngestError::Io { file: label.clone(), source })?;
    Ok((label, f))
}

pub fn read_regions<R: Read>(file: &str, reader: R) -> Result<Parsed<Region>, IngestError> {
    let (rows, mut issues) = read_table(file, reader, REGIONS_HEADER, |row| {
        let region_id = row.text("region_id");
        let year = match row.raw("year").parse::<i32>() {
            Ok(y) => Some(y),
            Err(e) => {
                row.bad("year", e.to_string());
                None
            }
        };
        let region_class = match row.raw("region_class").parse::<RegionClass>() {
            Ok(c) => Some(c),
            Err(e) => {
                row.violation(e);
                None
            }
        };
        let centroid = row.point("centroid_x_m", "centroid_y_m");
        let altitude = row.real("altitude_m");
        let population = row.count("population");
        Some(Region {
            region_id: region_id?,
            year: year?,
            region_class: region_class?,
            centroid: centroid?,
            altitude: altitude?,
            population: population?,
            nearest_larvae_site: None,
        })
    })?;
    let (lines, regions): (Vec<u64>, Vec<Region>) = rows.into_iter().unzip();
    for (idx, v) in validate_regions(&regions) {
        let kind = match v {
            crate::model::RegionViolation::DuplicateId(id) => IssueKind::DuplicateId(id),
            other => IssueKind::Violation(other.to_string()),
        };
        issues.push(Issue { line: Some(lines[idx]), kind });
    }
    finish(file, issues, regions)
}

pub fn parse_regions(path: &Path) -> Result<Parsed<Region>, IngestError> {
    let (label, f) = open(path)?;
    read_regions(&label, f)
}

pub fn read_stations<R: Read>(file: &str, reader: R) -> Result<Parsed<StationSeries>, IngestError> {
    let (rows, mut issues) = read_table(file, reader, STATIONS_HEADER, |row| {
        let id = row.text("station_id");
        let loc = row.point("x_m", "y_m");
        let date = row.date("date");
        let temp = row.real("mean_temp_c").and_then(|t| {
            let (lo, hi) = TEMPERATURE_RANGE_C;
            if (lo..=hi).contains(&t) {
                Some(t)
            } else {
                row.bad("mean_temp_c", format!("outside [{lo}, {hi}] °C"));
                None
            }
        });
        Some((id?, loc?, date?, temp?))
    })?;

    let mut series: Vec<StationSeries> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (line, (id, loc, date, temp)) in rows {
        let i = *index.entry(id.clone()).or_insert_with(|| {
            series.push(StationSeries { station_id: id.clone(), location: loc, readings: BTreeMap::new() });
            series.len() - 1
        });
        let s = &mut series[i];
        if s.location != loc {
            issues.push(Issue {
                line: Some(line),
                kind: IssueKind::Violation(format!("station {id} changes location")),
            });
        }
        if s.readings.insert(date, temp).is_some() {
            issues.push(Issue {
                line: Some(line),
                kind: IssueKind::DuplicateId(format!("{id}@{}", date.format(DATE_FORMAT))),
            });
        }
    }
    finish(file, issues, series)
}

pub fn parse_stations(path: &Path) -> Result<Parsed<StationSeries>, IngestError> {
    let (label, f) = open(path)?;
    read_stations(&label, f)
}

pub fn read_larvae_sites<R: Read>(file: &str, reader: R) -> Result<Parsed<LarvaeSite>, IngestError> {
    let (rows, mut issues) = read_table(file, reader, LARVAE_HEADER, |row| {
        let id = row.text("site_id");
        let loc = row.point("x_m", "y_m");
        let date = row.date("date");
        let positive = match row.raw("positive") {
            "0" => Some(false),
            "1" => Some(true),
            _ => {
                row.bad("positive", "expected 0 or 1");
                None
            }
        };
        let count = row.count("larvae_count");
        if let (Some(false), Some(c)) = (positive, count) {
            if c > 0 {
                row.violation(format!("larvae_count {c} > 0 but positive = 0"));
                return None;
            }
        }
        Some((
            id?,
            loc?,
            LarvaeObservation { date: date?, positive: positive?, larvae_count: count? },
        ))
    })?;

    let mut sites: Vec<LarvaeSite> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (line, (id, loc, obs)) in rows {
        let i = *index.entry(id.clone()).or_insert_with(|| {
            sites.push(LarvaeSite { site_id: id.clone(), location: loc, observations: Vec::new() });
            sites.len() - 1
        });
        let site = &mut sites[i];
        if site.location != loc {
            issues.push(Issue {
                line: Some(line),
                kind: IssueKind::Violation(format!("site {id} changes location")),
            });
        }
        if site.observations.iter().any(|o| o.date == obs.date) {
            issues.push(Issue {
                line: Some(line),
                kind: IssueKind::DuplicateId(format!("{id}@{}", obs.date.format(DATE_FORMAT))),
            });
        }
        site.observations.push(obs);
    }
    finish(file, issues, sites)
}

pub fn parse_larvae_sites(path: &Path) -> Result<Parsed<LarvaeSite>, IngestError> {
    let (label, f) = open(path)?;
    read_larvae_sites(&label, f)
}

pub fn read_migrant_observations<R: Read>(
    file: &str,
    reader: R,
) -> Result<Parsed<MigrantObservation>, IngestError> {
    let (rows, mut issues) = read_table(file, reader, MIGRANTS_HEADER, |row| {
        let site_id = row.text("site_id");
        let location = row.point("x_m", "y_m");
        let period = match row.raw("period").parse::<u8>().ok().and_then(MonitoringPeriod::new) {
            Some(p) => Some(p),
            None => {
                row.bad("period", "expected 1, 2 or 3");
                None
            }
        };
        let migrant_count = row.count("migrant_count");
        let region_id = row.text("region_id");
        Some(MigrantObservation {
            site_id: site_id?,
            location: location?,
            period: period?,
            migrant_count: migrant_count?,
            region_id: region_id?,
        })
    })?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, obs) in rows {
        if !seen.insert((obs.site_id.clone(), obs.period)) {
            issues.push(Issue {
                line: Some(line),
                kind: IssueKind::DuplicateId(format!("{}@period{}", obs.site_id, obs.period.get())),
            });
        }
        out.push(obs);
    }
    finish(file, issues, out)
}

pub fn parse_migrant_observations(path: &Path) -> Result<Parsed<MigrantObservation>, IngestError> {
    let (label, f) = open(path)?;
    read_migrant_observations(&label, f)
}

pub fn read_trap_records<R: Read>(file: &str, reader: R) -> Result<Parsed<TrapRecord>, IngestError> {
    let (rows, mut issues) = read_table(file, reader, TRAPS_HEADER, |row| {
        let trap_id = row.text("trap_id");
        let region_id = row.text("region_id");
        let date = row.date("date");
        let count = row.count("anopheles_female_count");
        Some(TrapRecord {
            trap_id: trap_id?,
            region_id: region_id?,
            date: date?,
            anopheles_female_count: count?,
        })
    })?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        if !seen.insert((rec.trap_id.clone(), rec.date)) {
            issues.push(Issue {
                line: Some(line),
                kind: IssueKind::DuplicateId(format!("{}@{}", rec.trap_id, rec.date.format(DATE_FORMAT))),
            });
        }
        out.push(rec);
    }
    finish(file, issues, out)
}

pub fn parse_trap_records(path: &Path) -> Result<Parsed<TrapRecord>, IngestError> {
    let (label, f) = open(path)?;
    read_trap_records(&label, f)
}

pub fn read_m_overrides<R: Read>(
    file: &str,
    reader: R,
) -> Result<Parsed<MosquitoRatioOverride>, IngestError> {
    let (rows, mut issues) = read_table(file, reader, M_OVERRIDES_HEADER, |row| {
        let region_id = row.text("region_id");
        let month = match row.raw("month") {
            "*" => Some(None),
            s => match parse_month(s) {
                Some(m) => Some(Some(m)),
                None => {
                    row.bad("month", "expected a month name or *");
                    None
                }
            },
        };
        let m = row.real("m").and_then(|m| {
            if m >= 0.0 {
                Some(m)
            } else {
                row.bad("m", "must be nonnegative");
                None
            }
        });
        Some(MosquitoRatioOverride { region_id: region_id?, month: month?, m: m? })
    })?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, o) in rows {
        if !seen.insert((o.region_id.clone(), o.month.map(|m| m.number_from_month()))) {
            issues.push(Issue { line: Some(line), kind: IssueKind::DuplicateId(o.region_id.clone()) });
        }
        out.push(o);
    }
    finish(file, issues, out)
}

pub fn parse_m_overrides(path: &Path) -> Result<Parsed<MosquitoRatioOverride>, IngestError> {
    let (label, f) = open(path)?;
    read_m_overrides(&label, f)
}

fn writer<W: Write>(w: W, header: &[&str]) -> csv::Result<csv::Writer<W>> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wtr.write_record(header)?;
    Ok(wtr)
}

fn date_str(d: NaiveDate) -> String {
    d.format(DATE_FORMAT).to_string()
}

fn io_err(e: csv::Error) -> io::Error {
    e.into()
}

pub fn write_regions<W: Write>(w: W, regions: &[Region]) -> io::Result<()> {
    let mut wtr = writer(w, REGIONS_HEADER).map_err(io_err)?;
    for r in regions {
        wtr.write_record([
            r.region_id.clone(),
            r.year.to_string(),
            r.region_class.to_string(),
            r.centroid.x.to_string(),
            r.centroid.y.to_string(),
            r.altitude.to_string(),
            r.population.to_string(),
        ])
        .map_err(io_err)?;
    }
    wtr.flush()
}

pub fn write_stations<W: Write>(w: W, stations: &[StationSeries]) -> io::Result<()> {
    let mut wtr = writer(w, STATIONS_HEADER).map_err(io_err)?;
    for s in stations {
        for (date, t) in &s.readings {
            wtr.write_record([
                s.station_id.clone(),
                s.location.x.to_string(),
                s.location.y.to_string(),
                date_str(*date),
                t.to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    wtr.flush()
}

pub fn write_larvae_sites<W: Write>(w: W, sites: &[LarvaeSite]) -> io::Result<()> {
    let mut wtr = writer(w, LARVAE_HEADER).map_err(io_err)?;
    for s in sites {
        for o in &s.observations {
            wtr.write_record([
                s.site_id.clone(),
                s.location.x.to_string(),
                s.location.y.to_string(),
                date_str(o.date),
                u8::from(o.positive).to_string(),
                o.larvae_count.to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    wtr.flush()
}

pub fn write_migrant_observations<W: Write>(w: W, obs: &[MigrantObservation]) -> io::Result<()> {
    let mut wtr = writer(w, MIGRANTS_HEADER).map_err(io_err)?;
    for o in obs {
        wtr.write_record([
            o.site_id.clone(),
            o.location.x.to_string(),
            o.location.y.to_string(),
            o.period.get().to_string(),
            o.migrant_count.to_string(),
            o.region_id.clone(),
        ])
        .map_err(io_err)?;
    }
    wtr.flush()
}

pub fn write_trap_records<W: Write>(w: W, recs: &[TrapRecord]) -> io::Result<()> {
    let mut wtr = writer(w, TRAPS_HEADER).map_err(io_err)?;
    for r in recs {
        wtr.write_record([
            r.trap_id.clone(),
            r.region_id.clone(),
            date_str(r.date),
            r.anopheles_female_count.to_string(),
        ])
        .map_err(io_err)?;
    }
    wtr.flush()
}

pub fn write_m_overrides<W: Write>(w: W, overrides: &[MosquitoRatioOverride]) -> io::Result<()> {
    let mut wtr = writer(w, M_OVERRIDES_HEADER).map_err(io_err)?;
    for o in overrides {
        let month = o.month.map_or("*", month_abbrev);
        wtr.write_record([o.region_id.as_str(), month, &o.m.to_string()]).map_err(io_err)?;
    }
    wtr.flush()
}
