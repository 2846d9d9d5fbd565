//! Output tables: per-region outcomes, the month-by-region-type aggregate,
//! and the prevalence sensitivity comparison. Every number is written to
//! six significant digits, and every table reads back to the same bytes.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Read, Write};

use chrono::Month;
use thiserror::Error;

use crate::finalsize::RiskOutcome;
use crate::model::{month_abbrev, parse_month, Region, RegionClass};
use crate::transmission::median;

pub const OUTCOMES_HEADER: &str = "region_id,month,prevalence,median_r0,q05_r0,q95_r0,tau,expected_infections";
pub const AGGREGATE_HEADER: &str = "scope,month,median_r0,median_tau,median_infections";

#[derive(Debug, Error)]
pub enum TableError {
    #[error("outcome refers to unknown region {0}")]
    UnknownRegion(String),
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("sensitivity table needs at least two prevalence values, got {0}")]
    TooFewPrevalences(usize),
    #[error("sensitivity inputs disagree: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Rounds to six significant digits and prints the shortest decimal that
/// reads back to the rounded value.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("scientific notation parses");
    format!("{rounded}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig6).unwrap_or_default()
}

fn malformed(line: u64, reason: impl Into<String>) -> TableError {
    TableError::Malformed { line, reason: reason.into() }
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(r)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &str) -> Result<(), TableError> {
    let got = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if got != expected {
        return Err(malformed(1, format!("expected header `{expected}`, got `{got}`")));
    }
    Ok(())
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, line: u64) -> Result<&'a str, TableError> {
    rec.get(i).ok_or_else(|| malformed(line, format!("missing column {}", i + 1)))
}

fn number(rec: &csv::StringRecord, i: usize, line: u64) -> Result<f64, TableError> {
    let s = field(rec, i, line)?;
    s.parse().map_err(|_| malformed(line, format!("`{s}` is not a number")))
}

fn opt_number(rec: &csv::StringRecord, i: usize, line: u64) -> Result<Option<f64>, TableError> {
    match field(rec, i, line)? {
        "" => Ok(None),
        _ => number(rec, i, line).map(Some),
    }
}

fn month_field(rec: &csv::StringRecord, i: usize, line: u64) -> Result<Month, TableError> {
    let s = field(rec, i, line)?;
    parse_month(s).ok_or_else(|| malformed(line, format!("`{s}` is not a month")))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

/// One row of `outcomes.csv`, as written (rounded).
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRecord {
    pub region_id: String,
    pub month: Month,
    pub prevalence: f64,
    pub median_r0: f64,
    pub q05_r0: f64,
    pub q95_r0: f64,
    pub tau: f64,
    pub expected_infections: f64,
}

impl From<&RiskOutcome> for OutcomeRecord {
    fn from(o: &RiskOutcome) -> Self {
        Self {
            region_id: o.region_id.clone(),
            month: o.month,
            prevalence: o.prevalence,
            median_r0: o.median_r0,
            q05_r0: o.q05_r0,
            q95_r0: o.q95_r0,
            tau: o.tau,
            expected_infections: o.expected_infections,
        }
    }
}

pub fn write_outcomes<W: Write>(w: W, rows: &[OutcomeRecord]) -> Result<(), TableError> {
    let mut wtr = csv_writer(w);
    wtr.write_record(OUTCOMES_HEADER.split(','))?;
    for r in rows {
        wtr.write_record([
            r.region_id.clone(),
            month_abbrev(r.month).to_string(),
            fmt_sig6(r.prevalence),
            fmt_sig6(r.median_r0),
            fmt_sig6(r.q05_r0),
            fmt_sig6(r.q95_r0),
            fmt_sig6(r.tau),
            fmt_sig6(r.expected_infections),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_outcomes<R: Read>(r: R) -> Result<Vec<OutcomeRecord>, TableError> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, OUTCOMES_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        out.push(OutcomeRecord {
            region_id: field(&rec, 0, line)?.to_string(),
            month: month_field(&rec, 1, line)?,
            prevalence: number(&rec, 2, line)?,
            median_r0: number(&rec, 3, line)?,
            q05_r0: number(&rec, 4, line)?,
            q95_r0: number(&rec, 5, line)?,
            tau: number(&rec, 6, line)?,
            expected_infections: number(&rec, 7, line)?,
        });
    }
    Ok(out)
}

/// Aggregation scope: all regions, or one region type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Total,
    Urban,
    Rural,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::Total, Scope::Urban, Scope::Rural];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scope::Total => "total",
            Scope::Urban => "urban",
            Scope::Rural => "rural",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Scope::ALL.into_iter().find(|x| x.as_str() == s)
    }

    fn includes(&self, class: RegionClass) -> bool {
        match self {
            Scope::Total => true,
            Scope::Urban => class == RegionClass::Urban,
            Scope::Rural => class == RegionClass::Rural,
        }
    }
}

/// Medians across regions for one scope and month; `None` for empty groups.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub scope: Scope,
    pub month: Month,
    pub median_r0: Option<f64>,
    pub median_tau: Option<f64>,
    pub median_infections: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregateTable {
    /// Ordered by scope (total, urban, rural), then calendar month.
    pub rows: Vec<AggregateRow>,
}

impl AggregateTable {
    pub fn get(&self, scope: Scope, month: Month) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.scope == scope && r.month == month)
    }

    pub fn months(&self) -> Vec<Month> {
        let mut ms: Vec<Month> = Vec::new();
        for r in &self.rows {
            if !ms.contains(&r.month) {
                ms.push(r.month);
            }
        }
        ms.sort_by_key(|m| m.number_from_month());
        ms
    }
}

/// Per-month medians across regions, for all regions and per region type.
///
/// Every outcome must name a region in `regions`. Each month appearing in
/// `outcomes` yields one row per scope.
pub fn aggregate_outcomes(outcomes: &[OutcomeRecord], regions: &[Region]) -> Result<AggregateTable, TableError> {
    let class_of: HashMap<&str, RegionClass> =
        regions.iter().map(|r| (r.region_id.as_str(), r.region_class)).collect();
    let mut by_month: BTreeMap<u32, (Month, Vec<(RegionClass, &OutcomeRecord)>)> = BTreeMap::new();
    for o in outcomes {
        let class = *class_of.get(o.region_id.as_str()).ok_or_else(|| TableError::UnknownRegion(o.region_id.clone()))?;
        by_month.entry(o.month.number_from_month()).or_insert((o.month, Vec::new())).1.push((class, o));
    }
    let mut rows = Vec::new();
    for scope in Scope::ALL {
        for (month, group) in by_month.values() {
            let members: Vec<&OutcomeRecord> =
                group.iter().filter(|(c, _)| scope.includes(*c)).map(|(_, o)| *o).collect();
            let med = |f: fn(&OutcomeRecord) -> f64| median(&members.iter().map(|o| f(o)).collect::<Vec<_>>());
            rows.push(AggregateRow {
                scope,
                month: *month,
                median_r0: med(|o| o.median_r0),
                median_tau: med(|o| o.tau),
                median_infections: med(|o| o.expected_infections),
            });
        }
    }
    Ok(AggregateTable { rows })
}

pub fn write_aggregate<W: Write>(w: W, table: &AggregateTable) -> Result<(), TableError> {
    let mut wtr = csv_writer(w);
    wtr.write_record(AGGREGATE_HEADER.split(','))?;
    for r in &table.rows {
        wtr.write_record([
            r.scope.as_str().to_string(),
            month_abbrev(r.month).to_string(),
            fmt_opt(r.median_r0),
            fmt_opt(r.median_tau),
            fmt_opt(r.median_infections),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_aggregate<R: Read>(r: R) -> Result<AggregateTable, TableError> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, AGGREGATE_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let s = field(&rec, 0, line)?;
        rows.push(AggregateRow {
            scope: Scope::parse(s).ok_or_else(|| malformed(line, format!("unknown scope `{s}`")))?,
            month: month_field(&rec, 1, line)?,
            median_r0: opt_number(&rec, 2, line)?,
            median_tau: opt_number(&rec, 3, line)?,
            median_infections: opt_number(&rec, 4, line)?,
        });
    }
    Ok(AggregateTable { rows })
}

/// Which aggregate column to lay out month-wise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMetric {
    MedianR0,
    MedianTau,
    MedianInfections,
}

/// Scopes as rows, months as columns, blank where a group is empty.
pub fn write_aggregate_wide<W: Write>(w: W, table: &AggregateTable, metric: AggregateMetric) -> Result<(), TableError> {
    let months = table.months();
    let mut wtr = csv_writer(w);
    let mut header = vec!["scope".to_string()];
    header.extend(months.iter().map(|m| month_abbrev(*m).to_string()));
    wtr.write_record(&header)?;
    for scope in Scope::ALL {
        let mut rec = vec![scope.as_str().to_string()];
        for m in &months {
            let v = table.get(scope, *m).and_then(|r| match metric {
                AggregateMetric::MedianR0 => r.median_r0,
                AggregateMetric::MedianTau => r.median_tau,
                AggregateMetric::MedianInfections => r.median_infections,
            });
            rec.push(fmt_opt(v));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Median R0, τ and expected infections under one prevalence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioCell {
    pub median_r0: f64,
    pub tau: f64,
    pub expected_infections: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub region_id: String,
    pub month: Month,
    /// One per prevalence, in table order.
    pub cells: Vec<ScenarioCell>,
}

/// Side-by-side outcomes across prevalence scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTable {
    pub prevalences: Vec<f64>,
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityTable {
    /// Joins per-prevalence outcome lists that share region-month order.
    pub fn from_runs(runs: &[(f64, Vec<OutcomeRecord>)]) -> Result<Self, TableError> {
        if runs.len() < 2 {
            return Err(TableError::TooFewPrevalences(runs.len()));
        }
        let first = &runs[0].1;
        let mut rows: Vec<SensitivityRow> = first
            .iter()
            .map(|o| SensitivityRow { region_id: o.region_id.clone(), month: o.month, cells: Vec::new() })
            .collect();
        for (p, outcomes) in runs {
            if outcomes.len() != rows.len() {
                return Err(TableError::Mismatch(format!("prevalence {p} has {} rows, expected {}", outcomes.len(), rows.len())));
            }
            for (row, o) in rows.iter_mut().zip(outcomes) {
                if row.region_id != o.region_id || row.month != o.month {
                    return Err(TableError::Mismatch(format!(
                        "prevalence {p}: row {}/{} where {}/{} expected",
                        o.region_id,
                        month_abbrev(o.month),
                        row.region_id,
                        month_abbrev(row.month)
                    )));
                }
                row.cells.push(ScenarioCell { median_r0: o.median_r0, tau: o.tau, expected_infections: o.expected_infections });
            }
        }
        Ok(Self { prevalences: runs.iter().map(|(p, _)| *p).collect(), rows })
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["region_id".to_string(), "month".to_string()];
        for p in &self.prevalences {
            let p = fmt_sig6(*p);
            h.push(format!("median_r0_p{p}"));
            h.push(format!("tau_p{p}"));
            h.push(format!("expected_infections_p{p}"));
        }
        h
    }
}

pub fn write_sensitivity<W: Write>(w: W, table: &SensitivityTable) -> Result<(), TableError> {
    let mut wtr = csv_writer(w);
    wtr.write_record(table.header())?;
    for r in &table.rows {
        let mut rec = vec![r.region_id.clone(), month_abbrev(r.month).to_string()];
        for c in &r.cells {
            rec.push(fmt_sig6(c.median_r0));
            rec.push(fmt_sig6(c.tau));
            rec.push(fmt_sig6(c.expected_infections));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_sensitivity<R: Read>(r: R) -> Result<SensitivityTable, TableError> {
    let mut rdr = csv_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 5 || (header.len() - 2) % 3 != 0 || header[0] != "region_id" || header[1] != "month" {
        return Err(malformed(1, "not a sensitivity header"));
    }
    let mut prevalences = Vec::new();
    for chunk in header[2..].chunks(3) {
        let p = chunk[0]
            .strip_prefix("median_r0_p")
            .ok_or_else(|| malformed(1, format!("unexpected column `{}`", chunk[0])))?;
        if chunk[1] != format!("tau_p{p}") || chunk[2] != format!("expected_infections_p{p}") {
            return Err(malformed(1, format!("columns for prevalence {p} out of order")));
        }
        prevalences.push(p.parse::<f64>().map_err(|_| malformed(1, format!("bad prevalence `{p}`")))?);
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let mut cells = Vec::with_capacity(prevalences.len());
        for k in 0..prevalences.len() {
            let base = 2 + 3 * k;
            cells.push(ScenarioCell {
                median_r0: number(&rec, base, line)?,
                tau: number(&rec, base + 1, line)?,
                expected_infections: number(&rec, base + 2, line)?,
            });
        }
        rows.push(SensitivityRow { region_id: field(&rec, 0, line)?.to_string(), month: month_field(&rec, 1, line)?, cells });
    }
    Ok(SensitivityTable { prevalences, rows })
}
