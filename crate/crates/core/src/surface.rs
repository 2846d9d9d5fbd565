//! Kernel-density risk surfaces over region-level point estimates.
//!
//! Hotspot points (region-months with median R0 above 1) are smoothed with a
//! quartic kernel onto a regular grid, masked to the low-altitude band, and
//! written as ASCII grids; the points themselves go out as GeoJSON.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::Month;
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::finalsize::RiskOutcome;
use crate::model::{month_abbrev, ProjectedPoint, Region};

pub const NODATA: f64 = -9999.0;
pub const DEFAULT_RADIUS_M: f64 = 5_000.0;
pub const DEFAULT_CELLSIZE_M: f64 = 500.0;
pub const DEFAULT_ALTITUDE_MIN_M: f64 = 0.0;
pub const DEFAULT_ALTITUDE_MAX_M: f64 = 300.0;
pub const HOTSPOT_THRESHOLD: f64 = 1.0;

const HEADER_KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "NODATA_value"];

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("bad extent: {0}")]
    BadExtent(String),
    #[error("cell size {cellsize} must be positive and at most half the radius {radius}")]
    BadCellsize { cellsize: f64, radius: f64 },
    #[error("raster and DEM grids differ")]
    GeometryMismatch,
    #[error("malformed grid header: {0}")]
    MalformedHeader(String),
    #[error("malformed grid body: {0}")]
    MalformedBody(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Regular grid with row-major cells, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata_value: f64,
    pub cells: Vec<f64>,
}

impl Raster {
    pub fn filled(ncols: usize, nrows: usize, xllcorner: f64, yllcorner: f64, cellsize: f64, value: f64) -> Self {
        Self { ncols, nrows, xllcorner, yllcorner, cellsize, nodata_value: NODATA, cells: vec![value; ncols * nrows] }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.ncols + col]
    }

    pub fn cell_center(&self, row: usize, col: usize) -> ProjectedPoint {
        ProjectedPoint::new(
            self.xllcorner + (col as f64 + 0.5) * self.cellsize,
            self.yllcorner + ((self.nrows - row) as f64 - 0.5) * self.cellsize,
        )
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata_value
    }

    pub fn same_geometry(&self, other: &Raster) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && self.xllcorner == other.xllcorner
            && self.yllcorner == other.yllcorner
            && self.cellsize == other.cellsize
    }

    /// Nearest-cell lookup; `None` outside the grid or on nodata.
    pub fn sample(&self, p: &ProjectedPoint) -> Option<f64> {
        let col = ((p.x - self.xllcorner) / self.cellsize).floor();
        let row_from_bottom = ((p.y - self.yllcorner) / self.cellsize).floor();
        if col < 0.0 || row_from_bottom < 0.0 || col >= self.ncols as f64 || row_from_bottom >= self.nrows as f64 {
            return None;
        }
        let v = self.get(self.nrows - 1 - row_from_bottom as usize, col as usize);
        (!self.is_nodata(v)).then_some(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Extent {
    pub fn contains(&self, p: &ProjectedPoint) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    /// Bounding box of `points` grown by `pad` on every side.
    pub fn around(points: impl IntoIterator<Item = ProjectedPoint>, pad: f64) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut e = Extent { xmin: first.x, ymin: first.y, xmax: first.x, ymax: first.y };
        for p in it {
            e.xmin = e.xmin.min(p.x);
            e.ymin = e.ymin.min(p.y);
            e.xmax = e.xmax.max(p.x);
            e.ymax = e.ymax.max(p.y);
        }
        Some(Extent { xmin: e.xmin - pad, ymin: e.ymin - pad, xmax: e.xmax + pad, ymax: e.ymax + pad })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub location: ProjectedPoint,
    pub weight: f64,
}

/// A region-month whose median R0 exceeds the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Hotspot {
    pub region_id: String,
    pub month: Month,
    pub location: ProjectedPoint,
    pub median_r0: f64,
    pub tau: f64,
    pub expected_infections: f64,
}

impl Hotspot {
    pub fn weighted_point(&self) -> WeightedPoint {
        WeightedPoint { location: self.location, weight: self.median_r0 }
    }
}

/// Keeps outcomes with median R0 strictly above 1, placed at the region centroid.
pub fn filter_hotspots(outcomes: &[RiskOutcome], regions: &[Region]) -> Vec<Hotspot> {
    let centroids: HashMap<&str, ProjectedPoint> =
        regions.iter().map(|r| (r.region_id.as_str(), r.centroid)).collect();
    outcomes
        .iter()
        .filter(|o| o.median_r0 > HOTSPOT_THRESHOLD)
        .filter_map(|o| {
            let Some(loc) = centroids.get(o.region_id.as_str()) else {
                log::warn!("hotspot for unknown region {}", o.region_id);
                return None;
            };
            Some(Hotspot {
                region_id: o.region_id.clone(),
                month: o.month,
                location: *loc,
                median_r0: o.median_r0,
                tau: o.tau,
                expected_infections: o.expected_infections,
            })
        })
        .collect()
}

/// Quartic (biweight) kernel, `3/(π r²) (1 − d²/r²)²` inside the radius.
pub fn quartic_kernel(d: f64, radius: f64) -> f64 {
    quartic_kernel_sq(d * d, radius)
}

fn quartic_kernel_sq(d2: f64, radius: f64) -> f64 {
    let r2 = radius * radius;
    if d2 >= r2 {
        return 0.0;
    }
    let u = 1.0 - d2 / r2;
    3.0 / (PI * r2) * u * u
}

/// Density on a grid covering `extent`, cells of `cellsize` meters.
pub fn kde_raster(points: &[WeightedPoint], extent: &Extent, cellsize: f64, radius: f64) -> Result<Raster, SurfaceError> {
    if !(cellsize > 0.0 && radius > 0.0 && cellsize <= radius / 2.0) {
        return Err(SurfaceError::BadCellsize { cellsize, radius });
    }
    let width = extent.xmax - extent.xmin;
    let height = extent.ymax - extent.ymin;
    if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
        return Err(SurfaceError::BadExtent(format!("{extent:?} has no area")));
    }
    if let Some(p) = points.iter().find(|p| !extent.contains(&p.location)) {
        return Err(SurfaceError::BadExtent(format!("point {:?} lies outside the extent", p.location)));
    }
    let ncols = (width / cellsize).ceil() as usize;
    let nrows = (height / cellsize).ceil() as usize;
    let grid = Raster::filled(ncols, nrows, extent.xmin, extent.ymin, cellsize, 0.0);
    kde_on_grid(points, &grid, radius)
}

/// Density evaluated at the cell centers of `template`'s grid.
pub fn kde_on_grid(points: &[WeightedPoint], template: &Raster, radius: f64) -> Result<Raster, SurfaceError> {
    let cs = template.cellsize;
    if !(cs > 0.0 && radius > 0.0 && cs <= radius / 2.0) {
        return Err(SurfaceError::BadCellsize { cellsize: cs, radius });
    }
    let mut out = Raster { cells: vec![0.0; template.ncols * template.nrows], ..template.clone() };
    out.nodata_value = NODATA;
    // Point positions in cell units from the lower-left corner, so that
    // offsets between a point and a cell center are exact for points on the
    // grid lattice.
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|p| ((p.location.x - out.xllcorner) / cs, (p.location.y - out.yllcorner) / cs, p.weight))
        .collect();
    let (ncols, nrows) = (out.ncols, out.nrows);
    out.cells.par_chunks_mut(ncols).enumerate().for_each(|(row, cells)| {
        let cy = (nrows - row) as f64 - 0.5;
        for (col, cell) in cells.iter_mut().enumerate() {
            let cx = col as f64 + 0.5;
            *cell = pts
                .iter()
                .map(|(px, py, w)| {
                    let dx = (cx - px) * cs;
                    let dy = (cy - py) * cs;
                    w * quartic_kernel_sq(dx * dx + dy * dy, radius)
                })
                .sum();
        }
    });
    Ok(out)
}

/// Sets cells whose DEM value is outside `[min_m, max_m]` (or missing) to nodata.
pub fn apply_altitude_mask(r: &Raster, dem: &Raster, min_m: f64, max_m: f64) -> Result<Raster, SurfaceError> {
    if !r.same_geometry(dem) {
        return Err(SurfaceError::GeometryMismatch);
    }
    let mut out = r.clone();
    for (cell, alt) in out.cells.iter_mut().zip(&dem.cells) {
        if dem.is_nodata(*alt) || *alt < min_m || *alt > max_m {
            *cell = r.nodata_value;
        }
    }
    Ok(out)
}

pub fn write_ascii_grid_to<W: Write>(r: &Raster, mut w: W) -> io::Result<()> {
    writeln!(w, "ncols {}", r.ncols)?;
    writeln!(w, "nrows {}", r.nrows)?;
    writeln!(w, "xllcorner {}", r.xllcorner)?;
    writeln!(w, "yllcorner {}", r.yllcorner)?;
    writeln!(w, "cellsize {}", r.cellsize)?;
    writeln!(w, "NODATA_value {}", r.nodata_value)?;
    for row in r.cells.chunks(r.ncols.max(1)) {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()
}

pub fn write_ascii_grid(r: &Raster, path: &Path) -> io::Result<()> {
    write_ascii_grid_to(r, BufWriter::new(File::create(path)?))
}

pub fn read_ascii_grid_from<R: Read>(reader: R) -> Result<Raster, SurfaceError> {
    let mut lines = BufReader::new(reader).lines();
    let mut header: HashMap<&'static str, String> = HashMap::new();
    for _ in 0..HEADER_KEYS.len() {
        let line = lines.next().ok_or_else(|| SurfaceError::MalformedHeader("truncated header".into()))??;
        let mut parts = line.split_whitespace();
        let (Some(key), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(SurfaceError::MalformedHeader(format!("expected 'key value', got {line:?}")));
        };
        let canonical = HEADER_KEYS
            .iter()
            .find(|k| k.eq_ignore_ascii_case(key))
            .ok_or_else(|| SurfaceError::MalformedHeader(format!("unknown key {key:?}")))?;
        if header.insert(canonical, value.to_string()).is_some() {
            return Err(SurfaceError::MalformedHeader(format!("repeated key {key:?}")));
        }
    }
    let num = |k: &str| -> Result<f64, SurfaceError> {
        header[k].parse::<f64>().map_err(|e| SurfaceError::MalformedHeader(format!("{k}: {e}")))
    };
    let count = |k: &str| -> Result<usize, SurfaceError> {
        header[k].parse::<usize>().map_err(|e| SurfaceError::MalformedHeader(format!("{k}: {e}")))
    };
    let ncols = count("ncols")?;
    let nrows = count("nrows")?;
    let cellsize = num("cellsize")?;
    if !(cellsize > 0.0) {
        return Err(SurfaceError::MalformedHeader(format!("cellsize must be positive, got {cellsize}")));
    }
    let mut cells = Vec::with_capacity(ncols * nrows);
    for line in lines {
        for tok in line?.split_whitespace() {
            cells.push(tok.parse::<f64>().map_err(|e| SurfaceError::MalformedBody(format!("{tok:?}: {e}")))?);
        }
    }
    if cells.len() != ncols * nrows {
        return Err(SurfaceError::MalformedBody(format!("expected {} values, found {}", ncols * nrows, cells.len())));
    }
    Ok(Raster {
        ncols,
        nrows,
        xllcorner: num("xllcorner")?,
        yllcorner: num("yllcorner")?,
        cellsize,
        nodata_value: num("NODATA_value")?,
        cells,
    })
}

pub fn read_ascii_grid(path: &Path) -> Result<Raster, SurfaceError> {
    read_ascii_grid_from(File::open(path)?)
}

/// Hotspots as a GeoJSON `FeatureCollection` in the input's planar coordinates.
pub fn hotspots_geojson(hotspots: &[Hotspot]) -> Value {
    let features: Vec<Value> = hotspots
        .iter()
        .map(|h| {
            json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [h.location.x, h.location.y] },
                "properties": {
                    "region_id": h.region_id,
                    "month": month_abbrev(h.month),
                    "median_r0": h.median_r0,
                    "tau": h.tau,
                    "expected_infections": h.expected_infections,
                }
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn write_hotspots_geojson(hotspots: &[Hotspot], path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &hotspots_geojson(hotspots))?;
    writeln!(w)?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RegionClass;
    use proptest::prelude::*;

    fn outcome(id: &str, r0: f64) -> RiskOutcome {
        RiskOutcome {
            region_id: id.into(),
            month: Month::August,
            prevalence: 0.1,
            median_r0: r0,
            q05_r0: r0,
            q95_r0: r0,
            mu0: 0.0,
            tau: 0.0,
            expected_infections: 0.0,
        }
    }

    fn region(id: &str, x: f64) -> Region {
        Region {
            region_id: id.into(),
            year: 2012,
            region_class: RegionClass::Urban,
            centroid: ProjectedPoint::new(x, 0.0),
            altitude: 0.0,
            population: 1,
            nearest_larvae_site: None,
        }
    }

    #[test]
    fn hotspot_threshold_is_strict() {
        let regions = [region("A", 0.0), region("B", 10.0), region("C", 20.0)];
        assert!(filter_hotspots(&[outcome("A", 0.5), outcome("B", 1.0)], &regions).is_empty());
        let h = filter_hotspots(&[outcome("A", 0.9), outcome("B", 1.058)], &regions);
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].weighted_point().weight, 1.058);
        assert_eq!(h[0].location, ProjectedPoint::new(10.0, 0.0));
    }

    #[test]
    fn kernel_values() {
        assert_eq!(quartic_kernel(1.0, 1.0), 0.0);
        assert_eq!(quartic_kernel(2.0, 1.0), 0.0);
        assert!((quartic_kernel(0.0, 1.0) - 0.954930).abs() < 1e-6);
        assert!((quartic_kernel(1.0 / 2f64.sqrt(), 1.0) - 0.238732).abs() < 1e-6);
    }

    fn extent() -> Extent {
        Extent { xmin: 0.0, ymin: 0.0, xmax: 20_000.0, ymax: 16_000.0 }
    }

    #[test]
    fn empty_points_zero_raster() {
        let r = kde_raster(&[], &extent(), 500.0, 5000.0).unwrap();
        assert_eq!((r.ncols, r.nrows), (40, 32));
        assert!(r.cells.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn kde_preconditions() {
        let bad = Extent { xmin: 0.0, ymin: 0.0, xmax: 0.0, ymax: 10.0 };
        assert!(matches!(kde_raster(&[], &bad, 500.0, 5000.0), Err(SurfaceError::BadExtent(_))));
        let outside = WeightedPoint { location: ProjectedPoint::new(-1.0, 5.0), weight: 1.0 };
        assert!(matches!(kde_raster(&[outside], &extent(), 500.0, 5000.0), Err(SurfaceError::BadExtent(_))));
        assert!(matches!(kde_raster(&[], &extent(), 3000.0, 5000.0), Err(SurfaceError::BadCellsize { .. })));
    }

    #[test]
    fn single_point_symmetric_about_its_cell() {
        // Center of cell (row 15, col 20) on a 40x32 grid of 500 m cells.
        let p = WeightedPoint { location: ProjectedPoint::new(10_250.0, 8_250.0), weight: 2.0 };
        let r = kde_raster(&[p], &extent(), 500.0, 5000.0).unwrap();
        let (r0, c0) = (15usize, 20usize);
        assert_eq!(r.cell_center(r0, c0), p.location);
        for dr in 0..=10usize {
            for dc in 0..=10usize {
                let v = r.get(r0 + dr, c0 + dc);
                assert_eq!(v, r.get(r0 - dr, c0 + dc));
                assert_eq!(v, r.get(r0 + dr, c0 - dc));
                assert_eq!(v, r.get(r0 - dr, c0 - dc));
            }
        }
        assert!(r.get(r0, c0) > 0.0);
    }

    #[test]
    fn mass_is_conserved() {
        let w = 3.5;
        let radius = 5000.0;
        let cs = radius / 10.0;
        let p = WeightedPoint { location: ProjectedPoint::new(10_100.0, 7_900.0), weight: w };
        let r = kde_raster(&[p], &extent(), cs, radius).unwrap();
        let mass: f64 = r.cells.iter().sum::<f64>() * cs * cs;
        assert!((mass - w).abs() / w < 0.01, "{mass}");
    }

    #[test]
    fn altitude_mask() {
        let r = Raster { cells: vec![1.0, 2.0, 3.0, 4.0], ..Raster::filled(2, 2, 0.0, 0.0, 10.0, 0.0) };
        let dem = Raster { cells: vec![500.0, 150.0, 300.0, -1.0], ..r.clone() };
        let m = apply_altitude_mask(&r, &dem, 0.0, 300.0).unwrap();
        assert_eq!(m.cells, vec![NODATA, 2.0, 3.0, NODATA]);
        let other = Raster::filled(3, 2, 0.0, 0.0, 10.0, 0.0);
        assert!(matches!(apply_altitude_mask(&r, &other, 0.0, 300.0), Err(SurfaceError::GeometryMismatch)));
    }

    #[test]
    fn ascii_grid_round_trip_and_layout() {
        let r = Raster {
            cells: vec![0.1 + 0.2, NODATA, 1e-300, 42.0],
            ..Raster::filled(2, 2, 400_000.5, 4_200_000.0, 500.0, 0.0)
        };
        let mut buf = Vec::new();
        write_ascii_grid_to(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ncols 2\nnrows 2\nxllcorner 400000.5\nyllcorner 4200000\ncellsize 500\nNODATA_value -9999\n"));
        assert!(text.contains(" -9999\n"));
        let back = read_ascii_grid_from(buf.as_slice()).unwrap();
        assert_eq!(back, r);
        let mut again = Vec::new();
        write_ascii_grid_to(&back, &mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn misspelled_header_key() {
        let text = "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncelsize 1\nNODATA_value -9999\n5\n";
        assert!(matches!(read_ascii_grid_from(text.as_bytes()), Err(SurfaceError::MalformedHeader(_))));
        let short = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n5\n";
        assert!(matches!(read_ascii_grid_from(short.as_bytes()), Err(SurfaceError::MalformedBody(_))));
    }

    #[test]
    fn geojson_properties() {
        let h = Hotspot {
            region_id: "A".into(),
            month: Month::July,
            location: ProjectedPoint::new(1.0, 2.0),
            median_r0: 1.5,
            tau: 0.6,
            expected_infections: 30.0,
        };
        let v = hotspots_geojson(&[h]);
        assert_eq!(v["type"], "FeatureCollection");
        let f = &v["features"][0];
        assert_eq!(f["geometry"]["coordinates"], json!([1.0, 2.0]));
        assert_eq!(f["properties"]["month"], "Jul");
        assert_eq!(f["properties"]["median_r0"], 1.5);
    }

    #[test]
    fn raster_sampling() {
        let r = Raster { cells: vec![1.0, 2.0, 3.0, NODATA], ..Raster::filled(2, 2, 0.0, 0.0, 10.0, 0.0) };
        assert_eq!(r.sample(&ProjectedPoint::new(5.0, 15.0)), Some(1.0));
        assert_eq!(r.sample(&ProjectedPoint::new(5.0, 5.0)), Some(3.0));
        assert_eq!(r.sample(&ProjectedPoint::new(15.0, 5.0)), None);
        assert_eq!(r.sample(&ProjectedPoint::new(-1.0, 5.0)), None);
    }

    proptest! {
        #[test]
        fn kde_nonnegative_and_linear_in_weight(
            pts in prop::collection::vec((0.0..20_000.0f64, 0.0..16_000.0f64, 0.0..5.0f64), 0..6)
        ) {
            let points: Vec<WeightedPoint> = pts.iter()
                .map(|(x, y, w)| WeightedPoint { location: ProjectedPoint::new(*x, *y), weight: *w })
                .collect();
            let doubled: Vec<WeightedPoint> = points.iter()
                .map(|p| WeightedPoint { weight: 2.0 * p.weight, ..*p })
                .collect();
            let a = kde_raster(&points, &extent(), 1000.0, 4000.0).unwrap();
            let b = kde_raster(&doubled, &extent(), 1000.0, 4000.0).unwrap();
            for (x, y) in a.cells.iter().zip(&b.cells) {
                prop_assert!(*x >= 0.0);
                prop_assert_eq!(*y, 2.0 * x);
            }
        }

        #[test]
        fn mask_keeps_inband_values(alts in prop::collection::vec(-50.0..600.0f64, 12)) {
            let r = Raster { cells: (0..12).map(f64::from).collect(), ..Raster::filled(4, 3, 0.0, 0.0, 1.0, 0.0) };
            let dem = Raster { cells: alts.clone(), ..r.clone() };
            let m = apply_altitude_mask(&r, &dem, 0.0, 300.0).unwrap();
            let outside = alts.iter().filter(|a| !(0.0..=300.0).contains(*a)).count();
            prop_assert_eq!(m.cells.iter().filter(|c| **c == NODATA).count(), outside);
            for ((kept, orig), alt) in m.cells.iter().zip(&r.cells).zip(&alts) {
                if (0.0..=300.0).contains(alt) {
                    prop_assert_eq!(kept, orig);
                }
            }
        }
    }
}
