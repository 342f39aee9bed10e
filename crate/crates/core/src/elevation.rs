//! Road-network elevation point clouds: loading, nearest-point lookup, and
//! rasterization onto cell grids.
//!
//! Points are `(longitude, latitude, altitude)`. As a field, latitude runs
//! along rows and longitude along columns. Distances are planar after
//! scaling longitude by the cosine of the cloud's mid latitude.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::argmax_matrix;
use crate::error::{Error, Result};
use crate::fields::Field;
use crate::geometry::{CellGrid, Point, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElevationPoint {
    pub lon: f64,
    pub lat: f64,
    pub alt: f64,
}

/// Zero-based column positions of the fields in each record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub lon: usize,
    pub lat: usize,
    pub alt: usize,
    pub delimiter: u8,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            lon: 1,
            lat: 2,
            alt: 3,
            delimiter: b',',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElevationCloud {
    pub points: Vec<ElevationPoint>,
    /// Latitude along rows, longitude along columns.
    pub bounds: Rect,
    pub malformed: usize,
}

impl ElevationCloud {
    pub fn new(points: Vec<ElevationPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("elevation cloud"));
        }
        if points
            .iter()
            .any(|p| !(p.lon.is_finite() && p.lat.is_finite() && p.alt.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "elevation points must be finite".into(),
            ));
        }
        let fold = |f: fn(&ElevationPoint) -> f64| {
            points
                .iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x), hi.max(x))
                })
        };
        let (lat_lo, lat_hi) = fold(|p| p.lat);
        let (lon_lo, lon_hi) = fold(|p| p.lon);
        Ok(Self {
            bounds: Rect::new(lat_lo, lat_hi, lon_lo, lon_hi)?,
            points,
            malformed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn parse_record(rec: &csv::StringRecord, schema: &CsvSchema) -> Option<ElevationPoint> {
    let get = |k: usize| {
        rec.get(k)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|x| x.is_finite())
    };
    Some(ElevationPoint {
        lon: get(schema.lon)?,
        lat: get(schema.lat)?,
        alt: get(schema.alt)?,
    })
}

/// Parse records from `reader`. A first line that does not parse is taken as
/// a header; other unparseable lines are skipped and counted. More than 1%
/// malformed lines is an error.
pub fn parse_elevation<R: Read>(
    reader: R,
    schema: &CsvSchema,
    source: &str,
) -> Result<ElevationCloud> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(schema.delimiter)
        .from_reader(reader);
    let mut points = Vec::new();
    let mut malformed = 0;
    let mut total = 0;
    for (k, rec) in rdr.records().enumerate() {
        let parsed = rec.ok().and_then(|r| parse_record(&r, schema));
        match parsed {
            Some(p) => points.push(p),
            None if k == 0 => continue,
            None => malformed += 1,
        }
        total += 1;
    }
    if points.is_empty() {
        return Err(Error::Empty("elevation file"));
    }
    if malformed as f64 > 0.01 * total as f64 {
        return Err(Error::Malformed {
            path: source.into(),
            malformed,
            total,
        });
    }
    let mut cloud = ElevationCloud::new(points)?;
    cloud.malformed = malformed;
    Ok(cloud)
}

pub fn load_elevation(path: &Path, schema: &CsvSchema) -> Result<ElevationCloud> {
    let file = std::fs::File::open(path)?;
    parse_elevation(
        std::io::BufReader::new(file),
        schema,
        &path.display().to_string(),
    )
}

/// Bucketed nearest-point index in planar coordinates.
#[derive(Debug, Clone)]
pub struct NearestIndex {
    xs: Vec<f64>,
    ys: Vec<f64>,
    x_lo: f64,
    y_lo: f64,
    cell_w: f64,
    cell_h: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl NearestIndex {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InvalidArgument(
                "index needs equal, nonempty coordinate arrays".into(),
            ));
        }
        let n = xs.len();
        let range = |v: &[f64]| {
            v.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
                    (a.min(*x), b.max(*x))
                })
        };
        let (x_lo, x_hi) = range(&xs);
        let (y_lo, y_hi) = range(&ys);
        let side = ((n as f64 / 4.0).sqrt().ceil() as usize).clamp(1, 1024);
        let (nx, ny) = (side, side);
        let cell_w = ((x_hi - x_lo) / nx as f64).max(f64::MIN_POSITIVE);
        let cell_h = ((y_hi - y_lo) / ny as f64).max(f64::MIN_POSITIVE);
        let mut index = Self {
            xs,
            ys,
            x_lo,
            y_lo,
            cell_w,
            cell_h,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for k in 0..n {
            let (bx, by) = index.bucket_of(index.xs[k], index.ys[k]);
            index.buckets[by * nx + bx].push(k);
        }
        Ok(index)
    }

    fn bucket_of(&self, x: f64, y: f64) -> (usize, usize) {
        let clamp = |t: f64, n: usize| {
            if t <= 0.0 {
                0
            } else {
                (t.floor() as usize).min(n - 1)
            }
        };
        (
            clamp((x - self.x_lo) / self.cell_w, self.nx),
            clamp((y - self.y_lo) / self.cell_h, self.ny),
        )
    }

    /// Index of the nearest point; equal distances go to the earlier point.
    pub fn nearest(&self, x: f64, y: f64) -> usize {
        let (bx, by) = self.bucket_of(x, y);
        let mut best = (f64::INFINITY, usize::MAX);
        let max_r = self.nx.max(self.ny);
        for r in 0..=max_r {
            let (x0, x1) = (bx.saturating_sub(r), (bx + r).min(self.nx - 1));
            let (y0, y1) = (by.saturating_sub(r), (by + r).min(self.ny - 1));
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    let on_ring = cx + r == bx || cx == bx + r || cy + r == by || cy == by + r;
                    if !on_ring {
                        continue;
                    }
                    for &k in &self.buckets[cy * self.nx + cx] {
                        let d = (self.xs[k] - x).powi(2) + (self.ys[k] - y).powi(2);
                        if d < best.0 || (d == best.0 && k < best.1) {
                            best = (d, k);
                        }
                    }
                }
            }
            // Distance from the query to the part of the plane not yet searched.
            let mut gap = f64::INFINITY;
            if x0 > 0 {
                gap = gap.min(x - (self.x_lo + x0 as f64 * self.cell_w));
            }
            if x1 + 1 < self.nx {
                gap = gap.min(self.x_lo + (x1 + 1) as f64 * self.cell_w - x);
            }
            if y0 > 0 {
                gap = gap.min(y - (self.y_lo + y0 as f64 * self.cell_h));
            }
            if y1 + 1 < self.ny {
                gap = gap.min(self.y_lo + (y1 + 1) as f64 * self.cell_h - y);
            }
            if gap == f64::INFINITY || (best.1 != usize::MAX && gap.max(0.0).powi(2) > best.0) {
                break;
            }
        }
        best.1
    }
}

/// Piecewise-constant field taking the altitude of the nearest cloud point.
#[derive(Debug, Clone)]
pub struct NearestNeighborField {
    index: NearestIndex,
    alts: Vec<f64>,
    lon_scale: f64,
}

impl NearestNeighborField {
    pub fn new(cloud: &ElevationCloud) -> Result<Self> {
        let mid = cloud.bounds.center().row.to_radians();
        let lon_scale = mid.cos().abs().max(1e-6);
        let xs = cloud.points.iter().map(|p| p.lon * lon_scale).collect();
        let ys = cloud.points.iter().map(|p| p.lat).collect();
        Ok(Self {
            index: NearestIndex::new(xs, ys)?,
            alts: cloud.points.iter().map(|p| p.alt).collect(),
            lon_scale,
        })
    }

    pub fn nearest(&self, p: Point) -> usize {
        self.index.nearest(p.col * self.lon_scale, p.row)
    }
}

impl Field for NearestNeighborField {
    fn value(&self, p: Point) -> f64 {
        self.alts[self.nearest(p)]
    }
}

/// `n x n` raster of `roi` (latitude rows, longitude columns), each cell
/// taking the altitude of the point nearest its centre.
pub fn rasterize(cloud: &ElevationCloud, roi: Rect, n: usize) -> Result<DMatrix<f64>> {
    if !roi.intersects(&cloud.bounds) {
        return Err(Error::EmptyIntersection);
    }
    let field = NearestNeighborField::new(cloud)?;
    let grid = CellGrid::new(roi, n, n)?;
    let values: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| field.value(grid.cell_center(k / n, k % n)))
        .collect();
    Ok(DMatrix::from_row_slice(n, n, &values))
}

/// Largest cell, first in row-major order on ties.
pub fn ground_truth_peak(raster: &DMatrix<f64>) -> Result<(usize, usize)> {
    if raster.is_empty() {
        return Err(Error::Empty("raster"));
    }
    Ok(argmax_matrix(raster))
}

/// `n_rows,n_cols` on the first line, then one comma-separated row per line.
pub fn write_raster_csv(path: &Path, raster: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{},{}", raster.nrows(), raster.ncols())?;
    for i in 0..raster.nrows() {
        let row: Vec<String> = raster.row(i).iter().map(|x| format!("{x:?}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_raster_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = |what: &str| Error::InvalidArgument(format!("{}: {what}", path.display()));
    let header = lines.next().ok_or_else(|| bad("empty raster file"))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| bad("bad header")))
        .collect::<Result<_>>()?;
    let [n_rows, n_cols] = dims[..] else {
        return Err(bad("header must be n_rows,n_cols"));
    };
    let mut values = Vec::with_capacity(n_rows * n_cols);
    for line in lines.take(n_rows) {
        for s in line.split(',') {
            values.push(s.trim().parse::<f64>().map_err(|_| bad("bad value"))?);
        }
    }
    if values.len() != n_rows * n_cols {
        return Err(bad("raster size does not match header"));
    }
    Ok(DMatrix::from_row_slice(n_rows, n_cols, &values))
}
