//! Experiment drivers, result tables, and their CSV / SVG output.
//!
//! Every experiment is a pure function of its config and seed. Trials run on
//! a rayon pool whose size can be capped with `PEAKLOC_THREADS`; per-trial
//! seeds are derived from the run seed and trial index, and results are
//! collected in trial order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{baseline_stage, run_baseline_multistage, Baseline, BaselineConfig};
use crate::elevation::{
    ground_truth_peak, load_elevation, rasterize, write_raster_csv, CsvSchema, NearestNeighborField,
};
use crate::error::{Error, Result};
use crate::fields::{
    analytic_coherence_exponential, analytic_coherence_powerlaw, coherence_parameter,
    numeric_coherence, Field, Profile, SeparableField,
};
use crate::geometry::{CellGrid, Point, Rect};
use crate::localize::{localize_axis, pamcur_stage, StageParams};
use crate::pamcur::{run_pamcur, RunConfig};
use crate::sampling::{derive_seed, rng_from_seed, NoiseModel};

pub const THREADS_ENV: &str = "PEAKLOC_THREADS";

/// Named columns of equal length plus free-form metadata.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentTable {
    columns: Vec<(String, Vec<f64>)>,
    pub metadata: BTreeMap<String, String>,
}

impl ExperimentTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if let Some((_, first)) = self.columns.first() {
            if first.len() != values.len() {
                return Err(Error::InvalidArgument(format!(
                    "column {name} has {} rows, table has {}",
                    values.len(),
                    first.len()
                )));
            }
        }
        if self.columns.iter().any(|(n, _)| *n == name) {
            return Err(Error::InvalidArgument(format!("duplicate column {name}")));
        }
        self.columns.push((name, values));
        Ok(())
    }

    pub fn with_column(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        self.push_column(name, values)?;
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |(_, v)| v.len())
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.insert(key.into(), value.to_string());
    }

    /// Short content hash of the metadata and column names.
    pub fn run_id(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.metadata {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
            h.update([0]);
        }
        for n in self.names() {
            h.update(n.as_bytes());
            h.update([1]);
        }
        h.finalize().iter().take(6).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.columns.is_empty() || self.n_rows() == 0 {
            return Err(Error::Empty("table series"));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        self.check_nonempty()?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(self.names())?;
        for r in 0..self.n_rows() {
            w.write_record(self.columns.iter().map(|(_, v)| format!("{:?}", v[r])))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("ascii output"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut cols = vec![Vec::new(); names.len()];
        for rec in rdr.records() {
            let rec = rec?;
            for (k, field) in rec.iter().enumerate() {
                let v = field
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("non-numeric cell {field:?}")))?;
                cols[k].push(v);
            }
        }
        let mut t = Self::new();
        for (n, c) in names.into_iter().zip(cols) {
            t.push_column(n, c)?;
        }
        Ok(t)
    }

    /// Line plot of every other column against `x`.
    pub fn to_svg(&self, x: &str, log_x: bool, log_y: bool) -> Result<String> {
        self.check_nonempty()?;
        let xs = self
            .column(x)
            .ok_or_else(|| Error::InvalidArgument(format!("no column {x}")))?;
        let tx = |v: f64| if log_x { v.log10() } else { v };
        let ty = |v: f64| if log_y { v.log10() } else { v };
        let series: Vec<(&str, Vec<(f64, f64)>)> = self
            .columns
            .iter()
            .filter(|(n, _)| n != x)
            .map(|(n, ys)| {
                let pts = xs
                    .iter()
                    .zip(ys)
                    .map(|(a, b)| (tx(*a), ty(*b)))
                    .filter(|(a, b)| a.is_finite() && b.is_finite())
                    .collect();
                (n.as_str(), pts)
            })
            .collect();
        let all = series.iter().flat_map(|(_, p)| p.iter().copied());
        let (mut x0, mut x1, mut y0, mut y1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for (a, b) in all {
            x0 = x0.min(a);
            x1 = x1.max(a);
            y0 = y0.min(b);
            y1 = y1.max(b);
        }
        if !x0.is_finite() {
            return Err(Error::Empty("plottable points"));
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
        let (w, h, pad) = (640.0, 400.0, 40.0);
        let px = |a: f64| pad + (a - x0) / (x1 - x0) * (w - 2.0 * pad);
        let py = |b: f64| h - pad - (b - y0) / (y1 - y0) * (h - 2.0 * pad);
        const PALETTE: [&str; 6] = [
            "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
        ];

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(
            s,
            r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            w - 2.0 * pad,
            h - 2.0 * pad
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}{x}</text>"#,
            w / 2.0,
            h - 10.0,
            if log_x { "log10 " } else { "" }
        );
        for (k, (name, pts)) in series.iter().enumerate() {
            let colour = PALETTE[k % PALETTE.len()];
            let coords: Vec<String> = pts
                .iter()
                .map(|(a, b)| format!("{:.2},{:.2}", px(*a), py(*b)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                coords.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="11" fill="{colour}">{name}</text>"#,
                w - pad - 120.0,
                pad + 14.0 * (k as f64 + 1.0)
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Svg { x: String, log_x: bool, log_y: bool },
}

pub fn emit_table(table: &ExperimentTable, path: &Path, format: &TableFormat) -> Result<()> {
    let text = match format {
        TableFormat::Csv => table.to_csv()?,
        TableFormat::Svg { x, log_x, log_y } => table.to_svg(x, *log_x, *log_y)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<ExperimentTable> {
    ExperimentTable::from_csv(&std::fs::read_to_string(path)?)
}

/// Worker pool sized by `PEAKLOC_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| {
            Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))
        })?;
        if n == 0 {
            return Err(Error::Config(format!("{THREADS_ENV} must be positive")));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, 0.0);
    }
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Localization algorithms selectable from config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Pamcur,
    McOnly,
    McUni,
    Interp { window: usize },
    MeanShift { omega: usize, restarts: usize },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Pamcur => "pamcur",
            Method::McOnly => "mc_only",
            Method::McUni => "mc_uni",
            Method::Interp { .. } => "interp",
            Method::MeanShift { .. } => "mean_shift",
        }
    }

    fn baseline(&self) -> Option<Baseline> {
        match *self {
            Method::Pamcur => None,
            Method::McOnly => Some(Baseline::McOnly),
            Method::McUni => Some(Baseline::McUni),
            Method::Interp { window } => Some(Baseline::Interp { window }),
            Method::MeanShift { omega, restarts } => Some(Baseline::MeanShift { omega, restarts }),
        }
    }

    /// Single-stage peak estimate on an `n x n` grid over `roi`.
    pub fn locate_once<F: Field + ?Sized>(
        &self,
        field: &F,
        roi: Rect,
        n: usize,
        alpha: f64,
        noise: NoiseModel,
        seed: u64,
    ) -> Result<Point> {
        let grid = CellGrid::new(roi, n, n)?;
        let read = |i, j| field.value(grid.cell_center(i, j));
        match self.baseline() {
            None => {
                let budget = ((alpha * (n * n) as f64).ceil() as usize).clamp(1, n * n);
                let params = StageParams {
                    noise,
                    ..StageParams::new(budget)
                };
                let s = pamcur_stage(read, n, n, &params, seed)?;
                let b = s.bounds;
                Ok(grid
                    .cover((b.row_lo, b.row_hi), (b.col_lo, b.col_hi))
                    .center())
            }
            Some(alg) => {
                let (cell, _) = baseline_stage(alg, read, n, alpha, noise, seed)?;
                Ok(grid.cell_center(cell.0, cell.1))
            }
        }
    }
}

/// Isotropic field with the given profile, rescaled to unit peak value.
pub fn unit_peak_field(profile: &Profile, center: Point) -> Result<SeparableField> {
    let peak = profile.eval(0.0);
    SeparableField::new(
        profile.clone(),
        profile.clone(),
        1.0 / (peak * peak),
        center,
    )
}

/// The profile with its spread parameter set to `spread`.
pub fn with_spread(profile: &Profile, spread: f64) -> Result<Profile> {
    let p = match profile {
        Profile::Laplacian { .. } => Profile::laplacian(spread),
        Profile::Gaussian { .. } => Profile::gaussian(spread),
        Profile::Cauchy { .. } => Profile::cauchy(spread),
        other => {
            return Err(Error::Config(format!(
                "spread sweeps need a laplacian, gaussian or cauchy profile, got {other:?}"
            )))
        }
    };
    p.validate()?;
    Ok(p)
}

/// Cell-centred samples of `profile` on `n` points of `[-half_width, half_width]`,
/// scaled to unit norm.
pub fn unit_profile_vector(profile: &Profile, n: usize, half_width: f64) -> Vec<f64> {
    let step = 2.0 * half_width / n as f64;
    let raw: Vec<f64> = (0..n)
        .map(|k| profile.eval(-half_width + (k as f64 + 0.5) * step))
        .collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    raw.into_iter().map(|x| x / norm).collect()
}

/// Normalized one-step localization width `(l_R - l_L) / n` as a
/// function of the accuracy level `rho`.
pub fn tradeoff_curve(
    profile: &Profile,
    n: usize,
    rho_grid: &[f64],
    half_width: f64,
) -> Result<ExperimentTable> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "tradeoff curve needs n >= 10, got {n}"
        )));
    }
    profile.validate()?;
    let u = unit_profile_vector(profile, n, half_width);
    let mut widths = Vec::with_capacity(rho_grid.len());
    for &rho in rho_grid {
        let b = localize_axis(&u, rho)?;
        widths.push((b.hi - b.lo) as f64 / n as f64);
    }
    let mut t = ExperimentTable::new()
        .with_column("rho", rho_grid.to_vec())?
        .with_column("bound", widths)?;
    t.set_meta("n", n);
    t.set_meta("half_width", half_width);
    t.set_meta("profile", serde_json::to_string(profile)?);
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedProfile {
    pub name: String,
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TradeoffConfig {
    pub n: usize,
    pub half_width: f64,
    pub rho: Vec<f64>,
    pub profiles: Vec<NamedProfile>,
}

impl Default for TradeoffConfig {
    fn default() -> Self {
        Self {
            n: 200,
            half_width: 10.0,
            rho: (0..=40).map(|k| 0.5 + 0.0124 * k as f64).collect(),
            profiles: vec![
                NamedProfile {
                    name: "gaussian".into(),
                    profile: Profile::gaussian(1.0),
                },
                NamedProfile {
                    name: "laplacian".into(),
                    profile: Profile::laplacian(1.0),
                },
                NamedProfile {
                    name: "cauchy".into(),
                    profile: Profile::cauchy(1.0),
                },
            ],
        }
    }
}

/// One `bound` column per profile, sharing the `rho` column.
pub fn tradeoff_table(cfg: &TradeoffConfig) -> Result<ExperimentTable> {
    let mut t = ExperimentTable::new().with_column("rho", cfg.rho.clone())?;
    for p in &cfg.profiles {
        let c = tradeoff_curve(&p.profile, cfg.n, &cfg.rho, cfg.half_width)?;
        t.push_column(p.name.clone(), c.column("bound").expect("present").to_vec())?;
    }
    t.set_meta("n", cfg.n);
    t.set_meta("half_width", cfg.half_width);
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub profile: Profile,
    /// Grid sides sampled over the unit search square.
    pub window_sizes: Vec<usize>,
    /// Profile spreads, as fractions of the search-square side.
    pub spreads: Vec<f64>,
    pub trials: usize,
    pub alpha: f64,
    pub noise: NoiseModel,
    pub method: Method,
    /// Success radius as a fraction of the side.
    pub tolerance: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            profile: Profile::laplacian(1.0),
            window_sizes: vec![10, 20, 30, 40, 50],
            spreads: vec![0.02, 0.05, 0.1, 0.2],
            trials: 10,
            alpha: 0.3,
            noise: NoiseModel::Gaussian { std: 0.05 },
            method: Method::McOnly,
            tolerance: 0.04,
        }
    }
}

/// Fraction of trials whose single-stage estimate lands within
/// `tolerance` of the true peak, for each (window size, spread) pair.
pub fn detection_probability_sweep(cfg: &SweepConfig, seed: u64) -> Result<ExperimentTable> {
    if cfg.trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    cfg.noise.validate()?;
    let roi = Rect::new(0.0, 1.0, 0.0, 1.0)?;
    let mut cells = Vec::new();
    for (wi, &w) in cfg.window_sizes.iter().enumerate() {
        for (si, &s) in cfg.spreads.iter().enumerate() {
            cells.push((wi, si, w, s));
        }
    }
    let pool = thread_pool()?;
    let results: Vec<Result<(f64, f64)>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(wi, si, w, s)| {
                let profile = with_spread(&cfg.profile, s)?;
                let hits = (0..cfg.trials)
                    .map(|t| {
                        let ts = derive_seed(
                            derive_seed(seed, ((wi as u64) << 32) | si as u64),
                            t as u64,
                        );
                        let center = random_center(ts, &roi, 0.25);
                        let field = unit_peak_field(&profile, center)?;
                        let est = cfg.method.locate_once(
                            &field,
                            roi,
                            w,
                            cfg.alpha,
                            cfg.noise,
                            derive_seed(ts, 7),
                        )?;
                        Ok(if est.distance(&center) <= cfg.tolerance {
                            1.0
                        } else {
                            0.0
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok(mean_se(&hits))
            })
            .collect()
    });
    let mut ws = Vec::new();
    let mut ss = Vec::new();
    let mut ps = Vec::new();
    let mut es = Vec::new();
    for (&(_, _, w, s), r) in cells.iter().zip(results) {
        let (p, e) = r?;
        ws.push(w as f64);
        ss.push(s);
        ps.push(p);
        es.push(e);
    }
    let mut t = ExperimentTable::new()
        .with_column("window", ws)?
        .with_column("spread", ss)?
        .with_column("probability", ps)?
        .with_column("std_error", es)?;
    t.set_meta("method", cfg.method.name());
    t.set_meta("trials", cfg.trials);
    t.set_meta("seed", seed);
    t.set_meta("config", serde_json::to_string(cfg)?);
    Ok(t)
}

fn random_center(seed: u64, roi: &Rect, margin: f64) -> Point {
    use rand::Rng;
    let mut rng = rng_from_seed(seed);
    let r = roi.row_lo + roi.height() * (margin + (1.0 - 2.0 * margin) * rng.random::<f64>());
    let c = roi.col_lo + roi.width() * (margin + (1.0 - 2.0 * margin) * rng.random::<f64>());
    Point::new(r, c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub alphas: Vec<f64>,
    pub trials: usize,
    pub grid_sizes: Vec<usize>,
    pub profile: Profile,
    pub noise: NoiseModel,
    pub kappa: f64,
    pub max_stages: usize,
    pub stop_tolerance: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: vec![
                Method::Pamcur,
                Method::McOnly,
                Method::McUni,
                Method::Interp { window: 3 },
                Method::MeanShift {
                    omega: 2,
                    restarts: 5,
                },
            ],
            alphas: vec![0.2, 0.3, 0.35, 0.4, 0.5],
            trials: 500,
            grid_sizes: vec![50, 100],
            profile: Profile::laplacian(0.05),
            noise: NoiseModel::None,
            kappa: 0.5,
            max_stages: 6,
            stop_tolerance: 1e-3,
        }
    }
}

/// A field with known peak, produced per trial.
pub struct Subject<F> {
    pub field: F,
    pub roi: Rect,
    pub truth: Point,
}

/// Summary of one (grid size, method, alpha) cell of [`samples_vs_error`].
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    pub grid_n: usize,
    pub method: Method,
    pub alpha: f64,
    pub samples: (f64, f64),
    pub distance: (f64, f64),
    pub log_mse: f64,
    /// Mean box area per stage, as a fraction of the initial ROI (PAMCUR only).
    pub stage_areas: Vec<f64>,
}

struct TrialOutcome {
    samples: f64,
    distance: f64,
    areas: Vec<f64>,
}

/// Mean localization error and sample count of each method at each `alpha`
/// and grid size.
///
/// Samples are reported as a fraction of `grid_n^2`. Returns the summary
/// table and a table of PAMCUR box areas per stage.
pub fn samples_vs_error<F, M>(
    make: M,
    cfg: &BenchConfig,
    seed: u64,
) -> Result<(ExperimentTable, ExperimentTable)>
where
    F: Field + Send,
    M: Fn(u64) -> Result<Subject<F>> + Sync,
{
    let summaries = samples_vs_error_rows(make, cfg, seed)?;
    let ids: Vec<f64> = summaries
        .iter()
        .map(|s| {
            cfg.methods
                .iter()
                .position(|m| *m == s.method)
                .expect("known method") as f64
        })
        .collect();
    let mut table = ExperimentTable::new()
        .with_column(
            "grid_n",
            summaries.iter().map(|s| s.grid_n as f64).collect(),
        )?
        .with_column("method", ids)?
        .with_column("alpha", summaries.iter().map(|s| s.alpha).collect())?
        .with_column("samples", summaries.iter().map(|s| s.samples.0).collect())?
        .with_column(
            "samples_se",
            summaries.iter().map(|s| s.samples.1).collect(),
        )?
        .with_column("distance", summaries.iter().map(|s| s.distance.0).collect())?
        .with_column(
            "distance_se",
            summaries.iter().map(|s| s.distance.1).collect(),
        )?
        .with_column("log_mse", summaries.iter().map(|s| s.log_mse).collect())?;
    for (k, m) in cfg.methods.iter().enumerate() {
        table.set_meta(format!("method.{k}"), m.name());
    }
    table.set_meta("trials", cfg.trials);
    table.set_meta("seed", seed);
    table.set_meta("config", serde_json::to_string(cfg)?);

    let (mut g, mut a, mut st, mut ar) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for s in summaries.iter().filter(|s| s.method == Method::Pamcur) {
        for (k, area) in s.stage_areas.iter().enumerate() {
            g.push(s.grid_n as f64);
            a.push(s.alpha);
            st.push((k + 1) as f64);
            ar.push(*area);
        }
    }
    let mut areas = ExperimentTable::new()
        .with_column("grid_n", g)?
        .with_column("alpha", a)?
        .with_column("stage", st)?
        .with_column("area", ar)?;
    areas.set_meta("seed", seed);
    Ok((table, areas))
}

pub fn samples_vs_error_rows<F, M>(
    make: M,
    cfg: &BenchConfig,
    seed: u64,
) -> Result<Vec<ErrorSummary>>
where
    F: Field + Send,
    M: Fn(u64) -> Result<Subject<F>> + Sync,
{
    if cfg.trials == 0
        || cfg.methods.is_empty()
        || cfg.alphas.is_empty()
        || cfg.grid_sizes.is_empty()
    {
        return Err(Error::Config(
            "need trials, methods, alphas and grid sizes".into(),
        ));
    }
    let pool = thread_pool()?;
    let mut out = Vec::new();
    for (gi, &grid_n) in cfg.grid_sizes.iter().enumerate() {
        for (mi, method) in cfg.methods.iter().enumerate() {
            for (ai, &alpha) in cfg.alphas.iter().enumerate() {
                let cell_seed = derive_seed(
                    derive_seed(seed, gi as u64),
                    ((mi as u64) << 32) | ai as u64,
                );
                let outcomes: Vec<Result<TrialOutcome>> = pool.install(|| {
                    (0..cfg.trials)
                        .into_par_iter()
                        .map(|t| {
                            let subject = make(derive_seed(seed, t as u64))?;
                            run_trial(
                                method,
                                &subject,
                                cfg,
                                grid_n,
                                alpha,
                                derive_seed(cell_seed, t as u64),
                            )
                        })
                        .collect()
                });
                let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
                let samples: Vec<f64> = outcomes.iter().map(|o| o.samples).collect();
                let dist: Vec<f64> = outcomes.iter().map(|o| o.distance).collect();
                let mse = dist.iter().map(|d| d * d).sum::<f64>() / dist.len() as f64;
                let depth = outcomes.iter().map(|o| o.areas.len()).max().unwrap_or(0);
                let stage_areas = (0..depth)
                    .map(|k| {
                        let v: Vec<f64> = outcomes
                            .iter()
                            .filter_map(|o| o.areas.get(k).copied())
                            .collect();
                        v.iter().sum::<f64>() / v.len() as f64
                    })
                    .collect();
                out.push(ErrorSummary {
                    grid_n,
                    method: *method,
                    alpha,
                    samples: mean_se(&samples),
                    distance: mean_se(&dist),
                    log_mse: mse.log10(),
                    stage_areas,
                });
            }
        }
    }
    Ok(out)
}

fn run_trial<F: Field>(
    method: &Method,
    subject: &Subject<F>,
    cfg: &BenchConfig,
    grid_n: usize,
    alpha: f64,
    seed: u64,
) -> Result<TrialOutcome> {
    let norm = (grid_n * grid_n) as f64;
    match method.baseline() {
        None => {
            let rc = RunConfig {
                grid_n,
                alpha,
                noise: cfg.noise,
                max_stages: cfg.max_stages,
                stop_tolerance: cfg.stop_tolerance,
                seed,
                ..RunConfig::default()
            };
            let r = run_pamcur(&subject.field, subject.roi, &rc)?;
            let base = subject.roi.area();
            Ok(TrialOutcome {
                samples: r.total_samples as f64 / norm,
                distance: r.peak_estimate.distance(&subject.truth),
                areas: r
                    .stages
                    .iter()
                    .map(|s| s.box_physical.area() / base)
                    .collect(),
            })
        }
        Some(alg) => {
            let bc = BaselineConfig {
                grid_n,
                alpha,
                kappa: cfg.kappa,
                max_stages: cfg.max_stages,
                stop_tolerance: cfg.stop_tolerance,
                noise: cfg.noise,
                seed,
            };
            let r = run_baseline_multistage(alg, &subject.field, subject.roi, &bc)?;
            Ok(TrialOutcome {
                samples: r.samples_used as f64 / norm,
                distance: r.peak_estimate.distance(&subject.truth),
                areas: Vec::new(),
            })
        }
    }
}

/// Synthetic subjects: unit-peak field with a random centre in the middle of the unit square.
pub fn synthetic_subject(
    profile: &Profile,
) -> impl Fn(u64) -> Result<Subject<SeparableField>> + Sync + '_ {
    move |seed| {
        let roi = Rect::new(0.0, 1.0, 0.0, 1.0)?;
        let truth = random_center(seed, &roi, 0.2);
        Ok(Subject {
            field: unit_peak_field(profile, truth)?,
            roi,
            truth,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceKind {
    Exponential,
    PowerLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCase {
    pub name: String,
    pub kind: CoherenceKind,
    pub a: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoherenceConfig {
    pub sizes: Vec<usize>,
    pub half_width: f64,
    pub cases: Vec<CoherenceCase>,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        let case = |name: &str, kind, a, p| CoherenceCase {
            name: name.into(),
            kind,
            a,
            p,
        };
        Self {
            sizes: vec![101, 1001, 10001],
            half_width: 10.0,
            cases: vec![
                case("laplacian", CoherenceKind::Exponential, 1.0, 1.0),
                case("gaussian", CoherenceKind::Exponential, 1.0, 2.0),
                case("power_law", CoherenceKind::PowerLaw, 1.0, 2.0),
            ],
        }
    }
}

/// Numeric and infinite-support analytic coherence of a separable field
/// with identical row and column profiles, sampled at `n_points` cell
/// centres per side of `[-half_width, half_width]`. Returns `(numeric, analytic)`.
pub fn coherence_pair(
    case: &CoherenceCase,
    n_points: usize,
    half_width: f64,
) -> Result<(f64, f64)> {
    let len = 2.0 * half_width;
    let (profile, mu) = match case.kind {
        CoherenceKind::Exponential => (
            Profile::Exponential {
                rate: case.a,
                exponent: case.p,
            },
            analytic_coherence_exponential(case.a * len.powf(case.p), case.p, n_points * n_points)?,
        ),
        CoherenceKind::PowerLaw => (
            Profile::PowerLaw {
                offset: case.a,
                exponent: case.p,
                power: 1.0,
            },
            analytic_coherence_powerlaw(case.a / len.powf(case.p), case.p, n_points * n_points)?,
        ),
    };
    profile.validate()?;
    let u = unit_profile_vector(&profile, n_points, half_width);
    let numeric = numeric_coherence(&u, &u)?;
    Ok((numeric, coherence_parameter(mu, mu, n_points * n_points)))
}

pub fn coherence_table(cfg: &CoherenceConfig) -> Result<ExperimentTable> {
    let mut t =
        ExperimentTable::new().with_column("n", cfg.sizes.iter().map(|&n| n as f64).collect())?;
    for case in &cfg.cases {
        let pairs = cfg
            .sizes
            .iter()
            .map(|&n| coherence_pair(case, n, cfg.half_width))
            .collect::<Result<Vec<_>>>()?;
        t.push_column(
            format!("{}_numeric", case.name),
            pairs.iter().map(|p| p.0).collect(),
        )?;
        t.push_column(
            format!("{}_analytic", case.name),
            pairs.iter().map(|p| p.1).collect(),
        )?;
    }
    t.set_meta("half_width", cfg.half_width);
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElevationConfig {
    pub path: Option<PathBuf>,
    pub schema: CsvSchema,
    /// Latitude rows, longitude columns; defaults to the data bounds.
    pub roi: Option<Rect>,
    pub raster_n: usize,
    pub bench: BenchConfig,
}

impl Default for ElevationConfig {
    fn default() -> Self {
        Self {
            path: None,
            schema: CsvSchema::default(),
            roi: None,
            raster_n: 200,
            bench: BenchConfig {
                methods: vec![Method::Pamcur],
                alphas: vec![0.2, 0.3, 0.35, 0.4, 0.5],
                trials: 500,
                ..BenchConfig::default()
            },
        }
    }
}

/// Full experiment configuration, one section per experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub tradeoff: TradeoffConfig,
    pub sweep: SweepConfig,
    pub bench: BenchConfig,
    pub elevation: ElevationConfig,
    pub coherence: CoherenceConfig,
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Write `<stem>.csv`, `<stem>.svg` and `<stem>.json` (metadata) into `out`.
pub fn write_outputs(
    table: &ExperimentTable,
    out: &Path,
    stem: &str,
    x: &str,
    log_y: bool,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let csv = out.join(format!("{stem}.csv"));
    let svg = out.join(format!("{stem}.svg"));
    let meta = out.join(format!("{stem}.json"));
    emit_table(table, &csv, &TableFormat::Csv)?;
    emit_table(
        table,
        &svg,
        &TableFormat::Svg {
            x: x.into(),
            log_x: false,
            log_y,
        },
    )?;
    let mut m = table.metadata.clone();
    m.insert("run_id".into(), table.run_id());
    std::fs::write(&meta, serde_json::to_string_pretty(&m)?)?;
    Ok(vec![csv, svg, meta])
}

pub fn run_tradeoff(cfg: &HarnessConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let mut t = tradeoff_table(&cfg.tradeoff)?;
    t.set_meta("seed", seed);
    write_outputs(&t, out, "tradeoff", "rho", false)
}

pub fn run_sweep(cfg: &HarnessConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let t = detection_probability_sweep(&cfg.sweep, seed)?;
    std::fs::create_dir_all(out)?;
    let csv = out.join("sweep.csv");
    emit_table(&t, &csv, &TableFormat::Csv)?;
    let meta = out.join("sweep.json");
    let mut m = t.metadata.clone();
    m.insert("run_id".into(), t.run_id());
    std::fs::write(&meta, serde_json::to_string_pretty(&m)?)?;
    Ok(vec![csv, meta])
}

pub fn run_bench(cfg: &HarnessConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.bench.profile.validate()?;
    let (summary, areas) =
        samples_vs_error(synthetic_subject(&cfg.bench.profile), &cfg.bench, seed)?;
    let mut files = write_outputs(&summary, out, "bench", "samples", true)?;
    if areas.n_rows() > 0 {
        let p = out.join("bench_stage_areas.csv");
        emit_table(&areas, &p, &TableFormat::Csv)?;
        files.push(p);
    }
    Ok(files)
}

pub fn run_elevation(cfg: &HarnessConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let ec = &cfg.elevation;
    let path = ec
        .path
        .as_ref()
        .ok_or_else(|| Error::Config("elevation.path is not set".into()))?;
    let cloud = load_elevation(path, &ec.schema)?;
    let roi = ec.roi.unwrap_or(cloud.bounds);
    let raster = rasterize(&cloud, roi, ec.raster_n)?;
    let (pi, pj) = ground_truth_peak(&raster)?;
    let truth = CellGrid::new(roi, ec.raster_n, ec.raster_n)?.cell_center(pi, pj);
    let field = NearestNeighborField::new(&cloud)?;

    std::fs::create_dir_all(out)?;
    let raster_path = out.join("raster.csv");
    write_raster_csv(&raster_path, &raster)?;
    let make = |_seed: u64| {
        Ok(Subject {
            field: |p: Point| field.value(p),
            roi,
            truth,
        })
    };
    let (mut summary, areas) = samples_vs_error(make, &ec.bench, seed)?;
    summary.set_meta("points", cloud.len());
    summary.set_meta("malformed", cloud.malformed);
    let mut files = write_outputs(&summary, out, "elevation", "samples", true)?;
    let p = out.join("elevation_stage_areas.csv");
    if areas.n_rows() > 0 {
        emit_table(&areas, &p, &TableFormat::Csv)?;
        files.push(p);
    }
    files.push(raster_path);
    Ok(files)
}

pub fn run_coherence(cfg: &HarnessConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let mut t = coherence_table(&cfg.coherence)?;
    t.set_meta("seed", seed);
    write_outputs(&t, out, "coherence", "n", true)
}
