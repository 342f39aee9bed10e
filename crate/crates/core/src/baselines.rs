//! Comparison methods: plain completion with peak picking, completion with a
//! unimodal refit, nearest-neighbour interpolation, and mean-shift ascent.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::completion::complete_rank_r;
use crate::error::{Error, Result};
use crate::fields::Field;
use crate::geometry::{CellGrid, Point, Rect};
use crate::sampling::{
    derive_seed, observe_with, rng_from_seed, sample_uniform, NoiseModel, SampleSet,
};
use crate::unimodal::best_unimodal_fit;

const ALS_ITERS: usize = 2000;
const ALS_TOL: f64 = 1e-12;

/// First index of the largest value.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, x) in values.into_iter().enumerate() {
        if x > best.1 {
            best = (k, x);
        }
    }
    best.0
}

/// Row-major first index of the largest entry. Entries within a relative
/// `1e-12` of the maximum count as tied.
pub fn argmax_matrix(m: &DMatrix<f64>) -> (usize, usize) {
    let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = max - 1e-12 * max.abs();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if m[(i, j)] >= floor {
                return (i, j);
            }
        }
    }
    (0, 0)
}

fn dominant_pair(
    samples: &SampleSet,
    n_rows: usize,
    n_cols: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let c = complete_rank_r(samples, n_rows, n_cols, 1, ALS_ITERS, ALS_TOL)?;
    Ok((c.u.abs(), c.v.abs()))
}

/// Rank-one completion, then the largest entries of `|u|` and `|v|`.
pub fn mc_only_stage(samples: &SampleSet, n_rows: usize, n_cols: usize) -> Result<(usize, usize)> {
    let (u, v) = dominant_pair(samples, n_rows, n_cols)?;
    Ok((argmax(u.iter().copied()), argmax(v.iter().copied())))
}

/// As [`mc_only_stage`] after replacing `|u|` and `|v|` by their best unimodal fits.
pub fn mc_uni_stage(samples: &SampleSet, n_rows: usize, n_cols: usize) -> Result<(usize, usize)> {
    let (u, v) = dominant_pair(samples, n_rows, n_cols)?;
    let fu = best_unimodal_fit(u.as_slice())?;
    let fv = best_unimodal_fit(v.as_slice())?;
    Ok((argmax(fu.z), argmax(fv.z)))
}

/// Fill every unobserved cell with the value of the nearest observed cell
/// (Euclidean in index space; ties go to the smaller row, then column).
pub fn impute_nearest(samples: &SampleSet, n_rows: usize, n_cols: usize) -> Result<DMatrix<f64>> {
    samples.check_bounds(n_rows, n_cols)?;
    let mut known: DMatrix<Option<f64>> = DMatrix::from_element(n_rows, n_cols, None);
    for ((i, j), v) in samples.iter() {
        known[(i, j)] = Some(v);
    }
    let reach = n_rows.max(n_cols) as i64;
    let mut out = DMatrix::zeros(n_rows, n_cols);
    for i in 0..n_rows {
        for j in 0..n_cols {
            if let Some(v) = known[(i, j)] {
                out[(i, j)] = v;
                continue;
            }
            // (d^2, row, col, value)
            let mut best: Option<(i64, usize, usize, f64)> = None;
            for r in 1..=reach {
                if best.is_some_and(|b| r * r > b.0) {
                    break;
                }
                let (ii, jj) = (i as i64, j as i64);
                for a in (ii - r)..=(ii + r) {
                    if a < 0 || a >= n_rows as i64 {
                        continue;
                    }
                    let on_edge = a == ii - r || a == ii + r;
                    let step = if on_edge { 1 } else { 2 * r };
                    let mut b = jj - r;
                    while b <= jj + r {
                        if b >= 0 && b < n_cols as i64 {
                            if let Some(v) = known[(a as usize, b as usize)] {
                                let d2 = (a - ii).pow(2) + (b - jj).pow(2);
                                let cand = (d2, a as usize, b as usize, v);
                                let better = match best {
                                    None => true,
                                    Some(o) => (cand.0, cand.1, cand.2) < (o.0, o.1, o.2),
                                };
                                if better {
                                    best = Some(cand);
                                }
                            }
                        }
                        b += step;
                    }
                }
            }
            out[(i, j)] = best.map(|b| b.3).expect("sample set is nonempty");
        }
    }
    Ok(out)
}

/// Box moving average with an odd `window`; edge cells average over the
/// part of the window inside the matrix.
pub fn moving_average(m: &DMatrix<f64>, window: usize) -> Result<DMatrix<f64>> {
    if window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "window must be odd, got {window}"
        )));
    }
    let (nr, nc) = m.shape();
    let h = window / 2;
    Ok(DMatrix::from_fn(nr, nc, |i, j| {
        let (r0, r1) = (i.saturating_sub(h), (i + h + 1).min(nr));
        let (c0, c1) = (j.saturating_sub(h), (j + h + 1).min(nc));
        let s: f64 = m.view((r0, c0), (r1 - r0, c1 - c0)).iter().sum();
        s / ((r1 - r0) * (c1 - c0)) as f64
    }))
}

/// Nearest-neighbour fill, smoothing, then the largest cell.
pub fn interp_stage(
    samples: &SampleSet,
    n_rows: usize,
    n_cols: usize,
    window: usize,
) -> Result<(usize, usize)> {
    let filled = impute_nearest(samples, n_rows, n_cols)?;
    Ok(argmax_matrix(&moving_average(&filled, window)?))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeanShiftResult {
    pub peak: (usize, usize),
    /// One entry per cluster that ended in a new peak.
    pub peaks: Vec<(usize, usize)>,
    pub trails: Vec<Vec<(usize, usize)>>,
    /// Distinct cells read.
    pub samples_used: usize,
}

struct CachedOracle<F> {
    read: F,
    cache: HashMap<(usize, usize), f64>,
}

impl<F: FnMut(usize, usize) -> f64> CachedOracle<F> {
    fn get(&mut self, i: usize, j: usize) -> f64 {
        if let Some(v) = self.cache.get(&(i, j)) {
            return *v;
        }
        let v = (self.read)(i, j);
        self.cache.insert((i, j), v);
        v
    }
}

const COMPASS: [(i64, i64); 8] = [
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

/// Quantize a displacement `(d_row, d_col)` to one of the eight neighbours,
/// or to no move when it is (numerically) zero.
pub fn quantize_step(d_row: f64, d_col: f64, scale: f64) -> (i64, i64) {
    if d_row.hypot(d_col) < 1e-9 * scale.max(1.0) {
        return (0, 0);
    }
    let sector = (d_row.atan2(d_col) / std::f64::consts::FRAC_PI_4).round() as i64;
    COMPASS[sector.rem_euclid(8) as usize]
}

/// Mean-shift gradient ascent with `restarts` random starts on an
/// `n_rows x n_cols` grid read through `oracle`.
///
/// Each step moves to the neighbour in the quantized direction of the
/// value-weighted centre of mass over the in-grid cells within Chebyshev
/// distance `omega`, measured from that window's geometric centre. A trail stops on reaching a visited cell or on a zero
/// move. Only trails that close on themselves add a peak (their highest
/// cell); trails that run into an older cluster join it.
pub fn mean_shift_run<F>(
    oracle: F,
    n_rows: usize,
    n_cols: usize,
    omega: usize,
    restarts: usize,
    seed: u64,
) -> Result<MeanShiftResult>
where
    F: FnMut(usize, usize) -> f64,
{
    if omega == 0 || restarts == 0 || n_rows == 0 || n_cols == 0 {
        return Err(Error::InvalidArgument(
            "need omega >= 1, restarts >= 1 and a nonempty grid".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let starts: Vec<(usize, usize)> = (0..restarts)
        .map(|_| (rng.random_range(0..n_rows), rng.random_range(0..n_cols)))
        .collect();
    mean_shift_from(oracle, n_rows, n_cols, omega, &starts)
}

/// [`mean_shift_run`] with explicit start cells.
pub fn mean_shift_from<F>(
    oracle: F,
    n_rows: usize,
    n_cols: usize,
    omega: usize,
    starts: &[(usize, usize)],
) -> Result<MeanShiftResult>
where
    F: FnMut(usize, usize) -> f64,
{
    if omega == 0 || starts.is_empty() {
        return Err(Error::InvalidArgument(
            "need omega >= 1 and at least one start".into(),
        ));
    }
    let mut oracle = CachedOracle {
        read: oracle,
        cache: HashMap::new(),
    };
    let mut cluster: DMatrix<usize> = DMatrix::zeros(n_rows, n_cols);
    let mut next_id = 1;
    let mut result = MeanShiftResult::default();
    let mut best_value = f64::NEG_INFINITY;

    for &(r0, c0) in starts {
        if r0 >= n_rows || c0 >= n_cols {
            return Err(Error::IndexOutOfBounds {
                row: r0,
                col: c0,
                n_rows,
                n_cols,
            });
        }
        let id = next_id;
        let (mut r, mut c) = (r0, c0);
        let mut trail = Vec::new();
        let mut closed_on_self = true;
        loop {
            if cluster[(r, c)] != 0 {
                closed_on_self = cluster[(r, c)] == id;
                break;
            }
            cluster[(r, c)] = id;
            trail.push((r, c));

            let (ra, rb) = (r.saturating_sub(omega), (r + omega).min(n_rows - 1));
            let (ca, cb) = (c.saturating_sub(omega), (c + omega).min(n_cols - 1));
            let (mut w, mut sr, mut sc) = (0.0, 0.0, 0.0);
            for i in ra..=rb {
                for j in ca..=cb {
                    let x = oracle.get(i, j);
                    w += x;
                    sr += x * i as f64;
                    sc += x * j as f64;
                }
            }
            // Measured from the window's geometric centre, which is the
            // current cell except where the window is clipped by the border.
            let (gr, gc) = (0.5 * (ra + rb) as f64, 0.5 * (ca + cb) as f64);
            let (dr, dc) = if w.abs() > 0.0 {
                (sr / w - gr, sc / w - gc)
            } else {
                (0.0, 0.0)
            };
            let (sr, sc) = quantize_step(dr, dc, omega as f64);
            if (sr, sc) == (0, 0) {
                break;
            }
            let nr = (r as i64 + sr).clamp(0, n_rows as i64 - 1) as usize;
            let nc = (c as i64 + sc).clamp(0, n_cols as i64 - 1) as usize;
            if (nr, nc) == (r, c) {
                break;
            }
            (r, c) = (nr, nc);
        }

        if !trail.is_empty() && closed_on_self {
            let top = trail
                .iter()
                .copied()
                .max_by(|a, b| {
                    oracle
                        .get(a.0, a.1)
                        .total_cmp(&oracle.get(b.0, b.1))
                        .then(b.cmp(a))
                })
                .expect("nonempty");
            let value = oracle.get(top.0, top.1);
            result.peaks.push(top);
            if value > best_value {
                best_value = value;
                result.peak = top;
            }
            next_id += 1;
        } else if !trail.is_empty() {
            let joined = cluster[(r, c)];
            for &(a, b) in &trail {
                cluster[(a, b)] = joined;
            }
        }
        result.trails.push(trail);
    }

    if result.peaks.is_empty() {
        // Every start landed on a visited cell of an earlier run; cannot happen on the first start.
        result.peak = starts[0];
    }
    result.samples_used = oracle.cache.len();
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    McOnly,
    McUni,
    Interp { window: usize },
    MeanShift { omega: usize, restarts: usize },
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::McOnly => "mc_only",
            Baseline::McUni => "mc_uni",
            Baseline::Interp { .. } => "interp",
            Baseline::MeanShift { .. } => "mean_shift",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub grid_n: usize,
    pub alpha: f64,
    pub kappa: f64,
    pub max_stages: usize,
    pub stop_tolerance: f64,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            grid_n: 50,
            alpha: 0.5,
            kappa: 0.5,
            max_stages: 6,
            stop_tolerance: 1e-3,
            noise: NoiseModel::None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub peak_estimate: Point,
    pub samples_used: usize,
    pub stages: usize,
    pub stage_peaks: Vec<Point>,
    pub stage_rois: Vec<Rect>,
}

/// Peak cell of one stage of `algorithm`, and the number of samples it took.
pub fn baseline_stage<F>(
    algorithm: Baseline,
    read: F,
    n: usize,
    alpha: f64,
    noise: NoiseModel,
    seed: u64,
) -> Result<((usize, usize), usize)>
where
    F: Fn(usize, usize) -> f64,
{
    if let Baseline::MeanShift { omega, restarts } = algorithm {
        let mut rng = rng_from_seed(derive_seed(seed, 1));
        let normal = match noise {
            NoiseModel::Gaussian { std } if std > 0.0 => {
                Some(Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?)
            }
            _ => None,
        };
        let noisy = |i, j| read(i, j) + normal.as_ref().map_or(0.0, |d| d.sample(&mut rng));
        let res = mean_shift_run(noisy, n, n, omega, restarts, derive_seed(seed, 0))?;
        return Ok((res.peak, res.samples_used));
    }
    let cells = n * n;
    let m = ((alpha * cells as f64).ceil() as usize).clamp(1, cells);
    let idx = sample_uniform(n, n, m, derive_seed(seed, 0))?;
    let samples = observe_with(read, &idx, noise, derive_seed(seed, 1))?;
    let cell = match algorithm {
        Baseline::McOnly => mc_only_stage(&samples, n, n)?,
        Baseline::McUni => mc_uni_stage(&samples, n, n)?,
        Baseline::Interp { window } => interp_stage(&samples, n, n, window)?,
        Baseline::MeanShift { .. } => unreachable!("handled above"),
    };
    Ok((cell, m))
}

/// Multi-stage driver: each stage re-grids the ROI and the next ROI is the
/// `kappa`-scaled rectangle centred on the stage peak, shifted to stay inside.
pub fn run_baseline_multistage<F: Field + ?Sized>(
    algorithm: Baseline,
    field: &F,
    roi: Rect,
    config: &BaselineConfig,
) -> Result<BaselineResult> {
    if config.grid_n == 0 || config.max_stages == 0 {
        return Err(Error::Config(
            "grid_n and max_stages must be positive".into(),
        ));
    }
    if !(config.kappa > 0.0 && config.kappa <= 1.0) {
        return Err(Error::Config(format!(
            "kappa must lie in (0, 1], got {}",
            config.kappa
        )));
    }
    if !(config.alpha > 0.0 && config.alpha <= 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1], got {}",
            config.alpha
        )));
    }
    config.noise.validate()?;
    let n = config.grid_n;
    let tolerance = config.stop_tolerance * roi.diameter();
    let mut current = roi;
    let mut total = 0;
    let mut peaks: Vec<Point> = Vec::new();
    let mut rois = Vec::new();

    for k in 0..config.max_stages {
        let grid = CellGrid::new(current, n, n)?;
        let (cell, used) = baseline_stage(
            algorithm,
            |i, j| field.value(grid.cell_center(i, j)),
            n,
            config.alpha,
            config.noise,
            derive_seed(config.seed, k as u64),
        )?;
        total += used;
        let peak = grid.cell_center(cell.0, cell.1);
        rois.push(current);
        let moved = peaks.last().map(|p| p.distance(&peak));
        peaks.push(peak);
        if moved.is_some_and(|d| d < tolerance) {
            break;
        }
        current = current.scaled_within(peak, config.kappa);
    }

    Ok(BaselineResult {
        peak_estimate: *peaks.last().expect("at least one stage"),
        samples_used: total,
        stages: peaks.len(),
        stage_peaks: peaks,
        stage_rois: rois,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::observe;

    fn full(h: &DMatrix<f64>) -> SampleSet {
        let idx: Vec<_> = (0..h.nrows())
            .flat_map(|i| (0..h.ncols()).map(move |j| (i, j)))
            .collect();
        observe(h, &idx, NoiseModel::None, 0).unwrap()
    }

    fn tent(n: usize, pr: usize, pc: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            (-(i as f64 - pr as f64).abs() / 4.0).exp()
                * (-(j as f64 - pc as f64).abs() / 3.0).exp()
        })
    }

    #[test]
    fn mc_variants_on_full_data() {
        let h = tent(20, 5, 13);
        assert_eq!(mc_only_stage(&full(&h), 20, 20).unwrap(), (5, 13));
        assert_eq!(mc_uni_stage(&full(&h), 20, 20).unwrap(), (5, 13));
        let flat = DMatrix::from_element(6, 6, 2.0);
        assert_eq!(mc_only_stage(&full(&flat), 6, 6).unwrap(), (0, 0));
    }

    #[test]
    fn interp_full_and_single() {
        let h = tent(12, 3, 8);
        assert_eq!(interp_stage(&full(&h), 12, 12, 1).unwrap(), (3, 8));
        let one = observe(&h, &[(7, 2)], NoiseModel::None, 0).unwrap();
        assert_eq!(interp_stage(&one, 12, 12, 3).unwrap(), (0, 0));
        assert!(impute_nearest(&one, 12, 12)
            .unwrap()
            .iter()
            .all(|x| *x == h[(7, 2)]));
    }

    #[test]
    fn nearest_tie_prefers_smaller_row_then_column() {
        let s = SampleSet::new(vec![(0, 1), (2, 1), (1, 0)], vec![1.0, 2.0, 3.0], 0.0, 0).unwrap();
        let m = impute_nearest(&s, 3, 3).unwrap();
        // (1, 1) is at distance 1 from all three samples.
        assert_eq!(m[(1, 1)], 1.0);
        // (1, 2): (0, 1) and (2, 1) at d^2 = 2, (1, 0) at 4.
        assert_eq!(m[(1, 2)], 1.0);
    }

    #[test]
    fn moving_average_edges() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let s = moving_average(&m, 3).unwrap();
        assert_eq!(s[(0, 0)], (1.0 + 2.0 + 4.0 + 5.0) / 4.0);
        assert_eq!(s[(1, 1)], 21.0 / 6.0);
        assert_eq!(moving_average(&m, 1).unwrap(), m);
        assert!(moving_average(&m, 2).is_err());
    }

    #[test]
    fn quantizer_directions() {
        assert_eq!(quantize_step(0.0, 1.0, 1.0), (0, 1));
        assert_eq!(quantize_step(1.0, 1.0, 1.0), (1, 1));
        assert_eq!(quantize_step(-1.0, 0.1, 1.0), (-1, 0));
        assert_eq!(quantize_step(0.0, -2.0, 1.0), (0, -1));
        assert_eq!(quantize_step(0.0, 0.0, 1.0), (0, 0));
    }

    #[test]
    fn ramp_trail_reaches_top_corner() {
        let n = 15;
        let res = mean_shift_from(|i, j| 1.0 + (i + j) as f64, n, n, 2, &[(0, 0)]).unwrap();
        assert_eq!(res.peak, (n - 1, n - 1));
        assert_eq!(*res.trails[0].last().unwrap(), (n - 1, n - 1));
        let trail = &res.trails[0];
        assert!(trail.windows(2).all(|w| w[1].0 + w[1].1 > w[0].0 + w[0].1));
    }

    #[test]
    fn constant_field_stops_immediately() {
        let res = mean_shift_from(|_, _| 1.0, 9, 9, 2, &[(4, 4)]).unwrap();
        assert_eq!(res.trails[0], vec![(4, 4)]);
        assert_eq!(res.peaks, vec![(4, 4)]);
        assert_eq!(res.samples_used, 25);
    }

    #[test]
    fn second_start_on_first_trail_joins() {
        let f = |i: usize, j: usize| 1.0 + (i + j) as f64;
        let first = mean_shift_from(f, 10, 10, 1, &[(0, 0)]).unwrap();
        let on_trail = first.trails[0][2];
        let both = mean_shift_from(f, 10, 10, 1, &[(0, 0), on_trail]).unwrap();
        assert_eq!(both.peaks.len(), 1);
        assert!(both.trails[1].is_empty());
    }

    #[test]
    fn kappa_one_keeps_roi() {
        let field = crate::fields::SeparableField::isotropic(
            crate::fields::Profile::laplacian(0.1),
            Point::new(0.3, 0.6),
        )
        .unwrap();
        let roi = Rect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let cfg = BaselineConfig {
            kappa: 1.0,
            max_stages: 3,
            stop_tolerance: 0.0,
            grid_n: 20,
            ..BaselineConfig::default()
        };
        let res = run_baseline_multistage(Baseline::McOnly, &field, roi, &cfg).unwrap();
        assert!(res.stage_rois.iter().all(|r| *r == roi));
        assert_eq!(res.samples_used, 3 * 200);
    }
}
