//! Coarse-to-fine search: repeat a localization stage on the box returned by
//! the previous stage.

use serde::{Deserialize, Serialize};

use crate::completion::CompletionConfig;
use crate::error::{Error, Result};
use crate::fields::Field;
use crate::geometry::{CellGrid, Point, Rect};
use crate::localize::{pamcur_stage, LocalizationBox, StageParams, ZetaMode};
use crate::sampling::{derive_seed, NoiseModel};

const STALL_LIMIT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub grid_n: usize,
    /// Fraction of the `grid_n^2` cells sampled at each stage.
    pub alpha: f64,
    pub noise: NoiseModel,
    pub max_stages: usize,
    /// Stop once the peak estimate moves less than this fraction of the initial ROI diameter.
    pub stop_tolerance: f64,
    pub seed: u64,
    pub zeta_mode: ZetaMode,
    pub completion: CompletionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid_n: 50,
            alpha: 0.5,
            noise: NoiseModel::None,
            max_stages: 6,
            stop_tolerance: 1e-3,
            seed: 0,
            zeta_mode: ZetaMode::Empirical,
            completion: CompletionConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn budget(&self) -> usize {
        let cells = self.grid_n * self.grid_n;
        ((self.alpha * cells as f64).ceil() as usize).min(cells)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_n == 0 {
            return Err(Error::Config("grid_n must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.alpha * ((self.grid_n * self.grid_n) as f64) < 1.0 {
            return Err(Error::Config("alpha * grid_n^2 must be at least 1".into()));
        }
        if self.max_stages == 0 {
            return Err(Error::Config("max_stages must be positive".into()));
        }
        if self.stop_tolerance.is_nan() || self.stop_tolerance < 0.0 {
            return Err(Error::Config("stop_tolerance must be >= 0".into()));
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub roi: Rect,
    pub bounds: LocalizationBox,
    /// Physical cover of `bounds`; the next stage's ROI.
    pub box_physical: Rect,
    pub samples: usize,
    pub rho: f64,
    pub sigma: f64,
    pub zeta: f64,
    pub low_snr: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub stages: Vec<StageTrace>,
    pub final_box_physical: Rect,
    pub peak_estimate: Point,
    pub total_samples: usize,
    /// Stopped after repeated low-SNR stages.
    pub stalled: bool,
}

/// Physical centre of the cells covered by `bounds` on the grid over `roi`.
pub fn peak_estimate_from_box(
    bounds: &LocalizationBox,
    roi: Rect,
    n_rows: usize,
    n_cols: usize,
) -> Result<Point> {
    if bounds.row_lo > bounds.row_hi
        || bounds.col_lo > bounds.col_hi
        || bounds.row_hi >= n_rows
        || bounds.col_hi >= n_cols
    {
        return Err(Error::InvalidArgument(format!(
            "box {bounds:?} outside a {n_rows}x{n_cols} grid"
        )));
    }
    let grid = CellGrid::new(roi, n_rows, n_cols)?;
    Ok(grid
        .cover(
            (bounds.row_lo, bounds.row_hi),
            (bounds.col_lo, bounds.col_hi),
        )
        .center())
}

/// Multi-stage localization of the peak of `field` inside `roi`.
pub fn run_pamcur<F: Field + ?Sized>(
    field: &F,
    roi: Rect,
    config: &RunConfig,
) -> Result<RunResult> {
    config.validate()?;
    let n = config.grid_n;
    let params = StageParams {
        budget: config.budget(),
        noise: config.noise,
        zeta_mode: config.zeta_mode,
        completion: config.completion,
    };
    let tolerance = config.stop_tolerance * roi.diameter();

    let mut current = roi;
    let mut stages = Vec::new();
    let mut total = 0;
    let mut stalls = 0;
    let mut stalled = false;
    let mut estimate: Option<Point> = None;

    for k in 0..config.max_stages {
        let grid = CellGrid::new(current, n, n)?;
        let stage = pamcur_stage(
            |i, j| field.value(grid.cell_center(i, j)),
            n,
            n,
            &params,
            derive_seed(config.seed, k as u64),
        )?;
        total += stage.samples_used;
        let next = grid.cover(
            (stage.bounds.row_lo, stage.bounds.row_hi),
            (stage.bounds.col_lo, stage.bounds.col_hi),
        );
        stages.push(StageTrace {
            roi: current,
            bounds: stage.bounds,
            box_physical: next,
            samples: stage.samples_used,
            rho: stage.rho,
            sigma: stage.completion.sigma,
            zeta: stage.zeta,
            low_snr: stage.low_snr,
        });

        if stage.low_snr {
            stalls += 1;
            if stalls >= STALL_LIMIT {
                stalled = true;
                break;
            }
            continue;
        }

        let point = next.center();
        let moved = estimate.map(|p| p.distance(&point));
        estimate = Some(point);
        let shrank = next.area() < current.area();
        current = next;
        if !shrank || moved.is_some_and(|d| d < tolerance) {
            break;
        }
    }

    Ok(RunResult {
        final_box_physical: current,
        peak_estimate: estimate.unwrap_or_else(|| current.center()),
        total_samples: total,
        stages,
        stalled,
    })
}
