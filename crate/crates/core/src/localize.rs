//! One localization stage: sample, complete, take the dominant singular
//! pair, and bound the peak along each axis.
//!
//! Also holds the closed-form bounds that relate the reconstruction error
//! `zeta` to the alignment between true and estimated singular vectors.

use serde::{Deserialize, Serialize};

use crate::completion::{c_qn, CompletionConfig, CompletionResult};
use crate::error::{Error, Result};
use crate::sampling::{derive_seed, observe_with, sample_uniform, NoiseModel};
use crate::unimodal::cone_support;

/// Inclusive 0-based index bounds on the peak cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizationBox {
    pub row_lo: usize,
    pub row_hi: usize,
    pub col_lo: usize,
    pub col_hi: usize,
}

impl LocalizationBox {
    pub fn full(n_rows: usize, n_cols: usize) -> Self {
        Self {
            row_lo: 0,
            row_hi: n_rows.saturating_sub(1),
            col_lo: 0,
            col_hi: n_cols.saturating_sub(1),
        }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row_lo..=self.row_hi).contains(&row) && (self.col_lo..=self.col_hi).contains(&col)
    }

    pub fn n_rows(&self) -> usize {
        self.row_hi - self.row_lo + 1
    }

    pub fn n_cols(&self) -> usize {
        self.col_hi - self.col_lo + 1
    }

    pub fn cells(&self) -> usize {
        self.n_rows() * self.n_cols()
    }
}

/// How the reconstruction-error bound `zeta` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZetaMode {
    /// Worst-case `C(q, n) eps m`, with `n` the larger grid side.
    Formula,
    /// Observed residual scaled up to the whole grid, `r sqrt(n_r n_c / m)`.
    #[default]
    Empirical,
    Fixed {
        zeta: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    pub budget: usize,
    pub noise: NoiseModel,
    pub zeta_mode: ZetaMode,
    pub completion: CompletionConfig,
}

impl StageParams {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            noise: NoiseModel::None,
            zeta_mode: ZetaMode::Empirical,
            completion: CompletionConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StageResult {
    pub bounds: LocalizationBox,
    pub completion: CompletionResult,
    pub zeta: f64,
    pub rho: f64,
    pub samples_used: usize,
    pub low_snr: bool,
    /// False when some axis had no feasible peak index and fell back to the full range.
    pub feasible: bool,
}

/// Alignment lower bound `<u0, u><v0, v> >= eta` for a perturbation of norm
/// `zeta` that leaves top singular value `sigma` (true value `sigma0`).
///
/// Defined for `0 <= zeta <= sigma` and `sigma0 > 0`.
pub fn eta(sigma: f64, sigma0: f64, zeta: f64) -> Result<f64> {
    if !(sigma0 > 0.0 && zeta >= 0.0 && zeta <= sigma && sigma.is_finite() && sigma0.is_finite()) {
        return Err(Error::domain(
            "eta",
            format!("need 0 <= zeta <= sigma and sigma0 > 0, got sigma={sigma}, sigma0={sigma0}, zeta={zeta}"),
        ));
    }
    let r = sigma / sigma0;
    let z = zeta / sigma0;
    let disc = ((1.0 - r).powi(2) + r * r - z * z).max(0.0);
    Ok((1.0 - r) + disc.sqrt())
}

/// `sqrt(1 - zeta^2 / sigma^2)`, the part of [`eta`] computable without `sigma0`.
pub fn eta_floor(sigma: f64, zeta: f64) -> Result<f64> {
    if !(sigma > 0.0 && zeta >= 0.0 && zeta <= sigma) {
        return Err(Error::domain(
            "eta_floor",
            format!("need 0 <= zeta <= sigma, sigma > 0, got sigma={sigma}, zeta={zeta}"),
        ));
    }
    let t = zeta / sigma;
    Ok((1.0 - t * t).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisBounds {
    pub lo: usize,
    pub hi: usize,
    pub feasible: bool,
}

const SUPPORT_SLACK: f64 = 1e-12;

/// Peak indices `l` whose unimodal cone holds a unit vector within angle
/// `acos(rho)` of `|u|`; returns the smallest and largest such `l`.
pub fn localize_axis(u: &[f64], rho: f64) -> Result<AxisBounds> {
    let n = u.len();
    if n == 0 {
        return Err(Error::Empty("singular vector"));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!(
            "rho must lie in [0, 1], got {rho}"
        )));
    }
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidArgument(
            "singular vector must be nonzero and finite".into(),
        ));
    }
    let w: Vec<f64> = u.iter().map(|x| x.abs() / norm).collect();
    let mut feasible = Vec::new();
    for l in 0..n {
        if cone_support(&w, l)? >= rho - SUPPORT_SLACK {
            feasible.push(l);
        }
    }
    Ok(match (feasible.first(), feasible.last()) {
        (Some(&lo), Some(&hi)) => AxisBounds {
            lo,
            hi,
            feasible: true,
        },
        _ => AxisBounds {
            lo: 0,
            hi: n - 1,
            feasible: false,
        },
    })
}

fn stage_zeta(
    mode: ZetaMode,
    c: &CompletionResult,
    n_rows: usize,
    n_cols: usize,
    m: usize,
    eps: f64,
) -> Result<f64> {
    match mode {
        ZetaMode::Empirical => Ok(c.residual * ((n_rows * n_cols) as f64 / m as f64).sqrt()),
        ZetaMode::Formula => {
            let q = m as f64 / (n_rows * n_cols) as f64;
            Ok(c_qn(q, n_rows.max(n_cols)) * eps * m as f64)
        }
        ZetaMode::Fixed { zeta } if zeta >= 0.0 => Ok(zeta),
        ZetaMode::Fixed { zeta } => Err(Error::InvalidArgument(format!(
            "fixed zeta must be >= 0, got {zeta}"
        ))),
    }
}

/// Run one stage on an `n_rows x n_cols` grid whose cell values are read
/// through `oracle`.
pub fn pamcur_stage<F>(
    oracle: F,
    n_rows: usize,
    n_cols: usize,
    params: &StageParams,
    seed: u64,
) -> Result<StageResult>
where
    F: Fn(usize, usize) -> f64,
{
    let m = params.budget;
    let indices = sample_uniform(n_rows, n_cols, m, derive_seed(seed, 0))?;
    let samples = observe_with(oracle, &indices, params.noise, derive_seed(seed, 1))?;
    let completion =
        params
            .completion
            .complete(&samples, n_rows, n_cols, params.noise.eps() * m as f64)?;
    let zeta = stage_zeta(
        params.zeta_mode,
        &completion,
        n_rows,
        n_cols,
        m,
        params.noise.eps(),
    )?;
    let sigma = completion.sigma;

    if sigma.is_nan() || sigma <= 0.0 || zeta >= sigma {
        return Ok(StageResult {
            bounds: LocalizationBox::full(n_rows, n_cols),
            completion,
            zeta,
            rho: 0.0,
            samples_used: m,
            low_snr: true,
            feasible: true,
        });
    }

    let rho = eta_floor(sigma, zeta)?;
    let rows = localize_axis(completion.u.as_slice(), rho)?;
    let cols = localize_axis(completion.v.as_slice(), rho)?;
    Ok(StageResult {
        bounds: LocalizationBox {
            row_lo: rows.lo,
            row_hi: rows.hi,
            col_lo: cols.lo,
            col_hi: cols.hi,
        },
        completion,
        zeta,
        rho,
        samples_used: m,
        low_snr: false,
        feasible: rows.feasible && cols.feasible,
    })
}

/// Prefix/suffix l1 thresholds on a unit unimodal vector.
///
/// Positions are 1-based: `left` is the largest `j` with `||u0[1..=j]||_1 <= t`
/// and `right` the smallest `j` with `||u0[j..=n]||_1 <= t`, where
/// `t = zeta_prime / sqrt(2)`. `None` means no index qualifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Thresholds {
    pub left: Option<usize>,
    pub right: Option<usize>,
}

pub fn theorem2_thresholds(u0: &[f64], zeta_prime: f64) -> Result<Thresholds> {
    const OP: &str = "theorem2_thresholds";
    if zeta_prime.is_nan() || zeta_prime <= 0.0 {
        return Err(Error::domain(
            OP,
            format!("zeta_prime must be positive, got {zeta_prime}"),
        ));
    }
    if u0.is_empty() {
        return Err(Error::Empty("vector"));
    }
    if u0.iter().any(|x| *x < 0.0) {
        return Err(Error::domain(OP, "vector must be nonnegative"));
    }
    let norm = u0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::domain(
            OP,
            format!("vector must have unit norm, got {norm}"),
        ));
    }
    let t = zeta_prime / std::f64::consts::SQRT_2;
    let n = u0.len();

    let mut left = None;
    let mut acc = 0.0;
    for (j, x) in u0.iter().enumerate() {
        acc += x;
        if acc <= t {
            left = Some(j + 1);
        } else {
            break;
        }
    }
    let mut right = None;
    acc = 0.0;
    for j in (0..n).rev() {
        acc += u0[j];
        if acc <= t {
            right = Some(j + 1);
        } else {
            break;
        }
    }
    Ok(Thresholds { left, right })
}

/// Area bound `16 rho_u^2 rho_v^2 n^2 / zeta'^4` on the localized region.
pub fn theorem2_region_bound(rho_u: f64, rho_v: f64, n: usize, zeta_prime: f64) -> Result<f64> {
    if !(rho_u > 0.0 && rho_v > 0.0 && zeta_prime > 0.0 && n > 0) {
        return Err(Error::domain(
            "theorem2_region_bound",
            "inputs must be positive",
        ));
    }
    let nf = n as f64;
    Ok(16.0 * rho_u.powi(2) * rho_v.powi(2) * nf * nf / zeta_prime.powi(4))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaPrime {
    pub value: f64,
    /// The shrinkage guarantee needs a positive value, i.e. `zeta^2 / sigma^2 < 7/16`.
    pub positive: bool,
}

/// `zeta' = 4 sqrt(1 - zeta^2 / sigma^2) - 3`.
pub fn zeta_prime(zeta: f64, sigma: f64) -> Result<ZetaPrime> {
    let value = 4.0 * eta_floor(sigma, zeta)? - 3.0;
    Ok(ZetaPrime {
        value,
        positive: value > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eta_examples() {
        assert_relative_eq!(eta(1.0, 1.0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(eta(1.0, 1.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(
            eta(0.9, 1.0, 0.5).unwrap(),
            0.1 + 0.57f64.sqrt(),
            max_relative = 1e-14
        );
        assert_relative_eq!(eta(0.9, 1.0, 0.5).unwrap(), 0.8550, epsilon = 1e-4);
        assert!(eta(1.0, 1.0, 1.5).is_err());
        assert!(eta(1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn floor_examples() {
        assert_eq!(eta_floor(2.0, 0.0).unwrap(), 1.0);
        assert_eq!(eta_floor(2.0, 2.0).unwrap(), 0.0);
        assert!(eta_floor(1.0, 2.0).is_err());
    }

    #[test]
    fn zeta_prime_examples() {
        assert_eq!(zeta_prime(0.0, 1.0).unwrap().value, 1.0);
        let b = zeta_prime(7f64.sqrt(), 4.0).unwrap();
        assert!(b.value.abs() < 1e-15);
        assert_relative_eq!(
            zeta_prime(0.3, 1.0).unwrap().value,
            4.0 * 0.91f64.sqrt() - 3.0
        );
        assert_relative_eq!(zeta_prime(0.3, 1.0).unwrap().value, 0.8158, epsilon = 1e-4);
        assert!(!zeta_prime(0.9, 1.0).unwrap().positive);
    }

    #[test]
    fn region_bound() {
        let z = 0.7;
        assert_relative_eq!(
            theorem2_region_bound(z / 2.0, z / 2.0, 30, z).unwrap(),
            900.0,
            max_relative = 1e-12
        );
        let a = theorem2_region_bound(0.4, 0.6, 10, 0.5).unwrap();
        let b = theorem2_region_bound(0.2, 0.3, 10, 0.5).unwrap();
        assert_relative_eq!(a / b, 16.0, max_relative = 1e-12);
    }

    #[test]
    fn axis_one_hot_and_uniform() {
        let mut e = vec![0.0; 7];
        e[4] = 1.0;
        assert_eq!(
            localize_axis(&e, 1.0).unwrap(),
            AxisBounds {
                lo: 4,
                hi: 4,
                feasible: true
            }
        );
        let flat = vec![0.25; 16];
        for rho in [0.0, 0.5, 0.99, 1.0] {
            assert_eq!(
                localize_axis(&flat, rho).unwrap(),
                AxisBounds {
                    lo: 0,
                    hi: 15,
                    feasible: true
                }
            );
        }
    }

    #[test]
    fn axis_uses_absolute_values() {
        let u = [-0.1, -0.2, -0.9, -0.2, -0.1];
        let pos: Vec<f64> = u.iter().map(|x: &f64| x.abs()).collect();
        assert_eq!(
            localize_axis(&u, 0.99).unwrap(),
            localize_axis(&pos, 0.99).unwrap()
        );
    }

    #[test]
    fn thresholds_one_hot() {
        let mut e = vec![0.0; 9];
        e[3] = 1.0;
        let t = theorem2_thresholds(&e, 0.5).unwrap();
        assert_eq!(t.left, Some(3));
        assert_eq!(t.right, Some(5));
        assert!(theorem2_thresholds(&e, 0.0).is_err());
    }

    #[test]
    fn full_budget_stage_contains_peak() {
        let f: Vec<f64> = (0..20)
            .map(|i| (-(i as f64 - 7.0).abs() / 3.0).exp())
            .collect();
        let g: Vec<f64> = (0..15)
            .map(|j| (-(j as f64 - 11.0).abs() / 2.0).exp())
            .collect();
        let res = pamcur_stage(|i, j| f[i] * g[j], 20, 15, &StageParams::new(300), 3).unwrap();
        assert!(!res.low_snr);
        assert!(res.bounds.contains(7, 11));
        assert_eq!(res.samples_used, 300);
    }

    #[test]
    fn low_snr_stage_returns_full_box() {
        let params = StageParams {
            zeta_mode: ZetaMode::Fixed { zeta: 1e6 },
            ..StageParams::new(50)
        };
        let res = pamcur_stage(|i, j| 1.0 / (1.0 + (i + j) as f64), 10, 10, &params, 0).unwrap();
        assert!(res.low_snr);
        assert_eq!(res.rho, 0.0);
        assert_eq!(res.bounds, LocalizationBox::full(10, 10));
    }
}
