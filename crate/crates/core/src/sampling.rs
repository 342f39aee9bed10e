//! Random sample selection, noisy observation, and sample budgets.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic generator used everywhere a seed is accepted.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent child seed (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        ^ stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    None,
    Gaussian {
        std: f64,
    },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Gaussian { std } if !(*std >= 0.0 && std.is_finite()) => Err(
                Error::InvalidArgument(format!("noise std must be >= 0, got {std}")),
            ),
            _ => Ok(()),
        }
    }

    /// Per-sample RMS noise level `eps`.
    pub fn eps(&self) -> f64 {
        match self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { std } => *std,
        }
    }
}

/// Observed `(row, col)` entries and their (possibly noisy) values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub indices: Vec<(usize, usize)>,
    pub values: Vec<f64>,
    pub noise_eps: f64,
    pub seed: u64,
}

impl SampleSet {
    pub fn new(
        indices: Vec<(usize, usize)>,
        values: Vec<f64>,
        noise_eps: f64,
        seed: u64,
    ) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("sample set"));
        }
        if indices.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "sample values must be finite".into(),
            ));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "sample indices must be distinct".into(),
            ));
        }
        Ok(Self {
            indices,
            values,
            noise_eps,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn check_bounds(&self, n_rows: usize, n_cols: usize) -> Result<()> {
        for &(row, col) in &self.indices {
            if row >= n_rows || col >= n_cols {
                return Err(Error::IndexOutOfBounds {
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
        }
        Ok(())
    }

    /// Dense matrix with observed values and zeros elsewhere.
    pub fn zero_filled(&self, n_rows: usize, n_cols: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n_rows, n_cols);
        for ((i, j), v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn values_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `m` distinct cells of an `n_rows x n_cols` grid drawn uniformly without
/// replacement, in draw order.
pub fn sample_uniform(
    n_rows: usize,
    n_cols: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    let total = n_rows * n_cols;
    if m == 0 || m > total {
        return Err(Error::InvalidArgument(format!(
            "sample count {m} outside 1..={total}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    Ok(index::sample(&mut rng, total, m)
        .into_iter()
        .map(|k| (k / n_cols, k % n_cols))
        .collect())
}

/// Read `indices` through `value_at` and add noise drawn from `noise`.
pub fn observe_with<F>(
    value_at: F,
    indices: &[(usize, usize)],
    noise: NoiseModel,
    seed: u64,
) -> Result<SampleSet>
where
    F: Fn(usize, usize) -> f64,
{
    noise.validate()?;
    let mut rng = rng_from_seed(seed);
    let normal = match noise {
        NoiseModel::Gaussian { std } if std > 0.0 => {
            Some(Normal::new(0.0, std).expect("validated std"))
        }
        _ => None,
    };
    let values = indices
        .iter()
        .map(|&(i, j)| {
            let clean = value_at(i, j);
            match &normal {
                Some(d) => clean + d.sample(&mut rng),
                None => clean,
            }
        })
        .collect();
    SampleSet::new(indices.to_vec(), values, noise.eps(), seed)
}

/// Noisy projection of `h` onto the index set.
pub fn observe(
    h: &DMatrix<f64>,
    indices: &[(usize, usize)],
    noise: NoiseModel,
    seed: u64,
) -> Result<SampleSet> {
    let (n_rows, n_cols) = h.shape();
    if let Some(&(row, col)) = indices.iter().find(|&&(i, j)| i >= n_rows || j >= n_cols) {
        return Err(Error::IndexOutOfBounds {
            row,
            col,
            n_rows,
            n_cols,
        });
    }
    observe_with(|i, j| h[(i, j)], indices, noise, seed)
}

/// Per-stage sample budget `min(n^2, ceil(c0 * nu * n * ln(n)^2))`.
pub fn sample_budget(n: usize, nu: f64, c0: f64) -> Result<usize> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "sample_budget needs n >= 2, got {n}"
        )));
    }
    if !(nu >= 1.0 && c0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need nu >= 1 and c0 > 0, got nu={nu}, c0={c0}"
        )));
    }
    let nf = n as f64;
    let raw = (c0 * nu * nf * nf.ln().powi(2)).ceil();
    let cap = n * n;
    Ok(if raw >= cap as f64 { cap } else { raw as usize })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_grid_draw() {
        let mut idx = sample_uniform(4, 5, 20, 3).unwrap();
        idx.sort_unstable();
        let all: Vec<_> = (0..4).flat_map(|i| (0..5).map(move |j| (i, j))).collect();
        assert_eq!(idx, all);
    }

    #[test]
    fn single_draw_is_deterministic() {
        let a = sample_uniform(10, 10, 1, 42).unwrap();
        let b = sample_uniform(10, 10, 1, 42).unwrap();
        assert_eq!(a, b);
        assert!(sample_uniform(10, 10, 0, 1).is_err());
        assert!(sample_uniform(10, 10, 101, 1).is_err());
    }

    #[test]
    fn noiseless_observation_is_projection() {
        let h = DMatrix::from_fn(3, 4, |i, j| (i * 10 + j) as f64);
        let idx = vec![(0, 0), (2, 3), (1, 1)];
        let s = observe(&h, &idx, NoiseModel::None, 9).unwrap();
        assert_eq!(s.values, vec![0.0, 23.0, 11.0]);
        assert_eq!(s.noise_eps, 0.0);
        assert!(observe(&h, &[(3, 0)], NoiseModel::None, 0).is_err());
    }

    #[test]
    fn same_seed_same_samples() {
        let h = DMatrix::from_element(5, 5, 1.0);
        let idx = sample_uniform(5, 5, 7, 11).unwrap();
        let noise = NoiseModel::Gaussian { std: 0.3 };
        assert_eq!(
            observe(&h, &idx, noise, 5).unwrap(),
            observe(&h, &idx, noise, 5).unwrap()
        );
        assert_eq!(observe(&h, &idx, noise, 5).unwrap().noise_eps, 0.3);
    }

    #[test]
    fn budget_examples() {
        assert_eq!(sample_budget(100, 1.0, 0.1).unwrap(), 213);
        assert_eq!(sample_budget(10, 1.0, 1e9).unwrap(), 100);
        let mut last = 0;
        for n in 2..200 {
            let b = sample_budget(n, 1.5, 0.2).unwrap();
            assert!(b >= last);
            last = b;
        }
        assert!(sample_budget(50, 2.0, 0.2).unwrap() >= sample_budget(50, 1.0, 0.2).unwrap());
        assert!(sample_budget(50, 1.0, 0.3).unwrap() >= sample_budget(50, 1.0, 0.2).unwrap());
    }

    #[test]
    fn sample_set_rejects_duplicates() {
        assert!(SampleSet::new(vec![(0, 0), (0, 0)], vec![1.0, 2.0], 0.0, 0).is_err());
        assert!(SampleSet::new(vec![], vec![], 0.0, 0).is_err());
    }
}
