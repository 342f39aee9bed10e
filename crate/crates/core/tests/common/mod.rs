//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Least-squares projection of `v` onto the unimodal cone with peak `peak`
/// by enumerating every set of active chain constraints.
///
/// Each active set splits the chain into contiguous blocks; the candidate is
/// the vector of block means. The projection is the feasible candidate with
/// the smallest squared error.
pub fn qp_project(v: &[f64], peak: usize) -> (Vec<f64>, f64) {
    let n = v.len();
    assert!(peak < n && n <= 16);
    let feasible = |z: &[f64]| {
        (0..peak).all(|i| z[i] <= z[i + 1] + 1e-12)
            && (peak..n - 1).all(|i| z[i + 1] <= z[i] + 1e-12)
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        // bit i set: z[i] == z[i + 1]
        let mut z = vec![0.0; n];
        let mut start = 0;
        for end in 0..n {
            let closes = end == n - 1 || mask & (1 << end) == 0;
            if closes {
                let mean = v[start..=end].iter().sum::<f64>() / (end + 1 - start) as f64;
                z[start..=end].iter_mut().for_each(|x| *x = mean);
                start = end + 1;
            }
        }
        if !feasible(&z) {
            continue;
        }
        let err = sq_dist(&z, v);
        if best.as_ref().is_none_or(|(_, e)| err < *e) {
            best = Some((z, err));
        }
    }
    best.expect("the all-pooled vector is always feasible")
}

/// Best unimodal fit over all peaks; ties go to the smallest peak.
pub fn qp_best_fit(v: &[f64]) -> (usize, Vec<f64>, f64) {
    let fits: Vec<_> = (0..v.len()).map(|l| qp_project(v, l)).collect();
    let min = fits.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * v.iter().map(|x| x * x).sum::<f64>().max(1.0);
    let mode = fits.iter().position(|f| f.1 <= min + slack).unwrap();
    let (z, e) = fits[mode].clone();
    (mode, z, e)
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Singular values (descending) with left and right singular vectors as
/// matrix columns, by one-sided Jacobi rotations.
pub struct Svd {
    pub sigma: Vec<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

pub fn jacobi_svd(m: &DMatrix<f64>) -> Svd {
    if m.nrows() < m.ncols() {
        let t = jacobi_svd(&m.transpose());
        return Svd {
            sigma: t.sigma,
            u: t.v,
            v: t.u,
        };
    }
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma.abs() <= 1e-14 * (alpha * beta).sqrt() || alpha * beta == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let (x, y) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * x - s * y;
                    a[(k, q)] = s * x + c * y;
                }
                for k in 0..cols {
                    let (x, y) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * x - s * y;
                    v[(k, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|k| a.column(k).norm()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = DMatrix::zeros(rows, cols);
    let mut vs = DMatrix::zeros(cols, cols);
    let mut sigma = Vec::with_capacity(cols);
    for (dst, &src) in order.iter().enumerate() {
        sigma.push(norms[src]);
        if norms[src] > 0.0 {
            u.set_column(dst, &(a.column(src) / norms[src]));
        }
        vs.set_column(dst, &v.column(src));
    }
    Svd { sigma, u, v: vs }
}

/// Nonnegative unimodal vector with peak at `peak`: sorted random draws on
/// each side.
pub fn random_unimodal(rng: &mut ChaCha8Rng, n: usize, peak: usize) -> Vec<f64> {
    let mut left: Vec<f64> = (0..peak).map(|_| rng.random::<f64>()).collect();
    let mut right: Vec<f64> = (peak + 1..n).map(|_| rng.random::<f64>()).collect();
    left.sort_by(f64::total_cmp);
    right.sort_by(|a, b| b.total_cmp(a));
    let top = 1.0 + rng.random::<f64>();
    left.into_iter()
        .chain(std::iter::once(top))
        .chain(right)
        .collect()
}

pub fn normalized(mut x: Vec<f64>) -> Vec<f64> {
    let n = norm(&x);
    x.iter_mut().for_each(|v| *v /= n);
    x
}

/// Row-major first index of the largest entry.
pub fn argmax(m: &DMatrix<f64>) -> (usize, usize) {
    let mut best = (0, 0);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if m[(i, j)] > m[best] {
                best = (i, j);
            }
        }
    }
    best
}
