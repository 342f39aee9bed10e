//! Low-rank matrix completion and the dominant singular triplet.
//!
//! Two completion routes are provided: rank-`r` alternating least squares
//! (the workhorse) and a nuclear-norm program solved by singular value
//! soft-thresholding with threshold continuation.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{rng_from_seed, SampleSet};

const POWER_SEED: u64 = 0x5EED_0FD0_1A4E;
const POWER_MAX_ITERS: usize = 20_000;
const POWER_TOL: f64 = 1e-13;

/// Dominant singular triplet `M v = sigma u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriplet {
    pub u: DVector<f64>,
    pub sigma: f64,
    pub v: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct CompletionResult {
    pub h_hat: DMatrix<f64>,
    pub u: DVector<f64>,
    pub sigma: f64,
    pub v: DVector<f64>,
    /// Frobenius norm of the misfit on observed entries.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual after each outer iteration.
    pub residual_history: Vec<f64>,
}

impl CompletionResult {
    fn from_matrix(
        h_hat: DMatrix<f64>,
        samples: &SampleSet,
        iterations: usize,
        converged: bool,
        history: Vec<f64>,
    ) -> Self {
        let residual = observed_residual(&h_hat, samples);
        let SingularTriplet { u, sigma, v } = dominant_svd(&h_hat);
        Self {
            h_hat,
            u,
            sigma,
            v,
            residual,
            iterations,
            converged,
            residual_history: history,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompletionMethod {
    Als { rank: usize },
    Nuclear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionConfig {
    pub method: CompletionMethod,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            method: CompletionMethod::Als { rank: 1 },
            max_iters: 2000,
            tol: 1e-12,
        }
    }
}

impl CompletionConfig {
    /// Run the configured solver. `eps_total` is only used by the nuclear route.
    pub fn complete(
        &self,
        samples: &SampleSet,
        n_rows: usize,
        n_cols: usize,
        eps_total: f64,
    ) -> Result<CompletionResult> {
        match self.method {
            CompletionMethod::Als { rank } => {
                complete_rank_r(samples, n_rows, n_cols, rank, self.max_iters, self.tol)
            }
            CompletionMethod::Nuclear => {
                complete_nuclear(samples, n_rows, n_cols, eps_total, self.max_iters, self.tol)
            }
        }
    }
}

pub fn observed_residual(h: &DMatrix<f64>, samples: &SampleSet) -> f64 {
    samples
        .iter()
        .map(|((i, j), v)| {
            let d = h[(i, j)] - v;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn orient(u: &mut DVector<f64>, v: &mut DVector<f64>) {
    let (k, _) = u.iter().enumerate().fold((0, -1.0), |best, (k, x)| {
        if x.abs() > best.1 {
            (k, x.abs())
        } else {
            best
        }
    });
    if u[k] < 0.0 {
        u.neg_mut();
        v.neg_mut();
    }
}

/// Largest singular value and vectors of `m` by power iteration on `m^T m`.
///
/// The entry of `u` with the largest magnitude is made nonnegative. A zero
/// matrix yields `sigma = 0` with `u`, `v` the first standard basis vectors.
pub fn dominant_svd(m: &DMatrix<f64>) -> SingularTriplet {
    let (n_rows, n_cols) = m.shape();
    let basis = |n: usize| {
        let mut e = DVector::zeros(n);
        if n > 0 {
            e[0] = 1.0;
        }
        e
    };
    if n_rows == 0 || n_cols == 0 || m.iter().all(|x| *x == 0.0) {
        return SingularTriplet {
            u: basis(n_rows),
            sigma: 0.0,
            v: basis(n_cols),
        };
    }

    let mut rng = rng_from_seed(POWER_SEED);
    let mut v = DVector::from_fn(n_cols, |_, _| StandardNormal.sample(&mut rng));
    v.normalize_mut();

    let mut converged = false;
    for _ in 0..POWER_MAX_ITERS {
        let w = m * &v;
        let sigma = w.norm();
        if sigma == 0.0 {
            break;
        }
        let u = w / sigma;
        let x = m.tr_mul(&u);
        let gap = (&x - &v * sigma).norm();
        let x_norm = x.norm();
        v = x / x_norm;
        if gap <= POWER_TOL * sigma {
            converged = true;
            break;
        }
    }

    if !converged {
        // Nearly repeated top singular values; fall back to a full decomposition.
        let svd = m.clone().svd(true, true);
        let k = svd.singular_values.imax();
        let v_t = svd.v_t.expect("requested");
        v = v_t.row(k).transpose();
    }

    let w = m * &v;
    let sigma = w.norm();
    let mut u = if sigma > 0.0 {
        w / sigma
    } else {
        basis(n_rows)
    };
    orient(&mut u, &mut v);
    SingularTriplet { u, sigma, v }
}

struct Observations {
    by_row: Vec<Vec<(usize, f64)>>,
    by_col: Vec<Vec<(usize, f64)>>,
}

impl Observations {
    fn new(samples: &SampleSet, n_rows: usize, n_cols: usize) -> Self {
        let mut by_row = vec![Vec::new(); n_rows];
        let mut by_col = vec![Vec::new(); n_cols];
        for ((i, j), v) in samples.iter() {
            by_row[i].push((j, v));
            by_col[j].push((i, v));
        }
        Self { by_row, by_col }
    }

    fn degenerate(&self) -> bool {
        self.by_row.iter().any(Vec::is_empty) || self.by_col.iter().any(Vec::is_empty)
    }
}

// Least-squares refit of every row of `target` against the fixed factor.
fn refit(target: &mut DMatrix<f64>, fixed: &DMatrix<f64>, obs: &[Vec<(usize, f64)>]) {
    let r = fixed.ncols();
    for (i, entries) in obs.iter().enumerate() {
        if entries.is_empty() {
            target.row_mut(i).fill(0.0);
            continue;
        }
        let mut gram = DMatrix::<f64>::zeros(r, r);
        let mut rhs = DVector::<f64>::zeros(r);
        for &(k, value) in entries {
            let f = fixed.row(k);
            for a in 0..r {
                rhs[a] += value * f[a];
                for b in 0..r {
                    gram[(a, b)] += f[a] * f[b];
                }
            }
        }
        let x = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => gram
                .pseudo_inverse(1e-12)
                .map(|p| p * &rhs)
                .unwrap_or_else(|_| DVector::zeros(r)),
        };
        target.row_mut(i).copy_from(&x.transpose());
    }
}

/// Rank-`rank` completion by alternating least squares, initialised from the
/// leading singular subspace of the zero-filled observations.
///
/// Iterates until the relative change of the observed residual drops below
/// `tol` or `max_iters` is reached. Sampling patterns that leave a row or
/// column unobserved are reported as not converged.
pub fn complete_rank_r(
    samples: &SampleSet,
    n_rows: usize,
    n_cols: usize,
    rank: usize,
    max_iters: usize,
    tol: f64,
) -> Result<CompletionResult> {
    samples.check_bounds(n_rows, n_cols)?;
    if rank == 0 || rank > n_rows.min(n_cols) {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} outside 1..={}",
            n_rows.min(n_cols)
        )));
    }
    let obs = Observations::new(samples, n_rows, n_cols);
    let degenerate = obs.degenerate();
    let b_norm = samples.values_norm();
    if b_norm == 0.0 {
        return Ok(CompletionResult::from_matrix(
            DMatrix::zeros(n_rows, n_cols),
            samples,
            0,
            !degenerate,
            vec![0.0],
        ));
    }

    let zero_filled = samples.zero_filled(n_rows, n_cols);
    let (mut x, mut y) = if rank == 1 {
        let t = dominant_svd(&zero_filled);
        let s = t.sigma.sqrt();
        (
            DMatrix::from_column_slice(n_rows, 1, (t.u * s).as_slice()),
            DMatrix::from_column_slice(n_cols, 1, (t.v * s).as_slice()),
        )
    } else {
        let svd = zero_filled.svd(true, true);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let u = svd.u.expect("requested");
        let v_t = svd.v_t.expect("requested");
        let mut x = DMatrix::zeros(n_rows, rank);
        let mut y = DMatrix::zeros(n_cols, rank);
        for (c, &k) in order.iter().take(rank).enumerate() {
            let s = svd.singular_values[k].sqrt();
            x.set_column(c, &(u.column(k) * s));
            y.set_column(c, &(v_t.row(k).transpose() * s));
        }
        (x, y)
    };

    let mut history = Vec::new();
    let mut prev = f64::INFINITY;
    let mut settled = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        refit(&mut x, &y, &obs.by_row);
        refit(&mut y, &x, &obs.by_col);
        let res = samples
            .iter()
            .map(|((i, j), v)| {
                let d = x.row(i).dot(&y.row(j)) - v;
                d * d
            })
            .sum::<f64>()
            .sqrt();
        history.push(res);
        if res <= 1e-15 * b_norm
            || (prev.is_finite() && (prev - res).abs() <= tol * prev.max(f64::MIN_POSITIVE))
        {
            settled = true;
            break;
        }
        prev = res;
    }

    let h_hat = &x * y.transpose();
    Ok(CompletionResult::from_matrix(
        h_hat,
        samples,
        iterations,
        settled && !degenerate,
        history,
    ))
}

fn soft_threshold(m: &DMatrix<f64>, tau: f64) -> (DMatrix<f64>, f64) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    let mut nuclear = 0.0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let shrunk = s - tau;
        if shrunk > 0.0 {
            nuclear += shrunk;
            out += (u.column(k) * shrunk) * v_t.row(k);
        }
    }
    (out, nuclear)
}

struct SvtState {
    q: DMatrix<f64>,
    residual: f64,
}

// Proximal-gradient solve of min tau ||Q||_* + 1/2 ||P(Q) - b||^2, warm started.
fn svt_solve(
    start: &DMatrix<f64>,
    samples: &SampleSet,
    tau: f64,
    budget: &mut usize,
    tol: f64,
) -> SvtState {
    let mut q = start.clone();
    loop {
        let mut step = q.clone();
        for ((i, j), v) in samples.iter() {
            step[(i, j)] = v;
        }
        let (next, _) = soft_threshold(&step, tau);
        let change = (&next - &q).norm();
        let scale = next.norm().max(f64::MIN_POSITIVE);
        q = next;
        *budget = budget.saturating_sub(1);
        if change <= tol * scale || *budget == 0 {
            break;
        }
    }
    let residual = observed_residual(&q, samples);
    SvtState { q, residual }
}

/// Nuclear-norm completion `min ||Q||_*  s.t.  ||P(Q) - P(H)||_F <= eps_total`.
///
/// The threshold starts at the largest singular value of the zero-filled
/// observations (where the solution is zero) and decreases geometrically by
/// 0.9 until the residual constraint holds; the last bracket is then refined
/// by bisection. With `eps_total = 0` the target is `tol * ||P(H)||_F`.
/// `max_iters` bounds the total number of thresholding steps.
pub fn complete_nuclear(
    samples: &SampleSet,
    n_rows: usize,
    n_cols: usize,
    eps_total: f64,
    max_iters: usize,
    tol: f64,
) -> Result<CompletionResult> {
    samples.check_bounds(n_rows, n_cols)?;
    if !(eps_total >= 0.0 && eps_total.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eps_total must be >= 0, got {eps_total}"
        )));
    }
    let b_norm = samples.values_norm();
    if eps_total >= b_norm {
        return Ok(CompletionResult::from_matrix(
            DMatrix::zeros(n_rows, n_cols),
            samples,
            0,
            true,
            vec![b_norm],
        ));
    }
    let target = if eps_total > 0.0 {
        eps_total
    } else {
        tol * b_norm
    };
    let inner_tol = tol.min(1e-9);

    let zero_filled = samples.zero_filled(n_rows, n_cols);
    let mut tau_hi = dominant_svd(&zero_filled).sigma;
    let mut hi_state = SvtState {
        q: DMatrix::zeros(n_rows, n_cols),
        residual: b_norm,
    };
    let mut budget = max_iters;
    let mut history = vec![b_norm];
    let mut found: Option<(f64, SvtState)> = None;

    while budget > 0 {
        let tau = 0.9 * tau_hi;
        let state = svt_solve(&hi_state.q, samples, tau, &mut budget, inner_tol);
        history.push(state.residual);
        if state.residual <= target {
            found = Some((tau, state));
            break;
        }
        tau_hi = tau;
        hi_state = state;
        if tau_hi <= f64::MIN_POSITIVE {
            break;
        }
    }

    let Some((mut tau_lo, mut lo_state)) = found else {
        let iterations = max_iters - budget;
        return Ok(CompletionResult::from_matrix(
            hi_state.q, samples, iterations, false, history,
        ));
    };

    // Largest threshold that is still feasible, inside (tau_lo, tau_hi).
    for _ in 0..12 {
        if budget == 0 {
            break;
        }
        let tau = 0.5 * (tau_lo + tau_hi);
        let state = svt_solve(&lo_state.q, samples, tau, &mut budget, inner_tol);
        history.push(state.residual);
        if state.residual <= target {
            tau_lo = tau;
            lo_state = state;
        } else {
            tau_hi = tau;
        }
    }

    let iterations = max_iters - budget;
    Ok(CompletionResult::from_matrix(
        lo_state.q, samples, iterations, true, history,
    ))
}

/// `C(q, n) = 2 + 4 sqrt(n (1 + 2/q))`.
pub fn c_qn(q: f64, n: usize) -> f64 {
    2.0 + 4.0 * (n as f64 * (1.0 + 2.0 / q)).sqrt()
}

/// Worst-case reconstruction error bound `zeta = C(q, n) eps m` for `m`
/// observed entries of an `n x n` matrix, `q = m / n^2`.
pub fn zeta_bound(q: f64, n: usize, eps: f64, m: usize) -> Result<f64> {
    const OP: &str = "zeta_bound";
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::domain(OP, format!("q must lie in (0, 1], got {q}")));
    }
    if n == 0 || m == 0 {
        return Err(Error::domain(OP, "n and m must be positive"));
    }
    if (q - m as f64 / (n * n) as f64).abs() > 1e-9 {
        return Err(Error::domain(
            OP,
            format!("q = {q} inconsistent with m / n^2 = {m} / {}", n * n),
        ));
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::domain(OP, format!("eps must be >= 0, got {eps}")));
    }
    Ok(c_qn(q, n) * eps * m as f64)
}

/// `SNR = sigma0^2 / (eps m)^2`, noise power counted over observed entries.
pub fn snr(sigma0: f64, eps: f64, m: usize) -> Result<f64> {
    let denom = eps * m as f64;
    if denom.is_nan() || denom <= 0.0 {
        return Err(Error::domain("snr", "eps * m must be positive"));
    }
    Ok((sigma0 / denom).powi(2))
}
