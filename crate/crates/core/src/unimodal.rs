//! Isotonic and unimodal least squares.
//!
//! Every routine here is an exact Euclidean projection computed with
//! pool-adjacent-violators (PAVA). Peak and mode indices are 0-based.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnimodalFit {
    pub z: Vec<f64>,
    pub mode: usize,
    pub sq_error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    sum: f64,
    sum_sq: f64,
    len: usize,
}

impl Block {
    fn new(y: f64) -> Self {
        Self {
            sum: y,
            sum_sq: y * y,
            len: 1,
        }
    }

    fn mean(&self) -> f64 {
        self.sum / self.len as f64
    }

    fn sse(&self) -> f64 {
        (self.sum_sq - self.sum * self.sum / self.len as f64).max(0.0)
    }

    fn absorb(&mut self, other: Block) {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.len += other.len;
    }
}

/// Incremental increasing PAVA; `push` keeps the fit of the prefix seen so far.
#[derive(Default)]
struct Pava {
    blocks: Vec<Block>,
    sse: f64,
}

impl Pava {
    fn push(&mut self, y: f64) {
        let mut b = Block::new(y);
        while let Some(last) = self.blocks.last() {
            if last.mean() <= b.mean() {
                break;
            }
            let last = self.blocks.pop().expect("nonempty");
            self.sse -= last.sse();
            b.absorb(last);
        }
        self.sse += b.sse();
        self.blocks.push(b);
    }

    fn run(y: impl IntoIterator<Item = f64>) -> Vec<Block> {
        let mut p = Pava::default();
        for v in y {
            p.push(v);
        }
        p.blocks
    }
}

fn expand(blocks: &[Block], out: &mut Vec<f64>) {
    for b in blocks {
        let m = b.mean();
        out.extend(std::iter::repeat_n(m, b.len));
    }
}

/// Least-squares monotone fit of `y`.
pub fn isotonic_fit(y: &[f64], direction: Direction) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len());
    match direction {
        Direction::Increasing => expand(&Pava::run(y.iter().copied()), &mut out),
        Direction::Decreasing => {
            expand(&Pava::run(y.iter().rev().copied()), &mut out);
            out.reverse();
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Projection of `v` onto the cone of vectors nondecreasing up to `peak` and
/// nonincreasing after it.
pub fn project_unimodal_peak(v: &[f64], peak: usize) -> Result<UnimodalFit> {
    let n = v.len();
    if peak >= n {
        return Err(Error::InvalidArgument(format!(
            "peak {peak} outside 0..{n}"
        )));
    }
    let mut left = Pava::run(v[..peak].iter().copied());
    let mut right = Pava::run(v[peak + 1..].iter().rev().copied());
    let mut top = Block::new(v[peak]);
    loop {
        let lm = left.last().map(Block::mean).filter(|m| *m > top.mean());
        let rm = right.last().map(Block::mean).filter(|m| *m > top.mean());
        match (lm, rm) {
            (None, None) => break,
            (Some(a), Some(b)) if b > a => top.absorb(right.pop().expect("checked")),
            (Some(_), _) => top.absorb(left.pop().expect("checked")),
            (None, Some(_)) => top.absorb(right.pop().expect("checked")),
        }
    }

    let mut z = Vec::with_capacity(n);
    expand(&left, &mut z);
    z.extend(std::iter::repeat_n(top.mean(), top.len));
    let mut tail = Vec::with_capacity(n);
    expand(&right, &mut tail);
    tail.reverse();
    z.extend(tail);
    debug_assert_eq!(z.len(), n);

    let sq_error = sq_dist(v, &z);
    Ok(UnimodalFit {
        z,
        mode: peak,
        sq_error,
    })
}

/// `max <z, v>` over unit-norm members of the peak-`peak` unimodal cone,
/// which is the norm of the projection.
pub fn cone_support(v: &[f64], peak: usize) -> Result<f64> {
    let fit = project_unimodal_peak(v, peak)?;
    Ok(fit.z.iter().map(|x| x * x).sum::<f64>().sqrt())
}

fn prefix_errors(v: impl Iterator<Item = f64>, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut p = Pava::default();
    for y in v {
        p.push(y);
        out.push(p.sse);
    }
    out
}

/// Best unimodal least-squares fit over all modes, ties broken towards the
/// smallest mode.
pub fn best_unimodal_fit(v: &[f64]) -> Result<UnimodalFit> {
    let n = v.len();
    if n == 0 {
        return Err(Error::Empty("vector"));
    }
    // inc[s]: error of the increasing fit of v[..s]; dec[t]: decreasing fit of the last t entries.
    let inc = prefix_errors(v.iter().copied(), n);
    let dec = prefix_errors(v.iter().rev().copied(), n);
    let split_err: Vec<f64> = (0..=n).map(|s| inc[s] + dec[n - s]).collect();
    let best = split_err.iter().copied().fold(f64::INFINITY, f64::min);
    let scale: f64 = v.iter().map(|x| x * x).sum::<f64>().max(1.0);
    let slack = 1e-12 * scale;

    let mut chosen: Option<UnimodalFit> = None;
    for (s, &e) in split_err.iter().enumerate() {
        if e > best + slack {
            continue;
        }
        // A split fit is unimodal with its mode at s - 1 or s.
        for peak in [s.saturating_sub(1), s.min(n - 1)] {
            let fit = project_unimodal_peak(v, peak)?;
            let better = match &chosen {
                None => true,
                Some(c) => {
                    fit.sq_error < c.sq_error - slack
                        || (fit.sq_error <= c.sq_error + slack && peak < c.mode)
                }
            };
            if better {
                chosen = Some(UnimodalFit { mode: peak, ..fit });
            }
        }
    }
    let mut fit = chosen.expect("at least one split");
    // Flat tops are in several cones; report the first index of the maximum.
    let top = fit.z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = fit.z.iter().position(|x| *x == top).expect("nonempty");
    if first < fit.mode {
        fit.mode = first;
    }
    Ok(fit)
}

/// Right-hand side of the necessary condition for the peak-closeness
/// feasibility problem: `s^2 + (d^2 - 2 d s)(k + 1) + d^2 (k + 1)^2` with
/// `s = <1, v>` and `k = k_left + k_right`.
///
/// For `v` unimodal with peak `p` and a cone peaked at `l_star <= p`, any
/// unit `z` in that cone has `<z, v>^2 <= lemma2_rhs(..)` when
/// `k_left < p - l_star`, `p + k_right < n` and `delta` is at most
/// [`lemma2_delta_cap`]. With `k_left = p - l_star` the window covers
/// `l_star` and the bound can fail.
pub fn lemma2_rhs(v: &[f64], k_left: usize, k_right: usize, delta: f64) -> f64 {
    let s: f64 = v.iter().sum();
    let k = (k_left + k_right + 1) as f64;
    s * s + (delta * delta - 2.0 * delta * s) * k + delta * delta * k * k
}

/// Largest admissible `delta` for [`lemma2_rhs`]: the minimum over
/// `j` in `peak - k_left ..= peak + k_right` of `<1, v[j..]> / (peak + 1 + k_right - j)`.
pub fn lemma2_delta_cap(v: &[f64], peak: usize, k_left: usize, k_right: usize) -> Result<f64> {
    let n = v.len();
    if peak >= n || k_left > peak || peak + k_right >= n {
        return Err(Error::InvalidArgument(format!(
            "need k_left <= peak and peak + k_right < n, got peak={peak}, k_left={k_left}, k_right={k_right}, n={n}"
        )));
    }
    let mut suffix = vec![0.0; n + 1];
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1] + v[j];
    }
    Ok((peak - k_left..=peak + k_right)
        .map(|j| suffix[j] / (peak + 1 + k_right - j) as f64)
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pava_small_cases() {
        assert_eq!(
            isotonic_fit(&[1.0, 0.0], Direction::Increasing),
            vec![0.5, 0.5]
        );
        assert_eq!(
            isotonic_fit(&[3.0, 1.0, 2.0], Direction::Increasing),
            vec![2.0, 2.0, 2.0]
        );
        assert_eq!(
            isotonic_fit(&[1.0, 2.0, 5.0], Direction::Increasing),
            vec![1.0, 2.0, 5.0]
        );
        assert_eq!(
            isotonic_fit(&[1.0, 2.0, 5.0], Direction::Decreasing),
            vec![8.0 / 3.0; 3]
        );
    }

    #[test]
    fn fixed_peak_projection() {
        let fit = project_unimodal_peak(&[0.0, 1.0, 0.0, 1.0], 1).unwrap();
        assert_eq!(fit.z, vec![0.0, 1.0, 0.5, 0.5]);
        assert_relative_eq!(fit.sq_error, 0.5);
        let member = [0.1, 0.5, 0.9, 0.3];
        let same = project_unimodal_peak(&member, 2).unwrap();
        assert_eq!(same.z, member.to_vec());
        assert_eq!(same.sq_error, 0.0);
    }

    #[test]
    fn homogeneity() {
        let v = [0.3, -1.0, 2.0, 0.7, 1.5];
        let a = project_unimodal_peak(&v, 1).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| 3.0 * x).collect();
        let b = project_unimodal_peak(&scaled, 1).unwrap();
        for (x, y) in a.z.iter().zip(&b.z) {
            assert_relative_eq!(3.0 * x, *y, max_relative = 1e-14);
        }
    }

    #[test]
    fn support_values() {
        assert_relative_eq!(cone_support(&[1.0, 0.0, 0.0, 0.0], 3).unwrap(), 0.5);
        let u = [0.5, 0.5, 0.5, 0.5];
        assert_relative_eq!(cone_support(&u, 2).unwrap(), 1.0);
    }

    #[test]
    fn best_fit_tie_breaks_left() {
        let fit = best_unimodal_fit(&[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(fit.mode, 0);
        assert_eq!(fit.z, vec![1.0, 0.5, 0.5]);
        assert_relative_eq!(fit.sq_error, 0.5);

        let inc = [0.1, 0.2, 0.4, 0.8];
        let fit = best_unimodal_fit(&inc).unwrap();
        assert_eq!(fit.mode, 3);
        assert_eq!(fit.z, inc.to_vec());
    }

    #[test]
    fn lemma2_values() {
        assert_relative_eq!(lemma2_rhs(&[0.0, 1.0, 0.0], 0, 0, 0.5), 0.5);
        assert_relative_eq!(lemma2_rhs(&[0.2, 0.3], 1, 1, 0.0), 0.25);
        assert_relative_eq!(lemma2_delta_cap(&[0.0, 1.0, 0.0], 1, 0, 0).unwrap(), 1.0);
        assert!(lemma2_delta_cap(&[0.0, 1.0, 0.0], 1, 2, 0).is_err());
        assert!(lemma2_delta_cap(&[0.0, 1.0, 0.0], 1, 0, 2).is_err());
    }
}
