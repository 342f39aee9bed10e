//! Physical coordinates, rectangles, and the cell-centred grids laid over them.
//!
//! Rows run along the second field coordinate (`y_r`, latitude for the
//! elevation data) and columns along the first (`y_c`, longitude). Both
//! coordinate arrays are ascending.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in field coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub row: f64,
    pub col: f64,
}

impl Point {
    pub fn new(row: f64, col: f64) -> Self {
        Self { row, col }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.row - other.row).hypot(self.col - other.col)
    }
}

/// Axis-aligned rectangle in field coordinates, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub row_lo: f64,
    pub row_hi: f64,
    pub col_lo: f64,
    pub col_hi: f64,
}

impl Rect {
    pub fn new(row_lo: f64, row_hi: f64, col_lo: f64, col_hi: f64) -> Result<Self> {
        let ok = [row_lo, row_hi, col_lo, col_hi]
            .iter()
            .all(|v| v.is_finite())
            && row_lo <= row_hi
            && col_lo <= col_hi;
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "rectangle [{row_lo}, {row_hi}] x [{col_lo}, {col_hi}] is not well formed"
            )));
        }
        Ok(Self {
            row_lo,
            row_hi,
            col_lo,
            col_hi,
        })
    }

    pub fn height(&self) -> f64 {
        self.row_hi - self.row_lo
    }

    pub fn width(&self) -> f64 {
        self.col_hi - self.col_lo
    }

    pub fn area(&self) -> f64 {
        self.height() * self.width()
    }

    pub fn diameter(&self) -> f64 {
        self.height().hypot(self.width())
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.row_lo + self.row_hi),
            0.5 * (self.col_lo + self.col_hi),
        )
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.row >= self.row_lo && p.row <= self.row_hi && p.col >= self.col_lo && p.col <= self.col_hi
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.row_lo >= self.row_lo
            && other.row_hi <= self.row_hi
            && other.col_lo >= self.col_lo
            && other.col_hi <= self.col_hi
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.row_lo <= other.row_hi
            && other.row_lo <= self.row_hi
            && self.col_lo <= other.col_hi
            && other.col_lo <= self.col_hi
    }

    /// Rectangle of `scale` times this one's extent, centred on `center` and
    /// shifted (not cut) so that it lies inside `self`.
    pub fn scaled_within(&self, center: Point, scale: f64) -> Rect {
        let h = self.height() * scale;
        let w = self.width() * scale;
        let fit = |c: f64, half: f64, lo: f64, hi: f64| {
            let len = 2.0 * half;
            if len >= hi - lo {
                (lo, hi)
            } else if c - half < lo {
                (lo, lo + len)
            } else if c + half > hi {
                (hi - len, hi)
            } else {
                (c - half, c + half)
            }
        };
        let (row_lo, row_hi) = fit(center.row, 0.5 * h, self.row_lo, self.row_hi);
        let (col_lo, col_hi) = fit(center.col, 0.5 * w, self.col_lo, self.col_hi);
        Rect {
            row_lo,
            row_hi,
            col_lo,
            col_hi,
        }
    }
}

/// A uniform `n_rows x n_cols` partition of a rectangle into cells, sampled
/// at the cell centres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGrid {
    pub rect: Rect,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl CellGrid {
    pub fn new(rect: Rect, n_rows: usize, n_cols: usize) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::InvalidArgument(
                "grid needs at least one cell".into(),
            ));
        }
        Ok(Self {
            rect,
            n_rows,
            n_cols,
        })
    }

    pub fn row_step(&self) -> f64 {
        self.rect.height() / self.n_rows as f64
    }

    pub fn col_step(&self) -> f64 {
        self.rect.width() / self.n_cols as f64
    }

    pub fn row_center(&self, i: usize) -> f64 {
        self.rect.row_lo + (i as f64 + 0.5) * self.row_step()
    }

    pub fn col_center(&self, j: usize) -> f64 {
        self.rect.col_lo + (j as f64 + 0.5) * self.col_step()
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        Point::new(self.row_center(i), self.col_center(j))
    }

    /// Row-coordinate of the edge below cell `k` (`k = n_rows` is the top edge).
    pub fn row_edge(&self, k: usize) -> f64 {
        edge(self.rect.row_lo, self.rect.row_hi, k, self.n_rows)
    }

    pub fn col_edge(&self, k: usize) -> f64 {
        edge(self.rect.col_lo, self.rect.col_hi, k, self.n_cols)
    }

    /// Outer edges of the cell block `rows x cols` (inclusive index ranges).
    pub fn cover(&self, rows: (usize, usize), cols: (usize, usize)) -> Rect {
        Rect {
            row_lo: self.row_edge(rows.0),
            row_hi: self.row_edge(rows.1 + 1),
            col_lo: self.col_edge(cols.0),
            col_hi: self.col_edge(cols.1 + 1),
        }
    }

    /// Index of the cell containing `p` (points outside are clamped).
    pub fn locate(&self, p: &Point) -> (usize, usize) {
        let idx = |x: f64, lo: f64, step: f64, n: usize| {
            if step <= 0.0 {
                return 0;
            }
            let k = ((x - lo) / step).floor();
            if k < 0.0 {
                0
            } else {
                (k as usize).min(n - 1)
            }
        };
        (
            idx(p.row, self.rect.row_lo, self.row_step(), self.n_rows),
            idx(p.col, self.rect.col_lo, self.col_step(), self.n_cols),
        )
    }
}

// Edges are clamped so that a sub-block cover never leaves the parent rectangle.
fn edge(lo: f64, hi: f64, k: usize, n: usize) -> f64 {
    if k == 0 {
        lo
    } else if k >= n {
        hi
    } else {
        (lo + (hi - lo) * (k as f64 / n as f64)).clamp(lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cover_of_full_grid_is_the_rect() {
        let r = Rect::new(-1.0, 3.0, 0.25, 0.75).unwrap();
        let g = CellGrid::new(r, 7, 13).unwrap();
        assert_eq!(g.cover((0, 6), (0, 12)), r);
    }

    #[test]
    fn locate_inverts_cell_center() {
        let g = CellGrid::new(Rect::new(0.0, 1.0, 0.0, 2.0).unwrap(), 10, 20).unwrap();
        for i in 0..10 {
            for j in 0..20 {
                assert_eq!(g.locate(&g.cell_center(i, j)), (i, j));
            }
        }
    }

    #[test]
    fn scaled_within_unit_scale_is_identity() {
        let r = Rect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let s = r.scaled_within(Point::new(0.9, 0.1), 1.0);
        assert_eq!(s, r);
        let half = r.scaled_within(Point::new(0.9, 0.1), 0.5);
        assert!(r.contains_rect(&half));
        assert!((half.area() - 0.25).abs() < 1e-12);
    }
}
