//! Separable target fields, their discretization, and coherence parameters.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CellGrid, Point};

/// One-dimensional decay profile. Every variant peaks at the origin and is
/// non-increasing in `|x|`.
///
/// The three named profiles are unit-mass densities with scale `scale`;
/// `Exponential` and `PowerLaw` use the rate/offset parametrisation of the
/// coherence formulas (`exp(-rate |x|^p)` and `(offset + |x|^p)^-power`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Laplacian {
        scale: f64,
    },
    Gaussian {
        scale: f64,
    },
    Cauchy {
        scale: f64,
    },
    Exponential {
        rate: f64,
        exponent: f64,
    },
    PowerLaw {
        offset: f64,
        exponent: f64,
        power: f64,
    },
    Product {
        first: Box<Profile>,
        second: Box<Profile>,
    },
}

impl Profile {
    pub fn laplacian(scale: f64) -> Self {
        Profile::Laplacian { scale }
    }

    pub fn gaussian(scale: f64) -> Self {
        Profile::Gaussian { scale }
    }

    pub fn cauchy(scale: f64) -> Self {
        Profile::Cauchy { scale }
    }

    pub fn product(first: Profile, second: Profile) -> Self {
        Profile::Product {
            first: Box::new(first),
            second: Box::new(second),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "profile {name} must be positive, got {v}"
                )))
            }
        };
        match self {
            Profile::Laplacian { scale }
            | Profile::Gaussian { scale }
            | Profile::Cauchy { scale } => positive("scale", *scale),
            Profile::Exponential { rate, exponent } => {
                positive("rate", *rate)?;
                positive("exponent", *exponent)
            }
            Profile::PowerLaw {
                offset,
                exponent,
                power,
            } => {
                positive("offset", *offset)?;
                positive("exponent", *exponent)?;
                positive("power", *power)
            }
            Profile::Product { first, second } => {
                first.validate()?;
                second.validate()
            }
        }
    }

    /// Profile value at offset `x` from its centre.
    pub fn eval(&self, x: f64) -> f64 {
        let ax = x.abs();
        match self {
            Profile::Laplacian { scale } => (-ax / scale).exp() / (2.0 * scale),
            Profile::Gaussian { scale } => {
                let t = x / scale;
                (-0.5 * t * t).exp() / (scale * (2.0 * PI).sqrt())
            }
            Profile::Cauchy { scale } => {
                let t = x / scale;
                1.0 / (PI * scale * (1.0 + t * t))
            }
            Profile::Exponential { rate, exponent } => (-rate * ax.powf(*exponent)).exp(),
            Profile::PowerLaw {
                offset,
                exponent,
                power,
            } => (offset + ax.powf(*exponent)).powf(-power),
            Profile::Product { first, second } => first.eval(x) * second.eval(x),
        }
    }

    /// Profile sampled at `coords - center`.
    pub fn sample(&self, coords: &[f64], center: f64) -> DVector<f64> {
        DVector::from_iterator(coords.len(), coords.iter().map(|&c| self.eval(c - center)))
    }
}

/// Anything that can be sampled at a physical location.
pub trait Field: Sync {
    fn value(&self, p: Point) -> f64;
}

impl<F> Field for F
where
    F: Fn(Point) -> f64 + Sync,
{
    fn value(&self, p: Point) -> f64 {
        self(p)
    }
}

/// `H(y) = H0 * F(y_c - c_c) * G(y_r - c_r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableField {
    /// `G`, evaluated along the row coordinate.
    pub row_profile: Profile,
    /// `F`, evaluated along the column coordinate.
    pub col_profile: Profile,
    pub amplitude: f64,
    pub center: Point,
}

impl SeparableField {
    pub fn new(
        row_profile: Profile,
        col_profile: Profile,
        amplitude: f64,
        center: Point,
    ) -> Result<Self> {
        row_profile.validate()?;
        col_profile.validate()?;
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "amplitude must be positive, got {amplitude}"
            )));
        }
        if !(center.row.is_finite() && center.col.is_finite()) {
            return Err(Error::InvalidArgument("field centre must be finite".into()));
        }
        Ok(Self {
            row_profile,
            col_profile,
            amplitude,
            center,
        })
    }

    /// Same profile along both axes.
    pub fn isotropic(profile: Profile, center: Point) -> Result<Self> {
        Self::new(profile.clone(), profile, 1.0, center)
    }

    pub fn eval(&self, p: Point) -> f64 {
        self.amplitude
            * self.col_profile.eval(p.col - self.center.col)
            * self.row_profile.eval(p.row - self.center.row)
    }

    /// Pointwise product, which is again separable. Both factors must share a centre.
    pub fn multiply(&self, other: &SeparableField) -> Result<SeparableField> {
        if self.center != other.center {
            return Err(Error::InvalidArgument(
                "product factors must share a centre".into(),
            ));
        }
        Ok(SeparableField {
            row_profile: Profile::product(self.row_profile.clone(), other.row_profile.clone()),
            col_profile: Profile::product(self.col_profile.clone(), other.col_profile.clone()),
            amplitude: self.amplitude * other.amplitude,
            center: self.center,
        })
    }
}

impl Field for SeparableField {
    fn value(&self, p: Point) -> f64 {
        self.eval(p)
    }
}

/// `H0 / (y_c^2 + y_r^2)`, approximately but not exactly separable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseSquareField {
    pub amplitude: f64,
    pub center: Point,
}

impl Field for InverseSquareField {
    fn value(&self, p: Point) -> f64 {
        let dr = p.row - self.center.row;
        let dc = p.col - self.center.col;
        self.amplitude / (dr * dr + dc * dc)
    }
}

/// Rectangular sampling grid with strictly ascending coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    row_coords: Vec<f64>,
    col_coords: Vec<f64>,
}

impl GridSpec {
    pub fn new(row_coords: Vec<f64>, col_coords: Vec<f64>) -> Result<Self> {
        if row_coords.is_empty() || col_coords.is_empty() {
            return Err(Error::Empty("grid coordinates"));
        }
        for (axis, coords) in [("row", &row_coords), ("column", &col_coords)] {
            if coords.iter().any(|c| !c.is_finite()) || coords.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::UnsortedGrid { axis });
            }
        }
        Ok(Self {
            row_coords,
            col_coords,
        })
    }

    /// `n` equally spaced coordinates `start, start + step, ...` on both axes.
    pub fn square_arithmetic(start: f64, step: f64, n: usize) -> Result<Self> {
        let coords: Vec<f64> = (0..n).map(|k| start + step * k as f64).collect();
        Self::new(coords.clone(), coords)
    }

    pub fn from_cells(grid: &CellGrid) -> Self {
        Self {
            row_coords: (0..grid.n_rows).map(|i| grid.row_center(i)).collect(),
            col_coords: (0..grid.n_cols).map(|j| grid.col_center(j)).collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_coords.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_coords.len()
    }

    pub fn row_coords(&self) -> &[f64] {
        &self.row_coords
    }

    pub fn col_coords(&self) -> &[f64] {
        &self.col_coords
    }

    pub fn point(&self, i: usize, j: usize) -> Point {
        Point::new(self.row_coords[i], self.col_coords[j])
    }
}

/// Sample any field on a grid; entry `(i, j)` is the value at
/// `(row_coords[i], col_coords[j])`.
pub fn sample_grid<F: Field + ?Sized>(field: &F, grid: &GridSpec) -> DMatrix<f64> {
    DMatrix::from_fn(grid.n_rows(), grid.n_cols(), |i, j| {
        field.value(grid.point(i, j))
    })
}

/// Lifted (rank-one) matrix of a separable field on `grid`.
pub fn discretize(field: &SeparableField, grid: &GridSpec) -> DMatrix<f64> {
    sample_grid(field, grid)
}

/// Inverse-square field centred at the origin sampled on `grid`.
pub fn inverse_square_matrix(grid: &GridSpec, amplitude: f64) -> Result<DMatrix<f64>> {
    let hits_origin = grid.row_coords.contains(&0.0) && grid.col_coords.contains(&0.0);
    if hits_origin {
        return Err(Error::domain(
            "inverse_square_matrix",
            "grid contains the singular point (0, 0)",
        ));
    }
    let field = InverseSquareField {
        amplitude,
        center: Point::new(0.0, 0.0),
    };
    Ok(sample_grid(&field, grid))
}

fn check_n(op: &'static str, n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::domain(op, "n must be at least 1"))
    } else {
        Ok(())
    }
}

/// Infinite-support coherence `mu` of `exp(-a |y|^p)` discretised with spacing
/// `1/sqrt(n)`.
pub fn analytic_coherence_exponential(a: f64, p: f64, n: usize) -> Result<f64> {
    const OP: &str = "analytic_coherence_exponential";
    if !(a > 0.0 && p > 0.0 && a.is_finite() && p.is_finite()) {
        return Err(Error::domain(
            OP,
            format!("need a > 0 and p > 0, got a={a}, p={p}"),
        ));
    }
    check_n(OP, n)?;
    let gamma = statrs::function::gamma::gamma(1.0 / p);
    Ok((2.0 * a).powf(1.0 / p) / ((n as f64).sqrt() * (2.0 / p) * gamma))
}

/// Infinite-support coherence `mu` of `(a + |y|^p)^-1` discretised with spacing
/// `1/sqrt(n)`. Requires `p > 1/2` for the defining integral to converge.
pub fn analytic_coherence_powerlaw(a: f64, p: f64, n: usize) -> Result<f64> {
    const OP: &str = "analytic_coherence_powerlaw";
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::domain(OP, format!("need a > 0, got {a}")));
    }
    if !(p > 0.5 && p.is_finite()) {
        return Err(Error::domain(OP, format!("need p > 1/2, got {p}")));
    }
    check_n(OP, n)?;
    let sqrt_n = (n as f64).sqrt();
    if p == 1.0 {
        Ok(1.0 / (2.0 * a * sqrt_n))
    } else {
        Ok(p * p * (PI / p).sin() / (2.0 * sqrt_n * PI * (p - 1.0) * a.powf(1.0 / p)))
    }
}

/// Smallest `nu` satisfying both coherence bounds given the per-factor
/// coherences: `max{ sqrt(n)/2 (mu_u + mu_v), n mu_u mu_v }`.
pub fn coherence_parameter(mu_u: f64, mu_v: f64, n: usize) -> f64 {
    let n = n as f64;
    f64::max(0.5 * n.sqrt() * (mu_u + mu_v), n * mu_u * mu_v)
}

/// Coherence parameter of the rank-one matrix `u0 v0^T`, with `n` the number
/// of matrix entries (`len(u0) * len(v0)`).
pub fn numeric_coherence(u0: &[f64], v0: &[f64]) -> Result<f64> {
    const OP: &str = "numeric_coherence";
    for (name, x) in [("u0", u0), ("v0", v0)] {
        if x.is_empty() {
            return Err(Error::Empty("coherence vector"));
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::domain(
                OP,
                format!("{name} has norm {norm}, expected 1"),
            ));
        }
    }
    let peak = |x: &[f64]| x.iter().map(|v| v * v).fold(0.0, f64::max);
    Ok(coherence_parameter(peak(u0), peak(v0), u0.len() * v0.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cauchy_at_origin() {
        assert_relative_eq!(
            Profile::cauchy(1.0).eval(0.0),
            1.0 / PI,
            max_relative = 1e-15
        );
    }

    #[test]
    fn laplacian_peak_is_center() {
        let f = SeparableField::isotropic(Profile::laplacian(1.0), Point::new(0.0, 0.0)).unwrap();
        let top = f.eval(Point::new(0.0, 0.0));
        for p in [
            Point::new(0.1, 0.0),
            Point::new(-2.0, 3.0),
            Point::new(0.0, -0.01),
        ] {
            assert!(f.eval(p) < top);
        }
    }

    #[test]
    fn gaussian_decays() {
        let f = SeparableField::isotropic(Profile::gaussian(1.0), Point::new(0.0, 0.0)).unwrap();
        assert!(f.eval(Point::new(0.0, 1.0)) > f.eval(Point::new(0.0, 2.0)));
    }

    #[test]
    fn one_by_one_grid() {
        let f = SeparableField::new(
            Profile::laplacian(0.5),
            Profile::gaussian(2.0),
            3.0,
            Point::new(0.2, -0.1),
        )
        .unwrap();
        let g = GridSpec::new(vec![0.7], vec![0.3]).unwrap();
        let m = discretize(&f, &g);
        assert_eq!(m.shape(), (1, 1));
        assert_eq!(m[(0, 0)], f.eval(Point::new(0.7, 0.3)));
    }

    #[test]
    fn laplacian_grid_is_point_symmetric() {
        let f = SeparableField::isotropic(Profile::laplacian(2.0), Point::new(0.0, 0.0)).unwrap();
        let g = GridSpec::square_arithmetic(-9.5, 1.0, 20).unwrap();
        let m = discretize(&f, &g);
        for i in 0..20 {
            for j in 0..20 {
                assert_relative_eq!(m[(i, j)], m[(19 - i, 19 - j)], max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn grid_rejects_unsorted() {
        assert!(matches!(
            GridSpec::new(vec![0.0, 0.0], vec![1.0]),
            Err(Error::UnsortedGrid { axis: "row" })
        ));
        assert!(GridSpec::new(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn inverse_square_single_point_and_origin() {
        let g = GridSpec::new(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(inverse_square_matrix(&g, 2.5).unwrap()[(0, 0)], 2.5);
        let bad = GridSpec::new(vec![-1.0, 0.0], vec![0.0, 1.0]).unwrap();
        assert!(inverse_square_matrix(&bad, 1.0).is_err());
    }

    #[test]
    fn exponential_coherence_values() {
        assert_relative_eq!(
            analytic_coherence_exponential(1.0, 1.0, 100).unwrap(),
            0.1,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            analytic_coherence_exponential(1.0, 2.0, 100).unwrap(),
            (2.0 / PI).sqrt() / 10.0,
            max_relative = 1e-10
        );
        let a = analytic_coherence_exponential(0.7, 1.3, 64).unwrap();
        let b = analytic_coherence_exponential(0.7, 1.3, 256).unwrap();
        assert_relative_eq!(b, a / 2.0, max_relative = 1e-14);
        assert!(analytic_coherence_exponential(0.0, 1.0, 4).is_err());
        assert!(analytic_coherence_exponential(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn powerlaw_coherence_values() {
        assert_relative_eq!(
            analytic_coherence_powerlaw(1.0, 1.0, 100).unwrap(),
            0.05,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            analytic_coherence_powerlaw(1.0, 2.0, 100).unwrap(),
            1.0 / (5.0 * PI),
            max_relative = 1e-12
        );
        let at_one = analytic_coherence_powerlaw(1.7, 1.0, 100).unwrap();
        for p in [1.0 - 1e-4, 1.0 + 1e-4] {
            assert_relative_eq!(
                analytic_coherence_powerlaw(1.7, p, 100).unwrap(),
                at_one,
                max_relative = 1e-3
            );
        }
        assert!(analytic_coherence_powerlaw(1.0, 0.5, 100).is_err());
    }

    #[test]
    fn coherence_parameter_values() {
        let n = 64;
        let m = 1.0 / (n as f64).sqrt();
        assert_relative_eq!(coherence_parameter(m, m, n), 1.0, max_relative = 1e-14);
        assert_eq!(coherence_parameter(1.0, 1.0, 4), 4.0);
        assert_eq!(
            coherence_parameter(0.3, 0.1, 9),
            coherence_parameter(0.1, 0.3, 9)
        );
    }

    #[test]
    fn numeric_coherence_values() {
        let n = 16;
        let uniform = vec![1.0 / (n as f64).sqrt(); n];
        assert_relative_eq!(
            numeric_coherence(&uniform, &uniform).unwrap(),
            1.0,
            max_relative = 1e-12
        );

        // e_1 against the uniform vector, length 4: mu_u = 1, mu_v = 1/4 and
        // the matrix has 16 entries, so max{(4/2)(1 + 1/4), 16 * 1/4} = 4.
        let e1 = [1.0, 0.0, 0.0, 0.0];
        let flat = [0.5; 4];
        assert_relative_eq!(
            numeric_coherence(&e1, &flat).unwrap(),
            4.0,
            max_relative = 1e-14
        );

        assert!(numeric_coherence(&[1.0, 1.0], &flat).is_err());
    }
}
