//! Uniform 1D grids, the grid inner product, and trapezoidal quadrature.
//!
//! Everything downstream (eigensolves, matrix elements, propagation) works on
//! uniform grids so that the kinetic operator stays tridiagonal and mirror
//! symmetry maps grid points onto grid points exactly.

use crate::error::{Error, Result};

/// A uniform grid on `[x_min, x_max]` with at least three points.
///
/// Symmetric grids (`x_min == -x_max`) are detected on construction; parity
/// analysis is only offered on those.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 points, got {n_points}"
            )));
        }
        if x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "x_max ({x_max}) must exceed x_min ({x_min})"
            )));
        }
        Ok(Grid1D {
            x_min,
            x_max,
            n_points,
        })
    }

    /// Symmetric grid on `[-half_extent, half_extent]`.
    pub fn symmetric(half_extent: f64, n_points: usize) -> Result<Self> {
        if !(half_extent > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half extent must be positive, got {half_extent}"
            )));
        }
        Grid1D::new(-half_extent, half_extent, n_points)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points as f64 - 1.0)
    }

    pub fn point(&self, i: usize) -> f64 {
        debug_assert!(i < self.n_points);
        self.x_min + self.spacing() * i as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// `x_min == -x_max` up to rounding; the mirror `x -> -x` then maps node
    /// `i` to node `n-1-i` exactly.
    pub fn is_symmetric(&self) -> bool {
        (self.x_min + self.x_max).abs() <= 1e-12 * self.x_max.abs().max(1e-300)
    }

    /// Sample a function at the grid nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n_points).map(|i| f(self.point(i))).collect()
    }

    /// Grid inner product `h * sum_i u_i v_i`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.n_points);
        debug_assert_eq!(v.len(), self.n_points);
        self.spacing() * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// `h * sum_i u_i v_{n-1-i}`: the inner product of `u` with the mirror
    /// image of `v`. Meaningful on symmetric grids only.
    pub fn mirror_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.n_points);
        debug_assert_eq!(v.len(), self.n_points);
        self.spacing()
            * u.iter()
                .zip(v.iter().rev())
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// Trapezoidal quadrature of samples over the grid. Exact for piecewise
    /// linear integrands; spectrally accurate for smooth functions that decay
    /// below round-off before the edges.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n_points);
        let h = self.spacing();
        let interior: f64 = values[1..self.n_points - 1].iter().sum();
        h * (interior + 0.5 * (values[0] + values[self.n_points - 1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid1D::new(0.0, 1.0, 2).is_err());
        assert!(Grid1D::new(1.0, 1.0, 10).is_err());
        assert!(Grid1D::new(2.0, 1.0, 10).is_err());
        assert!(Grid1D::new(f64::NAN, 1.0, 10).is_err());
    }

    #[test]
    fn spacing_and_points() {
        let g = Grid1D::new(0.0, 1.0, 11).unwrap();
        assert!((g.spacing() - 0.1).abs() < 1e-15);
        assert!((g.point(10) - 1.0).abs() < 1e-15);
        assert!(!g.is_symmetric());
        assert!(Grid1D::symmetric(5.0, 11).unwrap().is_symmetric());
    }

    #[test]
    fn integrate_constant_is_exact() {
        for n in [3, 7, 100, 1001] {
            let g = Grid1D::new(0.0, 1.0, n).unwrap();
            let one = vec![1.0; n];
            assert!((g.integrate(&one) - 1.0).abs() < 1e-14, "n={n}");
        }
    }

    #[test]
    fn integrate_odd_function_on_symmetric_grid() {
        let g = Grid1D::symmetric(3.0, 301).unwrap();
        let v = g.sample(|x| x.powi(3) - 2.0 * x);
        assert!(g.integrate(&v).abs() < 1e-13);
    }

    #[test]
    fn integrate_gaussian_matches_sqrt_pi() {
        let g = Grid1D::symmetric(10.0, 2001).unwrap();
        let v = g.sample(|x| (-x * x).exp());
        assert!((g.integrate(&v) - std::f64::consts::PI.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn mirror_inner_detects_parity() {
        let g = Grid1D::symmetric(4.0, 257).unwrap();
        let even = g.sample(|x| (-x * x).exp());
        let odd = g.sample(|x| x * (-x * x).exp());
        let ne = g.inner(&even, &even);
        let no = g.inner(&odd, &odd);
        assert!((g.mirror_inner(&even, &even) / ne - 1.0).abs() < 1e-12);
        assert!((g.mirror_inner(&odd, &odd) / no + 1.0).abs() < 1e-12);
    }
}
