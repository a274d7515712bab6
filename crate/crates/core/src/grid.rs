//! Axis-aligned boxes and midpoint-rule quadrature grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[low_1, high_1] x ... x [low_d, high_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    bounds: Vec<(f64, f64)>,
}

impl SupportBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid(
                "bounds",
                "a box needs at least one dimension",
            ));
        }
        for &(low, high) in &bounds {
            if !(low.is_finite() && high.is_finite()) {
                return Err(Error::NonFinite("bounds"));
            }
            if low >= high {
                return Err(Error::invalid(
                    "bounds",
                    format!("low {low} must be below high {high}"),
                ));
            }
        }
        Ok(Self { bounds })
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn low(&self, axis: usize) -> f64 {
        self.bounds[axis].0
    }

    pub fn high(&self, axis: usize) -> f64 {
        self.bounds[axis].1
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.bounds[axis].1 - self.bounds[axis].0
    }

    /// Lebesgue measure of the box.
    pub fn volume(&self) -> f64 {
        (0..self.dimension()).map(|p| self.width(p)).product()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dimension()
            && point
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(low, high))| x >= low && x <= high)
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &SupportBox) -> Result<SupportBox> {
        if self.dimension() != other.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: other.dimension(),
            });
        }
        let bounds = self
            .bounds
            .iter()
            .zip(&other.bounds)
            .map(|(a, b)| (a.0.min(b.0), a.1.max(b.1)))
            .collect();
        Ok(SupportBox { bounds })
    }

    pub fn contains_box(&self, other: &SupportBox) -> bool {
        self.dimension() == other.dimension()
            && self
                .bounds
                .iter()
                .zip(&other.bounds)
                .all(|(a, b)| a.0 <= b.0 && a.1 >= b.1)
    }
}

/// Tensor midpoint rule on a [`SupportBox`].
///
/// Points are stored in row-major order: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    support: SupportBox,
    points_per_dim: Vec<usize>,
}

impl QuadratureGrid {
    pub fn new(support: SupportBox, points_per_dim: Vec<usize>) -> Result<Self> {
        if points_per_dim.len() != support.dimension() {
            return Err(Error::DimensionMismatch {
                expected: support.dimension(),
                got: points_per_dim.len(),
            });
        }
        if points_per_dim.contains(&0) {
            return Err(Error::invalid(
                "points_per_dim",
                "every axis needs at least one point",
            ));
        }
        Ok(Self {
            support,
            points_per_dim,
        })
    }

    /// Same number of points along every axis.
    pub fn uniform(support: SupportBox, points: usize) -> Result<Self> {
        let d = support.dimension();
        Self::new(support, vec![points; d])
    }

    pub fn support(&self) -> &SupportBox {
        &self.support
    }

    pub fn dimension(&self) -> usize {
        self.support.dimension()
    }

    pub fn points_per_dim(&self) -> &[usize] {
        &self.points_per_dim
    }

    pub fn len(&self) -> usize {
        self.points_per_dim.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.support.width(axis) / self.points_per_dim[axis] as f64
    }

    /// Volume of one cell; every midpoint carries this weight.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dimension()).map(|p| self.spacing(p)).product()
    }

    pub fn weights(&self) -> Vec<f64> {
        vec![self.cell_volume(); self.len()]
    }

    /// Midpoints along one axis.
    pub fn nodes(&self, axis: usize) -> Vec<f64> {
        let low = self.support.low(axis);
        let step = self.spacing(axis);
        (0..self.points_per_dim[axis])
            .map(|i| low + step * (i as f64 + 0.5))
            .collect()
    }

    /// Coordinates of the point with flat index `index`.
    pub fn point(&self, index: usize) -> Vec<f64> {
        let d = self.dimension();
        let mut coords = vec![0.0; d];
        let mut rest = index;
        for p in (0..d).rev() {
            let m = self.points_per_dim[p];
            let i = rest % m;
            rest /= m;
            coords[p] = self.support.low(p) + self.spacing(p) * (i as f64 + 0.5);
        }
        coords
    }

    /// Evaluates `f` at every midpoint, in parallel, in grid order.
    pub fn evaluate<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        (0..self.len())
            .into_par_iter()
            .map(|i| f(&self.point(i)))
            .collect()
    }

    /// Midpoint-rule integral of values sampled on this grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Integral of `(value - level)_+` over the grid.
    pub fn integrate_excess(&self, values: &[f64], level: f64) -> f64 {
        values.iter().map(|&v| (v - level).max(0.0)).sum::<f64>() * self.cell_volume()
    }

    /// The same box with every axis refined by `factor`.
    pub fn refined(&self, factor: usize) -> QuadratureGrid {
        QuadratureGrid {
            support: self.support.clone(),
            points_per_dim: self.points_per_dim.iter().map(|m| m * factor).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_volume() {
        let b = SupportBox::new(vec![(-1.0, 2.0), (0.0, 0.5)]).unwrap();
        let g = QuadratureGrid::new(b, vec![7, 3]).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert!((total - 1.5).abs() < 1e-12);
    }

    #[test]
    fn row_major_points() {
        let b = SupportBox::new(vec![(0.0, 2.0), (0.0, 4.0)]).unwrap();
        let g = QuadratureGrid::new(b, vec![2, 4]).unwrap();
        assert_eq!(g.point(0), vec![0.5, 0.5]);
        assert_eq!(g.point(1), vec![0.5, 1.5]);
        assert_eq!(g.point(4), vec![1.5, 0.5]);
        assert_eq!(g.nodes(1), vec![0.5, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn midpoint_integrates_linear_exactly() {
        let b = SupportBox::new(vec![(0.0, 1.0)]).unwrap();
        let g = QuadratureGrid::uniform(b, 10).unwrap();
        let v = g.evaluate(|x| 3.0 * x[0] + 1.0);
        assert!((g.integrate(&v) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_box() {
        assert!(SupportBox::new(vec![(1.0, 1.0)]).is_err());
        assert!(SupportBox::new(vec![]).is_err());
    }
}
