use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POINTS_PER_AXIS: usize = 16;

/// Uniform tensor grid on `[-R, R]^d` with trapezoid weights.
///
/// Nodes are numbered row-major, the last axis varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dimension: usize,
    radius: f64,
    points: usize,
}

impl Grid {
    pub fn new(dimension: usize, radius: f64, points: usize) -> Result<Self> {
        if dimension == 0 || dimension > 3 {
            return Err(Error::InvalidInput(format!(
                "grid dimension must be 1, 2 or 3, got {dimension}"
            )));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!(
                "box radius must be positive, got {radius}"
            )));
        }
        if points < MIN_POINTS_PER_AXIS {
            return Err(Error::InvalidInput(format!(
                "need at least {MIN_POINTS_PER_AXIS} points per axis, got {points}"
            )));
        }
        Ok(Grid {
            dimension,
            radius,
            points,
        })
    }

    /// Grid on `[-R', R']^d` with `R' >= radius` chosen to keep the spacing.
    pub fn enlarged(&self, factor: f64) -> Result<Self> {
        let h = self.spacing();
        let half = ((self.radius * factor) / h).ceil() as usize;
        Grid::new(self.dimension, half as f64 * h, 2 * half + 1)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / (self.points - 1) as f64
    }

    pub fn node_count(&self) -> usize {
        self.points.pow(self.dimension as u32)
    }

    pub fn interior_count(&self) -> usize {
        (self.points - 2).pow(self.dimension as u32)
    }

    pub fn axis_coordinate(&self, i: usize) -> f64 {
        // Symmetric evaluation so that the centre node is exactly 0 for odd n.
        let h = self.spacing();
        let from_left = -self.radius + i as f64 * h;
        let from_right = self.radius - (self.points - 1 - i) as f64 * h;
        if i < self.points / 2 {
            from_left
        } else {
            from_right
        }
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dimension];
        let mut rest = node;
        for k in (0..self.dimension).rev() {
            idx[k] = rest % self.points;
            rest /= self.points;
        }
        idx
    }

    pub fn node_of(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.points + i)
    }

    pub fn coordinates(&self, node: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dimension];
        self.coordinates_into(node, &mut x);
        x
    }

    pub fn coordinates_into(&self, node: usize, x: &mut [f64]) {
        let mut rest = node;
        for k in (0..self.dimension).rev() {
            x[k] = self.axis_coordinate(rest % self.points);
            rest /= self.points;
        }
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let mut rest = node;
        for _ in 0..self.dimension {
            let i = rest % self.points;
            if i == 0 || i == self.points - 1 {
                return true;
            }
            rest /= self.points;
        }
        false
    }

    /// Trapezoid weight of a node.
    pub fn weight(&self, node: usize) -> f64 {
        let h = self.spacing();
        let mut w = 1.0;
        let mut rest = node;
        for _ in 0..self.dimension {
            let i = rest % self.points;
            w *= if i == 0 || i == self.points - 1 {
                0.5 * h
            } else {
                h
            };
            rest /= self.points;
        }
        w
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.node_count()).map(|i| self.weight(i)).collect()
    }

    /// Node indices of interior (non-boundary) nodes, in increasing order.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| !self.is_boundary(i))
            .collect()
    }

    /// Nearest node to `x`, clamped to the box.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let h = self.spacing();
        let idx: Vec<usize> = x
            .iter()
            .map(|&xi| {
                let i = ((xi + self.radius) / h).round();
                i.clamp(0.0, (self.points - 1) as f64) as usize
            })
            .collect();
        self.node_of(&idx)
    }

    /// Evaluates `f` at every node.
    pub fn sample(&self, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let mut x = vec![0.0; self.dimension];
        (0..self.node_count())
            .map(|i| {
                self.coordinates_into(i, &mut x);
                f(&x)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_coarse_grids() {
        assert!(Grid::new(1, 1.0, 3).is_err());
        assert!(Grid::new(1, 0.0, 32).is_err());
        assert!(Grid::new(4, 1.0, 32).is_err());
    }

    #[test]
    fn centre_is_exact_zero() {
        let g = Grid::new(1, 8.0, 801).unwrap();
        assert_eq!(g.axis_coordinate(400), 0.0);
        assert_eq!(g.axis_coordinate(0), -8.0);
        assert_eq!(g.axis_coordinate(800), 8.0);
        assert_eq!(g.nearest_node(&[0.0]), 400);
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::new(2, 1.0, 17).unwrap();
        for node in [0, 5, 16, 17, 100, 288] {
            assert_eq!(g.node_of(&g.multi_index(node)), node);
        }
        assert_eq!(g.interior_nodes().len(), g.interior_count());
    }

    #[test]
    fn enlarged_keeps_spacing() {
        let g = Grid::new(1, 8.0, 801).unwrap();
        let e = g.enlarged(1.5).unwrap();
        assert!((e.spacing() - g.spacing()).abs() < 1e-14);
        assert!((e.radius() - 12.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn weights_sum_to_volume(dim in 1usize..=3, n in 16usize..40, r in 0.5f64..20.0) {
            let g = Grid::new(dim, r, n).unwrap();
            let total: f64 = crate::stats::compensated_sum(g.weights());
            let vol = (2.0 * r).powi(dim as i32);
            prop_assert!((total - vol).abs() <= 1e-12 * vol);
        }
    }
}
