//! Discrete (empirical) probability measures on R^z.

use crate::error::{Error, Result};

/// A measure supported on finitely many points, typically Monte Carlo samples
/// (equal weights) or quadrature nodes (arbitrary weights).
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    dim: usize,
    nodes: Vec<f64>, // flat, len = count * dim
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("measure dimension must be >= 1".into()));
        }
        if nodes.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: weights.len() * dim,
                got: nodes.len(),
                context: "measure nodes vs weights",
            });
        }
        if weights.is_empty() {
            return Err(Error::InvalidArgument("measure must have at least one node".into()));
        }
        Ok(Self { dim, nodes, weights })
    }

    /// Equal-weight empirical measure from a flat sample buffer.
    pub fn from_samples(dim: usize, samples: Vec<f64>) -> Result<Self> {
        if dim == 0 || samples.len() % dim != 0 {
            return Err(Error::InvalidArgument(
                "sample buffer length must be a positive multiple of dim".into(),
            ));
        }
        let count = samples.len() / dim;
        let w = 1.0 / count as f64;
        Self::new(dim, samples, vec![w; count])
    }

    pub fn from_rows(rows: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut flat = Vec::with_capacity(dim * rows.len());
        for row in rows {
            if row.len() != dim {
                return Err(Error::InvalidArgument("ragged measure rows".into()));
            }
            flat.extend_from_slice(row);
        }
        Self::new(dim, flat, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nodes_flat(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        (self.weight_sum() - 1.0).abs() <= tol
    }

    /// Per-coordinate empirical mean.
    pub fn coordinate_means(&self) -> Vec<f64> {
        let total = self.weight_sum();
        let mut means = vec![0.0; self.dim];
        for k in 0..self.len() {
            let w = self.weights[k];
            for (d, &x) in self.node(k).iter().enumerate() {
                means[d] += w * x;
            }
        }
        for m in &mut means {
            *m /= total;
        }
        means
    }

    /// Per-coordinate half-range (max - min) / 2 of the support.
    pub fn coordinate_half_ranges(&self) -> Vec<f64> {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for k in 0..self.len() {
            for (d, &x) in self.node(k).iter().enumerate() {
                lo[d] = lo[d].min(x);
                hi[d] = hi[d].max(x);
            }
        }
        lo.iter().zip(&hi).map(|(&a, &b)| 0.5 * (b - a)).collect()
    }
}
