//! Multi-index bookkeeping for multivariate polynomial spaces.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

/// Exponent tuple of a multivariate monomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    entries: Vec<u32>,
}

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        Self { entries }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            entries: vec![0; dim],
        }
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    /// Total degree |beta|.
    pub fn modulus(&self) -> u32 {
        self.entries.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&e| e == 0)
    }

    /// Componentwise sum, used to look up products of monomials.
    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.dim(), other.dim());
        MultiIndex::new(
            self.entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Graded order: lower total degree first; within a degree, higher leading
/// exponents first, so that e.g. (2,0) precedes (1,1) precedes (0,2).
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.modulus()
            .cmp(&other.modulus())
            .then_with(|| other.entries.cmp(&self.entries))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// All multi-indices of dimension `dim` with total degree at most `max_degree`,
/// in the graded order above. The zero index is always first.
#[derive(Debug, Clone)]
pub struct GradedIndexSet {
    dim: usize,
    max_degree: u32,
    indices: Vec<MultiIndex>,
    positions: BTreeMap<MultiIndex, usize>,
    // (coordinate, exponent) pairs with exponent > 0, per index; speeds up
    // monomial evaluation which is the innermost loop of Gram assembly.
    factors: Vec<Vec<(u32, u32)>>,
}

/// Number of multi-indices with dimension `dim` and total degree <= `degree`,
/// i.e. C(dim + degree, dim). Fails on arithmetic overflow.
pub fn index_set_len(dim: usize, degree: u32) -> Result<usize> {
    let mut acc: u128 = 1;
    for i in 1..=dim as u128 {
        acc = acc
            .checked_mul(degree as u128 + i)
            .ok_or(Error::Sizing {
                dim,
                degree: degree as usize,
            })?
            / i;
    }
    usize::try_from(acc).map_err(|_| Error::Sizing {
        dim,
        degree: degree as usize,
    })
}

/// Enumerate the graded multi-index set for `dim >= 1` variables up to total
/// degree `max_degree`.
pub fn enumerate_multiindices(dim: usize, max_degree: u32) -> Result<GradedIndexSet> {
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "index set dimension must be at least 1".into(),
        ));
    }
    let count = index_set_len(dim, max_degree)?;
    if count > 100_000_000 {
        return Err(Error::Sizing {
            dim,
            degree: max_degree as usize,
        });
    }

    let mut indices = Vec::with_capacity(count);
    let mut current = vec![0u32; dim];
    for degree in 0..=max_degree {
        fill_degree(0, degree, &mut current, &mut indices);
    }
    debug_assert_eq!(indices.len(), count);

    let positions = indices
        .iter()
        .enumerate()
        .map(|(k, idx)| (idx.clone(), k))
        .collect();
    let factors = indices
        .iter()
        .map(|idx| {
            idx.entries()
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(d, &e)| (d as u32, e))
                .collect()
        })
        .collect();

    Ok(GradedIndexSet {
        dim,
        max_degree,
        indices,
        positions,
        factors,
    })
}

fn fill_degree(slot: usize, remaining: u32, current: &mut [u32], out: &mut Vec<MultiIndex>) {
    if slot + 1 == current.len() {
        current[slot] = remaining;
        out.push(MultiIndex::new(current.to_vec()));
        return;
    }
    for v in (0..=remaining).rev() {
        current[slot] = v;
        fill_degree(slot + 1, remaining - v, current, out);
    }
}

impl GradedIndexSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn index(&self, k: usize) -> &MultiIndex {
        &self.indices[k]
    }

    pub fn position(&self, index: &MultiIndex) -> Option<usize> {
        self.positions.get(index).copied()
    }

    /// Evaluate every monomial chi^beta of the set at `point`.
    pub fn eval_monomials(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: point.len(),
                context: "monomial evaluation point",
            });
        }
        let mut out = vec![0.0; self.len()];
        let mut powers = vec![0.0; self.dim * (self.max_degree as usize + 1)];
        self.eval_monomials_into(point, &mut powers, &mut out);
        Ok(out)
    }

    /// In-place monomial evaluation. `powers` must have length
    /// `dim * (max_degree + 1)`; `out` must have length `len()`.
    /// All callers share this routine so that repeated evaluations of the same
    /// monomial are bit-identical.
    pub fn eval_monomials_into(&self, point: &[f64], powers: &mut [f64], out: &mut [f64]) {
        let stride = self.max_degree as usize + 1;
        debug_assert_eq!(powers.len(), self.dim * stride);
        debug_assert_eq!(out.len(), self.len());
        for (d, &x) in point.iter().enumerate() {
            let row = &mut powers[d * stride..(d + 1) * stride];
            row[0] = 1.0;
            for k in 1..stride {
                row[k] = row[k - 1] * x;
            }
        }
        for (k, factors) in self.factors.iter().enumerate() {
            let mut value = 1.0;
            for &(d, e) in factors {
                value *= powers[d as usize * stride + e as usize];
            }
            out[k] = value;
        }
    }

    /// Scratch buffer sized for `eval_monomials_into`.
    pub fn power_scratch(&self) -> Vec<f64> {
        vec![0.0; self.dim * (self.max_degree as usize + 1)]
    }
}
