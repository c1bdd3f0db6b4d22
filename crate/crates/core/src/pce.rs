//! Polynomial chaos expansions: coefficient algebra, non-intrusive projection,
//! evaluation, and second-order statistics.

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::indices::MultiIndex;
use crate::quad::QuadratureRule;
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::sync::Arc;

/// A vector-valued random quantity written as sum_alpha c_alpha Gamma_alpha.
/// Coefficient row k corresponds to the k-th basis polynomial; the zero
/// multi-index is always first and the basis constant equals one, so the mean
/// and covariance read off the coefficients directly.
#[derive(Debug, Clone)]
pub struct PCExpansion {
    basis: Arc<Basis>,
    coeffs: DMatrix<f64>, // n_terms x width
}

impl PCExpansion {
    pub fn new(basis: Arc<Basis>, coeffs: DMatrix<f64>) -> Result<Self> {
        if coeffs.nrows() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: coeffs.nrows(),
                context: "PC coefficient rows vs basis size",
            });
        }
        if !basis
            .indices()
            .first()
            .map(|i| i.is_zero())
            .unwrap_or(false)
        {
            return Err(Error::InvalidArgument(
                "basis must start with the constant polynomial".into(),
            ));
        }
        Ok(Self { basis, coeffs })
    }

    /// Expansion from an explicit multi-index -> coefficient map; every key
    /// must belong to the basis, absent indices get zero coefficients.
    pub fn from_coeff_map(
        basis: Arc<Basis>,
        width: usize,
        map: &BTreeMap<MultiIndex, Vec<f64>>,
    ) -> Result<Self> {
        let mut coeffs = DMatrix::zeros(basis.len(), width);
        for (index, row) in map {
            let pos = basis.position(index).ok_or_else(|| {
                Error::InvalidArgument(format!("index {index} not in the expansion basis"))
            })?;
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    got: row.len(),
                    context: "PC coefficient width",
                });
            }
            for (j, &v) in row.iter().enumerate() {
                coeffs[(pos, j)] = v;
            }
        }
        Self::new(basis, coeffs)
    }

    pub fn zero(basis: Arc<Basis>, width: usize) -> Result<Self> {
        let coeffs = DMatrix::zeros(basis.len(), width);
        Self::new(basis, coeffs)
    }

    /// Deterministic expansion: only the zero-index coefficient is set.
    pub fn constant(basis: Arc<Basis>, values: &[f64]) -> Result<Self> {
        let mut coeffs = DMatrix::zeros(basis.len(), values.len());
        for (j, &v) in values.iter().enumerate() {
            coeffs[(0, j)] = v;
        }
        Self::new(basis, coeffs)
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    /// Physical dimension w of the coefficient vectors.
    pub fn width(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn n_terms(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn coeff(&self, index: &MultiIndex) -> Option<DVector<f64>> {
        let pos = self.basis.position(index)?;
        Some(self.coeffs.row(pos).transpose())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, DVector<f64>)> {
        self.basis
            .indices()
            .into_iter()
            .enumerate()
            .map(move |(k, idx)| (idx, self.coeffs.row(k).transpose()))
    }

    /// Evaluate the expansion at one point of the underlying variables.
    pub fn eval(&self, point: &[f64]) -> DVector<f64> {
        let vals = DVector::from_vec(self.basis.eval(point));
        self.coeffs.tr_mul(&vals)
    }

    /// Evaluate at many points (flat buffer), returning one row per point.
    pub fn eval_many(&self, points: &[f64]) -> DMatrix<f64> {
        let b = crate::basis::family_matrix(self.basis.as_ref(), points);
        b * &self.coeffs
    }

    /// Mean vector and covariance matrix implied by orthonormality of the
    /// basis: mean is the zero-index coefficient, covariance the sum of outer
    /// products of the remaining coefficients.
    pub fn mean_cov(&self) -> (DVector<f64>, DMatrix<f64>) {
        let mean = self.coeffs.row(0).transpose();
        let n = self.n_terms();
        let tail = self.coeffs.rows(1, n - 1);
        let cov = tail.tr_mul(&tail);
        (mean, cov)
    }

    pub fn mean(&self) -> DVector<f64> {
        self.coeffs.row(0).transpose()
    }
}

/// Non-intrusive projection: coefficient of Gamma_alpha is
/// sum_k samples_k Gamma_alpha(node_k) w_k. `samples` holds one row per
/// quadrature node.
pub fn project(
    samples: &DMatrix<f64>,
    basis: Arc<Basis>,
    rule: &QuadratureRule,
) -> Result<PCExpansion> {
    let b = crate::basis::family_matrix(basis.as_ref(), rule.nodes_flat());
    project_with_matrix(samples, basis, &b, rule.weights())
}

/// Projection reusing a precomputed basis-evaluation matrix (one row per
/// node). The matrix must have been built by `family_matrix` on the same
/// basis so repeated projections are bit-identical.
pub fn project_with_matrix(
    samples: &DMatrix<f64>,
    basis: Arc<Basis>,
    basis_at_nodes: &DMatrix<f64>,
    weights: &[f64],
) -> Result<PCExpansion> {
    if samples.nrows() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: samples.nrows(),
            context: "projection samples vs quadrature nodes",
        });
    }
    if basis_at_nodes.nrows() != weights.len() || basis_at_nodes.ncols() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: basis_at_nodes.nrows(),
            context: "basis matrix vs quadrature nodes",
        });
    }
    let mut weighted = samples.clone();
    for (k, &w) in weights.iter().enumerate() {
        weighted.row_mut(k).scale_mut(w);
    }
    let coeffs = basis_at_nodes.tr_mul(&weighted);
    PCExpansion::new(basis, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::OrthonormalBasis;
    use crate::indices::enumerate_multiindices;
    use crate::quad::{gauss_legendre_1d, smolyak_sparse_grid, tensor_rule};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn legendre(dim: usize, degree: u32) -> Arc<Basis> {
        Arc::new(Basis::legendre(dim, degree).unwrap())
    }

    #[test]
    fn constant_samples_project_to_constant() {
        let basis = legendre(2, 2);
        let rule = smolyak_sparse_grid(2, 2).unwrap();
        let samples = DMatrix::from_element(rule.len(), 3, 7.5);
        let pce = project(&samples, basis, &rule).unwrap();
        assert_relative_eq!(pce.coeffs()[(0, 0)], 7.5, epsilon = 1e-12);
        for k in 1..pce.n_terms() {
            for j in 0..3 {
                assert!(pce.coeffs()[(k, j)].abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn projecting_a_basis_polynomial_gives_a_unit_coefficient() {
        let basis = legendre(2, 2);
        let rule = tensor_rule(&[
            gauss_legendre_1d(3).unwrap(),
            gauss_legendre_1d(3).unwrap(),
        ])
        .unwrap();
        // samples of Gamma_beta for beta = (1,1)
        let beta = MultiIndex::new(vec![1, 1]);
        let pos = basis.position(&beta).unwrap();
        let mut samples = DMatrix::zeros(rule.len(), 1);
        for k in 0..rule.len() {
            samples[(k, 0)] = basis.eval(rule.node(k))[pos];
        }
        let pce = project(&samples, basis.clone(), &rule).unwrap();
        for k in 0..pce.n_terms() {
            let expected = if k == pos { 1.0 } else { 0.0 };
            assert_relative_eq!(pce.coeffs()[(k, 0)], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn mean_cov_of_simple_expansion() {
        let basis = legendre(1, 1);
        let mut map = BTreeMap::new();
        map.insert(MultiIndex::new(vec![0]), vec![1.0]);
        map.insert(MultiIndex::new(vec![1]), vec![2.0]);
        let pce = PCExpansion::from_coeff_map(basis, 1, &map).unwrap();
        let (mean, cov) = pce.mean_cov();
        assert_relative_eq!(mean[0], 1.0);
        assert_relative_eq!(cov[(0, 0)], 4.0);
    }

    #[test]
    fn zero_index_only_expansion_has_zero_covariance() {
        let basis = legendre(2, 1);
        let pce = PCExpansion::constant(basis, &[3.0, -1.0]).unwrap();
        let (mean, cov) = pce.mean_cov();
        assert_eq!(mean.as_slice(), &[3.0, -1.0]);
        assert_relative_eq!(cov.abs().max(), 0.0);
        assert_relative_eq!(pce.eval(&[0.3, -0.8])[0], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_expansion_evaluates_to_zero() {
        let basis = legendre(2, 2);
        let pce = PCExpansion::zero(basis, 2).unwrap();
        let v = pce.eval(&[0.5, -0.5]);
        assert_eq!(v.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn mean_cov_matches_monte_carlo() {
        let basis = legendre(2, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let coeffs = DMatrix::from_fn(basis.len(), 2, |_, _| rng.random::<f64>() - 0.5);
        let pce = PCExpansion::new(basis, coeffs).unwrap();
        let (mean, cov) = pce.mean_cov();

        let n = 100_000;
        let mut mc_mean = DVector::zeros(2);
        let mut mc_sq = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let point = [
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            ];
            let v = pce.eval(&point);
            mc_mean += &v;
            mc_sq += &v * v.transpose();
        }
        mc_mean /= n as f64;
        mc_sq /= n as f64;
        let mc_cov = mc_sq - &mc_mean * mc_mean.transpose();
        // 3-standard-error tolerance, conservative scale estimate
        for j in 0..2 {
            let se = (cov[(j, j)] / n as f64).sqrt();
            assert!(
                (mean[j] - mc_mean[j]).abs() <= 3.0 * se + 1e-12,
                "mean component {j} off: {} vs {}",
                mean[j],
                mc_mean[j]
            );
        }
        for i in 0..2 {
            for j in 0..2 {
                let spread = (cov[(i, i)] * cov[(j, j)]).sqrt().max(1e-12);
                assert!(
                    (cov[(i, j)] - mc_cov[(i, j)]).abs() <= 3.0 * 2.0 * spread / (n as f64).sqrt(),
                    "cov ({i},{j}) off: {} vs {}",
                    cov[(i, j)],
                    mc_cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn composed_evaluation_matches_symbolic_expansion() {
        // inner: eta(x) = a + b * L1(x); outer: degree-2 polynomial in eta.
        // The composition is a degree-2 polynomial in x expanded by hand.
        let inner_basis = legendre(1, 1);
        let mut inner_map = BTreeMap::new();
        inner_map.insert(MultiIndex::new(vec![0]), vec![0.25]);
        inner_map.insert(MultiIndex::new(vec![1]), vec![0.5]);
        let inner = PCExpansion::from_coeff_map(inner_basis, 1, &inner_map).unwrap();

        // outer basis: monomials orthonormalized for an easy measure so the
        // coefficients stay interpretable; identity Gram keeps them monomials
        let set = enumerate_multiindices(1, 2).unwrap();
        let gram = DMatrix::identity(3, 3);
        let outer_basis = Arc::new(Basis::Orthonormalized(
            OrthonormalBasis::orthonormalize(&gram, set, 1e-12).unwrap(),
        ));
        let mut outer_map = BTreeMap::new();
        outer_map.insert(MultiIndex::new(vec![0]), vec![1.0]);
        outer_map.insert(MultiIndex::new(vec![1]), vec![-2.0]);
        outer_map.insert(MultiIndex::new(vec![2]), vec![3.0]);
        let outer = PCExpansion::from_coeff_map(outer_basis, 1, &outer_map).unwrap();

        let sqrt3 = 3.0_f64.sqrt();
        for &x in &[-0.9, -0.3, 0.0, 0.4, 0.8] {
            let eta = 0.25 + 0.5 * sqrt3 * x; // inner in closed form
            let expected = 1.0 - 2.0 * eta + 3.0 * eta * eta;
            let composed = outer.eval(inner.eval(&[x]).as_slice());
            assert_relative_eq!(composed[0], expected, epsilon = 1e-12);
            assert_relative_eq!(inner.eval(&[x])[0], eta, epsilon = 1e-12);
        }
    }

    #[test]
    fn project_rejects_length_mismatch() {
        let basis = legendre(1, 1);
        let rule = gauss_legendre_1d(3).unwrap();
        let samples = DMatrix::zeros(2, 1);
        assert!(project(&samples, basis, &rule).is_err());
    }
}
