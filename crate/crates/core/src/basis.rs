//! Polynomial bases: tensorized normalized Legendre for the input variables
//! and measure-fitted orthonormal bases obtained from a Cholesky factorization
//! of the monomial Gram matrix.

use crate::error::{Error, Result};
use crate::indices::{enumerate_multiindices, GradedIndexSet, MultiIndex};
use crate::measure::DiscreteMeasure;
use crate::parallel;
use nalgebra::DMatrix;
use rayon::prelude::*;

/// Default pruning tolerance for degenerate measures, relative to the largest
/// diagonal entry of the Gram matrix.
pub const DEFAULT_DROP_TOL: f64 = 1e-12;

/// A finite family of multivariate polynomials that can be evaluated at a point.
pub trait PolyFamily {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn eval_into(&self, point: &[f64], out: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn eval(&self, point: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(point, &mut out);
        out
    }
}

/// Raw monomials chi^beta over a graded index set.
impl PolyFamily for GradedIndexSet {
    fn dim(&self) -> usize {
        GradedIndexSet::dim(self)
    }

    fn len(&self) -> usize {
        GradedIndexSet::len(self)
    }

    fn eval_into(&self, point: &[f64], out: &mut [f64]) {
        let mut powers = self.power_scratch();
        self.eval_monomials_into(point, &mut powers, out);
    }
}

/// Evaluate a family at many points (flat buffer of `n * dim` coordinates),
/// returning the row-major evaluation matrix (n rows, `family.len()` columns).
pub fn family_matrix<F>(family: &F, points: &[f64]) -> DMatrix<f64>
where
    F: PolyFamily + Sync,
{
    let dim = family.dim();
    let width = family.len();
    assert_eq!(points.len() % dim, 0, "point buffer not a multiple of dim");
    let n = points.len() / dim;
    let mut rows = vec![0.0; n * width];
    rows.par_chunks_mut(width).enumerate().for_each(|(k, row)| {
        family.eval_into(&points[k * dim..(k + 1) * dim], row);
    });
    DMatrix::from_row_slice(n, width, &rows)
}

// ---------------------------------------------------------------------------
// Normalized Legendre basis
// ---------------------------------------------------------------------------

/// Value of the normalized Legendre polynomials L^_0..L^_max at `x`, where
/// L^_n = sqrt(2n+1) P_n and the weight is the uniform probability density on
/// [-1, 1].
pub fn legendre_normalized_into(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    // three-term recurrence on the unnormalized P_n, normalized at the end
    let mut p_prev = 1.0;
    let mut p = x;
    out[1] = 3.0_f64.sqrt() * p;
    for n in 1..out.len() - 1 {
        let p_next = ((2 * n + 1) as f64 * x * p - n as f64 * p_prev) / (n + 1) as f64;
        p_prev = p;
        p = p_next;
        out[n + 1] = ((2 * (n + 1) + 1) as f64).sqrt() * p;
    }
}

/// Tensorized normalized Legendre polynomials over a graded index set;
/// orthonormal for the uniform probability measure on [-1,1]^dim.
#[derive(Debug, Clone)]
pub struct LegendreBasis {
    index_set: GradedIndexSet,
}

impl LegendreBasis {
    pub fn new(dim: usize, max_degree: u32) -> Result<Self> {
        Ok(Self {
            index_set: enumerate_multiindices(dim, max_degree)?,
        })
    }

    pub fn index_set(&self) -> &GradedIndexSet {
        &self.index_set
    }

    /// Evaluation with caller-provided scratch of length `dim * (max_degree+1)`.
    pub fn eval_with_scratch(&self, point: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        let stride = self.index_set.max_degree() as usize + 1;
        let dim = self.index_set.dim();
        debug_assert_eq!(scratch.len(), dim * stride);
        for (d, &x) in point.iter().enumerate() {
            legendre_normalized_into(x, &mut scratch[d * stride..(d + 1) * stride]);
        }
        for (k, idx) in self.index_set.indices().iter().enumerate() {
            let mut value = 1.0;
            for (d, &e) in idx.entries().iter().enumerate() {
                if e > 0 {
                    value *= scratch[d * stride + e as usize];
                }
            }
            out[k] = value;
        }
    }
}

impl PolyFamily for LegendreBasis {
    fn dim(&self) -> usize {
        self.index_set.dim()
    }

    fn len(&self) -> usize {
        self.index_set.len()
    }

    fn eval_into(&self, point: &[f64], out: &mut [f64]) {
        let mut scratch = self.index_set.power_scratch();
        self.eval_with_scratch(point, &mut scratch, out);
    }
}

// ---------------------------------------------------------------------------
// Gram matrices and moments
// ---------------------------------------------------------------------------

/// Gram matrix G_ij = sum_k w_k m_i(x_k) m_j(x_k) of the monomials of
/// `indices` under `measure`. Symmetric by construction.
pub fn gram_matrix(indices: &GradedIndexSet, measure: &DiscreteMeasure) -> Result<DMatrix<f64>> {
    if measure.dim() != indices.dim() {
        return Err(Error::DimensionMismatch {
            expected: indices.dim(),
            got: measure.dim(),
            context: "gram measure dimension",
        });
    }
    let mu = indices.len();
    let upper = parallel::chunked_fold(
        measure.len(),
        |range| {
            let mut local = vec![0.0; mu * (mu + 1) / 2];
            let mut powers = indices.power_scratch();
            let mut mono = vec![0.0; mu];
            for k in range {
                indices.eval_monomials_into(measure.node(k), &mut powers, &mut mono);
                let w = measure.weight(k);
                let mut t = 0;
                for i in 0..mu {
                    let wi = w * mono[i];
                    for j in i..mu {
                        local[t] += wi * mono[j];
                        t += 1;
                    }
                }
            }
            local
        },
        vec![0.0; mu * (mu + 1) / 2],
        |mut acc, local| {
            for (a, v) in acc.iter_mut().zip(&local) {
                *a += v;
            }
            acc
        },
    );
    let mut g = DMatrix::zeros(mu, mu);
    let mut t = 0;
    for i in 0..mu {
        for j in i..mu {
            g[(i, j)] = upper[t];
            g[(j, i)] = upper[t];
            t += 1;
        }
    }
    Ok(g)
}

/// Moments of all monomials of `moment_set` under `measure`, with points first
/// mapped through `scaling`.
fn scaled_monomial_moments(
    moment_set: &GradedIndexSet,
    measure: &DiscreteMeasure,
    scaling: &AffineScaling,
) -> Vec<f64> {
    let len = moment_set.len();
    parallel::chunked_vec_sum(measure.len(), len, |k, buf| {
        let mut powers = moment_set.power_scratch();
        let mut mono = vec![0.0; len];
        let mut scaled = vec![0.0; moment_set.dim()];
        scaling.apply_into(measure.node(k), &mut scaled);
        moment_set.eval_monomials_into(&scaled, &mut powers, &mut mono);
        let w = measure.weight(k);
        for (b, m) in buf.iter_mut().zip(&mono) {
            *b += w * m;
        }
    })
}

/// Assemble the Gram matrix of `indices` from precomputed monomial moments of
/// degree up to `2 * indices.max_degree()`.
pub fn gram_from_moments(
    indices: &GradedIndexSet,
    moment_set: &GradedIndexSet,
    moments: &[f64],
) -> Result<DMatrix<f64>> {
    if moment_set.max_degree() < 2 * indices.max_degree() {
        return Err(Error::InvalidArgument(
            "moment set degree must be at least twice the basis degree".into(),
        ));
    }
    let mu = indices.len();
    let mut g = DMatrix::zeros(mu, mu);
    for i in 0..mu {
        for j in i..mu {
            let sum = indices.index(i).add(indices.index(j));
            let pos = moment_set
                .position(&sum)
                .ok_or_else(|| Error::InvalidArgument("moment set misses a product index".into()))?;
            g[(i, j)] = moments[pos];
            g[(j, i)] = moments[pos];
        }
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// Affine coordinate scaling
// ---------------------------------------------------------------------------

/// Per-coordinate affine map u = (x - center) / half_range applied to points
/// before monomial evaluation; bounds the conditioning of the monomial Gram.
#[derive(Debug, Clone)]
pub struct AffineScaling {
    center: Vec<f64>,
    half_range: Vec<f64>,
}

impl AffineScaling {
    pub fn identity(dim: usize) -> Self {
        Self {
            center: vec![0.0; dim],
            half_range: vec![1.0; dim],
        }
    }

    /// Empirical scaling of a measure: center at the weighted mean, scale by
    /// the support half-range. Collapsed coordinates keep unit scale.
    pub fn from_measure(measure: &DiscreteMeasure) -> Self {
        let center = measure.coordinate_means();
        let half_range = measure
            .coordinate_half_ranges()
            .into_iter()
            .map(|h| if h > 1e-300 { h } else { 1.0 })
            .collect();
        Self { center, half_range }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn is_identity(&self) -> bool {
        self.center.iter().all(|&c| c == 0.0) && self.half_range.iter().all(|&s| s == 1.0)
    }

    pub fn apply_into(&self, point: &[f64], out: &mut [f64]) {
        for d in 0..self.center.len() {
            out[d] = (point[d] - self.center[d]) / self.half_range[d];
        }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_range(&self) -> &[f64] {
        &self.half_range
    }
}

// ---------------------------------------------------------------------------
// Orthonormal basis via Cholesky of the Gram matrix
// ---------------------------------------------------------------------------

/// Orthonormal polynomials for one measure, stored as an upper-triangular
/// coefficient matrix over (possibly affinely scaled) monomials. Column j of
/// `coeffs` holds the monomial coefficients of the j-th polynomial; columns
/// whose Cholesky pivot fell below the drop tolerance are pruned, which
/// handles measures concentrated on hypersurfaces.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    index_set: GradedIndexSet,
    coeffs: DMatrix<f64>,
    kept: Vec<bool>,
    kept_positions: Vec<usize>,
    // compressed kept columns: (monomial position, coefficient)
    columns: Vec<Vec<(usize, f64)>>,
    scaling: AffineScaling,
}

impl OrthonormalBasis {
    /// Orthonormalize monomials against a given Gram matrix (no rescaling).
    pub fn orthonormalize(
        gram: &DMatrix<f64>,
        indices: GradedIndexSet,
        drop_tol: f64,
    ) -> Result<Self> {
        let scaling = AffineScaling::identity(indices.dim());
        Self::orthonormalize_scaled(gram, indices, drop_tol, scaling)
    }

    /// Orthonormalize against a Gram matrix assembled in `scaling`-mapped
    /// monomials.
    pub fn orthonormalize_scaled(
        gram: &DMatrix<f64>,
        indices: GradedIndexSet,
        drop_tol: f64,
        scaling: AffineScaling,
    ) -> Result<Self> {
        let mu = indices.len();
        if gram.nrows() != mu || gram.ncols() != mu {
            return Err(Error::DimensionMismatch {
                expected: mu,
                got: gram.nrows(),
                context: "gram size vs index set",
            });
        }
        let max_diag = (0..mu).map(|i| gram[(i, i)]).fold(0.0_f64, f64::max);
        let threshold = drop_tol * max_diag;

        // Cholesky with column dropping: G = R^T R restricted to kept columns.
        let mut r = DMatrix::<f64>::zeros(mu, mu);
        let mut kept = vec![false; mu];
        let mut kept_positions: Vec<usize> = Vec::with_capacity(mu);
        for j in 0..mu {
            // off-diagonal entries of column j restricted to kept rows
            for (ki, &i) in kept_positions.iter().enumerate() {
                let mut acc = gram[(i, j)];
                for &m in &kept_positions[..ki] {
                    acc -= r[(m, i)] * r[(m, j)];
                }
                r[(i, j)] = acc / r[(i, i)];
            }
            let mut pivot = gram[(j, j)];
            for &m in &kept_positions {
                pivot -= r[(m, j)] * r[(m, j)];
            }
            if j == 0 {
                if pivot <= 0.0 {
                    return Err(Error::ZeroMassMeasure);
                }
                if pivot < threshold {
                    return Err(Error::ZeroMassMeasure);
                }
            }
            if pivot < threshold {
                for &m in &kept_positions {
                    r[(m, j)] = 0.0;
                }
                continue;
            }
            r[(j, j)] = pivot.sqrt();
            kept[j] = true;
            kept_positions.push(j);
        }

        // Invert the kept upper-triangular block: S = R^{-1} on kept columns.
        let mut coeffs = DMatrix::<f64>::zeros(mu, mu);
        for (kj, &j) in kept_positions.iter().enumerate() {
            coeffs[(j, j)] = 1.0 / r[(j, j)];
            for ki in (0..kj).rev() {
                let i = kept_positions[ki];
                let mut acc = 0.0;
                for (km, &m) in kept_positions.iter().enumerate().take(kj + 1).skip(ki + 1) {
                    let _ = km;
                    acc += r[(i, m)] * coeffs[(m, j)];
                }
                coeffs[(i, j)] = -acc / r[(i, i)];
            }
        }

        let columns = kept_positions
            .iter()
            .map(|&j| {
                kept_positions
                    .iter()
                    .filter(|&&i| i <= j)
                    .map(|&i| (i, coeffs[(i, j)]))
                    .collect()
            })
            .collect();

        Ok(Self {
            index_set: indices,
            coeffs,
            kept,
            kept_positions,
            columns,
            scaling,
        })
    }

    /// Build the basis directly from a discrete measure: rescale coordinates,
    /// estimate the Gram matrix from monomial moments, and orthonormalize.
    pub fn from_measure(
        indices: GradedIndexSet,
        measure: &DiscreteMeasure,
        drop_tol: f64,
    ) -> Result<Self> {
        if measure.dim() != indices.dim() {
            return Err(Error::DimensionMismatch {
                expected: indices.dim(),
                got: measure.dim(),
                context: "basis measure dimension",
            });
        }
        let scaling = AffineScaling::from_measure(measure);
        let moment_set = enumerate_multiindices(indices.dim(), 2 * indices.max_degree())?;
        let moments = scaled_monomial_moments(&moment_set, measure, &scaling);
        let gram = gram_from_moments(&indices, &moment_set, &moments)?;
        Self::orthonormalize_scaled(&gram, indices, drop_tol, scaling)
    }

    pub fn index_set(&self) -> &GradedIndexSet {
        &self.index_set
    }

    pub fn scaling(&self) -> &AffineScaling {
        &self.scaling
    }

    pub fn kept_flags(&self) -> &[bool] {
        &self.kept
    }

    pub fn n_kept(&self) -> usize {
        self.kept_positions.len()
    }

    /// Multi-indices of the kept polynomials, in basis order.
    pub fn kept_indices(&self) -> Vec<&MultiIndex> {
        self.kept_positions
            .iter()
            .map(|&j| self.index_set.index(j))
            .collect()
    }

    pub fn kept_positions(&self) -> &[usize] {
        &self.kept_positions
    }

    /// Upper-triangular coefficient matrix over scaled monomials (full size,
    /// zero columns for pruned polynomials).
    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn eval_with_scratch(
        &self,
        point: &[f64],
        scaled: &mut [f64],
        powers: &mut [f64],
        mono: &mut [f64],
        out: &mut [f64],
    ) {
        self.scaling.apply_into(point, scaled);
        self.index_set.eval_monomials_into(scaled, powers, mono);
        for (k, col) in self.columns.iter().enumerate() {
            let mut acc = 0.0;
            for &(i, s) in col {
                acc += s * mono[i];
            }
            out[k] = acc;
        }
    }

    /// Coefficients of the kept polynomials over raw (unscaled) monomials of
    /// the same index set, as a dense matrix with one column per kept
    /// polynomial.
    pub fn monomial_coefficients(&self) -> DMatrix<f64> {
        let dim = self.index_set.dim();
        let q = self.index_set.max_degree() as usize;
        // per-dimension expansion of ((x-c)/s)^k into powers of x
        let mut tables = vec![vec![vec![0.0; q + 1]; q + 1]; dim];
        for d in 0..dim {
            let c = self.scaling.center[d];
            let s = self.scaling.half_range[d];
            for k in 0..=q {
                let sk = s.powi(k as i32);
                for t in 0..=k {
                    tables[d][k][t] = binomial(k, t) * (-c).powi((k - t) as i32) / sk;
                }
            }
        }
        let mu = self.index_set.len();
        let mut out = DMatrix::<f64>::zeros(mu, self.n_kept());
        for (col_k, col) in self.columns.iter().enumerate() {
            for &(i, s) in col {
                // expand the scaled monomial u^{beta_i} into raw monomials
                let beta = self.index_set.index(i).entries().to_vec();
                let mut acc: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), s)];
                for (d, &e) in beta.iter().enumerate() {
                    let mut next = Vec::with_capacity(acc.len() * (e as usize + 1));
                    for (prefix, w) in &acc {
                        for t in 0..=e as usize {
                            let mut p = prefix.clone();
                            p.push(t as u32);
                            next.push((p, w * tables[d][e as usize][t]));
                        }
                    }
                    acc = next;
                }
                for (raw, w) in acc {
                    let pos = self
                        .index_set
                        .position(&MultiIndex::new(raw))
                        .expect("expansion stays within the index set");
                    out[(pos, col_k)] += w;
                }
            }
        }
        out
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

impl PolyFamily for OrthonormalBasis {
    fn dim(&self) -> usize {
        self.index_set.dim()
    }

    fn len(&self) -> usize {
        self.n_kept()
    }

    fn eval_into(&self, point: &[f64], out: &mut [f64]) {
        let mut scaled = vec![0.0; self.index_set.dim()];
        let mut powers = self.index_set.power_scratch();
        let mut mono = vec![0.0; self.index_set.len()];
        self.eval_with_scratch(point, &mut scaled, &mut powers, &mut mono, out);
    }
}

// ---------------------------------------------------------------------------
// Basis handle shared by PC expansions
// ---------------------------------------------------------------------------

/// The basis a PC expansion is written in: either the classical normalized
/// Legendre family (independent uniform inputs) or a measure-fitted
/// orthonormal basis.
#[derive(Debug, Clone)]
pub enum Basis {
    Legendre(LegendreBasis),
    Orthonormalized(OrthonormalBasis),
}

impl Basis {
    pub fn legendre(dim: usize, max_degree: u32) -> Result<Self> {
        Ok(Basis::Legendre(LegendreBasis::new(dim, max_degree)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Basis::Legendre(b) => b.dim(),
            Basis::Orthonormalized(b) => PolyFamily::dim(b),
        }
    }

    /// Number of (kept) basis polynomials.
    pub fn len(&self) -> usize {
        match self {
            Basis::Legendre(b) => PolyFamily::len(b),
            Basis::Orthonormalized(b) => b.n_kept(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_degree(&self) -> u32 {
        match self {
            Basis::Legendre(b) => b.index_set().max_degree(),
            Basis::Orthonormalized(b) => b.index_set().max_degree(),
        }
    }

    /// Multi-indices of the basis polynomials, in evaluation order.
    pub fn indices(&self) -> Vec<&MultiIndex> {
        match self {
            Basis::Legendre(b) => b.index_set().indices().iter().collect(),
            Basis::Orthonormalized(b) => b.kept_indices(),
        }
    }

    pub fn position(&self, index: &MultiIndex) -> Option<usize> {
        match self {
            Basis::Legendre(b) => b.index_set().position(index),
            Basis::Orthonormalized(b) => {
                let raw = b.index_set().position(index)?;
                if !b.kept_flags()[raw] {
                    return None;
                }
                b.kept_positions().iter().position(|&p| p == raw)
            }
        }
    }

    pub fn eval_into(&self, point: &[f64], out: &mut [f64]) {
        match self {
            Basis::Legendre(b) => b.eval_into(point, out),
            Basis::Orthonormalized(b) => b.eval_into(point, out),
        }
    }

    pub fn eval(&self, point: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(point, &mut out);
        out
    }
}

impl PolyFamily for Basis {
    fn dim(&self) -> usize {
        Basis::dim(self)
    }

    fn len(&self) -> usize {
        Basis::len(self)
    }

    fn eval_into(&self, point: &[f64], out: &mut [f64]) {
        Basis::eval_into(self, point, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Analytic Gram of 1D monomials under the uniform probability measure on
    /// [-1, 1]: E[x^n] = 1/(n+1) for even n, 0 otherwise.
    fn uniform_gram_1d(q: u32) -> DMatrix<f64> {
        let mu = q as usize + 1;
        DMatrix::from_fn(mu, mu, |i, j| {
            let n = i + j;
            if n % 2 == 0 {
                1.0 / (n + 1) as f64
            } else {
                0.0
            }
        })
    }

    #[test]
    fn gram_matches_analytic_uniform_moments() {
        // exact discrete stand-in: Gauss-Legendre rule of high order
        let rule = crate::quad::gauss_legendre_1d(8).unwrap();
        let measure = rule.as_measure();
        let set = enumerate_multiindices(1, 2).unwrap();
        let g = gram_matrix(&set, &measure).unwrap();
        let expected = uniform_gram_1d(2);
        assert_relative_eq!(g, expected, epsilon = 1e-13);
    }

    #[test]
    fn gram_of_point_mass_at_origin() {
        let measure = DiscreteMeasure::from_rows(&[vec![0.0, 0.0]], vec![1.0]).unwrap();
        let set = enumerate_multiindices(2, 2).unwrap();
        let g = gram_matrix(&set, &measure).unwrap();
        assert_eq!(g[(0, 0)], 1.0);
        assert_eq!(g.sum(), 1.0);
    }

    #[test]
    fn identity_gram_gives_identity_coeffs() {
        let set = enumerate_multiindices(2, 1).unwrap();
        let g = DMatrix::identity(3, 3);
        let basis = OrthonormalBasis::orthonormalize(&g, set, DEFAULT_DROP_TOL).unwrap();
        assert_eq!(basis.n_kept(), 3);
        assert_relative_eq!(*basis.coeffs(), DMatrix::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn uniform_basis_is_normalized_legendre() {
        let set = enumerate_multiindices(1, 3).unwrap();
        let g = uniform_gram_1d(3);
        let basis = OrthonormalBasis::orthonormalize(&g, set, DEFAULT_DROP_TOL).unwrap();
        // Gamma_1 = sqrt(3) x, Gamma_2 = sqrt(5/4) (3x^2 - 1)
        let c = basis.monomial_coefficients();
        assert_relative_eq!(c[(1, 1)], 3.0_f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(c[(0, 2)], -(5.0_f64 / 4.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(c[(2, 2)], 3.0 * (5.0_f64 / 4.0).sqrt(), epsilon = 1e-12);
        // value check at x = 1: every normalized Legendre equals sqrt(2n+1)
        let vals = basis.eval(&[1.0]);
        for (n, v) in vals.iter().enumerate() {
            assert_relative_eq!(*v, ((2 * n + 1) as f64).sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_measure_prunes_dependent_monomial() {
        // measure concentrated on the line chi_2 = chi_1
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|k| {
                let x = -1.0 + 2.0 * k as f64 / 199.0;
                vec![x, x]
            })
            .collect();
        let weights = vec![1.0 / 200.0; 200];
        let measure = DiscreteMeasure::from_rows(&rows, weights).unwrap();
        let set = enumerate_multiindices(2, 1).unwrap();
        let basis = OrthonormalBasis::from_measure(set, &measure, DEFAULT_DROP_TOL).unwrap();
        // brute force: monomial Gram on the line has rank 2 (1, x) for degree 1
        assert_eq!(basis.n_kept(), 2);
        let pruned: Vec<_> = basis
            .kept_flags()
            .iter()
            .enumerate()
            .filter(|(_, &k)| !k)
            .map(|(i, _)| basis.index_set().index(i).entries().to_vec())
            .collect();
        assert_eq!(pruned, vec![vec![0, 1]]);
    }

    #[test]
    fn zero_mass_is_an_error() {
        let set = enumerate_multiindices(1, 1).unwrap();
        let g = DMatrix::zeros(2, 2);
        match OrthonormalBasis::orthonormalize(&g, set, DEFAULT_DROP_TOL) {
            Err(Error::ZeroMassMeasure) => {}
            other => panic!("expected zero-mass error, got {other:?}"),
        }
    }

    #[test]
    fn evaluated_gram_is_identity_under_own_measure() {
        // skewed 2D measure
        let mut rows = Vec::new();
        for i in 0..40 {
            for j in 0..40 {
                let x = -1.0 + 2.0 * i as f64 / 39.0;
                let y = 0.3 * x + 0.5 * (-1.0 + 2.0 * j as f64 / 39.0).powi(3);
                rows.push(vec![x, y]);
            }
        }
        let w = vec![1.0 / 1600.0; 1600];
        let measure = DiscreteMeasure::from_rows(&rows, w).unwrap();
        let set = enumerate_multiindices(2, 3).unwrap();
        let basis = OrthonormalBasis::from_measure(set, &measure, DEFAULT_DROP_TOL).unwrap();
        let n = basis.n_kept();
        let mut gram = DMatrix::<f64>::zeros(n, n);
        for k in 0..measure.len() {
            let vals = PolyFamily::eval(&basis, measure.node(k));
            for i in 0..n {
                for j in 0..n {
                    gram[(i, j)] += measure.weight(k) * vals[i] * vals[j];
                }
            }
        }
        assert_relative_eq!(gram, DMatrix::identity(n, n), epsilon = 1e-10);
    }

    #[test]
    fn legendre_tensor_orthonormal_on_grid() {
        let basis = LegendreBasis::new(2, 2).unwrap();
        let rule = crate::quad::tensor_rule(&[
            crate::quad::gauss_legendre_1d(4).unwrap(),
            crate::quad::gauss_legendre_1d(4).unwrap(),
        ])
        .unwrap();
        let n = PolyFamily::len(&basis);
        let mut gram = DMatrix::<f64>::zeros(n, n);
        for k in 0..rule.len() {
            let vals = PolyFamily::eval(&basis, rule.node(k));
            for i in 0..n {
                for j in 0..n {
                    gram[(i, j)] += rule.weight(k) * vals[i] * vals[j];
                }
            }
        }
        assert_relative_eq!(gram, DMatrix::identity(n, n), epsilon = 1e-12);
    }
}
