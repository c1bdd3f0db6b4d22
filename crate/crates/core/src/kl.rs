//! Weighted Karhunen-Loeve decomposition of a PC-represented random vector.
//!
//! The generalized eigenproblem W C W phi = lambda W phi is reduced to a
//! symmetric one through the Cholesky factor of W; modes come back
//! W-orthonormal and the reduced random variables are themselves PC
//! expansions in the source basis.

use crate::error::{Error, Result};
use crate::pce::PCExpansion;
use nalgebra::{Cholesky, DMatrix, DVector};

/// Relative eigenvalue threshold below which a mode is treated as carrying no
/// variance.
pub const RANK_TOL: f64 = 1e-12;

/// Symmetric positive definite weighting matrix (for FE fields, the Gram
/// matrix of the discretization basis).
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    matrix: DMatrix<f64>,
    l: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotPositiveDefinite("weight matrix is not square"));
        }
        let sym_err = (&matrix - matrix.transpose()).abs().max();
        if sym_err > 1e-10 * matrix.abs().max().max(1.0) {
            return Err(Error::NotPositiveDefinite("weight matrix is not symmetric"));
        }
        let chol = Cholesky::new(matrix.clone())
            .ok_or(Error::NotPositiveDefinite("Cholesky factorization failed"))?;
        let l = chol.l();
        Ok(Self { matrix, l })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower Cholesky factor L with W = L L^T.
    pub fn chol_l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Quadratic form v^T W v.
    pub fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        (self.matrix.clone() * v).dot(v)
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }
}

/// Full spectrum of the weighted covariance operator of a PC expansion,
/// before truncation.
#[derive(Debug, Clone)]
pub struct KLSpectrum {
    mean: DVector<f64>,
    eigenvalues: Vec<f64>,
    modes: DMatrix<f64>, // columns, W-orthonormal
    rank: usize,
    fluctuation_energy: f64,
}

impl KLSpectrum {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    /// Number of eigenvalues above the relative rank tolerance.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Total fluctuation energy sum_{|alpha|>=1} q_alpha^T W q_alpha, equal to
    /// the eigenvalue sum up to round-off.
    pub fn fluctuation_energy(&self) -> f64 {
        self.fluctuation_energy
    }
}

/// Truncated decomposition together with the PC expansion of the reduced
/// random variables eta_j.
#[derive(Debug, Clone)]
pub struct KLDecomposition {
    spectrum: KLSpectrum,
    reduced_pce: PCExpansion, // width = retained
    retained: usize,
}

impl KLDecomposition {
    pub fn mean(&self) -> &DVector<f64> {
        self.spectrum.mean()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.spectrum.eigenvalues()
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        self.spectrum.modes()
    }

    pub fn retained(&self) -> usize {
        self.retained
    }

    pub fn rank(&self) -> usize {
        self.spectrum.rank()
    }

    pub fn spectrum(&self) -> &KLSpectrum {
        &self.spectrum
    }

    /// PC expansion of (eta_1, ..., eta_d) over the source basis.
    pub fn reduced_pce(&self) -> &PCExpansion {
        &self.reduced_pce
    }

    /// Mean-square truncation error sum_{j > d} lambda_j.
    pub fn truncation_energy(&self) -> f64 {
        self.spectrum.eigenvalues[self.retained..]
            .iter()
            .rev()
            .sum()
    }
}

/// Spectrum of the generalized eigenproblem for the covariance of `pce` in the
/// W-weighted metric.
pub fn weighted_kl_spectrum(pce: &PCExpansion, weight: &WeightMatrix) -> Result<KLSpectrum> {
    let w_dim = weight.dim();
    if pce.width() != w_dim {
        return Err(Error::DimensionMismatch {
            expected: w_dim,
            got: pce.width(),
            context: "PC width vs weight matrix",
        });
    }
    let (mean, cov) = pce.mean_cov();
    let l = weight.chol_l();
    // symmetric reduction: B = L^T C L, eigenvectors psi, modes phi = L^{-T} psi
    let b = l.tr_mul(&cov) * l;
    let b = (&b + b.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(b);

    let mut order: Vec<usize> = (0..w_dim).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
            .then(i.cmp(&j))
    });

    let mut eigenvalues = Vec::with_capacity(w_dim);
    let mut psi = DMatrix::zeros(w_dim, w_dim);
    for (col, &src) in order.iter().enumerate() {
        eigenvalues.push(eig.eigenvalues[src].max(0.0));
        psi.set_column(col, &eig.eigenvectors.column(src));
    }
    // modes: solve L^T phi = psi
    let modes = weight
        .chol_l()
        .transpose()
        .solve_upper_triangular(&psi)
        .ok_or(Error::Numerical("triangular solve for KL modes failed".into()))?;
    let mut modes = modes;
    // sign convention: largest-magnitude component of each mode is positive
    for mut col in modes.column_iter_mut() {
        let mut best = 0;
        let mut best_abs = 0.0;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col *= -1.0;
        }
    }

    let lambda_max = eigenvalues.first().copied().unwrap_or(0.0);
    let rank = eigenvalues
        .iter()
        .take_while(|&&l| l > RANK_TOL * lambda_max && l > 0.0)
        .count();

    // fluctuation energy from the coefficients directly
    let n = pce.n_terms();
    let tail = pce.coeffs().rows(1, n - 1);
    let fluctuation_energy = (0..n - 1)
        .map(|k| {
            let row = tail.row(k).transpose();
            weight.norm_sq(&row)
        })
        .sum();

    Ok(KLSpectrum {
        mean,
        eigenvalues,
        modes,
        rank,
        fluctuation_energy,
    })
}

/// Truncate a spectrum after `d` modes and build the PC expansion of the
/// reduced random variables: eta_{j,alpha} = lambda_j^{-1/2} q_alpha^T W phi_j
/// for |alpha| >= 1. Modes below the rank tolerance or below the absolute
/// `lambda_floor` carry zero coefficients and are thereby excluded from the
/// reduction.
pub fn reduce_spectrum(
    spectrum: KLSpectrum,
    pce: &PCExpansion,
    weight: &WeightMatrix,
    d: usize,
    lambda_floor: f64,
) -> Result<KLDecomposition> {
    let w_dim = weight.dim();
    if d == 0 || d > w_dim {
        return Err(Error::InvalidArgument(format!(
            "reduced dimension {d} outside 1..={w_dim}"
        )));
    }
    let lambda_max = spectrum.eigenvalues.first().copied().unwrap_or(0.0);
    let n = pce.n_terms();
    let mut eta = DMatrix::zeros(n, d);
    for j in 0..d {
        let lambda = spectrum.eigenvalues[j];
        if lambda <= RANK_TOL * lambda_max || lambda <= lambda_floor || lambda <= 0.0 {
            continue; // vanishing variance: eta_j is identically zero
        }
        let w_phi = weight.apply(&spectrum.modes.column(j).into_owned());
        let inv_sqrt = 1.0 / lambda.sqrt();
        for k in 1..n {
            eta[(k, j)] = inv_sqrt * pce.coeffs().row(k).transpose().dot(&w_phi);
        }
    }
    let reduced_pce = PCExpansion::new(pce.basis().clone(), eta)?;
    Ok(KLDecomposition {
        spectrum,
        reduced_pce,
        retained: d,
    })
}

/// Weighted KL decomposition of `pce` truncated after `d` modes.
pub fn weighted_kl(pce: &PCExpansion, weight: &WeightMatrix, d: usize) -> Result<KLDecomposition> {
    let spectrum = weighted_kl_spectrum(pce, weight)?;
    reduce_spectrum(spectrum, pce, weight, d, 0.0)
}

/// Smallest d >= 1 with sqrt(sum_{j>d} lambda_j) <= eps1 * sqrt(energy);
/// returns the full dimension when no smaller d qualifies.
pub fn choose_reduced_dim(eigenvalues: &[f64], fluctuation_energy: f64, eps1: f64) -> usize {
    let w = eigenvalues.len();
    if w == 0 {
        return 0;
    }
    // suffix sums accumulated from the smallest eigenvalues for stability
    let mut tails = vec![0.0; w + 1];
    for j in (0..w).rev() {
        tails[j] = tails[j + 1] + eigenvalues[j].max(0.0);
    }
    let budget = eps1 * fluctuation_energy.max(0.0).sqrt();
    for d in 1..=w {
        if tails[d].sqrt() <= budget {
            return d;
        }
    }
    w
}

/// Realization of the truncated decomposition at reduced coordinates `eta`:
/// mean + sum_j sqrt(lambda_j) eta_j phi_j.
pub fn kl_reconstruct(kl: &KLDecomposition, eta: &[f64]) -> Result<DVector<f64>> {
    if eta.len() != kl.retained {
        return Err(Error::DimensionMismatch {
            expected: kl.retained,
            got: eta.len(),
            context: "reduced coordinates",
        });
    }
    let mut out = kl.mean().clone();
    for j in 0..kl.retained {
        let scale = kl.eigenvalues()[j].max(0.0).sqrt() * eta[j];
        out.axpy(scale, &kl.modes().column(j).into_owned(), 1.0);
    }
    Ok(out)
}
