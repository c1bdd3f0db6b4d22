//! Embedded quadrature rules by L1 minimization over a candidate rule.
//!
//! The weights of a large candidate rule are re-optimized to minimize the sum
//! of absolute values subject to exact integration of a polynomial basis; the
//! simplex solver returns a basic optimum, so the surviving nodes form a small
//! subset of the candidate nodes. A null-space purification pass is always run
//! afterwards so that a dense optimizer could be substituted without changing
//! the result.

use crate::basis::{OrthonormalBasis, PolyFamily, DEFAULT_DROP_TOL};
use crate::error::{Error, Result};
use crate::indices::enumerate_multiindices;
use crate::measure::DiscreteMeasure;
use crate::quad::{exactness_residual, moment_vector, QuadratureRule};
use crate::simplex::{self, LpProblem};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Absolute feasibility tolerance on ||A varpi - b||_inf.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Relative duality-gap tolerance.
pub const DUALITY_TOL: f64 = 1e-8;
/// Residual bound an accepted embedded rule must satisfy on its constraints.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Relative singular-value threshold for the support rank check.
pub const NULLSPACE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct L1Problem {
    pub a: DMatrix<f64>, // mu x n_candidates, basis rows at candidate nodes
    pub b: DVector<f64>, // reference moments, aligned row for row
    pub candidate: QuadratureRule,
}

#[derive(Debug, Clone)]
pub struct PrimalDualSolution {
    pub varpi: DVector<f64>,
    /// Slack magnitudes |varpi|.
    pub t: DVector<f64>,
    /// Equality multipliers; lambda^T b equals e^T t at optimality.
    pub lambda: DVector<f64>,
    /// Inequality multipliers, in [0, 1] componentwise.
    pub mu: DVector<f64>,
    pub objective: f64,
    pub duality_gap: f64,
    pub lp_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct EmbeddedSummary {
    pub level: u32,
    pub n_candidates: usize,
    pub nu: usize,
    pub sum_abs_weights: f64,
    pub duality_gap: f64,
    pub residual: f64,
    pub lp_iterations: usize,
}

/// Assemble the L1 problem: one constraint row per basis polynomial, one
/// column per candidate node.
pub fn build_l1_problem(
    candidate: &QuadratureRule,
    basis: &OrthonormalBasis,
    reference_moments: &DVector<f64>,
) -> Result<L1Problem> {
    if candidate.dim() != PolyFamily::dim(basis) {
        return Err(Error::DimensionMismatch {
            expected: PolyFamily::dim(basis),
            got: candidate.dim(),
            context: "candidate rule dimension vs constraint basis",
        });
    }
    let mu = basis.len();
    if reference_moments.len() != mu {
        return Err(Error::DimensionMismatch {
            expected: mu,
            got: reference_moments.len(),
            context: "moment vector vs constraint basis",
        });
    }
    let n = candidate.len();
    let mut flat = vec![0.0; mu * n];
    flat.par_chunks_mut(mu).enumerate().for_each(|(k, col)| {
        basis.eval_into(candidate.node(k), col);
    });
    let a = DMatrix::from_vec(mu, n, flat);
    Ok(L1Problem {
        a,
        b: reference_moments.clone(),
        candidate: candidate.clone(),
    })
}

/// Basic feasible point of the split system from a column-pivoted QR of A:
/// the pivot columns give an independent support, and a weight of the wrong
/// sign simply selects the mirrored column. Lets the simplex skip its
/// artificial phase, which is badly degenerate for these problems.
fn crash_basis(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<Vec<usize>> {
    let m = a.nrows();
    let n = a.ncols();
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let r00 = r[(0, 0)].abs();
    for i in 0..m.min(n) {
        if r[(i, i)].abs() <= 1e-12 * r00 {
            return None; // rank deficient: let phase 1 report infeasibility
        }
    }
    if n < m {
        return None;
    }
    let mut order = DMatrix::<f64>::zeros(1, n);
    for c in 0..n {
        order[(0, c)] = c as f64;
    }
    qr.p().permute_columns(&mut order);
    let picked: Vec<usize> = (0..m).map(|c| order[(0, c)] as usize).collect();

    let mut bm = DMatrix::zeros(m, m);
    for (c, &j) in picked.iter().enumerate() {
        bm.set_column(c, &a.column(j));
    }
    let z = bm.lu().solve(b)?;
    Some(
        picked
            .iter()
            .zip(z.iter())
            .map(|(&j, &v)| if v >= 0.0 { j } else { n + j })
            .collect(),
    )
}

/// Solve min ||varpi||_1 subject to A varpi = b through the split linear
/// program and verify the Karush-Kuhn-Tucker certificates.
pub fn solve_l1(problem: &L1Problem) -> Result<PrimalDualSolution> {
    let m = problem.a.nrows();
    let n = problem.a.ncols();
    let mut split = DMatrix::zeros(m, 2 * n);
    split.view_mut((0, 0), (m, n)).copy_from(&problem.a);
    split.view_mut((0, n), (m, n)).copy_from(&(-&problem.a));
    // The optimal face of the plain L1 objective is huge (every nonnegative
    // exact rule is optimal), which stalls the simplex in degenerate pivots.
    // A deterministic graded perturbation of the unit costs makes the chosen
    // vertex essentially unique; duality and feasibility are verified against
    // the unperturbed objective below.
    let costs = DVector::from_fn(2 * n, |j, _| 1.0 + 1e-10 * (j as f64 + 1.0) / (2 * n) as f64);
    let start = crash_basis(&problem.a, &problem.b);
    let lp = LpProblem {
        a: split,
        b: problem.b.clone(),
        costs,
        lower: DVector::zeros(2 * n),
        upper: DVector::from_element(2 * n, f64::INFINITY),
    };
    let sol = simplex::solve_from(&lp, FEASIBILITY_TOL, start.as_deref()).map_err(|e| match e {
        Error::Infeasible(msg) => Error::Infeasible(format!(
            "candidate rule cannot reproduce the moments ({msg}); raise the candidate level"
        )),
        other => other,
    })?;

    let mut varpi = DVector::zeros(n);
    for k in 0..n {
        varpi[k] = sol.x[k] - sol.x[n + k];
    }
    let t = varpi.abs();
    let lambda = sol.y.clone();
    let e_t: f64 = t.sum();
    let mu_mult = (problem.a.tr_mul(&lambda) + DVector::from_element(n, 1.0)) * 0.5;

    let feas = (&problem.a * &varpi - &problem.b).abs().max();
    if feas > FEASIBILITY_TOL {
        return Err(Error::Numerical(format!(
            "L1 solve violates the constraints: residual {feas:.3e}"
        )));
    }
    let gap = (lambda.dot(&problem.b) - e_t).abs();
    if gap > DUALITY_TOL * (1.0 + e_t.abs()) {
        return Err(Error::Numerical(format!(
            "duality gap {gap:.3e} exceeds tolerance at objective {e_t:.6e}"
        )));
    }

    Ok(PrimalDualSolution {
        varpi,
        t,
        lambda,
        mu: mu_mult,
        objective: e_t,
        duality_gap: gap,
        lp_iterations: sol.iterations,
    })
}

/// Null vector of the columns of `a` selected by `support`, mapped back to
/// full coordinates. Uses a column-pivoted QR; the rank test compares
/// singular values against `NULLSPACE_TOL` times the largest one.
fn support_null_vector(a: &DMatrix<f64>, support: &[usize]) -> Result<Vec<f64>> {
    let m = a.nrows();
    let s = support.len();
    let mut sub = DMatrix::zeros(m, s);
    for (c, &j) in support.iter().enumerate() {
        sub.set_column(c, &a.column(j));
    }

    let svd = sub.clone().svd(false, false);
    let sigma_max = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&v| v > NULLSPACE_TOL * sigma_max)
        .count();
    if rank >= s {
        return Err(Error::Numerical(
            "support submatrix has full column rank; no null direction exists".into(),
        ));
    }

    let qr = sub.col_piv_qr();
    let r = qr.r();
    let perm = qr.p();
    // recover the column order produced by the pivoting
    let mut order = DMatrix::<f64>::zeros(1, s);
    for c in 0..s {
        order[(0, c)] = c as f64;
    }
    perm.permute_columns(&mut order);
    let order: Vec<usize> = (0..s).map(|c| order[(0, c)] as usize).collect();

    // express pivoted column `rank` in the first `rank` pivoted columns
    let r1 = r.view((0, 0), (rank, rank));
    let rhs = r.view((0, rank), (rank, 1)).into_owned();
    let w = r1
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Numerical("triangular solve failed in null-space search".into()))?;

    let mut z = vec![0.0; a.ncols()];
    for (c, &val) in w.iter().enumerate() {
        z[support[order[c]]] = val;
    }
    z[support[order[rank]]] = -1.0;
    // normalize for a scale-free ratio test
    let norm = z.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    for v in &mut z {
        *v /= norm;
    }
    Ok(z)
}

/// Reduce the support of an optimal solution without changing the objective
/// or the constraint values: step along null-space directions of the support
/// columns until at most `a.nrows()` components remain. Already-basic
/// solutions pass through unchanged.
pub fn extract_sparse(varpi: &DVector<f64>, a: &DMatrix<f64>) -> Result<DVector<f64>> {
    let m = a.nrows();
    let mut v = varpi.clone();
    let objective0 = v.abs().sum();
    let constraints0 = a * &v;

    loop {
        let support: Vec<usize> = (0..v.len()).filter(|&k| v[k] != 0.0).collect();
        if support.len() <= m {
            break;
        }
        let mut z = support_null_vector(a, &support)?;

        // pick the step direction with at least one sign-opposing component
        let has_opposing = |z: &[f64]| {
            support
                .iter()
                .any(|&k| z[k] != 0.0 && z[k].signum() != v[k].signum())
        };
        if !has_opposing(&z) {
            for val in &mut z {
                *val = -*val;
            }
        }
        if !has_opposing(&z) {
            return Err(Error::Numerical(
                "null direction cannot reduce the support".into(),
            ));
        }

        // alpha = min |v_k / z_k| over sign-opposing components; first
        // minimizer wins
        let mut alpha = f64::INFINITY;
        let mut hit = usize::MAX;
        for &k in &support {
            if z[k] != 0.0 && z[k].signum() != v[k].signum() {
                let ratio = (v[k] / z[k]).abs();
                if ratio < alpha {
                    alpha = ratio;
                    hit = k;
                }
            }
        }

        let scale = v.abs().max();
        for &k in &support {
            let updated = v[k] + alpha * z[k];
            // no component may cross zero
            if updated != 0.0 && updated.signum() != v[k].signum() && updated.abs() > 1e-12 * scale
            {
                return Err(Error::Numerical(
                    "support reduction flipped the sign of a weight".into(),
                ));
            }
            v[k] = updated;
        }
        v[hit] = 0.0;
        for &k in &support {
            if v[k].abs() <= 1e-14 * scale {
                v[k] = 0.0;
            }
        }

        let objective = v.abs().sum();
        if (objective - objective0).abs() > 1e-9 * (1.0 + objective0) {
            return Err(Error::Numerical(format!(
                "support reduction drifted the objective: {objective0:.9e} -> {objective:.9e}"
            )));
        }
    }

    let drift = (a * &v - &constraints0).abs().max();
    if drift > FEASIBILITY_TOL {
        return Err(Error::Numerical(format!(
            "support reduction drifted the constraints by {drift:.3e}"
        )));
    }
    Ok(v)
}

/// Run the full pipeline against a prepared constraint basis and moment
/// vector: solve, purify, and synthesize the embedded rule.
pub fn embedded_rule_with_basis(
    candidate: &QuadratureRule,
    level: u32,
    basis: &OrthonormalBasis,
    reference_moments: &DVector<f64>,
    measure_tag: &str,
) -> Result<(QuadratureRule, EmbeddedSummary)> {
    let problem = build_l1_problem(candidate, basis, reference_moments)?;
    let solution = solve_l1(&problem)?;
    let sparse = extract_sparse(&solution.varpi, &problem.a)?;

    // weights at round-off level carry no information; the residual check
    // below still guards the constraints after dropping them
    let snap = 1e-12 * sparse.abs().max();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for k in 0..sparse.len() {
        if sparse[k].abs() > snap {
            nodes.extend_from_slice(candidate.node(k));
            weights.push(sparse[k]);
        }
    }
    let rule = QuadratureRule::new(
        candidate.dim(),
        nodes,
        weights,
        measure_tag,
        Some(2 * level - 1),
    )?;

    let residual = exactness_residual(&rule, reference_moments, basis);
    if residual > RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "embedded rule misses its constraints: residual {residual:.3e}"
        )));
    }
    let nu = rule.len();
    debug_assert!(nu <= basis.len());
    let summary = EmbeddedSummary {
        level,
        n_candidates: candidate.len(),
        nu,
        sum_abs_weights: rule.sum_abs_weights(),
        duality_gap: solution.duality_gap,
        residual,
        lp_iterations: solution.lp_iterations,
    };
    Ok((rule, summary))
}

/// Embedded rule of the requested level for a discrete target measure: the
/// constraint rows are the measure's own orthonormalized polynomials, which
/// keeps the linear program well conditioned, and the moment vector is
/// evaluated against the same measure.
pub fn embedded_rule(
    candidate: &QuadratureRule,
    level: u32,
    target_measure: &DiscreteMeasure,
    measure_tag: &str,
) -> Result<(QuadratureRule, EmbeddedSummary)> {
    if level == 0 {
        return Err(Error::InvalidArgument("quadrature level must be >= 1".into()));
    }
    let indices = enumerate_multiindices(target_measure.dim(), 2 * level - 1)?;
    let basis = OrthonormalBasis::from_measure(indices, target_measure, DEFAULT_DROP_TOL)?;
    let moments = moment_vector(&basis, target_measure);
    embedded_rule_with_basis(candidate, level, &basis, &moments, measure_tag)
}
