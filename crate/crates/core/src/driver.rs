//! The two solution paths for the coupled reactor problem and their
//! comparison: a sample-wise Monte Carlo reference and the PC-based
//! Gauss-Seidel iteration with dimension reduction and measure
//! transformation.
//!
//! Per outer iteration the PC path (i) solves the heat subproblem at the
//! input sparse-grid nodes with the previous flux evaluated through the
//! composed expansion, (ii) projects the temperature onto the input
//! Legendre basis, (iii) reduces it by a weighted KL decomposition, and
//! (iv) solves the neutronics subproblem in the reduced variables on an
//! embedded quadrature rule, growing the flux degree until the newest
//! degree shell is negligible.

use crate::basis::{family_matrix, Basis, LegendreBasis, OrthonormalBasis, DEFAULT_DROP_TOL};
use crate::embedded::{embedded_rule_with_basis, EmbeddedSummary};
use crate::error::{Error, Result};
use crate::indices::enumerate_multiindices;
use crate::kl::{
    choose_reduced_dim, kl_reconstruct, reduce_spectrum, weighted_kl_spectrum, KLDecomposition,
    WeightMatrix,
};
use crate::measure::DiscreteMeasure;
use crate::parallel;
use crate::pce::{project, project_with_matrix, PCExpansion};
use crate::quad::{moment_vector, smolyak_sparse_grid, QuadratureRule};
use crate::reactor::FEOperators;
use crate::rng;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Total degree of the temperature expansion over the input variables.
    pub degree_p: u32,
    /// KL truncation tolerance.
    pub eps1: f64,
    /// Flux degree-shell tolerance.
    pub eps2: f64,
    /// Outer Gauss-Seidel iteration cap.
    pub max_iter: usize,
    /// Monte Carlo sample count for Gram/moment estimation of the reduced
    /// measure (fixed seed substream, shared across iterations).
    pub mc_moments: usize,
    /// Level of the sparse-grid candidate rule fed to the embedded-rule
    /// construction.
    pub candidate_level: u32,
    /// Sample count of the Monte Carlo reference ensemble.
    pub mc_reference: usize,
    /// Sample count of the metric set used for all mean-square distances.
    pub mc_metric: usize,
    pub seed: u64,
    /// Cap on the adaptive flux degree.
    pub q_cap: u32,
    /// Early stop when both successive distances fall below this.
    pub stagnation_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            degree_p: 4,
            eps1: 0.05,
            eps2: 1e-6,
            max_iter: 20,
            mc_moments: 100_000,
            candidate_level: 5,
            mc_reference: 2000,
            mc_metric: 2000,
            seed: 1004,
            q_cap: 8,
            stagnation_tol: 1e-10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degree_p == 0 {
            return Err(Error::Config("degree_p must be at least 1".into()));
        }
        if self.eps1 <= 0.0 || self.eps2 <= 0.0 {
            return Err(Error::Config("eps1 and eps2 must be positive".into()));
        }
        if self.candidate_level < 2 {
            return Err(Error::Config("candidate_level must be at least 2".into()));
        }
        if self.max_iter == 0 || self.mc_moments == 0 {
            return Err(Error::Config("max_iter and mc_moments must be positive".into()));
        }
        Ok(())
    }
}

/// Solver diagnostics for one outer iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub ell: usize,
    /// Reduced dimension chosen by the KL criterion.
    pub d: usize,
    /// Accepted flux total degree.
    pub q: u32,
    /// Node count of the embedded rule.
    pub nu: usize,
    /// Sum of absolute embedded weights.
    pub sum_abs_w: f64,
    /// Relative W-norm distance between successive temperature iterates.
    pub succ_t: f64,
    /// Same for the composed flux.
    pub succ_phi: f64,
    /// Distances to the Monte Carlo reference, filled by
    /// `compare_to_reference`.
    pub vs_mc_t: Option<f64>,
    pub vs_mc_phi: Option<f64>,
}

/// Everything the outer iteration produced that later stages consume.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub t_pce: PCExpansion,
    pub kl: KLDecomposition,
    pub flux_basis: Arc<Basis>,
    pub flux_pce: PCExpansion,
    pub rule: QuadratureRule,
    pub summary: EmbeddedSummary,
}

#[derive(Debug, Clone)]
pub struct PcSolution {
    pub states: Vec<IterationState>,
    pub records: Vec<IterationRecord>,
    pub input_basis: Arc<Basis>,
    /// Reduced-variable samples of the final iteration (flat, d per row),
    /// drawn from the moments substream.
    pub final_eta_samples: Vec<f64>,
}

impl PcSolution {
    pub fn final_state(&self) -> &IterationState {
        self.states.last().expect("at least one iteration ran")
    }

    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("at least one iteration ran")
    }

    pub fn final_eta_measure(&self) -> DiscreteMeasure {
        let d = self.final_state().kl.retained();
        DiscreteMeasure::from_samples(d, self.final_eta_samples.clone())
            .expect("stored samples form a measure")
    }
}

/// Per-sample trajectories of the Monte Carlo reference run.
#[derive(Debug, Clone)]
pub struct McReference {
    n_samples: usize,
    n_iterations: usize,
    n_nodes: usize,
    t: Vec<f64>,
    phi: Vec<f64>,
    /// Ensemble relative successive distances per iteration (W-norm).
    pub succ_t: Vec<f64>,
    pub succ_phi: Vec<f64>,
    /// Samples whose final successive step stayed above 1e-8.
    pub non_converged: Vec<usize>,
}

impl McReference {
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_iterations(&self) -> usize {
        self.n_iterations
    }

    pub fn temperature(&self, sample: usize, iteration: usize) -> &[f64] {
        let idx = (sample * self.n_iterations + iteration) * self.n_nodes;
        &self.t[idx..idx + self.n_nodes]
    }

    pub fn flux(&self, sample: usize, iteration: usize) -> &[f64] {
        let idx = (sample * self.n_iterations + iteration) * self.n_nodes;
        &self.phi[idx..idx + self.n_nodes]
    }
}

/// Stage timings on stderr when PCUQ_TRACE is set.
fn trace(label: &str, start: std::time::Instant) {
    if std::env::var_os("PCUQ_TRACE").is_some() {
        eprintln!("[pcuq] {label}: {:.2?}", start.elapsed());
    }
}

fn par_rows(n: usize, width: usize, fill: impl Fn(usize, &mut [f64]) + Sync) -> DMatrix<f64> {
    let mut buf = vec![0.0; n * width];
    buf.par_chunks_mut(width)
        .enumerate()
        .for_each(|(k, row)| fill(k, row));
    DMatrix::from_row_slice(n, width, &buf)
}

fn w_norm_sq_slice(w: &WeightMatrix, v: &[f64]) -> f64 {
    let m = w.matrix();
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * v[j];
        }
        acc += row * v[i];
    }
    acc
}

/// Relative mean-square W-distance between row sets: numerator rows a - b,
/// denominator rows of `a`.
fn relative_w_distance(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &WeightMatrix) -> f64 {
    let n = a.nrows();
    let width = a.ncols();
    let sums = parallel::chunked_fold(
        n,
        |range| {
            let mut diff_sq = 0.0;
            let mut ref_sq = 0.0;
            let mut buf = vec![0.0; width];
            for k in range {
                for j in 0..width {
                    buf[j] = a[(k, j)] - b[(k, j)];
                }
                diff_sq += w_norm_sq_slice(w, &buf);
                for j in 0..width {
                    buf[j] = a[(k, j)];
                }
                ref_sq += w_norm_sq_slice(w, &buf);
            }
            (diff_sq, ref_sq)
        },
        (0.0, 0.0),
        |acc, v| (acc.0 + v.0, acc.1 + v.1),
    );
    if sums.1 <= 0.0 {
        return 0.0;
    }
    (sums.0 / sums.1).sqrt()
}

/// Monte Carlo reference: converge every sample of the metric substream by
/// alternating subproblem solves, storing the whole trajectory.
pub fn mc_reference_solve(ops: &FEOperators, config: &SolverConfig) -> Result<McReference> {
    config.validate()?;
    let n_samples = config.mc_reference;
    let n_iter = config.max_iter;
    let n_nodes = ops.n_nodes();
    let m = ops.params().field_terms;
    let w = ops.weight();

    let mut t = vec![0.0; n_samples * n_iter * n_nodes];
    let mut phi = vec![0.0; n_samples * n_iter * n_nodes];

    let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let xi = rng::uniform_point(config.seed, "metric", k as u64, m);
            let mut t_cur = DVector::from_element(n_nodes, ops.params().t_ambient);
            let mut phi_cur = DVector::zeros(n_nodes);
            let mut t_traj = Vec::with_capacity(n_iter * n_nodes);
            let mut phi_traj = Vec::with_capacity(n_iter * n_nodes);
            for _ in 0..n_iter {
                t_cur = ops.solve_heat_sample(&xi, &t_cur, &phi_cur)?;
                phi_cur = ops.solve_neutronics_sample(&t_cur)?;
                t_traj.extend_from_slice(t_cur.as_slice());
                phi_traj.extend_from_slice(phi_cur.as_slice());
            }
            Ok((t_traj, phi_traj))
        })
        .collect();
    for (k, res) in results.into_iter().enumerate() {
        let (t_traj, phi_traj) = res?;
        t[k * n_iter * n_nodes..(k + 1) * n_iter * n_nodes].copy_from_slice(&t_traj);
        phi[k * n_iter * n_nodes..(k + 1) * n_iter * n_nodes].copy_from_slice(&phi_traj);
    }

    let reference = McReference {
        n_samples,
        n_iterations: n_iter,
        n_nodes,
        t,
        phi,
        succ_t: Vec::new(),
        succ_phi: Vec::new(),
        non_converged: Vec::new(),
    };

    // ensemble successive-distance metrics and per-sample convergence
    let mut succ_t = Vec::with_capacity(n_iter);
    let mut succ_phi = Vec::with_capacity(n_iter);
    for ell in 0..n_iter {
        let sums = parallel::chunked_fold(
            n_samples,
            |range| {
                let mut dt = 0.0;
                let mut rt = 0.0;
                let mut dp = 0.0;
                let mut rp = 0.0;
                let mut buf = vec![0.0; n_nodes];
                for k in range {
                    let t_cur = reference.temperature(k, ell);
                    let p_cur = reference.flux(k, ell);
                    for j in 0..n_nodes {
                        buf[j] = if ell == 0 {
                            t_cur[j] - ops.params().t_ambient
                        } else {
                            t_cur[j] - reference.temperature(k, ell - 1)[j]
                        };
                    }
                    dt += w_norm_sq_slice(w, &buf);
                    rt += w_norm_sq_slice(w, t_cur);
                    for j in 0..n_nodes {
                        buf[j] = if ell == 0 {
                            p_cur[j]
                        } else {
                            p_cur[j] - reference.flux(k, ell - 1)[j]
                        };
                    }
                    dp += w_norm_sq_slice(w, &buf);
                    rp += w_norm_sq_slice(w, p_cur);
                }
                (dt, rt, dp, rp)
            },
            (0.0, 0.0, 0.0, 0.0),
            |a, v| (a.0 + v.0, a.1 + v.1, a.2 + v.2, a.3 + v.3),
        );
        succ_t.push((sums.0 / sums.1).sqrt());
        succ_phi.push((sums.2 / sums.3).sqrt());
    }

    let mut non_converged = Vec::new();
    if n_iter >= 2 {
        for k in 0..n_samples {
            let mut buf = vec![0.0; n_nodes];
            let last = reference.temperature(k, n_iter - 1);
            let prev = reference.temperature(k, n_iter - 2);
            for j in 0..n_nodes {
                buf[j] = last[j] - prev[j];
            }
            let rel = (w_norm_sq_slice(w, &buf) / w_norm_sq_slice(w, last)).sqrt();
            if rel > 1e-8 {
                non_converged.push(k);
            }
        }
    }

    Ok(McReference {
        succ_t,
        succ_phi,
        non_converged,
        ..reference
    })
}

/// Flux degree shell energies in the W-metric: returns (shell at degree q,
/// total over all kept terms), both squared.
fn shell_energy(pce: &PCExpansion, w: &WeightMatrix, q: u32) -> (f64, f64) {
    let mut shell = 0.0;
    let mut total = 0.0;
    for (k, idx) in pce.basis().indices().iter().enumerate() {
        let row = pce.coeffs().row(k).transpose();
        let e = w.norm_sq(&row);
        total += e;
        if idx.modulus() == q {
            shell += e;
        }
    }
    (shell, total)
}

struct FluxResult {
    flux_basis: Arc<Basis>,
    flux_pce: PCExpansion,
    rule: QuadratureRule,
    summary: EmbeddedSummary,
}

/// The PC-based Gauss-Seidel iteration (dimension reduction and measure
/// transformation included).
pub fn pc_gauss_seidel(ops: &FEOperators, config: &SolverConfig) -> Result<PcSolution> {
    config.validate()?;
    let p = config.degree_p;
    let m = ops.params().field_terms;
    let n_nodes = ops.n_nodes();
    let w = ops.weight();

    let input_basis = Arc::new(Basis::legendre(m, p)?);
    let input_rule = smolyak_sparse_grid(m, p + 1)?;
    let candidate_base = if config.candidate_level == p + 1 {
        input_rule.clone()
    } else {
        smolyak_sparse_grid(m, config.candidate_level)?
    };

    let b_input = family_matrix(input_basis.as_ref(), input_rule.nodes_flat());
    let b_candidate = if config.candidate_level == p + 1 {
        None
    } else {
        Some(family_matrix(
            input_basis.as_ref(),
            candidate_base.nodes_flat(),
        ))
    };
    let b_candidate_ref = b_candidate.as_ref().unwrap_or(&b_input);

    let metric_points = rng::uniform_points(config.seed, "metric", config.mc_metric, m);
    let b_metric = family_matrix(input_basis.as_ref(), &metric_points);
    let moment_points = rng::uniform_points(config.seed, "moments", config.mc_moments, m);

    let legendre = match input_basis.as_ref() {
        Basis::Legendre(b) => b.clone(),
        _ => unreachable!(),
    };

    let mut t_pce_prev =
        PCExpansion::constant(input_basis.clone(), &vec![ops.params().t_ambient; n_nodes])?;
    let mut prev_state: Option<IterationState> = None;
    let mut t_metric_prev =
        DMatrix::from_element(config.mc_metric, n_nodes, ops.params().t_ambient);
    let mut phi_metric_prev = DMatrix::zeros(config.mc_metric, n_nodes);

    let mut states: Vec<IterationState> = Vec::new();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut final_eta_samples: Vec<f64> = Vec::new();

    for ell in 1..=config.max_iter {
        let stage = std::time::Instant::now();
        // (i) heat solves at the input-grid nodes
        let t_prev_vals = &b_input * t_pce_prev.coeffs();
        let phi_prev_vals = match &prev_state {
            None => DMatrix::zeros(input_rule.len(), n_nodes),
            Some(state) => {
                composed_flux_values(state, &b_input).ok_or_else(|| {
                    Error::Numerical("composed flux evaluation failed".into())
                })?
            }
        };
        let heat: Vec<Result<Vec<f64>>> = (0..input_rule.len())
            .into_par_iter()
            .map(|k| {
                let t_row = t_prev_vals.row(k).transpose();
                let p_row = phi_prev_vals.row(k).transpose();
                let t = ops.solve_heat_sample(input_rule.node(k), &t_row, &p_row)?;
                Ok(t.as_slice().to_vec())
            })
            .collect();
        let mut t_samples = DMatrix::zeros(input_rule.len(), n_nodes);
        for (k, res) in heat.into_iter().enumerate() {
            let row = res?;
            for (j, &v) in row.iter().enumerate() {
                t_samples[(k, j)] = v;
            }
        }

        trace(&format!("iter {ell} heat solves"), stage);
        let stage = std::time::Instant::now();
        // (ii) project the temperature onto the input basis
        let t_pce = project_with_matrix(
            &t_samples,
            input_basis.clone(),
            &b_input,
            input_rule.weights(),
        )?;

        trace(&format!("iter {ell} projection"), stage);
        let stage = std::time::Instant::now();
        // (iii) weighted KL reduction of the temperature. Direct solves on a
        // deterministic iterate still leave round-off variance, amplified by
        // the mixed-sign sparse-grid weights of the projection; eigenvalues
        // below 1e-13 of the mean energy (fluctuations under ~3e-7 of the
        // mean in the W-norm) are treated as zero so the reduction collapses
        // to the deterministic case instead of fitting noise.
        let spectrum = weighted_kl_spectrum(&t_pce, w)?;
        let mean_energy = w.norm_sq(spectrum.mean());
        let lambda_floor = 1e-13 * mean_energy;
        let floored: Vec<f64> = spectrum
            .eigenvalues()
            .iter()
            .map(|&l| if l <= lambda_floor { 0.0 } else { l })
            .collect();
        let floored_energy: f64 = floored.iter().rev().sum();
        let d = choose_reduced_dim(&floored, floored_energy, config.eps1);
        let kl = reduce_spectrum(spectrum, &t_pce, w, d, lambda_floor)?;
        let eta_coeffs = kl.reduced_pce().coeffs().clone();

        trace(&format!("iter {ell} reduction"), stage);
        let stage = std::time::Instant::now();
        // reduced-variable samples for Gram/moment estimation (fixed
        // substream shared by every iteration)
        let eta_samples_mat = eval_eta_samples(&legendre, &eta_coeffs, &moment_points, m);
        let measure = DiscreteMeasure::from_samples(d, eta_samples_mat.clone())?;
        trace(&format!("iter {ell} eta samples"), stage);
        let stage = std::time::Instant::now();

        // candidate rule transported to the reduced variables
        let eta_at_cand = b_candidate_ref * &eta_coeffs;
        let mut cand_nodes = vec![0.0; candidate_base.len() * d];
        for k in 0..candidate_base.len() {
            for j in 0..d {
                cand_nodes[k * d + j] = eta_at_cand[(k, j)];
            }
        }
        let candidate = QuadratureRule::new(
            d,
            cand_nodes,
            candidate_base.weights().to_vec(),
            format!("reduced-measure iteration {ell}"),
            None,
        )?;

        trace(&format!("iter {ell} candidate"), stage);
        let stage = std::time::Instant::now();
        // (iv) adaptive flux degree loop
        let FluxResult {
            flux_basis,
            flux_pce,
            rule,
            summary,
        } = flux_degree_loop(ops, config, &kl, &measure, &candidate, ell)?;

        trace(&format!("iter {ell} flux loop"), stage);
        let stage = std::time::Instant::now();
        // metrics on the shared metric sample set
        let t_metric = &b_metric * t_pce.coeffs();
        let eta_metric = &b_metric * &eta_coeffs;
        let phi_metric = flux_values_at(&flux_basis, &flux_pce, &eta_metric);
        let succ_t = relative_w_distance(&t_metric, &t_metric_prev, w);
        let succ_phi = relative_w_distance(&phi_metric, &phi_metric_prev, w);

        let q = flux_basis.max_degree();
        records.push(IterationRecord {
            ell,
            d,
            q,
            nu: rule.len(),
            sum_abs_w: summary.sum_abs_weights,
            succ_t,
            succ_phi,
            vs_mc_t: None,
            vs_mc_phi: None,
        });
        let state = IterationState {
            t_pce: t_pce.clone(),
            kl,
            flux_basis,
            flux_pce,
            rule,
            summary,
        };
        states.push(state.clone());
        final_eta_samples = eta_samples_mat;

        t_pce_prev = t_pce;
        prev_state = Some(state);
        t_metric_prev = t_metric;
        phi_metric_prev = phi_metric;

        trace(&format!("iter {ell} metrics"), stage);

        if succ_t < config.stagnation_tol && succ_phi < config.stagnation_tol {
            break;
        }
    }

    Ok(PcSolution {
        states,
        records,
        input_basis,
        final_eta_samples,
    })
}

/// eta values at sample points: psi-row times coefficient matrix, chunked so
/// the result is independent of the thread count.
fn eval_eta_samples(
    legendre: &LegendreBasis,
    eta_coeffs: &DMatrix<f64>,
    points: &[f64],
    dim: usize,
) -> Vec<f64> {
    let d = eta_coeffs.ncols();
    let mu = eta_coeffs.nrows();
    let n = points.len() / dim;
    let mut out = vec![0.0; n * d];
    out.par_chunks_mut(d).enumerate().for_each(|(k, row)| {
        let mut scratch = legendre.index_set().power_scratch();
        let mut psi = vec![0.0; mu];
        legendre.eval_with_scratch(&points[k * dim..(k + 1) * dim], &mut scratch, &mut psi);
        for j in 0..d {
            let mut acc = 0.0;
            for (i, &p) in psi.iter().enumerate() {
                acc += p * eta_coeffs[(i, j)];
            }
            row[j] = acc;
        }
    });
    out
}

/// Evaluate the flux expansion at reduced-variable rows.
fn flux_values_at(
    flux_basis: &Arc<Basis>,
    flux_pce: &PCExpansion,
    eta_rows: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = eta_rows.nrows();
    let d = eta_rows.ncols();
    let mut flat = vec![0.0; n * d];
    for k in 0..n {
        for j in 0..d {
            flat[k * d + j] = eta_rows[(k, j)];
        }
    }
    let g = family_matrix(flux_basis.as_ref(), &flat);
    g * flux_pce.coeffs()
}

/// Composed flux values at input-grid rows: eta through the stored reduced
/// expansion, then the flux basis of the same iteration.
fn composed_flux_values(state: &IterationState, b_points: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eta = b_points * state.kl.reduced_pce().coeffs();
    Some(flux_values_at(&state.flux_basis, &state.flux_pce, &eta))
}

/// Grow the flux degree until the newest degree shell is negligible in the
/// W-metric. The accepted degree is always at least one: at q = 0 the shell
/// ratio equals one by construction.
fn flux_degree_loop(
    ops: &FEOperators,
    config: &SolverConfig,
    kl: &KLDecomposition,
    measure: &DiscreteMeasure,
    candidate: &QuadratureRule,
    ell: usize,
) -> Result<FluxResult> {
    let d = kl.retained();
    let w = ops.weight();
    let n_nodes = ops.n_nodes();
    for q in 0..=config.q_cap {
        let stage = std::time::Instant::now();
        let flux_indices = enumerate_multiindices(d, q)?;
        let flux_basis = OrthonormalBasis::from_measure(flux_indices, measure, DEFAULT_DROP_TOL)?;
        let level = q + 1;
        let con_indices = enumerate_multiindices(d, 2 * level - 1)?;
        let con_basis = OrthonormalBasis::from_measure(con_indices, measure, DEFAULT_DROP_TOL)?;
        let moments = moment_vector(&con_basis, measure);
        trace(&format!("  q {q} bases"), stage);
        if std::env::var_os("PCUQ_TRACE").is_some() {
            eprintln!(
                "[pcuq]   q {q}: d={} con kept={} flux kept={} |b|max={:.3e} b0={:.6}",
                d,
                con_basis.n_kept(),
                flux_basis.n_kept(),
                moments.abs().max(),
                moments[0]
            );
        }
        let stage = std::time::Instant::now();
        let (rule, summary) = embedded_rule_with_basis(
            candidate,
            level,
            &con_basis,
            &moments,
            &format!("reduced-measure iteration {ell}"),
        )?;

        trace(&format!("  q {q} embedded rule ({} iters)", summary.lp_iterations), stage);
        let stage = std::time::Instant::now();
        let solves: Vec<Result<Vec<f64>>> = (0..rule.len())
            .into_par_iter()
            .map(|k| {
                let t_red = kl_reconstruct(kl, rule.node(k))?;
                let phi = ops.solve_neutronics_sample(&t_red)?;
                Ok(phi.as_slice().to_vec())
            })
            .collect();
        let mut phi_samples = DMatrix::zeros(rule.len(), n_nodes);
        for (k, res) in solves.into_iter().enumerate() {
            let row = res?;
            for (j, &v) in row.iter().enumerate() {
                phi_samples[(k, j)] = v;
            }
        }
        let flux_basis = Arc::new(Basis::Orthonormalized(flux_basis));
        let flux_pce = project(&phi_samples, flux_basis.clone(), &rule)?;

        trace(&format!("  q {q} neutronics+projection"), stage);
        let (shell, total) = shell_energy(&flux_pce, w, q);
        if q >= 1 && shell.sqrt() <= config.eps2 * total.sqrt() {
            return Ok(FluxResult {
                flux_basis,
                flux_pce,
                rule,
                summary,
            });
        }
    }
    Err(Error::Numerical(format!(
        "flux degree cap q_cap = {} reached at iteration {ell} without satisfying eps2 = {}; \
         raise q_cap or relax eps2",
        config.q_cap, config.eps2
    )))
}

/// Fill the `vs_mc_*` fields of the PC records with the distances to the
/// Monte Carlo reference on the shared metric sample set.
pub fn compare_to_reference(
    pc: &mut PcSolution,
    mc: &McReference,
    ops: &FEOperators,
    config: &SolverConfig,
) -> Result<()> {
    let n_metric = config.mc_metric.min(mc.n_samples());
    if n_metric == 0 {
        return Err(Error::Config("no metric samples available".into()));
    }
    let m = ops.params().field_terms;
    let w = ops.weight();
    let n_nodes = ops.n_nodes();
    let metric_points = rng::uniform_points(config.seed, "metric", n_metric, m);
    let b_metric = family_matrix(pc.input_basis.as_ref(), &metric_points);

    for (idx, state) in pc.states.iter().enumerate() {
        let ell = pc.records[idx].ell;
        if ell > mc.n_iterations() {
            break;
        }
        let t_pc = &b_metric * state.t_pce.coeffs();
        let phi_pc = composed_flux_values(state, &b_metric)
            .ok_or_else(|| Error::Numerical("composed flux evaluation failed".into()))?;
        let t_ref = par_rows(n_metric, n_nodes, |k, row| {
            row.copy_from_slice(mc.temperature(k, ell - 1));
        });
        let phi_ref = par_rows(n_metric, n_nodes, |k, row| {
            row.copy_from_slice(mc.flux(k, ell - 1));
        });
        // distances normalized by the reference iterate
        let vs_t = relative_w_distance(&t_ref, &t_pc, w);
        let vs_phi = relative_w_distance(&phi_ref, &phi_pc, w);
        pc.records[idx].vs_mc_t = Some(vs_t);
        pc.records[idx].vs_mc_phi = Some(vs_phi);
    }
    Ok(())
}

/// One entry of the quadrature study around the final reduced measure.
#[derive(Debug, Clone)]
pub struct RuleStudyEntry {
    pub level: u32,
    pub candidate_level: u32,
    pub rule: QuadratureRule,
    pub summary: EmbeddedSummary,
}

/// Rebuild embedded rules of several (level, candidate-level) pairs for the
/// final reduced measure of a PC run; the data behind the quadrature
/// convergence diagnostics.
pub fn rule_study(
    pc: &PcSolution,
    ops: &FEOperators,
    config: &SolverConfig,
    pairs: &[(u32, u32)],
) -> Result<Vec<RuleStudyEntry>> {
    let state = pc.final_state();
    let d = state.kl.retained();
    let m = ops.params().field_terms;
    let measure = pc.final_eta_measure();
    let eta_coeffs = state.kl.reduced_pce().coeffs();

    let mut out = Vec::with_capacity(pairs.len());
    for &(level, cand_level) in pairs {
        let grid = smolyak_sparse_grid(m, cand_level)?;
        let b_grid = family_matrix(pc.input_basis.as_ref(), grid.nodes_flat());
        let eta_at = &b_grid * eta_coeffs;
        let mut nodes = vec![0.0; grid.len() * d];
        for k in 0..grid.len() {
            for j in 0..d {
                nodes[k * d + j] = eta_at[(k, j)];
            }
        }
        let candidate = QuadratureRule::new(
            d,
            nodes,
            grid.weights().to_vec(),
            "reduced-measure study",
            None,
        )?;
        let con_indices = enumerate_multiindices(d, 2 * level - 1)?;
        let con_basis = OrthonormalBasis::from_measure(con_indices, &measure, DEFAULT_DROP_TOL)?;
        let moments = moment_vector(&con_basis, &measure);
        let (rule, summary) = embedded_rule_with_basis(
            &candidate,
            level,
            &con_basis,
            &moments,
            "reduced-measure study",
        )?;
        out.push(RuleStudyEntry {
            level,
            candidate_level: cand_level,
            rule,
            summary,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reactor::ReactorParams;
    use approx::assert_relative_eq;

    fn toy_params() -> ReactorParams {
        ReactorParams {
            field_terms: 2,
            ..ReactorParams::default()
        }
    }

    fn toy_config() -> SolverConfig {
        SolverConfig {
            degree_p: 2,
            eps1: 0.05,
            eps2: 1e-6,
            max_iter: 6,
            mc_moments: 4000,
            candidate_level: 5,
            mc_reference: 60,
            mc_metric: 60,
            seed: 99,
            q_cap: 6,
            stagnation_tol: 1e-12,
        }
    }

    #[test]
    fn first_iteration_is_deterministic_equilibrium() {
        // with zero initial flux the first temperature iterate is the ambient
        // equilibrium for every sample, so the reduction degenerates to a
        // single zero-variance mode and a one-node rule
        let ops = FEOperators::new(toy_params(), 10).unwrap();
        let config = toy_config();
        let pc = pc_gauss_seidel(&ops, &config).unwrap();
        let first = &pc.records[0];
        assert_eq!(first.ell, 1);
        assert_eq!(first.d, 1);
        assert_eq!(first.nu, 1);
        assert_eq!(first.q, 1);
        // flux of iteration one equals the deterministic solve at the mean
        let t_mean = pc.states[0].kl.mean().clone();
        let phi_det = ops.solve_neutronics_sample(&t_mean).unwrap();
        let phi_pce_mean = pc.states[0].flux_pce.mean();
        assert_relative_eq!(phi_pce_mean, phi_det, epsilon = 1e-8 * phi_det.abs().max());
    }

    #[test]
    fn zero_delta_collapses_to_the_deterministic_solution() {
        let params = ReactorParams {
            delta: 0.0,
            field_terms: 2,
            ..ReactorParams::default()
        };
        let ops = FEOperators::new(params, 10).unwrap();
        let config = SolverConfig {
            max_iter: 8,
            ..toy_config()
        };
        let pc = pc_gauss_seidel(&ops, &config).unwrap();
        let state = pc.final_state();
        // temperature coefficients beyond the zero index vanish
        let n = state.t_pce.n_terms();
        let tail = state.t_pce.coeffs().rows(1, n - 1).abs().max();
        let head = state.t_pce.coeffs().row(0).abs().max();
        assert!(tail <= 1e-10 * head, "stochastic tail {tail} vs mean scale {head}");
        // the flux expansion is the deterministic fixed point
        let xi = vec![0.0; 2];
        let (_, phi_det) = ops.gauss_seidel_sample(&xi, config.max_iter).unwrap();
        let phi_mean = state.flux_pce.mean();
        assert_relative_eq!(phi_mean, phi_det, epsilon = 1e-8 * phi_det.abs().max());
        let (_, cov) = state.flux_pce.mean_cov();
        assert!(cov.abs().max() <= 1e-12 * phi_det.abs().max().powi(2));
    }

    #[test]
    fn records_are_reproducible_bit_for_bit() {
        let ops = FEOperators::new(toy_params(), 10).unwrap();
        let config = toy_config();
        let a = pc_gauss_seidel(&ops, &config).unwrap();
        let b = pc_gauss_seidel(&ops, &config).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.d, rb.d);
            assert_eq!(ra.q, rb.q);
            assert_eq!(ra.nu, rb.nu);
            assert_eq!(ra.sum_abs_w.to_bits(), rb.sum_abs_w.to_bits());
            assert_eq!(ra.succ_t.to_bits(), rb.succ_t.to_bits());
            assert_eq!(ra.succ_phi.to_bits(), rb.succ_phi.to_bits());
        }
    }

    #[test]
    fn records_do_not_depend_on_thread_count() {
        let ops = FEOperators::new(toy_params(), 10).unwrap();
        let config = toy_config();
        let a = pc_gauss_seidel(&ops, &config).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| pc_gauss_seidel(&ops, &config)).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.succ_t.to_bits(), rb.succ_t.to_bits());
            assert_eq!(ra.succ_phi.to_bits(), rb.succ_phi.to_bits());
            assert_eq!(ra.sum_abs_w.to_bits(), rb.sum_abs_w.to_bits());
        }
    }

    #[test]
    fn successive_distances_contract() {
        let ops = FEOperators::new(toy_params(), 10).unwrap();
        let config = toy_config();
        let pc = pc_gauss_seidel(&ops, &config).unwrap();
        let records = &pc.records;
        assert!(records.len() >= 4);
        for k in 2..records.len() {
            assert!(
                records[k].succ_t <= records[k - 1].succ_t,
                "iteration {} did not contract: {} -> {}",
                k + 1,
                records[k - 1].succ_t,
                records[k].succ_t
            );
        }
    }

    #[test]
    fn matches_full_dimensional_solve_at_small_scale() {
        // oracle: a stochastic Gauss-Seidel without reduction or measure
        // transformation, solving both subproblems over the input basis
        let ops = FEOperators::new(toy_params(), 10).unwrap();
        let config = SolverConfig {
            eps1: 0.01,
            max_iter: 8,
            ..toy_config()
        };
        let pc = pc_gauss_seidel(&ops, &config).unwrap();

        let m = 2;
        let p = config.degree_p;
        let basis = Arc::new(Basis::legendre(m, p).unwrap());
        let rule = smolyak_sparse_grid(m, p + 1).unwrap();
        let b = family_matrix(basis.as_ref(), rule.nodes_flat());
        let n_nodes = ops.n_nodes();
        let mut t_pce =
            PCExpansion::constant(basis.clone(), &vec![ops.params().t_ambient; n_nodes]).unwrap();
        let mut phi_pce = PCExpansion::zero(basis.clone(), n_nodes).unwrap();
        for _ in 0..config.max_iter {
            let t_prev = &b * t_pce.coeffs();
            let phi_prev = &b * phi_pce.coeffs();
            let mut t_rows = DMatrix::zeros(rule.len(), n_nodes);
            let mut phi_rows = DMatrix::zeros(rule.len(), n_nodes);
            for k in 0..rule.len() {
                let t = ops
                    .solve_heat_sample(
                        rule.node(k),
                        &t_prev.row(k).transpose(),
                        &phi_prev.row(k).transpose(),
                    )
                    .unwrap();
                let phi = ops.solve_neutronics_sample(&t).unwrap();
                for j in 0..n_nodes {
                    t_rows[(k, j)] = t[j];
                    phi_rows[(k, j)] = phi[j];
                }
            }
            t_pce = project_with_matrix(&t_rows, basis.clone(), &b, rule.weights()).unwrap();
            phi_pce = project_with_matrix(&phi_rows, basis.clone(), &b, rule.weights()).unwrap();
        }

        let (mean_full, cov_full) = phi_pce.mean_cov();
        let (mean_red, cov_red) = pc.final_state().flux_pce.mean_cov();
        // the truncated representation may shift the flux mean by a fraction
        // of the eps1-controlled reduction error
        assert_relative_eq!(
            mean_red,
            mean_full,
            epsilon = 0.1 * config.eps1 * mean_full.abs().max()
        );
        // pointwise standard deviations agree within the truncation budget
        for j in 0..n_nodes {
            let s_full = cov_full[(j, j)].max(0.0).sqrt();
            let s_red = cov_red[(j, j)].max(0.0).sqrt();
            assert!(
                (s_full - s_red).abs() <= 0.05 * s_full.max(1e-12 * mean_full.abs().max()),
                "node {j}: std {s_red} vs oracle {s_full}"
            );
        }
    }

    #[test]
    fn reference_and_comparison_fill_records() {
        let ops = FEOperators::new(toy_params(), 10).unwrap();
        let config = SolverConfig {
            max_iter: 12,
            ..toy_config()
        };
        let mc = mc_reference_solve(&ops, &config).unwrap();
        assert!(mc.non_converged.is_empty());
        // ensemble mean temperature never falls below ambient
        for k in 0..mc.n_samples() {
            let t = mc.temperature(k, config.max_iter - 1);
            assert!(t.iter().all(|&v| v >= ops.params().t_ambient - 1e-9));
        }
        let mut pc = pc_gauss_seidel(&ops, &config).unwrap();
        compare_to_reference(&mut pc, &mc, &ops, &config).unwrap();
        for rec in &pc.records {
            let vs_t = rec.vs_mc_t.expect("filled");
            let vs_phi = rec.vs_mc_phi.expect("filled");
            assert!(vs_t.is_finite() && vs_t >= 0.0);
            assert!(vs_phi.is_finite() && vs_phi >= 0.0);
            assert!(vs_t < 0.1, "distance to reference too large: {vs_t}");
        }
    }

    #[test]
    fn rule_study_is_monotone_in_the_candidate_level() {
        let ops = FEOperators::new(toy_params(), 10).unwrap();
        let config = toy_config();
        let pc = pc_gauss_seidel(&ops, &config).unwrap();
        let entries = rule_study(&pc, &ops, &config, &[(2, 3), (2, 4), (2, 5)]).unwrap();
        for pair in entries.windows(2) {
            assert!(
                pair[1].summary.sum_abs_weights <= pair[0].summary.sum_abs_weights + 1e-9,
                "sum |w| grew with a larger candidate set"
            );
        }
    }
}
