use nalgebra::DMatrix;
use pcuq::basis::{family_matrix, Basis, OrthonormalBasis, DEFAULT_DROP_TOL};
use pcuq::driver::SolverConfig;
use pcuq::embedded::build_l1_problem;
use pcuq::indices::enumerate_multiindices;
use pcuq::kl::{choose_reduced_dim, reduce_spectrum, weighted_kl_spectrum};
use pcuq::measure::DiscreteMeasure;
use pcuq::pce::{project_with_matrix, PCExpansion};
use pcuq::quad::{moment_vector, smolyak_sparse_grid, QuadratureRule};
use pcuq::reactor::{FEOperators, ReactorParams};
use pcuq::rng;
use std::sync::Arc;

fn main() {
    let params = ReactorParams { field_terms: 2, ..ReactorParams::default() };
    let ops = FEOperators::new(params, 10).unwrap();
    let config = SolverConfig {
        degree_p: 2, mc_moments: 4000, candidate_level: 3, seed: 99,
        ..SolverConfig::default()
    };
    let m = 2;
    let p = config.degree_p;
    let n_nodes = ops.n_nodes();
    let input_basis = Arc::new(Basis::legendre(m, p).unwrap());
    let input_rule = smolyak_sparse_grid(m, p + 1).unwrap();
    println!("input rule nodes: {}", input_rule.len());
    let b_input = family_matrix(input_basis.as_ref(), input_rule.nodes_flat());

    // heat solves with T_prev = ambient, Phi = 0
    let mut t_samples = DMatrix::zeros(input_rule.len(), n_nodes);
    let t_prev = nalgebra::DVector::from_element(n_nodes, 390.0);
    let phi_prev = nalgebra::DVector::zeros(n_nodes);
    for k in 0..input_rule.len() {
        let t = ops.solve_heat_sample(input_rule.node(k), &t_prev, &phi_prev).unwrap();
        for j in 0..n_nodes { t_samples[(k, j)] = t[j]; }
    }
    println!("T sample spread: {:.3e}", (t_samples.max() - t_samples.min()));
    let t_pce = project_with_matrix(&t_samples, input_basis.clone(), &b_input, input_rule.weights()).unwrap();
    let spectrum = weighted_kl_spectrum(&t_pce, ops.weight()).unwrap();
    println!("eigenvalues: {:?}", &spectrum.eigenvalues()[..5]);
    println!("rank: {}, fluct energy: {:.3e}", spectrum.rank(), spectrum.fluctuation_energy());
    let d = choose_reduced_dim(spectrum.eigenvalues(), spectrum.fluctuation_energy(), 0.05);
    println!("chosen d = {d}");
    let kl = reduce_spectrum(spectrum, &t_pce, ops.weight(), d).unwrap();
    println!("eta coeff max: {:.3e}", kl.reduced_pce().coeffs().abs().max());

    let moment_points = rng::uniform_points(config.seed, "moments", config.mc_moments, m);
    let n_mom = config.mc_moments;
    let mut eta_samples = vec![0.0; n_mom * d];
    for k in 0..n_mom {
        let v = kl.reduced_pce().eval(&moment_points[k*m..(k+1)*m]);
        for j in 0..d { eta_samples[k*d+j] = v[j]; }
    }
    let spread = eta_samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - eta_samples.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("eta sample spread: {:.3e}", spread);
    let measure = DiscreteMeasure::from_samples(d, eta_samples).unwrap();

    let candidate_base = smolyak_sparse_grid(m, 3).unwrap();
    let b_cand = family_matrix(input_basis.as_ref(), candidate_base.nodes_flat());
    let eta_at_cand = &b_cand * kl.reduced_pce().coeffs();
    let mut cand_nodes = vec![0.0; candidate_base.len() * d];
    for k in 0..candidate_base.len() {
        for j in 0..d { cand_nodes[k*d+j] = eta_at_cand[(k, j)]; }
    }
    println!("candidate eta values: {:?}", &cand_nodes[..cand_nodes.len().min(13)]);
    let candidate = QuadratureRule::new(d, cand_nodes, candidate_base.weights().to_vec(), "t", None).unwrap();

    for q in 0..=2u32 {
        let level = q + 1;
        let con = enumerate_multiindices(d, 2*level-1).unwrap();
        let con_basis = OrthonormalBasis::from_measure(con, &measure, DEFAULT_DROP_TOL).unwrap();
        println!("q={q}: constraint rows kept = {}", con_basis.n_kept());
        let b = moment_vector(&con_basis, &measure);
        println!("  b = {:?}", b.as_slice().iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>());
        let problem = build_l1_problem(&candidate, &con_basis, &b).unwrap();
        match pcuq::embedded::solve_l1(&problem) {
            Ok(sol) => println!("  LP ok, obj {:.6}", sol.objective),
            Err(e) => println!("  LP err: {e}"),
        }
    }
    let _ = PCExpansion::zero(input_basis, 1);
}
