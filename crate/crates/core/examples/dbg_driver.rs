use pcuq::driver::{pc_gauss_seidel, SolverConfig};
use pcuq::reactor::{FEOperators, ReactorParams};

fn main() {
    let params = ReactorParams { field_terms: 2, ..ReactorParams::default() };
    let ops = FEOperators::new(params, 10).unwrap();
    let config = SolverConfig {
        degree_p: 2, eps1: 0.05, eps2: 1e-6, max_iter: 6,
        mc_moments: 4000, candidate_level: 5, mc_reference: 60,
        mc_metric: 60, seed: 99, q_cap: 6, stagnation_tol: 1e-12,
    };
    match pc_gauss_seidel(&ops, &config) {
        Ok(pc) => {
            for r in &pc.records {
                println!("ell {} d {} q {} nu {} sumw {:.6} succT {:.3e} succPhi {:.3e}",
                    r.ell, r.d, r.q, r.nu, r.sum_abs_w, r.succ_t, r.succ_phi);
            }
        }
        Err(e) => println!("iteration 1 error: {e}"),
    }
}
