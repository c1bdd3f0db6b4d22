use pcuq::driver::{mc_reference_solve, pc_gauss_seidel, compare_to_reference, SolverConfig};
use pcuq::reactor::{FEOperators, ReactorParams};
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let ops = FEOperators::new(ReactorParams::default(), 40).unwrap();
    println!("setup {:.1?}", t0.elapsed());
    let config = SolverConfig::default();
    let t1 = Instant::now();
    let mut pc = pc_gauss_seidel(&ops, &config).unwrap();
    println!("pc solve {:.1?}", t1.elapsed());
    for r in &pc.records {
        println!(
            "ell {:2} d {} q {} nu {:3} sumw {:.4} succT {:.3e} succPhi {:.3e}",
            r.ell, r.d, r.q, r.nu, r.sum_abs_w, r.succ_t, r.succ_phi
        );
    }
    let t2 = Instant::now();
    let mc = mc_reference_solve(&ops, &config).unwrap();
    println!("mc reference {:.1?} ({} non-converged)", t2.elapsed(), mc.non_converged.len());
    compare_to_reference(&mut pc, &mc, &ops, &config).unwrap();
    for r in &pc.records {
        println!(
            "ell {:2} vsT {:.3e} vsPhi {:.3e}",
            r.ell,
            r.vs_mc_t.unwrap_or(f64::NAN),
            r.vs_mc_phi.unwrap_or(f64::NAN)
        );
    }
    println!("total {:.1?}", t0.elapsed());
}
