use pcuq::driver::{pc_gauss_seidel, SolverConfig};
use pcuq::reactor::{FEOperators, ReactorParams};

fn main() {
    let ops = FEOperators::new(ReactorParams::default(), 40).unwrap();
    let config = SolverConfig { max_iter: 1, ..SolverConfig::default() };
    match pc_gauss_seidel(&ops, &config) {
        Ok(pc) => println!("ok {:?}", pc.records.len()),
        Err(e) => println!("err: {e}"),
    }
}
