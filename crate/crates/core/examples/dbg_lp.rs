use nalgebra::{DMatrix, DVector};
use pcuq::embedded::{solve_l1, L1Problem};
use pcuq::quad::QuadratureRule;

fn main() {
    // the degenerate first-iteration problem: all candidate nodes at the
    // origin, single constant constraint
    let n = 13;
    let a = DMatrix::from_element(1, n, 1.0);
    let b = DVector::from_vec(vec![1.0]);
    let candidate = QuadratureRule::new(1, vec![0.0; n], vec![1.0 / n as f64; n], "t", None).unwrap();
    let problem = L1Problem { a, b, candidate };
    match solve_l1(&problem) {
        Ok(sol) => println!("ok, obj {}", sol.objective),
        Err(e) => println!("err: {e}"),
    }
}
