use nalgebra::{DMatrix, DVector};
use pcuq::embedded::{solve_l1, L1Problem};
use pcuq::quad::QuadratureRule;

fn main() {
    // shape of the first-iteration level-2 problem: one constant row over
    // the full 10D level-5 sparse grid collapsed to the origin
    let grid = pcuq::smolyak_sparse_grid(10, 5).unwrap();
    let n = grid.len();
    println!("candidate nodes: {n}");
    let a = DMatrix::from_element(1, n, 1.0);
    let wsum: f64 = (0..n).map(|_| 1.0f64 / 100_000.0).sum::<f64>() * 100_000.0 / n as f64 * n as f64;
    let b = DVector::from_vec(vec![wsum]);
    println!("b = {:.17}", wsum);
    let candidate = QuadratureRule::new(1, vec![0.0; n], grid.weights().to_vec(), "t", None).unwrap();
    let problem = L1Problem { a, b, candidate };
    match solve_l1(&problem) {
        Ok(sol) => println!("ok, obj {} iters {}", sol.objective, sol.lp_iterations),
        Err(e) => println!("err: {e}"),
    }
}
