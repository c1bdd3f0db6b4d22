//! Quadrature rules: Gauss-Legendre, full tensor products, Smolyak sparse
//! grids, and transport of rules under a polynomial change of variables.
//!
//! All rules integrate probability measures: Gauss-Legendre weights absorb the
//! 1/2 density of the uniform distribution on [-1, 1], so weights of positive
//! rules sum to one.

use crate::basis::PolyFamily;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::parallel;
use crate::pce::PCExpansion;
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// Quantization used when merging coincident sparse-grid nodes.
const NODE_MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    dim: usize,
    nodes: Vec<f64>, // flat, len = count * dim
    weights: Vec<f64>,
    measure_tag: String,
    exactness_degree: Option<u32>,
}

impl QuadratureRule {
    pub fn new(
        dim: usize,
        nodes: Vec<f64>,
        weights: Vec<f64>,
        measure_tag: impl Into<String>,
        exactness_degree: Option<u32>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("rule dimension must be >= 1".into()));
        }
        if nodes.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: weights.len() * dim,
                got: nodes.len(),
                context: "rule nodes vs weights",
            });
        }
        Ok(Self {
            dim,
            nodes,
            weights,
            measure_tag: measure_tag.into(),
            exactness_degree,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn nodes_flat(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn measure_tag(&self) -> &str {
        &self.measure_tag
    }

    pub fn exactness_degree(&self) -> Option<u32> {
        self.exactness_degree
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn sum_abs_weights(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        (0..self.len()).map(|k| self.weights[k] * f(self.node(k))).sum()
    }

    /// View the rule as a discrete measure (for Gram/moment assembly).
    pub fn as_measure(&self) -> DiscreteMeasure {
        DiscreteMeasure::new(self.dim, self.nodes.clone(), self.weights.clone())
            .expect("rule invariants imply a valid measure")
    }
}

/// n-point Gauss-Legendre rule on (-1, 1) for the uniform probability measure:
/// positive weights summing to one, degree of exactness 2n - 1. Nodes and
/// weights come from the symmetric eigendecomposition of the Jacobi matrix and
/// are symmetrized so mirror nodes are exact negatives.
pub fn gauss_legendre_1d(n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::InvalidArgument("rule size must be >= 1".into()));
    }
    if n == 1 {
        return QuadratureRule::new(1, vec![0.0], vec![1.0], "uniform[-1,1]", Some(1));
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let first = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));

    let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    QuadratureRule::new(1, nodes, weights, "uniform[-1,1]", Some(2 * n as u32 - 1))
}

/// Cartesian product of rules; coordinates concatenate, weights multiply.
pub fn tensor_rule(rules: &[QuadratureRule]) -> Result<QuadratureRule> {
    if rules.is_empty() {
        return Err(Error::InvalidArgument("tensor of zero rules".into()));
    }
    let dim: usize = rules.iter().map(|r| r.dim()).sum();
    let mut count: usize = 1;
    for r in rules {
        count = count
            .checked_mul(r.len())
            .filter(|&c| c <= 50_000_000)
            .ok_or(Error::Sizing {
                dim,
                degree: rules.iter().map(|r| r.len()).max().unwrap_or(0),
            })?;
    }
    let mut nodes = Vec::with_capacity(count * dim);
    let mut weights = Vec::with_capacity(count);
    let mut odometer = vec![0usize; rules.len()];
    let mut done = false;
    while !done {
        let mut w = 1.0;
        for (r, &k) in rules.iter().zip(&odometer) {
            nodes.extend_from_slice(r.node(k));
            w *= r.weight(k);
        }
        weights.push(w);
        // advance, last axis fastest
        done = true;
        for axis in (0..rules.len()).rev() {
            odometer[axis] += 1;
            if odometer[axis] < rules[axis].len() {
                done = false;
                break;
            }
            odometer[axis] = 0;
        }
    }
    debug_assert_eq!(weights.len(), count);
    let exactness = rules
        .iter()
        .map(|r| r.exactness_degree())
        .try_fold(u32::MAX, |acc, e| e.map(|v| acc.min(v)));
    QuadratureRule::new(
        dim,
        nodes,
        weights,
        rules[0].measure_tag().to_string() + "^x",
        exactness,
    )
}

fn quantize(coords: &[f64]) -> Vec<i64> {
    coords
        .iter()
        .map(|&x| (x / NODE_MERGE_TOL).round() as i64)
        .collect()
}

/// Smolyak sparse-grid Gauss-Legendre rule with linear growth (level i uses an
/// i-point rule). A rule of level `level` integrates every polynomial of total
/// degree <= 2*level - 1 exactly with respect to the uniform probability
/// measure on [-1,1]^dim. Coincident nodes of different tensor terms are
/// merged with a 1e-12 coordinate tolerance.
pub fn smolyak_sparse_grid(dim: usize, level: u32) -> Result<QuadratureRule> {
    if dim == 0 || level == 0 {
        return Err(Error::InvalidArgument(
            "sparse grid needs dim >= 1 and level >= 1".into(),
        ));
    }
    let one_d: Vec<QuadratureRule> = (1..=level as usize)
        .map(gauss_legendre_1d)
        .collect::<Result<_>>()?;

    let q = dim as i64 + level as i64 - 1;
    let mut merged: BTreeMap<Vec<i64>, (Vec<f64>, f64)> = BTreeMap::new();

    let mut index = vec![1usize; dim];
    enumerate_smolyak_terms(&mut index, 0, q as usize, &mut |levels| {
        let total: usize = levels.iter().sum();
        let excess = (q as usize) - total;
        // combination coefficient (-1)^excess * C(dim-1, excess)
        if excess >= dim {
            return;
        }
        let mut coeff = binomial_i64(dim - 1, excess) as f64;
        if excess % 2 == 1 {
            coeff = -coeff;
        }
        if coeff == 0.0 {
            return;
        }
        // tensor term over the per-axis rules
        let mut odo = vec![0usize; dim];
        let mut point = vec![0.0; dim];
        let mut done = false;
        while !done {
            let mut w = coeff;
            for d in 0..dim {
                let r = &one_d[levels[d] - 1];
                point[d] = r.node(odo[d])[0];
                w *= r.weight(odo[d]);
            }
            let key = quantize(&point);
            match merged.get_mut(&key) {
                Some(entry) => entry.1 += w,
                None => {
                    merged.insert(key, (point.clone(), w));
                }
            }
            done = true;
            for axis in (0..dim).rev() {
                odo[axis] += 1;
                if odo[axis] < one_d[levels[axis] - 1].len() {
                    done = false;
                    break;
                }
                odo[axis] = 0;
            }
        }
    });

    let mut nodes = Vec::with_capacity(merged.len() * dim);
    let mut weights = Vec::with_capacity(merged.len());
    for (_, (point, w)) in merged {
        nodes.extend_from_slice(&point);
        weights.push(w);
    }
    QuadratureRule::new(
        dim,
        nodes,
        weights,
        format!("uniform[-1,1]^{dim}"),
        Some(2 * level - 1),
    )
}

/// Visit every level vector with entries >= 1 and total at most `budget`.
fn enumerate_smolyak_terms(
    index: &mut [usize],
    slot: usize,
    budget: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    let remaining_axes = index.len() - slot - 1;
    let max_here = budget - remaining_axes; // later axes take at least 1 each
    for v in 1..=max_here {
        index[slot] = v;
        if slot + 1 == index.len() {
            visit(index);
        } else {
            enumerate_smolyak_terms(index, slot + 1, budget - v, visit);
        }
    }
}

fn binomial_i64(n: usize, k: usize) -> i64 {
    if k > n {
        return 0;
    }
    let mut acc: i64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i64 / (i + 1) as i64;
    }
    acc
}

/// Union of the node sets of several rules (1e-12 merge tolerance); weights of
/// coincident nodes are averaged across rules so the union still integrates
/// like the average of its members. Used to assemble candidate node sets.
pub fn union_candidate(rules: &[QuadratureRule], measure_tag: &str) -> Result<QuadratureRule> {
    if rules.is_empty() {
        return Err(Error::InvalidArgument("union of zero rules".into()));
    }
    let dim = rules[0].dim();
    if rules.iter().any(|r| r.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: 0,
            context: "union rule dimensions",
        });
    }
    let scale = 1.0 / rules.len() as f64;
    let mut merged: BTreeMap<Vec<i64>, (Vec<f64>, f64)> = BTreeMap::new();
    for r in rules {
        for k in 0..r.len() {
            let point = r.node(k).to_vec();
            let key = quantize(&point);
            match merged.get_mut(&key) {
                Some(e) => e.1 += scale * r.weight(k),
                None => {
                    merged.insert(key, (point, scale * r.weight(k)));
                }
            }
        }
    }
    let mut nodes = Vec::with_capacity(merged.len() * dim);
    let mut weights = Vec::with_capacity(merged.len());
    for (_, (p, w)) in merged {
        nodes.extend_from_slice(&p);
        weights.push(w);
    }
    let exactness = rules
        .iter()
        .map(|r| r.exactness_degree())
        .try_fold(u32::MAX, |acc, e| e.map(|v| acc.min(v)));
    QuadratureRule::new(dim, nodes, weights, measure_tag, exactness)
}

/// Transport a rule through a polynomial map: nodes are mapped, weights kept.
/// The result integrates with respect to the pushforward measure.
pub fn transform_rule(
    rule: &QuadratureRule,
    map: &PCExpansion,
    measure_tag: &str,
) -> Result<QuadratureRule> {
    if map.basis().dim() != rule.dim() {
        return Err(Error::DimensionMismatch {
            expected: rule.dim(),
            got: map.basis().dim(),
            context: "change-of-variables map input",
        });
    }
    let out_dim = map.width();
    let mut nodes = vec![0.0; rule.len() * out_dim];
    use rayon::prelude::*;
    nodes
        .par_chunks_mut(out_dim)
        .enumerate()
        .for_each(|(k, out)| {
            let v = map.eval(rule.node(k));
            out.copy_from_slice(v.as_slice());
        });
    QuadratureRule::new(out_dim, nodes, rule.weights().to_vec(), measure_tag, None)
}

/// Moment vector b_j = sum_k w_k pi_j(x_k) of a polynomial family under a
/// discrete measure.
pub fn moment_vector<F>(family: &F, measure: &DiscreteMeasure) -> DVector<f64>
where
    F: PolyFamily + Sync,
{
    let len = family.len();
    let sums = parallel::chunked_vec_sum(measure.len(), len, |k, buf| {
        let mut vals = vec![0.0; len];
        family.eval_into(measure.node(k), &mut vals);
        let w = measure.weight(k);
        for (b, v) in buf.iter_mut().zip(&vals) {
            *b += w * v;
        }
    });
    DVector::from_vec(sums)
}

/// Largest absolute error of the rule against reference moments:
/// max_j |sum_k w_k pi_j(x_k) - b_j|.
pub fn exactness_residual<F>(
    rule: &QuadratureRule,
    reference_moments: &DVector<f64>,
    family: &F,
) -> f64
where
    F: PolyFamily + Sync,
{
    let applied = moment_vector(family, &rule.as_measure());
    (applied - reference_moments).abs().max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::PolyFamily;
    use crate::indices::enumerate_multiindices;
    use approx::assert_relative_eq;

    /// Exact uniform-probability moment of a monomial on [-1,1]^z.
    fn uniform_moment(beta: &[u32]) -> f64 {
        beta.iter()
            .map(|&e| {
                if e % 2 == 0 {
                    1.0 / (e as f64 + 1.0)
                } else {
                    0.0
                }
            })
            .product()
    }

    #[test]
    fn gl_one_point_is_midpoint() {
        let r = gauss_legendre_1d(1).unwrap();
        assert_eq!(r.node(0), &[0.0]);
        assert_eq!(r.weight(0), 1.0);
    }

    #[test]
    fn gl_two_point_matches_classical_values() {
        let r = gauss_legendre_1d(2).unwrap();
        let x = 1.0 / 3.0_f64.sqrt();
        assert_relative_eq!(r.node(0)[0], -x, epsilon = 1e-14);
        assert_relative_eq!(r.node(1)[0], x, epsilon = 1e-14);
        assert_relative_eq!(r.weight(0), 0.5, epsilon = 1e-14);
        assert_relative_eq!(r.weight(1), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn gl_five_integrates_degree_eight() {
        let r = gauss_legendre_1d(5).unwrap();
        let val = r.integrate(|x| x[0].powi(8));
        assert_relative_eq!(val, 1.0 / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn gl_exactness_boundary() {
        // degree 2n-1 exact, degree 2n not; the degree-2n error shrinks fast
        // with n, so the coarse > 1e-3 check only makes sense for small rules
        for n in 1..=5 {
            let r = gauss_legendre_1d(n).unwrap();
            let exact = r.integrate(|x| x[0].powi(2 * n as i32 - 1));
            assert!(exact.abs() <= 1e-12, "odd moment should vanish");
            let inexact = r.integrate(|x| x[0].powi(2 * n as i32));
            let truth = 1.0 / (2.0 * n as f64 + 1.0);
            assert!(
                (inexact - truth).abs() > 1e-3,
                "degree 2n should not be exact for n={n}"
            );
            // and every even degree below 2n is exact
            for d in (0..2 * n).step_by(2) {
                let v = r.integrate(|x| x[0].powi(d as i32));
                assert_relative_eq!(v, 1.0 / (d as f64 + 1.0), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn tensor_of_single_points() {
        let r1 = gauss_legendre_1d(1).unwrap();
        let t = tensor_rule(&[r1.clone(), r1]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.node(0), &[0.0, 0.0]);
        assert_eq!(t.weight(0), 1.0);
    }

    #[test]
    fn tensor_two_by_two() {
        let r = gauss_legendre_1d(2).unwrap();
        let t = tensor_rule(&[r.clone(), r]).unwrap();
        assert_eq!(t.len(), 4);
        for k in 0..4 {
            assert_relative_eq!(t.weight(k), 0.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn tensor_integrates_mixed_monomial() {
        let r = gauss_legendre_1d(3).unwrap();
        let t = tensor_rule(&[r.clone(), r]).unwrap();
        let val = t.integrate(|x| x[0].powi(2) * x[1].powi(4));
        assert_relative_eq!(val, (1.0 / 3.0) * (1.0 / 5.0), epsilon = 1e-12);
    }

    #[test]
    fn smolyak_collapses_in_one_dimension() {
        for level in 1..=5u32 {
            let s = smolyak_sparse_grid(1, level).unwrap();
            let g = gauss_legendre_1d(level as usize).unwrap();
            assert_eq!(s.len(), g.len());
            let mut s_nodes: Vec<f64> = (0..s.len()).map(|k| s.node(k)[0]).collect();
            let mut g_nodes: Vec<f64> = (0..g.len()).map(|k| g.node(k)[0]).collect();
            s_nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            g_nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in s_nodes.iter().zip(&g_nodes) {
                assert_relative_eq!(a, b, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn smolyak_2d_level_2_exact_to_degree_3() {
        let s = smolyak_sparse_grid(2, 2).unwrap();
        let set = enumerate_multiindices(2, 3).unwrap();
        for idx in set.indices() {
            let truth = uniform_moment(idx.entries());
            let approx = s.integrate(|x| {
                idx.entries()
                    .iter()
                    .enumerate()
                    .map(|(d, &e)| x[d].powi(e as i32))
                    .product()
            });
            assert_relative_eq!(approx, truth, epsilon = 1e-12);
        }
    }

    #[test]
    fn smolyak_10d_level_3_exact_to_degree_5() {
        let s = smolyak_sparse_grid(10, 3).unwrap();
        let set = enumerate_multiindices(10, 5).unwrap();
        let moments = moment_vector(&set, &s.as_measure());
        let mut worst = 0.0_f64;
        for (k, idx) in set.indices().iter().enumerate() {
            worst = worst.max((moments[k] - uniform_moment(idx.entries())).abs());
        }
        assert!(worst <= 1e-10, "worst moment error {worst}");
        assert_relative_eq!(s.weight_sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn smolyak_grids_nest_as_node_sets() {
        let lo = smolyak_sparse_grid(3, 2).unwrap();
        let hi = smolyak_sparse_grid(3, 3).unwrap();
        let keys: std::collections::BTreeSet<Vec<i64>> =
            (0..hi.len()).map(|k| quantize(hi.node(k))).collect();
        for k in 0..lo.len() {
            assert!(keys.contains(&quantize(lo.node(k))));
        }
    }

    #[test]
    fn exactness_residual_detects_failure_order() {
        let r = gauss_legendre_1d(2).unwrap();
        let set = enumerate_multiindices(1, 4).unwrap();
        let reference = DVector::from_vec(
            set.indices()
                .iter()
                .map(|i| uniform_moment(i.entries()))
                .collect::<Vec<_>>(),
        );
        let res = exactness_residual(&r, &reference, &set);
        // x^4: rule gives 1/9, truth 1/5 -> residual 4/45
        assert_relative_eq!(res, 4.0 / 45.0, epsilon = 1e-12);
    }

    #[test]
    fn rule_is_self_consistent_against_its_own_moments() {
        let s = smolyak_sparse_grid(2, 3).unwrap();
        let set = enumerate_multiindices(2, 5).unwrap();
        let own = moment_vector(&set, &s.as_measure());
        assert!(exactness_residual(&s, &own, &set) <= 1e-10);
    }

    #[test]
    fn union_merges_shared_nodes() {
        let a = gauss_legendre_1d(3).unwrap();
        let b = gauss_legendre_1d(5).unwrap();
        // both contain x = 0
        let u = union_candidate(&[a, b], "uniform[-1,1]").unwrap();
        assert_eq!(u.len(), 3 + 5 - 1);
        assert_relative_eq!(u.weight_sum(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn moment_vector_of_constant_is_one() {
        let s = smolyak_sparse_grid(2, 2).unwrap();
        let set = enumerate_multiindices(2, 0).unwrap();
        let m = moment_vector(&set, &s.as_measure());
        assert_relative_eq!(m[0], 1.0, epsilon = 1e-13);
    }
}
