//! Dense bounded-variable revised simplex.
//!
//! Solves min c^T x subject to A x = b and l <= x <= u with finite lower
//! bounds and optionally infinite upper bounds. Two phases: artificial
//! variables establish feasibility, then the original costs are optimized.
//! All pivot choices are tie-broken by smallest index, so solves are
//! deterministic; after a run of degenerate pivots the pricing falls back to
//! Bland's rule, which excludes cycling.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

const REDUCED_COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
// bounded infeasibility admitted by the two-pass ratio test; must stay well
// below the feasibility tolerances of callers
const RATIO_RELAX: f64 = 1e-10;
const REFACTOR_EVERY: usize = 60;
const DEGENERATE_RUN_FOR_BLAND: usize = 40;
const MAX_ITERATIONS: usize = 200_000;

#[derive(Debug, Clone)]
pub struct LpProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub costs: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>, // f64::INFINITY for unbounded
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: DVector<f64>,
    /// Equality multipliers (simplex duals) y with y^T b equal to the
    /// objective at optimality.
    pub y: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Column indices of the final basis.
    pub basis: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize), // row in the basis
    AtLower,
    AtUpper,
}

struct Tableau {
    a: DMatrix<f64>,
    b: DVector<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
    m: usize,
    n: usize, // includes artificials
    n_real: usize,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    x: DVector<f64>,
    pivots_since_refactor: usize,
    degenerate_run: usize,
    iterations: usize,
}

impl Tableau {
    fn new(problem: &LpProblem) -> Result<Self> {
        let m = problem.a.nrows();
        let n_real = problem.a.ncols();
        if problem.b.len() != m
            || problem.costs.len() != n_real
            || problem.lower.len() != n_real
            || problem.upper.len() != n_real
        {
            return Err(Error::InvalidArgument("inconsistent LP dimensions".into()));
        }
        for j in 0..n_real {
            if !problem.lower[j].is_finite() || problem.upper[j] < problem.lower[j] {
                return Err(Error::InvalidArgument(format!(
                    "invalid bounds on LP variable {j}"
                )));
            }
        }
        let n = n_real + m;
        // start all real variables at their (finite) lower bound
        let mut a = DMatrix::zeros(m, n);
        a.view_mut((0, 0), (m, n_real)).copy_from(&problem.a);
        let mut lower = DVector::zeros(n);
        let mut upper = DVector::from_element(n, f64::INFINITY);
        lower.rows_mut(0, n_real).copy_from(&problem.lower);
        upper.rows_mut(0, n_real).copy_from(&problem.upper);

        // residual the artificials must cover
        let residual = &problem.b - &problem.a * &problem.lower;
        // artificial columns: +/- identity so artificial values start >= 0
        let mut binv = DMatrix::identity(m, m);
        for i in 0..m {
            let sign = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
            a[(i, n_real + i)] = sign;
            binv[(i, i)] = sign; // the initial basis matrix is its own inverse
        }

        let mut state = vec![VarState::AtLower; n];
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            state[n_real + i] = VarState::Basic(i);
            basis.push(n_real + i);
        }
        let mut x = DVector::zeros(n);
        x.rows_mut(0, n_real).copy_from(&problem.lower);
        for i in 0..m {
            x[n_real + i] = residual[i].abs();
        }

        Ok(Self {
            a,
            b: problem.b.clone(),

            lower,
            upper,
            m,
            n,
            n_real,
            state,
            basis,
            binv,
            x,
            pivots_since_refactor: 0,
            degenerate_run: 0,
            iterations: 0,
        })
    }

    fn refactor(&mut self) -> Result<()> {
        let mut bmat = DMatrix::zeros(self.m, self.m);
        for (row, &j) in self.basis.iter().enumerate() {
            bmat.set_column(row, &self.a.column(j));
        }
        self.binv = bmat
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular simplex basis".into()))?;
        // recompute basic values from the nonbasic ones
        let mut rhs = self.b.clone();
        for j in 0..self.n {
            if let VarState::Basic(_) = self.state[j] {
                continue;
            }
            if self.x[j] != 0.0 {
                rhs.axpy(-self.x[j], &self.a.column(j).into_owned(), 1.0);
            }
        }
        let xb = &self.binv * rhs;
        for (row, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[row];
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    fn duals(&self, phase_costs: &DVector<f64>) -> DVector<f64> {
        let mut cb = DVector::zeros(self.m);
        for (row, &j) in self.basis.iter().enumerate() {
            cb[row] = phase_costs[j];
        }
        self.binv.tr_mul(&cb)
    }

    /// One simplex phase on the given costs; returns the phase objective.
    fn optimize(&mut self, phase_costs: &DVector<f64>) -> Result<f64> {
        loop {
            self.iterations += 1;
            if self.iterations > MAX_ITERATIONS {
                return Err(Error::Numerical("simplex iteration limit reached".into()));
            }
            let y = self.duals(phase_costs);
            let reduced = self.a.tr_mul(&y);
            let use_bland = self.degenerate_run >= DEGENERATE_RUN_FOR_BLAND;

            // entering variable: largest reduced-cost violation, ties and the
            // Bland fallback both resolved by smallest column index
            let mut entering: Option<(usize, f64, bool)> = None; // (col, violation, increase)
            for j in 0..self.n {
                if self.upper[j] - self.lower[j] <= 0.0 {
                    continue; // fixed variable
                }
                let (violation, increase) = match self.state[j] {
                    VarState::Basic(_) => continue,
                    VarState::AtLower => (-(phase_costs[j] - reduced[j]), true),
                    VarState::AtUpper => (phase_costs[j] - reduced[j], false),
                };
                if violation <= REDUCED_COST_TOL {
                    continue;
                }
                if use_bland {
                    entering = Some((j, violation, increase));
                    break;
                }
                if entering.map(|(_, best, _)| violation > best).unwrap_or(true) {
                    entering = Some((j, violation, increase));
                }
            }
            let Some((enter, _, increase)) = entering else {
                let obj = (0..self.n).map(|j| phase_costs[j] * self.x[j]).sum();
                return Ok(obj);
            };

            // direction of basic variables as the entering one moves by +t
            let w = &self.binv * self.a.column(enter).into_owned();
            let dir = if increase { 1.0 } else { -1.0 };

            // two-pass (Harris) ratio test: pass one finds the tightest step
            // under a small bound relaxation, pass two picks the largest
            // pivot among the rows within that step, which both limits
            // degenerate stalling and keeps the basis well conditioned
            let span = self.upper[enter] - self.lower[enter];
            let row_limit = |row: usize| -> Option<(f64, f64, bool)> {
                let delta = -dir * w[row]; // change of basic value per unit t
                let jb = self.basis[row];
                if delta < -PIVOT_TOL {
                    Some(((self.x[jb] - self.lower[jb]).max(0.0), -delta, false))
                } else if delta > PIVOT_TOL && self.upper[jb].is_finite() {
                    Some(((self.upper[jb] - self.x[jb]).max(0.0), delta, true))
                } else {
                    None
                }
            };
            let mut t_relaxed = span;
            for row in 0..self.m {
                if let Some((room, d_abs, _)) = row_limit(row) {
                    let t = (room + RATIO_RELAX) / d_abs;
                    if t < t_relaxed {
                        t_relaxed = t;
                    }
                }
            }
            let mut t_max = span;
            let mut leaving: Option<(usize, bool)> = None; // (row, leaves_at_upper)
            let mut best_pivot = 0.0;
            for row in 0..self.m {
                if let Some((room, d_abs, at_upper)) = row_limit(row) {
                    let t = room / d_abs;
                    if t <= t_relaxed && d_abs > best_pivot {
                        best_pivot = d_abs;
                        t_max = t;
                        leaving = Some((row, at_upper));
                    }
                }
            }
            if leaving.is_none() {
                t_max = span;
            }

            if !t_max.is_finite() {
                return Err(Error::Numerical("unbounded linear program".into()));
            }
            self.degenerate_run = if t_max <= PIVOT_TOL {
                self.degenerate_run + 1
            } else {
                0
            };

            // apply the step
            let step = dir * t_max;
            self.x[enter] += step;
            for row in 0..self.m {
                let jb = self.basis[row];
                self.x[jb] -= w[row] * step;
            }

            match leaving {
                None => {
                    // bound flip: entering moves across to its other bound
                    self.state[enter] = if increase {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                }
                Some((row, leaves_at_upper)) => {
                    let leave = self.basis[row];
                    self.state[leave] = if leaves_at_upper {
                        self.x[leave] = self.upper[leave];
                        VarState::AtUpper
                    } else {
                        self.x[leave] = self.lower[leave];
                        VarState::AtLower
                    };
                    self.basis[row] = enter;
                    self.state[enter] = VarState::Basic(row);
                    self.update_binv(row, &w)?;
                }
            }

            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }
    }

    /// Adopt a caller-provided basis of real columns; returns false when the
    /// induced basic solution is out of bounds or the basis is singular.
    fn try_install_basis(&mut self, basis: &[usize], tol: f64) -> bool {
        if basis.len() != self.m {
            return false;
        }
        let mut seen = vec![false; self.n_real];
        for &j in basis {
            if j >= self.n_real || seen[j] {
                return false;
            }
            seen[j] = true;
        }
        // everything nonbasic rests at its lower bound; artificials are fixed
        for j in 0..self.n {
            self.state[j] = VarState::AtLower;
            self.x[j] = if j < self.n_real { self.lower[j] } else { 0.0 };
        }
        for j in self.n_real..self.n {
            self.lower[j] = 0.0;
            self.upper[j] = 0.0;
        }
        self.basis = basis.to_vec();
        for (row, &j) in basis.iter().enumerate() {
            self.state[j] = VarState::Basic(row);
        }
        if self.refactor().is_err() {
            return false;
        }
        let slack = tol.max(1e-12);
        for &j in basis {
            if self.x[j] < self.lower[j] - slack || self.x[j] > self.upper[j] + slack {
                return false;
            }
        }
        true
    }

    /// Elementary (eta) update of the basis inverse after replacing the
    /// variable in `row`; `w` is B^{-1} times the entering column.
    fn update_binv(&mut self, row: usize, w: &DVector<f64>) -> Result<()> {
        let pivot = w[row];
        if pivot.abs() < PIVOT_TOL {
            return self.refactor();
        }
        let inv_pivot = 1.0 / pivot;
        let pivot_row = self.binv.row(row).into_owned();
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let factor = w[i] * inv_pivot;
            if factor != 0.0 {
                for k in 0..self.m {
                    self.binv[(i, k)] -= factor * pivot_row[k];
                }
            }
        }
        for k in 0..self.m {
            self.binv[(row, k)] = pivot_row[k] * inv_pivot;
        }
        self.pivots_since_refactor += 1;
        Ok(())
    }
}

/// Solve the bounded-variable LP. The feasibility tolerance applies to the
/// phase-1 objective (total artificial mass).
pub fn solve(problem: &LpProblem, feasibility_tol: f64) -> Result<LpSolution> {
    solve_from(problem, feasibility_tol, None)
}

/// Solve with an optional crash basis (column indices into the real
/// variables). A basis whose basic solution respects the bounds skips phase
/// one entirely; otherwise the solver silently falls back to the artificial
/// start.
pub fn solve_from(
    problem: &LpProblem,
    feasibility_tol: f64,
    initial_basis: Option<&[usize]>,
) -> Result<LpSolution> {
    let mut t = Tableau::new(problem)?;

    let mut feasible = false;
    if let Some(basis) = initial_basis {
        feasible = t.try_install_basis(basis, feasibility_tol);
        if !feasible {
            t = Tableau::new(problem)?;
        }
    }

    if !feasible {
        // phase 1: minimize the artificial mass
        let mut phase1 = DVector::zeros(t.n);
        for j in t.n_real..t.n {
            phase1[j] = 1.0;
        }
        let infeas = t.optimize(&phase1)?;
        if infeas > feasibility_tol.max(1e-12) {
            return Err(Error::Infeasible(format!(
                "phase-1 objective {infeas:.3e} exceeds tolerance"
            )));
        }
    }
    // pin artificials to zero for phase 2 (basic ones may stay at level zero)
    for j in t.n_real..t.n {
        t.upper[j] = 0.0;
        if !matches!(t.state[j], VarState::Basic(_)) {
            t.x[j] = 0.0;
            t.lower[j] = 0.0;
            t.state[j] = VarState::AtLower;
        } else {
            t.lower[j] = 0.0;
        }
    }

    // phase 2
    let mut phase2 = DVector::zeros(t.n);
    phase2.rows_mut(0, t.n_real).copy_from(&problem.costs);
    let objective = t.optimize(&phase2)?;
    t.refactor()?;
    let y = t.duals(&phase2);
    let x = DVector::from_fn(t.n_real, |j, _| t.x[j]);

    Ok(LpSolution {
        x,
        y,
        objective,
        iterations: t.iterations,
        basis: t.basis.clone(),
    })
}
