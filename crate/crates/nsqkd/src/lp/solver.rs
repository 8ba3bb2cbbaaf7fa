//! Two-phase primal simplex for box-constrained equality-form LPs.
//!
//! The instances here are small (at most 48 structural variables, 52 rows)
//! and mostly box constraints, so the solver works directly with
//! bounded-variable states instead of converting bounds to rows: a
//! nonbasic variable sits at its lower or upper bound, and the basis stays
//! at the row dimension. All arithmetic is dense; the basis matrix is
//! refactorized (LU with partial pivoting) every iteration, which is cheap
//! at this size and avoids accumulated update error.
//!
//! Determinism: entering variable by Bland's rule (smallest eligible
//! index), leaving variable by smallest ratio with ties broken by smallest
//! variable index. Identical instances therefore produce identical bases
//! and bit-identical primal vectors. An iteration cap guards against
//! cycling bugs; with Bland's rule it should never trigger, so hitting it
//! is reported as a hard error rather than a status.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::instance::{dot, InstanceError, LpInstance};

/// Feasibility tolerance on bounds and equality residuals.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Reduced-cost tolerance for declaring optimality.
pub const OPTIMALITY_TOL: f64 = 1e-8;
/// Pivot elements smaller than this in magnitude are rejected.
pub const PIVOT_TOL: f64 = 1e-10;
/// Iteration cap; a tripwire for cycling bugs, not a tuning knob.
pub const MAX_ITERATIONS: usize = 100_000;

/// Absolute tie window in the ratio test.
const RATIO_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: FEASIBILITY_TOL,
            optimality_tol: OPTIMALITY_TOL,
            pivot_tol: PIVOT_TOL,
            max_iterations: MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Where a variable sits in the final basis partition. Variables whose
/// bound interval has zero width are first-class `Fixed` (they can never
/// enter the basis), which is how degenerate endpoint instances are
/// handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    Fixed,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: SolveStatus,
    /// Objective value including the constant term. `NaN` when infeasible.
    pub value: f64,
    pub primal: Vec<f64>,
    /// One multiplier per equality row.
    pub dual_eq: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub basis: Vec<VarStatus>,
    pub iterations: usize,
    /// Equality rows that could not be satisfied, when infeasible.
    pub infeasible_rows: Vec<usize>,
}

impl LpSolution {
    /// Serialize to the documented dump schema
    /// `{status, value, primal, dual_eq, reduced_costs, basis, iterations}`.
    pub fn to_dump_json(&self) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            status: SolveStatus,
            value: f64,
            primal: &'a [f64],
            dual_eq: &'a [f64],
            reduced_costs: &'a [f64],
            basis: &'a [VarStatus],
            iterations: usize,
        }
        serde_json::to_string_pretty(&Dump {
            status: self.status,
            value: self.value,
            primal: &self.primal,
            dual_eq: &self.dual_eq,
            reduced_costs: &self.reduced_costs,
            basis: &self.basis,
            iterations: self.iterations,
        })
        .expect("solution serialization")
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("iteration limit {limit} exceeded; this indicates a cycling bug")]
    IterationLimit { limit: usize },
    #[error("basis matrix became numerically singular")]
    SingularBasis,
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
    #[error("bad parameter grid: {0}")]
    Grid(String),
}

/// Solve with default tolerances.
pub fn solve(inst: &LpInstance) -> Result<LpSolution, SolveError> {
    solve_with(inst, &SolverOptions::default())
}

pub fn solve_with(inst: &LpInstance, opts: &SolverOptions) -> Result<LpSolution, SolveError> {
    inst.validate()?;
    let n = inst.num_vars();
    let m = inst.equalities.len();

    // Column-major constraint matrix, structural columns first.
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| inst.equalities.iter().map(|row| row.coeffs[j]).collect())
        .collect();
    let b: Vec<f64> = inst.equalities.iter().map(|row| row.rhs).collect();
    let mut lower = inst.lower.clone();
    let mut upper = inst.upper.clone();
    let mut state = vec![State::Lower; n];

    // Residual of each row at the all-at-lower-bound starting point; each
    // row gets one artificial variable oriented to absorb it.
    let mut residual = b.clone();
    for (j, col) in cols.iter().enumerate().take(n) {
        if lower[j] != 0.0 {
            for i in 0..m {
                residual[i] -= col[i] * lower[j];
            }
        }
    }
    let mut basis = Vec::with_capacity(m);
    for (i, &r) in residual.iter().enumerate() {
        let mut col = vec![0.0; m];
        col[i] = if r >= 0.0 { 1.0 } else { -1.0 };
        cols.push(col);
        lower.push(0.0);
        upper.push(f64::INFINITY);
        state.push(State::Basic);
        basis.push(n + i);
    }

    let mut simplex = Simplex {
        m,
        n_total: n + m,
        cols,
        b,
        lower,
        upper,
        state,
        basis,
        iterations: 0,
        opts: *opts,
    };

    // Phase 1: drive the total artificial mass to zero.
    let mut phase1_obj = vec![0.0; n + m];
    for c in phase1_obj.iter_mut().skip(n) {
        *c = -1.0;
    }
    let exit = simplex.run(&phase1_obj)?;
    let Exit::Optimal { basic_values, .. } = exit else {
        return Err(SolveError::Numerical("phase 1 reported unbounded"));
    };
    let mut infeasibility = 0.0;
    let mut infeasible_rows = Vec::new();
    for (row, &var) in simplex.basis.iter().enumerate() {
        if var >= n && basic_values[row] > 0.0 {
            infeasibility += basic_values[row];
            if basic_values[row] > opts.feasibility_tol {
                infeasible_rows.push(var - n);
            }
        }
    }
    if infeasibility > opts.feasibility_tol {
        infeasible_rows.sort_unstable();
        log::debug!("infeasible after {} iterations, mass {infeasibility:.3e}", simplex.iterations);
        return Ok(LpSolution {
            status: SolveStatus::Infeasible,
            value: f64::NAN,
            primal: simplex.structural_point(&basic_values, n),
            dual_eq: Vec::new(),
            reduced_costs: Vec::new(),
            basis: simplex.public_basis(n),
            iterations: simplex.iterations,
            infeasible_rows,
        });
    }

    // Phase 2: artificials are pinned to zero (they may stay basic at
    // zero level on redundant rows) and the real objective takes over.
    for j in n..n + m {
        simplex.upper[j] = 0.0;
    }
    let mut phase2_obj = vec![0.0; n + m];
    phase2_obj[..n].copy_from_slice(&inst.objective.coeffs);
    match simplex.run(&phase2_obj)? {
        Exit::Unbounded => Ok(LpSolution {
            status: SolveStatus::Unbounded,
            value: f64::INFINITY,
            primal: Vec::new(),
            dual_eq: Vec::new(),
            reduced_costs: Vec::new(),
            basis: simplex.public_basis(n),
            iterations: simplex.iterations,
            infeasible_rows: Vec::new(),
        }),
        Exit::Optimal { basic_values, duals, reduced_costs } => {
            let primal = simplex.structural_point(&basic_values, n);
            let value = dot(&inst.objective.coeffs, &primal) + inst.objective.constant;
            log::debug!(
                "optimal {value:.12} after {} iterations ({} rows, {} vars)",
                simplex.iterations,
                m,
                n
            );
            Ok(LpSolution {
                status: SolveStatus::Optimal,
                value,
                primal,
                dual_eq: duals,
                reduced_costs: reduced_costs[..n].to_vec(),
                basis: simplex.public_basis(n),
                iterations: simplex.iterations,
                infeasible_rows: Vec::new(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
}

enum Exit {
    Optimal { basic_values: Vec<f64>, duals: Vec<f64>, reduced_costs: Vec<f64> },
    Unbounded,
}

struct Simplex {
    m: usize,
    n_total: usize,
    cols: Vec<Vec<f64>>,
    b: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    iterations: usize,
    opts: SolverOptions,
}

impl Simplex {
    fn run(&mut self, obj: &[f64]) -> Result<Exit, SolveError> {
        loop {
            if self.iterations > self.opts.max_iterations {
                return Err(SolveError::IterationLimit { limit: self.opts.max_iterations });
            }
            let lu = Lu::factor(self.m, &self.cols, &self.basis, self.opts.pivot_tol)?;
            let basic_values = self.basic_values(&lu);

            let basic_costs: Vec<f64> = self.basis.iter().map(|&j| obj[j]).collect();
            let duals = lu.solve_transpose(&basic_costs);
            let mut reduced_costs = vec![0.0; self.n_total];
            for j in 0..self.n_total {
                if self.state[j] != State::Basic {
                    reduced_costs[j] = obj[j] - dot(&duals, &self.cols[j]);
                }
            }

            // Bland: smallest-index nonbasic variable that improves the
            // maximization. Fixed variables never qualify.
            let entering = (0..self.n_total).find(|&j| {
                if self.lower[j] >= self.upper[j] {
                    return false;
                }
                match self.state[j] {
                    State::Basic => false,
                    State::Lower => reduced_costs[j] > self.opts.optimality_tol,
                    State::Upper => reduced_costs[j] < -self.opts.optimality_tol,
                }
            });
            let Some(q) = entering else {
                return Ok(Exit::Optimal { basic_values, duals, reduced_costs });
            };

            // Moving q off its bound by step t changes basic variable i by
            // -direction * t * w[i].
            let direction = if self.state[q] == State::Lower { 1.0 } else { -1.0 };
            let w = lu.solve(&self.cols[q]);

            let mut best_step = self.upper[q] - self.lower[q]; // bound-flip step
            let mut leaving: Option<(usize, bool)> = None; // (row, leaves at upper)
            let mut leaving_var = usize::MAX;
            for i in 0..self.m {
                let rate = direction * w[i];
                let var = self.basis[i];
                let (step, hits_upper) = if rate > self.opts.pivot_tol {
                    ((basic_values[i] - self.lower[var]) / rate, false)
                } else if rate < -self.opts.pivot_tol {
                    ((self.upper[var] - basic_values[i]) / -rate, true)
                } else {
                    continue;
                };
                if !step.is_finite() {
                    continue;
                }
                let step = step.max(0.0);
                let take = step < best_step - RATIO_TIE_TOL
                    || (step <= best_step + RATIO_TIE_TOL && leaving.is_some() && var < leaving_var);
                if take {
                    best_step = best_step.min(step);
                    leaving = Some((i, hits_upper));
                    leaving_var = var;
                }
            }

            if best_step.is_infinite() {
                return Ok(Exit::Unbounded);
            }
            match leaving {
                None => {
                    // The entering variable reaches its other bound first.
                    self.state[q] =
                        if self.state[q] == State::Lower { State::Upper } else { State::Lower };
                }
                Some((row, hits_upper)) => {
                    let out = self.basis[row];
                    self.state[out] = if hits_upper { State::Upper } else { State::Lower };
                    self.state[q] = State::Basic;
                    self.basis[row] = q;
                }
            }
            self.iterations += 1;
        }
    }

    /// Values of the basic variables at the current bound assignment.
    fn basic_values(&self, lu: &Lu) -> Vec<f64> {
        let mut rhs = self.b.clone();
        for j in 0..self.n_total {
            let value = match self.state[j] {
                State::Basic => continue,
                State::Lower => self.lower[j],
                State::Upper => self.upper[j],
            };
            if value != 0.0 {
                for i in 0..self.m {
                    rhs[i] -= self.cols[j][i] * value;
                }
            }
        }
        lu.solve(&rhs)
    }

    /// The structural part of the current point.
    fn structural_point(&self, basic_values: &[f64], n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for j in 0..n {
            x[j] = match self.state[j] {
                State::Basic => 0.0, // filled below
                State::Lower => self.lower[j],
                State::Upper => self.upper[j],
            };
        }
        for (row, &var) in self.basis.iter().enumerate() {
            if var < n {
                x[var] = basic_values[row];
            }
        }
        x
    }

    fn public_basis(&self, n: usize) -> Vec<VarStatus> {
        (0..n)
            .map(|j| match self.state[j] {
                State::Basic => VarStatus::Basic,
                State::Upper => VarStatus::AtUpper,
                State::Lower if self.lower[j] == self.upper[j] => VarStatus::Fixed,
                State::Lower => VarStatus::AtLower,
            })
            .collect()
    }
}

/// Dense LU factorization with partial pivoting of the current basis
/// matrix, refreshed every iteration.
struct Lu {
    m: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl Lu {
    fn factor(m: usize, cols: &[Vec<f64>], basis: &[usize], pivot_tol: f64) -> Result<Self, SolveError> {
        let mut a = vec![0.0; m * m];
        for (k, &var) in basis.iter().enumerate() {
            for i in 0..m {
                a[i * m + k] = cols[var][i];
            }
        }
        let mut piv = vec![0; m];
        for k in 0..m {
            let mut pivot_row = k;
            let mut best = a[k * m + k].abs();
            for i in k + 1..m {
                let v = a[i * m + k].abs();
                if v > best {
                    best = v;
                    pivot_row = i;
                }
            }
            if best <= pivot_tol {
                return Err(SolveError::SingularBasis);
            }
            piv[k] = pivot_row;
            if pivot_row != k {
                for j in 0..m {
                    a.swap(k * m + j, pivot_row * m + j);
                }
            }
            let inv = 1.0 / a[k * m + k];
            for i in k + 1..m {
                let factor = a[i * m + k] * inv;
                a[i * m + k] = factor;
                if factor != 0.0 {
                    for j in k + 1..m {
                        a[i * m + j] -= factor * a[k * m + j];
                    }
                }
            }
        }
        Ok(Self { m, a, piv })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut x = rhs.to_vec();
        for k in 0..m {
            x.swap(k, self.piv[k]);
        }
        for i in 0..m {
            let mut s = x[i];
            for k in 0..i {
                s -= self.a[i * m + k] * x[k];
            }
            x[i] = s;
        }
        for i in (0..m).rev() {
            let mut s = x[i];
            for k in i + 1..m {
                s -= self.a[i * m + k] * x[k];
            }
            x[i] = s / self.a[i * m + i];
        }
        x
    }

    /// Solve with the transposed basis matrix (for duals).
    fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut x = rhs.to_vec();
        for i in 0..m {
            let mut s = x[i];
            for k in 0..i {
                s -= self.a[k * m + i] * x[k];
            }
            x[i] = s / self.a[i * m + i];
        }
        for i in (0..m).rev() {
            let mut s = x[i];
            for k in i + 1..m {
                s -= self.a[k * m + i] * x[k];
            }
            x[i] = s;
        }
        for k in (0..m).rev() {
            x.swap(k, self.piv[k]);
        }
        x
    }
}

/// Sanity report for a family of instances whose right-hand sides are
/// affine in a scalar parameter: the optimal value of a maximization LP is
/// then concave in the parameter, and for this protocol family it is also
/// non-increasing.
#[derive(Debug, Clone)]
pub struct ConcavityReport {
    pub checked_triples: usize,
    /// Interior grid points whose value dips below the chord through the
    /// neighbors by more than the tolerance, with the defect.
    pub concavity_violations: Vec<(f64, f64)>,
    /// Grid points where the value increases by more than the tolerance,
    /// with the increase.
    pub monotonicity_violations: Vec<(f64, f64)>,
    pub tolerance: f64,
}

impl ConcavityReport {
    pub fn passed(&self) -> bool {
        self.concavity_violations.is_empty() && self.monotonicity_violations.is_empty()
    }
}

/// Check midpoint concavity and monotone non-increase of optimal values on
/// an ascending parameter grid. `points` are `(parameter, optimal value)`
/// pairs; at least three are required. Violations signal a solver or
/// builder bug, so they are collected into the report rather than raised.
pub fn parametric_concavity_check(points: &[(f64, f64)]) -> Result<ConcavityReport, SolveError> {
    const TOL: f64 = 1e-8;
    if points.len() < 3 {
        return Err(SolveError::Grid(format!("need at least 3 grid points, got {}", points.len())));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(SolveError::Grid("grid parameters must be strictly ascending".into()));
    }

    let mut concavity_violations = Vec::new();
    let mut monotonicity_violations = Vec::new();
    for window in points.windows(3) {
        let [(p0, v0), (p1, v1), (p2, v2)] = window else { unreachable!() };
        let chord = (v0 * (p2 - p1) + v2 * (p1 - p0)) / (p2 - p0);
        if *v1 < chord - TOL {
            concavity_violations.push((*p1, chord - v1));
        }
    }
    for window in points.windows(2) {
        let [(_, v0), (p1, v1)] = window else { unreachable!() };
        if *v1 > v0 + TOL {
            monotonicity_violations.push((*p1, v1 - v0));
        }
    }
    Ok(ConcavityReport {
        checked_triples: points.len() - 2,
        concavity_violations,
        monotonicity_violations,
        tolerance: TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::instance::{Equality, LpForm, Objective};

    fn box_lp(objective: Vec<f64>, equalities: Vec<Equality>, lower: Vec<f64>, upper: Vec<f64>) -> LpInstance {
        let n = objective.len();
        LpInstance {
            form: LpForm::Full,
            p: None,
            var_names: (0..n).map(|j| format!("u{j}")).collect(),
            objective: Objective { coeffs: objective, constant: 0.0 },
            equalities,
            lower,
            upper,
        }
    }

    #[test]
    fn single_variable_box() {
        let inst = box_lp(vec![1.0], vec![], vec![0.0], vec![0.75]);
        let sol = solve(&inst).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.value, 0.75);
        assert_eq!(sol.basis, vec![VarStatus::AtUpper]);
    }

    #[test]
    fn equality_saturated_pair() {
        let inst = box_lp(
            vec![1.0, 1.0],
            vec![Equality { coeffs: vec![1.0, 1.0], rhs: 0.5, label: "sum".into() }],
            vec![0.0; 2],
            vec![1.0; 2],
        );
        let sol = solve(&inst).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.value - 0.5).abs() < 1e-12);
        assert!(inst.is_feasible(&sol.primal, 1e-12));
    }

    #[test]
    fn detects_infeasible_row() {
        let inst = box_lp(
            vec![1.0, 0.0],
            vec![Equality { coeffs: vec![1.0, 1.0], rhs: 3.0, label: "sum".into() }],
            vec![0.0; 2],
            vec![1.0; 2],
        );
        let sol = solve(&inst).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert_eq!(sol.infeasible_rows, vec![0]);
        assert!(sol.value.is_nan());
    }

    #[test]
    fn respects_negative_lower_bounds() {
        // minimize disguised as maximize of -(u0)
        let inst = box_lp(vec![-1.0], vec![], vec![-2.0], vec![5.0]);
        let sol = solve(&inst).unwrap();
        assert_eq!(sol.value, 2.0);
        assert_eq!(sol.primal, vec![-2.0]);
    }

    #[test]
    fn handles_fixed_variables() {
        let inst = box_lp(
            vec![1.0, 1.0],
            vec![Equality { coeffs: vec![1.0, -1.0], rhs: 0.25, label: "gap".into() }],
            vec![0.0, 0.25],
            vec![1.0, 0.25],
        );
        let sol = solve(&inst).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.value - 0.75).abs() < 1e-12);
        assert_eq!(sol.basis[1], VarStatus::Fixed);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        // The same row twice: one artificial stays basic at zero.
        let row = Equality { coeffs: vec![1.0, 1.0], rhs: 1.0, label: "sum".into() };
        let inst = box_lp(vec![1.0, 2.0], vec![row.clone(), row], vec![0.0; 2], vec![1.0; 2]);
        let sol = solve(&inst).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.value - 2.0).abs() < 1e-12);
        assert!((sol.primal[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solutions_are_bit_identical_across_runs() {
        let inst = box_lp(
            vec![1.0, -0.5, 0.25],
            vec![Equality { coeffs: vec![1.0, 1.0, 1.0], rhs: 1.2, label: "sum".into() }],
            vec![0.0; 3],
            vec![1.0; 3],
        );
        let a = solve(&inst).unwrap();
        let b = solve(&inst).unwrap();
        assert_eq!(a.primal, b.primal);
        assert_eq!(a.basis, b.basis);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn concavity_check_flags_a_dent() {
        let good = [(0.0, 1.0), (0.5, 1.0), (1.0, 0.8)];
        assert!(parametric_concavity_check(&good).unwrap().passed());

        let dented = [(0.0, 1.0), (0.5, 0.7), (1.0, 0.8)];
        let report = parametric_concavity_check(&dented).unwrap();
        assert_eq!(report.concavity_violations.len(), 1);
        assert_eq!(report.monotonicity_violations.len(), 1);

        assert!(matches!(
            parametric_concavity_check(&[(0.0, 1.0), (1.0, 1.0)]),
            Err(SolveError::Grid(_))
        ));
        assert!(matches!(
            parametric_concavity_check(&[(0.0, 1.0), (0.0, 1.0), (1.0, 1.0)]),
            Err(SolveError::Grid(_))
        ));
    }
}
