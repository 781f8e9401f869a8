//! Nonlinear solve of one implicit step and the sparse linear-solve contract.
//!
//! The outer iteration starts with Picard steps (advecting quantities and
//! upwind directions frozen) and finishes with damped Newton steps on the
//! frozen-upwind Jacobian. Linear systems are factorized with a sparse LU.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMat, Triplet};
use thiserror::Error;

use crate::sparse::{CsrMatrix, TripletBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linearization {
    Picard,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    /// Column-colored forward differences of the residual.
    FiniteDifference,
    /// Analytic derivative with upwind directions frozen.
    AnalyticFrozenUpwind,
}

impl std::str::FromStr for JacobianMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" | "analytic_frozen_upwind" => Ok(JacobianMode::AnalyticFrozenUpwind),
            "fd" | "finite_difference" => Ok(JacobianMode::FiniteDifference),
            other => Err(format!("unknown jacobian mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Target for the scaled residual infinity norm.
    pub nonlinear_tol: f64,
    pub max_picard: usize,
    pub max_newton: usize,
    pub linear_tol: f64,
    pub linear_max_iter: usize,
    pub jacobian_mode: JacobianMode,
    /// Initial step length of each update, in `(0, 1]`.
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            nonlinear_tol: 1e-10,
            max_picard: 2,
            max_newton: 30,
            linear_tol: 1e-10,
            linear_max_iter: 2,
            jacobian_mode: JacobianMode::AnalyticFrozenUpwind,
            damping: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.nonlinear_tol > 0.0 && self.linear_tol > 0.0) {
            return Err("solver tolerances must be positive".into());
        }
        if self.max_picard + self.max_newton == 0 || self.linear_max_iter == 0 {
            return Err("solver iteration budgets must be at least 1".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("nonlinear solve did not converge after {iterations} iterations (scaled residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("linear solve failed: relative residual {residual:e}")]
    LinearSolveFailure { residual: f64 },
    #[error("singular matrix: {detail}")]
    Singular { row: Option<usize>, detail: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub picard_iterations: usize,
    pub newton_iterations: usize,
    /// Scaled residual norm before each iteration and after the last one.
    pub history: Vec<f64>,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.picard_iterations + self.newton_iterations
    }

    pub fn final_residual(&self) -> f64 {
        *self.history.last().unwrap_or(&0.0)
    }
}

pub trait NonlinearSystem {
    fn dim(&self) -> usize;
    fn residual(&self, x: &[f64]) -> Vec<f64>;
    fn jacobian(&self, x: &[f64], kind: Linearization) -> CsrMatrix;
    /// Multipliers applied to residual rows before the tolerance test.
    fn row_scaling(&self) -> &[f64];
    /// Whether `x` is an acceptable iterate.
    fn admissible(&self, _x: &[f64]) -> bool {
        true
    }
}

/// Forces single-threaded factorizations so repeated runs are bitwise
/// identical; `false` restores the default thread pool.
pub fn set_deterministic(on: bool) {
    faer::set_global_parallelism(if on { faer::Par::Seq } else { faer::Par::rayon(0) });
}

pub fn scaled_norm(r: &[f64], scaling: &[f64]) -> f64 {
    r.iter()
        .zip(scaling)
        .map(|(r, s)| (r * s).abs())
        .fold(0.0, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `matrix * x = rhs` by sparse LU with iterative refinement.
pub fn linear_solve(matrix: &CsrMatrix, rhs: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>, SolverError> {
    LinearSolver::default().solve(matrix, rhs, cfg)
}

/// Sparse LU solver that reuses the symbolic analysis while the sparsity
/// pattern stays the same.
#[derive(Default)]
pub struct LinearSolver {
    cached: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
}

impl LinearSolver {
    pub fn solve(&mut self, matrix: &CsrMatrix, rhs: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>, SolverError> {
        assert_eq!(matrix.rows, matrix.cols, "linear_solve needs a square matrix");
        assert_eq!(rhs.len(), matrix.rows);
        let n = matrix.rows;
        if let Some(row) = matrix.find_zero_row() {
            return Err(SolverError::Singular {
                row: Some(row),
                detail: format!("row {row} is identically zero"),
            });
        }
        let b_norm = norm2(rhs);
        if b_norm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut triplets = Vec::with_capacity(matrix.nnz());
        for r in 0..n {
            for (c, v) in matrix.row(r) {
                triplets.push(Triplet::new(r, c, v));
            }
        }
        let csc = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets).map_err(|e| SolverError::Singular {
            row: None,
            detail: format!("could not build the sparse matrix: {e:?}"),
        })?;
        let reuse = matches!(&self.cached, Some((p, i, _)) if *p == matrix.row_ptr && *i == matrix.col_idx);
        if !reuse {
            let symbolic = SymbolicLu::try_new(csc.symbolic()).map_err(|e| SolverError::Singular {
                row: None,
                detail: format!("symbolic factorization failed: {e:?}"),
            })?;
            self.cached = Some((matrix.row_ptr.clone(), matrix.col_idx.clone(), symbolic));
        }
        let symbolic = self.cached.as_ref().unwrap().2.clone();
        let lu = Lu::try_new_with_symbolic(symbolic, csc.as_ref()).map_err(|e| match e {
            LuError::SymbolicSingular { index } => SolverError::Singular {
                row: Some(index),
                detail: format!("no pivot available at elimination step {index}"),
            },
            other => SolverError::Singular {
                row: None,
                detail: format!("{other:?}"),
            },
        })?;
        let mut x = vec![0.0; n];
        let mut residual: Vec<f64> = rhs.to_vec();
        let mut rel = 1.0;
        for _ in 0..cfg.linear_max_iter.max(1) {
            let b = Col::<f64>::from_fn(n, |i| residual[i]);
            let dx = lu.solve(&b);
            for i in 0..n {
                x[i] += dx[i];
            }
            let ax = matrix.mul_vec(&x);
            for i in 0..n {
                residual[i] = rhs[i] - ax[i];
            }
            rel = norm2(&residual) / b_norm;
            if !rel.is_finite() {
                return Err(SolverError::Singular {
                    row: None,
                    detail: "factorization produced non-finite values".into(),
                });
            }
            if rel <= cfg.linear_tol {
                return Ok(x);
            }
        }
        Err(SolverError::LinearSolveFailure { residual: rel })
    }
}

/// Greedy coloring of the columns of `pattern` so that no two columns of
/// one color share a row.
pub fn color_columns(pattern: &CsrMatrix) -> Vec<usize> {
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); pattern.cols];
    for r in 0..pattern.rows {
        for (c, _) in pattern.row(r) {
            col_rows[c].push(r);
        }
    }
    let mut colors = vec![usize::MAX; pattern.cols];
    let mut row_colors: Vec<Vec<usize>> = vec![Vec::new(); pattern.rows];
    let mut forbidden: Vec<usize> = Vec::new();
    for c in 0..pattern.cols {
        forbidden.clear();
        for &r in &col_rows[c] {
            forbidden.extend_from_slice(&row_colors[r]);
        }
        forbidden.sort_unstable();
        forbidden.dedup();
        let mut color = 0;
        for &f in &forbidden {
            if f == color {
                color += 1;
            } else if f > color {
                break;
            }
        }
        colors[c] = color;
        for &r in &col_rows[c] {
            row_colors[r].push(color);
        }
    }
    colors
}

/// Forward-difference Jacobian on the structure of `pattern`.
pub fn fd_jacobian<F: Fn(&[f64]) -> Vec<f64>>(residual: F, x: &[f64], pattern: &CsrMatrix) -> CsrMatrix {
    let colors = color_columns(pattern);
    let ncolors = colors.iter().copied().max().map_or(0, |m| m + 1);
    let r0 = residual(x);
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); pattern.cols];
    for r in 0..pattern.rows {
        for (c, _) in pattern.row(r) {
            col_rows[c].push(r);
        }
    }
    let steps: Vec<f64> = x.iter().map(|&v| 1e-7 * v.abs().max(1.0)).collect();
    let mut out = TripletBuilder::with_capacity(pattern.rows, pattern.cols, pattern.nnz());
    for color in 0..ncolors {
        let mut xp = x.to_vec();
        for c in (0..x.len()).filter(|&c| colors[c] == color) {
            xp[c] += steps[c];
        }
        let rp = residual(&xp);
        for c in (0..x.len()).filter(|&c| colors[c] == color) {
            for &r in &col_rows[c] {
                out.add(r, c, (rp[r] - r0[r]) / steps[c]);
            }
        }
    }
    out.build()
}

/// Drives the scaled residual of `system` below `cfg.nonlinear_tol`.
pub fn solve_step<S: NonlinearSystem>(
    system: &S,
    initial_guess: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    solve_step_with(system, initial_guess, cfg, &mut LinearSolver::default())
}

/// [`solve_step`] with a caller-owned linear solver, so the symbolic
/// factorization carries over between calls.
pub fn solve_step_with<S: NonlinearSystem>(
    system: &S,
    initial_guess: &[f64],
    cfg: &SolverConfig,
    lin: &mut LinearSolver,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    let scaling = system.row_scaling();
    let mut x = initial_guess.to_vec();
    let mut r = system.residual(&x);
    let mut norm = scaled_norm(&r, scaling);
    let mut report = SolveReport {
        history: vec![norm],
        ..SolveReport::default()
    };
    let budget = cfg.max_picard + cfg.max_newton;
    while norm > cfg.nonlinear_tol || norm.is_nan() {
        if report.iterations() >= budget || norm.is_nan() {
            return Err(SolverError::NonConvergence {
                iterations: report.iterations(),
                residual: norm,
                history: report.history,
            });
        }
        let kind = if report.picard_iterations < cfg.max_picard {
            Linearization::Picard
        } else {
            Linearization::Newton
        };
        let jac = match (kind, cfg.jacobian_mode) {
            (Linearization::Newton, JacobianMode::FiniteDifference) => {
                let pattern = system.jacobian(&x, Linearization::Newton);
                fd_jacobian(|y| system.residual(y), &x, &pattern)
            }
            _ => system.jacobian(&x, kind),
        };
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = lin.solve(&jac, &rhs, cfg)?;

        // backtracking: keep positivity, prefer decrease of the scaled norm
        let mut lambda = cfg.damping;
        let mut accepted = None;
        let mut fallback = None;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + lambda * d).collect();
            if system.admissible(&trial) {
                let rt = system.residual(&trial);
                let nt = scaled_norm(&rt, scaling);
                if nt < (1.0 - 1e-4 * lambda) * norm {
                    accepted = Some((trial, rt, nt));
                    break;
                }
                if fallback.is_none() && nt.is_finite() {
                    fallback = Some((trial, rt, nt));
                }
            }
            lambda *= 0.5;
        }
        // a Picard step may fail to decrease the residual; Newton takes over
        let step = match (accepted, kind) {
            (Some(s), _) => Some(s),
            (None, Linearization::Picard) => None,
            (None, Linearization::Newton) => fallback,
        };
        match kind {
            Linearization::Picard => report.picard_iterations += 1,
            Linearization::Newton => report.newton_iterations += 1,
        }
        if kind == Linearization::Picard && step.is_none() {
            report.picard_iterations = cfg.max_picard.max(report.picard_iterations);
            report.history.push(norm);
            continue;
        }
        let Some((xt, rt, nt)) = step else {
            return Err(SolverError::NonConvergence {
                iterations: report.iterations(),
                residual: norm,
                history: report.history,
            });
        };
        x = xt;
        r = rt;
        norm = nt;
        report.history.push(norm);
    }
    Ok((x, report))
}
