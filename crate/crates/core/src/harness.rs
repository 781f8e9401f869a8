//! Time loop with per-step diagnostics, and mesh-refinement studies.

use thiserror::Error;

use crate::diagnostics::{self, EnergyLedger};
use crate::manufactured::Solution;
use crate::mesh::{Mesh, MeshError};
use crate::scheme::{self, SchemeConfig, StepError, StepProblem, StepState, Variant};
use crate::solver::{scaled_norm, LinearSolver, NonlinearSystem, SolveReport, SolverConfig};
use crate::thermo::PressureLaw;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: StepError,
    },
    #[error("manufactured velocity does not vanish on the boundary (max |V| = {0:e})")]
    Boundary(f64),
    #[error("invalid run parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

impl RunError {
    /// Step index of a failed step, if the failure happened in the time loop.
    pub fn step(&self) -> Option<usize> {
        match self {
            RunError::Step { step, .. } => Some(*step),
            _ => None,
        }
    }
}

/// Everything needed to run one simulation on a given mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub law: PressureLaw,
    pub scheme: SchemeConfig,
    pub solver: SolverConfig,
    pub solution: Solution,
    pub steps: usize,
}

/// Number of steps and step size covering `[0, t_end]` with step at most `dt_max`.
pub fn time_grid(t_end: f64, dt_max: f64) -> (usize, f64) {
    let n = (t_end / dt_max - 1e-9).ceil().max(1.0) as usize;
    (n, t_end / n as f64)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub ledger: EnergyLedger,
    pub final_state: StepState,
    pub reports: Vec<SolveReport>,
    /// Smallest density over all converged steps.
    pub min_density: f64,
    /// `sup_n` of the pointwise relative energy against the exact solution.
    pub sup_relative_energy: f64,
    /// `dt sum_n int |grad_h u^n - grad V(t_n)|^2`.
    pub gradient_error: f64,
}

impl RunOutcome {
    /// The error functional: sup relative energy plus cumulative gradient error.
    pub fn error_functional(&self) -> f64 {
        self.sup_relative_energy + self.gradient_error
    }

    pub fn total_iterations(&self) -> usize {
        self.reports.iter().map(|r| r.iterations()).sum()
    }
}

/// Runs `spec.steps` implicit steps from the projected initial data,
/// calling `observe` after every accepted step (and once for the initial
/// state).
pub fn simulate<F>(mesh: &Mesh, spec: &RunSpec, observe: F) -> Result<RunOutcome, RunError>
where
    F: FnMut(&StepState, &RunProgress),
{
    simulate_from(mesh, spec, spec.solution.initial_state(mesh), observe)
}

/// [`simulate`] from given initial data. Errors are still measured against
/// `spec.solution`.
pub fn simulate_from<F>(mesh: &Mesh, spec: &RunSpec, initial: StepState, mut observe: F) -> Result<RunOutcome, RunError>
where
    F: FnMut(&StepState, &RunProgress),
{
    spec.solver.validate().map_err(RunError::Invalid)?;
    if initial.rho.len() != mesh.num_cells() || initial.u.values.len() != mesh.num_faces() {
        return Err(RunError::Invalid("initial state does not match the mesh".into()));
    }
    if let Some(c) = initial.rho.values.iter().position(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(RunError::Invalid(format!("initial density in cell {c} is not positive")));
    }
    if spec.steps == 0 {
        return Err(RunError::Invalid("at least one step is required".into()));
    }
    let boundary = spec.solution.max_boundary_velocity(spec.scheme.dt * spec.steps as f64, 24)
        .max(spec.solution.max_boundary_velocity(0.5 * spec.scheme.dt * spec.steps as f64, 24));
    if boundary > 1e-12 {
        return Err(RunError::Boundary(boundary));
    }
    let law = &spec.law;
    let cfg = &spec.scheme;
    let sol = &spec.solution;
    let mut state = initial;
    let (r0, v0) = sol.project(mesh, 0.0);
    let rel0 = diagnostics::relative_energy(mesh, law, &state, &r0, &v0).expect("positive reference");
    let (pt0, _) = pointwise_error(mesh, law, &state, sol, 0.0);
    let mut ledger = EnergyLedger::start(mesh, law, &state, 0.0, rel0, pt0);
    let mut progress = RunProgress {
        step: 0,
        time: 0.0,
        m1_functional: pt0,
    };
    observe(&state, &progress);

    let mut reports = Vec::with_capacity(spec.steps);
    let mut sup_rel: f64 = 0.0;
    let mut grad_cum = 0.0;
    let mut min_density = state.rho.min();
    let mut lin = LinearSolver::default();
    for n in 1..=spec.steps {
        let t = n as f64 * cfg.dt;
        let sources = sol.sources(mesh, law, cfg.mu, t);
        let scales = scheme::reference_scales(mesh, law, &state);
        let (next, report) = scheme::advance_with(mesh, law, cfg, &state, &sources, &spec.solver, scales, &mut lin)
            .map_err(|source| RunError::Step { step: n, source })?;
        let (r, v) = sol.project(mesh, t);
        let rel = diagnostics::relative_energy(mesh, law, &next, &r, &v).expect("positive reference");
        let (pt, grad) = pointwise_error(mesh, law, &next, sol, t);
        sup_rel = sup_rel.max(pt);
        grad_cum += cfg.dt * grad;
        min_density = min_density.min(next.rho.min());
        ledger.record(mesh, law, cfg, &state, &next, &sources, t, rel, sup_rel + grad_cum);
        progress = RunProgress {
            step: n,
            time: t,
            m1_functional: sup_rel + grad_cum,
        };
        observe(&next, &progress);
        reports.push(report);
        state = next;
    }
    Ok(RunOutcome {
        ledger,
        final_state: state,
        reports,
        min_density,
        sup_relative_energy: sup_rel,
        gradient_error: grad_cum,
    })
}

/// Position in the time loop handed to observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunProgress {
    pub step: usize,
    pub time: f64,
    pub m1_functional: f64,
}

fn pointwise_error(mesh: &Mesh, law: &PressureLaw, state: &StepState, sol: &Solution, t: f64) -> (f64, f64) {
    diagnostics::error_functional_step(
        mesh,
        law,
        state,
        |x| sol.density(t, x),
        |x| sol.velocity(t, x),
        |x| sol.velocity_grad(t, x),
    )
}

/// Scaled residual of the exact solution's projections inserted into one
/// step `t - dt -> t`.
pub fn consistency_residual(mesh: &Mesh, spec: &RunSpec, t: f64) -> f64 {
    let sol = &spec.solution;
    let dt = spec.scheme.dt;
    let (r0, v0) = sol.project(mesh, t - dt);
    let prev = StepState::new(mesh, r0, v0);
    let (r1, v1) = sol.project(mesh, t);
    let cur = StepState::new(mesh, r1, v1);
    let sources = sol.sources(mesh, &spec.law, spec.scheme.mu, t);
    let scales = scheme::reference_scales(mesh, &spec.law, &prev);
    let problem = StepProblem::new(mesh, &spec.law, &spec.scheme, &prev, &sources, scales.0, scales.1);
    let x = problem.pack(&cur);
    scaled_norm(&problem.residual(&x), problem.row_scaling())
}

/// How the time step follows the mesh size in a refinement study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtRule {
    /// `dt <= c h^2`.
    Quadratic(f64),
    /// `dt <= c h`.
    Linear(f64),
}

impl DtRule {
    pub fn max_step(&self, h: f64) -> f64 {
        match *self {
            DtRule::Quadratic(c) => c * h * h,
            DtRule::Linear(c) => c * h,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub law: PressureLaw,
    pub mu: f64,
    pub variant: Variant,
    pub epsilon: f64,
    pub solver: SolverConfig,
    pub solution: Solution,
    pub t_end: f64,
    pub levels: Vec<usize>,
    pub dt_rule: DtRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    pub sup_relative_energy: f64,
    pub gradient_error: f64,
    pub error_functional: f64,
    pub iterations: usize,
    pub max_mass_drift: f64,
    pub max_energy_defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    /// Observed orders of the error functional between consecutive levels;
    /// `None` when the errors are at round-off level on every mesh.
    pub eoc: Option<Vec<f64>>,
    pub theoretical_rate: f64,
}

impl StudyTable {
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error_functional < w[0].error_functional)
    }
}

/// Runs every level of the study and tabulates the error functional.
pub fn convergence_study(spec: &StudySpec) -> Result<StudyTable, RunError> {
    if spec.levels.len() < 3 {
        return Err(RunError::Invalid("a study needs at least three mesh levels".into()));
    }
    if spec.levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RunError::Invalid("mesh levels must increase".into()));
    }
    let mut rows = Vec::with_capacity(spec.levels.len());
    for &n in &spec.levels {
        let mesh = Mesh::unit_cube(n)?;
        let h = mesh.h();
        let (steps, dt) = time_grid(spec.t_end, spec.dt_rule.max_step(h));
        let scheme = SchemeConfig::new(dt, spec.mu, spec.variant, spec.epsilon)
            .map_err(|e| RunError::Invalid(e.to_string()))?;
        let run = RunSpec {
            law: spec.law,
            scheme,
            solver: spec.solver.clone(),
            solution: spec.solution,
            steps,
        };
        let out = simulate(&mesh, &run, |_, _| {})?;
        rows.push(StudyRow {
            n,
            h,
            dt,
            steps,
            sup_relative_energy: out.sup_relative_energy,
            gradient_error: out.gradient_error,
            error_functional: out.error_functional(),
            iterations: out.total_iterations(),
            max_mass_drift: out.ledger.mass_drift().into_iter().fold(0.0, f64::max),
            max_energy_defect: out.ledger.energy_defects().into_iter().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    let errors: Vec<f64> = rows.iter().map(|r| r.error_functional).collect();
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let eoc = if errors.iter().all(|&e| e < 1e-12) {
        None
    } else {
        diagnostics::eoc(&errors, &hs).ok()
    };
    let theoretical_rate = match spec.variant {
        Variant::Standard => spec.law.rate_exponent(),
        _ => spec.law.rate_exponent_stabilized(spec.epsilon),
    };
    Ok(StudyTable {
        rows,
        eoc,
        theoretical_rate,
    })
}
