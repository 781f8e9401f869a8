//! File-producing drivers behind the command line: `run`, `study`, `check`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cnsfv_core::diagnostics::{self, EnergyLedger, LEDGER_COLUMNS};
use cnsfv_core::harness::{self, RunError, RunOutcome, RunSpec, StudySpec, StudyTable};
use cnsfv_core::manufactured::Solution;
use cnsfv_core::scheme::{self, Sources};
use cnsfv_core::solver::{self, SolverConfig};
use cnsfv_core::{Mesh, PressureLaw, SchemeConfig, StepState, Variant};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, MeshSource, RunConfig};
use crate::msh::{self, MshError};
use crate::state::{self, StateError};
use crate::vtk;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: ConfigError,
    },
    #[error("{path}: {source}")]
    Msh {
        path: PathBuf,
        #[source]
        source: MshError,
    },
    #[error("{path}: {source}")]
    State {
        path: PathBuf,
        #[source]
        source: StateError,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("run finished but invariants failed: {0}")]
    Invariant(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), AppError> {
    fs::write(path, contents).map_err(io_err(path))
}

pub fn load_config(path: &Path) -> Result<RunConfig, AppError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    RunConfig::parse(&text).map_err(|source| AppError::Config {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_mesh(source: &MeshSource) -> Result<Mesh, AppError> {
    match source {
        MeshSource::Structured(n) => Mesh::unit_cube(*n).map_err(|e| AppError::Invalid(e.to_string())),
        MeshSource::File(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            msh::read_msh(&text).map_err(|source| AppError::Msh {
                path: path.clone(),
                source,
            })
        }
    }
}

pub fn load_state(mesh: &Mesh, path: &Path) -> Result<StepState, AppError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    state::read_state(mesh, &text).map_err(|source| AppError::State {
        path: path.to_path_buf(),
        source,
    })
}

pub fn ledger_csv(ledger: &EnergyLedger) -> String {
    let mut s = LEDGER_COLUMNS.join(",");
    s.push('\n');
    for row in &ledger.rows {
        let vals: Vec<String> = row.values().iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&vals.join(","));
        s.push('\n');
    }
    s
}

/// Runtime checks applied to every finished run.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct InvariantReport {
    pub max_mass_drift: f64,
    pub min_density: f64,
    pub max_energy_defect: f64,
    pub energy_slack: f64,
    pub min_dissipation: f64,
    pub passed: bool,
}

pub const MASS_TOLERANCE: f64 = 1e-11;

/// Energy slack per step: ten times the scaled nonlinear tolerance.
pub fn energy_slack(solver: &SolverConfig) -> f64 {
    10.0 * solver.nonlinear_tol
}

pub fn check_invariants(out: &RunOutcome, solver: &SolverConfig) -> InvariantReport {
    let ledger = &out.ledger;
    let max_mass_drift = ledger.mass_drift().into_iter().fold(0.0, f64::max);
    let slack = energy_slack(solver);
    let max_energy_defect = ledger
        .energy_defects()
        .iter()
        .enumerate()
        .map(|(m, d)| d - m as f64 * slack)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_dissipation = ledger
        .rows
        .windows(2)
        .flat_map(|w| {
            [
                w[1].viscous_cum - w[0].viscous_cum,
                w[1].d_time_u - w[0].d_time_u,
                w[1].d_space_u - w[0].d_space_u,
                w[1].stab_dissipation - w[0].stab_dissipation,
            ]
        })
        .fold(f64::INFINITY, f64::min);
    InvariantReport {
        max_mass_drift,
        min_density: out.min_density,
        max_energy_defect,
        energy_slack: slack,
        min_dissipation,
        passed: max_mass_drift <= MASS_TOLERANCE
            && out.min_density > 0.0
            && max_energy_defect <= 0.0
            && min_dissipation >= 0.0,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub status: &'static str,
    pub solution: &'static str,
    pub variant: &'static str,
    pub cells: usize,
    pub interior_faces: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    pub t_end: f64,
    pub nonlinear_iterations: usize,
    pub sup_relative_energy: f64,
    pub gradient_error: f64,
    pub error_functional: f64,
    pub invariants: InvariantReport,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureRecord {
    pub status: &'static str,
    pub step: Option<usize>,
    pub reason: String,
}

fn run_spec(cfg: &RunConfig) -> Result<RunSpec, AppError> {
    let law = cfg.law().map_err(|e| AppError::Invalid(e.to_string()))?;
    let (steps, dt) = harness::time_grid(cfg.t_end, cfg.dt);
    let scheme = SchemeConfig::new(dt, cfg.mu, cfg.variant, cfg.epsilon).map_err(|e| AppError::Invalid(e.to_string()))?;
    Ok(RunSpec {
        law,
        scheme,
        solver: cfg.solver.clone(),
        solution: cfg.solution,
        steps,
    })
}

/// Runs one simulation and writes `ledger.csv`, `summary.json` and VTK
/// files into `cfg.out_dir`. A failed run leaves `failure.json` instead.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, AppError> {
    solver::set_deterministic(cfg.deterministic);
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mesh = load_mesh(&cfg.mesh)?;
    let mut spec = run_spec(cfg)?;
    let initial = match &cfg.initial {
        Some(path) => {
            let init = load_state(&mesh, path)?;
            // errors are measured against the rest state of equal mass
            let rho0 = diagnostics::total_mass(&mesh, &init.rho) / mesh.total_volume();
            spec.solution = Solution::Rest { rho0 };
            init
        }
        None => spec.solution.initial_state(&mesh),
    };
    let started = Instant::now();
    let mut io_error = None;
    let every = cfg.vtk_every;
    let last = spec.steps;
    let result = harness::simulate_from(&mesh, &spec, initial, |state, progress| {
        let wanted = progress.step == last || (every > 0 && progress.step % every == 0);
        if wanted && io_error.is_none() {
            if let Err(e) = write_vtk_pair(dir, &mesh, state, progress.step) {
                io_error = Some(e);
            }
        }
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    let out = match result {
        Ok(out) => out,
        Err(e) => {
            let record = FailureRecord {
                status: "failed",
                step: e.step(),
                reason: e.to_string(),
            };
            write_file(&dir.join("failure.json"), &serde_json::to_string_pretty(&record).unwrap())?;
            return Err(e.into());
        }
    };
    write_file(&dir.join("ledger.csv"), &ledger_csv(&out.ledger))?;
    write_file(&dir.join("final_state.txt"), &state::write_state(&mesh, &out.final_state))?;
    let invariants = check_invariants(&out, &spec.solver);
    let summary = RunSummary {
        status: if invariants.passed { "ok" } else { "invariant_failure" },
        solution: spec.solution.name(),
        variant: spec.scheme.variant.name(),
        cells: mesh.num_cells(),
        interior_faces: mesh.num_interior_faces(),
        h: mesh.h(),
        dt: spec.scheme.dt,
        steps: spec.steps,
        t_end: cfg.t_end,
        nonlinear_iterations: out.total_iterations(),
        sup_relative_energy: out.sup_relative_energy,
        gradient_error: out.gradient_error,
        error_functional: out.error_functional(),
        invariants,
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    write_file(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary).unwrap())?;
    if !summary.invariants.passed {
        return Err(AppError::Invariant(format!("{:?}", summary.invariants)));
    }
    Ok(summary)
}

fn write_vtk_pair(dir: &Path, mesh: &Mesh, state: &StepState, step: usize) -> Result<(), AppError> {
    let title = format!("step {step}");
    write_file(&dir.join(format!("state_{step:05}.vtk")), &vtk::cells_vtk(mesh, state, &title))?;
    write_file(&dir.join(format!("faces_{step:05}.vtk")), &vtk::faces_vtk(mesh, state, &title))
}

pub fn study_csv(table: &StudyTable) -> String {
    let mut s = String::from("n,h,dt,steps,sup_rel_energy,gradient_error,error_functional,eoc,iterations\n");
    for (i, r) in table.rows.iter().enumerate() {
        let eoc = match (&table.eoc, i) {
            (Some(e), i) if i > 0 => format!("{:.4}", e[i - 1]),
            _ => String::new(),
        };
        writeln!(
            s,
            "{},{:e},{:e},{},{:e},{:e},{:e},{},{}",
            r.n, r.h, r.dt, r.steps, r.sup_relative_energy, r.gradient_error, r.error_functional, eoc, r.iterations
        )
        .unwrap();
    }
    s
}

#[derive(Debug, Clone, Serialize)]
struct StudySummary<'a> {
    levels: Vec<usize>,
    error_functional: Vec<f64>,
    eoc: &'a Option<Vec<f64>>,
    eoc_meaningful: bool,
    theoretical_rate: f64,
    monotone: bool,
}

/// Runs the mesh family `cfg.levels` on the unit cube; writes `study.csv`
/// and `study.json`.
pub fn study(cfg: &RunConfig) -> Result<StudyTable, AppError> {
    solver::set_deterministic(cfg.deterministic);
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let spec = StudySpec {
        law: cfg.law().map_err(|e| AppError::Invalid(e.to_string()))?,
        mu: cfg.mu,
        variant: cfg.variant,
        epsilon: cfg.epsilon,
        solver: cfg.solver.clone(),
        solution: cfg.solution,
        t_end: cfg.t_end,
        levels: cfg.levels.clone(),
        dt_rule: cfg.dt_rule(),
    };
    let table = harness::convergence_study(&spec)?;
    write_file(&dir.join("study.csv"), &study_csv(&table))?;
    let summary = StudySummary {
        levels: table.rows.iter().map(|r| r.n).collect(),
        error_functional: table.rows.iter().map(|r| r.error_functional).collect(),
        eoc: &table.eoc,
        eoc_meaningful: table.eoc.is_some(),
        theoretical_rate: table.theoretical_rate,
        monotone: table.monotone(),
    };
    write_file(&dir.join("study.json"), &serde_json::to_string_pretty(&summary).unwrap())?;
    Ok(table)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> CheckOutcome {
        CheckOutcome {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Quick invariant suite on small meshes: rest fixed point, short runs of
/// every variant, boundary compatibility, and source consistency.
pub fn check(cfg: &RunConfig) -> Result<Vec<CheckOutcome>, AppError> {
    solver::set_deterministic(cfg.deterministic);
    let law = cfg.law().map_err(|e| AppError::Invalid(e.to_string()))?;
    let mut out = Vec::new();

    let mesh = Mesh::unit_cube(2).map_err(|e| AppError::Invalid(e.to_string()))?;
    let rest = StepState::rest(&mesh, 1.0);
    let scheme_cfg = SchemeConfig::new(0.05, cfg.mu, Variant::Standard, 0.0).unwrap();
    let (next, report) = scheme::advance(&mesh, &law, &scheme_cfg, &rest, &Sources::zero(&mesh), &cfg.solver, (1.0, 1.0))
        .map_err(|e| AppError::Invalid(e.to_string()))?;
    let diff = next
        .rho
        .values
        .iter()
        .zip(&rest.rho.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    out.push(CheckOutcome::new(
        "rest state is stationary",
        diff <= 1e-12 && report.iterations() == 0,
        format!("max density change {diff:e}, {} iterations", report.iterations()),
    ));

    let boundary = Solution::Mms1.max_boundary_velocity(0.7, 24);
    out.push(CheckOutcome::new(
        "manufactured velocity vanishes on the boundary",
        boundary <= 1e-12,
        format!("max |V| = {boundary:e}"),
    ));

    for variant in [Variant::Standard, Variant::Stabilized, Variant::ModifiedUpwind] {
        let spec = RunSpec {
            law,
            scheme: SchemeConfig::new(0.02, cfg.mu, variant, cfg.epsilon).map_err(|e| AppError::Invalid(e.to_string()))?,
            solver: cfg.solver.clone(),
            solution: Solution::Mms1,
            steps: 5,
        };
        let run = harness::simulate(&mesh, &spec, |_, _| {})?;
        let inv = check_invariants(&run, &cfg.solver);
        out.push(CheckOutcome::new(
            &format!("{} run keeps mass, positivity and energy", variant.name()),
            inv.passed,
            format!(
                "mass drift {:e}, min density {:.6}, energy defect {:e}",
                inv.max_mass_drift, inv.min_density, inv.max_energy_defect
            ),
        ));
    }

    let mut residuals = Vec::new();
    for n in [2, 4] {
        let m = Mesh::unit_cube(n).map_err(|e| AppError::Invalid(e.to_string()))?;
        let h = m.h();
        let spec = RunSpec {
            law,
            scheme: SchemeConfig::new(0.1 * h, cfg.mu, Variant::Standard, 0.0).unwrap(),
            solver: cfg.solver.clone(),
            solution: Solution::Mms1,
            steps: 1,
        };
        residuals.push(harness::consistency_residual(&m, &spec, 0.5));
    }
    out.push(CheckOutcome::new(
        "exact solution residual decreases under refinement",
        residuals[1] < residuals[0],
        format!("scaled residuals {:e} -> {:e}", residuals[0], residuals[1]),
    ));
    Ok(out)
}

/// Law used when no configuration is given.
pub fn default_law() -> PressureLaw {
    PressureLaw::new(1.0, 1.0, 2.0).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_is_documented_order() {
        let mesh = Mesh::unit_cube(1).unwrap();
        let state = StepState::rest(&mesh, 1.0);
        let ledger = EnergyLedger::start(&mesh, &default_law(), &state, 0.0, 0.0, 0.0);
        let csv = ledger_csv(&ledger);
        let header = csv.lines().next().unwrap();
        assert!(header.starts_with(
            "time,mass,kinetic,internal,viscous_cum,D_time_u,D_space_u,rel_energy,m1_functional"
        ));
        assert_eq!(csv.lines().count(), 2);
    }
}
