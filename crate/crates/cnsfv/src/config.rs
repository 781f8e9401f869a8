//! Flat `key = value` run configuration.
//!
//! Recognized keys (all optional, defaults in [`RunConfig::default`]):
//!
//! | key | meaning |
//! |-----|---------|
//! | `mesh.n` | subdivisions per axis of the structured unit cube |
//! | `mesh.file` | Gmsh MSH 2.2 ASCII file; overrides `mesh.n` |
//! | `law.a_lin`, `law.b`, `law.gamma` | pressure `a_lin rho + b rho^gamma` |
//! | `scheme.dt`, `scheme.mu` | time step bound and viscosity |
//! | `scheme.variant` | `standard`, `stabilized` or `modified_upwind` |
//! | `scheme.epsilon` | exponent in `h^(1-epsilon)` |
//! | `solver.tol`, `solver.max_picard`, `solver.max_newton` | nonlinear solve |
//! | `solver.linear_tol`, `solver.linear_max_iter` | linear solve |
//! | `solver.jacobian` | `analytic` or `fd` |
//! | `solver.damping` | initial step length in `(0, 1]` |
//! | `run.t_end` | final time; the step is shrunk to divide it evenly |
//! | `run.solution` | `rest` or `mms1` |
//! | `run.rest_density` | density of the rest state |
//! | `run.initial` | initial state file (see [`crate::state`]); needs `run.solution = rest` |
//! | `run.deterministic` | single-threaded linear algebra |
//! | `study.levels` | comma-separated mesh levels |
//! | `study.dt_rule` | `h2` or `h` |
//! | `study.dt_factor` | constant in `dt <= c h^2` or `dt <= c h` |
//! | `out.dir` | output directory |
//! | `out.vtk_every` | VTK output period in steps, 0 for the final state only |

use std::fmt::Write as _;
use std::path::PathBuf;

use cnsfv_core::harness::DtRule;
use cnsfv_core::manufactured::Solution;
use cnsfv_core::solver::{JacobianMode, SolverConfig};
use cnsfv_core::{PressureLaw, SchemeConfig, Variant};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Structured(usize),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtRuleKind {
    Quadratic,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub a_lin: f64,
    pub b: f64,
    pub gamma: f64,
    pub dt: f64,
    pub mu: f64,
    pub variant: Variant,
    pub epsilon: f64,
    pub solver: SolverConfig,
    pub t_end: f64,
    pub solution: Solution,
    /// File-defined initial data replacing the projected solution.
    pub initial: Option<PathBuf>,
    pub deterministic: bool,
    pub levels: Vec<usize>,
    pub dt_rule: DtRuleKind,
    pub dt_factor: f64,
    pub out_dir: PathBuf,
    pub vtk_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh: MeshSource::Structured(4),
            a_lin: 1.0,
            b: 1.0,
            gamma: 2.0,
            dt: 0.05,
            mu: 1.0,
            variant: Variant::Standard,
            epsilon: 0.0,
            solver: SolverConfig::default(),
            t_end: 1.0,
            solution: Solution::Mms1,
            initial: None,
            deterministic: true,
            levels: vec![2, 4, 8],
            dt_rule: DtRuleKind::Quadratic,
            dt_factor: 1.0,
            out_dir: PathBuf::from("out"),
            vtk_every: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError {
        line,
        message: format!("`{key}` expects a number, got `{value}`"),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError {
            line,
            message: format!("`{key}` expects true or false, got `{value}`"),
        }),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut rest_density = 1.0;
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError {
                    line,
                    message: format!("expected `key = value`, got `{content}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let err = |message: String| ConfigError { line, message };
            match key {
                "mesh.n" => cfg.mesh = MeshSource::Structured(parse_num(line, key, value)?),
                "mesh.file" => cfg.mesh = MeshSource::File(PathBuf::from(value)),
                "law.a_lin" => cfg.a_lin = parse_num(line, key, value)?,
                "law.b" => cfg.b = parse_num(line, key, value)?,
                "law.gamma" => cfg.gamma = parse_num(line, key, value)?,
                "scheme.dt" => cfg.dt = parse_num(line, key, value)?,
                "scheme.mu" => cfg.mu = parse_num(line, key, value)?,
                "scheme.variant" => cfg.variant = value.parse().map_err(err)?,
                "scheme.epsilon" => cfg.epsilon = parse_num(line, key, value)?,
                "solver.tol" => cfg.solver.nonlinear_tol = parse_num(line, key, value)?,
                "solver.max_picard" => cfg.solver.max_picard = parse_num(line, key, value)?,
                "solver.max_newton" => cfg.solver.max_newton = parse_num(line, key, value)?,
                "solver.linear_tol" => cfg.solver.linear_tol = parse_num(line, key, value)?,
                "solver.linear_max_iter" => cfg.solver.linear_max_iter = parse_num(line, key, value)?,
                "solver.jacobian" => cfg.solver.jacobian_mode = value.parse().map_err(err)?,
                "solver.damping" => cfg.solver.damping = parse_num(line, key, value)?,
                "run.t_end" => cfg.t_end = parse_num(line, key, value)?,
                "run.solution" => cfg.solution = value.parse().map_err(err)?,
                "run.rest_density" => rest_density = parse_num(line, key, value)?,
                "run.initial" => cfg.initial = Some(PathBuf::from(value)),
                "run.deterministic" => cfg.deterministic = parse_bool(line, key, value)?,
                "study.levels" => {
                    cfg.levels = value
                        .split(',')
                        .map(|v| parse_num(line, key, v.trim()))
                        .collect::<Result<_, _>>()?
                }
                "study.dt_rule" => {
                    cfg.dt_rule = match value {
                        "h2" => DtRuleKind::Quadratic,
                        "h" => DtRuleKind::Linear,
                        _ => return Err(err(format!("`study.dt_rule` must be h2 or h, got `{value}`"))),
                    }
                }
                "study.dt_factor" => cfg.dt_factor = parse_num(line, key, value)?,
                "out.dir" => cfg.out_dir = PathBuf::from(value),
                "out.vtk_every" => cfg.vtk_every = parse_num(line, key, value)?,
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        if let Solution::Rest { .. } = cfg.solution {
            cfg.solution = Solution::Rest { rho0: rest_density };
        }
        cfg.validate().map_err(|message| ConfigError {
            line: last_line,
            message,
        })?;
        Ok(cfg)
    }

    /// Checks every parameter range; reported against the last line.
    pub fn validate(&self) -> Result<(), String> {
        self.law().map_err(|e| e.to_string())?;
        self.scheme().map_err(|e| e.to_string())?;
        self.solver.validate()?;
        if let MeshSource::Structured(0) = self.mesh {
            return Err("`mesh.n` must be at least 1".into());
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(format!("`run.t_end` must be positive, got {}", self.t_end));
        }
        if let Solution::Rest { rho0 } = self.solution {
            if !(rho0 > 0.0) {
                return Err(format!("`run.rest_density` must be positive, got {rho0}"));
            }
        }
        if self.initial.is_some() && !matches!(self.solution, Solution::Rest { .. }) {
            return Err("`run.initial` requires `run.solution = rest`".into());
        }
        if self.levels.is_empty() || self.levels.contains(&0) {
            return Err("`study.levels` must list positive mesh levels".into());
        }
        if !(self.dt_factor > 0.0) {
            return Err("`study.dt_factor` must be positive".into());
        }
        Ok(())
    }

    pub fn law(&self) -> Result<PressureLaw, cnsfv_core::thermo::ThermoError> {
        PressureLaw::new(self.a_lin, self.b, self.gamma)
    }

    pub fn scheme(&self) -> Result<SchemeConfig, cnsfv_core::scheme::ConfigError> {
        SchemeConfig::new(self.dt, self.mu, self.variant, self.epsilon)
    }

    pub fn dt_rule(&self) -> DtRule {
        match self.dt_rule {
            DtRuleKind::Quadratic => DtRule::Quadratic(self.dt_factor),
            DtRuleKind::Linear => DtRule::Linear(self.dt_factor),
        }
    }

    /// Serializes every key; `parse(to_text())` returns an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        match &self.mesh {
            MeshSource::Structured(n) => writeln!(s, "mesh.n = {n}").unwrap(),
            MeshSource::File(p) => writeln!(s, "mesh.file = {}", p.display()).unwrap(),
        }
        let jacobian = match self.solver.jacobian_mode {
            JacobianMode::AnalyticFrozenUpwind => "analytic",
            JacobianMode::FiniteDifference => "fd",
        };
        let levels: Vec<String> = self.levels.iter().map(|l| l.to_string()).collect();
        let rule = match self.dt_rule {
            DtRuleKind::Quadratic => "h2",
            DtRuleKind::Linear => "h",
        };
        writeln!(s, "law.a_lin = {}", self.a_lin).unwrap();
        writeln!(s, "law.b = {}", self.b).unwrap();
        writeln!(s, "law.gamma = {}", self.gamma).unwrap();
        writeln!(s, "scheme.dt = {}", self.dt).unwrap();
        writeln!(s, "scheme.mu = {}", self.mu).unwrap();
        writeln!(s, "scheme.variant = {}", self.variant.name()).unwrap();
        writeln!(s, "scheme.epsilon = {}", self.epsilon).unwrap();
        writeln!(s, "solver.tol = {}", self.solver.nonlinear_tol).unwrap();
        writeln!(s, "solver.max_picard = {}", self.solver.max_picard).unwrap();
        writeln!(s, "solver.max_newton = {}", self.solver.max_newton).unwrap();
        writeln!(s, "solver.linear_tol = {}", self.solver.linear_tol).unwrap();
        writeln!(s, "solver.linear_max_iter = {}", self.solver.linear_max_iter).unwrap();
        writeln!(s, "solver.jacobian = {jacobian}").unwrap();
        writeln!(s, "solver.damping = {}", self.solver.damping).unwrap();
        writeln!(s, "run.t_end = {}", self.t_end).unwrap();
        writeln!(s, "run.solution = {}", self.solution.name()).unwrap();
        if let Solution::Rest { rho0 } = self.solution {
            writeln!(s, "run.rest_density = {rho0}").unwrap();
        }
        if let Some(p) = &self.initial {
            writeln!(s, "run.initial = {}", p.display()).unwrap();
        }
        writeln!(s, "run.deterministic = {}", self.deterministic).unwrap();
        writeln!(s, "study.levels = {}", levels.join(",")).unwrap();
        writeln!(s, "study.dt_rule = {rule}").unwrap();
        writeln!(s, "study.dt_factor = {}", self.dt_factor).unwrap();
        writeln!(s, "out.dir = {}", self.out_dir.display()).unwrap();
        writeln!(s, "out.vtk_every = {}", self.vtk_every).unwrap();
        s
    }
}
