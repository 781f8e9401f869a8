//! Mass, energy, dissipation and relative-energy functionals of discrete
//! states, and experimental orders of convergence.

use thiserror::Error;

use crate::mesh::Mesh;
use crate::quadrature::TetRule;
use crate::scheme::{flux_split, SchemeConfig, Sources, StepState, Variant};
use crate::spaces::{CellField, CrField};
use crate::thermo::{PressureLaw, ThermoError};
use crate::{Mat3, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("error values must be positive and finite, got {0:e} at position {1}")]
    NonPositiveError(f64, usize),
    #[error("mesh sizes must be positive and strictly decreasing")]
    MeshSizes,
    #[error("errors and mesh sizes have different lengths ({0} vs {1})")]
    Length(usize, usize),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}

pub fn total_mass(mesh: &Mesh, rho: &CellField) -> f64 {
    (0..mesh.num_cells())
        .map(|c| mesh.geometry(c).volume * rho[c])
        .sum()
}

pub fn kinetic_energy(mesh: &Mesh, state: &StepState) -> f64 {
    (0..mesh.num_cells())
        .map(|c| 0.5 * mesh.geometry(c).volume * state.rho[c] * state.u.cell_mean(mesh, c).norm_squared())
        .sum()
}

pub fn internal_energy(mesh: &Mesh, law: &PressureLaw, rho: &CellField) -> f64 {
    (0..mesh.num_cells())
        .map(|c| mesh.geometry(c).volume * law.free_energy(rho[c]))
        .sum()
}

/// `sum_K |K| (rho_K |u_hat_K|^2 / 2 + H(rho_K))`.
pub fn total_energy(mesh: &Mesh, law: &PressureLaw, state: &StepState) -> f64 {
    kinetic_energy(mesh, state) + internal_energy(mesh, law, &state.rho)
}

/// `mu sum_K int |grad u|^2 + (mu/3) sum_K int (div u)^2` (a rate; multiply
/// by the time step for the energy increment).
pub fn viscous_dissipation(mesh: &Mesh, u: &CrField, mu: f64) -> f64 {
    (0..mesh.num_cells())
        .map(|c| {
            let g = u.cell_gradient(mesh, c);
            mesh.geometry(c).volume * (mu * g.norm_squared() + mu / 3.0 * g.trace().powi(2))
        })
        .sum()
}

/// `sum_K |K| rho_prev_K |u_hat_K - u_hat_prev_K|^2 / 2`.
pub fn time_dissipation(mesh: &Mesh, prev: &StepState, cur: &StepState) -> f64 {
    (0..mesh.num_cells())
        .map(|c| {
            let du = cur.u.cell_mean(mesh, c) - prev.u.cell_mean(mesh, c);
            0.5 * mesh.geometry(c).volume * prev.rho[c] * du.norm_squared()
        })
        .sum()
}

/// Upwind velocity dissipation of one step,
/// `dt sum_sigma |sigma| |u_hat_K - u_hat_L|^2 / 2 (rho_K a+ - rho_L a-)`,
/// which for classical upwinding is `rho^up |u_sigma . n|`.
pub fn space_dissipation(mesh: &Mesh, cur: &StepState, cfg: &SchemeConfig) -> f64 {
    let shift = cfg.shift(mesh.h());
    let mut d = 0.0;
    for &f in mesh.interior_faces() {
        let face = mesh.face(f);
        let (k, l) = (face.owner, face.neighbor.unwrap());
        let un = cur.u.values[f].dot(&face.normal);
        let (p, m) = flux_split(un, cfg.variant, shift);
        let jump = cur.u.cell_mean(mesh, k) - cur.u.cell_mean(mesh, l);
        d += face.area * 0.5 * jump.norm_squared() * (cur.rho[k] * p - cur.rho[l] * m);
    }
    cfg.dt * d
}

/// Density-stabilization dissipation of one step,
/// `dt h^(1-eps) sum_sigma |sigma| [rho][H'(rho)]`; zero unless stabilized.
pub fn stabilization_dissipation(mesh: &Mesh, law: &PressureLaw, cur: &StepState, cfg: &SchemeConfig) -> f64 {
    if cfg.variant != Variant::Stabilized {
        return 0.0;
    }
    let kappa = cfg.shift(mesh.h());
    let mut d = 0.0;
    for &f in mesh.interior_faces() {
        let face = mesh.face(f);
        let (k, l) = (face.owner, face.neighbor.unwrap());
        let (a, b) = (cur.rho[k], cur.rho[l]);
        d += face.area * (a - b) * (law.dfree_energy(a) - law.dfree_energy(b));
    }
    cfg.dt * kappa * d
}

/// Energy supplied by manufactured sources over one step.
pub fn source_work(mesh: &Mesh, law: &PressureLaw, cur: &StepState, sources: &Sources, dt: f64) -> f64 {
    let mut w: f64 = mesh
        .interior_faces()
        .iter()
        .zip(&sources.momentum)
        .map(|(&f, s)| s.dot(&cur.u.values[f]))
        .sum();
    for c in 0..mesh.num_cells() {
        let uhat = cur.u.cell_mean(mesh, c);
        w += mesh.geometry(c).volume
            * sources.mass[c]
            * (law.dfree_energy(cur.rho[c]) - 0.5 * uhat.norm_squared());
    }
    dt * w
}

/// Cumulative velocity dissipations over a history of states.
pub fn dissipation_terms(mesh: &Mesh, history: &[StepState], cfg: &SchemeConfig) -> (f64, f64) {
    assert!(history.len() >= 2, "need at least two states");
    let mut d_time = 0.0;
    let mut d_space = 0.0;
    for w in history.windows(2) {
        d_time += time_dissipation(mesh, &w[0], &w[1]);
        d_space += space_dissipation(mesh, &w[1], cfg);
    }
    (d_time, d_space)
}

/// `sum_K |K| (rho_K |u_hat_K - v_hat_K|^2 + E(rho_K | z_K))`.
pub fn relative_energy(
    mesh: &Mesh,
    law: &PressureLaw,
    state: &StepState,
    ref_rho: &CellField,
    ref_u: &CrField,
) -> Result<f64, DiagnosticsError> {
    let mut e = 0.0;
    for c in 0..mesh.num_cells() {
        let du = state.u.cell_mean(mesh, c) - ref_u.cell_mean(mesh, c);
        let rel = law.relative_energy(state.rho[c], ref_rho[c])?;
        e += mesh.geometry(c).volume * (state.rho[c] * du.norm_squared() + rel);
    }
    Ok(e)
}

/// One time level of the error functional against an exact solution:
/// the pointwise relative energy
/// `int rho |u_hat - V|^2 / 2 + H(rho) - H'(r)(rho - r) - H(r)` and the
/// squared broken gradient error `int |grad_h u - grad V|^2`.
pub fn error_functional_step<R, V, G>(
    mesh: &Mesh,
    law: &PressureLaw,
    state: &StepState,
    r: R,
    v: V,
    grad_v: G,
) -> (f64, f64)
where
    R: Fn(Vec3) -> f64,
    V: Fn(Vec3) -> Vec3,
    G: Fn(Vec3) -> Mat3,
{
    let rule = TetRule::with_degree(4);
    let mut rel = 0.0;
    let mut grad = 0.0;
    for c in 0..mesh.num_cells() {
        let uhat = state.u.cell_mean(mesh, c);
        let gu = state.u.cell_gradient(mesh, c);
        let rho = state.rho[c];
        for (x, w) in rule.on_cell(mesh, c) {
            let rx = r(x);
            let e = law.free_energy(rho) - law.dfree_energy(rx) * (rho - rx) - law.free_energy(rx);
            rel += w * (0.5 * rho * (uhat - v(x)).norm_squared() + e);
            grad += w * (gu - grad_v(x)).norm_squared();
        }
    }
    (rel, grad)
}

/// `||rho||_{L^gamma}`.
pub fn lgamma_norm(mesh: &Mesh, rho: &CellField, gamma: f64) -> f64 {
    (0..mesh.num_cells())
        .map(|c| mesh.geometry(c).volume * rho[c].abs().powf(gamma))
        .sum::<f64>()
        .powf(1.0 / gamma)
}

/// Observed orders `log(e_i / e_{i+1}) / log(h_i / h_{i+1})`.
pub fn eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<f64>, DiagnosticsError> {
    if errors.len() != hs.len() {
        return Err(DiagnosticsError::Length(errors.len(), hs.len()));
    }
    if let Some((i, &e)) = errors.iter().enumerate().find(|(_, &e)| !(e > 0.0) || !e.is_finite()) {
        return Err(DiagnosticsError::NonPositiveError(e, i));
    }
    if hs.iter().any(|&h| !(h > 0.0)) || hs.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(DiagnosticsError::MeshSizes);
    }
    Ok(errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect())
}

/// One ledger row; cumulative columns sum over steps `1..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow {
    pub time: f64,
    pub mass: f64,
    pub kinetic: f64,
    pub internal: f64,
    pub viscous_cum: f64,
    pub d_time_u: f64,
    pub d_space_u: f64,
    pub rel_energy: f64,
    pub m1_functional: f64,
    pub stab_dissipation: f64,
    pub source_work: f64,
    pub source_mass: f64,
}

impl LedgerRow {
    pub fn energy(&self) -> f64 {
        self.kinetic + self.internal
    }
}

/// Column names in CSV order.
pub const LEDGER_COLUMNS: [&str; 12] = [
    "time",
    "mass",
    "kinetic",
    "internal",
    "viscous_cum",
    "D_time_u",
    "D_space_u",
    "rel_energy",
    "m1_functional",
    "stab_dissipation",
    "source_work",
    "source_mass",
];

impl LedgerRow {
    pub fn values(&self) -> [f64; 12] {
        [
            self.time,
            self.mass,
            self.kinetic,
            self.internal,
            self.viscous_cum,
            self.d_time_u,
            self.d_space_u,
            self.rel_energy,
            self.m1_functional,
            self.stab_dissipation,
            self.source_work,
            self.source_mass,
        ]
    }
}

/// Per-step energy and error record of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn start(mesh: &Mesh, law: &PressureLaw, state: &StepState, time: f64, rel_energy: f64, m1: f64) -> Self {
        EnergyLedger {
            rows: vec![LedgerRow {
                time,
                mass: total_mass(mesh, &state.rho),
                kinetic: kinetic_energy(mesh, state),
                internal: internal_energy(mesh, law, &state.rho),
                viscous_cum: 0.0,
                d_time_u: 0.0,
                d_space_u: 0.0,
                rel_energy,
                m1_functional: m1,
                stab_dissipation: 0.0,
                source_work: 0.0,
                source_mass: 0.0,
            }],
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        mesh: &Mesh,
        law: &PressureLaw,
        cfg: &SchemeConfig,
        prev: &StepState,
        cur: &StepState,
        sources: &Sources,
        time: f64,
        rel_energy: f64,
        m1: f64,
    ) {
        let last = *self.rows.last().expect("ledger must be started");
        let source_mass: f64 = (0..mesh.num_cells())
            .map(|c| mesh.geometry(c).volume * sources.mass[c])
            .sum();
        self.rows.push(LedgerRow {
            time,
            mass: total_mass(mesh, &cur.rho),
            kinetic: kinetic_energy(mesh, cur),
            internal: internal_energy(mesh, law, &cur.rho),
            viscous_cum: last.viscous_cum + cfg.dt * viscous_dissipation(mesh, &cur.u, cfg.mu),
            d_time_u: last.d_time_u + time_dissipation(mesh, prev, cur),
            d_space_u: last.d_space_u + space_dissipation(mesh, cur, cfg),
            rel_energy,
            m1_functional: m1,
            stab_dissipation: last.stab_dissipation + stabilization_dissipation(mesh, law, cur, cfg),
            source_work: last.source_work + source_work(mesh, law, cur, sources, cfg.dt),
            source_mass: last.source_mass + cfg.dt * source_mass,
        });
    }

    /// `E_m - E_0 + dissipations - source work` per row; the discrete
    /// energy inequality says this is at most zero up to solver slack.
    pub fn energy_defects(&self) -> Vec<f64> {
        let e0 = self.rows[0].energy();
        self.rows
            .iter()
            .map(|r| {
                r.energy() - e0 + r.viscous_cum + r.d_time_u + r.d_space_u + r.stab_dissipation - r.source_work
            })
            .collect()
    }

    /// Relative mass balance error `|M_n - M_0 - source mass| / M_0`.
    pub fn mass_drift(&self) -> Vec<f64> {
        let m0 = self.rows[0].mass;
        self.rows
            .iter()
            .map(|r| (r.mass - m0 - r.source_mass).abs() / m0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::project_cr;

    #[test]
    fn eoc_examples() {
        let o = eoc(&[0.4, 0.2], &[0.2, 0.1]).unwrap();
        assert!((o[0] - 1.0).abs() < 1e-15);
        assert!(matches!(eoc(&[0.4, 0.0], &[0.2, 0.1]), Err(DiagnosticsError::NonPositiveError(..))));
        assert_eq!(eoc(&[0.4, 0.2], &[0.1, 0.2]), Err(DiagnosticsError::MeshSizes));
    }

    #[test]
    fn unit_density_mass_and_kinetic_energy() {
        let mesh = Mesh::unit_cube(2).unwrap();
        let rho = CellField::constant(&mesh, 1.0);
        assert!((total_mass(&mesh, &rho) - 1.0).abs() < 1e-14);
        // no zero trace here: the interpolant of a constant keeps boundary values
        let u = project_cr(&mesh, |_| Vec3::new(1.0, 0.0, 0.0), false);
        let state = StepState { rho, u, step: 0 };
        assert!((kinetic_energy(&mesh, &state) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rest_energy_is_zero() {
        let mesh = Mesh::unit_cube(2).unwrap();
        let law = PressureLaw::new(1.0, 1.0, 2.0).unwrap();
        assert_eq!(total_energy(&mesh, &law, &StepState::rest(&mesh, 1.0)), 0.0);
    }

    #[test]
    fn relative_energy_of_uniform_offset() {
        let mesh = Mesh::unit_cube(2).unwrap();
        let law = PressureLaw::new(1.0, 1.0, 2.0).unwrap();
        let rho = CellField::constant(&mesh, 1.0);
        let u = project_cr(&mesh, |_| Vec3::new(1.0, 0.0, 0.0), false);
        let state = StepState { rho: rho.clone(), u: u.clone(), step: 0 };
        assert!(relative_energy(&mesh, &law, &state, &rho, &u).unwrap().abs() < 1e-15);
        let zero = CrField::zeros(&mesh, false);
        let e = relative_energy(&mesh, &law, &state, &rho, &zero).unwrap();
        assert!((e - 1.0).abs() < 1e-14);
        let bad = CellField::constant(&mesh, 0.0);
        assert!(relative_energy(&mesh, &law, &state, &bad, &zero).is_err());
    }
}
