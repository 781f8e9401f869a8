//! Residuals and Jacobians of one implicit upwind time step.
//!
//! Unknowns are packed as `[rho_K for every cell; u_sigma (3 components) for
//! every interior face]`. The mass residual is tested against cell
//! indicators, the momentum residual against the basis functions `phi_sigma
//! e_i` of interior faces. Time derivative and convection act on cell means
//! `u_hat_K`, pressure on face values, viscosity on the full affine field.

use thiserror::Error;

use crate::mesh::Mesh;
use crate::solver::{self, LinearSolver, Linearization, NonlinearSystem, SolveReport, SolverConfig, SolverError};
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::spaces::{basis_gradients, CellField, CrField};
use crate::thermo::PressureLaw;
use crate::{Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Classical upwinding of density and momentum.
    Standard,
    /// Classical upwinding plus the density-jump stabilization terms.
    Stabilized,
    /// Upwinding with the velocity shifted by `+/- h^(1-epsilon)`.
    ModifiedUpwind,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Stabilized => "stabilized",
            Variant::ModifiedUpwind => "modified_upwind",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(Variant::Standard),
            "stabilized" => Ok(Variant::Stabilized),
            "modified_upwind" | "modified-upwind" | "modified" => Ok(Variant::ModifiedUpwind),
            other => Err(format!("unknown scheme variant `{other}`")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
    #[error("viscosity must be positive, got {0}")]
    Viscosity(f64),
    #[error("stabilization exponent must lie in [0, 1), got {0}")]
    Epsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub dt: f64,
    /// Shear viscosity; the div-div coefficient is `mu / 3`.
    pub mu: f64,
    pub variant: Variant,
    pub epsilon: f64,
    /// Term switches used by verification runs; both on for the scheme.
    pub convection: bool,
    pub pressure: bool,
}

impl SchemeConfig {
    pub fn new(dt: f64, mu: f64, variant: Variant, epsilon: f64) -> Result<SchemeConfig, ConfigError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(ConfigError::TimeStep(dt));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(ConfigError::Viscosity(mu));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(ConfigError::Epsilon(epsilon));
        }
        Ok(SchemeConfig {
            dt,
            mu,
            variant,
            epsilon,
            convection: true,
            pressure: true,
        })
    }

    /// `h^(1-epsilon)`, the stabilization weight and upwind shift.
    pub fn shift(&self, h: f64) -> f64 {
        h.powf(1.0 - self.epsilon)
    }

    fn stabilization_weight(&self, h: f64) -> f64 {
        match self.variant {
            Variant::Stabilized => self.shift(h),
            _ => 0.0,
        }
    }
}

/// Density and velocity at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub rho: CellField,
    pub u: CrField,
    pub step: usize,
}

impl StepState {
    pub fn new(mesh: &Mesh, rho: CellField, mut u: CrField) -> StepState {
        assert_eq!(rho.len(), mesh.num_cells());
        assert_eq!(u.values.len(), mesh.num_faces());
        for (f, face) in mesh.faces().iter().enumerate() {
            if face.is_boundary() {
                u.values[f] = Vec3::zeros();
            }
        }
        u.zero_trace = true;
        StepState { rho, u, step: 0 }
    }

    pub fn rest(mesh: &Mesh, rho: f64) -> StepState {
        StepState::new(mesh, CellField::constant(mesh, rho), CrField::zeros(mesh, true))
    }
}

/// Manufactured-solution sources at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Sources {
    /// Cell means of the mass source.
    pub mass: Vec<f64>,
    /// `int f . phi_sigma` per interior face.
    pub momentum: Vec<Vec3>,
}

impl Sources {
    pub fn zero(mesh: &Mesh) -> Sources {
        Sources {
            mass: vec![0.0; mesh.num_cells()],
            momentum: vec![Vec3::zeros(); mesh.num_interior_faces()],
        }
    }
}

/// Split `un = a_plus + a_minus` with `a_plus >= 0 >= a_minus`; the upwind
/// flux of `q` through a face is `q_K a_plus + q_L a_minus`.
#[inline]
pub fn flux_split(un: f64, variant: Variant, shift: f64) -> (f64, f64) {
    match variant {
        Variant::Standard | Variant::Stabilized => (un.max(0.0), un.min(0.0)),
        Variant::ModifiedUpwind => (
            0.5 * ((un + shift).max(0.0) + (un - shift).max(0.0)),
            0.5 * ((un + shift).min(0.0) + (un - shift).min(0.0)),
        ),
    }
}

/// Derivatives of [`flux_split`] with respect to `un`, using the branch
/// selected at `un` (ties go to the downstream side).
#[inline]
pub fn flux_split_derivative(un: f64, variant: Variant, shift: f64) -> (f64, f64) {
    let step = |x: f64| if x > 0.0 { 1.0 } else { 0.0 };
    match variant {
        Variant::Standard | Variant::Stabilized => (step(un), 1.0 - step(un)),
        Variant::ModifiedUpwind => {
            let p = 0.5 * (step(un + shift) + step(un - shift));
            (p, 1.0 - p)
        }
    }
}

/// Classical upwind value: `q_K` if `un > 0`, else `q_L`.
#[inline]
pub fn upwind_value(q_k: f64, q_l: f64, un: f64) -> f64 {
    if un > 0.0 {
        q_k
    } else {
        q_l
    }
}

/// Upwind flux `q^up un` for the given variant.
#[inline]
pub fn upwind_flux(q_k: f64, q_l: f64, un: f64, variant: Variant, shift: f64) -> f64 {
    let (p, m) = flux_split(un, variant, shift);
    q_k * p + q_l * m
}

/// The stabilization functionals `T_c(phi)` and `T_m(v)` for density `rho`
/// and velocity `u`. `T_m` carries the same `h^(1-epsilon)` weight as `T_c`.
pub fn stabilization_terms(
    mesh: &Mesh,
    rho: &CellField,
    u: &CrField,
    phi: &CellField,
    v: &CrField,
    shift: f64,
) -> (f64, f64) {
    let mut tc = 0.0;
    let mut tm = 0.0;
    for &f in mesh.interior_faces() {
        let face = mesh.face(f);
        let (k, l) = (face.owner, face.neighbor.unwrap());
        let jump_rho = rho[k] - rho[l];
        tc += face.area * jump_rho * (phi[k] - phi[l]);
        let avg = 0.5 * (u.cell_mean(mesh, k) + u.cell_mean(mesh, l));
        let jump_v = v.cell_mean(mesh, k) - v.cell_mean(mesh, l);
        tm += face.area * jump_rho * avg.dot(&jump_v);
    }
    (shift * tc, shift * tm)
}

/// One backward-Euler step: previous state, configuration, and sources.
pub struct StepProblem<'a> {
    pub mesh: &'a Mesh,
    pub law: &'a PressureLaw,
    pub cfg: &'a SchemeConfig,
    pub prev: &'a StepState,
    pub sources: &'a Sources,
    prev_uhat: Vec<Vec3>,
    grads: Vec<[Vec3; 4]>,
    scaling: Vec<f64>,
}

impl<'a> StepProblem<'a> {
    /// `rho_ref` and `u_ref` scale the momentum rows of the residual.
    pub fn new(
        mesh: &'a Mesh,
        law: &'a PressureLaw,
        cfg: &'a SchemeConfig,
        prev: &'a StepState,
        sources: &'a Sources,
        rho_ref: f64,
        u_ref: f64,
    ) -> StepProblem<'a> {
        let prev_uhat = prev.u.cell_means(mesh);
        let grads = (0..mesh.num_cells()).map(|c| basis_gradients(mesh, c)).collect();
        let nc = mesh.num_cells();
        let mut scaling = Vec::with_capacity(nc + 3 * mesh.num_interior_faces());
        for c in 0..nc {
            scaling.push(cfg.dt / mesh.geometry(c).volume);
        }
        for &f in mesh.interior_faces() {
            let face = mesh.face(f);
            let lumped = 0.25 * (mesh.geometry(face.owner).volume + mesh.geometry(face.neighbor.unwrap()).volume);
            let s = cfg.dt / (lumped * rho_ref * u_ref);
            scaling.extend([s, s, s]);
        }
        StepProblem {
            mesh,
            law,
            cfg,
            prev,
            sources,
            prev_uhat,
            grads,
            scaling,
        }
    }

    fn shift(&self) -> f64 {
        self.cfg.shift(self.mesh.h())
    }

    pub fn pack(&self, state: &StepState) -> Vec<f64> {
        pack(self.mesh, state)
    }

    pub fn unpack(&self, x: &[f64]) -> StepState {
        unpack(self.mesh, x, self.prev.step + 1)
    }

    /// Per-cell mass residual.
    pub fn mass_residual(&self, rho: &CellField, u: &CrField) -> Vec<f64> {
        let mesh = self.mesh;
        let dt = self.cfg.dt;
        let shift = self.shift();
        let kappa = self.cfg.stabilization_weight(mesh.h());
        let mut r: Vec<f64> = (0..mesh.num_cells())
            .map(|c| {
                let vol = mesh.geometry(c).volume;
                vol * (rho[c] - self.prev.rho[c]) / dt - vol * self.sources.mass[c]
            })
            .collect();
        for &f in mesh.interior_faces() {
            let face = mesh.face(f);
            let (k, l) = (face.owner, face.neighbor.unwrap());
            let mut flux = 0.0;
            if self.cfg.convection {
                let un = u.values[f].dot(&face.normal);
                flux += face.area * upwind_flux(rho[k], rho[l], un, self.cfg.variant, shift);
            }
            flux += kappa * face.area * (rho[k] - rho[l]);
            r[k] += flux;
            r[l] -= flux;
        }
        r
    }

    /// Per-cell momentum balance `M_K` before testing: time derivative,
    /// convection, and the momentum stabilization.
    fn cell_momentum(&self, rho: &CellField, u: &CrField, uhat: &[Vec3]) -> Vec<Vec3> {
        let mesh = self.mesh;
        let dt = self.cfg.dt;
        let shift = self.shift();
        let kappa = self.cfg.stabilization_weight(mesh.h());
        let mut m: Vec<Vec3> = (0..mesh.num_cells())
            .map(|c| {
                let vol = mesh.geometry(c).volume;
                (uhat[c] * rho[c] - self.prev_uhat[c] * self.prev.rho[c]) * (vol / dt)
            })
            .collect();
        for &f in mesh.interior_faces() {
            let face = mesh.face(f);
            let (k, l) = (face.owner, face.neighbor.unwrap());
            let mut g = Vec3::zeros();
            if self.cfg.convection {
                let un = u.values[f].dot(&face.normal);
                let (p, q) = flux_split(un, self.cfg.variant, shift);
                g += (uhat[k] * (rho[k] * p) + uhat[l] * (rho[l] * q)) * face.area;
            }
            if kappa > 0.0 {
                g += (uhat[k] + uhat[l]) * (0.5 * kappa * face.area * (rho[k] - rho[l]));
            }
            m[k] += g;
            m[l] -= g;
        }
        m
    }

    /// Momentum residual per interior face (3 components each).
    pub fn momentum_residual(&self, rho: &CellField, u: &CrField) -> Vec<Vec3> {
        let mesh = self.mesh;
        let mu = self.cfg.mu;
        let uhat = u.cell_means(mesh);
        let m = self.cell_momentum(rho, u, &uhat);
        let mut r = vec![Vec3::zeros(); mesh.num_interior_faces()];
        for (j, &f) in mesh.interior_faces().iter().enumerate() {
            let face = mesh.face(f);
            let (k, l) = (face.owner, face.neighbor.unwrap());
            r[j] = (m[k] + m[l]) * 0.25 - self.sources.momentum[j];
            if self.cfg.pressure {
                let dp = self.law.pressure(rho[k]) - self.law.pressure(rho[l]);
                r[j] -= face.normal * (face.area * dp);
            }
        }
        for c in 0..mesh.num_cells() {
            let geo = mesh.geometry(c);
            let grad = u.cell_gradient(mesh, c);
            let div = grad.trace();
            for i in 0..4 {
                if let Some(j) = mesh.interior_index(geo.faces[i]) {
                    let g = self.grads[c][i];
                    r[j] += (grad * g * mu + g * (mu / 3.0 * div)) * geo.volume;
                }
            }
        }
        r
    }

    /// Full residual in packed layout.
    pub fn residual_of(&self, rho: &CellField, u: &CrField) -> Vec<f64> {
        let mut r = self.mass_residual(rho, u);
        for v in self.momentum_residual(rho, u) {
            r.extend(v.iter());
        }
        r
    }

    /// Jacobian of the packed residual with upwind directions frozen at `x`.
    /// The Picard variant freezes density and the advecting quantities in
    /// the transport and inertia terms, keeping only the velocity dependence
    /// of the transported momentum and of the mass flux.
    pub fn jacobian_of(&self, x: &[f64], kind: Linearization) -> CsrMatrix {
        let mesh = self.mesh;
        let state = self.unpack(x);
        let (rho, u) = (&state.rho, &state.u);
        let nc = mesh.num_cells();
        let n = nc + 3 * mesh.num_interior_faces();
        let newton = kind == Linearization::Newton;
        let dt = self.cfg.dt;
        let mu = self.cfg.mu;
        let shift = self.shift();
        let kappa = self.cfg.stabilization_weight(mesh.h());
        let variant = self.cfg.variant;
        let uhat = u.cell_means(mesh);
        let ucol = |j: usize| nc + 3 * j;
        let mut jac = TripletBuilder::with_capacity(n, n, 200 * n);

        // mass rows
        for c in 0..nc {
            jac.add(c, c, mesh.geometry(c).volume / dt);
        }
        for &f in mesh.interior_faces() {
            let face = mesh.face(f);
            let (k, l) = (face.owner, face.neighbor.unwrap());
            let a = face.area;
            if self.cfg.convection {
                let un = u.values[f].dot(&face.normal);
                let (p, q) = flux_split(un, variant, shift);
                let (dp, dq) = flux_split_derivative(un, variant, shift);
                let j = mesh.interior_index(f).unwrap();
                let du = face.normal * (a * (rho[k] * dp + rho[l] * dq));
                for (row, sign) in [(k, 1.0), (l, -1.0)] {
                    if newton {
                        jac.add(row, k, sign * a * p);
                        jac.add(row, l, sign * a * q);
                    }
                    for comp in 0..3 {
                        jac.add(row, ucol(j) + comp, sign * du[comp]);
                    }
                }
            }
            if kappa > 0.0 {
                jac.add(k, k, kappa * a);
                jac.add(k, l, -kappa * a);
                jac.add(l, k, -kappa * a);
                jac.add(l, l, kappa * a);
            }
        }

        // momentum rows through the cell balances M_X
        let mut d_rho: Vec<(usize, Vec3)> = Vec::with_capacity(5);
        let mut d_uhat: Vec<(usize, f64)> = Vec::with_capacity(5);
        let mut d_u: Vec<(usize, Mat3)> = Vec::with_capacity(4);
        for x_cell in 0..nc {
            let geo = mesh.geometry(x_cell);
            d_rho.clear();
            d_uhat.clear();
            d_u.clear();
            let coef = geo.volume / dt;
            if newton {
                d_rho.push((x_cell, uhat[x_cell] * coef));
            }
            d_uhat.push((x_cell, rho[x_cell] * coef));
            for i in 0..4 {
                let f = geo.faces[i];
                let face = mesh.face(f);
                let Some(y) = face.other(x_cell) else { continue };
                let a = face.area;
                let normal = face.normal * geo.signs[i];
                if self.cfg.convection {
                    let un = u.values[f].dot(&normal);
                    let (p, q) = flux_split(un, variant, shift);
                    d_uhat.push((x_cell, a * rho[x_cell] * p));
                    d_uhat.push((y, a * rho[y] * q));
                    if newton {
                        let (dp, dq) = flux_split_derivative(un, variant, shift);
                        d_rho.push((x_cell, uhat[x_cell] * (a * p)));
                        d_rho.push((y, uhat[y] * (a * q)));
                        let w = (uhat[x_cell] * (rho[x_cell] * dp) + uhat[y] * (rho[y] * dq)) * a;
                        let j = mesh.interior_index(f).unwrap();
                        d_u.push((j, w * normal.transpose()));
                    }
                }
                if kappa > 0.0 {
                    let half_jump = 0.5 * kappa * a * (rho[x_cell] - rho[y]);
                    d_uhat.push((x_cell, half_jump));
                    d_uhat.push((y, half_jump));
                    if newton {
                        let avg = (uhat[x_cell] + uhat[y]) * (0.5 * kappa * a);
                        d_rho.push((x_cell, avg));
                        d_rho.push((y, -avg));
                    }
                }
            }
            for i in 0..4 {
                let Some(row_face) = mesh.interior_index(geo.faces[i]) else { continue };
                let row = ucol(row_face);
                for &(y, v) in &d_rho {
                    for comp in 0..3 {
                        jac.add(row + comp, y, 0.25 * v[comp]);
                    }
                }
                for &(y, s) in &d_uhat {
                    for &fy in &mesh.geometry(y).faces {
                        if let Some(jy) = mesh.interior_index(fy) {
                            for comp in 0..3 {
                                jac.add(row + comp, ucol(jy) + comp, 0.0625 * s);
                            }
                        }
                    }
                }
                for &(jy, b) in &d_u {
                    for r in 0..3 {
                        for cc in 0..3 {
                            jac.add(row + r, ucol(jy) + cc, 0.25 * b[(r, cc)]);
                        }
                    }
                }
            }
            // viscous block
            for i in 0..4 {
                let Some(ji) = mesh.interior_index(geo.faces[i]) else { continue };
                let gi = self.grads[x_cell][i];
                for k in 0..4 {
                    let Some(jk) = mesh.interior_index(geo.faces[k]) else { continue };
                    let gk = self.grads[x_cell][k];
                    let block = (Mat3::identity() * (mu * gk.dot(&gi)) + gi * gk.transpose() * (mu / 3.0)) * geo.volume;
                    for r in 0..3 {
                        for cc in 0..3 {
                            jac.add(ucol(ji) + r, ucol(jk) + cc, block[(r, cc)]);
                        }
                    }
                }
            }
        }

        if self.cfg.pressure {
            for (j, &f) in mesh.interior_faces().iter().enumerate() {
                let face = mesh.face(f);
                let (k, l) = (face.owner, face.neighbor.unwrap());
                let a = face.area;
                for comp in 0..3 {
                    jac.add(ucol(j) + comp, k, -a * self.law.dpressure(rho[k]) * face.normal[comp]);
                    jac.add(ucol(j) + comp, l, a * self.law.dpressure(rho[l]) * face.normal[comp]);
                }
            }
        }
        jac.build()
    }
}

impl NonlinearSystem for StepProblem<'_> {
    fn dim(&self) -> usize {
        self.mesh.num_cells() + 3 * self.mesh.num_interior_faces()
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let state = self.unpack(x);
        self.residual_of(&state.rho, &state.u)
    }

    fn jacobian(&self, x: &[f64], kind: Linearization) -> CsrMatrix {
        self.jacobian_of(x, kind)
    }

    fn row_scaling(&self) -> &[f64] {
        &self.scaling
    }

    fn admissible(&self, x: &[f64]) -> bool {
        x[..self.mesh.num_cells()].iter().all(|&r| r > 0.0 && r.is_finite())
    }
}

pub fn pack(mesh: &Mesh, state: &StepState) -> Vec<f64> {
    let mut x = state.rho.values.clone();
    x.reserve(3 * mesh.num_interior_faces());
    for &f in mesh.interior_faces() {
        x.extend(state.u.values[f].iter());
    }
    x
}

pub fn unpack(mesh: &Mesh, x: &[f64], step: usize) -> StepState {
    let nc = mesh.num_cells();
    let rho = CellField {
        values: x[..nc].to_vec(),
    };
    let mut u = CrField::zeros(mesh, true);
    for (j, &f) in mesh.interior_faces().iter().enumerate() {
        let o = nc + 3 * j;
        u.values[f] = Vec3::new(x[o], x[o + 1], x[o + 2]);
    }
    StepState { rho, u, step }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("density lost positivity in a converged solution: rho[{cell}] = {value:e}")]
    PositivityLost { cell: usize, value: f64 },
}

/// Reference scales for residual scaling: mean density and a velocity scale
/// combining the largest velocity with the sound speed.
pub fn reference_scales(mesh: &Mesh, law: &PressureLaw, state: &StepState) -> (f64, f64) {
    let vol = mesh.total_volume();
    let rho_ref = (0..mesh.num_cells())
        .map(|c| state.rho[c] * mesh.geometry(c).volume)
        .sum::<f64>()
        / vol;
    let u_max = state.u.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let sound = law.dpressure(rho_ref).sqrt();
    (rho_ref, u_max.max(sound).max(1e-300))
}

/// Advances `prev` by one time step, starting the nonlinear solve from `prev`.
pub fn advance(
    mesh: &Mesh,
    law: &PressureLaw,
    cfg: &SchemeConfig,
    prev: &StepState,
    sources: &Sources,
    solver_cfg: &SolverConfig,
    scales: (f64, f64),
) -> Result<(StepState, SolveReport), StepError> {
    advance_with(mesh, law, cfg, prev, sources, solver_cfg, scales, &mut LinearSolver::default())
}

/// [`advance`] reusing the symbolic factorization held by `lin`.
#[allow(clippy::too_many_arguments)]
pub fn advance_with(
    mesh: &Mesh,
    law: &PressureLaw,
    cfg: &SchemeConfig,
    prev: &StepState,
    sources: &Sources,
    solver_cfg: &SolverConfig,
    scales: (f64, f64),
    lin: &mut LinearSolver,
) -> Result<(StepState, SolveReport), StepError> {
    let problem = StepProblem::new(mesh, law, cfg, prev, sources, scales.0, scales.1);
    let x0 = problem.pack(prev);
    let (x, report) = solver::solve_step_with(&problem, &x0, solver_cfg, lin)?;
    let state = problem.unpack(&x);
    if let Some((cell, &value)) = state.rho.values.iter().enumerate().find(|(_, &r)| !(r > 0.0)) {
        return Err(StepError::PositivityLost { cell, value });
    }
    Ok((state, report))
}
