//! Closed-form solutions on the unit cube and the sources that make them
//! exact solutions of the forced system.

use std::f64::consts::PI;
use std::str::FromStr;

use crate::mesh::Mesh;
use crate::quadrature::TetRule;
use crate::scheme::{Sources, StepState};
use crate::spaces::{barycentric, project_cr, project_q, CellField, CrField};
use crate::thermo::PressureLaw;
use crate::{Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solution {
    /// `r = rho0`, `V = 0`.
    Rest { rho0: f64 },
    /// `r = 1 + sin(t) B(x) / 4`, `V = sin(t) B(x) (1, 1, 1)` with
    /// `B = sin(pi x) sin(pi y) sin(pi z)`.
    Mms1,
}

impl FromStr for Solution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rest" | "uniform" => Ok(Solution::Rest { rho0: 1.0 }),
            "mms1" | "mms-1" => Ok(Solution::Mms1),
            other => Err(format!("unknown manufactured solution `{other}`")),
        }
    }
}

/// `B`, its gradient and Hessian.
fn bubble(x: Vec3) -> (f64, Vec3, Mat3) {
    let s = x.map(|v| (PI * v).sin());
    let c = x.map(|v| (PI * v).cos());
    let b = s.x * s.y * s.z;
    let g = PI * Vec3::new(c.x * s.y * s.z, s.x * c.y * s.z, s.x * s.y * c.z);
    let p2 = PI * PI;
    let hess = Mat3::new(
        -p2 * b,
        p2 * c.x * c.y * s.z,
        p2 * c.x * s.y * c.z,
        p2 * c.x * c.y * s.z,
        -p2 * b,
        p2 * s.x * c.y * c.z,
        p2 * c.x * s.y * c.z,
        p2 * s.x * c.y * c.z,
        -p2 * b,
    );
    (b, g, hess)
}

impl Solution {
    pub fn name(&self) -> &'static str {
        match self {
            Solution::Rest { .. } => "rest",
            Solution::Mms1 => "mms1",
        }
    }

    pub fn density(&self, t: f64, x: Vec3) -> f64 {
        match *self {
            Solution::Rest { rho0 } => rho0,
            Solution::Mms1 => 1.0 + 0.25 * t.sin() * bubble(x).0,
        }
    }

    pub fn density_dt(&self, t: f64, x: Vec3) -> f64 {
        match *self {
            Solution::Rest { .. } => 0.0,
            Solution::Mms1 => 0.25 * t.cos() * bubble(x).0,
        }
    }

    pub fn density_grad(&self, t: f64, x: Vec3) -> Vec3 {
        match *self {
            Solution::Rest { .. } => Vec3::zeros(),
            Solution::Mms1 => 0.25 * t.sin() * bubble(x).1,
        }
    }

    pub fn velocity(&self, t: f64, x: Vec3) -> Vec3 {
        match *self {
            Solution::Rest { .. } => Vec3::zeros(),
            Solution::Mms1 => Vec3::repeat(t.sin() * bubble(x).0),
        }
    }

    pub fn velocity_dt(&self, t: f64, x: Vec3) -> Vec3 {
        match *self {
            Solution::Rest { .. } => Vec3::zeros(),
            Solution::Mms1 => Vec3::repeat(t.cos() * bubble(x).0),
        }
    }

    /// Entry `(a, b)` is `d V_a / d x_b`.
    pub fn velocity_grad(&self, t: f64, x: Vec3) -> Mat3 {
        match *self {
            Solution::Rest { .. } => Mat3::zeros(),
            Solution::Mms1 => {
                let g = t.sin() * bubble(x).1;
                Mat3::from_rows(&[g.transpose(), g.transpose(), g.transpose()])
            }
        }
    }

    /// `(Laplacian V, grad div V)`.
    fn velocity_second(&self, t: f64, x: Vec3) -> (Vec3, Vec3) {
        match *self {
            Solution::Rest { .. } => (Vec3::zeros(), Vec3::zeros()),
            Solution::Mms1 => {
                let (_, _, hess) = bubble(x);
                let lap = t.sin() * hess.trace();
                (Vec3::repeat(lap), t.sin() * hess * Vec3::repeat(1.0))
            }
        }
    }

    /// `g = d_t r + div(r V)`.
    pub fn mass_source(&self, t: f64, x: Vec3) -> f64 {
        let r = self.density(t, x);
        let v = self.velocity(t, x);
        self.density_dt(t, x) + self.density_grad(t, x).dot(&v) + r * self.velocity_grad(t, x).trace()
    }

    /// `f = d_t(r V) + div(r V (x) V) + grad p(r) - mu Lap V - (mu/3) grad div V`.
    pub fn momentum_source(&self, law: &PressureLaw, mu: f64, t: f64, x: Vec3) -> Vec3 {
        let r = self.density(t, x);
        let v = self.velocity(t, x);
        let gv = self.velocity_grad(t, x);
        let (lap, grad_div) = self.velocity_second(t, x);
        r * self.velocity_dt(t, x) + r * gv * v + self.mass_source(t, x) * v
            + law.dpressure(r) * self.density_grad(t, x)
            - mu * lap
            - mu / 3.0 * grad_div
    }

    /// Largest `|V|` over sampled boundary points at time `t`.
    pub fn max_boundary_velocity(&self, t: f64, samples: usize) -> f64 {
        let mut m: f64 = 0.0;
        for axis in 0..3 {
            for side in [0.0, 1.0] {
                for i in 0..=samples {
                    for j in 0..=samples {
                        let a = i as f64 / samples as f64;
                        let b = j as f64 / samples as f64;
                        let mut x = Vec3::new(a, b, a);
                        x[axis] = side;
                        x[(axis + 1) % 3] = a;
                        x[(axis + 2) % 3] = b;
                        m = m.max(self.velocity(t, x).norm());
                    }
                }
            }
        }
        m
    }

    /// Cell means of `r` and the zero-trace face means of `V` at time `t`.
    pub fn project(&self, mesh: &Mesh, t: f64) -> (CellField, CrField) {
        (
            project_q(mesh, |x| self.density(t, x)),
            project_cr(mesh, |x| self.velocity(t, x), true),
        )
    }

    pub fn initial_state(&self, mesh: &Mesh) -> StepState {
        let (rho, u) = self.project(mesh, 0.0);
        StepState::new(mesh, rho, u)
    }

    /// Discrete sources at time `t`: cell means of `g` and `int f . phi_sigma`
    /// over the two cells sharing each interior face.
    pub fn sources(&self, mesh: &Mesh, law: &PressureLaw, mu: f64, t: f64) -> Sources {
        if let Solution::Rest { .. } = self {
            return Sources::zero(mesh);
        }
        let mass = project_q(mesh, |x| self.mass_source(t, x)).values;
        let mut momentum = vec![Vec3::zeros(); mesh.num_interior_faces()];
        let rule = TetRule::with_degree(4);
        for c in 0..mesh.num_cells() {
            let faces = mesh.geometry(c).faces;
            for (x, w) in rule.on_cell(mesh, c) {
                let fx = self.momentum_source(law, mu, t, x) * w;
                let lambda = barycentric(mesh, c, x);
                for (i, &f) in faces.iter().enumerate() {
                    if let Some(j) = mesh.interior_index(f) {
                        momentum[j] += fx * (1.0 - 3.0 * lambda[i]);
                    }
                }
            }
        }
        Sources { mass, momentum }
    }
}
