//! Piecewise-constant cell fields and Crouzeix–Raviart vector fields.
//!
//! A [`CrField`] stores one vector per face, the face mean of the field. On a
//! cell the field is the affine function `sum_i v_i (1 - 3 lambda_i)`, where
//! `lambda_i` is the barycentric coordinate of the vertex opposite local
//! face `i`. The gradient of that basis function is `|sigma_i| n_i / |K|`
//! with `n_i` the outward normal of face `i`.

use std::ops::Index;

use crate::mesh::Mesh;
use crate::quadrature::{TetRule, TriangleRule};
use crate::{Mat3, Vec3};

/// One value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub values: Vec<f64>,
}

/// One vector per face; `zero_trace` fields have zero boundary values.
#[derive(Debug, Clone, PartialEq)]
pub struct CrField {
    pub values: Vec<Vec3>,
    pub zero_trace: bool,
}

/// Which of the two face normals a jump is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalChoice {
    Owner,
    Neighbor,
}

impl CellField {
    pub fn constant(mesh: &Mesh, value: f64) -> CellField {
        CellField {
            values: vec![value; mesh.num_cells()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Jump `q_K - q_L` across face `f`, signed by the chosen normal.
    /// Boundary faces return the owner value.
    pub fn jump(&self, mesh: &Mesh, f: usize, choice: NormalChoice) -> f64 {
        let face = mesh.face(f);
        match face.neighbor {
            None => self.values[face.owner],
            Some(l) => {
                let d = self.values[face.owner] - self.values[l];
                match choice {
                    NormalChoice::Owner => d,
                    NormalChoice::Neighbor => -d,
                }
            }
        }
    }
}

impl Index<usize> for CellField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Gradients of the four local basis functions on `cell`.
pub fn basis_gradients(mesh: &Mesh, cell: usize) -> [Vec3; 4] {
    let g = mesh.geometry(cell);
    std::array::from_fn(|i| {
        let face = mesh.face(g.faces[i]);
        face.normal * (g.signs[i] * face.area / g.volume)
    })
}

/// Barycentric coordinates of `x` in `cell`.
pub fn barycentric(mesh: &Mesh, cell: usize, x: Vec3) -> [f64; 4] {
    let grads = basis_gradients(mesh, cell);
    let pts = mesh.cell_points(cell);
    std::array::from_fn(|i| 1.0 - grads[i].dot(&(x - pts[i])) / 3.0)
}

impl CrField {
    pub fn zeros(mesh: &Mesh, zero_trace: bool) -> CrField {
        CrField {
            values: vec![Vec3::zeros(); mesh.num_faces()],
            zero_trace,
        }
    }

    /// Cell mean, the average of the four face values.
    pub fn cell_mean(&self, mesh: &Mesh, cell: usize) -> Vec3 {
        mesh.geometry(cell)
            .faces
            .iter()
            .map(|&f| self.values[f])
            .sum::<Vec3>()
            * 0.25
    }

    pub fn cell_means(&self, mesh: &Mesh) -> Vec<Vec3> {
        (0..mesh.num_cells()).map(|c| self.cell_mean(mesh, c)).collect()
    }

    /// Value of the affine representation on `cell` at `x`.
    pub fn evaluate(&self, mesh: &Mesh, cell: usize, x: Vec3) -> Vec3 {
        let lambda = barycentric(mesh, cell, x);
        let faces = mesh.geometry(cell).faces;
        (0..4)
            .map(|i| self.values[faces[i]] * (1.0 - 3.0 * lambda[i]))
            .sum()
    }

    /// Cellwise gradient, `grad[a][b] = d v_a / d x_b`.
    pub fn cell_gradient(&self, mesh: &Mesh, cell: usize) -> Mat3 {
        let grads = basis_gradients(mesh, cell);
        let faces = mesh.geometry(cell).faces;
        (0..4)
            .map(|i| self.values[faces[i]] * grads[i].transpose())
            .sum()
    }

    pub fn broken_grad(&self, mesh: &Mesh) -> Vec<Mat3> {
        (0..mesh.num_cells())
            .map(|c| self.cell_gradient(mesh, c))
            .collect()
    }

    pub fn broken_div(&self, mesh: &Mesh) -> Vec<f64> {
        (0..mesh.num_cells())
            .map(|c| self.cell_gradient(mesh, c).trace())
            .collect()
    }

    /// Trace difference `v|_K - v|_L` at the face quadrature points, signed
    /// by the chosen normal. Boundary faces return the trace itself.
    pub fn jump(&self, mesh: &Mesh, f: usize, choice: NormalChoice, rule: &TriangleRule) -> Vec<Vec3> {
        let face = mesh.face(f);
        rule.on_face(mesh, f)
            .map(|(x, _)| {
                let inner = self.evaluate(mesh, face.owner, x);
                match face.neighbor {
                    None => inner,
                    Some(l) => {
                        let d = inner - self.evaluate(mesh, l, x);
                        match choice {
                            NormalChoice::Owner => d,
                            NormalChoice::Neighbor => -d,
                        }
                    }
                }
            })
            .collect()
    }

    /// Largest boundary face value; zero for members of the zero-trace space.
    pub fn max_boundary_value(&self, mesh: &Mesh) -> f64 {
        mesh.faces()
            .iter()
            .zip(&self.values)
            .filter(|(face, _)| face.is_boundary())
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }
}

/// Cell means of a scalar function.
pub fn project_q<F: Fn(Vec3) -> f64>(mesh: &Mesh, f: F) -> CellField {
    let rule = TetRule::cell();
    CellField {
        values: (0..mesh.num_cells())
            .map(|c| rule.integrate(mesh, c, &f) / mesh.geometry(c).volume)
            .collect(),
    }
}

/// Cell means of a vector function.
pub fn project_q_vec<F: Fn(Vec3) -> Vec3>(mesh: &Mesh, f: F) -> Vec<Vec3> {
    let rule = TetRule::cell();
    (0..mesh.num_cells())
        .map(|c| {
            let vol = mesh.geometry(c).volume;
            rule.on_cell(mesh, c).map(|(x, w)| f(x) * w).sum::<Vec3>() / vol
        })
        .collect()
}

/// Face means of `f`; boundary values are zeroed when `zero_trace` is set.
pub fn project_cr<F: Fn(Vec3) -> Vec3>(mesh: &Mesh, f: F, zero_trace: bool) -> CrField {
    let rule = TriangleRule::face();
    let values = mesh
        .faces()
        .iter()
        .enumerate()
        .map(|(i, face)| {
            if zero_trace && face.is_boundary() {
                Vec3::zeros()
            } else {
                rule.on_face(mesh, i).map(|(x, w)| f(x) * w).sum::<Vec3>() / face.area
            }
        })
        .collect();
    CrField { values, zero_trace }
}

/// Both sides of the identity `sum_K int_K q div(Pi v) = int q div v`.
///
/// The left side uses the projected field's broken divergence, the right side
/// integrates the analytic divergence with the cell rule.
pub fn divergence_projection_check<V, D>(mesh: &Mesh, q: &CellField, v: V, div_v: D) -> (f64, f64)
where
    V: Fn(Vec3) -> Vec3,
    D: Fn(Vec3) -> f64,
{
    let projected = project_cr(mesh, v, false);
    let div = projected.broken_div(mesh);
    let rule = TetRule::cell();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for c in 0..mesh.num_cells() {
        lhs += q[c] * div[c] * mesh.geometry(c).volume;
        rhs += q[c] * rule.integrate(mesh, c, &div_v);
    }
    (lhs, rhs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrokenNorms {
    pub l2: f64,
    pub l6: f64,
    /// `sqrt(sum_K int_K |grad v|^2)`.
    pub h1_seminorm: f64,
    /// `sum_sigma |sigma| h |v_sigma|^p`, not rooted.
    pub face_dof: f64,
}

/// Norms of a CR field. The L6 integral uses a degree-6 rule, which is exact
/// for the sixth power of an affine function.
pub fn broken_norms(mesh: &Mesh, v: &CrField, p: u32) -> BrokenNorms {
    assert!(matches!(p, 1 | 2 | 6), "face-DOF norm exponent must be 1, 2 or 6");
    let rule = TetRule::with_degree(6);
    let mut l2 = 0.0;
    let mut l6 = 0.0;
    let mut h1 = 0.0;
    for c in 0..mesh.num_cells() {
        for (x, w) in rule.on_cell(mesh, c) {
            let s = v.evaluate(mesh, c, x).norm_squared();
            l2 += w * s;
            l6 += w * s * s * s;
        }
        h1 += mesh.geometry(c).volume * v.cell_gradient(mesh, c).norm_squared();
    }
    let h = mesh.h();
    let face_dof = mesh
        .faces()
        .iter()
        .zip(&v.values)
        .map(|(face, val)| face.area * h * val.norm().powi(p as i32))
        .sum();
    BrokenNorms {
        l2: l2.sqrt(),
        l6: l6.powf(1.0 / 6.0),
        h1_seminorm: h1.sqrt(),
        face_dof,
    }
}
