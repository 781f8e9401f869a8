//! Quadrature on the reference tetrahedron and triangle, mapped to mesh
//! cells and faces.
//!
//! The cell rule is a collapsed (Duffy) Gauss–Legendre product rule, so
//! every weight is positive and the exactness degree is a parameter. The
//! face rule is Radon's 7-point rule (degree 5).

use crate::mesh::Mesh;
use crate::Vec3;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

#[derive(Debug, Clone)]
pub struct TetRule {
    /// Reference coordinates in the unit tetrahedron.
    pub points: Vec<[f64; 3]>,
    /// Sum to 1/6.
    pub weights: Vec<f64>,
    pub degree: usize,
}

#[derive(Debug, Clone)]
pub struct TriangleRule {
    /// Reference coordinates in the unit triangle.
    pub points: Vec<[f64; 2]>,
    /// Sum to 1/2.
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl TetRule {
    /// Product rule exact for polynomials of total degree `degree`.
    pub fn with_degree(degree: usize) -> TetRule {
        let nu = (degree + 4) / 2;
        let nv = (degree + 3) / 2;
        let nw = (degree + 2) / 2;
        let (xu, wu) = gauss_legendre(nu);
        let (xv, wv) = gauss_legendre(nv);
        let (xw, ww) = gauss_legendre(nw);
        let mut points = Vec::with_capacity(nu * nv * nw);
        let mut weights = Vec::with_capacity(nu * nv * nw);
        for (&u, &a) in xu.iter().zip(&wu) {
            for (&v, &b) in xv.iter().zip(&wv) {
                for (&w, &c) in xw.iter().zip(&ww) {
                    points.push([u, (1.0 - u) * v, (1.0 - u) * (1.0 - v) * w]);
                    weights.push(a * b * c * (1.0 - u) * (1.0 - u) * (1.0 - v));
                }
            }
        }
        TetRule {
            points,
            weights,
            degree,
        }
    }

    /// The default cell rule, exact to degree 3.
    pub fn cell() -> TetRule {
        TetRule::with_degree(3)
    }

    /// Physical points and weights on `cell`.
    pub fn on_cell<'a>(&'a self, mesh: &Mesh, cell: usize) -> impl Iterator<Item = (Vec3, f64)> + 'a {
        let [p0, p1, p2, p3] = mesh.cell_points(cell);
        let scale = 6.0 * mesh.geometry(cell).volume;
        self.points.iter().zip(&self.weights).map(move |(r, &w)| {
            (
                p0 + (p1 - p0) * r[0] + (p2 - p0) * r[1] + (p3 - p0) * r[2],
                w * scale,
            )
        })
    }

    pub fn integrate<F: FnMut(Vec3) -> f64>(&self, mesh: &Mesh, cell: usize, mut f: F) -> f64 {
        self.on_cell(mesh, cell).map(|(x, w)| w * f(x)).sum()
    }
}

impl TriangleRule {
    /// Radon's 7-point rule, exact to degree 5 with positive weights.
    pub fn face() -> TriangleRule {
        let s = 15f64.sqrt();
        let a1 = (6.0 - s) / 21.0;
        let b1 = (9.0 + 2.0 * s) / 21.0;
        let a2 = (6.0 + s) / 21.0;
        let b2 = (9.0 - 2.0 * s) / 21.0;
        let w0 = 9.0 / 80.0;
        let w1 = (155.0 - s) / 2400.0;
        let w2 = (155.0 + s) / 2400.0;
        TriangleRule {
            points: vec![
                [1.0 / 3.0, 1.0 / 3.0],
                [a1, a1],
                [b1, a1],
                [a1, b1],
                [a2, a2],
                [b2, a2],
                [a2, b2],
            ],
            weights: vec![w0, w1, w1, w1, w2, w2, w2],
            degree: 5,
        }
    }

    pub fn on_face<'a>(&'a self, mesh: &Mesh, face: usize) -> impl Iterator<Item = (Vec3, f64)> + 'a {
        let [p0, p1, p2] = mesh.face_points(face);
        let scale = 2.0 * mesh.face(face).area;
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(r, &w)| (p0 + (p1 - p0) * r[0] + (p2 - p0) * r[1], w * scale))
    }

    pub fn integrate<F: FnMut(Vec3) -> f64>(&self, mesh: &Mesh, face: usize, mut f: F) -> f64 {
        self.on_face(mesh, face).map(|(x, w)| w * f(x)).sum()
    }
}
