//! Conforming tetrahedral meshes with oriented faces.
//!
//! Local face `i` of a cell is the face opposite its local vertex `i`. Every
//! face stores a unit normal pointing out of its owner, which is the
//! lowest-indexed incident cell; the per-cell `signs` flip it for the
//! neighbor.

use std::collections::HashMap;

use thiserror::Error;

use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("number of subdivisions must be at least 1")]
    NoSubdivisions,
    #[error("degenerate extent: upper corner {hi:?} must exceed lower corner {lo:?} in every axis")]
    DegenerateExtent { lo: [f64; 3], hi: [f64; 3] },
    #[error("no tetrahedra")]
    NoTetrahedra,
    #[error("cell {cell} references vertex {vertex}, but only {count} vertices exist")]
    VertexOutOfRange {
        cell: usize,
        vertex: usize,
        count: usize,
    },
    #[error("cell {cell} is degenerate (volume {volume:e})")]
    DegenerateCell { cell: usize, volume: f64 },
    #[error("face {face:?} is shared by more than two cells: {cells:?}")]
    NonConforming { face: [usize; 3], cells: Vec<usize> },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    /// Sorted vertex triple.
    pub vertices: [usize; 3],
    pub owner: usize,
    /// `None` for boundary faces.
    pub neighbor: Option<usize>,
    pub area: f64,
    /// Unit normal, outward from `owner`.
    pub normal: Vec3,
    pub centroid: Vec3,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.neighbor.is_none()
    }

    /// The cell across the face from `cell`.
    pub fn other(&self, cell: usize) -> Option<usize> {
        if cell == self.owner {
            self.neighbor
        } else {
            Some(self.owner)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    pub volume: f64,
    pub diameter: f64,
    pub inradius: f64,
    pub centroid: Vec3,
    /// `faces[i]` is opposite local vertex `i`.
    pub faces: [usize; 4],
    /// +1 when the stored face normal points out of this cell, -1 otherwise.
    pub signs: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Vec3>,
    cells: Vec<[usize; 4]>,
    faces: Vec<Face>,
    geometry: Vec<CellGeometry>,
    interior: Vec<usize>,
    interior_index: Vec<Option<usize>>,
    h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport {
    pub min_inradius_ratio: f64,
    pub max_inradius_ratio: f64,
    pub min_diameter_ratio: f64,
    pub max_diameter_ratio: f64,
}

fn signed_volume(p: [Vec3; 4]) -> f64 {
    (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])) / 6.0
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

impl Mesh {
    /// Kuhn subdivision of the box `[lo, hi]`: `n` subcubes per axis, each
    /// split into six tetrahedra sharing the subcube's main diagonal.
    pub fn structured_cube(n: usize, lo: [f64; 3], hi: [f64; 3]) -> Result<Mesh, MeshError> {
        if n == 0 {
            return Err(MeshError::NoSubdivisions);
        }
        if (0..3).any(|a| !(hi[a] > lo[a]) || !lo[a].is_finite() || !hi[a].is_finite()) {
            return Err(MeshError::DegenerateExtent { lo, hi });
        }
        let m = n + 1;
        let index = |i: usize, j: usize, k: usize| i + m * (j + m * k);
        let mut vertices = Vec::with_capacity(m * m * m);
        for k in 0..m {
            for j in 0..m {
                for i in 0..m {
                    let t = [i, j, k];
                    let x = Vec3::from_fn(|a, _| {
                        if t[a] == n {
                            hi[a]
                        } else {
                            lo[a] + (hi[a] - lo[a]) * t[a] as f64 / n as f64
                        }
                    });
                    vertices.push(x);
                }
            }
        }
        let mut cells = Vec::with_capacity(6 * n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    for perm in PERMUTATIONS {
                        let mut c = [i, j, k];
                        let mut tet = [index(c[0], c[1], c[2]); 4];
                        for (step, &axis) in perm.iter().enumerate() {
                            c[axis] += 1;
                            tet[step + 1] = index(c[0], c[1], c[2]);
                        }
                        cells.push(tet);
                    }
                }
            }
        }
        Mesh::from_cells(vertices, cells)
    }

    /// Unit cube `[0,1]^3` with `n` subdivisions per axis.
    pub fn unit_cube(n: usize) -> Result<Mesh, MeshError> {
        Mesh::structured_cube(n, [0.0; 3], [1.0; 3])
    }

    /// Builds the face structure and geometry from raw cells and validates
    /// every mesh invariant. Negatively oriented cells are reordered.
    pub fn from_cells(vertices: Vec<Vec3>, mut cells: Vec<[usize; 4]>) -> Result<Mesh, MeshError> {
        if cells.is_empty() {
            return Err(MeshError::NoTetrahedra);
        }
        for (c, cell) in cells.iter_mut().enumerate() {
            if let Some(&v) = cell.iter().find(|&&v| v >= vertices.len()) {
                return Err(MeshError::VertexOutOfRange {
                    cell: c,
                    vertex: v,
                    count: vertices.len(),
                });
            }
            let p = cell.map(|v| vertices[v]);
            let vol = signed_volume(p);
            let scale = (1..4).map(|i| (p[i] - p[0]).norm()).fold(0.0, f64::max);
            if !(vol.abs() > 1e-14 * scale.powi(3)) {
                return Err(MeshError::DegenerateCell {
                    cell: c,
                    volume: vol,
                });
            }
            if vol < 0.0 {
                cell.swap(2, 3);
            }
        }

        let mut faces: Vec<Face> = Vec::with_capacity(cells.len() * 2 + cells.len());
        let mut lookup: HashMap<[usize; 3], usize> = HashMap::with_capacity(cells.len() * 3);
        let mut cell_faces = vec![[0usize; 4]; cells.len()];
        for (c, cell) in cells.iter().enumerate() {
            for i in 0..4 {
                let mut key = [cell[(i + 1) % 4], cell[(i + 2) % 4], cell[(i + 3) % 4]];
                key.sort_unstable();
                let f = *lookup.entry(key).or_insert_with(|| {
                    faces.push(Face {
                        vertices: key,
                        owner: c,
                        neighbor: None,
                        area: 0.0,
                        normal: Vec3::zeros(),
                        centroid: Vec3::zeros(),
                    });
                    faces.len() - 1
                });
                let face = &mut faces[f];
                if face.owner != c {
                    if let Some(other) = face.neighbor {
                        return Err(MeshError::NonConforming {
                            face: key,
                            cells: vec![face.owner, other, c],
                        });
                    }
                    face.neighbor = Some(c);
                }
                cell_faces[c][i] = f;
            }
        }

        let centroids: Vec<Vec3> = cells
            .iter()
            .map(|cell| cell.iter().map(|&v| vertices[v]).sum::<Vec3>() / 4.0)
            .collect();
        for face in &mut faces {
            let [a, b, c] = face.vertices.map(|v| vertices[v]);
            let cross = (b - a).cross(&(c - a));
            face.area = 0.5 * cross.norm();
            face.centroid = (a + b + c) / 3.0;
            let mut normal = cross.normalize();
            if normal.dot(&(face.centroid - centroids[face.owner])) < 0.0 {
                normal = -normal;
            }
            face.normal = normal;
        }

        let geometry: Vec<CellGeometry> = cells
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let p = cell.map(|v| vertices[v]);
                let volume = signed_volume(p);
                let mut diameter = 0.0f64;
                for i in 0..4 {
                    for j in i + 1..4 {
                        diameter = diameter.max((p[i] - p[j]).norm());
                    }
                }
                let fs = cell_faces[c];
                let surface: f64 = fs.iter().map(|&f| faces[f].area).sum();
                let signs = fs.map(|f| if faces[f].owner == c { 1.0 } else { -1.0 });
                CellGeometry {
                    volume,
                    diameter,
                    inradius: 3.0 * volume / surface,
                    centroid: centroids[c],
                    faces: fs,
                    signs,
                }
            })
            .collect();

        let h = geometry.iter().map(|g| g.diameter).fold(0.0, f64::max);
        let mut interior = Vec::new();
        let mut interior_index = vec![None; faces.len()];
        for (f, face) in faces.iter().enumerate() {
            if !face.is_boundary() {
                interior_index[f] = Some(interior.len());
                interior.push(f);
            }
        }

        let mesh = Mesh {
            vertices,
            cells,
            faces,
            geometry,
            interior,
            interior_index,
            h,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Checks closure, orientation, positivity and incidence consistency.
    pub fn validate(&self) -> Result<(), MeshError> {
        for (f, face) in self.faces.iter().enumerate() {
            if !(face.area > 0.0) {
                return Err(MeshError::Invariant(format!(
                    "face {f} {:?} has non-positive area",
                    face.vertices
                )));
            }
            let cells_listing: Vec<usize> = std::iter::once(face.owner)
                .chain(face.neighbor)
                .collect();
            for &c in &cells_listing {
                let g = &self.geometry[c];
                let Some(i) = g.faces.iter().position(|&x| x == f) else {
                    return Err(MeshError::Invariant(format!(
                        "cell {c} does not list incident face {f}"
                    )));
                };
                let expected = if c == face.owner { 1.0 } else { -1.0 };
                if g.signs[i] != expected {
                    return Err(MeshError::Invariant(format!(
                        "face {f} has inconsistent orientation in cell {c}"
                    )));
                }
            }
            if let Some(l) = face.neighbor {
                if l <= face.owner {
                    return Err(MeshError::Invariant(format!(
                        "face {f} owner {} is not the lower-indexed cell",
                        face.owner
                    )));
                }
            }
        }
        for (c, g) in self.geometry.iter().enumerate() {
            if !(g.volume > 0.0 && g.inradius > 0.0) {
                return Err(MeshError::Invariant(format!(
                    "cell {c} has non-positive volume or inradius"
                )));
            }
            let mut closure = Vec3::zeros();
            let mut total = 0.0;
            for i in 0..4 {
                let face = &self.faces[g.faces[i]];
                closure += face.area * g.signs[i] * face.normal;
                total += face.area;
            }
            if closure.norm() > 1e-12 * total {
                return Err(MeshError::Invariant(format!(
                    "cell {c} is not closed: |sum area*normal| = {:e}",
                    closure.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 4]] {
        &self.cells
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    pub fn geometry(&self, cell: usize) -> &CellGeometry {
        &self.geometry[cell]
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Indices of interior faces, in increasing face order.
    pub fn interior_faces(&self) -> &[usize] {
        &self.interior
    }

    /// Position of face `f` in [`Mesh::interior_faces`], if interior.
    pub fn interior_index(&self, f: usize) -> Option<usize> {
        self.interior_index[f]
    }

    pub fn num_interior_faces(&self) -> usize {
        self.interior.len()
    }

    /// Mesh size, the largest cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn total_volume(&self) -> f64 {
        self.geometry.iter().map(|g| g.volume).sum()
    }

    pub fn cell_points(&self, cell: usize) -> [Vec3; 4] {
        self.cells[cell].map(|v| self.vertices[v])
    }

    pub fn face_points(&self, f: usize) -> [Vec3; 3] {
        self.faces[f].vertices.map(|v| self.vertices[v])
    }

    /// Outward normal of face `f` with respect to `cell`.
    pub fn outward_normal(&self, f: usize, cell: usize) -> Vec3 {
        let face = &self.faces[f];
        if face.owner == cell {
            face.normal
        } else {
            -face.normal
        }
    }

    /// Whether any face of `cell` lies on the boundary.
    pub fn touches_boundary(&self, cell: usize) -> bool {
        self.geometry[cell]
            .faces
            .iter()
            .any(|&f| self.faces[f].is_boundary())
    }

    pub fn regularity_report(&self) -> RegularityReport {
        let mut report = RegularityReport {
            min_inradius_ratio: f64::INFINITY,
            max_inradius_ratio: 0.0,
            min_diameter_ratio: f64::INFINITY,
            max_diameter_ratio: 0.0,
        };
        for g in &self.geometry {
            let xi = g.inradius / g.diameter;
            let d = g.diameter / self.h;
            report.min_inradius_ratio = report.min_inradius_ratio.min(xi);
            report.max_inradius_ratio = report.max_inradius_ratio.max(xi);
            report.min_diameter_ratio = report.min_diameter_ratio.min(d);
            report.max_diameter_ratio = report.max_diameter_ratio.max(d);
        }
        report
    }
}
