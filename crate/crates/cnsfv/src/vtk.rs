//! Legacy ASCII VTK output: cell data on the tetrahedra, and the face
//! velocities as a point cloud at face centroids in a companion file.

use std::fmt::Write as _;

use cnsfv_core::{Mesh, StepState};

pub fn cells_vtk(mesh: &Mesh, state: &StepState, title: &str) -> String {
    let mut s = String::new();
    let nc = mesh.num_cells();
    writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {} double", mesh.vertices().len()).unwrap();
    for v in mesh.vertices() {
        writeln!(s, "{:e} {:e} {:e}", v.x, v.y, v.z).unwrap();
    }
    writeln!(s, "CELLS {nc} {}", 5 * nc).unwrap();
    for c in mesh.cells() {
        writeln!(s, "4 {} {} {} {}", c[0], c[1], c[2], c[3]).unwrap();
    }
    writeln!(s, "CELL_TYPES {nc}").unwrap();
    for _ in 0..nc {
        s.push_str("10\n");
    }
    writeln!(s, "CELL_DATA {nc}\nSCALARS density double 1\nLOOKUP_TABLE default").unwrap();
    for r in &state.rho.values {
        writeln!(s, "{r:e}").unwrap();
    }
    s.push_str("VECTORS velocity double\n");
    for u in state.u.cell_means(mesh) {
        writeln!(s, "{:e} {:e} {:e}", u.x, u.y, u.z).unwrap();
    }
    s
}

pub fn faces_vtk(mesh: &Mesh, state: &StepState, title: &str) -> String {
    let mut s = String::new();
    let nf = mesh.num_faces();
    writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET POLYDATA").unwrap();
    writeln!(s, "POINTS {nf} double").unwrap();
    for f in mesh.faces() {
        writeln!(s, "{:e} {:e} {:e}", f.centroid.x, f.centroid.y, f.centroid.z).unwrap();
    }
    writeln!(s, "VERTICES {nf} {}", 2 * nf).unwrap();
    for i in 0..nf {
        writeln!(s, "1 {i}").unwrap();
    }
    writeln!(s, "POINT_DATA {nf}\nVECTORS face_velocity double").unwrap();
    for u in &state.u.values {
        writeln!(s, "{:e} {:e} {:e}", u.x, u.y, u.z).unwrap();
    }
    s
}
