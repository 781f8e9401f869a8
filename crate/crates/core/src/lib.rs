//! Implicit upwind finite-volume / Crouzeix–Raviart discretization of the
//! barotropic compressible Navier–Stokes equations on tetrahedral meshes.
//!
//! Density lives in the piecewise-constant space on cells, velocity in the
//! Crouzeix–Raviart space with one vector per face. Each time step is a
//! backward-Euler solve of the coupled mass/momentum residuals; the
//! [`diagnostics`] module evaluates energy, dissipation and relative-energy
//! functionals on the resulting states.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod harness;
pub mod manufactured;
pub mod mesh;
pub mod quadrature;
pub mod scheme;
pub mod solver;
pub mod spaces;
pub mod sparse;
pub mod thermo;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

pub use mesh::{Mesh, MeshError};
pub use scheme::{SchemeConfig, StepState, Variant};
pub use spaces::{CellField, CrField};
pub use thermo::PressureLaw;
