//! File formats, run configuration and command-line drivers for the
//! `cnsfv-core` solver.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod msh;
pub mod state;
pub mod vtk;

pub use app::{check, run, study, AppError};
pub use config::{MeshSource, RunConfig};
