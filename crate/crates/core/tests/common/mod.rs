#![allow(dead_code)]

use cnsfv_core::{CellField, CrField, Mesh, StepState, Vec3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_density(mesh: &Mesh, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> CellField {
    CellField {
        values: (0..mesh.num_cells()).map(|_| rng.random_range(lo..hi)).collect(),
    }
}

/// Random zero-trace velocity with components in `[-amp, amp]`.
pub fn random_velocity(mesh: &Mesh, rng: &mut ChaCha8Rng, amp: f64) -> CrField {
    let mut u = CrField::zeros(mesh, true);
    for &f in mesh.interior_faces() {
        u.values[f] = Vec3::from_fn(|_, _| rng.random_range(-amp..amp));
    }
    u
}

pub fn random_state(mesh: &Mesh, rng: &mut ChaCha8Rng) -> StepState {
    let rho = random_density(mesh, rng, 0.5, 2.0);
    let u = random_velocity(mesh, rng, 1.0);
    StepState::new(mesh, rho, u)
}

pub fn rel_diff(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}
