mod common;

use cnsfv_core::diagnostics::total_mass;
use cnsfv_core::manufactured::Solution;
use cnsfv_core::scheme::{advance, reference_scales, Sources, StepProblem};
use cnsfv_core::solver::{scaled_norm, solve_step, NonlinearSystem, SolverConfig};
use cnsfv_core::{Mesh, PressureLaw, SchemeConfig, StepState, Variant};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

const VARIANTS: [Variant; 3] = [Variant::Standard, Variant::Stabilized, Variant::ModifiedUpwind];

fn law() -> PressureLaw {
    PressureLaw::new(1.0, 1.0, 2.0).unwrap()
}

#[test]
fn rest_state_is_a_fixed_point() {
    let mesh = Mesh::unit_cube(2).unwrap();
    for l in [law(), PressureLaw::new(0.0, 2.0, 1.4).unwrap()] {
        for variant in VARIANTS {
            let cfg = SchemeConfig::new(0.1, 1.0, variant, 0.5).unwrap();
            let rest = StepState::rest(&mesh, 1.3);
            let sources = Sources::zero(&mesh);
            let p = StepProblem::new(&mesh, &l, &cfg, &rest, &sources, 1.3, 1.0);
            let r = p.residual(&p.pack(&rest));
            assert!(r.iter().all(|&v| v == 0.0));
            let (next, report) = advance(&mesh, &l, &cfg, &rest, &sources, &SolverConfig::default(), (1.3, 1.0)).unwrap();
            assert_eq!(report.iterations(), 0);
            assert_eq!(next.rho, rest.rho);
        }
    }
}

#[test]
fn mass_is_conserved_by_every_variant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [1, 2] {
        let mesh = Mesh::unit_cube(n).unwrap();
        for variant in VARIANTS {
            let cfg = SchemeConfig::new(0.02, 0.5, variant, 0.0).unwrap();
            let mut state = StepState::new(&mesh, random_density(&mesh, &mut rng, 0.8, 1.2), random_velocity(&mesh, &mut rng, 0.5));
            let m0 = total_mass(&mesh, &state.rho);
            let sources = Sources::zero(&mesh);
            for _ in 0..3 {
                let scales = reference_scales(&mesh, &law(), &state);
                state = advance(&mesh, &law(), &cfg, &state, &sources, &SolverConfig::default(), scales).unwrap().0;
                let m = total_mass(&mesh, &state.rho);
                assert!((m - m0).abs() <= 1e-11 * m0, "{variant:?} n={n}: drift {}", (m - m0).abs() / m0);
                assert!(state.rho.min() > 0.0);
            }
        }
    }
}

#[test]
fn picard_is_exact_when_density_decouples() {
    // without convection and pressure the density stays at its previous value
    // and the momentum equation is linear for that frozen density
    let mesh = Mesh::unit_cube(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut cfg = SchemeConfig::new(0.05, 1.0, Variant::Standard, 0.0).unwrap();
    cfg.convection = false;
    cfg.pressure = false;
    let prev = random_state(&mesh, &mut rng);
    let sources = Sources::zero(&mesh);
    let solver = SolverConfig {
        max_picard: 5,
        ..SolverConfig::default()
    };
    let (_, report) = advance(&mesh, &law(), &cfg, &prev, &sources, &solver, (1.0, 1.0)).unwrap();
    assert_eq!((report.picard_iterations, report.newton_iterations), (1, 0));
}

#[test]
fn converged_step_does_not_depend_on_the_initial_guess() {
    let mesh = Mesh::unit_cube(2).unwrap();
    let l = law();
    let cfg = SchemeConfig::new(0.05, 1.0, Variant::Standard, 0.0).unwrap();
    let sol = Solution::Mms1;
    let (r, v) = sol.project(&mesh, 0.3);
    let prev = StepState::new(&mesh, r, v);
    let sources = sol.sources(&mesh, &l, cfg.mu, 0.35);
    let p = StepProblem::new(&mesh, &l, &cfg, &prev, &sources, 1.0, 1.0);
    let solver = SolverConfig {
        nonlinear_tol: 1e-12,
        ..SolverConfig::default()
    };
    let x0 = p.pack(&prev);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let other = p.pack(&StepState::new(&mesh, random_density(&mesh, &mut rng, 0.9, 1.1), random_velocity(&mesh, &mut rng, 0.1)));
    let (a, _) = solve_step(&p, &x0, &solver).unwrap();
    let (b, _) = solve_step(&p, &other, &solver).unwrap();
    let diff = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff <= 1e-10, "max difference {diff:e}");
    assert!(scaled_norm(&p.residual(&b), p.row_scaling()) <= 1e-12);
}

#[test]
fn nonconvergence_is_reported_with_history() {
    let mesh = Mesh::unit_cube(2).unwrap();
    let cfg = SchemeConfig::new(0.05, 1.0, Variant::Standard, 0.0).unwrap();
    let sol = Solution::Mms1;
    let prev = sol.initial_state(&mesh);
    let sources = sol.sources(&mesh, &law(), cfg.mu, 0.05);
    let solver = SolverConfig {
        max_picard: 0,
        max_newton: 1,
        nonlinear_tol: 1e-14,
        ..SolverConfig::default()
    };
    let err = advance(&mesh, &law(), &cfg, &prev, &sources, &solver, (1.0, 1.0)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("did not converge"), "{msg}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relative_energy_is_nonnegative(
        a in 0.0f64..3.0,
        b in 0.0f64..3.0,
        gamma in 1.05f64..4.0,
        rho in 1e-6f64..50.0,
        z in 1e-3f64..50.0,
    ) {
        prop_assume!(a + b > 0.1);
        let l = PressureLaw::new(a, b, gamma).unwrap();
        let e = l.relative_energy(rho, z).unwrap();
        prop_assert!(e >= -1e-12 * (1.0 + l.free_energy(rho).abs() + l.free_energy(z).abs()));
    }

    #[test]
    fn mass_fluxes_telescope(seed in 0u64..1000, variant_idx in 0usize..3, dt in 0.001f64..1.0) {
        let mesh = Mesh::unit_cube(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SchemeConfig::new(dt, 1.0, VARIANTS[variant_idx], 0.25).unwrap();
        let prev = random_state(&mesh, &mut rng);
        let cur = random_state(&mesh, &mut rng);
        let sources = Sources::zero(&mesh);
        let l = law();
        let p = StepProblem::new(&mesh, &l, &cfg, &prev, &sources, 1.0, 1.0);
        let total: f64 = p.mass_residual(&cur.rho, &cur.u).iter().sum();
        let expect = (total_mass(&mesh, &cur.rho) - total_mass(&mesh, &prev.rho)) / dt;
        prop_assert!((total - expect).abs() <= 1e-12 * (1.0 + expect.abs()) / dt.min(1.0));
    }
}
