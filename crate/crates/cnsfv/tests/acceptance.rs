//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p cnsfv --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use cnsfv::app::energy_slack;
use cnsfv_core::diagnostics;
use cnsfv_core::harness::{convergence_study, simulate, DtRule, RunOutcome, RunSpec, StudySpec};
use cnsfv_core::manufactured::Solution;
use cnsfv_core::quadrature::TriangleRule;
use cnsfv_core::scheme::{self, upwind_flux, Sources, StepProblem};
use cnsfv_core::solver::{set_deterministic, Linearization, NonlinearSystem, SolverConfig};
use cnsfv_core::spaces::{broken_norms, divergence_projection_check, project_cr, NormalChoice};
use cnsfv_core::{CellField, CrField, Mat3, Mesh, PressureLaw, SchemeConfig, StepState, Variant, Vec3};
use nalgebra::{DMatrix, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

const MASS_TOL: f64 = 1e-11;
const VARIANTS: [Variant; 3] = [Variant::Standard, Variant::Stabilized, Variant::ModifiedUpwind];

fn law() -> PressureLaw {
    PressureLaw::new(1.0, 1.0, 2.0).unwrap()
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_state(mesh: &Mesh, rng: &mut ChaCha8Rng, rho: (f64, f64), amp: f64) -> StepState {
    let density = CellField {
        values: (0..mesh.num_cells()).map(|_| rng.random_range(rho.0..rho.1)).collect(),
    };
    let mut u = CrField::zeros(mesh, true);
    for &f in mesh.interior_faces() {
        u.values[f] = Vec3::from_fn(|_, _| rng.random_range(-amp..amp));
    }
    StepState::new(mesh, density, u)
}

fn mms_run(n: usize, variant: Variant, epsilon: f64, dt: f64, steps: usize) -> Result<(Mesh, RunSpec, RunOutcome), String> {
    let mesh = Mesh::unit_cube(n).map_err(|e| e.to_string())?;
    let spec = RunSpec {
        law: law(),
        scheme: SchemeConfig::new(dt, 1.0, variant, epsilon).unwrap(),
        solver: SolverConfig::default(),
        solution: Solution::Mms1,
        steps,
    };
    let out = simulate(&mesh, &spec, |_, _| {}).map_err(|e| format!("{} n={n}: {e}", variant.name()))?;
    Ok((mesh, spec, out))
}

/// Unforced run from arbitrary data; returns every state including the first.
fn unforced_run(mesh: &Mesh, cfg: &SchemeConfig, init: StepState, steps: usize) -> Result<Vec<StepState>, String> {
    let l = law();
    let solver = SolverConfig::default();
    let sources = Sources::zero(mesh);
    let mut history = vec![init];
    for n in 1..=steps {
        let prev = history.last().unwrap();
        let scales = scheme::reference_scales(mesh, &l, prev);
        let (next, _) = scheme::advance(mesh, &l, cfg, prev, &sources, &solver, scales)
            .map_err(|e| format!("{} unforced step {n}: {e}", cfg.variant.name()))?;
        history.push(next);
    }
    Ok(history)
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Largest `E_m - E_0 + dissipation - m * slack` along an unforced history.
fn unforced_energy_margin(mesh: &Mesh, cfg: &SchemeConfig, history: &[StepState], slack: f64) -> f64 {
    let l = law();
    let e0 = diagnostics::total_energy(mesh, &l, &history[0]);
    let mut dissipated = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for (m, w) in history.windows(2).enumerate() {
        dissipated += cfg.dt * diagnostics::viscous_dissipation(mesh, &w[1].u, cfg.mu)
            + diagnostics::time_dissipation(mesh, &w[0], &w[1])
            + diagnostics::space_dissipation(mesh, &w[1], cfg)
            + diagnostics::stabilization_dissipation(mesh, &l, &w[1], cfg);
        let defect = diagnostics::total_energy(mesh, &l, &w[1]) - e0 + dissipated;
        worst = worst.max(defect - (m + 1) as f64 * slack);
    }
    worst
}

/// Largest `defect - m * slack` over steps `m >= 1` of a ledger.
fn ledger_margin(out: &RunOutcome, slack: f64) -> f64 {
    max_of(out.ledger.energy_defects().iter().enumerate().skip(1).map(|(m, d)| d - m as f64 * slack))
}

fn mass_conservation() -> Check {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for variant in VARIANTS {
        for (n, steps) in [(1, 10), (2, 10), (4, 5)] {
            let (_, _, out) = mms_run(n, variant, 0.0, 0.05, steps)?;
            worst = worst.max(max_of(out.ledger.mass_drift()));
            runs += 1;
        }
        let mesh = Mesh::unit_cube(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cfg = SchemeConfig::new(0.05, 1.0, variant, 0.0).unwrap();
        let history = unforced_run(&mesh, &cfg, random_state(&mesh, &mut rng, (0.5, 2.0), 1.0), 10)?;
        let m0 = diagnostics::total_mass(&mesh, &history[0].rho);
        worst = worst.max(max_of(history.iter().map(|s| (diagnostics::total_mass(&mesh, &s.rho) - m0).abs() / m0)));
        runs += 1;
    }
    let (_, _, out) = mms_run(8, Variant::Standard, 0.0, 0.01, 2)?;
    worst = worst.max(max_of(out.ledger.mass_drift()));
    runs += 1;
    ensure(worst <= MASS_TOL, format!("{runs} runs, max relative drift {worst:.2e} (tolerance {MASS_TOL:.0e})"))
}

fn positivity() -> Check {
    let mut min_rho = f64::INFINITY;
    let mut runs = 0;
    for variant in VARIANTS {
        for n in [2, 4] {
            let (_, _, out) = mms_run(n, variant, 0.0, 0.05, 10)?;
            min_rho = min_rho.min(out.min_density);
            runs += 1;
        }
        let mesh = Mesh::unit_cube(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let cfg = SchemeConfig::new(0.05, 1.0, variant, 0.5).unwrap();
        let init = random_state(&mesh, &mut rng, (0.05, 3.0), 2.0);
        let history = unforced_run(&mesh, &cfg, init, 10)?;
        min_rho = min_rho.min(history.iter().map(|s| s.rho.min()).fold(f64::INFINITY, f64::min));
        runs += 1;
    }
    ensure(min_rho > 0.0, format!("{runs} runs, smallest cell density {min_rho:.4e}"))
}

fn energy_inequality() -> Check {
    let (_, spec, out) = mms_run(4, Variant::Standard, 0.0, 0.05, 20)?;
    let slack = energy_slack(&spec.solver);
    let forced = ledger_margin(&out, slack);
    let mesh = Mesh::unit_cube(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    let cfg = SchemeConfig::new(0.05, 1.0, Variant::Standard, 0.0).unwrap();
    let history = unforced_run(&mesh, &cfg, random_state(&mesh, &mut rng, (0.5, 2.0), 1.0), 20)?;
    let unforced = unforced_energy_margin(&mesh, &cfg, &history, slack);
    ensure(
        forced <= 0.0 && unforced <= 0.0,
        format!("max (defect - m*slack): MMS n=4 {forced:.3e}, unforced n=2 {unforced:.3e}, slack {slack:.0e}"),
    )
}

fn brute_force_convection(mesh: &Mesh, state: &StepState, variant: Variant, delta: f64) -> (Vec<f64>, Vec<Vec3>) {
    let nc = mesh.num_cells();
    let uhat: Vec<Vec3> = (0..nc)
        .map(|c| mesh.geometry(c).faces.iter().map(|&f| state.u.values[f]).sum::<Vec3>() / 4.0)
        .collect();
    let mut mass = vec![0.0; nc];
    let mut mom = vec![Vec3::zeros(); nc];
    for k in 0..nc {
        for &f in &mesh.geometry(k).faces {
            let face = mesh.face(f);
            let Some(l) = face.other(k) else { continue };
            let n = if face.owner == k { face.normal } else { -face.normal };
            let un = state.u.values[f].dot(&n);
            let (wk, wl) = match variant {
                Variant::ModifiedUpwind => (
                    0.5 * ((un + delta).max(0.0) + (un - delta).max(0.0)),
                    0.5 * ((un + delta).min(0.0) + (un - delta).min(0.0)),
                ),
                _ if un > 0.0 => (un, 0.0),
                _ => (0.0, un),
            };
            mass[k] += face.area * (state.rho[k] * wk + state.rho[l] * wl);
            mom[k] += face.area * (uhat[k] * state.rho[k] * wk + uhat[l] * state.rho[l] * wl);
        }
    }
    (mass, mom)
}

fn cr_gradients(mesh: &Mesh, cell: usize) -> Vec<(usize, Vec3)> {
    let p = mesh.cell_points(cell);
    let t = Matrix4::from_fn(|r, c| if c < 3 { p[r][c] } else { 1.0 });
    let inv = t.try_inverse().expect("nondegenerate cell");
    let mut out = Vec::new();
    for (i, &v) in mesh.cells()[cell].iter().enumerate() {
        let coeff: Vector4<f64> = inv.column(i).into();
        let f = *mesh.geometry(cell).faces.iter().find(|&&f| !mesh.face(f).vertices.contains(&v)).unwrap();
        if let Some(j) = mesh.interior_index(f) {
            out.push((j, -3.0 * Vec3::new(coeff[0], coeff[1], coeff[2])));
        }
    }
    out
}

fn oracle_equivalences() -> Check {
    let mesh = Mesh::unit_cube(1).unwrap();
    let l = law();
    let mut rng = ChaCha8Rng::seed_from_u64(71);

    let mut conv: f64 = 0.0;
    for variant in [Variant::Standard, Variant::ModifiedUpwind] {
        let mut cfg = SchemeConfig::new(0.1, 1.0, variant, 0.0).unwrap();
        cfg.mu = 0.0;
        cfg.pressure = false;
        for _ in 0..20 {
            let state = random_state(&mesh, &mut rng, (0.5, 2.0), 1.0);
            let sources = Sources::zero(&mesh);
            let p = StepProblem::new(&mesh, &l, &cfg, &state, &sources, 1.0, 1.0);
            let (mass, mom) = brute_force_convection(&mesh, &state, variant, cfg.shift(mesh.h()));
            let rm = p.mass_residual(&state.rho, &state.u);
            let scale = max_of(mass.iter().map(|m| m.abs()));
            conv = conv.max(max_of(rm.iter().zip(&mass).map(|(a, b)| (a - b).abs() / scale)));
            let ru = p.momentum_residual(&state.rho, &state.u);
            let scale = max_of(mom.iter().map(|m| m.norm()));
            for (j, &f) in mesh.interior_faces().iter().enumerate() {
                let face = mesh.face(f);
                let expect = (mom[face.owner] + mom[face.neighbor.unwrap()]) / 4.0;
                conv = conv.max((ru[j] - expect).norm() / scale);
            }
        }
    }

    let mu = 0.7;
    let size = 3 * mesh.num_interior_faces();
    let mut dense = DMatrix::<f64>::zeros(size, size);
    for c in 0..mesh.num_cells() {
        let vol = mesh.geometry(c).volume;
        let g = cr_gradients(&mesh, c);
        for &(j, gj) in &g {
            for &(k, gk) in &g {
                for x in 0..3 {
                    dense[(3 * j + x, 3 * k + x)] += vol * mu * gj.dot(&gk);
                    for y in 0..3 {
                        dense[(3 * j + x, 3 * k + y)] += vol * mu / 3.0 * gj[x] * gk[y];
                    }
                }
            }
        }
    }
    // a huge time step removes the lumped mass term from the momentum block
    let mut cfg = SchemeConfig::new(1e30, mu, Variant::Standard, 0.0).unwrap();
    cfg.convection = false;
    cfg.pressure = false;
    let rest = StepState::rest(&mesh, 1.0);
    let sources = Sources::zero(&mesh);
    let p = StepProblem::new(&mesh, &l, &cfg, &rest, &sources, 1.0, 1.0);
    let jac = p.jacobian(&p.pack(&rest), Linearization::Newton);
    let nc = mesh.num_cells();
    let mut visc: f64 = 0.0;
    let scale = dense.amax();
    for r in 0..size {
        for c in 0..size {
            visc = visc.max((jac.get(nc + r, nc + c) - dense[(r, c)]).abs() / scale);
        }
    }

    let mesh2 = Mesh::unit_cube(2).unwrap();
    let mut div: f64 = 0.0;
    for _ in 0..5 {
        let q = CellField {
            values: (0..mesh2.num_cells()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let c: [f64; 9] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let v = |x: Vec3| {
            Vec3::new(
                c[0] * x.x * x.x + c[1] * x.y * x.z + c[2] * x.y,
                c[3] * x.y * x.y + c[4] * x.x * x.z + c[5],
                c[6] * x.z * x.z + c[7] * x.x * x.y + c[8] * x.x,
            )
        };
        let dv = |x: Vec3| 2.0 * (c[0] * x.x + c[3] * x.y + c[6] * x.z);
        let (lhs, rhs) = divergence_projection_check(&mesh2, &q, v, dv);
        div = div.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    ensure(
        conv <= 1e-12 && visc <= 1e-10 && div <= 1e-11,
        format!("convective {conv:.1e} (1e-12), viscous {visc:.1e} (1e-10), divergence identity {div:.1e} (1e-11)"),
    )
}

fn spread(values: &[f64]) -> f64 {
    max_of(values.iter().copied()) / values.iter().copied().fold(f64::INFINITY, f64::min)
}

fn space_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    let mesh = Mesh::unit_cube(2).unwrap();
    let a = Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let b = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let v = project_cr(&mesh, |x| a * x + b, false);
    let mut p1: f64 = 0.0;
    for c in 0..mesh.num_cells() {
        p1 = p1.max((v.cell_gradient(&mesh, c) - a).amax());
        for x in mesh.cell_points(c) {
            p1 = p1.max((v.evaluate(&mesh, c, x) - (a * x + b)).amax());
        }
    }

    let rule = TriangleRule::face();
    let mut random = CrField::zeros(&mesh, false);
    random.values.iter_mut().for_each(|x| *x = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)));
    let mut jump_mean: f64 = 0.0;
    for &f in mesh.interior_faces() {
        let jump = random.jump(&mesh, f, NormalChoice::Owner, &rule);
        let weights: Vec<f64> = rule.on_face(&mesh, f).map(|(_, w)| w).collect();
        let mean: Vec3 = jump.iter().zip(&weights).map(|(j, w)| j * *w).sum();
        let size: f64 = jump.iter().zip(&weights).map(|(j, w)| j.norm() * w).sum();
        jump_mean = jump_mean.max(mean.norm() / size);
    }

    // face-DOF vs L2 (both directions), Poincare and Sobolev ratios (upper bounds)
    let mut face_l2 = Vec::new();
    let mut poincare = Vec::new();
    let mut sobolev = Vec::new();
    for n in [1, 2, 4] {
        let mesh = Mesh::unit_cube(n).unwrap();
        let mut fields: Vec<CrField> = (0..4)
            .map(|_| {
                let mut v = CrField::zeros(&mesh, true);
                for &f in mesh.interior_faces() {
                    v.values[f] = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                }
                v
            })
            .collect();
        fields.push(Solution::Mms1.project(&mesh, 1.0).1);
        for v in &fields {
            let norms = broken_norms(&mesh, v, 2);
            face_l2.push(norms.face_dof / (norms.l2 * norms.l2));
            poincare.push(norms.l2 / norms.h1_seminorm);
            sobolev.push(norms.l6 / norms.h1_seminorm);
        }
    }
    let (s_face, max_poincare, max_sobolev) = (spread(&face_l2), max_of(poincare), max_of(sobolev));
    ensure(
        p1 <= 1e-12 && jump_mean <= 1e-12 && s_face <= 10.0 && max_poincare <= 1.0 && max_sobolev <= 2.0,
        format!(
            "P1 error {p1:.1e}, jump mean {jump_mean:.1e}, face/L2 spread {s_face:.2}, max L2/H1 {max_poincare:.3}, max L6/H1 {max_sobolev:.3}"
        ),
    )
}

fn convergence_order() -> Check {
    let spec = StudySpec {
        law: law(),
        mu: 1.0,
        variant: Variant::Standard,
        epsilon: 0.0,
        solver: SolverConfig::default(),
        solution: Solution::Mms1,
        t_end: 1.0,
        levels: vec![2, 4, 8],
        dt_rule: DtRule::Quadratic(1.0),
    };
    let table = convergence_study(&spec).map_err(|e| e.to_string())?;
    let errors: Vec<String> = table.rows.iter().map(|r| format!("{:.4e}", r.error_functional)).collect();
    let rates = table.eoc.clone().unwrap_or_default();
    let last = rates.last().copied().unwrap_or(f64::NAN);
    ensure(
        table.monotone() && last >= 0.4,
        format!("errors [{}], EOC {:?}, final pair {last:.3} (needs 0.4)", errors.join(", "), rates.iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>()),
    )
}

/// Largest `|F_mod - F_std| / |sigma|` over interior faces for a frozen
/// state with a density jump across `x = 1/2` and a weak bubble velocity.
fn frozen_flux_gap(n: usize, epsilon: f64) -> (f64, f64) {
    let mesh = Mesh::unit_cube(n).unwrap();
    let rho = CellField {
        values: (0..mesh.num_cells())
            .map(|c| if mesh.geometry(c).centroid.x < 0.5 { 1.0 } else { 2.0 })
            .collect(),
    };
    let u = project_cr(&mesh, |x| 0.01 * Solution::Mms1.velocity(std::f64::consts::FRAC_PI_2, x), true);
    let cfg = SchemeConfig::new(0.1, 1.0, Variant::ModifiedUpwind, epsilon).unwrap();
    let delta = cfg.shift(mesh.h());
    let mut gap: f64 = 0.0;
    for &f in mesh.interior_faces() {
        let face = mesh.face(f);
        let (k, l) = (face.owner, face.neighbor.unwrap());
        let un = u.values[f].dot(&face.normal);
        let std = upwind_flux(rho[k], rho[l], un, Variant::Standard, delta);
        let modified = upwind_flux(rho[k], rho[l], un, Variant::ModifiedUpwind, delta);
        gap = gap.max((modified - std).abs());
    }
    (mesh.h(), gap)
}

fn fitted_slope(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn variant_consistency() -> Check {
    let mut ok = true;
    let mut detail = Vec::new();
    for epsilon in [0.0, 0.5] {
        let points: Vec<(f64, f64)> = [4, 8, 16].iter().map(|&n| frozen_flux_gap(n, epsilon)).collect();
        let slope = fitted_slope(&points);
        ok &= (slope - (1.0 - epsilon)).abs() <= 0.15;
        detail.push(format!("eps={epsilon} slope {slope:.3}"));
    }
    let mut worst_mass: f64 = 0.0;
    let mut worst_energy = f64::NEG_INFINITY;
    let mut min_rho = f64::INFINITY;
    let mut min_stab = f64::INFINITY;
    for epsilon in [0.0, 0.5] {
        for (n, steps) in [(2, 20), (4, 10)] {
            let (_, spec, out) = mms_run(n, Variant::Stabilized, epsilon, 0.05, steps)?;
            worst_mass = worst_mass.max(max_of(out.ledger.mass_drift()));
            worst_energy = worst_energy.max(ledger_margin(&out, energy_slack(&spec.solver)));
            min_rho = min_rho.min(out.min_density);
            min_stab = min_stab.min(
                out.ledger
                    .rows
                    .windows(2)
                    .map(|w| w[1].stab_dissipation - w[0].stab_dissipation)
                    .fold(f64::INFINITY, f64::min),
            );
        }
    }
    ok &= worst_mass <= MASS_TOL && min_rho > 0.0 && worst_energy <= 0.0 && min_stab >= 0.0;
    detail.push(format!(
        "stabilized: drift {worst_mass:.1e}, min rho {min_rho:.3}, energy margin {worst_energy:.2e}, min stab increment {min_stab:.2e}"
    ));
    ensure(ok, detail.join("; "))
}

fn main() -> ExitCode {
    set_deterministic(true);
    let criteria: [Criterion; 7] = [
        ("1 mass conservation", mass_conservation),
        ("2 positivity", positivity),
        ("3 energy inequality", energy_inequality),
        ("4 oracle equivalences", oracle_equivalences),
        ("5 projection and space properties", space_properties),
        ("6 convergence order", convergence_order),
        ("7 variant consistency", variant_consistency),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {name}: {detail} ({:.1}s)", start.elapsed().as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
