//! Cross-module invariants: steady states are fixed points of the time
//! integrator, and static rezoning preserves the salt mass to interpolation
//! accuracy.

use tearsim_core::equilibrium::{seed_equilibrium, ContinuationSettings, EquilibriumProblem};
use tearsim_core::integrate::{integrate, StepController};
use tearsim_core::mesh::{compute_monitor, equidistribute, remesh, MeshPolicy};
use tearsim_core::model::{
    compute_salt_mass, uniform_mesh, ModelParams, SbarProfile, SolutionState,
};

fn step_params(m: f64, n: f64, xi: f64) -> ModelParams {
    ModelParams {
        m,
        n,
        epsilon: 0.0,
        domain_length: 2.0,
        sbar: SbarProfile::Step { lo: 2.0, hi: 100.0, xi },
        salt_floor: 1.0,
        height_floor: 1.0,
    }
}

#[test]
fn equilibrium_is_fixed_point_of_integrate() {
    // Converge the steady problem at a mild shift, then hand the profile to
    // the integrator: all diagnostics must stay constant at solver accuracy.
    let params = step_params(3.5, 4.5, 0.2);
    let mesh = uniform_mesh(201, 2.0);
    let problem = EquilibriumProblem { params: params.clone(), q0: 2.0, mesh };
    let eq = seed_equilibrium(&problem, &ContinuationSettings::default()).unwrap();
    assert!(eq.residual <= 1e-10);

    let ctrl = StepController {
        dt_max: 0.05,
        dt_init: 0.05,
        steady_tol: 1e-300,
        ..StepController::default()
    };
    let policy = MeshPolicy { adaptive: false, ..MeshPolicy::default() };
    // Horizon sized for (at least) 100 accepted steps at dt_max.
    let run = integrate(&eq.state, &params, &ctrl, &policy, 5.0, &[]).unwrap();
    assert!(run.series.len() >= 100, "want 100 steps, got {}", run.series.len());
    let first = &run.series[0];
    let tol = 10.0 * ctrl.newton_tol * 201.0;
    for row in &run.series {
        assert!((row.q - first.q).abs() <= tol, "Q drifted: {} vs {}", row.q, first.q);
        assert!((row.mass - first.mass).abs() <= 1e-6, "M drifted");
        assert!((row.h_min - first.h_min).abs() <= 1e-6, "h_min drifted");
        assert!((row.max_s - first.max_s).abs() <= 1e-6, "max s drifted");
    }
}

#[test]
fn remesh_preserves_salt_mass_on_run_snapshot() {
    // Advance the reference configuration a little so the state carries real
    // structure, then rezone onto the equidistributed mesh and measure the
    // interpolation-induced salt drift.
    let params = step_params(3.5, 4.5, 0.5);
    let initial = SolutionState::uniform_constant(801, 2.0, 1.0, 1.0);
    let ctrl = StepController { dt_max: 5e-3, ..StepController::default() };
    let policy = MeshPolicy { adaptive: false, ..MeshPolicy::default() };
    let run = integrate(&initial, &params, &ctrl, &policy, 0.2, &[]).unwrap();
    let state = run.final_state;

    let monitor = compute_monitor(&state, &MeshPolicy::default());
    let new_mesh = equidistribute(&state.mesh, &monitor, state.len()).unwrap();
    let moved = remesh(&state, &new_mesh).unwrap();
    let q_before = compute_salt_mass(&state);
    let q_after = compute_salt_mass(&moved);
    let drift = ((q_after - q_before) / q_before).abs();
    assert!(drift <= 1e-6, "remesh salt drift {drift:.3e}");
    assert!(moved.h.iter().all(|&h| h > 0.0));
}
