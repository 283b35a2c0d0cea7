//! Parameter sweeps over the mobility exponent: fan out independent runs,
//! attempt the equilibrium family from the largest exponent downward, and
//! classify each member's regime.

use crate::analysis::{
    classify_regime, fit_thinning_rate, RegimeLabel, SteadyReference, ThinningFit,
};
use crate::equilibrium::{
    apply_param, continue_branch, seed_equilibrium, solve_equilibrium, ContinuationParam,
    ContinuationSettings, EquilibriumProblem, SteadySolution,
};
use crate::error::Result;
use crate::integrate::{integrate, Event, RunResult, StepController};
use crate::mesh::{pchip_resample, MeshPolicy};
use crate::model::{uniform_mesh, ModelParams, SolutionState};
use serde::{Deserialize, Serialize};

/// Sweep description. Each member runs the model with `m` from `m_values`
/// and `n = m + n_offset` from identical constant initial data.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// Base parameters; `m` and `n` are overridden per member.
    pub base: ModelParams,
    pub m_values: Vec<f64>,
    pub n_offset: f64,
    /// Constant initial data `(h0, s0)`.
    pub initial: (f64, f64),
    pub n_nodes: usize,
    pub t_end: f64,
    /// Controller template. The thinning floor `h_stop` is applied only for
    /// members with `m > 1`, where algebraic thinning is possible.
    pub controller: StepController,
    pub policy: MeshPolicy,
    /// Sup-norm tolerance when matching a run's final state against an
    /// equilibrium for classification.
    pub classify_tol: f64,
    pub threads: usize,
}

/// Equilibrium evidence attached to a sweep member.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EquilibriumEvidence {
    pub min_h_eq: f64,
    pub steady_residual: f64,
    /// Sup-norm distance between the run's final state and the equilibrium.
    pub sup_diff: f64,
}

/// One classified sweep member.
#[derive(Debug)]
pub struct SweepMember {
    pub m: f64,
    pub n: f64,
    pub run: RunResult,
    pub fit: Option<ThinningFit>,
    pub equilibrium: Option<EquilibriumEvidence>,
    pub label: RegimeLabel,
}

fn member_params(spec: &SweepSpec, m: f64) -> ModelParams {
    ModelParams { m, n: m + spec.n_offset, ..spec.base.clone() }
}

fn member_controller(spec: &SweepSpec, m: f64) -> StepController {
    let mut ctrl = spec.controller;
    if m <= 1.0 {
        // Algebraic thinning cannot occur for m <= 1; the floor would only
        // truncate a rupture trajectory.
        ctrl.h_stop = 0.0;
    }
    ctrl
}

fn run_member(spec: &SweepSpec, m: f64) -> Result<RunResult> {
    let params = member_params(spec, m);
    let state = SolutionState::uniform_constant(
        spec.n_nodes,
        params.domain_length,
        spec.initial.0,
        spec.initial.1,
    );
    integrate(&state, &params, &member_controller(spec, m), &spec.policy, spec.t_end, &[])
}

/// Equilibria for the sweep's m grid. The steady family is traced once by
/// mobility continuation from the largest m downward; its touchdown marks
/// the end of the family, and only grid values above it are reported. A bare
/// warm-started Newton walk would instead occasionally converge onto
/// under-resolved spurious steady states below the touchdown.
pub fn equilibrium_family(spec: &SweepSpec, q0: f64) -> Vec<Option<SteadySolution>> {
    let mut out: Vec<Option<SteadySolution>> = vec![None; spec.m_values.len()];
    if (spec.n_offset - 1.0).abs() > 1e-12 {
        // The steady family is only traced for the n = m + 1 tie used by the
        // mobility continuation.
        return out;
    }
    let m_max = spec.m_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let m_min = spec.m_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(m_max > 1.0) {
        return out;
    }
    let mesh = uniform_mesh(spec.n_nodes, spec.base.domain_length);
    let base_params = match apply_param(ContinuationParam::MobilityM, m_max, &spec.base) {
        Ok(p) => p,
        Err(_) => return out,
    };
    let base = EquilibriumProblem { params: base_params, q0, mesh: mesh.clone() };
    let settings = ContinuationSettings {
        initial_step: 0.1,
        max_step: 0.25,
        ..ContinuationSettings::default()
    };
    let seed = match seed_equilibrium(&base, &settings) {
        Ok(s) => s,
        Err(_) => return out,
    };
    let branch = match continue_branch(
        &base,
        ContinuationParam::MobilityM,
        (m_max, m_min.max(1.0 + 1e-6)),
        &seed,
        &settings,
    ) {
        Ok(b) => b,
        Err(_) => return out,
    };
    // The family exists strictly above the last traced point unless the
    // branch ran out of range (then everything on the grid is covered).
    let boundary = match branch.end {
        crate::equilibrium::BranchEnd::RangeEnd => f64::NEG_INFINITY,
        _ => branch.points.last().map(|p| p.value).unwrap_or(f64::INFINITY),
    };
    for (idx, &m) in spec.m_values.iter().enumerate() {
        if !(m > boundary + 1e-9) {
            continue;
        }
        // Warm-start a precise solve at the grid value from the nearest
        // branch point.
        let nearest = branch
            .points
            .iter()
            .min_by(|a, b| {
                (a.value - m).abs().partial_cmp(&(b.value - m).abs()).unwrap()
            })
            .expect("branch has points");
        let params = match apply_param(ContinuationParam::MobilityM, m, &spec.base) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let problem = EquilibriumProblem { params, q0, mesh: mesh.clone() };
        if let Ok(sol) = solve_equilibrium(&problem, &nearest.solution) {
            // Reject anything at or below the touchdown scale.
            if sol.box_state.min_h() > settings.h_fold_floor {
                out[idx] = Some(sol);
            }
        }
    }
    out
}

fn final_sup_diff(run: &RunResult, eq: &SteadySolution) -> f64 {
    let fs = &run.final_state;
    let href = pchip_resample(&eq.state.mesh, &eq.state.h, &fs.mesh);
    let sref = pchip_resample(&eq.state.mesh, &eq.state.s, &fs.mesh);
    let mut sup = 0.0f64;
    for i in 0..fs.mesh.len() {
        sup = sup.max((href[i] - fs.h[i]).abs());
        sup = sup.max((sref[i] - fs.s[i]).abs());
    }
    sup
}

/// Run the whole sweep and classify every member.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepMember>> {
    let n_members = spec.m_values.len();
    let mut runs: Vec<Option<Result<RunResult>>> = Vec::with_capacity(n_members);
    runs.resize_with(n_members, || None);

    let workers = spec.threads.max(1).min(n_members.max(1));
    if workers <= 1 {
        for (i, slot) in runs.iter_mut().enumerate() {
            *slot = Some(run_member(spec, spec.m_values[i]));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<Result<RunResult>>>> =
            (0..n_members).map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= n_members {
                        break;
                    }
                    let result = run_member(spec, spec.m_values[i]);
                    *slots[i].lock().unwrap() = Some(result);
                });
            }
        });
        for (slot, cell) in runs.iter_mut().zip(slots) {
            *slot = cell.into_inner().unwrap();
        }
    }

    // Steady family traced once, from the largest m downward.
    let q0 = {
        let st = SolutionState::uniform_constant(
            spec.n_nodes,
            spec.base.domain_length,
            spec.initial.0,
            spec.initial.1,
        );
        crate::model::compute_salt_mass(&st)
    };
    let family = equilibrium_family(spec, q0);

    let mut members = Vec::with_capacity(n_members);
    for (i, run) in runs.into_iter().enumerate() {
        let m = spec.m_values[i];
        let run = run.expect("slot filled")?;
        let params = member_params(spec, m);
        let fit = if m > 1.0 && matches!(run.event, Event::ThinningOngoing) {
            let series: Vec<(f64, f64)> = run.series.iter().map(|r| (r.t, r.h_min)).collect();
            let x_c = run.series.last().map(|r| r.x_argmin).unwrap_or(0.0);
            let eta = params.sbar.eval_unchecked(x_c, params.domain_length);
            fit_thinning_rate(&series, m, eta).ok().flatten()
        } else {
            None
        };
        let equilibrium = family[i].as_ref().map(|eq| EquilibriumEvidence {
            min_h_eq: eq.box_state.min_h(),
            steady_residual: eq.residual,
            sup_diff: final_sup_diff(&run, eq),
        });
        let reference = family[i].as_ref().map(|eq| SteadyReference {
            state: eq.state.clone(),
            steady_residual: eq.residual,
            compare_tol: spec.classify_tol,
        });
        let label = classify_regime(&run, reference.as_ref(), fit.as_ref());
        members.push(SweepMember { m, n: m + spec.n_offset, run, fit, equilibrium, label });
    }
    Ok(members)
}
