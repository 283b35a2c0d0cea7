//! Implicit time integration: damped Newton solves of the box system,
//! adaptive step control, static rezoning triggers, and event detection
//! (rupture, steady state, horizon, ongoing thinning).

use crate::band::solve_banded;
use crate::error::{Result, SolverError};
use crate::keller::{
    assemble_system, initialize_box_state, AssemblyMode, BoxState, Forcing,
};
use crate::mesh::{compute_monitor, equidistribute, needs_rezone, pchip_resample, MeshPolicy};
use crate::model::{compute_fluid_mass, compute_salt_mass, ModelParams, SolutionState};
use serde::{Deserialize, Serialize};

/// Adaptive time-step and Newton-solve parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepController {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Step growth factor after easy Newton solves (> 1).
    pub growth: f64,
    /// Step shrink factor after Newton failures (< 1).
    pub shrink: f64,
    /// Residual sup-norm tolerance of the Newton solve.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Time-weighting of the scheme; 1/2 is the second-order midpoint rule.
    pub theta: f64,
    /// Rupture floor relative to the initial minimum thickness.
    pub rupture_floor_rel: f64,
    /// Steady-state detection threshold on the discrete time derivative.
    pub steady_tol: f64,
    /// Optional absolute floor on h_min at which the run stops early with a
    /// thinning event; 0 disables it.
    pub h_stop: f64,
    /// Optional proportional cap dt <= c * t, keeping steps roughly uniform
    /// in log time for algebraic-decay runs; 0 disables it.
    pub dt_max_rel_t: f64,
}

impl Default for StepController {
    fn default() -> Self {
        StepController {
            dt_init: 1e-6,
            dt_min: 1e-14,
            dt_max: 0.1,
            growth: 1.2,
            shrink: 0.5,
            newton_tol: 1e-10,
            max_newton_iters: 12,
            theta: 0.5,
            rupture_floor_rel: 1e-5,
            steady_tol: 1e-9,
            h_stop: 0.0,
            dt_max_rel_t: 0.0,
        }
    }
}

impl StepController {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SolverError::InvalidParameter(msg));
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return bad(format!(
                "need 0 < dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            ));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0 && self.growth > 1.0) {
            return bad(format!(
                "need 0 < shrink < 1 < growth, got shrink = {}, growth = {}",
                self.shrink, self.growth
            ));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [1/2, 1], got {}", self.theta));
        }
        if !(self.newton_tol > 0.0 && self.steady_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        Ok(())
    }
}

/// Convergence record of one Newton solve.
#[derive(Debug, Clone)]
pub struct NewtonInfo {
    pub iterations: usize,
    /// Residual sup-norms, starting with the initial guess.
    pub residuals: Vec<f64>,
}

/// Terminal event of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Event {
    /// Finite-time singularity: the thickness hit the rupture floor or the
    /// step size collapsed at `dt_min`.
    Rupture { t_stop: f64, x_c: f64 },
    /// The discrete time derivative stayed below the steady tolerance.
    SteadyState { t_stop: f64 },
    /// Reached the horizon without a qualifying event.
    HorizonReached,
    /// Reached the horizon (or the thinning floor) while the minimum
    /// thickness was still decreasing along an algebraic-looking tail.
    ThinningOngoing,
}

/// One row of the diagnostics time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub t: f64,
    pub dt: f64,
    pub q: f64,
    pub mass: f64,
    pub dm_dt: f64,
    pub h_min: f64,
    pub x_argmin: f64,
    pub max_abs_sx: f64,
    pub min_s: f64,
    pub max_s: f64,
    /// Largest pointwise excess of s over the local capacity.
    pub max_s_excess: f64,
    pub newton_iters: usize,
}

/// Record of one static rezone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemeshRecord {
    pub t: f64,
    /// Relative salt-mass drift introduced by the interpolation.
    pub q_drift_rel: f64,
}

/// Full outcome of a time integration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub snapshots: Vec<SolutionState>,
    pub series: Vec<DiagRow>,
    pub event: Event,
    pub final_state: SolutionState,
    pub warnings: Vec<String>,
    pub remeshes: Vec<RemeshRecord>,
    /// Bound-monitor flags raised during the run (maximum-principle
    /// violations beyond 10x the Newton tolerance).
    pub bound_flags: Vec<String>,
}

pub use crate::band::solve_banded as solve_banded_system;

/// Damped Newton iteration for one implicit step (or the steady system when
/// `mode` says so). Returns the converged state and the iteration record.
pub fn newton_solve(
    guess: &BoxState,
    mesh: &[f64],
    params: &ModelParams,
    mode: &AssemblyMode,
    newton_tol: f64,
    max_iters: usize,
    forcing: Option<&Forcing>,
) -> Result<(BoxState, NewtonInfo)> {
    let mut state = guess.clone();
    let mut residuals = Vec::with_capacity(max_iters + 1);
    let mut sys = assemble_system(&state, mesh, params, mode, forcing)?;
    let mut norm = sys.residual_sup_norm();
    residuals.push(norm);
    for iter in 0..max_iters {
        if norm <= newton_tol {
            return Ok((state, NewtonInfo { iterations: iter, residuals }));
        }
        let delta = solve_banded(sys.jacobian, &sys.residual)?;
        // Step halving on residual increase or nonpositive trial thickness.
        let mut lambda = 1.0f64;
        loop {
            let trial = state.updated(&delta, lambda);
            if trial.min_h() > 0.0 {
                if let Ok(trial_sys) = assemble_system(&trial, mesh, params, mode, forcing) {
                    let trial_norm = trial_sys.residual_sup_norm();
                    if trial_norm.is_finite() && (trial_norm < norm || trial_norm <= newton_tol) {
                        state = trial;
                        sys = trial_sys;
                        norm = trial_norm;
                        residuals.push(norm);
                        break;
                    }
                }
            }
            lambda *= 0.5;
            if lambda < 2.0f64.powi(-20) {
                return Err(SolverError::NewtonFailure(format!(
                    "damping floor reached at residual {norm:.3e}"
                )));
            }
        }
    }
    if norm <= newton_tol {
        let iterations = residuals.len() - 1;
        return Ok((state, NewtonInfo { iterations, residuals }));
    }
    Err(SolverError::NewtonFailure(format!(
        "no convergence in {max_iters} iterations, residual {norm:.3e}"
    )))
}

/// Attempt one step of size at most `dt`; shrink on failure. Returns the new
/// state, the accepted dt, the proposed next dt, and the Newton record.
pub fn advance_step(
    state: &BoxState,
    mesh: &[f64],
    params: &ModelParams,
    ctrl: &StepController,
    t: f64,
    dt: f64,
    forcing: Option<&Forcing>,
) -> Result<(BoxState, f64, f64, NewtonInfo)> {
    let mut dt = dt.min(ctrl.dt_max);
    loop {
        let mode = AssemblyMode::Dynamic { old: state, dt, theta: ctrl.theta, t_old: t };
        match newton_solve(
            state,
            mesh,
            params,
            &mode,
            ctrl.newton_tol,
            ctrl.max_newton_iters,
            forcing,
        ) {
            Ok((new_state, info)) => {
                let next = if info.iterations <= 4 {
                    (dt * ctrl.growth).min(ctrl.dt_max)
                } else {
                    dt
                };
                return Ok((new_state, dt, next, info));
            }
            Err(SolverError::NewtonFailure(_)) => {
                dt *= ctrl.shrink;
                if dt < ctrl.dt_min {
                    return Err(SolverError::StepUnderflow { dt, dt_min: ctrl.dt_min });
                }
            }
            Err(e) => return Err(e),
        }
    }
}

fn diag_row(
    box_state: &BoxState,
    mesh: &[f64],
    params: &ModelParams,
    t: f64,
    dt: f64,
    newton_iters: usize,
) -> DiagRow {
    let sol = box_state.to_solution(mesh, t);
    let q = compute_salt_mass(&sol);
    let (mass, dm_dt) = compute_fluid_mass(&sol, params);
    let mut h_min = f64::INFINITY;
    let mut x_argmin = mesh[0];
    let mut min_s = f64::INFINITY;
    let mut max_s = f64::NEG_INFINITY;
    let mut max_s_excess = f64::NEG_INFINITY;
    for i in 0..mesh.len() {
        if box_state.h[i] < h_min {
            h_min = box_state.h[i];
            x_argmin = mesh[i];
        }
        min_s = min_s.min(box_state.s[i]);
        max_s = max_s.max(box_state.s[i]);
        let sb = params.sbar.eval_unchecked(mesh[i], params.domain_length);
        max_s_excess = max_s_excess.max(box_state.s[i] - sb);
    }
    DiagRow {
        t,
        dt,
        q,
        mass,
        dm_dt,
        h_min,
        x_argmin,
        max_abs_sx: box_state.max_abs_w(),
        min_s,
        max_s,
        max_s_excess,
        newton_iters,
    }
}

/// Transfer a full box state onto a new mesh. All six components are
/// interpolated: re-deriving the higher derivatives from interpolated `h`
/// would amplify the interpolant's curvature jumps into O(1/dx) noise in q.
/// The midpoint relations are re-imposed at the next implicit solve.
fn remesh_box(state: &BoxState, old_mesh: &[f64], new_mesh: &[f64]) -> BoxState {
    BoxState {
        h: pchip_resample(old_mesh, &state.h, new_mesh),
        s: pchip_resample(old_mesh, &state.s, new_mesh),
        w: pchip_resample(old_mesh, &state.w, new_mesh),
        k: pchip_resample(old_mesh, &state.k, new_mesh),
        p: pchip_resample(old_mesh, &state.p, new_mesh),
        q: pchip_resample(old_mesh, &state.q, new_mesh),
    }
}

/// Log-log slope of h_min over its final decade of decrease. Algebraic
/// thinning gives a finite slope near -1/(m-1); a finite-time rupture gives a
/// diverging slope because time stalls at t_c while h_min keeps falling.
fn tail_loglog_slope(series: &[DiagRow]) -> Option<f64> {
    let last = series.last()?;
    if !(last.h_min > 0.0 && last.t > 0.0) {
        return None;
    }
    let cap = 10.0 * last.h_min;
    let start = series
        .iter()
        .find(|r| r.t > 0.0 && r.h_min <= cap && r.h_min > last.h_min)?;
    let dt_log = (last.t / start.t).ln();
    if dt_log <= 0.0 {
        return None;
    }
    Some((last.h_min / start.h_min).ln() / dt_log)
}

/// Trailing-window check used to distinguish ongoing algebraic thinning from
/// a run that merely hit its horizon.
fn thinning_tail(series: &[DiagRow]) -> bool {
    if series.len() < 12 {
        return false;
    }
    let window = (series.len() / 4).max(10);
    let tail = &series[series.len() - window..];
    let mut non_increasing = true;
    for pair in tail.windows(2) {
        if pair[1].h_min > pair[0].h_min * (1.0 + 1e-12) {
            non_increasing = false;
            break;
        }
    }
    let first = tail.first().unwrap().h_min;
    let last = tail.last().unwrap().h_min;
    non_increasing && last < 0.999 * first && last < 0.9 * series[0].h_min
}

/// Integrate the system from `initial` until an event or the horizon `t_end`.
pub fn integrate(
    initial: &SolutionState,
    params: &ModelParams,
    ctrl: &StepController,
    policy: &MeshPolicy,
    t_end: f64,
    output_times: &[f64],
) -> Result<RunResult> {
    params.validate()?;
    ctrl.validate()?;
    let mut warnings = Vec::new();
    let sup_sbar = params.sbar.sup_norm(params.domain_length);
    let h0_min = initial.min_h();
    if h0_min < params.height_floor {
        warnings.push(format!(
            "initial thickness {h0_min} below the admissible floor {}",
            params.height_floor
        ));
    }
    let s0_min = initial.s.iter().cloned().fold(f64::INFINITY, f64::min);
    let s0_max = initial.s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if s0_min < params.salt_floor {
        warnings.push(format!(
            "initial osmolarity {s0_min} below the admissible floor {}",
            params.salt_floor
        ));
    }
    if s0_max > sup_sbar {
        warnings.push(format!(
            "initial osmolarity {s0_max} exceeds the capacity sup-norm {sup_sbar}"
        ));
    }

    let mut outputs: Vec<f64> = output_times.to_vec();
    outputs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    outputs.retain(|&t| t >= 0.0 && t <= t_end);
    let mut out_idx = 0usize;

    let rupture_floor = ctrl.rupture_floor_rel * h0_min;
    // Extra numerical damping once the film is deep into the endgame.
    let endgame_floor = 1e-3 * h0_min;

    let mut mesh = initial.mesh.clone();
    let mut box_state = initialize_box_state(initial)?;
    let mut t = 0.0f64;
    let mut dt_next = ctrl.dt_init;
    let mut series = vec![diag_row(&box_state, &mesh, params, t, 0.0, 0)];
    let mut snapshots = Vec::new();
    let mut remeshes = Vec::new();
    let mut bound_flags = Vec::new();
    let mut steady_run = 0usize;
    let mut accepted = 0usize;
    let time_scale = t_end.max(1.0);

    while out_idx < outputs.len() && outputs[out_idx] <= 1e-14 * time_scale {
        snapshots.push(box_state.to_solution(&mesh, t));
        out_idx += 1;
    }

    let event = loop {
        if t >= t_end - 1e-12 * time_scale {
            break if thinning_tail(&series) {
                Event::ThinningOngoing
            } else {
                Event::HorizonReached
            };
        }
        // Clamp the step onto the next output time and the horizon.
        let mut dt_try = dt_next.min(ctrl.dt_max);
        if ctrl.dt_max_rel_t > 0.0 && t > 0.0 {
            dt_try = dt_try.min((ctrl.dt_max_rel_t * t).max(ctrl.dt_init));
        }
        let mut remaining = t_end - t;
        if out_idx < outputs.len() {
            remaining = remaining.min(outputs[out_idx] - t);
        }
        if remaining > 0.0 {
            dt_try = dt_try.min(remaining.max(ctrl.dt_min));
        }

        let mut step_ctrl = *ctrl;
        if series.last().unwrap().h_min < endgame_floor {
            step_ctrl.theta = 1.0;
        }

        match advance_step(&box_state, &mesh, params, &step_ctrl, t, dt_try, None) {
            Ok((new_state, dt_acc, dt_prop, info)) => {
                // Steady-state detection on the discrete time derivative.
                let mut sup_rate = 0.0f64;
                for i in 0..mesh.len() {
                    sup_rate = sup_rate.max((new_state.h[i] - box_state.h[i]).abs());
                    sup_rate = sup_rate.max((new_state.s[i] - box_state.s[i]).abs());
                }
                sup_rate /= dt_acc;
                box_state = new_state;
                t += dt_acc;
                dt_next = dt_prop;
                accepted += 1;
                let row = diag_row(&box_state, &mesh, params, t, dt_acc, info.iterations);
                if row.min_s < params.salt_floor.min(s0_min) - 10.0 * ctrl.newton_tol {
                    bound_flags.push(format!(
                        "t = {t:.6e}: min s = {} undercuts the admissible floor",
                        row.min_s
                    ));
                }
                if row.max_s > sup_sbar + 10.0 * ctrl.newton_tol {
                    bound_flags.push(format!(
                        "t = {t:.6e}: max s = {} exceeds the capacity sup-norm {sup_sbar}",
                        row.max_s
                    ));
                }
                series.push(row);

                while out_idx < outputs.len() && t >= outputs[out_idx] - 1e-12 * time_scale {
                    snapshots.push(box_state.to_solution(&mesh, t));
                    out_idx += 1;
                }

                if row.h_min < rupture_floor {
                    break Event::Rupture { t_stop: t, x_c: row.x_argmin };
                }
                // The thinning floor stops only genuinely algebraic decay; a
                // rupture trajectory (diverging log-log slope) keeps going
                // until it crosses the much lower rupture floor.
                if ctrl.h_stop > 0.0 && row.h_min < ctrl.h_stop {
                    if let Some(slope) = tail_loglog_slope(&series) {
                        if slope.abs() <= 8.0 && thinning_tail(&series) {
                            break Event::ThinningOngoing;
                        }
                    }
                }
                if sup_rate < ctrl.steady_tol {
                    steady_run += 1;
                    if steady_run >= 3 {
                        break Event::SteadyState { t_stop: t };
                    }
                } else {
                    steady_run = 0;
                }

                // Static rezoning.
                if policy.adaptive && accepted % policy.rezone_every == 0 {
                    let sol = box_state.to_solution(&mesh, t);
                    let monitor = compute_monitor(&sol, policy);
                    if needs_rezone(&mesh, &monitor, policy.rezone_ratio) {
                        let new_mesh = equidistribute(&mesh, &monitor, mesh.len())?;
                        let q_before = compute_salt_mass(&sol);
                        let moved = remesh_box(&box_state, &mesh, &new_mesh);
                        let q_after =
                            compute_salt_mass(&moved.to_solution(&new_mesh, t));
                        remeshes.push(RemeshRecord {
                            t,
                            q_drift_rel: ((q_after - q_before) / q_before).abs(),
                        });
                        mesh = new_mesh;
                        box_state = moved;
                    }
                }
            }
            Err(SolverError::StepUnderflow { .. }) => {
                let last = series.last().unwrap();
                break Event::Rupture { t_stop: t, x_c: last.x_argmin };
            }
            Err(e) => return Err(e),
        }
    };

    Ok(RunResult {
        snapshots,
        series,
        event,
        final_state: box_state.to_solution(&mesh, t),
        warnings,
        remeshes,
        bound_flags,
    })
}
