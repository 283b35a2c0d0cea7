//! Steady states of the coupled system as a constrained two-point BVP, and
//! pseudo-arclength continuation of equilibrium branches.
//!
//! Dropping the time derivatives and integrating the thickness equation with
//! zero-flux ends makes one combination of the salt rows linearly dependent
//! at solutions; the prescribed total salt mass restores rank. The system is
//! solved in bordered form: a scalar multiplier acting as a uniform source in
//! the salt equation (it must vanish at solutions and is monitored as a
//! consistency check) plus the integral constraint row.

use crate::band::BorderedBandSystem;
use crate::error::{Result, SolverError};
use crate::keller::{
    assemble_system, initialize_box_state, row_index, AssemblyMode, BoxState, RowKind,
    UNKNOWNS_PER_NODE,
};
use crate::model::{ModelParams, SbarProfile, SolutionState};
use serde::{Deserialize, Serialize};

/// Steady problem: parameters, target salt mass, and the mesh.
#[derive(Debug, Clone)]
pub struct EquilibriumProblem {
    pub params: ModelParams,
    pub q0: f64,
    pub mesh: Vec<f64>,
}

/// Converged steady solution.
#[derive(Debug, Clone)]
pub struct SteadySolution {
    pub state: SolutionState,
    pub box_state: BoxState,
    /// Bordering multiplier; vanishes at true solutions.
    pub multiplier: f64,
    /// Residual sup-norm of the augmented system at the returned state.
    pub residual: f64,
}

/// Trapezoid weights of the mesh.
fn quad_weights(mesh: &[f64]) -> Vec<f64> {
    let n = mesh.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let half = 0.5 * (mesh[i + 1] - mesh[i]);
        w[i] += half;
        w[i + 1] += half;
    }
    w
}

/// Assembled augmented steady system: residual of length `6N + 1` (core rows
/// with the multiplier source folded in, then the mass constraint) and the
/// bordered Jacobian.
pub struct SteadyAssembly {
    pub residual: Vec<f64>,
    pub system: BorderedBandSystem,
}

impl EquilibriumProblem {
    pub fn n_nodes(&self) -> usize {
        self.mesh.len()
    }

    fn salt_mass_of(&self, state: &BoxState) -> f64 {
        let w = quad_weights(&self.mesh);
        (0..self.mesh.len()).map(|i| w[i] * state.h[i] * state.s[i]).sum()
    }

    /// Core steady residual with the multiplier source, plus the constraint
    /// row value.
    pub fn steady_residual(&self, state: &BoxState, mu: f64) -> Result<Vec<f64>> {
        let sys = assemble_system(state, &self.mesh, &self.params, &AssemblyMode::Steady, None)?;
        let mut res = sys.residual;
        for cell in 0..self.mesh.len() - 1 {
            res[row_index(RowKind::EvolS, cell)] += mu;
        }
        res.push(self.salt_mass_of(state) - self.q0);
        Ok(res)
    }

    /// Bordered Jacobian and residual at `(state, mu)`.
    pub fn assemble_steady_system(&self, state: &BoxState, mu: f64) -> Result<SteadyAssembly> {
        let n = self.mesh.len();
        let dim = UNKNOWNS_PER_NODE * n;
        let sys = assemble_system(state, &self.mesh, &self.params, &AssemblyMode::Steady, None)?;
        let mut residual = sys.residual;
        let mut col_b = vec![0.0; dim];
        for cell in 0..n - 1 {
            let r = row_index(RowKind::EvolS, cell);
            residual[r] += mu;
            col_b[r] = 1.0;
        }
        let w = quad_weights(&self.mesh);
        let mut row_c = vec![0.0; dim];
        for i in 0..n {
            row_c[UNKNOWNS_PER_NODE * i] = w[i] * state.s[i];
            row_c[UNKNOWNS_PER_NODE * i + 1] = w[i] * state.h[i];
        }
        residual.push(self.salt_mass_of(state) - self.q0);
        Ok(SteadyAssembly {
            residual,
            system: BorderedBandSystem {
                core: sys.jacobian,
                cols: vec![col_b],
                rows: vec![row_c],
                corner: vec![0.0],
            },
        })
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Damped Newton on the bordered steady system.
pub fn solve_equilibrium(
    problem: &EquilibriumProblem,
    guess: &SolutionState,
) -> Result<SteadySolution> {
    let box_guess = initialize_box_state(guess)?;
    solve_equilibrium_from_box(problem, &box_guess, 0.0)
}

pub fn solve_equilibrium_from_box(
    problem: &EquilibriumProblem,
    guess: &BoxState,
    mu_guess: f64,
) -> Result<SteadySolution> {
    const TOL: f64 = 1e-10;
    const MAX_ITERS: usize = 40;
    let dim = UNKNOWNS_PER_NODE * problem.n_nodes();
    let mut state = guess.clone();
    let mut mu = mu_guess;
    let mut assembly = problem.assemble_steady_system(&state, mu)?;
    let mut norm = sup_norm(&assembly.residual);
    for _ in 0..MAX_ITERS {
        if norm <= TOL {
            return Ok(SteadySolution {
                state: state.to_solution(&problem.mesh, 0.0),
                box_state: state,
                multiplier: mu,
                residual: norm,
            });
        }
        let rhs: Vec<f64> = assembly.residual.iter().map(|r| -r).collect();
        let delta = assembly.system.solve(&rhs)?;
        let mut lambda = 1.0f64;
        loop {
            let trial = state.updated(&delta[..dim], lambda);
            let trial_mu = mu + lambda * delta[dim];
            if trial.min_h() > 0.0 {
                if let Ok(trial_asm) = problem.assemble_steady_system(&trial, trial_mu) {
                    let trial_norm = sup_norm(&trial_asm.residual);
                    if trial_norm.is_finite() && (trial_norm < norm || trial_norm <= TOL) {
                        state = trial;
                        mu = trial_mu;
                        assembly = trial_asm;
                        norm = trial_norm;
                        break;
                    }
                }
            }
            lambda *= 0.5;
            if lambda < 2.0f64.powi(-20) {
                return Err(SolverError::NewtonFailure(format!(
                    "steady damping floor at residual {norm:.3e}"
                )));
            }
        }
    }
    if norm <= TOL {
        return Ok(SteadySolution {
            state: state.to_solution(&problem.mesh, 0.0),
            box_state: state,
            multiplier: mu,
            residual: norm,
        });
    }
    Err(SolverError::NewtonFailure(format!(
        "steady Newton stalled at residual {norm:.3e}"
    )))
}

/// Branch continuation parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContinuationParam {
    /// Shift coefficient of a step capacity profile.
    Xi,
    /// Mobility exponent m with n = m + 1 tied to it.
    MobilityM,
    /// Value of a constant capacity profile.
    SigmaConst,
}

impl std::fmt::Display for ContinuationParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ContinuationParam::Xi => f.write_str("xi"),
            ContinuationParam::MobilityM => f.write_str("m"),
            ContinuationParam::SigmaConst => f.write_str("sigma"),
        }
    }
}

/// Substitute the continuation parameter into the model.
pub fn apply_param(
    param: ContinuationParam,
    value: f64,
    base: &ModelParams,
) -> Result<ModelParams> {
    let mut p = base.clone();
    match param {
        ContinuationParam::Xi => match p.sbar {
            SbarProfile::Step { lo, hi, .. } => {
                p.sbar = SbarProfile::Step { lo, hi, xi: value };
            }
            _ => {
                return Err(SolverError::InvalidParameter(
                    "xi continuation requires a step capacity profile".into(),
                ))
            }
        },
        ContinuationParam::MobilityM => {
            p.m = value;
            p.n = value + 1.0;
        }
        ContinuationParam::SigmaConst => {
            p.sbar = SbarProfile::Constant { value };
        }
    }
    p.validate()?;
    Ok(p)
}

/// One recorded branch point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchPoint {
    pub value: f64,
    pub min_h: f64,
    pub argmin_x: f64,
    pub max_s: f64,
    pub multiplier: f64,
    pub solution: SolutionState,
}

/// Why the branch stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BranchEnd {
    RangeEnd,
    /// Minimum equilibrium thickness fell below the fold floor.
    Touchdown { last_min_h: f64 },
    /// Corrector failed at the minimal arclength step.
    CorrectorFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumBranch {
    pub parameter: ContinuationParam,
    pub points: Vec<BranchPoint>,
    pub end: BranchEnd,
    pub arclength_steps: usize,
}

/// Continuation controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSettings {
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub max_newton_iters: usize,
    pub newton_tol: f64,
    /// Branch terminates when min h_eq falls below this floor.
    pub h_fold_floor: f64,
    pub max_points: usize,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        ContinuationSettings {
            initial_step: 0.02,
            max_step: 0.1,
            min_step: 1e-8,
            max_newton_iters: 14,
            newton_tol: 1e-10,
            h_fold_floor: 1e-3,
            max_points: 20000,
        }
    }
}

struct AugmentedState {
    u: Vec<f64>,
    mu: f64,
    rho: f64,
}

/// Problem pieces at a given parameter value.
fn problem_at(
    base: &EquilibriumProblem,
    param: ContinuationParam,
    rho: f64,
) -> Result<EquilibriumProblem> {
    Ok(EquilibriumProblem {
        params: apply_param(param, rho, &base.params)?,
        q0: base.q0,
        mesh: base.mesh.clone(),
    })
}

/// Finite-difference parameter sensitivity of the augmented residual
/// (constraint row excluded; it does not depend on the parameter).
///
/// The step-capacity shift is special: the residual only sees it through
/// which cell midpoints fall inside the window, so it is piecewise constant
/// in the shift and its derivative is zero between crossings. A one-sided
/// difference straddling a crossing would instead produce a spurious
/// delta-like column, so the zero derivative is returned exactly; the
/// predictor then advances the parameter alone and the corrector runs as a
/// natural-parameter Newton solve.
fn residual_rho_derivative(
    base: &EquilibriumProblem,
    param: ContinuationParam,
    state: &BoxState,
    mu: f64,
    rho: f64,
) -> Result<Vec<f64>> {
    let dim = UNKNOWNS_PER_NODE * base.n_nodes();
    if param == ContinuationParam::Xi {
        return Ok(vec![0.0; dim]);
    }
    let delta = 1e-7 * rho.abs().max(1.0);
    let plus = problem_at(base, param, rho + delta)?.steady_residual(state, mu)?;
    let here = problem_at(base, param, rho)?.steady_residual(state, mu)?;
    Ok(plus
        .iter()
        .zip(&here)
        .take(dim)
        .map(|(p, h)| (p - h) / delta)
        .collect())
}

fn branch_point(problem: &EquilibriumProblem, sol: &SteadySolution, value: f64) -> BranchPoint {
    let mut min_h = f64::INFINITY;
    let mut argmin_x = problem.mesh[0];
    let mut max_s = f64::NEG_INFINITY;
    for i in 0..problem.mesh.len() {
        if sol.box_state.h[i] < min_h {
            min_h = sol.box_state.h[i];
            argmin_x = problem.mesh[i];
        }
        max_s = max_s.max(sol.box_state.s[i]);
    }
    BranchPoint {
        value,
        min_h,
        argmin_x,
        max_s,
        multiplier: sol.multiplier,
        solution: sol.state.clone(),
    }
}

/// Corrector: Newton on the augmented system with a frozen arclength row
/// `tau . (X - X_pred) = 0`.
#[allow(clippy::too_many_arguments)]
fn correct(
    base: &EquilibriumProblem,
    param: ContinuationParam,
    x: &AugmentedState,
    tau: &[f64],
    x_pred: (&[f64], f64, f64),
    settings: &ContinuationSettings,
) -> Result<AugmentedState> {
    let dim = x.u.len();
    let mut u = BoxState::from_vec(&x.u);
    let mut mu = x.mu;
    let mut rho = x.rho;

    let inv_dim = 1.0 / dim as f64;
    let eval = |u: &BoxState, mu: f64, rho: f64| -> Result<(Vec<f64>, EquilibriumProblem)> {
        let prob = problem_at(base, param, rho)?;
        let mut res = prob.steady_residual(u, mu)?;
        let uv = u.to_vec();
        // Arclength row in the weighted metric of `arc_norm`.
        let mut arc = 0.0;
        for i in 0..dim {
            arc += tau[i] * (uv[i] - x_pred.0[i]) * inv_dim;
        }
        arc += tau[dim] * (mu - x_pred.1) + tau[dim + 1] * (rho - x_pred.2);
        res.push(arc);
        Ok((res, prob))
    };

    let (mut res, mut prob) = eval(&u, mu, rho)?;
    let mut norm = sup_norm(&res);
    for _ in 0..settings.max_newton_iters {
        if norm <= settings.newton_tol {
            return Ok(AugmentedState { u: u.to_vec(), mu, rho });
        }
        let assembly = prob.assemble_steady_system(&u, mu)?;
        let d_rho = residual_rho_derivative(base, param, &u, mu, rho)?;
        let arc_row: Vec<f64> = tau[..dim].iter().map(|v| v * inv_dim).collect();
        let system = BorderedBandSystem {
            core: assembly.system.core,
            cols: vec![assembly.system.cols[0].clone(), d_rho],
            rows: vec![assembly.system.rows[0].clone(), arc_row],
            corner: vec![0.0, 0.0, tau[dim], tau[dim + 1]],
        };
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let delta = system.solve(&rhs)?;
        let mut lambda = 1.0f64;
        loop {
            let trial_u = u.updated(&delta[..dim], lambda);
            let trial_mu = mu + lambda * delta[dim];
            let trial_rho = rho + lambda * delta[dim + 1];
            if trial_u.min_h() > 0.0 {
                if let Ok((trial_res, trial_prob)) = eval(&trial_u, trial_mu, trial_rho) {
                    let trial_norm = sup_norm(&trial_res);
                    if trial_norm.is_finite()
                        && (trial_norm < norm || trial_norm <= settings.newton_tol)
                    {
                        u = trial_u;
                        mu = trial_mu;
                        rho = trial_rho;
                        res = trial_res;
                        prob = trial_prob;
                        norm = trial_norm;
                        break;
                    }
                }
            }
            lambda *= 0.5;
            if lambda < 2.0f64.powi(-16) {
                if std::env::var_os("TEARSIM_TRACE").is_some() {
                    eprintln!(
                        "[corrector] damping floor: norm={norm:.3e} rho={rho:.6} pred_rho={:.6}",
                        x_pred.2
                    );
                }
                return Err(SolverError::NewtonFailure(format!(
                    "corrector damping floor at {norm:.3e}"
                )));
            }
        }
    }
    if norm <= settings.newton_tol {
        return Ok(AugmentedState { u: u.to_vec(), mu, rho });
    }
    if std::env::var_os("TEARSIM_TRACE").is_some() {
        eprintln!(
            "[corrector] stalled: norm={norm:.3e} rho={rho:.6} pred_rho={:.6}",
            x_pred.2
        );
    }
    Err(SolverError::NewtonFailure(format!("corrector stalled at {norm:.3e}")))
}

/// Weighted arclength norm: state components enter with RMS weighting so the
/// parameter is not drowned out by thousands of state entries.
fn arc_norm(t: &[f64], dim: usize) -> f64 {
    let inv = 1.0 / dim as f64;
    let mut acc = 0.0;
    for (i, v) in t.iter().enumerate() {
        acc += if i < dim { v * v * inv } else { v * v };
    }
    acc.sqrt()
}

/// Secant tangent between consecutive accepted points, normalized in the
/// weighted arclength metric. The Jacobian-based tangent is avoided
/// deliberately: the steady core is singular at converged points (the
/// salt-row redundancy), and solving through it leaks the homogeneous family
/// direction into the tangent.
fn secant_tangent(prev: &AugmentedState, next: &AugmentedState) -> Option<Vec<f64>> {
    let dim = prev.u.len();
    let mut t: Vec<f64> = (0..dim).map(|i| next.u[i] - prev.u[i]).collect();
    t.push(next.mu - prev.mu);
    t.push(next.rho - prev.rho);
    let norm = arc_norm(&t, dim);
    if !(norm > 0.0) {
        return None;
    }
    for v in t.iter_mut() {
        *v /= norm;
    }
    Some(t)
}

/// Trace an equilibrium branch in the given parameter by pseudo-arclength
/// predictor-corrector steps from a converged solution at `range.0`.
pub fn continue_branch(
    base: &EquilibriumProblem,
    param: ContinuationParam,
    range: (f64, f64),
    initial: &SteadySolution,
    settings: &ContinuationSettings,
) -> Result<EquilibriumBranch> {
    let dim = UNKNOWNS_PER_NODE * base.n_nodes();
    let (rho_start, rho_end) = range;
    let dir = if rho_end >= rho_start { 1.0 } else { -1.0 };

    let prob0 = problem_at(base, param, rho_start)?;
    let mut points = vec![branch_point(&prob0, initial, rho_start)];
    let mut x = AugmentedState {
        u: initial.box_state.to_vec(),
        mu: initial.multiplier,
        rho: rho_start,
    };
    // First step predicts along the bare parameter direction; afterwards the
    // secant between accepted points serves as the tangent.
    let mut tau = vec![0.0; dim + 2];
    tau[dim + 1] = dir;

    let mut ds = settings.initial_step;
    let mut steps = 0usize;
    let end = loop {
        if points.len() >= settings.max_points {
            break BranchEnd::RangeEnd;
        }
        // Clamp the predictor so the parameter lands exactly on the range end
        // rather than overshooting it.
        let mut ds_eff = ds;
        let mut hitting_end = false;
        if tau[dim + 1] * dir > 1e-12 {
            let to_end = (rho_end - x.rho) / tau[dim + 1];
            if to_end <= ds_eff {
                ds_eff = to_end;
                hitting_end = true;
            }
        }
        // Near touchdown the branch turns vertical in the parameter; grade
        // the steps so the predicted thickness at the current minimum drops
        // by at most 30% per step. This spaces the tail geometrically, which
        // both avoids corrector thrashing and gives the critical-parameter
        // extrapolation a usable data set.
        {
            let cur = BoxState::from_vec(&x.u);
            let mut argmin = 0usize;
            let mut minh = f64::INFINITY;
            for (i, &h) in cur.h.iter().enumerate() {
                if h < minh {
                    minh = h;
                    argmin = i;
                }
            }
            let rate = tau[UNKNOWNS_PER_NODE * argmin].abs();
            if rate > 0.0 {
                let cap = 0.3 * minh / rate;
                if cap < ds_eff {
                    ds_eff = cap;
                    hitting_end = false;
                }
            }
        }
        let pred_u: Vec<f64> = x
            .u
            .iter()
            .enumerate()
            .map(|(i, v)| v + ds_eff * tau[i])
            .collect();
        let pred_mu = x.mu + ds_eff * tau[dim];
        let pred_rho = if hitting_end { rho_end } else { x.rho + ds_eff * tau[dim + 1] };
        let pred = AugmentedState { u: pred_u.clone(), mu: pred_mu, rho: pred_rho };
        // When landing on the range end the parameter is pinned exactly by a
        // natural-parameter row instead of the arclength row.
        let tau_row: Vec<f64> = if hitting_end {
            let mut t = vec![0.0; dim + 2];
            t[dim + 1] = 1.0;
            t
        } else {
            tau.clone()
        };

        steps += 1;
        match correct(base, param, &pred, &tau_row, (&pred_u, pred_mu, pred_rho), settings) {
            Ok(next) => {
                let u_box = BoxState::from_vec(&next.u);
                let prob = problem_at(base, param, next.rho)?;
                let res = prob.steady_residual(&u_box, next.mu)?;
                let sol = SteadySolution {
                    state: u_box.to_solution(&prob.mesh, 0.0),
                    box_state: u_box.clone(),
                    multiplier: next.mu,
                    residual: sup_norm(&res),
                };
                let prev_min_h = points.last().unwrap().min_h;
                let pt = branch_point(&prob, &sol, next.rho);
                let touched = pt.min_h < settings.h_fold_floor;
                let drop = pt.min_h / prev_min_h;
                points.push(pt);
                let prev_x = std::mem::replace(&mut x, next);
                if touched {
                    break BranchEnd::Touchdown {
                        last_min_h: points.last().unwrap().min_h,
                    };
                }
                if hitting_end || (x.rho - rho_end) * dir >= -1e-12 {
                    break BranchEnd::RangeEnd;
                }
                // Smooth parameters track the branch with secant tangents;
                // the staircase shift keeps the bare parameter direction
                // (its per-plateau state sensitivity is zero).
                if param != ContinuationParam::Xi {
                    if let Some(t) = secant_tangent(&prev_x, &x) {
                        tau = t;
                    }
                }

                // Reactive grading: a step that slashed the minimum thickness
                // is about to enter the touchdown tail; refine so the tail is
                // sampled instead of leapt over.
                if drop < 0.65 {
                    ds = (0.5 * ds).max(settings.min_step);
                } else {
                    ds = (ds * 1.5).min(settings.max_step);
                }
            }
            Err(SolverError::NewtonFailure(_)) | Err(SolverError::SingularMatrix { .. }) => {
                ds *= 0.5;
                if ds < settings.min_step {
                    break BranchEnd::CorrectorFailure;
                }
            }
            Err(e) => return Err(e),
        }
    };

    Ok(EquilibriumBranch { parameter: param, points, end, arclength_steps: steps })
}

/// Critical-parameter estimate from a touchdown (or fold) tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalEstimate {
    pub value: f64,
    pub uncertainty: f64,
    /// Fitted power of `min h_eq ~ A |rho* - rho|^alpha`.
    pub exponent: f64,
}

/// Extrapolate `min h_eq -> 0` along the branch tail with a local power-law
/// fit and return the critical parameter value.
pub fn find_critical_parameter(points: &[(f64, f64)]) -> Result<CriticalEstimate> {
    // Thin out clustered tails (continuation steps can pile up near the
    // floor): walk backwards keeping points spaced by at least 5% in min h.
    let mut spaced: Vec<(f64, f64)> = Vec::new();
    for &(rho, h) in points.iter().rev() {
        if !(h > 0.0) {
            break;
        }
        match spaced.last() {
            None => spaced.push((rho, h)),
            Some(&(_, prev)) => {
                if h >= prev * 1.05 {
                    spaced.push((rho, h));
                } else if h < prev {
                    break;
                }
            }
        }
    }
    spaced.reverse();
    let points = &spaced[..];

    let fit_tail = |k: usize| -> Result<(f64, f64, f64)> {
        if points.len() < 4 {
            return Err(SolverError::InsufficientData(format!(
                "{} spaced branch points, need at least 4",
                points.len()
            )));
        }
        let k = k.min(points.len());
        let tail = &points[points.len() - k..];
        // Require positive, non-increasing min h with genuine overall decrease.
        for pair in tail.windows(2) {
            if !(pair[1].1 > 0.0) || pair[1].1 > pair[0].1 * (1.0 + 1e-9) {
                return Err(SolverError::InsufficientData(
                    "branch tail is not decreasing toward zero".into(),
                ));
            }
        }
        if !(tail[tail.len() - 1].1 < 0.9 * tail[0].1) {
            return Err(SolverError::InsufficientData(
                "branch tail shows no approach toward zero".into(),
            ));
        }
        let rho_last = tail[tail.len() - 1].0;
        let dir = if rho_last >= tail[0].0 { 1.0 } else { -1.0 };
        let span = (rho_last - tail[0].0).abs().max(1e-12);

        let sse_for = |s: f64| -> (f64, f64) {
            // rho* = rho_last + dir * s.
            let rho_star = rho_last + dir * s;
            let mut sz = 0.0;
            let mut sy = 0.0;
            let mut szz = 0.0;
            let mut szy = 0.0;
            let kk = tail.len() as f64;
            for &(rho, h) in tail {
                let gap = (rho_star - rho) * dir;
                if gap <= 0.0 {
                    return (f64::INFINITY, 0.0);
                }
                let z = gap.ln();
                let y = h.ln();
                sz += z;
                sy += y;
                szz += z * z;
                szy += z * y;
            }
            let denom = kk * szz - sz * sz;
            if denom.abs() < 1e-300 {
                return (f64::INFINITY, 0.0);
            }
            let slope = (kk * szy - sz * sy) / denom;
            let intercept = (sy - slope * sz) / kk;
            let mut sse = 0.0;
            for &(rho, h) in tail {
                let z = ((rho_star - rho) * dir).ln();
                let r = h.ln() - (slope * z + intercept);
                sse += r * r;
            }
            (sse, slope)
        };

        // Grid scan in log of the standoff distance, then golden refinement.
        let s_lo = (1e-6 * span).ln();
        let s_hi = (20.0 * span).ln();
        let mut best = (f64::INFINITY, s_lo);
        for i in 0..=400 {
            let ls = s_lo + (s_hi - s_lo) * i as f64 / 400.0;
            let (sse, _) = sse_for(ls.exp());
            if sse < best.0 {
                best = (sse, ls);
            }
        }
        let width = (s_hi - s_lo) / 400.0;
        let (mut a, mut b) = (best.1 - width, best.1 + width);
        let phi = 0.5 * (3.0 - 5.0f64.sqrt());
        let mut x1 = a + phi * (b - a);
        let mut x2 = b - phi * (b - a);
        let mut f1 = sse_for(x1.exp()).0;
        let mut f2 = sse_for(x2.exp()).0;
        for _ in 0..70 {
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = a + phi * (b - a);
                f1 = sse_for(x1.exp()).0;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = b - phi * (b - a);
                f2 = sse_for(x2.exp()).0;
            }
        }
        let s = (0.5 * (a + b)).exp();
        let (_, slope) = sse_for(s);
        Ok((rho_last + dir * s, slope, s))
    };

    let (value, exponent, _) = fit_tail(12)?;
    // Spread across tail lengths as the uncertainty estimate.
    let alt = fit_tail(8).map(|(v, _, _)| v).unwrap_or(value);
    let uncertainty = (value - alt).abs().max(1e-6);
    Ok(CriticalEstimate { value, uncertainty, exponent })
}

/// Closed-form constant-capacity equilibrium: `h = Q0 / (sigma L)`,
/// `s = sigma`.
pub fn constant_seed(problem: &EquilibriumProblem) -> Result<SteadySolution> {
    let sigma = match problem.params.sbar {
        SbarProfile::Constant { value } => value,
        _ => {
            return Err(SolverError::InvalidParameter(
                "constant seed requires a constant capacity".into(),
            ))
        }
    };
    let n = problem.n_nodes();
    let h = problem.q0 / (sigma * problem.params.domain_length);
    let state = SolutionState::new(problem.mesh.clone(), vec![h; n], vec![sigma; n], 0.0)?;
    let box_state = initialize_box_state(&state)?;
    let res = problem.steady_residual(&box_state, 0.0)?;
    Ok(SteadySolution { state, box_state, multiplier: 0.0, residual: sup_norm(&res) })
}

/// Converged equilibrium for a problem, dispatching on the capacity profile:
/// constant profiles have a closed form, step profiles go through the shift
/// homotopy, anything else starts a damped Newton from the mean-capacity
/// constant state.
pub fn seed_equilibrium(
    problem: &EquilibriumProblem,
    settings: &ContinuationSettings,
) -> Result<SteadySolution> {
    match problem.params.sbar {
        SbarProfile::Constant { .. } => constant_seed(problem),
        SbarProfile::Step { .. } => seed_step_equilibrium(problem, settings),
        _ => {
            let n = problem.n_nodes();
            let length = problem.params.domain_length;
            // Mean capacity as the osmolarity level, thickness from the mass
            // constraint.
            let mesh = &problem.mesh;
            let samples: Vec<f64> = mesh
                .iter()
                .map(|&x| problem.params.sbar.eval_unchecked(x, length))
                .collect();
            let sigma = crate::model::trapezoid(mesh, &samples) / length;
            let h = problem.q0 / (sigma * length);
            let state =
                SolutionState::new(problem.mesh.clone(), vec![h; n], vec![sigma; n], 0.0)?;
            solve_equilibrium(problem, &state)
        }
    }
}

/// Converged equilibrium for a step-capacity problem, obtained by homotopy in
/// the shift from a width too small to cover any cell midpoint (where the
/// uniform background state is an exact solution) up to the target shift.
pub fn seed_step_equilibrium(
    problem: &EquilibriumProblem,
    settings: &ContinuationSettings,
) -> Result<SteadySolution> {
    let (lo, xi_target) = match problem.params.sbar {
        SbarProfile::Step { lo, xi, .. } => (lo, xi),
        _ => {
            return Err(SolverError::InvalidParameter(
                "step seeding requires a step capacity".into(),
            ))
        }
    };
    let center = problem.params.domain_length / 2.0;
    let mut d_min = f64::INFINITY;
    for w in problem.mesh.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let d = (mid - center).abs();
        if d > 0.0 {
            d_min = d_min.min(d);
        }
    }
    let xi_seed = (0.5 * d_min).min(0.5 * xi_target);

    // Background state: the step is invisible below xi_seed, so the constant
    // profile at the background capacity is an exact equilibrium.
    let n = problem.n_nodes();
    let h = problem.q0 / (lo * problem.params.domain_length);
    let state = SolutionState::new(problem.mesh.clone(), vec![h; n], vec![lo; n], 0.0)?;
    let seed_problem = EquilibriumProblem {
        params: apply_param(ContinuationParam::Xi, xi_seed, &problem.params)?,
        q0: problem.q0,
        mesh: problem.mesh.clone(),
    };
    let seed = solve_equilibrium(&seed_problem, &state)?;
    if (xi_target - xi_seed).abs() < 1e-14 {
        return Ok(seed);
    }
    let branch = continue_branch(
        problem,
        ContinuationParam::Xi,
        (xi_seed, xi_target),
        &seed,
        settings,
    )?;
    if branch.end != BranchEnd::RangeEnd {
        return Err(SolverError::NewtonFailure(format!(
            "seeding homotopy stopped early: {:?}",
            branch.end
        )));
    }
    let last = branch.points.last().unwrap();
    let box_state = initialize_box_state(&last.solution)?;
    let prob = problem_at(problem, ContinuationParam::Xi, last.value)?;
    // Re-polish at the exact target to clear the derivative-rebuild noise.
    solve_equilibrium_from_box(&prob, &box_state, 0.0)
}
