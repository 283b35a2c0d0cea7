//! Mode drivers: execute a parsed experiment and write its artifacts.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use tearsim_core::analysis::{
    check_maximum_principle, fit_thinning_rate, solve_bound_fixed_point,
};
use tearsim_core::equilibrium::{
    apply_param, continue_branch, find_critical_parameter, seed_equilibrium, BranchEnd,
    ContinuationSettings, EquilibriumProblem,
};
use tearsim_core::integrate::{integrate, Event};
use tearsim_core::model::{compute_salt_mass, uniform_mesh};
use tearsim_core::sweep::{run_sweep, SweepSpec};

use crate::config::{ExperimentConfig, Mode};
use crate::output::{
    ensure_dir, read_series, write_branch, write_manifest, write_profile, write_run_outputs,
    ManifestCommon, RunManifest, TOOL_NAME, TOOL_VERSION,
};

pub fn run_experiment(config: &ExperimentConfig, threads: usize) -> Result<(), String> {
    let started = Instant::now();
    let out_dir = Path::new(&config.out_dir);
    ensure_dir(out_dir)?;
    match config.mode {
        Mode::Simulate => run_simulate(config, out_dir, started),
        Mode::Equilibrium => run_equilibrium(config, out_dir, started),
        Mode::Continue => run_continuation(config, out_dir, started),
        Mode::Sweep => run_sweep_mode(config, out_dir, started, threads),
        Mode::FitThinning => run_fit_thinning(config, out_dir, started),
        Mode::CheckBound => run_check_bound(config, out_dir, started),
    }
}

fn common<'a, C: Serialize>(
    config: &'a C,
    mode: Mode,
    started: Instant,
) -> ManifestCommon<'a, C> {
    ManifestCommon {
        tool: TOOL_NAME,
        version: TOOL_VERSION,
        mode: mode.to_string(),
        effective_config: config,
        wall_time_secs: started.elapsed().as_secs_f64(),
    }
}

fn run_simulate(config: &ExperimentConfig, out_dir: &Path, started: Instant) -> Result<(), String> {
    let initial = config.initial_state().map_err(|e| e.to_string())?;
    let run = integrate(
        &initial,
        &config.params,
        &config.controller,
        &config.policy,
        config.t_end,
        &config.snapshot_times,
    )
    .map_err(|e| e.to_string())?;
    let report = check_maximum_principle(&run, &config.params);
    let fit = if config.params.m > 1.0 && matches!(run.event, Event::ThinningOngoing) {
        let series: Vec<(f64, f64)> = run.series.iter().map(|r| (r.t, r.h_min)).collect();
        let x_c = run.series.last().map(|r| r.x_argmin).unwrap_or(0.0);
        let eta = config
            .params
            .sbar
            .eval_unchecked(x_c, config.params.domain_length);
        fit_thinning_rate(&series, config.params.m, eta).ok().flatten()
    } else {
        None
    };
    let files = write_run_outputs(out_dir, &run, &config.params)?;
    let manifest = RunManifest {
        common: common(config, Mode::Simulate, started),
        event: &run.event,
        warnings: &run.warnings,
        bound_report: &report,
        remesh_count: run.remeshes.len(),
        remesh_total_q_drift: run.remeshes.iter().map(|r| r.q_drift_rel).sum(),
        fit: fit.as_ref(),
        files: files.iter().map(|p| p.display().to_string()).collect(),
    };
    write_manifest(&out_dir.join("manifest.json"), &manifest)?;
    eprintln!("simulate: event {:?}, {} steps", run.event, run.series.len());
    Ok(())
}

fn profile_defining_value(config: &ExperimentConfig) -> f64 {
    use tearsim_core::model::SbarProfile;
    match &config.params.sbar {
        SbarProfile::Constant { value } => *value,
        SbarProfile::Step { xi, .. } => *xi,
        SbarProfile::Tanh { half_width, .. } => *half_width,
        SbarProfile::Table { .. } => 0.0,
    }
}

fn run_equilibrium(
    config: &ExperimentConfig,
    out_dir: &Path,
    started: Instant,
) -> Result<(), String> {
    let initial = config.initial_state().map_err(|e| e.to_string())?;
    let q0 = config.q0.unwrap_or_else(|| compute_salt_mass(&initial));
    let problem = EquilibriumProblem {
        params: config.params.clone(),
        q0,
        mesh: uniform_mesh(config.n_nodes, config.params.domain_length),
    };
    let sol = seed_equilibrium(&problem, &ContinuationSettings::default())
        .map_err(|e| format!("equilibrium solve failed: {e}"))?;
    let min_h = sol.box_state.min_h();
    let argmin = problem.mesh[sol
        .box_state
        .h
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)];
    let max_s = sol.box_state.s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    write_profile(&out_dir.join("equilibrium.csv"), &sol.state, &config.params)?;
    write_branch(
        &out_dir.join("branch.csv"),
        &[(profile_defining_value(config), min_h, argmin, max_s)],
    )?;
    let manifest = json!({
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "mode": "equilibrium",
        "effective_config": config,
        "wall_time_secs": started.elapsed().as_secs_f64(),
        "q0": q0,
        "min_h_eq": min_h,
        "max_s_eq": max_s,
        "residual": sol.residual,
        "multiplier": sol.multiplier,
    });
    write_manifest(&out_dir.join("manifest.json"), &manifest)?;
    eprintln!("equilibrium: min h_eq = {min_h:.6e}, residual {:.3e}", sol.residual);
    Ok(())
}

fn run_continuation(
    config: &ExperimentConfig,
    out_dir: &Path,
    started: Instant,
) -> Result<(), String> {
    let job = config.continuation.as_ref().expect("validated");
    let initial = config.initial_state().map_err(|e| e.to_string())?;
    let q0 = config.q0.unwrap_or_else(|| compute_salt_mass(&initial));
    let mesh = uniform_mesh(config.n_nodes, config.params.domain_length);

    let start_params = apply_param(job.parameter, job.from, &config.params)
        .map_err(|e| format!("continue.from: {e}"))?;
    let seed_problem = EquilibriumProblem { params: start_params, q0, mesh: mesh.clone() };
    let settings = ContinuationSettings {
        initial_step: job.initial_step,
        max_step: job.max_step,
        h_fold_floor: job.h_fold_floor,
        ..ContinuationSettings::default()
    };
    let seed = seed_equilibrium(&seed_problem, &settings)
        .map_err(|e| format!("seeding at {} = {}: {e}", job.parameter, job.from))?;
    let base = EquilibriumProblem { params: config.params.clone(), q0, mesh };
    let branch = continue_branch(&base, job.parameter, (job.from, job.to), &seed, &settings)
        .map_err(|e| format!("continuation failed: {e}"))?;

    let rows: Vec<(f64, f64, f64, f64)> = branch
        .points
        .iter()
        .map(|p| (p.value, p.min_h, p.argmin_x, p.max_s))
        .collect();
    write_branch(&out_dir.join("branch.csv"), &rows)?;
    if job.write_profiles {
        for (i, p) in branch.points.iter().enumerate() {
            write_profile(
                &out_dir.join(format!("profile_{i:04}.csv")),
                &p.solution,
                &config.params,
            )?;
        }
    }
    let tail: Vec<(f64, f64)> = branch.points.iter().map(|p| (p.value, p.min_h)).collect();
    let critical = find_critical_parameter(&tail).ok();
    let manifest = json!({
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "mode": "continue",
        "effective_config": config,
        "wall_time_secs": started.elapsed().as_secs_f64(),
        "q0": q0,
        "parameter": job.parameter.to_string(),
        "points": branch.points.len(),
        "arclength_steps": branch.arclength_steps,
        "end": format!("{:?}", branch.end),
        "touchdown": matches!(branch.end, BranchEnd::Touchdown { .. }),
        "critical": critical,
    });
    write_manifest(&out_dir.join("manifest.json"), &manifest)?;
    match &critical {
        Some(c) => eprintln!(
            "continue: {} points, critical {} = {:.4} +/- {:.4}",
            branch.points.len(),
            job.parameter,
            c.value,
            c.uncertainty
        ),
        None => eprintln!("continue: {} points, no critical estimate", branch.points.len()),
    }
    Ok(())
}

fn run_sweep_mode(
    config: &ExperimentConfig,
    out_dir: &Path,
    started: Instant,
    threads: usize,
) -> Result<(), String> {
    let job = config.sweep.as_ref().expect("validated");
    let (h0, s0) = match (&config.initial_h, &config.initial_s) {
        (crate::config::InitialField::Constant(h), crate::config::InitialField::Constant(s)) => {
            (*h, *s)
        }
        _ => return Err("sweep mode requires constant initial data".into()),
    };
    let mut controller = config.controller;
    controller.h_stop = job.h_stop;
    let spec = SweepSpec {
        base: config.params.clone(),
        m_values: job.m_values.clone(),
        n_offset: job.n_offset,
        initial: (h0, s0),
        n_nodes: config.n_nodes,
        t_end: config.t_end,
        controller,
        policy: config.policy,
        classify_tol: job.classify_tol,
        threads,
    };
    let members = run_sweep(&spec).map_err(|e| e.to_string())?;

    let mut table = String::new();
    table.push_str(
        "m,n,regime,event,t_final,h_min_final,fit_exponent,fit_expected,fit_residual,eq_available,eq_sup_diff\n",
    );
    let mut rows = Vec::new();
    for member in &members {
        let last = member.run.series.last().unwrap();
        let (fe, fx, fr) = member
            .fit
            .map(|f| (format!("{:.16e}", f.exponent), format!("{:.16e}", f.expected_exponent), format!("{:.16e}", f.residual)))
            .unwrap_or_else(|| (String::new(), String::new(), String::new()));
        let (eqa, eqd) = match member.equilibrium {
            Some(e) => ("true".to_string(), format!("{:.16e}", e.sup_diff)),
            None => ("false".to_string(), String::new()),
        };
        table.push_str(&format!(
            "{},{},{},{},{:.16e},{:.16e},{},{},{},{},{}\n",
            member.m,
            member.n,
            member.label.regime,
            event_name(&member.run.event),
            last.t,
            last.h_min,
            fe,
            fx,
            fr,
            eqa,
            eqd
        ));
        // Per-member artifacts.
        let run_dir = out_dir.join(format!("run_m_{}", member.m));
        let files = write_run_outputs(&run_dir, &member.run, &config.params)?;
        let report = check_maximum_principle(&member.run, &config.params);
        let manifest = RunManifest {
            common: common(config, Mode::Sweep, started),
            event: &member.run.event,
            warnings: &member.run.warnings,
            bound_report: &report,
            remesh_count: member.run.remeshes.len(),
            remesh_total_q_drift: member.run.remeshes.iter().map(|r| r.q_drift_rel).sum(),
            fit: member.fit.as_ref(),
            files: files.iter().map(|p| p.display().to_string()).collect(),
        };
        write_manifest(&run_dir.join("manifest.json"), &manifest)?;
        rows.push(json!({
            "m": member.m,
            "n": member.n,
            "regime": member.label.regime.to_string(),
            "evidence": member.label.evidence,
            "event": format!("{:?}", member.run.event),
            "equilibrium": member.equilibrium,
        }));
    }
    std::fs::write(out_dir.join("regime_map.csv"), table)
        .map_err(|e| format!("writing regime map: {e}"))?;
    let manifest = json!({
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "mode": "sweep",
        "effective_config": config,
        "wall_time_secs": started.elapsed().as_secs_f64(),
        "members": rows,
    });
    write_manifest(&out_dir.join("manifest.json"), &manifest)?;
    for member in &members {
        eprintln!("sweep m = {}: {}", member.m, member.label.regime);
    }
    Ok(())
}

fn event_name(event: &Event) -> &'static str {
    match event {
        Event::Rupture { .. } => "rupture",
        Event::SteadyState { .. } => "steady-state",
        Event::HorizonReached => "horizon-reached",
        Event::ThinningOngoing => "thinning-ongoing",
    }
}

fn run_fit_thinning(
    config: &ExperimentConfig,
    out_dir: &Path,
    started: Instant,
) -> Result<(), String> {
    let job = config.fit_thinning.as_ref().expect("validated");
    let cols = read_series(Path::new(&job.series_csv))?;
    let series: Vec<(f64, f64)> = cols.t.iter().cloned().zip(cols.h_min.iter().cloned()).collect();
    let eta = match job.eta {
        Some(e) => e,
        None => {
            let x_c = *cols.x_argmin.last().ok_or("empty series")?;
            config
                .params
                .sbar
                .eval_unchecked(x_c, config.params.domain_length)
        }
    };
    let fit = fit_thinning_rate(&series, job.m, eta).map_err(|e| e.to_string())?;
    let manifest = json!({
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "mode": "fit-thinning",
        "effective_config": config,
        "wall_time_secs": started.elapsed().as_secs_f64(),
        "eta": eta,
        "fit": fit,
    });
    write_manifest(&out_dir.join("manifest.json"), &manifest)?;
    match fit {
        Some(f) => eprintln!(
            "fit-thinning: exponent {:.4} (rate law {:.4}), residual {:.3e}",
            f.exponent, f.expected_exponent, f.residual
        ),
        None => eprintln!("fit-thinning: no fit for m <= 1"),
    }
    Ok(())
}

fn run_check_bound(
    config: &ExperimentConfig,
    out_dir: &Path,
    started: Instant,
) -> Result<(), String> {
    let job = config.check_bound.as_ref().expect("validated");
    let h = solve_bound_fixed_point(job.c_eta_plus_cst, job.c, job.tau)
        .map_err(|e| e.to_string())?;
    let manifest = json!({
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "mode": "check-bound",
        "effective_config": config,
        "wall_time_secs": started.elapsed().as_secs_f64(),
        "upper_bound": h,
    });
    write_manifest(&out_dir.join("manifest.json"), &manifest)?;
    eprintln!("check-bound: H = {h:.12}");
    Ok(())
}
