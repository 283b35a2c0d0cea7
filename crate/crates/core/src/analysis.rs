//! Post-processing: algebraic thinning-rate fits, regime classification,
//! the a-priori upper-bound fixed point, and maximum-principle reports.

use crate::error::{Result, SolverError};
use crate::integrate::{DiagRow, Event, RunResult};
use crate::mesh::pchip_resample;
use crate::model::{ModelParams, SolutionState};
use serde::{Deserialize, Serialize};

/// Late-time thinning fit of `h_min(t) ~ (c + eta (m-1) t)^(-1/(m-1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThinningFit {
    /// Fitted exponent of the algebraic decay.
    pub exponent: f64,
    /// Exponent predicted by the rate law, -1/(m-1).
    pub expected_exponent: f64,
    /// Fitted offset constant c.
    pub prefactor_c: f64,
    /// Local capacity at the thinning point used as the rate scale.
    pub eta_local: f64,
    /// Fit window in time.
    pub t_start: f64,
    pub t_end: f64,
    /// RMS residual of the log-log regression (dimensionless, roughly the
    /// relative misfit).
    pub residual: f64,
    /// Number of samples in the window.
    pub samples: usize,
}

/// Regime of a completed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    FiniteTimeRupture,
    InfiniteTimeThinning,
    ConvergeToEquilibrium,
    Unclassified,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Regime::FiniteTimeRupture => "finite-time-rupture",
            Regime::InfiniteTimeThinning => "infinite-time-thinning",
            Regime::ConvergeToEquilibrium => "converge-to-equilibrium",
            Regime::Unclassified => "unclassified",
        };
        f.write_str(name)
    }
}

/// Classification with its supporting evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub regime: Regime,
    pub evidence: String,
}

/// Independently computed steady solution used as classification evidence.
#[derive(Debug, Clone)]
pub struct SteadyReference {
    pub state: SolutionState,
    /// Residual sup-norm of the steady solve.
    pub steady_residual: f64,
    /// Sup-norm tolerance for matching the run's final state.
    pub compare_tol: f64,
}

/// Least-squares fit of `log h_min` against `log(c + eta (m-1) t)` over the
/// final decade of decrease, with `c` fitted.
///
/// Returns `Ok(None)` for `m <= 1`, where algebraic infinite-time thinning
/// cannot occur and no fit is meaningful.
pub fn fit_thinning_rate(
    series: &[(f64, f64)],
    m: f64,
    eta_local: f64,
) -> Result<Option<ThinningFit>> {
    if m <= 1.0 {
        return Ok(None);
    }
    if !(eta_local > 0.0) {
        return Err(SolverError::InvalidParameter(format!(
            "eta_local must be positive, got {eta_local}"
        )));
    }
    // Monotone decreasing tail restricted to the final decade of h_min.
    let n = series.len();
    if n < 2 {
        return Err(SolverError::InsufficientData("empty thinning series".into()));
    }
    let h_end = series[n - 1].1;
    if !(h_end > 0.0) {
        return Err(SolverError::InsufficientData("nonpositive tail value".into()));
    }
    let cap = 10.0 * h_end;
    let mut start = n - 1;
    while start > 0 {
        let (t_prev, h_prev) = series[start - 1];
        let (t_here, h_here) = series[start];
        if h_prev < h_here || h_prev > cap || t_prev >= t_here {
            break;
        }
        start -= 1;
    }
    let tail = &series[start..];
    if tail.len() < 10 {
        return Err(SolverError::InsufficientData(format!(
            "only {} monotone tail points in the final decade, need 10",
            tail.len()
        )));
    }

    let rate = eta_local * (m - 1.0);
    let sse_for = |ln_c: f64| -> (f64, f64, f64) {
        let c = ln_c.exp();
        // Regression of y = ln h on z = ln(c + rate * t).
        let mut sz = 0.0;
        let mut sy = 0.0;
        let mut szz = 0.0;
        let mut szy = 0.0;
        let k = tail.len() as f64;
        for &(t, h) in tail {
            let z = (c + rate * t).ln();
            let y = h.ln();
            sz += z;
            sy += y;
            szz += z * z;
            szy += z * y;
        }
        let denom = k * szz - sz * sz;
        if denom.abs() < 1e-300 {
            return (f64::INFINITY, 0.0, 0.0);
        }
        let slope = (k * szy - sz * sy) / denom;
        let intercept = (sy - slope * sz) / k;
        let mut sse = 0.0;
        for &(t, h) in tail {
            let z = (c + rate * t).ln();
            let r = h.ln() - (slope * z + intercept);
            sse += r * r;
        }
        (sse, slope, intercept)
    };

    // Coarse scan over ln c, then golden-section refinement.
    let (lo, hi) = (-18.0f64, 18.0f64);
    let mut best = (f64::INFINITY, lo);
    let scan = 240;
    for i in 0..=scan {
        let ln_c = lo + (hi - lo) * i as f64 / scan as f64;
        let (sse, _, _) = sse_for(ln_c);
        if sse < best.0 {
            best = (sse, ln_c);
        }
    }
    let span = (hi - lo) / scan as f64;
    let (mut a, mut b) = (best.1 - span, best.1 + span);
    let phi = 0.5 * (3.0 - 5.0f64.sqrt());
    let mut x1 = a + phi * (b - a);
    let mut x2 = b - phi * (b - a);
    let mut f1 = sse_for(x1).0;
    let mut f2 = sse_for(x2).0;
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + phi * (b - a);
            f1 = sse_for(x1).0;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - phi * (b - a);
            f2 = sse_for(x2).0;
        }
    }
    let ln_c = 0.5 * (a + b);
    let (sse, slope, _) = sse_for(ln_c);
    let residual = (sse / tail.len() as f64).sqrt();
    Ok(Some(ThinningFit {
        exponent: slope,
        expected_exponent: -1.0 / (m - 1.0),
        prefactor_c: ln_c.exp(),
        eta_local,
        t_start: tail[0].0,
        t_end: tail[tail.len() - 1].0,
        residual,
        samples: tail.len(),
    }))
}

/// Quality gate for treating a fit as evidence of algebraic thinning.
pub fn fit_is_good(fit: &ThinningFit) -> bool {
    let rel = (fit.exponent - fit.expected_exponent).abs() / fit.expected_exponent.abs();
    fit.residual <= 0.05 && rel <= 0.25
}

/// Classify a completed run.
///
/// Rupture events win outright; steadiness (either the run's own steady
/// event or agreement with an independently computed equilibrium) comes
/// next; a good thinning fit with ongoing decrease labels the run as
/// infinite-time thinning; everything else is reported as unclassified
/// rather than silently guessed.
pub fn classify_regime(
    run: &RunResult,
    equilibrium: Option<&SteadyReference>,
    fit: Option<&ThinningFit>,
) -> RegimeLabel {
    match run.event {
        Event::Rupture { t_stop, x_c } => {
            return RegimeLabel {
                regime: Regime::FiniteTimeRupture,
                evidence: format!("rupture event at t = {t_stop:.6e}, x_c = {x_c:.4}"),
            };
        }
        Event::SteadyState { t_stop } => {
            return RegimeLabel {
                regime: Regime::ConvergeToEquilibrium,
                evidence: format!("discrete time derivative under tolerance at t = {t_stop:.6e}"),
            };
        }
        Event::HorizonReached | Event::ThinningOngoing => {}
    }
    if let Some(eq) = equilibrium {
        if eq.steady_residual <= 1e-8 {
            let href = pchip_resample(&eq.state.mesh, &eq.state.h, &run.final_state.mesh);
            let sref = pchip_resample(&eq.state.mesh, &eq.state.s, &run.final_state.mesh);
            let mut sup = 0.0f64;
            for i in 0..run.final_state.mesh.len() {
                sup = sup.max((href[i] - run.final_state.h[i]).abs());
                sup = sup.max((sref[i] - run.final_state.s[i]).abs());
            }
            if sup <= eq.compare_tol {
                return RegimeLabel {
                    regime: Regime::ConvergeToEquilibrium,
                    evidence: format!(
                        "final state within {sup:.3e} of the computed equilibrium (tol {})",
                        eq.compare_tol
                    ),
                };
            }
        }
    }
    let thinning_event = matches!(run.event, Event::ThinningOngoing);
    if let Some(f) = fit {
        if fit_is_good(f) && thinning_event {
            return RegimeLabel {
                regime: Regime::InfiniteTimeThinning,
                evidence: format!(
                    "algebraic tail fit: exponent {:.4} vs {:.4}, residual {:.3e}",
                    f.exponent, f.expected_exponent, f.residual
                ),
            };
        }
    }
    let why = match (fit, thinning_event) {
        (Some(f), true) => format!(
            "fit rejected: exponent {:.4} vs {:.4}, residual {:.3e}",
            f.exponent, f.expected_exponent, f.residual
        ),
        (Some(_), false) => "horizon reached without ongoing decrease or equilibrium match".into(),
        (None, true) => "ongoing decrease but no usable thinning fit".into(),
        (None, false) => "no event, no equilibrium match, no fit".into(),
    };
    RegimeLabel { regime: Regime::Unclassified, evidence: why }
}

/// Solve `H = sqrt(a + c H^tau) + c + 1` by bisection on
/// `g(H) = H - sqrt(a + c H^tau) - c - 1` over `[c + 1, H_hi]`.
pub fn solve_bound_fixed_point(a: f64, c: f64, tau: f64) -> Result<f64> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(SolverError::InvalidParameter(format!("need a >= 0, got {a}")));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(SolverError::InvalidParameter(format!("need c >= 0, got {c}")));
    }
    if !((0.0..2.0).contains(&tau)) {
        return Err(SolverError::InvalidParameter(format!(
            "need 0 <= tau < 2, got {tau}"
        )));
    }
    let g = |h: f64| h - (a + c * h.powf(tau)).sqrt() - c - 1.0;
    let mut lo = c + 1.0;
    if g(lo) >= 0.0 {
        // sqrt(a + ...) = 0 only when a = 0 and c = 0.
        return Ok(lo);
    }
    let mut hi = (2.0 * (c + 1.0)).max(2.0);
    // tau < 2 makes g eventually positive; doubling terminates.
    while g(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(SolverError::NewtonFailure(
                "no upper bracket for the bound fixed point".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Maximum-principle report over a diagnostics series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Effective lower bound used (admissible floor capped by initial data).
    pub lambda: f64,
    /// Capacity sup-norm.
    pub sup_sbar: f64,
    /// Largest undershoot (lambda - min s)+ over the run.
    pub max_lower_violation: f64,
    /// Largest overshoot (max s - sup S̄)+ over the run.
    pub max_upper_violation: f64,
    /// Whether s exceeded the local capacity pointwise anywhere (permitted;
    /// only the sup-norm bound must hold).
    pub pointwise_excess_detected: bool,
    pub max_pointwise_excess: f64,
}

pub fn bound_report_from_series(series: &[DiagRow], params: &ModelParams) -> BoundReport {
    let sup_sbar = params.sbar.sup_norm(params.domain_length);
    let lambda = if series.is_empty() {
        params.salt_floor
    } else {
        params.salt_floor.min(series[0].min_s)
    };
    let mut lower = 0.0f64;
    let mut upper = 0.0f64;
    let mut excess = f64::NEG_INFINITY;
    for row in series {
        lower = lower.max(lambda - row.min_s);
        upper = upper.max(row.max_s - sup_sbar);
        excess = excess.max(row.max_s_excess);
    }
    BoundReport {
        lambda,
        sup_sbar,
        max_lower_violation: lower.max(0.0),
        max_upper_violation: upper.max(0.0),
        pointwise_excess_detected: excess > 1e-9,
        max_pointwise_excess: excess,
    }
}

/// Maximum-principle report for a completed run.
pub fn check_maximum_principle(run: &RunResult, params: &ModelParams) -> BoundReport {
    bound_report_from_series(&run.series, params)
}
