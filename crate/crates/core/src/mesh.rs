//! r-adaptive static rezoning: monitor-function computation, de Boor
//! equidistribution of nodes, and monotone-cubic transfer of the solution
//! onto the new mesh.

use crate::error::{Result, SolverError};
use crate::model::SolutionState;
use serde::{Deserialize, Serialize};

/// Monitor weights and rezoning policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshPolicy {
    /// Enable static rezoning during integration.
    pub adaptive: bool,
    /// Gradient weight on h in the monitor.
    pub alpha_h: f64,
    /// Gradient weight on s in the monitor.
    pub alpha_s: f64,
    /// Thin-film attraction weight.
    pub beta: f64,
    /// Regularizer inside the thin-film term.
    pub delta_h: f64,
    /// Check the rezone trigger every this many accepted steps.
    pub rezone_every: usize,
    /// Rezone when the max per-cell monitor integral exceeds this multiple
    /// of the mean.
    pub rezone_ratio: f64,
}

impl Default for MeshPolicy {
    fn default() -> Self {
        MeshPolicy {
            adaptive: true,
            alpha_h: 1.0,
            alpha_s: 1.0,
            beta: 1e-2,
            delta_h: 1e-6,
            rezone_every: 5,
            rezone_ratio: 2.0,
        }
    }
}

/// Nodal slopes on a non-uniform mesh: the quadratic-exact weighted formula
/// in the interior, one-sided secants at the ends.
fn nodal_slopes(mesh: &[f64], values: &[f64]) -> Vec<f64> {
    let n = mesh.len();
    let mut out = vec![0.0; n];
    out[0] = (values[1] - values[0]) / (mesh[1] - mesh[0]);
    out[n - 1] = (values[n - 1] - values[n - 2]) / (mesh[n - 1] - mesh[n - 2]);
    for i in 1..n - 1 {
        let dl = mesh[i] - mesh[i - 1];
        let dr = mesh[i + 1] - mesh[i];
        let sl = (values[i] - values[i - 1]) / dl;
        let sr = (values[i + 1] - values[i]) / dr;
        out[i] = (dr * sl + dl * sr) / (dl + dr);
    }
    out
}

/// Per-node monitor values:
/// `M_i = sqrt(1 + a_h h_x^2 + a_s s_x^2) + beta / (h_i + delta_h)`,
/// followed by two passes of (1/4, 1/2, 1/4) smoothing with replicated ends.
pub fn compute_monitor(state: &SolutionState, policy: &MeshPolicy) -> Vec<f64> {
    let hx = nodal_slopes(&state.mesh, &state.h);
    let sx = nodal_slopes(&state.mesh, &state.s);
    let n = state.len();
    let mut m: Vec<f64> = (0..n)
        .map(|i| {
            (1.0 + policy.alpha_h * hx[i] * hx[i] + policy.alpha_s * sx[i] * sx[i]).sqrt()
                + policy.beta / (state.h[i] + policy.delta_h)
        })
        .collect();
    for _ in 0..2 {
        let prev = m.clone();
        for i in 0..n {
            let left = if i == 0 { prev[0] } else { prev[i - 1] };
            let right = if i == n - 1 { prev[n - 1] } else { prev[i + 1] };
            m[i] = 0.25 * left + 0.5 * prev[i] + 0.25 * right;
        }
    }
    m
}

/// Cumulative trapezoidal integral of the monitor along the mesh.
pub fn cumulative_monitor(mesh: &[f64], monitor: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; mesh.len()];
    for i in 0..mesh.len() - 1 {
        c[i + 1] = c[i] + 0.5 * (mesh[i + 1] - mesh[i]) * (monitor[i] + monitor[i + 1]);
    }
    c
}

/// Place `n_new` nodes so that each new cell carries an equal increment of
/// the cumulative trapezoidal integral of the monitor. Endpoints are pinned.
pub fn equidistribute(mesh: &[f64], monitor: &[f64], n_new: usize) -> Result<Vec<f64>> {
    if monitor.iter().any(|&v| !(v > 0.0)) {
        return Err(SolverError::InvalidParameter(
            "monitor values must be positive".into(),
        ));
    }
    if n_new < 2 {
        return Err(SolverError::MeshTooCoarse { n: n_new, min: 2 });
    }
    let c = cumulative_monitor(mesh, monitor);
    let total = c[mesh.len() - 1];
    let mut out = Vec::with_capacity(n_new);
    out.push(mesh[0]);
    let mut seg = 0usize;
    for j in 1..n_new - 1 {
        let target = total * j as f64 / (n_new - 1) as f64;
        while seg + 2 < mesh.len() && c[seg + 1] <= target {
            seg += 1;
        }
        // Piecewise-linear inverse of the cumulative integral.
        let t = (target - c[seg]) / (c[seg + 1] - c[seg]);
        let mut x = mesh[seg] + t * (mesh[seg + 1] - mesh[seg]);
        // Positivity of the monitor makes C strictly increasing; guard the
        // rounding edge anyway.
        let floor = out.last().copied().unwrap();
        if x <= floor {
            x = floor + (mesh[seg + 1] - floor) * 1e-12;
        }
        out.push(x);
    }
    out.push(mesh[mesh.len() - 1]);
    Ok(out)
}

/// Monotone piecewise-cubic (Fritsch-Carlson) interpolant derivatives.
fn pchip_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    if n == 2 {
        let s = (y[1] - y[0]) / (x[1] - x[0]);
        return vec![s, s];
    }
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let sl: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    for i in 1..n - 1 {
        if sl[i - 1] * sl[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / sl[i - 1] + w2 / sl[i]);
        }
    }
    d[0] = end_derivative(h[0], h[1], sl[0], sl[1]);
    d[n - 1] = end_derivative(h[n - 2], h[n - 3], sl[n - 2], sl[n - 3]);
    d
}

/// Shape-preserving one-sided end derivative (three-point rule with the
/// usual clamps).
fn end_derivative(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d * s0 <= 0.0 {
        0.0
    } else if s0 * s1 < 0.0 && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

fn pchip_eval(x: &[f64], y: &[f64], d: &[f64], xq: f64) -> f64 {
    // Locate the segment by binary search.
    let n = x.len();
    let mut lo = 0usize;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x[mid] <= xq {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h = x[hi] - x[lo];
    let t = (xq - x[lo]) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y[lo] + h10 * h * d[lo] + h01 * y[hi] + h11 * h * d[hi]
}

/// Interpolate a sampled function onto new abscissae with the monotone cubic.
pub fn pchip_resample(x: &[f64], y: &[f64], xq: &[f64]) -> Vec<f64> {
    let d = pchip_derivatives(x, y);
    xq.iter().map(|&q| pchip_eval(x, y, &d, q)).collect()
}

/// Transfer the solution onto `new_mesh` by monotone piecewise-cubic
/// interpolation; the time stamp is unchanged.
pub fn remesh(state: &SolutionState, new_mesh: &[f64]) -> Result<SolutionState> {
    let old = &state.mesh;
    if (old[0] - new_mesh[0]).abs() > 1e-14 || (old[old.len() - 1] - new_mesh[new_mesh.len() - 1]).abs() > 1e-14
    {
        return Err(SolverError::MeshMismatch(
            "old and new meshes must span the same interval".into(),
        ));
    }
    if new_mesh == old.as_slice() {
        return Ok(state.clone());
    }
    let h = pchip_resample(old, &state.h, new_mesh);
    let s = pchip_resample(old, &state.s, new_mesh);
    SolutionState::new(new_mesh.to_vec(), h, s, state.time)
}

/// True when the monitor mass has drifted enough to warrant a rezone: the
/// largest per-cell integral exceeds `ratio` times the mean.
pub fn needs_rezone(mesh: &[f64], monitor: &[f64], ratio: f64) -> bool {
    let c = cumulative_monitor(mesh, monitor);
    let n = mesh.len();
    let mean = c[n - 1] / (n - 1) as f64;
    let mut max_cell = 0.0f64;
    for i in 0..n - 1 {
        max_cell = max_cell.max(c[i + 1] - c[i]);
    }
    max_cell > ratio * mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::uniform_mesh;
    use approx::assert_relative_eq;

    #[test]
    fn constant_data_monitor_is_one() {
        let st = SolutionState::uniform_constant(21, 2.0, 1.0, 1.0);
        let policy = MeshPolicy { beta: 0.0, ..MeshPolicy::default() };
        let m = compute_monitor(&st, &policy);
        for v in m {
            assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn monitor_symmetric_for_symmetric_data() {
        let mesh = uniform_mesh(32, 2.0);
        let h: Vec<f64> = mesh.iter().map(|x| 1.0 - 0.5 * (-((x - 1.0) / 0.2).powi(2)).exp()).collect();
        let s: Vec<f64> = mesh.iter().map(|x| 1.0 + 0.3 * (std::f64::consts::PI * x).cos()).collect();
        let st = SolutionState::new(mesh, h, s, 0.0).unwrap();
        let m = compute_monitor(&st, &MeshPolicy::default());
        let n = m.len();
        for i in 0..n {
            assert!(
                (m[i] - m[n - 1 - i]).abs() < 1e-12,
                "monitor asymmetry at {i}: {} vs {}",
                m[i],
                m[n - 1 - i]
            );
        }
    }

    #[test]
    fn monitor_peaks_at_film_minimum() {
        let mesh = uniform_mesh(101, 2.0);
        let x0 = 0.75;
        let h: Vec<f64> = mesh
            .iter()
            .map(|x| 0.01 + 1.0 - (-((x - x0) / 0.15).powi(2)).exp() * 0.99)
            .collect();
        let s = vec![1.0; 101];
        let st = SolutionState::new(mesh.clone(), h, s, 0.0).unwrap();
        let policy = MeshPolicy { beta: 0.5, ..MeshPolicy::default() };
        let m = compute_monitor(&st, &policy);
        let argmax = m
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((mesh[argmax] - x0).abs() < 0.05, "monitor argmax at {}", mesh[argmax]);
    }

    #[test]
    fn equidistribute_constant_monitor_gives_uniform_mesh() {
        let mesh = uniform_mesh(41, 2.0);
        let monitor = vec![3.0; 41];
        let new = equidistribute(&mesh, &monitor, 21).unwrap();
        for (i, x) in new.iter().enumerate() {
            assert_relative_eq!(*x, 2.0 * i as f64 / 20.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn equidistribute_equalizes_cell_integrals() {
        let mesh = uniform_mesh(200, 2.0);
        let monitor: Vec<f64> = mesh.iter().map(|x| 1.0 + 5.0 * (-((x - 1.3) / 0.1).powi(2)).exp()).collect();
        let new = equidistribute(&mesh, &monitor, 57).unwrap();
        assert!(new.windows(2).all(|p| p[1] > p[0]));
        assert_eq!(new[0], 0.0);
        assert_eq!(*new.last().unwrap(), 2.0);

        // Defining property: equal increments of the cumulative integral.
        let c = cumulative_monitor(&mesh, &monitor);
        let lookup = |x: f64| -> f64 {
            let mut seg = 0;
            while seg + 2 < mesh.len() && mesh[seg + 1] <= x {
                seg += 1;
            }
            let t = (x - mesh[seg]) / (mesh[seg + 1] - mesh[seg]);
            c[seg] + t * (c[seg + 1] - c[seg])
        };
        let total = c[c.len() - 1];
        let target = total / 56.0;
        for w in new.windows(2) {
            let cell = lookup(w[1]) - lookup(w[0]);
            assert!(
                (cell - target).abs() <= 1e-8 * target,
                "cell integral {cell} vs {target}"
            );
        }
    }

    #[test]
    fn equidistribute_concentrates_nodes_in_heavy_region() {
        // Monitor 1 + 9 on [0.9, 1.1] sampled on a fine mesh; the expected
        // node share follows from the cumulative trapezoidal integral of the
        // sampled values, computed here independently.
        let n_fine = 2001;
        let mesh = uniform_mesh(n_fine, 2.0);
        let monitor: Vec<f64> = mesh
            .iter()
            .map(|&x| if (0.9..=1.1).contains(&x) { 10.0 } else { 1.0 })
            .collect();
        let c = cumulative_monitor(&mesh, &monitor);
        let total = c[n_fine - 1];
        let idx_of = |x: f64| mesh.iter().position(|&v| v >= x - 1e-12).unwrap();
        let inside_mass = c[idx_of(1.1)] - c[idx_of(0.9)];
        let n_new = 101;
        let expected = (n_new as f64 - 1.0) * inside_mass / total;

        let new = equidistribute(&mesh, &monitor, n_new).unwrap();
        let count = new.iter().filter(|&&x| (0.9..=1.1).contains(&x)).count();
        assert!(
            (count as f64 - expected).abs() <= 1.5,
            "nodes inside: {count}, expected about {expected}"
        );
    }

    #[test]
    fn remesh_reproduces_linear_data_exactly() {
        let mesh = uniform_mesh(31, 2.0);
        let h: Vec<f64> = mesh.iter().map(|x| 0.5 + 0.7 * x).collect();
        let s: Vec<f64> = mesh.iter().map(|x| 2.0 - 0.3 * x).collect();
        let st = SolutionState::new(mesh, h, s, 1.5).unwrap();
        let new_mesh: Vec<f64> = uniform_mesh(77, 2.0)
            .iter()
            .map(|&x| {
                if x > 0.0 && x < 2.0 {
                    x + 0.003 * (x * 13.0).sin()
                } else {
                    x
                }
            })
            .collect();
        let out = remesh(&st, &new_mesh).unwrap();
        assert_eq!(out.time, 1.5);
        for (i, &x) in new_mesh.iter().enumerate() {
            assert_relative_eq!(out.h[i], 0.5 + 0.7 * x, epsilon = 1e-12);
            assert_relative_eq!(out.s[i], 2.0 - 0.3 * x, epsilon = 1e-12);
        }
    }

    #[test]
    fn remesh_respects_source_bounds() {
        let mesh = uniform_mesh(41, 2.0);
        let h: Vec<f64> = mesh.iter().map(|x| 0.02 + (x - 1.0) * (x - 1.0)).collect();
        let s: Vec<f64> = mesh.iter().map(|x| 1.0 + (3.0 * x).sin().max(-0.9)).collect();
        let st = SolutionState::new(mesh, h, s.clone(), 0.0).unwrap();
        let new_mesh = uniform_mesh(97, 2.0);
        let out = remesh(&st, &new_mesh).unwrap();
        let (smin, smax) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
        for &v in &out.s {
            assert!(v >= smin - 1e-12 && v <= smax + 1e-12);
        }
        assert!(out.h.iter().all(|&v| v > 0.0), "interpolated h stays positive");
    }

    #[test]
    fn remesh_identity_on_same_mesh() {
        let mesh = uniform_mesh(19, 2.0);
        let h: Vec<f64> = mesh.iter().map(|x| 1.0 + 0.1 * (x * 5.0).sin()).collect();
        let st = SolutionState::new(mesh.clone(), h, vec![1.0; 19], 0.0).unwrap();
        let out = remesh(&st, &mesh).unwrap();
        assert_eq!(out, st);
    }
}
