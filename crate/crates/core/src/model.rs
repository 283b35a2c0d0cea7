//! Continuous-model data: parameters, the effective salt capacity profile
//! `S̄(x)`, solution states on a mesh, and the integral diagnostics Q and M.

use crate::error::{Result, SolverError};
use serde::{Deserialize, Serialize};

/// Effective salt capacity profile `S̄(x)` on `[0, L]`.
///
/// Elevated values model regions of locally increased evaporation. All
/// variants are nonnegative and bounded; the sup-norm is computed analytically
/// per variant, never by scanning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SbarProfile {
    /// Spatially uniform capacity.
    Constant { value: f64 },
    /// `hi` on the centered window `(L/2 - xi, L/2 + xi)`, `lo` outside.
    /// At the two jump abscissae the value is the mean of the one-sided
    /// limits, which keeps residual assembly reflection-symmetric.
    Step { lo: f64, hi: f64, xi: f64 },
    /// `base + amplitude * tanh(steepness * (|x - center| - half_width))`.
    Tanh {
        base: f64,
        amplitude: f64,
        steepness: f64,
        center: f64,
        half_width: f64,
    },
    /// Piecewise-linear interpolation of sorted `(x, value)` samples
    /// covering `[0, L]`.
    Table { x: Vec<f64>, value: Vec<f64> },
}

impl SbarProfile {
    /// Validate the profile against a domain of length `domain_length`.
    pub fn validate(&self, domain_length: f64) -> Result<()> {
        let bad = |msg: String| Err(SolverError::InvalidParameter(msg));
        match self {
            SbarProfile::Constant { value } => {
                if !value.is_finite() || *value < 0.0 {
                    return bad(format!("constant capacity must be finite and >= 0, got {value}"));
                }
            }
            SbarProfile::Step { lo, hi, xi } => {
                if !(lo.is_finite() && hi.is_finite() && xi.is_finite()) {
                    return bad("step capacity fields must be finite".into());
                }
                if *lo <= 0.0 || *hi <= 0.0 {
                    return bad(format!("step capacity requires lo > 0 and hi > 0, got lo={lo}, hi={hi}"));
                }
                if !(*xi > 0.0 && *xi < domain_length / 2.0) {
                    return bad(format!(
                        "step shift must satisfy 0 < xi < L/2 = {}, got {xi}",
                        domain_length / 2.0
                    ));
                }
            }
            SbarProfile::Tanh { base, amplitude, steepness, center, half_width } => {
                for (name, v) in [
                    ("base", base),
                    ("amplitude", amplitude),
                    ("steepness", steepness),
                    ("center", center),
                    ("half_width", half_width),
                ] {
                    if !v.is_finite() {
                        return bad(format!("tanh capacity field {name} must be finite"));
                    }
                }
                // tanh ranges over (-1, 1): the profile stays within
                // base +/- |amplitude|, which must be nonnegative.
                if *base - amplitude.abs() < 0.0 {
                    return bad(format!(
                        "tanh capacity can go negative: base={base}, amplitude={amplitude}"
                    ));
                }
            }
            SbarProfile::Table { x, value } => {
                if x.len() != value.len() {
                    return bad(format!(
                        "table capacity: {} abscissae but {} values",
                        x.len(),
                        value.len()
                    ));
                }
                if x.len() < 2 {
                    return bad("table capacity needs at least two samples".into());
                }
                if x[0] != 0.0 || *x.last().unwrap() != domain_length {
                    return bad(format!(
                        "table abscissae must cover [0, {domain_length}] exactly, got [{}, {}]",
                        x[0],
                        x.last().unwrap()
                    ));
                }
                for pair in x.windows(2) {
                    if !(pair[1] > pair[0]) {
                        return bad(format!(
                            "table abscissae must be strictly increasing, got {} then {}",
                            pair[0], pair[1]
                        ));
                    }
                }
                for v in value {
                    if !v.is_finite() || *v < 0.0 {
                        return bad(format!("table capacity values must be finite and >= 0, got {v}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Analytic sup-norm of the profile over `[0, L]`.
    pub fn sup_norm(&self, domain_length: f64) -> f64 {
        match self {
            SbarProfile::Constant { value } => *value,
            SbarProfile::Step { lo, hi, .. } => lo.max(*hi),
            // The profile is monotone in the distance from the center, so the
            // supremum is attained at the center (clamped into the domain) or
            // at an endpoint, depending on the amplitude sign.
            SbarProfile::Tanh { center, .. } => {
                let mut sup = f64::NEG_INFINITY;
                for x in [0.0, domain_length, center.clamp(0.0, domain_length)] {
                    sup = sup.max(self.eval_unchecked(x, domain_length));
                }
                sup
            }
            SbarProfile::Table { value, .. } => value.iter().cloned().fold(0.0, f64::max),
        }
    }

    /// Evaluate `S̄(x)` for `x` in `[0, L]`.
    pub fn eval(&self, x: f64, domain_length: f64) -> Result<f64> {
        if !(0.0..=domain_length).contains(&x) {
            return Err(SolverError::OutOfDomain { x, domain_length });
        }
        Ok(self.eval_unchecked(x, domain_length))
    }

    /// Evaluation without the domain check; callers inside assembly loops
    /// guarantee `x` already lies on the mesh.
    pub fn eval_unchecked(&self, x: f64, domain_length: f64) -> f64 {
        match self {
            SbarProfile::Constant { value } => *value,
            SbarProfile::Step { lo, hi, xi } => {
                let c = domain_length / 2.0;
                let d = (x - c).abs();
                if d < *xi {
                    *hi
                } else if d > *xi {
                    *lo
                } else {
                    0.5 * (lo + hi)
                }
            }
            SbarProfile::Tanh { base, amplitude, steepness, center, half_width } => {
                base + amplitude * (steepness * ((x - center).abs() - half_width)).tanh()
            }
            SbarProfile::Table { x: xs, value } => {
                // Binary search for the bracketing segment.
                let mut lo = 0usize;
                let mut hi = xs.len() - 1;
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if xs[mid] <= x {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
                value[lo] + t * (value[hi] - value[lo])
            }
        }
    }
}

/// Model parameters of the governing system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Mobility exponent of the non-conservative source term.
    pub m: f64,
    /// Mobility exponent of the conservative capillary flux.
    pub n: f64,
    /// Conjoining-pressure strength (0 disables the term).
    pub epsilon: f64,
    /// Domain length L.
    pub domain_length: f64,
    /// Effective salt capacity profile.
    pub sbar: SbarProfile,
    /// Admissible lower bound on the initial osmolarity (lambda).
    pub salt_floor: f64,
    /// Admissible lower bound on the initial thickness (eta).
    pub height_floor: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SolverError::InvalidParameter(msg));
        if !(self.m.is_finite() && self.m >= 0.0) {
            return bad(format!("params.m must be >= 0, got {}", self.m));
        }
        if !(self.n.is_finite() && self.n >= 0.0) {
            return bad(format!("params.n must be >= 0, got {}", self.n));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad(format!("params.epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(self.domain_length.is_finite() && self.domain_length > 0.0) {
            return bad(format!("params.domain_length must be > 0, got {}", self.domain_length));
        }
        if !(self.salt_floor.is_finite() && self.salt_floor > 0.0) {
            return bad(format!("params.salt_floor must be > 0, got {}", self.salt_floor));
        }
        if !(self.height_floor.is_finite() && self.height_floor > 0.0) {
            return bad(format!("params.height_floor must be > 0, got {}", self.height_floor));
        }
        self.sbar.validate(self.domain_length)?;
        if self.salt_floor > self.sbar.sup_norm(self.domain_length) {
            return bad(format!(
                "params.salt_floor = {} exceeds the capacity sup-norm {}; no admissible osmolarity exists",
                self.salt_floor,
                self.sbar.sup_norm(self.domain_length)
            ));
        }
        Ok(())
    }

    pub fn eval_sbar(&self, x: f64) -> Result<f64> {
        self.sbar.eval(x, self.domain_length)
    }
}

/// Film thickness and osmolarity sampled on a mesh at one time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionState {
    /// Strictly increasing node coordinates with endpoints 0 and L.
    pub mesh: Vec<f64>,
    /// Per-node film thickness (> 0 during any valid run).
    pub h: Vec<f64>,
    /// Per-node osmolarity (>= 0).
    pub s: Vec<f64>,
    /// Time of the sample.
    pub time: f64,
}

impl SolutionState {
    pub fn new(mesh: Vec<f64>, h: Vec<f64>, s: Vec<f64>, time: f64) -> Result<Self> {
        let n = mesh.len();
        if h.len() != n || s.len() != n {
            return Err(SolverError::MeshMismatch(format!(
                "mesh has {n} nodes but h has {} and s has {}",
                h.len(),
                s.len()
            )));
        }
        if n < 2 {
            return Err(SolverError::MeshTooCoarse { n, min: 2 });
        }
        for pair in mesh.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(SolverError::MeshMismatch(format!(
                    "mesh not strictly increasing at {} -> {}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(SolutionState { mesh, h, s, time })
    }

    /// Uniform mesh with constant data.
    pub fn uniform_constant(n: usize, domain_length: f64, h0: f64, s0: f64) -> Self {
        let mesh = uniform_mesh(n, domain_length);
        SolutionState { mesh, h: vec![h0; n], s: vec![s0; n], time: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    pub fn min_h(&self) -> f64 {
        self.h.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Uniform mesh on `[0, L]` with exact endpoints.
pub fn uniform_mesh(n: usize, domain_length: f64) -> Vec<f64> {
    let mut mesh: Vec<f64> = (0..n)
        .map(|i| domain_length * i as f64 / (n - 1) as f64)
        .collect();
    mesh[0] = 0.0;
    mesh[n - 1] = domain_length;
    mesh
}

/// Trapezoidal quadrature of nodal values over the mesh.
pub fn trapezoid(mesh: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..mesh.len() - 1 {
        acc += 0.5 * (mesh[i + 1] - mesh[i]) * (values[i] + values[i + 1]);
    }
    acc
}

/// Total salt mass Q = integral of h*s.
pub fn compute_salt_mass(state: &SolutionState) -> f64 {
    let hs: Vec<f64> = state.h.iter().zip(&state.s).map(|(h, s)| h * s).collect();
    trapezoid(&state.mesh, &hs)
}

/// Fluid mass M = integral of h and its rate of change
/// dM/dt = -integral of h^m (S̄ - s).
pub fn compute_fluid_mass(state: &SolutionState, params: &ModelParams) -> (f64, f64) {
    let mass = trapezoid(&state.mesh, &state.h);
    let integrand: Vec<f64> = state
        .mesh
        .iter()
        .zip(state.h.iter().zip(&state.s))
        .map(|(&x, (&h, &s))| {
            h.powf(params.m) * (params.sbar.eval_unchecked(x, params.domain_length) - s)
        })
        .collect();
    let dm_dt = -trapezoid(&state.mesh, &integrand);
    (mass, dm_dt)
}
