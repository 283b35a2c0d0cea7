//! Experiment configuration: a TOML document with strict keys, validated and
//! filled with documented defaults. The effective configuration is echoed
//! into the run manifest so any output can be reproduced from it alone.

use serde::{Deserialize, Serialize};
use tearsim_core::equilibrium::ContinuationParam;
use tearsim_core::integrate::StepController;
use tearsim_core::mesh::MeshPolicy;
use tearsim_core::model::{ModelParams, SbarProfile, SolutionState};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Execution mode, selected by the CLI subcommand (a `mode` key in the file,
/// if present, must agree).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Equilibrium,
    Continue,
    Sweep,
    FitThinning,
    CheckBound,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Mode::Simulate => "simulate",
            Mode::Equilibrium => "equilibrium",
            Mode::Continue => "continue",
            Mode::Sweep => "sweep",
            Mode::FitThinning => "fit-thinning",
            Mode::CheckBound => "check-bound",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct SbarConfig {
    pub kind: String,
    pub value: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub xi: Option<f64>,
    pub base: Option<f64>,
    pub amplitude: Option<f64>,
    pub steepness: Option<f64>,
    pub center: Option<f64>,
    pub half_width: Option<f64>,
    pub x: Option<Vec<f64>>,
    #[serde(rename = "values")]
    pub table_values: Option<Vec<f64>>,
}

impl SbarConfig {
    fn build(&self) -> Result<SbarProfile, ConfigError> {
        let need = |opt: Option<f64>, key: &str| {
            opt.ok_or_else(|| {
                ConfigError(format!("params.sbar.{key} is required for kind \"{}\"", self.kind))
            })
        };
        match self.kind.as_str() {
            "constant" => Ok(SbarProfile::Constant { value: need(self.value, "value")? }),
            "step" => Ok(SbarProfile::Step {
                lo: need(self.lo, "lo")?,
                hi: need(self.hi, "hi")?,
                xi: need(self.xi, "xi")?,
            }),
            "tanh" => Ok(SbarProfile::Tanh {
                base: need(self.base, "base")?,
                amplitude: need(self.amplitude, "amplitude")?,
                steepness: need(self.steepness, "steepness")?,
                center: need(self.center, "center")?,
                half_width: need(self.half_width, "half_width")?,
            }),
            "table" => {
                let x = self
                    .x
                    .clone()
                    .ok_or_else(|| ConfigError("params.sbar.x is required for kind \"table\"".into()))?;
                let value = self.table_values.clone().ok_or_else(|| {
                    ConfigError("params.sbar.values is required for kind \"table\"".into())
                })?;
                Ok(SbarProfile::Table { x, value })
            }
            other => err(format!(
                "params.sbar.kind must be one of constant|step|tanh|table, got \"{other}\""
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub m: f64,
    pub n: f64,
    #[serde(default)]
    pub epsilon: f64,
    pub domain_length: f64,
    pub sbar: SbarConfig,
    /// Admissible lower bound on the initial osmolarity; defaults to the
    /// minimum of the initial data.
    pub salt_floor: Option<f64>,
    /// Admissible lower bound on the initial thickness; defaults to the
    /// minimum of the initial data.
    pub height_floor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableData {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Constant initial thickness (default 1).
    pub h: Option<f64>,
    /// Constant initial osmolarity (default 1).
    pub s: Option<f64>,
    /// Tabulated initial thickness; overrides the constant.
    pub h_table: Option<TableData>,
    /// Tabulated initial osmolarity; overrides the constant.
    pub s_table: Option<TableData>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub adaptive: Option<bool>,
    pub alpha_h: Option<f64>,
    pub alpha_s: Option<f64>,
    pub beta: Option<f64>,
    pub delta_h: Option<f64>,
    pub rezone_every: Option<usize>,
    pub rezone_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    pub n_nodes: Option<usize>,
    pub theta: Option<f64>,
    pub dt_init: Option<f64>,
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
    pub dt_max_rel_t: Option<f64>,
    pub newton_tol: Option<f64>,
    pub max_newton_iters: Option<usize>,
    pub growth: Option<f64>,
    pub shrink: Option<f64>,
    pub steady_tol: Option<f64>,
    pub rupture_floor_rel: Option<f64>,
    pub h_stop: Option<f64>,
    pub mesh: Option<MeshConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub t_end: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumConfig {
    /// Target total salt mass; defaults to the mass of the initial data.
    pub q0: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinueConfig {
    /// Continuation parameter: xi | m | sigma.
    pub parameter: String,
    pub from: f64,
    pub to: f64,
    pub q0: Option<f64>,
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
    pub h_fold_floor: Option<f64>,
    /// Write one profile CSV per branch point.
    #[serde(default)]
    pub write_profiles: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub m_values: Vec<f64>,
    pub n_offset: Option<f64>,
    pub t_end: Option<f64>,
    /// Thinning capture floor, applied to members with m > 1.
    pub h_stop: Option<f64>,
    pub classify_tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitThinningConfig {
    /// Diagnostics series CSV produced by a simulate run.
    pub series_csv: String,
    pub m: f64,
    /// Local capacity at the thinning point; when absent it is evaluated
    /// from the capacity profile at the final minimum location in the CSV.
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckBoundConfig {
    /// Combined constant C_eta + C_s T of the upper-bound equation.
    pub c_eta_plus_cst: f64,
    pub c: f64,
    pub tau: f64,
}

/// Raw document as parsed from TOML; unknown keys anywhere are errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub mode: Option<Mode>,
    pub params: Option<ParamsConfig>,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    pub numerics: Option<NumericsConfig>,
    pub output: Option<OutputConfig>,
    pub simulate: Option<SimulateConfig>,
    pub equilibrium: Option<EquilibriumConfig>,
    #[serde(rename = "continue")]
    pub continuation: Option<ContinueConfig>,
    pub sweep: Option<SweepConfig>,
    pub fit_thinning: Option<FitThinningConfig>,
    pub check_bound: Option<CheckBoundConfig>,
}

/// Fully validated configuration with all defaults applied.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub params: ModelParams,
    pub initial_h: InitialField,
    pub initial_s: InitialField,
    pub n_nodes: usize,
    pub controller: StepController,
    pub policy: MeshPolicy,
    pub out_dir: String,
    pub snapshot_times: Vec<f64>,
    pub t_end: f64,
    pub q0: Option<f64>,
    pub continuation: Option<ContinuationJob>,
    pub sweep: Option<SweepJob>,
    pub fit_thinning: Option<FitThinningConfig>,
    pub check_bound: Option<CheckBoundConfig>,
}

#[derive(Debug, Clone, Serialize)]
pub enum InitialField {
    Constant(f64),
    Table { x: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationJob {
    pub parameter: ContinuationParam,
    pub from: f64,
    pub to: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub h_fold_floor: f64,
    pub write_profiles: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepJob {
    pub m_values: Vec<f64>,
    pub n_offset: f64,
    pub h_stop: f64,
    pub classify_tol: f64,
}

impl InitialField {
    pub fn sample(&self, mesh: &[f64]) -> Vec<f64> {
        match self {
            InitialField::Constant(v) => vec![*v; mesh.len()],
            InitialField::Table { x, values } => {
                tearsim_core::mesh::pchip_resample(x, values, mesh)
            }
        }
    }

    fn min_value(&self) -> f64 {
        match self {
            InitialField::Constant(v) => *v,
            InitialField::Table { values, .. } => {
                values.iter().cloned().fold(f64::INFINITY, f64::min)
            }
        }
    }
}

fn check_finite(value: f64, key: &str) -> Result<(), ConfigError> {
    if value.is_finite() {
        Ok(())
    } else {
        err(format!("{key} must be finite, got {value}"))
    }
}

fn build_initial_field(
    constant: Option<f64>,
    table: &Option<TableData>,
    domain_length: f64,
    key: &str,
) -> Result<InitialField, ConfigError> {
    if let Some(t) = table {
        if t.x.len() != t.values.len() || t.x.len() < 2 {
            return err(format!("initial.{key}_table needs matching x/values with at least 2 samples"));
        }
        if t.x[0] != 0.0 || *t.x.last().unwrap() != domain_length {
            return err(format!(
                "initial.{key}_table abscissae must cover [0, {domain_length}] exactly"
            ));
        }
        for w in t.x.windows(2) {
            if !(w[1] > w[0]) {
                return err(format!("initial.{key}_table abscissae must be strictly increasing"));
            }
        }
        return Ok(InitialField::Table { x: t.x.clone(), values: t.values.clone() });
    }
    let v = constant.unwrap_or(1.0);
    check_finite(v, &format!("initial.{key}"))?;
    if v <= 0.0 && key == "h" {
        return err(format!("initial.h must be positive, got {v}"));
    }
    Ok(InitialField::Constant(v))
}

/// Parse and validate a TOML document into the effective configuration.
pub fn parse_config(text: &str, mode: Mode) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError(format!("{e}")))?;
    if let Some(file_mode) = raw.mode {
        if file_mode != mode {
            return err(format!(
                "config declares mode \"{file_mode}\" but the \"{mode}\" subcommand was invoked"
            ));
        }
    }

    // check-bound and fit-thinning need no model parameters.
    let needs_model = !matches!(mode, Mode::CheckBound);
    let params_cfg = match (&raw.params, needs_model) {
        (Some(p), _) => Some(p.clone()),
        (None, false) => None,
        (None, true) => return err("missing [params] section"),
    };

    let initial = raw.initial.clone().unwrap_or_default();
    let (params, initial_h, initial_s) = if let Some(p) = params_cfg {
        let sbar = p.sbar.build()?;
        let initial_h = build_initial_field(initial.h, &initial.h_table, p.domain_length, "h")?;
        let initial_s = build_initial_field(initial.s, &initial.s_table, p.domain_length, "s")?;
        let salt_floor = p.salt_floor.unwrap_or_else(|| initial_s.min_value().max(1e-12));
        let height_floor = p.height_floor.unwrap_or_else(|| initial_h.min_value());
        let params = ModelParams {
            m: p.m,
            n: p.n,
            epsilon: p.epsilon,
            domain_length: p.domain_length,
            sbar,
            salt_floor,
            height_floor,
        };
        params.validate().map_err(|e| ConfigError(e.to_string()))?;
        (params, initial_h, initial_s)
    } else {
        // Placeholder for check-bound mode.
        (
            ModelParams {
                m: 0.0,
                n: 0.0,
                epsilon: 0.0,
                domain_length: 1.0,
                sbar: SbarProfile::Constant { value: 1.0 },
                salt_floor: 1.0,
                height_floor: 1.0,
            },
            InitialField::Constant(1.0),
            InitialField::Constant(1.0),
        )
    };

    let nums = raw.numerics.clone().unwrap_or(NumericsConfig {
        n_nodes: None,
        theta: None,
        dt_init: None,
        dt_min: None,
        dt_max: None,
        dt_max_rel_t: None,
        newton_tol: None,
        max_newton_iters: None,
        growth: None,
        shrink: None,
        steady_tol: None,
        rupture_floor_rel: None,
        h_stop: None,
        mesh: None,
    });
    let defaults = StepController::default();
    let controller = StepController {
        dt_init: nums.dt_init.unwrap_or(defaults.dt_init),
        dt_min: nums.dt_min.unwrap_or(defaults.dt_min),
        dt_max: nums.dt_max.unwrap_or(defaults.dt_max),
        growth: nums.growth.unwrap_or(defaults.growth),
        shrink: nums.shrink.unwrap_or(defaults.shrink),
        newton_tol: nums.newton_tol.unwrap_or(defaults.newton_tol),
        max_newton_iters: nums.max_newton_iters.unwrap_or(defaults.max_newton_iters),
        theta: nums.theta.unwrap_or(defaults.theta),
        rupture_floor_rel: nums.rupture_floor_rel.unwrap_or(defaults.rupture_floor_rel),
        steady_tol: nums.steady_tol.unwrap_or(defaults.steady_tol),
        h_stop: nums.h_stop.unwrap_or(defaults.h_stop),
        dt_max_rel_t: nums.dt_max_rel_t.unwrap_or(defaults.dt_max_rel_t),
    };
    controller.validate().map_err(|e| ConfigError(format!("numerics: {e}")))?;

    let mesh_defaults = MeshPolicy::default();
    let mc = nums.mesh.unwrap_or(MeshConfig {
        adaptive: None,
        alpha_h: None,
        alpha_s: None,
        beta: None,
        delta_h: None,
        rezone_every: None,
        rezone_ratio: None,
    });
    let policy = MeshPolicy {
        adaptive: mc.adaptive.unwrap_or(mesh_defaults.adaptive),
        alpha_h: mc.alpha_h.unwrap_or(mesh_defaults.alpha_h),
        alpha_s: mc.alpha_s.unwrap_or(mesh_defaults.alpha_s),
        beta: mc.beta.unwrap_or(mesh_defaults.beta),
        delta_h: mc.delta_h.unwrap_or(mesh_defaults.delta_h),
        rezone_every: mc.rezone_every.unwrap_or(mesh_defaults.rezone_every),
        rezone_ratio: mc.rezone_ratio.unwrap_or(mesh_defaults.rezone_ratio),
    };
    if !(policy.alpha_h >= 0.0 && policy.alpha_s >= 0.0 && policy.beta >= 0.0 && policy.delta_h > 0.0)
    {
        return err("numerics.mesh weights must be nonnegative with delta_h > 0");
    }
    if policy.rezone_every == 0 || !(policy.rezone_ratio > 1.0) {
        return err("numerics.mesh requires rezone_every >= 1 and rezone_ratio > 1");
    }

    let n_nodes = nums.n_nodes.unwrap_or(401);
    if n_nodes < 5 {
        return err(format!("numerics.n_nodes must be at least 5, got {n_nodes}"));
    }

    let output = raw.output.clone().unwrap_or(OutputConfig { dir: None, snapshot_times: vec![] });
    for (i, t) in output.snapshot_times.iter().enumerate() {
        check_finite(*t, &format!("output.snapshot_times[{i}]"))?;
        if *t < 0.0 {
            return err(format!("output.snapshot_times[{i}] must be nonnegative"));
        }
    }

    let t_end = match mode {
        Mode::Simulate => raw.simulate.as_ref().and_then(|s| s.t_end).unwrap_or(1.0),
        Mode::Sweep => raw.sweep.as_ref().and_then(|s| s.t_end).unwrap_or(400.0),
        _ => raw.simulate.as_ref().and_then(|s| s.t_end).unwrap_or(1.0),
    };
    if !(t_end > 0.0 && t_end.is_finite()) {
        return err(format!("t_end must be positive and finite, got {t_end}"));
    }

    let q0 = match mode {
        Mode::Equilibrium => raw.equilibrium.as_ref().and_then(|e| e.q0),
        Mode::Continue => raw.continuation.as_ref().and_then(|c| c.q0),
        _ => None,
    };
    if let Some(q) = q0 {
        if !(q > 0.0 && q.is_finite()) {
            return err(format!("q0 must be positive and finite, got {q}"));
        }
    }

    let continuation = if mode == Mode::Continue {
        let c = raw
            .continuation
            .clone()
            .ok_or_else(|| ConfigError("missing [continue] section".into()))?;
        let parameter = match c.parameter.as_str() {
            "xi" => ContinuationParam::Xi,
            "m" => ContinuationParam::MobilityM,
            "sigma" => ContinuationParam::SigmaConst,
            other => {
                return err(format!(
                    "continue.parameter must be xi|m|sigma, got \"{other}\""
                ))
            }
        };
        check_finite(c.from, "continue.from")?;
        check_finite(c.to, "continue.to")?;
        Some(ContinuationJob {
            parameter,
            from: c.from,
            to: c.to,
            initial_step: c.initial_step.unwrap_or(0.01),
            max_step: c.max_step.unwrap_or(0.05),
            h_fold_floor: c.h_fold_floor.unwrap_or(1e-3),
            write_profiles: c.write_profiles,
        })
    } else {
        None
    };

    let sweep = if mode == Mode::Sweep {
        let s = raw.sweep.clone().ok_or_else(|| ConfigError("missing [sweep] section".into()))?;
        if s.m_values.is_empty() {
            return err("sweep.m_values must not be empty");
        }
        for (i, m) in s.m_values.iter().enumerate() {
            if !(m.is_finite() && *m >= 0.0) {
                return err(format!("sweep.m_values[{i}] must be >= 0, got {m}"));
            }
        }
        Some(SweepJob {
            m_values: s.m_values,
            n_offset: s.n_offset.unwrap_or(1.0),
            h_stop: s.h_stop.unwrap_or(3e-3),
            classify_tol: s.classify_tol.unwrap_or(0.02),
        })
    } else {
        None
    };

    let fit_thinning = if mode == Mode::FitThinning {
        Some(
            raw.fit_thinning
                .clone()
                .ok_or_else(|| ConfigError("missing [fit_thinning] section".into()))?,
        )
    } else {
        None
    };

    let check_bound = if mode == Mode::CheckBound {
        let c = raw
            .check_bound
            .clone()
            .ok_or_else(|| ConfigError("missing [check_bound] section".into()))?;
        check_finite(c.c_eta_plus_cst, "check_bound.c_eta_plus_cst")?;
        check_finite(c.c, "check_bound.c")?;
        check_finite(c.tau, "check_bound.tau")?;
        Some(c)
    } else {
        None
    };

    Ok(ExperimentConfig {
        mode,
        params,
        initial_h,
        initial_s,
        n_nodes,
        controller,
        policy,
        out_dir: output.dir.unwrap_or_else(|| "out".into()),
        snapshot_times: output.snapshot_times,
        t_end,
        q0,
        continuation,
        sweep,
        fit_thinning,
        check_bound,
    })
}

impl ExperimentConfig {
    /// Initial state sampled on the uniform run mesh.
    pub fn initial_state(&self) -> Result<SolutionState, ConfigError> {
        let mesh = tearsim_core::model::uniform_mesh(self.n_nodes, self.params.domain_length);
        let h = self.initial_h.sample(&mesh);
        let s = self.initial_s.sample(&mesh);
        if let Some(bad) = h.iter().find(|v| !(**v > 0.0)) {
            return err(format!("initial thickness must be positive everywhere, found {bad}"));
        }
        if let Some(bad) = s.iter().find(|v| !(**v >= 0.0)) {
            return err(format!("initial osmolarity must be nonnegative, found {bad}"));
        }
        SolutionState::new(mesh, h, s, 0.0).map_err(|e| ConfigError(e.to_string()))
    }
}
