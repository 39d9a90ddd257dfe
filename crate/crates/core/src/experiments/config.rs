use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annealed::{Method, Model};
use crate::error::{Error, Result};
use crate::walk::{JumpKernel, KernelSpec};

/// The canned experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SurvivalSweep,
    ConditionedPaths,
    ThinPoints,
    Holes,
    Identities,
    StrategyBound,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::SurvivalSweep => "survival_sweep",
            ExperimentKind::ConditionedPaths => "conditioned_paths",
            ExperimentKind::ThinPoints => "thin_points",
            ExperimentKind::Holes => "holes",
            ExperimentKind::Identities => "identities",
            ExperimentKind::StrategyBound => "strategy_bound",
        }
    }
}

/// A kernel given by preset name or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelRef {
    Name(String),
    Inline(KernelSpec),
}

impl KernelRef {
    pub fn resolve(&self) -> Result<JumpKernel> {
        match self {
            KernelRef::Name(n) => JumpKernel::preset(n).ok_or_else(|| {
                Error::InvalidKernel(format!(
                    "unknown kernel preset {n:?} (known: {})",
                    JumpKernel::preset_names().join(", ")
                ))
            }),
            KernelRef::Inline(spec) => JumpKernel::from_spec(spec),
        }
    }
}

fn ssrw_ref() -> KernelRef {
    KernelRef::Name("ssrw".into())
}

fn one() -> f64 {
    1.0
}

fn infinite() -> f64 {
    f64::INFINITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default = "one")]
    pub nu: f64,
    #[serde(default = "infinite", with = "crate::serde_f64")]
    pub gamma: f64,
    #[serde(default = "ssrw_ref")]
    pub walk_kernel: KernelRef,
    #[serde(default = "ssrw_ref")]
    pub trap_kernel: KernelRef,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            rho: 1.0,
            nu: 1.0,
            gamma: f64::INFINITY,
            walk_kernel: ssrw_ref(),
            trap_kernel: ssrw_ref(),
        }
    }
}

/// Replica counts; each experiment uses the ones it needs and has its own
/// defaults for missing entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicaConfig {
    pub outer: Option<u64>,
    pub inner: Option<u64>,
    pub paths: Option<u64>,
    pub fields_per_path: Option<u32>,
    pub max_paths: Option<u64>,
}

/// Experiment-specific knobs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamConfig {
    /// survival_sweep: `hard_range_mc`/`soft_range_mc` (by γ) or `feynman_kac`.
    pub method: Option<Method>,
    /// conditioned_paths: fixed weight method; auto-escalation when absent.
    pub weight_method: Option<Method>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub target_ess: Option<f64>,
    /// thin_points threshold `M`.
    pub m: Option<f64>,
    /// holes: moment rate `c` and explosion level.
    pub c: Option<f64>,
    pub c_max: Option<f64>,
    /// holes: `hole_volume` (default) or `f_gamma`.
    pub functional: Option<String>,
    /// strategy_bound: ball radius (default `⌈t^{1/3}⌉`).
    pub radius: Option<i64>,
    /// strategy_bound: also estimate `Z_t` for the lower-bound check.
    pub compare_total: Option<bool>,
    /// identities: number of zig-zag paths for the Pascal check (0 skips).
    pub pascal_paths: Option<u32>,
    /// identities: horizon of the cross-method comparison (absent skips).
    pub cross_check_t: Option<f64>,
    pub cross_check_half_width: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Write CSV side files (default true).
    pub csv: Option<bool>,
}

/// One experiment run, read from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub replicas: ReplicaConfig,
    #[serde(default = "default_window_eps")]
    pub window_eps: f64,
    #[serde(default)]
    pub params: ParamConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_window_eps() -> f64 {
    1e-6
}

impl ExperimentConfig {
    /// Parse and validate. Returns the config and the raw document for
    /// echoing.
    pub fn from_json_str(raw: &str) -> Result<(Self, serde_json::Value)> {
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| Error::Config(vec![format!("not valid JSON: {e}")]))?;
        let mut violations = Vec::new();
        let parsed: std::result::Result<Self, _> =
            serde_ignored::deserialize(value.clone(), |path| violations.push(format!("unknown key `{path}`")));
        match parsed {
            Err(e) => violations.push(e.to_string()),
            Ok(config) => match config.validate() {
                Ok(()) if violations.is_empty() => return Ok((config, value)),
                Ok(()) => {}
                Err(Error::Config(more)) => violations.extend(more),
                Err(e) => violations.push(e.to_string()),
            },
        }
        Err(Error::Config(violations))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, serde_json::Value)> {
        let raw = std::fs::read_to_string(path.as_ref())?;
        Self::from_json_str(&raw)
    }

    pub fn model(&self) -> Result<Model> {
        Ok(Model {
            walk_kernel: self.model.walk_kernel.resolve()?,
            kappa: self.model.kappa,
            nu: self.model.nu,
            rho: self.model.rho,
            trap_kernel: self.model.trap_kernel.resolve()?,
            gamma: self.model.gamma,
        })
    }

    pub fn write_csv(&self) -> bool {
        self.output.csv.unwrap_or(true)
    }

    /// Check every constraint and report all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        let m = &self.model;
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(m.kappa) {
            v.push(format!("model.kappa = {} must be finite and ≥ 0", m.kappa));
        }
        if !finite_nonneg(m.rho) {
            v.push(format!("model.rho = {} must be finite and ≥ 0", m.rho));
        }
        if !finite_nonneg(m.nu) {
            v.push(format!("model.nu = {} must be finite and ≥ 0", m.nu));
        }
        if !(m.gamma >= 0.0) {
            v.push(format!("model.gamma = {} must lie in [0, ∞]", m.gamma));
        }
        let walk = m.walk_kernel.resolve();
        if let Err(e) = &walk {
            v.push(format!("model.walk_kernel: {e}"));
        }
        match m.trap_kernel.resolve() {
            Err(e) => v.push(format!("model.trap_kernel: {e}")),
            Ok(k) if !k.is_symmetric() => v.push("model.trap_kernel must be symmetric".into()),
            Ok(_) => {}
        }
        if !(self.window_eps > 0.0 && self.window_eps < 1.0) {
            v.push(format!("window_eps = {} must lie in (0, 1)", self.window_eps));
        }
        if self.workers == Some(0) {
            v.push("workers must be ≥ 1".into());
        }
        for (i, t) in self.t_grid.iter().enumerate() {
            if !(t.is_finite() && *t >= 0.0) {
                v.push(format!("t_grid[{i}] = {t} must be finite and ≥ 0"));
            }
        }
        let r = &self.replicas;
        for (name, value) in [("outer", r.outer), ("inner", r.inner), ("paths", r.paths)] {
            if value.is_some_and(|n| n < 2) {
                v.push(format!("replicas.{name} must be ≥ 2"));
            }
        }
        if r.fields_per_path == Some(0) {
            v.push("replicas.fields_per_path must be ≥ 1".into());
        }
        let p = &self.params;
        for (name, value) in [("alpha", p.alpha), ("epsilon", p.epsilon), ("m", p.m), ("c", p.c), ("c_max", p.c_max)] {
            if value.is_some_and(|x| !(x > 0.0 && x.is_finite())) {
                v.push(format!("params.{name} must be positive and finite"));
            }
        }
        if p.radius.is_some_and(|r| r < 1) {
            v.push("params.radius must be ≥ 1".into());
        }

        let needs_grid = !matches!(self.experiment, ExperimentKind::Identities);
        if needs_grid && self.t_grid.is_empty() {
            v.push(format!("{} needs a nonempty t_grid", self.experiment.as_str()));
        }
        match self.experiment {
            ExperimentKind::SurvivalSweep => {
                if let Some(method) = p.method {
                    if !matches!(method, Method::HardRangeMc | Method::SoftRangeMc | Method::FeynmanKac) {
                        v.push(format!("params.method {} is not a survival route", method.as_str()));
                    }
                }
            }
            ExperimentKind::ConditionedPaths => {
                if let Some(method) = p.weight_method {
                    if !matches!(method, Method::FieldMc | Method::FeynmanKac) {
                        v.push(format!("params.weight_method {} is not available for ensembles", method.as_str()));
                    }
                }
            }
            ExperimentKind::ThinPoints => {
                if !(m.gamma > 0.0 && m.gamma.is_finite()) {
                    v.push("thin_points needs a finite model.gamma > 0".into());
                }
            }
            ExperimentKind::Holes => match p.functional.as_deref() {
                None | Some("hole_volume") => {
                    if let Ok(k) = &walk {
                        if k.exp_moment().is_none() {
                            v.push(format!(
                                "holes with kernel {} rejected: hole-volume moments cannot hold for power-law tails",
                                k.name()
                            ));
                        }
                    }
                }
                Some("f_gamma") => {
                    if !(m.gamma > 0.0 && m.gamma.is_finite()) {
                        v.push("holes with f_gamma needs a finite model.gamma > 0".into());
                    }
                }
                Some(other) => v.push(format!("params.functional {other:?} must be hole_volume or f_gamma")),
            },
            ExperimentKind::Identities => {
                if !(m.gamma > 0.0 && m.gamma.is_finite()) {
                    v.push("identities needs a finite model.gamma > 0 for the soft-range identity".into());
                }
            }
            ExperimentKind::StrategyBound => {}
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}
