//! Run configuration files.
//!
//! Configurations are TOML. Frequencies and rates are written in Hz and
//! converted to angular units (×2π) on load; times are seconds and the
//! temperature is Kelvin. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constants::TWO_PI;
use crate::correlations::{CorrelationStrategy, GridSpec};
use crate::dynamics::{EvolveConfig, Frame, Method, SteadyStrategy};
use crate::error::{Error, Result};
use crate::merit::MaterialParams;
use crate::model::{SystemParams, Truncation};

/// Operating point in configuration units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    /// Hz
    pub f_m: f64,
    pub q_m: f64,
    /// K
    pub temperature: f64,
    /// Hz (all rates below)
    pub lambda: f64,
    pub g_sp: f64,
    pub g_c: f64,
    pub kappa_sp: f64,
    pub kappa_c: f64,
    pub gamma_star: f64,
    pub delta: f64,
    /// s
    pub t_l: f64,
    pub t_u: f64,
    #[serde(default)]
    pub gamma_relax: f64,
}

impl ParamsConfig {
    pub fn from_system(p: &SystemParams) -> Self {
        Self {
            f_m: p.f_m,
            q_m: p.q_m,
            temperature: p.temperature,
            lambda: p.lambda / TWO_PI,
            g_sp: p.g_sp / TWO_PI,
            g_c: p.g_c / TWO_PI,
            kappa_sp: p.kappa_sp / TWO_PI,
            kappa_c: p.kappa_c / TWO_PI,
            gamma_star: p.gamma_star / TWO_PI,
            delta: p.delta / TWO_PI,
            t_l: p.t_l,
            t_u: p.t_u,
            gamma_relax: p.gamma_relax / TWO_PI,
        }
    }

    pub fn to_system(&self) -> SystemParams {
        SystemParams {
            f_m: self.f_m,
            q_m: self.q_m,
            temperature: self.temperature,
            lambda: TWO_PI * self.lambda,
            g_sp: TWO_PI * self.g_sp,
            g_c: TWO_PI * self.g_c,
            kappa_sp: TWO_PI * self.kappa_sp,
            kappa_c: TWO_PI * self.kappa_c,
            gamma_star: TWO_PI * self.gamma_star,
            delta: TWO_PI * self.delta,
            t_l: self.t_l,
            t_u: self.t_u,
            gamma_relax: TWO_PI * self.gamma_relax,
        }
    }

    /// Sets the field addressed by `name` (without the `params.` prefix).
    /// `gate_length` moves `t_l` so that `t_u − t_l` equals the value.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "f_m" => &mut self.f_m,
            "q_m" => &mut self.q_m,
            "temperature" => &mut self.temperature,
            "lambda" => &mut self.lambda,
            "g_sp" => &mut self.g_sp,
            "g_c" => &mut self.g_c,
            "kappa_sp" => &mut self.kappa_sp,
            "kappa_c" => &mut self.kappa_c,
            "gamma_star" => &mut self.gamma_star,
            "delta" => &mut self.delta,
            "t_l" => &mut self.t_l,
            "t_u" => &mut self.t_u,
            "gamma_relax" => &mut self.gamma_relax,
            "gate_length" => {
                self.t_l = self.t_u - value;
                return Ok(());
            }
            other => return Err(Error::Config(format!("unknown parameter `params.{other}`"))),
        };
        *slot = value;
        Ok(())
    }
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self::from_system(&SystemParams::reference())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Step ceiling (s). Defaults to a fiftieth of the mechanical period in
    /// the lab frame and to 0.3 periods in the rotating frame, where only
    /// counter-rotating terms oscillate at the mechanical scale.
    pub max_dt: Option<f64>,
    pub dt_init: Option<f64>,
    pub frame: Frame,
    pub steady: SteadyStrategy,
    pub correlations: CorrelationStrategy,
    /// Largest admissible top-Fock-level population.
    pub top_fock_limit: f64,
    /// Number of truncation escalations allowed per point.
    pub escalation_budget: usize,
    /// Levels added to an inadequate mode per escalation.
    pub escalation_step: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_dt: None,
            dt_init: None,
            frame: Frame::DetunedRotating,
            steady: SteadyStrategy::Auto,
            correlations: CorrelationStrategy::Adjoint,
            top_fock_limit: 1e-4,
            escalation_budget: 3,
            escalation_step: 4,
        }
    }
}

impl SolverConfig {
    /// Settings for the lab-frame march to the cooling steady state.
    pub fn steady_config(&self, f_m: f64) -> EvolveConfig {
        SolverConfig { frame: Frame::Lab, ..*self }.evolve_config(f_m)
    }

    pub fn evolve_config(&self, f_m: f64) -> EvolveConfig {
        let base = EvolveConfig::for_mechanics(f_m);
        let default_max = match self.frame {
            Frame::Lab => base.max_dt,
            Frame::DetunedRotating => 0.3 / f_m,
        };
        let max_dt = self.max_dt.unwrap_or(default_max);
        EvolveConfig {
            method: self.method,
            dt_init: self.dt_init.unwrap_or(max_dt / 10.0).min(max_dt),
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_dt,
            frame: self.frame,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_t: usize,
    pub n_tau: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_t: 97, n_tau: 97 }
    }
}

impl GridConfig {
    pub fn spec(&self, t_l: f64, t_u: f64) -> GridSpec {
        GridSpec { t_l, t_u, n_t: self.n_t, n_tau: self.n_tau }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// `params.<field>` or `params.gate_length`.
    pub path: String,
    pub values: Vec<f64>,
}

impl SweepAxis {
    pub fn field(&self) -> Result<&str> {
        self.path
            .strip_prefix("params.")
            .ok_or_else(|| Error::Config(format!("sweep path `{}` must start with `params.`", self.path)))
    }

    /// True when the axis only moves the gate, so all its points can share
    /// one evolution.
    pub fn is_gate(&self) -> bool {
        matches!(self.path.as_str(), "params.t_l" | "params.t_u" | "params.gate_length")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// Figure panel letter; adds a `fig2<panel>.csv` copy of the sweep table.
    pub panel: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into(), panel: None }
    }
}

/// Reduced-cost profile. Rates are rescaled by `scale` so that Ω/κ_sp,
/// Γ_th/Ω, κ_c/ω_m, g_c/κ_c and n_th γ_m/δ stay fixed: g_sp and λ grow by
/// √scale, κ_sp and γ* by scale, gate times shrink by 1/scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FastProfile {
    pub scale: f64,
    pub truncation: Truncation,
    pub grid: GridConfig,
    /// Replaces `solver.escalation_budget` for fast runs.
    pub escalation_budget: usize,
}

impl Default for FastProfile {
    fn default() -> Self {
        Self {
            scale: 1.0,
            truncation: Truncation { n_b: 6, n_a: 3, n_c: 3 },
            grid: GridConfig { n_t: 33, n_tau: 33 },
            escalation_budget: 0,
        }
    }
}

impl FastProfile {
    pub fn apply(&self, p: &SystemParams) -> SystemParams {
        let s = self.scale;
        let r = s.sqrt();
        SystemParams {
            lambda: p.lambda * r,
            g_sp: p.g_sp * r,
            kappa_sp: p.kappa_sp * s,
            gamma_star: p.gamma_star * s,
            gamma_relax: p.gamma_relax * s,
            t_l: p.t_l / s,
            t_u: p.t_u / s,
            ..*p
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepAxis>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub fast: FastProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<MaterialParams>,
}

/// How a configuration is executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Profile {
    #[default]
    Full,
    Fast,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| Error::Config(e.to_string());
        self.params.to_system().validate().map_err(as_config)?;
        self.truncation.validate().map_err(as_config)?;
        self.fast.truncation.validate().map_err(as_config)?;
        if !(self.fast.scale.is_finite() && self.fast.scale > 0.0) {
            return Err(Error::Config(format!("fast.scale = {} must be > 0", self.fast.scale)));
        }
        let probe = self.solver.evolve_config(self.params.f_m);
        probe.validate().map_err(as_config)?;
        for grid in [self.grid, self.fast.grid] {
            grid.spec(0.0, 1.0).validate().map_err(as_config)?;
        }
        if !(self.solver.top_fock_limit > 0.0) {
            return Err(Error::Config("solver.top_fock_limit must be > 0".into()));
        }
        let mut scratch = self.params;
        for axis in &self.sweep {
            let field = axis.field()?;
            if axis.values.is_empty() {
                return Err(Error::Config(format!("sweep axis `{}` has no values", axis.path)));
            }
            scratch.set(field, axis.values[0])?;
        }
        if let Some(panel) = &self.output.panel {
            if panel.len() != 1 || !panel.chars().all(|c| c.is_ascii_lowercase()) {
                return Err(Error::Config(format!("output.panel `{panel}` must be a single letter")));
            }
        }
        Ok(())
    }

    /// Operating point for `profile`, after sweep overrides.
    pub fn point_params(&self, overrides: &[(String, f64)], profile: Profile) -> Result<SystemParams> {
        let mut p = self.params;
        for (path, value) in overrides {
            let field = path
                .strip_prefix("params.")
                .ok_or_else(|| Error::Config(format!("sweep path `{path}` must start with `params.`")))?;
            p.set(field, *value)?;
        }
        let system = p.to_system();
        system.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(match profile {
            Profile::Full => system,
            Profile::Fast => self.fast.apply(&system),
        })
    }

    pub fn truncation_for(&self, profile: Profile) -> Truncation {
        match profile {
            Profile::Full => self.truncation,
            Profile::Fast => self.fast.truncation,
        }
    }

    pub fn escalation_budget_for(&self, profile: Profile) -> usize {
        match profile {
            Profile::Full => self.solver.escalation_budget,
            Profile::Fast => self.fast.escalation_budget,
        }
    }

    pub fn grid_for(&self, profile: Profile) -> GridConfig {
        match profile {
            Profile::Full => self.grid,
            Profile::Fast => self.fast.grid,
        }
    }

    /// Cartesian product of the sweep axes, first axis slowest.
    pub fn sweep_points(&self) -> Vec<Vec<(String, f64)>> {
        let mut points = vec![Vec::new()];
        for axis in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push((axis.path.clone(), v));
                        p
                    })
                })
                .collect();
        }
        points
    }
}
