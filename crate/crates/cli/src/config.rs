//! Scenario configuration files.

use std::path::{Path, PathBuf};

use hopsim_core::control::DEFAULT_RETRACTION;
use hopsim_core::design::{CotSetup, StiffnessSweep, TwrSweep};
use hopsim_core::energy::{EnergyControllerConfig, QpVariant, DEFAULT_GAMMA};
use hopsim_core::hybrid::IntegratorOptions;
use hopsim_core::robot::{thrust_bounds, RobotParams};
use hopsim_core::slip::SlipParams;
use hopsim_core::stepping::DEFAULT_LEG_LIMIT;
use serde::{Deserialize, Serialize};

use crate::error::RunError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub robot: RobotParams,
    /// Point-mass parameters; the robot's equivalent SLIP when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slip: Option<SlipParams>,
    #[serde(default)]
    pub ctrl: CtrlSection,
    #[serde(default)]
    pub gait: GaitSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<StartSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub push: Option<PushSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terrain: Option<TerrainSection>,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub cot: CotSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Hop,
    Push,
    TerrainStep,
    GaitSearch,
    DesignSweep,
    CotCompare,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Hop => "hop",
            ScenarioKind::Push => "push",
            ScenarioKind::TerrainStep => "terrain_step",
            ScenarioKind::GaitSearch => "gait_search",
            ScenarioKind::DesignSweep => "design_sweep",
            ScenarioKind::CotCompare => "cot_compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Slip,
    Slip3d,
    PlanarRobot,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Slip => "slip",
            ModelKind::Slip3d => "slip3d",
            ModelKind::PlanarRobot => "planar_robot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    /// Apex events to simulate after the initial apex.
    #[serde(default = "default_hops")]
    pub hops: usize,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Seeds the randomized acceptance checks; simulations are deterministic.
    #[serde(default)]
    pub seed: u64,
}

fn default_model() -> ModelKind {
    ModelKind::Slip
}

fn default_hops() -> usize {
    40
}

fn default_t_max() -> f64 {
    120.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CtrlSection {
    #[serde(rename = "Kp")]
    pub kp: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub gamma: f64,
    pub p: f64,
    pub variant: QpVariant,
    /// Idle thrust floor; the robot's zero-moment minimum when absent.
    #[serde(rename = "Ft_min", skip_serializing_if = "Option::is_none")]
    pub ft_min: Option<f64>,
    /// Thrust cap; the robot's `twr` times its weight when absent.
    #[serde(rename = "Ft_max", skip_serializing_if = "Option::is_none")]
    pub ft_max: Option<f64>,
}

impl Default for CtrlSection {
    fn default() -> Self {
        let base = EnergyControllerConfig::new(0.0, 0.0, 1.0);
        Self { kp: base.kp, q: base.q, gamma: DEFAULT_GAMMA, p: base.p, variant: base.variant, ft_min: None, ft_max: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitSection {
    pub xdot_des: f64,
    pub apex_height: f64,
    /// Lateral target of the 3D SLIP.
    pub lateral_xdot_des: f64,
    /// Precomputed gait, relative to the config file; searched when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub leg_limit: f64,
    pub retraction: f64,
}

impl Default for GaitSection {
    fn default() -> Self {
        Self {
            xdot_des: 0.5,
            apex_height: 0.5,
            lateral_xdot_des: 0.0,
            file: None,
            leg_limit: DEFAULT_LEG_LIMIT,
            retraction: DEFAULT_RETRACTION,
        }
    }
}

/// Initial apex; the gait target when absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSection {
    pub z: f64,
    pub xdot: f64,
    #[serde(default)]
    pub ydot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushSection {
    pub force: [f64; 3],
    pub duration: f64,
    /// Absolute start time (s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    /// Start at the time of this apex in the undisturbed run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_apex: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainSection {
    pub step_height: f64,
    pub step_location: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    pub stiffness: StiffnessSweep,
    pub twr: TwrSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CotSection {
    pub twr: Vec<f64>,
    pub apex: f64,
    pub xdot: f64,
    pub n_steps: usize,
    pub flight_duration: f64,
    /// Resolution of the feasibility-boundary search.
    pub boundary_tol: f64,
}

impl Default for CotSection {
    fn default() -> Self {
        let setup = CotSetup::default();
        Self {
            twr: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.2, 1.5, 2.0],
            apex: setup.apex,
            xdot: setup.xdot,
            n_steps: setup.n_steps,
            flight_duration: 10.0,
            boundary_tol: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Relative to the config file.
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl Config {
    /// Parses and validates a config document.
    pub fn parse(text: &str) -> Result<Self, RunError> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| RunError::config("<document>", e.to_string()))?;
        let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            RunError::config(if key == "." { "<document>".to_string() } else { key }, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String, RunError> {
        toml::to_string(self).map_err(|e| RunError::config("<document>", e.to_string()))
    }

    pub fn slip_params(&self) -> SlipParams {
        self.slip.unwrap_or_else(|| self.robot.slip_equivalent())
    }

    /// Energy controller settings with the thrust range resolved.
    pub fn energy_config(&self) -> Result<EnergyControllerConfig, RunError> {
        let floor = match self.ctrl.ft_min {
            Some(f) => f,
            None => thrust_bounds([0.0; 3], &self.robot).map_err(|e| RunError::config("robot", e.to_string()))?.0,
        };
        let cap = self.ctrl.ft_max.unwrap_or_else(|| self.robot.thrust_cap());
        let c = &self.ctrl;
        let config = EnergyControllerConfig { e_d: 0.0, kp: c.kp, q: c.q, gamma: c.gamma, p: c.p, variant: c.variant, ft_min: floor, ft_max: cap };
        config.validate().map_err(|e| RunError::config("ctrl", e.to_string()))?;
        Ok(config)
    }

    pub fn cot_setup(&self) -> Result<CotSetup, RunError> {
        let idle = self.energy_config()?.ft_min;
        Ok(CotSetup {
            params: self.slip_params(),
            apex: self.cot.apex,
            xdot: self.cot.xdot,
            n_steps: self.cot.n_steps,
            f_min: idle,
            opts: self.integrator,
        })
    }

    fn validate(&self) -> Result<(), RunError> {
        let fail = |key: &str, msg: &str| Err(RunError::config(key, msg));
        let s = &self.scenario;
        if s.hops == 0 {
            return fail("scenario.hops", "must be at least 1");
        }
        if !(s.t_max > 0.0) {
            return fail("scenario.t_max", "must be positive");
        }
        self.robot.validate().map_err(|e| RunError::config("robot", e.to_string()))?;
        if let Some(p) = &self.slip {
            p.validate().map_err(|e| RunError::config("slip", e.to_string()))?;
        }
        self.energy_config()?;
        self.integrator.validate().map_err(|e| RunError::config("integrator", e.to_string()))?;
        let r0 = self.slip_params().r0;
        let g = &self.gait;
        if !(g.apex_height > r0) {
            return fail("gait.apex_height", "must exceed the leg length");
        }
        if !(g.leg_limit > 0.0 && g.leg_limit < std::f64::consts::FRAC_PI_2) {
            return fail("gait.leg_limit", "must lie in (0, pi/2)");
        }
        if !g.xdot_des.is_finite() || !g.lateral_xdot_des.is_finite() {
            return fail("gait.xdot_des", "must be finite");
        }
        if !(g.retraction >= 0.0) {
            return fail("gait.retraction", "must be non-negative");
        }
        if let Some(start) = &self.start {
            if !(start.z > r0) {
                return fail("start.z", "must exceed the leg length");
            }
        }
        if let Some(push) = &self.push {
            if !(push.duration > 0.0) {
                return fail("push.duration", "must be positive");
            }
            match (push.start, push.at_apex) {
                (Some(t), None) if t >= 0.0 => {}
                (Some(_), None) => return fail("push.start", "must be non-negative"),
                (None, Some(_)) => {}
                _ => return fail("push", "exactly one of `start` and `at_apex` is required"),
            }
            if push.force.iter().any(|f| !f.is_finite()) {
                return fail("push.force", "must be finite");
            }
        }
        if let Some(t) = &self.terrain {
            if !t.step_height.is_finite() || !t.step_location.is_finite() {
                return fail("terrain", "step height and location must be finite");
            }
        }
        match s.kind {
            ScenarioKind::Push if self.push.is_none() => return fail("push", "required by a push scenario"),
            ScenarioKind::TerrainStep if self.terrain.is_none() => return fail("terrain", "required by a terrain_step scenario"),
            _ => {}
        }
        if !(self.cot.apex > r0) {
            return fail("cot.apex", "must exceed the leg length");
        }
        if !(self.cot.flight_duration > 0.0) {
            return fail("cot.flight_duration", "must be positive");
        }
        if !(self.cot.boundary_tol > 0.0) {
            return fail("cot.boundary_tol", "must be positive");
        }
        if self.cot.n_steps == 0 {
            return fail("cot.n_steps", "must be at least 1");
        }
        Ok(())
    }
}
