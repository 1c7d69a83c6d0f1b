//! Apex-to-apex return map of the controlled SLIP, periodic-orbit search,
//! linearization and deadbeat foot placement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{SlipHopController, DEFAULT_RETRACTION};
use crate::energy::{EnergyController, EnergyControllerConfig};
use crate::error::{Error, Result};
use crate::hybrid::{simulate_hops, HybridState, IntegratorOptions, Termination};
use crate::slip::{SlipModel, SlipParams};

pub const GAIT_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_LEG_LIMIT: f64 = 0.5;
/// Initial finite-difference step (m/s for velocity, rad for angle).
pub const FD_BASE_STEP: f64 = 1e-3;
const FD_AGREEMENT: f64 = 1e-4;
const FD_MAX_HALVINGS: usize = 10;
const ROOT_TOL: f64 = 1e-9;
const ROOT_MAX_ITER: usize = 100;
const SCAN_POINTS: usize = 21;
/// Horizon for a single hop in the return map.
const HOP_HORIZON: f64 = 10.0;

/// Affine foot-placement law with a saturating leg angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLaw {
    pub xdot_star: f64,
    pub u_star: f64,
    pub gain: f64,
    pub limit: f64,
}

impl StepLaw {
    /// Open-loop law that always commands `u`.
    pub fn fixed(u: f64, limit: f64) -> Self {
        Self { xdot_star: 0.0, u_star: u, gain: 0.0, limit }
    }

    /// Commanded touchdown angle and whether it was clamped.
    pub fn touchdown_angle(&self, xdot: f64) -> (f64, bool) {
        let raw = self.unclamped(xdot);
        let u = raw.clamp(-self.limit, self.limit);
        (u, u != raw)
    }

    pub fn unclamped(&self, xdot: f64) -> f64 {
        self.u_star + self.gain * (xdot - self.xdot_star)
    }
}

/// Fixed point of the return map plus its linearization and deadbeat gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gait {
    pub version: u32,
    pub xdot_star: f64,
    pub u_star: f64,
    pub apex_height: f64,
    #[serde(rename = "E_d")]
    pub e_d: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "K")]
    pub k: f64,
    /// Last two finite-difference estimates of `A` and `B`.
    pub a_estimates: [f64; 2],
    pub b_estimates: [f64; 2],
    pub residual: f64,
    pub leg_limit: f64,
    pub params_hash: String,
    pub swing: SwingSpec,
    pub params: SlipParams,
    pub ctrl: EnergyControllerConfig,
}

/// Description of the flight-phase leg swing used when the gait was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwingSpec {
    pub shape: String,
    pub segments: u32,
    pub retraction: f64,
}

impl Default for SwingSpec {
    fn default() -> Self {
        Self { shape: "cubic_bezier".into(), segments: 2, retraction: DEFAULT_RETRACTION }
    }
}

impl Gait {
    pub fn law(&self) -> StepLaw {
        StepLaw { xdot_star: self.xdot_star, u_star: self.u_star, gain: self.k, limit: self.leg_limit }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::GaitFile(e.to_string()))
    }

    /// Parses a gait and checks it against the physical parameters in use.
    pub fn from_toml(text: &str, params: &SlipParams) -> Result<Self> {
        let gait: Gait = toml::from_str(text).map_err(|e| Error::GaitFile(e.to_string()))?;
        if gait.version != GAIT_FORMAT_VERSION {
            return Err(Error::GaitFile(format!("unsupported version {}", gait.version)));
        }
        let expected = params_hash(params);
        if gait.params_hash != expected {
            return Err(Error::ParamsMismatch { file: gait.params_hash, params: expected });
        }
        Ok(gait)
    }
}

/// SHA-256 of the canonical text form of the physical parameters.
pub fn params_hash(params: &SlipParams) -> String {
    let text = toml::to_string(params).expect("parameters serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Everything the return map needs besides the apex velocity and step angle.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitContext {
    pub params: SlipParams,
    /// Energy controller settings; the energy target is derived from `apex_height`.
    pub ctrl: EnergyControllerConfig,
    pub apex_height: f64,
    pub opts: IntegratorOptions,
    pub leg_limit: f64,
    /// Touchdown retraction gain of the swing planner.
    pub retraction: f64,
}

impl GaitContext {
    pub fn new(params: SlipParams, ctrl: EnergyControllerConfig, apex_height: f64) -> Result<Self> {
        let ctx = Self {
            params,
            ctrl,
            apex_height,
            opts: IntegratorOptions::default(),
            leg_limit: DEFAULT_LEG_LIMIT,
            retraction: DEFAULT_RETRACTION,
        };
        ctx.energy_controller()?;
        Ok(ctx)
    }

    /// Energy controller regulating to `apex_height`.
    pub fn energy_controller(&self) -> Result<EnergyController> {
        self.params.validate()?;
        let mut config = self.ctrl;
        let g_e = crate::energy::equivalent_gravity(config.ft_min, self.params.m, self.params.g)?;
        config.e_d = self.params.m * g_e * self.apex_height;
        EnergyController::new(config, self.params.m, self.params.g)
    }

    pub fn with_opts(&self, opts: IntegratorOptions) -> Self {
        Self { opts, ..self.clone() }
    }
}

/// Apex state of the SLIP at height `z` moving forward at `xdot`.
pub fn apex_state(z: f64, xdot: f64) -> HybridState {
    HybridState::aerial(0.0, vec![0.0, z], vec![xdot, 0.0])
}

/// Next apex velocity after touching down at `u` from an apex at `xdot`.
/// The leg starts at `u_ctx` and the ascent swing returns it to `u_ctx`.
pub fn return_map(ctx: &GaitContext, xdot: f64, u: f64, u_ctx: f64) -> Result<f64> {
    let energy = ctx.energy_controller()?;
    let model = SlipModel::new(ctx.params);
    let state = apex_state(ctx.apex_height, xdot);
    let law = StepLaw::fixed(u_ctx, ctx.leg_limit);
    let mut ctrl = SlipHopController::new(energy, law, &state, u_ctx, Some(u)).with_retraction(ctx.retraction);
    let run = match simulate_hops(&model, &state, &mut ctrl, 1, HOP_HORIZON, &ctx.opts) {
        Ok(run) => run,
        Err(e @ (Error::LegFullyCompressed { .. } | Error::GroundPenetration { .. } | Error::FellOver { .. })) => {
            return Err(Error::NoApexReached(e.to_string()))
        }
        Err(e) => return Err(e),
    };
    if run.termination != Termination::Completed {
        return Err(Error::NoApexReached(format!("no apex within {HOP_HORIZON} s")));
    }
    let apex = run.trajectory.apex_events().last().ok_or_else(|| Error::NoApexReached("no apex event".into()))?;
    Ok(apex.state_after.v[0])
}

/// Fixed-point residual `P(xdot, u) − xdot` on the periodic section.
fn residual(ctx: &GaitContext, xdot: f64, u: f64) -> Result<f64> {
    Ok(return_map(ctx, xdot, u, u)? - xdot)
}

/// Finds the touchdown angle whose hop returns `xdot_des`, then linearizes.
pub fn find_periodic_orbit(ctx: &GaitContext, xdot_des: f64) -> Result<Gait> {
    let lim = ctx.leg_limit;
    let grid: Vec<f64> = (0..SCAN_POINTS).map(|i| -lim + 2.0 * lim * i as f64 / (SCAN_POINTS - 1) as f64).collect();
    let values: Vec<Option<f64>> = grid.par_iter().map(|&u| residual(ctx, xdot_des, u).ok()).collect();
    let mut brackets = Vec::new();
    for i in 0..grid.len() {
        if let Some(r) = values[i] {
            if r == 0.0 {
                brackets.push((grid[i], r, grid[i], r));
            }
        }
        if i + 1 < grid.len() {
            if let (Some(r0), Some(r1)) = (values[i], values[i + 1]) {
                if r0 * r1 < 0.0 {
                    brackets.push((grid[i], r0, grid[i + 1], r1));
                }
            }
        }
    }
    // Prefer the bracket nearest a vertical leg.
    brackets.sort_by(|a, b| (a.0 + a.2).abs().total_cmp(&(b.0 + b.2).abs()));
    let &(lo, r_lo, hi, r_hi) = brackets.first().ok_or(Error::NoBracket { lo: -lim, hi: lim })?;
    let (u_star, res) = if r_lo == 0.0 { (lo, 0.0) } else { solve_bracket(ctx, xdot_des, (lo, r_lo), (hi, r_hi))? };
    let e_d = ctx.energy_controller()?.config.e_d;
    let lin = linearize_s2s(ctx, xdot_des, u_star)?;
    let k = deadbeat_gain(lin.a, lin.b)?;
    let mut ctrl = ctx.ctrl;
    ctrl.e_d = e_d;
    Ok(Gait {
        version: GAIT_FORMAT_VERSION,
        xdot_star: xdot_des,
        u_star,
        apex_height: ctx.apex_height,
        e_d,
        a: lin.a,
        b: lin.b,
        k,
        a_estimates: lin.a_estimates,
        b_estimates: lin.b_estimates,
        residual: res,
        leg_limit: ctx.leg_limit,
        params_hash: params_hash(&ctx.params),
        swing: SwingSpec { retraction: ctx.retraction, ..SwingSpec::default() },
        params: ctx.params,
        ctrl,
    })
}

/// Bisection until the bracket is small, then secant steps kept inside it.
fn solve_bracket(ctx: &GaitContext, xdot: f64, mut lo: (f64, f64), mut hi: (f64, f64)) -> Result<(f64, f64)> {
    let mut best = if lo.1.abs() < hi.1.abs() { lo } else { hi };
    for _ in 0..ROOT_MAX_ITER {
        if best.1.abs() <= ROOT_TOL {
            return Ok(best);
        }
        let width = hi.0 - lo.0;
        let secant = lo.0 - lo.1 * width / (hi.1 - lo.1);
        let mid = 0.5 * (lo.0 + hi.0);
        let u = if width.abs() < 1e-2 && secant > lo.0.min(hi.0) && secant < lo.0.max(hi.0) { secant } else { mid };
        let r = residual(ctx, xdot, u)?;
        let point = (u, r);
        if r.abs() < best.1.abs() {
            best = point;
        }
        if r * lo.1 < 0.0 {
            hi = point;
        } else {
            lo = point;
        }
        if (hi.0 - lo.0).abs() < 1e-14 {
            break;
        }
    }
    if best.1.abs() <= ROOT_TOL * 100.0 {
        return Ok(best);
    }
    Err(Error::NotConverged { iterations: ROOT_MAX_ITER, residual: best.1.abs() })
}

/// Jacobians of the return map at a fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linearization {
    pub a: f64,
    pub b: f64,
    pub a_estimates: [f64; 2],
    pub b_estimates: [f64; 2],
}

/// Central differences with step halving, evaluated at tightened tolerances.
pub fn linearize_s2s(ctx: &GaitContext, xdot_star: f64, u_star: f64) -> Result<Linearization> {
    let tight = ctx.with_opts(ctx.opts.tightened(1e-2));
    let da = |h: f64| -> Result<f64> {
        let (p, m) = rayon::join(|| return_map(&tight, xdot_star + h, u_star, u_star), || return_map(&tight, xdot_star - h, u_star, u_star));
        Ok((p? - m?) / (2.0 * h))
    };
    let db = |h: f64| -> Result<f64> {
        let (p, m) = rayon::join(|| return_map(&tight, xdot_star, u_star + h, u_star), || return_map(&tight, xdot_star, u_star - h, u_star));
        Ok((p? - m?) / (2.0 * h))
    };
    let a_estimates = settle(da)?;
    let b_estimates = settle(db)?;
    Ok(Linearization { a: a_estimates[1], b: b_estimates[1], a_estimates, b_estimates })
}

fn settle(f: impl Fn(f64) -> Result<f64>) -> Result<[f64; 2]> {
    let mut h = FD_BASE_STEP;
    let mut prev = f(h)?;
    let mut jitter = f64::INFINITY;
    for _ in 0..FD_MAX_HALVINGS {
        h *= 0.5;
        let next = f(h)?;
        let diff = (next - prev).abs();
        if diff <= FD_AGREEMENT * next.abs().max(FD_AGREEMENT) {
            return Ok([prev, next]);
        }
        jitter = jitter.min(diff);
        prev = next;
    }
    Err(Error::NumericalNoise { last: [prev, f(h)?], jitter })
}

/// Gain nulling the linearized step-to-step error in one step.
pub fn deadbeat_gain(a: f64, b: f64) -> Result<f64> {
    if b.abs() <= 1e-8 {
        return Err(Error::UncontrollableMap { b });
    }
    Ok(-a / b)
}

/// Touchdown angle for apex velocity `xdot` under `gait`, and whether it was clamped.
pub fn stepping_controller(xdot: f64, gait: &Gait) -> (f64, bool) {
    gait.law().touchdown_angle(xdot)
}

/// Plane angles (sagittal, lateral) for a 3-D hop, each with its clamp flag.
pub fn decoupled_3d_step(xdot: f64, ydot: f64, sagittal: &StepLaw, lateral: &StepLaw) -> ((f64, bool), (f64, bool)) {
    (sagittal.touchdown_angle(xdot), lateral.touchdown_angle(ydot))
}

/// Bound on the apex velocity error after one closed-loop step.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantEstimate {
    /// `delta_max` plus the measured remainder.
    pub bound: f64,
    /// Largest one-step error over the swept box.
    pub remainder: f64,
    /// Half-width of the swept error box (m/s).
    pub error_box: f64,
    /// `(initial error, one-step error, clamped)` for every grid point.
    pub samples: Vec<(f64, f64, bool)>,
}

/// One-step closed-loop errors from a grid of initial velocity errors.
pub fn one_step_errors(ctx: &GaitContext, gait: &Gait, error_box: f64, n: usize) -> Result<Vec<(f64, f64, bool)>> {
    let law = gait.law();
    let grid: Vec<f64> = (0..n).map(|i| -error_box + 2.0 * error_box * i as f64 / (n.max(2) - 1) as f64).collect();
    grid.par_iter()
        .map(|&e| {
            let (u, clamped) = law.touchdown_angle(gait.xdot_star + e);
            let next = return_map(ctx, gait.xdot_star + e, u, gait.u_star)?;
            Ok((e, next - gait.xdot_star, clamped))
        })
        .collect()
}

/// Invariant bound for disturbances up to `delta_max` over errors in `±error_box`.
pub fn error_invariant_estimate(ctx: &GaitContext, gait: &Gait, delta_max: f64, error_box: f64, n: usize) -> Result<InvariantEstimate> {
    let samples = one_step_errors(ctx, gait, error_box, n)?;
    let remainder = samples.iter().map(|s| s.1.abs()).fold(0.0, f64::max);
    Ok(InvariantEstimate { bound: delta_max.abs() + remainder, remainder, error_box, samples })
}
