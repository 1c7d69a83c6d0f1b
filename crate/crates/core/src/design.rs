//! Vertical hopping under bang-bang thrust, design sweeps over stiffness,
//! weight and thrust-to-weight ratio, and hopping-versus-flying cost of
//! transport.
//!
//! The vertical hop is linear in every phase: ballistic flight under constant
//! thrust and a damped spring about a thrust-shifted equilibrium in stance.
//! Thrust is at its minimum while the body descends and at its maximum while
//! it ascends, switching at the stance velocity zero crossing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::SlipHopController;
use crate::energy::EnergyControllerConfig;
use crate::error::{Error, Result};
use crate::hybrid::{integrate_ode, simulate_hops, IntegratorOptions, Termination};
use crate::slip::{SlipModel, SlipParams};
use crate::stepping::{apex_state, find_periodic_orbit, GaitContext};

/// Relative apex tolerance for "hops to the desired height".
pub const FEASIBLE_APEX_TOLERANCE: f64 = 0.02;
/// Hops simulated before judging whether the apex target is sustained.
pub const COT_HOPS: usize = 10;
const ROOT_ITER: usize = 200;

/// Parameters of one vertical bang-bang hop dropped from `apex`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BangBangSpec {
    pub m: f64,
    pub k: f64,
    pub d: f64,
    /// Thrust while ascending (N).
    pub f_max: f64,
    /// Thrust while descending (N).
    pub f_min: f64,
    /// Starting apex height of the center of mass (m).
    pub apex: f64,
    /// Center-of-mass height at touchdown and liftoff (m).
    pub r0: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl BangBangSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.m > 0.0
            && self.k > 0.0
            && self.d >= 0.0
            && self.f_max >= 0.0
            && self.f_min >= 0.0
            && self.r0 > 0.0
            && self.apex > self.r0
            && self.g > 0.0
            && [self.m, self.k, self.d, self.f_max, self.f_min, self.apex, self.r0, self.g].iter().all(|v| v.is_finite());
        if !ok {
            return Err(Error::InvalidConfig(format!("bang-bang parameters out of range: {self:?}")));
        }
        if self.f_min >= self.m * self.g {
            return Err(Error::NonPositiveEquivalentGravity { ft_min: self.f_min, mass: self.m });
        }
        if self.f_max >= self.m * self.g {
            return Err(Error::InvalidArgument(format!(
                "ascending thrust {} N is not below the weight {} N, so the ascent never peaks",
                self.f_max,
                self.m * self.g
            )));
        }
        Ok(())
    }

    /// Downward acceleration while descending.
    pub fn descent_gravity(&self) -> f64 {
        self.g - self.f_min / self.m
    }

    /// Downward acceleration while ascending in flight.
    pub fn ascent_gravity(&self) -> f64 {
        self.g - self.f_max / self.m
    }

    /// Stance equilibrium height under constant thrust `thrust`.
    fn equilibrium(&self, thrust: f64) -> f64 {
        self.r0 - (self.m * self.g - thrust) / self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseDurations {
    pub descent: f64,
    pub compression: f64,
    pub extension: f64,
    pub ascent: f64,
}

impl PhaseDurations {
    pub fn total(&self) -> f64 {
        self.descent + self.compression + self.extension + self.ascent
    }
}

/// Outcome of one vertical hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BangBangHop {
    pub apex: f64,
    pub durations: PhaseDurations,
    /// Largest spring compression below `r0` (m).
    pub peak_compression: f64,
    pub liftoff_speed: f64,
}

/// `y'' + 2 σ y' + ω0² y = 0`.
#[derive(Debug, Clone, Copy)]
struct DampedOscillator {
    sigma: f64,
    w0_sq: f64,
}

enum Regime {
    Under { wd: f64 },
    Critical,
    Over { l1: f64, l2: f64 },
}

impl DampedOscillator {
    fn regime(&self) -> Regime {
        let disc = self.sigma * self.sigma - self.w0_sq;
        if disc.abs() <= 1e-12 * self.w0_sq {
            Regime::Critical
        } else if disc < 0.0 {
            Regime::Under { wd: (-disc).sqrt() }
        } else {
            let s = disc.sqrt();
            Regime::Over { l1: -self.sigma + s, l2: -self.sigma - s }
        }
    }

    /// Position and velocity at `t` from `(y0, v0)`.
    fn state(&self, y0: f64, v0: f64, t: f64) -> (f64, f64) {
        let sigma = self.sigma;
        match self.regime() {
            Regime::Under { wd } => {
                let decay = (-sigma * t).exp();
                let (s, c) = (wd * t).sin_cos();
                let y = decay * (y0 * c + (v0 + sigma * y0) / wd * s);
                let v = decay * (v0 * c - (sigma * v0 + self.w0_sq * y0) / wd * s);
                (y, v)
            }
            Regime::Critical => {
                let decay = (-sigma * t).exp();
                let b = v0 + sigma * y0;
                (decay * (y0 + b * t), decay * (v0 - sigma * b * t))
            }
            Regime::Over { l1, l2 } => {
                let c1 = (v0 - l2 * y0) / (l1 - l2);
                let c2 = (l1 * y0 - v0) / (l1 - l2);
                let (e1, e2) = ((l1 * t).exp(), (l2 * t).exp());
                (c1 * e1 + c2 * e2, c1 * l1 * e1 + c2 * l2 * e2)
            }
        }
    }

    /// First `t > 0` at which the velocity changes sign, if any.
    fn next_velocity_zero(&self, y0: f64, v0: f64) -> Option<f64> {
        let sigma = self.sigma;
        match self.regime() {
            Regime::Under { wd } => {
                let b = (sigma * v0 + self.w0_sq * y0) / wd;
                let phase = v0.atan2(b).rem_euclid(std::f64::consts::PI);
                let phase = if phase <= 1e-15 { std::f64::consts::PI } else { phase };
                Some(phase / wd)
            }
            Regime::Critical => {
                let b = v0 + sigma * y0;
                let t = v0 / (sigma * b);
                (t.is_finite() && t > 0.0).then_some(t)
            }
            Regime::Over { l1, l2 } => {
                let c1 = (v0 - l2 * y0) / (l1 - l2);
                let c2 = (l1 * y0 - v0) / (l1 - l2);
                let ratio = -(c2 * l2) / (c1 * l1);
                if !(ratio > 0.0) {
                    return None;
                }
                let t = ratio.ln() / (l1 - l2);
                (t.is_finite() && t > 0.0).then_some(t)
            }
        }
    }
}

/// Smallest `t` in `(lo, hi]` with `f(t) >= 0`, given `f(lo) < 0 <= f(hi)`.
fn bisect_rising(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..ROOT_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Apex, phase durations and peak compression of one hop from `spec.apex`,
/// assembled from the closed-form solution of each linear phase.
pub fn bang_bang_closed_form(spec: &BangBangSpec) -> Result<BangBangHop> {
    spec.validate()?;
    let g_down = spec.descent_gravity();
    let drop = spec.apex - spec.r0;
    let descent = (2.0 * drop / g_down).sqrt();
    let v_td = -g_down * descent;

    let osc = DampedOscillator { sigma: spec.d / (2.0 * spec.m), w0_sq: spec.k / spec.m };
    let z_low = spec.equilibrium(spec.f_min);
    let y0 = spec.r0 - z_low;
    let compression = osc.next_velocity_zero(y0, v_td).ok_or(Error::NoLiftoff)?;
    let (y_bottom, _) = osc.state(y0, v_td, compression);
    let z_bottom = z_low + y_bottom;

    let z_high = spec.equilibrium(spec.f_max);
    let y1 = z_bottom - z_high;
    let target = spec.r0 - z_high;
    let height = |t: f64| osc.state(y1, 0.0, t).0 - target;
    let limit = match osc.next_velocity_zero(y1, 0.0) {
        Some(t) => t,
        None => {
            // Monotone approach to the equilibrium: the leg extends back to r0 only
            // when the equilibrium sits above it.
            if target >= 0.0 {
                return Err(Error::NoLiftoff);
            }
            let mut t = 1.0 / osc.w0_sq.sqrt();
            while height(t) < 0.0 {
                t *= 2.0;
                if !t.is_finite() {
                    return Err(Error::NoLiftoff);
                }
            }
            t
        }
    };
    if height(limit) < 0.0 {
        return Err(Error::NoLiftoff);
    }
    let extension = bisect_rising(0.0, limit, height);
    let (_, v_lo) = osc.state(y1, 0.0, extension);
    if v_lo <= 0.0 {
        return Err(Error::NoLiftoff);
    }

    let g_up = spec.ascent_gravity();
    let ascent = v_lo / g_up;
    let apex = spec.r0 + v_lo * v_lo / (2.0 * g_up);
    Ok(BangBangHop {
        apex,
        durations: PhaseDurations { descent, compression, extension, ascent },
        peak_compression: spec.r0 - z_bottom,
        liftoff_speed: v_lo,
    })
}

/// Integrates `y' = f(y)` until `guard` turns non-positive, localizing the
/// crossing by bisection on the integration horizon.
fn integrate_to_crossing(
    f: &impl Fn(&[f64], &mut [f64]),
    y0: &[f64],
    guard: &impl Fn(&[f64]) -> f64,
    abort: &impl Fn(&[f64]) -> bool,
    opts: &IntegratorOptions,
) -> Result<(f64, Vec<f64>)> {
    const CHUNK: f64 = 1e-3;
    const HORIZON: f64 = 20.0;
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        f(y, dy);
        Ok(())
    };
    let mut t = 0.0;
    let mut y = y0.to_vec();
    while t < HORIZON {
        let next = integrate_ode(rhs, t, &y, t + CHUNK, opts)?;
        if guard(&next) <= 0.0 {
            let (mut lo, mut hi) = (0.0, CHUNK);
            let mut y_hi = next;
            while hi - lo > opts.event_tol * 1e-3 {
                let mid = 0.5 * (lo + hi);
                let y_mid = integrate_ode(rhs, t, &y, t + mid, opts)?;
                if guard(&y_mid) <= 0.0 {
                    hi = mid;
                    y_hi = y_mid;
                } else {
                    lo = mid;
                }
            }
            return Ok((t + hi, y_hi));
        }
        if abort(&next) {
            return Err(Error::NoLiftoff);
        }
        t += CHUNK;
        y = next;
    }
    Err(Error::NoLiftoff)
}

/// The same hop as [`bang_bang_closed_form`] obtained by numerically
/// integrating each phase and locating its end event.
pub fn bang_bang_numeric(spec: &BangBangSpec, opts: &IntegratorOptions) -> Result<BangBangHop> {
    spec.validate()?;
    let (m, g, k, d, r0) = (spec.m, spec.g, spec.k, spec.d, spec.r0);
    let flight = |thrust: f64| move |y: &[f64], dy: &mut [f64]| {
        dy[0] = y[1];
        dy[1] = thrust / m - g;
    };
    let stance = |thrust: f64| move |y: &[f64], dy: &mut [f64]| {
        dy[0] = y[1];
        dy[1] = (k * (r0 - y[0]) - d * y[1] + thrust) / m - g;
    };
    let never = |_: &[f64]| false;

    let (descent, y) = integrate_to_crossing(&flight(spec.f_min), &[spec.apex, 0.0], &|y: &[f64]| y[0] - r0, &never, opts)?;
    let (compression, y) = integrate_to_crossing(
        &stance(spec.f_min),
        &y,
        &|y: &[f64]| -y[1],
        &|y: &[f64]| y[1].abs() < 1e-12 && y[0] < r0,
        opts,
    )?;
    let bottom = y[0];
    let (extension, y) =
        integrate_to_crossing(&stance(spec.f_max), &[bottom, 0.0], &|y: &[f64]| r0 - y[0], &|y: &[f64]| y[1] <= 0.0, opts)?;
    let v_lo = y[1];
    let (ascent, y) = integrate_to_crossing(&flight(spec.f_max), &y, &|y: &[f64]| y[1], &never, opts)?;
    Ok(BangBangHop {
        apex: y[0],
        durations: PhaseDurations { descent, compression, extension, ascent },
        peak_compression: r0 - bottom,
        liftoff_speed: v_lo,
    })
}

/// Grid for the required-thrust table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StiffnessSweep {
    pub weights: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub apex: f64,
    pub d: f64,
    #[serde(default)]
    pub f_min: f64,
    pub r0: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
}

impl Default for StiffnessSweep {
    fn default() -> Self {
        Self {
            weights: vec![1.5, 2.0, 2.5, 3.0, 3.5],
            stiffness: vec![2000.0, 4000.0, 6000.0, 8000.0, 10000.0],
            apex: 1.3,
            d: 15.0,
            f_min: 0.0,
            r0: 0.4,
            g: 9.81,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequiredThrust {
    pub weight: f64,
    pub stiffness: f64,
    /// `None` when no ascending thrust below the weight reaches the apex.
    pub f_max: Option<f64>,
}

/// Apex after one hop, or `None` if the hop never lifts off.
fn hop_apex(spec: &BangBangSpec) -> Result<Option<f64>> {
    match bang_bang_closed_form(spec) {
        Ok(hop) => Ok(Some(hop.apex)),
        Err(Error::NoLiftoff) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Smallest ascending thrust whose hop from `spec.apex` returns to at least
/// `spec.apex`; `spec.f_max` is ignored.
pub fn required_thrust(spec: &BangBangSpec) -> Result<Option<f64>> {
    let reaches = |f_max: f64| -> Result<bool> {
        Ok(hop_apex(&BangBangSpec { f_max, ..*spec })?.is_some_and(|a| a >= spec.apex))
    };
    let mut lo = spec.f_min;
    if reaches(lo)? {
        return Ok(Some(lo));
    }
    let weight = spec.m * spec.g;
    let mut hi = weight * (1.0 - 1e-9);
    if !reaches(hi)? {
        return Ok(None);
    }
    for _ in 0..ROOT_ITER {
        if hi - lo <= 1e-9 * weight {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if reaches(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Required ascending thrust for every (weight, stiffness) cell, in grid order.
pub fn design_sweep_stiffness(sweep: &StiffnessSweep) -> Result<Vec<RequiredThrust>> {
    if sweep.stiffness.iter().chain(&sweep.weights).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidConfig("sweep weights and stiffness values must be positive".into()));
    }
    let cells: Vec<(f64, f64)> = sweep.weights.iter().flat_map(|&w| sweep.stiffness.iter().map(move |&k| (w, k))).collect();
    cells
        .par_iter()
        .map(|&(weight, stiffness)| {
            let spec = BangBangSpec {
                m: weight,
                k: stiffness,
                d: sweep.d,
                f_max: sweep.f_min,
                f_min: sweep.f_min,
                apex: sweep.apex,
                r0: sweep.r0,
                g: sweep.g,
            };
            Ok(RequiredThrust { weight, stiffness, f_max: required_thrust(&spec)? })
        })
        .collect()
}

/// Grid for the achievable-apex table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwrSweep {
    pub m: f64,
    pub stiffness: Vec<f64>,
    pub twr: Vec<f64>,
    /// Apex the hop starts from.
    pub apex: f64,
    pub d: f64,
    #[serde(default)]
    pub f_min: f64,
    pub r0: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
}

impl Default for TwrSweep {
    fn default() -> Self {
        Self {
            m: 2.5,
            stiffness: vec![2000.0, 4000.0, 6000.0, 8000.0, 10000.0],
            twr: (0..10).map(|i| i as f64 / 10.0).collect(),
            apex: 1.0,
            d: 15.0,
            f_min: 0.0,
            r0: 0.4,
            g: 9.81,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AchievableApex {
    pub twr: f64,
    pub stiffness: f64,
    /// `None` when the hop does not lift off or the thrust reaches the weight.
    pub apex: Option<f64>,
}

/// Apex after one hop from `sweep.apex` with ascending thrust `twr·m·g`, for
/// every (twr, stiffness) cell in grid order.
pub fn design_sweep_twr(sweep: &TwrSweep) -> Result<Vec<AchievableApex>> {
    if sweep.stiffness.iter().any(|&v| !(v > 0.0)) || sweep.twr.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidConfig("sweep stiffness must be positive and twr non-negative".into()));
    }
    let cells: Vec<(f64, f64)> = sweep.twr.iter().flat_map(|&r| sweep.stiffness.iter().map(move |&k| (r, k))).collect();
    cells
        .par_iter()
        .map(|&(twr, stiffness)| {
            let f_max = twr * sweep.m * sweep.g;
            if f_max >= sweep.m * sweep.g {
                return Ok(AchievableApex { twr, stiffness, apex: None });
            }
            let spec = BangBangSpec {
                m: sweep.m,
                k: stiffness,
                d: sweep.d,
                f_max,
                f_min: sweep.f_min,
                apex: sweep.apex,
                r0: sweep.r0,
                g: sweep.g,
            };
            Ok(AchievableApex { twr, stiffness, apex: hop_apex(&spec)? })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocomotionMode {
    Hopping,
    Flying,
}

impl LocomotionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LocomotionMode::Hopping => "hopping",
            LocomotionMode::Flying => "flying",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CotResult {
    pub mode: LocomotionMode,
    pub twr: f64,
    /// Infinite when the mode cannot move at this thrust-to-weight ratio.
    pub cot: f64,
    pub mean_velocity: f64,
    pub feasible: bool,
}

impl CotResult {
    fn infeasible(mode: LocomotionMode, twr: f64) -> Self {
        Self { mode, twr, cot: f64::INFINITY, mean_velocity: 0.0, feasible: false }
    }
}

/// `∫|F| dt / (L m g)` for a zero-order-hold thrust log `(t_i, F_i)`.
pub fn cost_of_transport(log: &[(f64, f64)], distance: f64, m: f64, g: f64) -> f64 {
    let impulse: f64 = log.windows(2).map(|w| w[0].1.abs() * (w[1].0 - w[0].0)).sum();
    impulse / (distance.abs() * (m * g))
}

/// Cost of transport of level flight at speed `v` with thrust equal to weight.
pub fn cot_flying(m: f64, twr: f64, v: f64, duration: f64) -> CotResult {
    if twr <= 1.0 || v <= 0.0 || duration <= 0.0 {
        return CotResult::infeasible(LocomotionMode::Flying, twr);
    }
    let weight = m * crate::slip::SlipParams::default().g;
    let impulse = weight * duration;
    let distance = v * duration;
    CotResult { mode: LocomotionMode::Flying, twr, cot: impulse / (distance * weight), mean_velocity: v, feasible: true }
}

/// Settings of the controlled SLIP used for the hopping cost of transport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CotSetup {
    pub params: SlipParams,
    pub apex: f64,
    pub xdot: f64,
    pub n_steps: usize,
    /// Idle thrust that is always on (N).
    #[serde(default)]
    pub f_min: f64,
    #[serde(default)]
    pub opts: IntegratorOptions,
}

impl Default for CotSetup {
    fn default() -> Self {
        let (idle, _) = crate::robot::thrust_bounds([0.0; 3], &crate::robot::RobotParams::default()).expect("default robot is valid");
        Self { params: SlipParams::default(), apex: 1.0, xdot: 1.0, n_steps: COT_HOPS, f_min: idle, opts: IntegratorOptions::default() }
    }
}

/// Hops `n_steps` times with energy shaping (thrust between the idle floor and
/// `twr·m·g`) and deadbeat stepping, then charges the thrust integral to the
/// distance covered. Infeasible when no gait exists or the final apex misses
/// the target by more than [`FEASIBLE_APEX_TOLERANCE`].
pub fn cot_hopping(setup: &CotSetup, twr: f64) -> Result<CotResult> {
    let p = &setup.params;
    p.validate()?;
    let f_max = twr * p.m * p.g;
    if !(twr > 0.0) || setup.n_steps == 0 || f_max <= setup.f_min {
        return Ok(CotResult::infeasible(LocomotionMode::Hopping, twr));
    }
    let ctrl = EnergyControllerConfig::new(0.0, setup.f_min, f_max);
    let ctx = GaitContext::new(*p, ctrl, setup.apex)?.with_opts(setup.opts);
    let Ok(gait) = find_periodic_orbit(&ctx, setup.xdot) else {
        return Ok(CotResult::infeasible(LocomotionMode::Hopping, twr));
    };
    let model = SlipModel::new(*p);
    let state = apex_state(setup.apex, setup.xdot);
    let mut controller =
        SlipHopController::new(ctx.energy_controller()?, gait.law(), &state, gait.u_star, None).with_retraction(ctx.retraction);
    let horizon = 10.0 * setup.n_steps as f64;
    let run = match simulate_hops(&model, &state, &mut controller, setup.n_steps + 1, horizon, &setup.opts) {
        Ok(run) if run.termination == Termination::Completed => run,
        Ok(_)
        | Err(
            Error::LegFullyCompressed { .. }
            | Error::GroundPenetration { .. }
            | Error::InvalidInitialState(_)
            | Error::NoApexReached(_),
        ) => {
            return Ok(CotResult::infeasible(LocomotionMode::Hopping, twr))
        }
        Err(e) => return Err(e),
    };
    let last = controller.apexes.last().expect("at least one apex");
    if (last.z - setup.apex).abs() > FEASIBLE_APEX_TOLERANCE * setup.apex {
        return Ok(CotResult::infeasible(LocomotionMode::Hopping, twr));
    }
    let samples = &run.trajectory.samples;
    let log: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.input[0])).collect();
    let (first, end) = (&samples[0], &samples[samples.len() - 1]);
    let distance = end.state.q[0] - first.state.q[0];
    let duration = end.t - first.t;
    Ok(CotResult {
        mode: LocomotionMode::Hopping,
        twr,
        cot: cost_of_transport(&log, distance, p.m, p.g),
        mean_velocity: distance / duration,
        feasible: true,
    })
}

/// Smallest thrust-to-weight ratio in `[lo, hi]` at which hopping is feasible,
/// located by bisection to `tol`. `None` when `hi` itself is infeasible.
pub fn hopping_feasibility_boundary(setup: &CotSetup, lo: f64, hi: f64, tol: f64) -> Result<Option<f64>> {
    if !cot_hopping(setup, hi)?.feasible {
        return Ok(None);
    }
    if cot_hopping(setup, lo)?.feasible {
        return Ok(Some(lo));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if cot_hopping(setup, mid)?.feasible {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Hopping and flying cost of transport at each thrust-to-weight ratio.
pub fn cot_compare(setup: &CotSetup, twrs: &[f64], flight_duration: f64) -> Result<Vec<CotResult>> {
    let hopping: Vec<CotResult> = twrs.par_iter().map(|&r| cot_hopping(setup, r)).collect::<Result<_>>()?;
    Ok(hopping
        .into_iter()
        .zip(twrs)
        .flat_map(|(hop, &r)| [hop, cot_flying(setup.params.m, r, setup.xdot, flight_duration)])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn robot_like() -> BangBangSpec {
        BangBangSpec { m: 2.5, k: 4848.5, d: 15.0, f_max: 18.0, f_min: 0.0, apex: 1.0, r0: 0.4, g: 9.81 }
    }

    fn tight() -> IntegratorOptions {
        IntegratorOptions { abs_tol: 1e-12, rel_tol: 1e-11, event_tol: 1e-12, ..IntegratorOptions::default() }
    }

    #[test]
    fn lossless_round_trip_returns_to_the_drop_height() {
        let spec = BangBangSpec { d: 0.0, f_max: 0.0, f_min: 0.0, ..robot_like() };
        let hop = bang_bang_closed_form(&spec).unwrap();
        assert_relative_eq!(hop.apex, spec.apex, max_relative = 1e-12);
        assert_relative_eq!(hop.durations.descent, hop.durations.ascent, max_relative = 1e-12);
        assert_relative_eq!(hop.durations.compression, hop.durations.extension, max_relative = 1e-9);
    }

    #[test]
    fn undamped_peak_compression_matches_energy_balance() {
        let spec = BangBangSpec { d: 0.0, f_max: 0.0, f_min: 0.0, ..robot_like() };
        let hop = bang_bang_closed_form(&spec).unwrap();
        // m g (h - r0 + c) = k c^2 / 2
        let (m, g, k) = (spec.m, spec.g, spec.k);
        let h = spec.apex - spec.r0;
        let c = (m * g + ((m * g).powi(2) + 2.0 * k * m * g * h).sqrt()) / k;
        assert_relative_eq!(hop.peak_compression, c, max_relative = 1e-10);
    }

    #[test]
    fn closed_form_matches_numeric_integration() {
        let base = robot_like();
        for k in [2000.0, 4848.5, 10000.0] {
            for d in [0.0, 15.0, 60.0] {
                for (f_min, f_max) in [(0.0, 0.0), (0.0, 18.0), (15.25, 20.0), (5.0, 2.0)] {
                    let spec = BangBangSpec { k, d, f_min, f_max, ..base };
                    let closed = bang_bang_closed_form(&spec).unwrap();
                    let numeric = bang_bang_numeric(&spec, &tight()).unwrap();
                    assert!((closed.apex - numeric.apex).abs() < 1e-6, "{spec:?}: {} vs {}", closed.apex, numeric.apex);
                    assert!((closed.peak_compression - numeric.peak_compression).abs() < 1e-6);
                    assert!((closed.durations.total() - numeric.durations.total()).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn overdamped_and_critical_regimes_agree_with_numeric() {
        let base = robot_like();
        let critical = 2.0 * (base.k * base.m).sqrt();
        for d in [critical, 1.5 * critical] {
            let spec = BangBangSpec { d, f_max: 24.0, ..base };
            let numeric = bang_bang_numeric(&spec, &tight());
            match bang_bang_closed_form(&spec) {
                Ok(closed) => assert!((closed.apex - numeric.unwrap().apex).abs() < 1e-6),
                Err(Error::NoLiftoff) => assert_eq!(numeric.unwrap_err(), Error::NoLiftoff),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn heavy_damping_without_thrust_never_lifts_off() {
        let base = robot_like();
        let spec = BangBangSpec { d: 4.0 * (base.k * base.m).sqrt(), f_max: 0.0, ..base };
        assert_eq!(bang_bang_closed_form(&spec).unwrap_err(), Error::NoLiftoff);
    }

    #[test]
    fn apex_increases_with_ascending_thrust() {
        let mut last = 0.0;
        for f in [0.0, 5.0, 10.0, 15.0, 20.0, 24.0] {
            let apex = bang_bang_closed_form(&BangBangSpec { f_max: f, ..robot_like() }).unwrap().apex;
            assert!(apex > last);
            last = apex;
        }
    }

    #[test]
    fn thrust_at_weight_is_rejected() {
        let spec = BangBangSpec { f_max: 2.5 * 9.81, ..robot_like() };
        assert!(matches!(bang_bang_closed_form(&spec), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn stiff_lossless_spring_needs_only_the_idle_thrust() {
        for f_min in [0.0, 8.0] {
            let spec = BangBangSpec { k: 1e8, d: 0.0, f_min, f_max: f_min, apex: 1.3, ..robot_like() };
            let f = required_thrust(&spec).unwrap().unwrap();
            assert!((f - f_min).abs() < 1e-3, "{f} vs {f_min}");
        }
    }

    #[test]
    fn required_thrust_hits_the_target_apex() {
        let spec = BangBangSpec { apex: 1.3, ..robot_like() };
        let f = required_thrust(&spec).unwrap().unwrap();
        let hop = bang_bang_closed_form(&BangBangSpec { f_max: f, ..spec }).unwrap();
        assert!(hop.apex >= 1.3 && hop.apex - 1.3 < 1e-6);
    }

    #[test]
    fn stiffness_table_is_monotone_in_weight() {
        let sweep = StiffnessSweep::default();
        let table = design_sweep_stiffness(&sweep).unwrap();
        assert_eq!(table.len(), sweep.weights.len() * sweep.stiffness.len());
        for (j, &k) in sweep.stiffness.iter().enumerate() {
            let column: Vec<f64> = (0..sweep.weights.len()).map(|i| table[i * sweep.stiffness.len() + j].f_max.unwrap()).collect();
            assert!(column.windows(2).all(|w| w[1] >= w[0]), "k = {k}: {column:?}");
        }
    }

    #[test]
    fn zero_twr_gives_the_passive_rebound() {
        let sweep = TwrSweep { twr: vec![0.0], ..TwrSweep::default() };
        let table = design_sweep_twr(&sweep).unwrap();
        for row in table {
            let passive = bang_bang_closed_form(&BangBangSpec {
                m: sweep.m,
                k: row.stiffness,
                d: sweep.d,
                f_max: 0.0,
                f_min: 0.0,
                apex: sweep.apex,
                r0: sweep.r0,
                g: sweep.g,
            })
            .unwrap();
            assert_eq!(row.apex, Some(passive.apex));
            assert!(passive.apex < sweep.apex);
        }
    }

    #[test]
    fn twr_table_is_monotone_and_reaches_one_meter_at_point_eight() {
        let sweep = TwrSweep::default();
        let table = design_sweep_twr(&sweep).unwrap();
        let n = sweep.stiffness.len();
        for j in 0..n {
            let column: Vec<f64> = (0..sweep.twr.len()).map(|i| table[i * n + j].apex.unwrap()).collect();
            assert!(column.windows(2).all(|w| w[1] >= w[0]), "{column:?}");
        }
        let at_08 = sweep.twr.iter().position(|&r| (r - 0.8).abs() < 1e-12).unwrap();
        assert!((0..n).any(|j| table[at_08 * n + j].apex.unwrap() >= 1.0));
    }

    #[test]
    fn sweeps_are_deterministic() {
        let sweep = StiffnessSweep::default();
        assert_eq!(design_sweep_stiffness(&sweep).unwrap(), design_sweep_stiffness(&sweep).unwrap());
    }

    #[test]
    fn flying_cost_is_inverse_speed_above_unit_twr() {
        assert_eq!(cot_flying(2.5, 2.0, 1.0, 10.0).cot, 1.0);
        assert_relative_eq!(cot_flying(2.5, 2.0, 2.0, 10.0).cot, 0.5, max_relative = 1e-15);
        let grounded = cot_flying(2.5, 1.0, 1.0, 10.0);
        assert!(grounded.cot.is_infinite() && !grounded.feasible && grounded.mean_velocity == 0.0);
    }

    #[test]
    fn zero_thrust_log_costs_nothing() {
        let log: Vec<(f64, f64)> = (0..100).map(|i| (i as f64 * 0.01, 0.0)).collect();
        assert_eq!(cost_of_transport(&log, 1.0, 2.5, 9.81), 0.0);
    }

    #[test]
    fn cost_of_transport_ignores_log_resolution() {
        let log: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.02, 10.0 + (i as f64).sin())).collect();
        let base = cost_of_transport(&log, 1.3, 2.5, 9.81);
        let refined: Vec<(f64, f64)> = log
            .windows(2)
            .flat_map(|w| (0..4).map(move |j| (w[0].0 + j as f64 * 0.25 * (w[1].0 - w[0].0), w[0].1)))
            .chain(log.last().copied())
            .collect();
        assert_relative_eq!(base, cost_of_transport(&refined, 1.3, 2.5, 9.81), max_relative = 1e-12);
    }


    #[test]
    fn hopping_cost_baseline_at_point_nine() {
        let result = cot_hopping(&CotSetup::default(), 0.9).unwrap();
        assert!(result.feasible && result.cot.is_finite());
        assert!((result.cot - 0.797).abs() < 5e-3, "{}", result.cot);
        assert!((result.mean_velocity - 0.840).abs() < 0.02, "{}", result.mean_velocity);
    }

    #[test]
    fn hopping_feasibility_boundary_baseline() {
        let setup = CotSetup::default();
        let boundary = hopping_feasibility_boundary(&setup, 0.05, 0.95, 0.005).unwrap().unwrap();
        assert!((boundary - 0.764).abs() < 0.01, "{boundary}");
        assert!(!cot_hopping(&setup, boundary - 0.02).unwrap().feasible);
    }

    #[test]
    fn boundary_without_idle_thrust_is_set_by_spring_losses() {
        let setup = CotSetup { f_min: 0.0, ..CotSetup::default() };
        let boundary = hopping_feasibility_boundary(&setup, 0.05, 0.95, 0.005).unwrap().unwrap();
        assert!((boundary - 0.363).abs() < 0.01, "{boundary}");
        let cheap = cot_hopping(&setup, 0.9).unwrap();
        assert!((cheap.cot - 0.1075).abs() < 2e-3, "{}", cheap.cot);
    }

    #[test]
    fn idle_thrust_at_or_above_the_cap_is_infeasible() {
        let setup = CotSetup::default();
        let twr = setup.f_min / (setup.params.m * setup.params.g);
        assert!(!cot_hopping(&setup, twr).unwrap().feasible);
    }

}
