//! Thrust-assisted spring-loaded inverted pendulum.
//!
//! The leg is massless: its angle is assigned directly in flight and thrust
//! acts along it, pointing from the foot towards the mass. Leg angles are
//! measured from the vertical and are positive when the foot is ahead of the
//! mass (+x), so a positive touchdown angle decelerates forward motion.
//!
//! Stance is written in polar coordinates about the pinned foot:
//!
//! ```text
//! m (r'' - r θ'^2)   = F_s + F_t - m g cos θ
//! m (r θ'' + 2 r' θ') = m g sin θ
//! ```
//!
//! with spring deformation `s = r0 - r` and unilateral spring force
//! `F_s = max(0, k s + d s')`.

use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::hybrid::{EventKind, HybridModel, HybridState, Phase};
use crate::observe::{Observable, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlipParams {
    /// Mass (kg).
    pub m: f64,
    /// Spring stiffness (N/m).
    pub k: f64,
    /// Spring damping (N s/m).
    pub d: f64,
    /// Natural leg length (m).
    pub r0: f64,
    /// Gravity (m/s^2).
    #[serde(default = "default_gravity", alias = "gravity")]
    pub g: f64,
    /// Maximum spring travel (m); the leg may not shorten below `r0 - travel`.
    #[serde(default = "default_travel")]
    pub travel: f64,
}

fn default_gravity() -> f64 {
    9.81
}

fn default_travel() -> f64 {
    0.10
}

impl Default for SlipParams {
    fn default() -> Self {
        Self { m: 2.5, k: 4848.5, d: 15.0, r0: 0.4, g: 9.81, travel: 0.10 }
    }
}

impl SlipParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.m > 0.0 && self.k > 0.0 && self.d >= 0.0 && self.r0 > 0.0 && self.g > 0.0 && self.travel > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("slip parameters out of range: {self:?}")))
        }
    }

    pub fn r_min(&self) -> f64 {
        (self.r0 - self.travel).max(0.0)
    }
}

/// Unilateral spring-damper force for deformation `s` and rate `s_dot`.
pub fn spring_force(s: f64, s_dot: f64, params: &SlipParams) -> f64 {
    (params.k * s + params.d * s_dot).max(0.0)
}

/// `m g_e z + m z'^2 / 2`.
pub fn vertical_energy(z: f64, z_dot: f64, m: f64, g_e: f64) -> f64 {
    m * g_e * z + 0.5 * m * z_dot * z_dot
}

/// Flight accelerations `(x'', z'')` under thrust `thrust` along leg angle `theta`.
pub fn slip_aerial_acceleration(thrust: f64, theta: f64, params: &SlipParams) -> (f64, f64) {
    (-thrust * theta.sin() / params.m, thrust * theta.cos() / params.m - params.g)
}

/// Stance coordinates about the pinned foot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipPolar {
    pub r: f64,
    pub theta: f64,
    pub r_dot: f64,
    pub theta_dot: f64,
}

impl SlipPolar {
    /// Polar coordinates of a mass at `p` moving with `v` around `foot`.
    pub fn from_cartesian(p: [f64; 2], v: [f64; 2], foot: [f64; 2]) -> Self {
        let dx = p[0] - foot[0];
        let dz = p[1] - foot[1];
        let r = dx.hypot(dz);
        let theta = (-dx).atan2(dz);
        let (er, et) = polar_basis(theta);
        Self { r, theta, r_dot: v[0] * er[0] + v[1] * er[1], theta_dot: (v[0] * et[0] + v[1] * et[1]) / r }
    }

    pub fn deformation(&self, params: &SlipParams) -> (f64, f64) {
        (params.r0 - self.r, -self.r_dot)
    }
}

/// Radial (foot to mass) and angular unit vectors for leg angle `theta`.
fn polar_basis(theta: f64) -> ([f64; 2], [f64; 2]) {
    let (s, c) = theta.sin_cos();
    ([-s, c], [-c, -s])
}

/// Stance accelerations `(r'', θ'')` with thrust `thrust` collinear with the leg.
pub fn slip_stance_derivative(state: &SlipPolar, thrust: f64, params: &SlipParams) -> Result<(f64, f64)> {
    if state.r <= params.r_min() {
        return Err(Error::LegFullyCompressed { r: state.r, r_min: params.r_min() });
    }
    let (s, s_dot) = state.deformation(params);
    let fs = spring_force(s, s_dot, params);
    let (sin, cos) = state.theta.sin_cos();
    let r_ddot = state.r * state.theta_dot.powi(2) + (fs + thrust) / params.m - params.g * cos;
    let theta_ddot = (params.g * sin - 2.0 * state.r_dot * state.theta_dot) / state.r;
    Ok((r_ddot, theta_ddot))
}

/// Cubic Bézier leg-angle profile between two angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwingTrajectory {
    pub control_points: Vec<f64>,
    /// Absolute time at which the profile starts (s).
    pub start: f64,
    pub duration: f64,
}

impl SwingTrajectory {
    /// Cubic with repeated end points, so the angular rate is zero at both ends.
    pub fn cubic(from: f64, to: f64, start: f64, duration: f64) -> Self {
        Self { control_points: vec![from, from, to, to], start, duration }
    }

    /// Cubic matching the given angular rates at both ends.
    pub fn hermite(from: f64, from_rate: f64, to: f64, to_rate: f64, start: f64, duration: f64) -> Self {
        let lever = duration.max(0.0) / 3.0;
        Self { control_points: vec![from, from + from_rate * lever, to - to_rate * lever, to], start, duration }
    }

    pub fn from_points(control_points: Vec<f64>, start: f64, duration: f64) -> Self {
        assert!(!control_points.is_empty(), "a Bézier curve needs at least one control point");
        Self { control_points, start, duration }
    }

    pub fn theta_start(&self) -> f64 {
        self.control_points[0]
    }

    pub fn theta_end(&self) -> f64 {
        *self.control_points.last().expect("non-empty")
    }

    fn phase(&self, t: f64) -> f64 {
        if self.duration <= 0.0 {
            1.0
        } else {
            ((t - self.start) / self.duration).clamp(0.0, 1.0)
        }
    }

    /// Leg angle at absolute time `t`; clamps to the end points outside the window.
    pub fn angle(&self, t: f64) -> f64 {
        de_casteljau(&self.control_points, self.phase(t))
    }

    /// Leg angular rate at absolute time `t`.
    pub fn rate(&self, t: f64) -> f64 {
        let n = self.control_points.len();
        let s = (t - self.start) / self.duration;
        if n < 2 || self.duration <= 0.0 || !(0.0..=1.0).contains(&s) {
            return 0.0;
        }
        let diffs: Vec<f64> =
            self.control_points.windows(2).map(|w| (n - 1) as f64 * (w[1] - w[0])).collect();
        de_casteljau(&diffs, s) / self.duration
    }

    /// Leg angular acceleration at absolute time `t`.
    pub fn acceleration(&self, t: f64) -> f64 {
        let n = self.control_points.len();
        let s = (t - self.start) / self.duration;
        if n < 3 || self.duration <= 0.0 || !(0.0..=1.0).contains(&s) {
            return 0.0;
        }
        let scale = ((n - 1) * (n - 2)) as f64;
        let second: Vec<f64> = self.control_points.windows(3).map(|w| scale * (w[2] - 2.0 * w[1] + w[0])).collect();
        de_casteljau(&second, s) / (self.duration * self.duration)
    }
}

/// Evaluates the Bézier curve with `points` at parameter `s` in `[0, 1]`.
pub fn de_casteljau(points: &[f64], s: f64) -> f64 {
    let mut work = points.to_vec();
    let n = work.len();
    for level in 1..n {
        for i in 0..n - level {
            work[i] = (1.0 - s) * work[i] + s * work[i + 1];
        }
    }
    work[0]
}

/// Leg angle source during flight.
#[derive(Debug, Clone, PartialEq)]
pub enum LegCommand {
    Fixed(f64),
    Swing(SwingTrajectory),
}

impl LegCommand {
    pub fn angle(&self, t: f64) -> f64 {
        match self {
            LegCommand::Fixed(a) => *a,
            LegCommand::Swing(s) => s.angle(t),
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self {
            LegCommand::Fixed(_) => 0.0,
            LegCommand::Swing(s) => s.rate(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlipInput {
    pub thrust: f64,
    pub leg: LegCommand,
}

impl SlipInput {
    pub fn fixed(thrust: f64, angle: f64) -> Self {
        Self { thrust, leg: LegCommand::Fixed(angle) }
    }
}

/// Planar SLIP with generalized coordinates `q = (x, z)` of the mass in both phases.
#[derive(Debug, Clone)]
pub struct SlipModel {
    pub params: SlipParams,
    pub env: Environment,
}

impl SlipModel {
    pub fn new(params: SlipParams) -> Self {
        Self { params, env: Environment::default() }
    }

    pub fn with_environment(params: SlipParams, env: Environment) -> Self {
        Self { params, env }
    }

    pub fn foot_position(&self, state: &HybridState, input: &SlipInput) -> [f64; 2] {
        match &state.anchor {
            Some(a) => [a[0], a[1]],
            None => {
                let th = input.leg.angle(state.t);
                [state.q[0] + self.params.r0 * th.sin(), state.q[1] - self.params.r0 * th.cos()]
            }
        }
    }

    pub fn polar(&self, state: &HybridState) -> Option<SlipPolar> {
        let a = state.anchor.as_ref()?;
        Some(SlipPolar::from_cartesian([state.q[0], state.q[1]], [state.v[0], state.v[1]], [a[0], a[1]]))
    }

    /// Kinetic plus gravitational plus spring potential energy.
    pub fn mechanical_energy(&self, state: &HybridState) -> f64 {
        let p = &self.params;
        let ke = 0.5 * p.m * (state.v[0].powi(2) + state.v[1].powi(2));
        let spring = self.polar(state).map_or(0.0, |pol| {
            let s = p.r0 - pol.r;
            0.5 * p.k * s * s
        });
        ke + p.m * p.g * state.q[1] + spring
    }

    /// Unclamped leg force `k s + d s'`; crosses zero at liftoff.
    fn leg_load(&self, pol: &SlipPolar) -> f64 {
        let (s, s_dot) = pol.deformation(&self.params);
        self.params.k * s + self.params.d * s_dot
    }
}

impl HybridModel for SlipModel {
    type Input = SlipInput;

    fn dof(&self) -> usize {
        2
    }

    fn acceleration(&self, t: f64, state: &HybridState, input: &SlipInput, out: &mut [f64]) -> Result<()> {
        let p = &self.params;
        let ext = self.env.external_force(t);
        match state.phase {
            Phase::Aerial => {
                let (ax, az) = slip_aerial_acceleration(input.thrust, input.leg.angle(t), p);
                out[0] = ax + ext[0] / p.m;
                out[1] = az + ext[2] / p.m;
            }
            Phase::Stance => {
                let pol = self.polar(state).ok_or_else(|| Error::InvalidInitialState("stance state without a foot anchor".into()))?;
                let (r_dd, th_dd) = slip_stance_derivative(&pol, input.thrust, p)?;
                let (er, et) = polar_basis(pol.theta);
                let radial = r_dd - pol.r * pol.theta_dot.powi(2);
                let tangential = pol.r * th_dd + 2.0 * pol.r_dot * pol.theta_dot;
                out[0] = radial * er[0] + tangential * et[0] + ext[0] / p.m;
                out[1] = radial * er[1] + tangential * et[1] + ext[2] / p.m;
            }
        }
        Ok(())
    }

    fn guard(&self, kind: EventKind, _t: f64, state: &HybridState, input: &SlipInput) -> Option<f64> {
        match (state.phase, kind) {
            (Phase::Aerial, EventKind::Touchdown) => {
                let foot = self.foot_position(state, input);
                Some(foot[1] - self.env.terrain.height(foot[0]))
            }
            (Phase::Aerial, EventKind::Apex) => Some(state.v[1]),
            (Phase::Stance, EventKind::Liftoff) => self.polar(state).map(|pol| self.leg_load(&pol)),
            _ => None,
        }
    }

    fn reset(&self, kind: EventKind, state: &HybridState, input: &SlipInput) -> Result<HybridState> {
        let mut next = state.clone();
        match kind {
            EventKind::Touchdown => {
                next.anchor = Some(self.foot_position(state, input).to_vec());
                next.phase = Phase::Stance;
            }
            EventKind::Liftoff => {
                next.anchor = None;
                next.phase = Phase::Aerial;
            }
            EventKind::Apex => {}
        }
        Ok(next)
    }

    fn ground_reaction(&self, _t: f64, state: &HybridState, _input: &SlipInput) -> [f64; 3] {
        match self.polar(state) {
            Some(pol) => {
                let (s, s_dot) = pol.deformation(&self.params);
                let fs = spring_force(s, s_dot, &self.params);
                let (er, _) = polar_basis(pol.theta);
                [fs * er[0], 0.0, fs * er[1]]
            }
            None => [0.0; 3],
        }
    }

    fn input_log(&self, t: f64, input: &SlipInput) -> Vec<f64> {
        vec![input.thrust, input.leg.angle(t)]
    }

    fn check_initial(&self, state: &HybridState, input: &SlipInput) -> Result<()> {
        if state.phase == Phase::Aerial {
            let foot = self.foot_position(state, input);
            if foot[1] - self.env.terrain.height(foot[0]) < -1e-9 && state.v[1] <= 0.0 {
                return Err(Error::InvalidInitialState(format!("foot {:.3e} m below ground while descending", foot[1])));
            }
        } else if state.anchor.is_none() {
            return Err(Error::InvalidInitialState("stance state without a foot anchor".into()));
        }
        Ok(())
    }

    fn validate(&self, state: &HybridState) -> Result<()> {
        if state.q[1] <= self.env.terrain.height(state.q[0]) {
            return Err(Error::GroundPenetration { t: state.t });
        }
        Ok(())
    }

    fn breakpoints(&self) -> &[f64] {
        self.env.breakpoints()
    }
}

impl Observable for SlipModel {
    fn observe(&self, state: &HybridState) -> Observation {
        let deflection = self.polar(state).map_or(0.0, |pol| self.params.r0 - pol.r);
        Observation {
            x: state.q[0],
            y: 0.0,
            z: state.q[1],
            xdot: state.v[0],
            ydot: 0.0,
            zdot: state.v[1],
            pitch: 0.0,
            spring_deflection: deflection,
        }
    }
}

/// 3-D point-mass SLIP with `q = (x, y, z)`. Leg direction is composed from a
/// sagittal (x-z plane) and a lateral (y-z plane) angle.
#[derive(Debug, Clone)]
pub struct Slip3dModel {
    pub params: SlipParams,
    pub env: Environment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slip3dInput {
    pub thrust: f64,
    pub sagittal: LegCommand,
    pub lateral: LegCommand,
}

/// Unit vector from the mass to the foot for plane angles `(sagittal, lateral)`.
pub fn leg_direction(sagittal: f64, lateral: f64) -> [f64; 3] {
    let v = [sagittal.tan(), lateral.tan(), -1.0];
    let n = (v[0] * v[0] + v[1] * v[1] + 1.0).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

impl Slip3dModel {
    pub fn new(params: SlipParams) -> Self {
        Self { params, env: Environment::default() }
    }

    pub fn with_environment(params: SlipParams, env: Environment) -> Self {
        Self { params, env }
    }

    pub fn foot_position(&self, state: &HybridState, input: &Slip3dInput) -> [f64; 3] {
        match &state.anchor {
            Some(a) => [a[0], a[1], a[2]],
            None => {
                let n = leg_direction(input.sagittal.angle(state.t), input.lateral.angle(state.t));
                let r0 = self.params.r0;
                [state.q[0] + r0 * n[0], state.q[1] + r0 * n[1], state.q[2] + r0 * n[2]]
            }
        }
    }

    /// Leg length, unit vector from foot to mass, and leg length rate.
    fn leg(&self, state: &HybridState) -> Option<(f64, [f64; 3], f64)> {
        let a = state.anchor.as_ref()?;
        let d = [state.q[0] - a[0], state.q[1] - a[1], state.q[2] - a[2]];
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let e = [d[0] / r, d[1] / r, d[2] / r];
        let r_dot = e[0] * state.v[0] + e[1] * state.v[1] + e[2] * state.v[2];
        Some((r, e, r_dot))
    }

    pub fn mechanical_energy(&self, state: &HybridState) -> f64 {
        let p = &self.params;
        let ke = 0.5 * p.m * state.v.iter().map(|v| v * v).sum::<f64>();
        let spring = self.leg(state).map_or(0.0, |(r, _, _)| 0.5 * p.k * (p.r0 - r).powi(2));
        ke + p.m * p.g * state.q[2] + spring
    }
}

impl HybridModel for Slip3dModel {
    type Input = Slip3dInput;

    fn dof(&self) -> usize {
        3
    }

    fn acceleration(&self, t: f64, state: &HybridState, input: &Slip3dInput, out: &mut [f64]) -> Result<()> {
        let p = &self.params;
        let ext = self.env.external_force(t);
        let (dir, radial_force) = match state.phase {
            Phase::Aerial => {
                let n = leg_direction(input.sagittal.angle(t), input.lateral.angle(t));
                ([-n[0], -n[1], -n[2]], input.thrust)
            }
            Phase::Stance => {
                let (r, e, r_dot) = self.leg(state).ok_or_else(|| Error::InvalidInitialState("stance state without a foot anchor".into()))?;
                if r <= p.r_min() {
                    return Err(Error::LegFullyCompressed { r, r_min: p.r_min() });
                }
                (e, spring_force(p.r0 - r, -r_dot, p) + input.thrust)
            }
        };
        for i in 0..3 {
            out[i] = (radial_force * dir[i] + ext[i]) / p.m;
        }
        out[2] -= p.g;
        Ok(())
    }

    fn guard(&self, kind: EventKind, _t: f64, state: &HybridState, input: &Slip3dInput) -> Option<f64> {
        match (state.phase, kind) {
            (Phase::Aerial, EventKind::Touchdown) => {
                let foot = self.foot_position(state, input);
                Some(foot[2] - self.env.terrain.height(foot[0]))
            }
            (Phase::Aerial, EventKind::Apex) => Some(state.v[2]),
            (Phase::Stance, EventKind::Liftoff) => {
                self.leg(state).map(|(r, _, r_dot)| self.params.k * (self.params.r0 - r) - self.params.d * r_dot)
            }
            _ => None,
        }
    }

    fn reset(&self, kind: EventKind, state: &HybridState, input: &Slip3dInput) -> Result<HybridState> {
        let mut next = state.clone();
        match kind {
            EventKind::Touchdown => {
                next.anchor = Some(self.foot_position(state, input).to_vec());
                next.phase = Phase::Stance;
            }
            EventKind::Liftoff => {
                next.anchor = None;
                next.phase = Phase::Aerial;
            }
            EventKind::Apex => {}
        }
        Ok(next)
    }

    fn ground_reaction(&self, _t: f64, state: &HybridState, _input: &Slip3dInput) -> [f64; 3] {
        match self.leg(state) {
            Some((r, e, r_dot)) => {
                let fs = spring_force(self.params.r0 - r, -r_dot, &self.params);
                [fs * e[0], fs * e[1], fs * e[2]]
            }
            None => [0.0; 3],
        }
    }

    fn input_log(&self, t: f64, input: &Slip3dInput) -> Vec<f64> {
        vec![input.thrust, input.sagittal.angle(t), input.lateral.angle(t)]
    }

    fn check_initial(&self, state: &HybridState, input: &Slip3dInput) -> Result<()> {
        if state.phase == Phase::Aerial {
            let foot = self.foot_position(state, input);
            if foot[2] - self.env.terrain.height(foot[0]) < -1e-9 && state.v[2] <= 0.0 {
                return Err(Error::InvalidInitialState("foot below ground while descending".into()));
            }
        }
        Ok(())
    }

    fn validate(&self, state: &HybridState) -> Result<()> {
        if state.q[2] <= self.env.terrain.height(state.q[0]) {
            return Err(Error::GroundPenetration { t: state.t });
        }
        Ok(())
    }

    fn breakpoints(&self) -> &[f64] {
        self.env.breakpoints()
    }
}

impl Observable for Slip3dModel {
    fn observe(&self, state: &HybridState) -> Observation {
        let deflection = self.leg(state).map_or(0.0, |(r, _, _)| self.params.r0 - r);
        Observation {
            x: state.q[0],
            y: state.q[1],
            z: state.q[2],
            xdot: state.v[0],
            ydot: state.v[1],
            zdot: state.v[2],
            pitch: 0.0,
            spring_deflection: deflection,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::{integrate_ode, integrate_until_event, simulate_hops, IntegratorOptions, Termination};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn passive(_: &SlipModel, _: &HybridState) -> SlipInput {
        SlipInput::fixed(0.0, 0.0)
    }

    fn stance_state(model: &SlipModel, pol: SlipPolar) -> HybridState {
        let (er, et) = polar_basis(pol.theta);
        let q = vec![pol.r * er[0], pol.r * er[1]];
        let v = vec![
            pol.r_dot * er[0] + pol.r * pol.theta_dot * et[0],
            pol.r_dot * er[1] + pol.r * pol.theta_dot * et[1],
        ];
        let _ = model;
        HybridState { phase: Phase::Stance, t: 0.0, q, v, anchor: Some(vec![0.0, 0.0]) }
    }

    #[test]
    fn spring_force_is_unilateral() {
        let p = SlipParams::default();
        assert_eq!(spring_force(0.0, 0.0, &p), 0.0);
        assert_relative_eq!(spring_force(0.01, 0.0, &p), 48.485, epsilon = 1e-12);
        assert_eq!(spring_force(0.001, -1.0, &p), 0.0);
    }

    #[test]
    fn aerial_acceleration_values() {
        let p = SlipParams::default();
        assert_eq!(slip_aerial_acceleration(0.0, 0.3, &p), (0.0, -9.81));
        let (ax, az) = slip_aerial_acceleration(p.m * p.g, 0.0, &p);
        assert_eq!(ax, 0.0);
        assert!(az.abs() < 1e-15);
        let (ax, az) = slip_aerial_acceleration(10.0, 0.1, &p);
        assert_relative_eq!(ax, -4.0 * 0.1f64.sin(), epsilon = 1e-12);
        assert!((ax + 0.3993).abs() < 5e-5);
        assert!((az + 5.8300).abs() < 5e-5);
    }

    #[test]
    fn vertical_energy_values() {
        assert_relative_eq!(vertical_energy(1.1, 0.0, 2.5, 10.2 / 2.75), 10.2, epsilon = 1e-12);
        assert_eq!(vertical_energy(0.0, 0.0, 2.5, 9.81), 0.0);
        assert_eq!(vertical_energy(0.0, 2.0, 2.5, 9.81), 5.0);
    }

    #[test]
    fn static_stance_equilibrium() {
        let p = SlipParams::default();
        let s = p.m * p.g / p.k;
        let pol = SlipPolar { r: p.r0 - s, theta: 0.0, r_dot: 0.0, theta_dot: 0.0 };
        let (r_dd, th_dd) = slip_stance_derivative(&pol, 0.0, &p).unwrap();
        assert!(r_dd.abs() < 1e-12 && th_dd.abs() < 1e-12);
    }

    #[test]
    fn fully_compressed_leg_is_an_error() {
        let p = SlipParams::default();
        let pol = SlipPolar { r: p.r_min(), theta: 0.0, r_dot: 0.0, theta_dot: 0.0 };
        assert!(matches!(slip_stance_derivative(&pol, 0.0, &p), Err(Error::LegFullyCompressed { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn stance_matches_cartesian_oracle(
            r in 0.31f64..0.4,
            theta in -0.6f64..0.6,
            r_dot in -2.0f64..2.0,
            theta_dot in -4.0f64..4.0,
            thrust in 0.0f64..22.0,
        ) {
            let model = SlipModel::new(SlipParams::default());
            let p = model.params;
            let state = stance_state(&model, SlipPolar { r, theta, r_dot, theta_dot });
            let mut acc = [0.0; 2];
            model.acceleration(0.0, &state, &SlipInput::fixed(thrust, 0.0), &mut acc).unwrap();

            // Cartesian form: radial force along the unit vector from foot to mass.
            let (x, z) = (state.q[0], state.q[1]);
            let len = x.hypot(z);
            let ldot = (x * state.v[0] + z * state.v[1]) / len;
            let fs = (p.k * (p.r0 - len) - p.d * ldot).max(0.0);
            let ax = (fs + thrust) * x / len / p.m;
            let az = (fs + thrust) * z / len / p.m - p.g;
            let scale = 1.0 + ax.abs().max(az.abs());
            prop_assert!((acc[0] - ax).abs() <= 1e-9 * scale);
            prop_assert!((acc[1] - az).abs() <= 1e-9 * scale);

            // Angular momentum about the foot changes at the gravity moment.
            let l_dot = p.m * (x * acc[1] - z * acc[0]);
            prop_assert!((l_dot + p.m * p.g * x).abs() <= 1e-9 * (1.0 + p.m * p.g));
        }
    }

    #[test]
    fn polar_round_trip() {
        let model = SlipModel::new(SlipParams::default());
        let pol = SlipPolar { r: 0.37, theta: 0.2, r_dot: -0.4, theta_dot: 1.3 };
        let s = stance_state(&model, pol);
        let back = model.polar(&s).unwrap();
        assert_relative_eq!(back.r, pol.r, epsilon = 1e-14);
        assert_relative_eq!(back.theta, pol.theta, epsilon = 1e-14);
        assert_relative_eq!(back.r_dot, pol.r_dot, epsilon = 1e-14);
        assert_relative_eq!(back.theta_dot, pol.theta_dot, epsilon = 1e-13);
    }

    #[test]
    fn swing_endpoints_and_smoothness() {
        let sw = SwingTrajectory::cubic(-0.2, 0.3, 1.0, 0.5);
        assert_eq!(sw.angle(1.0), -0.2);
        assert_eq!(sw.angle(1.5), 0.3);
        assert_eq!(sw.angle(7.0), 0.3);
        assert_eq!(sw.rate(1.0), 0.0);
        assert!(sw.rate(1.5).abs() < 1e-12);
        for i in 1..50 {
            let t = 1.0 + 0.01 * i as f64;
            let fd = (sw.angle(t + 1e-6) - sw.angle(t - 1e-6)) / 2e-6;
            assert!((fd - sw.rate(t)).abs() < 1e-6);
        }
        let linear = SwingTrajectory::from_points(vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0], 0.0, 2.0);
        assert_relative_eq!(linear.angle(1.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn drop_touchdown_time() {
        let params = SlipParams { r0: 0.8, ..SlipParams::default() };
        let model = SlipModel::new(params);
        let s0 = HybridState::aerial(0.0, vec![0.0, 1.0], vec![0.0, 0.0]);
        let (_, ev) = integrate_until_event(&model, &s0, &mut passive, &EventKind::ALL, 2.0, &IntegratorOptions::default()).unwrap();
        let ev = ev.unwrap();
        assert_eq!(ev.kind, EventKind::Touchdown);
        assert!((ev.t - (2.0 * 0.2f64 / 9.81).sqrt()).abs() <= 1e-6);
        assert!((ev.state_before.q[1] - 0.8).abs() <= 1e-7);
        assert!(ev.guard_residual.abs() <= 1e-7);
        assert_eq!(ev.state_after.phase, Phase::Stance);
    }

    #[test]
    fn initial_foot_below_ground_is_rejected() {
        let model = SlipModel::new(SlipParams::default());
        let s0 = HybridState::aerial(0.0, vec![0.0, 0.3], vec![0.0, -1.0]);
        let err = integrate_until_event(&model, &s0, &mut passive, &EventKind::ALL, 1.0, &IntegratorOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidInitialState(_)));
    }

    #[test]
    fn symmetric_hop_stays_in_place() {
        let model = SlipModel::new(SlipParams { d: 0.0, ..SlipParams::default() });
        let s0 = HybridState::aerial(0.0, vec![0.0, 0.6], vec![0.0, 0.0]);
        let run = simulate_hops(&model, &s0, &mut passive, 1, 5.0, &IntegratorOptions::default()).unwrap();
        assert_eq!(run.termination, Termination::Completed);
        assert!(run.trajectory.samples.iter().all(|s| s.state.q[0].abs() < 1e-12));
        let apex = run.trajectory.apex_events().last().unwrap();
        assert!(apex.state_before.v[0].abs() < 1e-8);
        assert!((apex.state_before.q[1] - 0.6).abs() < 1e-5);
    }

    #[test]
    fn conservative_hop_keeps_energy() {
        let model = SlipModel::new(SlipParams { d: 0.0, ..SlipParams::default() });
        let s0 = HybridState::aerial(0.0, vec![0.0, 0.6], vec![0.8, 0.0]);
        let mut ctrl = |_: &SlipModel, _: &HybridState| SlipInput::fixed(0.0, 0.12);
        let run = simulate_hops(&model, &s0, &mut ctrl, 1, 5.0, &IntegratorOptions::default()).unwrap();
        let e0 = model.mechanical_energy(&s0);
        for s in &run.trajectory.samples {
            let drift = model.mechanical_energy(&s.state) - e0;
            assert!(drift.abs() < 1e-6, "t {} drift {drift:e}", s.t);
        }
        assert!(run.trajectory.events.iter().any(|e| e.kind == EventKind::Liftoff));
    }

    #[test]
    fn damping_dissipates_energy() {
        let model = SlipModel::new(SlipParams::default());
        let s0 = HybridState::aerial(0.0, vec![0.0, 0.7], vec![0.3, 0.0]);
        let mut ctrl = |_: &SlipModel, _: &HybridState| SlipInput::fixed(0.0, 0.05);
        let run = simulate_hops(&model, &s0, &mut ctrl, 3, 10.0, &IntegratorOptions::default()).unwrap();
        let energies: Vec<f64> = run.trajectory.samples.iter().map(|s| model.mechanical_energy(&s.state)).collect();
        assert!(energies.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        let apexes: Vec<f64> = std::iter::once(0.7).chain(run.trajectory.apex_events().map(|e| e.state_before.q[1])).collect();
        assert_eq!(apexes.len(), 4);
        assert!(apexes.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn reverse_integration_recovers_previous_sample() {
        let model = SlipModel::new(SlipParams::default());
        let s0 = HybridState::aerial(0.0, vec![0.0, 0.7], vec![0.5, 0.3]);
        let input = SlipInput::fixed(5.0, 0.1);
        let mut ctrl = |_: &SlipModel, _: &HybridState| input.clone();
        let opts = IntegratorOptions::default();
        let (traj, ev) = integrate_until_event(&model, &s0, &mut ctrl, &[EventKind::Touchdown], 3.0, &opts).unwrap();
        let ev = ev.unwrap();
        let prev = &traj.samples[traj.samples.len() - 2];
        let y_ev: Vec<f64> = ev.state_before.q.iter().chain(ev.state_before.v.iter()).copied().collect();
        let f = |t: f64, y: &[f64], dy: &mut [f64]| {
            let s = HybridState::aerial(t, y[..2].to_vec(), y[2..].to_vec());
            dy[..2].copy_from_slice(&y[2..]);
            model.acceleration(t, &s, &input, &mut dy[2..])
        };
        let back = integrate_ode(f, ev.t, &y_ev, prev.t, &opts.tightened(1e-2)).unwrap();
        let expect: Vec<f64> = prev.state.q.iter().chain(prev.state.v.iter()).copied().collect();
        for (a, b) in back.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }

    #[test]
    fn tighter_tolerance_shrinks_error() {
        // Thrust along a swinging leg keeps the flight arc non-polynomial.
        let model = SlipModel::new(SlipParams::default());
        let input = SlipInput { thrust: 8.0, leg: LegCommand::Swing(SwingTrajectory::cubic(-0.3, 0.4, 0.0, 0.6)) };
        let f = |t: f64, y: &[f64], dy: &mut [f64]| {
            let s = HybridState::aerial(t, y[..2].to_vec(), y[2..].to_vec());
            dy[..2].copy_from_slice(&y[2..]);
            model.acceleration(t, &s, &input, &mut dy[2..])
        };
        let y0 = [0.0, 0.5, 2.0, 3.0];
        let base = IntegratorOptions { max_step: 1.0, ..IntegratorOptions::default() };
        let reference = integrate_ode(f, 0.0, &y0, 0.6, &base.tightened(1e-5)).unwrap();
        let mut errors = Vec::new();
        for i in 0..8 {
            let tol = 1e-4 / 2f64.powi(i);
            let opts = IntegratorOptions { abs_tol: tol, rel_tol: tol, ..base };
            let y = integrate_ode(f, 0.0, &y0, 0.6, &opts).unwrap();
            errors.push(y.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
        assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    }

    #[test]
    fn three_dimensional_model_reduces_to_planar() {
        let p = SlipParams::default();
        let planar = SlipModel::new(p);
        let spatial = Slip3dModel::new(p);
        let opts = IntegratorOptions::default();
        let mut c2 = |_: &SlipModel, _: &HybridState| SlipInput::fixed(3.0, 0.1);
        let mut c3 = |_: &Slip3dModel, _: &HybridState| Slip3dInput {
            thrust: 3.0,
            sagittal: LegCommand::Fixed(0.1),
            lateral: LegCommand::Fixed(0.0),
        };
        let r2 = simulate_hops(&planar, &HybridState::aerial(0.0, vec![0.0, 0.6], vec![0.5, 0.0]), &mut c2, 1, 5.0, &opts).unwrap();
        let r3 = simulate_hops(&spatial, &HybridState::aerial(0.0, vec![0.0, 0.0, 0.6], vec![0.5, 0.0, 0.0]), &mut c3, 1, 5.0, &opts).unwrap();
        let a2 = r2.trajectory.final_state().unwrap();
        let a3 = r3.trajectory.final_state().unwrap();
        assert!((a2.v[0] - a3.v[0]).abs() < 1e-8);
        assert!((a2.q[1] - a3.q[2]).abs() < 1e-8);
        assert!(a3.q[1].abs() < 1e-12 && a3.v[1].abs() < 1e-12);
    }
}






