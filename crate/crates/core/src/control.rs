//! Hopping controllers: energy-shaping thrust plus apex-triggered foot placement.
//!
//! Flight is split at apex. During ascent the leg swings from its liftoff
//! angle to the gait's nominal angle, timed to arrive at the predicted apex.
//! At apex the stepping law picks the next touchdown angle and the descent
//! swing is timed to reach it at the predicted touchdown. Both predictions use
//! ballistic motion under the equivalent gravity and are refreshed every
//! control sample.

use crate::energy::{BoundActive, EnergyController};
use crate::error::Result;
use crate::hybrid::{Command, Controller, Diagnostics, Event, EventKind, HybridState, Phase};
use crate::robot::{attitude_moment, thrust_bounds, RobotInput, RobotModel};
use crate::slip::{leg_direction, LegCommand, Slip3dInput, Slip3dModel, SlipInput, SlipModel, SwingTrajectory};
use crate::stepping::StepLaw;

#[derive(Debug, Clone, Copy, PartialEq)]
enum SwingStage {
    Ascent { start: f64, from: f64, rate: f64 },
    Descent { start: f64, from: f64, rate: f64 },
}

/// Fraction of the ground-speed-matching leg rate requested at touchdown.
pub const DEFAULT_RETRACTION: f64 = 1.0;

/// Two-segment swing reference in one plane.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingPlanner {
    stage: SwingStage,
    /// Angle reached at apex.
    pub ascent_target: f64,
    /// Angle reached at touchdown.
    pub touchdown_target: f64,
    /// Scale on the ground-speed-matching rate at touchdown.
    pub retraction: f64,
}

/// Time until `zdot` vanishes when decelerating at `g_e`.
pub fn time_to_apex(zdot: f64, g_e: f64) -> f64 {
    zdot.max(0.0) / g_e
}

/// Time to fall by `drop` from vertical speed `zdot` under `g_e`.
pub fn time_to_touchdown(zdot: f64, drop: f64, g_e: f64) -> f64 {
    let disc = zdot * zdot + 2.0 * g_e * drop.max(0.0);
    ((zdot + disc.sqrt()) / g_e).max(0.0)
}

/// Vertical speed after falling by `drop` from vertical speed `zdot` under `g_e`.
pub fn touchdown_speed(zdot: f64, drop: f64, g_e: f64) -> f64 {
    -(zdot * zdot + 2.0 * g_e * drop.max(0.0)).sqrt()
}

/// Leg rate at which a foot placed at `angle` and distance `radius` from the
/// body arrives with no velocity across the leg.
pub fn ground_speed_matching_rate(xdot: f64, zdot: f64, angle: f64, radius: f64) -> f64 {
    -(xdot * angle.cos() + zdot * angle.sin()) / radius
}

impl SwingPlanner {
    /// Planner at apex with the leg at rest at `from`, heading for `touchdown_target`.
    pub fn at_apex(t: f64, from: f64, touchdown_target: f64, ascent_target: f64) -> Self {
        Self { stage: SwingStage::Descent { start: t, from, rate: 0.0 }, ascent_target, touchdown_target, retraction: DEFAULT_RETRACTION }
    }

    pub fn liftoff(&mut self, t: f64, angle: f64, rate: f64) {
        self.stage = SwingStage::Ascent { start: t, from: angle, rate };
    }

    pub fn apex(&mut self, t: f64, angle: f64, rate: f64, touchdown_target: f64) {
        self.stage = SwingStage::Descent { start: t, from: angle, rate };
        self.touchdown_target = touchdown_target;
    }

    pub fn is_descending(&self) -> bool {
        matches!(self.stage, SwingStage::Descent { .. })
    }

    /// Current swing curve. `drop` is the predicted COM fall to touchdown and
    /// `matching_rate` the leg rate that would cancel foot slip on arrival.
    pub fn trajectory(&self, t: f64, zdot: f64, drop: f64, g_e: f64, matching_rate: f64) -> SwingTrajectory {
        let touchdown_rate = self.retraction * matching_rate;
        match self.stage {
            SwingStage::Ascent { start, from, rate } => {
                let end = t + time_to_apex(zdot, g_e);
                SwingTrajectory::hermite(from, rate, self.ascent_target, 0.0, start, end - start)
            }
            SwingStage::Descent { start, from, rate } => {
                let end = t + time_to_touchdown(zdot, drop, g_e);
                SwingTrajectory::hermite(from, rate, self.touchdown_target, touchdown_rate, start, end - start)
            }
        }
    }
}

/// Apex summary recorded by the controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApexRecord {
    pub t: f64,
    pub x: f64,
    pub z: f64,
    pub xdot: f64,
    pub ydot: f64,
    pub energy: f64,
    /// Touchdown angle chosen for the next step (sagittal).
    pub command: f64,
    /// Lateral touchdown angle (3-D only).
    pub lateral_command: f64,
    pub clamped: bool,
}

fn diagnostics(step: &crate::energy::EnergyStep) -> Diagnostics {
    Diagnostics {
        eta: step.eta,
        lyapunov: step.terms.v,
        delta: step.solution.delta,
        bound_active: step.solution.active != BoundActive::None,
    }
}

fn stance_diagnostics(energy: &EnergyController, z: f64, zdot: f64) -> Diagnostics {
    let eta = energy.energy(z, zdot) - energy.config.e_d;
    Diagnostics { eta, lyapunov: energy.config.lyapunov_weight() * eta * eta, delta: 0.0, bound_active: true }
}

/// Energy shaping and stepping for the planar SLIP.
#[derive(Debug, Clone)]
pub struct SlipHopController {
    pub energy: EnergyController,
    pub law: StepLaw,
    pub swing: SwingPlanner,
    pub f_prev: f64,
    pub apexes: Vec<ApexRecord>,
    current_leg: f64,
    current_rate: f64,
}

impl SlipHopController {
    /// Controller starting at an apex with the leg at `leg_angle`. The first
    /// touchdown angle comes from the stepping law unless `first_touchdown`
    /// overrides it.
    pub fn new(energy: EnergyController, law: StepLaw, state: &HybridState, leg_angle: f64, first_touchdown: Option<f64>) -> Self {
        let (u, clamped) = match first_touchdown {
            Some(u) => (u, false),
            None => law.touchdown_angle(state.v[0]),
        };
        let record = ApexRecord {
            t: state.t,
            x: state.q[0],
            z: state.q[1],
            xdot: state.v[0],
            ydot: 0.0,
            energy: energy.energy(state.q[1], state.v[1]),
            command: u,
            lateral_command: 0.0,
            clamped,
        };
        Self {
            swing: SwingPlanner::at_apex(state.t, leg_angle, u, law.u_star),
            f_prev: energy.config.ft_min,
            energy,
            law,
            apexes: vec![record],
            current_leg: leg_angle,
            current_rate: 0.0,
        }
    }
}

impl SlipHopController {
    pub fn with_retraction(mut self, retraction: f64) -> Self {
        self.swing.retraction = retraction;
        self
    }
}

impl Controller<SlipModel> for SlipHopController {
    fn control(&mut self, model: &SlipModel, state: &HybridState) -> Result<Command<SlipInput>> {
        let (z, zdot) = (state.q[1], state.v[1]);
        if state.phase == Phase::Stance {
            let thrust = self.energy.stance_thrust();
            self.f_prev = thrust;
            return Ok(Command { input: SlipInput::fixed(thrust, self.current_leg), diag: stance_diagnostics(&self.energy, z, zdot) });
        }
        let r0 = model.params.r0;
        let u = self.swing.touchdown_target;
        let ground = model.env.terrain.height(state.q[0] + r0 * u.sin());
        let drop = z - (ground + r0 * u.cos());
        let zdot_td = touchdown_speed(zdot, drop, self.energy.g_e);
        let rate_td = ground_speed_matching_rate(state.v[0], zdot_td, u, r0);
        let swing = self.swing.trajectory(state.t, zdot, drop, self.energy.g_e, rate_td);
        let angle = swing.angle(state.t);
        let step = self.energy.aerial_step(z, zdot, angle.cos(), self.f_prev)?;
        self.f_prev = step.thrust;
        self.current_leg = angle;
        self.current_rate = swing.rate(state.t);
        Ok(Command { input: SlipInput { thrust: step.thrust, leg: LegCommand::Swing(swing) }, diag: diagnostics(&step) })
    }

    fn on_event(&mut self, model: &SlipModel, event: &Event) {
        let s = &event.state_after;
        match event.kind {
            EventKind::Liftoff => {
                let (angle, rate) = model.polar(&event.state_before).map_or((self.current_leg, 0.0), |p| (p.theta, p.theta_dot));
                self.current_leg = angle;
                self.current_rate = rate;
                self.swing.liftoff(event.t, angle, rate);
            }
            EventKind::Apex => {
                let (u, clamped) = self.law.touchdown_angle(s.v[0]);
                self.swing.apex(event.t, self.current_leg, self.current_rate, u);
                self.apexes.push(ApexRecord {
                    t: event.t,
                    x: s.q[0],
                    z: s.q[1],
                    xdot: s.v[0],
                    ydot: 0.0,
                    energy: self.energy.energy(s.q[1], s.v[1]),
                    command: u,
                    lateral_command: 0.0,
                    clamped,
                });
            }
            EventKind::Touchdown => {
                if let Some(p) = model.polar(s) {
                    self.current_leg = p.theta;
                    self.current_rate = p.theta_dot;
                }
            }
        }
    }
}

/// Energy shaping with independent sagittal and lateral stepping on the 3-D SLIP.
#[derive(Debug, Clone)]
pub struct Slip3dHopController {
    pub energy: EnergyController,
    pub sagittal_law: StepLaw,
    pub lateral_law: StepLaw,
    pub sagittal: SwingPlanner,
    pub lateral: SwingPlanner,
    pub f_prev: f64,
    pub apexes: Vec<ApexRecord>,
    current: (f64, f64),
    rates: (f64, f64),
}

impl Slip3dHopController {
    pub fn new(energy: EnergyController, sagittal_law: StepLaw, lateral_law: StepLaw, state: &HybridState) -> Self {
        let (ux, cx) = sagittal_law.touchdown_angle(state.v[0]);
        let (uy, cy) = lateral_law.touchdown_angle(state.v[1]);
        let record = ApexRecord {
            t: state.t,
            x: state.q[0],
            z: state.q[2],
            xdot: state.v[0],
            ydot: state.v[1],
            energy: energy.energy(state.q[2], state.v[2]),
            command: ux,
            lateral_command: uy,
            clamped: cx || cy,
        };
        Self {
            sagittal: SwingPlanner::at_apex(state.t, sagittal_law.u_star, ux, sagittal_law.u_star),
            lateral: SwingPlanner::at_apex(state.t, lateral_law.u_star, uy, lateral_law.u_star),
            f_prev: energy.config.ft_min,
            energy,
            sagittal_law,
            lateral_law,
            apexes: vec![record],
            current: (sagittal_law.u_star, lateral_law.u_star),
            rates: (0.0, 0.0),
        }
    }
}

impl Slip3dHopController {
    pub fn with_retraction(mut self, retraction: f64) -> Self {
        self.sagittal.retraction = retraction;
        self.lateral.retraction = retraction;
        self
    }
}

impl Controller<Slip3dModel> for Slip3dHopController {
    fn control(&mut self, model: &Slip3dModel, state: &HybridState) -> Result<Command<Slip3dInput>> {
        let (z, zdot) = (state.q[2], state.v[2]);
        if state.phase == Phase::Stance {
            let thrust = self.energy.stance_thrust();
            self.f_prev = thrust;
            let input = Slip3dInput { thrust, sagittal: LegCommand::Fixed(self.current.0), lateral: LegCommand::Fixed(self.current.1) };
            return Ok(Command { input, diag: stance_diagnostics(&self.energy, z, zdot) });
        }
        let r0 = model.params.r0;
        let n = leg_direction(self.sagittal.touchdown_target, self.lateral.touchdown_target);
        let ground = model.env.terrain.height(state.q[0] + r0 * n[0]);
        let drop = z - (ground - r0 * n[2]);
        let zdot_td = touchdown_speed(zdot, drop, self.energy.g_e);
        let rx = ground_speed_matching_rate(state.v[0], zdot_td, self.sagittal.touchdown_target, r0);
        let ry = ground_speed_matching_rate(state.v[1], zdot_td, self.lateral.touchdown_target, r0);
        let sx = self.sagittal.trajectory(state.t, zdot, drop, self.energy.g_e, rx);
        let sy = self.lateral.trajectory(state.t, zdot, drop, self.energy.g_e, ry);
        let (ax, ay) = (sx.angle(state.t), sy.angle(state.t));
        self.rates = (sx.rate(state.t), sy.rate(state.t));
        let cos_tilt = -leg_direction(ax, ay)[2];
        let step = self.energy.aerial_step(z, zdot, cos_tilt, self.f_prev)?;
        self.f_prev = step.thrust;
        self.current = (ax, ay);
        let input = Slip3dInput { thrust: step.thrust, sagittal: LegCommand::Swing(sx), lateral: LegCommand::Swing(sy) };
        Ok(Command { input, diag: diagnostics(&step) })
    }

    fn on_event(&mut self, _model: &Slip3dModel, event: &Event) {
        let s = &event.state_after;
        match event.kind {
            EventKind::Liftoff => {
                let a = event.state_before.anchor.clone().unwrap_or_default();
                let ((ax, rx), (ay, ry)) = if a.len() == 3 {
                    // Plane angles of the leg from the pinned foot and their rates.
                    let h = s.q[2] - a[2];
                    let plane = |off: f64, vel: f64| (off.atan2(h), -(vel * h + off * s.v[2]) / (off * off + h * h));
                    (plane(a[0] - s.q[0], s.v[0]), plane(a[1] - s.q[1], s.v[1]))
                } else {
                    ((self.current.0, 0.0), (self.current.1, 0.0))
                };
                self.current = (ax, ay);
                self.rates = (rx, ry);
                self.sagittal.liftoff(event.t, ax, rx);
                self.lateral.liftoff(event.t, ay, ry);
            }
            EventKind::Apex => {
                let (ux, cx) = self.sagittal_law.touchdown_angle(s.v[0]);
                let (uy, cy) = self.lateral_law.touchdown_angle(s.v[1]);
                self.sagittal.apex(event.t, self.current.0, self.rates.0, ux);
                self.lateral.apex(event.t, self.current.1, self.rates.1, uy);
                self.apexes.push(ApexRecord {
                    t: event.t,
                    x: s.q[0],
                    z: s.q[2],
                    xdot: s.v[0],
                    ydot: s.v[1],
                    energy: self.energy.energy(s.q[2], s.v[2]),
                    command: ux,
                    lateral_command: uy,
                    clamped: cx || cy,
                });
            }
            EventKind::Touchdown => {}
        }
    }
}

/// Energy shaping, stepping and the attitude loop for the planar robot.
#[derive(Debug, Clone)]
pub struct RobotHopController {
    pub energy: EnergyController,
    pub law: StepLaw,
    pub swing: SwingPlanner,
    pub f_prev: f64,
    pub apexes: Vec<ApexRecord>,
    reference: (f64, f64),
}

impl RobotHopController {
    pub fn new(energy: EnergyController, law: StepLaw, model: &RobotModel, state: &HybridState) -> Self {
        let (c, cv) = model.com(state);
        let (u, clamped) = law.touchdown_angle(cv[0]);
        let record = ApexRecord {
            t: state.t,
            x: c[0],
            z: c[1],
            xdot: cv[0],
            ydot: 0.0,
            energy: energy.energy(c[1], cv[1]),
            command: u,
            lateral_command: 0.0,
            clamped,
        };
        Self {
            swing: SwingPlanner::at_apex(state.t, state.q[2], u, law.u_star),
            f_prev: energy.config.ft_min,
            energy,
            law,
            apexes: vec![record],
            reference: (state.q[2], 0.0),
        }
    }
}

impl RobotHopController {
    pub fn with_retraction(mut self, retraction: f64) -> Self {
        self.swing.retraction = retraction;
        self
    }
}

impl Controller<RobotModel> for RobotHopController {
    fn control(&mut self, model: &RobotModel, state: &HybridState) -> Result<Command<RobotInput>> {
        let p = &model.params;
        let (c, cv) = model.com(state);
        if state.phase == Phase::Stance {
            let (f_floor, _) = thrust_bounds([0.0; 3], p)?;
            self.f_prev = f_floor;
            let input = RobotInput { thrust: f_floor, moment: 0.0, pitch_des: state.q[2] };
            return Ok(Command { input, diag: stance_diagnostics(&self.energy, c[1], cv[1]) });
        }
        let u = self.swing.touchdown_target;
        let l = p.leg_length();
        let ground = model.env.terrain.height(c[0] + l * u.sin());
        let drop = c[1] - (ground + p.m_body / p.total_mass() * l * u.cos());
        let zdot_td = touchdown_speed(cv[1], drop, self.energy.g_e);
        let rate_td = ground_speed_matching_rate(state.v[0], zdot_td, u, l - state.q[3]);
        let swing = self.swing.trajectory(state.t, cv[1], drop, self.energy.g_e, rate_td);
        self.reference = (swing.angle(state.t), swing.rate(state.t));
        let (pitch_des, rate_des) = (swing.angle(state.t), swing.rate(state.t));
        let q = nalgebra::Vector4::from_column_slice(&state.q);
        let v = nalgebra::Vector4::from_column_slice(&state.v);
        let moment = attitude_moment(&q, &v, pitch_des, rate_des, swing.acceleration(state.t), p);
        let (lo, hi) = thrust_bounds([moment, 0.0, 0.0], p)?;
        let mut bounded = self.energy;
        bounded.config.ft_min = lo;
        bounded.config.ft_max = hi.max(lo + 1e-9);
        // The output dynamics keep the nominal floor; only the admissible range moves.
        let eta = self.energy.energy(c[1], cv[1]) - self.energy.config.e_d;
        let terms = crate::energy::clf_terms(eta, cv[1], state.q[2].cos(), &self.energy.config);
        let solution = crate::energy::solve_energy_qp(&terms, self.f_prev, &bounded.config)?;
        self.f_prev = solution.thrust;
        let diag = Diagnostics {
            eta,
            lyapunov: terms.v,
            delta: solution.delta,
            bound_active: solution.active != BoundActive::None,
        };
        Ok(Command { input: RobotInput { thrust: solution.thrust, moment, pitch_des }, diag })
    }

    fn on_event(&mut self, model: &RobotModel, event: &Event) {
        let s = &event.state_after;
        match event.kind {
            EventKind::Liftoff => self.swing.liftoff(event.t, s.q[2], s.v[2]),
            EventKind::Apex => {
                let (c, cv) = model.com(s);
                let (u, clamped) = self.law.touchdown_angle(cv[0]);
                self.swing.apex(event.t, self.reference.0, self.reference.1, u);
                self.apexes.push(ApexRecord {
                    t: event.t,
                    x: c[0],
                    z: c[1],
                    xdot: cv[0],
                    ydot: 0.0,
                    energy: self.energy.energy(c[1], cv[1]),
                    command: u,
                    lateral_command: 0.0,
                    clamped,
                });
            }
            EventKind::Touchdown => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ballistic_predictions() {
        assert!((time_to_apex(2.0, 4.0) - 0.5).abs() < 1e-15);
        assert_eq!(time_to_apex(-1.0, 4.0), 0.0);
        // From rest, falling 0.5 m at 4 m/s^2 takes 0.5 s.
        assert!((time_to_touchdown(0.0, 0.5, 4.0) - 0.5).abs() < 1e-15);
        // Rising at 2 m/s adds the up-and-down time.
        assert!((time_to_touchdown(2.0, 0.0, 4.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn swing_stages() {
        let mut p = SwingPlanner::at_apex(1.0, 0.0, 0.2, 0.1);
        assert!(p.is_descending());
        let tr = p.trajectory(1.0, 0.0, 0.5, 4.0, 0.0);
        assert_eq!(tr.angle(1.0), 0.0);
        assert!((tr.angle(1.5) - 0.2).abs() < 1e-15);
        p.liftoff(2.0, -0.15, 0.0);
        let tr = p.trajectory(2.0, 2.0, 0.0, 4.0, 0.0);
        assert_eq!(tr.angle(2.0), -0.15);
        assert!((tr.angle(2.5) - 0.1).abs() < 1e-15);
    }
}
