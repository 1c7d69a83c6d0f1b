//! Planar full-order hopper: a floating body (x, z, pitch) carrying a
//! prismatic spring leg whose lower part is a point mass at the foot.
//!
//! Generalized coordinates are `q = (x, z, φ, s)` where `(x, z)` is the body
//! center of mass, `φ` the pitch (equal to the leg angle from vertical, positive
//! with the foot ahead) and `s` the spring compression. The foot sits at
//! `p_b + ℓ e` with `ℓ = leg_offset + r0 − s` and `e = (sin φ, −cos φ)`.
//!
//! Thrust acts along `−e` at the body center of mass, the attitude moment acts
//! on `φ`, and the spring-damper `k s + d ṡ` acts on `s`. In stance the foot is
//! pinned and the constrained dynamics are solved as one KKT system together
//! with the contact force.

use nalgebra::{Matrix2x4, Matrix3x4, Matrix4, SMatrix, SVector, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::hybrid::{EventKind, HybridModel, HybridState, Phase};
use crate::observe::{Observable, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    pub m_body: f64,
    pub m_leg: f64,
    /// Body pitch inertia about its center of mass (kg m^2).
    pub i_body: f64,
    /// Distance from the body center of mass to the top of the spring (m).
    pub leg_offset: f64,
    /// Spring natural length (m).
    pub r0: f64,
    pub k: f64,
    pub d: f64,
    /// Maximum spring compression (m).
    pub travel: f64,
    /// Propeller thrust per unit motor moment (1/m).
    pub k_t: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Distance from the body center to each rotor along a body axis (m).
    pub arm: f64,
    /// Total thrust cap as a fraction of weight.
    pub twr: f64,
    pub g: f64,
    /// Attitude loop bandwidth (Hz), critically damped.
    pub attitude_bandwidth_hz: f64,
    /// Tangential/normal contact force ratio above which a warning is raised.
    pub friction_coefficient: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            m_body: 2.4,
            m_leg: 0.1,
            i_body: 0.02,
            leg_offset: 0.32,
            r0: 0.08,
            k: 4848.5,
            d: 15.0,
            travel: 0.10,
            k_t: 50.0,
            tau_min: 0.07626,
            tau_max: 0.3,
            arm: 0.165 / std::f64::consts::SQRT_2,
            twr: 22.0 / (2.5 * 9.81),
            g: 9.81,
            attitude_bandwidth_hz: 12.0,
            friction_coefficient: 0.8,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.m_body > 0.0
            && self.m_leg > 0.0
            && self.i_body > 0.0
            && self.leg_offset >= 0.0
            && self.r0 > 0.0
            && self.k > 0.0
            && self.d >= 0.0
            && self.travel > 0.0
            && self.k_t > 0.0
            && self.tau_min < self.tau_max
            && self.tau_min >= 0.0
            && self.arm > 0.0
            && self.twr > 0.0
            && self.twr <= 1.0
            && self.g > 0.0
            && self.attitude_bandwidth_hz > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("robot parameters out of range: {self:?}")))
        }
    }

    /// Point-mass SLIP with the same total mass, spring and leg length.
    pub fn slip_equivalent(&self) -> crate::slip::SlipParams {
        crate::slip::SlipParams { m: self.total_mass(), k: self.k, d: self.d, r0: self.leg_length(), g: self.g, travel: self.travel }
    }

    pub fn total_mass(&self) -> f64 {
        self.m_body + self.m_leg
    }

    /// Body-to-foot distance with the spring at rest.
    pub fn leg_length(&self) -> f64 {
        self.leg_offset + self.r0
    }

    /// Moment allocation for an X quad: rows are pitch, roll and yaw.
    pub fn mixer(&self) -> Matrix3x4<f64> {
        let c = self.k_t * self.arm;
        Matrix3x4::new(
            c, -c, c, -c, //
            -c, c, c, -c, //
            1.0, 1.0, -1.0, -1.0,
        )
    }

    /// Weight-based thrust cap.
    pub fn thrust_cap(&self) -> f64 {
        self.twr * self.total_mass() * self.g
    }
}

fn unit(phi: f64) -> (Vector2<f64>, Vector2<f64>) {
    let (s, c) = phi.sin_cos();
    (Vector2::new(s, -c), Vector2::new(c, s))
}

fn leg(q: &Vector4<f64>, p: &RobotParams) -> f64 {
    p.leg_length() - q[3]
}

pub fn foot_position(q: &Vector4<f64>, p: &RobotParams) -> Vector2<f64> {
    let (e, _) = unit(q[2]);
    Vector2::new(q[0], q[1]) + leg(q, p) * e
}

/// Jacobian of the foot position with respect to `q`.
pub fn foot_jacobian(q: &Vector4<f64>, p: &RobotParams) -> Matrix2x4<f64> {
    let (e, ep) = unit(q[2]);
    let l = leg(q, p);
    Matrix2x4::new(1.0, 0.0, l * ep[0], -e[0], 0.0, 1.0, l * ep[1], -e[1])
}

/// `J̇ q̇` for the foot.
pub fn foot_bias(q: &Vector4<f64>, v: &Vector4<f64>, p: &RobotParams) -> Vector2<f64> {
    let (e, ep) = unit(q[2]);
    -2.0 * v[3] * v[2] * ep - leg(q, p) * v[2] * v[2] * e
}

pub fn mass_matrix(q: &Vector4<f64>, p: &RobotParams) -> Matrix4<f64> {
    let j = foot_jacobian(q, p);
    let mut m = p.m_leg * j.transpose() * j;
    m[(0, 0)] += p.m_body;
    m[(1, 1)] += p.m_body;
    m[(2, 2)] += p.i_body;
    m
}

/// Velocity-product terms `H` in `M q̈ + H = Q`.
fn velocity_terms(q: &Vector4<f64>, v: &Vector4<f64>, p: &RobotParams) -> Vector4<f64> {
    p.m_leg * foot_jacobian(q, p).transpose() * foot_bias(q, v, p)
}

/// Actuation applied to the robot over one control interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotInput {
    pub thrust: f64,
    /// Body pitch moment (N m).
    pub moment: f64,
    /// Pitch reference used by the attitude loop; logged only.
    pub pitch_des: f64,
}

impl RobotInput {
    pub fn new(thrust: f64, moment: f64) -> Self {
        Self { thrust, moment, pitch_des: 0.0 }
    }
}

/// Generalized forces from gravity, thrust, attitude moment, spring and an
/// external force `ext` on the body center of mass.
fn generalized_forces(q: &Vector4<f64>, v: &Vector4<f64>, input: &RobotInput, ext: [f64; 3], p: &RobotParams) -> Vector4<f64> {
    let (e, _) = unit(q[2]);
    let j = foot_jacobian(q, p);
    let leg_gravity = j.transpose() * Vector2::new(0.0, -p.m_leg * p.g);
    let spring = p.k * q[3] + p.d * v[3];
    Vector4::new(
        -input.thrust * e[0] + ext[0],
        -input.thrust * e[1] - p.m_body * p.g + ext[2],
        input.moment,
        -spring,
    ) + leg_gravity
}

pub fn aerial_dynamics(q: &Vector4<f64>, v: &Vector4<f64>, input: &RobotInput, ext: [f64; 3], p: &RobotParams) -> Result<Vector4<f64>> {
    let m = mass_matrix(q, p);
    let rhs = generalized_forces(q, v, input, ext, p) - velocity_terms(q, v, p);
    m.cholesky().map(|c| c.solve(&rhs)).ok_or(Error::SingularMassMatrix)
}

/// Constrained accelerations and the ground force on the foot for a foot pinned
/// at `anchor`. Drift is corrected with `c̈ + 2α ċ + α² c = 0`.
pub fn stance_dynamics(
    q: &Vector4<f64>,
    v: &Vector4<f64>,
    input: &RobotInput,
    ext: [f64; 3],
    anchor: &Vector2<f64>,
    alpha: f64,
    p: &RobotParams,
) -> Result<(Vector4<f64>, Vector2<f64>)> {
    let m = mass_matrix(q, p);
    let j = foot_jacobian(q, p);
    let c = foot_position(q, p) - anchor;
    let c_dot = j * v;
    let mut kkt = SMatrix::<f64, 6, 6>::zeros();
    kkt.fixed_view_mut::<4, 4>(0, 0).copy_from(&m);
    kkt.fixed_view_mut::<4, 2>(0, 4).copy_from(&(-j.transpose()));
    kkt.fixed_view_mut::<2, 4>(4, 0).copy_from(&j);
    let top = generalized_forces(q, v, input, ext, p) - velocity_terms(q, v, p);
    let bottom = -foot_bias(q, v, p) - 2.0 * alpha * c_dot - alpha * alpha * c;
    let rhs = SVector::<f64, 6>::from_iterator(top.iter().chain(bottom.iter()).copied());
    let sol = kkt.lu().solve(&rhs).ok_or(Error::RankDeficientKkt)?;
    Ok((sol.fixed_rows::<4>(0).into_owned(), sol.fixed_rows::<2>(4).into_owned()))
}

/// Plastic foot impact: post-impact velocities and the contact impulse.
pub fn impact_map(q: &Vector4<f64>, v: &Vector4<f64>, p: &RobotParams) -> Result<(Vector4<f64>, Vector2<f64>)> {
    let m = mass_matrix(q, p);
    let j = foot_jacobian(q, p);
    let mut kkt = SMatrix::<f64, 6, 6>::zeros();
    kkt.fixed_view_mut::<4, 4>(0, 0).copy_from(&m);
    kkt.fixed_view_mut::<4, 2>(0, 4).copy_from(&(-j.transpose()));
    kkt.fixed_view_mut::<2, 4>(4, 0).copy_from(&j);
    let top = m * v;
    let rhs = SVector::<f64, 6>::from_iterator(top.iter().copied().chain([0.0, 0.0]));
    let sol = kkt.lu().solve(&rhs).ok_or(Error::RankDeficientKkt)?;
    Ok((sol.fixed_rows::<4>(0).into_owned(), sol.fixed_rows::<2>(4).into_owned()))
}

pub fn kinetic_energy(q: &Vector4<f64>, v: &Vector4<f64>, p: &RobotParams) -> f64 {
    0.5 * v.dot(&(mass_matrix(q, p) * v))
}

/// Gravity plus spring potential.
pub fn potential_energy(q: &Vector4<f64>, p: &RobotParams) -> f64 {
    let foot = foot_position(q, p);
    p.g * (p.m_body * q[1] + p.m_leg * foot[1]) + 0.5 * p.k * q[3] * q[3]
}

pub fn com_position(q: &Vector4<f64>, p: &RobotParams) -> Vector2<f64> {
    (p.m_body * Vector2::new(q[0], q[1]) + p.m_leg * foot_position(q, p)) / p.total_mass()
}

pub fn com_velocity(q: &Vector4<f64>, v: &Vector4<f64>, p: &RobotParams) -> Vector2<f64> {
    (p.m_body * Vector2::new(v[0], v[1]) + p.m_leg * foot_jacobian(q, p) * v) / p.total_mass()
}

/// Total thrust range compatible with body moment `moment` (pitch, roll, yaw).
///
/// All allocation rows are orthogonal to `(1, 1, 1, 1)`, so every feasible
/// motor moment vector is the minimum-norm allocation plus a common offset
/// `λ`, and total thrust is `4 k_t λ`. The motor bounds confine `λ` to an
/// interval whose endpoints give the thrust extremes.
pub fn thrust_bounds(moment: [f64; 3], p: &RobotParams) -> Result<(f64, f64)> {
    let a = p.mixer();
    let gram = a * a.transpose();
    let inv = gram.try_inverse().ok_or(Error::InvalidConfig("allocation matrix is rank deficient".into()))?;
    let base: Vector4<f64> = a.transpose() * (inv * Vector3::from(moment));
    let lo = p.tau_min - base.min();
    let hi = p.tau_max - base.max();
    if lo > hi + 1e-12 {
        return Err(Error::InfeasibleMoment);
    }
    let sum_base: f64 = base.sum();
    let f_min = p.k_t * (sum_base + 4.0 * lo);
    let f_max = (p.k_t * (sum_base + 4.0 * hi)).min(p.thrust_cap());
    if f_min > f_max + 1e-12 {
        return Err(Error::InfeasibleMoment);
    }
    Ok((f_min, f_max))
}

/// Largest pitch moment for which the thrust range is non-empty.
pub fn pitch_moment_limit(p: &RobotParams) -> f64 {
    // F_min grows by |M| / arm from its zero-moment value; F_max shrinks likewise.
    let f0 = 4.0 * p.k_t * p.tau_min;
    let by_cap = p.arm * (p.thrust_cap() - f0);
    let by_motors = p.arm * (4.0 * p.k_t * p.tau_max - f0) / 2.0;
    by_cap.min(by_motors).max(0.0)
}

/// Pitch inertia of the flying robot about its combined center of mass.
pub fn flight_pitch_inertia(q: &Vector4<f64>, p: &RobotParams) -> f64 {
    let mu = p.m_body * p.m_leg / p.total_mass();
    p.i_body + mu * leg(q, p).powi(2)
}

/// Critically damped PD pitch loop with acceleration feedforward, saturated
/// at the mixer moment limit.
pub fn attitude_moment(q: &Vector4<f64>, v: &Vector4<f64>, pitch_des: f64, rate_des: f64, acc_des: f64, p: &RobotParams) -> f64 {
    let w = 2.0 * std::f64::consts::PI * p.attitude_bandwidth_hz;
    let inertia = flight_pitch_inertia(q, p);
    let m = inertia * (acc_des + w * w * (pitch_des - q[2]) + 2.0 * w * (rate_des - v[2]));
    let lim = pitch_moment_limit(p);
    m.clamp(-lim, lim)
}

#[derive(Debug, Clone)]
pub struct RobotModel {
    pub params: RobotParams,
    pub env: Environment,
    /// Constraint stabilization rate (1/s).
    pub baumgarte: f64,
}

fn vec4(x: &[f64]) -> Vector4<f64> {
    Vector4::new(x[0], x[1], x[2], x[3])
}

impl RobotModel {
    pub fn new(params: RobotParams) -> Self {
        Self { params, env: Environment::default(), baumgarte: 100.0 }
    }

    pub fn with_environment(params: RobotParams, env: Environment) -> Self {
        Self { params, env, baumgarte: 100.0 }
    }

    /// Flight state at rest relative to the body with the center of mass at
    /// `(x, z)` moving forward at `xdot`.
    pub fn apex_state(&self, x: f64, z: f64, xdot: f64, pitch: f64) -> HybridState {
        let mut state = HybridState::aerial(0.0, vec![x, z, pitch, 0.0], vec![xdot, 0.0, 0.0, 0.0]);
        let (c, _) = self.com(&state);
        state.q[0] += x - c[0];
        state.q[1] += z - c[1];
        state
    }

    fn anchor(state: &HybridState) -> Result<Vector2<f64>> {
        state
            .anchor
            .as_ref()
            .map(|a| Vector2::new(a[0], a[1]))
            .ok_or_else(|| Error::InvalidInitialState("stance state without a foot anchor".into()))
    }

    /// Accelerations and contact force for the state's phase.
    pub fn dynamics(&self, t: f64, state: &HybridState, input: &RobotInput) -> Result<(Vector4<f64>, Vector2<f64>)> {
        let q = vec4(&state.q);
        let v = vec4(&state.v);
        let ext = self.env.external_force(t);
        match state.phase {
            Phase::Aerial => Ok((aerial_dynamics(&q, &v, input, ext, &self.params)?, Vector2::zeros())),
            Phase::Stance => stance_dynamics(&q, &v, input, ext, &Self::anchor(state)?, self.baumgarte, &self.params),
        }
    }

    pub fn com(&self, state: &HybridState) -> (Vector2<f64>, Vector2<f64>) {
        let q = vec4(&state.q);
        let v = vec4(&state.v);
        (com_position(&q, &self.params), com_velocity(&q, &v, &self.params))
    }

    pub fn foot(&self, state: &HybridState) -> Vector2<f64> {
        foot_position(&vec4(&state.q), &self.params)
    }

    pub fn kinetic_energy(&self, state: &HybridState) -> f64 {
        kinetic_energy(&vec4(&state.q), &vec4(&state.v), &self.params)
    }

    pub fn mechanical_energy(&self, state: &HybridState) -> f64 {
        self.kinetic_energy(state) + potential_energy(&vec4(&state.q), &self.params)
    }
}

impl HybridModel for RobotModel {
    type Input = RobotInput;

    fn dof(&self) -> usize {
        4
    }

    fn acceleration(&self, t: f64, state: &HybridState, input: &RobotInput, out: &mut [f64]) -> Result<()> {
        let (acc, _) = self.dynamics(t, state, input)?;
        out.copy_from_slice(acc.as_slice());
        Ok(())
    }

    fn guard(&self, kind: EventKind, t: f64, state: &HybridState, input: &RobotInput) -> Option<f64> {
        match (state.phase, kind) {
            (Phase::Aerial, EventKind::Touchdown) => {
                let foot = self.foot(state);
                Some(foot[1] - self.env.terrain.height(foot[0]))
            }
            (Phase::Aerial, EventKind::Apex) => Some(self.com(state).1[1]),
            (Phase::Stance, EventKind::Liftoff) => self.dynamics(t, state, input).ok().map(|(_, f)| f[1]),
            _ => None,
        }
    }

    fn reset(&self, kind: EventKind, state: &HybridState, _input: &RobotInput) -> Result<HybridState> {
        let mut next = state.clone();
        match kind {
            EventKind::Touchdown => {
                let q = vec4(&state.q);
                let (v_plus, _) = impact_map(&q, &vec4(&state.v), &self.params)?;
                next.v.copy_from_slice(v_plus.as_slice());
                let foot = foot_position(&q, &self.params);
                next.anchor = Some(vec![foot[0], foot[1]]);
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

    fn ground_reaction(&self, t: f64, state: &HybridState, input: &RobotInput) -> [f64; 3] {
        match state.phase {
            Phase::Aerial => [0.0; 3],
            Phase::Stance => self.dynamics(t, state, input).map_or([f64::NAN; 3], |(_, f)| [f[0], 0.0, f[1]]),
        }
    }

    fn input_log(&self, _t: f64, input: &RobotInput) -> Vec<f64> {
        vec![input.thrust, input.pitch_des, input.moment]
    }

    fn check_initial(&self, state: &HybridState, _input: &RobotInput) -> Result<()> {
        match state.phase {
            Phase::Aerial => {
                let foot = self.foot(state);
                let foot_vz = (foot_jacobian(&vec4(&state.q), &self.params) * vec4(&state.v))[1];
                if foot[1] - self.env.terrain.height(foot[0]) < -1e-9 && foot_vz <= 0.0 {
                    return Err(Error::InvalidInitialState("foot below ground while descending".into()));
                }
            }
            Phase::Stance => {
                let residual = (self.foot(state) - Self::anchor(state)?).norm();
                if residual > 1e-6 {
                    return Err(Error::InvalidInitialState(format!("foot constraint residual {residual:e} m")));
                }
            }
        }
        Ok(())
    }

    fn validate(&self, state: &HybridState) -> Result<()> {
        let pitch = state.q[2];
        if pitch.abs() > std::f64::consts::FRAC_PI_2 {
            return Err(Error::FellOver { t: state.t, pitch });
        }
        if state.q[3] >= self.params.travel {
            let r = self.params.leg_length() - state.q[3];
            return Err(Error::LegFullyCompressed { r, r_min: self.params.leg_length() - self.params.travel });
        }
        if state.q[1] <= self.env.terrain.height(state.q[0]) {
            return Err(Error::GroundPenetration { t: state.t });
        }
        Ok(())
    }

    fn breakpoints(&self) -> &[f64] {
        self.env.breakpoints()
    }
}

impl Observable for RobotModel {
    fn observe(&self, state: &HybridState) -> Observation {
        let (c, cv) = self.com(state);
        Observation {
            x: c[0],
            y: 0.0,
            z: c[1],
            xdot: cv[0],
            ydot: 0.0,
            zdot: cv[1],
            pitch: state.q[2],
            spring_deflection: state.q[3],
        }
    }
}
