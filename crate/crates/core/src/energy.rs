//! Vertical energy shaping with a control Lyapunov function.
//!
//! The output is the energy error `η = E − E_d` with
//! `E = m g_e z + m ż² / 2` and equivalent gravity `g_e = g − F_min / m`.
//! With thrust `F` acting at angle `θ` from vertical, flight dynamics give
//!
//! ```text
//! η' = ż (F cos θ − F_min) = f_η + g_η F,   f_η = −ż F_min,   g_η = ż cos θ
//! ```
//!
//! so the floor thrust `F_min` cancels exactly when `F = F_min` on a vertical
//! leg. The Lyapunov function is `V = P η²` with `P = Q / (−2 K_p)`, and the
//! decrease condition `V' ≤ −γ V` is the affine constraint `A F ≤ b` with
//! `A = 2 P η g_η` and `b = −γ P η² − 2 P η f_η`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::DenseQp;
use crate::slip::vertical_energy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpVariant {
    /// `min p (F − F_prev)² + δ²` s.t. `A F − δ ≤ b`.
    InequalityQp,
    /// `min p (F − F_prev)² + δ²` s.t. `A F − δ = b`.
    RelaxedEqualityQp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyControllerConfig {
    /// Desired energy level (J).
    #[serde(rename = "E_d")]
    pub e_d: f64,
    #[serde(rename = "Kp", default = "default_kp")]
    pub kp: f64,
    #[serde(rename = "Q", default = "default_q")]
    pub q: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub p: f64,
    #[serde(default = "default_variant")]
    pub variant: QpVariant,
    #[serde(rename = "Ft_min")]
    pub ft_min: f64,
    #[serde(rename = "Ft_max")]
    pub ft_max: f64,
}

fn default_kp() -> f64 {
    -5.0
}

fn default_q() -> f64 {
    1.0
}

pub const DEFAULT_GAMMA: f64 = 50.0;

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_variant() -> QpVariant {
    QpVariant::RelaxedEqualityQp
}

impl EnergyControllerConfig {
    pub fn new(e_d: f64, ft_min: f64, ft_max: f64) -> Self {
        Self { e_d, kp: -5.0, q: 1.0, gamma: DEFAULT_GAMMA, p: 0.0, variant: QpVariant::RelaxedEqualityQp, ft_min, ft_max }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.kp < 0.0, "Kp must be negative"),
            (self.q > 0.0, "Q must be positive"),
            (self.gamma > 0.0, "gamma must be positive"),
            (self.p >= 0.0, "p must be non-negative"),
            (self.ft_min >= 0.0, "Ft_min must be non-negative"),
            (self.ft_min < self.ft_max, "Ft_min must be below Ft_max"),
            (self.e_d.is_finite(), "E_d must be finite"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::InvalidConfig(format!("ctrl: {msg}"))),
            None => Ok(()),
        }
    }

    /// Lyapunov weight solving `2 K_p P = −Q`.
    pub fn lyapunov_weight(&self) -> f64 {
        self.q / (-2.0 * self.kp)
    }

    pub fn clamp(&self, f: f64) -> f64 {
        f.clamp(self.ft_min, self.ft_max)
    }
}

pub fn equivalent_gravity(ft_min: f64, m: f64, g: f64) -> Result<f64> {
    if ft_min >= m * g {
        return Err(Error::NonPositiveEquivalentGravity { ft_min, mass: m });
    }
    if ft_min < 0.0 {
        return Err(Error::InvalidConfig(format!("negative minimum thrust {ft_min}")));
    }
    Ok(g - ft_min / m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClfTerms {
    pub a: f64,
    pub b: f64,
    pub v: f64,
    /// `−γ V`.
    pub vdot_target: f64,
    /// Drift part `2 P η f_η` of `V'`.
    pub vdot_drift: f64,
}

impl ClfTerms {
    /// `V'` produced by thrust `f`.
    pub fn vdot(&self, f: f64) -> f64 {
        self.vdot_drift + self.a * f
    }
}

/// Affine CLF constraint for energy error `eta` at vertical speed `zdot` with
/// the thrust tilted by `cos_theta`.
pub fn clf_terms(eta: f64, zdot: f64, cos_theta: f64, config: &EnergyControllerConfig) -> ClfTerms {
    let p = config.lyapunov_weight();
    let g_eta = zdot * cos_theta;
    let f_eta = -zdot * config.ft_min;
    let v = p * eta * eta;
    let vdot_drift = 2.0 * p * eta * f_eta;
    ClfTerms { a: 2.0 * p * eta * g_eta, b: -config.gamma * v - vdot_drift, v, vdot_target: -config.gamma * v, vdot_drift }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundActive {
    None,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSolution {
    pub thrust: f64,
    pub delta: f64,
    pub active: BoundActive,
    pub objective: f64,
}

fn bound_state(f: f64, config: &EnergyControllerConfig) -> BoundActive {
    if f <= config.ft_min {
        BoundActive::Lower
    } else if f >= config.ft_max {
        BoundActive::Upper
    } else {
        BoundActive::None
    }
}

/// Smallest relaxation compatible with thrust `f` for the given variant.
pub fn implied_delta(f: f64, terms: &ClfTerms, variant: QpVariant) -> f64 {
    let excess = terms.a * f - terms.b;
    match variant {
        QpVariant::RelaxedEqualityQp => excess,
        QpVariant::InequalityQp => excess.max(0.0),
    }
}

pub fn qp_objective(f: f64, delta: f64, f_prev: f64, p: f64) -> f64 {
    p * (f - f_prev).powi(2) + delta * delta
}

/// Solves the energy QP in closed form. Both variants reduce to a convex
/// piecewise-quadratic problem in thrust alone once `δ` is eliminated, so the
/// optimum is one of a handful of candidate points.
pub fn solve_energy_qp(terms: &ClfTerms, f_prev: f64, config: &EnergyControllerConfig) -> Result<QpSolution> {
    config.validate()?;
    let f_prev = config.clamp(f_prev);
    let (a, b, p) = (terms.a, terms.b, config.p);
    let finish = |f: f64| {
        let delta = implied_delta(f, terms, config.variant);
        QpSolution { thrust: f, delta, active: bound_state(f, config), objective: qp_objective(f, delta, f_prev, p) }
    };
    let thrust = match config.variant {
        QpVariant::RelaxedEqualityQp => {
            let denom = p + a * a;
            if denom == 0.0 {
                f_prev
            } else {
                config.clamp((p * f_prev + a * b) / denom)
            }
        }
        QpVariant::InequalityQp => {
            if a * f_prev <= b {
                f_prev
            } else {
                let mut candidates = vec![config.ft_min, config.ft_max];
                if p + a * a > 0.0 {
                    candidates.push(config.clamp((p * f_prev + a * b) / (p + a * a)));
                }
                if a != 0.0 {
                    candidates.push(config.clamp(b / a));
                }
                let cost = |f: f64| qp_objective(f, implied_delta(f, terms, config.variant), f_prev, p);
                candidates.into_iter().fold(f64::NAN, |best, f| if best.is_nan() || cost(f) < cost(best) { f } else { best })
            }
        }
    };
    Ok(finish(thrust))
}

/// Solves the same problem over `(F, δ)` with the generic active-set solver.
pub fn solve_energy_qp_generic(terms: &ClfTerms, f_prev: f64, config: &EnergyControllerConfig) -> Result<QpSolution> {
    config.validate()?;
    let f_prev = config.clamp(f_prev);
    let p = config.p;
    let hessian = DMatrix::from_row_slice(2, 2, &[2.0 * p, 0.0, 0.0, 2.0]);
    let linear = DVector::from_row_slice(&[-2.0 * p * f_prev, 0.0]);
    let bounds = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
    let bounds_rhs = DVector::from_row_slice(&[config.ft_max, -config.ft_min]);
    let clf_row = DMatrix::from_row_slice(1, 2, &[terms.a, -1.0]);
    let clf_rhs = DVector::from_row_slice(&[terms.b]);
    let qp = match config.variant {
        QpVariant::RelaxedEqualityQp => DenseQp { hessian, linear, eq_matrix: clf_row, eq_rhs: clf_rhs, ineq_matrix: bounds, ineq_rhs: bounds_rhs },
        QpVariant::InequalityQp => DenseQp {
            hessian,
            linear,
            eq_matrix: DMatrix::zeros(0, 2),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 0.0, terms.a, -1.0]),
            ineq_rhs: DVector::from_row_slice(&[config.ft_max, -config.ft_min, terms.b]),
        },
    };
    let sol = qp.solve(1e-12)?;
    let thrust = config.clamp(sol.x[0]);
    let delta = sol.x[1];
    Ok(QpSolution {
        thrust,
        delta,
        active: bound_state(thrust, config),
        objective: qp_objective(thrust, delta, f_prev, p),
    })
}

/// Energy-shaping thrust law for one plane of vertical motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyController {
    pub config: EnergyControllerConfig,
    pub mass: f64,
    pub g_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyStep {
    pub thrust: f64,
    pub eta: f64,
    pub terms: ClfTerms,
    pub solution: QpSolution,
}

impl EnergyController {
    pub fn new(config: EnergyControllerConfig, mass: f64, g: f64) -> Result<Self> {
        config.validate()?;
        let g_e = equivalent_gravity(config.ft_min, mass, g)?;
        Ok(Self { config, mass, g_e })
    }

    pub fn energy(&self, z: f64, zdot: f64) -> f64 {
        vertical_energy(z, zdot, self.mass, self.g_e)
    }

    /// Apex height at which the energy error vanishes.
    pub fn target_apex(&self) -> f64 {
        self.config.e_d / (self.mass * self.g_e)
    }

    /// Flight-phase thrust for COM height `z`, vertical speed `zdot` and thrust tilt.
    pub fn aerial_step(&self, z: f64, zdot: f64, cos_theta: f64, f_prev: f64) -> Result<EnergyStep> {
        let eta = self.energy(z, zdot) - self.config.e_d;
        let terms = clf_terms(eta, zdot, cos_theta, &self.config);
        let solution = solve_energy_qp(&terms, f_prev, &self.config)?;
        Ok(EnergyStep { thrust: solution.thrust, eta, terms, solution })
    }

    /// Stance-phase thrust: the floor value.
    pub fn stance_thrust(&self) -> f64 {
        self.config.ft_min
    }
}
