use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("adaptive step shrank below {min_step:e} s at t = {t}")]
    StepSizeUnderflow { t: f64, min_step: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("robot fell over: pitch {pitch:.3} rad at t = {t:.4} s")]
    FellOver { t: f64, pitch: f64 },
    #[error("leg fully compressed: r = {r:.4} m <= r_min = {r_min:.4} m")]
    LegFullyCompressed { r: f64, r_min: f64 },
    #[error("body penetrated the ground at t = {t:.4} s")]
    GroundPenetration { t: f64 },
    #[error("mass matrix is singular")]
    SingularMassMatrix,
    #[error("constrained dynamics block matrix is rank deficient")]
    RankDeficientKkt,
    #[error("requested body moment is infeasible within propeller moment bounds")]
    InfeasibleMoment,
    #[error("minimum thrust {ft_min} N leaves no effective gravity for mass {mass} kg")]
    NonPositiveEquivalentGravity { ft_min: f64, mass: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no apex reached: {0}")]
    NoApexReached(String),
    #[error("no sign change of the fixed-point residual in [{lo}, {hi}] rad")]
    NoBracket { lo: f64, hi: f64 },
    #[error("root search did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("finite-difference Jacobian did not settle: last estimates {last:?}, jitter {jitter:e}")]
    NumericalNoise { last: [f64; 2], jitter: f64 },
    #[error("step-to-step map is uncontrollable: |B| = {b:e}")]
    UncontrollableMap { b: f64 },
    #[error("hop never lifts off")]
    NoLiftoff,
    #[error("gait file does not match the loaded parameters (file {file}, params {params})")]
    ParamsMismatch { file: String, params: String },
    #[error("gait file: {0}")]
    GaitFile(String),
}
