use crate::hybrid::HybridState;

/// Model-independent quantities logged for every sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub xdot: f64,
    pub ydot: f64,
    pub zdot: f64,
    /// Body pitch (rad); zero for point-mass models.
    pub pitch: f64,
    pub spring_deflection: f64,
}

pub trait Observable {
    /// Center-of-mass kinematics and body quantities for logging.
    fn observe(&self, state: &HybridState) -> Observation;
}
