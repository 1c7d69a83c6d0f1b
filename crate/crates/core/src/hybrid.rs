//! Phase-tagged hybrid states and an event-driven explicit integrator.
//!
//! Continuous flows are advanced with an adaptive Dormand–Prince 5(4) pair.
//! The controller is sampled zero-order-hold on a clock that restarts at every
//! event, so each phase sees control samples aligned with its own start.
//! Guard crossings (positive to non-positive) are bracketed on the accepted
//! step and localized by bisection followed by secant refinement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Aerial,
    Stance,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Aerial => "aerial",
            Phase::Stance => "stance",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub phase: Phase,
    pub t: f64,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    /// Pinned foot location while in stance.
    pub anchor: Option<Vec<f64>>,
}

impl HybridState {
    pub fn aerial(t: f64, q: Vec<f64>, v: Vec<f64>) -> Self {
        Self { phase: Phase::Aerial, t, q, v, anchor: None }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    fn pack(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.q.len());
        y.extend_from_slice(&self.q);
        y.extend_from_slice(&self.v);
        y
    }

    fn unpack(&mut self, t: f64, y: &[f64]) {
        let n = self.q.len();
        self.t = t;
        self.q.copy_from_slice(&y[..n]);
        self.v.copy_from_slice(&y[n..]);
    }

    fn is_finite(&self) -> bool {
        self.q.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

/// Event kinds, declared in resolution priority order for simultaneous crossings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Touchdown,
    Liftoff,
    Apex,
}

impl EventKind {
    pub const ALL: [EventKind; 3] = [EventKind::Touchdown, EventKind::Liftoff, EventKind::Apex];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Touchdown => "touchdown",
            EventKind::Liftoff => "liftoff",
            EventKind::Apex => "apex",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    pub t: f64,
    pub state_before: HybridState,
    pub state_after: HybridState,
    /// Guard value at the localized event state.
    pub guard_residual: f64,
    /// Other guards that crossed within the event tolerance and lost on priority.
    pub simultaneous: Vec<EventKind>,
}

/// Per-sample controller diagnostics logged next to the trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub eta: f64,
    pub lyapunov: f64,
    pub delta: f64,
    pub bound_active: bool,
}

#[derive(Debug, Clone)]
pub struct Command<I> {
    pub input: I,
    pub diag: Diagnostics,
}

impl<I> Command<I> {
    pub fn new(input: I) -> Self {
        Self { input, diag: Diagnostics::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: HybridState,
    pub input: Vec<f64>,
    /// Ground reaction force on the foot (x, y, z); zero in flight.
    pub grf: [f64; 3],
    pub diag: Diagnostics,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
}

impl Trajectory {
    /// Appends another segment. When its first sample repeats the current final
    /// sample time, the new sample (which carries the fresh command) wins.
    pub fn append(&mut self, other: Trajectory) {
        if let (Some(last), Some(first)) = (self.samples.last(), other.samples.first()) {
            if first.t <= last.t {
                self.samples.pop();
            }
        }
        self.samples.extend(other.samples);
        self.events.extend(other.events);
    }

    pub fn apex_events(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind == EventKind::Apex)
    }

    pub fn final_state(&self) -> Option<&HybridState> {
        self.samples.last().map(|s| &s.state)
    }
}

/// A hybrid model whose generalized velocities are the time derivatives of its
/// generalized positions.
pub trait HybridModel {
    type Input: Clone;

    fn dof(&self) -> usize;

    /// Generalized accelerations for the state's current phase.
    fn acceleration(&self, t: f64, state: &HybridState, input: &Self::Input, out: &mut [f64]) -> Result<()>;

    /// Guard function for `kind` in the state's phase, or `None` when the guard
    /// is not armed in that phase. An event fires when it goes from positive to
    /// non-positive.
    fn guard(&self, kind: EventKind, t: f64, state: &HybridState, input: &Self::Input) -> Option<f64>;

    fn reset(&self, kind: EventKind, state: &HybridState, input: &Self::Input) -> Result<HybridState>;

    fn ground_reaction(&self, t: f64, state: &HybridState, input: &Self::Input) -> [f64; 3];

    /// Flattened input used for logging.
    fn input_log(&self, t: f64, input: &Self::Input) -> Vec<f64>;

    /// Rejects states that are already past a guard they should have triggered.
    fn check_initial(&self, _state: &HybridState, _input: &Self::Input) -> Result<()> {
        Ok(())
    }

    /// Checked on every accepted step.
    fn validate(&self, _state: &HybridState) -> Result<()> {
        Ok(())
    }

    /// Times at which the flow is discontinuous (e.g. disturbance windows).
    fn breakpoints(&self) -> &[f64] {
        &[]
    }
}

pub trait Controller<M: HybridModel> {
    fn control(&mut self, model: &M, state: &HybridState) -> Result<Command<M::Input>>;

    fn on_event(&mut self, _model: &M, _event: &Event) {}
}

impl<M, F> Controller<M> for F
where
    M: HybridModel,
    F: FnMut(&M, &HybridState) -> M::Input,
{
    fn control(&mut self, model: &M, state: &HybridState) -> Result<Command<M::Input>> {
        Ok(Command::new(self(model, state)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub event_tol: f64,
    pub control_rate_hz: f64,
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-7,
            event_tol: 1e-9,
            control_rate_hz: 200.0,
            min_step: 1e-12,
            max_step: 0.01,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.abs_tol > 0.0
            && self.rel_tol >= 0.0
            && self.event_tol > 0.0
            && self.control_rate_hz > 0.0
            && self.min_step > 0.0
            && self.max_step > self.min_step;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("integrator options out of range: {self:?}")))
        }
    }

    /// Same options with tolerances scaled by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            event_tol: self.event_tol * factor,
            ..*self
        }
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step of signed size `h`. Returns the fifth-order
/// solution and the scaled max-norm error estimate.
pub fn dopri_step<F>(f: &mut F, t: f64, y: &[f64], h: f64, abs_tol: f64, rel_tol: f64) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    for s in 0..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(s) {
                acc += A[s][j] * kj[i];
            }
            stage[i] = y[i] + h * acc;
        }
        f(t + C[s] * h, &stage, &mut k[s])?;
    }
    let mut y5 = vec![0.0; n];
    let mut err: f64 = 0.0;
    for i in 0..n {
        let mut d5 = 0.0;
        let mut d4 = 0.0;
        for s in 0..7 {
            d5 += B5[s] * k[s][i];
            d4 += B4[s] * k[s][i];
        }
        y5[i] = y[i] + h * d5;
        let scale = abs_tol + rel_tol * y[i].abs().max(y5[i].abs());
        err = f64::max(err, (h * (d5 - d4) / scale).abs());
    }
    Ok((y5, err))
}

fn next_step_size(h: f64, err: f64) -> f64 {
    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
    h * factor
}

/// Integrates a plain ODE from `t0` to `t1` (either direction) without events.
pub fn integrate_ode<F>(mut f: F, t0: f64, y0: &[f64], t1: f64, opts: &IntegratorOptions) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = (opts.max_step * 0.1).min((t1 - t0).abs());
    while (t1 - t) * dir > 0.0 {
        let remaining = (t1 - t).abs();
        let step = h.min(remaining).min(opts.max_step);
        let (y_new, err) = dopri_step(&mut f, t, &y, dir * step, opts.abs_tol, opts.rel_tol)?;
        if err <= 1.0 {
            t = if step == remaining { t1 } else { t + dir * step };
            y = y_new;
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteState { t });
            }
        } else if step < opts.min_step {
            return Err(Error::StepSizeUnderflow { t, min_step: opts.min_step });
        }
        h = next_step_size(step, err);
    }
    Ok(y)
}

struct Flow<'a, M: HybridModel> {
    model: &'a M,
    input: &'a M::Input,
    scratch: HybridState,
}

impl<M: HybridModel> Flow<'_, M> {
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.scratch.q.len();
        self.scratch.unpack(t, y);
        dy[..n].copy_from_slice(&y[n..]);
        self.model.acceleration(t, &self.scratch, self.input, &mut dy[n..])
    }

    fn state_at(&mut self, t: f64, y: &[f64]) -> HybridState {
        let mut s = self.scratch.clone();
        s.unpack(t, y);
        s
    }
}

fn guard_values<M: HybridModel>(
    model: &M,
    guards: &[EventKind],
    state: &HybridState,
    input: &M::Input,
) -> Vec<Option<f64>> {
    guards.iter().map(|&k| model.guard(k, state.t, state, input)).collect()
}

/// Advances `state` until the first guard crossing among `guards`, or `t_max`.
///
/// Samples are logged at the initial state, at every control instant and at
/// the end. When an event fires the last sample is the post-reset state.
pub fn integrate_until_event<M, C>(
    model: &M,
    state: &HybridState,
    controller: &mut C,
    guards: &[EventKind],
    t_max: f64,
    opts: &IntegratorOptions,
) -> Result<(Trajectory, Option<Event>)>
where
    M: HybridModel,
    C: Controller<M> + ?Sized,
{
    if t_max <= state.t {
        return Err(Error::InvalidArgument(format!("t_max {t_max} must exceed state time {}", state.t)));
    }
    if state.q.len() != model.dof() || state.v.len() != model.dof() {
        return Err(Error::InvalidInitialState(format!(
            "expected {} coordinates, got q {} / v {}",
            model.dof(),
            state.q.len(),
            state.v.len()
        )));
    }
    if !state.is_finite() {
        return Err(Error::NonFiniteState { t: state.t });
    }

    let mut guards: Vec<EventKind> = guards.to_vec();
    guards.sort();
    guards.dedup();

    let dt_ctrl = 1.0 / opts.control_rate_hz;
    let t0 = state.t;
    let mut sample_index: u64 = 0;
    let mut cmd = controller.control(model, state)?;
    model.check_initial(state, &cmd.input)?;

    let mut traj = Trajectory::default();
    let log = |s: &HybridState, cmd: &Command<M::Input>| Sample {
        t: s.t,
        state: s.clone(),
        input: model.input_log(s.t, &cmd.input),
        grf: model.ground_reaction(s.t, s, &cmd.input),
        diag: cmd.diag,
    };
    traj.samples.push(log(state, &cmd));

    let mut current = state.clone();
    let mut y = current.pack();
    let mut g_prev = guard_values(model, &guards, &current, &cmd.input);
    let mut h = (0.1 * dt_ctrl).min(opts.max_step);
    let breakpoints: Vec<f64> = model.breakpoints().iter().copied().filter(|&b| b > t0).collect();

    loop {
        let t = current.t;
        if t >= t_max {
            if traj.samples.last().is_some_and(|s| s.t < t) {
                traj.samples.push(log(&current, &cmd));
            }
            return Ok((traj, None));
        }
        let next_sample = t0 + (sample_index + 1) as f64 * dt_ctrl;
        let next_break = breakpoints.iter().copied().find(|&b| b > t + 1e-15).unwrap_or(f64::INFINITY);
        let t_end = next_sample.min(t_max).min(next_break);
        let remaining = t_end - t;
        let step = h.min(remaining).min(opts.max_step);

        let (y_new, err) = {
            let mut flow = Flow { model, input: &cmd.input, scratch: current.clone() };
            dopri_step(&mut |tt, yy: &[f64], dy: &mut [f64]| flow.rhs(tt, yy, dy), t, &y, step, opts.abs_tol, opts.rel_tol)?
        };
        if err > 1.0 {
            if step < opts.min_step && step < remaining {
                return Err(Error::StepSizeUnderflow { t, min_step: opts.min_step });
            }
            h = next_step_size(step, err);
            continue;
        }

        let t_new = if step >= remaining { t_end } else { t + step };
        let mut candidate = current.clone();
        candidate.unpack(t_new, &y_new);
        if !candidate.is_finite() {
            return Err(Error::NonFiniteState { t: t_new });
        }
        let g_new = guard_values(model, &guards, &candidate, &cmd.input);

        let crossed: Vec<usize> = (0..guards.len())
            .filter(|&i| matches!((g_prev[i], g_new[i]), (Some(a), Some(b)) if a > 0.0 && b <= 0.0))
            .collect();

        if !crossed.is_empty() {
            let mut flow = Flow { model, input: &cmd.input, scratch: current.clone() };
            let mut best: Option<(f64, usize, Vec<f64>, f64)> = None;
            let mut times = Vec::with_capacity(crossed.len());
            for &i in &crossed {
                let (tau, y_ev, g_ev) = localize(&mut flow, guards[i], t, &y, t_new - t, opts)?;
                times.push((i, tau));
                let better = match &best {
                    None => true,
                    Some((bt, bi, _, _)) => tau < *bt - opts.event_tol || ((tau - *bt).abs() <= opts.event_tol && i < *bi),
                };
                if better {
                    best = Some((tau, i, y_ev, g_ev));
                }
            }
            let (tau, idx, y_ev, g_ev) = best.expect("at least one crossing");
            let simultaneous: Vec<EventKind> = times
                .iter()
                .filter(|&&(i, ti)| i != idx && (ti - tau).abs() <= opts.event_tol)
                .map(|&(i, _)| guards[i])
                .collect();
            let before = flow.state_at(t + tau, &y_ev);
            model.validate(&before)?;
            let after = model.reset(guards[idx], &before, &cmd.input)?;
            let event = Event {
                kind: guards[idx],
                t: before.t,
                state_before: before,
                state_after: after.clone(),
                guard_residual: g_ev,
                simultaneous,
            };
            traj.samples.push(log(&after, &cmd));
            traj.events.push(event.clone());
            return Ok((traj, Some(event)));
        }

        model.validate(&candidate)?;
        current = candidate;
        y = y_new;
        g_prev = g_new;
        h = if step >= remaining { h.max(step) } else { next_step_size(step, err) };

        if (current.t - next_sample).abs() <= 1e-12 || current.t >= next_sample {
            sample_index += 1;
            cmd = controller.control(model, &current)?;
            let g_cmd = guard_values(model, &guards, &current, &cmd.input);
            // An input change may itself move a guard across zero.
            let jumped = (0..guards.len())
                .find(|&i| matches!((g_prev[i], g_cmd[i]), (Some(a), Some(b)) if a > 0.0 && b <= 0.0));
            if let Some(i) = jumped {
                let after = model.reset(guards[i], &current, &cmd.input)?;
                let event = Event {
                    kind: guards[i],
                    t: current.t,
                    state_before: current.clone(),
                    state_after: after.clone(),
                    guard_residual: g_cmd[i].unwrap_or(0.0),
                    simultaneous: Vec::new(),
                };
                traj.samples.push(log(&after, &cmd));
                traj.events.push(event.clone());
                return Ok((traj, Some(event)));
            }
            g_prev = g_cmd;
            traj.samples.push(log(&current, &cmd));
        }
    }
}

/// Brackets the guard root inside `[0, h]` (offsets from `t`) and shrinks the
/// bracket to `event_tol`, returning the crossed end of the bracket.
fn localize<M: HybridModel>(
    flow: &mut Flow<'_, M>,
    kind: EventKind,
    t: f64,
    y: &[f64],
    h: f64,
    opts: &IntegratorOptions,
) -> Result<(f64, Vec<f64>, f64)> {
    let model = flow.model;
    let input = flow.input;
    let eval = |flow: &mut Flow<'_, M>, tau: f64| -> Result<(Vec<f64>, f64)> {
        let (y_tau, _) = dopri_step(&mut |tt, yy: &[f64], dy: &mut [f64]| flow.rhs(tt, yy, dy), t, y, tau, opts.abs_tol, opts.rel_tol)?;
        let s = flow.state_at(t + tau, &y_tau);
        let g = model.guard(kind, s.t, &s, input).unwrap_or(0.0);
        Ok((y_tau, g))
    };

    let mut lo = 0.0;
    let mut g_lo = {
        let s = flow.state_at(t, y);
        model.guard(kind, t, &s, input).unwrap_or(1.0)
    };
    let (mut y_hi, mut g_hi) = eval(flow, h)?;
    let mut hi = h;

    let mut iterations = 0;
    while hi - lo > opts.event_tol && iterations < 200 {
        iterations += 1;
        let width = hi - lo;
        // Secant once the bracket is small relative to the step; bisection otherwise.
        let mut tau = if width < 1e-3 * h && g_lo > g_hi {
            lo + g_lo * width / (g_lo - g_hi)
        } else {
            0.5 * (lo + hi)
        };
        let margin = 0.25 * opts.event_tol;
        tau = tau.clamp(lo + margin.min(0.5 * width), hi - margin.min(0.5 * width));
        let (y_tau, g_tau) = eval(flow, tau)?;
        if g_tau > 0.0 {
            lo = tau;
            g_lo = g_tau;
        } else {
            hi = tau;
            g_hi = g_tau;
            y_hi = y_tau;
        }
        // A secant landing right next to the root: close the bracket from above.
        if g_hi <= 0.0 && g_hi.abs() < 1e-13 && hi - lo > opts.event_tol {
            let probe = (hi - 0.5 * opts.event_tol).max(lo);
            let (_, g_probe) = eval(flow, probe)?;
            if g_probe > 0.0 {
                lo = probe;
                g_lo = g_probe;
            }
        }
    }
    Ok((hi, y_hi, g_hi))
}

/// Why `simulate_hops` stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// The requested number of apex events was reached.
    Completed,
    /// The time horizon ran out first.
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct HopRun {
    pub trajectory: Trajectory,
    pub termination: Termination,
}

/// Chains `integrate_until_event` across events until `n_steps` apex events.
pub fn simulate_hops<M, C>(
    model: &M,
    state: &HybridState,
    controller: &mut C,
    n_steps: usize,
    t_max: f64,
    opts: &IntegratorOptions,
) -> Result<HopRun>
where
    M: HybridModel,
    C: Controller<M> + ?Sized,
{
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    let mut trajectory = Trajectory::default();
    let mut current = state.clone();
    let mut apexes = 0;
    while current.t < t_max {
        let (segment, event) = integrate_until_event(model, &current, controller, &EventKind::ALL, t_max, opts)?;
        trajectory.append(segment);
        let Some(event) = event else { break };
        controller.on_event(model, &event);
        current = event.state_after.clone();
        if event.kind == EventKind::Apex {
            apexes += 1;
            if apexes >= n_steps {
                return Ok(HopRun { trajectory, termination: Termination::Completed });
            }
        }
    }
    Ok(HopRun { trajectory, termination: Termination::TimeLimit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Vertical point mass under gravity with an optional floor guard.
    struct PointMass {
        g: f64,
    }

    impl HybridModel for PointMass {
        type Input = ();
        fn dof(&self) -> usize {
            1
        }
        fn acceleration(&self, _t: f64, _s: &HybridState, _u: &(), out: &mut [f64]) -> Result<()> {
            out[0] = -self.g;
            Ok(())
        }
        fn guard(&self, kind: EventKind, _t: f64, s: &HybridState, _u: &()) -> Option<f64> {
            match kind {
                EventKind::Apex => Some(s.v[0]),
                EventKind::Touchdown => Some(s.q[0]),
                EventKind::Liftoff => None,
            }
        }
        fn reset(&self, kind: EventKind, s: &HybridState, _u: &()) -> Result<HybridState> {
            let mut out = s.clone();
            if kind == EventKind::Touchdown {
                out.q[0] = 0.0;
                out.v[0] *= -0.5;
            }
            Ok(out)
        }
        fn ground_reaction(&self, _t: f64, _s: &HybridState, _u: &()) -> [f64; 3] {
            [0.0; 3]
        }
        fn input_log(&self, _t: f64, _u: &()) -> Vec<f64> {
            Vec::new()
        }
        fn check_initial(&self, s: &HybridState, _u: &()) -> Result<()> {
            if s.q[0] < 0.0 {
                Err(Error::InvalidInitialState("below the floor".into()))
            } else {
                Ok(())
            }
        }
    }

    fn no_control(_: &PointMass, _: &HybridState) {}

    #[test]
    fn ballistic_apex_is_closed_form() {
        let model = PointMass { g: 9.81 };
        let s0 = HybridState::aerial(0.0, vec![1.0], vec![1.0]);
        let (traj, ev) = integrate_until_event(&model, &s0, &mut no_control, &[EventKind::Apex], 5.0, &IntegratorOptions::default()).unwrap();
        let ev = ev.unwrap();
        assert_eq!(ev.kind, EventKind::Apex);
        assert!((ev.t - 1.0 / 9.81).abs() < 1e-8);
        assert_relative_eq!(ev.state_before.q[0], 1.0 + 1.0 / (2.0 * 9.81), epsilon = 1e-8);
        assert!(traj.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn starting_past_a_guard_is_rejected() {
        let model = PointMass { g: 9.81 };
        let s0 = HybridState::aerial(0.0, vec![-0.1], vec![-1.0]);
        let err = integrate_until_event(&model, &s0, &mut no_control, &[EventKind::Touchdown], 1.0, &IntegratorOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidInitialState(_)));
    }

    #[test]
    fn touchdown_is_localized_after_release() {
        // Released at rest: the apex guard starts at zero and never crosses from above.
        let model = PointMass { g: 9.81 };
        let s0 = HybridState::aerial(0.0, vec![0.5], vec![0.0]);
        let (_, ev) = integrate_until_event(&model, &s0, &mut no_control, &EventKind::ALL, 2.0, &IntegratorOptions::default()).unwrap();
        let ev = ev.unwrap();
        assert_eq!(ev.kind, EventKind::Touchdown);
        assert!((ev.t - (1.0f64 / 9.81).sqrt()).abs() < 1e-8);
        assert!(ev.guard_residual.abs() <= 1e-7);
    }

    #[test]
    fn time_limit_returns_no_event() {
        let model = PointMass { g: 9.81 };
        let s0 = HybridState::aerial(0.0, vec![10.0], vec![0.0]);
        let (traj, ev) = integrate_until_event(&model, &s0, &mut no_control, &[EventKind::Touchdown], 0.3, &IntegratorOptions::default()).unwrap();
        assert!(ev.is_none());
        assert_relative_eq!(traj.samples.last().unwrap().t, 0.3, epsilon = 1e-12);
        assert_relative_eq!(traj.samples.last().unwrap().state.q[0], 10.0 - 0.5 * 9.81 * 0.09, epsilon = 1e-9);
    }

    #[test]
    fn t_max_must_exceed_start() {
        let model = PointMass { g: 9.81 };
        let s0 = HybridState::aerial(1.0, vec![1.0], vec![0.0]);
        assert!(matches!(
            integrate_until_event(&model, &s0, &mut no_control, &[EventKind::Apex], 1.0, &IntegratorOptions::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn bouncing_ball_chains_events() {
        let model = PointMass { g: 9.81 };
        let s0 = HybridState::aerial(0.0, vec![1.0], vec![0.0]);
        let run = simulate_hops(&model, &s0, &mut no_control, 3, 20.0, &IntegratorOptions::default()).unwrap();
        assert_eq!(run.termination, Termination::Completed);
        let apexes: Vec<f64> = run.trajectory.apex_events().map(|e| e.state_before.q[0]).collect();
        assert_eq!(apexes.len(), 3);
        // Restitution 0.5 scales each rebound height by 0.25.
        assert_relative_eq!(apexes[0], 0.25, epsilon = 1e-7);
        assert_relative_eq!(apexes[1], 0.0625, epsilon = 1e-7);
        assert!(run.trajectory.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn zero_steps_is_invalid() {
        let model = PointMass { g: 9.81 };
        let s0 = HybridState::aerial(0.0, vec![1.0], vec![0.0]);
        assert!(matches!(
            simulate_hops(&model, &s0, &mut no_control, 0, 1.0, &IntegratorOptions::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn ode_integrates_backwards() {
        let opts = IntegratorOptions::default();
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        };
        let y1 = integrate_ode(f, 0.0, &[1.0, 0.0], 2.0, &opts).unwrap();
        assert_relative_eq!(y1[0], 2.0f64.cos(), epsilon = 1e-7);
        let y0 = integrate_ode(f, 2.0, &y1, 0.0, &opts).unwrap();
        assert_relative_eq!(y0[0], 1.0, epsilon = 1e-7);
        assert_relative_eq!(y0[1], 0.0, epsilon = 1e-7);
    }
}
