//! Wiring of models and controllers for each scenario kind.

use std::path::Path;

use hopsim_core::control::{ApexRecord, RobotHopController, Slip3dHopController, SlipHopController};
use hopsim_core::design::{
    bang_bang_closed_form, bang_bang_numeric, cot_compare, cot_hopping, design_sweep_stiffness, design_sweep_twr,
    hopping_feasibility_boundary, AchievableApex, BangBangSpec, LocomotionMode, RequiredThrust, StiffnessSweep,
};
use hopsim_core::environment::{Environment, Push, Terrain};
use hopsim_core::hybrid::{simulate_hops, Controller, HopRun, HybridModel, HybridState, IntegratorOptions, Phase, Termination};
use hopsim_core::observe::Observable;
use hopsim_core::robot::{RobotModel, RobotParams};
use hopsim_core::slip::{Slip3dModel, SlipModel};
use hopsim_core::stepping::{apex_state, find_periodic_orbit, Gait, GaitContext};
use hopsim_core::Error;

use crate::config::{Config, ModelKind, ScenarioKind, StartSection};
use crate::error::RunError;
use crate::output::{self, Artifact};
use crate::report::{ApexRow, Check, Report};

pub const STEADY_WINDOW: usize = 20;
pub const VELOCITY_TOLERANCE: f64 = 0.05;
pub const APEX_TOLERANCE: f64 = 0.02;
pub const RECOVERY_TOLERANCE: f64 = 0.1;
pub const DESIGN_AGREEMENT: f64 = 1e-4;
pub const BOUNDARY_WINDOW: (f64, f64) = (0.7, 0.9);

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
}

/// Problems in the inputs rather than in the numerics abort the run.
fn is_input_error(e: &Error) -> bool {
    matches!(e, Error::InvalidConfig(_) | Error::ParamsMismatch { .. } | Error::GaitFile(_))
}

fn absorb(report: &mut Report, e: Error) -> Result<(), RunError> {
    if is_input_error(&e) {
        Err(e.into())
    } else {
        report.failures.push(e.to_string());
        Ok(())
    }
}

/// Gait search context for the configured SLIP at apex height `apex`.
pub fn gait_context(cfg: &Config, apex: f64) -> Result<GaitContext, RunError> {
    let mut ctx = GaitContext::new(cfg.slip_params(), cfg.energy_config()?, apex)?.with_opts(cfg.integrator);
    ctx.leg_limit = cfg.gait.leg_limit;
    ctx.retraction = cfg.gait.retraction;
    Ok(ctx)
}

/// Loads the configured gait file, or searches for the gait.
pub fn resolve_gait(cfg: &Config, ctx: &GaitContext, base_dir: &Path) -> Result<Gait, Error> {
    match &cfg.gait.file {
        Some(file) => {
            let path = base_dir.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::GaitFile(format!("{}: {e}", path.display())))?;
            Gait::from_toml(&text, &ctx.params)
        }
        None => find_periodic_orbit(ctx, cfg.gait.xdot_des),
    }
}

/// Everything one closed-loop hopping run needs.
#[derive(Debug, Clone)]
pub struct HopSetup {
    pub model: ModelKind,
    pub robot: RobotParams,
    pub ctx: GaitContext,
    pub gait: Gait,
    /// Lateral gait of the 3D SLIP.
    pub lateral: Option<Gait>,
    pub env: Environment,
    pub start: StartSection,
    pub hops: usize,
    pub t_max: f64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub apexes: Vec<ApexRecord>,
    pub termination: Termination,
    /// Smallest vertical ground reaction over stance samples; infinite without stance.
    pub min_stance_grf_z: f64,
    pub trajectory_csv: Vec<u8>,
    pub events_csv: Vec<u8>,
    pub run: HopRun,
}

fn finish<M: HybridModel + Observable>(model: &M, run: HopRun, apexes: Vec<ApexRecord>) -> Simulation {
    let min_stance_grf_z =
        run.trajectory.samples.iter().filter(|s| s.state.phase == Phase::Stance).map(|s| s.grf[2]).fold(f64::INFINITY, f64::min);
    Simulation {
        apexes,
        termination: run.termination,
        min_stance_grf_z,
        trajectory_csv: output::trajectory_csv(model, &run),
        events_csv: output::events_csv(model, &run),
        run,
    }
}

fn hop<M, C>(model: &M, state: &HybridState, ctrl: &mut C, setup: &HopSetup) -> Result<HopRun, Error>
where
    M: HybridModel,
    C: Controller<M>,
{
    simulate_hops(model, state, ctrl, setup.hops, setup.t_max, &setup.ctx.opts)
}

pub fn simulate(setup: &HopSetup) -> Result<Simulation, Error> {
    let energy = setup.ctx.energy_controller()?;
    let law = setup.gait.law();
    let retraction = setup.gait.swing.retraction;
    let s = setup.start;
    match setup.model {
        ModelKind::Slip => {
            let model = SlipModel::with_environment(setup.ctx.params, setup.env.clone());
            let state = apex_state(s.z, s.xdot);
            let mut ctrl = SlipHopController::new(energy, law, &state, setup.gait.u_star, None).with_retraction(retraction);
            let run = hop(&model, &state, &mut ctrl, setup)?;
            Ok(finish(&model, run, ctrl.apexes))
        }
        ModelKind::Slip3d => {
            let model = Slip3dModel::with_environment(setup.ctx.params, setup.env.clone());
            let state = HybridState::aerial(0.0, vec![0.0, 0.0, s.z], vec![s.xdot, s.ydot, 0.0]);
            let lateral = setup.lateral.as_ref().unwrap_or(&setup.gait).law();
            let mut ctrl = Slip3dHopController::new(energy, law, lateral, &state).with_retraction(retraction);
            let run = hop(&model, &state, &mut ctrl, setup)?;
            Ok(finish(&model, run, ctrl.apexes))
        }
        ModelKind::PlanarRobot => {
            let model = RobotModel::with_environment(setup.robot, setup.env.clone());
            let state = model.apex_state(0.0, s.z, s.xdot, setup.gait.u_star);
            let mut ctrl = RobotHopController::new(energy, law, &model, &state).with_retraction(retraction);
            let run = hop(&model, &state, &mut ctrl, setup)?;
            Ok(finish(&model, run, ctrl.apexes))
        }
    }
}

fn terrain(cfg: &Config) -> Terrain {
    match &cfg.terrain {
        Some(t) => Terrain::step_up(t.step_location, t.step_height),
        None => Terrain::flat(),
    }
}

/// Hop setup for the configured model, disturbances excluded.
pub fn hop_setup(cfg: &Config, base_dir: &Path) -> Result<HopSetup, RunError> {
    let ctx = gait_context(cfg, cfg.gait.apex_height)?;
    let gait = resolve_gait(cfg, &ctx, base_dir)?;
    let lateral = match cfg.scenario.model {
        ModelKind::Slip3d if cfg.gait.lateral_xdot_des != gait.xdot_star => Some(find_periodic_orbit(&ctx, cfg.gait.lateral_xdot_des)?),
        _ => None,
    };
    let start = cfg.start.unwrap_or(StartSection { z: cfg.gait.apex_height, xdot: cfg.gait.xdot_des, ydot: cfg.gait.lateral_xdot_des });
    Ok(HopSetup {
        model: cfg.scenario.model,
        robot: cfg.robot,
        ctx,
        gait,
        lateral,
        env: Environment::new(terrain(cfg), Vec::new()),
        start,
        hops: cfg.scenario.hops,
        t_max: cfg.scenario.t_max,
    })
}

/// Push start time, taken from the undisturbed run when tied to an apex.
pub fn push_start(setup: &HopSetup, start: Option<f64>, at_apex: Option<usize>) -> Result<f64, RunError> {
    if let Some(t) = start {
        return Ok(t);
    }
    let n = at_apex.unwrap_or(0);
    let reference = simulate(setup)?;
    reference.apexes.get(n).map(|a| a.t).ok_or_else(|| RunError::config("push.at_apex", format!("the undisturbed run has only {} apexes", reference.apexes.len())))
}

/// Worst tracking error over the last `window` apexes.
pub fn steady_errors(apexes: &[ApexRecord], xdot: f64, apex: f64, window: usize) -> (f64, f64, f64) {
    let tail = &apexes[apexes.len().saturating_sub(window)..];
    let v = tail.iter().map(|a| (a.xdot - xdot).abs()).fold(0.0, f64::max);
    let z = tail.iter().map(|a| (a.z - apex).abs() / apex).fold(0.0, f64::max);
    let y = tail.iter().map(|a| a.ydot.abs()).fold(0.0, f64::max);
    (v, z, y)
}

/// Index (from 1) of the first apex after `after` from which every later
/// apex velocity stays within `tol` of `target`.
pub fn recovery_apexes(apexes: &[ApexRecord], after: f64, target: f64, tol: f64) -> Option<usize> {
    let post: Vec<&ApexRecord> = apexes.iter().filter(|a| a.t > after).collect();
    let last_bad = post.iter().rposition(|a| (a.xdot - target).abs() > tol);
    match last_bad {
        None if post.is_empty() => None,
        None => Some(1),
        Some(i) if i + 1 < post.len() => Some(i + 2),
        Some(_) => None,
    }
}

/// Worst relative apex error after the step, skipping the first apex past it.
pub fn terrain_apex_error(apexes: &[ApexRecord], step_location: f64, apex: f64) -> Option<f64> {
    let first = apexes.iter().position(|a| a.x > step_location)?;
    let after = &apexes[(first + 1).min(apexes.len())..];
    if after.is_empty() {
        return None;
    }
    Some(after.iter().map(|a| (a.z - apex).abs() / apex).fold(0.0, f64::max))
}

fn opt_measure(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::INFINITY)
}

pub fn recovery_limit(model: ModelKind) -> usize {
    match model {
        ModelKind::PlanarRobot => 3,
        _ => 2,
    }
}

fn run_hopping(cfg: &Config, base_dir: &Path, report: &mut Report, artifacts: &mut Vec<Artifact>) -> Result<(), RunError> {
    let mut setup = match hop_setup(cfg, base_dir) {
        Ok(s) => s,
        Err(RunError::Simulation(e)) => return absorb(report, e),
        Err(e) => return Err(e),
    };
    let mut push_window = None;
    if let (ScenarioKind::Push, Some(p)) = (cfg.scenario.kind, cfg.push) {
        let start = match push_start(&setup, p.start, p.at_apex) {
            Ok(t) => t,
            Err(RunError::Simulation(e)) => return absorb(report, e),
            Err(e) => return Err(e),
        };
        setup.env = Environment::new(terrain(cfg), vec![Push { force: p.force, start, duration: p.duration }]);
        push_window = Some(start + p.duration);
    }
    let sim = match simulate(&setup) {
        Ok(s) => s,
        Err(e) => return absorb(report, e),
    };
    report.apexes = ApexRow::table(&sim.apexes);
    artifacts.push(Artifact::new("trajectory.csv", sim.trajectory_csv.clone()));
    artifacts.push(Artifact::new("events.csv", sim.events_csv.clone()));
    let completed = sim.apexes.len().saturating_sub(1);
    report.checks.push(Check::at_least("completed_hops", completed as f64, cfg.scenario.hops as f64));
    report.checks.push(Check::at_least("stance_grf_z_min", sim.min_stance_grf_z, 0.0));
    let g = &cfg.gait;
    match cfg.scenario.kind {
        ScenarioKind::Hop => {
            let window = STEADY_WINDOW.min(sim.apexes.len() / 2).max(1);
            let (v, z, y) = steady_errors(&sim.apexes, g.xdot_des, g.apex_height, window);
            let detail = format!("last {window} apexes");
            report.checks.push(Check::at_most("steady_xdot_error", v, VELOCITY_TOLERANCE).with_detail(detail.clone()));
            report.checks.push(Check::at_most("steady_apex_rel_error", z, APEX_TOLERANCE).with_detail(detail.clone()));
            if cfg.scenario.model == ModelKind::Slip3d {
                let y = (y - g.lateral_xdot_des.abs()).abs();
                report.checks.push(Check::at_most("steady_ydot_error", y, VELOCITY_TOLERANCE).with_detail(detail));
            }
        }
        ScenarioKind::Push => {
            let end = push_window.unwrap_or(0.0);
            let n = recovery_apexes(&sim.apexes, end, g.xdot_des, RECOVERY_TOLERANCE).map(|n| n as f64);
            let limit = recovery_limit(cfg.scenario.model) as f64;
            report.checks.push(Check::at_most("push_recovery_apexes", opt_measure(n), limit));
        }
        ScenarioKind::TerrainStep => {
            let location = cfg.terrain.map(|t| t.step_location).unwrap_or(0.0);
            let err = terrain_apex_error(&sim.apexes, location, g.apex_height);
            report.checks.push(Check::at_most("terrain_apex_rel_error", opt_measure(err), APEX_TOLERANCE));
        }
        _ => {}
    }
    Ok(())
}

fn run_gait_search(cfg: &Config, report: &mut Report, artifacts: &mut Vec<Artifact>) -> Result<(), RunError> {
    let ctx = gait_context(cfg, cfg.gait.apex_height)?;
    let gait = match find_periodic_orbit(&ctx, cfg.gait.xdot_des) {
        Ok(g) => g,
        Err(e) => return absorb(report, e),
    };
    artifacts.push(Artifact::new("gait.toml", gait.to_toml()?.into_bytes()));
    report.checks.push(Check::at_most("fixed_point_residual", gait.residual.abs(), 1e-6));
    report.checks.push(Check::at_most("closed_loop_multiplier", (gait.a + gait.b * gait.k).abs(), 1e-9));
    report.checks.push(Check::holds("touchdown_angle_within_limit", gait.u_star.abs() <= gait.leg_limit).with_detail(format!("u* = {}", gait.u_star)));
    Ok(())
}

/// Required thrust never decreases with weight for each stiffness; missing
/// cells (no thrust below the weight suffices) only follow other missing cells.
pub fn required_thrust_monotone(cells: &[RequiredThrust]) -> bool {
    let mut ks: Vec<f64> = cells.iter().map(|c| c.stiffness).collect();
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    ks.iter().all(|&k| {
        let mut col: Vec<&RequiredThrust> = cells.iter().filter(|c| c.stiffness == k).collect();
        col.sort_by(|a, b| a.weight.total_cmp(&b.weight));
        col.windows(2).all(|w| match (w[0].f_max, w[1].f_max) {
            (Some(a), Some(b)) => b >= a,
            (None, Some(_)) => false,
            _ => true,
        })
    })
}

/// Achievable apex never decreases with thrust-to-weight ratio; cells without
/// lift-off count as the lowest value and unbounded cells are skipped.
pub fn achievable_apex_monotone(cells: &[AchievableApex]) -> bool {
    let mut ks: Vec<f64> = cells.iter().map(|c| c.stiffness).collect();
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    ks.iter().all(|&k| {
        let mut col: Vec<&AchievableApex> = cells.iter().filter(|c| c.stiffness == k && c.twr < 1.0).collect();
        col.sort_by(|a, b| a.twr.total_cmp(&b.twr));
        col.windows(2).all(|w| w[1].apex.unwrap_or(f64::NEG_INFINITY) >= w[0].apex.unwrap_or(f64::NEG_INFINITY))
    })
}

/// Largest closed-form versus integrated apex difference over the weight by
/// stiffness grid, hopping with the required thrust (or 90% of the weight).
pub fn closed_form_agreement(sweep: &StiffnessSweep, cells: &[RequiredThrust], opts: &IntegratorOptions) -> Result<f64, Error> {
    use rayon::prelude::*;
    let worst = cells
        .par_iter()
        .map(|c| {
            let spec = BangBangSpec {
                m: c.weight,
                k: c.stiffness,
                d: sweep.d,
                f_max: c.f_max.unwrap_or(0.9 * c.weight * sweep.g),
                f_min: sweep.f_min,
                apex: sweep.apex,
                r0: sweep.r0,
                g: sweep.g,
            };
            match (bang_bang_closed_form(&spec), bang_bang_numeric(&spec, opts)) {
                (Ok(a), Ok(b)) => Ok((a.apex - b.apex).abs()),
                (Err(Error::NoLiftoff), Err(Error::NoLiftoff)) => Ok(0.0),
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        })
        .collect::<Result<Vec<f64>, Error>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

pub struct DesignResults {
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

pub fn design_results(cfg: &Config) -> Result<DesignResults, Error> {
    let mut checks = Vec::new();
    let mut artifacts = Vec::new();
    let stiffness = design_sweep_stiffness(&cfg.design.stiffness)?;
    let twr = design_sweep_twr(&cfg.design.twr)?;
    artifacts.push(Artifact::new("design_fig6a.csv", output::required_thrust_csv(&stiffness)));
    artifacts.push(Artifact::new("design_fig6b.csv", output::achievable_apex_csv(&twr)));
    if !stiffness.is_empty() {
        checks.push(Check::holds("required_thrust_monotone_in_weight", required_thrust_monotone(&stiffness)));
        let err = closed_form_agreement(&cfg.design.stiffness, &stiffness, &cfg.integrator)?;
        checks.push(Check::at_most("closed_form_vs_numeric_apex", err, DESIGN_AGREEMENT));
    }
    if !twr.is_empty() {
        checks.push(Check::holds("achievable_apex_monotone_in_twr", achievable_apex_monotone(&twr)));
    }
    Ok(DesignResults { checks, artifacts })
}

pub fn cot_results(cfg: &Config) -> Result<DesignResults, RunError> {
    let setup = cfg.cot_setup()?;
    let c = &cfg.cot;
    let results = cot_compare(&setup, &c.twr, c.flight_duration)?;
    let mut checks = Vec::new();
    let flying = |above: bool| results.iter().filter(move |r| r.mode == LocomotionMode::Flying && (r.twr > 1.0) == above);
    if flying(true).next().is_some() {
        let err = flying(true).map(|r| (r.cot - 1.0 / c.xdot).abs()).fold(0.0, f64::max);
        checks.push(Check::at_most("flying_cot_inverse_speed_error", err, 1e-12));
    }
    if flying(false).next().is_some() {
        checks.push(Check::holds("flying_cot_infinite_without_surplus_thrust", flying(false).all(|r| r.cot == f64::INFINITY)));
    }
    let at_nine = cot_hopping(&setup, 0.9)?;
    checks.push(Check::holds("hopping_cot_finite_at_twr_0.9", at_nine.feasible && at_nine.cot.is_finite()).with_detail(format!("cot {}", at_nine.cot)));
    let boundary = hopping_feasibility_boundary(&setup, 0.05, 0.95, c.boundary_tol)?;
    let (lo, hi) = BOUNDARY_WINDOW;
    checks.push(Check::within("hopping_feasibility_boundary", opt_measure(boundary), lo, hi));
    Ok(DesignResults { checks, artifacts: vec![Artifact::new("cot_fig6c.csv", output::cot_csv(&results))] })
}

/// Runs the configured scenario. Numerical failures end up in the report.
pub fn run_scenario(cfg: &Config, base_dir: &Path) -> Result<Outcome, RunError> {
    let s = &cfg.scenario;
    let mut report = Report::new(s.kind.as_str(), s.model.as_str(), s.seed);
    let mut artifacts = Vec::new();
    match s.kind {
        ScenarioKind::Hop | ScenarioKind::Push | ScenarioKind::TerrainStep => run_hopping(cfg, base_dir, &mut report, &mut artifacts)?,
        ScenarioKind::GaitSearch => run_gait_search(cfg, &mut report, &mut artifacts)?,
        ScenarioKind::DesignSweep => match design_results(cfg) {
            Ok(d) => {
                report.checks.extend(d.checks);
                artifacts.extend(d.artifacts);
            }
            Err(e) => absorb(&mut report, e)?,
        },
        ScenarioKind::CotCompare => match cot_results(cfg) {
            Ok(d) => {
                report.checks.extend(d.checks);
                artifacts.extend(d.artifacts);
            }
            Err(RunError::Simulation(e)) => absorb(&mut report, e)?,
            Err(e) => return Err(e),
        },
    }
    report.ensure_nonempty()?;
    Ok(Outcome { report, artifacts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apex(t: f64, x: f64, z: f64, xdot: f64) -> ApexRecord {
        ApexRecord { t, x, z, xdot, ydot: 0.0, energy: 0.0, command: 0.0, lateral_command: 0.0, clamped: false }
    }

    #[test]
    fn recovery_counts_from_the_first_apex_after_the_push() {
        let a = [apex(0.0, 0.0, 0.5, 0.5), apex(1.0, 0.0, 0.5, 0.9), apex(2.0, 0.0, 0.5, 0.45), apex(3.0, 0.0, 0.5, 0.5)];
        assert_eq!(recovery_apexes(&a, 0.5, 0.5, 0.1), Some(2));
        assert_eq!(recovery_apexes(&a, 1.5, 0.5, 0.1), Some(1));
        let diverging = [apex(1.0, 0.0, 0.5, 0.5), apex(2.0, 0.0, 0.5, 0.9)];
        assert_eq!(recovery_apexes(&diverging, 0.5, 0.5, 0.1), None);
        assert_eq!(recovery_apexes(&diverging, 5.0, 0.5, 0.1), None);
    }

    #[test]
    fn terrain_error_skips_the_transient_apex() {
        let a = [apex(0.0, 1.0, 1.0, 0.5), apex(1.0, 2.1, 0.9, 0.5), apex(2.0, 2.6, 1.01, 0.5), apex(3.0, 3.1, 0.995, 0.5)];
        assert!((terrain_apex_error(&a, 2.0, 1.0).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(terrain_apex_error(&a, 5.0, 1.0), None);
    }

    #[test]
    fn monotonicity_helpers() {
        let cell = |weight, f_max| RequiredThrust { weight, stiffness: 1.0, f_max };
        assert!(required_thrust_monotone(&[cell(1.0, Some(1.0)), cell(2.0, Some(2.0)), cell(3.0, None)]));
        assert!(!required_thrust_monotone(&[cell(1.0, Some(2.0)), cell(2.0, Some(1.0))]));
        assert!(!required_thrust_monotone(&[cell(1.0, None), cell(2.0, Some(1.0))]));
        let apex = |twr, apex| AchievableApex { twr, stiffness: 1.0, apex };
        assert!(achievable_apex_monotone(&[apex(0.0, None), apex(0.5, Some(0.5)), apex(0.9, Some(0.9)), apex(1.0, None)]));
        assert!(!achievable_apex_monotone(&[apex(0.5, Some(0.5)), apex(0.9, Some(0.4))]));
    }
}
