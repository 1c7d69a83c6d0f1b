//! The acceptance suite behind the `check` subcommand.

use std::path::Path;
use std::time::Instant;

use hopsim_core::control::SlipHopController;
use hopsim_core::energy::{
    clf_terms, equivalent_gravity, implied_delta, qp_objective, solve_energy_qp, solve_energy_qp_generic, ClfTerms, EnergyControllerConfig,
    QpVariant,
};
use hopsim_core::environment::{Environment, Push};
use hopsim_core::hybrid::{simulate_hops, HybridModel, Phase};
use hopsim_core::robot::{impact_map, kinetic_energy, thrust_bounds, RobotParams};
use hopsim_core::slip::{SlipInput, SlipModel};
use hopsim_core::stepping::{apex_state, find_periodic_orbit};
use nalgebra::Vector4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, ModelKind, ScenarioKind, StartSection, TerrainSection};
use crate::error::RunError;
use crate::output::Artifact;
use crate::report::{Check, Report};
use crate::scenario::{
    cot_results, design_results, gait_context, hop_setup, push_start, recovery_apexes, recovery_limit, simulate, steady_errors,
    terrain_apex_error, Outcome, Simulation, APEX_TOLERANCE, RECOVERY_TOLERANCE, STEADY_WINDOW, VELOCITY_TOLERANCE,
};

pub const RANDOM_INSTANCES: usize = 1000;
pub const NOMINAL_XDOT: f64 = 0.5;
pub const NOMINAL_APEX: f64 = 0.5;
pub const PUSH_FORCE: f64 = 10.0;
pub const PUSH_DURATION: f64 = 0.1;
pub const PUSH_APEX: usize = 5;
pub const STEP_HEIGHT: f64 = 0.12;
pub const STEP_LOCATION: f64 = 2.0;
pub const STEP_APEX: f64 = 1.0;
pub const HIGH_APEX: f64 = 1.1;
pub const HIGH_APEX_ENERGY: f64 = 10.2;
pub const REFERENCE_G_E: f64 = 3.7091;

/// Checks and CSVs of one pass over the suite.
#[derive(Debug, Clone, Default)]
pub struct Suite {
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
    min_grf_z: f64,
}

impl Suite {
    fn push(&mut self, criterion: &str, check: Check) {
        self.checks.push(Check { name: format!("{criterion} {}", check.name), ..check });
    }

    fn fail(&mut self, criterion: &str, what: &str, err: impl std::fmt::Display) {
        self.push(criterion, Check::holds(what, false).with_detail(err.to_string()));
    }

    fn record(&mut self, tag: &str, sim: &Simulation) {
        self.min_grf_z = self.min_grf_z.min(sim.min_stance_grf_z);
        self.artifacts.push(Artifact::new(format!("{tag}_trajectory.csv"), sim.trajectory_csv.clone()));
        self.artifacts.push(Artifact::new(format!("{tag}_events.csv"), sim.events_csv.clone()));
    }
}

fn hop_config(cfg: &Config, model: ModelKind, hops: usize, apex: f64, start: StartSection) -> Config {
    let mut c = cfg.clone();
    c.scenario.kind = ScenarioKind::Hop;
    c.scenario.model = model;
    c.scenario.hops = hops;
    c.gait.xdot_des = NOMINAL_XDOT;
    c.gait.apex_height = apex;
    c.gait.file = None;
    c.start = Some(start);
    c.push = None;
    c.terrain = None;
    c
}

fn label(model: ModelKind) -> &'static str {
    match model {
        ModelKind::Slip => "slip",
        ModelKind::Slip3d => "slip3d",
        ModelKind::PlanarRobot => "robot",
    }
}

fn run(cfg: &Config, push: Option<(usize, [f64; 3])>) -> Result<Simulation, RunError> {
    let mut setup = hop_setup(cfg, Path::new("."))?;
    if let Some((apex, force)) = push {
        let start = push_start(&setup, None, Some(apex))?;
        setup.env = Environment::new(setup.env.terrain.clone(), vec![Push { force, start, duration: PUSH_DURATION }]);
    }
    Ok(simulate(&setup)?)
}

fn periodic_hopping(cfg: &Config, suite: &mut Suite) {
    for model in [ModelKind::Slip, ModelKind::PlanarRobot] {
        let tag = label(model);
        let c = hop_config(cfg, model, 40, NOMINAL_APEX, StartSection { z: NOMINAL_APEX, xdot: 0.3, ydot: 0.0 });
        let clock = Instant::now();
        match run(&c, None) {
            Ok(sim) => {
                let elapsed = clock.elapsed().as_secs_f64();
                let (v, z, _) = steady_errors(&sim.apexes, NOMINAL_XDOT, NOMINAL_APEX, STEADY_WINDOW);
                let detail = format!("last {STEADY_WINDOW} of {} apexes", sim.apexes.len());
                suite.push("AC1", Check::at_least(format!("{tag} completed_hops"), (sim.apexes.len() - 1) as f64, 40.0));
                suite.push("AC1", Check::at_most(format!("{tag} steady_xdot_error"), v, VELOCITY_TOLERANCE).with_detail(detail.clone()));
                suite.push("AC1", Check::at_most(format!("{tag} steady_apex_rel_error"), z, APEX_TOLERANCE).with_detail(detail));
                suite.push("AC1", Check::at_most(format!("{tag} runtime_s"), elapsed, 30.0));
                suite.record(&format!("ac1_{tag}"), &sim);
            }
            Err(e) => suite.fail("AC1", &format!("{tag} run"), e),
        }
    }
}

fn push_recovery(cfg: &Config, suite: &mut Suite) {
    for model in [ModelKind::Slip, ModelKind::PlanarRobot] {
        let tag = label(model);
        let c = hop_config(cfg, model, PUSH_APEX + 10, NOMINAL_APEX, StartSection { z: NOMINAL_APEX, xdot: NOMINAL_XDOT, ydot: 0.0 });
        match run(&c, Some((PUSH_APEX, [PUSH_FORCE, 0.0, 0.0]))) {
            Ok(sim) => {
                let push_end = sim.apexes[PUSH_APEX].t + PUSH_DURATION;
                let n = recovery_apexes(&sim.apexes, push_end, NOMINAL_XDOT, RECOVERY_TOLERANCE);
                let peak = sim.apexes.iter().filter(|a| a.t > push_end).map(|a| (a.xdot - NOMINAL_XDOT).abs()).fold(0.0, f64::max);
                let check = Check::at_most(format!("{tag} recovery_apexes"), n.map_or(f64::INFINITY, |n| n as f64), recovery_limit(model) as f64);
                suite.push("AC2", check.with_detail(format!("peak deviation {peak:.3} m/s")));
                suite.record(&format!("ac2_{tag}"), &sim);
            }
            Err(e) => suite.fail("AC2", &format!("{tag} run"), e),
        }
    }
}

fn terrain_step(cfg: &Config, suite: &mut Suite) {
    for model in [ModelKind::Slip, ModelKind::PlanarRobot] {
        let tag = label(model);
        let mut c = hop_config(cfg, model, 12, STEP_APEX, StartSection { z: STEP_APEX, xdot: NOMINAL_XDOT, ydot: 0.0 });
        c.terrain = Some(TerrainSection { step_height: STEP_HEIGHT, step_location: STEP_LOCATION });
        match run(&c, None) {
            Ok(sim) => {
                let err = terrain_apex_error(&sim.apexes, STEP_LOCATION, STEP_APEX);
                suite.push("AC3", Check::at_most(format!("{tag} apex_rel_change"), err.unwrap_or(f64::INFINITY), APEX_TOLERANCE));
                suite.record(&format!("ac3_{tag}"), &sim);
            }
            Err(e) => suite.fail("AC3", &format!("{tag} run"), e),
        }
    }
}

/// First apex (counting the start as 0) from which all later heights stay
/// within `tol` of `target`.
fn settling_apex(heights: &[f64], target: f64, tol: f64) -> Option<usize> {
    match heights.iter().rposition(|z| (z - target).abs() > tol * target) {
        None => Some(0),
        Some(i) if i + 1 < heights.len() => Some(i + 1),
        Some(_) => None,
    }
}

fn energy_level(cfg: &Config, suite: &mut Suite) {
    let robot = RobotParams::default();
    let m = robot.total_mass();
    match thrust_bounds([0.0; 3], &robot).and_then(|(floor, _)| equivalent_gravity(floor, m, robot.g)) {
        Ok(g_e) => {
            suite.push("AC4", Check::at_most("equivalent_gravity_rel_error", (g_e - REFERENCE_G_E).abs() / REFERENCE_G_E, 1e-4).with_detail(format!("g_e {g_e:.5}")));
            let energy = m * g_e * HIGH_APEX;
            suite.push("AC4", Check::at_most("apex_energy_rel_error", (energy - HIGH_APEX_ENERGY).abs() / HIGH_APEX_ENERGY, 5e-3));
        }
        Err(e) => suite.fail("AC4", "equivalent_gravity", e),
    }
    let c = hop_config(cfg, ModelKind::Slip, 10, HIGH_APEX, StartSection { z: 0.9 * HIGH_APEX, xdot: NOMINAL_XDOT, ydot: 0.0 });
    match run(&c, None) {
        Ok(sim) => {
            let heights: Vec<f64> = sim.apexes.iter().map(|a| a.z).collect();
            let n = settling_apex(&heights, HIGH_APEX, 0.01);
            let detail = format!("final apex {:.4} m", heights.last().copied().unwrap_or(f64::NAN));
            suite.push("AC4", Check::at_most("hops_to_regulate", n.map_or(f64::INFINITY, |n| n as f64), 5.0).with_detail(detail));
            suite.record("ac4_slip", &sim);
        }
        Err(e) => suite.fail("AC4", "regulation run", e),
    }
}

/// Refined grid search over the thrust range; `δ` is eliminated exactly.
pub fn grid_oracle(terms: &ClfTerms, f_prev: f64, cfg: &EnergyControllerConfig) -> f64 {
    let cost = |f: f64| qp_objective(f, implied_delta(f, terms, cfg.variant), f_prev, cfg.p);
    let (mut lo, mut hi) = (cfg.ft_min, cfg.ft_max);
    let mut best = f64::INFINITY;
    for _ in 0..6 {
        let n = 400;
        let step = (hi - lo) / n as f64;
        let mut arg = lo;
        for i in 0..=n {
            let f = lo + step * i as f64;
            let c = cost(f);
            if c < best {
                best = c;
                arg = f;
            }
        }
        lo = (arg - 2.0 * step).max(cfg.ft_min);
        hi = (arg + 2.0 * step).min(cfg.ft_max);
    }
    best
}

fn qp_correctness(cfg: &Config, suite: &mut Suite) -> Result<(), RunError> {
    let base = cfg.energy_config()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.scenario.seed);
    let (mut gap, mut violation, mut closed_vs_generic) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..RANDOM_INSTANCES {
        let eta = rng.gen_range(-5.0..5.0);
        let zdot = rng.gen_range(-3.0..3.0);
        let c = rng.gen_range(0.8..1.0);
        let f_prev = rng.gen_range(base.ft_min..base.ft_max);
        let p = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..2.0) };
        for variant in [QpVariant::InequalityQp, QpVariant::RelaxedEqualityQp] {
            let config = EnergyControllerConfig { p, variant, ..base };
            let t = clf_terms(eta, zdot, c, &config);
            let closed = solve_energy_qp(&t, f_prev, &config)?;
            let generic = solve_energy_qp_generic(&t, f_prev, &config)?;
            let oracle = grid_oracle(&t, f_prev, &config);
            for s in [&closed, &generic] {
                gap = gap.max((s.objective - oracle).abs());
                let bound = (config.ft_min - s.thrust).max(s.thrust - config.ft_max).max(0.0);
                let residual = t.a * s.thrust - s.delta - t.b;
                let clf = match variant {
                    QpVariant::RelaxedEqualityQp => residual.abs(),
                    QpVariant::InequalityQp => residual.max(0.0),
                };
                violation = violation.max(bound).max(clf);
            }
            if p == 0.0 {
                closed_vs_generic = closed_vs_generic.max((closed.objective - generic.objective).abs());
                if variant == QpVariant::RelaxedEqualityQp && t.a != 0.0 {
                    closed_vs_generic = closed_vs_generic.max((closed.thrust - generic.thrust).abs()).max((closed.delta - generic.delta).abs());
                }
            }
        }
    }
    let detail = format!("{RANDOM_INSTANCES} instances per variant, seed {}", cfg.scenario.seed);
    suite.push("AC5", Check::at_most("objective_gap_to_grid_oracle", gap, 1e-6).with_detail(detail));
    suite.push("AC5", Check::at_most("constraint_violation", violation, 1e-9));
    suite.push("AC5", Check::at_most("closed_form_vs_generic_at_p0", closed_vs_generic, 1e-10));
    Ok(())
}

fn clf_contract(cfg: &Config, suite: &mut Suite) -> Result<(), RunError> {
    let mut c = hop_config(cfg, ModelKind::Slip, 10, NOMINAL_APEX, StartSection { z: 0.45, xdot: NOMINAL_XDOT, ydot: 0.0 });
    c.ctrl.variant = QpVariant::RelaxedEqualityQp;
    let sim = match run(&c, None) {
        Ok(sim) => sim,
        Err(e) => {
            suite.fail("AC6", "run", e);
            return Ok(());
        }
    };
    suite.record("ac6_slip", &sim);
    let ctx = gait_context(&c, NOMINAL_APEX)?;
    let energy = ctx.energy_controller()?;
    let model = SlipModel::new(ctx.params);
    let (m, g_e) = (ctx.params.m, energy.g_e);
    let weight = energy.config.lyapunov_weight();
    let mut worst = 0.0f64;
    let mut count = 0usize;
    let samples = &sim.run.trajectory.samples;
    // The final sample is a post-reset state still carrying the previous command.
    for s in &samples[..samples.len().saturating_sub(1)] {
        if s.state.phase != Phase::Aerial || s.diag.delta != 0.0 || s.diag.bound_active || s.diag.lyapunov < 1e-10 {
            continue;
        }
        let mut acc = [0.0; 2];
        model.acceleration(s.t, &s.state, &SlipInput::fixed(s.input[0], s.input[1]), &mut acc)?;
        let zdot = s.state.v[1];
        let vdot = 2.0 * weight * s.diag.eta * (m * g_e * zdot + m * zdot * acc[1]);
        let target = -energy.config.gamma * s.diag.lyapunov;
        worst = worst.max((vdot - target).abs() / target.abs());
        count += 1;
    }
    suite.push("AC6", Check::at_most("vdot_rel_error", if count > 0 { worst } else { f64::INFINITY }, 0.01).with_detail(format!("{count} unconstrained samples")));
    Ok(())
}

fn deadbeat(cfg: &Config, suite: &mut Suite) -> Result<(), RunError> {
    let c = hop_config(cfg, ModelKind::Slip, 1, NOMINAL_APEX, StartSection { z: NOMINAL_APEX, xdot: NOMINAL_XDOT, ydot: 0.0 });
    let ctx = gait_context(&c, NOMINAL_APEX)?;
    let gait = match find_periodic_orbit(&ctx, NOMINAL_XDOT) {
        Ok(g) => g,
        Err(e) => {
            suite.fail("AC7", "gait search", e);
            return Ok(());
        }
    };
    let model = SlipModel::new(ctx.params);
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for e in [-0.3, -0.2, -0.1, -0.05, 0.05, 0.1, 0.2, 0.3] {
        let start = apex_state(NOMINAL_APEX, NOMINAL_XDOT + e);
        let mut ctrl = SlipHopController::new(ctx.energy_controller()?, gait.law(), &start, gait.u_star, None).with_retraction(ctx.retraction);
        match simulate_hops(&model, &start, &mut ctrl, 1, 10.0, &ctx.opts) {
            Ok(_) if ctrl.apexes.len() > 1 => {
                let residual = (ctrl.apexes[1].xdot - NOMINAL_XDOT).abs();
                let ratio = residual / f64::max(0.05 * e.abs(), 0.01);
                if ratio > worst {
                    worst = ratio;
                    detail = format!("worst at e = {e}: residual {residual:.5} m/s");
                }
            }
            Ok(_) => worst = f64::INFINITY,
            Err(err) => {
                suite.fail("AC7", &format!("hop from e = {e}"), err);
                return Ok(());
            }
        }
    }
    suite.push("AC7", Check::at_most("residual_over_allowance", worst, 1.0).with_detail(detail));
    Ok(())
}

fn impact_physics(cfg: &Config, suite: &mut Suite) -> Result<(), RunError> {
    let p = cfg.robot;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.scenario.seed.wrapping_add(1));
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..RANDOM_INSTANCES {
        let q = Vector4::new(rng.gen_range(-1.0..1.0), rng.gen_range(0.3..1.5), rng.gen_range(-0.6..0.6), rng.gen_range(-0.01..0.09));
        let v = Vector4::new(rng.gen_range(-2.0..2.0), rng.gen_range(-3.0..3.0), rng.gen_range(-4.0..4.0), rng.gen_range(-1.0..1.0));
        let (v_plus, _) = impact_map(&q, &v, &p)?;
        let before = kinetic_energy(&q, &v, &p);
        worst = worst.max((kinetic_energy(&q, &v_plus, &p) - before) / before.max(1e-12));
    }
    suite.push("AC8", Check::at_most("impact_energy_gain_rel", worst, 1e-12).with_detail(format!("{RANDOM_INSTANCES} random states")));
    suite.push("AC8", Check::at_least("stance_grf_z_min", suite.min_grf_z, 0.0).with_detail("over all suite runs"));
    Ok(())
}

fn design_analysis(cfg: &Config, suite: &mut Suite) {
    let clock = Instant::now();
    match design_results(cfg) {
        Ok(d) => {
            let elapsed = clock.elapsed().as_secs_f64();
            for check in d.checks {
                suite.push("AC9", check);
            }
            suite.push("AC9", Check::at_most("runtime_s", elapsed, 60.0));
            suite.artifacts.extend(d.artifacts);
        }
        Err(e) => suite.fail("AC9", "design sweep", e),
    }
}

fn cot_comparison(cfg: &Config, suite: &mut Suite) {
    match cot_results(cfg) {
        Ok(d) => {
            for check in d.checks {
                suite.push("AC10", check);
            }
            suite.artifacts.extend(d.artifacts);
        }
        Err(e) => suite.fail("AC10", "cost of transport", e),
    }
}

/// One pass over AC1 to AC10.
pub fn acceptance_suite(cfg: &Config) -> Result<Suite, RunError> {
    let mut suite = Suite { min_grf_z: f64::INFINITY, ..Suite::default() };
    periodic_hopping(cfg, &mut suite);
    push_recovery(cfg, &mut suite);
    terrain_step(cfg, &mut suite);
    energy_level(cfg, &mut suite);
    qp_correctness(cfg, &mut suite)?;
    clf_contract(cfg, &mut suite)?;
    deadbeat(cfg, &mut suite)?;
    impact_physics(cfg, &mut suite)?;
    design_analysis(cfg, &mut suite);
    cot_comparison(cfg, &mut suite);
    Ok(suite)
}

/// Runs the suite twice; the second pass only feeds the determinism check.
pub fn run_acceptance(cfg: &Config) -> Result<Outcome, RunError> {
    let first = acceptance_suite(cfg)?;
    let second = acceptance_suite(cfg)?;
    let mut report = Report::new("check", "all", cfg.scenario.seed);
    let names = |s: &Suite| s.artifacts.iter().map(|a| a.name.clone()).collect::<Vec<_>>();
    let differing: Vec<String> = if names(&first) == names(&second) {
        first.artifacts.iter().zip(&second.artifacts).filter(|(a, b)| a.bytes != b.bytes).map(|(a, _)| a.name.clone()).collect()
    } else {
        vec!["<file set>".into()]
    };
    let detail = if differing.is_empty() { format!("{} CSV files identical", first.artifacts.len()) } else { format!("differ: {}", differing.join(", ")) };
    report.checks = first.checks;
    report.checks.push(Check::at_most("AC11 differing_csv_files", differing.len() as f64, 0.0).with_detail(detail));
    report.ensure_nonempty()?;
    Ok(Outcome { report, artifacts: first.artifacts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settling_counts_from_the_start() {
        assert_eq!(settling_apex(&[0.99, 1.05, 1.099, 1.1], 1.1, 0.01), Some(2));
        assert_eq!(settling_apex(&[1.1, 1.1], 1.1, 0.01), Some(0));
        assert_eq!(settling_apex(&[1.1, 0.9], 1.1, 0.01), None);
    }

    #[test]
    fn oracle_finds_the_unconstrained_minimum() {
        let cfg = EnergyControllerConfig { p: 1.0, ..EnergyControllerConfig::new(0.0, 10.0, 20.0) };
        let t = ClfTerms { a: 0.0, b: 0.0, v: 0.0, vdot_target: 0.0, vdot_drift: 0.0 };
        assert!(grid_oracle(&t, 14.0, &cfg) < 1e-20);
    }
}
