use hopsim_core::control::{RobotHopController, Slip3dHopController, SlipHopController};
use hopsim_core::energy::{equivalent_gravity, EnergyControllerConfig};
use hopsim_core::environment::{Environment, Push, Terrain};
use hopsim_core::hybrid::{simulate_hops, HybridModel, HybridState, IntegratorOptions, Phase, Termination};
use hopsim_core::robot::{thrust_bounds, RobotModel, RobotParams};
use hopsim_core::slip::{Slip3dModel, SlipInput, SlipModel};
use hopsim_core::stepping::{apex_state, find_periodic_orbit, Gait, GaitContext, StepLaw};
use std::sync::OnceLock;

fn robot() -> RobotParams {
    RobotParams::default()
}

fn context(apex: f64) -> GaitContext {
    let r = robot();
    let (floor, _) = thrust_bounds([0.0; 3], &r).unwrap();
    GaitContext::new(r.slip_equivalent(), EnergyControllerConfig::new(0.0, floor, r.thrust_cap()), apex).unwrap()
}

fn gait() -> &'static Gait {
    static GAIT: OnceLock<Gait> = OnceLock::new();
    GAIT.get_or_init(|| find_periodic_orbit(&context(0.5), 0.5).unwrap())
}

fn slip_run(env: Environment, start: &HybridState, hops: usize) -> (SlipHopController, hopsim_core::hybrid::HopRun) {
    let ctx = context(0.5);
    let g = gait();
    let model = SlipModel::with_environment(ctx.params, env);
    let mut ctrl = SlipHopController::new(ctx.energy_controller().unwrap(), g.law(), start, g.u_star, None);
    let run = simulate_hops(&model, start, &mut ctrl, hops, 120.0, &ctx.opts).unwrap();
    assert_eq!(run.termination, Termination::Completed);
    (ctrl, run)
}

#[test]
fn slip_settles_on_the_target_gait() {
    let (ctrl, _) = slip_run(Environment::default(), &apex_state(0.5, 0.3), 40);
    for a in &ctrl.apexes[20..] {
        assert!((a.xdot - 0.5).abs() <= 0.05, "xdot {}", a.xdot);
        assert!((a.z - 0.5).abs() <= 0.01, "apex {}", a.z);
    }
}

#[test]
fn lyapunov_decays_at_the_commanded_rate_when_unconstrained() {
    let ctx = context(0.5);
    let (ctrl, run) = slip_run(Environment::default(), &apex_state(0.45, 0.5), 10);
    let model = SlipModel::new(ctx.params);
    let cfg = ctrl.energy.config;
    let g_e = equivalent_gravity(cfg.ft_min, ctx.params.m, ctx.params.g).unwrap();
    let mut checked = 0;
    // The final sample is a post-reset event state still carrying the previous command.
    let samples = &run.trajectory.samples;
    for s in &samples[..samples.len() - 1] {
        if s.state.phase != Phase::Aerial || s.diag.delta != 0.0 || s.diag.bound_active || s.diag.lyapunov < 1e-10 {
            continue;
        }
        let mut acc = [0.0; 2];
        model.acceleration(s.t, &s.state, &SlipInput::fixed(s.input[0], s.input[1]), &mut acc).unwrap();
        let zdot = s.state.v[1];
        let edot = ctx.params.m * g_e * zdot + ctx.params.m * zdot * acc[1];
        let vdot = 2.0 * cfg.lyapunov_weight() * s.diag.eta * edot;
        let target = -cfg.gamma * s.diag.lyapunov;
        assert!((vdot - target).abs() <= 0.01 * target.abs(), "t {}: {vdot} vs {target}", s.t);
        checked += 1;
    }
    assert!(checked > 10, "only {checked} unconstrained samples");
}

#[test]
fn deadbeat_removes_velocity_error_in_one_hop() {
    let ctx = context(0.5);
    let g = gait();
    let model = SlipModel::new(ctx.params);
    for e in [-0.3, -0.2, -0.1, -0.05, 0.05, 0.1, 0.2, 0.3] {
        let start = apex_state(0.5, 0.5 + e);
        let mut ctrl = SlipHopController::new(ctx.energy_controller().unwrap(), g.law(), &start, g.u_star, None);
        simulate_hops(&model, &start, &mut ctrl, 1, 10.0, &ctx.opts).unwrap();
        let residual = (ctrl.apexes[1].xdot - 0.5).abs();
        assert!(residual <= f64::max(0.05 * e.abs(), 0.01), "e {e}: residual {residual}");
    }
}

#[test]
fn stance_contact_force_stays_compressive() {
    let env = Environment::new(Terrain::flat(), vec![Push { force: [10.0, 0.0, 0.0], start: 2.0, duration: 0.1 }]);
    let (_, run) = slip_run(env, &apex_state(0.5, 0.5), 12);
    let stance: Vec<_> = run.trajectory.samples.iter().filter(|s| s.state.phase == Phase::Stance).collect();
    assert!(!stance.is_empty());
    assert!(stance.iter().all(|s| s.grf[2] >= 0.0));
}

#[test]
fn terrain_step_keeps_the_absolute_apex() {
    let ctx = context(1.0);
    let g = find_periodic_orbit(&ctx, 0.5).unwrap();
    let start = apex_state(1.0, 0.5);
    let mut ctrl = SlipHopController::new(ctx.energy_controller().unwrap(), g.law(), &start, g.u_star, None);
    let model = SlipModel::with_environment(ctx.params, Environment::new(Terrain::step_up(2.0, 0.12), vec![]));
    simulate_hops(&model, &start, &mut ctrl, 12, 60.0, &ctx.opts).unwrap();
    let first_on_step = ctrl.apexes.iter().position(|a| a.x > 2.3).unwrap();
    for a in &ctrl.apexes[first_on_step + 1..] {
        assert!((a.z - 1.0).abs() <= 0.02, "apex {}", a.z);
    }
}

#[test]
fn pure_sagittal_3d_hop_matches_planar() {
    let ctx = context(0.5);
    let g = gait();
    let flat = SlipModel::new(ctx.params);
    let space = Slip3dModel::new(ctx.params);
    let start = apex_state(0.5, 0.4);
    let mut planar = SlipHopController::new(ctx.energy_controller().unwrap(), g.law(), &start, g.u_star, None);
    simulate_hops(&flat, &start, &mut planar, 4, 20.0, &ctx.opts).unwrap();
    let start3 = HybridState::aerial(0.0, vec![0.0, 0.0, 0.5], vec![0.4, 0.0, 0.0]);
    let lateral = StepLaw { xdot_star: 0.0, u_star: 0.0, ..g.law() };
    let mut spatial = Slip3dHopController::new(ctx.energy_controller().unwrap(), g.law(), lateral, &start3);
    simulate_hops(&space, &start3, &mut spatial, 4, 20.0, &ctx.opts).unwrap();
    for (a, b) in planar.apexes.iter().zip(&spatial.apexes) {
        assert!((a.xdot - b.xdot).abs() < 1e-8 && (a.z - b.z).abs() < 1e-8);
        assert!(b.ydot.abs() < 1e-12);
    }
}

#[test]
fn diagonal_push_is_rejected_in_both_planes() {
    let ctx = context(0.5);
    let g = gait();
    let in_place = find_periodic_orbit(&ctx, 0.0).unwrap();
    let env = Environment::new(Terrain::flat(), vec![Push { force: [7.0, 7.0, 0.0], start: 1.5, duration: 0.1 }]);
    let model = Slip3dModel::with_environment(ctx.params, env);
    let start = HybridState::aerial(0.0, vec![0.0, 0.0, 0.5], vec![0.5, 0.0, 0.0]);
    let mut ctrl = Slip3dHopController::new(ctx.energy_controller().unwrap(), g.law(), in_place.law(), &start);
    simulate_hops(&model, &start, &mut ctrl, 15, 60.0, &ctx.opts).unwrap();
    let pushed = ctrl.apexes.iter().any(|a| a.ydot.abs() > 0.1);
    assert!(pushed);
    for a in ctrl.apexes.iter().rev().take(4) {
        assert!((a.xdot - 0.5).abs() <= 0.1 && a.ydot.abs() <= 0.1, "{a:?}");
    }
}

#[test]
fn robot_tracks_the_slip_gait() {
    let ctx = context(0.5);
    let g = gait();
    let model = RobotModel::new(robot());
    let start = model.apex_state(0.0, 0.5, 0.5, g.u_star);
    let mut ctrl = RobotHopController::new(ctx.energy_controller().unwrap(), g.law(), &model, &start);
    let run = simulate_hops(&model, &start, &mut ctrl, 30, 60.0, &IntegratorOptions::default()).unwrap();
    assert_eq!(run.termination, Termination::Completed);
    for a in &ctrl.apexes[10..] {
        assert!((a.xdot - 0.5).abs() <= 0.05 && (a.z - 0.5).abs() <= 0.01, "{a:?}");
    }
    let stance = run.trajectory.samples.iter().filter(|s| s.state.phase == Phase::Stance);
    assert!(stance.clone().all(|s| s.grf[2] >= 0.0));
}
