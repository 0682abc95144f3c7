//! Closed-loop control against the simulator: convergence, settling,
//! dead reckoning, expert passthrough and determinism.

use e2epark::control::*;
use e2epark::expert::scene::random_scene;
use e2epark::expert::{plan_expert_path, PlannerConfig, SceneKind};
use e2epark::seed::substream;
use e2epark::simulator::*;
use e2epark::world::{Point2, Pose2, VehicleParams};
use proptest::prelude::*;

fn straight(y: f64, len: f64) -> Vec<Point2> {
    (0..=(len / 0.5) as usize).map(|i| Point2::new(0.5 * i as f64, y)).collect()
}

#[test]
fn lateral_offset_converges_within_20_m() {
    let p = VehicleParams::default();
    let sim = SimConfig::default();
    let mut tracker = Tracker::new(ControllerConfig::default(), p);
    // vehicle 0.5 m left of the path, so the path sits at y = −0.5 in its frame
    tracker.install(&straight(-0.5, 40.0));
    let mut state = SimState::at_rest(Pose2::IDENTITY);
    let mut travelled = 0.0;
    let mut last_e = f64::NAN;
    while travelled < 20.0 {
        let out = tracker.step(state.feedback(), sim.dt).unwrap();
        last_e = out.e;
        let next = bicycle_step(&state, out.actuation, sim.dt, &p, &sim);
        travelled += next.ego.position().distance(state.ego.position());
        state = next;
        assert!(state.t < 60.0, "no progress");
    }
    assert!(last_e.abs() < 0.05, "e = {last_e}");
    assert!((state.ego.y + 0.5).abs() < 0.05);
}

#[test]
fn pid_settles_a_first_order_plant() {
    // speed loop as wired in the tracker: feedforward plus bounded PID
    let cfg = ControllerConfig::default();
    let mut pid = Pid::new(cfg.speed_pid);
    let (dt, tau, sp) = (0.05, 0.5, 0.7);
    let mut x = 0.0;
    let mut settled_at = None;
    for k in 0..400 {
        let u = sp + pid.step(sp, x, dt);
        x = u + (x - u) * (-dt / tau).exp();
        let inside = (x - sp).abs() <= 0.02 * sp;
        match (inside, settled_at) {
            (true, None) => settled_at = Some(k),
            (false, Some(_)) => settled_at = None,
            _ => {}
        }
    }
    let k = settled_at.expect("never settled");
    assert!(k as f64 * dt < 5.0, "settled after {} s", k as f64 * dt);
}

#[test]
fn dead_reckoning_straight_line() {
    let p = VehicleParams::default();
    let mut rel = Pose2::IDENTITY;
    for _ in 0..100 {
        rel = dead_reckon_update(&rel, 1.0, 0.0, 0.01, &p);
    }
    assert!((rel.x - 1.0).abs() < 1e-3 && rel.y.abs() < 1e-12);
}

#[test]
fn dead_reckoning_matches_ground_truth_exactly() {
    let p = VehicleParams::default();
    let sim = SimConfig::default();
    let mut tracker = Tracker::new(ControllerConfig::default(), p);
    let path: Vec<Point2> = (0..40).map(|i| {
        let a = 0.05 * i as f64;
        Point2::new(6.0 * a.sin(), 6.0 * (1.0 - a.cos()))
    }).collect();
    tracker.install(&path);
    let mut state = SimState::at_rest(Pose2::IDENTITY);
    for _ in 0..200 {
        let out = tracker.step(state.feedback(), sim.dt).unwrap();
        state = bicycle_step(&state, out.actuation, sim.dt, &p, &sim);
        assert_eq!(tracker.relative_pose(), state.ego);
    }
}

#[test]
fn exhausted_path_holds_and_flags() {
    let p = VehicleParams::default();
    let sim = SimConfig::default();
    let mut tracker = Tracker::new(ControllerConfig::default(), p);
    tracker.install(&straight(0.0, 3.0));
    let mut state = SimState::at_rest(Pose2::IDENTITY);
    let mut done = false;
    for _ in 0..400 {
        let out = tracker.step(state.feedback(), sim.dt).unwrap();
        assert!(out.actuation.steer.abs() <= p.max_steer);
        assert!(out.command.target_speed.abs() <= ControllerConfig::default().parking_speed);
        if out.finished {
            assert_eq!(out.command.target_speed, 0.0);
            done = true;
            break;
        }
        state = bicycle_step(&state, out.actuation, sim.dt, &p, &sim);
    }
    assert!(done);
    assert!((state.ego.x - 3.0).abs() < 0.05, "stopped at {}", state.ego.x);
}

#[test]
fn expert_passthrough_parks_across_scenes() {
    let p = VehicleParams::default();
    let planner = PlannerConfig::default();
    let ctl = ControllerConfig::default();
    let sim = SimConfig::default();
    let (mut ok, mut n, mut i) = (0, 0, 0u64);
    while n < 20 {
        let mut rng = substream(99, "test/passthrough", i);
        i += 1;
        let (scene, start) = random_scene(&mut rng, &SceneKind::ALL, &p);
        let Ok(path) = plan_expert_path(&start, scene.slot(), &scene.world, &p, &planner) else {
            continue;
        };
        n += 1;
        let r = run_episode(&Policy::Expert(path), &ctl, &scene.world, scene.target, &start, &p, &sim).unwrap();
        assert_ne!(r.outcome, Outcome::Collision);
        if r.outcome == Outcome::Success {
            ok += 1;
            assert!(r.position_error.unwrap() <= 0.3 && r.orientation_error.unwrap() <= 5.0);
        }
        // RK4 kinematics: trace length equals ∫|v| dt
        let len: f64 = r.trace.windows(2).map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y)).sum();
        let integral: f64 = r.trace.windows(2).map(|w| w[0].v.abs() * (w[1].t - w[0].t)).sum();
        assert!((len - integral).abs() <= 1e-6 * integral.max(1.0) + 1e-3, "{len} vs {integral}");
    }
    assert!(ok >= 19, "{ok}/20");
}

#[test]
fn episodes_are_deterministic() {
    let p = VehicleParams::default();
    let mut rng = substream(4, "test/determinism", 0);
    let (scene, start) = random_scene(&mut rng, &[SceneKind::B], &p);
    let path = plan_expert_path(&start, scene.slot(), &scene.world, &p, &PlannerConfig::default()).unwrap();
    let run = || {
        run_episode(
            &Policy::Expert(path.clone()),
            &ControllerConfig::default(),
            &scene.world,
            scene.target,
            &start,
            &p,
            &SimConfig::default(),
        )
        .unwrap()
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn reverse_chunk_behind_selects_reverse(y in -0.3..0.3f64, len in 2.0..6.0f64) {
        let p = VehicleParams::default();
        let mut tracker = Tracker::new(ControllerConfig::default(), p);
        let pts: Vec<Point2> = straight(y, len).into_iter().map(|q| Point2::new(-q.x, q.y)).collect();
        tracker.install(&pts);
        let out = tracker.step(ChassisFeedback::default(), 0.05).unwrap();
        prop_assert_eq!(out.command.gear, Gear::Reverse);
        prop_assert!(out.command.target_speed < 0.0);
    }
}
