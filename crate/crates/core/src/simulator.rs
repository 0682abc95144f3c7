//! Closed-loop kinematic bicycle simulation with first-order actuator lags,
//! collision checks and parking outcome classification.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{Actuation, ChassisFeedback, ControlTraceRow, ControllerConfig, Tracker};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::sensing::{render_surround_labels, LabelImage};
use crate::world::{
    angle_diff, convex_polygons_intersect, point_in_polygon, vehicle_footprint, GarageWorld, Point2, Pose2,
    VehicleParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Integration step, seconds.
    pub dt: f64,
    pub time_limit: f64,
    /// Steering actuator time constant, seconds.
    pub steer_lag: f64,
    /// Speed actuator time constant, seconds.
    pub speed_lag: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.05,
            time_limit: 120.0,
            steer_lag: 0.2,
            speed_lag: 0.5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.time_limit >= 0.0 && self.steer_lag > 0.0 && self.speed_lag > 0.0) {
            return Err(Error::invalid("sim config", format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub ego: Pose2,
    pub speed: f64,
    pub steer: f64,
    pub t: f64,
}

impl SimState {
    pub fn at_rest(ego: Pose2) -> SimState {
        SimState {
            ego,
            speed: 0.0,
            steer: 0.0,
            t: 0.0,
        }
    }

    pub fn feedback(&self) -> ChassisFeedback {
        ChassisFeedback {
            speed: self.speed,
            steer: self.steer,
        }
    }
}

/// One RK4 step of `ẋ = v cos θ, ẏ = v sin θ, θ̇ = v tan δ / L` with speed and
/// steering held over the step. Zero speed leaves the pose untouched.
pub fn kinematic_step(pose: &Pose2, speed: f64, steer: f64, dt: f64, wheelbase: f64) -> Pose2 {
    if speed == 0.0 {
        return *pose;
    }
    let w = speed * steer.tan() / wheelbase;
    let f = |yaw: f64| (speed * yaw.cos(), speed * yaw.sin());
    let th = pose.yaw;
    let (x1, y1) = f(th);
    let (x2, y2) = f(th + 0.5 * dt * w);
    let (x3, y3) = f(th + 0.5 * dt * w);
    let (x4, y4) = f(th + dt * w);
    Pose2::new(
        pose.x + dt / 6.0 * (x1 + 2.0 * x2 + 2.0 * x3 + x4),
        pose.y + dt / 6.0 * (y1 + 2.0 * y2 + 2.0 * y3 + y4),
        th + dt * w,
    )
}

/// Advances the plant: pose by [`kinematic_step`] on the current speed and
/// steer, then both actuators relax exactly toward their commands.
pub fn bicycle_step(state: &SimState, act: Actuation, dt: f64, params: &VehicleParams, cfg: &SimConfig) -> SimState {
    let ego = kinematic_step(&state.ego, state.speed, state.steer, dt, params.wheelbase);
    let relax = |x: f64, target: f64, tau: f64| target + (x - target) * (-dt / tau).exp();
    let steer_cmd = act.steer.clamp(-params.max_steer, params.max_steer);
    let speed_cmd = act.speed.clamp(-params.max_speed, params.max_speed);
    SimState {
        ego,
        speed: relax(state.speed, speed_cmd, cfg.speed_lag),
        steer: relax(state.steer, steer_cmd, cfg.steer_lag).clamp(-params.max_steer, params.max_steer),
        t: state.t + dt,
    }
}

/// True iff the vehicle footprint intersects an obstacle.
pub fn check_collision(pose: &Pose2, params: &VehicleParams, world: &GarageWorld) -> bool {
    let fp = vehicle_footprint(pose, params);
    world
        .obstacles
        .iter()
        .any(|ob| convex_polygons_intersect(&fp, &ob.footprint))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    WrongSlot,
    Violation,
    Collision,
    Timeout,
}

impl Outcome {
    pub const ALL: [Outcome; 5] = [
        Outcome::Success,
        Outcome::WrongSlot,
        Outcome::Violation,
        Outcome::Collision,
        Outcome::Timeout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::WrongSlot => "wrong_slot",
            Outcome::Violation => "violation",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parked {
    Moving,
    Success,
    Violation,
    WrongSlot,
    /// Stopped with the footprint center outside every slot.
    Outside,
}

/// Parking assessment against slot `target` of `world`.
///
/// Stopped means `|speed| < 0.02`. Success needs the whole footprint inside
/// the target; a footprint centered in the target but protruding is a
/// violation; a footprint centered in any other slot is a wrong slot.
pub fn check_parked(pose: &Pose2, speed: f64, world: &GarageWorld, target: usize, params: &VehicleParams) -> Parked {
    if speed.abs() >= 0.02 {
        return Parked::Moving;
    }
    let fp = vehicle_footprint(pose, params);
    let center = pose.to_world(Point2::new(params.center_offset(), 0.0));
    let slot = &world.slots[target];
    if fp.iter().all(|&c| point_in_polygon(c, &slot.corners)) {
        return Parked::Success;
    }
    if point_in_polygon(center, &slot.corners) {
        return Parked::Violation;
    }
    if world
        .slots
        .iter()
        .enumerate()
        .any(|(i, s)| i != target && point_in_polygon(center, &s.corners))
    {
        return Parked::WrongSlot;
    }
    Parked::Outside
}

/// What produces trajectories during an episode.
pub enum Policy<'a> {
    /// Replays a world-frame expert path once (controller validation).
    Expert(Vec<Pose2>),
    /// Renders the surround view and runs the planner at every replan.
    Model(&'a Model),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub steer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub outcome: Outcome,
    pub final_pose: Pose2,
    /// Meters; present for success and violation.
    pub position_error: Option<f64>,
    /// Degrees; present for success and violation.
    pub orientation_error: Option<f64>,
    pub duration: f64,
    pub replans: usize,
    pub trace: Vec<TraceRow>,
    pub control: Vec<ControlTraceRow>,
}

/// Consecutive replans that produce nothing to drive before giving up.
const MAX_IDLE_PLANS: usize = 3;

fn plan_points(policy: &Policy, world: &GarageWorld, target: usize, ego: &Pose2) -> Result<Vec<Point2>> {
    match policy {
        Policy::Expert(path) => Ok(path.iter().map(|p| ego.to_ego(p.position())).collect()),
        Policy::Model(model) => {
            let labels: Vec<LabelImage> = render_surround_labels(world, ego, &model.config().rig);
            let images: Vec<_> = labels.iter().map(LabelImage::to_image).collect();
            let decoded = model.infer_trajectory(&images, &world.slots[target], ego)?;
            let mut pts = vec![Point2::ORIGIN];
            pts.extend(decoded.points);
            Ok(pts)
        }
    }
}

/// Runs one closed-loop episode until the vehicle parks, collides, leaves
/// the map, or the time limit passes. Deterministic for fixed inputs.
pub fn run_episode(
    policy: &Policy,
    controller: &ControllerConfig,
    world: &GarageWorld,
    target: usize,
    start: &Pose2,
    params: &VehicleParams,
    sim: &SimConfig,
) -> Result<EpisodeResult> {
    sim.validate()?;
    controller.validate()?;
    if target >= world.slots.len() {
        return Err(Error::contract(format!("target slot {target} does not exist")));
    }
    let slot = &world.slots[target];
    let mut state = SimState::at_rest(*start);
    let mut trace = vec![TraceRow {
        t: 0.0,
        x: start.x,
        y: start.y,
        yaw: start.yaw,
        v: 0.0,
        steer: 0.0,
    }];
    let mut control = Vec::new();
    let mut tracker = Tracker::new(controller.clone(), *params);
    let replanning = matches!(policy, Policy::Model(_));
    let mut replans = 0;
    let mut idle_plans = 0;
    let mut need_plan = true;
    let finish = |outcome: Outcome, state: &SimState, trace, control, replans| {
        let errs = matches!(outcome, Outcome::Success | Outcome::Violation);
        EpisodeResult {
            outcome,
            final_pose: state.ego,
            position_error: errs.then(|| state.ego.position().distance(slot.target_pose.position())),
            orientation_error: errs.then(|| angle_diff(state.ego.yaw, slot.target_pose.yaw).abs().to_degrees()),
            duration: state.t,
            replans,
            trace,
            control,
        }
    };
    loop {
        // half a step of slack absorbs float drift in the accumulated time
        if state.t + 0.5 * sim.dt > sim.time_limit {
            return Ok(finish(Outcome::Timeout, &state, trace, control, replans));
        }
        if need_plan || (replanning && tracker.replan_due()) {
            let pts = plan_points(policy, world, target, &state.ego)?;
            tracker.install(&pts);
            replans += 1;
            need_plan = false;
        }
        let fb = state.feedback();
        let out = tracker.step(fb, sim.dt)?;
        control.push(ControlTraceRow {
            t: state.t,
            e: out.e,
            theta_e: out.theta_e,
            target_steer: out.command.target_steer,
            target_speed: out.command.target_speed,
            feedback: fb,
            gear: out.command.gear,
        });
        if out.finished {
            match check_parked(&state.ego, state.speed, world, target, params) {
                Parked::Success => return Ok(finish(Outcome::Success, &state, trace, control, replans)),
                Parked::Violation => return Ok(finish(Outcome::Violation, &state, trace, control, replans)),
                Parked::WrongSlot => return Ok(finish(Outcome::WrongSlot, &state, trace, control, replans)),
                Parked::Moving => {}
                Parked::Outside => {
                    // at rest outside every slot with nothing left to drive
                    idle_plans += 1;
                    if !replanning || idle_plans > MAX_IDLE_PLANS {
                        return Ok(finish(Outcome::Timeout, &state, trace, control, replans));
                    }
                    need_plan = true;
                }
            }
        } else {
            idle_plans = 0;
        }
        state = bicycle_step(&state, out.actuation, sim.dt, params, sim);
        trace.push(TraceRow {
            t: state.t,
            x: state.ego.x,
            y: state.ego.y,
            yaw: state.ego.yaw,
            v: state.speed,
            steer: state.steer,
        });
        let off_map = vehicle_footprint(&state.ego, params)
            .iter()
            .any(|&c| !world.in_bounds(c));
        if off_map || check_collision(&state.ego, params, world) {
            return Ok(finish(Outcome::Collision, &state, trace, control, replans));
        }
    }
}

/// Writes the state trace as CSV `t,x,y,yaw,v,steer,outcome`.
pub fn write_trace(path: impl AsRef<Path>, result: &EpisodeResult) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    writeln!(out, "t,x,y,yaw,v,steer,outcome").expect("vec write");
    for r in &result.trace {
        writeln!(
            out,
            "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            r.t,
            r.x,
            r.y,
            r.yaw,
            r.v,
            r.steer,
            result.outcome.name()
        )
        .expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{GroundMap, Obstacle, SlotSpec};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn empty_world() -> GarageWorld {
        GarageWorld {
            ground_map: GroundMap::new(10, 10, Point2::new(-50.0, -50.0), 10.0),
            obstacles: vec![],
            slots: vec![],
        }
    }

    #[test]
    fn straight_motion_is_exact() {
        let p = VehicleParams::default();
        let mut pose = Pose2::new(1.0, 2.0, 0.7);
        for _ in 0..20 {
            pose = kinematic_step(&pose, 1.0, 0.0, 0.05, p.wheelbase);
        }
        assert_abs_diff_eq!(pose.x, 1.0 + 0.7f64.cos(), epsilon = 1e-9);
        assert_abs_diff_eq!(pose.y, 2.0 + 0.7f64.sin(), epsilon = 1e-9);
    }

    #[test]
    fn constant_steer_traces_a_circle() {
        let p = VehicleParams::default();
        let delta = 0.4f64;
        let r = p.wheelbase / delta.tan();
        let dt = 0.05;
        let steps = (2.0 * std::f64::consts::PI * r / dt).ceil() as usize;
        let mut pose = Pose2::IDENTITY;
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            pose = kinematic_step(&pose, 1.0, delta, dt, p.wheelbase);
            worst = worst.max((pose.position().distance(Point2::new(0.0, r)) - r).abs());
        }
        assert!(worst < 1e-6, "radial deviation {worst}");
    }

    #[test]
    fn zero_speed_changes_only_time() {
        let p = VehicleParams::default();
        let s = SimState {
            ego: Pose2::new(1.0, 1.0, 0.2),
            speed: 0.0,
            steer: 0.1,
            t: 3.0,
        };
        let act = Actuation { speed: 0.0, steer: 0.1 };
        let n = bicycle_step(&s, act, 0.05, &p, &SimConfig::default());
        assert_eq!(n.ego, s.ego);
        assert_eq!((n.speed, n.steer), (s.speed, s.steer));
        assert_abs_diff_eq!(n.t, 3.05, epsilon = 1e-15);
    }

    #[test]
    fn collision_examples_and_sampling_oracle() {
        let p = VehicleParams::default();
        let mut w = empty_world();
        assert!(!check_collision(&Pose2::IDENTITY, &p, &w));
        w.obstacles.push(Obstacle::boxed(Point2::new(0.0, -0.5), Point2::new(1.0, 0.5), 1.0));
        assert!(check_collision(&Pose2::IDENTITY, &p, &w));

        // 10⁴-point sampling oracle over each polygon. Sampling can only
        // miss slivers, so check: sampled overlap ⇒ exact overlap, and
        // overlap of both shapes shrunk by 5 cm ⇒ sampled overlap.
        let grid = |poly: &[Point2]| -> Vec<Point2> {
            let mut pts = Vec::with_capacity(10_000);
            for i in 0..100 {
                for j in 0..100 {
                    let (u, v) = (i as f64 / 99.0, j as f64 / 99.0);
                    pts.push(poly[0] + (poly[1] - poly[0]) * u + (poly[3] - poly[0]) * v);
                }
            }
            pts
        };
        let shrunk_world = {
            let mut s = empty_world();
            s.obstacles
                .push(Obstacle::boxed(Point2::new(0.05, -0.45), Point2::new(0.95, 0.45), 1.0));
            s
        };
        let ob = w.obstacles[0].footprint.clone();
        let ob_pts = grid(&ob);
        let mut rng = crate::seed::substream(1, "collision-oracle", 0);
        let (mut hits, mut misses) = (0, 0);
        for _ in 0..200 {
            let pose = Pose2::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-3.0..3.0),
            );
            let fp = vehicle_footprint(&pose, &p);
            let sampled = grid(&fp).iter().any(|&q| point_in_polygon(q, &ob))
                || ob_pts.iter().any(|&q| point_in_polygon(q, &fp));
            let exact = check_collision(&pose, &p, &w);
            if sampled {
                assert!(exact, "sampled overlap missed at {pose:?}");
            }
            if check_collision(&pose, &p.inflated(-0.05), &shrunk_world) {
                assert!(sampled, "deep overlap not sampled at {pose:?}");
            }
            if exact {
                hits += 1;
            } else {
                misses += 1;
            }
        }
        assert!(hits > 10 && misses > 10);
    }

    fn lone_slot(params: &VehicleParams, width: f64) -> GarageWorld {
        let mut w = empty_world();
        w.slots
            .push(SlotSpec::rectangle(Point2::new(0.0, 0.0), 0.0, width, 5.4, params, true));
        w
    }

    #[test]
    fn parked_examples() {
        let p = VehicleParams {
            width: 2.0,
            ..VehicleParams::default()
        };
        let w = lone_slot(&p, 2.5);
        let target = w.slots[0].target_pose;
        assert_eq!(check_parked(&target, 0.0, &w, 0, &p), Parked::Success);
        let off = target.compose(&Pose2::new(0.0, 0.4, 0.0));
        assert_eq!(check_parked(&off, 0.0, &w, 0, &p), Parked::Violation);
        assert_eq!(check_parked(&target, 0.5, &w, 0, &p), Parked::Moving);
        let away = Pose2::new(20.0, 20.0, 0.0);
        assert_eq!(check_parked(&away, 0.0, &w, 0, &p), Parked::Outside);
    }

    #[test]
    fn zero_time_limit_times_out() {
        let p = VehicleParams::default();
        let w = lone_slot(&p, 2.6);
        let sim = SimConfig {
            time_limit: 0.0,
            ..SimConfig::default()
        };
        let r = run_episode(
            &Policy::Expert(vec![Pose2::new(-5.0, 0.0, 0.0), w.slots[0].target_pose]),
            &ControllerConfig::default(),
            &w,
            0,
            &Pose2::new(-5.0, 0.0, 0.0),
            &p,
            &sim,
        )
        .unwrap();
        assert_eq!(r.outcome, Outcome::Timeout);
        assert_eq!(r.duration, 0.0);
    }
}
