//! Trajectory tracking without global localization: rear-wheel-feedback
//! steering on a dead-reckoned pose relative to the plan origin, a speed
//! schedule with terminal taper, and PID inner loops on steer and speed.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::kinematic_step;
use crate::world::{wrap_angle, Point2, Pose2, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gear {
    Forward,
    Reverse,
}

impl Gear {
    pub fn sign(self) -> f64 {
        match self {
            Gear::Forward => 1.0,
            Gear::Reverse => -1.0,
        }
    }

    fn flipped(self) -> Gear {
        match self {
            Gear::Forward => Gear::Reverse,
            Gear::Reverse => Gear::Forward,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Gear::Forward => "forward",
            Gear::Reverse => "reverse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChassisFeedback {
    /// Signed speed, m/s.
    pub speed: f64,
    /// Front wheel angle, radians.
    pub steer: f64,
}

/// Upper-level command: what the vehicle should do.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    pub target_steer: f64,
    pub target_speed: f64,
    pub gear: Gear,
}

/// Inner-loop output handed to the actuators.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Actuation {
    pub speed: f64,
    pub steer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RwfGains {
    pub k_theta: f64,
    pub k_e: f64,
}

impl Default for RwfGains {
    fn default() -> Self {
        RwfGains { k_theta: 1.0, k_e: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Anti-windup bound on the integral state.
    pub integral_limit: f64,
    /// Bound on the correction added to the feedforward.
    pub output_limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pid {
    pub gains: PidGains,
    integral: f64,
    prev_error: Option<f64>,
}

impl Pid {
    pub fn new(gains: PidGains) -> Pid {
        Pid {
            gains,
            integral: 0.0,
            prev_error: None,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = None;
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// `u = Kp·err + Ki·∫err + Kd·Δerr/dt`, with the integral clamped and
    /// the output limited. The derivative is zero on the first step.
    pub fn step(&mut self, setpoint: f64, feedback: f64, dt: f64) -> f64 {
        assert!(dt > 0.0, "pid step needs dt > 0");
        let g = self.gains;
        let err = setpoint - feedback;
        self.integral = (self.integral + err * dt).clamp(-g.integral_limit, g.integral_limit);
        let deriv = self.prev_error.map_or(0.0, |p| (err - p) / dt);
        self.prev_error = Some(err);
        (g.kp * err + g.ki * self.integral + g.kd * deriv).clamp(-g.output_limit, g.output_limit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub rwf: RwfGains,
    /// Cruise speed, m/s; also the command limit.
    pub parking_speed: f64,
    /// Speed tapers linearly inside this distance to a stop, meters.
    pub taper_distance: f64,
    /// Floor of the tapered speed, m/s.
    pub min_speed: f64,
    /// A run counts as finished within this distance of its end, meters.
    pub end_tolerance: f64,
    /// Braking lead: the stop command is issued this many seconds of travel
    /// before the end of a run.
    pub brake_lead: f64,
    /// Below this speed the vehicle counts as stopped, m/s.
    pub stop_speed: f64,
    /// Replan when the cross-track error exceeds this, meters.
    pub replan_cross_track: f64,
    /// Replan at least this often, seconds.
    pub replan_period: f64,
    pub speed_pid: PidGains,
    pub steer_pid: PidGains,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            rwf: RwfGains::default(),
            parking_speed: 0.7,
            taper_distance: 1.0,
            min_speed: 0.1,
            end_tolerance: 0.03,
            brake_lead: 0.25,
            stop_speed: 0.02,
            replan_cross_track: 0.5,
            replan_period: 3.0,
            speed_pid: PidGains {
                kp: 0.5,
                ki: 0.2,
                kd: 0.0,
                integral_limit: 0.1,
                output_limit: 0.3,
            },
            steer_pid: PidGains {
                kp: 0.5,
                ki: 0.0,
                kd: 0.0,
                integral_limit: 0.2,
                output_limit: 0.2,
            },
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.rwf.k_theta,
            self.rwf.k_e,
            self.parking_speed,
            self.taper_distance,
            self.end_tolerance,
            self.stop_speed,
            self.replan_cross_track,
            self.replan_period,
        ];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.min_speed < 0.0 || self.brake_lead < 0.0 {
            return Err(Error::invalid("controller config", format!("{self:?}")));
        }
        Ok(())
    }
}

/// Tracking errors and the resulting steering angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwfTerms {
    pub steer: f64,
    /// Signed lateral error, left of the path positive.
    pub e: f64,
    /// Heading error, vehicle yaw minus path yaw.
    pub theta_e: f64,
    /// Path curvature at the nearest point, in the vehicle-heading sense.
    pub kappa: f64,
    /// Arc length left from the nearest point to the end of the path.
    pub remaining: f64,
}

struct Projection {
    seg: usize,
    t: f64,
    point: Point2,
}

/// Nearest point on the polyline; the first and last segments extend
/// beyond their ends.
fn project(path: &[Point2], p: Point2) -> Projection {
    let last = path.len() - 2;
    let mut best = Projection {
        seg: 0,
        t: 0.0,
        point: path[0],
    };
    let mut best_d = f64::INFINITY;
    for k in 0..=last {
        let a = path[k];
        let ab = path[k + 1] - a;
        let len2 = ab.dot(ab);
        let mut t = if len2 > 0.0 { (p - a).dot(ab) / len2 } else { 0.0 };
        let lo = if k == 0 { f64::NEG_INFINITY } else { 0.0 };
        let hi = if k == last { f64::INFINITY } else { 1.0 };
        t = t.clamp(lo, hi);
        let q = a + ab * t;
        let d = q.distance(p);
        if d < best_d {
            best_d = d;
            best = Projection { seg: k, t, point: q };
        }
    }
    best
}

/// Signed curvature of the traversal at each vertex (circle through the
/// vertex and its neighbors); end vertices copy their neighbor.
fn vertex_curvatures(path: &[Point2]) -> Vec<f64> {
    let n = path.len();
    let mut k = vec![0.0; n];
    for i in 1..n.saturating_sub(1) {
        let a = path[i] - path[i - 1];
        let b = path[i + 1] - path[i];
        let c = path[i + 1] - path[i - 1];
        let den = a.norm() * b.norm() * c.norm();
        k[i] = if den > 1e-12 { 2.0 * a.cross(b) / den } else { 0.0 };
    }
    if n >= 3 {
        k[0] = k[1];
        k[n - 1] = k[n - 2];
    }
    k
}

/// Unit traversal direction at each vertex: the central chord inside the
/// path, the adjacent segment at its ends.
fn vertex_tangents(path: &[Point2]) -> Vec<Point2> {
    let n = path.len();
    (0..n)
        .map(|i| {
            let d = path[(i + 1).min(n - 1)] - path[i.saturating_sub(1)];
            let len = d.norm();
            if len > 1e-12 {
                d * (1.0 / len)
            } else {
                d
            }
        })
        .collect()
}

/// Rear-wheel feedback steering for one single-direction run.
///
/// With lateral error `e`, heading error `θe` and curvature `κ`,
/// `ω = v·κ·cos θe/(1 − κ·e) − kθ·|v|·θe − ke·v·(sin θe/θe)·e` and the
/// steering angle is `atan(ω·L/v)`. Only the sign of `v` enters `ω/v`, so
/// the commanded direction is used and standstill is well defined.
pub fn rwf_steer(path: &[Point2], pose: &Pose2, gear: Gear, params: &VehicleParams, gains: &RwfGains) -> Result<RwfTerms> {
    if path.len() < 2 {
        return Err(Error::contract("rwf needs at least two path points"));
    }
    let proj = project(path, pose.position());
    let a = path[proj.seg];
    let b = path[proj.seg + 1];
    let d = b - a;
    if d.norm() < 1e-12 {
        return Err(Error::contract("degenerate path segment"));
    }
    let travel = d * (1.0 / d.norm());
    let t = proj.t.clamp(0.0, 1.0);
    let tv = vertex_tangents(path);
    let blend = tv[proj.seg] * (1.0 - t) + tv[proj.seg + 1] * t;
    let smooth = if blend.norm() > 1e-9 { blend * (1.0 / blend.norm()) } else { travel };
    let sgn = gear.sign();
    // path tangent in the direction the vehicle's nose points
    let tangent = smooth * sgn;
    let path_yaw = tangent.y.atan2(tangent.x);
    let e = tangent.cross(pose.position() - proj.point);
    let theta_e = wrap_angle(pose.yaw - path_yaw);
    let kv = vertex_curvatures(path);
    let kappa = sgn * ((1.0 - t) * kv[proj.seg] + t * kv[proj.seg + 1]);
    let mut remaining = (b - proj.point).dot(travel);
    for w in path[proj.seg + 1..].windows(2) {
        remaining += w[0].distance(w[1]);
    }
    let den = 1.0 - kappa * e;
    let max = params.max_steer;
    let steer = if den <= 0.0 {
        -e.signum() * sgn * max
    } else {
        let sinc = if theta_e.abs() < 1e-9 { 1.0 } else { theta_e.sin() / theta_e };
        let ratio = kappa * theta_e.cos() / den - gains.k_theta * sgn * theta_e - gains.k_e * sinc * e;
        (ratio * params.wheelbase).atan().clamp(-max, max)
    };
    Ok(RwfTerms {
        steer,
        e,
        theta_e,
        kappa,
        remaining,
    })
}

/// Advances the pose relative to the plan origin by one step of the same
/// kinematic integrator the simulator uses.
pub fn dead_reckon_update(rel: &Pose2, speed: f64, steer: f64, dt: f64, params: &VehicleParams) -> Pose2 {
    assert!(dt > 0.0, "dead reckoning needs dt > 0");
    kinematic_step(rel, speed, steer, dt, params.wheelbase)
}

/// Splits a waypoint list at direction reversals (turns sharper than 120°)
/// and drops repeated points.
pub fn split_runs(points: &[Point2]) -> Vec<Vec<Point2>> {
    let mut pts: Vec<Point2> = Vec::with_capacity(points.len());
    for &p in points {
        if pts.last().is_none_or(|q: &Point2| q.distance(p) > 1e-3) {
            pts.push(p);
        }
    }
    if pts.len() < 2 {
        return Vec::new();
    }
    let mut runs = vec![vec![pts[0], pts[1]]];
    for i in 2..pts.len() {
        let a = pts[i - 1] - pts[i - 2];
        let b = pts[i] - pts[i - 1];
        let cos = a.dot(b) / (a.norm() * b.norm());
        if cos < -0.5 {
            runs.push(vec![pts[i - 1]]);
        }
        runs.last_mut().expect("non-empty").push(pts[i]);
    }
    runs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Driving,
    /// Stopping at the end of a run before reversing direction.
    Switching,
    Finished,
}

/// Per-step controller output with the quantities worth logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub command: ControlCommand,
    pub actuation: Actuation,
    pub e: f64,
    pub theta_e: f64,
    /// The last run has been driven to its end and the vehicle stopped.
    pub finished: bool,
}

/// Single-owner tracking state: the active plan in its origin frame, the
/// dead-reckoned pose in that frame and the inner-loop PIDs.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub config: ControllerConfig,
    pub params: VehicleParams,
    runs: Vec<Vec<Point2>>,
    run: usize,
    gear: Gear,
    phase: Phase,
    rel: Pose2,
    since_plan: f64,
    last_e: f64,
    speed_pid: Pid,
    steer_pid: Pid,
    last_steer: f64,
}

impl Tracker {
    pub fn new(config: ControllerConfig, params: VehicleParams) -> Tracker {
        let speed_pid = Pid::new(config.speed_pid);
        let steer_pid = Pid::new(config.steer_pid);
        Tracker {
            config,
            params,
            runs: Vec::new(),
            run: 0,
            gear: Gear::Forward,
            phase: Phase::Finished,
            rel: Pose2::IDENTITY,
            since_plan: 0.0,
            last_e: 0.0,
            speed_pid,
            steer_pid,
            last_steer: 0.0,
        }
    }

    /// Installs a plan expressed in the current vehicle frame and resets the
    /// relative pose. Plans with fewer than two distinct points finish
    /// immediately.
    pub fn install(&mut self, points: &[Point2]) {
        self.runs = split_runs(points);
        self.run = 0;
        self.rel = Pose2::IDENTITY;
        self.since_plan = 0.0;
        self.last_e = 0.0;
        if let Some(first) = self.runs.first() {
            let d = first[1] - first[0];
            self.gear = if d.x >= 0.0 { Gear::Forward } else { Gear::Reverse };
            self.phase = Phase::Driving;
        } else {
            self.phase = Phase::Finished;
        }
    }

    /// Dead-reckoned pose relative to the plan origin.
    pub fn relative_pose(&self) -> Pose2 {
        self.rel
    }

    pub fn time_since_plan(&self) -> f64 {
        self.since_plan
    }

    pub fn cross_track_error(&self) -> f64 {
        self.last_e.abs()
    }

    pub fn gear(&self) -> Gear {
        self.gear
    }

    pub fn has_plan(&self) -> bool {
        !self.runs.is_empty()
    }

    /// Replanning is due on large cross-track error or after the period.
    pub fn replan_due(&self) -> bool {
        self.cross_track_error() > self.config.replan_cross_track || self.since_plan >= self.config.replan_period
    }

    fn hold(&mut self, fb: &ChassisFeedback, dt: f64, steer: f64) -> Actuation {
        let sgn = self.gear.sign();
        let speed = self.speed_pid.step(0.0, fb.speed, dt);
        // braking never pushes through zero into the opposite direction
        let speed = if sgn > 0.0 { speed.max(0.0) } else { speed.min(0.0) };
        Actuation {
            speed: if fb.speed.abs() < self.config.stop_speed { 0.0 } else { speed },
            steer,
        }
    }

    /// One control period: command from the current relative pose, then
    /// dead reckoning over `dt` with the measured chassis state.
    pub fn step(&mut self, fb: ChassisFeedback, dt: f64) -> Result<ControlOutput> {
        if !(dt > 0.0) {
            return Err(Error::contract("controller step needs dt > 0"));
        }
        let cfg = self.config.clone();
        let max = self.params.max_steer;
        let mut terms = None;
        if self.phase == Phase::Driving {
            let t = rwf_steer(&self.runs[self.run], &self.rel, self.gear, &self.params, &cfg.rwf)?;
            let lead = cfg.end_tolerance.max(fb.speed.abs() * cfg.brake_lead);
            if t.remaining <= lead {
                self.phase = if self.run + 1 < self.runs.len() {
                    Phase::Switching
                } else {
                    Phase::Finished
                };
            }
            terms = Some(t);
        }
        if self.phase == Phase::Switching && fb.speed.abs() < cfg.stop_speed {
            self.run += 1;
            self.gear = self.gear.flipped();
            self.phase = Phase::Driving;
            self.speed_pid.reset();
            terms = Some(rwf_steer(&self.runs[self.run], &self.rel, self.gear, &self.params, &cfg.rwf)?);
        }
        let sgn = self.gear.sign();
        let (command, actuation) = match (self.phase, terms) {
            (Phase::Driving, Some(t)) => {
                self.last_steer = t.steer;
                let v = (cfg.parking_speed * t.remaining / cfg.taper_distance).clamp(cfg.min_speed, cfg.parking_speed);
                let target_speed = sgn * v;
                let command = ControlCommand {
                    target_steer: t.steer,
                    target_speed,
                    gear: self.gear,
                };
                let speed = target_speed + self.speed_pid.step(target_speed, fb.speed, dt);
                let speed = if sgn > 0.0 {
                    speed.clamp(0.0, cfg.parking_speed)
                } else {
                    speed.clamp(-cfg.parking_speed, 0.0)
                };
                let steer = (t.steer + self.steer_pid.step(t.steer, fb.steer, dt)).clamp(-max, max);
                (command, Actuation { speed, steer })
            }
            _ => {
                let steer = self.last_steer;
                let command = ControlCommand {
                    target_steer: steer,
                    target_speed: 0.0,
                    gear: self.gear,
                };
                (command, self.hold(&fb, dt, steer))
            }
        };
        if let Some(t) = terms {
            self.last_e = t.e;
        }
        let finished = self.phase == Phase::Finished && fb.speed.abs() < cfg.stop_speed;
        self.rel = dead_reckon_update(&self.rel, fb.speed, fb.steer, dt, &self.params);
        self.since_plan += dt;
        Ok(ControlOutput {
            command,
            actuation,
            e: terms.map_or(0.0, |t| t.e),
            theta_e: terms.map_or(0.0, |t| t.theta_e),
            finished,
        })
    }
}

/// One row of the control trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlTraceRow {
    pub t: f64,
    pub e: f64,
    pub theta_e: f64,
    pub target_steer: f64,
    pub target_speed: f64,
    pub feedback: ChassisFeedback,
    pub gear: Gear,
}

pub fn write_control_trace(path: impl AsRef<Path>, rows: &[ControlTraceRow]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    writeln!(out, "t,e,theta_e,target_steer,target_speed,feedback_speed,feedback_steer,gear").expect("vec write");
    for r in rows {
        writeln!(
            out,
            "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            r.t,
            r.e,
            r.theta_e,
            r.target_steer,
            r.target_speed,
            r.feedback.speed,
            r.feedback.steer,
            r.gear.name()
        )
        .expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
