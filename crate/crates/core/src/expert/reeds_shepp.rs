//! Reeds-Shepp curves: shortest paths for a car with bounded curvature that
//! may drive forward and backward. Every word of the five families
//! (CSC, CCC, CCCC, CCSC, CCSCC) is evaluated under time-flip and reflection
//! symmetries; callers receive all admissible words sorted by length.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::world::{wrap_angle, Pose2};

const ZERO: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Steer {
    Left,
    Straight,
    Right,
}

/// One primitive: `length` is in units of the turning radius (radians for
/// arcs) and negative when driven in reverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub steer: Steer,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsPath {
    pub segments: Vec<Segment>,
    pub radius: f64,
}

impl RsPath {
    /// Total arc length in meters.
    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length.abs()).sum::<f64>() * self.radius
    }

    pub fn cusps(&self) -> usize {
        let moving: Vec<f64> = self
            .segments
            .iter()
            .filter(|s| s.length.abs() > ZERO)
            .map(|s| s.length.signum())
            .collect();
        moving.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Poses from `start` along the path with spacing at most `step` meters.
    /// Segment endpoints, and therefore every cusp, are sampled exactly.
    pub fn sample(&self, start: &Pose2, step: f64) -> Vec<Pose2> {
        let mut out = vec![*start];
        let mut cur = *start;
        for seg in &self.segments {
            let len = seg.length.abs() * self.radius;
            if len <= ZERO * self.radius {
                continue;
            }
            let n = (len / step).ceil().max(1.0) as usize;
            for k in 1..=n {
                let part = Segment {
                    steer: seg.steer,
                    length: seg.length * k as f64 / n as f64,
                };
                out.push(advance(&cur, part, self.radius));
            }
            cur = *out.last().expect("non-empty");
        }
        out
    }

    /// End pose reached from `start`.
    pub fn end_pose(&self, start: &Pose2) -> Pose2 {
        self.segments
            .iter()
            .fold(*start, |p, s| advance(&p, *s, self.radius))
    }
}

/// Moves `pose` along one primitive.
pub fn advance(pose: &Pose2, seg: Segment, radius: f64) -> Pose2 {
    let v = seg.length;
    let phi = pose.yaw;
    let (dx, dy, dphi) = match seg.steer {
        Steer::Left => ((phi + v).sin() - phi.sin(), -(phi + v).cos() + phi.cos(), v),
        Steer::Right => (-(phi - v).sin() + phi.sin(), (phi - v).cos() - phi.cos(), -v),
        Steer::Straight => (v * phi.cos(), v * phi.sin(), 0.0),
    };
    Pose2::new(pose.x + radius * dx, pose.y + radius * dy, phi + dphi)
}

fn polar(x: f64, y: f64) -> (f64, f64) {
    (x.hypot(y), y.atan2(x))
}

fn tau_omega(u: f64, v: f64, xi: f64, eta: f64, phi: f64) -> (f64, f64) {
    let delta = wrap_angle(u - v);
    let a = u.sin() - delta.sin();
    let b = u.cos() - delta.cos() - 1.0;
    let t1 = (eta * a - xi * b).atan2(xi * a + eta * b);
    let t2 = 2.0 * (delta.cos() - v.cos() - u.cos()) + 3.0;
    let tau = if t2 < 0.0 { wrap_angle(t1 + PI) } else { wrap_angle(t1) };
    (tau, wrap_angle(tau - u + v - phi))
}

fn lp_sp_lp(x: f64, y: f64, phi: f64) -> Option<[f64; 3]> {
    let (u, t) = polar(x - phi.sin(), y - 1.0 + phi.cos());
    if t >= -ZERO {
        let v = wrap_angle(phi - t);
        if v >= -ZERO {
            return Some([t, u, v]);
        }
    }
    None
}

fn lp_sp_rp(x: f64, y: f64, phi: f64) -> Option<[f64; 3]> {
    let (u1, t1) = polar(x + phi.sin(), y - 1.0 - phi.cos());
    let u1 = u1 * u1;
    if u1 >= 4.0 {
        let u = (u1 - 4.0).sqrt();
        let theta = 2.0f64.atan2(u);
        let t = wrap_angle(t1 + theta);
        let v = wrap_angle(t - phi);
        if t >= -ZERO && v >= -ZERO {
            return Some([t, u, v]);
        }
    }
    None
}

fn lp_rm_l(x: f64, y: f64, phi: f64) -> Option<[f64; 3]> {
    let (u1, theta) = polar(x - phi.sin(), y - 1.0 + phi.cos());
    if u1 <= 4.0 {
        let u = -2.0 * (0.25 * u1).asin();
        let t = wrap_angle(theta + 0.5 * u + PI);
        let v = wrap_angle(phi - t + u);
        if t >= -ZERO && u <= ZERO {
            return Some([t, u, v]);
        }
    }
    None
}

fn lp_rup_lum_rm(x: f64, y: f64, phi: f64) -> Option<[f64; 3]> {
    let xi = x + phi.sin();
    let eta = y - 1.0 - phi.cos();
    let rho = 0.25 * (2.0 + xi.hypot(eta));
    if rho <= 1.0 {
        let u = rho.acos();
        let (t, v) = tau_omega(u, -u, xi, eta, phi);
        if t >= -ZERO && v <= ZERO {
            return Some([t, u, v]);
        }
    }
    None
}

fn lp_rum_lum_rp(x: f64, y: f64, phi: f64) -> Option<[f64; 3]> {
    let xi = x + phi.sin();
    let eta = y - 1.0 - phi.cos();
    let rho = (20.0 - xi * xi - eta * eta) / 16.0;
    if (0.0..=1.0).contains(&rho) {
        let u = -rho.acos();
        if u >= -FRAC_PI_2 {
            let (t, v) = tau_omega(u, u, xi, eta, phi);
            if t >= -ZERO && v >= -ZERO {
                return Some([t, u, v]);
            }
        }
    }
    None
}

fn lp_rm_sm_lm(x: f64, y: f64, phi: f64) -> Option<[f64; 3]> {
    let (rho, theta) = polar(x - phi.sin(), y - 1.0 + phi.cos());
    if rho >= 2.0 {
        let r = (rho * rho - 4.0).sqrt();
        let u = 2.0 - r;
        let t = wrap_angle(theta + r.atan2(-2.0));
        let v = wrap_angle(phi - FRAC_PI_2 - t);
        if t >= -ZERO && u <= ZERO && v <= ZERO {
            return Some([t, u, v]);
        }
    }
    None
}

fn lp_rm_sm_rm(x: f64, y: f64, phi: f64) -> Option<[f64; 3]> {
    let xi = x + phi.sin();
    let eta = y - 1.0 - phi.cos();
    let (rho, theta) = polar(-eta, xi);
    if rho >= 2.0 {
        let t = theta;
        let u = 2.0 - rho;
        let v = wrap_angle(t + FRAC_PI_2 - phi);
        if t >= -ZERO && u <= ZERO && v <= ZERO {
            return Some([t, u, v]);
        }
    }
    None
}

fn lp_rm_s_lm_rp(x: f64, y: f64, phi: f64) -> Option<[f64; 3]> {
    let xi = x + phi.sin();
    let eta = y - 1.0 - phi.cos();
    let (rho, _) = polar(xi, eta);
    if rho >= 2.0 {
        let u = 4.0 - (rho * rho - 4.0).sqrt();
        if u <= ZERO {
            let t = wrap_angle(((4.0 - u) * xi - 2.0 * eta).atan2(-2.0 * xi + (u - 4.0) * eta));
            let v = wrap_angle(t - phi);
            if t >= -ZERO && v >= -ZERO {
                return Some([t, u, v]);
            }
        }
    }
    None
}

use Steer::{Left as L, Right as R, Straight as S};

struct Words(Vec<Vec<Segment>>);

impl Words {
    fn push(&mut self, steer: &[Steer], lengths: &[f64]) {
        self.0.push(
            steer
                .iter()
                .zip(lengths)
                .map(|(&steer, &length)| Segment { steer, length })
                .collect(),
        );
    }
}

fn swap_lr(steer: &[Steer]) -> Vec<Steer> {
    steer
        .iter()
        .map(|s| match s {
            L => R,
            R => L,
            S => S,
        })
        .collect()
}

type Base = fn(f64, f64, f64) -> Option<[f64; 3]>;

/// Applies the four symmetries (identity, time-flip, reflection, both) to a
/// base formula. `lengths` maps the base solution to segment lengths.
fn symmetric(
    words: &mut Words,
    base: Base,
    steer: &[Steer],
    (x, y, phi): (f64, f64, f64),
    lengths: impl Fn([f64; 3]) -> Vec<f64>,
) {
    let reflected = swap_lr(steer);
    let neg = |v: Vec<f64>| v.into_iter().map(|l| -l).collect::<Vec<_>>();
    if let Some(s) = base(x, y, phi) {
        words.push(steer, &lengths(s));
    }
    if let Some(s) = base(-x, y, -phi) {
        words.push(steer, &neg(lengths(s)));
    }
    if let Some(s) = base(x, -y, -phi) {
        words.push(&reflected, &lengths(s));
    }
    if let Some(s) = base(-x, -y, phi) {
        words.push(&reflected, &neg(lengths(s)));
    }
}

fn all_words(x: f64, y: f64, phi: f64) -> Words {
    let mut w = Words(Vec::new());
    let fwd = (x, y, phi);
    // backward variants run the word in reverse order from the goal
    let back = (x * phi.cos() + y * phi.sin(), x * phi.sin() - y * phi.cos(), phi);

    // CSC
    symmetric(&mut w, lp_sp_lp, &[L, S, L], fwd, |[t, u, v]| vec![t, u, v]);
    symmetric(&mut w, lp_sp_rp, &[L, S, R], fwd, |[t, u, v]| vec![t, u, v]);
    // CCC
    symmetric(&mut w, lp_rm_l, &[L, R, L], fwd, |[t, u, v]| vec![t, u, v]);
    symmetric(&mut w, lp_rm_l, &[L, R, L], back, |[t, u, v]| vec![v, u, t]);
    // CCCC
    symmetric(&mut w, lp_rup_lum_rm, &[L, R, L, R], fwd, |[t, u, v]| vec![t, u, -u, v]);
    symmetric(&mut w, lp_rum_lum_rp, &[L, R, L, R], fwd, |[t, u, v]| vec![t, u, u, v]);
    // CCSC
    let h = -FRAC_PI_2;
    symmetric(&mut w, lp_rm_sm_lm, &[L, R, S, L], fwd, |[t, u, v]| vec![t, h, u, v]);
    symmetric(&mut w, lp_rm_sm_rm, &[L, R, S, R], fwd, |[t, u, v]| vec![t, h, u, v]);
    symmetric(&mut w, lp_rm_sm_lm, &[L, S, R, L], back, |[t, u, v]| vec![v, u, h, t]);
    symmetric(&mut w, lp_rm_sm_rm, &[R, S, R, L], back, |[t, u, v]| vec![v, u, h, t]);
    // CCSCC
    symmetric(&mut w, lp_rm_s_lm_rp, &[L, R, S, L, R], fwd, |[t, u, v]| {
        vec![t, h, u, h, v]
    });
    w
}

/// All Reeds-Shepp words joining `start` to `goal` for turning radius
/// `radius`, shortest first. Words whose integrated end pose misses the goal
/// by more than 1e-6 m or 1e-6 rad are discarded.
pub fn reeds_shepp_paths(start: &Pose2, goal: &Pose2, radius: f64) -> Vec<RsPath> {
    let rel = start.relative(goal);
    let (x, y, phi) = (rel.x / radius, rel.y / radius, rel.yaw);
    let mut paths: Vec<RsPath> = all_words(x, y, phi)
        .0
        .into_iter()
        .map(|segments| RsPath { segments, radius })
        .filter(|p| {
            let end = p.end_pose(start);
            end.position().distance(goal.position()) < 1e-6 && wrap_angle(end.yaw - goal.yaw).abs() < 1e-6
        })
        .collect();
    paths.sort_by(|a, b| a.length().total_cmp(&b.length()));
    paths
}

/// Shortest Reeds-Shepp path, `None` only if no word closes numerically.
pub fn reeds_shepp(start: &Pose2, goal: &Pose2, radius: f64) -> Option<RsPath> {
    reeds_shepp_paths(start, goal, radius).into_iter().next()
}

/// Signed curvature (1/m) at each primitive type, for property checks.
pub fn segment_curvature(seg: &Segment, radius: f64) -> f64 {
    match seg.steer {
        Steer::Left => 1.0 / radius,
        Steer::Right => -1.0 / radius,
        Steer::Straight => 0.0,
    }
}
