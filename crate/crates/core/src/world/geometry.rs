//! Planar rigid-body geometry: points, SE(2) poses and convex polygons.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Wrapped difference `a − b` in (−π, π].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2 { x: v[0], y: v[1] }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    #[inline]
    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn rotate(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    #[inline]
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    #[inline]
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    #[inline]
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// SE(2) pose. `yaw` is kept wrapped to (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        yaw: 0.0,
    };

    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Pose2 {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }

    #[inline]
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Point2 {
        Point2::new(self.yaw.cos(), self.yaw.sin())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }

    /// `self ⊕ other`: `other` is expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let p = self.to_world(other.position());
        Pose2::new(p.x, p.y, self.yaw + other.yaw)
    }

    pub fn inverse(&self) -> Pose2 {
        let p = (-self.position()).rotate(-self.yaw);
        Pose2::new(p.x, p.y, -self.yaw)
    }

    /// Pose of `other` expressed in the frame of `self` (`self⁻¹ ⊕ other`).
    pub fn relative(&self, other: &Pose2) -> Pose2 {
        let p = self.to_ego(other.position());
        Pose2::new(p.x, p.y, other.yaw - self.yaw)
    }

    /// Expresses a world point in this frame: translate, then rotate by −yaw.
    #[inline]
    pub fn to_ego(&self, world_point: Point2) -> Point2 {
        (world_point - self.position()).rotate(-self.yaw)
    }

    #[inline]
    pub fn to_world(&self, ego_point: Point2) -> Point2 {
        ego_point.rotate(self.yaw) + self.position()
    }
}

pub fn se2_compose(a: &Pose2, b: &Pose2) -> Pose2 {
    a.compose(b)
}

pub fn to_ego(ego: &Pose2, world_point: Point2) -> Point2 {
    ego.to_ego(world_point)
}

pub fn to_world(ego: &Pose2, ego_point: Point2) -> Point2 {
    ego.to_world(ego_point)
}

/// Signed area (positive for counter-clockwise vertex order).
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += poly[i].cross(poly[(i + 1) % n]);
    }
    0.5 * acc
}

pub fn polygon_area(poly: &[Point2]) -> f64 {
    signed_area(poly).abs()
}

pub fn centroid(poly: &[Point2]) -> Point2 {
    let n = poly.len() as f64;
    let s = poly.iter().fold(Point2::ORIGIN, |acc, &p| acc + p);
    s * (1.0 / n)
}

fn on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    let ab = b - a;
    let ap = p - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return ap.norm() <= 1e-12;
    }
    let scale = len2.sqrt();
    if (ab.cross(ap) / scale).abs() > 1e-12 {
        return false;
    }
    let t = ap.dot(ab) / len2;
    (-1e-12..=1.0 + 1e-12).contains(&t)
}

/// Crossing-number point-in-polygon test. Points on the boundary count as inside.
pub fn point_in_polygon(p: Point2, poly: &[Point2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// True when every vertex turns the same way and the polygon has nonzero area.
pub fn is_convex(poly: &[Point2]) -> bool {
    let n = poly.len();
    if n < 3 || polygon_area(poly) <= 0.0 {
        return false;
    }
    let mut sign = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        let z = (b - a).cross(c - b);
        if z.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = z.signum();
        } else if z.signum() != sign {
            return false;
        }
    }
    sign != 0.0
}

fn project(poly: &[Point2], axis: Point2) -> (f64, f64) {
    poly.iter()
        .map(|p| p.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

/// Separating-axis test for two convex polygons. Touching boundaries count
/// as intersecting.
pub fn convex_polygons_intersect(a: &[Point2], b: &[Point2]) -> bool {
    sat_overlap(a, b, 0.0)
}

/// Like [`convex_polygons_intersect`] but requires interiors to overlap by
/// more than `tol` along every axis; shared edges do not count.
pub fn convex_interiors_overlap(a: &[Point2], b: &[Point2], tol: f64) -> bool {
    sat_overlap(a, b, tol)
}

fn sat_overlap(a: &[Point2], b: &[Point2], tol: f64) -> bool {
    for poly in [a, b] {
        let n = poly.len();
        for i in 0..n {
            let e = poly[(i + 1) % n] - poly[i];
            let len = e.norm();
            if len == 0.0 {
                continue;
            }
            let axis = Point2::new(-e.y / len, e.x / len);
            let (a0, a1) = project(a, axis);
            let (b0, b1) = project(b, axis);
            if a1 - b0 <= tol || b1 - a0 <= tol {
                if tol == 0.0 && (a1 == b0 || b1 == a0) {
                    continue;
                }
                return false;
            }
        }
    }
    true
}

/// Whether every vertex of `inner` lies inside the convex polygon `outer`.
pub fn convex_contains(outer: &[Point2], inner: &[Point2]) -> bool {
    inner.iter().all(|&p| point_in_polygon(p, outer))
}

/// Axis-aligned rectangle as a counter-clockwise polygon.
pub fn rect(min: Point2, max: Point2) -> Vec<Point2> {
    vec![
        Point2::new(min.x, min.y),
        Point2::new(max.x, min.y),
        Point2::new(max.x, max.y),
        Point2::new(min.x, max.y),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn close(a: &Pose2, b: &Pose2, tol: f64) -> bool {
        (a.x - b.x).abs() < tol && (a.y - b.y).abs() < tol && angle_diff(a.yaw, b.yaw).abs() < tol
    }

    #[test]
    fn wrap_stays_in_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-7.0), -7.0 + 2.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn compose_identity_and_quarter_turn() {
        let p = Pose2::new(1.5, -2.0, 0.3);
        assert_eq!(Pose2::IDENTITY.compose(&p), p);

        let a = Pose2::new(1.0, 0.0, PI / 2.0);
        let b = Pose2::new(1.0, 0.0, 0.0);
        let c = se2_compose(&a, &b);
        assert_abs_diff_eq!(c.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.y, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.yaw, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn to_ego_examples() {
        assert_eq!(to_ego(&Pose2::IDENTITY, Point2::new(3.0, 4.0)), Point2::new(3.0, 4.0));
        let q = to_ego(&Pose2::new(1.0, 1.0, PI / 2.0), Point2::new(1.0, 2.0));
        assert_abs_diff_eq!(q.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn point_in_polygon_basic() {
        let sq = rect(Point2::new(0.0, 0.0), Point2::new(2.0, 1.0));
        assert!(point_in_polygon(centroid(&sq), &sq));
        assert!(point_in_polygon(Point2::new(2.0, 0.5), &sq));
        assert!(point_in_polygon(Point2::new(0.0, 0.0), &sq));
        assert!(!point_in_polygon(Point2::new(100.0, 0.0), &sq));
    }

    /// Winding number by summing signed subtended angles; independent of the
    /// crossing-number implementation.
    fn winding_number(p: Point2, poly: &[Point2]) -> f64 {
        let n = poly.len();
        let mut total = 0.0;
        for i in 0..n {
            let a = poly[i] - p;
            let b = poly[(i + 1) % n] - p;
            total += a.cross(b).atan2(a.dot(b));
        }
        total / (2.0 * PI)
    }

    #[test]
    fn point_in_polygon_matches_winding_number() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            // random convex quad from a perturbed rotated rectangle
            let c = Point2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let w = rng.random_range(0.5..4.0);
            let h = rng.random_range(0.5..4.0);
            let yaw = rng.random_range(-PI..PI);
            let pose = Pose2::new(c.x, c.y, yaw);
            let quad: Vec<Point2> = rect(Point2::new(-w, -h), Point2::new(w, h))
                .into_iter()
                .map(|q| pose.to_world(q))
                .collect();
            for _ in 0..50 {
                let p = Point2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
                let wn = winding_number(p, &quad);
                // skip points numerically on the boundary
                let margin = (0..4)
                    .map(|i| {
                        let a = quad[i];
                        let b = quad[(i + 1) % 4];
                        ((b - a).cross(p - a) / (b - a).norm()).abs()
                    })
                    .fold(f64::INFINITY, f64::min);
                if margin < 1e-9 {
                    continue;
                }
                assert_eq!(point_in_polygon(p, &quad), wn.abs() > 0.5, "p={p:?}");
            }
        }
    }

    #[test]
    fn sat_detects_overlap_and_separation() {
        let a = rect(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0));
        let b = rect(Point2::new(0.5, 0.5), Point2::new(2.0, 2.0));
        let c = rect(Point2::new(1.5, 1.5), Point2::new(2.0, 2.0));
        let touching = rect(Point2::new(1.0, 0.0), Point2::new(2.0, 1.0));
        assert!(convex_polygons_intersect(&a, &b));
        assert!(!convex_polygons_intersect(&a, &c));
        assert!(convex_polygons_intersect(&a, &touching));
        assert!(!convex_interiors_overlap(&a, &touching, 1e-9));
        assert!(convex_interiors_overlap(&a, &b, 1e-9));
    }

    fn arb_pose() -> impl Strategy<Value = Pose2> {
        (-50.0..50.0f64, -50.0..50.0f64, -PI..PI).prop_map(|(x, y, t)| Pose2::new(x, y, t))
    }

    proptest! {
        #[test]
        fn se2_group_laws(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!(close(&left, &right, 1e-12));
            prop_assert!(close(&a.compose(&a.inverse()), &Pose2::IDENTITY, 1e-12));
            prop_assert!(close(&a.inverse().compose(&a), &Pose2::IDENTITY, 1e-12));
        }

        #[test]
        fn ego_world_round_trip(a in arb_pose(), x in -30.0..30.0f64, y in -30.0..30.0f64) {
            let p = Point2::new(x, y);
            let q = to_ego(&a, to_world(&a, p));
            prop_assert!((q - p).norm() < 1e-12);
            let r = to_world(&a, to_ego(&a, p));
            prop_assert!((r - p).norm() < 1e-12);
        }

        #[test]
        fn wrapped_yaw_in_range(t in -100.0..100.0f64) {
            let w = wrap_angle(t);
            prop_assert!(w > -PI && w <= PI);
        }
    }
}
