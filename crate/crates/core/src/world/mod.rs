//! Garage world model: vehicle geometry, parking slots, obstacles and the
//! semantic ground map shared by the renderer, planner and simulator.
//!
//! All vehicle poses use the rear-axle center as reference point.

mod geometry;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use geometry::{
    angle_diff, centroid, convex_contains, convex_interiors_overlap, convex_polygons_intersect,
    is_convex, point_in_polygon, polygon_area, rect, se2_compose, signed_area, to_ego, to_world,
    wrap_angle, Point2, Pose2,
};

pub const WORLD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub width: f64,
    pub length: f64,
    pub rear_overhang: f64,
    pub max_steer: f64,
    pub max_speed: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            wheelbase: 2.7,
            width: 1.9,
            length: 4.6,
            rear_overhang: 0.9,
            max_steer: 0.6,
            max_speed: 2.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.wheelbase,
            self.width,
            self.length,
            self.rear_overhang,
            self.max_steer,
            self.max_speed,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("vehicle params", "all fields must be positive"));
        }
        if self.max_steer >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::invalid("vehicle params", "max_steer must be < π/2"));
        }
        if self.rear_overhang >= self.length {
            return Err(Error::invalid("vehicle params", "rear_overhang must be < length"));
        }
        Ok(())
    }

    /// Tightest turning radius of the rear axle.
    pub fn min_turn_radius(&self) -> f64 {
        self.wheelbase / self.max_steer.tan()
    }

    pub fn max_curvature(&self) -> f64 {
        self.max_steer.tan() / self.wheelbase
    }

    /// Distance from the rear axle to the footprint center along the heading.
    pub fn center_offset(&self) -> f64 {
        0.5 * self.length - self.rear_overhang
    }

    /// Same vehicle with the footprint grown by `margin` on every side.
    pub fn inflated(&self, margin: f64) -> VehicleParams {
        VehicleParams {
            width: self.width + 2.0 * margin,
            length: self.length + 2.0 * margin,
            rear_overhang: self.rear_overhang + margin,
            ..*self
        }
    }
}

/// Footprint rectangle, counter-clockwise from the rear-right corner.
pub fn vehicle_footprint(pose: &Pose2, params: &VehicleParams) -> [Point2; 4] {
    let back = -params.rear_overhang;
    let front = params.length - params.rear_overhang;
    let half = 0.5 * params.width;
    [
        pose.to_world(Point2::new(back, -half)),
        pose.to_world(Point2::new(front, -half)),
        pose.to_world(Point2::new(front, half)),
        pose.to_world(Point2::new(back, half)),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSpec {
    /// World-frame corners, counter-clockwise.
    pub corners: [Point2; 4],
    /// Index `i` of the edge `corners[i] → corners[i+1]` the car enters through.
    pub entry_edge: usize,
    /// Parked rear-axle pose.
    pub target_pose: Pose2,
}

impl SlotSpec {
    /// Rectangular slot of the given size whose parked pose has the car
    /// centered in the slot with heading `target_pose.yaw`. The entry edge is
    /// the short edge the car's nose points at when `nose_out` is set, and the
    /// opposite short edge otherwise.
    pub fn rectangle(center: Point2, heading: f64, width: f64, depth: f64, params: &VehicleParams, nose_out: bool) -> SlotSpec {
        let frame = Pose2::new(center.x, center.y, heading);
        let hl = 0.5 * depth;
        let hw = 0.5 * width;
        let corners = [
            frame.to_world(Point2::new(-hl, -hw)),
            frame.to_world(Point2::new(hl, -hw)),
            frame.to_world(Point2::new(hl, hw)),
            frame.to_world(Point2::new(-hl, hw)),
        ];
        let axle = frame.to_world(Point2::new(-params.center_offset(), 0.0));
        SlotSpec {
            corners,
            entry_edge: if nose_out { 1 } else { 3 },
            target_pose: Pose2::new(axle.x, axle.y, heading),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entry_edge > 3 {
            return Err(Error::invalid("slot", "entry_edge must be in 0..4"));
        }
        if !self.corners.iter().all(|p| p.is_finite()) || !self.target_pose.is_finite() {
            return Err(Error::invalid("slot", "non-finite geometry"));
        }
        if signed_area(&self.corners) <= 0.0 || !is_convex(&self.corners) {
            return Err(Error::invalid(
                "slot",
                "corners must form a counter-clockwise convex quadrilateral",
            ));
        }
        if !point_in_polygon(self.target_pose.position(), &self.corners) {
            return Err(Error::invalid("slot", "target pose lies outside the slot"));
        }
        Ok(())
    }

    pub fn center(&self) -> Point2 {
        centroid(&self.corners)
    }

    pub fn entry_midpoint(&self) -> Point2 {
        let a = self.corners[self.entry_edge];
        let b = self.corners[(self.entry_edge + 1) % 4];
        (a + b) * 0.5
    }

    pub fn contains(&self, p: Point2) -> bool {
        point_in_polygon(p, &self.corners)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum GroundClass {
    Freespace = 0,
    LaneLine = 1,
    SlotLine = 2,
}

impl GroundClass {
    fn from_u8(v: u8) -> Option<GroundClass> {
        match v {
            0 => Some(GroundClass::Freespace),
            1 => Some(GroundClass::LaneLine),
            2 => Some(GroundClass::SlotLine),
            _ => None,
        }
    }
}

/// Semantic ground raster. Row-major; cell `(row, col)` covers
/// `[origin.x + col·res, origin.x + (col+1)·res) × [origin.y + row·res, …)`,
/// i.e. the world origin of the grid sits at the corner of cell (0, 0) and
/// rows grow with +y.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundMap {
    pub rows: usize,
    pub cols: usize,
    pub origin: Point2,
    pub resolution: f64,
    pub labels: Vec<GroundClass>,
}

impl GroundMap {
    pub fn new(rows: usize, cols: usize, origin: Point2, resolution: f64) -> GroundMap {
        GroundMap {
            rows,
            cols,
            origin,
            resolution,
            labels: vec![GroundClass::Freespace; rows * cols],
        }
    }

    pub fn extent(&self) -> (Point2, Point2) {
        (
            self.origin,
            self.origin
                + Point2::new(
                    self.cols as f64 * self.resolution,
                    self.rows as f64 * self.resolution,
                ),
        )
    }

    pub fn contains(&self, p: Point2) -> bool {
        let (lo, hi) = self.extent();
        p.x >= lo.x && p.y >= lo.y && p.x < hi.x && p.y < hi.y
    }

    /// Class at a world point, `None` outside the map.
    pub fn sample(&self, p: Point2) -> Option<GroundClass> {
        let c = ((p.x - self.origin.x) / self.resolution).floor();
        let r = ((p.y - self.origin.y) / self.resolution).floor();
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 {
            return None;
        }
        Some(self.labels[r as usize * self.cols + c as usize])
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        self.origin
            + Point2::new(
                (col as f64 + 0.5) * self.resolution,
                (row as f64 + 0.5) * self.resolution,
            )
    }

    /// Paints every cell whose center lies within `half_width` of the segment.
    pub fn paint_segment(&mut self, a: Point2, b: Point2, half_width: f64, class: GroundClass) {
        let lo = Point2::new(a.x.min(b.x) - half_width, a.y.min(b.y) - half_width);
        let hi = Point2::new(a.x.max(b.x) + half_width, a.y.max(b.y) + half_width);
        let c0 = (((lo.x - self.origin.x) / self.resolution).floor().max(0.0)) as usize;
        let r0 = (((lo.y - self.origin.y) / self.resolution).floor().max(0.0)) as usize;
        let c1 = (((hi.x - self.origin.x) / self.resolution).ceil().max(0.0) as usize).min(self.cols);
        let r1 = (((hi.y - self.origin.y) / self.resolution).ceil().max(0.0) as usize).min(self.rows);
        let ab = b - a;
        let len2 = ab.dot(ab);
        for r in r0..r1 {
            for c in c0..c1 {
                let p = self.cell_center(r, c);
                let t = if len2 > 0.0 {
                    ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                if (a + ab * t).distance(p) <= half_width {
                    self.labels[r * self.cols + c] = class;
                }
            }
        }
    }

    fn to_rle(&self) -> Vec<[u32; 2]> {
        let mut out: Vec<[u32; 2]> = Vec::new();
        for &l in &self.labels {
            match out.last_mut() {
                Some(run) if run[0] == l as u32 => run[1] += 1,
                _ => out.push([l as u32, 1]),
            }
        }
        out
    }
}

/// Static obstacle: a vertical prism over a convex footprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub footprint: Vec<Point2>,
    pub height: f64,
}

impl Obstacle {
    pub fn boxed(min: Point2, max: Point2, height: f64) -> Obstacle {
        Obstacle {
            footprint: rect(min, max),
            height,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarageWorld {
    pub ground_map: GroundMap,
    pub obstacles: Vec<Obstacle>,
    pub slots: Vec<SlotSpec>,
}

impl GarageWorld {
    pub fn validate(&self) -> Result<()> {
        let gm = &self.ground_map;
        if !(gm.resolution.is_finite() && gm.resolution > 0.0) {
            return Err(Error::invalid("world", "ground map resolution must be > 0"));
        }
        if gm.labels.len() != gm.rows * gm.cols {
            return Err(Error::invalid("world", "ground map label count mismatch"));
        }
        for slot in &self.slots {
            slot.validate()?;
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            if ob.footprint.len() < 3 || !is_convex(&ob.footprint) || !(ob.height > 0.0) {
                return Err(Error::invalid(
                    "world",
                    format!("obstacle {i} must be a convex polygon with positive height"),
                ));
            }
            if signed_area(&ob.footprint) < 0.0 {
                return Err(Error::invalid("world", format!("obstacle {i} must be counter-clockwise")));
            }
            for (j, slot) in self.slots.iter().enumerate() {
                if convex_interiors_overlap(&ob.footprint, &slot.corners, 1e-9) {
                    return Err(Error::invalid(
                        "world",
                        format!("obstacle {i} intersects the interior of slot {j}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn in_bounds(&self, p: Point2) -> bool {
        self.ground_map.contains(p)
    }

    /// Returns a copy with every element rigidly moved by `delta`.
    pub fn transformed(&self, delta: &Pose2) -> GarageWorld {
        assert!(
            delta.yaw == 0.0,
            "ground maps are axis aligned; only translations are supported"
        );
        let shift = |p: Point2| delta.to_world(p);
        let mut ground_map = self.ground_map.clone();
        ground_map.origin = shift(ground_map.origin);
        GarageWorld {
            ground_map,
            obstacles: self
                .obstacles
                .iter()
                .map(|o| Obstacle {
                    footprint: o.footprint.iter().map(|&p| shift(p)).collect(),
                    height: o.height,
                })
                .collect(),
            slots: self
                .slots
                .iter()
                .map(|s| SlotSpec {
                    corners: s.corners.map(shift),
                    entry_edge: s.entry_edge,
                    target_pose: delta.compose(&s.target_pose),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(WorldFile::from(self)).expect("world serializes")
    }

    pub fn from_json(v: serde_json::Value) -> Result<GarageWorld> {
        let file: WorldFile = serde_json::from_value(v)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&WorldFile::from(self))?;
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GarageWorld> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        let file: WorldFile = serde_json::from_str(&text)?;
        file.try_into()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundMapFile {
    rows: usize,
    cols: usize,
    origin: Point2,
    resolution: f64,
    /// `[label, run_length]` pairs in row-major order.
    rle: Vec<[u32; 2]>,
}

/// On-disk world description.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    schema_version: u32,
    ground_map: GroundMapFile,
    obstacles: Vec<Obstacle>,
    slots: Vec<SlotSpec>,
}

impl From<&GarageWorld> for WorldFile {
    fn from(w: &GarageWorld) -> Self {
        let gm = &w.ground_map;
        WorldFile {
            schema_version: WORLD_SCHEMA_VERSION,
            ground_map: GroundMapFile {
                rows: gm.rows,
                cols: gm.cols,
                origin: gm.origin,
                resolution: gm.resolution,
                rle: gm.to_rle(),
            },
            obstacles: w.obstacles.clone(),
            slots: w.slots.clone(),
        }
    }
}

impl TryFrom<WorldFile> for GarageWorld {
    type Error = Error;

    fn try_from(f: WorldFile) -> Result<GarageWorld> {
        if f.schema_version != WORLD_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                artifact: "world".into(),
                expected: WORLD_SCHEMA_VERSION,
                found: f.schema_version,
            });
        }
        let g = f.ground_map;
        let mut labels = Vec::with_capacity(g.rows * g.cols);
        for [label, count] in g.rle {
            let class = u8::try_from(label)
                .ok()
                .and_then(GroundClass::from_u8)
                .ok_or_else(|| Error::invalid("world", format!("unknown ground label {label}")))?;
            labels.extend(std::iter::repeat_n(class, count as usize));
        }
        if labels.len() != g.rows * g.cols {
            return Err(Error::invalid(
                "world",
                format!(
                    "run-length data decodes to {} cells, expected {}",
                    labels.len(),
                    g.rows * g.cols
                ),
            ));
        }
        let world = GarageWorld {
            ground_map: GroundMap {
                rows: g.rows,
                cols: g.cols,
                origin: g.origin,
                resolution: g.resolution,
                labels,
            },
            obstacles: f.obstacles,
            slots: f.slots,
        };
        world.validate()?;
        Ok(world)
    }
}
