//! Randomized garage scenes: a row of perpendicular slots along one side of
//! an aisle, with the target slot at the world origin column.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::world::{
    GarageWorld, GroundClass, GroundMap, Obstacle, Point2, Pose2, SlotSpec, VehicleParams,
};

pub const SLOT_WIDTH: f64 = 2.6;
pub const SLOT_DEPTH: f64 = 5.4;
/// Slots on each side of the target.
const NEIGHBORS: i32 = 3;
const AISLE_WIDTH: f64 = 7.0;
const HALF_LENGTH: f64 = 12.0;
const WALL: f64 = 0.3;

/// Scene taxonomy used for evaluation grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SceneKind {
    /// Free slots on both sides of the target.
    A,
    /// A parked vehicle in one adjacent slot.
    B,
    /// A wall directly beside the target slot.
    C,
}

impl SceneKind {
    pub const ALL: [SceneKind; 3] = [SceneKind::A, SceneKind::B, SceneKind::C];

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::A => "A",
            SceneKind::B => "B",
            SceneKind::C => "C",
        }
    }
}

/// World plus the index of the target slot in `world.slots`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub kind: SceneKind,
    /// Side (±1) of the occupied or walled-off neighbor in scenes B and C.
    pub side: i32,
    pub world: GarageWorld,
    pub target: usize,
}

impl Scene {
    pub fn slot(&self) -> &SlotSpec {
        &self.world.slots[self.target]
    }
}

fn slot_at(column: i32, params: &VehicleParams) -> SlotSpec {
    // reverse-in, nose-out: the parked car faces the aisle (−y)
    let center = Point2::new(column as f64 * SLOT_WIDTH, 0.5 * SLOT_DEPTH);
    SlotSpec::rectangle(center, -FRAC_PI_2, SLOT_WIDTH, SLOT_DEPTH, params, true)
}

fn wall(min: Point2, max: Point2) -> Obstacle {
    Obstacle::boxed(min, max, 2.0)
}

/// Builds a scene of the given kind. `side` (±1) selects which neighbor is
/// occupied or walled off in scenes B and C.
pub fn build_scene(kind: SceneKind, side: i32, params: &VehicleParams) -> Scene {
    let res = 0.1;
    let y0 = -AISLE_WIDTH - WALL - 1.0;
    let y1 = SLOT_DEPTH + WALL + 1.5;
    let mut ground = GroundMap::new(
        ((y1 - y0) / res).round() as usize,
        (2.0 * HALF_LENGTH / res).round() as usize,
        Point2::new(-HALF_LENGTH, y0),
        res,
    );
    let line = 0.06;
    let row_x = (NEIGHBORS as f64 + 0.5) * SLOT_WIDTH;
    for k in -NEIGHBORS..=NEIGHBORS + 1 {
        let x = (k as f64 - 0.5) * SLOT_WIDTH;
        ground.paint_segment(Point2::new(x, 0.0), Point2::new(x, SLOT_DEPTH), line, GroundClass::SlotLine);
    }
    ground.paint_segment(
        Point2::new(-row_x, SLOT_DEPTH),
        Point2::new(row_x, SLOT_DEPTH),
        line,
        GroundClass::SlotLine,
    );
    // dashed aisle center line
    let mut x = -HALF_LENGTH + 0.5;
    while x < HALF_LENGTH - 0.5 {
        let y = -0.5 * AISLE_WIDTH;
        ground.paint_segment(Point2::new(x, y), Point2::new(x + 1.0, y), line, GroundClass::LaneLine);
        x += 2.0;
    }

    let mut obstacles = vec![
        wall(
            Point2::new(-HALF_LENGTH, SLOT_DEPTH + 0.2),
            Point2::new(HALF_LENGTH, SLOT_DEPTH + 0.2 + WALL),
        ),
        wall(
            Point2::new(-HALF_LENGTH, -AISLE_WIDTH - WALL),
            Point2::new(HALF_LENGTH, -AISLE_WIDTH),
        ),
    ];
    let mut columns: Vec<i32> = (-NEIGHBORS..=NEIGHBORS).collect();
    match kind {
        SceneKind::A => {}
        SceneKind::B => {
            let cx = side as f64 * SLOT_WIDTH;
            let hw = 0.5 * params.width;
            let cy = 0.5 * SLOT_DEPTH;
            let hl = 0.5 * params.length;
            obstacles.push(Obstacle::boxed(
                Point2::new(cx - hw, cy - hl),
                Point2::new(cx + hw, cy + hl),
                1.5,
            ));
            columns.retain(|&c| c != side);
        }
        SceneKind::C => {
            let edge = side as f64 * 0.5 * SLOT_WIDTH;
            let (lo, hi) = if side > 0 {
                (edge + 0.05, edge + 0.05 + WALL)
            } else {
                (edge - 0.05 - WALL, edge - 0.05)
            };
            obstacles.push(wall(Point2::new(lo, 0.0), Point2::new(hi, SLOT_DEPTH + 0.2)));
            columns.retain(|&c| c != side);
        }
    }
    let slots: Vec<SlotSpec> = columns.iter().map(|&c| slot_at(c, params)).collect();
    let target = columns.iter().position(|&c| c == 0).expect("target column kept");
    Scene {
        kind,
        side,
        world: GarageWorld {
            ground_map: ground,
            obstacles,
            slots,
        },
        target,
    }
}

/// Random start pose in the aisle, driving along it in either direction.
pub fn random_start(rng: &mut impl Rng) -> Pose2 {
    let x = rng.random_range(-7.0..7.0);
    let y = rng.random_range(-4.5..-2.5);
    let base = if rng.random_bool(0.5) { 0.0 } else { PI };
    Pose2::new(x, y, base + rng.random_range(-0.3..0.3))
}

/// Scene kind, side and start drawn from one generator.
pub fn random_scene(rng: &mut impl Rng, kinds: &[SceneKind], params: &VehicleParams) -> (Scene, Pose2) {
    let kind = kinds[rng.random_range(0..kinds.len())];
    let side = if rng.random_bool(0.5) { 1 } else { -1 };
    let start = random_start(rng);
    (build_scene(kind, side, params), start)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_valid_worlds() {
        let p = VehicleParams::default();
        for kind in SceneKind::ALL {
            for side in [-1, 1] {
                let s = build_scene(kind, side, &p);
                s.world.validate().unwrap();
                let slot = s.slot();
                assert!(slot.center().distance(Point2::new(0.0, 0.5 * SLOT_DEPTH)) < 1e-12);
            }
        }
    }

    #[test]
    fn scene_b_removes_the_occupied_slot() {
        let p = VehicleParams::default();
        let a = build_scene(SceneKind::A, 1, &p);
        let b = build_scene(SceneKind::B, 1, &p);
        assert_eq!(a.world.slots.len(), b.world.slots.len() + 1);
        assert_eq!(b.world.obstacles.len(), 3);
    }
}
