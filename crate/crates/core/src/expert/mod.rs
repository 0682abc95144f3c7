//! Synthetic expert demonstrations: Reeds-Shepp parking maneuvers in
//! randomized garage scenes, rendered frame by frame and reorganized into
//! (images, target slot, future chunk) training samples.

mod dataset;
pub mod reeds_shepp;
pub mod scene;

use serde::{Deserialize, Serialize};

use crate::bev::GridSpec;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::seed::substream;
use crate::sensing::{render_surround_labels, LabelImage, SurroundRig};
use crate::world::{
    convex_polygons_intersect, vehicle_footprint, wrap_angle, GarageWorld, Point2, Pose2, SlotSpec,
    VehicleParams,
};

pub use dataset::{Dataset, DatasetManifest, DatasetSamples, EpisodeEntry, DATASET_SCHEMA_VERSION};
pub use reeds_shepp::{reeds_shepp, reeds_shepp_paths, RsPath, Segment, Steer};
pub use scene::{build_scene, random_scene, Scene, SceneKind};

/// Planner settings. The defaults keep some steering headroom for the
/// tracking controller and prefer maneuvers with few direction changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    /// Waypoint spacing upper bound in meters.
    pub spacing: f64,
    /// Footprint inflation used for collision checks, meters.
    pub collision_margin: f64,
    /// Planning radius as a multiple of the vehicle's minimum turn radius.
    pub radius_scale: f64,
    /// Length penalty per direction change, meters.
    pub cusp_penalty: f64,
    /// Shortest allowed run between direction changes, meters.
    pub min_run: f64,
    /// Distances in front of the slot tried as staging poses when no direct
    /// path is collision-free.
    pub staging: Vec<f64>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            spacing: 0.5,
            collision_margin: 0.1,
            radius_scale: 1.1,
            cusp_penalty: 2.0,
            min_run: 0.5,
            staging: vec![5.5, 6.5, 7.5],
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.spacing > 0.0
            && self.collision_margin >= 0.0
            && self.radius_scale >= 1.0
            && self.cusp_penalty >= 0.0
            && self.min_run >= 0.0
            && self.staging.iter().all(|d| *d > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("planner config", format!("{self:?}")))
        }
    }
}

const CHECK_STEP: f64 = 0.1;

/// True if the footprint at `pose` touches an obstacle or leaves the map.
pub fn pose_collides(pose: &Pose2, world: &GarageWorld, params: &VehicleParams) -> bool {
    let fp = vehicle_footprint(pose, params);
    if !fp.iter().all(|&p| world.in_bounds(p)) {
        return true;
    }
    world
        .obstacles
        .iter()
        .any(|ob| convex_polygons_intersect(&fp, &ob.footprint))
}

fn runs_are_long_enough(path: &RsPath, min_run: f64) -> bool {
    let mut runs: Vec<f64> = Vec::new();
    let mut last = 0.0;
    for s in path.segments.iter().filter(|s| s.length.abs() > 1e-9) {
        let len = s.length.abs() * path.radius;
        if s.length.signum() == last {
            *runs.last_mut().expect("run started") += len;
        } else {
            runs.push(len);
            last = s.length.signum();
        }
    }
    runs.len() <= 1 || runs.iter().all(|&r| r >= min_run)
}

struct Candidate {
    legs: Vec<(Pose2, RsPath)>,
    cost: f64,
}

impl Candidate {
    fn sample(&self, step: f64) -> Vec<Pose2> {
        let mut out: Vec<Pose2> = Vec::new();
        for (start, path) in &self.legs {
            let pts = path.sample(start, step);
            let skip = usize::from(!out.is_empty());
            out.extend(pts.into_iter().skip(skip));
        }
        out
    }
}

/// Collision-free Reeds-Shepp path from `start` to the slot's target pose,
/// sampled at most `spacing` apart with direction changes sampled exactly.
/// Tries every direct word first, then two-leg maneuvers through staging
/// poses in front of the slot, and keeps the cheapest feasible one.
pub fn plan_expert_path(
    start: &Pose2,
    slot: &SlotSpec,
    world: &GarageWorld,
    params: &VehicleParams,
    cfg: &PlannerConfig,
) -> Result<Vec<Pose2>> {
    cfg.validate()?;
    let goal = slot.target_pose;
    if start.position().distance(goal.position()) < 1e-9 && wrap_angle(start.yaw - goal.yaw).abs() < 1e-9 {
        return Ok(vec![*start]);
    }
    let inflated = params.inflated(cfg.collision_margin);
    if pose_collides(start, world, &inflated) {
        return Err(Error::PlanningFailed("start pose collides".into()));
    }
    let radius = params.min_turn_radius() * cfg.radius_scale;
    let mut candidates: Vec<Candidate> = Vec::new();
    let cost = |paths: &[&RsPath]| -> f64 {
        paths
            .iter()
            .map(|p| p.length() + cfg.cusp_penalty * p.cusps() as f64)
            .sum()
    };
    for p in reeds_shepp_paths(start, &goal, radius) {
        let c = cost(&[&p]);
        candidates.push(Candidate {
            legs: vec![(*start, p)],
            cost: c,
        });
    }
    for &d in &cfg.staging {
        let staging = goal.compose(&Pose2::new(d, 0.0, 0.0));
        let Some(tail) = reeds_shepp(&staging, &goal, radius) else {
            continue;
        };
        for p in reeds_shepp_paths(start, &staging, radius) {
            // the second leg always reverses, count the joint as a cusp
            let joint = if p.segments.last().is_some_and(|s| s.length > 0.0) {
                cfg.cusp_penalty
            } else {
                0.0
            };
            let c = cost(&[&p, &tail]) + joint;
            candidates.push(Candidate {
                legs: vec![(*start, p), (staging, tail.clone())],
                cost: c,
            });
        }
    }
    candidates.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    for cand in candidates {
        if !cand.legs.iter().all(|(_, p)| runs_are_long_enough(p, cfg.min_run)) {
            continue;
        }
        let dense = cand.sample(CHECK_STEP);
        if dense.iter().any(|p| pose_collides(p, world, &inflated)) {
            continue;
        }
        let mut path = cand.sample(cfg.spacing);
        // exact terminal pose, so the recorded slot matches the path end
        *path.last_mut().expect("non-empty") = goal;
        return Ok(path);
    }
    Err(Error::PlanningFailed(format!(
        "no collision-free path from ({:.2}, {:.2}, {:.2})",
        start.x, start.y, start.yaw
    )))
}

/// Future chunk of `q` points after 1-based index `j`: element `b` is
/// `P[min(j + b, N)]` for `b = 1..=q`.
pub fn chunk_targets(trajectory: &[Point2], j: usize, q: usize) -> Result<Vec<Point2>> {
    let n = trajectory.len();
    if j < 1 || j > n {
        return Err(Error::contract(format!("chunk index {j} outside 1..={n}")));
    }
    Ok((1..=q).map(|b| trajectory[(j + b).min(n) - 1]).collect())
}

/// One demonstration. Poses, trajectory and slot are expressed in the frame
/// of the episode's first pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub index: usize,
    pub scene: SceneKind,
    /// Which neighbor is occupied or walled off (±1).
    pub side: i32,
    /// World-frame start pose.
    pub start: Pose2,
    pub slot: SlotSpec,
    pub poses: Vec<Pose2>,
    /// `poses.len() × cameras` label images, frame-major.
    pub labels: Vec<LabelImage>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn trajectory(&self) -> Vec<Point2> {
        self.poses.iter().map(|p| p.position()).collect()
    }

    pub fn world(&self, params: &VehicleParams) -> GarageWorld {
        build_scene(self.scene, self.side, params).world
    }

    /// Images of 1-based frame `j`.
    pub fn frame_labels(&self, j: usize, cameras: usize) -> &[LabelImage] {
        &self.labels[(j - 1) * cameras..j * cameras]
    }
}

/// Supervision for one frame: images, slot and chunk in the current ego frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub images: Vec<LabelImage>,
    pub slot: SlotSpec,
    pub chunk: Vec<Point2>,
    /// Current pose in the episode frame.
    pub ego: Pose2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub episodes: usize,
    /// Chunk length Q.
    pub horizon: usize,
    pub rig: SurroundRig,
    pub vehicle: VehicleParams,
    pub planner: PlannerConfig,
    pub scenes: Vec<SceneKind>,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.horizon == 0 || self.scenes.is_empty() {
            return Err(Error::invalid(
                "dataset config",
                "episodes, horizon and scenes must be non-empty",
            ));
        }
        self.rig.validate()?;
        self.vehicle.validate()?;
        self.planner.validate()
    }
}

/// Expresses a world-frame slot in the frame of `origin`.
pub fn slot_in_frame(slot: &SlotSpec, origin: &Pose2) -> SlotSpec {
    SlotSpec {
        corners: slot.corners.map(|p| origin.to_ego(p)),
        entry_edge: slot.entry_edge,
        target_pose: origin.relative(&slot.target_pose),
    }
}

/// Draws, plans and renders episode `index`.
pub fn generate_episode(index: usize, cfg: &DatasetConfig, seed: u64) -> Result<Episode> {
    let mut rng = substream(seed, "expert/episode", index as u64);
    let (scene, start) = random_scene(&mut rng, &cfg.scenes, &cfg.vehicle);
    let path = plan_expert_path(&start, scene.slot(), &scene.world, &cfg.vehicle, &cfg.planner)?;
    if path.len() < 2 {
        return Err(Error::PlanningFailed("start already parked".into()));
    }
    let mut labels = Vec::with_capacity(path.len() * cfg.rig.len());
    for pose in &path {
        labels.extend(render_surround_labels(&scene.world, pose, &cfg.rig));
    }
    let slot = slot_in_frame(scene.slot(), &start);
    let poses: Vec<Pose2> = path.iter().map(|p| start.relative(p)).collect();
    Ok(Episode {
        index,
        scene: scene.kind,
        side: scene.side,
        start,
        slot: SlotSpec {
            // recorded from the demonstration's terminal pose
            target_pose: *poses.last().expect("non-empty"),
            ..slot
        },
        poses,
        labels,
    })
}

/// Generates `cfg.episodes` demonstrations. Planning failures are skipped
/// and listed; fewer than half succeeding is an error.
pub fn build_dataset(cfg: &DatasetConfig, seed: u64, exec: Exec) -> Result<Dataset> {
    cfg.validate()?;
    let results = exec.map_range(cfg.episodes, |i| generate_episode(i, cfg, seed));
    let mut episodes = Vec::new();
    let mut failed = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(ep) => episodes.push(ep),
            Err(Error::PlanningFailed(_)) => failed.push(i),
            Err(e) => return Err(e),
        }
    }
    if 2 * episodes.len() < cfg.episodes {
        return Err(Error::Dataset(format!(
            "only {} of {} episodes could be planned",
            episodes.len(),
            cfg.episodes
        )));
    }
    Ok(Dataset::new(cfg.clone(), seed, episodes, failed))
}

/// Share of samples whose whole chunk lies inside the BEV range.
pub fn chunk_range_share(data: &Dataset, grid: &GridSpec) -> f64 {
    let n = data.sample_count();
    if n == 0 {
        return 1.0;
    }
    let inside = (0..n)
        .filter(|&k| {
            let (e, j) = data.locate(k);
            let ep = &data.episodes()[e];
            let ego = ep.poses[j - 1];
            chunk_targets(&ep.trajectory(), j, data.config().horizon)
                .expect("index in range")
                .iter()
                .all(|&p| {
                    let q = ego.to_ego(p);
                    q.x.abs() <= grid.range_x && q.y.abs() <= grid.range_y
                })
        })
        .count();
    inside as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{point_in_polygon, Point2};

    #[test]
    fn chunk_examples() {
        let p: Vec<Point2> = (1..=5).map(|i| Point2::new(i as f64, 0.0)).collect();
        let xs = |v: Vec<Point2>| v.iter().map(|p| p.x).collect::<Vec<_>>();
        assert_eq!(xs(chunk_targets(&p, 2, 3).unwrap()), [3.0, 4.0, 5.0]);
        assert_eq!(xs(chunk_targets(&p, 4, 3).unwrap()), [5.0, 5.0, 5.0]);
        assert_eq!(xs(chunk_targets(&p, 5, 3).unwrap()), [5.0, 5.0, 5.0]);
        assert!(chunk_targets(&p, 0, 3).is_err());
        assert!(chunk_targets(&p, 6, 3).is_err());
    }

    #[test]
    fn already_parked_is_a_single_point() {
        let p = VehicleParams::default();
        let s = build_scene(SceneKind::A, 1, &p);
        let path = plan_expert_path(&s.slot().target_pose, s.slot(), &s.world, &p, &PlannerConfig::default()).unwrap();
        assert_eq!(path.len(), 1);
    }

    #[test]
    fn straight_in_has_zero_curvature() {
        let p = VehicleParams::default();
        let s = build_scene(SceneKind::A, 1, &p);
        let goal = s.slot().target_pose;
        // aligned with the slot, 5 m in front of it: reverse straight in
        let start = goal.compose(&Pose2::new(5.0, 0.0, 0.0));
        let path = plan_expert_path(&start, s.slot(), &s.world, &p, &PlannerConfig::default()).unwrap();
        assert_eq!(path.len(), 11);
        for w in path.windows(2) {
            assert!(wrap_angle(w[1].yaw - w[0].yaw).abs() < 1e-12);
        }
        assert!(path.last().unwrap().position().distance(goal.position()) < 1e-12);
    }

    #[test]
    fn parked_pose_lies_in_slot() {
        let p = VehicleParams::default();
        let s = build_scene(SceneKind::A, 1, &p);
        let fp = vehicle_footprint(&s.slot().target_pose, &p);
        assert!(fp.iter().all(|&c| point_in_polygon(c, &s.slot().corners)));
    }
}
