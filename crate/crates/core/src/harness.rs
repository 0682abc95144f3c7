//! Run configuration and the reproducible workflows behind the CLI:
//! `gen-data`, `train`, `eval`, `sim` and `report`.
//!
//! Everything a command writes lives under `RunConfig::out_dir`:
//!
//! ```text
//! data/          dataset (manifest.json, episode_*.labels, episode_*.json)
//! checkpoint/    weights.f32 + manifest.json
//! train/         config.json, loss.csv, summary.json
//! eval/          config.json, open_loop.csv, predictions.json, summary.json
//! sim_<mode>/    config.json, episodes.csv, table.csv, summary.json, traces/
//! report.md
//! ```
//!
//! Summaries hold no wall-clock data, so reruns with the same config and
//! seed reproduce them byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{write_control_trace, ControllerConfig};
use crate::error::{Error, Result};
use crate::expert::scene::{random_scene, Scene};
use crate::expert::{
    build_dataset, plan_expert_path, Dataset, DatasetConfig, DatasetManifest, DatasetSamples, PlannerConfig,
    SceneKind,
};
use crate::metrics::{
    aggregate, open_loop_row, summarize_open_loop, write_episode_csv, write_open_loop_csv, write_report_csv,
    write_text, EpisodeSummary, MetricReport, OpenLoopReport, OpenLoopRow,
};
use crate::model::{load_checkpoint, save_checkpoint, train, Model, ModelConfig, SampleSource, TrainConfig};
use crate::par::Exec;
use crate::seed::{substream, substream_seed};
use crate::simulator::{run_episode, write_trace, EpisodeResult, Policy, SimConfig};
use crate::world::{Point2, Pose2, VehicleParams};

pub const RUN_CONFIG_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Scene draws per simulated episode before giving up on finding one the
/// expert can solve.
const MAX_SCENE_DRAWS: u64 = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Root seed; every random draw derives from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Use the data-parallel executor (results are identical either way).
    pub parallel: bool,
    pub vehicle: VehicleParams,
    pub planner: PlannerConfig,
    pub scenes: Vec<SceneKind>,
    /// Expert episodes requested by `gen-data`.
    pub episodes: usize,
    /// Camera rig, BEV grid and network shape.
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Share of episodes held out from training.
    pub held_out_fraction: f64,
    /// Held-out samples used for validation loss and open-loop metrics;
    /// zero means all of them.
    pub eval_samples: usize,
    pub controller: ControllerConfig,
    pub sim: SimConfig,
    /// Closed-loop episodes run by `sim`.
    pub sim_episodes: usize,
    /// Write per-episode state and control traces.
    pub traces: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: RUN_CONFIG_SCHEMA_VERSION,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            parallel: true,
            vehicle: VehicleParams::default(),
            planner: PlannerConfig::default(),
            scenes: SceneKind::ALL.to_vec(),
            episodes: 512,
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
            held_out_fraction: 0.1,
            eval_samples: 300,
            controller: ControllerConfig::default(),
            sim: SimConfig::default(),
            sim_episodes: 50,
            traces: true,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        if let Some(v) = raw.get("schema_version") {
            let found = v.as_u64().unwrap_or(0) as u32;
            if found != RUN_CONFIG_SCHEMA_VERSION {
                return Err(Error::SchemaVersion {
                    artifact: "run config".into(),
                    expected: RUN_CONFIG_SCHEMA_VERSION,
                    found,
                });
            }
        }
        let cfg: RunConfig = serde_json::from_value(raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.held_out_fraction) {
            return Err(Error::invalid("run config", "held_out_fraction must lie in [0, 1)"));
        }
        if self.scenes.is_empty() {
            return Err(Error::invalid("run config", "scenes must be non-empty"));
        }
        self.dataset_config().validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.controller.validate()?;
        self.sim.validate()?;
        self.vehicle.validate()
    }

    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }

    /// Dataset settings implied by this run; the rig and chunk length come
    /// from the model so data and network always agree.
    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            episodes: self.episodes,
            horizon: self.model.horizon,
            rig: self.model.rig.clone(),
            vehicle: self.vehicle,
            planner: self.planner.clone(),
            scenes: self.scenes.clone(),
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.out_dir.join("checkpoint")
    }

    fn stage_dir(&self, stage: &str) -> Result<PathBuf> {
        let dir = self.out_dir.join(stage);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    /// Writes the config echo for a stage.
    fn echo(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("config.json"), self)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let found = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != SUMMARY_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            artifact: path.display().to_string(),
            expected: SUMMARY_SCHEMA_VERSION,
            found,
        });
    }
    Ok(serde_json::from_value(raw)?)
}

/// Generates the expert dataset into `out_dir/data`.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let data = build_dataset(&cfg.dataset_config(), cfg.seed, cfg.exec())?;
    let dir = cfg.data_dir();
    let manifest = data.save(&dir, &cfg.model.grid)?;
    cfg.echo(&dir)?;
    Ok(manifest)
}

/// Evenly spaced subset of at most `cap` indices (all when `cap` is zero).
fn spread(indices: &[usize], cap: usize) -> Vec<usize> {
    if cap == 0 || indices.len() <= cap {
        return indices.to_vec();
    }
    (0..cap).map(|i| indices[i * indices.len() / cap]).collect()
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let data = Dataset::load(cfg.data_dir())?;
    if data.config().rig != cfg.model.rig || data.config().horizon != cfg.model.horizon {
        return Err(Error::ConfigMismatch(
            "dataset was generated for a different rig or horizon than the model config".into(),
        ));
    }
    Ok(data)
}

/// Held-out sample indices used for validation and open-loop evaluation.
/// A dataset too small to hold anything out is validated on its training
/// samples (the memorization setting).
fn validation_indices(cfg: &RunConfig, data: &Dataset) -> Vec<usize> {
    let (train, held) = data.split(cfg.held_out_fraction);
    spread(if held.is_empty() { &train } else { &held }, cfg.eval_samples)
}

/// Mean token cross-entropy over a sample view.
pub fn mean_loss(model: &Model, samples: &DatasetSamples, exec: Exec) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Dataset("no samples to evaluate".into()));
    }
    let losses = exec.map_range(samples.len(), |i| {
        let (inputs, seq) = samples.sample(i)?;
        model.loss(&inputs, &seq)
    });
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub fusion_mode: String,
    pub parameter_count: usize,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub epochs: usize,
    pub steps: usize,
    pub initial_validation_loss: f64,
    pub final_validation_loss: f64,
    /// `1 − final/initial` validation loss.
    pub loss_reduction: f64,
    pub final_train_loss: f64,
    pub weights_sha256: String,
}

/// Trains on the dataset in `out_dir/data`; writes the checkpoint and a
/// per-epoch loss curve.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let exec = cfg.exec();
    let (train_idx, _) = data.split(cfg.held_out_fraction);
    let val_idx = validation_indices(cfg, &data);
    let train_set = DatasetSamples::new(&data, &cfg.model, train_idx)?;
    let val_set = DatasetSamples::new(&data, &cfg.model, val_idx)?;
    let mut model = Model::new(cfg.model.clone(), substream_seed(cfg.seed, "model/init", 0))?;
    let initial = mean_loss(&model, &val_set, exec)?;

    let dir = cfg.stage_dir("train")?;
    cfg.echo(&dir)?;
    let mut csv = String::from("epoch,train_loss,validation_loss\n");
    csv.push_str(&format!("0,,{initial:.9}\n"));
    let mut last_val = initial;
    let mut val_err = None;
    let report = train(&mut model, &train_set, &cfg.train, cfg.seed, exec, |epoch, loss, m| {
        match mean_loss(m, &val_set, exec) {
            Ok(v) => last_val = v,
            Err(e) => val_err = Some(e),
        }
        csv.push_str(&format!("{},{loss:.9},{last_val:.9}\n", epoch + 1));
    });
    // the loss curve is useful even when training diverged
    write_text(&dir.join("loss.csv"), &csv)?;
    let report = report?;
    if let Some(e) = val_err {
        return Err(e);
    }
    if !last_val.is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.train.epochs,
            step: report.steps,
            loss: last_val,
        });
    }
    let manifest = save_checkpoint(cfg.checkpoint_dir(), &model, cfg.seed)?;
    let summary = TrainSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        seed: cfg.seed,
        fusion_mode: cfg.model.fusion_mode.name().into(),
        parameter_count: manifest.parameter_count,
        train_samples: train_set.len(),
        validation_samples: val_set.len(),
        epochs: cfg.train.epochs,
        steps: report.steps,
        initial_validation_loss: initial,
        final_validation_loss: last_val,
        loss_reduction: 1.0 - last_val / initial,
        final_train_loss: report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        weights_sha256: manifest.weights_sha256,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// What produces trajectories in `eval` and `sim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// The trained checkpoint.
    Model,
    /// The expert planner; in `eval` this compares ground truth with itself.
    Expert,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Model => "model",
            Mode::Expert => "expert",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub schema_version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub fusion_mode: Option<String>,
    /// Predictions that decoded no waypoint; scored as staying in place.
    pub empty_predictions: usize,
    pub metrics: OpenLoopReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample: usize,
    pub predicted: Vec<Point2>,
    pub ground_truth: Vec<Point2>,
}

/// Open-loop metrics of the checkpoint (or of the ground truth itself in
/// expert mode) on held-out samples.
pub fn cmd_eval(cfg: &RunConfig, mode: Mode) -> Result<EvalSummary> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let model = match mode {
        Mode::Model => {
            let (m, _) = load_checkpoint(cfg.checkpoint_dir())?;
            if m.config() != &cfg.model {
                return Err(Error::ConfigMismatch("checkpoint model config differs from the run config".into()));
            }
            Some(m)
        }
        Mode::Expert => None,
    };
    let idx = validation_indices(cfg, &data);
    let view = DatasetSamples::new(&data, &cfg.model, idx.clone())?;
    let results = cfg.exec().map_range(view.len(), |i| -> Result<PredictionRecord> {
        let truth = view.training_sample(i)?.chunk;
        let predicted = match &model {
            Some(m) => m.infer(&view.sample(i)?.0)?.points,
            None => truth.clone(),
        };
        Ok(PredictionRecord {
            sample: idx[i],
            predicted,
            ground_truth: truth,
        })
    });
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        records.push(r?);
    }
    let mut rows: Vec<(usize, OpenLoopRow)> = Vec::with_capacity(records.len());
    let mut empty = 0;
    for r in &records {
        let pred = if r.predicted.is_empty() {
            empty += 1;
            vec![Point2::ORIGIN]
        } else {
            r.predicted.clone()
        };
        rows.push((r.sample, open_loop_row(&pred, &r.ground_truth)?));
    }
    let metrics = summarize_open_loop(&rows.iter().map(|r| r.1).collect::<Vec<_>>())?;
    let dir = cfg.stage_dir("eval")?;
    cfg.echo(&dir)?;
    write_open_loop_csv(&dir.join("open_loop.csv"), &rows)?;
    write_json(&dir.join("predictions.json"), &records)?;
    let summary = EvalSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        mode,
        seed: cfg.seed,
        fusion_mode: model.as_ref().map(|m| m.config().fusion_mode.name().to_string()),
        empty_predictions: empty,
        metrics,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Scene, start and expert path of closed-loop episode `index`: scenes are
/// redrawn from the episode's own stream until the expert can solve one,
/// so both modes face the same solvable episodes.
pub fn sim_episode_setup(cfg: &RunConfig, index: usize) -> Result<(Scene, Pose2, Vec<Pose2>)> {
    let mut rng = substream(cfg.seed, "sim/episode", index as u64);
    for _ in 0..MAX_SCENE_DRAWS {
        let (scene, start) = random_scene(&mut rng, &cfg.scenes, &cfg.vehicle);
        match plan_expert_path(&start, scene.slot(), &scene.world, &cfg.vehicle, &cfg.planner) {
            Ok(path) if path.len() >= 2 => return Ok((scene, start, path)),
            Ok(_) | Err(Error::PlanningFailed(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::PlanningFailed(format!(
        "no solvable scene for episode {index} in {MAX_SCENE_DRAWS} draws"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEpisodeRecord {
    pub index: usize,
    pub scene: SceneKind,
    pub side: i32,
    pub start: Pose2,
    pub summary: EpisodeSummary,
    pub final_pose: Pose2,
    pub replans: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub schema_version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub fusion_mode: Option<String>,
    pub overall: MetricReport,
    /// Scene kinds with at least one episode.
    pub per_scene: BTreeMap<SceneKind, MetricReport>,
    pub episodes: Vec<SimEpisodeRecord>,
}

/// Runs `sim_episodes` closed-loop episodes and writes the table-shaped
/// summary, per-episode rows and traces to `out_dir/sim_<mode>`.
pub fn cmd_sim(cfg: &RunConfig, mode: Mode) -> Result<SimSummary> {
    cfg.validate()?;
    if cfg.sim_episodes == 0 {
        return Err(Error::invalid("run config", "sim_episodes must be positive"));
    }
    let model = match mode {
        Mode::Model => Some(load_checkpoint(cfg.checkpoint_dir())?.0),
        Mode::Expert => None,
    };
    if let Some(m) = &model {
        if m.config().rig != cfg.model.rig {
            return Err(Error::ConfigMismatch("checkpoint rig differs from the run config".into()));
        }
    }
    let results = cfg.exec().map_range(cfg.sim_episodes, |i| -> Result<(Scene, Pose2, EpisodeResult)> {
        let (scene, start, path) = sim_episode_setup(cfg, i)?;
        let policy = match &model {
            Some(m) => Policy::Model(m),
            None => Policy::Expert(path),
        };
        let r = run_episode(
            &policy,
            &cfg.controller,
            &scene.world,
            scene.target,
            &start,
            &cfg.vehicle,
            &cfg.sim,
        )?;
        Ok((scene, start, r))
    });

    let dir = cfg.stage_dir(&format!("sim_{}", mode.name()))?;
    cfg.echo(&dir)?;
    let traces = dir.join("traces");
    if cfg.traces {
        std::fs::create_dir_all(&traces).map_err(|e| Error::io(&traces, e))?;
    }
    let mut records = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        let (scene, start, result) = r?;
        if cfg.traces {
            write_trace(traces.join(format!("episode_{i:04}.csv")), &result)?;
            write_control_trace(traces.join(format!("episode_{i:04}_control.csv")), &result.control)?;
        }
        records.push(SimEpisodeRecord {
            index: i,
            scene: scene.kind,
            side: scene.side,
            start,
            summary: EpisodeSummary::from(&result),
            final_pose: result.final_pose,
            replans: result.replans,
        });
    }

    let all: Vec<EpisodeSummary> = records.iter().map(|r| r.summary).collect();
    let overall = aggregate(&all)?;
    let mut per_scene = BTreeMap::new();
    for kind in SceneKind::ALL {
        let group: Vec<EpisodeSummary> = records.iter().filter(|r| r.scene == kind).map(|r| r.summary).collect();
        if !group.is_empty() {
            per_scene.insert(kind, aggregate(&group)?);
        }
    }
    let mut table: Vec<(String, MetricReport)> =
        per_scene.iter().map(|(k, r)| (format!("scene_{}", k.name()), r.clone())).collect();
    table.push(("all".into(), overall.clone()));
    write_report_csv(&dir.join("table.csv"), &table)?;
    let rows: Vec<(String, EpisodeSummary)> = records
        .iter()
        .map(|r| (format!("{}_{}", r.index, r.scene.name()), r.summary))
        .collect();
    write_episode_csv(&dir.join("episodes.csv"), &rows)?;

    let summary = SimSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        mode,
        seed: cfg.seed,
        fusion_mode: model.as_ref().map(|m| m.config().fusion_mode.name().to_string()),
        overall,
        per_scene,
        episodes: records,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.digits$}"))
}

fn table_rows(out: &mut String, label: &str, s: &SimSummary) {
    let mut row = |name: String, r: &MetricReport| {
        out.push_str(&format!(
            "| {name} | {} | {:.1} | {:.1} | {:.1} | {} | {} | {} | {:.1} |\n",
            r.episodes,
            r.psr,
            r.nsr,
            r.pvr,
            fmt_opt(r.ape, 3),
            fmt_opt(r.aoe, 2),
            fmt_opt(r.apt, 1),
            r.aps
        ));
    };
    for (k, r) in &s.per_scene {
        row(format!("{label} scene {}", k.name()), r);
    }
    row(format!("{label} all"), &s.overall);
}

/// Runs found under `out_dir`: the directory itself and each immediate
/// subdirectory that holds at least one stage summary.
fn run_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let has_summary = |d: &Path| {
        ["train", "eval", "sim_model", "sim_expert"]
            .iter()
            .any(|s| d.join(s).join("summary.json").is_file())
    };
    let mut dirs = Vec::new();
    if has_summary(root) {
        dirs.push(root.to_path_buf());
    }
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut subs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && has_summary(p))
        .collect();
    subs.sort();
    dirs.extend(subs);
    Ok(dirs)
}

/// Collects every stage summary under `out_dir` into `report.md`: one
/// comparison table over runs, then closed-loop tables per run.
pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let root = &cfg.out_dir;
    let dirs = run_dirs(root)?;
    if dirs.is_empty() {
        return Err(Error::Dataset(format!("no run summaries under {}", root.display())));
    }
    let name = |d: &Path| {
        if d == root.as_path() {
            ".".to_string()
        } else {
            d.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())
        }
    };
    let mut out = String::from("# Run report\n\n## Training and open-loop evaluation\n\n");
    out.push_str("| run | fusion | val. loss start | val. loss end | reduction | L2 (m) | Hausdorff (m) | Fourier |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    let mut sims = Vec::new();
    for d in &dirs {
        let train: Option<TrainSummary> = read_optional(&d.join("train/summary.json"))?;
        let eval: Option<EvalSummary> = read_optional(&d.join("eval/summary.json"))?;
        if train.is_some() || eval.is_some() {
            let fusion = train
                .as_ref()
                .map(|t| t.fusion_mode.clone())
                .or_else(|| eval.as_ref().and_then(|e| e.fusion_mode.clone()))
                .unwrap_or_else(|| "expert".into());
            let (l0, l1, red) = train.as_ref().map_or(("n/a".into(), "n/a".into(), "n/a".into()), |t| {
                (
                    format!("{:.4}", t.initial_validation_loss),
                    format!("{:.4}", t.final_validation_loss),
                    format!("{:.1}%", 100.0 * t.loss_reduction),
                )
            });
            let (l2, hd, fd) = eval.as_ref().map_or(("n/a".into(), "n/a".into(), "n/a".into()), |e| {
                (
                    format!("{:.3}", e.metrics.l2),
                    format!("{:.3}", e.metrics.hausdorff),
                    fmt_opt(e.metrics.fourier_diff, 3),
                )
            });
            out.push_str(&format!("| {} | {fusion} | {l0} | {l1} | {red} | {l2} | {hd} | {fd} |\n", name(d)));
        }
        for mode in [Mode::Expert, Mode::Model] {
            let s: Option<SimSummary> = read_optional(&d.join(format!("sim_{}/summary.json", mode.name())))?;
            if let Some(s) = s {
                sims.push((format!("{} {}", name(d), mode.name()), s));
            }
        }
    }
    if !sims.is_empty() {
        out.push_str("\n## Closed loop\n\n");
        out.push_str("| run | episodes | PSR (%) | NSR (%) | PVR (%) | APE (m) | AOE (deg) | APT (s) | APS |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for (label, s) in &sims {
            table_rows(&mut out, label, s);
        }
    }
    write_text(&root.join("report.md"), &out)?;
    Ok(out)
}

fn read_optional<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>> {
    if path.is_file() {
        read_json(path).map(Some)
    } else {
        Ok(None)
    }
}
