//! In-memory dataset and its directory format: one raw label file plus a
//! JSON sidecar per episode, and a manifest with seeds, counts, checksums
//! and the generating configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bev::GridSpec;
use crate::error::{Error, Result};
use crate::model::{hex_sha256, Inputs, ModelConfig, SampleSource};
use crate::sensing::LabelImage;
use crate::tokenizer::serialize_trajectory;
use crate::world::{Pose2, SlotSpec};

use super::{chunk_range_share, chunk_targets, DatasetConfig, Episode, SceneKind, TrainingSample};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct Dataset {
    config: DatasetConfig,
    seed: u64,
    episodes: Vec<Episode>,
    failed: Vec<usize>,
    /// Cumulative sample counts, `offsets[e]` = first sample of episode `e`.
    offsets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeEntry {
    pub index: usize,
    pub scene: SceneKind,
    pub frames: usize,
    pub sidecar: String,
    pub sidecar_sha256: String,
    pub labels: String,
    pub labels_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub config: DatasetConfig,
    pub requested: usize,
    pub kept: usize,
    /// Episode indices skipped after a planning failure.
    pub failed: Vec<usize>,
    pub samples: usize,
    /// Share of samples whose chunk lies fully inside the BEV range.
    pub chunk_range_share: f64,
    pub episodes: Vec<EpisodeEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EpisodeSidecar {
    schema_version: u32,
    index: usize,
    scene: SceneKind,
    side: i32,
    start: Pose2,
    slot: SlotSpec,
    poses: Vec<Pose2>,
    /// `[frames, cameras, height, width]` of the u8 label file.
    label_shape: [usize; 4],
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

impl Dataset {
    pub(super) fn new(config: DatasetConfig, seed: u64, episodes: Vec<Episode>, failed: Vec<usize>) -> Dataset {
        let mut offsets = Vec::with_capacity(episodes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for ep in &episodes {
            acc += ep.len();
            offsets.push(acc);
        }
        Dataset {
            config,
            seed,
            episodes,
            failed,
            offsets,
        }
    }

    pub fn config(&self) -> &DatasetConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn failed(&self) -> &[usize] {
        &self.failed
    }

    /// Σ N_i over kept episodes.
    pub fn sample_count(&self) -> usize {
        *self.offsets.last().expect("offsets start at zero")
    }

    /// Episode position and 1-based frame index of sample `k`.
    pub fn locate(&self, k: usize) -> (usize, usize) {
        assert!(k < self.sample_count(), "sample {k} out of range");
        let e = self.offsets.partition_point(|&o| o <= k) - 1;
        (e, k - self.offsets[e] + 1)
    }

    pub fn sample(&self, k: usize) -> Result<TrainingSample> {
        if k >= self.sample_count() {
            return Err(Error::contract(format!("sample {k} out of range")));
        }
        let (e, j) = self.locate(k);
        let ep = &self.episodes[e];
        let ego = ep.poses[j - 1];
        let chunk = chunk_targets(&ep.trajectory(), j, self.config.horizon)?
            .into_iter()
            .map(|p| ego.to_ego(p))
            .collect();
        Ok(TrainingSample {
            images: ep.frame_labels(j, self.config.rig.len()).to_vec(),
            slot: super::slot_in_frame(&ep.slot, &ego),
            chunk,
            ego,
        })
    }

    /// Sample indices split by episode: the last `ceil(fraction · M)`
    /// episodes (at least one, never all) are held out.
    pub fn split(&self, fraction: f64) -> (Vec<usize>, Vec<usize>) {
        let m = self.episodes.len();
        let held = if m < 2 {
            0
        } else {
            ((fraction * m as f64).ceil() as usize).clamp(1, m - 1)
        };
        let cut = self.offsets[m - held];
        ((0..cut).collect(), (cut..self.sample_count()).collect())
    }

    pub fn save(&self, dir: impl AsRef<Path>, grid: &GridSpec) -> Result<DatasetManifest> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cams = self.config.rig.len();
        let mut entries = Vec::with_capacity(self.episodes.len());
        for ep in &self.episodes {
            let first = &ep.labels[0];
            let mut raw = Vec::with_capacity(ep.labels.len() * first.labels.len());
            for l in &ep.labels {
                raw.extend_from_slice(&l.labels);
            }
            let sidecar = EpisodeSidecar {
                schema_version: DATASET_SCHEMA_VERSION,
                index: ep.index,
                scene: ep.scene,
                side: ep.side,
                start: ep.start,
                slot: ep.slot.clone(),
                poses: ep.poses.clone(),
                label_shape: [ep.len(), cams, first.height, first.width],
            };
            let text = serde_json::to_string_pretty(&sidecar)?;
            let stem = format!("episode_{:05}", ep.index);
            let labels = format!("{stem}.labels");
            let side = format!("{stem}.json");
            write(&dir.join(&labels), &raw)?;
            write(&dir.join(&side), text.as_bytes())?;
            entries.push(EpisodeEntry {
                index: ep.index,
                scene: ep.scene,
                frames: ep.len(),
                sidecar: side,
                sidecar_sha256: hex_sha256(text.as_bytes()),
                labels,
                labels_sha256: hex_sha256(&raw),
            });
        }
        let manifest = DatasetManifest {
            schema_version: DATASET_SCHEMA_VERSION,
            seed: self.seed,
            config: self.config.clone(),
            requested: self.config.episodes,
            kept: self.episodes.len(),
            failed: self.failed.clone(),
            samples: self.sample_count(),
            chunk_range_share: chunk_range_share(self, grid),
            episodes: entries,
        };
        write(&dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(manifest)
    }

    pub fn read_manifest(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
        let path = dir.as_ref().join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let raw: serde_json::Value = serde_json::from_str(&text)?;
        let found = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != DATASET_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                artifact: path.display().to_string(),
                expected: DATASET_SCHEMA_VERSION,
                found,
            });
        }
        Ok(serde_json::from_value(raw)?)
    }

    /// Loads a dataset directory, verifying every checksum.
    pub fn load(dir: impl AsRef<Path>) -> Result<Dataset> {
        let dir = dir.as_ref();
        let manifest = Dataset::read_manifest(dir)?;
        manifest.config.validate()?;
        let mut episodes = Vec::with_capacity(manifest.episodes.len());
        for entry in &manifest.episodes {
            let text = read(&dir.join(&entry.sidecar))?;
            if hex_sha256(&text) != entry.sidecar_sha256 {
                return Err(Error::Dataset(format!("{}: checksum mismatch", entry.sidecar)));
            }
            let side: EpisodeSidecar = serde_json::from_slice(&text)?;
            if side.schema_version != DATASET_SCHEMA_VERSION {
                return Err(Error::SchemaVersion {
                    artifact: entry.sidecar.clone(),
                    expected: DATASET_SCHEMA_VERSION,
                    found: side.schema_version,
                });
            }
            let raw = read(&dir.join(&entry.labels))?;
            if hex_sha256(&raw) != entry.labels_sha256 {
                return Err(Error::Dataset(format!("{}: checksum mismatch", entry.labels)));
            }
            let [frames, cams, h, w] = side.label_shape;
            if raw.len() != frames * cams * h * w || frames != side.poses.len() {
                return Err(Error::Dataset(format!("{}: shape mismatch", entry.labels)));
            }
            let labels = raw
                .chunks_exact(h * w)
                .map(|c| LabelImage {
                    width: w,
                    height: h,
                    labels: c.to_vec(),
                })
                .collect();
            episodes.push(Episode {
                index: side.index,
                scene: side.scene,
                side: side.side,
                start: side.start,
                slot: side.slot,
                poses: side.poses,
                labels,
            });
        }
        Ok(Dataset::new(manifest.config, manifest.seed, episodes, manifest.failed))
    }
}

/// Training view over selected samples of a dataset for one model config.
pub struct DatasetSamples<'a> {
    data: &'a Dataset,
    model: &'a ModelConfig,
    indices: Vec<usize>,
}

impl<'a> DatasetSamples<'a> {
    pub fn new(data: &'a Dataset, model: &'a ModelConfig, indices: Vec<usize>) -> Result<DatasetSamples<'a>> {
        if data.config.rig != model.rig {
            return Err(Error::ConfigMismatch("dataset and model camera rigs differ".into()));
        }
        if data.config.horizon != model.horizon {
            return Err(Error::ConfigMismatch(format!(
                "dataset horizon {} but model horizon {}",
                data.config.horizon, model.horizon
            )));
        }
        if let Some(&k) = indices.iter().find(|&&k| k >= data.sample_count()) {
            return Err(Error::contract(format!("sample {k} out of range")));
        }
        Ok(DatasetSamples { data, model, indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Training sample behind position `i` of this view.
    pub fn training_sample(&self, i: usize) -> Result<TrainingSample> {
        self.data.sample(self.indices[i])
    }
}

impl SampleSource for DatasetSamples<'_> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn sample(&self, i: usize) -> Result<(Inputs, Vec<usize>)> {
        let s = self.training_sample(i)?;
        let inputs = Inputs::from_labels(&s.images, &s.slot, &Pose2::IDENTITY, self.model);
        let seq = serialize_trajectory(&s.chunk, &self.model.vocab)?;
        Ok((inputs, seq))
    }
}
