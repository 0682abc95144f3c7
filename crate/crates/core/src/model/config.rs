use serde::{Deserialize, Serialize};

use crate::bev::{DepthBins, GridSpec};
use crate::error::{Error, Result};
use crate::sensing::SurroundRig;
use crate::tokenizer::TokenVocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Target features query camera features through cross-attention.
    TargetQuery,
    /// Channel concatenation followed by a linear projection.
    Concatenation,
    /// Elementwise sum.
    ElementWise,
}

impl FusionMode {
    pub const ALL: [FusionMode; 3] = [
        FusionMode::TargetQuery,
        FusionMode::Concatenation,
        FusionMode::ElementWise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionMode::TargetQuery => "target_query",
            FusionMode::Concatenation => "concatenation",
            FusionMode::ElementWise => "element_wise",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Camera rig; its image size is the model's input size.
    pub rig: SurroundRig,
    /// Hidden channels of the first two image-encoder stages.
    pub encoder_channels: [usize; 2],
    /// Feature channels `C` shared by camera, target and fused maps.
    pub channels: usize,
    pub depth: DepthBins,
    /// Full-resolution BEV grid the splat geometry and heatmap live on.
    pub grid: GridSpec,
    /// Sum-pooling factor from the full grid to the fused feature grid.
    pub bev_downsample: usize,
    /// Hidden channels of the first two target-encoder stages.
    pub target_channels: [usize; 2],
    pub fusion_mode: FusionMode,
    pub fusion_heads: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    /// Waypoints per supervised chunk `Q`.
    pub horizon: usize,
    /// Waypoints emitted at most during greedy decoding.
    pub max_decode_len: usize,
    pub vocab: TokenVocab,
    /// Number of sinusoidal coordinate-value frequencies mixed into token
    /// embeddings and output logits; zero disables them.
    pub value_freqs: usize,
}

impl ModelConfig {
    /// Smallest configuration used for finite-difference gradient checks.
    pub fn tiny() -> ModelConfig {
        ModelConfig {
            rig: SurroundRig::standard(8, 8),
            encoder_channels: [2, 3],
            channels: 4,
            depth: DepthBins {
                count: 3,
                d_min: 0.5,
                d_max: 9.5,
            },
            grid: GridSpec::default(),
            bev_downsample: 50,
            target_channels: [2, 3],
            fusion_mode: FusionMode::TargetQuery,
            fusion_heads: 1,
            d_model: 8,
            n_heads: 1,
            n_layers: 1,
            d_ff: 16,
            horizon: 3,
            max_decode_len: 3,
            vocab: TokenVocab {
                bins: 16,
                range_x: 10.0,
                range_y: 10.0,
            },
            value_freqs: 4,
        }
    }

    /// Desk-scale configuration: 64×64 images, `d_model` 64, two layers.
    pub fn desk() -> ModelConfig {
        ModelConfig {
            rig: SurroundRig::standard(64, 64),
            encoder_channels: [16, 32],
            channels: 32,
            depth: DepthBins::default(),
            grid: GridSpec::default(),
            bev_downsample: 10,
            target_channels: [8, 16],
            fusion_mode: FusionMode::TargetQuery,
            fusion_heads: 4,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 128,
            horizon: 30,
            max_decode_len: 30,
            vocab: TokenVocab::default(),
            value_freqs: 16,
        }
    }

    pub fn image_size(&self) -> (usize, usize) {
        let i = &self.rig.cameras[0].intrinsics;
        (i.height, i.width)
    }

    /// Feature-map size after the stride-8 image encoder.
    pub fn feature_size(&self) -> (usize, usize) {
        let (h, w) = self.image_size();
        (h / 8, w / 8)
    }

    pub fn fused_grid(&self) -> Result<GridSpec> {
        self.grid.pooled(self.bev_downsample)
    }

    /// Decoder input length: BOS plus `2Q` coordinate tokens.
    pub fn max_positions(&self) -> usize {
        2 * self.horizon + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |r: String| Err(Error::invalid("model config", r));
        self.rig.validate()?;
        self.depth.validate()?;
        self.grid.validate()?;
        self.vocab.validate()?;
        let (h, w) = self.image_size();
        if self.rig.cameras.iter().any(|c| (c.intrinsics.height, c.intrinsics.width) != (h, w)) {
            return bad("all cameras must share one image size".into());
        }
        if h % 8 != 0 || w % 8 != 0 || h == 0 || w == 0 {
            return bad(format!("image size {h}×{w} must be a nonzero multiple of 8"));
        }
        let dims = [
            self.encoder_channels[0],
            self.encoder_channels[1],
            self.channels,
            self.target_channels[0],
            self.target_channels[1],
            self.d_model,
            self.n_heads,
            self.n_layers,
            self.d_ff,
            self.fusion_heads,
            self.horizon,
            self.max_decode_len,
        ];
        if dims.contains(&0) {
            return bad("all dimensions must be at least 1".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.channels % self.fusion_heads != 0 {
            return bad(format!(
                "channels {} not divisible by fusion_heads {}",
                self.channels, self.fusion_heads
            ));
        }
        if self.max_decode_len > self.horizon {
            return bad("max_decode_len cannot exceed horizon".into());
        }
        let ds = self.bev_downsample;
        if ds < 2 || ds % 2 != 0 {
            return bad(format!("bev_downsample {ds} must be even and at least 2"));
        }
        let g = self.fused_grid()?;
        if (self.grid.rows / (ds / 2)) % 2 != 0 || (self.grid.cols / (ds / 2)) % 2 != 0 {
            return bad("grid not compatible with the target encoder strides".into());
        }
        if g.cells() == 0 {
            return bad("empty fused grid".into());
        }
        Ok(())
    }
}
