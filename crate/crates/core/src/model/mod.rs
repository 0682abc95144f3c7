//! The learnable planner: image encoder with depth head, lift-splat into the
//! BEV grid, target-slot encoder, feature fusion and an autoregressive token
//! decoder, together with training and checkpointing.
//!
//! Forward passes for training run on the autodiff [`Tape`]; greedy decoding
//! uses [`IncrementalDecoder`], which applies the same kernels one token at a
//! time with cached keys and values.

mod checkpoint;
mod config;
mod decode;
mod params;
mod train;

use std::collections::HashMap;
use std::sync::Arc;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, CHECKPOINT_SCHEMA_VERSION};
pub(crate) use checkpoint::hex_sha256;
pub use config::{FusionMode, ModelConfig};
pub use decode::{IncrementalDecoder, Memory};
pub use params::Params;
pub use train::{train, Batch, SampleSource, TrainConfig, TrainReport};

use crate::bev::{make_target_heatmap, splat_index};
use crate::error::{Error, Result};
use crate::nn::{kernels, SplatIndex, Tape, Tensor, Var};
use crate::par::Exec;
use crate::sensing::{Image, LabelImage};
use crate::tokenizer::{deserialize_sequence, Decoded};
use crate::world::{Pose2, SlotSpec};

/// Everything the network sees for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    /// One `3×H×W` tensor per camera.
    pub images: Vec<Tensor>,
    /// `1×rows×cols` target-slot heatmap on the full BEV grid.
    pub heatmap: Tensor,
}

impl Inputs {
    pub fn new(images: &[Image], slot: &SlotSpec, ego: &Pose2, cfg: &ModelConfig) -> Inputs {
        Inputs {
            images: images
                .iter()
                .map(|im| {
                    Tensor::from_vec(
                        &[im.channels, im.height, im.width],
                        im.data.iter().map(|&v| v as f64).collect(),
                    )
                })
                .collect(),
            heatmap: make_target_heatmap(slot, ego, &cfg.grid).to_tensor(),
        }
    }

    pub fn from_labels(labels: &[LabelImage], slot: &SlotSpec, ego: &Pose2, cfg: &ModelConfig) -> Inputs {
        let images: Vec<Image> = labels.iter().map(LabelImage::to_image).collect();
        Inputs::new(&images, slot, ego, cfg)
    }
}

/// Parameter tensors placed on a tape, looked up by name.
struct Bound<'a>(HashMap<&'a str, Var>);

impl Bound<'_> {
    fn get(&self, name: &str) -> Var {
        *self
            .0
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: Params,
    splat: Arc<SplatIndex>,
    /// Sinusoidal coordinate features per token, `V × 2K`.
    value_table: Option<Tensor>,
}

impl Model {
    /// Freshly initialized model.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model> {
        let params = Params::init(&config, seed)?;
        Model::from_params(config, params)
    }

    pub fn from_params(config: ModelConfig, params: Params) -> Result<Model> {
        config.validate()?;
        params.check_layout(&config)?;
        let (fh, fw) = config.feature_size();
        let splat = Arc::new(splat_index(
            &config.rig,
            fh,
            fw,
            &config.depth,
            &config.grid,
            config.bev_downsample,
        )?);
        let value_table = (config.value_freqs > 0).then(|| value_table(&config));
        Ok(Model {
            config,
            params,
            splat,
            value_table,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn bind<'a>(&'a self, tp: &mut Tape) -> Bound<'a> {
        Bound(
            self.params
                .iter()
                .map(|(k, t)| (k.as_str(), tp.param(t.clone())))
                .collect(),
        )
    }

    fn check_inputs(&self, inputs: &Inputs) -> Result<()> {
        let (h, w) = self.config.image_size();
        if inputs.images.len() != self.config.rig.len() {
            return Err(Error::contract(format!(
                "expected {} camera images, got {}",
                self.config.rig.len(),
                inputs.images.len()
            )));
        }
        if let Some(im) = inputs.images.iter().find(|im| im.shape() != [3, h, w]) {
            return Err(Error::contract(format!(
                "image shape {:?} does not match [3, {h}, {w}]",
                im.shape()
            )));
        }
        let g = &self.config.grid;
        if inputs.heatmap.shape() != [1, g.rows, g.cols] {
            return Err(Error::contract(format!(
                "heatmap shape {:?} does not match the BEV grid",
                inputs.heatmap.shape()
            )));
        }
        Ok(())
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() || tokens.len() > self.config.max_positions() {
            return Err(Error::contract(format!(
                "token prefix length {} outside 1..={}",
                tokens.len(),
                self.config.max_positions()
            )));
        }
        if let Some(t) = tokens.iter().find(|&&t| t >= self.config.vocab.size()) {
            return Err(Error::contract(format!("token id {t} outside the vocabulary")));
        }
        Ok(())
    }

    /// Per-camera features `C×h×w` on the tape.
    fn image_encoder(&self, tp: &mut Tape, b: &Bound, image: &Tensor) -> Var {
        let x = tp.constant(image.clone());
        let h = tp.conv2d(x, b.get("enc.conv1.w"), b.get("enc.conv1.b"), 3, 2, 1);
        let h = tp.silu(h);
        let h = tp.conv2d(h, b.get("enc.conv2.w"), b.get("enc.conv2.b"), 3, 2, 1);
        let h = tp.silu(h);
        tp.conv2d(h, b.get("enc.conv3.w"), b.get("enc.conv3.b"), 3, 2, 1)
    }

    /// Camera BEV tokens `cells×C`: encoder, depth softmax and lift-splat
    /// summed over all cameras, then layer-normalized per cell.
    fn camera_bev(&self, tp: &mut Tape, b: &Bound, inputs: &Inputs) -> Var {
        let c = self.config.channels;
        let mut feats: Option<Var> = None;
        let mut probs: Option<Var> = None;
        for image in &inputs.images {
            let f = self.image_encoder(tp, b, image);
            let (_, fh, fw) = tp.value(f).dims3();
            let f = tp.reshape(f, &[c, fh * fw]);
            let f = tp.transpose(f);
            let logits = tp.linear(f, b.get("depth.w"), b.get("depth.b"));
            let p = tp.softmax_rows(logits);
            feats = Some(match feats {
                Some(acc) => tp.concat_rows(acc, f),
                None => f,
            });
            probs = Some(match probs {
                Some(acc) => tp.concat_rows(acc, p),
                None => p,
            });
        }
        let cam = tp.splat(
            feats.expect("at least one camera"),
            probs.expect("at least one camera"),
            self.splat.clone(),
        );
        // per-cell normalization: splat sums scale with pixel density
        tp.layernorm(cam, b.get("cam.ln.g"), b.get("cam.ln.b"))
    }

    /// Target tokens `cells×C` from the slot heatmap.
    fn target_encoder(&self, tp: &mut Tape, b: &Bound, heatmap: &Tensor) -> Var {
        let k = self.config.bev_downsample / 2;
        let x = tp.constant(heatmap.clone());
        let h = tp.conv2d(x, b.get("tgt.conv1.w"), b.get("tgt.conv1.b"), k, k, 0);
        let h = tp.silu(h);
        let h = tp.conv2d(h, b.get("tgt.conv2.w"), b.get("tgt.conv2.b"), 3, 2, 1);
        let h = tp.silu(h);
        let h = tp.conv2d(h, b.get("tgt.conv3.w"), b.get("tgt.conv3.b"), 1, 1, 0);
        let (c, gh, gw) = tp.value(h).dims3();
        let h = tp.reshape(h, &[c, gh * gw]);
        tp.transpose(h)
    }

    fn fuse(&self, tp: &mut Tape, b: &Bound, cam: Var, target: Var) -> Var {
        match self.config.fusion_mode {
            FusionMode::TargetQuery => {
                let pe = b.get("bev.pe");
                let tq = tp.add(target, pe);
                let ck = tp.add(cam, pe);
                let q = tp.matmul(tq, b.get("fuse.q.w"));
                let k = tp.matmul(ck, b.get("fuse.k.w"));
                let v = tp.matmul(cam, b.get("fuse.v.w"));
                let a = tp.attention(q, k, v, self.config.fusion_heads, false);
                tp.linear(a, b.get("fuse.o.w"), b.get("fuse.o.b"))
            }
            FusionMode::Concatenation => {
                let x = tp.concat_cols(cam, target);
                tp.linear(x, b.get("fuse.cat.w"), b.get("fuse.cat.b"))
            }
            FusionMode::ElementWise => tp.add(cam, target),
        }
    }

    /// Decoder memory `cells×d_model`: fused tokens plus positional encoding,
    /// projected to the decoder width.
    fn encode_tape(&self, tp: &mut Tape, b: &Bound, inputs: &Inputs) -> Var {
        let cam = self.camera_bev(tp, b, inputs);
        let target = self.target_encoder(tp, b, &inputs.heatmap);
        let fused = self.fuse(tp, b, cam, target);
        let fused = match self.config.fusion_mode {
            // skip connection from the query stream, as in a transformer
            // cross-attention block; the other modes already carry the
            // target features linearly
            FusionMode::TargetQuery => tp.add(fused, target),
            FusionMode::Concatenation | FusionMode::ElementWise => fused,
        };
        let x = tp.add(fused, b.get("bev.pe"));
        tp.linear(x, b.get("mem.w"), b.get("mem.b"))
    }

    /// Teacher-forced logits `len×V` for the token prefix.
    fn decode_tape(&self, tp: &mut Tape, b: &Bound, memory: Var, tokens: &[usize]) -> Var {
        let cfg = &self.config;
        let mut x = tp.embedding(b.get("tok.emb"), tokens);
        let pe = tp.take_rows(b.get("tok.pe"), tokens.len());
        x = tp.add(x, pe);
        let table = self.value_table.as_ref().map(|t| tp.constant(t.clone()));
        if let Some(table) = table {
            let f = tp.embedding(table, tokens);
            let f = tp.matmul(f, b.get("tok.val.w"));
            x = tp.add(x, f);
        }
        for l in 0..cfg.n_layers {
            let p = |n: &str| b.get(&format!("dec.{l}.{n}"));
            let h = tp.layernorm(x, p("ln1.g"), p("ln1.b"));
            let q = tp.matmul(h, p("self.q.w"));
            let k = tp.matmul(h, p("self.k.w"));
            let v = tp.matmul(h, p("self.v.w"));
            let a = tp.attention(q, k, v, cfg.n_heads, true);
            let a = tp.linear(a, p("self.o.w"), p("self.o.b"));
            x = tp.add(x, a);

            let h = tp.layernorm(x, p("ln2.g"), p("ln2.b"));
            let q = tp.matmul(h, p("cross.q.w"));
            let k = tp.matmul(memory, p("cross.k.w"));
            let v = tp.matmul(memory, p("cross.v.w"));
            let a = tp.attention(q, k, v, cfg.n_heads, false);
            let a = tp.linear(a, p("cross.o.w"), p("cross.o.b"));
            x = tp.add(x, a);

            let h = tp.layernorm(x, p("ln3.g"), p("ln3.b"));
            let f = tp.linear(h, p("ff1.w"), p("ff1.b"));
            let f = tp.silu(f);
            let f = tp.linear(f, p("ff2.w"), p("ff2.b"));
            x = tp.add(x, f);
        }
        let h = tp.layernorm(x, b.get("out.ln.g"), b.get("out.ln.b"));
        let mut logits = tp.linear(h, b.get("out.w"), b.get("out.b"));
        if let Some(table) = &self.value_table {
            let g = tp.matmul(h, b.get("out.val.w"));
            let tt = tp.constant(table.transpose2());
            let extra = tp.matmul(g, tt);
            logits = tp.add(logits, extra);
        }
        logits
    }

    /// Teacher-forced logits for a token prefix (no gradients).
    pub fn logits(&self, inputs: &Inputs, tokens: &[usize]) -> Result<Tensor> {
        self.check_inputs(inputs)?;
        self.check_tokens(tokens)?;
        let mut tp = Tape::new(false);
        let b = self.bind(&mut tp);
        let m = self.encode_tape(&mut tp, &b, inputs);
        let l = self.decode_tape(&mut tp, &b, m, tokens);
        Ok(tp.value(l).clone())
    }

    /// Splits a full `[BOS, …, EOS]` sequence into decoder input and targets.
    fn split_sequence<'s>(&self, seq: &'s [usize]) -> Result<(&'s [usize], &'s [usize])> {
        if seq.len() < 2 {
            return Err(Error::contract("training sequence needs at least BOS and EOS"));
        }
        let input = &seq[..seq.len() - 1];
        self.check_tokens(input)?;
        if let Some(t) = seq.iter().find(|&&t| t >= self.config.vocab.size()) {
            return Err(Error::contract(format!("token id {t} outside the vocabulary")));
        }
        Ok((input, &seq[1..]))
    }

    /// Mean next-token cross-entropy of a full sequence.
    pub fn loss(&self, inputs: &Inputs, seq: &[usize]) -> Result<f64> {
        self.check_inputs(inputs)?;
        let (input, target) = self.split_sequence(seq)?;
        let mut tp = Tape::new(false);
        let b = self.bind(&mut tp);
        let m = self.encode_tape(&mut tp, &b, inputs);
        let l = self.decode_tape(&mut tp, &b, m, input);
        let ce = tp.cross_entropy(l, target);
        Ok(tp.value(ce).data()[0])
    }

    /// Loss and parameter gradients for one sequence.
    pub fn loss_and_gradients(&self, inputs: &Inputs, seq: &[usize]) -> Result<(f64, Params)> {
        let (loss, grads) = self.raw_gradients(inputs, seq)?;
        if !loss.is_finite() {
            return Err(Error::contract(format!("non-finite loss {loss}")));
        }
        Ok((loss, grads))
    }

    fn raw_gradients(&self, inputs: &Inputs, seq: &[usize]) -> Result<(f64, Params)> {
        self.check_inputs(inputs)?;
        let (input, target) = self.split_sequence(seq)?;
        let mut tp = Tape::new(true);
        let b = self.bind(&mut tp);
        let m = self.encode_tape(&mut tp, &b, inputs);
        let l = self.decode_tape(&mut tp, &b, m, input);
        let ce = tp.cross_entropy(l, target);
        let loss = tp.value(ce).data()[0];
        let mut g = tp.backward(ce);
        let mut grads = self.params.zeros_like();
        for (name, t) in grads.iter_mut() {
            if let Some(d) = g.take(b.get(name)) {
                t.data_mut().copy_from_slice(&d);
            }
        }
        Ok((loss, grads))
    }

    /// Mean loss and gradients over a batch. Per-sample gradients may be
    /// computed in parallel; they are summed in batch order.
    pub fn batch_gradients(&self, batch: &[(Inputs, Vec<usize>)], exec: Exec) -> Result<(f64, Params)> {
        if batch.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let per = exec.map(batch, |(inp, seq)| self.loss_and_gradients(inp, seq));
        let inv = 1.0 / batch.len() as f64;
        let mut total = self.params.zeros_like();
        let mut loss = 0.0;
        for r in per {
            let (l, g) = r?;
            loss += l;
            total.add_scaled(&g, inv);
        }
        Ok((loss * inv, total))
    }

    /// Encodes the frame once for incremental decoding.
    pub fn encode(&self, inputs: &Inputs) -> Result<Memory> {
        self.check_inputs(inputs)?;
        let mut tp = Tape::new(false);
        let b = self.bind(&mut tp);
        let m = self.encode_tape(&mut tp, &b, inputs);
        Ok(Memory::new(self, tp.value(m).clone()))
    }

    /// Greedy autoregressive decode from BOS until EOS or the point cap.
    /// Returns the emitted tokens (without BOS).
    pub fn greedy_tokens(&self, inputs: &Inputs) -> Result<Vec<usize>> {
        let memory = self.encode(inputs)?;
        let mut dec = IncrementalDecoder::new(self, &memory);
        let cap = 2 * self.config.max_decode_len + 1;
        let mut out = Vec::with_capacity(cap);
        let mut next = self.config.vocab.bos();
        for _ in 0..cap {
            let logits = dec.step(next)?;
            next = argmax(&logits);
            out.push(next);
            if next == self.config.vocab.eos() {
                break;
            }
        }
        Ok(out)
    }

    /// Full inference: tokens decoded and mapped back to ego-frame waypoints.
    pub fn infer(&self, inputs: &Inputs) -> Result<Decoded> {
        let toks = self.greedy_tokens(inputs)?;
        let mut seq = Vec::with_capacity(toks.len() + 1);
        seq.push(self.config.vocab.bos());
        seq.extend_from_slice(&toks);
        let mut d = deserialize_sequence(&seq, &self.config.vocab);
        d.points.truncate(self.config.max_decode_len);
        Ok(d)
    }

    /// Inference from the current surround frames, target slot and ego pose.
    pub fn infer_trajectory(&self, images: &[Image], slot: &SlotSpec, ego: &Pose2) -> Result<Decoded> {
        let inputs = Inputs::new(images, slot, ego, &self.config);
        self.infer(&inputs)
    }

    /// Fusion attention weights `heads × cells × cells` (target-query mode).
    pub fn fusion_attention(&self, inputs: &Inputs) -> Result<Option<Tensor>> {
        if self.config.fusion_mode != FusionMode::TargetQuery {
            return Ok(None);
        }
        self.check_inputs(inputs)?;
        let mut tp = Tape::new(false);
        let b = self.bind(&mut tp);
        let cam = self.camera_bev(&mut tp, &b, inputs);
        let target = self.target_encoder(&mut tp, &b, &inputs.heatmap);
        let pe = b.get("bev.pe");
        let tq = tp.add(target, pe);
        let ck = tp.add(cam, pe);
        let q = tp.matmul(tq, b.get("fuse.q.w"));
        let k = tp.matmul(ck, b.get("fuse.k.w"));
        let (n, c) = tp.value(q).dims2();
        let heads = self.config.fusion_heads;
        let zeros = vec![0.0; n * c];
        let (_, probs) =
            kernels::attention_forward(tp.value(q).data(), tp.value(k).data(), &zeros, n, n, c, heads, None);
        Ok(Some(Tensor::from_vec(&[heads, n, n], probs)))
    }

    /// Fused BEV features `cells×C` (before the memory projection).
    pub fn fused_features(&self, inputs: &Inputs) -> Result<Tensor> {
        self.check_inputs(inputs)?;
        let mut tp = Tape::new(false);
        let b = self.bind(&mut tp);
        let cam = self.camera_bev(&mut tp, &b, inputs);
        let target = self.target_encoder(&mut tp, &b, &inputs.heatmap);
        let f = self.fuse(&mut tp, &b, cam, target);
        Ok(tp.value(f).clone())
    }

    /// Camera BEV features `cells×C`.
    pub fn camera_features(&self, inputs: &Inputs) -> Result<Tensor> {
        self.check_inputs(inputs)?;
        let mut tp = Tape::new(false);
        let b = self.bind(&mut tp);
        let cam = self.camera_bev(&mut tp, &b, inputs);
        Ok(tp.value(cam).clone())
    }

    /// Target features `cells×C`.
    pub fn target_features(&self, heatmap: &Tensor) -> Result<Tensor> {
        let mut tp = Tape::new(false);
        let b = self.bind(&mut tp);
        let t = self.target_encoder(&mut tp, &b, heatmap);
        Ok(tp.value(t).clone())
    }

    /// Image features `C×h×w` and per-pixel depth distribution `hw×D` for
    /// one camera image.
    pub fn image_features(&self, image: &Tensor) -> Result<(Tensor, Tensor)> {
        let (h, w) = self.config.image_size();
        if image.shape() != [3, h, w] {
            return Err(Error::contract(format!("image shape {:?} does not match [3, {h}, {w}]", image.shape())));
        }
        let mut tp = Tape::new(false);
        let b = self.bind(&mut tp);
        let f = self.image_encoder(&mut tp, &b, image);
        let (c, fh, fw) = tp.value(f).dims3();
        let ff = tp.reshape(f, &[c, fh * fw]);
        let ff = tp.transpose(ff);
        let logits = tp.linear(ff, b.get("depth.w"), b.get("depth.b"));
        let p = tp.softmax_rows(logits);
        Ok((tp.value(f).clone(), tp.value(p).clone()))
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Sinusoidal features of each positional token's bin-center value in
/// `(0, 1)`; special tokens get zero rows.
fn value_table(cfg: &ModelConfig) -> Tensor {
    let k = cfg.value_freqs;
    let n = cfg.vocab.bins;
    let v = cfg.vocab.size();
    let f_lo: f64 = 0.5;
    let f_hi = (n as f64 / 4.0).max(1.0);
    let mut data = vec![0.0; v * 2 * k];
    for t in 0..n {
        let x = (t as f64 + 0.5) / n as f64;
        for j in 0..k {
            let f = if k == 1 {
                f_lo
            } else {
                f_lo * (f_hi / f_lo).powf(j as f64 / (k - 1) as f64)
            };
            let a = 2.0 * std::f64::consts::PI * f * x;
            data[t * 2 * k + 2 * j] = a.sin();
            data[t * 2 * k + 2 * j + 1] = a.cos();
        }
    }
    Tensor::from_vec(&[v, 2 * k], data)
}
