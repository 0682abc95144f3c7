use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::seed::substream;

use super::config::{FusionMode, ModelConfig};

/// Named parameter tensors, ordered by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    tensors: BTreeMap<String, Tensor>,
}

/// How a tensor is initialized.
#[derive(Debug, Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    /// Uniform in `±1/√fan_in`.
    FanIn(usize),
    Uniform(f64),
}

/// Every parameter the configuration needs, with shapes and init rules.
fn layout(cfg: &ModelConfig) -> Result<Vec<(String, Vec<usize>, Init)>> {
    cfg.validate()?;
    let c = cfg.channels;
    let [e1, e2] = cfg.encoder_channels;
    let [t1, t2] = cfg.target_channels;
    let d = cfg.d_model;
    let v = cfg.vocab.size();
    let tk = cfg.bev_downsample / 2;
    let cells = cfg.fused_grid()?.cells();
    let mut out: Vec<(String, Vec<usize>, Init)> = Vec::new();
    let mut w = |name: &str, shape: &[usize], init: Init| out.push((name.to_string(), shape.to_vec(), init));
    w("enc.conv1.w", &[e1, 3 * 9], Init::FanIn(27));
    w("enc.conv1.b", &[e1], Init::Zeros);
    w("enc.conv2.w", &[e2, e1 * 9], Init::FanIn(e1 * 9));
    w("enc.conv2.b", &[e2], Init::Zeros);
    w("enc.conv3.w", &[c, e2 * 9], Init::FanIn(e2 * 9));
    w("enc.conv3.b", &[c], Init::Zeros);
    w("depth.w", &[c, cfg.depth.count], Init::FanIn(c));
    w("depth.b", &[cfg.depth.count], Init::Zeros);
    w("cam.ln.g", &[c], Init::Ones);
    w("cam.ln.b", &[c], Init::Zeros);
    w("tgt.conv1.w", &[t1, tk * tk], Init::FanIn(tk * tk));
    w("tgt.conv1.b", &[t1], Init::Zeros);
    w("tgt.conv2.w", &[t2, t1 * 9], Init::FanIn(t1 * 9));
    w("tgt.conv2.b", &[t2], Init::Zeros);
    w("tgt.conv3.w", &[c, t2], Init::FanIn(t2));
    w("tgt.conv3.b", &[c], Init::Zeros);
    w("bev.pe", &[cells, c], Init::Uniform(0.1));
    match cfg.fusion_mode {
        FusionMode::TargetQuery => {
            for n in ["q", "k", "v", "o"] {
                w(&format!("fuse.{n}.w"), &[c, c], Init::FanIn(c));
            }
            w("fuse.o.b", &[c], Init::Zeros);
        }
        FusionMode::Concatenation => {
            w("fuse.cat.w", &[2 * c, c], Init::FanIn(2 * c));
            w("fuse.cat.b", &[c], Init::Zeros);
        }
        FusionMode::ElementWise => {}
    }
    w("mem.w", &[c, d], Init::FanIn(c));
    w("mem.b", &[d], Init::Zeros);
    w("tok.emb", &[v, d], Init::Uniform(0.1));
    w("tok.pe", &[cfg.max_positions(), d], Init::Uniform(0.1));
    if cfg.value_freqs > 0 {
        w("tok.val.w", &[2 * cfg.value_freqs, d], Init::FanIn(2 * cfg.value_freqs));
        w("out.val.w", &[d, 2 * cfg.value_freqs], Init::FanIn(d));
    }
    for l in 0..cfg.n_layers {
        for (ln, att) in [("ln1", "self"), ("ln2", "cross")] {
            w(&format!("dec.{l}.{ln}.g"), &[d], Init::Ones);
            w(&format!("dec.{l}.{ln}.b"), &[d], Init::Zeros);
            for n in ["q", "k", "v", "o"] {
                w(&format!("dec.{l}.{att}.{n}.w"), &[d, d], Init::FanIn(d));
            }
            w(&format!("dec.{l}.{att}.o.b"), &[d], Init::Zeros);
        }
        w(&format!("dec.{l}.ln3.g"), &[d], Init::Ones);
        w(&format!("dec.{l}.ln3.b"), &[d], Init::Zeros);
        w(&format!("dec.{l}.ff1.w"), &[d, cfg.d_ff], Init::FanIn(d));
        w(&format!("dec.{l}.ff1.b"), &[cfg.d_ff], Init::Zeros);
        w(&format!("dec.{l}.ff2.w"), &[cfg.d_ff, d], Init::FanIn(cfg.d_ff));
        w(&format!("dec.{l}.ff2.b"), &[d], Init::Zeros);
    }
    w("out.ln.g", &[d], Init::Ones);
    w("out.ln.b", &[d], Init::Zeros);
    w("out.w", &[d, v], Init::FanIn(d));
    w("out.b", &[v], Init::Zeros);
    Ok(out)
}

impl Params {
    /// Seeded initialization. Values are rounded to `f32` so checkpoints
    /// round-trip exactly.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Params> {
        let mut tensors = BTreeMap::new();
        for (name, shape, init) in layout(cfg)? {
            let n: usize = shape.iter().product();
            let mut rng = substream(seed, &format!("init/{name}"), 0);
            let data: Vec<f64> = match init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::FanIn(f) => {
                    let a = 1.0 / (f as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-a..a)).collect()
                }
                Init::Uniform(a) => (0..n).map(|_| rng.random_range(-a..a)).collect(),
            };
            tensors.insert(name, Tensor::from_vec(&shape, data));
        }
        let mut p = Params { tensors };
        p.round_to_f32();
        Ok(p)
    }

    /// Checks that names and shapes match what `cfg` requires.
    pub fn check_layout(&self, cfg: &ModelConfig) -> Result<()> {
        let want = layout(cfg)?;
        if want.len() != self.tensors.len() {
            return Err(Error::ConfigMismatch(format!(
                "expected {} parameter tensors, found {}",
                want.len(),
                self.tensors.len()
            )));
        }
        for (name, shape, _) in want {
            match self.tensors.get(&name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::ConfigMismatch(format!(
                        "{name}: expected shape {shape:?}, found {:?}",
                        t.shape()
                    )))
                }
                None => return Err(Error::ConfigMismatch(format!("missing parameter {name}"))),
            }
        }
        if !self.tensors.values().all(|t| t.all_finite()) {
            return Err(Error::invalid("parameters", "non-finite values"));
        }
        Ok(())
    }

    pub fn from_map(tensors: BTreeMap<String, Tensor>) -> Params {
        Params { tensors }
    }

    /// Zero tensors with the same names and shapes.
    pub fn zeros_like(&self) -> Params {
        Params {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn round_to_f32(&mut self) {
        for t in self.tensors.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    /// `self += s · other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Params, s: f64) {
        for (k, t) in self.tensors.iter_mut() {
            let o = other.get(k);
            for (a, b) in t.data_mut().iter_mut().zip(o.data()) {
                *a += s * b;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors
            .values()
            .flat_map(|t| t.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }
}
