use crate::error::{Error, Result};
use crate::nn::{kernels, Tensor};

use super::Model;

/// Encoded frame plus per-layer cross-attention keys and values.
#[derive(Debug, Clone)]
pub struct Memory {
    /// `cells × d_model`.
    pub tokens: Tensor,
    cross_k: Vec<Vec<f64>>,
    cross_v: Vec<Vec<f64>>,
}

impl Memory {
    pub(super) fn new(model: &Model, tokens: Tensor) -> Memory {
        let (n, d) = tokens.dims2();
        let p = model.params();
        let proj = |name: String| {
            let mut out = vec![0.0; n * d];
            kernels::gemm(n, d, d, tokens.data(), false, p.get(&name).data(), false, 0.0, &mut out);
            out
        };
        let layers = model.config().n_layers;
        Memory {
            cross_k: (0..layers).map(|l| proj(format!("dec.{l}.cross.k.w"))).collect(),
            cross_v: (0..layers).map(|l| proj(format!("dec.{l}.cross.v.w"))).collect(),
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.dims2().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One-token-at-a-time decoder with cached self-attention keys and values.
/// Produces the same logits as the teacher-forced pass up to float
/// reassociation.
pub struct IncrementalDecoder<'a> {
    model: &'a Model,
    memory: &'a Memory,
    self_k: Vec<Vec<f64>>,
    self_v: Vec<Vec<f64>>,
    pos: usize,
}

fn vec_mat(x: &[f64], w: &Tensor) -> Vec<f64> {
    let (k, n) = w.dims2();
    let mut out = vec![0.0; n];
    kernels::gemm(1, k, n, x, false, w.data(), false, 0.0, &mut out);
    out
}

fn add_into(x: &mut [f64], y: &[f64]) {
    x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
}

fn layernorm(x: &[f64], g: &Tensor, b: &Tensor) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    let mut xh = vec![0.0; x.len()];
    kernels::layernorm_row(x, g.data(), b.data(), &mut y, &mut xh);
    y
}

impl<'a> IncrementalDecoder<'a> {
    pub fn new(model: &'a Model, memory: &'a Memory) -> IncrementalDecoder<'a> {
        let layers = model.config().n_layers;
        IncrementalDecoder {
            model,
            memory,
            self_k: vec![Vec::new(); layers],
            self_v: vec![Vec::new(); layers],
            pos: 0,
        }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    /// Feeds `token` at the next position and returns that position's
    /// logits over the vocabulary.
    pub fn step(&mut self, token: usize) -> Result<Vec<f64>> {
        let cfg = self.model.config();
        let p = self.model.params();
        if self.pos >= cfg.max_positions() {
            return Err(Error::contract(format!(
                "decoder positions exhausted ({})",
                cfg.max_positions()
            )));
        }
        if token >= cfg.vocab.size() {
            return Err(Error::contract(format!("token id {token} outside the vocabulary")));
        }
        let d = cfg.d_model;
        let mut x: Vec<f64> = p.get("tok.emb").data()[token * d..(token + 1) * d].to_vec();
        add_into(&mut x, &p.get("tok.pe").data()[self.pos * d..(self.pos + 1) * d]);
        if let Some(table) = &self.model.value_table {
            let k2 = table.dims2().1;
            let f = vec_mat(&table.data()[token * k2..(token + 1) * k2], p.get("tok.val.w"));
            add_into(&mut x, &f);
        }
        let lk = self.pos + 1;
        for l in 0..cfg.n_layers {
            let g = |n: &str| p.get(&format!("dec.{l}.{n}"));
            let h = layernorm(&x, g("ln1.g"), g("ln1.b"));
            let q = vec_mat(&h, g("self.q.w"));
            self.self_k[l].extend(vec_mat(&h, g("self.k.w")));
            self.self_v[l].extend(vec_mat(&h, g("self.v.w")));
            let (a, _) = kernels::attention_forward(&q, &self.self_k[l], &self.self_v[l], 1, lk, d, cfg.n_heads, None);
            let mut a = vec_mat(&a, g("self.o.w"));
            add_into(&mut a, g("self.o.b").data());
            add_into(&mut x, &a);

            let h = layernorm(&x, g("ln2.g"), g("ln2.b"));
            let q = vec_mat(&h, g("cross.q.w"));
            let (a, _) = kernels::attention_forward(
                &q,
                &self.memory.cross_k[l],
                &self.memory.cross_v[l],
                1,
                self.memory.len(),
                d,
                cfg.n_heads,
                None,
            );
            let mut a = vec_mat(&a, g("cross.o.w"));
            add_into(&mut a, g("cross.o.b").data());
            add_into(&mut x, &a);

            let h = layernorm(&x, g("ln3.g"), g("ln3.b"));
            let mut f = vec_mat(&h, g("ff1.w"));
            add_into(&mut f, g("ff1.b").data());
            f.iter_mut().for_each(|v| *v = kernels::silu(*v));
            let mut f = vec_mat(&f, g("ff2.w"));
            add_into(&mut f, g("ff2.b").data());
            add_into(&mut x, &f);
        }
        let h = layernorm(&x, p.get("out.ln.g"), p.get("out.ln.b"));
        let mut logits = vec_mat(&h, p.get("out.w"));
        add_into(&mut logits, p.get("out.b").data());
        if let Some(table) = &self.model.value_table {
            let gv = vec_mat(&h, p.get("out.val.w"));
            let (v, k2) = table.dims2();
            let mut extra = vec![0.0; v];
            kernels::gemm(1, k2, v, &gv, false, table.data(), true, 0.0, &mut extra);
            add_into(&mut logits, &extra);
        }
        self.pos += 1;
        Ok(logits)
    }
}
