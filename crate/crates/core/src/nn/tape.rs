use std::sync::Arc;

use super::kernels::{self, ConvShape};
use super::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

type BackFn = Box<dyn Fn(&[f64], &[Tensor], &mut Grads)>;

/// Gradient accumulators filled during the reverse sweep.
pub struct Grads {
    bufs: Vec<Option<Vec<f64>>>,
    needs: Vec<bool>,
    lens: Vec<usize>,
}

impl Grads {
    /// Mutable gradient buffer for `v`, or `None` when `v` needs no gradient.
    pub fn slot(&mut self, v: Var) -> Option<&mut [f64]> {
        if !self.needs[v.0] {
            return None;
        }
        let len = self.lens[v.0];
        Some(self.bufs[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    pub fn needs(&self, v: Var) -> bool {
        self.needs[v.0]
    }

    pub fn acc(&mut self, v: Var, g: &[f64]) {
        if let Some(buf) = self.slot(v) {
            for (a, b) in buf.iter_mut().zip(g) {
                *a += b;
            }
        }
    }
}

/// Reverse-mode autodiff tape.
///
/// Values live on the tape; ops append a node together with a closure that
/// maps the node's output gradient to gradients of its inputs. With
/// `record = false` the tape only evaluates, which is how inference runs.
pub struct Tape {
    vals: Vec<Tensor>,
    needs: Vec<bool>,
    backs: Vec<Option<BackFn>>,
    record: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new(true)
    }
}

/// Result of [`Tape::backward`]: gradients of the leaves that required them.
pub struct Gradients {
    bufs: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.bufs.get(v.0).and_then(|b| b.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.bufs.get_mut(v.0).and_then(|b| b.take())
    }
}

impl Tape {
    pub fn new(record: bool) -> Tape {
        Tape {
            vals: Vec::new(),
            needs: Vec::new(),
            backs: Vec::new(),
            record,
        }
    }

    pub fn recording(&self) -> bool {
        self.record
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.vals[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.vals[v.0].shape()
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// Trainable input: gradients are accumulated for it.
    pub fn param(&mut self, t: Tensor) -> Var {
        let needs = self.record;
        self.push_raw(t, needs, None)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_raw(t, false, None)
    }

    fn push_raw(&mut self, t: Tensor, needs: bool, back: Option<BackFn>) -> Var {
        self.vals.push(t);
        self.needs.push(needs);
        self.backs.push(back);
        Var(self.vals.len() - 1)
    }

    fn push<F>(&mut self, t: Tensor, parents: &[Var], back: F) -> Var
    where
        F: Fn(&[f64], &[Tensor], &mut Grads) + 'static,
    {
        let needs = self.record && parents.iter().any(|p| self.needs[p.0]);
        let back: Option<BackFn> = if needs { Some(Box::new(back)) } else { None };
        self.push_raw(t, needs, back)
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.vals[loss.0].len(), 1, "backward needs a scalar loss");
        let mut grads = Grads {
            bufs: vec![None; self.vals.len()],
            needs: self.needs.clone(),
            lens: self.vals.iter().map(|t| t.len()).collect(),
        };
        if !self.needs[loss.0] {
            return Gradients { bufs: grads.bufs };
        }
        grads.bufs[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(back) = &self.backs[i] else { continue };
            if let Some(g) = grads.bufs[i].take() {
                back(&g, &self.vals, &mut grads);
            }
        }
        Gradients { bufs: grads.bufs }
    }

    // ---------------------------------------------------------------- ops

    /// `a·b` for `a: m×k`, `b: k×n`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.vals[a.0].dims2();
        let (k2, n) = self.vals[b.0].dims2();
        assert_eq!(k, k2, "matmul inner dims");
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, self.vals[a.0].data(), false, self.vals[b.0].data(), false, 0.0, &mut out);
        self.push(Tensor::from_vec(&[m, n], out), &[a, b], move |g, v, gr| {
            if let Some(da) = gr.slot(a) {
                kernels::gemm(m, n, k, g, false, v[b.0].data(), true, 1.0, da);
            }
            if let Some(db) = gr.slot(b) {
                kernels::gemm(k, m, n, v[a.0].data(), true, g, false, 1.0, db);
            }
        })
    }

    /// `x·w + bias` with the bias broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, bias: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_bias(y, bias)
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (m, n) = self.vals[a.0].dims2();
        assert_eq!(self.vals[bias.0].len(), n, "bias length");
        let mut out = self.vals[a.0].data().to_vec();
        let bv = self.vals[bias.0].data();
        for row in out.chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(bv) {
                *o += b;
            }
        }
        self.push(Tensor::from_vec(&[m, n], out), &[a, bias], move |g, _, gr| {
            gr.acc(a, g);
            if let Some(db) = gr.slot(bias) {
                for row in g.chunks(n) {
                    for (d, x) in db.iter_mut().zip(row) {
                        *d += x;
                    }
                }
            }
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let shape = self.vals[a.0].shape().to_vec();
        assert_eq!(self.vals[a.0].len(), self.vals[b.0].len(), "add sizes");
        let out: Vec<f64> = self.vals[a.0]
            .data()
            .iter()
            .zip(self.vals[b.0].data())
            .map(|(x, y)| x + y)
            .collect();
        self.push(Tensor::from_vec(&shape, out), &[a, b], move |g, _, gr| {
            gr.acc(a, g);
            gr.acc(b, g);
        })
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let shape = self.vals[a.0].shape().to_vec();
        assert_eq!(self.vals[a.0].len(), self.vals[b.0].len(), "mul sizes");
        let out: Vec<f64> = self.vals[a.0]
            .data()
            .iter()
            .zip(self.vals[b.0].data())
            .map(|(x, y)| x * y)
            .collect();
        self.push(Tensor::from_vec(&shape, out), &[a, b], move |g, v, gr| {
            if let Some(da) = gr.slot(a) {
                for ((d, gi), y) in da.iter_mut().zip(g).zip(v[b.0].data()) {
                    *d += gi * y;
                }
            }
            if let Some(db) = gr.slot(b) {
                for ((d, gi), x) in db.iter_mut().zip(g).zip(v[a.0].data()) {
                    *d += gi * x;
                }
            }
        })
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let shape = self.vals[a.0].shape().to_vec();
        let out: Vec<f64> = self.vals[a.0].data().iter().map(|x| x * s).collect();
        self.push(Tensor::from_vec(&shape, out), &[a], move |g, _, gr| {
            if let Some(da) = gr.slot(a) {
                for (d, gi) in da.iter_mut().zip(g) {
                    *d += gi * s;
                }
            }
        })
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let shape = self.vals[a.0].shape().to_vec();
        let out: Vec<f64> = self.vals[a.0].data().iter().map(|&x| kernels::silu(x)).collect();
        self.push(Tensor::from_vec(&shape, out), &[a], move |g, v, gr| {
            if let Some(da) = gr.slot(a) {
                for ((d, gi), &x) in da.iter_mut().zip(g).zip(v[a.0].data()) {
                    *d += gi * kernels::silu_grad(x);
                }
            }
        })
    }

    /// Row-wise layer normalization of an `m×n` matrix.
    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (m, n) = self.vals[x.0].dims2();
        let mut out = vec![0.0; m * n];
        let mut xhat = vec![0.0; m * n];
        let mut rstd = vec![0.0; m];
        {
            let xv = self.vals[x.0].data();
            let gv = self.vals[gamma.0].data();
            let bv = self.vals[beta.0].data();
            for i in 0..m {
                rstd[i] = kernels::layernorm_row(
                    &xv[i * n..(i + 1) * n],
                    gv,
                    bv,
                    &mut out[i * n..(i + 1) * n],
                    &mut xhat[i * n..(i + 1) * n],
                );
            }
        }
        self.push(Tensor::from_vec(&[m, n], out), &[x, gamma, beta], move |g, v, gr| {
            if let Some(dg) = gr.slot(gamma) {
                for i in 0..m {
                    for j in 0..n {
                        dg[j] += g[i * n + j] * xhat[i * n + j];
                    }
                }
            }
            if let Some(db) = gr.slot(beta) {
                for row in g.chunks(n) {
                    for (d, x) in db.iter_mut().zip(row) {
                        *d += x;
                    }
                }
            }
            if gr.needs(x) {
                let gv = v[gamma.0].data().to_vec();
                let dx = gr.slot(x).expect("needs checked");
                let nf = n as f64;
                let mut dxh = vec![0.0; n];
                for i in 0..m {
                    let xh = &xhat[i * n..(i + 1) * n];
                    let gi = &g[i * n..(i + 1) * n];
                    let mut mean_d = 0.0;
                    let mut mean_dx = 0.0;
                    for j in 0..n {
                        dxh[j] = gi[j] * gv[j];
                        mean_d += dxh[j];
                        mean_dx += dxh[j] * xh[j];
                    }
                    mean_d /= nf;
                    mean_dx /= nf;
                    for j in 0..n {
                        dx[i * n + j] += rstd[i] * (dxh[j] - mean_d - xh[j] * mean_dx);
                    }
                }
            }
        })
    }

    /// Softmax over the last axis of an `m×n` matrix.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.vals[a.0].dims2();
        let mut out = self.vals[a.0].data().to_vec();
        out.chunks_mut(n).for_each(kernels::softmax_in_place);
        let probs = out.clone();
        self.push(Tensor::from_vec(&[m, n], out), &[a], move |g, _, gr| {
            if let Some(da) = gr.slot(a) {
                for i in 0..m {
                    let p = &probs[i * n..(i + 1) * n];
                    let gi = &g[i * n..(i + 1) * n];
                    let dot: f64 = p.iter().zip(gi).map(|(x, y)| x * y).sum();
                    for j in 0..n {
                        da[i * n + j] += p[j] * (gi[j] - dot);
                    }
                }
            }
        })
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.vals[a.0].dims2();
        let out = self.vals[a.0].transpose2();
        self.push(out, &[a], move |g, _, gr| {
            if let Some(da) = gr.slot(a) {
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] += g[j * m + i];
                    }
                }
            }
        })
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let out = self.vals[a.0].clone().reshaped(shape);
        self.push(out, &[a], move |g, _, gr| gr.acc(a, g))
    }

    /// 2-D convolution of a `C×H×W` input with weights `Cout × (C·k·k)`.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Var, kernel: usize, stride: usize, pad: usize) -> Var {
        let (c_in, h, wd) = self.vals[x.0].dims3();
        let (c_out, plen) = self.vals[w.0].dims2();
        let s = ConvShape {
            c_in,
            h,
            w: wd,
            kernel,
            stride,
            pad,
        };
        assert_eq!(plen, s.patch_len(), "conv weight shape");
        let (ho, wo) = s.out_hw();
        let cols = kernels::im2col(self.vals[x.0].data(), s);
        let npix = ho * wo;
        let mut out = vec![0.0; c_out * npix];
        kernels::gemm(c_out, plen, npix, self.vals[w.0].data(), false, &cols, false, 0.0, &mut out);
        let bv = self.vals[bias.0].data();
        for (o, row) in out.chunks_mut(npix).enumerate() {
            row.iter_mut().for_each(|v| *v += bv[o]);
        }
        self.push(Tensor::from_vec(&[c_out, ho, wo], out), &[x, w, bias], move |g, v, gr| {
            if let Some(dw) = gr.slot(w) {
                kernels::gemm(c_out, npix, plen, g, false, &cols, true, 1.0, dw);
            }
            if let Some(db) = gr.slot(bias) {
                for (o, row) in g.chunks(npix).enumerate() {
                    db[o] += row.iter().sum::<f64>();
                }
            }
            if gr.needs(x) {
                let mut dcols = vec![0.0; plen * npix];
                kernels::gemm(plen, c_out, npix, v[w.0].data(), true, g, false, 0.0, &mut dcols);
                let dx = gr.slot(x).expect("needs checked");
                kernels::col2im(&dcols, s, dx);
            }
        })
    }

    /// Gathers rows of `table` (`V×d`) by index.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Var {
        let (vocab, d) = self.vals[table.0].dims2();
        let tv = self.vals[table.0].data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(id < vocab, "embedding index {id} out of range {vocab}");
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        let ids = ids.to_vec();
        self.push(Tensor::from_vec(&[ids.len(), d], out), &[table], move |g, _, gr| {
            if let Some(dt) = gr.slot(table) {
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[id * d + j] += g[r * d + j];
                    }
                }
            }
        })
    }

    /// First `rows` rows of an `m×n` matrix.
    pub fn take_rows(&mut self, a: Var, rows: usize) -> Var {
        let (m, n) = self.vals[a.0].dims2();
        assert!(rows <= m);
        let out = self.vals[a.0].data()[..rows * n].to_vec();
        self.push(Tensor::from_vec(&[rows, n], out), &[a], move |g, _, gr| {
            if let Some(da) = gr.slot(a) {
                for (d, x) in da.iter_mut().zip(g) {
                    *d += x;
                }
            }
        })
    }

    /// Stacks `a: m1×n` over `b: m2×n`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (m1, n) = self.vals[a.0].dims2();
        let (m2, n2) = self.vals[b.0].dims2();
        assert_eq!(n, n2, "concat_rows widths");
        let mut out = self.vals[a.0].data().to_vec();
        out.extend_from_slice(self.vals[b.0].data());
        self.push(Tensor::from_vec(&[m1 + m2, n], out), &[a, b], move |g, _, gr| {
            gr.acc(a, &g[..m1 * n]);
            gr.acc(b, &g[m1 * n..]);
        })
    }

    /// Places `a: m×n1` beside `b: m×n2`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (m, n1) = self.vals[a.0].dims2();
        let (m2, n2) = self.vals[b.0].dims2();
        assert_eq!(m, m2, "concat_cols heights");
        let n = n1 + n2;
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            out.extend_from_slice(self.vals[a.0].row(i));
            out.extend_from_slice(self.vals[b.0].row(i));
        }
        self.push(Tensor::from_vec(&[m, n], out), &[a, b], move |g, _, gr| {
            if let Some(da) = gr.slot(a) {
                for i in 0..m {
                    for j in 0..n1 {
                        da[i * n1 + j] += g[i * n + j];
                    }
                }
            }
            if let Some(db) = gr.slot(b) {
                for i in 0..m {
                    for j in 0..n2 {
                        db[i * n2 + j] += g[i * n + n1 + j];
                    }
                }
            }
        })
    }

    /// Lift-splat scatter: `out[cell] += probs[pixel, bin] · feat[pixel]`
    /// for every entry of `index`. `feat: P×C`, `probs: P×D`, output
    /// `cells×C`.
    pub fn splat(&mut self, feat: Var, probs: Var, index: Arc<SplatIndex>) -> Var {
        let (np, c) = self.vals[feat.0].dims2();
        let (np2, nd) = self.vals[probs.0].dims2();
        assert_eq!(np, np2, "splat pixel counts");
        assert_eq!(nd, index.bins, "splat depth bins");
        let mut out = vec![0.0; index.cells * c];
        {
            let fv = self.vals[feat.0].data();
            let pv = self.vals[probs.0].data();
            for e in &index.entries {
                let (p, d, cell) = (e.pixel as usize, e.bin as usize, e.cell as usize);
                let w = pv[p * nd + d];
                let src = &fv[p * c..(p + 1) * c];
                let dst = &mut out[cell * c..(cell + 1) * c];
                for (o, f) in dst.iter_mut().zip(src) {
                    *o += w * f;
                }
            }
        }
        let cells = index.cells;
        self.push(Tensor::from_vec(&[cells, c], out), &[feat, probs], move |g, v, gr| {
            if gr.needs(feat) {
                let pv = v[probs.0].data().to_vec();
                let df = gr.slot(feat).expect("needs checked");
                for e in &index.entries {
                    let (p, d, cell) = (e.pixel as usize, e.bin as usize, e.cell as usize);
                    let w = pv[p * nd + d];
                    for j in 0..c {
                        df[p * c + j] += w * g[cell * c + j];
                    }
                }
            }
            if gr.needs(probs) {
                let fv = v[feat.0].data().to_vec();
                let dp = gr.slot(probs).expect("needs checked");
                for e in &index.entries {
                    let (p, d, cell) = (e.pixel as usize, e.bin as usize, e.cell as usize);
                    let dot: f64 = fv[p * c..(p + 1) * c]
                        .iter()
                        .zip(&g[cell * c..(cell + 1) * c])
                        .map(|(a, b)| a * b)
                        .sum();
                    dp[p * nd + d] += dot;
                }
            }
        })
    }

    /// Multi-head attention over pre-projected `q: lq×d`, `k, v: lk×d`.
    /// With `causal`, query `i` attends to keys `0..=i`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, causal: bool) -> Var {
        let (lq, d) = self.vals[q.0].dims2();
        let (lk, dk) = self.vals[k.0].dims2();
        assert_eq!(d, dk, "attention widths");
        assert_eq!(self.vals[v.0].dims2(), (lk, d), "attention value shape");
        let (out, probs) = kernels::attention_forward(
            self.vals[q.0].data(),
            self.vals[k.0].data(),
            self.vals[v.0].data(),
            lq,
            lk,
            d,
            heads,
            causal.then_some(0),
        );
        self.push(Tensor::from_vec(&[lq, d], out), &[q, k, v], move |g, vals, gr| {
            let (dq, dk, dv) = kernels::attention_backward(
                g,
                vals[q.0].data(),
                vals[k.0].data(),
                vals[v.0].data(),
                &probs,
                lq,
                lk,
                d,
                heads,
            );
            gr.acc(q, &dq);
            gr.acc(k, &dk);
            gr.acc(v, &dv);
        })
    }

    /// Mean token cross-entropy of `logits: L×V` against `targets`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let (l, nv) = self.vals[logits.0].dims2();
        assert_eq!(l, targets.len(), "one target per row");
        let mut probs = self.vals[logits.0].data().to_vec();
        let mut loss = 0.0;
        for (i, row) in probs.chunks_mut(nv).enumerate() {
            let t = targets[i];
            assert!(t < nv, "target {t} out of range");
            loss += kernels::log_sum_exp(row) - row[t];
            kernels::softmax_in_place(row);
        }
        let inv = 1.0 / l as f64;
        let targets = targets.to_vec();
        self.push(Tensor::scalar(loss * inv), &[logits], move |g, _, gr| {
            if let Some(dl) = gr.slot(logits) {
                let s = g[0] * inv;
                for i in 0..l {
                    for j in 0..nv {
                        dl[i * nv + j] += s * probs[i * nv + j];
                    }
                    dl[i * nv + targets[i]] -= s;
                }
            }
        })
    }

    /// Sum of all elements.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.vals[a.0].sum();
        let n = self.vals[a.0].len();
        self.push(Tensor::scalar(s), &[a], move |g, _, gr| {
            if let Some(da) = gr.slot(a) {
                da.iter_mut().take(n).for_each(|d| *d += g[0]);
            }
        })
    }
}

/// One lift-splat contribution: depth bin `bin` of feature pixel `pixel`
/// lands in BEV cell `cell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplatEntry {
    pub pixel: u32,
    pub bin: u32,
    pub cell: u32,
}

/// Precomputed sparse lift-splat geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatIndex {
    pub pixels: usize,
    pub bins: usize,
    pub cells: usize,
    pub entries: Vec<SplatEntry>,
}
