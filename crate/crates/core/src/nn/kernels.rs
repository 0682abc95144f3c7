//! Numeric kernels shared by the autodiff tape and the cached decoder.
//!
//! Everything is `f64`, row-major. Matrix products go through
//! `matrixmultiply`, whose accumulation order depends only on the shapes, so
//! each output row is a deterministic function of the matching input row.

/// Strided view of a matrix: element `(i, j)` lives at `offset + i·rs + j·cs`.
#[derive(Debug, Clone, Copy)]
pub struct View {
    pub offset: usize,
    pub rs: isize,
    pub cs: isize,
}

impl View {
    /// Plain row-major `rows × cols` matrix.
    pub fn rm(cols: usize) -> View {
        View {
            offset: 0,
            rs: cols as isize,
            cs: 1,
        }
    }

    /// Transpose of a row-major matrix that has `cols` columns in storage.
    pub fn tr(cols: usize) -> View {
        View {
            offset: 0,
            rs: 1,
            cs: cols as isize,
        }
    }

    pub fn at(self, offset: usize) -> View {
        View { offset, ..self }
    }
}

/// `c ← alpha·a·b + beta·c` with `a: m×k`, `b: k×n`, `c: m×n` as strided views.
#[allow(clippy::too_many_arguments)]
pub fn gemm_view(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    va: View,
    b: &[f64],
    vb: View,
    beta: f64,
    c: &mut [f64],
    vc: View,
) {
    if m == 0 || n == 0 {
        return;
    }
    // bounds: the last element touched by each view must be in range
    let last = |v: View, r: usize, cc: usize| {
        v.offset as isize + (r as isize - 1) * v.rs + (cc as isize - 1) * v.cs
    };
    if k > 0 {
        assert!((last(va, m, k) as usize) < a.len(), "gemm: a out of bounds");
        assert!((last(vb, k, n) as usize) < b.len(), "gemm: b out of bounds");
    }
    assert!((last(vc, m, n) as usize) < c.len(), "gemm: c out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let idx = (vc.offset as isize + i as isize * vc.rs + j as isize * vc.cs) as usize;
                c[idx] *= beta;
            }
        }
        return;
    }
    // SAFETY: all three views were bounds-checked above and `c` is uniquely
    // borrowed, so the kernel reads and writes only valid memory.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(va.offset),
            va.rs,
            va.cs,
            b.as_ptr().add(vb.offset),
            vb.rs,
            vb.cs,
            beta,
            c.as_mut_ptr().add(vc.offset),
            vc.rs,
            vc.cs,
        );
    }
}

/// `c ← op(a)·op(b) + beta·c` for contiguous row-major operands, where
/// `op(a)` is `m×k` and `op(b)` is `k×n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    let va = if trans_a { View::tr(m) } else { View::rm(k) };
    let vb = if trans_b { View::tr(k) } else { View::rm(n) };
    gemm_view(m, k, n, 1.0, a, va, b, vb, beta, c, View::rm(n));
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// In-place numerically stable softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    row.iter_mut().for_each(|v| *v *= inv);
}

/// Returns `log Σ exp(row)`.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub const LN_EPS: f64 = 1e-5;

/// Layer norm of one row; writes the normalized row into `xhat` and returns
/// the reciprocal standard deviation.
pub fn layernorm_row(x: &[f64], gamma: &[f64], beta: &[f64], y: &mut [f64], xhat: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rstd = 1.0 / (var + LN_EPS).sqrt();
    for i in 0..x.len() {
        xhat[i] = (x[i] - mean) * rstd;
        y[i] = gamma[i] * xhat[i] + beta[i];
    }
    rstd
}

/// Geometry of a 2-D convolution over one `C×H×W` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvShape {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.h + 2 * self.pad - self.kernel) / self.stride + 1,
            (self.w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    pub fn patch_len(&self) -> usize {
        self.c_in * self.kernel * self.kernel
    }
}

/// Unfolds patches into a `(C·k·k) × (Ho·Wo)` matrix.
pub fn im2col(x: &[f64], s: ConvShape) -> Vec<f64> {
    let (ho, wo) = s.out_hw();
    let cols = ho * wo;
    let mut out = vec![0.0; s.patch_len() * cols];
    for c in 0..s.c_in {
        for ky in 0..s.kernel {
            for kx in 0..s.kernel {
                let row = (c * s.kernel + ky) * s.kernel + kx;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for oy in 0..ho {
                    let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let src = &x[(c * s.h + iy as usize) * s.w..(c * s.h + iy as usize + 1) * s.w];
                    for ox in 0..wo {
                        let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                        if ix >= 0 && ix < s.w as isize {
                            dst[oy * wo + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
pub fn col2im(cols_grad: &[f64], s: ConvShape, dx: &mut [f64]) {
    let (ho, wo) = s.out_hw();
    let cols = ho * wo;
    for c in 0..s.c_in {
        for ky in 0..s.kernel {
            for kx in 0..s.kernel {
                let row = (c * s.kernel + ky) * s.kernel + kx;
                let src = &cols_grad[row * cols..(row + 1) * cols];
                for oy in 0..ho {
                    let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let base = (c * s.h + iy as usize) * s.w;
                    for ox in 0..wo {
                        let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                        if ix >= 0 && ix < s.w as isize {
                            dx[base + ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Multi-head scaled dot-product attention.
///
/// `q: lq×d`, `k, v: lk×d`. With `causal`, query `i` sees keys
/// `0..=i + causal_offset`; masked keys are excluded from the softmax rather
/// than added as large negatives, so outputs of earlier queries never depend
/// on later keys. Returns the output `lq×d` and the probabilities
/// `heads×lq×lk` (zero where masked).
#[allow(clippy::too_many_arguments)]
pub fn attention_forward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    lq: usize,
    lk: usize,
    d: usize,
    heads: usize,
    causal: Option<usize>,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(d % heads, 0);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut probs = vec![0.0; heads * lq * lk];
    let mut out = vec![0.0; lq * d];
    for h in 0..heads {
        let p = &mut probs[h * lq * lk..(h + 1) * lq * lk];
        gemm_view(
            lq,
            dh,
            lk,
            scale,
            q,
            View::rm(d).at(h * dh),
            k,
            View::tr(d).at(h * dh),
            0.0,
            p,
            View::rm(lk),
        );
        for i in 0..lq {
            let row = &mut p[i * lk..(i + 1) * lk];
            let visible = match causal {
                Some(off) => (i + off + 1).min(lk),
                None => lk,
            };
            softmax_in_place(&mut row[..visible]);
            row[visible..].iter_mut().for_each(|x| *x = 0.0);
        }
        gemm_view(
            lq,
            lk,
            dh,
            1.0,
            p,
            View::rm(lk),
            v,
            View::rm(d).at(h * dh),
            0.0,
            &mut out,
            View::rm(d).at(h * dh),
        );
    }
    (out, probs)
}

/// Gradients of [`attention_forward`] given the saved probabilities.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward(
    d_out: &[f64],
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[f64],
    lq: usize,
    lk: usize,
    d: usize,
    heads: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = vec![0.0; lq * d];
    let mut dk = vec![0.0; lk * d];
    let mut dv = vec![0.0; lk * d];
    let mut dp = vec![0.0; lq * lk];
    for h in 0..heads {
        let p = &probs[h * lq * lk..(h + 1) * lq * lk];
        // dV_h = Pᵀ dO_h
        gemm_view(lk, lq, dh, 1.0, p, View::tr(lk), d_out, View::rm(d).at(h * dh), 0.0, &mut dv, View::rm(d).at(h * dh));
        // dP = dO_h V_hᵀ
        gemm_view(lq, dh, lk, 1.0, d_out, View::rm(d).at(h * dh), v, View::tr(d).at(h * dh), 0.0, &mut dp, View::rm(lk));
        // dS = P ⊙ (dP − Σ_j dP·P), scaled
        for i in 0..lq {
            let pr = &p[i * lk..(i + 1) * lk];
            let dr = &mut dp[i * lk..(i + 1) * lk];
            let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
            for j in 0..lk {
                dr[j] = pr[j] * (dr[j] - dot) * scale;
            }
        }
        // dQ_h = dS K_h ; dK_h = dSᵀ Q_h
        gemm_view(lq, lk, dh, 1.0, &dp, View::rm(lk), k, View::rm(d).at(h * dh), 0.0, &mut dq, View::rm(d).at(h * dh));
        gemm_view(lk, lq, dh, 1.0, &dp, View::tr(lk), q, View::rm(d).at(h * dh), 0.0, &mut dk, View::rm(d).at(h * dh));
    }
    (dq, dk, dv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    c[i * n + j] += a[i * k + l] * b[l * n + j];
                }
            }
        }
        c
    }

    fn transpose(r: usize, c: usize, a: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = a[i * c + j];
            }
        }
        t
    }

    #[test]
    fn gemm_transposes_match_naive() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let want = naive(m, k, n, &a, &b);
        let at = transpose(m, k, &a);
        let bt = transpose(k, n, &b);
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let aa = if ta { &at } else { &a };
            let bb = if tb { &bt } else { &b };
            let mut c = vec![f64::NAN; m * n];
            gemm(m, k, n, aa, ta, bb, tb, 0.0, &mut c);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        let s = ConvShape {
            c_in: 2,
            h: 5,
            w: 6,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        let x: Vec<f64> = (0..2 * 5 * 6).map(|i| (i as f64 * 0.3).sin()).collect();
        let cols = im2col(&x, s);
        let y: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut xt = vec![0.0; x.len()];
        col2im(&y, s, &mut xt);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&xt).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn attention_rows_are_distributions() {
        let (lq, lk, d, h) = (4, 6, 8, 2);
        let q: Vec<f64> = (0..lq * d).map(|i| (i as f64 * 0.17).sin()).collect();
        let k: Vec<f64> = (0..lk * d).map(|i| (i as f64 * 0.23).cos()).collect();
        let v: Vec<f64> = (0..lk * d).map(|i| i as f64).collect();
        let (_, p) = attention_forward(&q, &k, &v, lq, lk, d, h, None);
        for row in p.chunks(lk) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
        let (_, p) = attention_forward(&q, &k, &v, lq, lk, d, h, Some(0));
        for (i, row) in p.chunks(lk).enumerate() {
            let i = i % lq;
            assert!(row[i + 1..].iter().all(|&x| x == 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
