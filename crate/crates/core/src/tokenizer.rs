//! Trajectory serialization into discrete tokens and back.
//!
//! Each coordinate in `[−R, R]` is quantized into one of `N_t` equal bins.
//! A trajectory becomes `[BOS, x₁, y₁, …, xₙ, yₙ, EOS]` with `BOS = N_t` and
//! `EOS = N_t + 1`. Decoding uses bin centers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenVocab {
    /// Number of positional tokens `N_t`.
    pub bins: usize,
    /// Half-range along x in meters.
    pub range_x: f64,
    /// Half-range along y in meters.
    pub range_y: f64,
}

impl Default for TokenVocab {
    fn default() -> Self {
        TokenVocab {
            bins: 1200,
            range_x: 10.0,
            range_y: 10.0,
        }
    }
}

impl TokenVocab {
    pub fn validate(&self) -> Result<()> {
        if self.bins >= 2 && self.bins + 2 <= 1 << 16 && self.range_x > 0.0 && self.range_y > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("token vocabulary", format!("{self:?}")))
        }
    }

    pub fn bos(&self) -> usize {
        self.bins
    }

    pub fn eos(&self) -> usize {
        self.bins + 1
    }

    pub fn size(&self) -> usize {
        self.bins + 2
    }

    pub fn is_positional(&self, t: usize) -> bool {
        t < self.bins
    }
}

/// Quantizes `p ∈ [−range, range]` to a bin index, clamping out-of-range
/// values to the end bins.
pub fn serialize_coord(p: f64, range: f64, bins: usize) -> Result<usize> {
    if !p.is_finite() {
        return Err(Error::contract(format!("cannot serialize non-finite coordinate {p}")));
    }
    let scaled = ((p + range) / (2.0 * range) * bins as f64).floor();
    Ok(scaled.clamp(0.0, (bins - 1) as f64) as usize)
}

/// Bin center of positional token `t`.
pub fn deserialize_token(t: usize, range: f64, bins: usize) -> Result<f64> {
    if t >= bins {
        return Err(Error::contract(format!("token {t} is not positional (N_t = {bins})")));
    }
    Ok((t as f64 + 0.5) / bins as f64 * 2.0 * range - range)
}

pub fn serialize_trajectory(points: &[Point2], vocab: &TokenVocab) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::contract("cannot serialize an empty trajectory"));
    }
    let mut out = Vec::with_capacity(2 * points.len() + 2);
    out.push(vocab.bos());
    for p in points {
        out.push(serialize_coord(p.x, vocab.range_x, vocab.bins)?);
        out.push(serialize_coord(p.y, vocab.range_y, vocab.bins)?);
    }
    out.push(vocab.eos());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub points: Vec<Point2>,
    /// The sequence ended with EOS right after a complete pair.
    pub clean: bool,
}

/// Tolerant decoder: reads `(x, y)` pairs after an optional leading BOS until
/// EOS, a non-positional token, or an unpaired trailing token.
pub fn deserialize_sequence(seq: &[usize], vocab: &TokenVocab) -> Decoded {
    let body = match seq.first() {
        Some(&t) if t == vocab.bos() => &seq[1..],
        _ => seq,
    };
    let mut points = Vec::new();
    let mut i = 0;
    loop {
        match body.get(i) {
            Some(&t) if t == vocab.eos() => return Decoded { points, clean: true },
            Some(&tx) if vocab.is_positional(tx) => match body.get(i + 1) {
                Some(&ty) if vocab.is_positional(ty) => {
                    let x = (tx as f64 + 0.5) / vocab.bins as f64 * 2.0 * vocab.range_x - vocab.range_x;
                    let y = (ty as f64 + 0.5) / vocab.bins as f64 * 2.0 * vocab.range_y - vocab.range_y;
                    points.push(Point2::new(x, y));
                    i += 2;
                }
                _ => return Decoded { points, clean: false },
            },
            _ => return Decoded { points, clean: false },
        }
    }
}

/// Writes token ids as little-endian `u16`.
pub fn write_tokens(path: impl AsRef<Path>, tokens: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(tokens.len() * 2);
    for &t in tokens {
        let t = u16::try_from(t).map_err(|_| Error::contract(format!("token {t} exceeds u16")))?;
        bytes.extend_from_slice(&t.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tokens(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tokens(&bytes)
}

pub(crate) fn decode_tokens(bytes: &[u8]) -> Result<Vec<usize>> {
    if bytes.len() % 2 != 0 {
        return Err(Error::invalid("token file", "odd byte length"));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]) as usize)
        .collect())
}
