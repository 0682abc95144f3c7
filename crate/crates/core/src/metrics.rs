//! Open-loop trajectory metrics (L2, Hausdorff, Fourier descriptor
//! distance) and closed-loop parking rates and scores.
//!
//! Fourier descriptors: both trajectories are resampled by arc length to
//! [`FOURIER_SAMPLES`] points, read as `z_j = x_j + i·y_j`, and transformed
//! with the unitary DFT `Z_k = N^{-1/2} Σ_j z_j e^{-2πi jk/N}`. The first
//! [`FOURIER_COEFFS`] coefficients form the descriptor; the distance is the
//! Euclidean norm of the descriptor difference. Under this convention a pure
//! translation by `t` moves only `Z_0`, by `√N·t`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{EpisodeResult, Outcome};
use crate::world::Point2;

pub const FOURIER_SAMPLES: usize = 64;
pub const FOURIER_COEFFS: usize = 10;

/// Position error at which the position half of the score reaches zero.
const SCORE_POSITION_SCALE: f64 = 1.0;
/// Orientation error (degrees) at which the orientation half reaches zero.
const SCORE_ORIENTATION_SCALE: f64 = 10.0;

/// Mean Euclidean distance between paired waypoints, over the shorter of
/// the two sequences.
pub fn l2_distance(pred: &[Point2], gt: &[Point2]) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::contract("l2 distance of an empty trajectory"));
    }
    let n = pred.len().min(gt.len());
    let sum: f64 = pred.iter().zip(gt).map(|(p, q)| p.distance(*q)).sum();
    Ok(sum / n as f64)
}

/// Largest distance from a point of `from` to its nearest point in `to`.
/// The inner scan stops once it finds a point closer than the running
/// maximum, since that point cannot raise it.
fn directed_hausdorff(from: &[Point2], to: &[Point2]) -> f64 {
    let mut worst = 0.0_f64;
    for p in from {
        let mut nearest = f64::INFINITY;
        for q in to {
            let d = p.distance(*q);
            if d < nearest {
                nearest = d;
                if nearest <= worst {
                    break;
                }
            }
        }
        worst = worst.max(nearest);
    }
    worst
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff(a: &[Point2], b: &[Point2]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract("hausdorff distance of an empty set"));
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}

/// `n` points evenly spaced in arc length along the polyline, endpoints
/// included.
pub fn resample_arc_length(points: &[Point2], n: usize) -> Result<Vec<Point2>> {
    if points.len() < 2 || n < 2 {
        return Err(Error::contract("arc-length resampling needs at least 2 points"));
    }
    let mut cum = Vec::with_capacity(points.len());
    cum.push(0.0);
    for w in points.windows(2) {
        cum.push(cum.last().copied().unwrap_or(0.0) + w[0].distance(w[1]));
    }
    let total = *cum.last().expect("nonempty");
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::contract("degenerate trajectory: zero arc length"));
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let s = total * k as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(points[seg] + (points[seg + 1] - points[seg]) * t);
    }
    Ok(out)
}

/// First `k` unitary DFT coefficients of `z_j = x_j + i·y_j`, as (re, im).
pub fn fourier_descriptor(points: &[Point2], k: usize) -> Vec<(f64, f64)> {
    let n = points.len();
    let scale = 1.0 / (n as f64).sqrt();
    (0..k)
        .map(|f| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, p) in points.iter().enumerate() {
                // reduce the phase index first so large products stay exact
                let ang = -2.0 * PI * ((j * f) % n) as f64 / n as f64;
                let (s, c) = ang.sin_cos();
                re += p.x * c - p.y * s;
                im += p.x * s + p.y * c;
            }
            (re * scale, im * scale)
        })
        .collect()
}

/// Distance between the Fourier descriptors of two trajectories.
pub fn fourier_diff(a: &[Point2], b: &[Point2]) -> Result<f64> {
    let da = fourier_descriptor(&resample_arc_length(a, FOURIER_SAMPLES)?, FOURIER_COEFFS);
    let db = fourier_descriptor(&resample_arc_length(b, FOURIER_SAMPLES)?, FOURIER_COEFFS);
    Ok(da
        .iter()
        .zip(&db)
        .map(|(p, q)| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Open-loop metrics for one predicted chunk. The Fourier term is absent
/// when either trajectory has no length to resample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopRow {
    pub l2: f64,
    pub hausdorff: f64,
    pub fourier_diff: Option<f64>,
}

pub fn open_loop_row(pred: &[Point2], gt: &[Point2]) -> Result<OpenLoopRow> {
    Ok(OpenLoopRow {
        l2: l2_distance(pred, gt)?,
        hausdorff: hausdorff(pred, gt)?,
        fourier_diff: fourier_diff(pred, gt).ok(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopReport {
    pub samples: usize,
    pub l2: f64,
    pub hausdorff: f64,
    /// Mean over the samples that have a Fourier term.
    pub fourier_diff: Option<f64>,
    /// Samples whose Fourier term was undefined.
    pub fourier_skipped: usize,
}

pub fn summarize_open_loop(rows: &[OpenLoopRow]) -> Result<OpenLoopReport> {
    if rows.is_empty() {
        return Err(Error::contract("open-loop summary of zero samples"));
    }
    let n = rows.len() as f64;
    let fourier: Vec<f64> = rows.iter().filter_map(|r| r.fourier_diff).collect();
    Ok(OpenLoopReport {
        samples: rows.len(),
        l2: rows.iter().map(|r| r.l2).sum::<f64>() / n,
        hausdorff: rows.iter().map(|r| r.hausdorff).sum::<f64>() / n,
        fourier_diff: (!fourier.is_empty()).then(|| fourier.iter().sum::<f64>() / fourier.len() as f64),
        fourier_skipped: rows.len() - fourier.len(),
    })
}

/// The parts of an episode result the closed-loop metrics use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub outcome: Outcome,
    /// Meters.
    pub position_error: Option<f64>,
    /// Degrees.
    pub orientation_error: Option<f64>,
    /// Seconds.
    pub duration: f64,
}

impl From<&EpisodeResult> for EpisodeSummary {
    fn from(r: &EpisodeResult) -> Self {
        EpisodeSummary {
            outcome: r.outcome,
            position_error: r.position_error,
            orientation_error: r.orientation_error,
            duration: r.duration,
        }
    }
}

impl EpisodeSummary {
    /// Episodes that came to rest in some slot, correctly or not.
    pub fn completed(&self) -> bool {
        matches!(self.outcome, Outcome::Success | Outcome::WrongSlot | Outcome::Violation)
    }

    /// Per-episode parking score in [0, 100]: zero unless successful, then
    /// 50 points each for position and orientation, lost linearly up to
    /// 1 m and 10°.
    pub fn score(&self) -> f64 {
        if self.outcome != Outcome::Success {
            return 0.0;
        }
        let pe = self.position_error.unwrap_or(f64::INFINITY);
        let oe = self.orientation_error.unwrap_or(f64::INFINITY);
        100.0 - 50.0 * (pe / SCORE_POSITION_SCALE).min(1.0) - 50.0 * (oe / SCORE_ORIENTATION_SCALE).min(1.0)
    }
}

/// Closed-loop summary in the usual table layout. Rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub episodes: usize,
    /// Parking success rate.
    pub psr: f64,
    /// Wrong-slot rate.
    pub nsr: f64,
    /// Boundary-violation rate.
    pub pvr: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    /// Mean position error over successes, meters.
    pub ape: Option<f64>,
    /// Mean orientation error over successes, degrees.
    pub aoe: Option<f64>,
    /// Mean duration over completed episodes, seconds.
    pub apt: Option<f64>,
    /// Mean per-episode score.
    pub aps: f64,
    pub counts: BTreeMap<Outcome, usize>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate(results: &[EpisodeSummary]) -> Result<MetricReport> {
    if results.is_empty() {
        return Err(Error::contract("aggregate of zero episodes"));
    }
    let total = results.len() as f64;
    let mut counts: BTreeMap<Outcome, usize> = Outcome::ALL.iter().map(|&o| (o, 0)).collect();
    for r in results {
        *counts.entry(r.outcome).or_default() += 1;
    }
    let pct = |o: Outcome| 100.0 * counts[&o] as f64 / total;
    let successes = || results.iter().filter(|r| r.outcome == Outcome::Success);
    Ok(MetricReport {
        episodes: results.len(),
        psr: pct(Outcome::Success),
        nsr: pct(Outcome::WrongSlot),
        pvr: pct(Outcome::Violation),
        collision_rate: pct(Outcome::Collision),
        timeout_rate: pct(Outcome::Timeout),
        ape: mean(successes().filter_map(|r| r.position_error)),
        aoe: mean(successes().filter_map(|r| r.orientation_error)),
        apt: mean(results.iter().filter(|r| r.completed()).map(|r| r.duration)),
        aps: results.iter().map(EpisodeSummary::score).sum::<f64>() / total,
        counts,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// One line per report, columns in table order.
pub fn write_report_csv(path: &Path, rows: &[(String, MetricReport)]) -> Result<()> {
    let mut out = String::from("group,episodes,psr,nsr,pvr,collision,timeout,ape_m,aoe_deg,apt_s,aps\n");
    for (name, r) in rows {
        out.push_str(&format!(
            "{name},{},{:.2},{:.2},{:.2},{:.2},{:.2},{},{},{},{:.2}\n",
            r.episodes,
            r.psr,
            r.nsr,
            r.pvr,
            r.collision_rate,
            r.timeout_rate,
            opt(r.ape),
            opt(r.aoe),
            opt(r.apt),
            r.aps
        ));
    }
    write_text(path, &out)
}

/// Per-episode rows: `label` identifies the episode (scene, seed, ...).
pub fn write_episode_csv(path: &Path, rows: &[(String, EpisodeSummary)]) -> Result<()> {
    let mut out = String::from("episode,outcome,position_error_m,orientation_error_deg,duration_s,score\n");
    for (label, r) in rows {
        out.push_str(&format!(
            "{label},{},{},{},{:.6},{:.4}\n",
            r.outcome.name(),
            opt(r.position_error),
            opt(r.orientation_error),
            r.duration,
            r.score()
        ));
    }
    write_text(path, &out)
}

pub fn write_open_loop_csv(path: &Path, rows: &[(usize, OpenLoopRow)]) -> Result<()> {
    let mut out = String::from("sample,l2_m,hausdorff_m,fourier_diff\n");
    for (k, r) in rows {
        out.push_str(&format!("{k},{:.9},{:.9},{}\n", r.l2, r.hausdorff, opt(r.fourier_diff)));
    }
    write_text(path, &out)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
