//! Bird's-eye-view grid conventions, lift-splat and target-slot heatmaps.
//!
//! The grid is centered on the ego rear axle. Columns grow with `+x`
//! (forward), rows grow with `−y` (image convention), so cell `(0, 0)` is the
//! front-left corner.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{SplatEntry, SplatIndex, Tensor};
use crate::sensing::{pixel_ray, SurroundRig};
use crate::world::{point_in_polygon, Point2, Pose2, SlotSpec};

pub const BEV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Half-range along x in meters.
    pub range_x: f64,
    /// Half-range along y in meters.
    pub range_y: f64,
    /// Meters per cell.
    pub resolution: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::new(10.0, 10.0, 0.1)
    }
}

impl GridSpec {
    /// Grid covering `[−range_x, range_x] × [−range_y, range_y]`.
    pub fn new(range_x: f64, range_y: f64, resolution: f64) -> GridSpec {
        GridSpec {
            rows: (2.0 * range_y / resolution).round() as usize,
            cols: (2.0 * range_x / resolution).round() as usize,
            range_x,
            range_y,
            resolution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.resolution > 0.0
            && self.range_x > 0.0
            && self.range_y > 0.0
            && self.rows > 0
            && self.cols > 0
            && (self.rows as f64 * self.resolution - 2.0 * self.range_y).abs() < 1e-9
            && (self.cols as f64 * self.resolution - 2.0 * self.range_x).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "bev grid",
                format!("{self:?}: rows/cols must equal 2·range/resolution"),
            ))
        }
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Grid with cells `factor` times larger covering the same extent.
    pub fn pooled(&self, factor: usize) -> Result<GridSpec> {
        if factor == 0 || self.rows % factor != 0 || self.cols % factor != 0 {
            return Err(Error::invalid(
                "bev downsample",
                format!("factor {factor} must divide {}×{}", self.rows, self.cols),
            ));
        }
        Ok(GridSpec {
            rows: self.rows / factor,
            cols: self.cols / factor,
            resolution: self.resolution * factor as f64,
            ..*self
        })
    }
}

/// `(row, col)` of the cell containing ego-frame point `p`, or `None` when
/// it falls outside the grid.
pub fn bev_cell_of(p: Point2, g: &GridSpec) -> Option<(usize, usize)> {
    let col = ((p.x + g.range_x) / g.resolution).floor();
    let row = ((g.range_y - p.y) / g.resolution).floor();
    if !(col >= 0.0 && row >= 0.0 && col < g.cols as f64 && row < g.rows as f64) {
        return None;
    }
    Some((row as usize, col as usize))
}

/// Ego-frame center of a cell; inverse of [`bev_cell_of`].
pub fn cell_center(row: usize, col: usize, g: &GridSpec) -> Point2 {
    Point2::new(
        (col as f64 + 0.5) * g.resolution - g.range_x,
        g.range_y - (row as f64 + 0.5) * g.resolution,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthBins {
    pub count: usize,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for DepthBins {
    fn default() -> Self {
        DepthBins {
            count: 24,
            d_min: 0.5,
            d_max: 12.5,
        }
    }
}

impl DepthBins {
    pub fn validate(&self) -> Result<()> {
        if self.count >= 2 && self.d_min > 0.0 && self.d_min < self.d_max {
            Ok(())
        } else {
            Err(Error::invalid("depth bins", format!("{self:?}")))
        }
    }

    pub fn center(&self, k: usize) -> f64 {
        self.d_min + (k as f64 + 0.5) * (self.d_max - self.d_min) / self.count as f64
    }
}

/// `C×H×W` grid of values in the [`GridSpec`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub spec: GridSpec,
    pub channels: usize,
    /// Channel-major, then row, then column.
    pub data: Vec<f64>,
}

impl BevGrid {
    pub fn zeros(spec: GridSpec, channels: usize) -> BevGrid {
        BevGrid {
            spec,
            channels,
            data: vec![0.0; channels * spec.cells()],
        }
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.spec.rows + row) * self.spec.cols + col]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.spec.cells();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum-pools `factor × factor` blocks of cells.
    pub fn sum_pooled(&self, factor: usize) -> Result<BevGrid> {
        let spec = self.spec.pooled(factor)?;
        let mut out = BevGrid::zeros(spec, self.channels);
        for c in 0..self.channels {
            for r in 0..self.spec.rows {
                for k in 0..self.spec.cols {
                    out.data[(c * spec.rows + r / factor) * spec.cols + k / factor] += self.get(c, r, k);
                }
            }
        }
        Ok(out)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[self.channels, self.spec.rows, self.spec.cols], self.data.clone())
    }

    /// Writes `<stem>.f32` (little-endian float32, `C×H×W`) and a JSON
    /// sidecar `<stem>.json` describing the layout.
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        let bytes: Vec<u8> = self.data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        let bin = stem.with_extension("f32");
        std::fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
        let side = BevSidecar {
            schema_version: BEV_SCHEMA_VERSION,
            dtype: "float32_le".into(),
            shape: [self.channels, self.spec.rows, self.spec.cols],
            grid: self.spec,
            layout: "channel-major; col = floor((x + range_x)/resolution), row = floor((range_y - y)/resolution)".into(),
        };
        let json = stem.with_extension("json");
        std::fs::write(&json, serde_json::to_string_pretty(&side)?).map_err(|e| Error::io(&json, e))
    }

    pub fn load(stem: impl AsRef<Path>) -> Result<BevGrid> {
        let stem = stem.as_ref();
        let json = stem.with_extension("json");
        let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let side: BevSidecar = serde_json::from_str(&text)?;
        if side.schema_version != BEV_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                artifact: json.display().to_string(),
                expected: BEV_SCHEMA_VERSION,
                found: side.schema_version,
            });
        }
        side.grid.validate()?;
        let bin = stem.with_extension("f32");
        let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        let [c, h, w] = side.shape;
        if (h, w) != (side.grid.rows, side.grid.cols) || bytes.len() != c * h * w * 4 {
            return Err(Error::invalid("bev payload", "size does not match sidecar"));
        }
        Ok(BevGrid {
            spec: side.grid,
            channels: c,
            data: bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect(),
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BevSidecar {
    schema_version: u32,
    dtype: String,
    shape: [usize; 3],
    grid: GridSpec,
    layout: String,
}

/// Sparse lift-splat geometry for a rig whose cameras produce
/// `feat_h × feat_w` feature maps.
///
/// Feature pixel `(i, j)` of camera `n` has index `n·feat_h·feat_w +
/// i·feat_w + j` and looks along the ray through image coordinate
/// `((j + 0.5)·s, (i + 0.5)·s)`, where `s` is the image-to-feature stride.
/// Depth is measured along the unit ray. Cells are indexed in the grid
/// pooled by `downsample`, which is equivalent to splatting at full
/// resolution and then sum-pooling.
pub fn splat_index(
    rig: &SurroundRig,
    feat_h: usize,
    feat_w: usize,
    bins: &DepthBins,
    grid: &GridSpec,
    downsample: usize,
) -> Result<SplatIndex> {
    rig.validate()?;
    bins.validate()?;
    grid.validate()?;
    let pooled = grid.pooled(downsample)?;
    if feat_h == 0 || feat_w == 0 {
        return Err(Error::contract("feature map must be nonempty"));
    }
    let mut entries = Vec::new();
    for (n, cam) in rig.cameras.iter().enumerate() {
        let intr = &cam.intrinsics;
        if intr.width % feat_w != 0 || intr.height % feat_h != 0 || intr.width / feat_w != intr.height / feat_h {
            return Err(Error::contract(format!(
                "feature map {feat_h}×{feat_w} does not evenly divide image {}×{}",
                intr.height, intr.width
            )));
        }
        let s = (intr.width / feat_w) as f64;
        for i in 0..feat_h {
            for j in 0..feat_w {
                let ray = pixel_ray(intr, &cam.extrinsics, &Pose2::IDENTITY, (j as f64 + 0.5) * s, (i as f64 + 0.5) * s);
                let pixel = (n * feat_h * feat_w + i * feat_w + j) as u32;
                for k in 0..bins.count {
                    let p = ray.at(bins.center(k));
                    if let Some((r, c)) = bev_cell_of(Point2::new(p[0], p[1]), grid) {
                        let cell = ((r / downsample) * pooled.cols + c / downsample) as u32;
                        entries.push(SplatEntry {
                            pixel,
                            bin: k as u32,
                            cell,
                        });
                    }
                }
            }
        }
    }
    Ok(SplatIndex {
        pixels: rig.len() * feat_h * feat_w,
        bins: bins.count,
        cells: pooled.cells(),
        entries,
    })
}

/// Sum-pooled lift-splat of per-camera `C×H×W` features weighted by
/// per-camera `D×H×W` depth distributions.
pub fn lift_splat(
    features: &[Tensor],
    depth: &[Tensor],
    rig: &SurroundRig,
    bins: &DepthBins,
    grid: &GridSpec,
) -> Result<BevGrid> {
    if features.len() != rig.len() || depth.len() != rig.len() {
        return Err(Error::contract(format!(
            "{} feature maps and {} depth maps for {} cameras",
            features.len(),
            depth.len(),
            rig.len()
        )));
    }
    let (c, h, w) = features[0].dims3();
    for (f, d) in features.iter().zip(depth) {
        if f.dims3() != (c, h, w) || d.dims3() != (bins.count, h, w) {
            return Err(Error::contract(format!(
                "feature {:?} / depth {:?} shapes disagree with C={c}, D={}, {h}×{w}",
                f.shape(),
                d.shape(),
                bins.count
            )));
        }
        for px in 0..h * w {
            let s: f64 = (0..bins.count).map(|k| d.data()[k * h * w + px]).sum();
            if (s - 1.0).abs() > 1e-5 || (0..bins.count).any(|k| d.data()[k * h * w + px] < 0.0) {
                return Err(Error::contract("depth distribution must be nonnegative and sum to 1"));
            }
        }
    }
    let index = splat_index(rig, h, w, bins, grid, 1)?;
    let hw = h * w;
    let mut out = BevGrid::zeros(*grid, c);
    let cells = grid.cells();
    for e in &index.entries {
        let cam = e.pixel as usize / hw;
        let px = e.pixel as usize % hw;
        let wgt = depth[cam].data()[e.bin as usize * hw + px];
        if wgt == 0.0 {
            continue;
        }
        let f = features[cam].data();
        for ch in 0..c {
            out.data[ch * cells + e.cell as usize] += wgt * f[ch * hw + px];
        }
    }
    Ok(out)
}

/// Binary mask of cells whose centers lie inside the slot, in the ego frame.
pub fn make_target_heatmap(slot: &SlotSpec, ego: &Pose2, grid: &GridSpec) -> BevGrid {
    let quad: Vec<Point2> = slot.corners.iter().map(|&p| ego.to_ego(p)).collect();
    let mut out = BevGrid::zeros(*grid, 1);
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &quad {
        lo_x = lo_x.min(p.x);
        hi_x = hi_x.max(p.x);
        lo_y = lo_y.min(p.y);
        hi_y = hi_y.max(p.y);
    }
    let res = grid.resolution;
    let c0 = (((lo_x + grid.range_x) / res).floor() - 1.0).max(0.0) as usize;
    let c1 = (((hi_x + grid.range_x) / res).ceil() + 1.0).clamp(0.0, grid.cols as f64) as usize;
    let r0 = (((grid.range_y - hi_y) / res).floor() - 1.0).max(0.0) as usize;
    let r1 = (((grid.range_y - lo_y) / res).ceil() + 1.0).clamp(0.0, grid.rows as f64) as usize;
    for r in r0..r1 {
        for c in c0..c1 {
            if point_in_polygon(cell_center(r, c, grid), &quad) {
                out.data[r * grid.cols + c] = 1.0;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::VehicleParams;

    #[test]
    fn cell_indexing_examples() {
        let g = GridSpec::default();
        g.validate().unwrap();
        assert_eq!((g.rows, g.cols), (200, 200));
        assert_eq!(bev_cell_of(Point2::new(0.0, 0.0), &g), Some((100, 100)));
        assert_eq!(bev_cell_of(Point2::new(3.75, -2.5), &g), Some((125, 137)));
        assert_eq!(bev_cell_of(Point2::new(-10.05, 0.0), &g), None);
        assert_eq!(bev_cell_of(Point2::new(0.0, -10.0), &g), None);
        assert_eq!(bev_cell_of(Point2::new(f64::NAN, 0.0), &g), None);
    }

    #[test]
    fn cell_center_round_trip() {
        let g = GridSpec::default();
        for r in (0..200).step_by(7) {
            for c in (0..200).step_by(11) {
                let p = cell_center(r, c, &g);
                assert_eq!(bev_cell_of(p, &g), Some((r, c)));
            }
        }
    }

    #[test]
    fn heatmap_area_and_orientation() {
        let g = GridSpec::default();
        let vp = VehicleParams::default();
        let slot = SlotSpec::rectangle(Point2::new(0.0, 0.0), 0.0, 2.5, 5.0, &vp, true);
        let h = make_target_heatmap(&slot, &Pose2::IDENTITY, &g);
        let n = h.total();
        let want = 2.5 * 5.0 / 0.01;
        assert!((n - want).abs() <= 0.05 * want, "{n} vs {want}");
        // brute force over all cells
        let brute = (0..200 * 200)
            .filter(|i| slot.contains(cell_center(i / 200, i % 200, &g)))
            .count() as f64;
        assert_eq!(n, brute);

        let turned = SlotSpec::rectangle(Point2::new(0.0, 0.0), std::f64::consts::FRAC_PI_2, 2.5, 5.0, &vp, true);
        let h2 = make_target_heatmap(&turned, &Pose2::IDENTITY, &g);
        assert_ne!(h.data, h2.data);

        let far = SlotSpec::rectangle(Point2::new(30.0, 0.0), 0.0, 2.5, 5.0, &vp, true);
        assert_eq!(make_target_heatmap(&far, &Pose2::IDENTITY, &g).total(), 0.0);
    }

    #[test]
    fn heatmap_rotates_with_ego() {
        let g = GridSpec::default();
        let vp = VehicleParams::default();
        let slot = SlotSpec::rectangle(Point2::new(3.05, 1.55), 0.3, 2.5, 5.0, &vp, true);
        let a = make_target_heatmap(&slot, &Pose2::IDENTITY, &g);
        let b = make_target_heatmap(&slot, &Pose2::new(0.0, 0.0, std::f64::consts::PI), &g);
        // a half-turn maps cell (r, c) onto (H-1-r, W-1-c)
        let mut mismatched = 0;
        for r in 0..200 {
            for c in 0..200 {
                if a.get(0, r, c) != b.get(0, 199 - r, 199 - c) {
                    mismatched += 1;
                }
            }
        }
        assert_eq!(mismatched, 0);
    }

    #[test]
    fn pooled_index_matches_sum_pooling() {
        let rig = SurroundRig::standard(16, 16);
        let bins = DepthBins::default();
        let g = GridSpec::default();
        let fine = splat_index(&rig, 4, 4, &bins, &g, 1).unwrap();
        let coarse = splat_index(&rig, 4, 4, &bins, &g, 10).unwrap();
        assert_eq!(fine.entries.len(), coarse.entries.len());
        let pooled = g.pooled(10).unwrap();
        for (f, c) in fine.entries.iter().zip(&coarse.entries) {
            let (r, k) = (f.cell as usize / 200, f.cell as usize % 200);
            assert_eq!(c.cell as usize, (r / 10) * pooled.cols + k / 10);
        }
    }

    #[test]
    fn bev_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::new(1.0, 2.0, 0.5);
        let mut grid = BevGrid::zeros(g, 2);
        grid.data.iter_mut().enumerate().for_each(|(i, v)| *v = i as f64 * 0.25);
        grid.save(dir.path().join("bev")).unwrap();
        let back = BevGrid::load(dir.path().join("bev")).unwrap();
        assert_eq!(back, grid);
    }
}
