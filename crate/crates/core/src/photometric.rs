//! Photometric consistency: NCC patch costs, view selection and the
//! multi-view aggregated matching cost.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::dataset::Image;
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, PlaneHypothesis, ViewPair};

/// Matching cost assigned to failed or uninformative comparisons.
pub const MAX_COST: f64 = 2.0;

const MIN_VARIANCE: f64 = 1e-10;
const MIN_SAMPLES: usize = 9;

/// Square matching window sampled on a regular grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    pub radius: usize,
    pub step: usize,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec { radius: 5, step: 2 }
    }
}

impl PatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 || self.step < 1 || self.axis_offsets().len().pow(2) < MIN_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "patch radius {} / step {} gives fewer than {MIN_SAMPLES} samples",
                self.radius, self.step
            )));
        }
        Ok(())
    }

    /// Sample offsets along one axis: `-radius, -radius + step, ...`.
    pub fn axis_offsets(&self) -> Vec<i32> {
        let r = self.radius as i32;
        (0..).map(|i| -r + i * self.step as i32).take_while(|&o| o <= r).collect()
    }
}

/// Reference-side window at one pixel: in-bounds sample offsets and the
/// mean-centered intensities.
#[derive(Debug, Clone)]
pub struct RefPatch {
    offsets: Vec<(f64, f64)>,
    centered: Vec<f64>,
    norm_sq: f64,
    textureless: bool,
}

impl RefPatch {
    pub fn new(image: &Image, x: usize, y: usize, spec: &PatchSpec) -> Self {
        let axis = spec.axis_offsets();
        let mut offsets = Vec::with_capacity(axis.len() * axis.len());
        let mut values = Vec::with_capacity(axis.len() * axis.len());
        for &dv in &axis {
            let py = y as i64 + dv as i64;
            if py < 0 || py >= image.height as i64 {
                continue;
            }
            for &du in &axis {
                let px = x as i64 + du as i64;
                if px < 0 || px >= image.width as i64 {
                    continue;
                }
                offsets.push((du as f64, dv as f64));
                values.push(image.get(px as usize, py as usize));
            }
        }
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
        let norm_sq: f64 = centered.iter().map(|v| v * v).sum();
        let textureless = values.len() < MIN_SAMPLES || norm_sq / n < MIN_VARIANCE;
        RefPatch {
            offsets,
            centered,
            norm_sq,
            textureless,
        }
    }

    /// True when the window is too flat (or too clipped) for NCC.
    pub fn is_textureless(&self) -> bool {
        self.textureless
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// `1 - NCC` between this window and the source window obtained by
    /// warping the sample grid centered at `pixel` through `h`.
    pub fn cost(&self, pixel: Vector2<f64>, h: &Matrix3<f64>, src: &Image) -> f64 {
        if self.textureless {
            return MAX_COST;
        }
        let center = h * Vector3::new(pixel.x, pixel.y, 1.0);
        let (cu, cv) = (h.column(0).into_owned(), h.column(1).into_owned());
        let (max_x, max_y) = ((src.width - 1) as f64, (src.height - 1) as f64);
        let (mut sum_s, mut sum_ss, mut sum_rs) = (0.0, 0.0, 0.0);
        for (&(du, dv), &r) in self.offsets.iter().zip(&self.centered) {
            let q = center + cu * du + cv * dv;
            if q.z <= 0.0 {
                return MAX_COST;
            }
            let (sx, sy) = (q.x / q.z, q.y / q.z);
            if !(sx >= 0.0 && sy >= 0.0 && sx <= max_x && sy <= max_y) {
                return MAX_COST;
            }
            let s = src.sample_bilinear(sx, sy);
            sum_s += s;
            sum_ss += s * s;
            sum_rs += r * s;
        }
        let n = self.offsets.len() as f64;
        let src_norm_sq = sum_ss - sum_s * sum_s / n;
        if src_norm_sq / n < MIN_VARIANCE {
            return MAX_COST;
        }
        let ncc = (sum_rs / (self.norm_sq * src_norm_sq).sqrt()).clamp(-1.0, 1.0);
        1.0 - ncc
    }
}

/// Plain normalized cross-correlation of two equally sized sample sets.
/// `None` if either set has (near) zero variance.
pub fn ncc(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa / n < MIN_VARIANCE || sbb / n < MIN_VARIANCE {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Matching cost `1 - NCC` in `[0, 2]` between the reference window at
/// `pixel` and its `theta`-induced warp into the source image.
pub fn matching_cost(
    pixel: (usize, usize),
    theta: &PlaneHypothesis,
    ref_img: &Image,
    src_img: &Image,
    cam_ref: &CameraModel,
    cam_src: &CameraModel,
    spec: &PatchSpec,
) -> f64 {
    let p = Vector2::new(pixel.0 as f64, pixel.1 as f64);
    let patch = RefPatch::new(ref_img, pixel.0, pixel.1, spec);
    match ViewPair::new(cam_ref, cam_src).homography(&theta.to_plane(p, cam_ref)) {
        Ok(h) => patch.cost(p, &h, src_img),
        Err(_) => MAX_COST,
    }
}

/// Mean of the `k` smallest costs (`k` clamped to the number of costs).
pub fn init_aggregate(costs: &[f64], k: usize) -> Result<f64> {
    if costs.is_empty() {
        return Err(Error::InvalidArgument("init_aggregate: no source costs".into()));
    }
    let mut sorted = costs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = k.clamp(1, sorted.len());
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// Per-source binary visibility of one pixel, one bit per source view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VisibilityMask(pub u32);

impl VisibilityMask {
    pub const MAX_SOURCES: usize = 32;

    pub fn all(n_sources: usize) -> Self {
        if n_sources >= 32 {
            VisibilityMask(u32::MAX)
        } else {
            VisibilityMask((1u32 << n_sources) - 1)
        }
    }

    #[inline]
    pub fn is_visible(&self, source: usize) -> bool {
        self.0 & (1 << source) != 0
    }

    #[inline]
    pub fn set(&mut self, source: usize, visible: bool) {
        if visible {
            self.0 |= 1 << source;
        } else {
            self.0 &= !(1 << source);
        }
    }
}

/// Per-pixel visibility flags for the reference image.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMap {
    pub width: usize,
    pub height: usize,
    pub n_sources: usize,
    pub masks: Vec<VisibilityMask>,
}

impl VisibilityMap {
    /// Every pixel visible in every source.
    pub fn all_visible(width: usize, height: usize, n_sources: usize) -> Self {
        VisibilityMap {
            width,
            height,
            n_sources,
            masks: vec![VisibilityMask::all(n_sources); width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> VisibilityMask {
        self.masks[y * self.width + x]
    }

    /// Masks of the in-bounds 4-neighbors of `(x, y)`.
    pub fn neighbors(&self, x: usize, y: usize) -> Vec<VisibilityMask> {
        let mut out = Vec::with_capacity(4);
        if y > 0 {
            out.push(self.get(x, y - 1));
        }
        if y + 1 < self.height {
            out.push(self.get(x, y + 1));
        }
        if x > 0 {
            out.push(self.get(x - 1, y));
        }
        if x + 1 < self.width {
            out.push(self.get(x + 1, y));
        }
        out
    }
}

/// Matching costs of a candidate set: one row per candidate, one column
/// per source view.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    pub n_sources: usize,
    pub values: Vec<f64>,
}

impl CostTable {
    pub fn new(n_sources: usize) -> Self {
        CostTable {
            n_sources,
            values: Vec::new(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_sources = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_sources));
        CostTable {
            n_sources,
            values: rows.concat(),
        }
    }

    pub fn n_candidates(&self) -> usize {
        self.values.len().checked_div(self.n_sources).unwrap_or(0)
    }

    #[inline]
    pub fn row(&self, candidate: usize) -> &[f64] {
        &self.values[candidate * self.n_sources..(candidate + 1) * self.n_sources]
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n_sources);
        self.values.extend_from_slice(row);
    }
}

/// Parameters of the view-selection model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewSelectionParams {
    /// Bandwidth of the per-hypothesis photometric likelihood.
    pub sigma: f64,
    /// Probability that a pixel shares a neighbor's visibility state.
    pub eta: f64,
    /// Normalized weight at or above which a source counts as visible.
    pub visible_threshold: f64,
}

impl Default for ViewSelectionParams {
    fn default() -> Self {
        ViewSelectionParams {
            sigma: 0.3,
            eta: 0.9,
            visible_threshold: 0.2,
        }
    }
}

/// Selected source weights in `[0, 1]` and the binarized visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewWeights {
    pub weights: Vec<f64>,
    pub visibility: VisibilityMask,
}

/// Per-source view-selection weights from the candidate cost table and the
/// neighbors' visibility.
///
/// The score of source `j` is the mean over candidates of
/// `exp(-m^2 / (2 sigma^2))` times the mean over neighbors of `eta` (neighbor
/// sees `j`) or `1 - eta` (it does not). Scores are normalized by their
/// maximum.
pub fn view_selection(costs: &CostTable, neighbor_vis: &[VisibilityMask], params: &ViewSelectionParams) -> ViewWeights {
    let n_src = costs.n_sources;
    let n_cand = costs.n_candidates().max(1) as f64;
    let denom = 2.0 * params.sigma * params.sigma;
    let mut scores = vec![0.0; n_src];
    for (j, score) in scores.iter_mut().enumerate() {
        let mut likelihood = 0.0;
        for i in 0..costs.n_candidates() {
            let m = costs.row(i)[j];
            likelihood += (-m * m / denom).exp();
        }
        likelihood /= n_cand;
        let smooth = if neighbor_vis.is_empty() {
            1.0
        } else {
            neighbor_vis
                .iter()
                .map(|v| if v.is_visible(j) { params.eta } else { 1.0 - params.eta })
                .sum::<f64>()
                / neighbor_vis.len() as f64
        };
        *score = likelihood * smooth;
    }

    let max = scores.iter().copied().fold(0.0f64, f64::max);
    let mut weights = vec![0.0; n_src];
    if max > 0.0 {
        for (w, s) in weights.iter_mut().zip(&scores) {
            *w = s / max;
        }
    } else if n_src > 0 {
        // Every score underflowed; fall back to the source with the single
        // best matching cost.
        let best = (0..n_src)
            .min_by(|&a, &b| {
                let ma = (0..costs.n_candidates()).map(|i| costs.row(i)[a]).fold(f64::INFINITY, f64::min);
                let mb = (0..costs.n_candidates()).map(|i| costs.row(i)[b]).fold(f64::INFINITY, f64::min);
                ma.total_cmp(&mb)
            })
            .unwrap();
        weights[best] = 1.0;
    }
    let mut visibility = VisibilityMask(0);
    for (j, &w) in weights.iter().enumerate() {
        visibility.set(j, w >= params.visible_threshold);
    }
    ViewWeights { weights, visibility }
}

/// Weighted mean of per-source matching costs.
pub fn c_photo(weights: &ViewWeights, costs: &[f64]) -> Result<f64> {
    debug_assert_eq!(weights.weights.len(), costs.len());
    let (mut num, mut den) = (0.0, 0.0);
    for (w, m) in weights.weights.iter().zip(costs) {
        num += w * m;
        den += w;
    }
    if !(den > 0.0) {
        return Err(Error::UnreliablePixel);
    }
    Ok(num / den)
}

/// Photometric likelihood `exp(-c^2 / alpha)`.
#[inline]
pub fn likelihood(c: f64, alpha: f64) -> f64 {
    (-c * c / alpha).exp()
}
