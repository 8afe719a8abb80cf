//! PatchMatch engine: random initialization, red-black checkerboard
//! propagation, hypothesis updates under a pluggable cost and refinement.
//!
//! Each iteration updates the red pixels (`(x + y)` even) from black
//! neighbors, then the black pixels from red neighbors. Within a color the
//! updates only read the opposite color and the previous visibility map, so
//! they run in parallel and the result does not depend on scheduling.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{DepthMap, DepthRange, Image, NormalMap};
use crate::error::{Error, Result};
use crate::geomcons::GeomContext;
use crate::geometry::{ray_plane_depth, CameraModel, PlaneHypothesis, ViewPair};
use crate::photometric::{
    c_photo, init_aggregate, view_selection, CostTable, PatchSpec, RefPatch, ViewSelectionParams, ViewWeights,
    VisibilityMap, VisibilityMask, MAX_COST,
};
use crate::prior::{c_p_photo, PriorModel, PriorParams};

/// Per-pixel plane hypotheses and their current aggregated costs.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisMap {
    pub width: usize,
    pub height: usize,
    pub hypotheses: Vec<PlaneHypothesis>,
    pub costs: Vec<f64>,
}

impl HypothesisMap {
    pub fn new(width: usize, height: usize, hypotheses: Vec<PlaneHypothesis>, costs: Vec<f64>) -> Result<Self> {
        if hypotheses.len() != width * height || costs.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "hypothesis map {width}x{height} needs {} entries, got {} hypotheses and {} costs",
                width * height,
                hypotheses.len(),
                costs.len()
            )));
        }
        Ok(HypothesisMap {
            width,
            height,
            hypotheses,
            costs,
        })
    }

    #[inline]
    pub fn hypothesis(&self, x: usize, y: usize) -> &PlaneHypothesis {
        &self.hypotheses[y * self.width + x]
    }

    #[inline]
    pub fn cost(&self, x: usize, y: usize) -> f64 {
        self.costs[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, theta: PlaneHypothesis, cost: f64) {
        let i = y * self.width + x;
        self.hypotheses[i] = theta;
        self.costs[i] = cost;
    }

    pub fn mean_cost(&self) -> f64 {
        self.costs.iter().sum::<f64>() / self.costs.len().max(1) as f64
    }

    pub fn depth_map(&self) -> DepthMap {
        DepthMap {
            width: self.width,
            height: self.height,
            values: self.hypotheses.iter().map(|h| h.depth as f32).collect(),
        }
    }

    pub fn normal_map(&self) -> NormalMap {
        let mut map = NormalMap::new(self.width, self.height);
        for (i, h) in self.hypotheses.iter().enumerate() {
            map.set(i % self.width, i / self.width, &h.normal);
        }
        map
    }

    /// Map from stored depth and normal maps; costs are set to zero.
    pub fn from_maps(depth: &DepthMap, normals: &NormalMap) -> Result<Self> {
        if (depth.width, depth.height) != (normals.width, normals.height) {
            return Err(Error::InvalidArgument("depth and normal maps differ in size".into()));
        }
        let hypotheses = (0..depth.width * depth.height)
            .map(|i| {
                let (x, y) = (i % depth.width, i / depth.width);
                PlaneHypothesis::new(depth.get(x, y) as f64, normals.get(x, y))
            })
            .collect();
        HypothesisMap::new(depth.width, depth.height, hypotheses, vec![0.0; depth.width * depth.height])
    }
}

/// Which aggregated cost drives the updates.
#[derive(Debug, Clone, Copy)]
pub enum CostFunction<'a> {
    /// Weighted photometric cost.
    Photo,
    /// Photometric cost combined with the planar prior.
    PlanarPrior { prior: &'a PriorModel, params: PriorParams },
    /// Photometric cost plus the truncated reprojection penalty.
    Geometric { ctx: &'a GeomContext },
}

impl CostFunction<'_> {
    pub fn phase(&self) -> Phase {
        match self {
            CostFunction::Photo => Phase::Photo,
            CostFunction::PlanarPrior { .. } => Phase::PlanarPrior,
            CostFunction::Geometric { .. } => Phase::Geometric,
        }
    }

    /// Aggregated cost of `theta` at `pixel` given fixed view weights and
    /// its per-source matching costs.
    pub fn evaluate(
        &self,
        pixel: (usize, usize),
        theta: &PlaneHypothesis,
        cam_ref: &CameraModel,
        weights: &ViewWeights,
        costs: &[f64],
    ) -> f64 {
        let result = match self {
            CostFunction::Photo => c_photo(weights, costs),
            CostFunction::PlanarPrior { prior, params } => {
                c_photo(weights, costs).map(|c| c_p_photo(theta, c, prior.get(pixel.0, pixel.1), params))
            }
            CostFunction::Geometric { ctx } => {
                ctx.cost(theta, Vector2::new(pixel.0 as f64, pixel.1 as f64), cam_ref, weights, costs)
            }
        };
        // Unreliable pixels (no usable view) keep the largest photometric cost.
        result.unwrap_or(MAX_COST)
    }
}

/// Phase tag used for progress reports and RNG stream separation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Photo,
    PlanarPrior,
    Geometric,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Photo => "photo",
            Phase::PlanarPrior => "p-photo",
            Phase::Geometric => "geo",
        }
    }

    fn id(&self) -> u64 {
        match self {
            Phase::Photo => 1,
            Phase::PlanarPrior => 2,
            Phase::Geometric => 3,
        }
    }
}

/// Reference image with its sources, everything PatchMatch reads.
#[derive(Debug, Clone)]
pub struct ViewContext<'a> {
    pub ref_image: &'a Image,
    pub ref_cam: &'a CameraModel,
    pub src_images: Vec<&'a Image>,
    pub src_cams: Vec<&'a CameraModel>,
    pairs: Vec<ViewPair>,
    pub range: DepthRange,
    pub patch: PatchSpec,
    pub view_params: ViewSelectionParams,
    /// Number of smallest source costs averaged at initialization.
    pub top_k: usize,
}

impl<'a> ViewContext<'a> {
    pub fn new(
        ref_image: &'a Image,
        ref_cam: &'a CameraModel,
        src_images: Vec<&'a Image>,
        src_cams: Vec<&'a CameraModel>,
        range: DepthRange,
        patch: PatchSpec,
    ) -> Result<Self> {
        patch.validate()?;
        if src_images.is_empty() || src_images.len() != src_cams.len() {
            return Err(Error::InvalidArgument(format!(
                "{} source images for {} source cameras",
                src_images.len(),
                src_cams.len()
            )));
        }
        if src_images.len() > VisibilityMask::MAX_SOURCES {
            return Err(Error::InvalidArgument(format!(
                "at most {} source views are supported",
                VisibilityMask::MAX_SOURCES
            )));
        }
        let pairs = src_cams.iter().map(|c| ViewPair::new(ref_cam, c)).collect();
        Ok(ViewContext {
            ref_image,
            ref_cam,
            top_k: src_images.len().min(4),
            src_images,
            src_cams,
            pairs,
            range,
            patch,
            view_params: ViewSelectionParams::default(),
        })
    }

    pub fn n_sources(&self) -> usize {
        self.src_images.len()
    }

    pub fn width(&self) -> usize {
        self.ref_cam.width
    }

    pub fn height(&self) -> usize {
        self.ref_cam.height
    }

    /// Per-source matching costs of `theta` for a precomputed window.
    fn source_costs(&self, patch: &RefPatch, pixel: (usize, usize), theta: &PlaneHypothesis, out: &mut Vec<f64>) {
        let p = Vector2::new(pixel.0 as f64, pixel.1 as f64);
        let plane = theta.to_plane(p, self.ref_cam);
        out.clear();
        for (pair, img) in self.pairs.iter().zip(&self.src_images) {
            let m = match pair.homography(&plane) {
                Ok(h) => patch.cost(p, &h, img),
                Err(_) => MAX_COST,
            };
            out.push(m);
        }
    }

    /// Per-source matching costs of `theta` at `pixel`.
    pub fn matching_costs(&self, pixel: (usize, usize), theta: &PlaneHypothesis) -> Vec<f64> {
        let patch = RefPatch::new(self.ref_image, pixel.0, pixel.1, &self.patch);
        let mut out = Vec::with_capacity(self.n_sources());
        self.source_costs(&patch, pixel, theta, &mut out);
        out
    }
}

/// Independent random stream for one pixel in one step of one phase.
pub fn pixel_rng(seed: u64, image: usize, pixel: usize, phase: u64, step: u64) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for v in [image as u64, pixel as u64, phase, step] {
        h = splitmix(h ^ v);
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniformly distributed unit normal facing against `ray`.
pub fn random_normal(rng: &mut impl Rng, ray: &Vector3<f64>) -> Vector3<f64> {
    loop {
        let v: Vector3<f64> = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n2 = v.norm_squared();
        if !(1e-6..=1.0).contains(&n2) {
            continue;
        }
        let n = v / n2.sqrt();
        let d = n.dot(ray);
        if d.abs() < 1e-6 {
            continue;
        }
        return if d > 0.0 { -n } else { n };
    }
}

/// Unit normal within `max_angle` of `n`, kept camera-facing; falls back
/// to `n` when the draw would face away from the camera.
pub fn perturb_normal(rng: &mut impl Rng, n: &Vector3<f64>, ray: &Vector3<f64>, max_angle: f64) -> Vector3<f64> {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    // Uniform over the spherical cap.
    let cos_t = 1.0 - rng.random::<f64>() * (1.0 - max_angle.cos());
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = rng.random::<f64>() * std::f64::consts::TAU;
    let p = (n * cos_t + (u * phi.cos() + v * phi.sin()) * sin_t).normalize();
    if p.dot(ray) < 0.0 {
        p
    } else {
        *n
    }
}

/// Random hypotheses over the depth range with costs averaged over the
/// `top_k` best sources.
pub fn random_init(ctx: &ViewContext, image_index: usize, phase: Phase, seed: u64) -> HypothesisMap {
    let (w, h) = (ctx.width(), ctx.height());
    let entries: Vec<(PlaneHypothesis, f64)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let mut rng = pixel_rng(seed, image_index, i, phase.id(), 0);
            let ray = ctx.ref_cam.ray(Vector2::new(x as f64, y as f64));
            let theta = PlaneHypothesis::new(
                rng.random_range(ctx.range.min..=ctx.range.max),
                random_normal(&mut rng, &ray),
            );
            let costs = ctx.matching_costs((x, y), &theta);
            (theta, init_aggregate(&costs, ctx.top_k).unwrap_or(MAX_COST))
        })
        .collect();
    let (hypotheses, costs) = entries.into_iter().unzip();
    HypothesisMap {
        width: w,
        height: h,
        hypotheses,
        costs,
    }
}

const NEAR_UP: [(i64, i64); 3] = [(0, -1), (-1, -2), (1, -2)];
const NEAR_DOWN: [(i64, i64); 3] = [(0, 1), (-1, 2), (1, 2)];
const NEAR_LEFT: [(i64, i64); 3] = [(-1, 0), (-2, -1), (-2, 1)];
const NEAR_RIGHT: [(i64, i64); 3] = [(1, 0), (2, -1), (2, 1)];
const STRIP_LEN: i64 = 11;

/// Positions of the 8 sampling regions around `(x, y)` clipped to the
/// image: 4 V-shaped near regions, then 4 strips at odd distances 3..23
/// (up, down, left, right).
pub fn checkerboard_regions(x: usize, y: usize, width: usize, height: usize) -> Vec<Vec<(usize, usize)>> {
    let inside = |(dx, dy): (i64, i64)| {
        let (px, py) = (x as i64 + dx, y as i64 + dy);
        (px >= 0 && py >= 0 && px < width as i64 && py < height as i64).then_some((px as usize, py as usize))
    };
    let mut regions = Vec::with_capacity(8);
    for near in [NEAR_UP, NEAR_DOWN, NEAR_LEFT, NEAR_RIGHT] {
        regions.push(near.iter().copied().filter_map(inside).collect());
    }
    for (ux, uy) in [(0, -1), (0, 1), (-1, 0), (1, 0)] {
        regions.push(
            (0..STRIP_LEN)
                .map(|k| 3 + 2 * k)
                .filter_map(|d| inside((ux * d, uy * d)))
                .collect(),
        );
    }
    regions
}

/// Cheapest stored hypothesis of each non-empty region, with its position.
/// Ties go to the first position listed.
pub fn checkerboard_neighbors(x: usize, y: usize, map: &HypothesisMap) -> Vec<((usize, usize), PlaneHypothesis)> {
    checkerboard_regions(x, y, map.width, map.height)
        .into_iter()
        .filter_map(|region| {
            let mut best: Option<(usize, usize)> = None;
            for p in region {
                if best.is_none_or(|b| map.cost(p.0, p.1) < map.cost(b.0, b.1)) {
                    best = Some(p);
                }
            }
            best.map(|p| (p, *map.hypothesis(p.0, p.1)))
        })
        .collect()
}

/// Re-anchors a neighbor's plane at `pixel`: same normal, depth where the
/// pixel's ray meets the neighbor's plane. `None` if the ray misses it.
pub fn propagate(
    from: (usize, usize),
    theta: &PlaneHypothesis,
    pixel: (usize, usize),
    cam: &CameraModel,
    range: &DepthRange,
) -> Option<PlaneHypothesis> {
    let plane = theta.to_plane(Vector2::new(from.0 as f64, from.1 as f64), cam);
    let depth = ray_plane_depth(Vector2::new(pixel.0 as f64, pixel.1 as f64), &plane, cam).ok()?;
    Some(PlaneHypothesis::new(range.clamp(depth), theta.normal))
}

/// Result of evaluating a candidate set at one pixel.
#[derive(Debug, Clone)]
pub struct PixelUpdate {
    pub theta: PlaneHypothesis,
    pub cost: f64,
    pub weights: ViewWeights,
}

/// Evaluates `candidates` (current hypothesis first) with view weights
/// computed from this candidate set; returns the strict argmin, ties
/// going to the lowest index.
pub fn update_pixel(
    ctx: &ViewContext,
    pixel: (usize, usize),
    candidates: &[PlaneHypothesis],
    neighbor_vis: &[VisibilityMask],
    cost_fn: &CostFunction,
) -> PixelUpdate {
    let patch = RefPatch::new(ctx.ref_image, pixel.0, pixel.1, &ctx.patch);
    update_with_patch(ctx, &patch, pixel, candidates, neighbor_vis, cost_fn)
}

fn update_with_patch(
    ctx: &ViewContext,
    patch: &RefPatch,
    pixel: (usize, usize),
    candidates: &[PlaneHypothesis],
    neighbor_vis: &[VisibilityMask],
    cost_fn: &CostFunction,
) -> PixelUpdate {
    assert!(!candidates.is_empty());
    let mut table = CostTable::new(ctx.n_sources());
    let mut row = Vec::with_capacity(ctx.n_sources());
    for theta in candidates {
        ctx.source_costs(patch, pixel, theta, &mut row);
        table.push_row(&row);
    }
    let weights = view_selection(&table, neighbor_vis, &ctx.view_params);
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (i, theta) in candidates.iter().enumerate() {
        let c = cost_fn.evaluate(pixel, theta, ctx.ref_cam, &weights, table.row(i));
        if c < best_cost {
            best = i;
            best_cost = c;
        }
    }
    PixelUpdate {
        theta: candidates[best],
        cost: best_cost,
        weights,
    }
}

/// Perturbation widths for refinement step `iteration` (0-based): depth as
/// a fraction of the depth interval and normal cone half-angle in radians.
pub fn perturbation_scale(iteration: usize) -> (f64, f64) {
    let f = 0.5f64.powi(iteration.min(60) as i32);
    (0.05 * f, 30f64.to_radians() * f)
}

/// The six refinement candidates around `current`: perturbed or random
/// depth and normal in every combination the refinement step uses.
pub fn refinement_candidates(
    rng: &mut impl Rng,
    current: &PlaneHypothesis,
    ray: &Vector3<f64>,
    range: &DepthRange,
    iteration: usize,
) -> [PlaneHypothesis; 6] {
    let (depth_frac, cone) = perturbation_scale(iteration);
    let delta = depth_frac * range.interval();
    let d_p = range.clamp(current.depth + rng.random_range(-delta..=delta));
    let n_p = perturb_normal(rng, &current.normal, ray, cone);
    let d_r = rng.random_range(range.min..=range.max);
    let n_r = random_normal(rng, ray);
    let (d_c, n_c) = (current.depth, current.normal);
    [
        PlaneHypothesis::new(d_p, n_c),
        PlaneHypothesis::new(d_r, n_c),
        PlaneHypothesis::new(d_c, n_p),
        PlaneHypothesis::new(d_c, n_r),
        PlaneHypothesis::new(d_r, n_r),
        PlaneHypothesis::new(d_p, n_p),
    ]
}

/// Evaluates the refinement candidates with fixed `weights` and returns the
/// cheapest one if it is strictly cheaper than `current_cost`.
#[allow(clippy::too_many_arguments)]
pub fn refine_pixel(
    ctx: &ViewContext,
    pixel: (usize, usize),
    current: &PlaneHypothesis,
    current_cost: f64,
    weights: &ViewWeights,
    cost_fn: &CostFunction,
    rng: &mut impl Rng,
    iteration: usize,
) -> (PlaneHypothesis, f64) {
    let patch = RefPatch::new(ctx.ref_image, pixel.0, pixel.1, &ctx.patch);
    refine_with_patch(ctx, &patch, pixel, current, current_cost, weights, cost_fn, rng, iteration)
}

#[allow(clippy::too_many_arguments)]
fn refine_with_patch(
    ctx: &ViewContext,
    patch: &RefPatch,
    pixel: (usize, usize),
    current: &PlaneHypothesis,
    current_cost: f64,
    weights: &ViewWeights,
    cost_fn: &CostFunction,
    rng: &mut impl Rng,
    iteration: usize,
) -> (PlaneHypothesis, f64) {
    let ray = ctx.ref_cam.ray(Vector2::new(pixel.0 as f64, pixel.1 as f64));
    let mut best = (*current, current_cost);
    let mut row = Vec::with_capacity(ctx.n_sources());
    for theta in refinement_candidates(rng, current, &ray, &ctx.range, iteration) {
        ctx.source_costs(patch, pixel, &theta, &mut row);
        let c = cost_fn.evaluate(pixel, &theta, ctx.ref_cam, weights, &row);
        if c < best.1 {
            best = (theta, c);
        }
    }
    best
}

/// Progress report emitted after every iteration.
#[derive(Debug, Clone, Copy)]
pub struct Progress<'m> {
    pub image: usize,
    pub phase: Phase,
    pub iteration: usize,
    pub mean_cost: f64,
    pub map: &'m HypothesisMap,
}

/// Settings of one `run_phase` call.
#[derive(Debug, Clone, Copy)]
pub struct PhaseSettings {
    pub iterations: usize,
    pub seed: u64,
    pub image_index: usize,
    /// Distinguishes repeated runs of the same phase (geometric rounds).
    pub round: usize,
}

/// Recomputes every stored cost under `cost_fn`, with view weights derived
/// from each pixel's own hypothesis and the visibility map.
pub fn recompute_costs(map: &mut HypothesisMap, ctx: &ViewContext, cost_fn: &CostFunction, vis: &VisibilityMap) {
    let w = map.width;
    let costs: Vec<f64> = (0..w * map.height)
        .into_par_iter()
        .map(|i| {
            let pixel = (i % w, i / w);
            update_pixel(ctx, pixel, &[map.hypotheses[i]], &vis.neighbors(pixel.0, pixel.1), cost_fn).cost
        })
        .collect();
    map.costs = costs;
}

/// Runs `settings.iterations` red-black iterations on `map`. Visibility
/// starts all-visible and is refreshed after every color.
pub fn run_phase(
    map: &mut HypothesisMap,
    ctx: &ViewContext,
    cost_fn: &CostFunction,
    settings: &PhaseSettings,
    progress: &mut dyn FnMut(Progress),
) -> Result<VisibilityMap> {
    let (w, h) = (map.width, map.height);
    if (w, h) != (ctx.width(), ctx.height()) {
        return Err(Error::InvalidArgument(format!(
            "hypothesis map is {w}x{h} but the reference image is {}x{}",
            ctx.width(),
            ctx.height()
        )));
    }
    let mut vis = VisibilityMap::all_visible(w, h, ctx.n_sources());
    let phase = cost_fn.phase();
    for iteration in 0..settings.iterations {
        for color in 0..2 {
            let step = ((settings.round * 1000 + iteration) * 2 + color) as u64;
            let pixels: Vec<usize> = (0..w * h).filter(|i| (i % w + i / w) % 2 == color).collect();
            let updates: Vec<(usize, PlaneHypothesis, f64, VisibilityMask)> = pixels
                .par_iter()
                .map(|&i| {
                    let pixel = (i % w, i / w);
                    let (theta, cost, visibility) =
                        process_pixel(ctx, map, &vis, cost_fn, pixel, settings, phase, step, iteration);
                    (i, theta, cost, visibility)
                })
                .collect();
            for (i, theta, cost, visibility) in updates {
                map.hypotheses[i] = theta;
                map.costs[i] = cost;
                vis.masks[i] = visibility;
            }
        }
        progress(Progress {
            image: settings.image_index,
            phase,
            iteration,
            mean_cost: map.mean_cost(),
            map,
        });
    }
    Ok(vis)
}

#[allow(clippy::too_many_arguments)]
fn process_pixel(
    ctx: &ViewContext,
    map: &HypothesisMap,
    vis: &VisibilityMap,
    cost_fn: &CostFunction,
    pixel: (usize, usize),
    settings: &PhaseSettings,
    phase: Phase,
    step: u64,
    iteration: usize,
) -> (PlaneHypothesis, f64, VisibilityMask) {
    let (x, y) = pixel;
    let mut candidates = Vec::with_capacity(9);
    candidates.push(*map.hypothesis(x, y));
    for (from, theta) in checkerboard_neighbors(x, y, map) {
        if let Some(t) = propagate(from, &theta, pixel, ctx.ref_cam, &ctx.range) {
            candidates.push(t);
        }
    }
    let patch = RefPatch::new(ctx.ref_image, x, y, &ctx.patch);
    let update = update_with_patch(ctx, &patch, pixel, &candidates, &vis.neighbors(x, y), cost_fn);
    let mut rng = pixel_rng(settings.seed, settings.image_index, y * map.width + x, phase.id(), step);
    let (theta, cost) = refine_with_patch(
        ctx,
        &patch,
        pixel,
        &update.theta,
        update.cost,
        &update.weights,
        cost_fn,
        &mut rng,
        iteration,
    );
    (theta, cost, update.weights.visibility)
}

/// Homography of `theta` at `pixel` into every source; exposed for
/// diagnostics.
pub fn source_homographies(ctx: &ViewContext, pixel: (usize, usize), theta: &PlaneHypothesis) -> Vec<Option<Matrix3<f64>>> {
    let plane = theta.to_plane(Vector2::new(pixel.0 as f64, pixel.1 as f64), ctx.ref_cam);
    ctx.pairs.iter().map(|p| p.homography(&plane).ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_with_costs(w: usize, h: usize, costs: Vec<f64>) -> HypothesisMap {
        let hyps = (0..w * h).map(|i| PlaneHypothesis::fronto(1.0 + i as f64)).collect();
        HypothesisMap::new(w, h, hyps, costs).unwrap()
    }

    #[test]
    fn interior_pixel_has_eight_regions() {
        let map = map_with_costs(60, 60, vec![0.5; 3600]);
        assert_eq!(checkerboard_neighbors(30, 30, &map).len(), 8);
    }

    #[test]
    fn corner_pixel_has_in_bounds_candidates() {
        let map = map_with_costs(30, 30, vec![0.5; 900]);
        let n = checkerboard_neighbors(0, 0, &map);
        assert!(n.len() >= 2);
        for ((x, y), _) in n {
            assert!(x < 30 && y < 30);
        }
    }

    #[test]
    fn regions_read_only_the_opposite_color() {
        for region in checkerboard_regions(20, 21, 50, 50) {
            for (x, y) in region {
                assert_eq!((x + y) % 2, 0);
            }
        }
    }

    #[test]
    fn strip_picks_cheapest() {
        let (w, h) = (1, 40);
        let mut costs = vec![1.0; w * h];
        costs[15] = 0.1;
        let map = map_with_costs(w, h, costs);
        let n = checkerboard_neighbors(0, 0, &map);
        // Down near region has (0, 1) only; down strip finds y = 15.
        assert!(n.iter().any(|(p, _)| *p == (0, 15)));
    }

    #[test]
    fn perturbed_normals_stay_in_cone_and_face_camera() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ray = Vector3::new(0.1, -0.2, 1.0);
        let n = Vector3::new(0.2, 0.1, -1.0).normalize();
        for _ in 0..1000 {
            let p = perturb_normal(&mut rng, &n, &ray, 0.3);
            assert!((p.norm() - 1.0).abs() < 1e-12);
            assert!(p.dot(&ray) < 0.0);
            assert!(n.dot(&p).clamp(-1.0, 1.0).acos() <= 0.3 + 1e-12);
            let r = random_normal(&mut rng, &ray);
            assert!((r.norm() - 1.0).abs() < 1e-12 && r.dot(&ray) < 0.0);
        }
    }

    #[test]
    fn refinement_candidates_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let range = DepthRange::new(1.0, 2.0).unwrap();
        let ray = Vector3::new(0.0, 0.0, 1.0);
        for it in 0..5 {
            let cur = PlaneHypothesis::fronto(if it % 2 == 0 { 1.0 } else { 2.0 });
            for c in refinement_candidates(&mut rng, &cur, &ray, &range, it) {
                assert!(range.contains(c.depth));
                assert!(c.normal.dot(&ray) < 0.0);
            }
        }
    }
}
