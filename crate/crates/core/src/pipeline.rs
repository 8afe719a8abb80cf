//! Three-phase reconstruction pipeline and its configuration.
//!
//! Stages: photometric PatchMatch on every view, planar prior construction,
//! prior-assisted PatchMatch from a fresh random start, geometric
//! consistency rounds initialized from the previous maps, and fusion.
//!
//! Config files are flat `key = value` text with `#` comments; keys are the
//! field names of [`PipelineConfig`] (`lambda_n` and `max_normal_diff` in
//! degrees).

use std::path::Path;
use std::time::Instant;

use log::{info, warn};

use crate::dataset::{load_scene, DepthMap, DepthRange, NormalMap, SceneDataset};
use crate::error::{Error, Result};
use crate::fusion::{fuse, write_ply, FusionParams, PointCloud, ViewMaps};
use crate::geomcons::GeomContext;
use crate::io_util::write_atomic;
use crate::patchmatch::{
    random_init, recompute_costs, run_phase, CostFunction, HypothesisMap, Phase, PhaseSettings, Progress, ViewContext,
};
use crate::photometric::{PatchSpec, ViewSelectionParams, VisibilityMap};
use crate::prior::{build_prior_model, limit_density, select_credible, PriorModel, PriorParams, Triangulation};

/// Every tunable constant of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Degrees.
    pub lambda_n: f64,
    pub sigma: f64,
    pub eta: f64,
    pub lambda_geo: f64,
    pub tau_geo: f64,
    pub lambda_d_divisor: f64,
    pub top_k: usize,
    pub patch_radius: usize,
    pub patch_step: usize,
    pub iters_photo: usize,
    pub iters_prior: usize,
    pub iters_geo: usize,
    pub geo_rounds: usize,
    pub fusion: FusionParams,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    /// Downsample views whose larger side exceeds this.
    pub max_dim: Option<usize>,
    pub no_prior: bool,
    pub no_geom: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            epsilon: 0.1,
            alpha: 0.18,
            gamma: 0.5,
            lambda_n: 5.0,
            sigma: 0.3,
            eta: 0.9,
            lambda_geo: 0.1,
            tau_geo: 5.0,
            lambda_d_divisor: 64.0,
            top_k: 4,
            patch_radius: 5,
            patch_step: 2,
            iters_photo: 3,
            iters_prior: 3,
            iters_geo: 2,
            geo_rounds: 2,
            fusion: FusionParams::default(),
            seed: 0,
            threads: 0,
            max_dim: None,
            no_prior: false,
            no_geom: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("config: {what}")));
        if self.iters_photo == 0 {
            return bad("iters_photo must be at least 1 (phase 1 produces the costs priors are built from)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.alpha > 0.0) || !(self.gamma > 0.0) || !(self.lambda_n > 0.0) || !(self.lambda_d_divisor > 0.0) {
            return bad("alpha, gamma, lambda_n and lambda_d_divisor must be positive");
        }
        if !(self.sigma > 0.0) || !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("sigma must be positive and eta in (0, 1)");
        }
        if !(self.lambda_geo >= 0.0) || !(self.tau_geo > 0.0) {
            return bad("lambda_geo must be >= 0 and tau_geo > 0");
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        if self.max_dim.is_some_and(|d| d < 8) {
            return bad("max_dim must be at least 8");
        }
        self.patch().validate().map_err(|e| Error::Validation(e.to_string()))?;
        self.fusion.validate()
    }

    pub fn patch(&self) -> PatchSpec {
        PatchSpec {
            radius: self.patch_radius,
            step: self.patch_step,
        }
    }

    pub fn view_params(&self) -> ViewSelectionParams {
        ViewSelectionParams {
            sigma: self.sigma,
            eta: self.eta,
            ..ViewSelectionParams::default()
        }
    }

    pub fn prior_params(&self, range: &DepthRange) -> PriorParams {
        PriorParams {
            alpha: self.alpha,
            gamma: self.gamma,
            lambda_d: range.interval() / self.lambda_d_divisor,
            lambda_n: self.lambda_n.to_radians(),
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Validation(format!("config: bad value {value:?} for {key}")))
        }
        match key {
            "epsilon" => self.epsilon = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "lambda_n" => self.lambda_n = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "eta" => self.eta = num(key, value)?,
            "lambda_geo" => self.lambda_geo = num(key, value)?,
            "tau_geo" => self.tau_geo = num(key, value)?,
            "lambda_d_divisor" => self.lambda_d_divisor = num(key, value)?,
            "top_k" => self.top_k = num(key, value)?,
            "patch_radius" => self.patch_radius = num(key, value)?,
            "patch_step" => self.patch_step = num(key, value)?,
            "iters_photo" => self.iters_photo = num(key, value)?,
            "iters_prior" => self.iters_prior = num(key, value)?,
            "iters_geo" => self.iters_geo = num(key, value)?,
            "geo_rounds" => self.geo_rounds = num(key, value)?,
            "max_rel_depth_diff" => self.fusion.max_rel_depth_diff = num(key, value)?,
            "max_normal_diff" => self.fusion.max_normal_diff = num::<f64>(key, value)?.to_radians(),
            "max_reproj_err" => self.fusion.max_reproj_err = num(key, value)?,
            "min_consistent" => self.fusion.min_consistent = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "threads" => self.threads = num(key, value)?,
            "max_dim" => self.max_dim = Some(num(key, value)?),
            "no_prior" => self.no_prior = num(key, value)?,
            "no_geom" => self.no_geom = num(key, value)?,
            _ => return Err(Error::Validation(format!("config: unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every setting of a config text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Validation(format!("config line {}: expected key = value", n + 1)));
            };
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
        let mut config = PipelineConfig::default();
        config.apply_text(&text)?;
        Ok(config)
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub photometric: f64,
    pub prior: f64,
    pub planar: f64,
    pub geometric: f64,
    pub fusion: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.photometric + self.prior + self.planar + self.geometric + self.fusion
    }

    pub fn key_values(&self) -> Vec<(String, f64)> {
        vec![
            ("photometric".into(), self.photometric),
            ("prior".into(), self.prior),
            ("planar".into(), self.planar),
            ("geometric".into(), self.geometric),
            ("fusion".into(), self.fusion),
            ("total".into(), self.total()),
        ]
    }
}

/// Everything a full run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub photometric: Vec<HypothesisMap>,
    pub priors: Vec<Option<(Triangulation, PriorModel)>>,
    /// Maps after the prior-assisted phase (equal to `photometric` for views
    /// without a prior).
    pub planar: Vec<HypothesisMap>,
    /// Final maps.
    pub maps: Vec<HypothesisMap>,
    pub cloud: PointCloud,
    pub timings: StageTimings,
}

impl PipelineOutput {
    pub fn depth_maps(&self) -> Vec<DepthMap> {
        self.maps.iter().map(HypothesisMap::depth_map).collect()
    }

    pub fn normal_maps(&self) -> Vec<NormalMap> {
        self.maps.iter().map(HypothesisMap::normal_map).collect()
    }
}

type ProgressFn<'p> = Box<dyn FnMut(Progress) + Send + 'p>;

/// Stage-by-stage driver over one scene.
pub struct Pipeline<'p> {
    pub scene: SceneDataset,
    pub config: PipelineConfig,
    pool: rayon::ThreadPool,
    progress: Option<ProgressFn<'p>>,
}

impl<'p> Pipeline<'p> {
    pub fn new(scene: SceneDataset, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        scene.validate()?;
        let scene = match config.max_dim {
            Some(d) => scene.resized(d)?,
            None => scene,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
        Ok(Pipeline {
            scene,
            config,
            pool,
            progress: None,
        })
    }

    /// Called after every PatchMatch iteration of every view.
    pub fn with_progress(mut self, f: impl FnMut(Progress) + Send + 'p) -> Self {
        self.progress = Some(Box::new(f));
        self
    }

    fn context(&self, view: usize) -> Result<ViewContext<'_>> {
        let s = &self.scene;
        let others: Vec<usize> = (0..s.len()).filter(|&j| j != view).collect();
        let mut ctx = ViewContext::new(
            &s.images[view],
            &s.cameras[view],
            others.iter().map(|&j| &s.images[j]).collect(),
            others.iter().map(|&j| &s.cameras[j]).collect(),
            s.depth_ranges[view],
            self.config.patch(),
        )?;
        ctx.top_k = self.config.top_k.min(others.len());
        ctx.view_params = self.config.view_params();
        Ok(ctx)
    }

    fn run_view(
        &mut self,
        view: usize,
        map: &mut HypothesisMap,
        cost_fn: &CostFunction,
        iterations: usize,
        round: usize,
    ) -> Result<()> {
        let settings = PhaseSettings {
            iterations,
            seed: self.config.seed,
            image_index: view,
            round,
        };
        let mut callback = self.progress.take();
        let result = {
            let ctx = self.context(view)?;
            let mut sink = |p: Progress| {
                info!(
                    "view {} {} iteration {}: mean cost {:.4}",
                    p.image,
                    p.phase.name(),
                    p.iteration,
                    p.mean_cost
                )
            };
            let progress: &mut (dyn FnMut(Progress) + Send) = match callback.as_mut() {
                Some(f) => f.as_mut(),
                None => &mut sink,
            };
            self.pool.install(|| run_phase(map, &ctx, cost_fn, &settings, progress))
        };
        self.progress = callback;
        result?;
        Ok(())
    }

    /// Phase 1: photometric PatchMatch from a random start on every view.
    pub fn photometric_stage(&mut self) -> Result<Vec<HypothesisMap>> {
        let mut maps = Vec::with_capacity(self.scene.len());
        for view in 0..self.scene.len() {
            let mut map = {
                let ctx = self.context(view)?;
                self.pool.install(|| random_init(&ctx, view, Phase::Photo, self.config.seed))
            };
            self.run_view(view, &mut map, &CostFunction::Photo, self.config.iters_photo, 0)?;
            maps.push(map);
        }
        Ok(maps)
    }

    /// Credible pixels, triangulation and rasterized prior of every view;
    /// `None` (with a warning) where support is insufficient.
    pub fn build_priors(&self, photometric: &[HypothesisMap]) -> Vec<Option<(Triangulation, PriorModel)>> {
        photometric
            .iter()
            .enumerate()
            .map(|(view, map)| {
                let cam = &self.scene.cameras[view];
                let built = select_credible(map, self.config.epsilon)
                    .map(|set| limit_density(set, cam.width, cam.height))
                    .and_then(Triangulation::build)
                    .map(|tri| {
                        let model = build_prior_model(&tri, cam, &self.scene.depth_ranges[view]);
                        (tri, model)
                    });
                match built {
                    Ok(p) => {
                        info!(
                            "view {view}: {} credible points, {} triangles, prior covers {} pixels",
                            p.0.vertices.len(),
                            p.0.triangles.len(),
                            p.1.coverage()
                        );
                        Some(p)
                    }
                    Err(e) => {
                        warn!("view {view}: no planar prior ({e}); continuing without it");
                        None
                    }
                }
            })
            .collect()
    }

    /// Phase 2: prior-assisted PatchMatch from a fresh random start. Views
    /// without a prior keep their photometric map.
    pub fn planar_stage(
        &mut self,
        photometric: &[HypothesisMap],
        priors: &[Option<(Triangulation, PriorModel)>],
    ) -> Result<Vec<HypothesisMap>> {
        let mut maps = Vec::with_capacity(self.scene.len());
        for view in 0..self.scene.len() {
            let Some((_, prior)) = &priors[view] else {
                maps.push(photometric[view].clone());
                continue;
            };
            let cost_fn = CostFunction::PlanarPrior {
                prior,
                params: self.config.prior_params(&self.scene.depth_ranges[view]),
            };
            let mut map = {
                let ctx = self.context(view)?;
                self.pool.install(|| {
                    let mut map = random_init(&ctx, view, Phase::PlanarPrior, self.config.seed);
                    let vis = VisibilityMap::all_visible(map.width, map.height, ctx.n_sources());
                    recompute_costs(&mut map, &ctx, &cost_fn, &vis);
                    map
                })
            };
            self.run_view(view, &mut map, &cost_fn, self.config.iters_prior, 0)?;
            maps.push(map);
        }
        Ok(maps)
    }

    /// Phase 3: `geo_rounds` rounds of geometric-consistency PatchMatch, each
    /// starting from and checked against the previous round's maps.
    pub fn geometric_stage(&mut self, init: &[HypothesisMap]) -> Result<Vec<HypothesisMap>> {
        let mut current = init.to_vec();
        for round in 0..self.config.geo_rounds {
            let depths: Vec<DepthMap> = current.iter().map(HypothesisMap::depth_map).collect();
            let mut next = Vec::with_capacity(current.len());
            for view in 0..self.scene.len() {
                let others: Vec<usize> = (0..self.scene.len()).filter(|&j| j != view).collect();
                let geo = GeomContext::new(
                    others.iter().map(|&j| depths[j].clone()).collect(),
                    others.iter().map(|&j| self.scene.cameras[j].clone()).collect(),
                    self.config.lambda_geo,
                    self.config.tau_geo,
                )?;
                let cost_fn = CostFunction::Geometric { ctx: &geo };
                let mut map = current[view].clone();
                {
                    let ctx = self.context(view)?;
                    let vis = VisibilityMap::all_visible(map.width, map.height, ctx.n_sources());
                    self.pool.install(|| recompute_costs(&mut map, &ctx, &cost_fn, &vis));
                }
                self.run_view(view, &mut map, &cost_fn, self.config.iters_geo, round + 1)?;
                next.push(map);
            }
            current = next;
        }
        Ok(current)
    }

    pub fn fusion_stage(&self, maps: &[HypothesisMap]) -> Result<PointCloud> {
        let depths: Vec<DepthMap> = maps.iter().map(HypothesisMap::depth_map).collect();
        let normals: Vec<NormalMap> = maps.iter().map(HypothesisMap::normal_map).collect();
        let views: Vec<ViewMaps> = (0..maps.len())
            .map(|i| ViewMaps {
                depth: &depths[i],
                normals: &normals[i],
                cam: &self.scene.cameras[i],
            })
            .collect();
        fuse(&views, self.scene.colors.as_deref(), &self.config.fusion)
    }

    /// Runs every stage the configuration enables, without fusion.
    pub fn depth_maps(&mut self) -> Result<PipelineOutput> {
        let mut timings = StageTimings::default();
        let t = Instant::now();
        let photometric = self.photometric_stage().map_err(|e| e.in_stage("photometric"))?;
        timings.photometric = t.elapsed().as_secs_f64();

        let (priors, planar) = if self.config.no_prior {
            (vec![None; photometric.len()], photometric.clone())
        } else {
            let t = Instant::now();
            let priors = self.build_priors(&photometric);
            timings.prior = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let planar = self.planar_stage(&photometric, &priors).map_err(|e| e.in_stage("planar prior"))?;
            timings.planar = t.elapsed().as_secs_f64();
            (priors, planar)
        };

        let maps = if self.config.no_geom {
            planar.clone()
        } else {
            let t = Instant::now();
            let maps = self.geometric_stage(&planar).map_err(|e| e.in_stage("geometric"))?;
            timings.geometric = t.elapsed().as_secs_f64();
            maps
        };
        Ok(PipelineOutput {
            photometric,
            priors,
            planar,
            maps,
            cloud: PointCloud::default(),
            timings,
        })
    }

    /// All stages including fusion.
    pub fn run(&mut self) -> Result<PipelineOutput> {
        let mut out = self.depth_maps()?;
        let t = Instant::now();
        out.cloud = self.fusion_stage(&out.maps).map_err(|e| e.in_stage("fusion"))?;
        out.timings.fusion = t.elapsed().as_secs_f64();
        Ok(out)
    }
}

/// Loads `scene_dir`, runs the pipeline and writes its outputs to `out_dir`.
pub fn run_pipeline(scene_dir: impl AsRef<Path>, out_dir: impl AsRef<Path>, config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let scene = load_scene(scene_dir)?;
    let mut pipeline = Pipeline::new(scene, config.clone())?;
    let out = pipeline.run()?;
    write_outputs(out_dir, &pipeline.scene.names, &out, true)?;
    Ok(out)
}

/// Writes `depth/NAME.dmap`, `normal/NAME.nmap`, `timings.txt`, prior
/// dumps under `prior/`, and `cloud.ply` when `with_cloud` is set.
pub fn write_outputs(out_dir: impl AsRef<Path>, names: &[String], out: &PipelineOutput, with_cloud: bool) -> Result<()> {
    let dir = out_dir.as_ref();
    for (i, map) in out.maps.iter().enumerate() {
        map.depth_map().save(dir.join("depth").join(format!("{}.dmap", names[i])))?;
        map.normal_map().save(dir.join("normal").join(format!("{}.nmap", names[i])))?;
    }
    for (i, prior) in out.priors.iter().enumerate() {
        if let Some((tri, model)) = prior {
            tri.save_off(dir.join("prior").join(format!("{}.off", names[i])))?;
            model.depth_map().save(dir.join("prior").join(format!("{}.dmap", names[i])))?;
            model.normal_map().save(dir.join("prior").join(format!("{}.nmap", names[i])))?;
        }
    }
    if with_cloud {
        write_ply(dir.join("cloud.ply"), &out.cloud)?;
    }
    write_atomic(&dir.join("timings.txt"), |w| {
        for (k, v) in out.timings.key_values() {
            writeln!(w, "{k}={v}")?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_parameter_settings() {
        let c = PipelineConfig::default();
        assert_eq!(
            [c.epsilon, c.alpha, c.gamma, c.lambda_n, c.sigma, c.eta, c.lambda_geo, c.tau_geo],
            [0.1, 0.18, 0.5, 5.0, 0.3, 0.9, 0.1, 5.0]
        );
        assert_eq!((c.iters_photo, c.iters_prior, c.iters_geo, c.geo_rounds), (3, 3, 2, 2));
        assert_eq!(c.lambda_d_divisor, 64.0);
        c.validate().unwrap();
    }

    #[test]
    fn config_text_overrides_defaults() {
        let mut c = PipelineConfig::default();
        c.apply_text("# comment\nalpha = 0.2\n\nseed=7 # trailing\nmax_normal_diff = 20\n").unwrap();
        assert_eq!(c.alpha, 0.2);
        assert_eq!(c.seed, 7);
        assert!((c.fusion.max_normal_diff - 20f64.to_radians()).abs() < 1e-15);
        assert!(c.apply_text("bogus = 1").is_err());
        assert!(c.apply_text("alpha 0.2").is_err());
    }

    #[test]
    fn zero_photometric_iterations_rejected() {
        let c = PipelineConfig {
            iters_photo: 0,
            ..PipelineConfig::default()
        };
        assert!(c.validate().unwrap_err().is_validation());
    }
}
