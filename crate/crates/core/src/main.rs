use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use planar_mvs::dataset::{load_scene, render_synthetic_scene, save_scene, DepthMap, NormalMap, SceneSpec};
use planar_mvs::eval::{cloud_metrics, depth_metrics, write_json, write_report};
use planar_mvs::fusion::{fuse, read_ply, write_ply, PointCloud, ViewMaps};
use planar_mvs::pipeline::write_outputs;
use planar_mvs::{Error, Pipeline, PipelineConfig, Result};

#[derive(Parser)]
#[command(name = "planar-mvs", version, about = "Planar-prior PatchMatch multi-view stereo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Estimate depth and normal maps for every view.
    Depthmap(RunArgs),
    /// Fuse existing depth and normal maps into a point cloud.
    Fuse(FuseArgs),
    /// Compare depth maps against ground truth.
    EvalDepth(EvalDepthArgs),
    /// Compare a point cloud against a reference cloud.
    EvalCloud(EvalCloudArgs),
    /// Depth maps plus fusion.
    Pipeline(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SceneKind {
    /// Folded textured surface (fronto-parallel and slanted part).
    Planes,
    /// Textured wall behind a uniform panel.
    LowTexture,
    /// Single textured fronto-parallel plane.
    Fronto,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "planes")]
    kind: SceneKind,
    #[arg(long, default_value_t = 320)]
    width: usize,
    #[arg(long, default_value_t = 240)]
    height: usize,
    #[arg(long, default_value_t = 5)]
    views: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scene directory to create.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Skip the planar prior (photometric and geometric phases only).
    #[arg(long)]
    no_prior: bool,
    /// Stop after the planar prior phase.
    #[arg(long)]
    no_geom: bool,
    /// Downscale images whose larger side exceeds this.
    #[arg(long)]
    max_dim: Option<usize>,
    /// Extra overrides, e.g. `--set alpha=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn build(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        for kv in &self.overrides {
            config.apply_text(kv)?;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(t) = self.threads {
            config.threads = t;
        }
        if let Some(d) = self.max_dim {
            config.max_dim = Some(d);
        }
        config.no_prior |= self.no_prior;
        config.no_geom |= self.no_geom;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct FuseArgs {
    /// Scene directory (cameras and colors).
    #[arg(long)]
    scene: PathBuf,
    /// Directory holding `depth/` and `normal/` from `depthmap`.
    #[arg(long)]
    maps: PathBuf,
    /// Output PLY file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalDepthArgs {
    /// Estimated depth map file, or a directory of them.
    #[arg(long)]
    est: PathBuf,
    /// Ground-truth depth map file, or a directory with matching names.
    #[arg(long)]
    gt: PathBuf,
    /// Absolute error thresholds in scene units.
    #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.1])]
    thresholds: Vec<f64>,
    /// key=value report.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct EvalCloudArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 0.02)]
    tau: f64,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Depthmap(a) => run(&a, false),
        Command::Fuse(a) => fuse_maps(&a),
        Command::EvalDepth(a) => eval_depth(&a),
        Command::EvalCloud(a) => eval_cloud(&a),
        Command::Pipeline(a) => run(&a, true),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = match a.kind {
        SceneKind::Planes => SceneSpec::textured_planes(a.width, a.height, a.views),
        SceneKind::LowTexture => SceneSpec::low_texture_wall(a.width, a.height, a.views),
        SceneKind::Fronto => SceneSpec::fronto_plane(a.width, a.height, a.views, 3.0),
    };
    let scene = render_synthetic_scene(&spec, a.seed)?;
    save_scene(&scene, &a.out)?;
    let gt = PointCloud::from_depth_maps(scene.gt_depth.as_deref().unwrap_or_default(), &scene.cameras);
    write_ply(a.out.join("gt.ply"), &gt)?;
    info!("wrote {} views and a {}-point reference cloud to {}", scene.len(), gt.len(), a.out.display());
    Ok(())
}

fn run(a: &RunArgs, with_cloud: bool) -> Result<()> {
    let config = a.config.build()?;
    let scene = load_scene(&a.scene)?;
    let mut pipeline = Pipeline::new(scene, config)?;
    let out = if with_cloud { pipeline.run()? } else { pipeline.depth_maps()? };
    write_outputs(&a.out, &pipeline.scene.names, &out, with_cloud)?;
    for (k, v) in out.timings.key_values() {
        info!("{k}: {v:.2}s");
    }
    if with_cloud {
        info!("fused {} points", out.cloud.len());
    }
    Ok(())
}

fn fuse_maps(a: &FuseArgs) -> Result<()> {
    let config = a.config.build()?;
    let mut scene = load_scene(&a.scene)?;
    if let Some(d) = config.max_dim {
        scene = scene.resized(d)?;
    }
    let mut depths = Vec::new();
    let mut normals = Vec::new();
    for name in &scene.names {
        depths.push(DepthMap::load(a.maps.join("depth").join(format!("{name}.dmap")))?);
        normals.push(NormalMap::load(a.maps.join("normal").join(format!("{name}.nmap")))?);
    }
    let views: Vec<ViewMaps> = (0..scene.len())
        .map(|i| ViewMaps {
            depth: &depths[i],
            normals: &normals[i],
            cam: &scene.cameras[i],
        })
        .collect();
    let cloud = fuse(&views, scene.colors.as_deref(), &config.fusion)?;
    write_ply(&a.out, &cloud)?;
    info!("fused {} points into {}", cloud.len(), a.out.display());
    Ok(())
}

/// Pairs of (estimate, ground truth) files; directories are matched by
/// file name.
fn depth_pairs(est: &Path, gt: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    if !est.is_dir() {
        return Ok(vec![(est.to_path_buf(), gt.to_path_buf())]);
    }
    let entries = std::fs::read_dir(est).map_err(|e| Error::load(est, e.to_string()))?;
    let mut pairs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::load(est, e.to_string()))?.path();
        if path.extension().is_some_and(|x| x == "dmap") {
            let other = gt.join(path.file_name().unwrap());
            if other.exists() {
                pairs.push((path, other));
            }
        }
    }
    pairs.sort();
    if pairs.is_empty() {
        return Err(Error::Validation(format!(
            "no depth maps in {} have a counterpart in {}",
            est.display(),
            gt.display()
        )));
    }
    Ok(pairs)
}

fn emit(values: &[(String, f64)], report: &Option<PathBuf>, json: &Option<PathBuf>) -> Result<()> {
    for (k, v) in values {
        println!("{k}={v}");
    }
    if let Some(p) = report {
        write_report(p, values)?;
    }
    if let Some(p) = json {
        write_json(p, values)?;
    }
    Ok(())
}

fn eval_depth(a: &EvalDepthArgs) -> Result<()> {
    let mut valid = 0usize;
    let mut hits = vec![0.0; a.thresholds.len()];
    for (est, gt) in depth_pairs(&a.est, &a.gt)? {
        let m = depth_metrics(&DepthMap::load(&est)?, &DepthMap::load(&gt)?, &a.thresholds)?;
        for (h, f) in hits.iter_mut().zip(&m.fractions) {
            *h += f * m.valid_pixels as f64;
        }
        valid += m.valid_pixels;
    }
    let mut values = vec![("valid_pixels".to_string(), valid as f64)];
    for (t, h) in a.thresholds.iter().zip(&hits) {
        values.push((format!("within_{t}"), h / valid as f64));
    }
    emit(&values, &a.report, &a.json)
}

fn eval_cloud(a: &EvalCloudArgs) -> Result<()> {
    let m = cloud_metrics(&read_ply(&a.est)?, &read_ply(&a.gt)?, a.tau)?;
    emit(&m.key_values(), &a.report, &a.json)
}
