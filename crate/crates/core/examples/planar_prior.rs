//! Builds the piecewise planar prior of one view: photometric PatchMatch,
//! credible pixels, Delaunay triangulation and per-triangle planes. Reports
//! how well the prior alone predicts depth on the textureless panel and
//! writes the triangulation and prior depth map.
//!
//! ```text
//! cargo run --release --example planar_prior -- [width] [height] [out_dir]
//! ```

use planar_mvs::dataset::{render_synthetic_scene, surface_labels, SceneSpec};
use planar_mvs::eval::relative_accuracy;
use planar_mvs::prior::{build_prior_model, limit_density, select_credible, Triangulation};
use planar_mvs::{Pipeline, PipelineConfig};

fn main() -> planar_mvs::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let w = args.first().and_then(|a| a.parse().ok()).unwrap_or(320);
    let h = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(240);
    let out = args.get(2).map(String::as_str).unwrap_or("prior_out");

    let spec = SceneSpec::low_texture_wall(w, h, 5);
    let scene = render_synthetic_scene(&spec, 7)?;
    let gt = scene.gt_depth.clone().unwrap();
    let panel: Vec<bool> = surface_labels(&spec, 0).iter().map(|l| *l == Some(1)).collect();
    let config = PipelineConfig::default();
    let epsilon = config.epsilon;
    let mut pipeline = Pipeline::new(scene, config)?;
    let photometric = pipeline.photometric_stage()?;
    let map = &photometric[0];
    let cam = &pipeline.scene.cameras[0];

    let credible = select_credible(map, epsilon)?;
    println!("{} of {} pixels have cost below {epsilon}", credible.len(), w * h);
    let credible = limit_density(credible, w, h);
    let tri = Triangulation::build(credible)?;
    println!("{} vertices, {} triangles", tri.vertices.len(), tri.triangles.len());
    let model = build_prior_model(&tri, cam, &pipeline.scene.depth_ranges[0]);
    println!("prior covers {} pixels", model.coverage());

    let photo_acc = relative_accuracy(&map.depth_map(), &gt[0], 0.01, Some(&panel))?;
    let prior_acc = relative_accuracy(&model.depth_map(), &gt[0], 0.01, Some(&panel))?;
    println!("panel pixels within 1%: photometric {photo_acc:.3}, prior alone {prior_acc:.3}");

    std::fs::create_dir_all(out)?;
    tri.save_off(format!("{out}/0000.off"))?;
    model.depth_map().save(format!("{out}/0000_prior.dmap"))?;
    println!("wrote {out}/0000.off and {out}/0000_prior.dmap");
    Ok(())
}
