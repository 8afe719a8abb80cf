//! Sweeps fronto-parallel depth hypotheses through one pixel of a textured
//! plane and prints the `1 - NCC` matching cost against each source view.
//! The minimum sits at the true depth.
//!
//! ```text
//! cargo run --release --example cost_sweep
//! ```

use planar_mvs::dataset::{render_synthetic_scene, SceneSpec};
use planar_mvs::geometry::PlaneHypothesis;
use planar_mvs::photometric::{init_aggregate, matching_cost, PatchSpec};

fn main() -> planar_mvs::Result<()> {
    let scene = render_synthetic_scene(&SceneSpec::fronto_plane(160, 120, 5, 3.0), 1)?;
    let pixel = (70, 52);
    let spec = PatchSpec::default();
    let truth = scene.gt_depth.as_ref().unwrap()[0].get(pixel.0, pixel.1) as f64;
    println!("pixel {pixel:?}, true depth {truth:.4}");
    println!("{:>7} {:>8} {:>8} {:>8} {:>8} {:>8}", "depth", "src 1", "src 2", "src 3", "src 4", "top-2");
    let mut best = (f64::INFINITY, 0.0);
    for step in 0..=40 {
        let depth = 2.7 + 0.015 * step as f64;
        let theta = PlaneHypothesis::fronto(depth);
        let costs: Vec<f64> = (1..scene.len())
            .map(|j| {
                matching_cost(
                    pixel,
                    &theta,
                    &scene.images[0],
                    &scene.images[j],
                    &scene.cameras[0],
                    &scene.cameras[j],
                    &spec,
                )
            })
            .collect();
        let agg = init_aggregate(&costs, 2)?;
        if agg < best.0 {
            best = (agg, depth);
        }
        print!("{depth:>7.3}");
        for c in &costs {
            print!(" {c:>8.4}");
        }
        println!(" {agg:>8.4}");
    }
    println!("lowest aggregated cost {:.4} at depth {:.3}", best.0, best.1);
    Ok(())
}
