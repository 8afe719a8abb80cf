//! Photometric PatchMatch on a single reference view: random start, then
//! checkerboard propagation and refinement, printing the mean cost and the
//! depth accuracy after every iteration.
//!
//! ```text
//! cargo run --release --example patchmatch_view -- [width] [height] [iterations]
//! ```

use planar_mvs::dataset::{render_synthetic_scene, DepthMap, SceneSpec};
use planar_mvs::eval::relative_accuracy;
use planar_mvs::patchmatch::{random_init, run_phase, CostFunction, Phase, PhaseSettings, Progress, ViewContext};
use planar_mvs::photometric::PatchSpec;

fn main() -> planar_mvs::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (w, h, iters) = (
        args.first().copied().unwrap_or(160),
        args.get(1).copied().unwrap_or(120),
        args.get(2).copied().unwrap_or(4),
    );
    let scene = render_synthetic_scene(&SceneSpec::textured_planes(w, h, 5), 7)?;
    let gt: &DepthMap = &scene.gt_depth.as_ref().unwrap()[0];
    let ctx = ViewContext::new(
        &scene.images[0],
        &scene.cameras[0],
        scene.images[1..].iter().collect(),
        scene.cameras[1..].iter().collect(),
        scene.depth_ranges[0],
        PatchSpec::default(),
    )?;

    let seed = 42;
    let mut map = random_init(&ctx, 0, Phase::Photo, seed);
    let acc = relative_accuracy(&map.depth_map(), gt, 0.01, None)?;
    println!("random start: mean cost {:.4}, within 1%: {acc:.4}", map.mean_cost());

    let settings = PhaseSettings {
        iterations: iters,
        seed,
        image_index: 0,
        round: 0,
    };
    let mut report = |p: Progress| {
        let acc = relative_accuracy(&p.map.depth_map(), gt, 0.01, None).unwrap();
        println!("iteration {}: mean cost {:.4}, within 1%: {acc:.4}", p.iteration, p.mean_cost);
    };
    let vis = run_phase(&mut map, &ctx, &CostFunction::Photo, &settings, &mut report)?;

    let (cx, cy) = (w / 2, h / 2);
    let mask = vis.get(cx, cy);
    let visible: Vec<usize> = (0..scene.len() - 1).filter(|&j| mask.is_visible(j)).collect();
    println!(
        "center pixel: depth {:.4} (truth {:.4}), visible sources {visible:?}",
        map.hypothesis(cx, cy).depth,
        gt.get(cx, cy)
    );
    Ok(())
}
