//! Plane-induced homographies between two calibrated views.
//!
//! Picks a slanted plane hypothesis at one reference pixel, warps a few
//! reference pixels into the source image with the homography and compares
//! against unprojecting onto the plane and projecting directly.
//!
//! ```text
//! cargo run --release --example plane_homography
//! ```

use nalgebra::{Vector2, Vector3};
use planar_mvs::geometry::{
    apply_homography, homography_from_hypothesis, ray_plane_depth, unproject, CameraModel, PlaneHypothesis,
};

fn main() -> planar_mvs::Result<()> {
    let (w, h) = (320, 240);
    let f = 280.0;
    let target = Vector3::new(0.0, 0.0, 3.0);
    let down = Vector3::y();
    let cam_ref = CameraModel::look_at(f, f, 159.5, 119.5, Vector3::zeros(), target, down, w, h)?;
    let cam_src = CameraModel::look_at(f, f, 159.5, 119.5, Vector3::new(0.3, 0.05, 0.0), target, down, w, h)?;

    let anchor = Vector2::new(120.0, 90.0);
    let theta = PlaneHypothesis::new(2.8, Vector3::new(0.3, -0.1, -1.0).normalize());
    let plane = theta.to_plane(anchor, &cam_ref);
    let hom = homography_from_hypothesis(&theta, anchor, &cam_ref, &cam_src)?;
    println!("hypothesis: depth {} at {:?}, normal {:?}", theta.depth, anchor.as_slice(), theta.normal.as_slice());

    println!("{:>14} {:>9} {:>24} {:>10}", "ref pixel", "depth", "source pixel", "|diff| px");
    for (x, y) in [(120.0, 90.0), (100.0, 100.0), (200.0, 60.0), (30.0, 220.0)] {
        let p = Vector2::new(x, y);
        let depth = ray_plane_depth(p, &plane, &cam_ref)?;
        let world = cam_ref.camera_to_world(&unproject(p, depth, &cam_ref)?);
        let direct = cam_src.project(&cam_src.world_to_camera(&world)).expect("in front of the source");
        let warped = apply_homography(&hom, p).expect("in front of the source");
        println!(
            "{:>14} {depth:>9.4} {:>24} {:>10.2e}",
            format!("({x}, {y})"),
            format!("({:.3}, {:.3})", warped.x, warped.y),
            (warped - direct).norm()
        );
    }
    Ok(())
}
