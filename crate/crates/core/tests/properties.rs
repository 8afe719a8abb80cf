use std::sync::OnceLock;

use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use planar_mvs::dataset::{render_synthetic_scene, DepthMap, NormalMap, SceneDataset, SceneSpec};
use planar_mvs::eval::{cloud_metrics, depth_metrics};
use planar_mvs::fusion::{fuse, read_ply, write_ply, FusionParams, PointCloud, ViewMaps};
use planar_mvs::geomcons::c_geo;
use planar_mvs::geometry::{normal_angle, PlaneHypothesis};
use planar_mvs::patchmatch::{refine_pixel, update_pixel, CostFunction, HypothesisMap, ViewContext};
use planar_mvs::photometric::{c_photo, view_selection, CostTable, PatchSpec, ViewSelectionParams, ViewWeights, VisibilityMask};
use planar_mvs::prior::{limit_density, prior_probability, select_credible, PlanePrior, PriorParams};

fn facing(x: f64, y: f64) -> Vector3<f64> {
    Vector3::new(x, y, -1.0).normalize()
}

fn params() -> PriorParams {
    PriorParams {
        alpha: 0.18,
        gamma: 0.5,
        lambda_d: 0.05,
        lambda_n: 5f64.to_radians(),
    }
}

fn fronto_scene() -> &'static SceneDataset {
    static SCENE: OnceLock<SceneDataset> = OnceLock::new();
    SCENE.get_or_init(|| render_synthetic_scene(&SceneSpec::fronto_plane(48, 36, 3, 3.0), 1).unwrap())
}

fn weights_from(w: Vec<f64>) -> ViewWeights {
    let n = w.len();
    ViewWeights {
        weights: w,
        visibility: VisibilityMask::all(n),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn c_photo_is_monotone_in_each_cost(
        w in proptest::collection::vec(0.01f64..1.0, 1..8),
        seed_costs in proptest::collection::vec(0.0f64..2.0, 8),
        k in 0usize..8,
        bump in 0.0f64..1.0,
    ) {
        let n = w.len();
        let costs: Vec<f64> = seed_costs[..n].to_vec();
        let mut higher = costs.clone();
        higher[k % n] += bump;
        let weights = weights_from(w);
        prop_assert!(c_photo(&weights, &higher).unwrap() >= c_photo(&weights, &costs).unwrap() - 1e-15);
    }

    #[test]
    fn duplicate_sources_get_equal_weights(
        rows in proptest::collection::vec(proptest::collection::vec(0.0f64..2.0, 3), 1..9),
        vis in proptest::collection::vec(0u32..8, 0..5),
    ) {
        // Append a copy of source 1 as source 3.
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|mut r| { r.push(r[1]); r }).collect();
        let neighbor: Vec<VisibilityMask> = vis
            .iter()
            .map(|&m| VisibilityMask(m | if m & 2 != 0 { 8 } else { 0 }))
            .collect();
        let w = view_selection(&CostTable::from_rows(&rows), &neighbor, &ViewSelectionParams::default());
        prop_assert_eq!(w.weights[1], w.weights[3]);
        prop_assert!(w.weights.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn prior_probability_is_bounded_and_symmetric(
        d1 in 0.5f64..10.0, d2 in 0.5f64..10.0,
        a in -0.8f64..0.8, b in -0.8f64..0.8, c in -0.8f64..0.8, e in -0.8f64..0.8,
    ) {
        let p = params();
        let (n1, n2) = (facing(a, b), facing(c, e));
        let forward = prior_probability(&PlaneHypothesis::new(d1, n1), &PlanePrior { depth: d2, normal: n2 }, &p);
        let backward = prior_probability(&PlaneHypothesis::new(d2, n2), &PlanePrior { depth: d1, normal: n1 }, &p);
        prop_assert!(forward >= p.gamma && forward <= 1.0 + p.gamma);
        prop_assert!((forward - backward).abs() < 1e-12);
        prop_assert!((normal_angle(&n1, &n2) - normal_angle(&n2, &n1)).abs() < 1e-15);
    }

    #[test]
    fn geometric_cost_dominates_and_truncates(
        rows in proptest::collection::vec((0.01f64..1.0, 0.0f64..2.0, 0.0f64..20.0, 5.0f64..1e6), 1..8),
        lambda in 0.0f64..1.0,
    ) {
        let tau = 5.0;
        let weights = weights_from(rows.iter().map(|r| r.0).collect());
        let costs: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let errors: Vec<f64> = rows.iter().map(|r| r.2).collect();
        // Every error at or above the cap is replaced by a different one above it.
        let moved: Vec<f64> = rows.iter().map(|r| if r.2 >= tau { r.3 } else { r.2 }).collect();
        let g = c_geo(&weights, &costs, &errors, lambda, tau).unwrap();
        prop_assert!(g >= c_photo(&weights, &costs).unwrap() - 1e-12);
        prop_assert_eq!(g, c_geo(&weights, &costs, &moved, lambda, tau).unwrap());
    }

    #[test]
    fn credible_selection_is_stable(
        costs in proptest::collection::vec(0.0f64..0.3, 24 * 18),
        eps in 0.01f64..0.3,
    ) {
        let (w, h) = (24, 18);
        let hyps = vec![PlaneHypothesis::fronto(2.0); w * h];
        let map = HypothesisMap::new(w, h, hyps.clone(), costs.clone()).unwrap();
        let set = select_credible(&map, eps).unwrap();
        prop_assert_eq!(set.len(), costs.iter().filter(|&&c| c < eps).count());
        prop_assert!(set.iter().all(|e| e.cost < eps));

        // A map holding only the credible costs selects the same set again.
        let mut kept = vec![1.0; w * h];
        for e in &set {
            kept[e.pixel.1 * w + e.pixel.0] = e.cost;
        }
        let again = select_credible(&HypothesisMap::new(w, h, hyps, kept).unwrap(), eps).unwrap();
        prop_assert_eq!(&again, &set);

        let thin = limit_density(set, w, h);
        prop_assert!(thin.len() * 4 <= w * h || thin.len() <= w.div_ceil(2) * h.div_ceil(2));
        prop_assert_eq!(limit_density(thin.clone(), w, h), thin);
    }

    #[test]
    fn depth_fractions_grow_with_threshold(
        pairs in proptest::collection::vec((0.0f32..5.0, 0.1f32..5.0), 1..200),
        t1 in 0.0f64..1.0, dt in 0.0f64..1.0,
    ) {
        let n = pairs.len();
        let est = DepthMap { width: n, height: 1, values: pairs.iter().map(|p| p.0).collect() };
        let gt = DepthMap { width: n, height: 1, values: pairs.iter().map(|p| p.1).collect() };
        let m = depth_metrics(&est, &gt, &[t1, t1 + dt]).unwrap();
        prop_assert!(m.fractions[0] <= m.fractions[1]);
    }

    #[test]
    fn cloud_accuracy_is_swapped_completeness(
        a in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 1..60),
        b in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 1..60),
        tau in 0.01f64..0.5,
    ) {
        let cloud = |pts: &[(f64, f64, f64)]| PointCloud {
            positions: pts.iter().map(|p| Vector3::new(p.0, p.1, p.2)).collect(),
            normals: vec![Vector3::z(); pts.len()],
            colors: None,
        };
        let (ca, cb) = (cloud(&a), cloud(&b));
        let ab = cloud_metrics(&ca, &cb, tau).unwrap();
        let ba = cloud_metrics(&cb, &ca, tau).unwrap();
        prop_assert_eq!(ab.accuracy, ba.completeness);
        prop_assert_eq!(ab.completeness, ba.accuracy);
    }

    #[test]
    fn ply_round_trip(
        pts in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, 0.0f64..1e3, -1.0f64..1.0, -1.0f64..1.0, any::<[u8; 3]>()), 0..50),
        with_color in any::<bool>(),
    ) {
        let cloud = PointCloud {
            positions: pts.iter().map(|p| Vector3::new(p.0, p.1, p.2)).collect(),
            normals: pts.iter().map(|p| facing(p.3, p.4)).collect(),
            colors: with_color.then(|| pts.iter().map(|p| p.5).collect()),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        write_ply(&path, &cloud).unwrap();
        let back = read_ply(&path).unwrap();
        prop_assert_eq!(back.len(), cloud.len());
        for (p, q) in cloud.positions.iter().zip(&back.positions) {
            prop_assert!((p - q).norm() <= 1e-4 * p.norm().max(1.0));
        }
        for (p, q) in cloud.normals.iter().zip(&back.normals) {
            prop_assert!((p - q).norm() <= 1e-6);
        }
        if with_color {
            prop_assert_eq!(back.colors, cloud.colors);
        }
    }

    #[test]
    fn normal_map_round_trip(w in 1usize..10, h in 1usize..10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = NormalMap::new(w, h);
        for y in 0..h {
            for x in 0..w {
                map.set(x, y, &planar_mvs::patchmatch::random_normal(&mut rng, &Vector3::new(0.0, 0.0, 1.0)));
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nmap");
        map.save(&path).unwrap();
        prop_assert_eq!(NormalMap::load(&path).unwrap(), map);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refinement_never_raises_the_cost(
        x in 6usize..42, y in 6usize..30,
        d in 2.0f64..4.5, a in -0.5f64..0.5, b in -0.5f64..0.5,
        seed in any::<u64>(), iteration in 0usize..4,
    ) {
        let scene = fronto_scene();
        let ctx = ViewContext::new(
            &scene.images[0],
            &scene.cameras[0],
            scene.images[1..].iter().collect(),
            scene.cameras[1..].iter().collect(),
            scene.depth_ranges[0],
            PatchSpec::default(),
        ).unwrap();
        let theta = PlaneHypothesis::new(d, facing(a, b));
        let update = update_pixel(&ctx, (x, y), &[theta], &[], &CostFunction::Photo);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (refined, cost) = refine_pixel(&ctx, (x, y), &update.theta, update.cost, &update.weights, &CostFunction::Photo, &mut rng, iteration);
        prop_assert!(cost <= update.cost);
        if cost == update.cost {
            prop_assert_eq!(refined, update.theta);
        }
    }

    #[test]
    fn fused_cloud_is_well_formed(drop in proptest::collection::vec(any::<bool>(), 3 * 48 * 36), noise_seed in any::<u64>()) {
        let scene = fronto_scene();
        let gt = scene.gt_depth.as_ref().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let mut depths = Vec::new();
        let mut normals = Vec::new();
        for (v, cam) in scene.cameras.iter().enumerate() {
            let mut d = gt[v].clone();
            let mut n = NormalMap::new(cam.width, cam.height);
            for i in 0..d.values.len() {
                if drop[v * d.values.len() + i] {
                    d.values[i] = 0.0;
                }
                let jitter = planar_mvs::patchmatch::perturb_normal(&mut rng, &(cam.rotation * Vector3::new(0.0, 0.0, -1.0)), &Vector3::new(0.0, 0.0, 1.0), 0.05);
                n.set(i % cam.width, i / cam.width, &jitter);
            }
            depths.push(d);
            normals.push(n);
        }
        let views: Vec<ViewMaps> = (0..3).map(|v| ViewMaps { depth: &depths[v], normals: &normals[v], cam: &scene.cameras[v] }).collect();
        let cloud = fuse(&views, scene.colors.as_deref(), &FusionParams::default()).unwrap();
        let valid: usize = depths.iter().map(|d| d.valid_count()).sum();
        prop_assert!(cloud.len() <= valid);
        prop_assert!(cloud.normals.iter().all(|n| (n.norm() - 1.0).abs() < 1e-9));
        prop_assert_eq!(cloud.colors.as_ref().map(Vec::len), scene.colors.as_ref().map(|_| cloud.len()));
    }
}
