use approx::assert_relative_eq;
use nalgebra::{Matrix4, Vector3};
use proptest::prelude::*;

use super::*;

fn test_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap()
}

/// View with a single interesting pixel; everything else has no depth.
fn single_pixel_view(u: usize, v: usize, depth: f32, relevancy: f32) -> CameraView {
    let intr = test_intrinsics();
    let mut depth_grid = ImageGrid::constant(intr.width, intr.height, 0.0);
    let mut rel_grid = ImageGrid::constant(intr.width, intr.height, 0.0);
    depth_grid.set(u, v, depth);
    rel_grid.set(u, v, relevancy);
    CameraView {
        intrinsics: intr,
        pose: CameraPose::identity(),
        depth: depth_grid,
        relevancy: rel_grid,
        label: "mug".to_string(),
        view_id: "v0".to_string(),
        timestamp: 0.0,
    }
}

fn one_by_one_view(relevancy: f32, label: &str) -> CameraView {
    CameraView {
        intrinsics: CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 1, 1).unwrap(),
        pose: CameraPose::identity(),
        depth: ImageGrid::constant(1, 1, 1.0),
        relevancy: ImageGrid::constant(1, 1, relevancy),
        label: label.to_string(),
        view_id: "v".to_string(),
        timestamp: 0.0,
    }
}

fn cloud(label: &str, entries: &[([f64; 3], f64)], view_id: &str) -> RelevancyPointCloud {
    RelevancyPointCloud {
        points: entries.iter().map(|(p, _)| Vector3::from(*p)).collect(),
        weights: entries.iter().map(|(_, w)| *w).collect(),
        label: label.to_string(),
        source_view_ids: vec![view_id.to_string()],
    }
}

#[test]
fn unproject_principal_point_ray() {
    let view = single_pixel_view(50, 50, 2.0, 1.0);
    let cloud = unproject(&view, 0.5).unwrap();
    assert_eq!(cloud.len(), 1);
    assert_relative_eq!(cloud.points[0], Vector3::new(0.0, 0.0, 2.0), epsilon = 1e-12);
    assert_eq!(cloud.weights[0], 1.0);
    assert_eq!(cloud.source_view_ids, vec!["v0".to_string()]);
}

#[test]
fn unproject_off_axis_pixel() {
    // x_c = (60 - 50) * 1.0 / 100 = 0.1
    let view = single_pixel_view(60, 50, 1.0, 1.0);
    let cloud = unproject(&view, 0.0).unwrap();
    assert_eq!(cloud.len(), 1);
    assert_relative_eq!(cloud.points[0], Vector3::new(0.1, 0.0, 1.0), epsilon = 1e-12);
}

#[test]
fn unproject_all_invalid_depth_yields_empty_cloud() {
    let intr = test_intrinsics();
    let view = CameraView {
        depth: ImageGrid::constant(intr.width, intr.height, 0.0),
        relevancy: ImageGrid::constant(intr.width, intr.height, 1.0),
        intrinsics: intr,
        pose: CameraPose::identity(),
        label: "mug".into(),
        view_id: "v0".into(),
        timestamp: 0.0,
    };
    assert!(unproject(&view, 0.0).unwrap().is_empty());
}

#[test]
fn unproject_drops_low_relevancy_pixels() {
    let mut view = single_pixel_view(50, 50, 2.0, 0.4);
    view.depth.set(60, 50, 1.0);
    view.relevancy.set(60, 50, 0.9);
    let cloud = unproject(&view, 0.5).unwrap();
    assert_eq!(cloud.len(), 1);
    assert_relative_eq!(cloud.points[0].x, 0.1, epsilon = 1e-12);
}

#[test]
fn unproject_applies_pose() {
    let mut view = single_pixel_view(50, 50, 2.0, 1.0);
    let mut transform = Matrix4::identity();
    transform[(0, 3)] = 1.0;
    transform[(2, 3)] = -3.0;
    view.pose = CameraPose::from_matrix(transform).unwrap();
    let cloud = unproject(&view, 0.0).unwrap();
    assert_relative_eq!(cloud.points[0], Vector3::new(1.0, 0.0, -1.0), epsilon = 1e-12);
}

#[test]
fn unproject_rejects_dimension_mismatch() {
    let mut view = single_pixel_view(50, 50, 2.0, 1.0);
    view.depth = ImageGrid::constant(3, 3, 1.0);
    assert!(matches!(
        unproject(&view, 0.0),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn unproject_rejects_negative_floor() {
    let view = single_pixel_view(50, 50, 2.0, 1.0);
    assert!(unproject(&view, -0.1).is_err());
}

#[test]
fn subtract_self_is_zero() {
    let view = single_pixel_view(50, 50, 2.0, 0.8);
    let diff = subtract_relevancy(&view, &view).unwrap();
    assert!(diff.relevancy.data().iter().all(|r| *r == 0.0));
}

#[test]
fn subtract_direct_value() {
    let a = one_by_one_view(0.8, "mug");
    let b = one_by_one_view(0.3, "mug");
    let diff = subtract_relevancy(&a, &b).unwrap();
    assert_relative_eq!(f64::from(diff.relevancy.get(0, 0)), 0.5, epsilon = 1e-7);
}

#[test]
fn subtract_takes_absolute_value() {
    let a = one_by_one_view(0.3, "mug");
    let b = one_by_one_view(0.9, "mug");
    let diff = subtract_relevancy(&a, &b).unwrap();
    assert_relative_eq!(f64::from(diff.relevancy.get(0, 0)), 0.6, epsilon = 1e-7);
}

#[test]
fn subtract_rejects_mismatched_intrinsics_or_label() {
    let a = one_by_one_view(0.3, "mug");
    let mut b = one_by_one_view(0.9, "mug");
    b.intrinsics = CameraIntrinsics::new(2.0, 2.0, 0.0, 0.0, 1, 1).unwrap();
    assert!(subtract_relevancy(&a, &b).is_err());

    let c = one_by_one_view(0.9, "bowl");
    assert!(subtract_relevancy(&a, &c).is_err());
}

#[test]
fn merge_concatenates_sizes() {
    let a = cloud("mug", &[([0.0; 3], 1.0), ([1.0; 3], 1.0), ([2.0; 3], 1.0)], "a");
    let b = cloud("mug", &[([3.0; 3], 1.0), ([4.0; 3], 1.0)], "b");
    let merged = merge_clouds(&[a, b]).unwrap();
    assert_eq!(merged.len(), 5);
    assert_eq!(merged.source_view_ids, vec!["a".to_string(), "b".to_string()]);
}

#[test]
fn merge_with_empty_is_identity() {
    let c = cloud("mug", &[([1.0, 2.0, 3.0], 0.7)], "a");
    let mut empty = RelevancyPointCloud::empty("mug");
    empty.source_view_ids.clear();
    let merged = merge_clouds(&[c.clone(), empty]).unwrap();
    assert_eq!(merged.points, c.points);
    assert_eq!(merged.weights, c.weights);
}

#[test]
fn merge_preserves_weight_order() {
    let a = cloud("mug", &[([0.0; 3], 1.0), ([0.0; 3], 2.0)], "a");
    let b = cloud("mug", &[([0.0; 3], 3.0)], "b");
    let merged = merge_clouds(&[a, b]).unwrap();
    assert_eq!(merged.weights, vec![1.0, 2.0, 3.0]);
}

#[test]
fn merge_rejects_mixed_labels_and_empty_list() {
    let a = cloud("mug", &[([0.0; 3], 1.0)], "a");
    let b = cloud("bowl", &[([0.0; 3], 1.0)], "b");
    assert!(merge_clouds(&[a, b]).is_err());
    assert!(merge_clouds(&[]).is_err());
}

#[test]
fn localize_singleton() {
    let c = cloud("mug", &[([1.0, 2.0, 3.0], 0.9)], "a");
    let loc = localize(&c, 0.05).unwrap();
    assert_relative_eq!(loc, Vector3::new(1.0, 2.0, 3.0), epsilon = 1e-12);
}

#[test]
fn localize_equal_weights_symmetric_pair() {
    let c = cloud("mug", &[([0.0, 0.0, 0.0], 0.5), ([2.0, 0.0, 0.0], 0.5)], "a");
    let loc = localize(&c, 1.0).unwrap();
    assert_relative_eq!(loc, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
}

#[test]
fn localize_weighted_mean() {
    // (0*1 + 2*3) / 4 = 1.5
    let c = cloud("mug", &[([0.0, 0.0, 0.0], 1.0), ([2.0, 0.0, 0.0], 3.0)], "a");
    let loc = localize(&c, 1.0).unwrap();
    assert_relative_eq!(loc, Vector3::new(1.5, 0.0, 0.0), epsilon = 1e-12);
}

#[test]
fn localize_top_quantile_keeps_strongest_evidence() {
    let mut entries = vec![([10.0, 0.0, 0.0], 1.0)];
    entries.extend(std::iter::repeat(([0.0, 0.0, 0.0], 0.01)).take(99));
    let c = cloud("mug", &entries, "a");
    let loc = localize(&c, 0.05).unwrap();
    assert_relative_eq!(loc, Vector3::new(10.0, 0.0, 0.0), epsilon = 1e-12);
}

#[test]
fn localize_rejects_empty_and_zero_evidence() {
    assert!(localize(&RelevancyPointCloud::empty("mug"), 0.05).is_err());
    let zeros = cloud("mug", &[([1.0; 3], 0.0), ([2.0; 3], 0.0)], "a");
    assert!(localize(&zeros, 0.05).is_err());
    let c = cloud("mug", &[([1.0; 3], 1.0)], "a");
    assert!(localize(&c, 0.0).is_err());
    assert!(localize(&c, 1.1).is_err());
}

#[test]
fn render_axial_sphere_hits_principal_pixel() {
    let scene = SyntheticScene {
        spheres: vec![Sphere {
            label: "mug".into(),
            center: [0.0, 0.0, 2.0],
            radius: 0.25,
        }],
        ground_plane_z: -10.0,
    };
    let intr = test_intrinsics();
    let view =
        render_synthetic_view(&scene, &intr, &CameraPose::identity(), "mug", 0.0, 0).unwrap();
    assert_eq!(view.relevancy.get(50, 50), 1.0);
    assert_relative_eq!(f64::from(view.depth.get(50, 50)), 1.75, epsilon = 1e-6);
}

#[test]
fn render_absent_label_no_noise_is_all_zero_relevancy() {
    let scene = SyntheticScene {
        spheres: vec![Sphere {
            label: "mug".into(),
            center: [0.0, 0.0, 2.0],
            radius: 0.25,
        }],
        ground_plane_z: -10.0,
    };
    let intr = test_intrinsics();
    let view =
        render_synthetic_view(&scene, &intr, &CameraPose::identity(), "bowl", 0.0, 0).unwrap();
    assert!(view.relevancy.data().iter().all(|r| *r == 0.0));
}

#[test]
fn render_is_bit_identical_for_same_seed() {
    let scene = SyntheticScene {
        spheres: vec![Sphere {
            label: "mug".into(),
            center: [0.3, -0.2, 2.0],
            radius: 0.3,
        }],
        ground_plane_z: -1.0,
    };
    let intr = test_intrinsics();
    let a = render_synthetic_view(&scene, &intr, &CameraPose::identity(), "mug", 0.2, 7).unwrap();
    let b = render_synthetic_view(&scene, &intr, &CameraPose::identity(), "mug", 0.2, 7).unwrap();
    assert_eq!(a.relevancy.data(), b.relevancy.data());
    assert_eq!(a.depth.data(), b.depth.data());
    let c = render_synthetic_view(&scene, &intr, &CameraPose::identity(), "mug", 0.2, 8).unwrap();
    assert_ne!(a.relevancy.data(), c.relevancy.data());
}

#[test]
fn render_unproject_localize_recovers_sphere_center() {
    let radius = 0.25;
    let center = Vector3::new(0.4, 0.1, 1.8);
    let scene = SyntheticScene {
        spheres: vec![Sphere {
            label: "mug".into(),
            center: [center.x, center.y, center.z],
            radius,
        }],
        ground_plane_z: -2.0,
    };
    let intr = test_intrinsics();
    let view =
        render_synthetic_view(&scene, &intr, &CameraPose::identity(), "mug", 0.05, 3).unwrap();
    let floor = f64::from(view.relevancy.max_value()) * 0.5;
    let cloud = unproject(&view, floor).unwrap();
    let loc = localize(&cloud, 0.05).unwrap();
    assert!(
        (loc - center).norm() < radius,
        "localized {loc:?} too far from {center:?}"
    );
}

#[test]
fn localize_observation_merges_views_and_subtracts_pairs() {
    let radius = 0.25;
    let center = Vector3::new(0.0, 0.0, 1.0);
    let scene = SyntheticScene {
        spheres: vec![Sphere {
            label: "mug".into(),
            center: [0.0, 0.0, 1.0],
            radius,
        }],
        ground_plane_z: -2.0,
    };
    let intr = test_intrinsics();
    let eye_a = Vector3::new(0.0, 0.0, -1.0);
    let eye_b = Vector3::new(1.5, 0.3, 1.0);
    let pose_a = CameraPose::look_at(eye_a, center, Vector3::new(0.0, 0.0, 1.0)).unwrap();
    let pose_b = CameraPose::look_at(eye_b, center, Vector3::new(0.0, 0.0, 1.0)).unwrap();

    let mut view_a = render_synthetic_view(&scene, &intr, &pose_a, "mug", 0.0, 1).unwrap();
    view_a.view_id = "a".into();
    view_a.timestamp = 5.0;
    let mut view_b = render_synthetic_view(&scene, &intr, &pose_b, "mug", 0.0, 2).unwrap();
    view_b.view_id = "b".into();
    view_b.timestamp = 7.0;
    // Reference view for subtraction: same camera as A, object absent.
    let empty_scene = SyntheticScene {
        spheres: vec![],
        ground_plane_z: -2.0,
    };
    let mut view_ref = render_synthetic_view(&empty_scene, &intr, &pose_a, "mug", 0.0, 3).unwrap();
    view_ref.view_id = "ref".into();
    view_ref.timestamp = 4.0;

    let views = vec![
        ObservationView {
            view: view_a,
            subtract: Some("ref".into()),
        },
        ObservationView {
            view: view_b,
            subtract: None,
        },
        ObservationView {
            view: view_ref,
            subtract: None,
        },
    ];
    let obs = localize_observation(&views, 0.5, 0.05).unwrap();
    assert!((obs.location - center).norm() < radius);
    assert_eq!(obs.timestamp, 7.0);
    assert_eq!(obs.source_view_ids, vec!["a".to_string(), "b".to_string()]);
}

#[test]
fn view_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scene = SyntheticScene {
        spheres: vec![Sphere {
            label: "mug".into(),
            center: [0.0, 0.0, 2.0],
            radius: 0.25,
        }],
        ground_plane_z: -1.0,
    };
    let intr = CameraIntrinsics::new(40.0, 40.0, 20.0, 20.0, 41, 41).unwrap();
    let mut view =
        render_synthetic_view(&scene, &intr, &CameraPose::identity(), "mug", 0.1, 11).unwrap();
    view.view_id = "v7".into();
    view.timestamp = 12.5;

    write_view(dir.path(), &view).unwrap();
    let loaded = read_view(dir.path(), "v7").unwrap();
    assert_eq!(loaded.view.depth.data(), view.depth.data());
    assert_eq!(loaded.view.relevancy.data(), view.relevancy.data());
    assert_eq!(loaded.view.label, "mug");
    assert_eq!(loaded.view.timestamp, 12.5);
    assert_eq!(loaded.view.pose.to_row_major(), view.pose.to_row_major());
    assert!(loaded.subtract.is_none());

    assert_eq!(list_view_ids(dir.path()).unwrap(), vec!["v7".to_string()]);
}

#[test]
fn truncated_grid_file_error_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let intr = CameraIntrinsics::new(4.0, 4.0, 2.0, 2.0, 4, 4).unwrap();
    let view = CameraView {
        intrinsics: intr,
        pose: CameraPose::identity(),
        depth: ImageGrid::constant(4, 4, 1.0),
        relevancy: ImageGrid::constant(4, 4, 1.0),
        label: "mug".into(),
        view_id: "v0".into(),
        timestamp: 0.0,
    };
    write_view(dir.path(), &view).unwrap();
    std::fs::write(dir.path().join("depth_v0.f32"), [0u8; 12]).unwrap();
    let err = read_view(dir.path(), "v0").unwrap_err();
    assert!(err.to_string().contains("depth_v0.f32"), "error was: {err}");
}

#[test]
fn pose_rejects_non_rigid_matrices() {
    let mut scaled = Matrix4::identity();
    scaled[(0, 0)] = 2.0;
    assert!(CameraPose::from_matrix(scaled).is_err());

    let mut sheared = Matrix4::identity();
    sheared[(3, 0)] = 0.5;
    assert!(CameraPose::from_matrix(sheared).is_err());
}

#[test]
fn intrinsics_invariants_enforced() {
    assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 2, 2).is_err());
    assert!(CameraIntrinsics::new(1.0, 1.0, 2.0, 0.0, 2, 2).is_err());
    assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, -0.5, 2, 2).is_err());
}

fn arb_pose() -> impl Strategy<Value = CameraPose> {
    (
        -3.0..3.0f64,
        -3.0..3.0f64,
        -3.0..3.0f64,
        -1.0..1.0f64,
        -1.0..1.0f64,
        -1.0..1.0f64,
    )
        .prop_filter_map("eye too close to target", |(ex, ey, ez, tx, ty, tz)| {
            let eye = Vector3::new(ex, ey, ez);
            let target = Vector3::new(tx + 10.0, ty, tz);
            CameraPose::look_at(eye, target, Vector3::new(0.0, 0.0, 1.0)).ok()
        })
}

proptest! {
    /// Projecting the unprojected world point reproduces (u, v, depth).
    #[test]
    fn unproject_project_round_trip(
        pose in arb_pose(),
        u in 0usize..101,
        v in 0usize..101,
        depth in 0.1f32..50.0,
    ) {
        let mut view = single_pixel_view(u, v, depth, 1.0);
        view.pose = pose;
        let cloud = unproject(&view, 0.0).unwrap();
        prop_assert_eq!(cloud.len(), 1);
        let (pu, pv, pd) = project(&cloud.points[0], &view.intrinsics, &view.pose).unwrap();
        prop_assert!((pu - u as f64).abs() < 1e-6);
        prop_assert!((pv - v as f64).abs() < 1e-6);
        prop_assert!((pd - f64::from(depth)).abs() < 1e-6);
    }

    /// |a - b| is symmetric in its arguments.
    #[test]
    fn subtract_relevancy_is_symmetric(
        a in proptest::collection::vec(0.0f32..5.0, 9),
        b in proptest::collection::vec(0.0f32..5.0, 9),
    ) {
        let intr = CameraIntrinsics::new(3.0, 3.0, 1.0, 1.0, 3, 3).unwrap();
        let mk = |data: Vec<f32>| CameraView {
            intrinsics: intr.clone(),
            pose: CameraPose::identity(),
            depth: ImageGrid::constant(3, 3, 1.0),
            relevancy: ImageGrid::new(3, 3, data).unwrap(),
            label: "mug".into(),
            view_id: "v".into(),
            timestamp: 0.0,
        };
        let va = mk(a);
        let vb = mk(b);
        let ab = subtract_relevancy(&va, &vb).unwrap();
        let ba = subtract_relevancy(&vb, &va).unwrap();
        prop_assert_eq!(ab.relevancy.data(), ba.relevancy.data());
    }

    /// Merging is associative on the multiset of (point, weight) pairs.
    #[test]
    fn merge_is_associative_in_content(
        a in proptest::collection::vec((-5.0f64..5.0, 0.0f64..2.0), 0..4),
        b in proptest::collection::vec((-5.0f64..5.0, 0.0f64..2.0), 0..4),
        c in proptest::collection::vec((-5.0f64..5.0, 0.0f64..2.0), 1..4),
    ) {
        let mk = |entries: &[(f64, f64)], id: &str| RelevancyPointCloud {
            points: entries.iter().map(|(p, _)| Vector3::new(*p, 0.0, 0.0)).collect(),
            weights: entries.iter().map(|(_, w)| *w).collect(),
            label: "mug".into(),
            source_view_ids: vec![id.to_string()],
        };
        let (ca, cb, cc) = (mk(&a, "a"), mk(&b, "b"), mk(&c, "c"));
        let left = merge_clouds(&[merge_clouds(&[ca.clone(), cb.clone()]).unwrap(), cc.clone()]).unwrap();
        let right = merge_clouds(&[ca, merge_clouds(&[cb, cc]).unwrap()]).unwrap();
        prop_assert_eq!(left.points, right.points);
        prop_assert_eq!(left.weights, right.weights);
    }

    /// The localized point lies inside the bounding box of selected points.
    #[test]
    fn localize_stays_in_bounding_box(
        entries in proptest::collection::vec(
            ((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 0.01f64..3.0),
            1..20,
        ),
        quantile in 0.05f64..1.0,
    ) {
        let c = RelevancyPointCloud {
            points: entries.iter().map(|((x, y, z), _)| Vector3::new(*x, *y, *z)).collect(),
            weights: entries.iter().map(|(_, w)| *w).collect(),
            label: "mug".into(),
            source_view_ids: vec![],
        };
        let loc = localize(&c, quantile).unwrap();
        for axis in 0..3 {
            let lo = c.points.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
            let hi = c.points.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(loc[axis] >= lo - 1e-9 && loc[axis] <= hi + 1e-9);
        }
    }
}
