mod common;

use common::*;
use nalgebra::Vector3;
use proptest::prelude::*;
use splat4d::geom::{CameraModel, Pose};
use splat4d::raster::splat_forward;

#[test]
fn tiled_render_matches_sequential_blender() {
    for seed in 0..12 {
        let mut r = rng(seed);
        let scene = random_scene(&mut r, 20, seed % 2 == 1);
        // 40×24 leaves partial tiles on both axes
        let cam = CameraModel::centered(40, 24, 25.0).unwrap();
        let pose = Pose::from_yaw(0.05 * seed as f64 - 0.3, Vector3::new(0.2, -0.1, 0.0));
        let t = (seed as f64 * 0.37) % 1.0;
        let fast = splat_forward(&scene, t, &pose, &cam).unwrap();
        let slow = reference_render(&scene, t, &pose, &cam);
        assert!(render_diff(&fast, &slow) < 1e-9, "seed {seed}");
        assert_eq!(
            fast.agent_weights.keys().collect::<Vec<_>>(),
            slow.agent_weights.keys().collect::<Vec<_>>()
        );
    }
}

#[test]
fn output_is_independent_of_thread_count() {
    let mut r = rng(5);
    let scene = random_scene(&mut r, 20, false);
    let cam = camera32();
    let render = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| splat_forward(&scene, 0.3, &Pose::identity(), &cam).unwrap())
    };
    let a = render(1);
    let b = render(4);
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn render_values_are_bounded(seed in 0u64..10_000, t in 0.0f64..1.0) {
        let mut r = rng(seed);
        let scene = random_scene(&mut r, 12, false);
        let cam = camera32();
        let out = splat_forward(&scene, t, &Pose::identity(), &cam).unwrap();
        for (k, a) in out.alpha.data.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(a));
            let rgb = &out.image.data[3 * k..3 * k + 3];
            prop_assert!(rgb.iter().all(|c| *c >= 0.0 && *c <= *a + 1e-12));
            let z = out.depth.data[k];
            prop_assert!(z == 0.0 || z > cam.near_clip);
            let agents: f64 = out.agent_weights.values().map(|m| m.data[k]).sum();
            prop_assert!(agents <= *a + 1e-12);
        }
    }

    #[test]
    fn sequential_blender_agrees(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let scene = random_scene(&mut r, 8, true);
        let cam = CameraModel::centered(20, 18, 16.0).unwrap();
        let fast = splat_forward(&scene, 0.5, &Pose::identity(), &cam).unwrap();
        let slow = reference_render(&scene, 0.5, &Pose::identity(), &cam);
        prop_assert!(render_diff(&fast, &slow) < 1e-9);
    }
}
