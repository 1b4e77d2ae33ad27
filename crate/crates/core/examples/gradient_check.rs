//! Compares analytic image-loss gradients of a small random scene against
//! central finite differences, one parameter group at a time.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splat4d::gauss4d::{GaussianPrimitive, GaussianScene, ParamGroup};
use splat4d::geom::{CameraModel, Pose};
use splat4d::image::Image;
use splat4d::raster::render_traced;

fn loss(scene: &GaussianScene, cam: &CameraModel, target: &Image) -> f64 {
    let r = render_traced(scene, 0.3, &Pose::identity(), cam).unwrap();
    r.output.image.data.iter().zip(&target.data).map(|(a, b)| 0.5 * (a - b).powi(2)).sum()
}

fn main() -> splat4d::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let prims = (0..6)
        .map(|_| {
            let pos = Vector3::new(rng.random_range(4.0..8.0), rng.random_range(-1.0..1.0), rng.random_range(-0.8..0.8));
            let mut g = GaussianPrimitive::new(
                pos,
                Vector3::repeat(rng.random_range(-1.2..-0.4)),
                [1.0, 0.1, 0.2, -0.1],
                0.7,
                Vector3::new(0.8, 0.3, 0.2),
                0,
                2,
            );
            g.temporal.position[0] = Vector3::new(0.0, 0.4, 0.0);
            g
        })
        .collect();
    let scene = GaussianScene::new(prims, 0.5, (0.0, 1.0))?;
    let cam = CameraModel::centered(32, 32, 30.0)?;
    let target = Image::filled(32, 32, 3, 0.4);

    let traced = render_traced(&scene, 0.3, &Pose::identity(), &cam)?;
    let d_image = Image::from_data(
        32,
        32,
        3,
        traced.output.image.data.iter().zip(&target.data).map(|(a, b)| a - b).collect(),
    );
    let mut grad = vec![0.0; scene.len() * scene.block_len()];
    traced.backward_into(&scene, &cam, &d_image, None, &mut grad)?;

    let params = scene.params();
    let mut worst: Vec<(ParamGroup, f64)> = Vec::new();
    for k in 0..params.len() {
        let h = 1e-5;
        let mut s = scene.clone();
        let mut p = params.clone();
        p[k] += h;
        s.set_params(&p);
        let up = loss(&s, &cam, &target);
        p[k] -= 2.0 * h;
        s.set_params(&p);
        let down = loss(&s, &cam, &target);
        let fd = (up - down) / (2.0 * h);
        let err = (grad[k] - fd).abs() / (1e-6 + fd.abs());
        let group = ParamGroup::of(k % scene.block_len());
        match worst.iter_mut().find(|(g, _)| *g == group) {
            Some(entry) => entry.1 = entry.1.max(err),
            None => worst.push((group, err)),
        }
    }
    for (group, err) in worst {
        println!("{:>18}: worst relative error {err:.2e}", group.name());
    }
    Ok(())
}
