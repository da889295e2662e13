//! Cross-module invariants checked on random inputs.

use proptest::prelude::*;

use voxpix::geometry::{inference_grid, orthographic_project, voxelize, GridSpec, OrthoCamera, PointCloud, Site};
use voxpix::io::{Tensor, TensorData};
use voxpix::mesh::TriMesh;
use voxpix::reconstruct::{marching_cubes, ScalarField};
use voxpix::sdf_oracle::SdfOracle;
use voxpix::sparsegrid::{sparse_conv, ConvMode, ConvWeights, Rulebook, SparseVoxelTensor};
use voxpix::training::huber;
use voxpix::Vec3;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn sites(max: usize, extent: i32) -> impl Strategy<Value = Vec<Site>> {
    prop::collection::btree_set((0..extent, 0..extent, 0..extent).prop_map(|(x, y, z)| [x, y, z]), 1..max)
        .prop_map(|s| s.into_iter().collect())
}

fn weights(ci: usize, co: usize, seed: u64) -> ConvWeights {
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut w = ConvWeights::zeros(ci, co);
    w.weight.iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
    w.bias.iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
    w
}

fn features(n: usize, seed: u64) -> Vec<f64> {
    (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn project_inverts_unproject(angle in 0.0..360.0f64, u in 0.0..64.0f64, v in 0.0..48.0f64, d in 0.1..3.9f64) {
        let cam = OrthoCamera::orbit(Vec3::new(0.1, -0.2, 0.3), angle, 2.0, 0.03, 64, 48, 2.0).unwrap();
        let (pu, pv, pd) = orthographic_project(&cam.unproject(u, v, d), &cam);
        prop_assert!((pu - u).abs() * cam.pixel_size < 1e-9);
        prop_assert!((pv - v).abs() * cam.pixel_size < 1e-9);
        prop_assert!((pd - d).abs() < 1e-9);
    }

    #[test]
    fn voxelize_ignores_point_order(pts in prop::collection::vec(vec3(2.0), 1..200), rot in 0usize..200) {
        let mut shuffled = pts.clone();
        shuffled.reverse();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        let a = voxelize(&PointCloud::new(pts), 0.1, Vec3::zeros()).unwrap();
        let b = voxelize(&PointCloud::new(shuffled), 0.1, Vec3::zeros()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn evenly_divisible_box_gets_exactly_m_cubed(m in 8usize..96, side in 0.25..4.0f64, center in vec3(3.0)) {
        let h = Vec3::repeat(side / 2.0);
        let pc = PointCloud::new(vec![center - h, center + h]);
        let spec = inference_grid(&pc, m, 0.0, 0.0, 0).unwrap();
        prop_assert_eq!(spec.dims, [m; 3]);
    }

    #[test]
    fn random_box_stays_within_cell_budget(m in 32usize..128, ext in (0.5..2.0f64, 0.5..2.0f64, 0.5..2.0f64)) {
        let pc = PointCloud::new(vec![Vec3::zeros(), Vec3::new(ext.0, ext.1, ext.2)]);
        let spec = inference_grid(&pc, m, 0.0, 0.0, 0).unwrap();
        let ratio = spec.len() as f64 / (m as f64).powi(3);
        prop_assert!((ratio - 1.0).abs() <= 0.1, "ratio {}", ratio);
    }

    #[test]
    fn sparse_conv_is_linear(s in sites(40, 5), a in -2.0..2.0f64, b in -2.0..2.0f64, seed in 0u64..1000) {
        let (ci, co) = (2, 3);
        let w = ConvWeights { bias: vec![0.0; co], ..weights(ci, co, seed) };
        let fx = features(s.len() * ci, seed);
        let fy = features(s.len() * ci, seed + 17);
        let x = SparseVoxelTensor::new(s.clone(), fx.clone(), ci, 1).unwrap();
        let y = SparseVoxelTensor::new(s.clone(), fy.clone(), ci, 1).unwrap();
        let mix: Vec<f64> = fx.iter().zip(&fy).map(|(p, q)| a * p + b * q).collect();
        let z = SparseVoxelTensor::new(s.clone(), mix, ci, 1).unwrap();
        for mode in [ConvMode::Submanifold, ConvMode::Strided2] {
            let (cx, cy, cz) = (sparse_conv(&x, &w, mode).unwrap(), sparse_conv(&y, &w, mode).unwrap(), sparse_conv(&z, &w, mode).unwrap());
            for i in 0..cz.features.len() {
                prop_assert!((cz.features[i] - (a * cx.features[i] + b * cy.features[i])).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn strided_then_inverse_restores_fine_sites(s in sites(60, 8), seed in 0u64..1000) {
        let x = SparseVoxelTensor::new(s.clone(), features(s.len() * 2, seed), 2, 1).unwrap();
        let down = sparse_conv(&x, &weights(2, 3, seed), ConvMode::Strided2).unwrap();
        prop_assert_eq!(down.stride, 2);
        let up = sparse_conv(&down, &weights(3, 2, seed + 1), ConvMode::Inverse2 { target: Some(&s) }).unwrap();
        prop_assert_eq!(&up.sites, &s);
        prop_assert_eq!(up.stride, 1);
        let (coarse, _) = Rulebook::strided(&s);
        prop_assert_eq!(down.sites, coarse);
    }

    #[test]
    fn sparse_conv_ignores_site_order(s in sites(40, 6), seed in 0u64..1000) {
        let ci = 2;
        let f = features(s.len() * ci, seed);
        let w = weights(ci, 2, seed);
        let x = SparseVoxelTensor::new(s.clone(), f.clone(), ci, 1).unwrap();
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.reverse();
        let ps: Vec<Site> = order.iter().map(|&i| s[i]).collect();
        let pf: Vec<f64> = order.iter().flat_map(|&i| f[i * ci..(i + 1) * ci].to_vec()).collect();
        let xp = SparseVoxelTensor::new(ps, pf, ci, 1).unwrap();
        let (a, b) = (sparse_conv(&x, &w, ConvMode::Submanifold).unwrap(), sparse_conv(&xp, &w, ConvMode::Submanifold).unwrap());
        let (a, b) = (a.canonicalized(), b.canonicalized());
        prop_assert_eq!(&a.sites, &b.sites);
        for (p, q) in a.features.iter().zip(&b.features) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn unsigned_distance_is_one_lipschitz(p in vec3(1.8), q in vec3(1.8)) {
        let oracle = SdfOracle::new(&TriMesh::icosphere(2)).unwrap();
        let (a, b) = (oracle.signed_distance(&p).abs(), oracle.signed_distance(&q).abs());
        prop_assert!((a - b).abs() <= (p - q).norm() + 1e-9);
    }

    #[test]
    fn marching_cubes_vertices_interpolate_to_zero(c in vec3(0.2), r in 0.3..0.6f64, k in 0.0..0.3f64) {
        let spec = GridSpec::cube(-1.0, 1.0, 20).unwrap();
        let field = ScalarField::from_fn(spec.clone(), |p| (p - c).norm() - r + k * (3.0 * p.x).sin() * p.y).unwrap();
        let mesh = marching_cubes(&field, 0.0).unwrap();
        prop_assert!(!mesh.vertices.is_empty());
        let o = Vec3::from(spec.origin);
        for v in &mesh.vertices {
            let g = (v - o) / spec.spacing - Vec3::repeat(0.5);
            let off: Vec<usize> = (0..3).filter(|&a| (g[a] - g[a].round()).abs() > 1e-9).collect();
            prop_assert!(off.len() <= 1, "vertex {:?} is not on a grid edge", v);
            let axis = off.first().copied().unwrap_or(0);
            let lo = g.map(|x| x.round() as usize);
            let mut lo = [lo.x, lo.y, lo.z];
            lo[axis] = g[axis].floor() as usize;
            let mut hi = lo;
            hi[axis] = (lo[axis] + 1).min(spec.dims[axis] - 1);
            let (fa, fb) = (field.get(lo[0], lo[1], lo[2]), field.get(hi[0], hi[1], hi[2]));
            let t = g[axis] - lo[axis] as f64;
            prop_assert!((fa + t * (fb - fa)).abs() <= 1e-6);
        }
    }

    #[test]
    fn tensors_round_trip_losslessly(dims in prop::collection::vec(1u32..5, 0..4), seed in 0u64..1000, kind in 0usize..4) {
        let n: usize = dims.iter().map(|d| *d as usize).product();
        let raw = features(n, seed);
        let t = match kind {
            0 => Tensor::f32(dims, raw.iter().map(|v| *v as f32).collect()),
            1 => Tensor::f64(dims, raw),
            2 => Tensor::u8(dims, raw.iter().map(|v| ((v + 1.0) * 100.0) as u8).collect()),
            _ => Tensor::i32(dims, raw.iter().map(|v| (v * 1e6) as i32).collect()),
        }
        .unwrap();
        let back = Tensor::from_bytes(&t.to_bytes()).unwrap();
        prop_assert_eq!(&back, &t);
        if let TensorData::F64(v) = &back.data {
            prop_assert_eq!(v.len(), n);
        }
    }

    #[test]
    fn huber_is_even_nonnegative_and_c1(r in -5.0..5.0f64, delta in 0.1..3.0f64) {
        prop_assert!(huber(r, delta) >= 0.0);
        prop_assert_eq!(huber(r, delta), huber(-r, delta));
        let eps = 1e-7;
        let left = (huber(delta, delta) - huber(delta - eps, delta)) / eps;
        let right = (huber(delta + eps, delta) - huber(delta, delta)) / eps;
        prop_assert!((left - right).abs() <= 1e-5);
    }
}
