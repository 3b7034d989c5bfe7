use nalgebra::UnitQuaternion;
use proptest::prelude::*;
use quadfault::dynamics::{RobotModel, RobotState};
use quadfault::terrain::{
    heightmap_point, sample_heightmap, TerrainField, MAP_LEN, MAP_SIDE, MAP_SPACING, NOISE_LATTICE,
};
use rand::{Rng, SeedableRng};

#[test]
fn flat_is_zero() {
    let t = TerrainField::flat();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1000 {
        assert_eq!(t.height(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)), 0.0);
    }
}

#[test]
fn smooth_slope_is_linear() {
    let t = TerrainField::smooth_slope(0.1);
    assert!((t.height(2.0, 0.0) - 0.2).abs() < 1e-15);
    assert!((t.height(2.0, -7.3) - 0.2).abs() < 1e-15);
}

#[test]
fn rough_noise_bounded_by_amplitude() {
    let t = TerrainField::rough_slope(0.15, 0.03, 99);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut max_dev = 0.0f64;
    for _ in 0..100_000 {
        let (x, y) = (rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
        let dev = (t.height(x, y) - 0.15 * x).abs();
        assert!(dev <= 0.03 + 1e-12);
        max_dev = max_dev.max(dev);
    }
    // the noise actually uses most of its range
    assert!(max_dev > 0.02);
}

#[test]
fn discrete_heights_are_step_multiples_and_spawn_is_flat() {
    let t = TerrainField::discrete(0.075, 5);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let mut raised = 0;
    for _ in 0..20_000 {
        let (x, y) = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let h = t.height(x, y);
        let k = h / 0.075;
        assert!(k == 0.0 || k == 1.0, "h = {h}");
        raised += (k == 1.0) as usize;
        assert!(h.abs() <= t.max_elevation());
    }
    assert!(raised > 5000 && raised < 15_000);
    for (x, y) in [(0.0, 0.0), (0.45, -0.45), (-0.49, 0.3)] {
        assert_eq!(t.height(x, y), 0.0);
    }
}

#[test]
fn same_seed_same_field() {
    let a = TerrainField::rough_slope(0.1, 0.04, 17);
    let b = TerrainField::rough_slope(0.1, 0.04, 17);
    let c = TerrainField::rough_slope(0.1, 0.04, 18);
    let mut differs = false;
    for k in 0..500 {
        let (x, y) = (k as f64 * 0.173 - 40.0, k as f64 * -0.091 + 9.0);
        assert_eq!(a.height(x, y).to_bits(), b.height(x, y).to_bits());
        differs |= a.height(x, y) != c.height(x, y);
    }
    assert!(differs);
}

#[test]
fn heightmap_flat_offsets_base_height() {
    let m = RobotModel::default();
    let s = RobotState::standing(&m, 1.0, 2.0, 0.3);
    let map = sample_heightmap(&TerrainField::flat(), &s);
    assert_eq!(map.len(), MAP_LEN);
    assert!(map.iter().all(|&h| (h + 0.3).abs() < 1e-15));
}

#[test]
fn yawed_heightmap_sees_slope_laterally() {
    let m = RobotModel::default();
    let t = TerrainField::smooth_slope(0.2);
    let mut s = RobotState::standing(&m, 3.0, -1.0, 1.0);
    let q = UnitQuaternion::from_euler_angles(0.0, 0.0, std::f64::consts::FRAC_PI_2);
    s.base_quat = [q.w, q.i, q.j, q.k];
    let map = sample_heightmap(&t, &s);
    for i in 0..MAP_SIDE {
        for j in 0..MAP_SIDE {
            // direct evaluation: forward is world +y, left is world −x
            let fwd = (i as f64 - 5.0) * MAP_SPACING;
            let left = (j as f64 - 5.0) * MAP_SPACING;
            let (x, y) = (3.0 - left, -1.0 + fwd);
            let expected = 0.2 * x - 1.0;
            assert!((map[i * MAP_SIDE + j] - expected).abs() < 1e-12);
            let (px, py) = heightmap_point(3.0, -1.0, std::f64::consts::FRAC_PI_2, i, j);
            assert!((px - x).abs() < 1e-12 && (py - y).abs() < 1e-12);
        }
        // no variation along the heading
        assert!((map[i * MAP_SIDE + 3] - map[3]).abs() < 1e-12);
    }
    // gradient along the lateral axis
    assert!((map[1] - map[0] + 0.2 * MAP_SPACING).abs() < 1e-12);
    assert_eq!(map, sample_heightmap(&t, &s));
}

proptest! {
    #[test]
    fn rough_slope_is_lipschitz(x in -30.0f64..30.0, y in -30.0f64..30.0, dx in -0.05f64..0.05, dy in -0.05f64..0.05, seed in 0u64..50) {
        let t = TerrainField::rough_slope(0.2, 0.05, seed);
        // slope plus bilinear noise: |∇| ≤ slope + 2·amp/lattice per axis
        let lip = 0.2 + 2.0 * 2.0 * 0.05 / NOISE_LATTICE;
        let d = (dx * dx + dy * dy).sqrt();
        prop_assert!((t.height(x + dx, y + dy) - t.height(x, y)).abs() <= lip * d + 1e-12);
    }

    #[test]
    fn heights_are_bounded(x in -1e4f64..1e4, y in -1e4f64..1e4, seed in 0u64..50) {
        for t in [TerrainField::smooth_slope(0.2), TerrainField::rough_slope(0.2, 0.05, seed), TerrainField::discrete(0.1, seed)] {
            prop_assert!(t.height(x, y).abs() <= t.max_elevation() + 1e-12);
        }
    }
}
