//! Voxel map queries, plane fits and downsampling against brute force.

mod common;

use std::collections::HashSet;

use ctlo::map::{fit_plane, query_neighbors, voxel_downsample, voxel_key, SearchMode, VoxelMap};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn random_map(rng: &mut impl Rng, mode: SearchMode) -> VoxelMap {
    let mut map = VoxelMap::new(0.5, 20, mode);
    for _ in 0..20_000 {
        map.insert_point(Vector3::from_fn(|_, _| rng.random_range(-4.0..4.0)));
    }
    map
}

fn brute_force(map: &VoxelMap, q: &Vector3<f64>, k: usize) -> Vec<f64> {
    let mut d: Vec<f64> = map
        .search_keys(q)
        .filter_map(|key| map.voxel(&key))
        .flatten()
        .map(|p| (p - q).norm())
        .collect();
    d.sort_by(f64::total_cmp);
    d.truncate(k);
    d
}

#[test]
fn knn_matches_brute_force_over_searched_voxels() {
    for mode in [SearchMode::Faces7, SearchMode::Block27] {
        let mut rng = common::rng(21);
        let map = random_map(&mut rng, mode);
        for _ in 0..1000 {
            let q = Vector3::from_fn(|_, _| rng.random_range(-4.5..4.5));
            let k = rng.random_range(1..12);
            let got: Vec<f64> = query_neighbors(&map, &q, k).iter().map(|p| (p - q).norm()).collect();
            assert_eq!(got, brute_force(&map, &q, k), "{mode:?} query {q:?}");
        }
    }
}

#[test]
fn searched_voxels_match_the_mode() {
    let map = VoxelMap::new(1.0, 5, SearchMode::Faces7);
    let q = Vector3::new(0.5, 0.5, 0.5);
    let keys: HashSet<_> = map.search_keys(&q).collect();
    assert_eq!(keys.len(), 7);
    for k in &keys {
        let manhattan: i64 = k.iter().map(|c| c.abs()).sum();
        assert!(manhattan <= 1, "{k:?}");
    }
    let map = VoxelMap::new(1.0, 5, SearchMode::Block27);
    assert_eq!(map.search_keys(&q).collect::<HashSet<_>>().len(), 27);
}

#[test]
fn noisy_plane_normal_within_two_degrees() {
    let mut rng = common::rng(22);
    let noise = Normal::new(0.0, 0.01).unwrap();
    for _ in 0..50 {
        let n = common::unit_vector(&mut rng);
        let u = n.cross(&Vector3::x()).try_normalize(1e-6).unwrap_or_else(|| n.cross(&Vector3::y()).normalize());
        let v = n.cross(&u);
        let center = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let pts: Vec<_> = (0..20)
            .map(|_| {
                let (a, b) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                center + u * a + v * b + n * noise.sample(&mut rng)
            })
            .collect();
        let fit = fit_plane(&pts, 5, 0.0);
        assert!(fit.valid);
        let angle = fit.normal.dot(&n).abs().min(1.0).acos().to_degrees();
        assert!(angle <= 2.0, "normal off by {angle} degrees");
    }
}

#[test]
fn dense_cube_keeps_one_point_per_occupied_cell() {
    let mut rng = common::rng(23);
    let pts: Vec<_> = (0..10_000)
        .map(|_| Vector3::from_fn(|_, _| rng.random_range(-3.7..4.2)))
        .collect();
    let occupied: HashSet<_> = pts.iter().map(|p| voxel_key(p, 1.0)).collect();
    let kept = voxel_downsample(&pts, 1.0);
    assert_eq!(kept.len(), occupied.len());
    let kept_cells: HashSet<_> = kept.iter().map(|p| voxel_key(p, 1.0)).collect();
    assert_eq!(kept_cells, occupied);
}

fn cloud() -> impl Strategy<Value = Vec<Vector3<f64>>> {
    prop::collection::vec(prop::array::uniform3(-10.0..10.0f64).prop_map(Vector3::from), 1..400)
}

proptest! {
    #[test]
    fn downsampling_is_idempotent(pts in cloud(), cell in 0.05..3.0f64) {
        let once = voxel_downsample(&pts, cell);
        prop_assert_eq!(voxel_downsample(&once, cell), once);
    }

    #[test]
    fn downsampled_points_are_members(pts in cloud(), cell in 0.05..3.0f64) {
        let once = voxel_downsample(&pts, cell);
        prop_assert!(once.len() <= pts.len());
        prop_assert!(once.iter().all(|p| pts.contains(p)));
    }

    #[test]
    fn voxel_capacity_is_never_exceeded(pts in cloud(), cap in 1usize..6) {
        let mut map = VoxelMap::new(2.0, cap, SearchMode::Faces7);
        map.insert_points(pts.iter().copied());
        let keys: HashSet<_> = pts.iter().map(|p| voxel_key(p, 2.0)).collect();
        prop_assert_eq!(map.num_voxels(), keys.len());
        prop_assert!(keys.iter().all(|k| map.voxel(k).unwrap().len() <= cap));
    }
}
