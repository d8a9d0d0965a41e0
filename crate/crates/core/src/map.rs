//! Voxel-hashed local map with neighbor search and local plane fitting.

use std::cell::RefCell;
use std::collections::BTreeMap;

use rustc_hash::FxHashMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::Result;
use crate::linalg::sym_eigen3;
use crate::scan::CloudSegment;
use crate::se3::{exp_map, log_map, timestamp_fraction, StampedPose};

pub type VoxelKey = [i64; 3];

#[inline]
pub fn voxel_key(p: &Vector3<f64>, cell: f64) -> VoxelKey {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}

/// Which voxels around the query's own voxel are searched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchMode {
    /// Center voxel plus its six face neighbors.
    Faces7,
    /// Full 3x3x3 block.
    Block27,
}

impl SearchMode {
    pub fn offsets(self) -> Vec<[i64; 3]> {
        match self {
            SearchMode::Faces7 => vec![
                [0, 0, 0],
                [-1, 0, 0],
                [1, 0, 0],
                [0, -1, 0],
                [0, 1, 0],
                [0, 0, -1],
                [0, 0, 1],
            ],
            SearchMode::Block27 => {
                let mut v = Vec::with_capacity(27);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            v.push([dx, dy, dz]);
                        }
                    }
                }
                v
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct VoxelMap {
    voxel_size: f64,
    max_points_per_voxel: usize,
    search: SearchMode,
    offsets: Vec<[i64; 3]>,
    cells: FxHashMap<VoxelKey, Vec<Vector3<f64>>>,
}

impl VoxelMap {
    pub fn new(voxel_size: f64, max_points_per_voxel: usize, search: SearchMode) -> Self {
        assert!(voxel_size > 0.0 && max_points_per_voxel > 0);
        Self {
            voxel_size,
            max_points_per_voxel,
            search,
            offsets: search.offsets(),
            cells: FxHashMap::default(),
        }
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn max_points_per_voxel(&self) -> usize {
        self.max_points_per_voxel
    }

    pub fn search_mode(&self) -> SearchMode {
        self.search
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn num_voxels(&self) -> usize {
        self.cells.len()
    }

    pub fn num_points(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn voxel(&self, key: &VoxelKey) -> Option<&[Vector3<f64>]> {
        self.cells.get(key).map(Vec::as_slice)
    }

    /// Keys of the voxels searched for a query at `q`.
    pub fn search_keys(&self, q: &Vector3<f64>) -> impl Iterator<Item = VoxelKey> + '_ {
        let c = voxel_key(q, self.voxel_size);
        self.offsets
            .iter()
            .map(move |o| [c[0] + o[0], c[1] + o[1], c[2] + o[2]])
    }

    /// Inserts a world-frame point. Returns false if its voxel is full.
    pub fn insert_point(&mut self, p: Vector3<f64>) -> bool {
        let cap = self.max_points_per_voxel;
        let cell = self.cells.entry(voxel_key(&p, self.voxel_size)).or_default();
        if cell.len() >= cap {
            return false;
        }
        cell.push(p);
        true
    }

    pub fn insert_points(&mut self, points: impl IntoIterator<Item = Vector3<f64>>) {
        for p in points {
            self.insert_point(p);
        }
    }

    /// Drops voxels whose center is farther than `radius` from `center`.
    pub fn evict_far(&mut self, center: &Vector3<f64>, radius: f64) {
        let size = self.voxel_size;
        self.cells.retain(|k, _| {
            let c = Vector3::new(k[0] as f64 + 0.5, k[1] as f64 + 0.5, k[2] as f64 + 0.5) * size;
            (c - center).norm() <= radius
        });
    }
}

/// Transforms a segment into the world frame, each point by the trajectory
/// pose at its own stamp, and inserts it.
pub fn insert_segment(
    map: &mut VoxelMap,
    segment: &CloudSegment,
    node_lo: &StampedPose,
    node_hi: &StampedPose,
) -> Result<()> {
    let xi = log_map(&(node_lo.pose.inverse() * node_hi.pose))?;
    for p in &segment.points {
        let s = timestamp_fraction(p.stamp, node_lo.stamp, node_hi.stamp)?;
        let pose = node_lo.pose * exp_map(&xi.scaled(s));
        map.insert_point(pose.transform_point(&p.position));
    }
    Ok(())
}

/// The `k` nearest map points to `q` among the searched voxels, nearest
/// first. Equal distances keep the voxel scan order.
pub fn query_neighbors(map: &VoxelMap, q: &Vector3<f64>, k: usize) -> Vec<Vector3<f64>> {
    thread_local! {
        static SCRATCH: RefCell<(Vec<Vector3<f64>>, Vec<u128>)> = RefCell::default();
    }
    let k = k.max(1);
    SCRATCH.with_borrow_mut(|(pts, keys)| {
        pts.clear();
        keys.clear();
        for key in map.search_keys(q) {
            if let Some(cell) = map.cells.get(&key) {
                pts.extend_from_slice(cell);
            }
        }
        // Squared distances are nonnegative, so their bits order like the
        // values; the low half breaks ties by scan order.
        keys.extend(
            pts.iter()
                .enumerate()
                .map(|(i, p)| u128::from((p - q).norm_squared().to_bits()) << 32 | i as u128),
        );
        if keys.len() > k {
            keys.select_nth_unstable(k - 1);
            keys.truncate(k);
        }
        keys.sort_unstable();
        keys.iter().map(|&key| pts[key as u32 as usize]).collect()
    })
}

/// Local plane through a neighborhood.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneFit {
    pub normal: Vector3<f64>,
    pub anchor: Vector3<f64>,
    /// `1 - lambda_min / lambda_mid`, clamped to `[0, 1]`.
    pub planarity: f64,
    pub valid: bool,
}

impl PlaneFit {
    pub fn invalid() -> Self {
        Self {
            normal: Vector3::z(),
            anchor: Vector3::zeros(),
            planarity: 0.0,
            valid: false,
        }
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(&(p - self.anchor))
    }
}

/// Least-squares plane through the centroid of `neighbors`.
pub fn fit_plane(neighbors: &[Vector3<f64>], min_count: usize, planarity_min: f64) -> PlaneFit {
    if neighbors.len() < min_count.max(3) {
        return PlaneFit::invalid();
    }
    let n = neighbors.len() as f64;
    let anchor = neighbors.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let scatter = neighbors.iter().fold(Matrix3::zeros(), |a, p| {
        let d = p - anchor;
        a + d * d.transpose()
    });
    let (values, vectors) = sym_eigen3(&scatter);
    let scale = values[2].max(f64::MIN_POSITIVE);
    if values[1] <= 1e-12 * scale {
        return PlaneFit::invalid();
    }
    let planarity = (1.0 - values[0].max(0.0) / values[1]).clamp(0.0, 1.0);
    PlaneFit {
        normal: vectors.column(0).into_owned(),
        anchor,
        planarity,
        valid: planarity >= planarity_min,
    }
}

/// Indices of one representative per occupied cell (the member nearest the
/// cell's point centroid), in ascending cell order.
pub fn downsample_indices<F>(len: usize, cell: f64, position: F) -> Vec<usize>
where
    F: Fn(usize) -> Vector3<f64>,
{
    let mut cells: BTreeMap<VoxelKey, Vec<usize>> = BTreeMap::new();
    for i in 0..len {
        cells.entry(voxel_key(&position(i), cell)).or_default().push(i);
    }
    cells
        .into_values()
        .map(|members| {
            let centroid = members
                .iter()
                .fold(Vector3::zeros(), |a, &i| a + position(i))
                / members.len() as f64;
            *members
                .iter()
                .min_by(|&&a, &&b| {
                    (position(a) - centroid)
                        .norm_squared()
                        .total_cmp(&(position(b) - centroid).norm_squared())
                })
                .expect("cell is nonempty")
        })
        .collect()
}

pub fn voxel_downsample(points: &[Vector3<f64>], cell: f64) -> Vec<Vector3<f64>> {
    assert!(cell > 0.0, "cell size must be positive");
    downsample_indices(points.len(), cell, |i| points[i])
        .into_iter()
        .map(|i| points[i])
        .collect()
}
