use rayon::prelude::*;

use crate::error::Result;
use crate::map::{downsample_indices, fit_plane, query_neighbors, VoxelMap};
use crate::optimizer::factors::{Correspondence, SegmentInterpolant, StampMemo};
use crate::optimizer::SolverConfig;
use crate::scan::CloudSegment;
use crate::se3::StampedPose;

/// Indices of the points of `segment` kept by downsampling at `ds`, in
/// ascending (stamp) order.
pub fn segment_picks(segment: &CloudSegment, ds: f64) -> Vec<usize> {
    assert!(ds > 0.0, "downsampling cell must be positive");
    let mut picks = downsample_indices(segment.points.len(), ds, |i| segment.points[i].position);
    picks.sort_unstable();
    picks
}

/// Matches the downsampled points of `segment` to planes of the local map,
/// transforming each point with the trajectory pose at its stamp.
pub fn associate(
    segment: &CloudSegment,
    nodes: (&StampedPose, &StampedPose),
    map: &VoxelMap,
    ds: f64,
    cfg: &SolverConfig,
) -> Result<Vec<Correspondence>> {
    associate_picks(segment, nodes, map, &segment_picks(segment, ds), cfg)
}

/// [`associate`] over a precomputed selection of point indices.
pub fn associate_picks(
    segment: &CloudSegment,
    nodes: (&StampedPose, &StampedPose),
    map: &VoxelMap,
    picks: &[usize],
    cfg: &SolverConfig,
) -> Result<Vec<Correspondence>> {
    if map.is_empty() || segment.points.is_empty() {
        return Ok(Vec::new());
    }
    let seg = SegmentInterpolant::new(nodes.0, nodes.1)?;

    let match_one = |memo: &mut StampMemo, i: usize| -> Result<Option<Correspondence>> {
        let point = segment.points[i];
        let world = memo.pose(point.stamp)?.transform_point(&point.position);
        let neighbors = query_neighbors(map, &world, cfg.plane_neighbors);
        match neighbors.first() {
            Some(nearest) if (nearest - world).norm() <= cfg.max_corr_dist => {}
            _ => return Ok(None),
        }
        let plane = fit_plane(&neighbors, cfg.plane_min_count, cfg.planarity_min);
        if !plane.valid || plane.signed_distance(&world).abs() > cfg.max_corr_dist {
            return Ok(None);
        }
        Ok(Some(Correspondence {
            point,
            plane,
            weight: plane.planarity,
        }))
    };

    let matched: Vec<Option<Correspondence>> = if cfg.parallel {
        picks
            .par_chunks(256)
            .map(|chunk| {
                let mut memo = StampMemo::new(&seg, false);
                chunk.iter().map(|&i| match_one(&mut memo, i)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect()
    } else {
        let mut memo = StampMemo::new(&seg, false);
        picks.iter().map(|&i| match_one(&mut memo, i)).collect::<Result<_>>()?
    };
    Ok(matched.into_iter().flatten().collect())
}
