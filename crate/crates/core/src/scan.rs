//! Timestamped LiDAR scans and their slicing into cloud segments.

use nalgebra::Vector3;

use crate::error::{Error, Result};

// Grid arithmetic tolerance, seconds.
const GRID_EPS: f64 = 1e-9;

/// LiDAR return in the sensor frame at the instant it was measured.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedPoint {
    pub position: Vector3<f64>,
    pub stamp: f64,
}

impl TimedPoint {
    pub fn new(position: Vector3<f64>, stamp: f64) -> Self {
        Self { position, stamp }
    }
}

/// One sweep of the sensor. Points are ordered by nondecreasing stamp.
#[derive(Clone, Debug, PartialEq)]
pub struct Scan {
    pub points: Vec<TimedPoint>,
    pub t_begin: f64,
    pub t_end: f64,
}

impl Scan {
    /// Validates the scan invariants: `t_begin < t_end`, finite positions,
    /// stamps nondecreasing and inside `[t_begin, t_end]`.
    pub fn new(points: Vec<TimedPoint>, t_begin: f64, t_end: f64) -> Result<Self> {
        if !(t_begin.is_finite() && t_end.is_finite() && t_begin < t_end) {
            return Err(Error::Input(format!(
                "scan bounds [{t_begin}, {t_end}] are not an increasing interval"
            )));
        }
        let mut last = t_begin;
        for (i, p) in points.iter().enumerate() {
            if !p.position.iter().all(|x| x.is_finite()) || !p.stamp.is_finite() {
                return Err(Error::Input(format!("point {i} is not finite")));
            }
            if p.stamp < last || p.stamp > t_end {
                return Err(Error::Input(format!(
                    "point {i} stamp {} breaks ordering or bounds [{t_begin}, {t_end}]",
                    p.stamp
                )));
            }
            last = p.stamp;
        }
        Ok(Self {
            points,
            t_begin,
            t_end,
        })
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_begin
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| p.position).collect()
    }
}

/// Contiguous time slice of the point stream bound to one linear
/// trajectory segment `[node_lo, node_hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudSegment {
    pub points: Vec<TimedPoint>,
    pub t_start: f64,
    pub t_stop: f64,
    pub node_lo: usize,
    pub node_hi: usize,
}

impl CloudSegment {
    pub fn span(&self) -> f64 {
        self.t_stop - self.t_start
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Slices `scan` on the grid `t_anchor + k * dt`.
///
/// Intervals are half-open, so a point on an interior boundary belongs to
/// the later segment. The last boundary is the first grid point at or after
/// `scan.t_end`; trailing empty segments are dropped while leading and
/// interior empty segments are kept. `node_lo`/`node_hi` are grid indices
/// counted from the anchor.
pub fn segment_scan(scan: &Scan, dt: f64, t_anchor: f64) -> Result<Vec<CloudSegment>> {
    if scan.points.is_empty() {
        return Err(Error::EmptyScan);
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Input(format!("segment interval {dt} must be positive")));
    }
    if t_anchor > scan.t_begin + GRID_EPS {
        return Err(Error::OutOfSegment {
            t: scan.t_begin,
            t_a: t_anchor,
            t_b: scan.t_end,
        });
    }
    let count = (((scan.t_end - t_anchor) / dt) - GRID_EPS).ceil().max(1.0) as usize;
    let boundary = |k: usize| t_anchor + k as f64 * dt;

    let mut segments: Vec<CloudSegment> = (0..count)
        .map(|k| CloudSegment {
            points: Vec::new(),
            t_start: boundary(k),
            t_stop: boundary(k + 1),
            node_lo: k,
            node_hi: k + 1,
        })
        .collect();

    for p in &scan.points {
        let idx = ((p.stamp - t_anchor) / dt + GRID_EPS).floor();
        let idx = (idx.max(0.0) as usize).min(count - 1);
        segments[idx].points.push(*p);
    }

    let last_full = segments
        .iter()
        .rposition(|s| !s.points.is_empty())
        .expect("scan has points");
    segments.truncate(last_full + 1);
    Ok(segments)
}

/// Joins two abutting segments; the node between them is no longer a
/// boundary of the result.
pub fn merge_segments(a: &CloudSegment, b: &CloudSegment) -> Result<CloudSegment> {
    if (a.t_stop - b.t_start).abs() > GRID_EPS {
        return Err(Error::NonAdjacent {
            stop: a.t_stop,
            start: b.t_start,
        });
    }
    let mut points = Vec::with_capacity(a.points.len() + b.points.len());
    points.extend_from_slice(&a.points);
    points.extend_from_slice(&b.points);
    Ok(CloudSegment {
        points,
        t_start: a.t_start,
        t_stop: b.t_stop,
        node_lo: a.node_lo,
        node_hi: b.node_hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform_scan(t0: f64, duration: f64, n: usize) -> Scan {
        let points = (0..n)
            .map(|i| {
                let t = t0 + duration * i as f64 / n as f64;
                TimedPoint::new(Vector3::new(i as f64, 1.0, 0.0), t)
            })
            .collect();
        Scan::new(points, t0, t0 + duration).unwrap()
    }

    #[test]
    fn tenth_second_scan_at_forty_ms() {
        let scan = uniform_scan(5.0, 0.10, 100);
        let segs = segment_scan(&scan, 0.04, 5.0).unwrap();
        assert_eq!(segs.len(), 3);
        let stops: Vec<f64> = segs.iter().map(|s| s.t_stop - 5.0).collect();
        for (got, want) in stops.iter().zip([0.04, 0.08, 0.12]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn whole_scan_interval_gives_one_segment() {
        let scan = uniform_scan(0.0, 0.1, 50);
        let segs = segment_scan(&scan, 0.1, 0.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].points.len(), 50);
    }

    #[test]
    fn halved_interval_gives_five_segments() {
        let scan = uniform_scan(0.0, 0.1, 100);
        let segs = segment_scan(&scan, 0.04 * 0.5, 0.0).unwrap();
        assert_eq!(segs.len(), 5);
    }

    #[test]
    fn boundary_point_goes_to_later_segment() {
        let points = vec![
            TimedPoint::new(Vector3::x(), 0.0),
            TimedPoint::new(Vector3::y(), 0.04),
            TimedPoint::new(Vector3::z(), 0.09),
        ];
        let scan = Scan::new(points, 0.0, 0.1).unwrap();
        let segs = segment_scan(&scan, 0.04, 0.0).unwrap();
        assert_eq!(segs[0].points.len(), 1);
        assert_eq!(segs[1].points[0].position, Vector3::y());
    }

    #[test]
    fn interior_empty_segment_is_kept_tail_is_dropped() {
        let points = vec![
            TimedPoint::new(Vector3::x(), 0.01),
            TimedPoint::new(Vector3::y(), 0.09),
        ];
        let scan = Scan::new(points, 0.0, 0.2).unwrap();
        let segs = segment_scan(&scan, 0.04, 0.0).unwrap();
        assert_eq!(segs.len(), 3);
        assert!(segs[1].is_empty());
    }

    #[test]
    fn empty_scan_is_rejected() {
        let scan = Scan::new(vec![], 0.0, 0.1).unwrap();
        assert!(matches!(segment_scan(&scan, 0.04, 0.0), Err(Error::EmptyScan)));
    }

    #[test]
    fn merge_cases() {
        let scan = uniform_scan(0.0, 0.08, 80);
        let segs = segment_scan(&scan, 0.04, 0.0).unwrap();
        let m = merge_segments(&segs[0], &segs[1]).unwrap();
        assert!((m.span() - 0.08).abs() < 1e-12);
        assert_eq!(m.points.len(), segs[0].points.len() + segs[1].points.len());

        let empty = CloudSegment {
            points: vec![],
            t_start: segs[1].t_stop,
            t_stop: segs[1].t_stop + 0.04,
            node_lo: 2,
            node_hi: 3,
        };
        let m2 = merge_segments(&segs[1], &empty).unwrap();
        assert_eq!(m2.points, segs[1].points);
        assert_eq!(m2.t_stop, empty.t_stop);

        assert!(matches!(
            merge_segments(&segs[0], &empty),
            Err(Error::NonAdjacent { .. })
        ));
    }

    #[test]
    fn three_merges_from_forty_ms_exceed_tenth_second() {
        let scan = uniform_scan(0.0, 0.16, 160);
        let segs = segment_scan(&scan, 0.04, 0.0).unwrap();
        let mut acc = segs[0].clone();
        for s in &segs[1..] {
            acc = merge_segments(&acc, s).unwrap();
        }
        assert!((acc.span() - 0.16).abs() < 1e-12);
        assert!(acc.span() > 0.1);
    }

    proptest! {
        #[test]
        fn segmentation_conserves_points(
            n in 1usize..400,
            dt in 0.005f64..0.2,
            lead in 0.0f64..0.05,
        ) {
            let scan = uniform_scan(1.0, 0.1, n);
            let segs = segment_scan(&scan, dt, 1.0 - lead).unwrap();
            let total: usize = segs.iter().map(|s| s.points.len()).sum();
            prop_assert_eq!(total, n);
            for s in &segs {
                for p in &s.points {
                    prop_assert!(p.stamp >= s.t_start - 1e-9 && p.stamp <= s.t_stop + 1e-9);
                }
            }
            prop_assert_eq!(segment_scan(&scan, dt, 1.0 - lead).unwrap(), segs);
        }

        #[test]
        fn merging_is_associative(n in 10usize..200) {
            let scan = uniform_scan(0.0, 0.12, n);
            let s = segment_scan(&scan, 0.04, 0.0).unwrap();
            prop_assume!(s.len() == 3);
            let left = merge_segments(&merge_segments(&s[0], &s[1]).unwrap(), &s[2]).unwrap();
            let right = merge_segments(&s[0], &merge_segments(&s[1], &s[2]).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }
    }
}
