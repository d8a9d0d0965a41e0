//! Simulator geometry and ground truth against independent computations.

mod common;

use ctlo::se3::Pose;
use ctlo::sim::{
    simulate, GroundTruth, ProfileKind, Rect, SensorModel, Surface, WorldKind, WorldSpec, AGGRESSIVE_PEAK_RATE,
};
use nalgebra::Vector3;
use rand::Rng;

// Plain ray/rectangle test, written out independently of the library's.
fn hit_rect(r: &Rect, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let (a, b) = match r.axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    if d[r.axis] == 0.0 {
        return None;
    }
    let t = (r.offset - o[r.axis]) / d[r.axis];
    let p = o + d * t;
    (t > 1e-6 && (r.lo[0]..=r.hi[0]).contains(&p[a]) && (r.lo[1]..=r.hi[1]).contains(&p[b])).then_some(t)
}

fn inside_solid(world: &WorldSpec, p: &Vector3<f64>) -> bool {
    world.surfaces.iter().any(|s| match s {
        Surface::SolidBox { min, max } => (0..3).all(|i| p[i] > min[i] - 0.05 && p[i] < max[i] + 0.05),
        _ => false,
    })
}

#[test]
fn ray_casts_match_brute_force_over_faces() {
    let mut rng = common::rng(31);
    for kind in WorldKind::ALL {
        let world = WorldSpec::new(kind);
        let faces = world.faces();
        let mut checked = 0;
        while checked < 10_000 {
            let o = Vector3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(0.2..2.5),
            );
            if inside_solid(&world, &o) || world.distance_to_surface(&o) < 0.05 {
                continue;
            }
            let d = common::unit_vector(&mut rng);
            let brute = faces.iter().filter_map(|f| hit_rect(f, &o, &d)).min_by(f64::total_cmp);
            match (world.cast(&o, &d), brute) {
                (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-9, "{kind}: {a} vs {b}"),
                (None, None) => {}
                other => panic!("{kind}: origin {o:?} dir {d:?} gave {other:?}"),
            }
            checked += 1;
        }
    }
}

#[test]
fn integrated_ground_truth_matches_closed_form() {
    for kind in [ProfileKind::Turning, ProfileKind::AggressiveTurn] {
        let profile = kind.build(Pose::from_translation(Vector3::new(0.0, 0.0, 1.0)), 12.0).unwrap();
        let fine = GroundTruth::integrate(&profile, 10_000.0);
        let coarse = GroundTruth::integrate(&profile, 1000.0);
        let exact = GroundTruth::sample(&profile, 1000.0);
        for knot in profile.knots() {
            let a = fine.pose_at(knot).unwrap();
            let b = coarse.pose_at(knot).unwrap();
            assert!((a.translation() - b.translation()).amax() < 1e-6, "{kind} at {knot}");
            assert!((a.rotation() - b.rotation()).amax() < 1e-6, "{kind} at {knot}");
        }
        for (c, e) in coarse.samples.iter().zip(&exact.samples) {
            assert_eq!(c.stamp, e.stamp);
            assert!((c.pose.translation() - e.pose.translation()).amax() <= 1e-9, "{kind} at {}", c.stamp);
            assert!((c.pose.rotation() - e.pose.rotation()).amax() <= 1e-9, "{kind} at {}", c.stamp);
        }
    }
}

#[test]
fn ground_truth_interpolates_the_profile_exactly() {
    let profile = ProfileKind::AggressiveTurn.build(Pose::identity(), 8.0).unwrap();
    let gt = GroundTruth::sample(&profile, 1000.0);
    let mut rng = common::rng(32);
    for _ in 0..2000 {
        let t = rng.random_range(0.0..8.0);
        let a = gt.pose_at(t).unwrap();
        let b = profile.pose_at(t);
        assert!((a.translation() - b.translation()).amax() <= 1e-9, "at {t}");
        assert!((a.rotation() - b.rotation()).amax() <= 1e-9, "at {t}");
    }
}

#[test]
fn undistorting_with_ground_truth_puts_points_on_surfaces() {
    let sensor = SensorModel {
        noise_sigma: 0.0,
        ..SensorModel::default()
    };
    let sim = simulate(WorldKind::BoxRoom, ProfileKind::Turning, 2.0, &sensor, 3).unwrap();
    let mut worst_raw: f64 = 0.0;
    for scan in &sim.scans[12..] {
        let start = sim.ground_truth.pose_at(scan.t_begin).unwrap();
        for p in &scan.points {
            let w = sim.ground_truth.pose_at(p.stamp).unwrap().transform_point(&p.position);
            assert!(sim.world.distance_to_surface(&w) < 1e-9);
            worst_raw = worst_raw.max(sim.world.distance_to_surface(&start.transform_point(&p.position)));
        }
    }
    // Without per-point poses the turning scans are visibly smeared.
    assert!(worst_raw > 0.05, "{worst_raw}");
}

#[test]
fn aggressive_profile_turns_at_peak_rate() {
    let profile = ProfileKind::AggressiveTurn.build(Pose::identity(), 20.0).unwrap();
    let peak = profile.segments.iter().map(|s| s.rate.phi.z.abs()).fold(0.0, f64::max);
    assert_eq!(peak, AGGRESSIVE_PEAK_RATE);
    assert_eq!(profile.turn_onsets.len(), 8);
    for (k, t) in profile.turn_onsets.iter().enumerate() {
        assert!((t - (2.5 + 2.4 * k as f64)).abs() < 1e-9, "onset {k} at {t}");
        assert_eq!(profile.rate_at(t + 0.01).phi.z.abs(), AGGRESSIVE_PEAK_RATE);
        assert_eq!(profile.rate_at(t - 0.01).phi.z, 0.0);
    }
}

#[test]
fn open_plane_straight_run_stays_level() {
    let sim = simulate(WorldKind::OpenPlane, ProfileKind::Straight, 3.0, &SensorModel::default(), 4).unwrap();
    let z0 = sim.ground_truth.samples[0].pose.translation().z;
    for s in &sim.ground_truth.samples {
        assert!((s.pose.translation().z - z0).abs() < 1e-12);
        assert!(s.pose.rotation_angle() < 1e-12);
    }
    assert!((sim.ground_truth.samples.last().unwrap().pose.translation().x - 2.0).abs() < 1e-9);
}
