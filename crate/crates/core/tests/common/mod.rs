#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix6, RowVector6, Vector3, Vector6};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ctlo::degeneracy::{build_info_matrices, localizability, Level, Thresholds};
use ctlo::map::PlaneFit;
use ctlo::optimizer::{pt2pl_residual, velocity_residual, Correspondence, MarginalPrior, NormalEquations};
use ctlo::optimizer::schur_complement;
use ctlo::scan::TimedPoint;
use ctlo::se3::{exp_map, Pose, StampedPose, Twist};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn twist(rng: &mut impl Rng, max_trans: f64, max_angle: f64) -> Twist {
    let rho = unit_vector(rng) * rng.random_range(0.0..max_trans);
    let phi = unit_vector(rng) * rng.random_range(0.0..max_angle);
    Twist::new(rho, phi)
}

pub fn pose(rng: &mut impl Rng, max_trans: f64, max_angle: f64) -> Pose {
    exp_map(&twist(rng, max_trans, max_angle))
}

/// `|a - b|_F / |b|_F`.
pub fn rel_err<const R: usize, const C: usize>(
    a: &nalgebra::SMatrix<f64, R, C>,
    b: &nalgebra::SMatrix<f64, R, C>,
) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

const FD_STEP: f64 = 1e-6;

/// Largest relative error between analytic and central-difference
/// Jacobians of the point-to-plane residual over `configs` random cases.
pub fn pt2pl_jacobian_error(seed: u64, configs: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let lo_pose = pose(&mut rng, 5.0, 2.5);
        let hi_pose = exp_map(&twist(&mut rng, 1.0, 1.0)) * lo_pose;
        let t0 = rng.random_range(0.0..10.0);
        let lo = StampedPose::new(lo_pose, t0);
        let hi = StampedPose::new(hi_pose, t0 + rng.random_range(0.02..0.1));
        let stamp = rng.random_range(lo.stamp..hi.stamp);
        let c = Correspondence {
            point: TimedPoint::new(Vector3::from_fn(|_, _| rng.random_range(-8.0..8.0)), stamp),
            plane: PlaneFit {
                normal: unit_vector(&mut rng),
                anchor: Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0)),
                planarity: 1.0,
                valid: true,
            },
            weight: rng.random_range(0.1..1.0),
        };
        let (_, j_lo, j_hi) = pt2pl_residual(&lo, &hi, &c).unwrap();
        let r = |lo: &StampedPose, hi: &StampedPose| pt2pl_residual(lo, hi, &c).unwrap().0;
        let mut fd_lo = RowVector6::zeros();
        let mut fd_hi = RowVector6::zeros();
        for k in 0..6 {
            let mut d = Vector6::zeros();
            d[k] = FD_STEP;
            let perturb = |p: &StampedPose, s: f64| StampedPose::new(p.pose.left_perturbed(&(d * s)), p.stamp);
            fd_lo[k] = (r(&perturb(&lo, 1.0), &hi) - r(&perturb(&lo, -1.0), &hi)) / (2.0 * FD_STEP);
            fd_hi[k] = (r(&lo, &perturb(&hi, 1.0)) - r(&lo, &perturb(&hi, -1.0))) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_err(&j_lo, &fd_lo)).max(rel_err(&j_hi, &fd_hi));
    }
    worst
}

/// Same as [`pt2pl_jacobian_error`] for the constant-velocity residual.
pub fn velocity_jacobian_error(seed: u64, configs: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    let sqrt_info = Vector6::new(10.0, 10.0, 10.0, 31.6, 31.6, 31.6);
    for _ in 0..configs {
        let t0 = rng.random_range(0.0..10.0);
        let prev = StampedPose::new(pose(&mut rng, 5.0, 2.5), t0);
        let t1 = t0 + rng.random_range(0.02..0.1);
        let mid = StampedPose::new(prev.pose * exp_map(&twist(&mut rng, 0.5, 1.0)), t1);
        let t2 = t1 + rng.random_range(0.02..0.1);
        let next = StampedPose::new(mid.pose * exp_map(&twist(&mut rng, 0.5, 1.0)), t2);
        let (_, jac) = velocity_residual(&prev, &mid, &next, &sqrt_info).unwrap();
        for (which, analytic) in jac.iter().enumerate() {
            let mut fd = Matrix6::zeros();
            for k in 0..6 {
                let mut d = Vector6::zeros();
                d[k] = FD_STEP;
                let eval = |s: f64| {
                    let mut nodes = [prev, mid, next];
                    nodes[which].pose = nodes[which].pose.left_perturbed(&(d * s));
                    velocity_residual(&nodes[0], &nodes[1], &nodes[2], &sqrt_info).unwrap().0
                };
                fd.set_column(k, &((eval(1.0) - eval(-1.0)) / (2.0 * FD_STEP)));
            }
            worst = worst.max(rel_err(analytic, &fd));
        }
    }
    worst
}

/// A linear-Gaussian chain over four 6-dimensional nodes: a unary factor on
/// every node, a binary factor per segment and a ternary factor per
/// interior node, all with fixed random Jacobians.
pub struct LinearChain {
    unary: Vec<(usize, Matrix6<f64>, Vector6<f64>)>,
    binary: Vec<(usize, Matrix6<f64>, Matrix6<f64>, Vector6<f64>)>,
    ternary: Vec<(usize, [Matrix6<f64>; 3], Vector6<f64>)>,
}

pub const CHAIN_NODES: usize = 4;

impl LinearChain {
    pub fn random(seed: u64) -> Self {
        fn mat(rng: &mut ChaCha8Rng) -> Matrix6<f64> {
            Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0))
        }
        fn vec(rng: &mut ChaCha8Rng) -> Vector6<f64> {
            Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0))
        }
        let mut r = rng(seed);
        let unary = (0..CHAIN_NODES)
            .map(|i| (i, mat(&mut r) + Matrix6::identity() * 0.5, vec(&mut r)))
            .collect();
        let binary = (0..CHAIN_NODES - 1)
            .map(|i| (i, mat(&mut r), mat(&mut r), vec(&mut r)))
            .collect();
        let ternary = (1..CHAIN_NODES - 1)
            .map(|i| (i, [mat(&mut r), mat(&mut r), mat(&mut r)], vec(&mut r)))
            .collect();
        Self { unary, binary, ternary }
    }

    /// Adds every factor whose nodes all lie in `nodes` and satisfy `keep`,
    /// with slots relative to `nodes.start`. Residuals are taken at x = 0,
    /// `r = -z`.
    fn add(&self, ne: &mut NormalEquations, nodes: std::ops::Range<usize>, keep: impl Fn(&[usize]) -> bool) {
        let inside = |ids: &[usize]| ids.iter().all(|i| nodes.contains(i)) && keep(ids);
        let o = nodes.start;
        for (i, a, z) in &self.unary {
            if inside(&[*i]) {
                ne.add_block(&[(i - o, *a)], &-z);
            }
        }
        for (i, a, b, z) in &self.binary {
            if inside(&[*i, i + 1]) {
                ne.add_block(&[(i - o, *a), (i + 1 - o, *b)], &-z);
            }
        }
        for (i, [a, b, c], z) in &self.ternary {
            if inside(&[i - 1, *i, i + 1]) {
                ne.add_block(&[(i - 1 - o, *a), (i - o, *b), (i + 1 - o, *c)], &-z);
            }
        }
    }

    /// Least-squares solution over all nodes at once.
    pub fn batch(&self) -> DVector<f64> {
        let mut ne = NormalEquations::new(CHAIN_NODES);
        self.add(&mut ne, 0..CHAIN_NODES, |_| true);
        ne.solve_damped(0.0, 0.0).expect("chain is well posed")
    }

    /// Solves a window of three nodes, marginalizes node 0 into a prior on
    /// nodes 1 and 2, slides, and solves the window {1, 2, 3}. Returns the
    /// estimate of node 3.
    pub fn sliding(&self, eps: f64) -> Vector6<f64> {
        // Factors touching node 0, over (x0, x1, x2).
        let mut first = NormalEquations::new(3);
        self.add(&mut first, 0..3, |ids| ids.contains(&0));
        let (hm, bm) = schur_complement(&first.h, &first.b, 6, eps).expect("invertible");
        let prior = MarginalPrior::new(vec![1, 2], hm, bm, vec![Pose::identity(); 2]);

        let mut second = NormalEquations::new(3);
        self.add(&mut second, 1..4, |ids| !ids.contains(&0));
        let dx = prior.deltas(&[Pose::identity(), Pose::identity()]).unwrap();
        second.add_dense(&[0, 1], prior.sqrt_jacobian(), &prior.residual(&dx));
        let x = second.solve_damped(0.0, 0.0).expect("window is well posed");
        x.fixed_rows::<6>(12).into_owned()
    }
}

/// Largest gap between the slid-window and batch estimates of the last
/// node over `trials` random chains.
pub fn marginalization_gap(seed: u64, trials: usize) -> f64 {
    (0..trials)
        .map(|k| {
            let chain = LinearChain::random(seed + k as u64);
            let batch = chain.batch();
            let last = batch.fixed_rows::<6>(18).into_owned();
            (chain.sliding(1e-8) - last).amax()
        })
        .fold(0.0, f64::max)
}

/// Point/normal pairs on one plane in the sensor frame and the Gauss-Newton
/// block their point-to-plane rows produce.
pub fn plane_fixture(rng: &mut impl Rng, count: usize) -> (Vector3<f64>, Vec<(Vector3<f64>, Vector3<f64>)>, Matrix6<f64>) {
    let n = unit_vector(rng);
    let u = n.cross(&unit_vector(rng)).normalize();
    let v = n.cross(&u);
    let offset = rng.random_range(1.0..3.0);
    let pairs: Vec<_> = (0..count)
        .map(|_| {
            let p = n * offset + u * rng.random_range(-6.0..6.0) + v * rng.random_range(-6.0..6.0);
            (p, n)
        })
        .collect();
    let mut h = Matrix6::zeros();
    for (p, n) in &pairs {
        let t = p.cross(n);
        let row = RowVector6::new(n.x, n.y, n.z, t.x, t.y, t.z);
        h += row.transpose() * row;
    }
    (n, pairs, h)
}

/// Misclassified directions over `planes` random single-plane fixtures: the
/// normal translation must be Localizable, the in-plane translations and
/// the rotation about the normal NonLocalizable.
pub fn plane_misclassifications(seed: u64, planes: usize, count: usize) -> usize {
    let mut rng = rng(seed);
    let th = Thresholds::default();
    let mut wrong = 0;
    for _ in 0..planes {
        let (n, pairs, h) = plane_fixture(&mut rng, count);
        let report = localizability(&build_info_matrices(&pairs), &h, &th);
        for i in 0..3 {
            let along = report.v_t.column(i).dot(&n).abs() > 0.99;
            let want = if along { Level::Localizable } else { Level::NonLocalizable };
            wrong += usize::from(report.translation[i].level != want);
            if report.v_r.column(i).dot(&n).abs() > 0.99 {
                wrong += usize::from(report.rotation[i].level != Level::NonLocalizable);
            }
        }
        // Exactly one rotational direction is the normal.
        let normal_axes = (0..3).filter(|&i| report.v_r.column(i).dot(&n).abs() > 0.99).count();
        wrong += usize::from(normal_axes != 1);
    }
    wrong
}

pub fn dense_prior_is_consistent(prior: &MarginalPrior) -> bool {
    let j = prior.sqrt_jacobian();
    let jtj: DMatrix<f64> = j.transpose() * j;
    (jtj - &prior.h).amax() <= 1e-9 * prior.h.amax().max(1.0)
}

/// Worst errors of the Lie-group identities over `trials` random cases.
#[derive(Clone, Copy, Debug, Default)]
pub struct LieErrors {
    pub round_trip: f64,
    pub endpoints: f64,
    pub composition: f64,
}

fn pose_gap(a: &Pose, b: &Pose) -> f64 {
    (a.rotation() - b.rotation()).amax().max((a.translation() - b.translation()).amax())
}

pub fn lie_group_errors(seed: u64, trials: usize) -> LieErrors {
    use ctlo::se3::{interpolate_pose, log_map};
    let mut rng = rng(seed);
    let mut e = LieErrors::default();
    for _ in 0..trials {
        let xi = twist(&mut rng, 10.0, 3.0);
        let back = log_map(&exp_map(&xi)).expect("angle below pi");
        e.round_trip = e.round_trip.max((back.to_vector() - xi.to_vector()).amax());
        let t = exp_map(&xi);
        e.round_trip = e.round_trip.max(pose_gap(&exp_map(&log_map(&t).expect("angle below pi")), &t));

        let (a, b) = (pose(&mut rng, 10.0, 3.0), pose(&mut rng, 10.0, 3.0));
        if (b * a.inverse()).rotation_angle() > 3.0 {
            continue;
        }
        let at0 = interpolate_pose(&a, &b, 0.0).expect("valid");
        let at1 = interpolate_pose(&a, &b, 1.0).expect("valid");
        e.endpoints = e.endpoints.max(pose_gap(&at0, &a)).max(pose_gap(&at1, &b));

        let c = pose(&mut rng, 10.0, 3.0);
        let assoc = pose_gap(&((a * b) * c), &(a * (b * c)));
        let inv = pose_gap(&(a * a.inverse()), &Pose::identity());
        let (s1, s2) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let split = pose_gap(&(exp_map(&xi.scaled(s1)) * exp_map(&xi.scaled(s2))), &exp_map(&xi.scaled(s1 + s2)));
        let adj = pose_gap(
            &(a * exp_map(&xi) * a.inverse()),
            &exp_map(&Twist::from_vector(&(a.adjoint() * xi.to_vector()))),
        );
        let p = unit_vector(&mut rng) * 5.0;
        let act = ((a * b).transform_point(&p) - a.transform_point(&b.transform_point(&p))).amax();
        e.composition = e.composition.max(assoc).max(inv).max(split).max(adj).max(act);
    }
    e
}

/// Ground truth of the turning profile, the estimate oracle for evaluation.
pub fn turning_ground_truth(seconds: f64) -> ctlo::sim::GroundTruth {
    let profile = ctlo::sim::ProfileKind::Turning
        .build(Pose::from_translation(Vector3::new(0.0, 0.0, 1.0)), seconds)
        .expect("valid profile");
    ctlo::sim::GroundTruth::sample(&profile, 1000.0)
}

/// Ground truth on an exact 25 Hz grid, passed through `f`. The grid
/// avoids the knot stamps mixed into the samples, so pose pairs are a
/// whole number of steps apart.
pub fn estimate_from(gt: &ctlo::sim::GroundTruth, f: impl Fn(&StampedPose) -> Pose) -> Vec<StampedPose> {
    let steps = ((gt.t_end() - gt.t_begin()) / 0.04 + 1e-9).floor() as usize;
    (0..=steps)
        .map(|i| {
            let t = gt.t_begin() + 0.04 * i as f64;
            StampedPose::new(gt.pose_at(t).expect("inside ground truth"), t)
        })
        .map(|s| StampedPose::new(f(&s), s.stamp))
        .collect()
}

/// ATE of the exact ground truth against a rigidly moved copy of itself,
/// worst over `trials` offsets.
pub fn ate_gauge_error(seed: u64, trials: usize) -> f64 {
    let mut rng = rng(seed);
    let gt = turning_ground_truth(6.0);
    let est = estimate_from(&gt, |s| s.pose);
    (0..trials)
        .map(|_| {
            let g = pose(&mut rng, 50.0, 3.0);
            let moved = ctlo::sim::GroundTruth::from_samples(
                gt.samples.iter().map(|s| StampedPose::new(g * s.pose, s.stamp)).collect(),
            )
            .expect("valid samples");
            ctlo::eval::compute_ate(&est, &moved).expect("overlap")
        })
        .fold(0.0, f64::max)
}

/// An estimate drifting at a constant world velocity `v` has RPE
/// `|v| * delta` when `delta` is a whole number of 40 ms steps. Returns
/// `(measured, expected)`.
pub fn rpe_drift(v: Vector3<f64>, delta: f64) -> (f64, f64) {
    let gt = turning_ground_truth(6.0);
    let est = estimate_from(&gt, |s| {
        Pose::from_parts(*s.pose.rotation(), s.pose.translation() + v * s.stamp)
    });
    let rpe = ctlo::eval::compute_rpe(&est, &gt, delta).expect("overlap");
    (rpe, v.norm() * delta)
}
