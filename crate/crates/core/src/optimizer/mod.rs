//! Sliding-window Gauss-Newton over trajectory control nodes.
//!
//! The window holds `n + 1` nodes bounding `n` cloud segments. Its cost is
//! the sum of robust point-to-plane terms (one per matched point, with the
//! point's pose interpolated between its segment's nodes), scaled
//! constant-velocity terms over every three consecutive nodes, the marginal
//! prior left behind by retired nodes, and optional direction locks.

pub mod associate;
pub mod factors;
pub mod marginal;
pub mod normal;

use nalgebra::{DMatrix, DVector, Matrix6, SMatrix, SVector, Vector6};

use crate::error::{Error, Result};
use crate::map::VoxelMap;
use crate::scan::{merge_segments, CloudSegment};
use crate::se3::{extrapolate, Pose, StampedPose};

pub use associate::{associate, associate_picks, segment_picks};
pub use factors::{
    pt2pl_error, pt2pl_residual, velocity_residual, Correspondence, DirectionLock,
    SegmentInterpolant, StampMemo,
};
pub use marginal::MarginalPrior;
pub use normal::{schur_complement, NormalEquations, NODE_DOF};

pub type NodeId = u64;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Convergence threshold on node translation updates, meters.
    pub translation_tol: f64,
    /// Convergence threshold on node rotation updates, radians.
    pub rotation_tol: f64,
    pub huber_delta: f64,
    /// Information of a point-to-plane residual (inverse of Q_p).
    pub point_information: f64,
    /// Diagonal information of the velocity residual, translational part.
    pub velocity_information_rho: f64,
    /// Diagonal information of the velocity residual, rotational part.
    pub velocity_information_phi: f64,
    pub plane_neighbors: usize,
    pub plane_min_count: usize,
    pub planarity_min: f64,
    pub max_corr_dist: f64,
    /// Regularization added to the dropped block before elimination.
    pub marginal_eps: f64,
    pub initial_lambda: f64,
    pub parallel: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_outer: 10,
            max_inner: 20,
            translation_tol: 1e-4,
            rotation_tol: 1e-4,
            huber_delta: 0.1,
            point_information: 1.0,
            velocity_information_rho: 1e2,
            velocity_information_phi: 1e3,
            plane_neighbors: 20,
            plane_min_count: 5,
            planarity_min: 0.1,
            max_corr_dist: 1.0,
            marginal_eps: 1e-8,
            initial_lambda: 1e-4,
            parallel: false,
        }
    }
}

impl SolverConfig {
    pub fn velocity_sqrt_info(&self) -> Vector6<f64> {
        let r = self.velocity_information_rho.sqrt();
        let p = self.velocity_information_phi.sqrt();
        Vector6::new(r, r, r, p, p, p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowNode {
    pub id: NodeId,
    pub node: StampedPose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowSegment {
    pub cloud: CloudSegment,
    /// Downsampling cell used when associating this segment, meters.
    pub ds: f64,
    /// Matches from the most recent association.
    pub correspondences: Vec<Correspondence>,
    /// Downsampled point indices, keyed by the `(ds, t_stop)` they were
    /// computed for.
    picks: Option<((f64, f64), Vec<usize>)>,
}

impl WindowSegment {
    /// Indices of the points kept at the current `ds`.
    pub fn picks(&mut self) -> &[usize] {
        let key = (self.ds, self.cloud.t_stop);
        if self.picks.as_ref().is_none_or(|(k, _)| *k != key) {
            self.picks = Some((key, segment_picks(&self.cloud, self.ds)));
        }
        &self.picks.as_ref().expect("just filled").1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    /// Inner Gauss-Newton iterations over all outer passes.
    pub iterations: usize,
    pub outer_iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
    /// Accepted costs; each outer pass restarts with fresh correspondences.
    pub cost_history: Vec<Vec<f64>>,
    /// Gauss-Newton Hessian diagonal block of every node, expressed in the
    /// node's body frame (rows/cols: translation, rotation).
    pub hessian_blocks: Vec<Matrix6<f64>>,
}

impl SolveReport {
    pub fn newest_block(&self) -> &Matrix6<f64> {
        self.hessian_blocks.last().expect("window has nodes")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowState {
    pub nodes: Vec<WindowNode>,
    pub segments: Vec<WindowSegment>,
    pub prior: MarginalPrior,
    pub locks: Vec<DirectionLock>,
    next_id: NodeId,
}

impl WindowState {
    /// Window with a single node and no prior.
    pub fn new(first: StampedPose) -> Self {
        Self {
            nodes: vec![WindowNode { id: 0, node: first }],
            segments: Vec::new(),
            prior: MarginalPrior::empty(),
            locks: Vec::new(),
            next_id: 1,
        }
    }

    /// Window whose first node is held at its pose by an isotropic prior.
    pub fn anchored(first: StampedPose, information: f64) -> Self {
        let mut w = Self::new(first);
        w.prior = MarginalPrior::anchor(0, first.pose, information);
        w
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.nodes.iter().map(|n| n.node.pose).collect()
    }

    pub fn newest(&self) -> &WindowNode {
        self.nodes.last().expect("window has nodes")
    }

    pub fn slot_of(&self, id: NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Constant-velocity extrapolation from the two newest nodes; a single
    /// node is held still.
    pub fn predict(&self, stamp: f64) -> Result<Pose> {
        let n = self.nodes.len();
        if n < 2 {
            return Ok(self.nodes[0].node.pose);
        }
        extrapolate(&self.nodes[n - 2].node, &self.nodes[n - 1].node, stamp)
    }

    /// Appends a segment and its end node at `init`.
    pub fn push_segment(&mut self, cloud: CloudSegment, ds: f64, init: Pose) -> Result<NodeId> {
        let last = self.newest().node.stamp;
        if (cloud.t_start - last).abs() > 1e-9 || cloud.t_stop <= last {
            return Err(Error::NonAdjacent {
                stop: last,
                start: cloud.t_start,
            });
        }
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.push(WindowNode {
            id,
            node: StampedPose::new(init, cloud.t_stop),
        });
        self.segments.push(WindowSegment {
            cloud,
            ds,
            correspondences: Vec::new(),
            picks: None,
        });
        Ok(id)
    }

    /// Absorbs `next` into the newest segment. The newest node is retired and
    /// replaced by a node at `next.t_stop`, initialized by continuing the
    /// newest segment's motion.
    pub fn merge_newest(&mut self, next: CloudSegment) -> Result<NodeId> {
        let n = self.nodes.len();
        if self.segments.is_empty() {
            return Err(Error::Input("no segment to merge into".into()));
        }
        let retired = self.nodes[n - 1].id;
        if self.prior.contains(retired) {
            return Err(Error::Input(
                "newest node is held by the marginal prior and cannot be retired".into(),
            ));
        }
        let seg = self.segments.last_mut().expect("checked");
        let merged = merge_segments(&seg.cloud, &next)?;
        let init = extrapolate(&self.nodes[n - 2].node, &self.nodes[n - 1].node, merged.t_stop)?;
        seg.cloud = merged;
        seg.correspondences.clear();
        let id = self.next_id;
        self.next_id += 1;
        self.nodes[n - 1] = WindowNode {
            id,
            node: StampedPose::new(init, next.t_stop),
        };
        self.locks.retain(|l| l.node_id != retired);
        Ok(id)
    }

    /// Marginalizes the oldest node and removes it together with the oldest
    /// segment, which are returned.
    pub fn slide(&mut self, cfg: &SolverConfig) -> Result<(WindowNode, WindowSegment)> {
        let prior = marginalize_oldest(self, cfg)?;
        let node = self.nodes.remove(0);
        let segment = self.segments.remove(0);
        self.locks.retain(|l| l.node_id != node.id);
        self.prior = prior;
        Ok((node, segment))
    }

    fn correspondence_lists(&self) -> Vec<Vec<Correspondence>> {
        self.segments.iter().map(|s| s.correspondences.clone()).collect()
    }
}

/// Which factors enter an assembly.
#[derive(Clone, Copy)]
enum Scope {
    All,
    /// Only factors touching this node slot.
    Touching(usize),
}

impl Scope {
    fn admits(self, slots: &[usize]) -> bool {
        match self {
            Scope::All => true,
            Scope::Touching(s) => slots.contains(&s),
        }
    }
}

// Robust point term: returns (cost, row scale) for a raw metric residual.
#[inline]
fn huber(e: f64, info: f64, delta: f64) -> (f64, f64) {
    let a = e.abs();
    if a <= delta {
        (0.5 * info * e * e, info.sqrt())
    } else {
        (info * (delta * a - 0.5 * delta * delta), (info * delta / a).sqrt())
    }
}

fn assemble(
    nodes: &[WindowNode],
    correspondences: &[Vec<Correspondence>],
    prior: &MarginalPrior,
    locks: &[DirectionLock],
    cfg: &SolverConfig,
    scope: Scope,
    jacobians: bool,
) -> Result<NormalEquations> {
    let mut ne = NormalEquations::new(nodes.len());

    for (k, corrs) in correspondences.iter().enumerate() {
        if !scope.admits(&[k, k + 1]) {
            continue;
        }
        let seg = SegmentInterpolant::new(&nodes[k].node, &nodes[k + 1].node)?;
        let mut memo = StampMemo::new(&seg, jacobians);
        if !jacobians {
            for c in corrs {
                let w = memo.pose(c.point.stamp)?.transform_point(&c.point.position);
                let e = c.plane.signed_distance(&w);
                ne.cost += huber(e, cfg.point_information * c.weight, cfg.huber_delta).0;
            }
            continue;
        }
        let mut h = SMatrix::<f64, 12, 12>::zeros();
        let mut b = SVector::<f64, 12>::zeros();
        for c in corrs {
            let (e, j_lo, j_hi) = memo.linearize(c, 1.0)?;
            let (cost, scale) = huber(e, cfg.point_information * c.weight, cfg.huber_delta);
            let mut j = SVector::<f64, 12>::zeros();
            j.fixed_rows_mut::<6>(0).copy_from(&(j_lo.transpose() * scale));
            j.fixed_rows_mut::<6>(6).copy_from(&(j_hi.transpose() * scale));
            h.ger(1.0, &j, &j, 1.0);
            b.axpy(scale * e, &j, 1.0);
            ne.cost += cost;
        }
        ne.add_pair(k, &h, &b);
    }

    let sqrt_info = cfg.velocity_sqrt_info();
    for k in 1..nodes.len().saturating_sub(1) {
        if !scope.admits(&[k - 1, k, k + 1]) {
            continue;
        }
        let (r, [jp, jm, jn]) =
            velocity_residual(&nodes[k - 1].node, &nodes[k].node, &nodes[k + 1].node, &sqrt_info)?;
        ne.add_block(&[(k - 1, jp), (k, jm), (k + 1, jn)], &r);
        ne.cost += 0.5 * r.norm_squared();
    }

    if !prior.is_empty() {
        let slots = prior
            .node_ids
            .iter()
            .map(|id| {
                nodes.iter().position(|n| n.id == *id).ok_or_else(|| {
                    Error::NumericalFailure(format!("prior refers to node {id} outside the window"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if scope.admits(&slots) || matches!(scope, Scope::Touching(_)) {
            let poses: Vec<Pose> = slots.iter().map(|&s| nodes[s].node.pose).collect();
            let dx = prior.deltas(&poses)?;
            let r = prior.residual(&dx);
            ne.add_dense(&slots, prior.sqrt_jacobian(), &r);
            ne.cost += 0.5 * r.norm_squared();
        }
    }

    for lock in locks {
        let Some(slot) = nodes.iter().position(|n| n.id == lock.node_id) else {
            continue;
        };
        if !scope.admits(&[slot]) {
            continue;
        }
        for (r, j) in lock.linearize(&nodes[slot].node.pose)? {
            ne.add_scalar(&[(slot, j)], r);
            ne.cost += 0.5 * r * r;
        }
    }
    Ok(ne)
}

/// Normal equations of the full window cost at the current node estimates,
/// with the given per-segment correspondences.
pub fn build_normal_equations(
    window: &WindowState,
    correspondences: &[Vec<Correspondence>],
    cfg: &SolverConfig,
) -> Result<NormalEquations> {
    if correspondences.len() != window.segments.len() {
        return Err(Error::Input(format!(
            "{} correspondence lists for {} segments",
            correspondences.len(),
            window.segments.len()
        )));
    }
    assemble(
        &window.nodes,
        correspondences,
        &window.prior,
        &window.locks,
        cfg,
        Scope::All,
        true,
    )
}

fn perturbed(nodes: &[WindowNode], dx: &DVector<f64>) -> Vec<WindowNode> {
    nodes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let d: Vector6<f64> = dx.fixed_rows::<NODE_DOF>(i * NODE_DOF).into_owned();
            WindowNode {
                id: n.id,
                node: StampedPose::new(n.node.pose.left_perturbed(&d), n.node.stamp),
            }
        })
        .collect()
}

fn step_is_small(dx: &DVector<f64>, cfg: &SolverConfig) -> bool {
    (0..dx.len() / NODE_DOF).all(|i| {
        let o = i * NODE_DOF;
        dx.rows(o, 3).norm() < cfg.translation_tol && dx.rows(o + 3, 3).norm() < cfg.rotation_tol
    })
}

fn displacement_is_small(a: &[WindowNode], b: &[WindowNode], cfg: &SolverConfig) -> bool {
    a.iter().zip(b).all(|(x, y)| {
        let d = x.node.pose.inverse() * y.node.pose;
        d.translation().norm() < cfg.translation_tol && d.rotation_angle() < cfg.rotation_tol
    })
}

fn body_frame_block(h: &Matrix6<f64>, pose: &Pose) -> Matrix6<f64> {
    let ad = pose.adjoint();
    ad.transpose() * h * ad
}

// Largest damping tried before an iteration gives up on descent.
const MAX_LAMBDA: f64 = 1e10;
const DAMPING_FLOOR: f64 = 1e-6;

/// Re-associates and minimizes the window cost until the node updates fall
/// below the configured tolerances. Nodes are updated in place.
pub fn solve_window(window: &mut WindowState, map: &VoxelMap, cfg: &SolverConfig) -> Result<SolveReport> {
    if window.segments.is_empty() {
        return Err(Error::Input("window has no segments to solve".into()));
    }
    let mut report = SolveReport {
        iterations: 0,
        outer_iterations: 0,
        initial_cost: 0.0,
        final_cost: 0.0,
        converged: false,
        cost_history: Vec::new(),
        hessian_blocks: Vec::new(),
    };

    let mut history_1: Option<Vec<Vec<Correspondence>>> = None;
    let mut history_2: Option<Vec<Vec<Correspondence>>> = None;
    for outer in 0..cfg.max_outer {
        report.outer_iterations = outer + 1;
        let start = window.nodes.clone();
        for k in 0..window.segments.len() {
            let nodes = (&window.nodes[k].node, &window.nodes[k + 1].node);
            let seg = &mut window.segments[k];
            seg.picks();
            let picks = &seg.picks.as_ref().expect("filled").1;
            seg.correspondences = associate_picks(&seg.cloud, nodes, map, picks, cfg)?;
        }
        if window.prior.is_empty() && window.segments.iter().all(|s| s.correspondences.is_empty()) {
            return Err(Error::NumericalFailure(
                "window is unanchored: no prior and no point constraints".into(),
            ));
        }
        let corrs = window.correspondence_lists();
        let mut ne = build_normal_equations(window, &corrs, cfg)?;
        if !ne.cost.is_finite() {
            return Err(Error::NumericalFailure("non-finite cost".into()));
        }
        if outer == 0 {
            report.initial_cost = ne.cost;
        }
        let mut history = vec![ne.cost];
        let mut lambda = cfg.initial_lambda;
        let mut ever_solved = false;

        for _ in 0..cfg.max_inner {
            report.iterations += 1;
            let mut accepted = None;
            while lambda <= MAX_LAMBDA {
                if let Some(dx) = ne.solve_damped(lambda, DAMPING_FLOOR) {
                    ever_solved = true;
                    let trial = perturbed(&window.nodes, &dx);
                    let trial_cost = assemble(&trial, &corrs, &window.prior, &window.locks, cfg, Scope::All, false)
                        .map(|t| t.cost);
                    if let Ok(c) = trial_cost {
                        if c <= ne.cost {
                            accepted = Some((trial, dx));
                            lambda = (lambda * 0.1).max(1e-12);
                            break;
                        }
                    }
                }
                lambda *= 10.0;
            }
            if !ever_solved {
                return Err(Error::NumericalFailure(
                    "normal equations are not solvable after damping escalation".into(),
                ));
            }
            let Some((trial, dx)) = accepted else {
                break;
            };
            window.nodes = trial;
            ne = build_normal_equations(window, &corrs, cfg)?;
            history.push(ne.cost);
            if step_is_small(&dx, cfg) {
                break;
            }
        }
        report.cost_history.push(history);
        report.final_cost = ne.cost;
        report.hessian_blocks = window
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| body_frame_block(&ne.node_block(i), &n.node.pose))
            .collect();
        if displacement_is_small(&start, &window.nodes, cfg) {
            report.converged = true;
            break;
        }
        // Association flipping between two states never settles further.
        if history_2.as_ref() == Some(&corrs) {
            break;
        }
        history_2 = history_1.replace(corrs);
    }
    Ok(report)
}

/// Marginal prior left by eliminating the oldest node. Only the factors
/// touching that node (its segment's points, the first velocity term, the
/// current prior, locks on it) enter the eliminated system; they are
/// linearized at the current estimate, which becomes the new prior's
/// linearization point.
pub fn marginalize_oldest(window: &WindowState, cfg: &SolverConfig) -> Result<MarginalPrior> {
    if window.nodes.len() < 2 || window.segments.is_empty() {
        return Err(Error::Input("marginalization needs at least two nodes".into()));
    }
    let corrs = window.correspondence_lists();
    let ne = assemble(
        &window.nodes,
        &corrs,
        &window.prior,
        &window.locks,
        cfg,
        Scope::Touching(0),
        true,
    )?;

    let mut involved = vec![1usize];
    if window.nodes.len() > 2 {
        involved.push(2);
    }
    for id in &window.prior.node_ids {
        if let Some(s) = window.slot_of(*id) {
            if s != 0 && !involved.contains(&s) {
                involved.push(s);
            }
        }
    }
    involved.sort_unstable();

    let order: Vec<usize> = std::iter::once(0).chain(involved.iter().copied()).collect();
    let dim = order.len() * NODE_DOF;
    let mut h = DMatrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    for (a, &i) in order.iter().enumerate() {
        b.fixed_rows_mut::<NODE_DOF>(a * NODE_DOF)
            .copy_from(&ne.b.fixed_rows::<NODE_DOF>(i * NODE_DOF));
        for (c, &j) in order.iter().enumerate() {
            h.fixed_view_mut::<NODE_DOF, NODE_DOF>(a * NODE_DOF, c * NODE_DOF)
                .copy_from(&ne.h.fixed_view::<NODE_DOF, NODE_DOF>(i * NODE_DOF, j * NODE_DOF));
        }
    }
    let (hm, bm) = schur_complement(&h, &b, NODE_DOF, cfg.marginal_eps)?;
    let ids = involved.iter().map(|&s| window.nodes[s].id).collect();
    let lin = involved.iter().map(|&s| window.nodes[s].node.pose).collect();
    Ok(MarginalPrior::new(ids, hm, bm, lin))
}

/// Direction rows for locking: translational directions become `(v, 0)`,
/// rotational ones `(0, v)`.
pub fn tangent_direction(v: &nalgebra::Vector3<f64>, rotational: bool) -> Vector6<f64> {
    let mut d = Vector6::zeros();
    let o = if rotational { 3 } else { 0 };
    d.fixed_rows_mut::<3>(o).copy_from(v);
    d
}
