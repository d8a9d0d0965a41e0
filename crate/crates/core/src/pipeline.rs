//! Scan-by-scan odometry loop.
//!
//! Per scan: assess the interval with PCA, slice the scan on the node grid,
//! then for each slice extend the window, solve it, react to degeneracy of
//! the newest segment, and retire the oldest segment into the map once the
//! window holds more than `window_size` segments.

use std::fmt;
use std::time::Instant;

use crate::degeneracy::{
    build_info_matrices, localizability, manage, sensor_frame_pairs, LocalizabilityReport,
    ManageLimits, MgmtAction, Thresholds,
};
use crate::error::{Error, Result};
use crate::map::{insert_segment, voxel_downsample, SearchMode, VoxelMap};
use crate::optimizer::{
    solve_window, DirectionLock, SegmentInterpolant, SolveReport, SolverConfig, WindowState,
};
use crate::pca::{assess, summarize_cloud, PcaSummary, Verdict};
use crate::scan::{segment_scan, CloudSegment, Scan, TimedPoint};
use crate::se3::{Pose, StampedPose};

/// Largest translation between consecutive finalized nodes, meters.
pub const DIVERGENCE_TRANSLATION: f64 = 5.0;
/// Largest rotation between consecutive finalized nodes, degrees.
pub const DIVERGENCE_ROTATION_DEG: f64 = 30.0;

const GRID_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct OdometryConfig {
    pub dt_init: f64,
    pub alpha: f64,
    /// Principal-direction change threshold, degrees.
    pub k_vec: f64,
    pub k_val: f64,
    pub window_size: usize,
    pub kappa: [usize; 3],
    pub c_strong: f64,
    pub c_contrib: f64,
    pub ds_init: f64,
    pub ds_floor: f64,
    pub span_cap: f64,
    /// Downsampling cell for the PCA summary, meters.
    pub pca_ds: f64,
    pub enable_pca: bool,
    pub enable_dm: bool,
    /// When false every point is treated as measured at its scan's start.
    pub deskew: bool,
    pub voxel_size: f64,
    pub max_points_per_voxel: usize,
    pub search_mode: SearchMode,
    pub map_radius: f64,
    /// Information of the prior pinning the first node.
    pub anchor_information: f64,
    pub lock_weight: f64,
    /// Adds wall-clock solve times to the diagnostics.
    pub record_timing: bool,
    pub solver: SolverConfig,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        Self {
            dt_init: 0.04,
            alpha: 0.5,
            k_vec: 10.0,
            k_val: 0.1,
            window_size: 3,
            kappa: [125, 50, 15],
            c_strong: 0.9,
            c_contrib: 0.5,
            ds_init: 0.5,
            ds_floor: 0.1,
            span_cap: 0.1,
            pca_ds: 0.25,
            enable_pca: true,
            enable_dm: true,
            deskew: true,
            voxel_size: 0.5,
            max_points_per_voxel: 20,
            search_mode: SearchMode::Faces7,
            map_radius: 100.0,
            anchor_information: 1e6,
            lock_weight: 1e6,
            record_timing: false,
            solver: SolverConfig::default(),
        }
    }
}

impl OdometryConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.dt_init > 0.0) {
            return fail("dt_init must be > 0");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("0 < alpha < 1");
        }
        if self.window_size < 1 {
            return fail("window_size (M) must be >= 1");
        }
        let [k1, k2, k3] = self.kappa;
        if !(k1 > k2 && k2 > k3 && k3 > 0) {
            return fail("kappa1 > kappa2 > kappa3 > 0");
        }
        if !(self.c_contrib > 0.0 && self.c_contrib <= self.c_strong && self.c_strong <= 1.0) {
            return fail("0 < c_contrib <= c_strong <= 1");
        }
        if !(self.ds_floor > 0.0 && self.ds_floor < self.ds_init) {
            return fail("0 < ds_floor < ds_init");
        }
        if !(self.span_cap >= self.dt_init) {
            return fail("span_cap >= dt_init");
        }
        if !(self.voxel_size > 0.0 && self.pca_ds > 0.0 && self.map_radius > 0.0) {
            return fail("voxel_size, pca_ds and map_radius must be > 0");
        }
        if self.max_points_per_voxel == 0 {
            return fail("max_points_per_voxel must be >= 1");
        }
        let s = &self.solver;
        if s.max_outer == 0 || s.max_inner == 0 {
            return fail("iteration limits must be >= 1");
        }
        if !(s.huber_delta > 0.0 && s.point_information > 0.0) {
            return fail("huber_delta and point_information must be > 0");
        }
        if !(s.velocity_information_rho > 0.0 && s.velocity_information_phi > 0.0) {
            return fail("velocity information must be > 0");
        }
        if s.plane_neighbors < 3 || s.plane_min_count < 3 {
            return fail("plane fits need at least 3 neighbors");
        }
        if !(s.max_corr_dist > 0.0) {
            return fail("max_corr_dist must be > 0");
        }
        Ok(())
    }

    fn thresholds(&self) -> Thresholds {
        Thresholds {
            c_strong: self.c_strong,
            c_contrib: self.c_contrib,
            kappa: self.kappa,
        }
    }

    fn limits(&self) -> ManageLimits {
        ManageLimits {
            span_cap: self.span_cap,
            ds_floor: self.ds_floor,
        }
    }
}

/// True iff the nodes are more than 5 m or 30 degrees apart.
pub fn check_divergence(prev: &StampedPose, next: &StampedPose) -> bool {
    let d = prev.pose.inverse() * next.pose;
    d.translation().norm() > DIVERGENCE_TRANSLATION
        || d.rotation_angle().to_degrees() > DIVERGENCE_ROTATION_DEG
}

/// One diagnostics line: `kind t=<stamp> key=value ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub kind: &'static str,
    pub stamp: f64,
    pub fields: Vec<(&'static str, String)>,
}

impl Event {
    fn new(kind: &'static str, stamp: f64) -> Self {
        Self {
            kind,
            stamp,
            fields: Vec::new(),
        }
    }

    fn with(mut self, key: &'static str, value: impl fmt::Display) -> Self {
        self.fields.push((key, value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| *k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} t={}", self.kind, self.stamp)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

fn level_counts(report: &LocalizabilityReport) -> [String; 4] {
    let join = |it: &mut dyn Iterator<Item = usize>| it.map(|c| c.to_string()).collect::<Vec<_>>().join(",");
    let t: String = report.translation.iter().map(|c| c.level.as_str()).collect();
    let r: String = report.rotation.iter().map(|c| c.level.as_str()).collect();
    let ls = join(&mut report.translation.iter().chain(&report.rotation).map(|c| c.l_s));
    let lc = join(&mut report.translation.iter().chain(&report.rotation).map(|c| c.l_c));
    [t, r, ls, lc]
}

/// Streaming odometry state.
pub struct Odometry {
    cfg: OdometryConfig,
    map: VoxelMap,
    window: Option<WindowState>,
    /// Points of the slice that extends past the last scan.
    carry: Vec<TimedPoint>,
    last_summary: Option<PcaSummary>,
    dt: f64,
    last_scan_end: f64,
    /// The newest segment asked to absorb a slice not yet received.
    pending_merge: bool,
    /// Constant-velocity prediction of the newest node when it was created.
    newest_prediction: Pose,
    newest_locked: bool,
    trajectory: Vec<StampedPose>,
    events: Vec<Event>,
    halted: bool,
}

impl Odometry {
    pub fn new(cfg: OdometryConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            map: VoxelMap::new(cfg.voxel_size, cfg.max_points_per_voxel, cfg.search_mode),
            dt: cfg.dt_init,
            cfg,
            window: None,
            carry: Vec::new(),
            last_summary: None,
            last_scan_end: f64::NEG_INFINITY,
            pending_merge: false,
            newest_prediction: Pose::identity(),
            newest_locked: false,
            trajectory: Vec::new(),
            events: Vec::new(),
            halted: false,
        })
    }

    pub fn config(&self) -> &OdometryConfig {
        &self.cfg
    }

    pub fn map(&self) -> &VoxelMap {
        &self.map
    }

    pub fn window(&self) -> Option<&WindowState> {
        self.window.as_ref()
    }

    /// Finalized control nodes so far.
    pub fn trajectory(&self) -> &[StampedPose] {
        &self.trajectory
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Consumes one scan and returns the nodes finalized by it.
    pub fn process_scan(&mut self, scan: &Scan) -> Result<Vec<StampedPose>> {
        if self.halted {
            return Err(Error::Input("odometry halted after divergence".into()));
        }
        if scan.t_begin < self.last_scan_end - GRID_EPS {
            return Err(Error::Input(format!(
                "scan starting at {} precedes the previous scan end {}",
                scan.t_begin, self.last_scan_end
            )));
        }
        if scan.points.is_empty() {
            return Err(Error::EmptyScan);
        }
        self.last_scan_end = scan.t_end;
        let scan = if self.cfg.deskew {
            scan.clone()
        } else {
            let points = scan.points.iter().map(|p| TimedPoint::new(p.position, scan.t_begin)).collect();
            Scan::new(points, scan.t_begin, scan.t_end)?
        };
        self.events.push(Event::new("scan", scan.t_begin).with("points", scan.points.len()));
        self.assess_interval(&scan);

        let Some(window) = self.window.as_ref() else {
            self.bootstrap(&scan);
            return Ok(Vec::new());
        };
        let anchor = window.newest().node.stamp;
        let mut points = std::mem::take(&mut self.carry);
        points.extend(scan.points.iter().copied());
        let start = points.first().map_or(anchor, |p| p.stamp).min(anchor).min(scan.t_begin);
        let stream = Scan::new(points, start, scan.t_end)?;
        let mut slices = segment_scan(&stream, self.dt, anchor)?;
        if slices.last().is_some_and(|s| s.t_stop > scan.t_end + GRID_EPS) {
            self.carry = slices.pop().expect("nonempty").points;
        }

        let before = self.trajectory.len();
        let mut i = 0;
        while i < slices.len() {
            if std::mem::take(&mut self.pending_merge) && self.fits_merge(&slices[i]) {
                self.merge_newest(slices[i].clone())?;
            } else {
                self.push_slice(slices[i].clone())?;
            }
            i += 1;
            i += self.settle(&slices[i..])?;
            self.slide_excess()?;
        }
        self.evict();
        Ok(self.trajectory[before..].to_vec())
    }

    /// Finalizes every node still in the window. Points of an unfinished
    /// slice are dropped.
    pub fn finish(&mut self) -> Result<Vec<StampedPose>> {
        let before = self.trajectory.len();
        if self.halted {
            return Ok(Vec::new());
        }
        if let Some(window) = self.window.take() {
            for n in &window.nodes {
                self.finalize(n.node)?;
            }
        }
        self.carry.clear();
        Ok(self.trajectory[before..].to_vec())
    }

    fn assess_interval(&mut self, scan: &Scan) {
        let mut dt = self.cfg.dt_init;
        if self.cfg.enable_pca {
            let sample = voxel_downsample(&scan.positions(), self.cfg.pca_ds);
            match summarize_cloud(&sample) {
                Ok(summary) => {
                    if let Some(last) = &self.last_summary {
                        match assess(&summary, last, self.cfg.k_vec, self.cfg.k_val) {
                            Ok(d) => {
                                self.events.push(
                                    Event::new("pca", scan.t_begin)
                                        .with("verdict", if d.verdict == Verdict::Reduce { "reduce" } else { "keep" })
                                        .with("phi_max", format!("{:.3}", d.phi_max))
                                        .with("v_max", format!("{:.4}", d.v_max)),
                                );
                                if d.verdict == Verdict::Reduce {
                                    dt = self.cfg.alpha * self.cfg.dt_init;
                                }
                            }
                            Err(e) => self.events.push(Event::new("pca_skip", scan.t_begin).with("reason", quote(&e))),
                        }
                    }
                    self.last_summary = Some(summary);
                }
                Err(e) => self.events.push(Event::new("pca_skip", scan.t_begin).with("reason", quote(&e))),
            }
        }
        if dt != self.dt {
            self.events.push(Event::new("dt_change", scan.t_begin).with("dt", dt).with("from", self.dt));
        }
        self.dt = dt;
    }

    // The first scan seeds the map at the identity pose and the window with
    // one pinned node at the scan's end.
    fn bootstrap(&mut self, scan: &Scan) {
        self.map.insert_points(scan.points.iter().map(|p| p.position));
        let first = StampedPose::new(Pose::identity(), scan.t_end);
        self.window = Some(WindowState::anchored(first, self.cfg.anchor_information));
        self.events.push(Event::new("bootstrap", scan.t_end).with("map_points", self.map.num_points()));
    }

    fn window_mut(&mut self) -> &mut WindowState {
        self.window.as_mut().expect("bootstrapped")
    }

    fn push_slice(&mut self, slice: CloudSegment) -> Result<()> {
        let ds = self.cfg.ds_init;
        let window = self.window_mut();
        let prediction = window.predict(slice.t_stop)?;
        window.push_segment(slice, ds, prediction)?;
        self.newest_prediction = prediction;
        self.newest_locked = false;
        Ok(())
    }

    // A deferred merge was judged against the interval of its own scan; the
    // next scan may have widened it since.
    fn fits_merge(&mut self, slice: &CloudSegment) -> bool {
        let window = self.window.as_ref().expect("bootstrapped");
        let span = window.segments.last().map_or(0.0, |s| s.cloud.span()) + slice.span();
        let fits = span <= self.cfg.span_cap + GRID_EPS;
        if !fits {
            let stamp = window.newest().node.stamp;
            self.events.push(Event::new("merge_cancelled", stamp).with("span", format!("{span:.6}")));
        }
        fits
    }

    fn merge_newest(&mut self, slice: CloudSegment) -> Result<()> {
        let stamp = slice.t_stop;
        let window = self.window_mut();
        window.merge_newest(slice)?;
        let span = window.segments.last().expect("merged").cloud.span();
        let prediction = window.newest().node.pose;
        self.newest_prediction = prediction;
        self.newest_locked = false;
        self.events.push(Event::new("merge", stamp).with("span", format!("{span:.6}")));
        Ok(())
    }

    fn solve(&mut self) -> Result<SolveReport> {
        let started = self.cfg.record_timing.then(Instant::now);
        let window = self.window.as_mut().expect("bootstrapped");
        let report = solve_window(window, &self.map, &self.cfg.solver)?;
        let newest = window.newest().node;
        let seg = window.segments.last().expect("solved window has segments");
        let mut ev = Event::new("solve", newest.stamp)
            .with("iters", report.iterations)
            .with("outer", report.outer_iterations)
            .with("corr", seg.correspondences.len())
            .with("cost", format!("{:.6e}", report.final_cost))
            .with("converged", report.converged);
        if let Some(t) = started {
            ev = ev.with("ms", format!("{:.3}", t.elapsed().as_secs_f64() * 1e3));
        }
        self.events.push(ev);
        Ok(report)
    }

    fn newest_localizability(&self, report: &SolveReport) -> Result<LocalizabilityReport> {
        let window = self.window.as_ref().expect("bootstrapped");
        let n = window.nodes.len();
        let (lo, hi) = (&window.nodes[n - 2].node, &window.nodes[n - 1].node);
        let interp = SegmentInterpolant::new(lo, hi)?;
        let corrs = &window.segments.last().expect("nonempty").correspondences;
        let pairs = sensor_frame_pairs(corrs, &hi.pose, |t| {
            interp.fraction(t).map(|s| interp.pose_at(s)).unwrap_or(hi.pose)
        });
        let info = build_info_matrices(&pairs);
        Ok(localizability(&info, report.newest_block(), &self.cfg.thresholds()))
    }

    /// Solves the window and applies degeneracy management to the newest
    /// segment. Returns how many of `upcoming` slices were merged in.
    fn settle(&mut self, upcoming: &[CloudSegment]) -> Result<usize> {
        let mut consumed = 0;
        loop {
            let report = self.solve()?;
            if !self.cfg.enable_dm {
                return Ok(consumed);
            }
            let loc = self.newest_localizability(&report)?;
            let window = self.window.as_ref().expect("bootstrapped");
            let newest = window.newest();
            let seg = window.segments.last().expect("nonempty");
            let [t, r, ls, lc] = level_counts(&loc);
            self.events.push(
                Event::new("localizability", newest.node.stamp)
                    .with("trans", t)
                    .with("rot", r)
                    .with("l_s", ls)
                    .with("l_c", lc),
            );
            let next_span = upcoming.get(consumed).map_or(self.dt, CloudSegment::span);
            let mut action = manage(&loc, seg.ds, seg.cloud.span(), next_span, &self.cfg.limits());
            if action == MgmtAction::MergeNext && window.prior.contains(newest.id) {
                action = MgmtAction::ConstrainDirections(loc.directions_at(crate::degeneracy::Level::NonLocalizable));
            }
            let stamp = newest.node.stamp;
            match action {
                MgmtAction::Proceed => return Ok(consumed),
                MgmtAction::HalveVoxel => {
                    let seg = self.window_mut().segments.last_mut().expect("nonempty");
                    seg.ds /= 2.0;
                    let ds = seg.ds;
                    self.events.push(Event::new("halve_voxel", stamp).with("ds", ds));
                }
                MgmtAction::MergeNext => match upcoming.get(consumed) {
                    Some(next) => {
                        self.merge_newest(next.clone())?;
                        consumed += 1;
                    }
                    None => {
                        self.pending_merge = true;
                        self.events.push(Event::new("merge_deferred", stamp));
                        return Ok(consumed);
                    }
                },
                MgmtAction::ConstrainDirections(dirs) => {
                    if self.newest_locked || dirs.is_empty() {
                        return Ok(consumed);
                    }
                    self.newest_locked = true;
                    let target = self.newest_prediction;
                    let weight = self.cfg.lock_weight;
                    let window = self.window_mut();
                    let node_id = window.newest().id;
                    window.locks.push(DirectionLock {
                        node_id,
                        target,
                        directions: dirs.clone(),
                        weight,
                    });
                    self.events.push(Event::new("constrain", stamp).with("dirs", dirs.len()));
                }
            }
        }
    }

    fn slide_excess(&mut self) -> Result<()> {
        while self.window.as_ref().expect("bootstrapped").segments.len() > self.cfg.window_size {
            let cfg = self.cfg.solver.clone();
            let window = self.window_mut();
            let (node, segment) = window.slide(&cfg)?;
            let next = window.nodes[0].node;
            insert_segment(&mut self.map, &segment.cloud, &node.node, &next)?;
            self.finalize(node.node)?;
        }
        Ok(())
    }

    fn finalize(&mut self, node: StampedPose) -> Result<()> {
        let prev = self.trajectory.last().copied();
        self.trajectory.push(node);
        let mut event = Event::new("node", node.stamp);
        if let Some(p) = prev {
            event = event.with("span", format!("{:.6}", node.stamp - p.stamp));
        }
        self.events.push(event);
        if let Some(prev) = prev {
            if check_divergence(&prev, &node) {
                let d = prev.pose.inverse() * node.pose;
                let translation = d.translation().norm();
                let rotation_deg = d.rotation_angle().to_degrees();
                self.events.push(
                    Event::new("divergence", node.stamp)
                        .with("translation", format!("{translation:.3}"))
                        .with("rotation_deg", format!("{rotation_deg:.3}")),
                );
                self.halted = true;
                return Err(Error::DivergenceDetected {
                    stamp: node.stamp,
                    translation,
                    rotation_deg,
                });
            }
        }
        Ok(())
    }

    fn evict(&mut self) {
        if let Some(w) = &self.window {
            let center = *w.newest().node.pose.translation();
            self.map.evict_far(&center, self.cfg.map_radius);
        }
    }
}

fn quote(e: &Error) -> String {
    e.to_string().replace(' ', "_")
}

/// Runs a whole recording. On divergence the partial trajectory and events
/// are returned alongside the error.
pub fn run_sequence(cfg: OdometryConfig, scans: &[Scan]) -> Result<RunOutput> {
    let mut odo = Odometry::new(cfg)?;
    let mut error = None;
    for scan in scans {
        if let Err(e) = odo.process_scan(scan) {
            error = Some(e);
            break;
        }
    }
    if error.is_none() {
        if let Err(e) = odo.finish() {
            error = Some(e);
        }
    }
    Ok(RunOutput {
        trajectory: odo.trajectory,
        events: odo.events,
        error,
    })
}

#[derive(Debug)]
pub struct RunOutput {
    pub trajectory: Vec<StampedPose>,
    pub events: Vec<Event>,
    /// Set when the run stopped early.
    pub error: Option<Error>,
}

impl RunOutput {
    pub fn diverged(&self) -> bool {
        matches!(self.error, Some(Error::DivergenceDetected { .. }))
    }

    pub fn events_of<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn diagnostics(&self) -> String {
        self.events.iter().map(|e| format!("{e}\n")).collect()
    }
}
