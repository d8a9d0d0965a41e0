//! Commands behind the `ctlo` binary, usable directly from Rust.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::config::load_config;
use crate::error::{Error, Result};
use crate::eval::{compute_ate, compute_rpe};
use crate::io::{read_scan_dir, read_trajectory, write_atomic, write_scan_dir, write_trajectory};
use crate::pipeline::{check_divergence, run_sequence, OdometryConfig, RunOutput};
use crate::sim::{simulate, GroundTruth, ProfileKind, SensorModel, WorldKind};

/// Where `cmd_simulate` puts the scans inside its output directory.
pub const SCANS_SUBDIR: &str = "scans";
/// Ground-truth trajectory written by `cmd_simulate`.
pub const GROUND_TRUTH_FILE: &str = "ground_truth.txt";

/// Runs the odometry over every scan of `scan_dir` and writes the finalized
/// trajectory and the diagnostics log. Both files are written even when the
/// run stops early; the stopping error is then returned.
pub fn cmd_run(
    scan_dir: &Path,
    config_path: Option<&Path>,
    out_traj: &Path,
    out_diag: &Path,
) -> Result<RunOutput> {
    let cfg = match config_path {
        Some(p) => load_config(p)?,
        None => OdometryConfig::default(),
    };
    let scans = read_scan_dir(scan_dir)?;
    let mut out = run_sequence(cfg, &scans)?;
    write_trajectory(out_traj, &out.trajectory)?;
    write_atomic(out_diag, &out.diagnostics())?;
    match out.error.take() {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulateSummary {
    pub scan_dir: PathBuf,
    pub ground_truth: PathBuf,
    pub scans: usize,
    pub points: usize,
}

/// Writes a seeded simulation: scans under `out_dir/scans`, ground truth
/// at 1 kHz in `out_dir/ground_truth.txt`. `duration` defaults to the
/// profile's own length.
pub fn cmd_simulate(
    world_name: &str,
    profile_name: &str,
    seed: u64,
    out_dir: &Path,
    duration: Option<f64>,
) -> Result<SimulateSummary> {
    let world: WorldKind = world_name.parse()?;
    let profile: ProfileKind = profile_name.parse()?;
    let duration = duration.unwrap_or_else(|| profile.default_duration());
    let sim = simulate(world, profile, duration, &SensorModel::default(), seed)?;
    let scan_dir = out_dir.join(SCANS_SUBDIR);
    write_scan_dir(&scan_dir, &sim.scans)?;
    let ground_truth = out_dir.join(GROUND_TRUTH_FILE);
    write_trajectory(&ground_truth, &sim.ground_truth.samples)?;
    Ok(SimulateSummary {
        scan_dir,
        ground_truth,
        scans: sim.scans.len(),
        points: sim.scans.iter().map(|s| s.points.len()).sum(),
    })
}

/// Evaluation printed by the `evaluate` command as `key=value` lines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub ate_rmse_m: f64,
    pub rpe_rmse_m: f64,
    /// Some consecutive estimate pair breaks the 5 m / 30 degree rule.
    pub diverged: bool,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ate_rmse_m={:.6}", self.ate_rmse_m)?;
        writeln!(f, "rpe_rmse_m={:.6}", self.rpe_rmse_m)?;
        writeln!(f, "diverged={}", self.diverged)
    }
}

pub fn cmd_evaluate(est_path: &Path, gt_path: &Path, delta: f64) -> Result<EvalReport> {
    if !(delta > 0.0) {
        return Err(Error::Input(format!("RPE delta must be > 0, got {delta}")));
    }
    let est = read_trajectory(est_path)?;
    let gt = GroundTruth::from_samples(read_trajectory(gt_path)?)?;
    Ok(EvalReport {
        ate_rmse_m: compute_ate(&est, &gt)?,
        rpe_rmse_m: compute_rpe(&est, &gt, delta)?,
        diverged: est.windows(2).any(|w| check_divergence(&w[0], &w[1])),
    })
}
