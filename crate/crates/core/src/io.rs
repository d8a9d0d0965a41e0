//! Plain-text scan and trajectory files.
//!
//! Scan files (`*.scan`, one sweep each):
//!
//! ```text
//! # comments anywhere
//! t_begin t_end count
//! x y z stamp
//! ...
//! ```
//!
//! Trajectories use the TUM layout `stamp tx ty tz qx qy qz qw`.
//! Floats are written in shortest round-trip form, so a write-read cycle
//! reproduces scans exactly and poses to rounding of the quaternion.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::scan::{Scan, TimedPoint};
use crate::se3::{Pose, StampedPose};

pub const SCAN_EXTENSION: &str = "scan";

/// Largest accepted deviation of a stored quaternion's norm from 1.
pub const QUATERNION_NORM_TOL: f64 = 1e-6;

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn parse_fields<const N: usize>(path: &Path, line_no: usize, line: &str) -> Result<[f64; N]> {
    let err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: line_no,
        msg,
    };
    let mut out = [0.0; N];
    let mut fields = line.split_whitespace();
    for (i, slot) in out.iter_mut().enumerate() {
        let f = fields
            .next()
            .ok_or_else(|| err(format!("expected {N} fields, found {i}")))?;
        *slot = f.parse().map_err(|_| err(format!("'{f}' is not a number")))?;
    }
    if fields.next().is_some() {
        return Err(err(format!("expected {N} fields, found more")));
    }
    Ok(out)
}

pub fn render_scan(scan: &Scan) -> String {
    let mut out = String::with_capacity(48 * scan.points.len() + 64);
    let _ = writeln!(out, "# t_begin t_end count");
    let _ = writeln!(out, "{} {} {}", scan.t_begin, scan.t_end, scan.points.len());
    for p in &scan.points {
        let q = &p.position;
        let _ = writeln!(out, "{} {} {} {}", q.x, q.y, q.z, p.stamp);
    }
    out
}

/// Parses a scan file. `path` only labels error messages.
pub fn parse_scan(text: &str, path: &Path) -> Result<Scan> {
    let mut lines = data_lines(text);
    let (header_no, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "missing header 't_begin t_end count'".into(),
    })?;
    let [t_begin, t_end, count] = parse_fields::<3>(path, header_no, header)?;
    if !(count >= 0.0 && count.fract() == 0.0) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: header_no,
            msg: format!("point count '{count}' is not a nonnegative integer"),
        });
    }
    let count = count as usize;
    let mut points = Vec::with_capacity(count);
    let mut last_no = header_no;
    for (no, line) in lines {
        let [x, y, z, stamp] = parse_fields::<4>(path, no, line)?;
        points.push(TimedPoint::new(Vector3::new(x, y, z), stamp));
        last_no = no;
    }
    if points.len() != count {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: last_no,
            msg: format!("header announces {count} points, file has {}", points.len()),
        });
    }
    Scan::new(points, t_begin, t_end).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: header_no,
        msg: e.to_string(),
    })
}

pub fn write_scan(path: &Path, scan: &Scan) -> Result<()> {
    write_atomic(path, &render_scan(scan))
}

pub fn read_scan(path: &Path) -> Result<Scan> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scan(&text, path)
}

/// `*.scan` files in `dir`, sorted by name.
pub fn list_scan_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == SCAN_EXTENSION) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// All scans of `dir` in file-name order. Fails on an empty directory.
pub fn read_scan_dir(dir: &Path) -> Result<Vec<Scan>> {
    let files = list_scan_files(dir)?;
    if files.is_empty() {
        return Err(Error::Input(format!("no scans found in {}", dir.display())));
    }
    files.iter().map(|f| read_scan(f)).collect()
}

/// Writes `scans` as `000000.scan`, `000001.scan`, ... into `dir`.
pub fn write_scan_dir(dir: &Path, scans: &[Scan]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, scan) in scans.iter().enumerate() {
        write_scan(&dir.join(format!("{i:06}.{SCAN_EXTENSION}")), scan)?;
    }
    Ok(())
}

pub fn render_trajectory(poses: &[StampedPose]) -> String {
    let mut out = String::with_capacity(160 * poses.len() + 48);
    let _ = writeln!(out, "# stamp tx ty tz qx qy qz qw");
    for p in poses {
        let t = p.pose.translation();
        let q = p.pose.quaternion();
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            p.stamp, t.x, t.y, t.z, q.i, q.j, q.k, q.w
        );
    }
    out
}

/// Parses a TUM trajectory. Stamps must increase strictly and every
/// quaternion must have unit norm within [`QUATERNION_NORM_TOL`].
pub fn parse_trajectory(text: &str, path: &Path) -> Result<Vec<StampedPose>> {
    let mut poses: Vec<StampedPose> = Vec::new();
    for (no, line) in data_lines(text) {
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: no,
            msg,
        };
        let [stamp, tx, ty, tz, qx, qy, qz, qw] = parse_fields::<8>(path, no, line)?;
        let q = Quaternion::new(qw, qx, qy, qz);
        if (q.norm() - 1.0).abs() > QUATERNION_NORM_TOL {
            return Err(err(format!("quaternion norm {} is not 1", q.norm())));
        }
        if let Some(prev) = poses.last() {
            if !(stamp > prev.stamp) {
                return Err(err(format!("stamp {stamp} does not increase past {}", prev.stamp)));
            }
        }
        let pose = Pose::from_quaternion(&UnitQuaternion::new_normalize(q), Vector3::new(tx, ty, tz));
        poses.push(StampedPose::new(pose, stamp));
    }
    Ok(poses)
}

pub fn write_trajectory(path: &Path, poses: &[StampedPose]) -> Result<()> {
    write_atomic(path, &render_trajectory(poses))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<StampedPose>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_scan() -> Scan {
        let pts = (0..5)
            .map(|i| TimedPoint::new(Vector3::new(0.1 * i as f64, -1.0 / 3.0, 2.5), 0.02 * i as f64))
            .collect();
        Scan::new(pts, 0.0, 0.1).unwrap()
    }

    #[test]
    fn scan_round_trip_is_exact() {
        let scan = sample_scan();
        assert_eq!(parse_scan(&render_scan(&scan), Path::new("s")).unwrap(), scan);
    }

    #[test]
    fn scan_count_mismatch_is_reported() {
        let text = "0 0.1 3\n0 0 0 0\n1 1 1 0.05\n";
        let err = parse_scan(text, Path::new("a.scan")).unwrap_err();
        assert!(err.to_string().contains("announces 3 points"), "{err}");
    }

    #[test]
    fn bad_number_names_the_line() {
        let text = "# header next\n0 0.1 1\n0 zero 0 0\n";
        match parse_scan(text, Path::new("a.scan")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trajectory_round_trip() {
        let poses: Vec<StampedPose> = (0..4)
            .map(|i| {
                let a = 0.7 * i as f64;
                StampedPose::new(
                    Pose::from_axis_angle(Vector3::new(0.1, -0.3, a), Vector3::new(a, 2.0, -1.0)),
                    0.1 * i as f64,
                )
            })
            .collect();
        let back = parse_trajectory(&render_trajectory(&poses), Path::new("t")).unwrap();
        for (a, b) in poses.iter().zip(&back) {
            assert_eq!(a.stamp, b.stamp);
            assert!((a.pose.rotation() - b.pose.rotation()).amax() < 1e-9);
            assert!((a.pose.translation() - b.pose.translation()).amax() < 1e-9);
        }
    }

    #[test]
    fn malformed_quaternion_names_the_line() {
        let text = "0 0 0 0 0 0 0 1\n0.1 0 0 0 0 0 0.5 0.5\n";
        match parse_trajectory(text, Path::new("t.txt")) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("quaternion"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_increasing_stamps_are_rejected() {
        let text = "0 0 0 0 0 0 0 1\n0 0 0 0 0 0 0 1\n";
        assert!(matches!(
            parse_trajectory(text, Path::new("t")),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, "a").unwrap();
        write_atomic(&path, "b").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "b");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
