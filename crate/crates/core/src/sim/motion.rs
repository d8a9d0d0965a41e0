use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::se3::{exp_map, interpolate_pose, Pose, StampedPose, Twist};

/// Constant body-frame twist rate held over `[t_start, t_end)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwistSegment {
    pub t_start: f64,
    pub t_end: f64,
    /// Per second, in the body frame.
    pub rate: Twist,
}

/// Piecewise-constant body twist schedule. The pose is
/// `T(t) = T(t_k) * Exp((t - t_k) * rate_k)` inside segment `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionProfile {
    pub initial: Pose,
    pub segments: Vec<TwistSegment>,
    /// Start times of the turns, for checking reaction latency.
    pub turn_onsets: Vec<f64>,
    knot_poses: Vec<Pose>,
}

impl MotionProfile {
    /// Builds a profile from consecutive `(duration, rate)` pieces starting at 0.
    pub fn from_pieces(initial: Pose, pieces: &[(f64, Twist)]) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Input("motion profile needs at least one piece".into()));
        }
        let mut segments = Vec::with_capacity(pieces.len());
        let mut knot_poses = Vec::with_capacity(pieces.len());
        let mut t = 0.0;
        let mut pose = initial;
        let mut turn_onsets = Vec::new();
        let mut turning = false;
        for &(dur, rate) in pieces {
            if !(dur > 0.0) || !rate.is_finite() {
                return Err(Error::Input(format!("invalid profile piece ({dur}, {rate:?})")));
            }
            let turns = rate.phi.norm() > 0.0;
            if turns && !turning {
                turn_onsets.push(t);
            }
            turning = turns;
            segments.push(TwistSegment {
                t_start: t,
                t_end: t + dur,
                rate,
            });
            knot_poses.push(pose);
            pose = pose * exp_map(&rate.scaled(dur));
            t += dur;
        }
        Ok(Self {
            initial,
            segments,
            turn_onsets,
            knot_poses,
        })
    }

    pub fn duration(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t_end)
    }

    fn segment_index(&self, t: f64) -> usize {
        self.segments
            .partition_point(|s| s.t_end <= t)
            .min(self.segments.len() - 1)
    }

    /// Exact pose at `t`, clamped to the profile's time range.
    pub fn pose_at(&self, t: f64) -> Pose {
        let t = t.clamp(0.0, self.duration());
        let k = self.segment_index(t);
        let s = &self.segments[k];
        self.knot_poses[k] * exp_map(&s.rate.scaled(t - s.t_start))
    }

    /// Body-frame twist rate at `t`.
    pub fn rate_at(&self, t: f64) -> Twist {
        self.segments[self.segment_index(t.clamp(0.0, self.duration()))].rate
    }

    pub fn knots(&self) -> Vec<f64> {
        let mut k: Vec<f64> = self.segments.iter().map(|s| s.t_start).collect();
        k.push(self.duration());
        k
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProfileKind {
    Stationary,
    Straight,
    Turning,
    AggressiveTurn,
}

/// Peak yaw rate of the aggressive profile, rad/s.
pub const AGGRESSIVE_PEAK_RATE: f64 = 3.5;

impl ProfileKind {
    pub const ALL: [ProfileKind; 4] = [
        ProfileKind::Stationary,
        ProfileKind::Straight,
        ProfileKind::Turning,
        ProfileKind::AggressiveTurn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::Stationary => "stationary",
            ProfileKind::Straight => "straight",
            ProfileKind::Turning => "turning",
            ProfileKind::AggressiveTurn => "aggressive_turn",
        }
    }

    /// Default length of the profile, seconds.
    pub fn default_duration(self) -> f64 {
        match self {
            ProfileKind::Stationary => 2.0,
            ProfileKind::Straight => 20.0,
            ProfileKind::Turning => 30.0,
            ProfileKind::AggressiveTurn => 20.0,
        }
    }

    /// Profile of `duration` seconds starting at `initial`.
    pub fn build(self, initial: Pose, duration: f64) -> Result<MotionProfile> {
        let twist = |vx: f64, wz: f64| Twist::new(Vector3::new(vx, 0.0, 0.0), Vector3::new(0.0, 0.0, wz));
        let lead = 1.0_f64.min(duration / 2.0);
        let pieces = match self {
            ProfileKind::Stationary => vec![(duration, Twist::zero())],
            ProfileKind::Straight => vec![(lead, Twist::zero()), (duration - lead, twist(1.0, 0.0))],
            // A 0.25 m circle at 2 rad/s.
            ProfileKind::Turning => vec![(lead, Twist::zero()), (duration - lead, twist(0.5, 2.0))],
            // Cruise legs separated by fast turns of alternating sign, so the
            // platform shuttles back and forth inside the room.
            ProfileKind::AggressiveTurn => {
                let mut p = vec![(lead, Twist::zero())];
                let (cruise, turn) = (1.5_f64, 0.9_f64);
                let mut t = lead;
                let mut sign = 1.0;
                while t < duration {
                    let c = cruise.min(duration - t);
                    p.push((c, twist(0.5, 0.0)));
                    t += c;
                    if t >= duration {
                        break;
                    }
                    let d = turn.min(duration - t);
                    p.push((d, twist(0.3, sign * AGGRESSIVE_PEAK_RATE)));
                    t += d;
                    sign = -sign;
                }
                p
            }
        };
        MotionProfile::from_pieces(initial, &pieces)
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "profile",
                name: s.to_string(),
                valid: Self::ALL.map(|p| p.name()).join(", "),
            })
    }
}

/// Dense pose samples of a profile. Knots are always sampled, so geodesic
/// interpolation between neighbours is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub samples: Vec<StampedPose>,
}

impl GroundTruth {
    /// Samples the closed-form pose at `rate_hz` plus every knot.
    pub fn sample(profile: &MotionProfile, rate_hz: f64) -> Self {
        Self::build(profile, rate_hz, |t| profile.pose_at(t))
    }

    /// Like [`Self::sample`] but composing per-step exponentials instead of
    /// evaluating the closed form.
    pub fn integrate(profile: &MotionProfile, rate_hz: f64) -> Self {
        let stamps = Self::stamps(profile, rate_hz);
        let mut samples = Vec::with_capacity(stamps.len());
        let mut pose = profile.initial;
        let mut prev = 0.0;
        for t in stamps {
            let mut cursor = prev;
            // Walk across knots so each step uses a single constant rate.
            while cursor < t {
                let k = profile.segment_index(cursor);
                let end = profile.segments[k].t_end.min(t);
                pose = pose * exp_map(&profile.segments[k].rate.scaled(end - cursor));
                cursor = end;
            }
            samples.push(StampedPose::new(pose, t));
            prev = t;
        }
        Self { samples }
    }

    fn stamps(profile: &MotionProfile, rate_hz: f64) -> Vec<f64> {
        let duration = profile.duration();
        let n = (duration * rate_hz).round() as usize;
        let mut stamps: Vec<f64> = (0..=n).map(|i| i as f64 / rate_hz).filter(|&t| t <= duration).collect();
        stamps.extend(profile.knots());
        stamps.sort_by(f64::total_cmp);
        stamps.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        stamps
    }

    fn build(profile: &MotionProfile, rate_hz: f64, pose: impl Fn(f64) -> Pose) -> Self {
        let samples = Self::stamps(profile, rate_hz)
            .into_iter()
            .map(|t| StampedPose::new(pose(t), t))
            .collect();
        Self { samples }
    }

    pub fn from_samples(samples: Vec<StampedPose>) -> Result<Self> {
        if samples.len() < 2 || samples.windows(2).any(|w| !(w[0].stamp < w[1].stamp)) {
            return Err(Error::Input("ground truth needs >= 2 strictly increasing samples".into()));
        }
        Ok(Self { samples })
    }

    pub fn t_begin(&self) -> f64 {
        self.samples[0].stamp
    }

    pub fn t_end(&self) -> f64 {
        self.samples[self.samples.len() - 1].stamp
    }

    /// Pose at `t` by geodesic interpolation between bracketing samples.
    pub fn pose_at(&self, t: f64) -> Result<Pose> {
        if t < self.t_begin() - 1e-9 || t > self.t_end() + 1e-9 {
            return Err(Error::OutOfSegment {
                t,
                t_a: self.t_begin(),
                t_b: self.t_end(),
            });
        }
        let i = self.samples.partition_point(|s| s.stamp <= t);
        if i == 0 {
            return Ok(self.samples[0].pose);
        }
        if i == self.samples.len() {
            return Ok(self.samples[i - 1].pose);
        }
        let (a, b) = (&self.samples[i - 1], &self.samples[i]);
        let s = ((t - a.stamp) / (b.stamp - a.stamp)).clamp(0.0, 1.0);
        interpolate_pose(&a.pose, &b.pose, s)
    }
}
