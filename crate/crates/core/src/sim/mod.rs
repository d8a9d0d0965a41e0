//! Synthetic scans from analytic worlds and known trajectories.
//!
//! Every ray is cast from the sensor pose at its own timestamp, so scans
//! taken while moving carry the same motion distortion as a real spinning
//! LiDAR.

mod motion;
mod world;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

pub use motion::{GroundTruth, MotionProfile, ProfileKind, TwistSegment, AGGRESSIVE_PEAK_RATE};
pub use world::{Rect, Surface, WorldKind, WorldSpec};

use crate::error::{Error, Result};
use crate::scan::{Scan, TimedPoint};
use crate::se3::Pose;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorModel {
    pub azimuth_steps: usize,
    pub elevation_rays: usize,
    /// Half of the vertical field of view, radians.
    pub half_fov: f64,
    pub duration: f64,
    pub noise_sigma: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            azimuth_steps: 360,
            elevation_rays: 16,
            half_fov: 15f64.to_radians(),
            duration: 0.1,
            noise_sigma: 0.01,
            min_range: 0.3,
            max_range: 100.0,
        }
    }
}

impl SensorModel {
    /// Unit ray direction in the sensor frame.
    pub fn ray(&self, azimuth_index: usize, elevation_index: usize) -> Vector3<f64> {
        let az = 2.0 * std::f64::consts::PI * azimuth_index as f64 / self.azimuth_steps as f64;
        let el = if self.elevation_rays == 1 {
            0.0
        } else {
            -self.half_fov + 2.0 * self.half_fov * elevation_index as f64 / (self.elevation_rays - 1) as f64
        };
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

/// One sweep starting at `t0`. Azimuth column `k` fires at
/// `t0 + k * duration / azimuth_steps`.
pub fn synthesize_scan<R: Rng>(
    world: &WorldSpec,
    pose_at: impl Fn(f64) -> Result<Pose>,
    t0: f64,
    sensor: &SensorModel,
    rng: &mut R,
) -> Result<Scan> {
    if !(sensor.duration > 0.0) || sensor.azimuth_steps == 0 || sensor.elevation_rays == 0 {
        return Err(Error::Input("sensor needs positive duration and at least one ray".into()));
    }
    let noise = Normal::new(0.0, sensor.noise_sigma.max(0.0))
        .map_err(|e| Error::Input(format!("noise model: {e}")))?;
    let mut points = Vec::with_capacity(sensor.azimuth_steps * sensor.elevation_rays);
    for k in 0..sensor.azimuth_steps {
        let stamp = t0 + sensor.duration * k as f64 / sensor.azimuth_steps as f64;
        let pose = pose_at(stamp)?;
        for e in 0..sensor.elevation_rays {
            let dir = sensor.ray(k, e);
            let Some(range) = world.cast(pose.translation(), &(pose.rotation() * dir)) else {
                continue;
            };
            if range < sensor.min_range || range > sensor.max_range {
                continue;
            }
            let noisy = if sensor.noise_sigma > 0.0 {
                range + rng.sample(noise)
            } else {
                range
            };
            points.push(TimedPoint::new(dir * noisy, stamp));
        }
    }
    Scan::new(points, t0, t0 + sensor.duration)
}

/// A complete simulated recording.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub world: WorldSpec,
    pub profile: MotionProfile,
    pub ground_truth: GroundTruth,
    pub scans: Vec<Scan>,
}

/// Consecutive scans covering the whole profile, with seeded range noise.
pub fn simulate(
    world: WorldKind,
    profile: ProfileKind,
    duration: f64,
    sensor: &SensorModel,
    seed: u64,
) -> Result<Simulation> {
    let world = WorldSpec::new(world);
    let start = Pose::from_translation(Vector3::new(0.0, 0.0, world.sensor_height));
    let profile = profile.build(start, duration)?;
    let ground_truth = GroundTruth::sample(&profile, 1000.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = ((duration / sensor.duration) + 1e-9).floor() as usize;
    let scans = (0..count)
        .map(|i| {
            let t0 = i as f64 * sensor.duration;
            synthesize_scan(&world, |t| Ok(profile.pose_at(t)), t0, sensor, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(Simulation {
        world,
        profile,
        ground_truth,
        scans,
    })
}
