//! Collision-free seed trajectories through a gap sequence: quintic segments
//! between straight, constant-velocity crossings flown in the gap attitude.

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;

use super::dataset::{SeedTrajectory, SeedTrajectoryDataset, TrajectorySample};
use super::EnvError;
use crate::dynamics::{QuadrotorState, CONTROL_DT};
use crate::geometry::{clearance_all, facing_angles, randomize_track, ColliderSpec, GapSpec, TrackConfig};
use crate::planner::{min_jerk_trajectory, FlatState, Trajectory};

/// Half-length of the crossing segment along the normal (m).
pub const CROSSING_HALF_LENGTH: f64 = 0.22;
/// Distance past the last plane where the trajectory comes to rest (m).
pub const EXIT_DISTANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedGenConfig {
    /// Crossing speed range along the normal (m/s).
    pub crossing_speed: [f64; 2],
    pub max_attempts: usize,
    pub sample_dt: f64,
}

impl Default for SeedGenConfig {
    fn default() -> Self {
        Self {
            crossing_speed: [1.5, 3.0],
            max_attempts: 50,
            sample_dt: CONTROL_DT,
        }
    }
}

enum Segment {
    Poly {
        traj: Trajectory,
        from: UnitQuaternion<f64>,
        to: UnitQuaternion<f64>,
    },
    Line {
        start: Vector3<f64>,
        velocity: Vector3<f64>,
        duration: f64,
        attitude: UnitQuaternion<f64>,
    },
}

impl Segment {
    fn duration(&self) -> f64 {
        match self {
            Segment::Poly { traj, .. } => traj.duration,
            Segment::Line { duration, .. } => *duration,
        }
    }

    fn eval(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, UnitQuaternion<f64>) {
        match self {
            Segment::Poly { traj, from, to } => {
                let s = (t / traj.duration).clamp(0.0, 1.0);
                let blend = s * s * (3.0 - 2.0 * s);
                let q = from.try_slerp(to, blend, 1e-12).unwrap_or(*to);
                (traj.position(t), traj.velocity(t), q)
            }
            Segment::Line {
                start,
                velocity,
                attitude,
                ..
            } => (start + velocity * t, *velocity, *attitude),
        }
    }
}

fn level_facing(normal: &Vector3<f64>) -> UnitQuaternion<f64> {
    let (_, yaw) = facing_angles(normal);
    UnitQuaternion::from_euler_angles(0.0, 0.0, yaw)
}

/// Time for a quintic covering `dist` between speeds `v0` and `v1`.
fn segment_time(dist: f64, v0: f64, v1: f64) -> f64 {
    let mean = 0.5 * (v0 + v1).max(0.5);
    (1.2 * dist / mean).max(0.3)
}

fn build(gaps: &[GapSpec], start: &Vector3<f64>, speeds: &[f64]) -> Result<Vec<Segment>, EnvError> {
    let plan = |a: &FlatState, b: &FlatState, dur: f64| {
        min_jerk_trajectory(a, b, dur).map_err(|e| EnvError::SeedGeneration(e.to_string()))
    };
    let mut segs = Vec::new();
    let mut cur = FlatState::rest(*start);
    let mut cur_att = level_facing(&gaps[0].normal);
    for (gap, &speed) in gaps.iter().zip(speeds) {
        let n = gap.normal;
        let c = gap.passable_center();
        let att = gap.frame().aligned_attitude();
        let entry = FlatState {
            position: c - n * CROSSING_HALF_LENGTH,
            velocity: n * speed,
            acceleration: Vector3::zeros(),
        };
        let dist = (entry.position - cur.position).norm();
        let dur = segment_time(dist, cur.velocity.norm(), speed);
        segs.push(Segment::Poly {
            traj: plan(&cur, &entry, dur)?,
            from: cur_att,
            to: att,
        });
        let duration = 2.0 * CROSSING_HALF_LENGTH / speed;
        segs.push(Segment::Line {
            start: entry.position,
            velocity: entry.velocity,
            duration,
            attitude: att,
        });
        cur = FlatState {
            position: entry.position + entry.velocity * duration,
            ..entry
        };
        cur_att = att;
    }
    let last = gaps.last().expect("non-empty");
    let rest = FlatState::rest(last.passable_center() + last.normal * EXIT_DISTANCE);
    let dist = (rest.position - cur.position).norm();
    segs.push(Segment::Poly {
        traj: plan(&cur, &rest, 1.5 * segment_time(dist, cur.velocity.norm(), 0.0))?,
        from: cur_att,
        to: level_facing(&last.normal),
    });
    Ok(segs)
}

fn sample_segments(segs: &[Segment], dt: f64) -> Vec<TrajectorySample> {
    let total: f64 = segs.iter().map(Segment::duration).sum();
    let n = (total / dt).floor() as usize;
    let mut out = Vec::with_capacity(n + 2);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..=n {
        let t = k as f64 * dt;
        while seg + 1 < segs.len() && t > seg_start + segs[seg].duration() {
            seg_start += segs[seg].duration();
            seg += 1;
        }
        let (p, v, q) = segs[seg].eval(t - seg_start);
        out.push(TrajectorySample {
            t,
            position: p,
            velocity: v,
            attitude: q,
        });
    }
    out
}

/// A trajectory from rest at `start` through every gap in order to rest
/// past the last one. Every sample is checked against all gaps; crossing
/// speeds are redrawn on a collision.
pub fn generate_seed_trajectory<R: Rng + ?Sized>(
    gaps: &[GapSpec],
    start: &Vector3<f64>,
    collider: &ColliderSpec,
    cfg: &SeedGenConfig,
    rng: &mut R,
) -> Result<SeedTrajectory, EnvError> {
    if gaps.is_empty() {
        return Err(EnvError::SeedGeneration("no gaps".into()));
    }
    let first = &gaps[0];
    if (start - first.center).dot(&first.normal) >= -CROSSING_HALF_LENGTH {
        return Err(EnvError::SeedGeneration("start must lie in front of the first gap".into()));
    }
    for _ in 0..cfg.max_attempts.max(1) {
        let speeds: Vec<f64> = gaps
            .iter()
            .map(|_| rng.random_range(cfg.crossing_speed[0]..=cfg.crossing_speed[1]))
            .collect();
        let samples = sample_segments(&build(gaps, start, &speeds)?, cfg.sample_dt);
        let clear = samples.iter().all(|s| {
            let st = QuadrotorState {
                bodyrate: Vector3::zeros(),
                ..s.state()
            };
            !clearance_all(&st, gaps, collider).is_collision()
        });
        if clear {
            return Ok(SeedTrajectory {
                gaps: gaps.to_vec(),
                samples,
            });
        }
    }
    Err(EnvError::SeedGeneration(format!(
        "no collision-free trajectory after {} attempts",
        cfg.max_attempts
    )))
}

/// Random start point in the track's start box (first gap frame).
pub fn sample_start<R: Rng + ?Sized>(track: &TrackConfig, gap: &GapSpec, rng: &mut R) -> Vector3<f64> {
    let n = gap.normal;
    let h = Vector3::new(n.x, n.y, 0.0);
    let h = if h.norm() > 1e-12 { h.normalize() } else { Vector3::x() };
    let side = Vector3::z().cross(&h);
    let s = &track.start;
    let along = rng.random_range(s.along[0]..=s.along[1]);
    let lateral = rng.random_range(s.lateral[0]..=s.lateral[1]);
    let height = rng.random_range(s.height[0]..=s.height[1]);
    let mut p = gap.center + h * along + side * lateral;
    p.z = height;
    p
}

/// `count` trajectories on independently randomized gap draws of `track`.
pub fn generate_dataset<R: Rng + ?Sized>(
    track: &TrackConfig,
    count: usize,
    collider: &ColliderSpec,
    cfg: &SeedGenConfig,
    rng: &mut R,
) -> Result<SeedTrajectoryDataset, EnvError> {
    generate_dataset_counted(track, count, collider, cfg, rng).map(|(d, _)| d)
}

/// Like [`generate_dataset`], also returning how many draws were rejected.
pub fn generate_dataset_counted<R: Rng + ?Sized>(
    track: &TrackConfig,
    count: usize,
    collider: &ColliderSpec,
    cfg: &SeedGenConfig,
    rng: &mut R,
) -> Result<(SeedTrajectoryDataset, usize), EnvError> {
    let mut trajectories = Vec::with_capacity(count);
    let mut failures = 0;
    while trajectories.len() < count {
        let gaps = randomize_track(track, rng);
        let start = sample_start(track, &gaps[0], rng);
        match generate_seed_trajectory(&gaps, &start, collider, cfg, rng) {
            Ok(t) => trajectories.push(t),
            Err(e) => {
                failures += 1;
                if failures > cfg.max_attempts {
                    return Err(e);
                }
            }
        }
    }
    Ok((SeedTrajectoryDataset { trajectories }, failures))
}
