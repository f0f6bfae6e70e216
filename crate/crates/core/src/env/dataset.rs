//! Seed trajectory dataset stored as JSON lines: a header line followed by
//! one trajectory per line.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::dynamics::{quat_wxyz, QuadrotorState};
use crate::geometry::GapSpec;

pub const DATASET_FORMAT: &str = "narrowgap-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    #[serde(with = "quat_wxyz")]
    pub attitude: UnitQuaternion<f64>,
}

impl TrajectorySample {
    /// The sample as a vehicle state with zero bodyrate.
    pub fn state(&self) -> QuadrotorState {
        QuadrotorState {
            position: self.position,
            velocity: self.velocity,
            attitude: self.attitude,
            bodyrate: Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTrajectory {
    /// The gap poses the trajectory was planned against.
    pub gaps: Vec<GapSpec>,
    pub samples: Vec<TrajectorySample>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeedTrajectoryDataset {
    pub trajectories: Vec<SeedTrajectory>,
}

fn vec_finite(v: &Vector3<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl SeedTrajectory {
    /// First problem found, as `(field path, message)`.
    pub fn check(&self) -> Result<(), (String, String)> {
        if self.gaps.is_empty() {
            return Err(("gaps".into(), "no gaps".into()));
        }
        for (i, g) in self.gaps.iter().enumerate() {
            g.validate().map_err(|e| (format!("gaps[{i}]"), e.to_string()))?;
        }
        if self.samples.is_empty() {
            return Err(("samples".into(), "no samples".into()));
        }
        let mut prev_t = f64::NEG_INFINITY;
        for (i, s) in self.samples.iter().enumerate() {
            let at = |f: &str| format!("samples[{i}].{f}");
            if !s.t.is_finite() {
                return Err((at("t"), "not finite".into()));
            }
            if s.t <= prev_t {
                return Err((at("t"), format!("{} does not increase past {}", s.t, prev_t)));
            }
            prev_t = s.t;
            if !vec_finite(&s.position) {
                return Err((at("position"), "not finite".into()));
            }
            if !vec_finite(&s.velocity) {
                return Err((at("velocity"), "not finite".into()));
            }
            let q = s.attitude.quaternion();
            if !q.coords.iter().all(|x| x.is_finite()) || (q.norm() - 1.0).abs() > 1e-9 {
                return Err((at("attitude"), format!("quaternion norm {} is not 1", q.norm())));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawSample {
    t: f64,
    position: Vector3<f64>,
    velocity: Vector3<f64>,
    attitude: [f64; 4],
}

#[derive(Deserialize)]
struct RawTrajectory {
    gaps: Vec<GapSpec>,
    samples: Vec<RawSample>,
}

impl SeedTrajectoryDataset {
    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), EnvError> {
        let header = Header {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for t in &self.trajectories {
            writeln!(out, "{}", serde_json::to_string(t)?)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), EnvError> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    /// Parse and validate; errors name the line and field.
    pub fn read<R: Read>(input: R) -> Result<Self, EnvError> {
        let bad = |line: usize, field: &str, msg: String| EnvError::Dataset {
            line,
            field: field.to_string(),
            message: msg,
        };
        let mut lines = BufReader::new(input).lines().enumerate();
        let header: Header = loop {
            match lines.next() {
                None => return Err(bad(1, "header", "empty file".into())),
                Some((i, l)) => {
                    let l = l?;
                    if l.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&l).map_err(|e| bad(i + 1, "header", e.to_string()))?;
                }
            }
        };
        if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
            return Err(bad(
                1,
                "header",
                format!("expected {DATASET_FORMAT} v{DATASET_VERSION}, got {} v{}", header.format, header.version),
            ));
        }
        let mut trajectories = Vec::new();
        for (i, l) in lines {
            let l = l?;
            if l.trim().is_empty() {
                continue;
            }
            let raw: RawTrajectory = serde_json::from_str(&l).map_err(|e| bad(i + 1, "trajectory", e.to_string()))?;
            let mut samples = Vec::with_capacity(raw.samples.len());
            for (k, s) in raw.samples.into_iter().enumerate() {
                let [w, x, y, z] = s.attitude;
                let q = nalgebra::Quaternion::new(w, x, y, z);
                if !q.coords.iter().all(|c| c.is_finite()) || (q.norm() - 1.0).abs() > 1e-9 {
                    return Err(bad(
                        i + 1,
                        &format!("samples[{k}].attitude"),
                        format!("quaternion norm {} is not 1", q.norm()),
                    ));
                }
                samples.push(TrajectorySample {
                    t: s.t,
                    position: s.position,
                    velocity: s.velocity,
                    attitude: UnitQuaternion::new_unchecked(q),
                });
            }
            let traj = SeedTrajectory { gaps: raw.gaps, samples };
            traj.check().map_err(|(f, m)| bad(i + 1, &f, m))?;
            trajectories.push(traj);
        }
        Ok(Self { trajectories })
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let f = std::fs::File::open(path).map_err(|e| EnvError::Config(format!("{}: {e}", path.display())))?;
        Self::read(f)
    }
}
