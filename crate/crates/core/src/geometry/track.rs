//! Ordered gap sequences with per-gap randomization ranges, and the bundled
//! track presets.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gap::GapSpec;
use super::region::GapShape;
use super::GeometryError;

/// Closed interval; `[lo, hi]` is normalized so that `lo <= hi`.
pub type Range = [f64; 2];

fn sorted(r: Range) -> Range {
    if r[0] <= r[1] {
        r
    } else {
        [r[1], r[0]]
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, r: Range) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackGap {
    pub nominal: GapSpec,
    /// World x/y/z ranges for the gap center; the nominal center if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_range: Option<[Range; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roll_range: Option<Range>,
    /// Elevation of the normal above horizontal (radians). Single-gap tracks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch_range: Option<Range>,
}

impl TrackGap {
    pub fn fixed(nominal: GapSpec) -> Self {
        Self {
            nominal,
            position_range: None,
            roll_range: None,
            pitch_range: None,
        }
    }
}

/// Start box for task-space resets. `along`/`lateral` are measured in the
/// first gap's frame (normal / horizontal in-plane axis), `height` is world z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartRegion {
    pub along: Range,
    pub lateral: Range,
    pub height: Range,
}

impl Default for StartRegion {
    fn default() -> Self {
        Self {
            along: [-4.5, -2.0],
            lateral: [-3.0, 3.0],
            height: [1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    pub name: String,
    pub gaps: Vec<TrackGap>,
    #[serde(default)]
    pub start: StartRegion,
    /// Distance past the last plane the vehicle center must reach for success.
    #[serde(default = "default_exit_margin")]
    pub exit_margin: f64,
}

fn default_exit_margin() -> f64 {
    0.5
}

impl TrackConfig {
    pub fn single(name: &str, gap: TrackGap) -> Self {
        Self {
            name: name.to_string(),
            gaps: vec![gap],
            start: StartRegion::default(),
            exit_margin: default_exit_margin(),
        }
    }

    /// Sort every range and check the invariants.
    pub fn normalized(mut self) -> Result<Self, GeometryError> {
        for g in &mut self.gaps {
            g.position_range = g.position_range.map(|r| r.map(sorted));
            g.roll_range = g.roll_range.map(sorted);
            g.pitch_range = g.pitch_range.map(sorted);
        }
        self.start.along = sorted(self.start.along);
        self.start.lateral = sorted(self.start.lateral);
        self.start.height = sorted(self.start.height);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::InvalidTrack(format!("{}: {msg}", self.name)));
        if self.gaps.is_empty() {
            return bad("no gaps".into());
        }
        let finite_range = |r: &Range| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        let n0 = self.gaps[0].nominal.normal;
        for (i, g) in self.gaps.iter().enumerate() {
            g.nominal.validate()?;
            let ranges = g
                .position_range
                .iter()
                .flatten()
                .chain(g.roll_range.iter())
                .chain(g.pitch_range.iter());
            for r in ranges {
                if !finite_range(r) {
                    return bad(format!("gap {} has an empty or non-finite range {r:?}", i + 1));
                }
            }
            if (g.nominal.normal - n0).norm() > 1e-9 {
                return bad(format!("gap {} is not parallel to gap 1", i + 1));
            }
            if g.pitch_range.is_some() && self.gaps.len() > 1 {
                return bad("pitched gaps are supported on single-gap tracks only".into());
            }
        }
        for r in [&self.start.along, &self.start.lateral, &self.start.height] {
            if !finite_range(r) {
                return bad(format!("start range {r:?} is empty or non-finite"));
            }
        }
        if !(self.exit_margin.is_finite() && self.exit_margin >= 0.0) {
            return bad(format!("exit margin {} must be non-negative", self.exit_margin));
        }
        Ok(())
    }
}

/// Draw one concrete gap sequence from the track's ranges.
pub fn randomize_track<R: Rng + ?Sized>(track: &TrackConfig, rng: &mut R) -> Vec<GapSpec> {
    track
        .gaps
        .iter()
        .map(|g| {
            let mut spec = g.nominal.clone();
            if let Some(r) = g.position_range {
                spec.center = Vector3::new(draw(rng, r[0]), draw(rng, r[1]), draw(rng, r[2]));
            }
            if let Some(r) = g.roll_range {
                spec.roll = draw(rng, r);
            }
            if let Some(r) = g.pitch_range {
                let e = draw(rng, r);
                let h = Vector3::new(spec.normal.x, spec.normal.y, 0.0);
                let h = if h.norm() > 1e-12 { h.normalize() } else { Vector3::x() };
                spec.normal = h * e.cos() + Vector3::z() * e.sin();
            }
            spec
        })
        .collect()
}

pub const PRESET_NAMES: [&str; 14] = [
    "track1",
    "track2",
    "track3",
    "track4",
    "track5",
    "track6",
    "easy",
    "single_rect",
    "single_triangle",
    "single_parallelogram",
    "single_ellipse",
    "single_diamond",
    "single_arch",
    "single_pitched",
];

fn ranged(center: [Range; 3], roll: Range) -> TrackGap {
    let nominal = GapSpec::new(
        Vector3::new(
            0.5 * (center[0][0] + center[0][1]),
            0.5 * (center[1][0] + center[1][1]),
            0.5 * (center[2][0] + center[2][1]),
        ),
        0.5 * (roll[0] + roll[1]),
        GapShape::default_rectangle(),
    );
    TrackGap {
        nominal,
        position_range: Some(center),
        roll_range: Some(roll),
        pitch_range: None,
    }
}

fn first(roll: Range) -> TrackGap {
    ranged([[0.0, 0.0], [0.0, 0.0], [1.5, 1.5]], roll)
}

fn consecutive(name: &str, gaps: Vec<TrackGap>) -> TrackConfig {
    TrackConfig {
        name: name.to_string(),
        gaps,
        start: StartRegion::default(),
        exit_margin: default_exit_margin(),
    }
}

fn single_shape(name: &str, shape: GapShape, roll: Range) -> TrackConfig {
    let mut g = first(roll);
    g.nominal.shape = shape;
    TrackConfig::single(name, g)
}

pub fn preset(name: &str) -> Result<TrackConfig, GeometryError> {
    let track = match name {
        "track1" => consecutive(
            name,
            vec![
                first([PI / 4.3, PI / 3.7]),
                ranged([[0.80, 0.90], [-0.05, 0.05], [1.45, 1.55]], [PI / 7.0, PI / 6.0]),
            ],
        ),
        "track2" => consecutive(
            name,
            vec![
                first([PI / 3.3, PI / 2.7]),
                ranged([[0.85, 0.95], [-0.10, 0.00], [1.35, 1.45]], [PI / 6.5, PI / 5.5]),
            ],
        ),
        "track3" => consecutive(
            name,
            vec![
                first([PI / 4.3, PI / 3.7]),
                ranged([[1.30, 1.40], [-0.75, -0.65], [1.45, 1.55]], [-PI / 5.8, -PI / 6.2]),
            ],
        ),
        "track4" => consecutive(
            name,
            vec![
                first([PI / 4.0, PI / 3.5]),
                ranged([[1.00, 1.10], [-0.10, 0.00], [1.35, 1.45]], [-PI / 18.0, -PI / 36.0]),
                ranged([[1.80, 1.85], [0.00, 0.05], [1.35, 1.40]], [-PI / 3.7, -PI / 4.3]),
            ],
        ),
        "track5" => consecutive(
            name,
            vec![
                first([PI / 4.3, PI / 3.7]),
                ranged([[1.3, 1.4], [-0.70, -0.60], [1.40, 1.45]], [-PI / 5.8, -PI / 6.2]),
                ranged([[2.7, 2.8], [-0.05, 0.05], [1.45, 1.55]], [PI / 4.3, PI / 3.7]),
            ],
        ),
        "track6" => consecutive(
            name,
            vec![
                first([PI / 6.2, PI / 5.8]),
                ranged([[0.9, 0.95], [-0.45, -0.40], [1.45, 1.55]], [-PI / 5.8, -PI / 6.2]),
                ranged([[1.75, 1.8], [-0.05, 0.00], [1.45, 1.55]], [PI / 6.2, PI / 5.8]),
            ],
        ),
        "easy" => single_shape(name, GapShape::Rectangle { width: 0.60, height: 0.40 }, [0.0, 0.0]),
        "single_rect" => single_shape(name, GapShape::default_rectangle(), [-PI / 2.0, PI / 2.0]),
        "single_triangle" => single_shape(name, GapShape::default_triangle(), [-PI / 4.0, PI / 4.0]),
        "single_parallelogram" => single_shape(name, GapShape::default_parallelogram(), [-PI / 4.0, PI / 4.0]),
        "single_ellipse" => single_shape(name, GapShape::default_ellipse(), [-PI / 2.0, PI / 2.0]),
        "single_diamond" => single_shape(name, GapShape::default_diamond(), [-PI / 4.0, PI / 4.0]),
        "single_arch" => single_shape(name, GapShape::default_arch(), [-PI / 4.0, PI / 4.0]),
        "single_pitched" => {
            let mut t = single_shape(name, GapShape::default_rectangle(), [0.0, 0.0]);
            t.gaps[0].pitch_range = Some([PI / 9.0, PI / 4.0]);
            t
        }
        other => return Err(GeometryError::UnknownPreset(other.to_string())),
    };
    track.normalized()
}
