//! Gap representation, gap-frame coordinates and the collider predicates.

mod collider;
mod gap;
mod region;
mod track;

pub use collider::{
    clearance_all, clearance_check, convex_hull, cross_section, fully_traversed, gap_coordinate,
    sample_edge_points, Clearance, ClearanceResult, ColliderSpec, GapCoordinate,
};
pub use gap::{facing_angles, GapFrame, GapSpec};
pub use region::{clip_half_plane, GapShape, Point2, Region, BOUNDARY_EPS};
pub use track::{preset, randomize_track, Range, StartRegion, TrackConfig, TrackGap, PRESET_NAMES};

/// Default number of edge samples in the point observation.
pub const DEFAULT_EDGE_POINTS: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid gap: {0}")]
    InvalidGap(String),
    #[error("invalid track {0}")]
    InvalidTrack(String),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("need at least 3 edge samples, got {0}")]
    TooFewSamples(usize),
}
