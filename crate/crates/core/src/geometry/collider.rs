//! Oriented-box collider and its clearance/traversal predicates against a
//! zero-thickness gap plane.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::gap::GapSpec;
use super::region::{cross, Point2};
use super::GeometryError;
use crate::dynamics::QuadrotorState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColliderSpec {
    pub half_extents: Vector3<f64>,
}

impl Default for ColliderSpec {
    fn default() -> Self {
        Self {
            half_extents: Vector3::new(0.17, 0.17, 0.055),
        }
    }
}

impl ColliderSpec {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.half_extents.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(GeometryError::InvalidShape(format!(
                "collider half extents must be positive, got {:?}",
                self.half_extents
            )))
        }
    }

    /// Corners in body coordinates; corner `i` takes the sign pattern of
    /// bits `(i & 1, i & 2, i & 4)` on `(x, y, z)`.
    pub fn body_corners(&self) -> [Vector3<f64>; 8] {
        std::array::from_fn(|i| {
            let s = |bit: usize| if i & bit != 0 { 1.0 } else { -1.0 };
            self.half_extents.component_mul(&Vector3::new(s(1), s(2), s(4)))
        })
    }

    pub fn world_corners(&self, state: &QuadrotorState) -> [Vector3<f64>; 8] {
        self.body_corners().map(|c| state.position + state.attitude * c)
    }
}

/// Signed plane distances of the vehicle center and of each collider corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCoordinate {
    pub center: f64,
    pub corners: [f64; 8],
}

impl GapCoordinate {
    pub fn min_corner(&self) -> f64 {
        self.corners.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_corner(&self) -> f64 {
        self.corners.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn gap_coordinate(state: &QuadrotorState, gap: &GapSpec, collider: &ColliderSpec) -> GapCoordinate {
    let frame = gap.frame();
    let n = frame.normal();
    GapCoordinate {
        center: (state.position - frame.origin).dot(&n),
        corners: collider.world_corners(state).map(|c| (c - frame.origin).dot(&n)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clearance {
    /// The collider does not touch the plane.
    Free,
    /// The collider cuts the plane only inside the passable region.
    InPlaneSafe,
    Collision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearanceResult {
    pub class: Clearance,
    /// A point of the cross-section outside the region (world), on collision.
    pub witness: Option<Vector3<f64>>,
}

impl ClearanceResult {
    pub fn is_collision(&self) -> bool {
        self.class == Clearance::Collision
    }
}

const BOX_EDGES: [(usize, usize); 12] = [
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
];

/// Cross-section of the collider with the gap plane as a convex polygon in
/// plane coordinates, counterclockwise. Empty when the box misses the plane.
pub fn cross_section(state: &QuadrotorState, gap: &GapSpec, collider: &ColliderSpec) -> Vec<Point2> {
    let frame = gap.frame();
    let local = collider.world_corners(state).map(|c| frame.to_local(&c));
    let mut pts: Vec<Point2> = Vec::with_capacity(12);
    if local.iter().all(|c| c.x > 0.0) || local.iter().all(|c| c.x < 0.0) {
        return pts;
    }
    for c in &local {
        if c.x == 0.0 {
            pts.push(Point2::new(c.y, c.z));
        }
    }
    for (i, j) in BOX_EDGES {
        let (a, b) = (local[i], local[j]);
        if (a.x < 0.0 && b.x > 0.0) || (a.x > 0.0 && b.x < 0.0) {
            let p = a + (b - a) * (a.x / (a.x - b.x));
            pts.push(Point2::new(p.y, p.z));
        }
    }
    convex_hull(pts)
}

/// Andrew's monotone chain; collinear points dropped, result counterclockwise.
pub fn convex_hull(mut pts: Vec<Point2>) -> Vec<Point2> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2
                && cross(&(hull[hull.len() - 1] - hull[hull.len() - 2]), &(p - hull[hull.len() - 2])) <= 0.0
            {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    if hull.is_empty() {
        // all collinear: keep the two extremes
        return vec![pts[0], pts[pts.len() - 1]];
    }
    hull
}

/// Exact clearance of the collider against one gap plane. The plane outside
/// the passable region is an infinite obstacle.
pub fn clearance_check(state: &QuadrotorState, gap: &GapSpec, collider: &ColliderSpec) -> ClearanceResult {
    let poly = cross_section(state, gap, collider);
    if poly.is_empty() {
        return ClearanceResult { class: Clearance::Free, witness: None };
    }
    match gap.region().contains_convex(&poly) {
        Ok(()) => ClearanceResult { class: Clearance::InPlaneSafe, witness: None },
        Err(p) => ClearanceResult {
            class: Clearance::Collision,
            witness: Some(gap.frame().plane_to_world(&p)),
        },
    }
}

/// Clearance against every gap of a track; the worst class wins.
pub fn clearance_all(state: &QuadrotorState, gaps: &[GapSpec], collider: &ColliderSpec) -> ClearanceResult {
    let mut best = ClearanceResult { class: Clearance::Free, witness: None };
    for gap in gaps {
        let r = clearance_check(state, gap, collider);
        match r.class {
            Clearance::Collision => return r,
            Clearance::InPlaneSafe => best = r,
            Clearance::Free => {}
        }
    }
    best
}

/// Every collider corner strictly past the plane.
pub fn fully_traversed(state: &QuadrotorState, gap: &GapSpec, collider: &ColliderSpec) -> bool {
    gap_coordinate(state, gap, collider).min_corner() > 0.0
}

/// Edge samples of the region in world coordinates.
pub fn sample_edge_points(gap: &GapSpec, n: usize) -> Result<Vec<Vector3<f64>>, GeometryError> {
    if n < 3 {
        return Err(GeometryError::TooFewSamples(n));
    }
    let frame = gap.frame();
    Ok(gap
        .region()
        .boundary_samples(n)
        .iter()
        .map(|p| frame.plane_to_world(p))
        .collect())
}
