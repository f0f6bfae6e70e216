//! Planar passable regions expressed in gap-frame coordinates `(y, z)`.

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::GeometryError;

pub type Point2 = Vector2<f64>;

/// Boundary points closer than this count as inside (closed regions).
pub const BOUNDARY_EPS: f64 = 1e-12;

/// Passable-region geometry, tagged by name in config files.
///
/// Coordinates are meters in the gap plane: `y` along the horizontal (long)
/// edge at zero roll and `z` upward. Every shape except a user-supplied
/// triangle is centered on its bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapShape {
    Rectangle { width: f64, height: f64 },
    Triangle { vertices: [[f64; 2]; 3] },
    /// `base` runs along +y, `side` leans at `angle` (radians) from the base.
    Parallelogram { base: f64, side: f64, angle: f64 },
    /// Semi-axes `a` along y and `b` along z.
    Ellipse { a: f64, b: f64 },
    /// Full diagonals along y (`width`) and z (`height`).
    Diamond { width: f64, height: f64 },
    /// Rectangle of `width` × `leg_height` topped by a half-disc of `radius`.
    Arch { radius: f64, leg_height: f64, width: f64 },
}

impl GapShape {
    pub fn name(&self) -> &'static str {
        match self {
            GapShape::Rectangle { .. } => "rectangle",
            GapShape::Triangle { .. } => "triangle",
            GapShape::Parallelogram { .. } => "parallelogram",
            GapShape::Ellipse { .. } => "ellipse",
            GapShape::Diamond { .. } => "diamond",
            GapShape::Arch { .. } => "arch",
        }
    }

    pub fn default_rectangle() -> Self {
        GapShape::Rectangle { width: 0.60, height: 0.20 }
    }

    pub fn default_triangle() -> Self {
        GapShape::Triangle {
            vertices: [[-0.40, -0.15], [0.40, -0.15], [0.0, 0.30]],
        }
    }

    pub fn default_parallelogram() -> Self {
        GapShape::Parallelogram {
            base: 0.60,
            side: 0.26,
            angle: 60f64.to_radians(),
        }
    }

    pub fn default_ellipse() -> Self {
        GapShape::Ellipse { a: 0.36, b: 0.14 }
    }

    pub fn default_diamond() -> Self {
        GapShape::Diamond { width: 0.80, height: 0.36 }
    }

    pub fn default_arch() -> Self {
        GapShape::Arch {
            radius: 0.25,
            leg_height: 0.15,
            width: 0.50,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(GeometryError::InvalidShape(format!("{} {name} must be positive, got {v}", self.name())))
            }
        };
        match *self {
            GapShape::Rectangle { width, height } | GapShape::Diamond { width, height } => {
                positive("width", width)?;
                positive("height", height)
            }
            GapShape::Triangle { vertices } => {
                let [a, b, c] = vertices.map(|v| Point2::new(v[0], v[1]));
                if vertices.iter().flatten().any(|v| !v.is_finite()) || cross(&(b - a), &(c - a)).abs() < 1e-12 {
                    return Err(GeometryError::InvalidShape(format!("degenerate triangle {vertices:?}")));
                }
                Ok(())
            }
            GapShape::Parallelogram { base, side, angle } => {
                positive("base", base)?;
                positive("side", side)?;
                if !(angle > 0.0 && angle < PI) {
                    return Err(GeometryError::InvalidShape(format!("parallelogram angle {angle} outside (0, π)")));
                }
                Ok(())
            }
            GapShape::Ellipse { a, b } => {
                positive("a", a)?;
                positive("b", b)
            }
            GapShape::Arch { radius, leg_height, width } => {
                positive("radius", radius)?;
                positive("leg_height", leg_height)?;
                positive("width", width)
            }
        }
    }

    /// Uniform scaling about the gap-frame origin.
    pub fn scaled(&self, s: f64) -> Self {
        match *self {
            GapShape::Rectangle { width, height } => GapShape::Rectangle { width: width * s, height: height * s },
            GapShape::Triangle { vertices } => GapShape::Triangle {
                vertices: vertices.map(|v| [v[0] * s, v[1] * s]),
            },
            GapShape::Parallelogram { base, side, angle } => GapShape::Parallelogram { base: base * s, side: side * s, angle },
            GapShape::Ellipse { a, b } => GapShape::Ellipse { a: a * s, b: b * s },
            GapShape::Diamond { width, height } => GapShape::Diamond { width: width * s, height: height * s },
            GapShape::Arch { radius, leg_height, width } => GapShape::Arch {
                radius: radius * s,
                leg_height: leg_height * s,
                width: width * s,
            },
        }
    }

    pub fn region(&self) -> Region {
        match *self {
            GapShape::Rectangle { width, height } => {
                let (hw, hh) = (0.5 * width, 0.5 * height);
                // top-left first, counterclockwise
                Region::Polygon(vec![
                    Point2::new(-hw, hh),
                    Point2::new(-hw, -hh),
                    Point2::new(hw, -hh),
                    Point2::new(hw, hh),
                ])
            }
            GapShape::Triangle { vertices } => {
                let mut pts: Vec<Point2> = vertices.iter().map(|v| Point2::new(v[0], v[1])).collect();
                if signed_area(&pts) < 0.0 {
                    pts[1..].reverse();
                }
                Region::Polygon(pts)
            }
            GapShape::Parallelogram { base, side, angle } => {
                let e = Point2::new(side * angle.cos(), side * angle.sin());
                let raw = [Point2::zeros(), Point2::new(base, 0.0), Point2::new(base, 0.0) + e, e];
                let c = raw.iter().sum::<Point2>() / 4.0;
                Region::Polygon(raw.iter().map(|p| p - c).collect())
            }
            GapShape::Diamond { width, height } => {
                let (hw, hh) = (0.5 * width, 0.5 * height);
                Region::Polygon(vec![
                    Point2::new(0.0, hh),
                    Point2::new(-hw, 0.0),
                    Point2::new(0.0, -hh),
                    Point2::new(hw, 0.0),
                ])
            }
            GapShape::Ellipse { a, b } => Region::Ellipse { a, b },
            GapShape::Arch { radius, leg_height, width } => {
                let total = leg_height + radius;
                let bottom = -0.5 * total;
                Region::Arch {
                    half_width: 0.5 * width,
                    bottom,
                    spring: bottom + leg_height,
                    radius,
                }
            }
        }
    }
}

pub fn cross(a: &Point2, b: &Point2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn signed_area(pts: &[Point2]) -> f64 {
    let n = pts.len();
    (0..n).map(|i| cross(&pts[i], &pts[(i + 1) % n])).sum::<f64>() * 0.5
}

/// Evaluated geometry of a passable region.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// Convex polygon, counterclockwise, starting at the canonical vertex.
    Polygon(Vec<Point2>),
    Ellipse { a: f64, b: f64 },
    /// Union of the rectangle `|y| ≤ half_width, bottom ≤ z ≤ spring` and the
    /// half-disc of `radius` centered at `(0, spring)` with `z ≥ spring`.
    Arch { half_width: f64, bottom: f64, spring: f64, radius: f64 },
}

impl Region {
    pub fn contains(&self, p: &Point2) -> bool {
        match self {
            Region::Polygon(v) => polygon_contains(v, p),
            Region::Ellipse { a, b } => {
                let (u, w) = (p.x / a, p.y / b);
                u * u + w * w <= 1.0 + BOUNDARY_EPS
            }
            Region::Arch { .. } => self.arch_rect_contains(p) || self.arch_disc_contains(p),
        }
    }

    fn arch_rect_contains(&self, p: &Point2) -> bool {
        let Region::Arch { half_width, bottom, spring, .. } = *self else {
            return false;
        };
        p.x.abs() <= half_width + BOUNDARY_EPS && p.y >= bottom - BOUNDARY_EPS && p.y <= spring + BOUNDARY_EPS
    }

    fn arch_disc_contains(&self, p: &Point2) -> bool {
        let Region::Arch { spring, radius, .. } = *self else {
            return false;
        };
        p.y >= spring - BOUNDARY_EPS && (p - Point2::new(0.0, spring)).norm() <= radius + BOUNDARY_EPS
    }

    /// Whether the convex polygon `poly` (any orientation, possibly
    /// degenerate) lies inside the closed region. Returns the first offending
    /// point otherwise.
    pub fn contains_convex(&self, poly: &[Point2]) -> Result<(), Point2> {
        match self {
            Region::Polygon(_) | Region::Ellipse { .. } => {
                // both operands convex: vertex containment is exact
                match poly.iter().find(|p| !self.contains(p)) {
                    Some(p) => Err(*p),
                    None => Ok(()),
                }
            }
            Region::Arch { spring, .. } => {
                let lower = clip_half_plane(poly, |p| *spring - p.y);
                let upper = clip_half_plane(poly, |p| p.y - *spring);
                let on_line = |part: &[Point2]| part.iter().all(|p| (p.y - spring).abs() <= BOUNDARY_EPS);
                for (part, test) in [(&lower, 0u8), (&upper, 1u8)] {
                    if part.is_empty() {
                        continue;
                    }
                    let degenerate = on_line(part);
                    for p in part.iter() {
                        let ok = if degenerate {
                            self.contains(p)
                        } else if test == 0 {
                            self.arch_rect_contains(p)
                        } else {
                            self.arch_disc_contains(p)
                        };
                        if !ok {
                            return Err(*p);
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Area centroid.
    pub fn centroid(&self) -> Point2 {
        match self {
            Region::Polygon(v) => {
                let n = v.len();
                let mut area = 0.0;
                let mut c = Point2::zeros();
                for i in 0..n {
                    let (p, q) = (v[i], v[(i + 1) % n]);
                    let w = cross(&p, &q);
                    area += w;
                    c += (p + q) * w;
                }
                c / (3.0 * area)
            }
            Region::Ellipse { .. } => Point2::zeros(),
            Region::Arch { half_width, bottom, spring, radius } => {
                let rect_area = 2.0 * half_width * (spring - bottom);
                let rect_c = 0.5 * (spring + bottom);
                let disc_area = 0.5 * PI * radius * radius;
                let disc_c = spring + 4.0 * radius / (3.0 * PI);
                Point2::new(0.0, (rect_area * rect_c + disc_area * disc_c) / (rect_area + disc_area))
            }
        }
    }

    /// Region grown outward by `border` (mitered corners for polygons).
    pub fn dilated(&self, border: f64) -> Region {
        match self {
            Region::Polygon(v) => {
                let n = v.len();
                let normals: Vec<Point2> = (0..n)
                    .map(|i| {
                        let e = v[(i + 1) % n] - v[i];
                        Point2::new(e.y, -e.x).normalize()
                    })
                    .collect();
                let out = (0..n)
                    .map(|i| {
                        let (n_prev, n_next) = (normals[(i + n - 1) % n], normals[i]);
                        v[i] + (n_prev + n_next) * (border / (1.0 + n_prev.dot(&n_next)))
                    })
                    .collect();
                Region::Polygon(out)
            }
            Region::Ellipse { a, b } => Region::Ellipse { a: a + border, b: b + border },
            Region::Arch { half_width, bottom, spring, radius } => Region::Arch {
                half_width: half_width + border,
                bottom: bottom - border,
                spring: *spring,
                radius: radius + border,
            },
        }
    }

    /// Boundary pieces in counterclockwise order starting at the canonical point.
    fn pieces(&self) -> Vec<Piece> {
        match self {
            Region::Polygon(v) => (0..v.len()).map(|i| Piece::Segment(v[i], v[(i + 1) % v.len()])).collect(),
            Region::Ellipse { a, b } => vec![Piece::Ellipse { a: *a, b: *b }],
            Region::Arch { half_width, bottom, spring, radius } => {
                let (w, r) = (*half_width, *radius);
                vec![
                    Piece::Segment(Point2::new(-w, *bottom), Point2::new(w, *bottom)),
                    Piece::Segment(Point2::new(w, *bottom), Point2::new(w, *spring)),
                    Piece::Segment(Point2::new(w, *spring), Point2::new(r, *spring)),
                    Piece::Arc { center: Point2::new(0.0, *spring), radius: r },
                    Piece::Segment(Point2::new(-r, *spring), Point2::new(-w, *spring)),
                    Piece::Segment(Point2::new(-w, *spring), Point2::new(-w, *bottom)),
                ]
            }
        }
    }

    pub fn perimeter(&self) -> f64 {
        self.pieces().iter().map(Piece::length).sum()
    }

    /// `n` boundary points equally spaced in arc length, counterclockwise
    /// from the canonical start point.
    pub fn boundary_samples(&self, n: usize) -> Vec<Point2> {
        let pieces: Vec<Piece> = self.pieces().into_iter().filter(|p| p.length() > 0.0).collect();
        let lengths: Vec<f64> = pieces.iter().map(Piece::length).collect();
        let total: f64 = lengths.iter().sum();
        let mut out = Vec::with_capacity(n);
        let mut idx = 0;
        let mut offset = 0.0;
        for k in 0..n {
            let s = total * k as f64 / n as f64;
            while idx + 1 < pieces.len() && s >= offset + lengths[idx] {
                offset += lengths[idx];
                idx += 1;
            }
            out.push(pieces[idx].point_at(s - offset));
        }
        out
    }
}

fn polygon_contains(v: &[Point2], p: &Point2) -> bool {
    let n = v.len();
    (0..n).all(|i| {
        let (a, b) = (v[i], v[(i + 1) % n]);
        let e = b - a;
        cross(&e, &(p - a)) >= -BOUNDARY_EPS * e.norm()
    })
}

/// Sutherland–Hodgman clip of a convex polygon against `keep(p) >= 0`.
pub fn clip_half_plane(poly: &[Point2], keep: impl Fn(&Point2) -> f64) -> Vec<Point2> {
    let n = poly.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return if keep(&poly[0]) >= 0.0 { poly.to_vec() } else { Vec::new() };
    }
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let (fa, fb) = (keep(&a), keep(&b));
        if fa >= 0.0 {
            out.push(a);
        }
        if (fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0) {
            let t = fa / (fa - fb);
            out.push(a + (b - a) * t);
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Segment(Point2, Point2),
    /// Full ellipse starting at the top `(0, b)`.
    Ellipse { a: f64, b: f64 },
    /// Upper half-circle from `(r, 0)` to `(-r, 0)` relative to the center.
    Arc { center: Point2, radius: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match self {
            Piece::Segment(a, b) => (b - a).norm(),
            Piece::Ellipse { a, b } => ellipse_arc_length(*a, *b, 2.0 * PI),
            Piece::Arc { radius, .. } => PI * radius,
        }
    }

    fn point_at(&self, s: f64) -> Point2 {
        match self {
            Piece::Segment(a, b) => {
                let len = (b - a).norm();
                a + (b - a) * (s / len).clamp(0.0, 1.0)
            }
            Piece::Ellipse { a, b } => {
                let t = ellipse_parameter_at(*a, *b, s);
                // parameter measured from the top, counterclockwise
                Point2::new(-a * t.sin(), b * t.cos())
            }
            Piece::Arc { center, radius } => {
                let phi = s / radius;
                center + Point2::new(radius * phi.cos(), radius * phi.sin())
            }
        }
    }
}

/// Speed of the parametrization `(-a sin t, b cos t)`.
fn ellipse_speed(a: f64, b: f64, t: f64) -> f64 {
    (a * a * t.cos().powi(2) + b * b * t.sin().powi(2)).sqrt()
}

// 20-point Gauss–Legendre nodes/weights on [-1, 1] (positive half).
const GL_NODES: [f64; 10] = [
    0.0765265211334973, 0.2277858511416451, 0.3737060887154195, 0.5108670019508271, 0.6360536807265150,
    0.7463319064601508, 0.8391169718222188, 0.9122344282513259, 0.9639719272779138, 0.9931285991850949,
];
const GL_WEIGHTS: [f64; 10] = [
    0.1527533871307258, 0.1491729864726037, 0.1420961093183820, 0.1316886384491766, 0.1181945319615184,
    0.1019301198172404, 0.0832767415767048, 0.0626720483341091, 0.0406014298003869, 0.0176140071391521,
];

/// Arc length of the ellipse from parameter 0 to `t` (composite Gauss–Legendre).
fn ellipse_arc_length(a: f64, b: f64, t: f64) -> f64 {
    const PANELS: usize = 64;
    let h = t / PANELS as f64;
    let mut total = 0.0;
    for k in 0..PANELS {
        let mid = (k as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            total += w * half * (ellipse_speed(a, b, mid + half * x) + ellipse_speed(a, b, mid - half * x));
        }
    }
    total
}

fn ellipse_parameter_at(a: f64, b: f64, s: f64) -> f64 {
    let total = ellipse_arc_length(a, b, 2.0 * PI);
    let mut t = 2.0 * PI * s / total;
    for _ in 0..50 {
        let f = ellipse_arc_length(a, b, t) - s;
        let step = f / ellipse_speed(a, b, t);
        t -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    t
}
