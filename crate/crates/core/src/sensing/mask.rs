//! Binary frame masks rendered by ray casting, plus block-wise mask noise.

use std::io::Write;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::camera::CameraModel;
use super::SensingError;
use crate::dynamics::QuadrotorState;
use crate::geometry::{GapSpec, Point2, Region};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskImage {
    pub width: u32,
    pub height: u32,
    /// Row-major, one byte per pixel, values 0 or 1.
    pub data: Vec<u8>,
}

impl MaskImage {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; (width * height) as usize],
        }
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; (width * height) as usize],
        }
    }

    pub fn get(&self, u: u32, v: u32) -> u8 {
        self.data[(v * self.width + u) as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, value: u8) {
        self.data[(v * self.width + u) as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&p| p != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&p| p == 0)
    }

    /// Binary PGM (P5) with 0/255 gray levels.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.data.iter().map(|&p| if p != 0 { 255 } else { 0 }).collect();
        out.write_all(&bytes)
    }
}

/// Frame appearance and range limit of the renderer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Width of the visible frame around the passable region (m).
    pub border: f64,
    /// Surfaces at or beyond this range are not drawn (m).
    pub max_range: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            border: 0.05,
            max_range: 10.0,
        }
    }
}

struct Triangle {
    a: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
}

/// Möller–Trumbore ray/triangle intersection; returns the ray parameter.
fn ray_triangle(origin: &Vector3<f64>, dir: &Vector3<f64>, tri: &Triangle) -> Option<f64> {
    const EPS: f64 = 1e-12;
    let p = dir.cross(&tri.e2);
    let det = tri.e1.dot(&p);
    if det.abs() < EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri.a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&tri.e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = tri.e2.dot(&q) * inv;
    (t > EPS).then_some(t)
}

enum Scene {
    Mesh(Vec<Triangle>),
    Implicit { inner: Region, outer: Region },
}

fn build_scene(gap: &GapSpec, border: f64) -> Scene {
    let inner = gap.region();
    let outer = inner.dilated(border);
    match (&inner, &outer) {
        (Region::Polygon(a), Region::Polygon(b)) => {
            let frame = gap.frame();
            let w = |p: &Point2| frame.plane_to_world(p);
            let n = a.len();
            let mut tris = Vec::with_capacity(2 * n);
            let mut push = |p: Vector3<f64>, q: Vector3<f64>, r: Vector3<f64>| {
                tris.push(Triangle { a: p, e1: q - p, e2: r - p })
            };
            for i in 0..n {
                let j = (i + 1) % n;
                push(w(&a[i]), w(&b[i]), w(&b[j]));
                push(w(&a[i]), w(&b[j]), w(&a[j]));
            }
            Scene::Mesh(tris)
        }
        _ => Scene::Implicit { inner, outer },
    }
}

/// Binary mask of the gap frame as seen from the vehicle.
pub fn render_mask(state: &QuadrotorState, gap: &GapSpec, camera: &CameraModel) -> MaskImage {
    render_mask_with(state, gap, camera, &RenderConfig::default())
}

pub fn render_mask_with(
    state: &QuadrotorState,
    gap: &GapSpec,
    camera: &CameraModel,
    cfg: &RenderConfig,
) -> MaskImage {
    let mut img = MaskImage::zeros(camera.width, camera.height);
    let frame = gap.frame();
    let n = frame.normal();
    let origin = state.position;
    let outer = gap.region().dilated(cfg.border);
    // cheap rejection: bounding circle of the frame in the plane
    let bound = outer
        .boundary_samples(64)
        .iter()
        .map(|p| p.norm())
        .fold(0.0, f64::max)
        + outer.perimeter() / 64.0
        + 1e-9;
    let scene = build_scene(gap, cfg.border);
    for v in 0..camera.height {
        for u in 0..camera.width {
            let dir = state.attitude * camera.pixel_ray(u, v);
            let denom = dir.dot(&n);
            if denom.abs() < 1e-12 {
                continue;
            }
            let t = (frame.origin - origin).dot(&n) / denom;
            if t <= 0.0 || t * dir.norm() >= cfg.max_range {
                continue;
            }
            let hit = frame.to_local(&(origin + dir * t));
            let local = Point2::new(hit.y, hit.z);
            if local.norm() > bound {
                continue;
            }
            let on_frame = match &scene {
                Scene::Mesh(tris) => tris.iter().any(|tri| {
                    ray_triangle(&origin, &dir, tri).is_some_and(|s| s * dir.norm() < cfg.max_range)
                }),
                Scene::Implicit { inner, outer } => outer.contains(&local) && !inner.contains(&local),
            };
            if on_frame {
                img.set(u, v, 1);
            }
        }
    }
    img
}

/// Per-episode choice of the block size used by [`randomize_mask`].
pub fn sample_mask_block<R: Rng + ?Sized>(rng: &mut R) -> u32 {
    if rng.random_bool(0.5) {
        2
    } else {
        4
    }
}

/// Replace every `block × block` tile by its max or min with equal odds.
pub fn randomize_mask<R: Rng + ?Sized>(image: &MaskImage, block: u32, rng: &mut R) -> Result<MaskImage, SensingError> {
    if block == 0 || image.width % block != 0 || image.height % block != 0 {
        return Err(SensingError::BlockSize {
            block,
            width: image.width,
            height: image.height,
        });
    }
    let mut out = image.clone();
    for by in (0..image.height).step_by(block as usize) {
        for bx in (0..image.width).step_by(block as usize) {
            let take_max = rng.random_bool(0.5);
            let mut any = false;
            let mut all = true;
            for v in by..by + block {
                for u in bx..bx + block {
                    let p = image.get(u, v) != 0;
                    any |= p;
                    all &= p;
                }
            }
            let value = u8::from(if take_max { any } else { all });
            for v in by..by + block {
                for u in bx..bx + block {
                    out.set(u, v, value);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GapShape;
    use nalgebra::UnitQuaternion;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gap_ahead(shape: GapShape) -> GapSpec {
        GapSpec::new(Vector3::new(3.0, 0.0, 1.5), 0.0, shape)
    }

    #[test]
    fn frame_visible_but_opening_empty() {
        let s = QuadrotorState::at_rest(Vector3::new(0.0, 0.0, 1.5));
        let cam = CameraModel::default();
        let img = render_mask(&s, &gap_ahead(GapShape::default_rectangle()), &cam);
        assert!(!img.is_empty());
        assert_eq!(img.get(160, 128), 0);
    }

    #[test]
    fn mesh_and_implicit_paths_agree_on_rectangle() {
        // a rectangle rendered as a mesh vs its inscribed-ellipse-free implicit test
        let s = QuadrotorState::at_rest(Vector3::new(0.0, 0.1, 1.4));
        let cam = CameraModel::default();
        let gap = gap_ahead(GapShape::default_rectangle());
        let mesh = render_mask(&s, &gap, &cam);
        let inner = gap.region();
        let outer = inner.dilated(0.05);
        let frame = gap.frame();
        let mut disagreements = 0;
        for v in 0..cam.height {
            for u in 0..cam.width {
                let d = s.attitude * cam.pixel_ray(u, v);
                let t = (frame.origin - s.position).dot(&frame.normal()) / d.dot(&frame.normal());
                let h = frame.to_local(&(s.position + d * t));
                let p = Point2::new(h.y, h.z);
                let implicit = u8::from(outer.contains(&p) && !inner.contains(&p));
                disagreements += usize::from(implicit != mesh.get(u, v));
            }
        }
        assert!(disagreements <= 4, "{disagreements}");
    }

    #[test]
    fn behind_camera_is_blank() {
        let mut s = QuadrotorState::at_rest(Vector3::new(0.0, 0.0, 1.5));
        s.attitude = UnitQuaternion::from_euler_angles(0.0, 0.0, std::f64::consts::PI);
        let img = render_mask(&s, &gap_ahead(GapShape::default_ellipse()), &CameraModel::default());
        assert!(img.is_empty());
    }

    #[test]
    fn beyond_range_is_blank() {
        let s = QuadrotorState::at_rest(Vector3::new(-8.0, 0.0, 1.5));
        let img = render_mask(&s, &gap_ahead(GapShape::default_arch()), &CameraModel::default());
        assert!(img.is_empty());
    }

    #[test]
    fn block_rule() {
        let mut img = MaskImage::zeros(2, 2);
        img.set(0, 0, 1);
        let mut saw = [false; 2];
        for seed in 0..32 {
            let out = randomize_mask(&img, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let c = out.count();
            assert!(c == 0 || c == 4);
            saw[usize::from(c == 4)] = true;
        }
        assert!(saw[0] && saw[1]);
    }

    #[test]
    fn constant_images_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for value in [0, 1] {
            let img = MaskImage::filled(320, 256, value);
            assert_eq!(randomize_mask(&img, 4, &mut rng).unwrap(), img);
        }
        assert!(randomize_mask(&MaskImage::zeros(6, 6), 4, &mut rng).is_err());
    }

    #[test]
    fn pgm_header_and_levels() {
        let mut img = MaskImage::zeros(3, 2);
        img.set(1, 1, 1);
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&buf[buf.len() - 6..], &[0, 0, 0, 0, 255, 0]);
    }
}
