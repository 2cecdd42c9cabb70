//! Software z-buffer rasterization of triangle meshes into depth buffers.
//!
//! A pixel is covered by a triangle when its center lies inside the projected
//! triangle, with the top-left rule deciding centers that fall exactly on an
//! edge. Depth is interpolated as `1/z` in screen space, which is exact for
//! planar triangles under perspective projection. Triangles are clipped
//! against the near plane; fragments beyond the far plane are dropped. There
//! is no backface culling.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, OrganizedCloud, Pose, TriangleMesh, Vec3};
use crate::pgm;

/// Per-pixel optional depth in meters, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthBuffer {
    width: usize,
    height: usize,
    depth: Vec<Option<f64>>,
}

impl DepthBuffer {
    pub fn empty(width: usize, height: usize) -> Self {
        DepthBuffer {
            width,
            height,
            depth: vec![None; width * height],
        }
    }

    pub fn from_depths(width: usize, height: usize, depth: Vec<Option<f64>>) -> Result<Self> {
        if depth.len() != width * height {
            return Err(Error::Invalid(format!(
                "depth buffer needs {} entries, got {}",
                width * height,
                depth.len()
            )));
        }
        Ok(DepthBuffer {
            width,
            height,
            depth,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        self.depth[v * self.width + u]
    }

    pub fn depths(&self) -> &[Option<f64>] {
        &self.depth
    }

    pub fn present_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_some()).count()
    }

    /// Per-pixel minimum with another buffer of the same size.
    pub fn merge_min(&mut self, other: &DepthBuffer) -> Result<()> {
        if other.width != self.width || other.height != self.height {
            return Err(Error::GridMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            });
        }
        for (a, b) in self.depth.iter_mut().zip(&other.depth) {
            *a = match (*a, *b) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, None) => x,
                (None, y) => y,
            };
        }
        Ok(())
    }

    pub fn to_cloud(&self, intrinsics: &CameraIntrinsics) -> Result<OrganizedCloud> {
        buffer_to_cloud(self, intrinsics)
    }

    /// Writes a 16-bit PGM in millimeters (0 = absent).
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        pgm::write_depth_pgm(path, self.width, self.height, &self.depth)
    }
}

/// Back-projects every present depth through the pinhole model.
pub fn buffer_to_cloud(buffer: &DepthBuffer, intrinsics: &CameraIntrinsics) -> Result<OrganizedCloud> {
    if buffer.width != intrinsics.width || buffer.height != intrinsics.height {
        return Err(Error::GridMismatch {
            left_w: buffer.width,
            left_h: buffer.height,
            right_w: intrinsics.width,
            right_h: intrinsics.height,
        });
    }
    OrganizedCloud::from_depth(*intrinsics, &buffer.depth)
}

/// Renders `mesh` at `pose` with a throwaway rasterizer.
pub fn render_depth(mesh: &TriangleMesh, pose: &Pose, intrinsics: &CameraIntrinsics) -> DepthBuffer {
    let mut r = Rasterizer::new(*intrinsics);
    r.draw(mesh, pose);
    r.depth_buffer()
}

/// Half-open pixel rectangle `[u0, u1) × [v0, v1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct PixelRect {
    pub u0: usize,
    pub v0: usize,
    pub u1: usize,
    pub v1: usize,
}

impl PixelRect {
    pub fn full(width: usize, height: usize) -> Self {
        PixelRect {
            u0: 0,
            v0: 0,
            u1: width,
            v1: height,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.u0 >= self.u1 || self.v0 >= self.v1
    }

    fn include(&mut self, u: usize, v: usize) {
        if self.is_empty() {
            *self = PixelRect {
                u0: u,
                v0: v,
                u1: u + 1,
                v1: v + 1,
            };
        } else {
            self.u0 = self.u0.min(u);
            self.v0 = self.v0.min(v);
            self.u1 = self.u1.max(u + 1);
            self.v1 = self.v1.max(v + 1);
        }
    }
}

/// A z-buffer plus scratch storage. One instance per worker thread.
///
/// The z-buffer may extend `guard` pixels past every image border so that
/// geometry projecting just outside the image can be measured; only the
/// image part is ever returned as depth.
pub struct Rasterizer {
    intrinsics: CameraIntrinsics,
    guard: usize,
    canvas_width: usize,
    zbuf: Vec<f64>,
    /// Written pixels since the last clear, in canvas coordinates.
    dirty: PixelRect,
    outside: usize,
    camera_vertices: Vec<Vec3>,
    cloud: OrganizedCloud,
    cloud_dirty: PixelRect,
    composite: OrganizedCloud,
    composite_dirty: PixelRect,
    from_render: Vec<bool>,
}

#[derive(Clone, Copy)]
struct ScreenVertex {
    x: f64,
    y: f64,
    inv_z: f64,
}

impl Rasterizer {
    pub fn new(intrinsics: CameraIntrinsics) -> Self {
        Self::with_guard(intrinsics, 0)
    }

    pub fn with_guard(intrinsics: CameraIntrinsics, guard: usize) -> Self {
        let canvas_width = intrinsics.width + 2 * guard;
        let canvas_height = intrinsics.height + 2 * guard;
        Rasterizer {
            guard,
            canvas_width,
            zbuf: vec![f64::INFINITY; canvas_width * canvas_height],
            dirty: PixelRect::default(),
            outside: 0,
            camera_vertices: Vec::new(),
            cloud: OrganizedCloud::empty(intrinsics),
            cloud_dirty: PixelRect::default(),
            composite: OrganizedCloud::empty(intrinsics),
            composite_dirty: PixelRect::default(),
            from_render: vec![false; intrinsics.pixel_count()],
            intrinsics,
        }
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn guard(&self) -> usize {
        self.guard
    }

    /// Resets the z-buffer to empty.
    pub fn clear(&mut self) {
        let w = self.canvas_width;
        let d = self.dirty;
        for v in d.v0..d.v1 {
            self.zbuf[v * w + d.u0..v * w + d.u1].fill(f64::INFINITY);
        }
        self.dirty = PixelRect::default();
    }

    /// Rasterizes `mesh` at `pose` into the current z-buffer, keeping the
    /// nearer depth where fragments overlap.
    pub fn draw(&mut self, mesh: &TriangleMesh, pose: &Pose) {
        let r = pose.rotation.matrix();
        let t = pose.translation;
        self.camera_vertices.clear();
        self.camera_vertices
            .extend(mesh.vertices().iter().map(|p| r * p + t));
        let verts = std::mem::take(&mut self.camera_vertices);
        for tri in mesh.triangles() {
            self.draw_triangle([verts[tri[0]], verts[tri[1]], verts[tri[2]]]);
        }
        self.camera_vertices = verts;
    }

    #[inline]
    fn image_depth(&self, u: usize, v: usize) -> f64 {
        self.zbuf[(v + self.guard) * self.canvas_width + u + self.guard]
    }

    /// Snapshot of the image part of the z-buffer.
    pub fn depth_buffer(&self) -> DepthBuffer {
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        let mut depth = Vec::with_capacity(w * h);
        for v in 0..h {
            for u in 0..w {
                let z = self.image_depth(u, v);
                depth.push(z.is_finite().then_some(z));
            }
        }
        DepthBuffer { width: w, height: h, depth }
    }

    /// Bounding rectangle, in image pixels, of every image pixel written
    /// since the last clear.
    pub fn covered_rect(&self) -> PixelRect {
        let g = self.guard;
        let d = self.dirty;
        let r = PixelRect {
            u0: d.u0.max(g) - g,
            v0: d.v0.max(g) - g,
            u1: d.u1.min(g + self.intrinsics.width).saturating_sub(g),
            v1: d.v1.min(g + self.intrinsics.height).saturating_sub(g),
        };
        if r.is_empty() {
            PixelRect::default()
        } else {
            r
        }
    }

    /// Covered guard-band pixels in the last [`render_cloud`](Self::render_cloud).
    pub fn outside_count(&self) -> usize {
        self.outside
    }

    /// Clears, renders `mesh` at `pose`, and back-projects into an internal
    /// cloud that is reused across calls. Returns the cloud and a rectangle
    /// that contains all of its present points.
    pub fn render_cloud(&mut self, mesh: &TriangleMesh, pose: &Pose) -> (&OrganizedCloud, PixelRect) {
        self.clear();
        self.draw(mesh, pose);

        let k = self.intrinsics;
        let w = k.width;
        let (g, cw) = (self.guard, self.canvas_width);
        let d = self.covered_rect();
        let points = self.cloud.points_mut();
        let old = self.cloud_dirty;
        for v in old.v0..old.v1 {
            points[v * w + old.u0..v * w + old.u1].fill(None);
        }
        let mut inside = 0;
        for v in d.v0..d.v1 {
            for u in d.u0..d.u1 {
                let z = self.zbuf[(v + g) * cw + u + g];
                if z.is_finite() {
                    points[v * w + u] = Some(k.backproject_unchecked(u as f64, v as f64, z));
                    inside += 1;
                }
            }
        }
        self.outside = 0;
        if g > 0 {
            let c = self.dirty;
            let covered = (c.v0..c.v1)
                .map(|v| self.zbuf[v * cw + c.u0..v * cw + c.u1].iter().filter(|z| z.is_finite()).count())
                .sum::<usize>();
            self.outside = covered - inside;
        }
        self.cloud_dirty = d;
        (&self.cloud, d)
    }

    /// The cloud from the last [`render_cloud`](Self::render_cloud).
    pub fn rendered_cloud(&self) -> &OrganizedCloud {
        &self.cloud
    }

    /// Pastes the cloud from the last [`render_cloud`](Self::render_cloud)
    /// over `background` within `region`: rendered pixels take the rendered
    /// point, the rest keep the background. Pixels outside `region` are
    /// absent.
    pub fn composite_over(&mut self, background: &OrganizedCloud, region: PixelRect) -> &OrganizedCloud {
        debug_assert_eq!(background.intrinsics(), &self.intrinsics);
        let w = self.intrinsics.width;
        let old = self.composite_dirty;
        let points = self.composite.points_mut();
        for v in old.v0..old.v1 {
            points[v * w + old.u0..v * w + old.u1].fill(None);
            self.from_render[v * w + old.u0..v * w + old.u1].fill(false);
        }
        let region = PixelRect {
            u0: region.u0,
            v0: region.v0,
            u1: region.u1.min(w),
            v1: region.v1.min(self.intrinsics.height),
        };
        let rendered = self.cloud.points();
        let observed = background.points();
        for v in region.v0..region.v1 {
            for u in region.u0..region.u1 {
                let i = v * w + u;
                points[i] = match rendered[i] {
                    Some(r) => {
                        self.from_render[i] = true;
                        Some(r)
                    }
                    None => observed[i],
                };
            }
        }
        self.composite_dirty = region;
        &self.composite
    }

    /// Whether the last composite took pixel `(u, v)` from the render.
    pub fn composite_from_render(&self, u: usize, v: usize) -> bool {
        self.from_render[v * self.intrinsics.width + u]
    }

    fn draw_triangle(&mut self, tri: [Vec3; 3]) {
        let near = self.intrinsics.z_near;
        let far = self.intrinsics.z_far;
        if tri.iter().all(|p| p.z < near) || tri.iter().all(|p| p.z > far) {
            return;
        }
        if tri.iter().all(|p| p.z >= near) {
            self.fill(tri);
            return;
        }
        // Sutherland–Hodgman against z = near.
        let mut poly: [Vec3; 4] = [Vec3::zeros(); 4];
        let mut n = 0;
        for i in 0..3 {
            let a = tri[i];
            let b = tri[(i + 1) % 3];
            let a_in = a.z >= near;
            let b_in = b.z >= near;
            if a_in {
                poly[n] = a;
                n += 1;
            }
            if a_in != b_in {
                let s = (near - a.z) / (b.z - a.z);
                let mut p = a + (b - a) * s;
                p.z = near;
                poly[n] = p;
                n += 1;
            }
        }
        for i in 1..n.saturating_sub(1) {
            self.fill([poly[0], poly[i], poly[i + 1]]);
        }
    }

    fn fill(&mut self, tri: [Vec3; 3]) {
        let k = self.intrinsics;
        let mut s = tri.map(|p| ScreenVertex {
            x: k.fx * p.x / p.z + k.cx,
            y: k.fy * p.y / p.z + k.cy,
            inv_z: 1.0 / p.z,
        });
        let mut area = edge(&s[0], &s[1], s[2].x, s[2].y);
        if !(area.abs() > 0.0) {
            return;
        }
        if area < 0.0 {
            s.swap(1, 2);
            area = -area;
        }

        let g = self.guard as f64;
        let min_x = s.iter().map(|v| v.x).fold(f64::INFINITY, f64::min).ceil().max(-g);
        let max_x = s
            .iter()
            .map(|v| v.x)
            .fold(f64::NEG_INFINITY, f64::max)
            .floor()
            .min(k.width as f64 - 1.0 + g);
        let min_y = s.iter().map(|v| v.y).fold(f64::INFINITY, f64::min).ceil().max(-g);
        let max_y = s
            .iter()
            .map(|v| v.y)
            .fold(f64::NEG_INFINITY, f64::max)
            .floor()
            .min(k.height as f64 - 1.0 + g);
        if min_x > max_x || min_y > max_y {
            return;
        }

        let tl = [
            is_top_left(&s[1], &s[2]),
            is_top_left(&s[2], &s[0]),
            is_top_left(&s[0], &s[1]),
        ];
        let inside = |w: f64, top_left: bool| w > 0.0 || (w == 0.0 && top_left);
        let cw = self.canvas_width;
        let (gx, gy) = ((min_x + g) as usize, (min_y + g) as usize);
        for (cy, y) in (gy..).zip((min_y as i64..=max_y as i64).map(|y| y as f64)) {
            for (cx, x) in (gx..).zip((min_x as i64..=max_x as i64).map(|x| x as f64)) {
                let w0 = edge(&s[1], &s[2], x, y);
                let w1 = edge(&s[2], &s[0], x, y);
                let w2 = edge(&s[0], &s[1], x, y);
                if !(inside(w0, tl[0]) && inside(w1, tl[1]) && inside(w2, tl[2])) {
                    continue;
                }
                let (b0, b1) = (w0 / area, w1 / area);
                let inv_z = s[2].inv_z + b0 * (s[0].inv_z - s[2].inv_z) + b1 * (s[1].inv_z - s[2].inv_z);
                let z = 1.0 / inv_z;
                if !(z >= k.z_near && z <= k.z_far) {
                    continue;
                }
                let slot = &mut self.zbuf[cy * cw + cx];
                if z < *slot {
                    *slot = z;
                    self.dirty.include(cx, cy);
                }
            }
        }
    }
}

#[inline]
fn edge(a: &ScreenVertex, b: &ScreenVertex, x: f64, y: f64) -> f64 {
    (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x)
}

// Image y points down and triangles are ordered with positive `edge` area,
// i.e. clockwise on screen: top edges run left to right, left edges run up.
#[inline]
fn is_top_left(a: &ScreenVertex, b: &ScreenVertex) -> bool {
    (a.y == b.y && b.x > a.x) || b.y < a.y
}
