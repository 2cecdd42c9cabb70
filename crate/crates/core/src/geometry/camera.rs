use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

pub const DEFAULT_Z_NEAR: f64 = 0.05;
pub const DEFAULT_Z_FAR: f64 = 5.0;

/// Pinhole intrinsics plus the valid depth range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub z_near: f64,
    pub z_far: f64,
}

#[derive(Deserialize)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    #[serde(default = "default_near")]
    z_near: f64,
    #[serde(default = "default_far")]
    z_far: f64,
}

fn default_near() -> f64 {
    DEFAULT_Z_NEAR
}

fn default_far() -> f64 {
    DEFAULT_Z_FAR
}

impl TryFrom<RawIntrinsics> for CameraIntrinsics {
    type Error = Error;

    fn try_from(r: RawIntrinsics) -> Result<Self> {
        CameraIntrinsics::with_range(r.fx, r.fy, r.cx, r.cy, r.width, r.height, r.z_near, r.z_far)
    }
}

impl CameraIntrinsics {
    /// Intrinsics with the default depth range.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        Self::with_range(fx, fy, cx, cy, width, height, DEFAULT_Z_NEAR, DEFAULT_Z_FAR)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_range(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        z_near: f64,
        z_far: f64,
    ) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            z_near,
            z_far,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.fx, self.fy, self.cx, self.cy, self.z_near, self.z_far]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Intrinsics("non-finite parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Intrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.z_near > 0.0 && self.z_near < self.z_far) {
            return Err(Error::Intrinsics(format!(
                "need 0 < z_near < z_far (got {}, {})",
                self.z_near, self.z_far
            )));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::Intrinsics(format!(
                "image must be at least 16x16 (got {}x{})",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn depth_in_range(&self, z: f64) -> bool {
        z >= self.z_near && z <= self.z_far
    }

    /// Continuous image coordinates of `p`, or `None` when the depth is out
    /// of range or the point falls outside the image.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if !self.depth_in_range(p.z) {
            return None;
        }
        let u = self.fx * p.x / p.z + self.cx;
        let v = self.fy * p.y / p.z + self.cy;
        self.contains(u, v).then_some((u, v))
    }

    /// Integer pixel whose center is nearest to the projection of `p`.
    pub fn pixel_of(&self, p: &Vec3) -> Option<(usize, usize)> {
        self.project(p)
            .map(|(u, v)| ((u + 0.5).floor() as usize, (v + 0.5).floor() as usize))
    }

    /// Whether continuous coordinates round to a pixel inside the image.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && u < self.width as f64 - 0.5 && v >= -0.5 && v < self.height as f64 - 0.5
    }

    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Result<Vec3> {
        if !self.depth_in_range(depth) {
            return Err(Error::DepthOutOfRange {
                depth,
                z_near: self.z_near,
                z_far: self.z_far,
            });
        }
        Ok(self.backproject_unchecked(u, v, depth))
    }

    #[inline]
    pub(crate) fn backproject_unchecked(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        Vec3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        )
    }

    /// The same camera sampled on a `width`×`height` grid covering the same
    /// field of view (pixel-center aligned).
    pub fn resized(&self, width: usize, height: usize) -> Result<Self> {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self::with_range(
            self.fx * sx,
            self.fy * sy,
            (self.cx + 0.5) * sx - 0.5,
            (self.cy + 0.5) * sy - 0.5,
            width,
            height,
            self.z_near,
            self.z_far,
        )
    }
}
