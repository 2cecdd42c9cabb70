use super::{CameraIntrinsics, Vec3};
use crate::error::{Error, Result};

/// A `width`×`height` grid of optional camera-frame points, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct OrganizedCloud {
    intrinsics: CameraIntrinsics,
    points: Vec<Option<Vec3>>,
}

impl OrganizedCloud {
    pub fn empty(intrinsics: CameraIntrinsics) -> Self {
        OrganizedCloud {
            points: vec![None; intrinsics.pixel_count()],
            intrinsics,
        }
    }

    /// Back-projects a row-major depth grid. Depths outside the camera's
    /// range (and non-finite values) become absent points.
    pub fn from_depth(intrinsics: CameraIntrinsics, depth: &[Option<f64>]) -> Result<Self> {
        if depth.len() != intrinsics.pixel_count() {
            return Err(Error::Cloud(format!(
                "depth grid has {} entries, expected {}",
                depth.len(),
                intrinsics.pixel_count()
            )));
        }
        let w = intrinsics.width;
        let points = depth
            .iter()
            .enumerate()
            .map(|(i, d)| {
                d.filter(|&z| intrinsics.depth_in_range(z)).map(|z| {
                    intrinsics.backproject_unchecked((i % w) as f64, (i / w) as f64, z)
                })
            })
            .collect();
        Ok(OrganizedCloud { intrinsics, points })
    }

    /// Wraps an explicit point grid after checking the reprojection invariant.
    pub fn from_points(intrinsics: CameraIntrinsics, points: Vec<Option<Vec3>>) -> Result<Self> {
        if points.len() != intrinsics.pixel_count() {
            return Err(Error::Cloud(format!(
                "point grid has {} entries, expected {}",
                points.len(),
                intrinsics.pixel_count()
            )));
        }
        let cloud = OrganizedCloud { intrinsics, points };
        cloud.validate()?;
        Ok(cloud)
    }

    pub(crate) fn from_points_unchecked(
        intrinsics: CameraIntrinsics,
        points: Vec<Option<Vec3>>,
    ) -> Self {
        debug_assert_eq!(points.len(), intrinsics.pixel_count());
        OrganizedCloud { intrinsics, points }
    }

    /// Every present point lies in the depth range and reprojects to its own
    /// pixel within half a pixel.
    pub fn validate(&self) -> Result<()> {
        for (u, v, p) in self.iter_present() {
            if !self.intrinsics.depth_in_range(p.z) {
                return Err(Error::Cloud(format!("point at ({u}, {v}) has depth {}", p.z)));
            }
            let (pu, pv) = self.intrinsics.project(p).ok_or_else(|| {
                Error::Cloud(format!("point at ({u}, {v}) does not project into the image"))
            })?;
            if (pu - u as f64).abs() > 0.5 || (pv - v as f64).abs() > 0.5 {
                return Err(Error::Cloud(format!(
                    "point at ({u}, {v}) reprojects to ({pu:.3}, {pv:.3})"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn points_mut(&mut self) -> &mut [Option<Vec3>] {
        &mut self.points
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn points(&self) -> &[Option<Vec3>] {
        &self.points
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<&Vec3> {
        if u >= self.width() || v >= self.height() {
            return None;
        }
        self.points[v * self.width() + u].as_ref()
    }

    pub fn present_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.points.iter().all(Option::is_none)
    }

    /// `(u, v, point)` for every present point, row-major.
    pub fn iter_present(&self) -> impl Iterator<Item = (usize, usize, &Vec3)> + '_ {
        let w = self.width();
        self.points
            .iter()
            .enumerate()
            .filter_map(move |(i, p)| p.as_ref().map(|p| (i % w, i / w, p)))
    }

    pub fn depths(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.map(|p| p.z)).collect()
    }

    pub fn same_grid(&self, other: &OrganizedCloud) -> Result<()> {
        if self.width() != other.width() || self.height() != other.height() {
            return Err(Error::GridMismatch {
                left_w: self.width(),
                left_h: self.height(),
                right_w: other.width(),
                right_h: other.height(),
            });
        }
        Ok(())
    }

    /// Resamples onto `target` by taking, for each target pixel, the source
    /// pixel nearest to the same viewing ray.
    pub fn downsample_nearest(&self, target: &CameraIntrinsics) -> OrganizedCloud {
        if *target == self.intrinsics {
            return self.clone();
        }
        let src = &self.intrinsics;
        let mut points = Vec::with_capacity(target.pixel_count());
        for v in 0..target.height {
            let sv = ((v as f64 - target.cy) / target.fy * src.fy + src.cy + 0.5).floor();
            for u in 0..target.width {
                let su = ((u as f64 - target.cx) / target.fx * src.fx + src.cx + 0.5).floor();
                let p = if su >= 0.0 && sv >= 0.0 {
                    self.get(su as usize, sv as usize).copied()
                } else {
                    None
                };
                points.push(p.filter(|p| target.depth_in_range(p.z)));
            }
        }
        OrganizedCloud::from_points_unchecked(*target, points)
    }
}
