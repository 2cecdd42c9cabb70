//! Edge and planar feature points from the local smoothness statistic.
//!
//! For a point `p(u,v)` with neighborhood `N(u,v)` (present points within
//! Chebyshev pixel distance `radius`, center excluded):
//!
//! ```text
//! c(u,v) = ‖Σ_{n∈N} (p_n − p(u,v))‖ / (|N| · ‖p(u,v)‖)
//! ```
//!
//! The image is tiled into non-overlapping `window`×`window` blocks. Inside a
//! block, points with `ln c ≥ threshold` are edge candidates taken in
//! descending `c`; the rest are planar candidates taken in ascending `c`.
//! Ties go to the earlier pixel in row-major order.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::{OrganizedCloud, Vec3};
use crate::renderer::PixelRect;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureParams {
    pub window: usize,
    pub max_edges_per_window: usize,
    pub max_planars_per_window: usize,
    pub log_c_threshold: f64,
    pub neighborhood_radius: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            window: 5,
            max_edges_per_window: 5,
            max_planars_per_window: 2,
            log_c_threshold: -5.5,
            neighborhood_radius: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeaturePoint {
    pub u: usize,
    pub v: usize,
    pub point: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCloud {
    pub width: usize,
    pub height: usize,
    pub edges: Vec<FeaturePoint>,
    pub planars: Vec<FeaturePoint>,
}

impl FeatureCloud {
    pub fn empty(width: usize, height: usize) -> Self {
        FeatureCloud {
            width,
            height,
            edges: Vec::new(),
            planars: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty() && self.planars.is_empty()
    }

    /// `type,u,v,x,y,z` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("type,u,v,x,y,z\n");
        for (kind, pts) in [("edge", &self.edges), ("planar", &self.planars)] {
            for f in pts {
                let _ = writeln!(out, "{kind},{},{},{},{},{}", f.u, f.v, f.point.x, f.point.y, f.point.z);
            }
        }
        out
    }
}

/// Local smoothness `c` at `(u, v)`.
///
/// Absent when the center point is absent, when no neighbor is present, or
/// when the neighborhood window extends past the image border (the border is
/// not a surface discontinuity).
pub fn smoothness(cloud: &OrganizedCloud, u: usize, v: usize, radius: usize) -> Option<f64> {
    let (w, h) = (cloud.width(), cloud.height());
    if u < radius || v < radius || u + radius >= w || v + radius >= h {
        return None;
    }
    let pts = cloud.points();
    let center = pts[v * w + u]?;
    let mut sum = Vec3::zeros();
    let mut count = 0usize;
    for nv in v - radius..=v + radius {
        let row = &pts[nv * w + u - radius..=nv * w + u + radius];
        for (i, p) in row.iter().enumerate() {
            if nv == v && i == radius {
                continue;
            }
            if let Some(p) = p {
                sum += p - center;
                count += 1;
            }
        }
    }
    if count == 0 {
        return None;
    }
    Some(sum.norm() / (count as f64 * center.norm()))
}

pub fn extract_features(cloud: &OrganizedCloud, params: &FeatureParams) -> FeatureCloud {
    extract_features_in(cloud, params, PixelRect::full(cloud.width(), cloud.height()))
}

/// Same as [`extract_features`] when every present point of `cloud` lies in
/// `rect`; only blocks touching `rect` are visited.
pub fn extract_features_in(cloud: &OrganizedCloud, params: &FeatureParams, rect: PixelRect) -> FeatureCloud {
    let (w, h) = (cloud.width(), cloud.height());
    let mut out = FeatureCloud::empty(w, h);
    if rect.is_empty() {
        return out;
    }
    let win = params.window.max(1);
    let u1 = rect.u1.min(w);
    let v1 = rect.v1.min(h);

    let mut edge_cand: Vec<(f64, usize, usize)> = Vec::with_capacity(win * win);
    let mut planar_cand: Vec<(f64, usize, usize)> = Vec::with_capacity(win * win);
    let mut selected: Vec<(usize, usize, bool)> = Vec::with_capacity(win * win);

    for bv in (rect.v0 / win)..v1.div_ceil(win) {
        for bu in (rect.u0 / win)..u1.div_ceil(win) {
            edge_cand.clear();
            planar_cand.clear();
            let (pv0, pv1) = ((bv * win).max(rect.v0), ((bv + 1) * win).min(v1));
            let (pu0, pu1) = ((bu * win).max(rect.u0), ((bu + 1) * win).min(u1));
            for v in pv0..pv1 {
                for u in pu0..pu1 {
                    let Some(c) = smoothness(cloud, u, v, params.neighborhood_radius) else {
                        continue;
                    };
                    if c > 0.0 && c.ln() >= params.log_c_threshold {
                        edge_cand.push((c, u, v));
                    } else {
                        planar_cand.push((c, u, v));
                    }
                }
            }
            if edge_cand.is_empty() && planar_cand.is_empty() {
                continue;
            }
            // Stable sorts keep row-major order among equal c.
            edge_cand.sort_by(|a, b| b.0.total_cmp(&a.0));
            planar_cand.sort_by(|a, b| a.0.total_cmp(&b.0));
            selected.clear();
            selected.extend(
                edge_cand
                    .iter()
                    .take(params.max_edges_per_window)
                    .map(|&(_, u, v)| (u, v, true)),
            );
            selected.extend(
                planar_cand
                    .iter()
                    .take(params.max_planars_per_window)
                    .map(|&(_, u, v)| (u, v, false)),
            );
            selected.sort_by_key(|&(u, v, _)| (v, u));
            for &(u, v, is_edge) in &selected {
                let point = *cloud.get(u, v).expect("candidate points are present");
                let f = FeaturePoint { u, v, point };
                if is_edge {
                    out.edges.push(f);
                } else {
                    out.planars.push(f);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraIntrinsics;

    fn k(w: usize, h: usize) -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, (w / 2) as f64, (h / 2) as f64, w, h).unwrap()
    }

    fn plane(w: usize, h: usize, z: f64) -> OrganizedCloud {
        OrganizedCloud::from_depth(k(w, h), &vec![Some(z); w * h]).unwrap()
    }

    #[test]
    fn symmetric_plane_neighborhood_is_smooth() {
        let cloud = plane(16, 16, 1.0);
        let c = smoothness(&cloud, 8, 8, 2).unwrap();
        assert!(c < 1e-12, "c = {c}");
    }

    #[test]
    fn absent_center_or_border_gives_none() {
        let mut depth = vec![Some(1.0); 256];
        depth[8 * 16 + 8] = None;
        let cloud = OrganizedCloud::from_depth(k(16, 16), &depth).unwrap();
        assert_eq!(smoothness(&cloud, 8, 8, 2), None);
        assert_eq!(smoothness(&cloud, 1, 8, 2), None);
        assert_eq!(smoothness(&cloud, 8, 14, 2), None);

        let mut lonely = vec![None; 256];
        lonely[5 * 16 + 5] = Some(1.0);
        let cloud = OrganizedCloud::from_depth(k(16, 16), &lonely).unwrap();
        assert_eq!(smoothness(&cloud, 5, 5, 2), None);
    }

    #[test]
    fn depth_step_patch_matches_hand_evaluation() {
        // Center at the optical axis, depth 1; columns left of center at
        // depth 1, columns right of center at depth 2, the center column at 1.
        let intr = k(16, 16);
        let (cu, cv) = (8usize, 8usize);
        let mut depth = vec![None; 256];
        for v in cv - 2..=cv + 2 {
            for u in cu - 2..=cu + 2 {
                depth[v * 16 + u] = Some(if u > cu { 2.0 } else { 1.0 });
            }
        }
        let cloud = OrganizedCloud::from_depth(intr, &depth).unwrap();
        let c = smoothness(&cloud, cu, cv, 2).unwrap();

        // Independent evaluation: each neighbor is ((du)·z/f, (dv)·z/f, z).
        let f = 100.0;
        let (mut sx, mut sy, mut sz) = (0.0f64, 0.0f64, 0.0f64);
        for dv in -2i32..=2 {
            for du in -2i32..=2 {
                if du == 0 && dv == 0 {
                    continue;
                }
                let z = if du > 0 { 2.0 } else { 1.0 };
                sx += du as f64 * z / f;
                sy += dv as f64 * z / f;
                sz += z - 1.0;
            }
        }
        // Right half: 10 points at z=2 contribute x = Σ du·2/f = 2·(1+2)·5/f;
        // left half contributes −(1+2)·5/f; y cancels; z sums to 10.
        assert!((sx - 0.15).abs() < 1e-15 && sy.abs() < 1e-15 && (sz - 10.0).abs() < 1e-15);
        let expected = (sx * sx + sy * sy + sz * sz).sqrt() / 24.0;
        assert!((c - expected).abs() < 1e-12, "{c} vs {expected}");
    }

    #[test]
    fn plane_has_no_edges_and_capped_planars() {
        let cloud = plane(40, 30, 1.3);
        let f = extract_features(&cloud, &FeatureParams::default());
        assert!(f.edges.is_empty());
        // 8×6 blocks; blocks touching the border still hold interior pixels.
        assert_eq!(f.planars.len(), 8 * 6 * 2);
    }

    #[test]
    fn empty_cloud_gives_empty_features() {
        let cloud = OrganizedCloud::empty(k(20, 20));
        assert!(extract_features(&cloud, &FeatureParams::default()).is_empty());
    }

    #[test]
    fn step_block_selects_five_largest() {
        // A block [10,15)×[10,15) on a depth step between columns 12 and 13.
        let intr = k(30, 30);
        let depth: Vec<_> = (0..900)
            .map(|i| Some(if i % 30 >= 13 { 1.4 } else { 1.0 }))
            .collect();
        let cloud = OrganizedCloud::from_depth(intr, &depth).unwrap();
        let params = FeatureParams::default();
        let f = extract_features(&cloud, &params);

        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for v in 10..15 {
            for u in 10..15 {
                if let Some(c) = smoothness(&cloud, u, v, 2) {
                    if c.ln() >= params.log_c_threshold {
                        cands.push((c, u, v));
                    }
                }
            }
        }
        assert!(cands.len() > 5, "need more than five candidates, got {}", cands.len());
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.2, a.1).cmp(&(b.2, b.1))));
        let mut expected: Vec<(usize, usize)> = cands[..5].iter().map(|&(_, u, v)| (u, v)).collect();
        expected.sort_by_key(|&(u, v)| (v, u));
        let got: Vec<(usize, usize)> = f
            .edges
            .iter()
            .filter(|e| (10..15).contains(&e.u) && (10..15).contains(&e.v))
            .map(|e| (e.u, e.v))
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn csv_has_one_row_per_feature() {
        let cloud = plane(20, 20, 1.0);
        let f = extract_features(&cloud, &FeatureParams::default());
        let csv = f.to_csv();
        assert_eq!(csv.lines().count(), 1 + f.edges.len() + f.planars.len());
        assert!(csv.lines().nth(1).unwrap().starts_with("planar,"));
    }
}
