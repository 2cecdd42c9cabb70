//! Hypothesis scoring.
//!
//! ```text
//! W(q) = α_box·w_box + α_b·I_b + α_r·I_r + α_e·I_e + α_p·I_p
//! ```
//!
//! `I_r` is the fraction of rendered points within `ε` of the observed point
//! at the same pixel, `I_b` the fraction of rendered points that are such
//! inliers and fall inside the hypothesis' box, and `I_e` / `I_p` the matched
//! fractions of rendered edge / planar features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_features, extract_features_in, FeatureCloud, FeatureParams};
use crate::geometry::{CameraIntrinsics, OrganizedCloud, Pose, TriangleMesh, Vec3};
use crate::renderer::{PixelRect, Rasterizer};

/// Axis-aligned box in observation pixel coordinates (pixel centers at
/// integers, bounds inclusive) with a detector confidence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxRecord", into = "BoxRecord")]
pub struct BoundingBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
    pub confidence: f64,
}

#[derive(Serialize, Deserialize)]
struct BoxRecord {
    #[serde(rename = "box")]
    bounds: [f64; 4],
    confidence: f64,
}

impl TryFrom<BoxRecord> for BoundingBox {
    type Error = Error;

    fn try_from(r: BoxRecord) -> Result<Self> {
        let [u_min, v_min, u_max, v_max] = r.bounds;
        BoundingBox::new(u_min, v_min, u_max, v_max, r.confidence)
    }
}

impl From<BoundingBox> for BoxRecord {
    fn from(b: BoundingBox) -> Self {
        BoxRecord {
            bounds: [b.u_min, b.v_min, b.u_max, b.v_max],
            confidence: b.confidence,
        }
    }
}

impl BoundingBox {
    pub fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64, confidence: f64) -> Result<Self> {
        let b = BoundingBox {
            u_min,
            v_min,
            u_max,
            v_max,
            confidence,
        };
        if ![u_min, v_min, u_max, v_max, confidence].iter().all(|x| x.is_finite()) {
            return Err(Error::BoundingBox(format!("non-finite value in {b:?}")));
        }
        if u_min >= u_max || v_min >= v_max {
            return Err(Error::BoundingBox(format!(
                "need u_min < u_max and v_min < v_max, got [{u_min}, {v_min}, {u_max}, {v_max}]"
            )));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::BoundingBox(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(b)
    }

    pub fn width(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn height(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.u_min + self.u_max), 0.5 * (self.v_min + self.v_max))
    }

    #[inline]
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.u_min && u <= self.u_max && v >= self.v_min && v <= self.v_max
    }

    /// Whether the box overlaps the pixel-center extent `[0, w-1]×[0, h-1]`.
    pub fn intersects_image(&self, width: usize, height: usize) -> bool {
        self.u_max >= 0.0
            && self.v_max >= 0.0
            && self.u_min <= (width - 1) as f64
            && self.v_min <= (height - 1) as f64
    }

    /// Clips to the pixel-center extent of a `width`×`height` image.
    pub fn clip_to_image(&self, width: usize, height: usize) -> Result<Self> {
        let (wm, hm) = ((width - 1) as f64, (height - 1) as f64);
        BoundingBox::new(
            self.u_min.clamp(0.0, wm),
            self.v_min.clamp(0.0, hm),
            self.u_max.clamp(0.0, wm),
            self.v_max.clamp(0.0, hm),
            self.confidence,
        )
        .map_err(|_| Error::BoundingBox(format!("{self:?} does not intersect the {width}x{height} image")))
    }

    /// Same size, moved by `(du, dv)` and then shifted back so that it lies
    /// inside the image where it fits.
    pub fn shifted_within(&self, du: f64, dv: f64, width: usize, height: usize) -> Self {
        let shift = |lo: f64, hi: f64, d: f64, extent: f64| {
            let (mut lo, mut hi) = (lo + d, hi + d);
            if hi - lo <= extent {
                if lo < 0.0 {
                    hi -= lo;
                    lo = 0.0;
                }
                if hi > extent {
                    lo -= hi - extent;
                    hi = extent;
                }
                (lo, hi)
            } else {
                (lo.max(0.0), hi.min(extent))
            }
        };
        let (u_min, u_max) = shift(self.u_min, self.u_max, du, (width - 1) as f64);
        let (v_min, v_max) = shift(self.v_min, self.v_max, dv, (height - 1) as f64);
        BoundingBox {
            u_min,
            v_min,
            u_max,
            v_max,
            confidence: self.confidence,
        }
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let iw = (self.u_max.min(other.u_max) - self.u_min.max(other.u_min)).max(0.0);
        let ih = (self.v_max.min(other.v_max) - self.v_min.max(other.v_min)).max(0.0);
        let inter = iw * ih;
        let union = self.width() * self.height() + other.width() * other.height() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct LikelihoodWeights {
    pub alpha_box: f64,
    pub alpha_b: f64,
    pub alpha_r: f64,
    pub alpha_e: f64,
    pub alpha_p: f64,
}

impl Default for LikelihoodWeights {
    fn default() -> Self {
        LikelihoodWeights {
            alpha_box: 0.1,
            alpha_b: 0.1,
            alpha_r: 0.3,
            alpha_e: 0.25,
            alpha_p: 0.25,
        }
    }
}

impl LikelihoodWeights {
    pub fn new(alpha_box: f64, alpha_b: f64, alpha_r: f64, alpha_e: f64, alpha_p: f64) -> Result<Self> {
        let w = LikelihoodWeights {
            alpha_box,
            alpha_b,
            alpha_r,
            alpha_e,
            alpha_p,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.alpha_box, self.alpha_b, self.alpha_r, self.alpha_e, self.alpha_p]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Weights(format!("coefficients must be non-negative, got {a:?}")));
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Weights(format!("coefficients must sum to 1 (sum is {sum})")));
        }
        Ok(())
    }
}

impl TryFrom<[f64; 5]> for LikelihoodWeights {
    type Error = Error;

    fn try_from(a: [f64; 5]) -> Result<Self> {
        LikelihoodWeights::new(a[0], a[1], a[2], a[3], a[4])
    }
}

impl From<LikelihoodWeights> for [f64; 5] {
    fn from(w: LikelihoodWeights) -> Self {
        w.as_array()
    }
}

/// Per-term likelihood values and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TermBreakdown {
    pub w_box: f64,
    #[serde(rename = "I_b")]
    pub i_b: f64,
    #[serde(rename = "I_r")]
    pub i_r: f64,
    #[serde(rename = "I_e")]
    pub i_e: f64,
    #[serde(rename = "I_p")]
    pub i_p: f64,
    pub total: f64,
}

impl TermBreakdown {
    pub fn from_terms(weights: &LikelihoodWeights, w_box: f64, i_b: f64, i_r: f64, i_e: f64, i_p: f64) -> Self {
        let total = weights.alpha_box * w_box
            + weights.alpha_b * i_b
            + weights.alpha_r * i_r
            + weights.alpha_e * i_e
            + weights.alpha_p * i_p;
        TermBreakdown {
            w_box,
            i_b,
            i_r,
            i_e,
            i_p,
            total: total.clamp(0.0, 1.0),
        }
    }
}

/// How a feature ratio is scored when the rendered sample has no feature of
/// that kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyFeatureScore {
    /// Score 1.
    One,
    /// Score 0.
    #[default]
    Zero,
    /// Use the hypothesis' raw inlier ratio `I_r`.
    RawInlierRatio,
}

#[inline]
pub fn inlier(p: &Vec3, p_prime: &Vec3, epsilon: f64) -> bool {
    (p - p_prime).norm_squared() < epsilon * epsilon
}

/// Inlier count over a set of rendered points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InlierCount {
    pub inliers: usize,
    pub total: usize,
}

impl InlierCount {
    pub fn ratio_or(&self, empty: f64) -> f64 {
        if self.total == 0 {
            empty
        } else {
            self.inliers as f64 / self.total as f64
        }
    }
}

pub fn inlier_ratio(rendered: &OrganizedCloud, observed: &OrganizedCloud, epsilon: f64) -> Result<f64> {
    rendered.same_grid(observed)?;
    let rect = PixelRect::full(rendered.width(), rendered.height());
    Ok(raw_counts(rendered, observed, rect, None, epsilon).0.ratio_or(0.0))
}

pub fn bbox_inlier_ratio(
    rendered: &OrganizedCloud,
    observed: &OrganizedCloud,
    bbox: &BoundingBox,
    epsilon: f64,
) -> Result<f64> {
    rendered.same_grid(observed)?;
    let rect = PixelRect::full(rendered.width(), rendered.height());
    let map = BoxMapping::identity();
    Ok(raw_counts(rendered, observed, rect, Some((bbox, &map)), epsilon)
        .1
        .ratio_or(0.0))
}

/// Maps render-grid pixel centers into observation pixel coordinates.
#[derive(Clone, Copy, Debug)]
struct BoxMapping {
    su: f64,
    sv: f64,
}

impl BoxMapping {
    fn identity() -> Self {
        BoxMapping { su: 1.0, sv: 1.0 }
    }

    fn between(render: &CameraIntrinsics, observation: &CameraIntrinsics) -> Self {
        BoxMapping {
            su: observation.width as f64 / render.width as f64,
            sv: observation.height as f64 / render.height as f64,
        }
    }

    #[inline]
    fn map(&self, u: usize, v: usize) -> (f64, f64) {
        if self.su == 1.0 && self.sv == 1.0 {
            (u as f64, v as f64)
        } else {
            ((u as f64 + 0.5) * self.su - 0.5, (v as f64 + 0.5) * self.sv - 0.5)
        }
    }
}

/// Whole-cloud and in-box inlier counts over rendered points inside `rect`.
fn raw_counts(
    rendered: &OrganizedCloud,
    observed: &OrganizedCloud,
    rect: PixelRect,
    bbox: Option<(&BoundingBox, &BoxMapping)>,
    epsilon: f64,
) -> (InlierCount, InlierCount) {
    let w = rendered.width();
    let (r, z) = (rendered.points(), observed.points());
    let mut all = InlierCount::default();
    let mut in_box = InlierCount::default();
    for v in rect.v0..rect.v1 {
        for u in rect.u0..rect.u1 {
            let i = v * w + u;
            let Some(rp) = &r[i] else { continue };
            let hit = z[i].as_ref().is_some_and(|zp| inlier(rp, zp, epsilon));
            all.total += 1;
            all.inliers += hit as usize;
            if hit {
                if let Some((b, map)) = bbox {
                    let (bu, bv) = map.map(u, v);
                    in_box.inliers += b.contains(bu, bv) as usize;
                }
            }
        }
    }
    in_box.total = all.total;
    (all, in_box)
}

/// Observed features laid out on the pixel grid for windowed lookup.
#[derive(Clone, Debug)]
pub struct FeatureGrid {
    width: usize,
    height: usize,
    edges: Vec<Option<Vec3>>,
    planars: Vec<Option<Vec3>>,
}

impl FeatureGrid {
    pub fn new(features: &FeatureCloud) -> Self {
        let n = features.width * features.height;
        let mut edges = vec![None; n];
        let mut planars = vec![None; n];
        for f in &features.edges {
            edges[f.v * features.width + f.u] = Some(f.point);
        }
        for f in &features.planars {
            planars[f.v * features.width + f.u] = Some(f.point);
        }
        FeatureGrid {
            width: features.width,
            height: features.height,
            edges,
            planars,
        }
    }

    /// Matched counts of rendered edges and planars.
    pub fn match_counts(
        &self,
        rendered: &FeatureCloud,
        epsilon: f64,
        pixel_window: usize,
    ) -> (InlierCount, InlierCount) {
        let count = |pts: &[crate::features::FeaturePoint], grid: &[Option<Vec3>]| {
            let inliers = pts
                .iter()
                .filter(|f| self.any_within(grid, f.u, f.v, &f.point, epsilon, pixel_window))
                .count();
            InlierCount {
                inliers,
                total: pts.len(),
            }
        };
        (count(&rendered.edges, &self.edges), count(&rendered.planars, &self.planars))
    }

    fn any_within(&self, grid: &[Option<Vec3>], u: usize, v: usize, p: &Vec3, epsilon: f64, win: usize) -> bool {
        let (u0, u1) = (u.saturating_sub(win), (u + win).min(self.width - 1));
        let (v0, v1) = (v.saturating_sub(win), (v + win).min(self.height - 1));
        (v0..=v1).any(|nv| {
            grid[nv * self.width + u0..=nv * self.width + u1]
                .iter()
                .flatten()
                .any(|q| inlier(p, q, epsilon))
        })
    }
}

/// `(I_e, I_p)`. A rendered feature is an inlier when an observed feature of
/// the same kind lies within `pixel_window` (Chebyshev) pixels and closer
/// than `epsilon` in 3D. An empty rendered set scores 1.
pub fn feature_inlier_ratio(
    rendered: &FeatureCloud,
    observed: &FeatureCloud,
    epsilon: f64,
    pixel_window: usize,
) -> (f64, f64) {
    let (e, p) = FeatureGrid::new(observed).match_counts(rendered, epsilon, pixel_window);
    (e.ratio_or(1.0), p.ratio_or(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LikelihoodParams {
    pub weights: LikelihoodWeights,
    pub epsilon: f64,
    /// Chebyshev pixel radius for feature correspondence.
    pub feature_window: usize,
    pub features: FeatureParams,
    pub empty_features: EmptyFeatureScore,
}

impl Default for LikelihoodParams {
    fn default() -> Self {
        LikelihoodParams {
            weights: LikelihoodWeights::default(),
            epsilon: 0.005,
            feature_window: 1,
            features: FeatureParams::default(),
            empty_features: EmptyFeatureScore::default(),
        }
    }
}

/// The observation prepared once per run: the cloud resampled to the render
/// grid, its features, and the feature lookup grid.
#[derive(Clone, Debug)]
pub struct ObservationContext {
    observation_intrinsics: CameraIntrinsics,
    cloud: OrganizedCloud,
    features: FeatureCloud,
    grid: FeatureGrid,
    box_mapping_scale: (f64, f64),
}

impl ObservationContext {
    /// `render` defaults to the observation's own camera.
    pub fn new(observation: &OrganizedCloud, render: Option<&CameraIntrinsics>, params: &FeatureParams) -> Self {
        let obs_k = *observation.intrinsics();
        let render_k = render.copied().unwrap_or(obs_k);
        let cloud = observation.downsample_nearest(&render_k);
        let features = extract_features(&cloud, params);
        let grid = FeatureGrid::new(&features);
        let m = BoxMapping::between(&render_k, &obs_k);
        ObservationContext {
            observation_intrinsics: obs_k,
            cloud,
            features,
            grid,
            box_mapping_scale: (m.su, m.sv),
        }
    }

    /// Camera of the original observation (boxes live in its pixel grid).
    pub fn observation_intrinsics(&self) -> &CameraIntrinsics {
        &self.observation_intrinsics
    }

    pub fn render_intrinsics(&self) -> &CameraIntrinsics {
        self.cloud.intrinsics()
    }

    pub fn cloud(&self) -> &OrganizedCloud {
        &self.cloud
    }

    pub fn features(&self) -> &FeatureCloud {
        &self.features
    }

    fn box_mapping(&self) -> BoxMapping {
        BoxMapping {
            su: self.box_mapping_scale.0,
            sv: self.box_mapping_scale.1,
        }
    }
}

/// Rasterizer for [`weigh`], with a guard band of half the image size around
/// the image.
pub fn scoring_rasterizer(render: &CameraIntrinsics) -> Rasterizer {
    Rasterizer::with_guard(*render, render.width.max(render.height) / 2)
}

/// Scores one hypothesis. `rasterizer` must use the context's render camera;
/// rendered points falling in its guard band count as outliers.
pub fn weigh(
    pose: &Pose,
    bbox: &BoundingBox,
    mesh: &TriangleMesh,
    context: &ObservationContext,
    params: &LikelihoodParams,
    rasterizer: &mut Rasterizer,
) -> TermBreakdown {
    weigh_at(pose, bbox, mesh, context, params, &[params.epsilon], rasterizer)[0]
}

/// [`weigh`] at each inlier radius in `epsilons`, rendering and extracting
/// features once.
pub fn weigh_at(
    pose: &Pose,
    bbox: &BoundingBox,
    mesh: &TriangleMesh,
    context: &ObservationContext,
    params: &LikelihoodParams,
    epsilons: &[f64],
    rasterizer: &mut Rasterizer,
) -> Vec<TermBreakdown> {
    debug_assert_eq!(rasterizer.intrinsics(), context.render_intrinsics());
    let (_, rect) = rasterizer.render_cloud(mesh, pose);
    let outside = rasterizer.outside_count();
    let map = context.box_mapping();
    let sample_features = composite_features(rect, context, params, rasterizer);
    let rendered = rasterizer.rendered_cloud();
    epsilons
        .iter()
        .map(|&eps| {
            let (mut all, mut in_box) = raw_counts(rendered, &context.cloud, rect, Some((bbox, &map)), eps);
            // Rendered points beyond the image have no observation.
            all.total += outside;
            in_box.total += outside;
            let i_r = all.ratio_or(0.0);
            let i_b = in_box.ratio_or(0.0);
            let (edges, planars) = context.grid.match_counts(&sample_features, eps, params.feature_window);
            let empty = match params.empty_features {
                EmptyFeatureScore::One => 1.0,
                EmptyFeatureScore::Zero => 0.0,
                EmptyFeatureScore::RawInlierRatio => i_r,
            };
            TermBreakdown::from_terms(
                &params.weights,
                bbox.confidence.clamp(0.0, 1.0),
                i_b,
                i_r,
                edges.ratio_or(empty),
                planars.ratio_or(empty),
            )
        })
        .collect()
}

/// Features of the sample as it would be observed: the render overlaid on
/// the observation, feature blocks aligned with the observation's, keeping
/// only features that fall on rendered pixels.
fn composite_features(
    rect: PixelRect,
    context: &ObservationContext,
    params: &LikelihoodParams,
    rasterizer: &mut Rasterizer,
) -> FeatureCloud {
    let (w, h) = (context.cloud.width(), context.cloud.height());
    if rect.is_empty() {
        return FeatureCloud::empty(w, h);
    }
    let win = params.features.window.max(1);
    let r = params.features.neighborhood_radius;
    let blocks = PixelRect {
        u0: rect.u0 / win * win,
        v0: rect.v0 / win * win,
        u1: rect.u1.div_ceil(win) * win,
        v1: rect.v1.div_ceil(win) * win,
    };
    let region = PixelRect {
        u0: blocks.u0.saturating_sub(r),
        v0: blocks.v0.saturating_sub(r),
        u1: (blocks.u1 + r).min(w),
        v1: (blocks.v1 + r).min(h),
    };
    let composite = rasterizer.composite_over(&context.cloud, region);
    let mut features = extract_features_in(composite, &params.features, blocks);
    features.edges.retain(|f| rasterizer.composite_from_render(f.u, f.v));
    features.planars.retain(|f| rasterizer.composite_from_render(f.u, f.v));
    features
}

/// One-shot scoring against a raw observation, preparing the context and a
/// rasterizer on the fly.
pub fn weigh_observation(
    pose: &Pose,
    bbox: &BoundingBox,
    mesh: &TriangleMesh,
    observation: &OrganizedCloud,
    params: &LikelihoodParams,
) -> Result<TermBreakdown> {
    params.weights.validate()?;
    if !(params.epsilon > 0.0) {
        return Err(Error::Invalid(format!("epsilon must be positive, got {}", params.epsilon)));
    }
    let context = ObservationContext::new(observation, None, &params.features);
    let mut r = scoring_rasterizer(context.render_intrinsics());
    Ok(weigh(pose, bbox, mesh, &context, params, &mut r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeaturePoint;

    fn k10() -> CameraIntrinsics {
        CameraIntrinsics::new(20.0, 20.0, 5.0, 5.0, 16, 16).unwrap()
    }

    #[test]
    fn inlier_examples() {
        let p = Vec3::new(0.0, 0.0, 1.0);
        assert!(inlier(&p, &p, 0.005));
        assert!(inlier(&p, &Vec3::new(0.0, 0.0, 1.004), 0.005));
        assert!(!inlier(&p, &Vec3::new(0.0, 0.0, 1.006), 0.005));
        // Exactly ε apart (0.25 is exact in binary) is not an inlier.
        assert!(!inlier(&Vec3::zeros(), &Vec3::new(0.25, 0.0, 0.0), 0.25));
    }

    #[test]
    fn inlier_ratio_examples() {
        let k = k10();
        let obs = OrganizedCloud::from_depth(k, &vec![Some(1.0); 256]).unwrap();
        assert_eq!(inlier_ratio(&obs, &obs, 0.005).unwrap(), 1.0);
        let far = OrganizedCloud::from_depth(k, &vec![Some(2.0); 256]).unwrap();
        assert_eq!(inlier_ratio(&far, &obs, 0.005).unwrap(), 0.0);
        let empty = OrganizedCloud::empty(k);
        assert_eq!(inlier_ratio(&empty, &obs, 0.005).unwrap(), 0.0);
        let other = OrganizedCloud::empty(CameraIntrinsics::new(20.0, 20.0, 5.0, 5.0, 16, 17).unwrap());
        assert!(matches!(inlier_ratio(&obs, &other, 0.005), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn bbox_ratio_examples() {
        let k = k10();
        let obs = OrganizedCloud::from_depth(k, &vec![Some(1.0); 256]).unwrap();
        let mut depth = vec![None; 256];
        for v in 2..6 {
            for u in 2..7 {
                depth[v * 16 + u] = Some(if u == 2 { 1.5 } else { 1.0 });
            }
        }
        let r = OrganizedCloud::from_depth(k, &depth).unwrap();
        let whole = BoundingBox::new(0.0, 0.0, 15.0, 15.0, 1.0).unwrap();
        assert_eq!(
            bbox_inlier_ratio(&r, &obs, &whole, 0.005).unwrap(),
            inlier_ratio(&r, &obs, 0.005).unwrap()
        );
        // 20 rendered points inside, 4 of them (column 2) outliers.
        assert_eq!(bbox_inlier_ratio(&r, &obs, &whole, 0.005).unwrap(), 16.0 / 20.0);
        let disjoint = BoundingBox::new(10.0, 10.0, 15.0, 15.0, 1.0).unwrap();
        assert_eq!(bbox_inlier_ratio(&r, &obs, &disjoint, 0.005).unwrap(), 0.0);
        // Columns 2..=4 inside: 8 inliers out of all 20 rendered points.
        let left = BoundingBox::new(0.0, 0.0, 4.0, 15.0, 1.0).unwrap();
        assert_eq!(bbox_inlier_ratio(&r, &obs, &left, 0.005).unwrap(), 8.0 / 20.0);
    }

    fn fp(u: usize, v: usize, z: f64) -> FeaturePoint {
        FeaturePoint {
            u,
            v,
            point: Vec3::new(u as f64 * 0.01, v as f64 * 0.01, z),
        }
    }

    #[test]
    fn feature_ratio_examples() {
        let mut observed = FeatureCloud::empty(16, 16);
        observed.edges = (0..8).map(|i| fp(i, 3, 1.0)).collect();
        observed.planars = vec![fp(9, 9, 1.0)];
        assert_eq!(feature_inlier_ratio(&observed, &observed, 0.005, 1), (1.0, 1.0));

        // 8 rendered edges; 6 sit on observed ones, 2 are 1 cm deeper.
        let mut rendered = FeatureCloud::empty(16, 16);
        rendered.edges = (0..8).map(|i| fp(i, 3, if i < 6 { 1.0 } else { 1.01 })).collect();
        let (ie, ip) = feature_inlier_ratio(&rendered, &observed, 0.005, 1);
        assert_eq!(ie, 0.75);
        assert_eq!(ip, 1.0);

        let no_edges = FeatureCloud {
            edges: Vec::new(),
            ..observed.clone()
        };
        assert_eq!(feature_inlier_ratio(&rendered, &no_edges, 0.005, 1).0, 0.0);
    }

    #[test]
    fn feature_window_allows_neighbor_match() {
        let mut observed = FeatureCloud::empty(16, 16);
        observed.edges = vec![FeaturePoint {
            u: 5,
            v: 5,
            point: Vec3::new(0.0, 0.0, 1.0),
        }];
        let mut rendered = FeatureCloud::empty(16, 16);
        rendered.edges = vec![FeaturePoint {
            u: 6,
            v: 4,
            point: Vec3::new(0.001, 0.0, 1.0),
        }];
        assert_eq!(feature_inlier_ratio(&rendered, &observed, 0.005, 1).0, 1.0);
        assert_eq!(feature_inlier_ratio(&rendered, &observed, 0.005, 0).0, 0.0);
    }

    #[test]
    fn weights_validation() {
        assert!(LikelihoodWeights::new(0.1, 0.1, 0.3, 0.25, 0.15).is_err());
        assert!(LikelihoodWeights::new(-0.1, 0.2, 0.3, 0.3, 0.3).is_err());
        let w = LikelihoodWeights::default();
        w.validate().unwrap();
        let json = serde_json::to_string(&w).unwrap();
        assert_eq!(json, "[0.1,0.1,0.3,0.25,0.25]");
    }

    #[test]
    fn box_shift_preserves_size_and_stays_in_image() {
        let b = BoundingBox::new(1.0, 2.0, 11.0, 8.0, 0.7).unwrap();
        let s = b.shifted_within(-20.0, 30.0, 64, 48);
        assert_eq!((s.width(), s.height()), (b.width(), b.height()));
        assert!(s.u_min >= 0.0 && s.v_max <= 47.0);
        assert_eq!(s.confidence, 0.7);
        let clipped = BoundingBox::new(-5.0, -5.0, 3.0, 3.0, 1.0).unwrap().clip_to_image(16, 16).unwrap();
        assert_eq!((clipped.u_min, clipped.u_max), (0.0, 3.0));
        assert!(BoundingBox::new(20.0, 20.0, 30.0, 30.0, 1.0).unwrap().clip_to_image(16, 16).is_err());
    }

    #[test]
    fn box_record_format() {
        let b: BoundingBox = serde_json::from_str(r#"{"box":[1,2,3,4],"confidence":0.5,"scale":2}"#).unwrap();
        assert_eq!(b, BoundingBox::new(1.0, 2.0, 3.0, 4.0, 0.5).unwrap());
        assert!(serde_json::from_str::<BoundingBox>(r#"{"box":[3,2,1,4],"confidence":0.5}"#).is_err());
    }
}
