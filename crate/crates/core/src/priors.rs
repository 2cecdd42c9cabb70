//! Detection priors: per-class lists of scored boxes, their file format and
//! a corrupting detector built from ground truth.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, TriangleMesh};
use crate::likelihood::BoundingBox;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionPrior {
    pub width: usize,
    pub height: usize,
    pub detections: BTreeMap<String, Vec<BoundingBox>>,
}

/// Non-fatal adjustment made while loading a prior.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PriorWarning {
    pub context: String,
    pub message: String,
}

impl std::fmt::Display for PriorWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.context, self.message)
    }
}

fn prior_err(context: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Prior {
        context: context.into(),
        message: message.into(),
    }
}

impl DetectionPrior {
    pub fn new(width: usize, height: usize, detections: BTreeMap<String, Vec<BoundingBox>>) -> Self {
        DetectionPrior {
            width,
            height,
            detections,
        }
    }

    pub fn boxes(&self, class: &str) -> &[BoundingBox] {
        self.detections.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(prior_err("image", "width and height must be positive"));
        }
        for (class, boxes) in &self.detections {
            for (i, b) in boxes.iter().enumerate() {
                BoundingBox::new(b.u_min, b.v_min, b.u_max, b.v_max, b.confidence)
                    .map_err(|e| prior_err(format!("detections.{class}[{i}]"), e.to_string()))?;
                if !b.intersects_image(self.width, self.height) {
                    return Err(prior_err(format!("detections.{class}[{i}]"), "box lies outside the image"));
                }
            }
        }
        Ok(())
    }

    /// Parses and validates a prior document. Confidences outside `[0, 1]`
    /// are clamped and boxes clipped to the image; each adjustment and each
    /// box dropped for lying fully outside the image yields a warning.
    pub fn parse(text: &str) -> Result<(DetectionPrior, Vec<PriorWarning>)> {
        let doc: Value = serde_json::from_str(text).map_err(|e| {
            prior_err(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        let root = doc.as_object().ok_or_else(|| prior_err("document", "expected an object"))?;
        let dim = |name: &str| -> Result<usize> {
            let v = root.get(name).ok_or_else(|| prior_err(name, "missing field"))?;
            v.as_u64()
                .filter(|&n| n > 0)
                .map(|n| n as usize)
                .ok_or_else(|| prior_err(name, format!("expected a positive integer, got {v}")))
        };
        let (width, height) = (dim("width")?, dim("height")?);
        let dets = root
            .get("detections")
            .ok_or_else(|| prior_err("detections", "missing field"))?
            .as_object()
            .ok_or_else(|| prior_err("detections", "expected an object keyed by class"))?;

        let mut warnings = Vec::new();
        let mut detections = BTreeMap::new();
        for (class, list) in dets {
            let list = list
                .as_array()
                .ok_or_else(|| prior_err(format!("detections.{class}"), "expected a list of boxes"))?;
            let mut boxes = Vec::with_capacity(list.len());
            for (i, entry) in list.iter().enumerate() {
                let ctx = format!("detections.{class}[{i}]");
                if let Some(b) = parse_box(entry, &ctx, width, height, &mut warnings)? {
                    boxes.push(b);
                }
            }
            detections.insert(class.clone(), boxes);
        }
        Ok((DetectionPrior::new(width, height, detections), warnings))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(DetectionPrior, Vec<PriorWarning>)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

fn parse_box(
    entry: &Value,
    ctx: &str,
    width: usize,
    height: usize,
    warnings: &mut Vec<PriorWarning>,
) -> Result<Option<BoundingBox>> {
    let obj = entry.as_object().ok_or_else(|| prior_err(ctx, "expected an object"))?;
    let bounds = obj
        .get("box")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 4)
        .ok_or_else(|| prior_err(format!("{ctx}.box"), "expected [u_min, v_min, u_max, v_max]"))?;
    let mut b = [0.0; 4];
    for (k, v) in bounds.iter().enumerate() {
        b[k] = v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| prior_err(format!("{ctx}.box[{k}]"), format!("expected a number, got {v}")))?;
    }
    let conf_value = obj.get("confidence").ok_or_else(|| prior_err(format!("{ctx}.confidence"), "missing field"))?;
    let mut confidence = conf_value
        .as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| prior_err(format!("{ctx}.confidence"), format!("expected a number, got {conf_value}")))?;
    if !(0.0..=1.0).contains(&confidence) {
        let clamped = confidence.clamp(0.0, 1.0);
        warnings.push(PriorWarning {
            context: format!("{ctx}.confidence"),
            message: format!("clamped {confidence} to {clamped}"),
        });
        confidence = clamped;
    }
    let raw = BoundingBox::new(b[0], b[1], b[2], b[3], confidence)
        .map_err(|e| prior_err(format!("{ctx}.box"), e.to_string()))?;
    match raw.clip_to_image(width, height) {
        Ok(clipped) => {
            if clipped != raw {
                warnings.push(PriorWarning {
                    context: format!("{ctx}.box"),
                    message: format!("clipped to the {width}x{height} image"),
                });
            }
            Ok(Some(clipped))
        }
        Err(_) => {
            warnings.push(PriorWarning {
                context: format!("{ctx}.box"),
                message: "dropped: no overlap with the image".into(),
            });
            Ok(None)
        }
    }
}

pub fn load_prior(path: impl AsRef<Path>) -> Result<(DetectionPrior, Vec<PriorWarning>)> {
    DetectionPrior::load(path)
}

/// Bounding box of the projections of all vertices in front of the near
/// plane, clipped to the image, with confidence 1.
pub fn gt_box_from_pose(mesh: &TriangleMesh, pose: &Pose, k: &CameraIntrinsics) -> Result<BoundingBox> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for v in mesh.vertices() {
        let p = pose.transform_point(v);
        if p.z < k.z_near {
            continue;
        }
        let uv = [k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy];
        for a in 0..2 {
            lo[a] = lo[a].min(uv[a]);
            hi[a] = hi[a].max(uv[a]);
        }
    }
    if !lo[0].is_finite() {
        return Err(Error::OutOfView);
    }
    BoundingBox::new(lo[0], lo[1], hi[0], hi[1], 1.0)
        .and_then(|b| b.clip_to_image(k.width, k.height))
        .map_err(|_| Error::OutOfView)
}

/// How a simulated detector degrades ground-truth boxes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionSpec {
    /// Center jitter std in pixels.
    pub center_jitter_px: f64,
    /// Additional center jitter std as a fraction of the box width/height.
    pub center_jitter_frac: f64,
    /// Std of the multiplicative size noise.
    pub scale_jitter: f64,
    pub drop_prob: f64,
    /// Spurious boxes per class, placed uniformly over the image with the
    /// size of the class' true box.
    pub false_positives: usize,
    pub fp_confidence: [f64; 2],
    /// Spurious boxes per class that partly overlap the true box.
    pub overlap_false_positives: usize,
    pub overlap_confidence: [f64; 2],
    /// Maximum center offset of overlapping spurious boxes, as a fraction of
    /// the true box size.
    pub overlap_offset: f64,
    pub confidence_noise: f64,
    /// Base confidence of surviving true boxes; `1 − |noise|` when unset.
    pub true_confidence: Option<f64>,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            center_jitter_px: 0.0,
            center_jitter_frac: 0.0,
            scale_jitter: 0.0,
            drop_prob: 0.0,
            false_positives: 0,
            fp_confidence: [0.5, 0.9],
            overlap_false_positives: 0,
            overlap_confidence: [0.1, 0.3],
            overlap_offset: 0.4,
            confidence_noise: 0.0,
            true_confidence: None,
        }
    }
}

pub const CORRUPTION_PRESETS: [&str; 5] = ["clean", "jitter", "falsepos", "dropout", "dark"];

impl CorruptionSpec {
    pub fn preset(name: &str) -> Result<CorruptionSpec> {
        let clean = CorruptionSpec::default();
        Ok(match name {
            "clean" => clean,
            "jitter" => CorruptionSpec {
                center_jitter_frac: 0.15,
                scale_jitter: 0.1,
                ..clean
            },
            "falsepos" => CorruptionSpec {
                false_positives: 2,
                fp_confidence: [0.5, 0.9],
                ..clean
            },
            "dropout" => CorruptionSpec { drop_prob: 0.5, ..clean },
            "dark" => CorruptionSpec {
                center_jitter_frac: 0.1,
                drop_prob: 0.2,
                false_positives: 1,
                fp_confidence: [0.3, 0.7],
                confidence_noise: 0.3,
                ..clean
            },
            other => {
                return Err(Error::Invalid(format!(
                    "unknown corruption preset '{other}' ({})",
                    CORRUPTION_PRESETS.join("|")
                )))
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            self.center_jitter_px,
            self.center_jitter_frac,
            self.scale_jitter,
            self.confidence_noise,
            self.overlap_offset,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Invalid(format!("corruption sigmas must be non-negative: {self:?}")));
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let range = |r: [f64; 2]| prob(r[0]) && prob(r[1]) && r[0] <= r[1];
        if !prob(self.drop_prob)
            || !range(self.fp_confidence)
            || !range(self.overlap_confidence)
            || !self.true_confidence.is_none_or(prob)
        {
            return Err(Error::Invalid(format!("corruption probabilities must lie in [0, 1]: {self:?}")));
        }
        Ok(())
    }
}

fn draw_range<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

fn centered(cu: f64, cv: f64, w: f64, h: f64, confidence: f64) -> Option<BoundingBox> {
    BoundingBox::new(cu - 0.5 * w, cv - 0.5 * h, cu + 0.5 * w, cv + 0.5 * h, confidence).ok()
}

/// Corrupts ground-truth boxes class by class (in class order). The output
/// is never thresholded.
pub fn synth_prior<R: Rng + ?Sized>(
    gt_boxes: &BTreeMap<String, BoundingBox>,
    width: usize,
    height: usize,
    spec: &CorruptionSpec,
    rng: &mut R,
) -> Result<DetectionPrior> {
    spec.validate()?;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let (wm, hm) = ((width - 1) as f64, (height - 1) as f64);
    let mut detections = BTreeMap::new();
    for (class, gt) in gt_boxes {
        let mut boxes = Vec::new();
        let (cu, cv) = gt.center();
        let (bw, bh) = (gt.width(), gt.height());

        let dropped = spec.drop_prob > 0.0 && rng.random::<f64>() < spec.drop_prob;
        if !dropped {
            let su = spec.center_jitter_px.hypot(spec.center_jitter_frac * bw);
            let sv = spec.center_jitter_px.hypot(spec.center_jitter_frac * bh);
            let mut b = *gt;
            if su > 0.0 || sv > 0.0 || spec.scale_jitter > 0.0 {
                let (du, dv) = (su * unit.sample(rng), sv * unit.sample(rng));
                let scale = (1.0 + spec.scale_jitter * unit.sample(rng)).max(0.2);
                if let Some(j) = centered(cu + du, cv + dv, bw * scale, bh * scale, 1.0) {
                    b = j;
                }
            }
            let base = spec.true_confidence.unwrap_or(1.0);
            let noise = if spec.confidence_noise > 0.0 {
                (spec.confidence_noise * unit.sample(rng)).abs()
            } else {
                0.0
            };
            b.confidence = (base - noise).clamp(0.0, 1.0);
            if let Ok(b) = b.clip_to_image(width, height) {
                boxes.push(b);
            }
        }
        for _ in 0..spec.overlap_false_positives {
            let du = rng.random_range(-1.0..=1.0) * spec.overlap_offset * bw;
            let dv = rng.random_range(-1.0..=1.0) * spec.overlap_offset * bh;
            let conf = draw_range(rng, spec.overlap_confidence);
            if let Some(b) = centered(cu + du, cv + dv, bw, bh, conf).and_then(|b| b.clip_to_image(width, height).ok()) {
                boxes.push(b);
            }
        }
        for _ in 0..spec.false_positives {
            let (u, v) = (rng.random_range(0.0..=wm), rng.random_range(0.0..=hm));
            let conf = draw_range(rng, spec.fp_confidence);
            let b = centered(u, v, bw, bh, conf)
                .unwrap_or(*gt)
                .shifted_within(0.0, 0.0, width, height);
            boxes.push(BoundingBox::new(b.u_min, b.v_min, b.u_max, b.v_max, conf)?);
        }
        detections.insert(class.clone(), boxes);
    }
    Ok(DetectionPrior::new(width, height, detections))
}
