//! Iterated likelihood weighting over (pose, box) hypotheses.
//!
//! The observation is fixed; each iteration scores the population, keeps the
//! best hypothesis seen so far, and stops once it reaches the convergence
//! threshold. Otherwise the population is resampled by weight and diffused
//! with noise scaled by [`anneal_factor`] of the current best weight.
//!
//! All randomness comes from per-(iteration, sample) streams derived from the
//! seed, so results do not depend on how scoring is scheduled.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    perturb_rotation, sample_uniform_rotation, CameraIntrinsics, OrganizedCloud, Pose, TriangleMesh, Vec3,
};
use crate::likelihood::{scoring_rasterizer, weigh, weigh_at, BoundingBox, LikelihoodParams, ObservationContext, TermBreakdown};
use crate::priors::DetectionPrior;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub num_samples: usize,
    pub max_iterations: usize,
    /// Convergence threshold `w̄` on the best weight.
    pub convergence_threshold: f64,
    pub presence_threshold: f64,
    /// Initial translation noise std (m).
    pub sigma_t0: f64,
    /// Initial rotation noise std (rad).
    pub sigma_r0: f64,
    pub anneal_knee: f64,
    pub anneal_power: f64,
    /// Box center jitter half-range as a fraction of the image size.
    pub box_diffusion: f64,
    pub likelihood: LikelihoodParams,
    pub seed: u64,
    /// Admissible object depths (m).
    pub workspace_z: [f64; 2],
    /// Render resolution; the observation's own when unset.
    pub render_size: Option<[usize; 2]>,
    /// Inlier radius (m) of a coarse weight averaged into the resampling
    /// weights. `None` resamples on the weight alone.
    pub search_epsilon: Option<f64>,
    /// Diffusion noise multipliers; sample `i` uses entry `i mod len`.
    pub diffusion_scales: Vec<f64>,
    /// Diffuse either the translation or the rotation of each sample, each
    /// with probability 1/2, instead of both.
    pub block_moves: bool,
    /// Lower bound on the annealing factor, keeping some exploration once the
    /// best weight is high.
    pub min_anneal_factor: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            num_samples: 625,
            max_iterations: 400,
            convergence_threshold: 0.9,
            presence_threshold: 0.5,
            sigma_t0: 0.07,
            sigma_r0: 0.3,
            anneal_knee: 0.6,
            anneal_power: 5.0,
            box_diffusion: 0.1,
            likelihood: LikelihoodParams::default(),
            seed: 0,
            workspace_z: [0.3, 2.5],
            render_size: None,
            search_epsilon: Some(0.05),
            diffusion_scales: vec![1.0, 0.3, 0.1, 0.03],
            block_moves: true,
            min_anneal_factor: 0.03,
        }
    }
}

impl FilterConfig {
    /// Plain iterated likelihood weighting: resampling on the weight, one
    /// diffusion scale, joint translation and rotation moves.
    pub fn literal() -> Self {
        FilterConfig {
            search_epsilon: None,
            diffusion_scales: vec![1.0],
            block_moves: false,
            min_anneal_factor: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_samples == 0 {
            return bad("num_samples must be at least 1".into());
        }
        if !(self.anneal_knee > 0.0 && self.anneal_knee < 1.0) {
            return bad(format!("anneal_knee must lie in (0, 1), got {}", self.anneal_knee));
        }
        for (name, t) in [
            ("convergence_threshold", self.convergence_threshold),
            ("presence_threshold", self.presence_threshold),
        ] {
            if !(t > 0.0 && t <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {t}"));
            }
        }
        for (name, s) in [
            ("sigma_t0", self.sigma_t0),
            ("sigma_r0", self.sigma_r0),
            ("box_diffusion", self.box_diffusion),
            ("anneal_power", self.anneal_power),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return bad(format!("{name} must be non-negative, got {s}"));
            }
        }
        let [z0, z1] = self.workspace_z;
        if !(z0 > 0.0 && z0 < z1 && z1.is_finite()) {
            return bad(format!("workspace_z must satisfy 0 < near < far, got {:?}", self.workspace_z));
        }
        if !(self.likelihood.epsilon > 0.0 && self.likelihood.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.likelihood.epsilon));
        }
        if let Some(e) = self.search_epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return bad(format!("search_epsilon must be positive, got {e}"));
            }
        }
        if self.diffusion_scales.is_empty() || self.diffusion_scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad(format!(
                "diffusion_scales must be a non-empty list of non-negative numbers, got {:?}",
                self.diffusion_scales
            ));
        }
        if !(self.min_anneal_factor >= 0.0 && self.min_anneal_factor < 1.0) {
            return bad(format!("min_anneal_factor must lie in [0, 1), got {}", self.min_anneal_factor));
        }
        if let Some([w, h]) = self.render_size {
            if w < 16 || h < 16 {
                return bad(format!("render size must be at least 16x16, got {w}x{h}"));
            }
        }
        self.likelihood.weights.validate()
    }

    pub fn anneal(&self, best_weight: f64) -> f64 {
        anneal_factor_with(best_weight, self.anneal_knee, self.anneal_power).max(self.min_anneal_factor)
    }
}

/// `((1 − W)/(1 − knee))^power` above the knee, 1 below it.
pub fn anneal_factor_with(best_weight: f64, knee: f64, power: f64) -> f64 {
    if best_weight < knee {
        1.0
    } else {
        ((1.0 - best_weight.min(1.0)) / (1.0 - knee)).powf(power)
    }
}

/// Annealing factor with knee 0.6 and power 5.
pub fn anneal_factor(best_weight: f64) -> f64 {
    if best_weight < 0.6 {
        1.0
    } else {
        ((1.0 - best_weight.min(1.0)) / 0.4).powi(5)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub pose: Pose,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub weight: f64,
    pub breakdown: TermBreakdown,
    /// Weight used for resampling.
    #[serde(default)]
    pub search_weight: f64,
}

impl Hypothesis {
    pub fn unscored(pose: Pose, bbox: BoundingBox) -> Self {
        Hypothesis {
            pose,
            bbox,
            weight: 0.0,
            breakdown: TermBreakdown::default(),
            search_weight: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub object_class: String,
    pub best_pose: Pose,
    pub best_box: BoundingBox,
    pub best_weight: f64,
    pub breakdown: TermBreakdown,
    pub iterations_run: usize,
    pub converged: bool,
    pub present: bool,
    /// Best weight of the scored population, one entry per scoring pass
    /// (`iterations_run + 1` entries).
    pub weight_trace: Vec<f64>,
    /// Iterations whose resampling fell back to uniform weights.
    pub degenerate_iterations: usize,
}

/// Per-class result of [`run_scene`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ClassOutcome {
    Estimated(EstimateReport),
    Failed { object_class: String, error: String },
}

impl ClassOutcome {
    pub fn object_class(&self) -> &str {
        match self {
            ClassOutcome::Estimated(r) => &r.object_class,
            ClassOutcome::Failed { object_class, .. } => object_class,
        }
    }

    pub fn report(&self) -> Option<&EstimateReport> {
        match self {
            ClassOutcome::Estimated(r) => Some(r),
            ClassOutcome::Failed { .. } => None,
        }
    }
}

/// State passed to observers after each scoring pass.
pub struct IterationSnapshot<'a> {
    /// 0 for the initial population.
    pub iteration: usize,
    pub samples: &'a [Hypothesis],
    /// Best hypothesis over all passes so far.
    pub best: &'a Hypothesis,
    pub lambda: f64,
}

// Purpose tags for the random streams.
const INIT: u64 = 1;
const RESAMPLE: u64 = 2;
const DIFFUSE: u64 = 3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6a09_e667_f3bc_c908, |h, &p| splitmix(h ^ splitmix(p)))
}

fn stream(seed: u64, iteration: usize, index: usize, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(&[seed, iteration as u64, index as u64, purpose]))
}

/// Seed for a class, independent of which other classes are estimated.
pub fn class_seed(seed: u64, class: &str) -> u64 {
    // FNV-1a keeps the class hash stable across platforms and releases.
    let h = class
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    mix(&[seed, h])
}

/// Index drawn with probability proportional to `weights` (uniform if they
/// are all zero).
fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return rng.random_range(0..weights.len());
    }
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Depth interval for samples inside `bbox`: the observed depths there
/// widened by the mesh diameter and clipped to the workspace, or the whole
/// workspace if the box holds no valid depth.
pub fn depth_bounds(bbox: &BoundingBox, obs: &OrganizedCloud, diameter: f64, workspace: [f64; 2]) -> [f64; 2] {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (u, v, p) in obs.iter_present() {
        if bbox.contains(u as f64, v as f64) {
            lo = lo.min(p.z);
            hi = hi.max(p.z);
        }
    }
    if lo > hi {
        return workspace;
    }
    let (a, b) = ((lo - diameter).max(workspace[0]), (hi + diameter).min(workspace[1]));
    if a < b {
        [a, b]
    } else {
        workspace
    }
}

/// Draws `config.num_samples` hypotheses: a box by confidence, a pixel
/// uniformly inside it, a depth uniform in volume between the box's depth
/// bounds, and a uniform rotation.
pub fn init_samples(
    object_class: &str,
    prior: &DetectionPrior,
    obs: &OrganizedCloud,
    diameter: f64,
    config: &FilterConfig,
) -> Result<Vec<Hypothesis>> {
    let boxes = prior.boxes(object_class);
    if boxes.is_empty() {
        return Err(Error::NoDetections(object_class.to_string()));
    }
    let k = *obs.intrinsics();
    let confidences: Vec<f64> = boxes.iter().map(|b| b.confidence).collect();
    let bounds: Vec<[f64; 2]> = boxes
        .iter()
        .map(|b| depth_bounds(b, obs, diameter, config.workspace_z))
        .collect();
    Ok((0..config.num_samples)
        .map(|i| {
            let mut rng = stream(config.seed, 0, i, INIT);
            let j = pick_weighted(&confidences, &mut rng);
            let b = boxes[j];
            let u = b.u_min + rng.random::<f64>() * b.width();
            let v = b.v_min + rng.random::<f64>() * b.height();
            let [z0, z1] = bounds[j];
            let (c0, c1) = (z0.powi(3), z1.powi(3));
            let z = (c0 + rng.random::<f64>() * (c1 - c0)).cbrt();
            let t = Vec3::new((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
            Hypothesis::unscored(Pose::new(sample_uniform_rotation(&mut rng), t), b)
        })
        .collect())
}

/// Systematic resampling to `n` slots. Returns the chosen indices and
/// whether the weights were degenerate (all zero or non-finite), in which
/// case the weights are treated as uniform.
pub fn resample_indices<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> (Vec<usize>, bool) {
    let total: f64 = weights.iter().sum();
    let degenerate = !(total > 0.0 && total.is_finite());
    let w: Vec<f64> = if degenerate {
        vec![1.0 / weights.len() as f64; weights.len()]
    } else {
        weights.iter().map(|w| w / total).collect()
    };
    let phase = rng.random::<f64>();
    let mut out = Vec::with_capacity(n);
    let mut cum = w[0];
    let mut j = 0;
    for i in 0..n {
        let target = (i as f64 + phase) / n as f64;
        while target >= cum && j + 1 < w.len() {
            j += 1;
            cum += w[j];
        }
        // Guard against rounding pushing the pointer onto a zero weight.
        while w[j] == 0.0 && j + 1 < w.len() {
            j += 1;
            cum += w[j];
        }
        out.push(j);
    }
    (out, degenerate)
}

pub fn resample<R: Rng + ?Sized>(samples: &[Hypothesis], n: usize, rng: &mut R) -> (Vec<Hypothesis>, bool) {
    let weights: Vec<f64> = samples.iter().map(|s| s.search_weight).collect();
    let (idx, degenerate) = resample_indices(&weights, n, rng);
    (idx.into_iter().map(|i| samples[i]).collect(), degenerate)
}

/// Gaussian pose noise with stds `λ·σ_T0` / `λ·σ_R0`, and a uniform box
/// shift of up to `λ·box_diffusion` of the image size.
pub fn diffuse_one<R: Rng + ?Sized>(
    h: &Hypothesis,
    lambda: f64,
    config: &FilterConfig,
    image: (usize, usize),
    rng: &mut R,
) -> Hypothesis {
    if lambda <= 0.0 {
        return *h;
    }
    let mut out = *h;
    let st = lambda * config.sigma_t0;
    if st > 0.0 {
        let n = Normal::new(0.0, st).expect("finite std");
        out.pose.translation += Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
    }
    out.pose.rotation = perturb_rotation(&h.pose.rotation, lambda * config.sigma_r0, rng);
    let ku = lambda * config.box_diffusion * image.0 as f64;
    let kv = lambda * config.box_diffusion * image.1 as f64;
    if ku > 0.0 || kv > 0.0 {
        let du = rng.random_range(-1.0..=1.0) * ku;
        let dv = rng.random_range(-1.0..=1.0) * kv;
        out.bbox = h.bbox.shifted_within(du, dv, image.0, image.1);
    }
    out
}

pub fn diffuse(
    samples: &[Hypothesis],
    lambda: f64,
    config: &FilterConfig,
    image: (usize, usize),
    iteration: usize,
) -> Vec<Hypothesis> {
    samples
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let mut rng = stream(config.seed, iteration, i, DIFFUSE);
            let scale = config.diffusion_scales[i % config.diffusion_scales.len()];
            let mut out = diffuse_one(h, lambda * scale, config, image, &mut rng);
            if config.block_moves {
                if rng.random::<bool>() {
                    out.pose.rotation = h.pose.rotation;
                } else {
                    out.pose.translation = h.pose.translation;
                }
            }
            out
        })
        .collect()
}

/// Scores every sample in parallel, one rasterizer per worker.
pub fn score(samples: &mut [Hypothesis], mesh: &TriangleMesh, context: &ObservationContext, config: &FilterConfig) {
    let k = *context.render_intrinsics();
    let params = &config.likelihood;
    samples
        .par_iter_mut()
        .for_each_init(
            || scoring_rasterizer(&k),
            |r, h| match config.search_epsilon {
                Some(coarse) => {
                    let w = weigh_at(&h.pose, &h.bbox, mesh, context, params, &[params.epsilon, coarse], r);
                    h.breakdown = w[0];
                    h.weight = w[0].total;
                    h.search_weight = 0.5 * (w[0].total + w[1].total);
                }
                None => {
                    h.breakdown = weigh(&h.pose, &h.bbox, mesh, context, params, r);
                    h.weight = h.breakdown.total;
                    h.search_weight = h.weight;
                }
            },
        );
}

/// Index of the first maximal weight.
fn argmax(samples: &[Hypothesis]) -> usize {
    samples
        .iter()
        .enumerate()
        .fold(0, |best, (i, h)| if h.weight > samples[best].weight { i } else { best })
}

/// Observation prepared for repeated runs on the same image.
pub struct PreparedObservation<'a> {
    pub observation: &'a OrganizedCloud,
    pub context: ObservationContext,
}

impl<'a> PreparedObservation<'a> {
    pub fn new(observation: &'a OrganizedCloud, config: &FilterConfig) -> Result<Self> {
        let render = match config.render_size {
            Some([w, h]) => Some(observation.intrinsics().resized(w, h)?),
            None => None,
        };
        let context = ObservationContext::new(observation, render.as_ref(), &config.likelihood.features);
        Ok(PreparedObservation { observation, context })
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        self.observation.intrinsics()
    }
}

pub type Observer<'o> = &'o mut dyn FnMut(&IterationSnapshot<'_>);

pub fn run(
    object_class: &str,
    mesh: &TriangleMesh,
    prior: &DetectionPrior,
    obs: &OrganizedCloud,
    config: &FilterConfig,
) -> Result<EstimateReport> {
    config.validate()?;
    let prepared = PreparedObservation::new(obs, config)?;
    run_prepared(object_class, mesh, prior, &prepared, config, None)
}

pub fn run_observed(
    object_class: &str,
    mesh: &TriangleMesh,
    prior: &DetectionPrior,
    obs: &OrganizedCloud,
    config: &FilterConfig,
    observer: Observer<'_>,
) -> Result<EstimateReport> {
    config.validate()?;
    let prepared = PreparedObservation::new(obs, config)?;
    run_prepared(object_class, mesh, prior, &prepared, config, Some(observer))
}

/// The filter loop on an already prepared observation, using `config.seed`
/// as is.
pub fn run_prepared(
    object_class: &str,
    mesh: &TriangleMesh,
    prior: &DetectionPrior,
    prepared: &PreparedObservation<'_>,
    config: &FilterConfig,
    mut observer: Option<Observer<'_>>,
) -> Result<EstimateReport> {
    config.validate()?;
    let k = prepared.intrinsics();
    if (prior.width, prior.height) != (k.width, k.height) {
        return Err(Error::Invalid(format!(
            "prior is for a {}x{} image but the observation is {}x{}",
            prior.width, prior.height, k.width, k.height
        )));
    }
    let image = (k.width, k.height);

    let mut samples = init_samples(object_class, prior, prepared.observation, mesh.diameter(), config)?;
    score(&mut samples, mesh, &prepared.context, config);
    let mut best = samples[argmax(&samples)];
    let mut trace = vec![best.weight];
    let mut lambda = config.anneal(best.weight);
    if let Some(obs) = observer.as_mut() {
        obs(&IterationSnapshot { iteration: 0, samples: &samples, best: &best, lambda });
    }

    let mut iteration = 0;
    let mut degenerate_iterations = 0;
    while best.weight < config.convergence_threshold && iteration < config.max_iterations {
        iteration += 1;
        let (resampled, degenerate) = resample(&samples, config.num_samples, &mut stream(config.seed, iteration, 0, RESAMPLE));
        degenerate_iterations += degenerate as usize;
        samples = diffuse(&resampled, lambda, config, image, iteration);
        score(&mut samples, mesh, &prepared.context, config);
        let top = samples[argmax(&samples)];
        trace.push(top.weight);
        if top.weight > best.weight {
            best = top;
        }
        lambda = config.anneal(top.weight);
        if let Some(obs) = observer.as_mut() {
            obs(&IterationSnapshot { iteration, samples: &samples, best: &best, lambda });
        }
    }

    Ok(EstimateReport {
        object_class: object_class.to_string(),
        best_pose: best.pose,
        best_box: best.bbox,
        best_weight: best.weight,
        breakdown: best.breakdown,
        iterations_run: iteration,
        converged: best.weight >= config.convergence_threshold,
        present: best.weight >= config.presence_threshold,
        weight_trace: trace,
        degenerate_iterations,
    })
}

/// Runs the filter independently per class, each with a seed derived from
/// the class name. Errors are confined to their class.
pub fn run_scene(
    classes: &[String],
    meshes: &BTreeMap<String, TriangleMesh>,
    prior: &DetectionPrior,
    obs: &OrganizedCloud,
    config: &FilterConfig,
) -> Result<Vec<ClassOutcome>> {
    config.validate()?;
    for (i, c) in classes.iter().enumerate() {
        if classes[..i].contains(c) {
            return Err(Error::Invalid(format!("class '{c}' requested twice")));
        }
    }
    let prepared = PreparedObservation::new(obs, config)?;
    Ok(classes
        .iter()
        .map(|class| {
            let result = meshes
                .get(class)
                .ok_or_else(|| Error::Invalid(format!("no mesh for class '{class}'")))
                .and_then(|mesh| {
                    let cfg = FilterConfig { seed: class_seed(config.seed, class), ..config.clone() };
                    run_prepared(class, mesh, prior, &prepared, &cfg, None)
                });
            match result {
                Ok(r) => ClassOutcome::Estimated(r),
                Err(e) => ClassOutcome::Failed { object_class: class.clone(), error: e.to_string() },
            }
        })
        .collect())
}
