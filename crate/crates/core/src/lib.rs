//! Depth-only 6-DoF object pose estimation by iterated likelihood weighting.
//!
//! A detection prior (scored 2D boxes per object class) seeds a population of
//! pose hypotheses. Each hypothesis is rendered into a depth image with a
//! software z-buffer, compared to the observed organized point cloud through
//! raw and feature inlier ratios, and the population is resampled and diffused
//! with noise that shrinks as the best weight rises.
//!
//! Module map:
//!
//! - [`geometry`]: rigid transforms, pinhole camera, organized clouds, meshes.
//! - [`renderer`]: z-buffer rasterization of meshes into depth buffers.
//! - [`features`]: edge / planar feature points from local surface smoothness.
//! - [`likelihood`]: inlier ratios and the combined hypothesis weight.
//! - [`filter`]: sample initialization, resampling, annealed diffusion, the loop.
//! - [`priors`]: detection prior files and synthetic corrupted detectors.
//! - [`synth`]: procedural scenes, primitive meshes and sensor corruption.
//! - [`metrics`]: ADD / ADD-S errors, accuracy-threshold curves and AUC.
//! - [`pgm`]: 16-bit PGM depth images in millimeters.

pub mod error;
pub mod features;
pub mod filter;
pub mod geometry;
pub mod likelihood;
pub mod metrics;
pub mod pgm;
pub mod priors;
pub mod renderer;
pub mod synth;

pub use error::{Error, Result};
pub use features::{extract_features, smoothness, FeatureCloud, FeatureParams, FeaturePoint};
pub use filter::{
    anneal_factor, run, run_scene, ClassOutcome, EstimateReport, FilterConfig, Hypothesis,
};
pub use geometry::{CameraIntrinsics, OrganizedCloud, Pose, Rotation, TriangleMesh, Vec3};
pub use likelihood::{BoundingBox, LikelihoodParams, LikelihoodWeights, TermBreakdown};
pub use metrics::{accuracy_curve, add_error, adds_error, AccuracyCurve, PoseError};
pub use priors::{gt_box_from_pose, load_prior, synth_prior, CorruptionSpec, DetectionPrior};
pub use renderer::{DepthBuffer, Rasterizer};
