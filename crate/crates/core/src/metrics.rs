//! Pose error metrics and accuracy-threshold curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, TriangleMesh, Vec3};

/// Meshes with more vertices than this use a kd-tree for ADD-S.
pub const BRUTE_FORCE_LIMIT: usize = 1000;

pub const DEFAULT_T_MAX: f64 = 0.04;

/// Mean distance between corresponding transformed vertices.
pub fn add_error(mesh: &TriangleMesh, pose_gt: &Pose, pose_est: &Pose) -> f64 {
    let v = mesh.vertices();
    let sum: f64 = v
        .iter()
        .map(|x| (pose_gt.transform_point(x) - pose_est.transform_point(x)).norm())
        .sum();
    sum / v.len() as f64
}

/// Mean distance from each transformed ground-truth vertex to the nearest
/// transformed estimated vertex.
pub fn adds_error(mesh: &TriangleMesh, pose_gt: &Pose, pose_est: &Pose) -> f64 {
    let gt = pose_gt.transform_points(mesh.vertices());
    let est = pose_est.transform_points(mesh.vertices());
    let sum: f64 = if est.len() > BRUTE_FORCE_LIMIT {
        let tree = KdTree::new(&est);
        gt.iter().map(|p| tree.nearest_sq(p).sqrt()).sum()
    } else {
        gt.iter().map(|p| nearest_sq_brute(&est, p).sqrt()).sum()
    };
    sum / gt.len() as f64
}

#[inline]
fn dist_sq(a: &Vec3, b: &Vec3) -> f64 {
    (a - b).norm_squared()
}

fn nearest_sq_brute(points: &[Vec3], q: &Vec3) -> f64 {
    points.iter().map(|p| dist_sq(p, q)).fold(f64::INFINITY, f64::min)
}

/// Static 3-d tree over a point set; queries return the exact squared
/// nearest distance computed the same way as the brute-force path.
pub struct KdTree<'a> {
    points: &'a [Vec3],
    order: Vec<usize>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        KdTree { points, order }
    }

    pub fn nearest_sq(&self, q: &Vec3) -> f64 {
        let mut best = f64::INFINITY;
        self.search(&self.order, 0, q, &mut best);
        best
    }

    fn search(&self, idx: &[usize], depth: usize, q: &Vec3, best: &mut f64) {
        if idx.is_empty() {
            return;
        }
        let mid = idx.len() / 2;
        let p = &self.points[idx[mid]];
        *best = best.min(dist_sq(p, q));
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            (&idx[..mid], &idx[mid + 1..])
        } else {
            (&idx[mid + 1..], &idx[..mid])
        };
        self.search(near, depth + 1, q, best);
        if diff * diff <= *best {
            self.search(far, depth + 1, q, best);
        }
    }
}

fn build(points: &[Vec3], idx: &mut [usize], depth: usize) {
    if idx.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = idx.len() / 2;
    idx.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let (left, right) = idx.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub add: f64,
    pub add_s: f64,
}

impl PoseError {
    pub fn compute(mesh: &TriangleMesh, pose_gt: &Pose, pose_est: &Pose) -> Self {
        PoseError {
            add: add_error(mesh, pose_gt, pose_est),
            add_s: adds_error(mesh, pose_gt, pose_est),
        }
    }

    /// ADD-S for symmetric objects, ADD otherwise.
    pub fn for_symmetry(&self, symmetric: bool) -> f64 {
        if symmetric {
            self.add_s
        } else {
            self.add
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub thresholds: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub auc: f64,
}

impl AccuracyCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,accuracy\n");
        for (t, a) in self.thresholds.iter().zip(&self.accuracy) {
            out.push_str(&format!("{t},{a}\n"));
        }
        out
    }
}

/// Fraction of errors strictly below each of `steps` evenly spaced
/// thresholds on `[0, t_max]`; the AUC is the trapezoid integral over
/// `t_max`.
pub fn accuracy_curve(errors: &[f64], t_max: f64, steps: usize) -> Result<AccuracyCurve> {
    if errors.is_empty() {
        return Err(Error::Invalid("accuracy curve needs at least one error".into()));
    }
    if steps < 2 || !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::Invalid(format!("need steps >= 2 and t_max > 0, got {steps} and {t_max}")));
    }
    if errors.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::Invalid("errors must be finite and non-negative".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let thresholds: Vec<f64> = (0..steps).map(|i| t_max * i as f64 / (steps - 1) as f64).collect();
    let accuracy: Vec<f64> = thresholds
        .iter()
        .map(|&t| sorted.partition_point(|&e| e < t) as f64 / n)
        .collect();
    let area: f64 = thresholds
        .windows(2)
        .zip(accuracy.windows(2))
        .map(|(t, a)| 0.5 * (a[0] + a[1]) * (t[1] - t[0]))
        .sum();
    Ok(AccuracyCurve {
        thresholds,
        accuracy,
        auc: (area / t_max).clamp(0.0, 1.0),
    })
}
