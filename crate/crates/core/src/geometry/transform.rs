use std::f64::consts::PI;

use nalgebra::{Matrix3, Quaternion, Unit, UnitQuaternion};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Unit quaternion rotation, canonicalized to `w >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Builds a rotation from a (not necessarily normalized) quaternion.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::Invalid(format!(
                "quaternion ({w}, {x}, {y}, {z}) cannot be normalized"
            )));
        }
        // Already-normalized input is kept bit-for-bit so serialized poses
        // round-trip exactly.
        if (norm - 1.0).abs() < 1e-12 {
            return Ok(Self::from_unit(UnitQuaternion::new_unchecked(q)));
        }
        Ok(Self::from_unit(UnitQuaternion::from_quaternion(q)))
    }

    pub fn from_unit(q: UnitQuaternion<f64>) -> Self {
        if q.w < 0.0 {
            Rotation(UnitQuaternion::new_unchecked(-q.into_inner()))
        } else {
            Rotation(q)
        }
    }

    /// Rotation by `angle` radians about `axis` (right-handed). A zero axis
    /// gives the identity.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        match Unit::try_new(*axis, 1e-15) {
            Some(axis) => Self::from_unit(UnitQuaternion::from_axis_angle(&axis, angle)),
            None => Self::identity(),
        }
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
        Self::from_unit(UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn unit_quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn wxyz(&self) -> [f64; 4] {
        [self.0.w, self.0.i, self.0.j, self.0.k]
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn rotate(&self, p: &Vec3) -> Vec3 {
        self.0 * p
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Self::from_unit(self.0 * other.0)
    }

    pub fn inverse(&self) -> Rotation {
        Self::from_unit(self.0.inverse())
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        // w >= 0 after canonicalization, so this lands in [0, π].
        let v = nalgebra::Vector3::new(self.0.i, self.0.j, self.0.k).norm();
        2.0 * v.atan2(self.0.w.abs())
    }

    /// Geodesic distance to `other` in radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        self.inverse().compose(other).angle()
    }
}

impl TryFrom<[f64; 4]> for Rotation {
    type Error = Error;

    fn try_from(q: [f64; 4]) -> Result<Self> {
        Rotation::from_wxyz(q[0], q[1], q[2], q[3])
    }
}

impl From<Rotation> for [f64; 4] {
    fn from(r: Rotation) -> Self {
        r.wxyz()
    }
}

/// Rigid transform from the object frame into the camera frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Rotation,
    #[serde(with = "vec3_array")]
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// Transforms a batch through one rotation matrix.
    pub fn transform_points(&self, points: &[Vec3]) -> Vec<Vec3> {
        let r = self.rotation.matrix();
        points.iter().map(|p| r * p + self.translation).collect()
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -inv.rotate(&self.translation),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|c| c.is_finite())
            && self.rotation.wxyz().iter().all(|c| c.is_finite())
    }
}

pub fn transform_point(pose: &Pose, p: &Vec3) -> Vec3 {
    pose.transform_point(p)
}

/// Draws a rotation from the Haar measure (Shoemake's subgroup algorithm).
pub fn sample_uniform_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (s2, c2) = (2.0 * PI * u2).sin_cos();
    let (s3, c3) = (2.0 * PI * u3).sin_cos();
    let q = Quaternion::new(b * c3, a * s2, a * c2, b * s3);
    Rotation::from_unit(UnitQuaternion::new_normalize(q))
}

/// Left-composes `r` with a random rotation whose axis is uniform on the
/// sphere and whose angle is `|N(0, sigma²)|`.
pub fn perturb_rotation<R: Rng + ?Sized>(r: &Rotation, sigma_rad: f64, rng: &mut R) -> Rotation {
    if sigma_rad <= 0.0 {
        return *r;
    }
    let axis = loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        if v.norm() > 1e-12 {
            break v;
        }
    };
    let g: f64 = StandardNormal.sample(rng);
    let angle = (g * sigma_rad).abs();
    Rotation::from_axis_angle(&axis, angle).compose(r)
}

pub(crate) mod vec3_array {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::geometry::Vec3;

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(serde::de::Error::custom("non-finite vector component"));
        }
        Ok(Vec3::new(x, y, z))
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn transform_point_examples() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(Pose::identity().transform_point(&p), p);

        let shift = Pose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(shift.transform_point(&Vec3::zeros()), Vec3::new(0.0, 0.0, 1.0));

        // Rz(90°) = [[0,-1,0],[1,0,0],[0,0,1]] maps +x to +y.
        let rz = Pose::new(Rotation::from_axis_angle(&Vec3::z(), FRAC_PI_2), Vec3::zeros());
        let q = rz.transform_point(&Vec3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(q, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn canonical_double_cover() {
        let a = Rotation::from_wxyz(-0.5, 0.5, -0.5, 0.5).unwrap();
        assert!(a.wxyz()[0] >= 0.0);
        let b = Rotation::from_wxyz(0.5, -0.5, 0.5, -0.5).unwrap();
        assert_eq!(a, b);
        assert!(Rotation::from_wxyz(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn pose_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let pose = Pose::new(
                sample_uniform_rotation(&mut rng),
                Vec3::new(rng.random(), rng.random(), rng.random()) * 3.0,
            );
            let id = pose.compose(&pose.inverse());
            assert!(id.translation.norm() < 1e-9);
            assert!(id.rotation.angle() < 1e-9);
        }
    }

    #[test]
    fn composition_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut draw = || {
            Pose::new(
                sample_uniform_rotation(&mut rng),
                Vec3::new(rng.random(), rng.random(), rng.random()),
            )
        };
        for _ in 0..100 {
            let (a, b, c) = (draw(), draw(), draw());
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            assert!((l.translation - r.translation).norm() < 1e-12);
            assert!(l.rotation.angle_to(&r.rotation) < 1e-7);
        }
    }

    #[test]
    fn uniform_rotation_is_unit_and_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut mean = Matrix3::zeros();
        let mut angles = Vec::with_capacity(n);
        for _ in 0..n {
            let r = sample_uniform_rotation(&mut rng);
            let q = r.wxyz();
            let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
            mean += r.matrix();
            angles.push(r.angle());
        }
        mean /= n as f64;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(mean[(i, j)].abs() < 0.02, "off-diagonal mean {}", mean[(i, j)]);
                }
            }
        }

        // Haar angle density (1 - cos θ)/π has CDF (θ - sin θ)/π.
        angles.sort_by(f64::total_cmp);
        let ks = angles
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let cdf = (t - t.sin()) / PI;
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                (cdf - lo).abs().max((hi - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS statistic {ks}");
    }

    #[test]
    fn perturbation_angle_is_half_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let base = sample_uniform_rotation(&mut rng);
        assert_eq!(perturb_rotation(&base, 0.0, &mut rng), base);

        let n = 100_000;
        let mut total = 0.0;
        for _ in 0..n {
            let r = perturb_rotation(&base, 0.3, &mut rng);
            let q = r.wxyz();
            assert!((q.iter().map(|c| c * c).sum::<f64>() - 1.0).abs() < 1e-9);
            total += base.angle_to(&r);
        }
        let mean = total / n as f64;
        let expected = 0.3 * (2.0 / PI).sqrt();
        assert!((mean - expected).abs() < 0.005, "mean {mean} vs {expected}");
    }

    #[test]
    fn pose_serializes_as_arrays() {
        let pose = Pose::new(
            Rotation::from_axis_angle(&Vec3::x(), 0.25),
            Vec3::new(0.1, -0.2, 0.9),
        );
        let json = serde_json::to_string(&pose).unwrap();
        assert!(json.starts_with("{\"rotation\":["));
        let back: Pose = serde_json::from_str(&json).unwrap();
        assert_eq!(back, pose);
    }
}
