//! Procedural tabletop scenes, their rendered observations and sensor
//! corruption.

mod bundle;
mod primitives;

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use bundle::{Bundle, SceneFile, SceneObjectRecord, DEPTH_FILE, GT_BOXES_FILE, INTRINSICS_FILE, PRIOR_FILE, SCENE_FILE};
pub use primitives::{make_primitive, PrimitiveKind, PrimitiveShape};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, OrganizedCloud, Pose, Rotation, TriangleMesh, Vec3};
use crate::renderer::{DepthBuffer, Rasterizer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub class: String,
    pub shape: PrimitiveShape,
    pub pose: Pose,
    pub symmetric: bool,
}

/// A rectangular table top: the `z = 0` plane of `pose`, `size` meters along
/// its x and y axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TablePlane {
    pub pose: Pose,
    pub size: [f64; 2],
}

impl TablePlane {
    pub fn mesh(&self) -> TriangleMesh {
        let (hx, hy) = (0.5 * self.size[0], 0.5 * self.size[1]);
        let vertices = vec![
            Vec3::new(-hx, -hy, 0.0),
            Vec3::new(hx, -hy, 0.0),
            Vec3::new(hx, hy, 0.0),
            Vec3::new(-hx, hy, 0.0),
        ];
        TriangleMesh::new(vertices, vec![[0, 1, 2], [0, 2, 3]]).expect("table mesh is valid")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub intrinsics: CameraIntrinsics,
    pub table: Option<TablePlane>,
    pub objects: Vec<SceneObject>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        for (i, o) in self.objects.iter().enumerate() {
            o.shape.validate()?;
            if self.objects[..i].iter().any(|p| p.class == o.class) {
                return Err(Error::Invalid(format!("class '{}' appears twice in the scene", o.class)));
            }
        }
        Ok(())
    }

    pub fn meshes(&self) -> Result<Vec<TriangleMesh>> {
        self.objects.iter().map(|o| o.shape.mesh()).collect()
    }

    pub fn object(&self, class: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.class == class)
    }
}

/// Joint z-buffer over the table and every object.
pub fn render_scene_buffer(spec: &SceneSpec) -> Result<DepthBuffer> {
    spec.validate()?;
    let mut r = Rasterizer::new(spec.intrinsics);
    if let Some(table) = &spec.table {
        r.draw(&table.mesh(), &table.pose);
    }
    for (o, mesh) in spec.objects.iter().zip(spec.meshes()?) {
        r.draw(&mesh, &o.pose);
    }
    Ok(r.depth_buffer())
}

pub fn render_scene(spec: &SceneSpec) -> Result<OrganizedCloud> {
    render_scene_buffer(spec)?.to_cloud(&spec.intrinsics)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorNoiseSpec {
    /// Depth noise std at 1 m; the std at depth z is `axial_noise · z²`.
    pub axial_noise: f64,
    pub dropout: f64,
    /// Depth quantization step in meters (0 disables).
    pub quantization: f64,
}

impl SensorNoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.axial_noise >= 0.0
            && self.quantization >= 0.0
            && (0.0..=1.0).contains(&self.dropout)
            && self.axial_noise.is_finite()
            && self.quantization.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid sensor noise spec {self:?}")))
        }
    }
}

/// Drops, perturbs and quantizes the depth of every present point, then
/// back-projects the new depth through the same pixel.
pub fn corrupt<R: Rng + ?Sized>(cloud: &OrganizedCloud, spec: &SensorNoiseSpec, rng: &mut R) -> Result<OrganizedCloud> {
    spec.validate()?;
    let k = *cloud.intrinsics();
    let w = k.width;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let points = cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let p = (*p)?;
            if spec.dropout > 0.0 && rng.random::<f64>() < spec.dropout {
                return None;
            }
            if spec.axial_noise == 0.0 && spec.quantization == 0.0 {
                return Some(p);
            }
            let mut z = p.z;
            if spec.axial_noise > 0.0 {
                z += unit.sample(rng) * spec.axial_noise * p.z * p.z;
            }
            if spec.quantization > 0.0 {
                z = (z / spec.quantization).round() * spec.quantization;
            }
            k.depth_in_range(z)
                .then(|| k.backproject_unchecked((i % w) as f64, (i / w) as f64, z))
        })
        .collect();
    OrganizedCloud::from_points(k, points)
}

/// Scenario presets for generated scenes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Separated objects, clean depth.
    Base,
    /// Separated objects, depth dropout and noise.
    Dark,
    /// Objects placed behind one another so silhouettes overlap.
    Occlusion,
}

impl Setting {
    pub fn name(&self) -> &'static str {
        match self {
            Setting::Base => "base",
            Setting::Dark => "dark",
            Setting::Occlusion => "occlusion",
        }
    }

    pub fn sensor_noise(&self) -> SensorNoiseSpec {
        match self {
            Setting::Base | Setting::Occlusion => SensorNoiseSpec::default(),
            Setting::Dark => SensorNoiseSpec {
                axial_noise: 0.0015,
                dropout: 0.1,
                quantization: 0.001,
            },
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Setting::Base),
            "dark" => Ok(Setting::Dark),
            "occlusion" => Ok(Setting::Occlusion),
            other => Err(Error::Invalid(format!("unknown setting '{other}' (base|dark|occlusion)"))),
        }
    }
}

/// The object classes scenes draw from.
pub fn catalog() -> Vec<(&'static str, PrimitiveShape)> {
    vec![
        ("tall_box", PrimitiveShape::Box { size: [0.09, 0.05, 0.15] }),
        ("can", PrimitiveShape::Cylinder { diameter: 0.068, height: 0.10, segments: 24 }),
        ("corner", PrimitiveShape::Lshape { arms: [0.11, 0.08, 0.06], thickness: 0.03 }),
        ("flat_box", PrimitiveShape::Box { size: [0.12, 0.08, 0.05] }),
        ("tall_can", PrimitiveShape::Cylinder { diameter: 0.05, height: 0.14, segments: 24 }),
        ("small_corner", PrimitiveShape::Lshape { arms: [0.09, 0.065, 0.045], thickness: 0.025 }),
        ("cube", PrimitiveShape::Box { size: [0.07, 0.07, 0.07] }),
    ]
}

/// Square-pixel camera with a ~33° horizontal field of view.
pub fn default_intrinsics(width: usize, height: usize) -> Result<CameraIntrinsics> {
    let f = 1.67 * width as f64;
    CameraIntrinsics::new(f, f, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0, width, height)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGenConfig {
    pub num_objects: usize,
    pub setting: Setting,
    pub intrinsics: CameraIntrinsics,
    pub table: bool,
    /// Restrict the drawn classes to these (in order of preference).
    pub classes: Option<Vec<String>>,
}

impl SceneGenConfig {
    pub fn new(num_objects: usize, setting: Setting, intrinsics: CameraIntrinsics) -> Self {
        SceneGenConfig {
            num_objects,
            setting,
            intrinsics,
            table: true,
            classes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedScene {
    pub setting: Setting,
    pub spec: SceneSpec,
    pub noise: SensorNoiseSpec,
}

impl GeneratedScene {
    /// Rendered scene with the setting's sensor corruption applied.
    pub fn observe<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<OrganizedCloud> {
        corrupt(&render_scene(&self.spec)?, &self.noise, rng)
    }
}

/// Places `num_objects` distinct catalog objects upright on a table seen
/// from above at a random pitch.
pub fn generate_scene<R: Rng + ?Sized>(config: &SceneGenConfig, rng: &mut R) -> Result<GeneratedScene> {
    let mut pool: Vec<(String, PrimitiveShape)> = match &config.classes {
        Some(names) => names
            .iter()
            .map(|n| {
                catalog()
                    .into_iter()
                    .find(|(c, _)| c == n)
                    .map(|(c, s)| (c.to_string(), s))
                    .ok_or_else(|| Error::Invalid(format!("unknown object class '{n}'")))
            })
            .collect::<Result<_>>()?,
        None => {
            let mut all: Vec<_> = catalog().into_iter().map(|(c, s)| (c.to_string(), s)).collect();
            all.shuffle(rng);
            all
        }
    };
    if config.num_objects == 0 || config.num_objects > pool.len() {
        return Err(Error::Invalid(format!(
            "number of objects must be in 1..={}, got {}",
            pool.len(),
            config.num_objects
        )));
    }
    if config.setting == Setting::Occlusion && config.num_objects < 2 {
        return Err(Error::Invalid("the occlusion setting needs at least 2 objects".into()));
    }
    pool.truncate(config.num_objects);

    for _attempt in 0..200 {
        if let Some(spec) = try_place(config, &pool, rng)? {
            return Ok(GeneratedScene {
                setting: config.setting,
                spec,
                noise: config.setting.sensor_noise(),
            });
        }
    }
    Err(Error::Invalid("could not place the objects in view".into()))
}

fn try_place<R: Rng + ?Sized>(
    config: &SceneGenConfig,
    pool: &[(String, PrimitiveShape)],
    rng: &mut R,
) -> Result<Option<SceneSpec>> {
    let k = config.intrinsics;
    let pitch = rng.random_range(40.0f64..60.0).to_radians();
    let distance = rng.random_range(0.68..0.78);
    let (s, c) = pitch.sin_cos();
    let across = Vec3::x();
    let along = Vec3::new(0.0, -s, c);
    let up = Vec3::new(0.0, -c, -s);
    let table_rot = Rotation::from_matrix(&nalgebra::Matrix3::from_columns(&[across, along, up]));
    let center = Vec3::new(0.0, 0.0, distance);
    let table = TablePlane {
        pose: Pose::new(table_rot, center),
        size: [1.2, 1.2],
    };

    let mut objects: Vec<SceneObject> = Vec::new();
    let mut footprints: Vec<(f64, f64, f64)> = Vec::new();
    let mut masks: Vec<Vec<bool>> = Vec::new();
    for (i, (class, shape)) in pool.iter().enumerate() {
        let radius = shape.footprint_radius();
        let mut placed = false;
        for _ in 0..60 {
            let (a, b) = if config.setting == Setting::Occlusion && i > 0 {
                let (pa, pb, pr) = footprints[rng.random_range(0..footprints.len())];
                let gap = rng.random_range(0.005..0.02);
                (pa + rng.random_range(-0.5..0.5) * pr, pb + pr + radius + gap)
            } else {
                (rng.random_range(-0.12..0.12), rng.random_range(-0.09..0.09))
            };
            let collides = footprints
                .iter()
                .any(|&(fa, fb, fr)| (fa - a).hypot(fb - b) < fr + radius + 0.005);
            if collides {
                continue;
            }
            let yaw = rng.random_range(0.0..TAU);
            let rot = table_rot.compose(&Rotation::from_axis_angle(&Vec3::z(), yaw));
            let t = center + across * a + along * b + up * (0.5 * shape.height());
            let pose = Pose::new(rot, t);
            let mesh = shape.mesh()?;
            if !fully_in_view(&mesh, &pose, &k, 2.0) {
                continue;
            }
            let mask = silhouette(&mesh, &pose, &k);
            let overlaps = masks.iter().any(|m| overlap(m, &mask));
            let wanted = match config.setting {
                Setting::Occlusion => i == 0 || overlaps,
                _ => !overlaps,
            };
            if !wanted {
                continue;
            }
            footprints.push((a, b, radius));
            masks.push(mask);
            objects.push(SceneObject {
                class: class.clone(),
                shape: *shape,
                pose,
                symmetric: shape.is_symmetric(),
            });
            placed = true;
            break;
        }
        if !placed {
            return Ok(None);
        }
    }
    Ok(Some(SceneSpec {
        intrinsics: k,
        table: config.table.then_some(table),
        objects,
    }))
}

fn fully_in_view(mesh: &TriangleMesh, pose: &Pose, k: &CameraIntrinsics, margin: f64) -> bool {
    mesh.vertices().iter().all(|v| {
        let p = pose.transform_point(v);
        k.project(&p).is_some_and(|(u, v)| {
            u >= margin && v >= margin && u <= k.width as f64 - 1.0 - margin && v <= k.height as f64 - 1.0 - margin
        })
    })
}

/// Pixels covered by the object when rendered alone.
pub fn silhouette(mesh: &TriangleMesh, pose: &Pose, k: &CameraIntrinsics) -> Vec<bool> {
    let mut r = Rasterizer::new(*k);
    r.draw(mesh, pose);
    r.depth_buffer().depths().iter().map(Option::is_some).collect()
}

fn overlap(a: &[bool], b: &[bool]) -> bool {
    a.iter().zip(b).any(|(x, y)| *x && *y)
}

/// Whether at least two objects' individual silhouettes share a pixel.
pub fn has_overlapping_silhouettes(spec: &SceneSpec) -> Result<bool> {
    let masks: Vec<Vec<bool>> = spec
        .objects
        .iter()
        .zip(spec.meshes()?)
        .map(|(o, m)| silhouette(&m, &o.pose, &spec.intrinsics))
        .collect();
    Ok(masks
        .iter()
        .enumerate()
        .any(|(i, a)| masks[i + 1..].iter().any(|b| overlap(a, b))))
}
