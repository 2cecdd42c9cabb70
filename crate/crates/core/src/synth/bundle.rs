//! On-disk scene bundles.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GeneratedScene, PrimitiveShape, SceneObject, SceneSpec, SensorNoiseSpec, Setting, TablePlane};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, OrganizedCloud, Pose, TriangleMesh};
use crate::likelihood::BoundingBox;
use crate::pgm::{read_depth_pgm, write_depth_pgm};
use crate::priors::{gt_box_from_pose, DetectionPrior};

pub const SCENE_FILE: &str = "scene.json";
pub const DEPTH_FILE: &str = "depth.pgm";
pub const INTRINSICS_FILE: &str = "intrinsics.json";
pub const GT_BOXES_FILE: &str = "gt_boxes.json";
pub const PRIOR_FILE: &str = "prior.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObjectRecord {
    pub class: String,
    /// Mesh path relative to the bundle directory.
    pub mesh: String,
    pub shape: Option<PrimitiveShape>,
    pub symmetric: bool,
    pub pose: Pose,
}

/// Contents of `scene.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub setting: Option<Setting>,
    pub seed: Option<u64>,
    pub intrinsics: CameraIntrinsics,
    pub table: Option<TablePlane>,
    #[serde(default)]
    pub noise: SensorNoiseSpec,
    pub objects: Vec<SceneObjectRecord>,
}

impl SceneFile {
    pub fn object(&self, class: &str) -> Option<&SceneObjectRecord> {
        self.objects.iter().find(|o| o.class == class)
    }

    pub fn classes(&self) -> Vec<String> {
        self.objects.iter().map(|o| o.class.clone()).collect()
    }
}

/// A scene bundle loaded from disk.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub dir: PathBuf,
    pub scene: SceneFile,
}

impl Bundle {
    /// Writes the scene, its corrupted observation, meshes and ground-truth
    /// boxes into `dir`.
    pub fn write(dir: impl AsRef<Path>, scene: &GeneratedScene, seed: u64, observation: &OrganizedCloud) -> Result<Bundle> {
        let dir = dir.as_ref();
        let meshes_dir = dir.join("meshes");
        fs::create_dir_all(&meshes_dir).map_err(|e| Error::io(&meshes_dir, e))?;

        let spec = &scene.spec;
        let mut objects = Vec::new();
        let mut gt = BTreeMap::new();
        for (o, mesh) in spec.objects.iter().zip(spec.meshes()?) {
            let rel = format!("meshes/{}.obj", o.class);
            mesh.write_obj(dir.join(&rel))?;
            gt.insert(o.class.clone(), vec![gt_box_from_pose(&mesh, &o.pose, &spec.intrinsics)?]);
            objects.push(SceneObjectRecord {
                class: o.class.clone(),
                mesh: rel,
                shape: Some(o.shape),
                symmetric: o.symmetric,
                pose: o.pose,
            });
        }
        let file = SceneFile {
            setting: Some(scene.setting),
            seed: Some(seed),
            intrinsics: spec.intrinsics,
            table: spec.table,
            noise: scene.noise,
            objects,
        };
        write_json(&dir.join(SCENE_FILE), &file)?;
        write_json(&dir.join(INTRINSICS_FILE), &spec.intrinsics)?;
        let k = spec.intrinsics;
        write_depth_pgm(dir.join(DEPTH_FILE), k.width, k.height, &observation.depths())?;
        DetectionPrior::new(k.width, k.height, gt).write(dir.join(GT_BOXES_FILE))?;
        Ok(Bundle {
            dir: dir.to_path_buf(),
            scene: file,
        })
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Bundle> {
        let dir = dir.as_ref();
        let path = dir.join(SCENE_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let scene: SceneFile = serde_json::from_str(&text)?;
        scene.intrinsics.validate()?;
        Ok(Bundle {
            dir: dir.to_path_buf(),
            scene,
        })
    }

    /// The observation, using `intrinsics.json` for the camera.
    pub fn observation(&self) -> Result<OrganizedCloud> {
        let path = self.dir.join(INTRINSICS_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let k: CameraIntrinsics = serde_json::from_str(&text)?;
        let (w, h, depth) = read_depth_pgm(self.dir.join(DEPTH_FILE))?;
        if (w, h) != (k.width, k.height) {
            return Err(Error::GridMismatch {
                left_w: w,
                left_h: h,
                right_w: k.width,
                right_h: k.height,
            });
        }
        OrganizedCloud::from_depth(k, &depth)
    }

    pub fn mesh(&self, class: &str) -> Result<TriangleMesh> {
        let record = self
            .scene
            .object(class)
            .ok_or_else(|| Error::Invalid(format!("class '{class}' is not in the scene")))?;
        TriangleMesh::load_obj(self.dir.join(&record.mesh))
    }

    pub fn meshes(&self) -> Result<BTreeMap<String, TriangleMesh>> {
        self.scene
            .objects
            .iter()
            .map(|o| Ok((o.class.clone(), self.mesh(&o.class)?)))
            .collect()
    }

    pub fn gt_boxes(&self) -> Result<BTreeMap<String, BoundingBox>> {
        let (prior, _) = DetectionPrior::load(self.dir.join(GT_BOXES_FILE))?;
        Ok(prior
            .detections
            .into_iter()
            .filter_map(|(c, boxes)| boxes.first().map(|b| (c, *b)))
            .collect())
    }

    /// Scene description with meshes loaded from the bundle files.
    pub fn spec(&self) -> Result<SceneSpec> {
        let objects = self
            .scene
            .objects
            .iter()
            .map(|o| {
                let shape = o
                    .shape
                    .ok_or_else(|| Error::Invalid(format!("object '{}' has no primitive shape", o.class)))?;
                Ok(SceneObject {
                    class: o.class.clone(),
                    shape,
                    pose: o.pose,
                    symmetric: o.symmetric,
                })
            })
            .collect::<Result<_>>()?;
        Ok(SceneSpec {
            intrinsics: self.scene.intrinsics,
            table: self.scene.table,
            objects,
        })
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
