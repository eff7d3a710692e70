//! Deterministic synthetic scene renderer.
//!
//! Stands in for the upstream relevancy extractor so the geometry pipeline
//! can be exercised end to end without any vision model: labeled spheres
//! over a ground plane, ray-cast depth, relevancy 1.0 where the nearest
//! hit matches the query label plus seeded uniform background noise.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{self, derive_seed, rng_from_seed};

use super::{CameraIntrinsics, CameraPose, CameraView, ImageGrid};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sphere {
    pub label: String,
    pub center: [f64; 3],
    pub radius: f64,
}

impl Sphere {
    pub fn center_vec(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub spheres: Vec<Sphere>,
    pub ground_plane_z: f64,
}

impl SyntheticScene {
    pub fn validate(&self) -> Result<()> {
        for sphere in &self.spheres {
            if sphere.label.is_empty() {
                return Err(Error::invalid_input("sphere label must be non-empty"));
            }
            if !(sphere.radius > 0.0) {
                return Err(Error::invalid_input(format!(
                    "sphere radius must be positive, got {}",
                    sphere.radius
                )));
            }
        }
        Ok(())
    }
}

/// Smallest positive ray parameter hitting the sphere, if any.
fn intersect_sphere(
    origin: &Vector3<f64>,
    direction: &Vector3<f64>,
    sphere: &Sphere,
) -> Option<f64> {
    let oc = origin - sphere.center_vec();
    let a = direction.dot(direction);
    let b = 2.0 * oc.dot(direction);
    let c = oc.dot(&oc) - sphere.radius * sphere.radius;
    let discriminant = b * b - 4.0 * a * c;
    if discriminant < 0.0 {
        return None;
    }
    let sqrt_disc = discriminant.sqrt();
    let near = (-b - sqrt_disc) / (2.0 * a);
    if near > 1e-9 {
        return Some(near);
    }
    let far = (-b + sqrt_disc) / (2.0 * a);
    (far > 1e-9).then_some(far)
}

fn intersect_ground(origin: &Vector3<f64>, direction: &Vector3<f64>, plane_z: f64) -> Option<f64> {
    if direction.z.abs() < 1e-12 {
        return None;
    }
    let t = (plane_z - origin.z) / direction.z;
    (t > 1e-9).then_some(t)
}

/// Ray-casts one camera view of the scene.
///
/// Depth per pixel is the camera-frame z of the nearest hit (0 when the ray
/// escapes). Relevancy is 1.0 where the nearest hit is a sphere labeled
/// `query_label`, plus per-pixel uniform noise in `[0, noise_level]` drawn
/// from `noise_seed`; bit-identical for identical inputs.
pub fn render_synthetic_view(
    scene: &SyntheticScene,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    query_label: &str,
    noise_level: f64,
    noise_seed: u64,
) -> Result<CameraView> {
    scene.validate()?;
    intrinsics.validate()?;
    pose.validate()?;
    if !(0.0..=1.0).contains(&noise_level) {
        return Err(Error::invalid_input(format!(
            "noise_level must be in [0, 1], got {noise_level}"
        )));
    }

    let origin = pose.translation();
    let rotation = pose.rotation();
    let mut rng = rng_from_seed(noise_seed);

    let mut depth = ImageGrid::constant(intrinsics.width, intrinsics.height, 0.0);
    let mut relevancy = ImageGrid::constant(intrinsics.width, intrinsics.height, 0.0);
    for v in 0..intrinsics.height {
        for u in 0..intrinsics.width {
            // Unit camera-frame z so the ray parameter equals the depth.
            let dir_cam = Vector3::new(
                (u as f64 - intrinsics.cx) / intrinsics.fx,
                (v as f64 - intrinsics.cy) / intrinsics.fy,
                1.0,
            );
            let dir_world = rotation * dir_cam;

            let mut nearest = f64::INFINITY;
            let mut hit_matches_query = false;
            for sphere in &scene.spheres {
                if let Some(t) = intersect_sphere(&origin, &dir_world, sphere) {
                    if t < nearest {
                        nearest = t;
                        hit_matches_query = sphere.label == query_label;
                    }
                }
            }
            if let Some(t) = intersect_ground(&origin, &dir_world, scene.ground_plane_z) {
                if t < nearest {
                    nearest = t;
                    hit_matches_query = false;
                }
            }

            let base = if hit_matches_query { 1.0 } else { 0.0 };
            let noise = if noise_level > 0.0 {
                rng.random::<f64>() * noise_level
            } else {
                0.0
            };
            relevancy.set(u, v, (base + noise) as f32);
            if nearest.is_finite() {
                depth.set(u, v, nearest as f32);
            }
        }
    }

    Ok(CameraView {
        intrinsics: intrinsics.clone(),
        pose: pose.clone(),
        depth,
        relevancy,
        label: query_label.to_string(),
        view_id: "synthetic".to_string(),
        timestamp: 0.0,
    })
}

/// Camera placement in a scene file: either a raw row-major 4x4 matrix or
/// an eye/target pair (world +z up unless `up` is given).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoseSpec {
    Matrix([f64; 16]),
    LookAt {
        eye: [f64; 3],
        target: [f64; 3],
        #[serde(default)]
        up: Option<[f64; 3]>,
    },
}

impl PoseSpec {
    pub fn to_pose(&self) -> Result<CameraPose> {
        match self {
            PoseSpec::Matrix(values) => CameraPose::from_row_major(values),
            PoseSpec::LookAt { eye, target, up } => CameraPose::look_at(
                Vector3::from(*eye),
                Vector3::from(*target),
                Vector3::from(up.unwrap_or([0.0, 0.0, 1.0])),
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewSpec {
    pub id: String,
    #[serde(default)]
    pub timestamp: f64,
    pub intrinsics: CameraIntrinsics,
    pub pose: PoseSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub id: String,
    pub views: Vec<ViewSpec>,
}

/// Scene document accepted by `oms render-synthetic`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneFile {
    pub spheres: Vec<Sphere>,
    #[serde(default)]
    pub ground_plane_z: f64,
    pub query_label: String,
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default)]
    pub noise_seed: u64,
    pub observations: Vec<ObservationSpec>,
}

/// Renders every observation of a scene file; per-view noise streams are
/// derived from the file's seed so output is reproducible as a whole.
pub fn render_scene_views(scene_file: &SceneFile) -> Result<Vec<(String, Vec<CameraView>)>> {
    let scene = SyntheticScene {
        spheres: scene_file.spheres.clone(),
        ground_plane_z: scene_file.ground_plane_z,
    };
    let mut rendered = Vec::new();
    for (obs_idx, obs) in scene_file.observations.iter().enumerate() {
        let mut views = Vec::new();
        for (view_idx, spec) in obs.views.iter().enumerate() {
            let seed = derive_seed(
                scene_file.noise_seed,
                &[seeding::domain::RENDER_VIEW, obs_idx as u64, view_idx as u64],
            );
            let mut view = render_synthetic_view(
                &scene,
                &spec.intrinsics,
                &spec.pose.to_pose()?,
                &scene_file.query_label,
                scene_file.noise_level,
                seed,
            )?;
            view.view_id = spec.id.clone();
            view.timestamp = spec.timestamp;
            views.push(view);
        }
        rendered.push((obs.id.clone(), views));
    }
    Ok(rendered)
}
