//! Camera geometry: depth + relevancy images to world-frame point clouds.
//!
//! Camera convention is the standard computer-vision pinhole frame:
//! +x right, +y down, +z forward, with `CameraPose` holding the rigid
//! world-from-camera transform. Depth value 0 encodes "no reading".

mod synthetic;
mod view_io;

pub use synthetic::{
    render_scene_views, render_synthetic_view, ObservationSpec, PoseSpec, SceneFile, Sphere,
    SyntheticScene, ViewSpec,
};
pub use view_io::{list_view_ids, load_observation_views, read_view, write_view, ViewFile};

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};

/// Pinhole intrinsics in pixel units.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intrinsics = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intrinsics.validate()?;
        Ok(intrinsics)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid_input(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(0.0 <= self.cx && self.cx < self.width as f64) {
            return Err(Error::invalid_input(format!(
                "principal point cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(0.0 <= self.cy && self.cy < self.height as f64) {
            return Err(Error::invalid_input(format!(
                "principal point cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }
}

const POSE_TOLERANCE: f64 = 1e-9;

/// Rigid world-from-camera transform (4x4, rotation in SO(3), meters).
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub transform: Matrix4<f64>,
}

impl CameraPose {
    pub fn identity() -> Self {
        Self {
            transform: Matrix4::identity(),
        }
    }

    pub fn from_matrix(transform: Matrix4<f64>) -> Result<Self> {
        let pose = Self { transform };
        pose.validate()?;
        Ok(pose)
    }

    /// Camera at `eye` with the optical axis (+z) toward `target`.
    ///
    /// `up_hint` is the world direction that should map near the camera's
    /// -y axis (+y points down in the camera frame).
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up_hint: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::invalid_input("look_at: eye and target coincide"));
        }
        let z_axis = forward.normalize();
        let mut right = z_axis.cross(&up_hint);
        if right.norm() < 1e-9 {
            // Optical axis parallel to the hint; pick any perpendicular.
            right = z_axis.cross(&Vector3::new(0.0, 1.0, 0.0));
            if right.norm() < 1e-9 {
                right = z_axis.cross(&Vector3::new(1.0, 0.0, 0.0));
            }
        }
        let x_axis = right.normalize();
        let y_axis = z_axis.cross(&x_axis);

        let mut transform = Matrix4::identity();
        transform.fixed_view_mut::<3, 1>(0, 0).copy_from(&x_axis);
        transform.fixed_view_mut::<3, 1>(0, 1).copy_from(&y_axis);
        transform.fixed_view_mut::<3, 1>(0, 2).copy_from(&z_axis);
        transform.fixed_view_mut::<3, 1>(0, 3).copy_from(&eye);
        Self::from_matrix(transform)
    }

    pub fn validate(&self) -> Result<()> {
        let rotation = self.rotation();
        let gram = rotation * rotation.transpose();
        let orthonormality = (gram - Matrix3::identity()).abs().max();
        if orthonormality > POSE_TOLERANCE {
            return Err(Error::invalid_input(format!(
                "pose rotation not orthonormal (max deviation {orthonormality:.3e})"
            )));
        }
        if (rotation.determinant() - 1.0).abs() > POSE_TOLERANCE {
            return Err(Error::invalid_input("pose rotation has determinant != +1"));
        }
        let bottom = self.transform.row(3);
        if (bottom - Vector4::new(0.0, 0.0, 0.0, 1.0).transpose()).abs().max() > POSE_TOLERANCE {
            return Err(Error::invalid_input("pose last row must be (0, 0, 0, 1)"));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.transform.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.transform.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn camera_to_world(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * point + self.translation()
    }

    pub fn world_to_camera(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().transpose() * (point - self.translation())
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for row in 0..4 {
            for col in 0..4 {
                out[row * 4 + col] = self.transform[(row, col)];
            }
        }
        out
    }

    pub fn from_row_major(values: &[f64; 16]) -> Result<Self> {
        let mut transform = Matrix4::zeros();
        for row in 0..4 {
            for col in 0..4 {
                transform[(row, col)] = values[row * 4 + col];
            }
        }
        Self::from_matrix(transform)
    }
}

/// Row-major H x W scalar grid backing depth and relevancy images.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid_input(format!(
                "grid data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: f32) {
        self.data[v * self.width + u] = value;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(0.0_f32, f32::max)
    }
}

/// One depth + relevancy observation of the scene from a posed camera.
#[derive(Debug, Clone)]
pub struct CameraView {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
    pub depth: ImageGrid,
    pub relevancy: ImageGrid,
    pub label: String,
    pub view_id: String,
    pub timestamp: f64,
}

impl CameraView {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        self.pose.validate()?;
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        for (name, grid) in [("depth", &self.depth), ("relevancy", &self.relevancy)] {
            if grid.width() != w || grid.height() != h {
                return Err(Error::invalid_input(format!(
                    "{name} grid is {}x{} but intrinsics say {}x{}",
                    grid.width(),
                    grid.height(),
                    w,
                    h
                )));
            }
        }
        if self.depth.data().iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid_input("depth values must be finite and >= 0"));
        }
        if self
            .relevancy
            .data()
            .iter()
            .any(|r| !r.is_finite() || *r < 0.0)
        {
            return Err(Error::invalid_input(
                "relevancy values must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

/// Labeled world-frame points with per-point relevancy weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevancyPointCloud {
    pub points: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
    pub label: String,
    pub source_view_ids: Vec<String>,
}

impl RelevancyPointCloud {
    pub fn empty(label: impl Into<String>) -> Self {
        Self {
            points: Vec::new(),
            weights: Vec::new(),
            label: label.into(),
            source_view_ids: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Lifts every valid pixel of a view into a world-frame weighted point.
///
/// A pixel (u, v) with depth d > 0 and relevancy r >= `relevancy_floor`
/// becomes the world point `pose * ((u - cx) d / fx, (v - cy) d / fy, d)`
/// with weight r. Pixels with no depth reading or low relevancy are dropped.
pub fn unproject(view: &CameraView, relevancy_floor: f64) -> Result<RelevancyPointCloud> {
    view.validate()?;
    if !(relevancy_floor >= 0.0) {
        return Err(Error::invalid_input(format!(
            "relevancy_floor must be >= 0, got {relevancy_floor}"
        )));
    }

    let intr = &view.intrinsics;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for v in 0..intr.height {
        for u in 0..intr.width {
            let d = f64::from(view.depth.get(u, v));
            let r = f64::from(view.relevancy.get(u, v));
            if d <= 0.0 || r < relevancy_floor {
                continue;
            }
            let x_c = (u as f64 - intr.cx) * d / intr.fx;
            let y_c = (v as f64 - intr.cy) * d / intr.fy;
            let camera_point = Vector3::new(x_c, y_c, d);
            points.push(view.pose.camera_to_world(&camera_point));
            weights.push(r);
        }
    }

    Ok(RelevancyPointCloud {
        points,
        weights,
        label: view.label.clone(),
        source_view_ids: vec![view.view_id.clone()],
    })
}

/// Projects a world point back into a camera: returns (u, v, depth).
///
/// Returns `None` for points at or behind the camera plane. Inverse of
/// [`unproject`] for in-frame pixels.
pub fn project(
    point: &Vector3<f64>,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
) -> Option<(f64, f64, f64)> {
    let cam = pose.world_to_camera(point);
    if cam.z <= 0.0 {
        return None;
    }
    let u = cam.x * intrinsics.fx / cam.z + intrinsics.cx;
    let v = cam.y * intrinsics.fy / cam.z + intrinsics.cy;
    Some((u, v, cam.z))
}

/// Per-pixel absolute difference of two relevancy maps over the same camera.
///
/// The paired open/closed trick: pixels relevant in both views cancel,
/// pixels unique to either survive. Depth and pose come from `view_a`.
pub fn subtract_relevancy(view_a: &CameraView, view_b: &CameraView) -> Result<CameraView> {
    view_a.validate()?;
    view_b.validate()?;
    if view_a.intrinsics != view_b.intrinsics {
        return Err(Error::invalid_input(
            "subtract_relevancy requires identical intrinsics",
        ));
    }
    if view_a.label != view_b.label {
        return Err(Error::invalid_input(format!(
            "subtract_relevancy requires matching labels, got {:?} and {:?}",
            view_a.label, view_b.label
        )));
    }

    let diff: Vec<f32> = view_a
        .relevancy
        .data()
        .iter()
        .zip(view_b.relevancy.data())
        .map(|(a, b)| (a - b).abs())
        .collect();
    let relevancy = ImageGrid::new(view_a.intrinsics.width, view_a.intrinsics.height, diff)?;

    Ok(CameraView {
        intrinsics: view_a.intrinsics.clone(),
        pose: view_a.pose.clone(),
        depth: view_a.depth.clone(),
        relevancy,
        label: view_a.label.clone(),
        view_id: view_a.view_id.clone(),
        timestamp: view_a.timestamp,
    })
}

/// Concatenates same-label clouds, preserving input order.
pub fn merge_clouds(clouds: &[RelevancyPointCloud]) -> Result<RelevancyPointCloud> {
    let first = clouds
        .first()
        .ok_or_else(|| Error::invalid_input("merge_clouds: empty cloud list"))?;
    if clouds.iter().any(|c| c.label != first.label) {
        return Err(Error::invalid_input(
            "merge_clouds: clouds carry mixed labels",
        ));
    }

    let mut merged = RelevancyPointCloud::empty(first.label.clone());
    for cloud in clouds {
        merged.points.extend_from_slice(&cloud.points);
        merged.weights.extend_from_slice(&cloud.weights);
        for id in &cloud.source_view_ids {
            if !merged.source_view_ids.contains(id) {
                merged.source_view_ids.push(id.clone());
            }
        }
    }
    Ok(merged)
}

/// Reduces a cloud to one location: the relevancy-weighted centroid of the
/// points whose weight reaches the `(1 - top_quantile)` weight quantile.
///
/// `top_quantile = 0.05` keeps roughly the strongest 5% of the evidence;
/// `top_quantile = 1.0` keeps everything.
pub fn localize(cloud: &RelevancyPointCloud, top_quantile: f64) -> Result<Vector3<f64>> {
    if cloud.is_empty() {
        return Err(Error::invalid_input("localize: empty cloud"));
    }
    if !(top_quantile > 0.0 && top_quantile <= 1.0) {
        return Err(Error::invalid_input(format!(
            "top_quantile must be in (0, 1], got {top_quantile}"
        )));
    }
    if cloud.weights.iter().all(|w| *w == 0.0) {
        return Err(Error::invalid_input(
            "localize: all weights zero, no evidence",
        ));
    }

    let mut sorted = cloud.weights.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("weights validated finite"));
    let idx = (((1.0 - top_quantile) * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    let threshold = sorted[idx];

    let mut weighted_sum = Vector3::zeros();
    let mut total_weight = 0.0;
    for (point, &w) in cloud.points.iter().zip(&cloud.weights) {
        if w >= threshold {
            weighted_sum += w * point;
            total_weight += w;
        }
    }
    if total_weight <= 0.0 {
        return Err(Error::invalid_input(
            "localize: selected points carry zero total weight",
        ));
    }
    Ok(weighted_sum / total_weight)
}

/// One loaded view plus its optional paired-view reference for denoising.
#[derive(Debug, Clone)]
pub struct ObservationView {
    pub view: CameraView,
    /// View id whose relevancy should be subtracted from this one.
    pub subtract: Option<String>,
}

/// Result of reducing one multi-view observation to a single location.
#[derive(Debug, Clone)]
pub struct LocalizedObservation {
    pub location: Vector3<f64>,
    pub label: String,
    pub source_view_ids: Vec<String>,
    /// Latest timestamp over the contributing views.
    pub timestamp: f64,
}

/// Full per-observation reduction: paired subtraction, unprojection at a
/// per-view relevancy floor (`floor_fraction` of each view's max score),
/// cloud merge, and top-quantile localization.
///
/// Views named as a subtraction reference by another view serve only as
/// the reference and are not unprojected themselves.
pub fn localize_observation(
    views: &[ObservationView],
    floor_fraction: f64,
    top_quantile: f64,
) -> Result<LocalizedObservation> {
    if views.is_empty() {
        return Err(Error::invalid_input("observation has no views"));
    }
    if !(0.0..=1.0).contains(&floor_fraction) {
        return Err(Error::invalid_input(format!(
            "floor_fraction must be in [0, 1], got {floor_fraction}"
        )));
    }
    let label = views[0].view.label.clone();
    if views.iter().any(|v| v.view.label != label) {
        return Err(Error::invalid_input(
            "observation mixes views with different labels",
        ));
    }

    let reference_ids: Vec<&String> = views.iter().filter_map(|v| v.subtract.as_ref()).collect();
    let mut clouds = Vec::new();
    let mut timestamp = f64::NEG_INFINITY;
    for entry in views {
        if reference_ids.contains(&&entry.view.view_id) {
            continue;
        }
        let effective = match &entry.subtract {
            Some(other_id) => {
                let other = views
                    .iter()
                    .find(|v| &v.view.view_id == other_id)
                    .ok_or_else(|| {
                        Error::invalid_input(format!(
                            "view {} subtracts unknown view {}",
                            entry.view.view_id, other_id
                        ))
                    })?;
                subtract_relevancy(&entry.view, &other.view)?
            }
            None => entry.view.clone(),
        };
        let floor = f64::from(effective.relevancy.max_value()) * floor_fraction;
        clouds.push(unproject(&effective, floor)?);
        timestamp = timestamp.max(entry.view.timestamp);
    }

    let merged = merge_clouds(&clouds)?;
    let location = localize(&merged, top_quantile)?;
    Ok(LocalizedObservation {
        location,
        label,
        source_view_ids: merged.source_view_ids,
        timestamp,
    })
}

#[cfg(test)]
mod tests;
