//! On-disk view format.
//!
//! One directory per observation holding `view_<id>.json` (intrinsics,
//! row-major 4x4 pose, label, timestamp) plus sibling binary grids
//! `depth_<id>.f32` and `relevancy_<id>.f32`: row-major little-endian
//! 32-bit floats, height * width values each.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{CameraIntrinsics, CameraPose, CameraView, ImageGrid, ObservationView};

#[derive(Debug, Serialize, Deserialize)]
struct ViewMeta {
    intrinsics: CameraIntrinsics,
    pose: [f64; 16],
    label: String,
    timestamp: f64,
    /// Optional paired-view denoising: id of the view whose relevancy is
    /// subtracted from this one at ingest time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subtract: Option<String>,
}

/// A view read from disk plus its optional subtraction pairing.
#[derive(Debug, Clone)]
pub struct ViewFile {
    pub view: CameraView,
    pub subtract: Option<String>,
}

fn malformed(path: &Path, message: impl Into<String>) -> Error {
    Error::MalformedFile {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn grid_path(dir: &Path, kind: &str, id: &str) -> PathBuf {
    dir.join(format!("{kind}_{id}.f32"))
}

fn read_grid(path: &Path, width: usize, height: usize) -> Result<ImageGrid> {
    let bytes = fs::read(path).map_err(|e| malformed(path, e.to_string()))?;
    let expected = width * height * 4;
    if bytes.len() != expected {
        return Err(malformed(
            path,
            format!(
                "expected {expected} bytes for a {width}x{height} grid, found {}",
                bytes.len()
            ),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ImageGrid::new(width, height, data)
}

fn write_grid(path: &Path, grid: &ImageGrid) -> Result<()> {
    let mut bytes = Vec::with_capacity(grid.data().len() * 4);
    for value in grid.data() {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes `view_<id>.json` and both grids into `dir`.
pub fn write_view(dir: &Path, view: &CameraView) -> Result<()> {
    view.validate()?;
    fs::create_dir_all(dir)?;
    let meta = ViewMeta {
        intrinsics: view.intrinsics.clone(),
        pose: view.pose.to_row_major(),
        label: view.label.clone(),
        timestamp: view.timestamp,
        subtract: None,
    };
    let json_path = dir.join(format!("view_{}.json", view.view_id));
    fs::write(&json_path, serde_json::to_string_pretty(&meta)?)?;
    write_grid(&grid_path(dir, "depth", &view.view_id), &view.depth)?;
    write_grid(&grid_path(dir, "relevancy", &view.view_id), &view.relevancy)?;
    Ok(())
}

/// Marks an already-written view as paired with `subtract_id` for ingest.
pub fn set_view_subtraction(dir: &Path, view_id: &str, subtract_id: &str) -> Result<()> {
    let json_path = dir.join(format!("view_{view_id}.json"));
    let text = fs::read_to_string(&json_path).map_err(|e| malformed(&json_path, e.to_string()))?;
    let mut meta: ViewMeta =
        serde_json::from_str(&text).map_err(|e| malformed(&json_path, e.to_string()))?;
    meta.subtract = Some(subtract_id.to_string());
    fs::write(&json_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Reads one view by id from an observation directory.
pub fn read_view(dir: &Path, id: &str) -> Result<ViewFile> {
    let json_path = dir.join(format!("view_{id}.json"));
    let text = fs::read_to_string(&json_path).map_err(|e| malformed(&json_path, e.to_string()))?;
    let meta: ViewMeta =
        serde_json::from_str(&text).map_err(|e| malformed(&json_path, e.to_string()))?;
    let pose = CameraPose::from_row_major(&meta.pose)
        .map_err(|e| malformed(&json_path, format!("bad pose: {e}")))?;
    meta.intrinsics
        .validate()
        .map_err(|e| malformed(&json_path, format!("bad intrinsics: {e}")))?;

    let (w, h) = (meta.intrinsics.width, meta.intrinsics.height);
    let depth = read_grid(&grid_path(dir, "depth", id), w, h)?;
    let relevancy = read_grid(&grid_path(dir, "relevancy", id), w, h)?;

    let view = CameraView {
        intrinsics: meta.intrinsics,
        pose,
        depth,
        relevancy,
        label: meta.label,
        view_id: id.to_string(),
        timestamp: meta.timestamp,
    };
    view.validate()
        .map_err(|e| malformed(&json_path, e.to_string()))?;
    Ok(ViewFile {
        view,
        subtract: meta.subtract,
    })
}

/// Ids of every `view_<id>.json` in a directory, sorted.
pub fn list_view_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(id) = name
            .strip_prefix("view_")
            .and_then(|rest| rest.strip_suffix(".json"))
        {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

/// Loads every view of one observation directory.
pub fn load_observation_views(dir: &Path) -> Result<Vec<ObservationView>> {
    let mut views = Vec::new();
    for id in list_view_ids(dir)? {
        let file = read_view(dir, &id)?;
        views.push(ObservationView {
            view: file.view,
            subtract: file.subtract,
        });
    }
    Ok(views)
}
