use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_string, IoError};
use crate::geometry::{Intrinsics, PoseSE3};
use crate::oracle::SceneParams;
use crate::render::SplatConfig;
use crate::solver::SolverConfig;
use crate::spc::SpcConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraRole {
    Anchor,
    Wrist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub role: CameraRole,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// World-to-camera rotation, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[f64; 9]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<[f64; 3]>,
}

impl CameraEntry {
    pub fn new(role: CameraRole, k: &Intrinsics, pose: Option<&PoseSE3>) -> Self {
        let arr = pose.map(|p| p.to_array());
        Self {
            role,
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            rotation: arr.map(|a| std::array::from_fn(|i| a[i])),
            translation: arr.map(|a| [a[9], a[10], a[11]]),
        }
    }

    pub fn intrinsics(&self) -> Result<Intrinsics, String> {
        Intrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height).map_err(|e| e.to_string())
    }

    pub fn extrinsics(&self) -> Result<Option<PoseSE3>, String> {
        match (self.rotation, self.translation) {
            (None, None) => Ok(None),
            (Some(r), Some(t)) => {
                let mut a = [0.0; 12];
                a[..9].copy_from_slice(&r);
                a[9..].copy_from_slice(&t);
                PoseSE3::from_array(&a).map(Some).map_err(|e| e.to_string())
            }
            _ => Err("rotation and translation must be given together".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub cameras: Vec<CameraEntry>,
}

impl CameraConfig {
    pub fn wrist(&self) -> Option<&CameraEntry> {
        self.cameras.iter().find(|c| c.role == CameraRole::Wrist)
    }

    pub fn anchors(&self) -> impl Iterator<Item = &CameraEntry> {
        self.cameras.iter().filter(|c| c.role == CameraRole::Anchor)
    }

    /// Wrist intrinsics, optionally rescaled to a resized image.
    pub fn wrist_intrinsics(&self, resize: Option<(u32, u32)>) -> Result<Intrinsics, String> {
        let k = self.wrist().ok_or("no wrist camera in camera config")?.intrinsics()?;
        match resize {
            Some((w, h)) => k.scaled_to(w, h).map_err(|e| e.to_string()),
            None => Ok(k),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("camera config serializes")
    }
}

pub fn load_camera_config(path: &Path) -> Result<CameraConfig, IoError> {
    let cfg: CameraConfig = toml::from_str(&read_string(path)?).map_err(|e| IoError::invalid(path, e.to_string()))?;
    for (i, c) in cfg.cameras.iter().enumerate() {
        c.intrinsics().map_err(|e| IoError::invalid(path, format!("camera {i}: {e}")))?;
        c.extrinsics().map_err(|e| IoError::invalid(path, format!("camera {i}: {e}")))?;
    }
    Ok(cfg)
}

/// Input paths; relative entries resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ManifestInputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cloud: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cameras: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub point_maps: Vec<PathBuf>,
    /// A directory of per-frame files or a single file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correspondences: Option<PathBuf>,
    /// Poses to render.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_trajectory: Option<PathBuf>,
    /// Directory of reference renderings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_images: Option<PathBuf>,
}

impl ManifestInputs {
    pub fn resolved(&self, base: &Path) -> Self {
        let r = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        Self {
            cloud: self.cloud.as_ref().map(r),
            cameras: self.cameras.as_ref().map(r),
            point_maps: self.point_maps.iter().map(r).collect(),
            correspondences: self.correspondences.as_ref().map(r),
            trajectory: self.trajectory.as_ref().map(r),
            gt_trajectory: self.gt_trajectory.as_ref().map(r),
            gt_images: self.gt_images.as_ref().map(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunManifest {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub inputs: ManifestInputs,
    pub scene: SceneParams,
    pub spc: SpcConfig,
    pub solver: SolverConfig,
    pub splat: SplatConfig,
}

impl RunManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// Parse a manifest and resolve its input paths against its directory.
pub fn load_manifest(path: &Path) -> Result<RunManifest, IoError> {
    let mut m: RunManifest = toml::from_str(&read_string(path)?).map_err(|e| IoError::invalid(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    m.inputs = m.inputs.resolved(base);
    if let Some(out) = &m.output {
        if out.is_relative() {
            m.output = Some(base.join(out));
        }
    }
    m.spc.validate().map_err(|e| IoError::invalid(path, e.to_string()))?;
    m.solver.validate().map_err(|e| IoError::invalid(path, e.to_string()))?;
    m.splat.validate().map_err(|e| IoError::invalid(path, e.to_string()))?;
    m.scene.validate().map_err(|e| IoError::invalid(path, e.to_string()))?;
    Ok(m)
}
