//! File formats: PLY clouds, correspondence and trajectory text files,
//! PNG/PFM condition maps, a binary tensor container, and TOML configuration.
//!
//! Numeric text output uses shortest round-trip float formatting, so every
//! value reads back bit-identically.

mod config;
mod image;
mod ply;
mod tensor;
mod text;

use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub use config::{load_camera_config, load_manifest, CameraConfig, CameraEntry, CameraRole, ManifestInputs, RunManifest};
pub use image::{
    quantize_unit, read_pfm, read_png, write_condition_outputs, write_gray_png, write_pfm, write_rgb_png, ConditionPaths,
};
pub use ply::{load_point_cloud, parse_point_cloud, save_point_cloud, PlyEncoding};
pub use tensor::{
    load_embedding_table, load_point_map, load_tensors, save_embedding_table, save_point_map, save_tensors, Tensor,
    TensorFile,
};
pub use text::{
    load_correspondences, load_trajectory, parse_correspondences, parse_trajectory, save_correspondences,
    save_trajectory, write_key_values,
};

/// Where in a file a parse error occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Offset(u64),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Offset(o) => write!(f, "byte {o}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {location}: {message}", path.display())]
    Parse { path: PathBuf, location: Location, message: String },
    #[error("{}: unsupported PLY property or element '{property}'", path.display())]
    UnsupportedProperty { path: PathBuf, property: String },
    #[error("{}: line {line}: negative anchor view index", path.display())]
    NegativeIndex { path: PathBuf, line: usize },
    #[error("{}: {count} points with non-finite coordinates", path.display())]
    NonFinitePoints { path: PathBuf, count: usize },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn parse(path: &Path, location: Location, message: impl Into<String>) -> Self {
        IoError::Parse { path: path.to_path_buf(), location, message: message.into() }
    }

    pub(crate) fn invalid(path: &Path, message: impl Into<String>) -> Self {
        IoError::Invalid { path: path.to_path_buf(), message: message.into() }
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| IoError::io(path, e))
}

pub(crate) fn read_string(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

/// Write a file, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    write_bytes(path, bytes)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
