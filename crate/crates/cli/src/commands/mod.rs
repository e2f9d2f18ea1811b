pub mod eval;
pub mod render;
pub mod solve;
pub mod synth;
pub mod tokens;

use std::path::{Path, PathBuf};

use wrist_recon::geometry::Intrinsics;
use wrist_recon::io::{fmt_f64, load_camera_config, write_file};

use crate::error::CliError;

pub fn frame_stem(t: usize) -> String {
    format!("frame_{t:04}")
}

pub fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf, CliError> {
    p.as_ref().ok_or_else(|| CliError::input(format!("no {what} given (flag or manifest [inputs])")))
}

pub fn wrist_intrinsics(cameras: &Path) -> Result<Intrinsics, CliError> {
    load_camera_config(cameras)?
        .wrist_intrinsics(None)
        .map_err(|e| CliError::input(format!("{}: {e}", cameras.display())))
}

/// Files in `dir` with the given suffix, sorted by name.
pub fn list_files(dir: &Path, suffix: &str, exclude: &[&str]) -> Result<Vec<PathBuf>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(suffix) && !exclude.iter().any(|x| name.ends_with(x)) && entry.path().is_file() {
            files.push(entry.path());
        }
    }
    files.sort();
    Ok(files)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_file(path, text.as_bytes()).map_err(CliError::from)
}

pub fn num(v: f64) -> String {
    fmt_f64(v)
}

pub fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| wrist_recon::numeric::exact_sum(v.iter().copied()) / v.len() as f64)
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 })
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "unavailable".to_string(), num)
}
