//! Point-cloud rasterization into wrist-view condition maps.
//!
//! Each front-facing point covers a `(2r+1)²` square centered on its rounded
//! projection. A pixel keeps the minimum depth over all points covering it;
//! its color comes from the lowest-indexed covering point whose depth is
//! within `depth_test_eps` of that minimum. Resolution happens in two passes
//! (minimum depth, then first qualifying index), so the result does not depend
//! on visiting order.

use ndarray::{Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{project, Intrinsics, Point3, PoseSE3, Z_EPS};

pub const MAX_SPLAT_RADIUS: u32 = 16;

/// Color used for points without one.
pub const DEFAULT_COLOR: [f64; 3] = [1.0, 1.0, 1.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("{clouds} per-frame clouds for a trajectory of {frames} poses")]
    LengthMismatch { clouds: usize, frames: usize },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("splat radius {0} exceeds {MAX_SPLAT_RADIUS}")]
    RadiusTooLarge(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplatConfig {
    pub radius_px: u32,
    pub depth_test_eps: f64,
}

impl Default for SplatConfig {
    fn default() -> Self {
        Self { radius_px: 1, depth_test_eps: 1e-9 }
    }
}

impl SplatConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.radius_px > MAX_SPLAT_RADIUS {
            return Err(RenderError::RadiusTooLarge(self.radius_px));
        }
        Ok(())
    }
}

/// Per-pixel winning point index and minimum depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub winner: Vec<Option<u32>>,
    pub depth: Vec<f64>,
}

struct Splat {
    depth: f64,
    cols: std::ops::Range<usize>,
    rows: std::ops::Range<usize>,
}

fn splat_extent(k: &Intrinsics, pose: &PoseSE3, p: &Point3, radius: i64) -> Option<Splat> {
    let proj = project(k, pose, &p.position);
    if !(proj.depth > Z_EPS) || !proj.pixel.u.is_finite() || !proj.pixel.v.is_finite() {
        return None;
    }
    let (w, h) = (i64::from(k.width), i64::from(k.height));
    let cu = (proj.pixel.u + 0.5).floor();
    let cv = (proj.pixel.v + 0.5).floor();
    let r = radius as f64;
    if cu + r < 0.0 || cv + r < 0.0 || cu - r > (w - 1) as f64 || cv - r > (h - 1) as f64 {
        return None;
    }
    let (cu, cv) = (cu as i64, cv as i64);
    let c0 = (cu - radius).max(0) as usize;
    let c1 = (cu + radius).min(w - 1) as usize + 1;
    let r0 = (cv - radius).max(0) as usize;
    let r1 = (cv + radius).min(h - 1) as usize + 1;
    Some(Splat { depth: proj.depth, cols: c0..c1, rows: r0..r1 })
}

pub fn rasterize(cloud: &[Point3], pose: &PoseSE3, k: &Intrinsics, splat: &SplatConfig) -> Result<Raster, RenderError> {
    splat.validate()?;
    let (w, h) = (k.width as usize, k.height as usize);
    let radius = i64::from(splat.radius_px);
    let splats: Vec<Option<Splat>> = cloud.iter().map(|p| splat_extent(k, pose, p, radius)).collect();

    let mut min_depth = vec![f64::INFINITY; w * h];
    for s in splats.iter().flatten() {
        for row in s.rows.clone() {
            for d in &mut min_depth[row * w + s.cols.start..row * w + s.cols.end] {
                if s.depth < *d {
                    *d = s.depth;
                }
            }
        }
    }

    let mut winner = vec![None; w * h];
    for (i, s) in splats.iter().enumerate() {
        let Some(s) = s else { continue };
        for row in s.rows.clone() {
            for col in s.cols.clone() {
                let px = row * w + col;
                if winner[px].is_none() && s.depth <= min_depth[px] + splat.depth_test_eps {
                    winner[px] = Some(i as u32);
                }
            }
        }
    }

    let depth = min_depth.into_iter().map(|d| if d.is_finite() { d } else { 0.0 }).collect();
    Ok(Raster { width: w, height: h, winner, depth })
}

/// Rasterized wrist-view RGB, depth and coverage for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionMap {
    /// `(height, width, 3)` in `[0, 1]`, black where uncovered.
    pub rgb: Array3<f64>,
    /// Scene-unit depth, 0 where uncovered.
    pub depth: Array2<f64>,
    pub mask: Array2<bool>,
}

impl ConditionMap {
    pub fn width(&self) -> usize {
        self.mask.ncols()
    }

    pub fn height(&self) -> usize {
        self.mask.nrows()
    }

    pub fn coverage(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

pub fn render_condition_map(
    cloud: &[Point3],
    pose: &PoseSE3,
    k: &Intrinsics,
    splat: &SplatConfig,
) -> Result<ConditionMap, RenderError> {
    let raster = rasterize(cloud, pose, k, splat)?;
    let (w, h) = (raster.width, raster.height);
    let mut rgb = Array3::zeros((h, w, 3));
    let mut depth = Array2::zeros((h, w));
    let mut mask = Array2::from_elem((h, w), false);
    for row in 0..h {
        for col in 0..w {
            let px = row * w + col;
            if let Some(i) = raster.winner[px] {
                let c = cloud[i as usize].rgb.unwrap_or(DEFAULT_COLOR);
                for ch in 0..3 {
                    rgb[[row, col, ch]] = c[ch];
                }
                depth[[row, col]] = raster.depth[px];
                mask[[row, col]] = true;
            }
        }
    }
    Ok(ConditionMap { rgb, depth, mask })
}

pub enum Clouds<'a> {
    Static(&'a [Point3]),
    PerFrame(&'a [Vec<Point3>]),
}

/// Render every trajectory pose; frames are independent and run in parallel.
pub fn render_sequence(
    clouds: Clouds<'_>,
    trajectory: &[PoseSE3],
    k: &Intrinsics,
    splat: &SplatConfig,
) -> Result<Vec<ConditionMap>, RenderError> {
    if trajectory.is_empty() {
        return Err(RenderError::EmptyTrajectory);
    }
    if let Clouds::PerFrame(c) = &clouds {
        if c.len() != trajectory.len() {
            return Err(RenderError::LengthMismatch { clouds: c.len(), frames: trajectory.len() });
        }
    }
    trajectory
        .par_iter()
        .enumerate()
        .map(|(t, pose)| {
            let cloud = match &clouds {
                Clouds::Static(c) => c,
                Clouds::PerFrame(c) => c[t].as_slice(),
            };
            render_condition_map(cloud, pose, k, splat)
        })
        .collect()
}
