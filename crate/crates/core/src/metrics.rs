//! Pose-accuracy and image-quality metrics.
//!
//! Images are `(height, width, channels)` arrays with values in `[0, 1]`.
//! PSNR uses a dynamic range of 1.0 and returns [`PSNR_IDENTICAL`] (positive
//! infinity) for identical images; [`PsnrSummary`] keeps those out of means.

use ndarray::{Array2, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{project_camera_point, Intrinsics, PoseSE3, Vec3, Z_EPS};
use crate::numeric::ExactSum;
use crate::spc::{classify_depth, Side, Track};

/// PSNR of two identical images.
pub const PSNR_IDENTICAL: f64 = f64::INFINITY;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("image dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: Vec<usize>, b: Vec<usize> },
    #[error("image {height}x{width} is smaller than the {window}x{window} SSIM window")]
    TooSmall { width: usize, height: usize, window: usize },
    #[error("no track lies in front of the camera")]
    NoFrontPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub rotation_deg: f64,
    pub translation: f64,
}

/// Geodesic rotation distance and translation-vector distance.
pub fn pose_error(a: &PoseSE3, b: &PoseSE3) -> PoseError {
    let rel = a.rotation() * b.rotation().transpose();
    // atan2 form: acos of the trace loses all precision near the identity
    let s = Vec3::new(rel[(2, 1)] - rel[(1, 2)], rel[(0, 2)] - rel[(2, 0)], rel[(1, 0)] - rel[(0, 1)]).norm() / 2.0;
    let c = (rel.trace() - 1.0) / 2.0;
    PoseError { rotation_deg: s.atan2(c).to_degrees(), translation: (a.translation() - b.translation()).norm() }
}

fn check_dims(a: &ArrayView3<f64>, b: &ArrayView3<f64>) -> Result<(), MetricsError> {
    if a.shape() != b.shape() {
        return Err(MetricsError::DimensionMismatch { a: a.shape().to_vec(), b: b.shape().to_vec() });
    }
    Ok(())
}

fn squared_error_sum(a: &ArrayView3<f64>, b: &ArrayView3<f64>) -> Result<(f64, f64), MetricsError> {
    check_dims(a, b)?;
    let s: ExactSum = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).collect();
    Ok((s.value(), a.len().max(1) as f64))
}

pub fn mse(a: &ArrayView3<f64>, b: &ArrayView3<f64>) -> Result<f64, MetricsError> {
    squared_error_sum(a, b).map(|(s, n)| s / n)
}

pub fn psnr(a: &ArrayView3<f64>, b: &ArrayView3<f64>) -> Result<f64, MetricsError> {
    // n/sum in one division: the mean would round twice
    let (s, n) = squared_error_sum(a, b)?;
    Ok(if s == 0.0 { PSNR_IDENTICAL } else { 10.0 * (n / s).log10() })
}

/// PSNR over a set of frames with identical frames counted, not averaged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsnrSummary {
    /// Mean over finite values; `None` when every frame was identical.
    pub mean_finite: Option<f64>,
    pub n_finite: usize,
    pub n_identical: usize,
}

pub fn summarize_psnr(values: &[f64]) -> PsnrSummary {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let n = finite.len();
    let mean = (n > 0).then(|| finite.iter().copied().collect::<ExactSum>().value() / n as f64);
    PsnrSummary { mean_finite: mean, n_finite: n, n_identical: values.len() - n }
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable filter over valid window positions only.
fn filter_valid(img: &Array2<f64>, k: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (h, w) = img.dim();
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = Array2::<f64>::zeros((h, ow));
    for y in 0..h {
        for x in 0..ow {
            rows[(y, x)] = (0..SSIM_WINDOW).map(|i| k[i] * img[(y, x + i)]).sum();
        }
    }
    let mut out = Array2::<f64>::zeros((oh, ow));
    for y in 0..oh {
        for x in 0..ow {
            out[(y, x)] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i, x)]).sum();
        }
    }
    out
}

fn ssim_channel(a: ArrayView2<f64>, b: ArrayView2<f64>, k: &[f64; SSIM_WINDOW]) -> f64 {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let (a, b) = (a.to_owned(), b.to_owned());
    let mu_a = filter_valid(&a, k);
    let mu_b = filter_valid(&b, k);
    let e_aa = filter_valid(&(&a * &a), k);
    let e_bb = filter_valid(&(&b * &b), k);
    let e_ab = filter_valid(&(&a * &b), k);
    let mut sum = ExactSum::new();
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a.as_slice().unwrap()[i], mu_b.as_slice().unwrap()[i]);
        let saa = e_aa.as_slice().unwrap()[i] - ma * ma;
        let sbb = e_bb.as_slice().unwrap()[i] - mb * mb;
        let sab = e_ab.as_slice().unwrap()[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * sab + c2);
        let den = (ma * ma + mb * mb + c1) * (saa + sbb + c2);
        sum.add(num / den);
    }
    sum.value() / mu_a.len() as f64
}

/// Single-scale SSIM, averaged over channels.
pub fn ssim(a: &ArrayView3<f64>, b: &ArrayView3<f64>) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let (h, w, c) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW || c == 0 {
        return Err(MetricsError::TooSmall { width: w, height: h, window: SSIM_WINDOW });
    }
    let k = gaussian_kernel();
    let per: ExactSum = (0..c).map(|ch| ssim_channel(a.index_axis(Axis(2), ch), b.index_axis(Axis(2), ch), &k)).collect();
    Ok(per.value() / c as f64)
}

/// Weighted RMS pixel distance over front-facing tracks.
pub fn reprojection_rmse(tracks: &[Track], pose: &PoseSE3, k: &Intrinsics) -> Result<f64, MetricsError> {
    let mut err = ExactSum::new();
    let mut wsum = ExactSum::new();
    for t in tracks {
        let q = pose.transform(&t.point);
        if classify_depth(q.z, Z_EPS) != Side::Front {
            continue;
        }
        let px = project_camera_point(k, &q).pixel;
        err.add(t.weight * px.dist_sq(&t.wrist_pixel));
        wsum.add(t.weight);
    }
    let w = wsum.value();
    if !(w > 0.0) {
        return Err(MetricsError::NoFrontPoints);
    }
    Ok((err.value() / w).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rodrigues, Vec3};
    use ndarray::Array3;

    #[test]
    fn pose_error_basics() {
        let a = PoseSE3::identity();
        assert_eq!(pose_error(&a, &a), PoseError { rotation_deg: 0.0, translation: 0.0 });
        let b = PoseSE3::new(rodrigues(&Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2)), Vec3::new(3.0, 0.0, 4.0)).unwrap();
        let e = pose_error(&a, &b);
        assert!((e.rotation_deg - 90.0).abs() < 1e-12);
        assert_eq!(e.translation, 5.0);
    }

    #[test]
    fn pose_error_resolves_tiny_rotations() {
        let a = PoseSE3::identity();
        let b = PoseSE3::new(rodrigues(&Vec3::new(1e-10, 0.0, 0.0)), Vec3::zeros()).unwrap();
        let deg = pose_error(&a, &b).rotation_deg;
        assert!((deg.to_radians() / 1e-10 - 1.0).abs() < 1e-6, "{deg}");
    }

    #[test]
    fn psnr_examples() {
        let zeros = Array3::<f64>::zeros((4, 5, 3));
        let ones = Array3::<f64>::ones((4, 5, 3));
        assert_eq!(psnr(&zeros.view(), &zeros.view()).unwrap(), PSNR_IDENTICAL);
        assert_eq!(psnr(&zeros.view(), &ones.view()).unwrap(), 0.0);
        let a = Array3::from_elem((4, 5, 3), 0.5);
        let b = Array3::from_elem((4, 5, 3), 0.6);
        assert_eq!(psnr(&a.view(), &b.view()).unwrap(), 20.0);
        let c = Array3::<f64>::zeros((4, 5, 1));
        assert!(matches!(psnr(&a.view(), &c.view()), Err(MetricsError::DimensionMismatch { .. })));
    }

    #[test]
    fn psnr_summary_separates_identical() {
        let s = summarize_psnr(&[20.0, PSNR_IDENTICAL, 30.0]);
        assert_eq!(s, PsnrSummary { mean_finite: Some(25.0), n_finite: 2, n_identical: 1 });
        assert_eq!(summarize_psnr(&[PSNR_IDENTICAL]).mean_finite, None);
    }

    #[test]
    fn ssim_identity_negation_and_size() {
        let a = Array3::from_shape_fn((16, 20, 2), |(y, x, c)| ((x * 7 + y * 3 + c) % 11) as f64 / 10.0);
        assert_eq!(ssim(&a.view(), &a.view()).unwrap(), 1.0);
        let neg = a.mapv(|v| 1.0 - v);
        assert!(ssim(&a.view(), &neg.view()).unwrap() < 0.0);
        let small = Array3::<f64>::zeros((10, 30, 1));
        assert!(matches!(ssim(&small.view(), &small.view()), Err(MetricsError::TooSmall { .. })));
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(k[i], k[SSIM_WINDOW - 1 - i]);
        }
    }
}
