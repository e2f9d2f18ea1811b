use nalgebra::{Rotation3, UnitQuaternion};
use ndarray::Array3;
use rand::Rng;
use wrist_recon::geometry::{rodrigues, PoseSE3, Vec3};
use wrist_recon::metrics::{pose_error, psnr, ssim, SSIM_SIGMA, SSIM_WINDOW};
use wrist_recon::rng::stream;

/// Direct 2D-window SSIM: every valid window position, every tap.
fn reference_ssim(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    let (h, w, ch) = a.dim();
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW).map(|i| (-(i as f64 - half).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let norm: f64 = g.iter().sum::<f64>().powi(2);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for c in 0..ch {
        let mut acc = 0.0;
        let mut count = 0;
        for y in 0..=h - SSIM_WINDOW {
            for x in 0..=w - SSIM_WINDOW {
                let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    for j in 0..SSIM_WINDOW {
                        let wt = g[i] * g[j] / norm;
                        let (va, vb) = (a[[y + i, x + j, c]], b[[y + i, x + j, c]]);
                        ma += wt * va;
                        mb += wt * vb;
                        aa += wt * va * va;
                        bb += wt * vb * vb;
                        ab += wt * va * vb;
                    }
                }
                let (sa, sb, sab) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
                acc += (2.0 * ma * mb + c1) * (2.0 * sab + c2) / ((ma * ma + mb * mb + c1) * (sa + sb + c2));
                count += 1;
            }
        }
        total += acc / count as f64;
    }
    total / ch as f64
}

fn gradient_image() -> Array3<f64> {
    Array3::from_shape_fn((64, 64, 1), |(y, x, _)| (x + y) as f64 / 126.0 * 0.8)
}

#[test]
fn ssim_matches_reference_on_gradient_and_offset() {
    let a = gradient_image();
    let b = &a + 0.1;
    let lib = ssim(&a.view(), &b.view()).unwrap();
    let reference = reference_ssim(&a, &b);
    assert!((lib - reference).abs() < 1e-12, "{lib} vs {reference}");
    assert!(lib < 1.0 && lib > 0.5);
}

#[test]
fn ssim_matches_reference_on_noise() {
    let mut rng = stream(3, "test-ssim");
    let a = Array3::from_shape_simple_fn((23, 31, 3), || rng.random_range(0.0..1.0));
    let b = a.mapv(|v| (v + rng.random_range(-0.2f64..0.2)).clamp(0.0, 1.0));
    let lib = ssim(&a.view(), &b.view()).unwrap();
    assert!((lib - reference_ssim(&a, &b)).abs() < 1e-12);
}

#[test]
fn image_metrics_are_symmetric() {
    let mut rng = stream(4, "test-symmetry");
    for _ in 0..5 {
        let a = Array3::from_shape_simple_fn((16, 20, 3), || rng.random_range(0.0..1.0));
        let b = Array3::from_shape_simple_fn((16, 20, 3), || rng.random_range(0.0..1.0));
        assert_eq!(psnr(&a.view(), &b.view()).unwrap(), psnr(&b.view(), &a.view()).unwrap());
        let (s1, s2) = (ssim(&a.view(), &b.view()).unwrap(), ssim(&b.view(), &a.view()).unwrap());
        assert!((s1 - s2).abs() < 1e-15);
    }
}

/// Angle of the relative rotation via unit quaternions.
fn quaternion_angle_deg(a: &PoseSE3, b: &PoseSE3) -> f64 {
    let qa = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*a.rotation()));
    let qb = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*b.rotation()));
    let q = qa * qb.inverse();
    (2.0 * q.imag().norm().atan2(q.w.abs())).to_degrees()
}

#[test]
fn pose_error_matches_quaternion_reference() {
    let mut rng = stream(5, "test-pose-error");
    let mut unit = || Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
    for angle in [1e-9, 1e-6, 0.01, 0.5, 1.0, 2.0, 3.0, 3.1] {
        let base = PoseSE3::new(rodrigues(&(unit() * 1.3)), Vec3::new(0.1, 0.2, 0.3)).unwrap();
        let other = PoseSE3::new(rodrigues(&(unit() * angle)) * base.rotation(), Vec3::new(-0.2, 0.2, 0.7)).unwrap();
        let e = pose_error(&other, &base);
        let reference = quaternion_angle_deg(&other, &base);
        assert!((e.rotation_deg - reference).abs() <= 1e-9 * reference.max(1.0), "{angle}: {} vs {reference}", e.rotation_deg);
        assert!((e.rotation_deg.to_radians() - angle).abs() < 1e-9 * angle.max(1e-3));
        assert!((e.translation - Vec3::new(0.3, 0.0, 0.4).norm()).abs() < 1e-15);
        assert_eq!(pose_error(&other, &base), pose_error(&base, &other));
    }
}
