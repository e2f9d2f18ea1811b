//! Spatial projection consistency loss.
//!
//! Tracks pair a 3D point with the wrist-view pixel it was matched to. Under a
//! candidate wrist pose each track is partitioned by the sign of its camera
//! depth: front-facing tracks contribute their squared reprojection error,
//! back-facing ones a penalty equal to minus their depth.
//!
//! All reductions use [`ExactSum`], so every field of [`SpcBreakdown`] is
//! independent of track order.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Intrinsics, Pixel, PoseSE3, Twist6, Vec3, Z_EPS};
use crate::numeric::ExactSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpcError {
    #[error("no correspondence landed on a valid anchor point ({dropped} dropped)")]
    EmptyResult { dropped: usize },
    #[error("correspondence {index} references anchor view {view} but only {available} maps were given")]
    ViewIndexOutOfRange { index: usize, view: usize, available: usize },
    #[error("track list is empty")]
    EmptyTracks,
    #[error("all {0} tracks have |depth| <= z_eps")]
    AllSkipped(usize),
    #[error("track {0} has a non-positive or non-finite weight")]
    InvalidWeight(usize),
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence2D2D {
    pub anchor_view_index: usize,
    pub anchor_pixel: Pixel,
    pub wrist_pixel: Pixel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Track {
    pub point: Vec3,
    pub wrist_pixel: Pixel,
    pub weight: f64,
}

impl Track {
    pub fn new(point: Vec3, wrist_pixel: Pixel) -> Self {
        Self { point, wrist_pixel, weight: 1.0 }
    }
}

/// Dense per-pixel 3D points for one anchor view, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPointMap {
    width: usize,
    height: usize,
    points: Vec<Vec3>,
    valid: Vec<bool>,
}

impl AnchorPointMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            points: vec![Vec3::zeros(); width * height],
            valid: vec![false; width * height],
        }
    }

    /// Entries flagged invalid must hold zeros; a non-finite valid point is rejected.
    pub fn from_parts(width: usize, height: usize, points: Vec<Vec3>, valid: Vec<bool>) -> Option<Self> {
        if points.len() != width * height || valid.len() != width * height {
            return None;
        }
        let ok = points
            .iter()
            .zip(&valid)
            .all(|(p, &v)| if v { p.iter().all(|c| c.is_finite()) } else { *p == Vec3::zeros() });
        ok.then_some(Self { width, height, points, valid })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn set(&mut self, col: usize, row: usize, point: Vec3) {
        let i = row * self.width + col;
        self.points[i] = point;
        self.valid[i] = true;
    }

    pub fn get(&self, col: usize, row: usize) -> Option<Vec3> {
        if col >= self.width || row >= self.height {
            return None;
        }
        let i = row * self.width + col;
        self.valid[i].then(|| self.points[i])
    }

    /// Point stored at the lattice pixel nearest to `px`.
    pub fn lookup(&self, px: &Pixel) -> Option<Vec3> {
        let (c, r) = px.lattice();
        if c < 0 || r < 0 {
            return None;
        }
        self.get(c as usize, r as usize)
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    #[default]
    ImageDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpcConfig {
    pub lambda_u: f64,
    pub lambda_depth: f64,
    pub normalization: Normalization,
    pub z_eps: f64,
}

impl Default for SpcConfig {
    fn default() -> Self {
        Self { lambda_u: 1.0, lambda_depth: 0.1, normalization: Normalization::ImageDiagonal, z_eps: Z_EPS }
    }
}

impl SpcConfig {
    pub fn validate(&self) -> Result<(), SpcError> {
        let finite = [self.lambda_u, self.lambda_depth, self.z_eps].iter().all(|v| v.is_finite());
        if !finite || self.lambda_u < 0.0 || self.lambda_depth < 0.0 || self.z_eps < 0.0 {
            return Err(SpcError::InvalidConfig("weights and z_eps must be finite and non-negative".into()));
        }
        if self.lambda_u + self.lambda_depth <= 0.0 {
            return Err(SpcError::InvalidConfig("lambda_u + lambda_depth must be positive".into()));
        }
        Ok(())
    }

    /// Factor applied to squared pixel distances.
    pub fn pixel_scale(&self, k: &Intrinsics) -> f64 {
        match self.normalization {
            Normalization::None => 1.0,
            Normalization::ImageDiagonal => 1.0 / k.diagonal_sq(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpcBreakdown {
    pub l_u: f64,
    pub l_depth: f64,
    pub l_proj: f64,
    pub n_front: usize,
    pub n_back: usize,
    pub n_skipped: usize,
}

impl SpcBreakdown {
    pub fn total(&self) -> usize {
        self.n_front + self.n_back + self.n_skipped
    }

    pub fn front_fraction(&self) -> f64 {
        self.n_front as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lifted {
    pub tracks: Vec<Track>,
    /// Indices into the correspondence list, one per output track.
    pub source: Vec<usize>,
    pub dropped: usize,
}

pub fn lift_correspondences(corrs: &[Correspondence2D2D], maps: &[AnchorPointMap]) -> Result<Lifted, SpcError> {
    let mut out = Lifted { tracks: Vec::with_capacity(corrs.len()), source: Vec::new(), dropped: 0 };
    for (index, c) in corrs.iter().enumerate() {
        let map = maps.get(c.anchor_view_index).ok_or(SpcError::ViewIndexOutOfRange {
            index,
            view: c.anchor_view_index,
            available: maps.len(),
        })?;
        match map.lookup(&c.anchor_pixel) {
            Some(point) => {
                out.tracks.push(Track::new(point, c.wrist_pixel));
                out.source.push(index);
            }
            None => out.dropped += 1,
        }
    }
    if out.tracks.is_empty() {
        return Err(SpcError::EmptyResult { dropped: out.dropped });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Front,
    Back,
    Skipped,
}

pub fn classify_depth(z: f64, z_eps: f64) -> Side {
    if z > z_eps {
        Side::Front
    } else if z < -z_eps {
        Side::Back
    } else {
        Side::Skipped
    }
}

/// Track indices split by depth sign under `pose`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition {
    pub front: Vec<usize>,
    pub back: Vec<usize>,
    pub skipped: Vec<usize>,
}

pub fn partition_front_back(tracks: &[Track], pose: &PoseSE3, z_eps: f64) -> Partition {
    let mut p = Partition::default();
    for (i, t) in tracks.iter().enumerate() {
        match classify_depth(pose.transform(&t.point).z, z_eps) {
            Side::Front => p.front.push(i),
            Side::Back => p.back.push(i),
            Side::Skipped => p.skipped.push(i),
        }
    }
    p
}

/// Derivatives of the projected pixel with respect to the camera-frame point.
fn pixel_jacobian(k: &Intrinsics, q: &Vec3) -> (Vec3, Vec3) {
    let iz = 1.0 / q.z;
    let du = Vec3::new(k.fx * iz, 0.0, -k.fx * q.x * iz * iz);
    let dv = Vec3::new(0.0, k.fy * iz, -k.fy * q.y * iz * iz);
    (du, dv)
}

#[derive(Default)]
struct Accum {
    front_err: ExactSum,
    front_w: ExactSum,
    back_depth: ExactSum,
    back_w: ExactSum,
    n_front: usize,
    n_back: usize,
    n_skipped: usize,
    grad_front: [ExactSum; 6],
    grad_back: [ExactSum; 6],
}

fn accumulate(tracks: &[Track], pose: &PoseSE3, k: &Intrinsics, cfg: &SpcConfig, with_grad: bool) -> Result<Accum, SpcError> {
    cfg.validate()?;
    if tracks.is_empty() {
        return Err(SpcError::EmptyTracks);
    }
    let scale = cfg.pixel_scale(k);
    let mut acc = Accum::default();
    for (i, t) in tracks.iter().enumerate() {
        if !(t.weight > 0.0 && t.weight.is_finite()) {
            return Err(SpcError::InvalidWeight(i));
        }
        let q = pose.transform(&t.point);
        match classify_depth(q.z, cfg.z_eps) {
            Side::Front => {
                let ru = k.fx * q.x / q.z + k.cx - t.wrist_pixel.u;
                let rv = k.fy * q.y / q.z + k.cy - t.wrist_pixel.v;
                acc.front_err.add(t.weight * scale * (ru * ru + rv * rv));
                acc.front_w.add(t.weight);
                acc.n_front += 1;
                if with_grad {
                    let (du, dv) = pixel_jacobian(k, &q);
                    let de_dq = (du * ru + dv * rv) * (2.0 * scale * t.weight);
                    let g_omega = q.cross(&de_dq);
                    for j in 0..3 {
                        acc.grad_front[j].add(g_omega[j]);
                        acc.grad_front[3 + j].add(de_dq[j]);
                    }
                }
            }
            Side::Back => {
                acc.back_depth.add(t.weight * q.z);
                acc.back_w.add(t.weight);
                acc.n_back += 1;
                if with_grad {
                    // d z / d(omega) = q × e_z, d z / d(tau) = e_z
                    let g_omega = Vec3::new(q.y, -q.x, 0.0) * t.weight;
                    for j in 0..3 {
                        acc.grad_back[j].add(g_omega[j]);
                    }
                    acc.grad_back[5].add(t.weight);
                }
            }
            Side::Skipped => acc.n_skipped += 1,
        }
    }
    if acc.n_skipped == tracks.len() {
        return Err(SpcError::AllSkipped(tracks.len()));
    }
    Ok(acc)
}

fn breakdown(acc: &Accum, cfg: &SpcConfig) -> SpcBreakdown {
    let l_u = if acc.n_front > 0 { acc.front_err.value() / acc.front_w.value() } else { 0.0 };
    let l_depth = if acc.n_back > 0 { -acc.back_depth.value() / acc.back_w.value() } else { 0.0 };
    SpcBreakdown {
        l_u,
        l_depth,
        l_proj: cfg.lambda_u * l_u + cfg.lambda_depth * l_depth,
        n_front: acc.n_front,
        n_back: acc.n_back,
        n_skipped: acc.n_skipped,
    }
}

fn gradient(acc: &Accum, cfg: &SpcConfig) -> Twist6 {
    let mut g = [0.0; 6];
    if acc.n_front > 0 {
        let s = cfg.lambda_u / acc.front_w.value();
        for (gj, a) in g.iter_mut().zip(&acc.grad_front) {
            *gj += s * a.value();
        }
    }
    if acc.n_back > 0 {
        let s = -cfg.lambda_depth / acc.back_w.value();
        for (gj, a) in g.iter_mut().zip(&acc.grad_back) {
            *gj += s * a.value();
        }
    }
    Twist6::from_array(g)
}

pub fn spc_loss(tracks: &[Track], pose: &PoseSE3, k: &Intrinsics, cfg: &SpcConfig) -> Result<SpcBreakdown, SpcError> {
    accumulate(tracks, pose, k, cfg, false).map(|a| breakdown(&a, cfg))
}

/// Gradient of `l_proj` with respect to a left perturbation `compose(se3_exp(δ), pose)` at `δ = 0`.
pub fn spc_gradient(tracks: &[Track], pose: &PoseSE3, k: &Intrinsics, cfg: &SpcConfig) -> Result<Twist6, SpcError> {
    accumulate(tracks, pose, k, cfg, true).map(|a| gradient(&a, cfg))
}

pub fn spc_loss_and_gradient(
    tracks: &[Track],
    pose: &PoseSE3,
    k: &Intrinsics,
    cfg: &SpcConfig,
) -> Result<(SpcBreakdown, Twist6), SpcError> {
    accumulate(tracks, pose, k, cfg, true).map(|a| (breakdown(&a, cfg), gradient(&a, cfg)))
}

/// Gauss-Newton approximation of the Hessian of `lambda_u·l_u`.
///
/// The depth term is linear in the camera-frame point and contributes no
/// first-order curvature. Returns `None` when no track is front-facing.
pub fn reprojection_normal_matrix(
    tracks: &[Track],
    pose: &PoseSE3,
    k: &Intrinsics,
    cfg: &SpcConfig,
) -> Option<Matrix6<f64>> {
    let scale = cfg.pixel_scale(k);
    let mut h = Matrix6::zeros();
    let mut w_sum = 0.0;
    for t in tracks {
        let q = pose.transform(&t.point);
        if classify_depth(q.z, cfg.z_eps) != Side::Front {
            continue;
        }
        let (du, dv) = pixel_jacobian(k, &q);
        let (cu, cv) = (q.cross(&du), q.cross(&dv));
        let ju = Vector6::new(cu.x, cu.y, cu.z, du.x, du.y, du.z);
        let jv = Vector6::new(cv.x, cv.y, cv.z, dv.x, dv.y, dv.z);
        h += (ju * ju.transpose() + jv * jv.transpose()) * t.weight;
        w_sum += t.weight;
    }
    (w_sum > 0.0).then(|| h * (2.0 * scale * cfg.lambda_u / w_sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, se3_exp};
    use approx::assert_relative_eq;

    fn k() -> Intrinsics {
        Intrinsics::new(300.0, 300.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn exact_tracks(pose: &PoseSE3, n: usize, seed: u64) -> Vec<Track> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
        let inv = pose.inverse();
        (0..n)
            .map(|_| {
                let q = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.8..0.8), rng.random_range(1.5..3.0));
                let p = inv.transform(&q);
                Track::new(p, project(&k(), pose, &p).pixel)
            })
            .collect()
    }

    #[test]
    fn lift_exact_hit_and_drop() {
        let mut map = AnchorPointMap::empty(20, 20);
        map.set(10, 10, Vec3::new(1.0, 2.0, 3.0));
        let w = Pixel::new(5.0, 6.0);
        let hit = Correspondence2D2D { anchor_view_index: 0, anchor_pixel: Pixel::new(10.0, 10.0), wrist_pixel: w };
        let miss = Correspondence2D2D { anchor_pixel: Pixel::new(3.0, 3.0), ..hit };
        let lifted = lift_correspondences(&[hit, miss], std::slice::from_ref(&map)).unwrap();
        assert_eq!(lifted.tracks, vec![Track::new(Vec3::new(1.0, 2.0, 3.0), w)]);
        assert_eq!(lifted.dropped, 1);
        assert_eq!(lifted.source, vec![0]);
        assert_eq!(
            lift_correspondences(&[miss], std::slice::from_ref(&map)),
            Err(SpcError::EmptyResult { dropped: 1 })
        );
        let bad = Correspondence2D2D { anchor_view_index: 1, ..hit };
        assert!(matches!(
            lift_correspondences(&[bad], std::slice::from_ref(&map)),
            Err(SpcError::ViewIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn lift_uses_nearest_lattice_pixel() {
        let mut map = AnchorPointMap::empty(4, 4);
        map.set(2, 1, Vec3::new(7.0, 0.0, 1.0));
        assert_eq!(map.lookup(&Pixel::new(1.5, 1.4)), Some(Vec3::new(7.0, 0.0, 1.0)));
        assert_eq!(map.lookup(&Pixel::new(1.49, 1.0)), None);
        assert_eq!(map.lookup(&Pixel::new(-0.6, 1.0)), None);
    }

    #[test]
    fn partition_signs() {
        let id = PoseSE3::identity();
        let mk = |z| Track::new(Vec3::new(0.1, 0.2, z), Pixel::new(0.0, 0.0));
        let front: Vec<_> = (0..4).map(|_| mk(1.0)).collect();
        assert_eq!(partition_front_back(&front, &id, Z_EPS).front, vec![0, 1, 2, 3]);
        let back: Vec<_> = (0..4).map(|_| mk(-1.0)).collect();
        assert_eq!(partition_front_back(&back, &id, Z_EPS).back.len(), 4);
        let p = partition_front_back(&[mk(1e-7), mk(-1e-7), mk(2e-6)], &id, Z_EPS);
        assert_eq!((p.front, p.back, p.skipped), (vec![2], vec![], vec![0, 1]));
    }

    #[test]
    fn zero_at_truth() {
        let pose = se3_exp(&Twist6::from_array([0.1, -0.2, 0.3, 0.2, 0.1, -0.1]));
        let tracks = exact_tracks(&pose, 50, 1);
        let b = spc_loss(&tracks, &pose, &k(), &SpcConfig::default()).unwrap();
        assert!(b.l_u < 1e-24, "{b:?}");
        assert_eq!((b.l_depth, b.n_front, b.n_back), (0.0, 50, 0));
        let g = spc_gradient(&tracks, &pose, &k(), &SpcConfig::default()).unwrap();
        assert!(g.norm() < 1e-10);
    }

    #[test]
    fn single_back_track() {
        let t = Track::new(Vec3::new(0.0, 0.0, -2.0), Pixel::new(12.0, 99.0));
        let b = spc_loss(&[t], &PoseSE3::identity(), &k(), &SpcConfig::default()).unwrap();
        assert_eq!((b.l_u, b.l_depth, b.n_front, b.n_back), (0.0, 2.0, 0, 1));
        assert_eq!(b.l_proj, 0.1 * 2.0);
    }

    #[test]
    fn errors() {
        let cfg = SpcConfig::default();
        assert_eq!(spc_loss(&[], &PoseSE3::identity(), &k(), &cfg), Err(SpcError::EmptyTracks));
        let t = Track::new(Vec3::new(1.0, 0.0, 0.0), Pixel::new(0.0, 0.0));
        assert_eq!(spc_loss(&[t], &PoseSE3::identity(), &k(), &cfg), Err(SpcError::AllSkipped(1)));
        let bad_cfg = SpcConfig { lambda_u: 0.0, lambda_depth: 0.0, ..cfg };
        let t = Track::new(Vec3::new(0.0, 0.0, 1.0), Pixel::new(0.0, 0.0));
        assert!(matches!(spc_loss(&[t], &PoseSE3::identity(), &k(), &bad_cfg), Err(SpcError::InvalidConfig(_))));
        let heavy = Track { weight: 0.0, ..t };
        assert_eq!(spc_loss(&[heavy], &PoseSE3::identity(), &k(), &cfg), Err(SpcError::InvalidWeight(0)));
    }

    #[test]
    fn normalization_scales_l_u() {
        let t = Track::new(Vec3::new(0.0, 0.0, 1.0), Pixel::new(323.0, 244.0));
        let id = PoseSE3::identity();
        let raw = spc_loss(&[t], &id, &k(), &SpcConfig { normalization: Normalization::None, ..Default::default() }).unwrap();
        assert_eq!(raw.l_u, 25.0);
        let norm = spc_loss(&[t], &id, &k(), &SpcConfig::default()).unwrap();
        assert_relative_eq!(norm.l_u, 25.0 / 640_000.0, max_relative = 1e-15);
    }

    #[test]
    fn normal_matrix_is_psd_and_absent_without_front() {
        let pose = PoseSE3::identity();
        let tracks = exact_tracks(&pose, 30, 5);
        let h = reprojection_normal_matrix(&tracks, &pose, &k(), &SpcConfig::default()).unwrap();
        let eig = h.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|e| *e > -1e-12));
        let back = Track::new(Vec3::new(0.0, 0.0, -1.0), Pixel::new(0.0, 0.0));
        assert!(reprojection_normal_matrix(&[back], &pose, &k(), &SpcConfig::default()).is_none());
    }
}
