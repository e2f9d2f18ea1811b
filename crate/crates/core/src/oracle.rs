//! Synthetic scenes with known geometry.
//!
//! Scenes live in a unit room centered at the origin (world `z` up): a floor
//! at `z = -0.5` and walls at `x = ±0.5` and `y = +0.5`, open toward `-y` and
//! `+z`. Anchor cameras sit 2–3 units from the center looking in; the wrist
//! trajectory stays inside the room looking toward the back wall and floor.
//!
//! Anchor point maps rasterize the cloud with single-pixel splats, so every
//! valid map entry holds an exact cloud point. Correspondences sampled from
//! those entries therefore lift back to exact 3D points.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

use crate::geometry::{project, se3_exp, Intrinsics, Mat3, Pixel, Point3, PoseSE3, Twist6, Vec3};
use crate::render::{rasterize, SplatConfig};
use crate::rng::{stream, stream_indexed, StreamRng};
use crate::spc::{spc_loss, AnchorPointMap, Correspondence2D2D, SpcConfig, Track};

const MAX_VISIBILITY_ATTEMPTS: usize = 100;
pub const MAX_GRID_EVALUATIONS: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("infeasible scene: {0}")]
    InfeasibleScene(String),
    #[error("invalid scene parameters: {0}")]
    InvalidParams(String),
    #[error("grid of {0} evaluations exceeds {MAX_GRID_EVALUATIONS}")]
    GridTooLarge(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    BoxRoom,
    RandomBlobs,
    Planar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Arc,
    Spline,
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneParams {
    pub n_points: usize,
    pub scene_kind: SceneKind,
    pub n_anchors: usize,
    pub trajectory_frames: usize,
    pub trajectory_kind: TrajectoryKind,
    pub pixel_noise_sigma: f64,
    pub outlier_rate: f64,
    /// Correspondences sampled per frame.
    pub n_tracks: usize,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            n_points: 5000,
            scene_kind: SceneKind::BoxRoom,
            n_anchors: 2,
            trajectory_frames: 16,
            trajectory_kind: TrajectoryKind::Arc,
            pixel_noise_sigma: 0.0,
            outlier_rate: 0.0,
            n_tracks: 1000,
            seed: 0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: &str| Err(OracleError::InvalidParams(m.into()));
        if self.n_points == 0 {
            return bad("n_points must be >= 1");
        }
        if self.n_anchors == 0 {
            return bad("n_anchors must be >= 1");
        }
        if self.trajectory_frames == 0 {
            return bad("trajectory_frames must be >= 1");
        }
        if !(self.pixel_noise_sigma >= 0.0 && self.pixel_noise_sigma.is_finite()) {
            return bad("pixel_noise_sigma must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.outlier_rate) {
            return bad("outlier_rate must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub cloud: Vec<Point3>,
    pub anchor_poses: Vec<PoseSE3>,
    pub anchor_intrinsics: Intrinsics,
    pub wrist_trajectory: Vec<PoseSE3>,
    pub wrist_intrinsics: Intrinsics,
}

pub fn default_anchor_intrinsics() -> Intrinsics {
    Intrinsics { fx: 500.0, fy: 500.0, cx: 319.5, cy: 239.5, width: 640, height: 480 }
}

pub fn default_wrist_intrinsics() -> Intrinsics {
    Intrinsics { fx: 320.0, fy: 320.0, cx: 319.5, cy: 239.5, width: 640, height: 480 }
}

/// Smooth position-dependent color, continuous across faces.
struct Palette {
    dirs: [Vec3; 3],
    phases: [f64; 3],
}

impl Palette {
    fn new(rng: &mut StreamRng) -> Self {
        let mut dir = || unit_vector(rng) * 2.0;
        let dirs = [dir(), dir(), dir()];
        let phases = [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)];
        Self { dirs, phases }
    }

    fn color(&self, p: &Vec3) -> [f64; 3] {
        std::array::from_fn(|c| 0.5 + 0.4 * (self.dirs[c].dot(p) + self.phases[c]).sin())
    }
}

fn unit_vector(rng: &mut StreamRng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

fn box_face(face: usize, a: f64, b: f64) -> Vec3 {
    match face {
        0 => Vec3::new(a, b, -0.5),
        1 => Vec3::new(a, 0.5, b),
        2 => Vec3::new(-0.5, a, b),
        _ => Vec3::new(0.5, a, b),
    }
}

/// Jittered stratified samples on the unit square `[-0.5, 0.5)²`: rows of
/// near-square cells that tile the square exactly, one sample per cell.
/// Keeps surface density even, like a per-pixel point map, instead of the
/// clumps and gaps of i.i.d. sampling.
fn stratified_square(rng: &mut StreamRng, n: usize) -> Vec<(f64, f64)> {
    let rows = ((n as f64).sqrt().round() as usize).clamp(1, n.max(1));
    let mut out = Vec::with_capacity(n);
    for r in 0..rows {
        let in_row = (r + 1) * n / rows - r * n / rows;
        for c in 0..in_row {
            let u = (c as f64 + rng.random_range(0.0..1.0)) / in_row as f64;
            let v = (r as f64 + rng.random_range(0.0..1.0)) / rows as f64;
            out.push((u - 0.5, v - 0.5));
        }
    }
    out
}

fn sample_cloud(params: &SceneParams) -> Vec<Point3> {
    let mut rng = stream(params.seed, "cloud");
    let palette = Palette::new(&mut rng);
    let blobs: Vec<(Vec3, f64)> = (0..8)
        .map(|_| {
            let c = Vec3::new(rng.random_range(-0.35..0.35), rng.random_range(-0.1..0.4), rng.random_range(-0.45..0.1));
            (c, rng.random_range(0.04..0.1))
        })
        .collect();
    let n = params.n_points;
    let faces = match params.scene_kind {
        SceneKind::BoxRoom => 4,
        SceneKind::Planar => 1,
        SceneKind::RandomBlobs => 0,
    };
    let positions: Vec<Vec3> = if faces == 0 {
        (0..n)
            .map(|_| {
                let (c, s) = blobs[rng.random_range(0..blobs.len())];
                let offset = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
                c + offset * s
            })
            .collect()
    } else {
        let mut ps = Vec::with_capacity(n);
        for f in 0..faces {
            let count = n / faces + usize::from(f < n % faces);
            ps.extend(stratified_square(&mut rng, count).into_iter().map(|(a, b)| box_face(f, a, b)));
        }
        ps
    };
    positions.into_iter().map(|p| Point3 { position: p, rgb: Some(palette.color(&p)) }).collect()
}

/// Fraction of the cloud that is in front of the camera and inside the image.
pub fn visible_fraction(cloud: &[Point3], pose: &PoseSE3, k: &Intrinsics) -> f64 {
    let seen = cloud
        .iter()
        .filter(|p| {
            let pr = project(k, pose, &p.position);
            pr.in_front() && k.contains(&pr.pixel)
        })
        .count();
    seen as f64 / cloud.len() as f64
}

fn place_anchor(rng: &mut StreamRng, cloud: &[Point3], k: &Intrinsics) -> Result<PoseSE3, OracleError> {
    for _ in 0..MAX_VISIBILITY_ATTEMPTS {
        let dist = rng.random_range(2.0..3.0);
        let az = -PI / 2.0 + rng.random_range(-PI / 3.0..PI / 3.0);
        let el: f64 = rng.random_range(0.35..0.9);
        let eye = Vec3::new(dist * el.cos() * az.cos(), dist * el.cos() * az.sin(), dist * el.sin());
        let target = Vec3::new(0.0, 0.1, -0.2);
        let Ok(pose) = PoseSE3::look_at(&eye, &target, &Vec3::z()) else { continue };
        if visible_fraction(cloud, &pose, k) >= 0.5 {
            return Ok(pose);
        }
    }
    Err(OracleError::InfeasibleScene(format!(
        "no anchor placement sees half the cloud after {MAX_VISIBILITY_ATTEMPTS} attempts"
    )))
}

fn random_wrist_keypose(rng: &mut StreamRng) -> PoseSE3 {
    loop {
        let eye = Vec3::new(rng.random_range(-0.25..0.25), rng.random_range(-0.35..-0.05), rng.random_range(-0.05..0.25));
        let target = Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(0.15..0.45), rng.random_range(-0.5..-0.3));
        if let Ok(p) = PoseSE3::look_at(&eye, &target, &Vec3::z()) {
            return p;
        }
    }
}

fn catmull_rom<T>(p: [T; 4], t: f64) -> T
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let t2 = t * t;
    let t3 = t2 * t;
    p[0] * (-0.5 * t3 + t2 - 0.5 * t)
        + p[1] * (1.5 * t3 - 2.5 * t2 + 1.0)
        + p[2] * (-1.5 * t3 + 2.0 * t2 + 0.5 * t)
        + p[3] * (0.5 * t3 - 0.5 * t2)
}

fn wrist_trajectory(params: &SceneParams) -> Vec<PoseSE3> {
    let mut rng = stream(params.seed, "trajectory");
    let n = params.trajectory_frames;
    let frac = |i: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    match params.trajectory_kind {
        TrajectoryKind::Static => vec![random_wrist_keypose(&mut rng); n],
        TrajectoryKind::Arc => {
            let start = rng.random_range(1.2 * PI..1.5 * PI);
            let sweep = rng.random_range(PI / 6.0..PI / 3.0);
            let radius = rng.random_range(0.2..0.3);
            let height = rng.random_range(0.0..0.2);
            let target = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(0.2..0.35), -0.4);
            (0..n)
                .map(|i| {
                    let th = start + sweep * frac(i);
                    let eye = Vec3::new(radius * th.cos(), radius * th.sin(), height);
                    PoseSE3::look_at(&eye, &target, &Vec3::z()).expect("arc eye never coincides with target")
                })
                .collect()
        }
        TrajectoryKind::Spline => {
            let keys: Vec<PoseSE3> = (0..4).map(|_| random_wrist_keypose(&mut rng)).collect();
            let centers: Vec<Vec3> = keys.iter().map(|k| k.center()).collect();
            let rots: Vec<Mat3> = keys.iter().map(|k| *k.rotation()).collect();
            (0..n)
                .map(|i| {
                    let s = 3.0 * frac(i);
                    let seg = (s.floor() as usize).min(2);
                    let t = s - seg as f64;
                    let idx = |j: isize| (seg as isize + j).clamp(0, 3) as usize;
                    let c = catmull_rom([centers[idx(-1)], centers[idx(0)], centers[idx(1)], centers[idx(2)]], t);
                    let r = catmull_rom([rots[idx(-1)], rots[idx(0)], rots[idx(1)], rots[idx(2)]], t);
                    let pose = PoseSE3::from_approx(r, Vec3::zeros()).expect("interpolated rotation is finite");
                    PoseSE3::new(*pose.rotation(), -(pose.rotation() * c)).expect("rotation came from polar projection")
                })
                .collect()
        }
    }
}

pub fn generate_scene(params: &SceneParams) -> Result<SyntheticScene, OracleError> {
    params.validate()?;
    let cloud = sample_cloud(params);
    let anchor_intrinsics = default_anchor_intrinsics();
    let mut rng = stream(params.seed, "anchors");
    let anchor_poses = (0..params.n_anchors)
        .map(|_| place_anchor(&mut rng, &cloud, &anchor_intrinsics))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SyntheticScene {
        cloud,
        anchor_poses,
        anchor_intrinsics,
        wrist_trajectory: wrist_trajectory(params),
        wrist_intrinsics: default_wrist_intrinsics(),
    })
}

/// Bounding-box diagonal; the scale in which translation errors are judged.
pub fn cloud_diameter(cloud: &[Point3]) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in cloud {
        lo = lo.inf(&p.position);
        hi = hi.sup(&p.position);
    }
    (hi - lo).norm()
}

/// Anchor point map plus the cloud index stored at each valid entry.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorView {
    pub map: AnchorPointMap,
    pub source: Vec<Option<u32>>,
}

impl SyntheticScene {
    pub fn diameter(&self) -> f64 {
        cloud_diameter(&self.cloud)
    }

    pub fn anchor_views(&self) -> Vec<AnchorView> {
        let splat = SplatConfig { radius_px: 0, depth_test_eps: 0.0 };
        self.anchor_poses
            .iter()
            .map(|pose| {
                let raster = rasterize(&self.cloud, pose, &self.anchor_intrinsics, &splat).expect("radius 0 is valid");
                let mut map = AnchorPointMap::empty(raster.width, raster.height);
                for (px, w) in raster.winner.iter().enumerate() {
                    if let Some(i) = w {
                        map.set(px % raster.width, px / raster.width, self.cloud[*i as usize].position);
                    }
                }
                AnchorView { map, source: raster.winner }
            })
            .collect()
    }

    pub fn anchor_point_maps(&self) -> Vec<AnchorPointMap> {
        self.anchor_views().into_iter().map(|v| v.map).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameCorrespondences {
    pub correspondences: Vec<Correspondence2D2D>,
    /// Exact 3D points paired with the (possibly noisy) wrist pixels.
    pub tracks: Vec<Track>,
    pub ground_truth: PoseSE3,
    /// Exact wrist-view projections before noise and outlier replacement.
    pub exact_wrist_pixels: Vec<Pixel>,
    /// Indices whose wrist pixel was replaced by a uniform draw.
    pub outliers: Vec<usize>,
}

/// Sample co-visible anchor/wrist matches for one trajectory frame.
///
/// A cloud point is co-visible when it owns an anchor map entry and projects
/// in front of the wrist camera inside its image. Fewer than `n_tracks`
/// candidates yields all of them.
pub fn generate_correspondences(
    scene: &SyntheticScene,
    frame_index: usize,
    params: &SceneParams,
) -> Result<FrameCorrespondences, OracleError> {
    let views = scene.anchor_views();
    generate_correspondences_with_views(scene, &views, frame_index, params)
}

pub fn generate_correspondences_with_views(
    scene: &SyntheticScene,
    views: &[AnchorView],
    frame_index: usize,
    params: &SceneParams,
) -> Result<FrameCorrespondences, OracleError> {
    params.validate()?;
    let gt = *scene.wrist_trajectory.get(frame_index).ok_or_else(|| {
        OracleError::InvalidParams(format!(
            "frame {frame_index} out of range for {} frames",
            scene.wrist_trajectory.len()
        ))
    })?;
    let kw = &scene.wrist_intrinsics;
    let ka = &scene.anchor_intrinsics;

    let mut candidates: Vec<(usize, u32)> = Vec::new();
    for (a, view) in views.iter().enumerate() {
        for &i in view.source.iter().flatten() {
            let pr = project(kw, &gt, &scene.cloud[i as usize].position);
            if pr.in_front() && kw.contains(&pr.pixel) {
                candidates.push((a, i));
            }
        }
    }
    if candidates.len() < 6 {
        return Err(OracleError::InfeasibleScene(format!(
            "only {} co-visible points in frame {frame_index}",
            candidates.len()
        )));
    }

    let m = params.n_tracks.min(candidates.len());
    let frame = frame_index as u64;
    let mut pick_rng = stream_indexed(params.seed, "correspondence-sample", frame);
    let mut noise_rng = stream_indexed(params.seed, "pixel-noise", frame);
    let mut outlier_rng = stream_indexed(params.seed, "outliers", frame);

    let chosen = sample(&mut pick_rng, candidates.len(), m);
    let n_out = (params.outlier_rate * m as f64 + 0.5).floor() as usize;
    let mut outliers: Vec<usize> = sample(&mut outlier_rng, m, n_out.min(m)).into_vec();
    outliers.sort_unstable();

    let mut out = FrameCorrespondences {
        correspondences: Vec::with_capacity(m),
        tracks: Vec::with_capacity(m),
        ground_truth: gt,
        exact_wrist_pixels: Vec::with_capacity(m),
        outliers: outliers.clone(),
    };
    let sigma = params.pixel_noise_sigma;
    let mut next_outlier = outliers.iter().peekable();
    for (j, ci) in chosen.iter().enumerate() {
        let (a, i) = candidates[ci];
        let point = scene.cloud[i as usize].position;
        let anchor_pixel = project(ka, &scene.anchor_poses[a], &point).pixel;
        let exact = project(kw, &gt, &point).pixel;
        let mut wrist = exact;
        if sigma > 0.0 {
            let nu: f64 = StandardNormal.sample(&mut noise_rng);
            let nv: f64 = StandardNormal.sample(&mut noise_rng);
            wrist = Pixel::new(exact.u + sigma * nu, exact.v + sigma * nv);
        }
        if next_outlier.peek() == Some(&&j) {
            next_outlier.next();
            wrist = Pixel::new(
                outlier_rng.random_range(-0.5..f64::from(kw.width) - 0.5),
                outlier_rng.random_range(-0.5..f64::from(kw.height) - 0.5),
            );
        }
        out.correspondences.push(Correspondence2D2D { anchor_view_index: a, anchor_pixel, wrist_pixel: wrist });
        out.tracks.push(Track::new(point, wrist));
        out.exact_wrist_pixels.push(exact);
    }
    Ok(out)
}

/// Half-widths of the tangent grid: rotation in radians, translation in scene units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridExtent {
    pub rotation: f64,
    pub translation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSample {
    pub tangent: Twist6,
    /// `+inf` where every track was skipped.
    pub l_proj: f64,
}

/// Evaluate the loss at `compose(se3_exp(δ), center)` over a regular 6-D grid of `δ`.
pub fn brute_force_pose_grid(
    tracks: &[Track],
    k: &Intrinsics,
    cfg: &SpcConfig,
    center: &PoseSE3,
    extent: GridExtent,
    steps: usize,
) -> Result<Vec<GridSample>, OracleError> {
    let total = (steps as u64).checked_pow(6).unwrap_or(u64::MAX);
    if total > MAX_GRID_EVALUATIONS {
        return Err(OracleError::GridTooLarge(total));
    }
    let eval = |t: Twist6| GridSample {
        tangent: t,
        l_proj: spc_loss(tracks, &se3_exp(&t).compose(center), k, cfg).map_or(f64::INFINITY, |b| b.l_proj),
    };
    if steps <= 1 || (extent.rotation == 0.0 && extent.translation == 0.0) {
        return Ok(vec![eval(Twist6::zero())]);
    }
    let axis = |half: f64| -> Vec<f64> {
        (0..steps).map(|i| -half + 2.0 * half * i as f64 / (steps - 1) as f64).collect()
    };
    let rot = axis(extent.rotation);
    let trans = axis(extent.translation);
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = [0usize; 6];
    loop {
        let t = Twist6::from_array([rot[idx[0]], rot[idx[1]], rot[idx[2]], trans[idx[3]], trans[idx[4]], trans[idx[5]]]);
        out.push(eval(t));
        let mut d = 5;
        loop {
            idx[d] += 1;
            if idx[d] < steps {
                break;
            }
            idx[d] = 0;
            if d == 0 {
                return Ok(out);
            }
            d -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SceneParams {
        SceneParams { n_points: 3000, trajectory_frames: 4, seed, ..Default::default() }
    }

    #[test]
    fn stratified_samples_fill_every_cell_once() {
        let mut rng = stream(1, "test");
        for n in [0, 1, 7, 100, 1001] {
            let pts = stratified_square(&mut rng, n);
            assert_eq!(pts.len(), n);
            assert!(pts.iter().all(|(a, b)| (-0.5..0.5).contains(a) && (-0.5..0.5).contains(b)));
        }
        // a perfect square count lands one point in each grid cell
        let pts = stratified_square(&mut rng, 2500);
        let mut seen = vec![false; 2500];
        for (a, b) in pts {
            let cell = ((b + 0.5) * 50.0).floor() as usize * 50 + ((a + 0.5) * 50.0).floor() as usize;
            assert!(!seen[cell]);
            seen[cell] = true;
        }
    }

    #[test]
    fn box_room_splits_points_across_faces() {
        let s = generate_scene(&SceneParams { n_points: 4003, ..small(2) }).unwrap();
        let on = |f: fn(&Vec3) -> bool| s.cloud.iter().filter(|p| f(&p.position)).count();
        assert_eq!(on(|p| p.z == -0.5), 1001);
        assert_eq!(on(|p| p.y == 0.5), 1001);
        assert_eq!(on(|p| p.x == -0.5), 1001);
        assert_eq!(on(|p| p.x == 0.5), 1000);
    }

    #[test]
    fn static_trajectory_repeats() {
        let p = SceneParams { trajectory_kind: TrajectoryKind::Static, trajectory_frames: 3, ..small(1) };
        let s = generate_scene(&p).unwrap();
        assert_eq!(s.wrist_trajectory.len(), 3);
        assert!(s.wrist_trajectory.iter().all(|q| *q == s.wrist_trajectory[0]));
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(generate_scene(&small(42)).unwrap(), generate_scene(&small(42)).unwrap());
        assert_ne!(generate_scene(&small(42)).unwrap().cloud, generate_scene(&small(43)).unwrap().cloud);
    }

    #[test]
    fn anchors_see_half_the_room() {
        let s = generate_scene(&SceneParams { n_points: 5000, ..small(3) }).unwrap();
        for pose in &s.anchor_poses {
            let front = s.cloud.iter().filter(|p| pose.transform(&p.position).z > 0.0).count();
            assert!(front * 2 >= s.cloud.len());
        }
    }

    #[test]
    fn trajectories_are_valid_and_smooth() {
        for kind in [TrajectoryKind::Arc, TrajectoryKind::Spline] {
            let s = generate_scene(&SceneParams { trajectory_kind: kind, trajectory_frames: 16, ..small(5) }).unwrap();
            for w in s.wrist_trajectory.windows(2) {
                let step = (w[0].center() - w[1].center()).norm();
                assert!(step < 0.15, "{kind:?} step {step}");
                assert!(PoseSE3::new(*w[1].rotation(), *w[1].translation()).is_ok());
            }
            // inside the room
            for p in &s.wrist_trajectory {
                assert!(p.center().amax() < 0.5);
            }
        }
    }

    #[test]
    fn invalid_params() {
        for p in [
            SceneParams { n_points: 0, ..small(0) },
            SceneParams { n_anchors: 0, ..small(0) },
            SceneParams { trajectory_frames: 0, ..small(0) },
            SceneParams { outlier_rate: 1.0, ..small(0) },
        ] {
            assert!(matches!(generate_scene(&p), Err(OracleError::InvalidParams(_))));
        }
    }

    #[test]
    fn exact_tracks_have_zero_loss() {
        let p = small(8);
        let s = generate_scene(&p).unwrap();
        let c = generate_correspondences(&s, 1, &p).unwrap();
        assert_eq!(c.tracks.len(), 1000);
        let b = spc_loss(&c.tracks, &c.ground_truth, &s.wrist_intrinsics, &SpcConfig::default()).unwrap();
        assert_eq!((b.l_u, b.n_front), (0.0, 1000));
        assert!(c.tracks.iter().zip(&c.exact_wrist_pixels).all(|(t, e)| t.wrist_pixel == *e));
    }

    #[test]
    fn outlier_count_is_exact() {
        let p = SceneParams { outlier_rate: 0.5, n_tracks: 100, ..small(9) };
        let s = generate_scene(&p).unwrap();
        let c = generate_correspondences(&s, 0, &p).unwrap();
        assert_eq!(c.outliers.len(), 50);
        let moved = c.tracks.iter().zip(&c.exact_wrist_pixels).filter(|(t, e)| t.wrist_pixel != **e).count();
        assert_eq!(moved, 50);
    }

    #[test]
    fn frame_out_of_range() {
        let p = small(2);
        let s = generate_scene(&p).unwrap();
        assert!(generate_correspondences(&s, 4, &p).is_err());
    }

    #[test]
    fn grid_degenerate_and_too_large() {
        let p = small(4);
        let s = generate_scene(&p).unwrap();
        let c = generate_correspondences(&s, 0, &SceneParams { n_tracks: 50, ..p }).unwrap();
        let cfg = SpcConfig::default();
        let ext0 = GridExtent { rotation: 0.0, translation: 0.0 };
        let g = brute_force_pose_grid(&c.tracks, &s.wrist_intrinsics, &cfg, &c.ground_truth, ext0, 3).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].l_proj, spc_loss(&c.tracks, &c.ground_truth, &s.wrist_intrinsics, &cfg).unwrap().l_proj);
        let ext = GridExtent { rotation: 0.01, translation: 0.01 };
        assert_eq!(
            brute_force_pose_grid(&c.tracks, &s.wrist_intrinsics, &cfg, &c.ground_truth, ext, 15),
            Err(OracleError::GridTooLarge(15u64.pow(6)))
        );
        let g = brute_force_pose_grid(&c.tracks, &s.wrist_intrinsics, &cfg, &c.ground_truth, ext, 3).unwrap();
        assert_eq!(g.len(), 729);
        let best = g.iter().min_by(|a, b| a.l_proj.total_cmp(&b.l_proj)).unwrap();
        assert_eq!(best.tangent, Twist6::zero());
    }
}
