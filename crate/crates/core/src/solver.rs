//! Wrist-pose estimation by direct minimization of the SPC loss.
//!
//! Iterates `pose ← compose(se3_exp(α·d), pose)` where `d` is a descent
//! direction built from the analytic gradient, `α` comes from an Armijo
//! backtracking search, and the rotation is re-projected onto SO(3) after
//! every step. Accepted iterates never increase the loss under backtracking.

use nalgebra::{DMatrix, Matrix3x4, Matrix4, Vector6};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

use crate::geometry::{se3_exp, Intrinsics, Mat3, PoseSE3, Twist6, Vec3};
use crate::rng::stream_indexed;
use crate::spc::{reprojection_normal_matrix, spc_loss, spc_loss_and_gradient, SpcBreakdown, SpcConfig, SpcError, Track};

const ARMIJO_C: f64 = 1e-4;
const BACKTRACK_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
const STALL_ITERATIONS: usize = 3;
const DLT_RANK_TOL: f64 = 1e-8;
const LONG_RANGE_REACH: f64 = 4.0;
const LONG_RANGE_OCTAVES: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error(transparent)]
    Spc(#[from] SpcError),
    #[error("loss or gradient became non-finite at iteration {0}")]
    NonFinite(usize),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("all {} starts failed: {}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    AllStartsFailed(Vec<SolverError>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearch {
    Backtracking,
    Fixed,
}

/// How the gradient is turned into a step direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Negative gradient.
    Steepest,
    /// Negative gradient preconditioned by the Gauss-Newton normal matrix of
    /// the reprojection term; falls back to steepest where that fails.
    GaussNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Converged once an accepted step has tangent norm below this.
    pub step_tolerance: f64,
    /// Converged after three consecutive steps with relative loss decrease below this.
    pub loss_tolerance: f64,
    /// Tangent-norm length of the first steepest-descent trial step.
    pub initial_step: f64,
    pub line_search: LineSearch,
    pub direction: Direction,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            step_tolerance: 1e-10,
            loss_tolerance: 1e-12,
            initial_step: 0.1,
            line_search: LineSearch::Backtracking,
            direction: Direction::GaussNewton,
            n_starts: 1,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidConfig("max_iterations must be >= 1".into()));
        }
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.step_tolerance) || !pos(self.loss_tolerance) || !pos(self.initial_step) {
            return Err(SolverError::InvalidConfig("tolerances and initial_step must be positive".into()));
        }
        if self.n_starts == 0 {
            return Err(SolverError::InvalidConfig("n_starts must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub pose: PoseSE3,
    pub final_loss: SpcBreakdown,
    pub iterations: usize,
    pub converged: bool,
    pub start_index: usize,
}

fn hartley_2d(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let mean_d = pts.iter().map(|(x, y)| ((x - mx).powi(2) + (y - my).powi(2)).sqrt()).sum::<f64>() / n;
    (mx, my, if mean_d > 0.0 { std::f64::consts::SQRT_2 / mean_d } else { 1.0 })
}

/// Direct linear transform from 3D–2D pairs, rotation projected onto SO(3).
pub fn linear_init(tracks: &[Track], k: &Intrinsics) -> Result<PoseSE3, SolverError> {
    if tracks.len() < 6 {
        return Err(SolverError::DegenerateConfiguration(format!("{} tracks, need at least 6", tracks.len())));
    }
    let img: Vec<(f64, f64)> = tracks
        .iter()
        .map(|t| ((t.wrist_pixel.u - k.cx) / k.fx, (t.wrist_pixel.v - k.cy) / k.fy))
        .collect();
    let (mx, my, s2) = hartley_2d(&img);
    let n = tracks.len() as f64;
    let m3 = tracks.iter().fold(Vec3::zeros(), |a, t| a + t.point) / n;
    let mean_d3 = tracks.iter().map(|t| (t.point - m3).norm()).sum::<f64>() / n;
    let s3 = if mean_d3 > 0.0 { 3f64.sqrt() / mean_d3 } else { 1.0 };

    let mut a = DMatrix::<f64>::zeros(2 * tracks.len(), 12);
    for (i, (t, (x, y))) in tracks.iter().zip(&img).enumerate() {
        let p = (t.point - m3) * s3;
        let xh = [p.x, p.y, p.z, 1.0];
        let (xn, yn) = ((x - mx) * s2, (y - my) * s2);
        for j in 0..4 {
            a[(2 * i, j)] = xh[j];
            a[(2 * i, 8 + j)] = -xn * xh[j];
            a[(2 * i + 1, 4 + j)] = xh[j];
            a[(2 * i + 1, 8 + j)] = -yn * xh[j];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| SolverError::DegenerateConfiguration("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let sv = &svd.singular_values;
    let largest = sv[order[order.len() - 1]];
    if !(largest > 0.0) || sv[order[1]] / largest < DLT_RANK_TOL {
        return Err(SolverError::DegenerateConfiguration(format!(
            "design matrix rank deficient (relative singular value {:e})",
            if largest > 0.0 { sv[order[1]] / largest } else { 0.0 }
        )));
    }
    let null = v_t.row(order[0]);
    let p_norm = Matrix3x4::from_row_iterator(null.iter().copied());

    let t3 = Matrix4::new(
        s3, 0.0, 0.0, -s3 * m3.x,
        0.0, s3, 0.0, -s3 * m3.y,
        0.0, 0.0, s3, -s3 * m3.z,
        0.0, 0.0, 0.0, 1.0,
    );
    let t2_inv = Mat3::new(1.0 / s2, 0.0, mx, 0.0, 1.0 / s2, my, 0.0, 0.0, 1.0);
    let mut p = t2_inv * p_norm * t3;
    let mut m: Mat3 = p.fixed_view::<3, 3>(0, 0).into_owned();
    if m.determinant() < 0.0 {
        p = -p;
        m = -m;
    }
    let svd_m = m.svd(true, true);
    let scale = svd_m.singular_values.mean();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(SolverError::DegenerateConfiguration("zero rotation block".into()));
    }
    let translation = p.column(3) / scale;
    PoseSE3::from_approx(m, translation.into_owned()).map_err(|e| SolverError::DegenerateConfiguration(e.to_string()))
}

fn step(pose: &PoseSE3, dir: &Twist6, alpha: f64) -> PoseSE3 {
    se3_exp(&dir.scaled(alpha)).compose(pose).reorthonormalized()
}

fn dot(a: &Twist6, b: &Twist6) -> f64 {
    a.to_array().iter().zip(b.to_array()).map(|(x, y)| x * y).sum()
}

fn gauss_newton_direction(tracks: &[Track], pose: &PoseSE3, k: &Intrinsics, cfg: &SpcConfig, grad: &Twist6) -> Option<Twist6> {
    let h = reprojection_normal_matrix(tracks, pose, k, cfg)?;
    let damping = 1e-9 * h.trace() / 6.0;
    let g = Vector6::from_row_slice(&grad.to_array());
    let d = (h + nalgebra::Matrix6::identity() * damping).cholesky()?.solve(&g);
    let d = Twist6::from_array(std::array::from_fn(|i| -d[i]));
    (d.is_finite() && dot(&d, grad) < 0.0).then_some(d)
}

struct Trial {
    pose: PoseSE3,
    loss: SpcBreakdown,
    step_norm: f64,
}

fn armijo(
    tracks: &[Track],
    pose: &PoseSE3,
    k: &Intrinsics,
    cfg: &SpcConfig,
    f0: f64,
    slope: f64,
    dir: &Twist6,
    alpha0: f64,
    min_step: f64,
    max_back: usize,
) -> Option<(Trial, f64)> {
    let dnorm = dir.norm();
    let mut alpha = alpha0;
    for _ in 0..MAX_BACKTRACKS {
        if alpha * dnorm < min_step {
            return None;
        }
        let cand = step(pose, dir, alpha);
        if let Ok(loss) = spc_loss(tracks, &cand, k, cfg) {
            if loss.l_proj.is_finite() && loss.n_back <= max_back && loss.l_proj <= f0 + ARMIJO_C * alpha * slope {
                return Some((Trial { pose: cand, loss, step_norm: alpha * dnorm }, alpha));
            }
        }
        alpha *= BACKTRACK_SHRINK;
    }
    None
}

/// Points behind the camera cannot cross `z = 0` gradually: just in front of
/// the camera their reprojection error explodes, so every short step that
/// moves them forward increases the loss. While any point is behind, scan the
/// depth-term descent ray over geometrically spaced lengths (longest first,
/// out to several times the scene reach) and return the lowest-loss length
/// with sufficient decrease.
fn long_range(tracks: &[Track], pose: &PoseSE3, k: &Intrinsics, cfg: &SpcConfig, f0: f64, max_back: usize) -> Option<Trial> {
    if cfg.lambda_depth == 0.0 {
        return None;
    }
    let depth_only = SpcConfig { lambda_u: 0.0, ..*cfg };
    let (_, g) = spc_loss_and_gradient(tracks, pose, k, &depth_only).ok()?;
    let gnorm = g.norm();
    if !(gnorm > 0.0 && gnorm.is_finite()) {
        return None;
    }
    let dir = g.scaled(-1.0 / gnorm);
    let center = pose.center();
    let reach = tracks.iter().map(|t| (t.point - center).norm()).fold(0.0, f64::max);
    let mut best: Option<Trial> = None;
    let mut len = LONG_RANGE_REACH * reach;
    for _ in 0..LONG_RANGE_OCTAVES {
        let cand = step(pose, &dir, len);
        if let Ok(loss) = spc_loss(tracks, &cand, k, cfg) {
            let ok = loss.l_proj.is_finite() && loss.n_back <= max_back && loss.l_proj <= f0 - ARMIJO_C * len * gnorm;
            if ok && best.as_ref().is_none_or(|b| loss.l_proj < b.loss.l_proj) {
                best = Some(Trial { pose: cand, loss, step_norm: len });
            }
        }
        len *= BACKTRACK_SHRINK;
    }
    best
}

/// Minimize the SPC loss from `init`; returns the best iterate seen.
pub fn solve_wrist_pose(
    tracks: &[Track],
    k: &Intrinsics,
    spc_cfg: &SpcConfig,
    solver_cfg: &SolverConfig,
    init: &PoseSE3,
) -> Result<PoseEstimate, SolverError> {
    solver_cfg.validate()?;
    let mut pose = *init;
    let (mut loss, mut grad) = spc_loss_and_gradient(tracks, &pose, k, spc_cfg)?;
    if !loss.l_proj.is_finite() || !grad.is_finite() {
        return Err(SolverError::NonFinite(0));
    }
    let mut best = PoseEstimate { pose, final_loss: loss, iterations: 0, converged: false, start_index: 0 };
    // steepest-descent step length carried between iterations
    let mut sd_alpha = solver_cfg.initial_step / grad.norm().max(f64::MIN_POSITIVE);
    let mut stalled = 0;

    for iter in 1..=solver_cfg.max_iterations {
        let gnorm = grad.norm();
        if loss.l_proj == 0.0 || gnorm == 0.0 {
            best.converged = true;
            return Ok(best);
        }
        let trial = match solver_cfg.line_search {
            LineSearch::Fixed => {
                let dir = grad.scaled(-1.0);
                let alpha = solver_cfg.initial_step / gnorm;
                let cand = step(&pose, &dir, alpha);
                let l = spc_loss(tracks, &cand, k, spc_cfg)?;
                Some(Trial { pose: cand, loss: l, step_norm: solver_cfg.initial_step })
            }
            LineSearch::Backtracking => {
                let f0 = loss.l_proj;
                let gn = match solver_cfg.direction {
                    Direction::GaussNewton => gauss_newton_direction(tracks, &pose, k, spc_cfg, &grad),
                    Direction::Steepest => None,
                };
                let gn_trial = gn.and_then(|d| {
                    armijo(tracks, &pose, k, spc_cfg, f0, dot(&d, &grad), &d, 1.0, solver_cfg.step_tolerance * 1e-3, loss.n_back)
                });
                match gn_trial {
                    Some((t, _)) => Some(t),
                    None => {
                        let dir = grad.scaled(-1.0);
                        let found = armijo(
                            tracks,
                            &pose,
                            k,
                            spc_cfg,
                            f0,
                            -gnorm * gnorm,
                            &dir,
                            sd_alpha,
                            solver_cfg.step_tolerance * 1e-3,
                            loss.n_back,
                        );
                        found.map(|(t, alpha)| {
                            sd_alpha = alpha * 2.0;
                            t
                        })
                    }
                }
            }
        };

        let trial = if loss.n_back > 0 && solver_cfg.line_search == LineSearch::Backtracking {
            match (trial, long_range(tracks, &pose, k, spc_cfg, loss.l_proj, loss.n_back)) {
                (Some(a), Some(b)) => Some(if b.loss.l_proj < a.loss.l_proj { b } else { a }),
                (a, b) => a.or(b),
            }
        } else {
            trial
        };
        let Some(trial) = trial else {
            // no step of meaningful length decreases the loss
            best.converged = true;
            return Ok(best);
        };
        let (l_new, g_new) = spc_loss_and_gradient(tracks, &trial.pose, k, spc_cfg)?;
        if !l_new.l_proj.is_finite() || !g_new.is_finite() {
            return Err(SolverError::NonFinite(iter));
        }
        let prev = loss.l_proj;
        pose = trial.pose;
        loss = l_new;
        grad = g_new;
        debug_assert_eq!(loss, trial.loss);
        if loss.l_proj < best.final_loss.l_proj || (loss.l_proj == best.final_loss.l_proj && iter == 1) {
            best = PoseEstimate { pose, final_loss: loss, iterations: iter, converged: false, start_index: 0 };
        }
        best.iterations = iter;

        if trial.step_norm < solver_cfg.step_tolerance {
            best.converged = true;
            return Ok(best);
        }
        let rel = (prev - loss.l_proj) / prev.abs().max(f64::MIN_POSITIVE);
        stalled = if rel < solver_cfg.loss_tolerance { stalled + 1 } else { 0 };
        if stalled >= STALL_ITERATIONS {
            best.converged = true;
            return Ok(best);
        }
    }
    Ok(best)
}

/// Uniformly distributed rotation (Shoemake's quaternion construction).
pub fn random_rotation<R: Rng>(rng: &mut R) -> Mat3 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = nalgebra::Quaternion::new(b * (TAU * u3).cos(), a * (TAU * u2).sin(), a * (TAU * u2).cos(), b * (TAU * u3).sin());
    nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

/// Random start: uniform rotation, camera center uniform in a ball of 1.5× the track-cloud radius.
pub fn random_start(tracks: &[Track], seed: u64, index: usize) -> PoseSE3 {
    let mut rng = stream_indexed(seed, "multi-start", index as u64);
    let n = tracks.len().max(1) as f64;
    let centroid = tracks.iter().fold(Vec3::zeros(), |a, t| a + t.point) / n;
    let radius = tracks.iter().map(|t| (t.point - centroid).norm()).fold(0.0, f64::max);
    let r = random_rotation(&mut rng);
    let center = loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm_squared() <= 1.0 {
            break centroid + v * (1.5 * radius);
        }
    };
    let r = crate::geometry::polar_orthonormalize(&r);
    PoseSE3::new(r, -(r * center)).expect("polar factor is a rotation")
}

/// Solve from the DLT estimate and `n_starts − 1` random poses; keep the lowest loss.
///
/// Start 0 is the linear initialization, replaced by a random pose when the
/// configuration is degenerate. Ties go to the lowest start index.
pub fn multi_start(
    tracks: &[Track],
    k: &Intrinsics,
    spc_cfg: &SpcConfig,
    solver_cfg: &SolverConfig,
) -> Result<PoseEstimate, SolverError> {
    solver_cfg.validate()?;
    let results: Vec<Result<PoseEstimate, SolverError>> = (0..solver_cfg.n_starts)
        .into_par_iter()
        .map(|i| {
            let init = if i == 0 {
                linear_init(tracks, k).unwrap_or_else(|_| random_start(tracks, solver_cfg.seed, 0))
            } else {
                random_start(tracks, solver_cfg.seed, i)
            };
            solve_wrist_pose(tracks, k, spc_cfg, solver_cfg, &init).map(|e| PoseEstimate { start_index: i, ..e })
        })
        .collect();
    let mut best: Option<PoseEstimate> = None;
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(e) => {
                if best.is_none_or(|b| e.final_loss.l_proj < b.final_loss.l_proj) {
                    best = Some(e);
                }
            }
            Err(e) => errors.push(e),
        }
    }
    best.ok_or(SolverError::AllStartsFailed(errors))
}
