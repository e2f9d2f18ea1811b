use rand::Rng;
use wrist_recon::geometry::{rodrigues, PoseSE3, Vec3};
use wrist_recon::metrics::pose_error;
use wrist_recon::oracle::{generate_correspondences, generate_scene, SceneParams};
use wrist_recon::rng::stream;
use wrist_recon::solver::{linear_init, multi_start, random_start, solve_wrist_pose, Direction, LineSearch, SolverConfig};
use wrist_recon::spc::{spc_loss, SpcConfig, Track};

fn frame(seed: u64, sigma: f64, n_tracks: usize) -> (Vec<Track>, PoseSE3, wrist_recon::geometry::Intrinsics, f64) {
    let p = SceneParams { n_points: 6000, trajectory_frames: 1, n_tracks, pixel_noise_sigma: sigma, seed, ..Default::default() };
    let s = generate_scene(&p).unwrap();
    let c = generate_correspondences(&s, 0, &p).unwrap();
    (c.tracks, c.ground_truth, s.wrist_intrinsics, s.diameter())
}

/// Running `k + 1` iterations extends the `k`-iteration run, so the sequence of
/// best losses over growing budgets traces the accepted iterates.
#[test]
fn accepted_losses_and_back_counts_never_increase() {
    for (seed, direction) in [(1, Direction::GaussNewton), (2, Direction::Steepest)] {
        let (tracks, gt, k, _) = frame(seed, 1.0, 400);
        let m = tracks.iter().fold(Vec3::zeros(), |a, t| a + t.point) / tracks.len() as f64;
        let r = rodrigues(&Vec3::new(0.3, -0.2, 0.4)) * gt.rotation();
        let init = PoseSE3::from_approx(r, -(r * (2.0 * m - gt.center()))).unwrap();
        let spc = SpcConfig::default();
        let (mut prev_loss, mut prev_back) = (f64::INFINITY, usize::MAX);
        for it in 1..40 {
            let cfg = SolverConfig { max_iterations: it, direction, ..Default::default() };
            let e = solve_wrist_pose(&tracks, &k, &spc, &cfg, &init).unwrap();
            assert!(e.final_loss.l_proj <= prev_loss, "{direction:?} it {it}: {} > {prev_loss}", e.final_loss.l_proj);
            assert!(e.final_loss.n_back <= prev_back, "{direction:?} it {it}: n_back rose");
            let rot = e.pose.rotation();
            assert!((rot.transpose() * rot - wrist_recon::geometry::Mat3::identity()).abs().max() < 1e-9);
            assert!((rot.determinant() - 1.0).abs() < 1e-9);
            prev_loss = e.final_loss.l_proj;
            prev_back = e.final_loss.n_back;
        }
        assert!(prev_loss < spc_loss(&tracks, &init, &k, &spc).unwrap().l_proj);
    }
}

#[test]
fn fixed_line_search_reports_best_iterate() {
    let (tracks, gt, k, _) = frame(3, 0.5, 300);
    let init = PoseSE3::from_approx(rodrigues(&Vec3::new(0.1, 0.0, 0.05)) * gt.rotation(), *gt.translation()).unwrap();
    let spc = SpcConfig::default();
    let cfg = SolverConfig { line_search: LineSearch::Fixed, direction: Direction::Steepest, initial_step: 0.05, max_iterations: 50, ..Default::default() };
    let e = solve_wrist_pose(&tracks, &k, &spc, &cfg, &init).unwrap();
    let l0 = spc_loss(&tracks, &init, &k, &spc).unwrap().l_proj;
    assert!(e.final_loss.l_proj <= l0);
    assert_eq!(spc_loss(&tracks, &e.pose, &k, &spc).unwrap(), e.final_loss);
}

#[test]
fn multi_start_is_deterministic_and_keeps_the_best_start() {
    let (tracks, _, k, _) = frame(4, 1.0, 300);
    let spc = SpcConfig::default();
    let cfg = SolverConfig { n_starts: 8, seed: 11, ..Default::default() };
    let a = multi_start(&tracks, &k, &spc, &cfg).unwrap();
    let b = multi_start(&tracks, &k, &spc, &cfg).unwrap();
    assert_eq!(a, b);
    let single = SolverConfig { n_starts: 1, ..cfg };
    let inits = std::iter::once(linear_init(&tracks, &k).unwrap()).chain((1..8).map(|i| random_start(&tracks, cfg.seed, i)));
    for (i, init) in inits.enumerate() {
        let e = solve_wrist_pose(&tracks, &k, &spc, &single, &init).unwrap();
        assert!(a.final_loss.l_proj <= e.final_loss.l_proj, "start {i} beat the selection");
        if i == a.start_index {
            assert_eq!(e.pose, a.pose);
        }
    }
}

#[test]
fn single_start_equals_solve_from_linear_init() {
    let (tracks, _, k, _) = frame(5, 0.0, 200);
    let spc = SpcConfig::default();
    let cfg = SolverConfig::default();
    let a = multi_start(&tracks, &k, &spc, &cfg).unwrap();
    let b = solve_wrist_pose(&tracks, &k, &spc, &cfg, &linear_init(&tracks, &k).unwrap()).unwrap();
    assert_eq!(a.pose, b.pose);
    assert_eq!(a.start_index, 0);
}

/// Monte-Carlo bound for the DLT under 1 px noise, 20 tracks, 100 seeds.
#[test]
fn linear_init_with_pixel_noise_stays_close() {
    let mut worst = (0.0f64, 0.0f64);
    for seed in 0..100 {
        let (tracks, gt, k, d) = frame(seed, 1.0, 20);
        let e = pose_error(&linear_init(&tracks, &k).unwrap(), &gt);
        worst = (worst.0.max(e.rotation_deg), worst.1.max(e.translation / d));
    }
    assert!(worst.0 < 5.0 && worst.1 < 0.05, "{worst:?}");
}

#[test]
fn recovery_from_random_perturbations_within_30_degrees() {
    let (tracks, gt, k, d) = frame(42, 0.0, 1000);
    let mut rng = stream(42, "test-perturb");
    for _ in 0..5 {
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
        let shift = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
        let init = PoseSE3::from_approx(rodrigues(&(axis * 30f64.to_radians())) * gt.rotation(), gt.translation() + shift * 0.5 * d).unwrap();
        let e = solve_wrist_pose(&tracks, &k, &SpcConfig::default(), &SolverConfig::default(), &init).unwrap();
        let err = pose_error(&e.pose, &gt);
        assert!(err.rotation_deg.to_radians() < 1e-3 && err.translation < 1e-3 && e.final_loss.l_proj < 1e-10);
        assert!(e.converged && e.iterations <= 500);
    }
}
