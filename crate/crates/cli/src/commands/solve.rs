use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use wrist_recon::io::{load_correspondences, load_point_map, save_trajectory, write_key_values};
use wrist_recon::metrics::reprojection_rmse;
use wrist_recon::solver::multi_start;
use wrist_recon::spc::{lift_correspondences, AnchorPointMap};

use super::{list_files, mean, num, required, wrist_intrinsics, write_text};
use crate::error::CliError;
use crate::Context;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Correspondence file or directory of per-frame `.csv` files.
    #[arg(long)]
    correspondences: Option<PathBuf>,
    #[arg(long)]
    cameras: Option<PathBuf>,
    /// Anchor point maps in view-index order (repeatable).
    #[arg(long = "point-map")]
    point_maps: Vec<PathBuf>,
}

#[derive(Serialize)]
struct FrameReport {
    file: String,
    correspondences: usize,
    tracks: usize,
    dropped: usize,
    l_proj: f64,
    l_u: f64,
    l_depth: f64,
    n_front: usize,
    n_back: usize,
    n_skipped: usize,
    iterations: usize,
    converged: bool,
    start_index: usize,
    reprojection_rmse_px: Option<f64>,
    pose: [f64; 12],
}

pub fn run(ctx: &Context, args: &Args) -> Result<(), CliError> {
    let inputs = &ctx.manifest.inputs;
    let corr = args.correspondences.clone().or_else(|| inputs.correspondences.clone());
    let corr = required(&corr, "correspondences")?;
    let cams = args.cameras.clone().or_else(|| inputs.cameras.clone());
    let k = wrist_intrinsics(required(&cams, "cameras")?)?;
    let map_paths = if args.point_maps.is_empty() { &inputs.point_maps } else { &args.point_maps };
    if map_paths.is_empty() {
        return Err(CliError::input("no anchor point maps given (--point-map or manifest [inputs].point_maps)"));
    }
    let maps: Vec<AnchorPointMap> = map_paths.iter().map(|p| load_point_map(p)).collect::<Result<_, _>>()?;
    let files = if corr.is_dir() { list_files(corr, ".csv", &[])? } else { vec![corr.clone()] };
    if files.is_empty() {
        return Err(CliError::input(format!("{}: no .csv correspondence files", corr.display())));
    }

    let spc = ctx.manifest.spc;
    let solver = ctx.manifest.solver;
    let results: Vec<Result<(FrameReport, wrist_recon::geometry::PoseSE3), CliError>> = files
        .par_iter()
        .map(|f| {
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let corrs = load_correspondences(f)?;
            let lifted = lift_correspondences(&corrs, &maps).map_err(|e| CliError::from(e).context(&name))?;
            let est = multi_start(&lifted.tracks, &k, &spc, &solver).map_err(|e| CliError::from(e).context(&name))?;
            let l = est.final_loss;
            let report = FrameReport {
                file: name,
                correspondences: corrs.len(),
                tracks: lifted.tracks.len(),
                dropped: lifted.dropped,
                l_proj: l.l_proj,
                l_u: l.l_u,
                l_depth: l.l_depth,
                n_front: l.n_front,
                n_back: l.n_back,
                n_skipped: l.n_skipped,
                iterations: est.iterations,
                converged: est.converged,
                start_index: est.start_index,
                reprojection_rmse_px: reprojection_rmse(&lifted.tracks, &est.pose, &k).ok(),
                pose: est.pose.to_array(),
            };
            Ok((report, est.pose))
        })
        .collect();
    let mut reports = Vec::with_capacity(results.len());
    let mut poses = Vec::with_capacity(results.len());
    for r in results {
        let (rep, pose) = r?;
        reports.push(rep);
        poses.push(pose);
    }

    save_trajectory(&ctx.out.join("trajectory.txt"), &poses)?;
    let json = serde_json::to_string_pretty(&serde_json::json!({ "frames": reports })).expect("report serializes");
    write_text(&ctx.out.join("solve_report.json"), &(json + "\n"))?;
    let losses: Vec<f64> = reports.iter().map(|r| r.l_proj).collect();
    let rmse: Vec<f64> = reports.iter().filter_map(|r| r.reprojection_rmse_px).collect();
    let summary = vec![
        ("frames".to_string(), reports.len().to_string()),
        ("converged".to_string(), reports.iter().filter(|r| r.converged).count().to_string()),
        ("l_proj_mean".to_string(), mean(&losses).map_or("unavailable".into(), num)),
        ("l_proj_max".to_string(), num(losses.iter().copied().fold(0.0, f64::max))),
        ("reprojection_rmse_mean".to_string(), mean(&rmse).map_or("unavailable".into(), num)),
    ];
    write_key_values(&ctx.out.join("solve_report.txt"), &summary)?;
    Ok(())
}
