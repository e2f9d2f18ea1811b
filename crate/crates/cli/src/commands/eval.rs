use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use wrist_recon::geometry::PoseSE3;
use wrist_recon::io::{load_correspondences, load_point_cloud, load_point_map, load_trajectory, read_png, write_key_values};
use wrist_recon::oracle::cloud_diameter;
use wrist_recon::metrics::{pose_error, psnr, reprojection_rmse, ssim, summarize_psnr};
use wrist_recon::spc::{lift_correspondences, AnchorPointMap};

use super::{list_files, mean, median, opt_num, wrist_intrinsics, write_text};
use crate::error::CliError;
use crate::Context;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    pred_trajectory: Option<PathBuf>,
    /// Defaults to the manifest's `gt_trajectory`.
    #[arg(long)]
    gt_trajectory: Option<PathBuf>,
    /// Directory of `frame_*.png` renderings to score.
    #[arg(long)]
    pred_images: Option<PathBuf>,
    /// Defaults to the manifest's `gt_images`.
    #[arg(long)]
    gt_images: Option<PathBuf>,
}

#[derive(Serialize, Default)]
struct FrameMetrics {
    index: usize,
    rotation_deg: Option<f64>,
    translation: Option<f64>,
    /// `None` for identical frames (infinite PSNR); see `psnr_identical`.
    psnr: Option<f64>,
    psnr_identical: bool,
    ssim: Option<f64>,
    reprojection_rmse: Option<f64>,
}

#[derive(Serialize)]
struct Summary {
    frames: usize,
    rotation_deg: Option<f64>,
    rotation_deg_median: Option<f64>,
    translation: Option<f64>,
    translation_median: Option<f64>,
    scene_diameter: Option<f64>,
    translation_median_rel_diameter: Option<f64>,
    psnr_mean: Option<f64>,
    psnr_identical_frames: usize,
    ssim_mean: Option<f64>,
    reprojection_rmse: Option<f64>,
    fvd: &'static str,
    lpips: &'static str,
}

fn rendered_frames(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    list_files(dir, ".png", &[".mask.png"])
}

fn reprojection(ctx: &Context, poses: &[PoseSE3]) -> Result<Option<Vec<f64>>, CliError> {
    let inputs = &ctx.manifest.inputs;
    let (Some(corr), Some(cams)) = (&inputs.correspondences, &inputs.cameras) else {
        return Ok(None);
    };
    if inputs.point_maps.is_empty() || !corr.is_dir() {
        return Ok(None);
    }
    let k = wrist_intrinsics(cams)?;
    let maps: Vec<AnchorPointMap> = inputs.point_maps.iter().map(|p| load_point_map(p)).collect::<Result<_, _>>()?;
    let files = list_files(corr, ".csv", &[])?;
    if files.len() != poses.len() {
        return Err(CliError::input(format!("{} correspondence files for {} poses", files.len(), poses.len())));
    }
    files
        .par_iter()
        .zip(poses)
        .map(|(f, pose)| {
            let lifted = lift_correspondences(&load_correspondences(f)?, &maps)?;
            Ok(reprojection_rmse(&lifted.tracks, pose, &k)?)
        })
        .collect::<Result<Vec<f64>, CliError>>()
        .map(Some)
}

pub fn run(ctx: &Context, args: &Args) -> Result<(), CliError> {
    let inputs = &ctx.manifest.inputs;
    let gt_traj = args.gt_trajectory.clone().or_else(|| inputs.gt_trajectory.clone());
    let gt_images = args.gt_images.clone().or_else(|| inputs.gt_images.clone());
    let mut frames: Vec<FrameMetrics> = Vec::new();
    let ensure = |n: usize, frames: &mut Vec<FrameMetrics>| {
        while frames.len() < n {
            frames.push(FrameMetrics { index: frames.len(), ..Default::default() });
        }
    };

    let mut rmse_all = None;
    if let (Some(pred), Some(gt)) = (&args.pred_trajectory, &gt_traj) {
        let pred = load_trajectory(pred)?;
        let gt = load_trajectory(gt)?;
        if pred.len() != gt.len() {
            return Err(CliError::input(format!("{} predicted poses vs {} ground-truth poses", pred.len(), gt.len())));
        }
        ensure(pred.len(), &mut frames);
        for (t, (a, b)) in pred.iter().zip(&gt).enumerate() {
            let e = pose_error(a, b);
            frames[t].rotation_deg = Some(e.rotation_deg);
            frames[t].translation = Some(e.translation);
        }
        rmse_all = reprojection(ctx, &pred)?;
        if let Some(r) = &rmse_all {
            for (t, v) in r.iter().enumerate() {
                frames[t].reprojection_rmse = Some(*v);
            }
        }
    }

    let mut psnr_values = Vec::new();
    if let (Some(pred), Some(gt)) = (&args.pred_images, &gt_images) {
        let pa = rendered_frames(pred)?;
        let ga = rendered_frames(gt)?;
        let names = |v: &[PathBuf]| v.iter().map(|p| p.file_name().unwrap().to_owned()).collect::<Vec<_>>();
        if names(&pa) != names(&ga) {
            return Err(CliError::input(format!(
                "image sets differ: {} has {} frames, {} has {}",
                pred.display(),
                pa.len(),
                gt.display(),
                ga.len()
            )));
        }
        let scores: Vec<(f64, f64)> = pa
            .par_iter()
            .zip(&ga)
            .map(|(a, b)| {
                let (a, b) = (read_png(a)?, read_png(b)?);
                Ok((psnr(&a.view(), &b.view())?, ssim(&a.view(), &b.view())?))
            })
            .collect::<Result<_, CliError>>()?;
        ensure(scores.len(), &mut frames);
        for (t, (p, s)) in scores.iter().enumerate() {
            frames[t].psnr = p.is_finite().then_some(*p);
            frames[t].psnr_identical = !p.is_finite();
            frames[t].ssim = Some(*s);
            psnr_values.push(*p);
        }
    }
    if frames.is_empty() {
        return Err(CliError::input("nothing to evaluate: give --pred-trajectory and/or --pred-images"));
    }

    let diameter = match &inputs.cloud {
        Some(c) => {
            let cloud = load_point_cloud(c)?;
            (!cloud.is_empty()).then(|| cloud_diameter(&cloud))
        }
        None => None,
    };
    let rot: Vec<f64> = frames.iter().filter_map(|f| f.rotation_deg).collect();
    let tr: Vec<f64> = frames.iter().filter_map(|f| f.translation).collect();
    let ss: Vec<f64> = frames.iter().filter_map(|f| f.ssim).collect();
    let ps = summarize_psnr(&psnr_values);
    let tmed = median(&tr);
    let summary = Summary {
        frames: frames.len(),
        rotation_deg: mean(&rot),
        rotation_deg_median: median(&rot),
        translation: mean(&tr),
        translation_median: tmed,
        scene_diameter: diameter,
        translation_median_rel_diameter: tmed.zip(diameter).map(|(t, d)| t / d),
        psnr_mean: ps.mean_finite,
        psnr_identical_frames: ps.n_identical,
        ssim_mean: mean(&ss),
        reprojection_rmse: rmse_all.as_deref().and_then(mean),
        fvd: "unavailable",
        lpips: "unavailable",
    };

    let kv = vec![
        ("frames".to_string(), summary.frames.to_string()),
        ("rotation_deg".to_string(), opt_num(summary.rotation_deg)),
        ("rotation_deg_median".to_string(), opt_num(summary.rotation_deg_median)),
        ("translation".to_string(), opt_num(summary.translation)),
        ("translation_median".to_string(), opt_num(summary.translation_median)),
        ("scene_diameter".to_string(), opt_num(summary.scene_diameter)),
        ("translation_median_rel_diameter".to_string(), opt_num(summary.translation_median_rel_diameter)),
        ("psnr_mean".to_string(), opt_num(summary.psnr_mean)),
        ("psnr_identical_frames".to_string(), summary.psnr_identical_frames.to_string()),
        ("ssim_mean".to_string(), opt_num(summary.ssim_mean)),
        ("reprojection_rmse".to_string(), opt_num(summary.reprojection_rmse)),
        ("fvd".to_string(), summary.fvd.to_string()),
        ("lpips".to_string(), summary.lpips.to_string()),
    ];
    write_key_values(&ctx.out.join("metrics.txt"), &kv)?;
    let per_frame: Vec<String> = frames
        .iter()
        .map(|f| {
            let o = |v: Option<f64>| opt_num(v);
            format!(
                "{} rotation_deg={} translation={} psnr={} ssim={} reprojection_rmse={}",
                f.index,
                o(f.rotation_deg),
                o(f.translation),
                if f.psnr_identical { "identical".to_string() } else { o(f.psnr) },
                o(f.ssim),
                o(f.reprojection_rmse)
            )
        })
        .collect();
    write_text(&ctx.out.join("metrics_frames.txt"), &(per_frame.join("\n") + "\n"))?;
    let json = serde_json::json!({ "summary": summary, "frames": frames });
    write_text(&ctx.out.join("metrics.json"), &(serde_json::to_string_pretty(&json).expect("serializes") + "\n"))?;
    Ok(())
}
