use std::path::PathBuf;

use rayon::prelude::*;
use wrist_recon::io::{
    save_correspondences, save_point_cloud, save_point_map, save_trajectory, write_condition_outputs, write_key_values,
    CameraConfig, CameraEntry, CameraRole, ManifestInputs, PlyEncoding, RunManifest,
};
use wrist_recon::oracle::{generate_correspondences_with_views, generate_scene, TrajectoryKind};
use wrist_recon::render::{render_sequence, Clouds};

use super::{frame_stem, num, write_text};
use crate::error::CliError;
use crate::Context;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    /// Correspondences per frame.
    #[arg(long)]
    tracks: Option<usize>,
    #[arg(long)]
    anchors: Option<usize>,
    /// Wrist pixel noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    outliers: Option<f64>,
    #[arg(long, value_parser = ["arc", "spline", "static"])]
    trajectory: Option<String>,
    /// Write the cloud as ASCII PLY instead of binary.
    #[arg(long)]
    ascii: bool,
}

pub fn run(ctx: &Context, args: &Args) -> Result<(), CliError> {
    let mut params = ctx.manifest.scene.clone();
    params.n_points = args.points.unwrap_or(params.n_points);
    params.trajectory_frames = args.frames.unwrap_or(params.trajectory_frames);
    params.n_tracks = args.tracks.unwrap_or(params.n_tracks);
    params.n_anchors = args.anchors.unwrap_or(params.n_anchors);
    params.pixel_noise_sigma = args.sigma.unwrap_or(params.pixel_noise_sigma);
    params.outlier_rate = args.outliers.unwrap_or(params.outlier_rate);
    if let Some(t) = &args.trajectory {
        params.trajectory_kind = match t.as_str() {
            "arc" => TrajectoryKind::Arc,
            "spline" => TrajectoryKind::Spline,
            _ => TrajectoryKind::Static,
        };
    }
    params.validate()?;
    let scene = generate_scene(&params)?;
    let out = &ctx.out;

    let encoding = if args.ascii { PlyEncoding::Ascii } else { PlyEncoding::BinaryLittleEndian };
    save_point_cloud(&out.join("cloud.ply"), &scene.cloud, encoding)?;

    let mut cams = CameraConfig::default();
    for pose in &scene.anchor_poses {
        cams.cameras.push(CameraEntry::new(CameraRole::Anchor, &scene.anchor_intrinsics, Some(pose)));
    }
    cams.cameras.push(CameraEntry::new(CameraRole::Wrist, &scene.wrist_intrinsics, None));
    write_text(&out.join("cameras.toml"), &cams.to_toml())?;

    let views = scene.anchor_views();
    let mut map_paths = Vec::new();
    for (a, v) in views.iter().enumerate() {
        let name = format!("anchor_{a}.pointmap.wwtc");
        save_point_map(&out.join(&name), &v.map)?;
        map_paths.push(PathBuf::from(name));
    }

    let frames: Vec<_> = (0..scene.wrist_trajectory.len())
        .into_par_iter()
        .map(|t| generate_correspondences_with_views(&scene, &views, t, &params))
        .collect::<Result<_, _>>()?;
    for (t, f) in frames.iter().enumerate() {
        save_correspondences(&out.join("correspondences").join(format!("{}.csv", frame_stem(t))), &f.correspondences)?;
    }
    save_trajectory(&out.join("gt_trajectory.txt"), &scene.wrist_trajectory)?;

    let maps = render_sequence(Clouds::Static(&scene.cloud), &scene.wrist_trajectory, &scene.wrist_intrinsics, &ctx.manifest.splat)?;
    for (t, m) in maps.iter().enumerate() {
        write_condition_outputs(m, &out.join("gt_render").join(frame_stem(t)))?;
    }

    let manifest = RunManifest {
        seed: ctx.manifest.seed,
        output: None,
        inputs: ManifestInputs {
            cloud: Some("cloud.ply".into()),
            cameras: Some("cameras.toml".into()),
            point_maps: map_paths,
            correspondences: Some("correspondences".into()),
            trajectory: Some("gt_trajectory.txt".into()),
            gt_trajectory: Some("gt_trajectory.txt".into()),
            gt_images: Some("gt_render".into()),
        },
        scene: params.clone(),
        spc: ctx.manifest.spc,
        solver: ctx.manifest.solver,
        splat: ctx.manifest.splat,
    };
    write_text(&out.join("manifest.toml"), &manifest.to_toml())?;

    let tracks: Vec<usize> = frames.iter().map(|f| f.tracks.len()).collect();
    let report = vec![
        ("points".to_string(), scene.cloud.len().to_string()),
        ("anchors".to_string(), scene.anchor_poses.len().to_string()),
        ("frames".to_string(), scene.wrist_trajectory.len().to_string()),
        ("tracks_min".to_string(), tracks.iter().min().copied().unwrap_or(0).to_string()),
        ("tracks_max".to_string(), tracks.iter().max().copied().unwrap_or(0).to_string()),
        ("scene_diameter".to_string(), num(scene.diameter())),
        ("pixel_noise_sigma".to_string(), num(params.pixel_noise_sigma)),
        ("seed".to_string(), params.seed.to_string()),
    ];
    write_key_values(&out.join("synth_report.txt"), &report)?;
    Ok(())
}
