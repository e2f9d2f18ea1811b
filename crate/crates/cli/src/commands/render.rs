use std::path::PathBuf;

use wrist_recon::io::{load_point_cloud, load_trajectory, write_condition_outputs, write_key_values};
use wrist_recon::render::{render_sequence, Clouds};

use super::{frame_stem, required, wrist_intrinsics};
use crate::error::CliError;
use crate::Context;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Poses to render; defaults to the manifest's `trajectory`.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    cloud: Option<PathBuf>,
    #[arg(long)]
    cameras: Option<PathBuf>,
}

pub fn run(ctx: &Context, args: &Args) -> Result<(), CliError> {
    let inputs = &ctx.manifest.inputs;
    let traj = args.trajectory.clone().or_else(|| inputs.trajectory.clone());
    let cloud = args.cloud.clone().or_else(|| inputs.cloud.clone());
    let cams = args.cameras.clone().or_else(|| inputs.cameras.clone());
    let k = wrist_intrinsics(required(&cams, "cameras")?)?;
    let poses = load_trajectory(required(&traj, "trajectory")?)?;
    let cloud = load_point_cloud(required(&cloud, "cloud")?)?;

    let maps = render_sequence(Clouds::Static(&cloud), &poses, &k, &ctx.manifest.splat)?;
    let mut report = vec![("frames".to_string(), maps.len().to_string())];
    for (t, m) in maps.iter().enumerate() {
        let stem = frame_stem(t);
        write_condition_outputs(m, &ctx.out.join(&stem))?;
        report.push((format!("{stem}.coverage"), m.coverage().to_string()));
    }
    write_key_values(&ctx.out.join("render_report.txt"), &report)?;
    Ok(())
}
