use std::path::PathBuf;

use ndarray::{Array2, Array3};
use rayon::prelude::*;
use wrist_recon::conditioning::{assemble_condition_tokens, stub_encode, EmbeddingTable, TableDims, MAX_CONDITION_TOKENS};
use wrist_recon::io::{load_embedding_table, load_tensors, read_png, save_tensors, write_key_values, Tensor, TensorFile};

use super::list_files;
use crate::error::CliError;
use crate::Context;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Tensor container with `features` (N×T×d_c) and optional `text` (L×d_text).
    #[arg(long, conflicts_with = "views")]
    features: Option<PathBuf>,
    /// Directory of `frame_*.png` images for one view (repeat per view).
    #[arg(long = "view")]
    views: Vec<PathBuf>,
    /// Embedding tables; seeded constants are generated when absent.
    #[arg(long)]
    tables: Option<PathBuf>,
    /// Shared conditioning dimension for generated tables.
    #[arg(long, default_value_t = 64)]
    d: usize,
    /// Stub-encoder output dimension when encoding images.
    #[arg(long, default_value_t = 64)]
    d_c: usize,
}

fn features_from_views(args: &Args) -> Result<Array3<f64>, CliError> {
    let mut per_view = Vec::new();
    for dir in &args.views {
        let files = list_files(dir, ".png", &[".mask.png"])?;
        let enc: Vec<_> = files
            .par_iter()
            .map(|f| Ok(stub_encode(&read_png(f)?.view(), args.d_c)?))
            .collect::<Result<_, CliError>>()?;
        per_view.push(enc);
    }
    let t = per_view.first().map_or(0, Vec::len);
    if per_view.iter().any(|v| v.len() != t) {
        return Err(CliError::input("views have different frame counts"));
    }
    Ok(Array3::from_shape_fn((per_view.len(), t, args.d_c), |(i, j, k)| per_view[i][j][k]))
}

pub fn run(ctx: &Context, args: &Args) -> Result<(), CliError> {
    let (features, text) = match &args.features {
        Some(p) => {
            let f = load_tensors(p)?;
            let text = if f.get("text").is_some() { f.f64_2d(p, "text")? } else { Array2::zeros((0, 0)) };
            (f.f64_3d(p, "features")?, text)
        }
        None if !args.views.is_empty() => (features_from_views(args)?, Array2::zeros((0, 0))),
        None => return Err(CliError::input("give --features or at least one --view")),
    };
    let (n, t, d_c) = features.dim();
    let (l, d_text) = text.dim();
    let tables = match &args.tables {
        Some(p) => load_embedding_table(p)?,
        None => EmbeddingTable::seeded(
            TableDims { frames: t, views: n, text_len: l, d: args.d, d_c, d_text: d_text.max(1) },
            ctx.manifest.seed,
        ),
    };
    let bundle = assemble_condition_tokens(&features.view(), &text.view(), &tables)?;

    let mut out = TensorFile::new();
    out.push("clip_tokens", Tensor::F64(bundle.clip_tokens.clone().into_dyn()));
    out.push("text_tokens", Tensor::F64(bundle.text_tokens.clone().into_dyn()));
    save_tensors(&ctx.out.join("tokens.wwtc"), &out)?;
    let report = vec![
        ("views".to_string(), n.to_string()),
        ("frames".to_string(), t.to_string()),
        ("text_tokens".to_string(), l.to_string()),
        ("d".to_string(), bundle.d.to_string()),
        ("token_count".to_string(), bundle.len().to_string()),
        ("token_budget".to_string(), MAX_CONDITION_TOKENS.to_string()),
    ];
    write_key_values(&ctx.out.join("tokens_report.txt"), &report)?;
    Ok(())
}
