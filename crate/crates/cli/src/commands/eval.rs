//! `nvf eval`: metric bundle for reconstruction/ground-truth mesh pairs.
//! One CSV row per pair plus an aggregate row; fixed column order.

use std::fs;
use std::path::PathBuf;

use clap::Args;

use nvf_core::error::{NvfError, Result};
use nvf_core::io::read_mesh;
use nvf_core::metrics::{evaluate_reconstruction, ReconReport};

use crate::manifest::RunManifest;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Reconstructed mesh paths (repeatable, pairs with --gt in order).
    #[arg(long = "recon", required = true)]
    pub recon: Vec<PathBuf>,

    /// Ground-truth mesh paths (repeatable).
    #[arg(long = "gt", required = true)]
    pub gt: Vec<PathBuf>,

    /// Sampling seed (recon uses seed, ground truth seed ^ 1).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Surface samples for Chamfer distance and F-score.
    #[arg(long, default_value_t = 100_000)]
    pub cd_samples: usize,

    /// Surface samples for the exact Earth Mover distance (max 4096).
    #[arg(long, default_value_t = 2048)]
    pub emd_samples: usize,

    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: EvalArgs) -> Result<()> {
    if args.recon.len() != args.gt.len() {
        return Err(NvfError::invalid(format!(
            "{} reconstructions but {} ground truths",
            args.recon.len(),
            args.gt.len()
        )));
    }

    let mut csv = String::from(ReconReport::CSV_HEADER);
    csv.push('\n');
    let mut reports = Vec::new();
    for (recon_path, gt_path) in args.recon.iter().zip(&args.gt) {
        let recon = read_mesh(recon_path)?;
        let gt = read_mesh(gt_path)?;
        let report =
            evaluate_reconstruction(&recon, &gt, args.cd_samples, args.emd_samples, args.seed)?;
        let label = recon_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| recon_path.display().to_string());
        csv.push_str(&report.csv_row(&label));
        csv.push('\n');
        reports.push(report);
    }

    let n = reports.len() as f64;
    let aggregate = ReconReport {
        cd: reports.iter().map(|r| r.cd).sum::<f64>() / n,
        emd: reports.iter().map(|r| r.emd).sum::<f64>() / n,
        f1: [
            reports.iter().map(|r| r.f1[0]).sum::<f64>() / n,
            reports.iter().map(|r| r.f1[1]).sum::<f64>() / n,
        ],
        cd_samples: args.cd_samples,
        emd_samples: args.emd_samples,
        seed: args.seed,
    };
    csv.push_str(&aggregate.csv_row("aggregate"));
    csv.push('\n');

    fs::write(&args.out, &csv)?;
    print!("{csv}");

    let mut manifest = RunManifest::new(
        "eval",
        serde_json::json!({
            "recon": args.recon,
            "gt": args.gt,
            "cd_samples": args.cd_samples,
            "emd_samples": args.emd_samples,
        }),
        args.seed,
    );
    for path in args.recon.iter().chain(&args.gt) {
        manifest.hash_file(&path.display().to_string(), path)?;
    }
    manifest.output(&args.out);
    manifest.write_beside(&args.out)?;
    Ok(())
}
