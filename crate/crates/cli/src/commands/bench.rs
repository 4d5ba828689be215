//! `nvf bench`: wall-clock and op-count comparison between vector-field
//! inference (distance + direction in one forward) and the scalar baseline
//! (one distance forward plus six finite-difference probes per query).

use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use nvf_core::error::{NvfError, Result};
use nvf_core::geom::{sample_surface, Vec3, PADDED_HALF};
use nvf_core::io::load_checkpoint;
use nvf_core::model::{
    infer_batch, udf_direction_batch, VectorFieldModel, DEFAULT_AMBIGUITY_THRESHOLD,
};

use crate::manifest::RunManifest;
use crate::util::load_mesh_spec;

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Trained vector-field checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Optional trained baseline checkpoint; otherwise a size-matched
    /// scalar-head model is initialized from the same architecture.
    #[arg(long)]
    pub baseline_checkpoint: Option<PathBuf>,

    /// Queries timed per side.
    #[arg(long, default_value_t = 200_000)]
    pub queries: usize,

    /// Cloud source mesh (path or fixture:<name>).
    #[arg(long, default_value = "fixture:sphere")]
    pub mesh: String,

    #[arg(long, default_value_t = 2048)]
    pub cloud_points: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Finite-difference probe step for baseline directions.
    #[arg(long, default_value_t = 0.01)]
    pub probe_step: f64,

    /// Queries per forward batch.
    #[arg(long, default_value_t = 8192)]
    pub chunk_size: usize,

    /// Output JSON report.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct SideReport {
    forwards: u64,
    backwards: u64,
    fd_probes: u64,
    seconds: f64,
    /// Sum of all produced distances; anchors the work against dead-code
    /// elimination and gives a cheap cross-run consistency signal.
    distance_checksum: f64,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    queries: usize,
    probe_step: f64,
    nvf: SideReport,
    baseline: SideReport,
    /// baseline forwards / nvf forwards; exactly 7 by construction.
    op_ratio: f64,
    /// baseline seconds / nvf seconds.
    wall_clock_ratio: f64,
}

pub fn run(args: BenchArgs) -> Result<()> {
    let file = File::open(&args.checkpoint)?;
    let model = load_checkpoint(&mut BufReader::new(file))?;
    if model.config.output_dim != 3 {
        return Err(NvfError::invalid("bench needs a vector-field checkpoint"));
    }

    let baseline = match &args.baseline_checkpoint {
        Some(path) => {
            let f = File::open(path)?;
            let m = load_checkpoint(&mut BufReader::new(f))?;
            if m.config.output_dim != 1 {
                return Err(NvfError::invalid("--baseline-checkpoint must be a scalar head"));
            }
            m
        }
        // Size-matched scalar variant: same architecture except the 1-wide
        // final layer. Timing does not depend on the weights.
        None => VectorFieldModel::init(
            model.config.clone().into_baseline(),
            model.init_seed,
        )?,
    };

    let (mesh, mesh_label, _) = load_mesh_spec(&args.mesh, false)?;
    let cloud = sample_surface(&mesh, args.cloud_points, args.seed)?;
    let fcloud = model.encode_cloud(&cloud)?;
    let fcloud_baseline = baseline.encode_cloud(&cloud)?;

    // Deterministic uniform queries in the padded cube.
    let queries: Vec<Vec3> = {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed ^ 0xbe7c);
        (0..args.queries)
            .map(|_| {
                let mut c = || rng.random::<f64>() * 2.0 * PADDED_HALF - PADDED_HALF;
                Vec3::new(c(), c(), c())
            })
            .collect()
    };
    let chunk = args.chunk_size.max(1);

    // Warm-up: one small chunk per side, excluded from timing.
    let warm = chunk.min(queries.len());
    let _ = infer_batch(&model, &fcloud, &queries[..warm])?;
    let _ = infer_batch(&baseline, &fcloud_baseline, &queries[..warm])?;

    // Vector field: distance + direction from single forwards.
    model.counters.reset();
    let t0 = Instant::now();
    let mut nvf_checksum = 0.0f64;
    for block in queries.chunks(chunk) {
        let pred = infer_batch(&model, &fcloud, block)?;
        for row in pred.outer_iter() {
            let (x, y, z) = (row[0] as f64, row[1] as f64, row[2] as f64);
            nvf_checksum += (x * x + y * y + z * z).sqrt();
        }
    }
    let nvf_seconds = t0.elapsed().as_secs_f64();
    let nvf_counts = model.counters.snapshot();

    // Baseline: distance forward plus finite-difference direction.
    baseline.counters.reset();
    let t1 = Instant::now();
    let mut base_checksum = 0.0f64;
    for block in queries.chunks(chunk) {
        let dist = infer_batch(&baseline, &fcloud_baseline, block)?;
        let dirs = udf_direction_batch(
            &baseline,
            &fcloud_baseline,
            block,
            args.probe_step,
            DEFAULT_AMBIGUITY_THRESHOLD,
        )?;
        for (row, dir) in dist.outer_iter().zip(&dirs) {
            base_checksum += row[0] as f64 + dir.gradient_norm as f64 * 1e-9;
        }
    }
    let base_seconds = t1.elapsed().as_secs_f64();
    let base_counts = baseline.counters.snapshot();

    let report = BenchReport {
        queries: args.queries,
        probe_step: args.probe_step,
        nvf: SideReport {
            forwards: nvf_counts.forwards,
            backwards: nvf_counts.backwards,
            fd_probes: nvf_counts.fd_probes,
            seconds: nvf_seconds,
            distance_checksum: nvf_checksum,
        },
        baseline: SideReport {
            forwards: base_counts.forwards,
            backwards: base_counts.backwards,
            fd_probes: base_counts.fd_probes,
            seconds: base_seconds,
            distance_checksum: base_checksum,
        },
        op_ratio: base_counts.forwards as f64 / nvf_counts.forwards.max(1) as f64,
        wall_clock_ratio: base_seconds / nvf_seconds.max(1e-12),
    };

    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&args.out, &json)?;

    let mut manifest = RunManifest::new(
        "bench",
        serde_json::json!({
            "checkpoint": args.checkpoint,
            "mesh": mesh_label,
            "queries": args.queries,
            "probe_step": args.probe_step,
            "chunk_size": args.chunk_size,
        }),
        args.seed,
    );
    manifest.hash_file("checkpoint", &args.checkpoint)?;
    manifest.output(&args.out);
    manifest.write_beside(&args.out)?;

    println!(
        "bench: {} queries; nvf {} forwards in {:.3}s; baseline {} forwards ({} probes) in {:.3}s; op ratio {:.2}, wall-clock ratio {:.2} -> {}",
        args.queries,
        report.nvf.forwards,
        report.nvf.seconds,
        report.baseline.forwards,
        report.baseline.fd_probes,
        report.baseline.seconds,
        report.op_ratio,
        report.wall_clock_ratio,
        args.out.display()
    );
    Ok(())
}
