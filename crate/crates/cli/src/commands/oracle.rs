//! `nvf oracle`: sample a cloud and queries from a mesh, label the queries
//! with exact displacements, and write the binary field dump.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Args;

use nvf_core::error::Result;
use nvf_core::geom::{nearest_point_on_mesh, sample_queries, sample_surface, Bvh};
use nvf_core::io::write_field_dump;

use crate::manifest::RunManifest;
use crate::util::load_mesh_spec;

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Mesh input: a .obj/.ply path or fixture:<sphere|torus|disk|planes>.
    #[arg(long)]
    pub mesh: String,

    /// Number of labeled queries to emit.
    #[arg(long, default_value_t = 10_000)]
    pub queries: usize,

    /// Output field dump (magic NVF1).
    #[arg(long)]
    pub out: PathBuf,

    /// RNG seed; the cloud uses `seed`, queries use `seed ^ 1`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Surface points sampled for the query-generating cloud.
    #[arg(long, default_value_t = 2048)]
    pub cloud_points: usize,

    /// Near-surface Gaussian noise scales (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "0.003,0.01,0.03")]
    pub noise_sigmas: Vec<f64>,

    /// Fraction of queries drawn uniformly from the padded cube.
    #[arg(long, default_value_t = 0.05)]
    pub uniform_fraction: f64,

    /// Rescale the input mesh into the unit cube first.
    #[arg(long, default_value_t = false)]
    pub normalize: bool,
}

pub fn run(args: OracleArgs) -> Result<()> {
    let (mesh, label, mesh_bytes) = load_mesh_spec(&args.mesh, args.normalize)?;
    let bvh = Bvh::build(&mesh)?;
    let cloud = sample_surface(&mesh, args.cloud_points, args.seed)?;
    let queries = sample_queries(
        &cloud,
        args.queries,
        &args.noise_sigmas,
        args.uniform_fraction,
        args.seed ^ 1,
    )?;

    let records: Vec<_> = queries
        .iter()
        .map(|&q| {
            let s = nearest_point_on_mesh(&mesh, &bvh, q);
            (q, s.displacement)
        })
        .collect();

    let file = File::create(&args.out)?;
    write_field_dump(&records, &mut BufWriter::new(file))?;

    let mut manifest = RunManifest::new(
        "oracle",
        serde_json::json!({
            "mesh": args.mesh,
            "queries": args.queries,
            "cloud_points": args.cloud_points,
            "noise_sigmas": args.noise_sigmas,
            "uniform_fraction": args.uniform_fraction,
            "normalize": args.normalize,
        }),
        args.seed,
    );
    manifest.hash_bytes(&format!("mesh:{label}"), &mesh_bytes);
    manifest.output(&args.out);
    manifest.write_beside(&args.out)?;

    println!(
        "oracle: labeled {} queries against {} ({} triangles) -> {}",
        records.len(),
        label,
        mesh.triangles.len(),
        args.out.display()
    );
    Ok(())
}
