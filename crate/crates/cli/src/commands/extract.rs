//! `nvf extract`: trained checkpoint + input cloud -> mesh, with the
//! zero-differentiation guarantee checked structurally.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use clap::Args;

use nvf_core::error::{NvfError, Result};
use nvf_core::extract::ExtractParams;
use nvf_core::geom::{sample_surface, PointCloud};
use nvf_core::io::{load_checkpoint, read_mesh, write_mesh_obj};

use crate::manifest::RunManifest;
use crate::util::load_mesh_spec;

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Trained model checkpoint (magic NVFM).
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Point cloud file: vertices of an OBJ/PLY are the cloud.
    #[arg(long, conflicts_with = "mesh")]
    pub cloud: Option<PathBuf>,

    /// Mesh spec to sample a cloud from (path or fixture:<name>).
    #[arg(long)]
    pub mesh: Option<String>,

    /// Points sampled when --mesh is used.
    #[arg(long, default_value_t = 2048)]
    pub cloud_points: usize,

    /// Cloud sampling seed (matches training's per-mesh derivation at
    /// dataset index 0).
    #[arg(long, default_value_t = 0)]
    pub cloud_seed: u64,

    /// Lattice resolution per axis.
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,

    /// Lattice points per forward batch.
    #[arg(long, default_value_t = 16384)]
    pub chunk_size: usize,

    /// Output OBJ path.
    #[arg(long)]
    pub out: PathBuf,

    /// Optional raw lattice dump (magic NVFL) for debugging.
    #[arg(long)]
    pub dump_lattice: Option<PathBuf>,

    /// Rescale the --mesh input into the unit cube first.
    #[arg(long, default_value_t = false)]
    pub normalize: bool,
}

pub fn run(args: ExtractArgs) -> Result<()> {
    let file = File::open(&args.checkpoint)?;
    let model = load_checkpoint(&mut BufReader::new(file))?;

    let (cloud, cloud_label) = match (&args.cloud, &args.mesh) {
        (Some(path), None) => {
            let mesh = read_mesh(path)?;
            (PointCloud::from_points(mesh.vertices)?, path.display().to_string())
        }
        (None, Some(spec)) => {
            let (mesh, label, _) = load_mesh_spec(spec, args.normalize)?;
            (sample_surface(&mesh, args.cloud_points, args.cloud_seed)?, label)
        }
        _ => {
            return Err(NvfError::invalid(
                "exactly one of --cloud or --mesh must be given",
            ))
        }
    };

    let fcloud = model.encode_cloud(&cloud)?;
    let params = ExtractParams {
        resolution: args.resolution,
        chunk_size: args.chunk_size,
        ..ExtractParams::default()
    };

    let before = model.counters.snapshot();
    let field = nvf_core::extract::evaluate_lattice(&model, &fcloud, &params)?;
    let signs = nvf_core::extract::assign_pseudo_signs(&field, &params);
    let mesh = nvf_core::extract::marching_cubes(&field, &signs, &params);
    let ops = model.counters.snapshot().since(&before);
    if ops.backwards != 0 || ops.fd_probes != 0 {
        return Err(NvfError::numerical(format!(
            "extraction differentiated the field: {} backwards, {} probes",
            ops.backwards, ops.fd_probes
        )));
    }

    write_mesh_obj(&mesh, &args.out)?;
    if let Some(path) = &args.dump_lattice {
        let f = File::create(path)?;
        nvf_core::io::write_lattice_dump(&field, &mut BufWriter::new(f))?;
    }

    let mut manifest = RunManifest::new(
        "extract",
        serde_json::json!({
            "checkpoint": args.checkpoint,
            "cloud": cloud_label,
            "cloud_points": args.cloud_points,
            "cloud_seed": args.cloud_seed,
            "resolution": args.resolution,
            "chunk_size": args.chunk_size,
            "forwards": ops.forwards,
            "sign_conflicts": signs.conflicts,
        }),
        args.cloud_seed,
    );
    manifest.hash_file("checkpoint", &args.checkpoint)?;
    manifest.output(&args.out);
    if let Some(p) = &args.dump_lattice {
        manifest.output(p);
    }
    manifest.write_beside(&args.out)?;

    println!(
        "extract: res {} -> {} vertices, {} triangles, {} boundary edges, {} forwards, 0 gradient ops -> {}",
        args.resolution,
        mesh.vertices.len(),
        mesh.triangles.len(),
        mesh.boundary_edge_count(),
        ops.forwards,
        args.out.display()
    );
    Ok(())
}
