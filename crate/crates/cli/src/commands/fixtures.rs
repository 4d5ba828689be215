//! `nvf fixtures`: write the analytic test meshes (sphere r=0.3, torus
//! R=0.3/r=0.1, open disk r=0.35, two parallel planes gap 0.2) as OBJ.

use std::fs;
use std::path::PathBuf;

use clap::Args;

use nvf_core::error::Result;
use nvf_core::geom::fixtures;
use nvf_core::io::write_mesh_obj;

use crate::manifest::RunManifest;

#[derive(Args, Debug)]
pub struct FixturesArgs {
    /// Output directory for the OBJ files.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: FixturesArgs) -> Result<()> {
    fs::create_dir_all(&args.out)?;
    let mut manifest = RunManifest::new("fixtures", serde_json::json!({}), 0);
    let mut first_path = None;
    for name in fixtures::FIXTURE_NAMES {
        let mesh = fixtures::by_name(name).expect("known fixture");
        let path = args.out.join(format!("{name}.obj"));
        write_mesh_obj(&mesh, &path)?;
        manifest.output(&path);
        if first_path.is_none() {
            first_path = Some(path.clone());
        }
        println!(
            "fixtures: {name}: {} vertices, {} triangles, {} boundary edges -> {}",
            mesh.vertices.len(),
            mesh.triangles.len(),
            mesh.boundary_edge_count(),
            path.display()
        );
    }
    manifest.write_beside(&first_path.expect("at least one fixture"))?;
    Ok(())
}
