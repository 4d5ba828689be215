//! File formats: OBJ and binary PLY meshes, binary field and lattice
//! dumps, and model checkpoints.

mod checkpoint;
mod dump;
mod obj;
mod ply;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CODEBOOK_MAGIC};
pub use dump::{
    read_field_dump, read_lattice_dump, write_field_dump, write_lattice_dump, FieldRecord,
    FIELD_MAGIC, LATTICE_MAGIC,
};
pub use obj::{read_obj, write_obj};
pub use ply::read_ply;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{NvfError, Result};
use crate::geom::TriangleMesh;

/// Reads a mesh by extension: `.obj` or `.ply`.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let file = File::open(path)
        .map_err(|e| NvfError::format(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    match path.extension().and_then(|e| e.to_str()) {
        Some("obj") => read_obj(reader),
        Some("ply") => read_ply(reader),
        other => Err(NvfError::format(format!(
            "unsupported mesh extension {other:?} (use .obj or .ply)"
        ))),
    }
}

/// Writes a mesh as OBJ.
pub fn write_mesh_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    write_obj(mesh, &mut writer)
}
