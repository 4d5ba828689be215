//! Shared helpers: mesh specs, list parsing.

use std::path::Path;

use nvf_core::error::{NvfError, Result};
use nvf_core::geom::{fixtures, normalize_to_unit_cube, TriangleMesh};
use nvf_core::io;

/// A mesh input: either `fixture:<name>` (generated analytically) or a path
/// to an OBJ/PLY file. Returns the mesh, a short label, and the bytes to
/// hash into the manifest.
pub fn load_mesh_spec(spec: &str, normalize: bool) -> Result<(TriangleMesh, String, Vec<u8>)> {
    let (mut mesh, label, bytes) = if let Some(name) = spec.strip_prefix("fixture:") {
        let mesh = fixtures::by_name(name).ok_or_else(|| {
            NvfError::invalid(format!(
                "unknown fixture '{name}' (choose from {:?})",
                fixtures::FIXTURE_NAMES
            ))
        })?;
        let mut obj = Vec::new();
        io::write_obj(&mesh, &mut obj)?;
        (mesh, name.to_string(), obj)
    } else {
        let path = Path::new(spec);
        let mesh = io::read_mesh(path)?;
        let bytes = std::fs::read(path)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| spec.to_string());
        (mesh, label, bytes)
    };
    if normalize {
        let (normalized, _) = normalize_to_unit_cube(&mesh)?;
        mesh = normalized;
    }
    Ok((mesh, label, bytes))
}
