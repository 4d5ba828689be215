//! Wavefront OBJ reading and writing: `v`/`f` records only, polygon faces
//! fan-triangulated, 1-based indices.

use std::io::{BufRead, Write};

use crate::error::{NvfError, Result};
use crate::geom::{TriangleMesh, Vec3};

pub fn read_obj(reader: impl BufRead) -> Result<TriangleMesh> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let mut coord = |what: &str| -> Result<f64> {
                    fields
                        .next()
                        .ok_or_else(|| {
                            NvfError::format(format!("line {}: missing {what}", lineno + 1))
                        })?
                        .parse::<f64>()
                        .map_err(|e| {
                            NvfError::format(format!("line {}: bad {what}: {e}", lineno + 1))
                        })
                };
                let (x, y, z) = (coord("x")?, coord("y")?, coord("z")?);
                vertices.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for field in fields {
                    // "i", "i/t", "i/t/n", "i//n" all start with the vertex
                    // index.
                    let first = field.split('/').next().unwrap_or("");
                    let v: i64 = first.parse().map_err(|e| {
                        NvfError::format(format!("line {}: bad face index: {e}", lineno + 1))
                    })?;
                    if v < 1 {
                        return Err(NvfError::format(format!(
                            "line {}: only positive 1-based indices are supported",
                            lineno + 1
                        )));
                    }
                    let v = (v - 1) as u32;
                    if v as usize >= vertices.len() {
                        return Err(NvfError::format(format!(
                            "line {}: face references vertex {} of {}",
                            lineno + 1,
                            v + 1,
                            vertices.len()
                        )));
                    }
                    idx.push(v);
                }
                if idx.len() < 3 {
                    return Err(NvfError::format(format!(
                        "line {}: face needs at least 3 vertices",
                        lineno + 1
                    )));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            // Normals, texcoords, groups, materials, comments: ignored.
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

/// Writes `v` and `f` records. Output is byte-identical for identical
/// meshes (shortest-round-trip float formatting).
pub fn write_obj(mesh: &TriangleMesh, writer: &mut impl Write) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(writer, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in &mesh.triangles {
        writeln!(writer, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::fixtures;
    use std::io::Cursor;

    #[test]
    fn round_trip_preserves_geometry() {
        let mesh = fixtures::torus(12, 6);
        let mut bytes = Vec::new();
        write_obj(&mesh, &mut bytes).unwrap();
        let back = read_obj(Cursor::new(&bytes)).unwrap();
        assert_eq!(back.vertices, mesh.vertices);
        assert_eq!(back.triangles, mesh.triangles);
    }

    #[test]
    fn quads_fan_triangulate() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let mesh = read_obj(Cursor::new(src)).unwrap();
        assert_eq!(mesh.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn slash_forms_take_the_vertex_index() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/5/2 2//3 3/7\n";
        let mesh = read_obj(Cursor::new(src)).unwrap();
        assert_eq!(mesh.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn out_of_range_face_errors() {
        let src = "v 0 0 0\nf 1 2 3\n";
        assert!(read_obj(Cursor::new(src)).is_err());
    }

    #[test]
    fn write_is_deterministic() {
        let mesh = fixtures::sphere(8, 4);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_obj(&mesh, &mut a).unwrap();
        write_obj(&mesh, &mut b).unwrap();
        assert_eq!(a, b);
    }
}
