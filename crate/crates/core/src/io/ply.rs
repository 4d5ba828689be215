//! Binary little-endian PLY reading: float32 vertex x/y/z plus a face
//! vertex_indices list. Extra vertex properties are skipped by stride.

use std::io::{BufRead, Read};

use crate::error::{NvfError, Result};
use crate::geom::{TriangleMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
enum ScalarType {
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "uchar" | "uint8" => ScalarType::U8,
            "char" | "int8" => ScalarType::I8,
            "ushort" | "uint16" => ScalarType::U16,
            "short" | "int16" => ScalarType::I16,
            "uint" | "uint32" => ScalarType::U32,
            "int" | "int32" => ScalarType::I32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            other => return Err(NvfError::format(format!("unknown PLY type {other}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::U8 | ScalarType::I8 => 1,
            ScalarType::U16 | ScalarType::I16 => 2,
            ScalarType::U32 | ScalarType::I32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { ty: ScalarType, name: String },
    List { count_ty: ScalarType, item_ty: ScalarType, name: String },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

fn read_exact_line(reader: &mut impl BufRead) -> Result<String> {
    let mut line = String::new();
    let n = reader.read_line(&mut line)?;
    if n == 0 {
        return Err(NvfError::format("unexpected end of PLY header"));
    }
    Ok(line.trim_end().to_string())
}

pub fn read_ply(mut reader: impl BufRead) -> Result<TriangleMesh> {
    let magic = read_exact_line(&mut reader)?;
    if magic.trim() != "ply" {
        return Err(NvfError::format("not a PLY file (missing 'ply' magic)"));
    }
    let format = read_exact_line(&mut reader)?;
    if !format.starts_with("format binary_little_endian") {
        return Err(NvfError::format(
            "only binary little-endian PLY is supported",
        ));
    }

    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = read_exact_line(&mut reader)?;
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let name = fields
                    .next()
                    .ok_or_else(|| NvfError::format("element without a name"))?
                    .to_string();
                let count: usize = fields
                    .next()
                    .ok_or_else(|| NvfError::format("element without a count"))?
                    .parse()
                    .map_err(|e| NvfError::format(format!("bad element count: {e}")))?;
                elements.push(Element { name, count, properties: Vec::new() });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| NvfError::format("property before any element"))?;
                let kind = fields
                    .next()
                    .ok_or_else(|| NvfError::format("property without a type"))?;
                if kind == "list" {
                    let count_ty = ScalarType::parse(
                        fields.next().ok_or_else(|| NvfError::format("list without count type"))?,
                    )?;
                    let item_ty = ScalarType::parse(
                        fields.next().ok_or_else(|| NvfError::format("list without item type"))?,
                    )?;
                    let name = fields
                        .next()
                        .ok_or_else(|| NvfError::format("list without a name"))?
                        .to_string();
                    element.properties.push(Property::List { count_ty, item_ty, name });
                } else {
                    let ty = ScalarType::parse(kind)?;
                    let name = fields
                        .next()
                        .ok_or_else(|| NvfError::format("property without a name"))?
                        .to_string();
                    element.properties.push(Property::Scalar { ty, name });
                }
            }
            Some("end_header") => break,
            other => {
                return Err(NvfError::format(format!(
                    "unexpected PLY header line: {other:?}"
                )))
            }
        }
    }

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for element in &elements {
        match element.name.as_str() {
            "vertex" => {
                // Locate x, y, z offsets within the fixed-size record.
                let mut offset = 0usize;
                let mut xyz: [Option<(usize, ScalarType)>; 3] = [None, None, None];
                for prop in &element.properties {
                    match prop {
                        Property::Scalar { ty, name } => {
                            let slot = match name.as_str() {
                                "x" => Some(0),
                                "y" => Some(1),
                                "z" => Some(2),
                                _ => None,
                            };
                            if let Some(s) = slot {
                                if *ty != ScalarType::F32 {
                                    return Err(NvfError::format(
                                        "vertex coordinates must be float32",
                                    ));
                                }
                                xyz[s] = Some((offset, *ty));
                            }
                            offset += ty.size();
                        }
                        Property::List { .. } => {
                            return Err(NvfError::format(
                                "list properties on vertices are not supported",
                            ))
                        }
                    }
                }
                let stride = offset;
                let (Some((ox, _)), Some((oy, _)), Some((oz, _))) = (xyz[0], xyz[1], xyz[2])
                else {
                    return Err(NvfError::format("vertex element lacks x/y/z"));
                };
                let mut record = vec![0u8; stride];
                for _ in 0..element.count {
                    reader.read_exact(&mut record)?;
                    let f = |o: usize| {
                        f32::from_le_bytes([record[o], record[o + 1], record[o + 2], record[o + 3]])
                            as f64
                    };
                    vertices.push(Vec3::new(f(ox), f(oy), f(oz)));
                }
            }
            "face" => {
                for _ in 0..element.count {
                    for prop in &element.properties {
                        match prop {
                            Property::List { count_ty, item_ty, name } => {
                                let n = read_scalar_usize(&mut reader, *count_ty)?;
                                if name == "vertex_indices" || name == "vertex_index" {
                                    let mut idx = Vec::with_capacity(n);
                                    for _ in 0..n {
                                        idx.push(read_scalar_usize(&mut reader, *item_ty)? as u32);
                                    }
                                    if idx.len() < 3 {
                                        return Err(NvfError::format(
                                            "face with fewer than 3 vertices",
                                        ));
                                    }
                                    for k in 1..idx.len() - 1 {
                                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                                    }
                                } else {
                                    skip_bytes(&mut reader, n * item_ty.size())?;
                                }
                            }
                            Property::Scalar { ty, .. } => {
                                skip_bytes(&mut reader, ty.size())?;
                            }
                        }
                    }
                }
            }
            _ => {
                // Unknown element: skippable only when record size is fixed.
                let mut stride = 0usize;
                for prop in &element.properties {
                    match prop {
                        Property::Scalar { ty, .. } => stride += ty.size(),
                        Property::List { .. } => {
                            return Err(NvfError::format(format!(
                                "cannot skip element '{}' containing lists",
                                element.name
                            )))
                        }
                    }
                }
                skip_bytes(&mut reader, stride * element.count)?;
            }
        }
    }

    TriangleMesh::new(vertices, triangles)
}

fn read_scalar_usize(reader: &mut impl Read, ty: ScalarType) -> Result<usize> {
    let mut buf = [0u8; 8];
    reader.read_exact(&mut buf[..ty.size()])?;
    let v = match ty {
        ScalarType::U8 => buf[0] as i64,
        ScalarType::I8 => buf[0] as i8 as i64,
        ScalarType::U16 => u16::from_le_bytes([buf[0], buf[1]]) as i64,
        ScalarType::I16 => i16::from_le_bytes([buf[0], buf[1]]) as i64,
        ScalarType::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as i64,
        ScalarType::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as i64,
        ScalarType::F32 | ScalarType::F64 => {
            return Err(NvfError::format("float used as an index"))
        }
    };
    if v < 0 {
        return Err(NvfError::format("negative index in PLY face"));
    }
    Ok(v as usize)
}

fn skip_bytes(reader: &mut impl Read, n: usize) -> Result<()> {
    let mut remaining = n;
    let mut buf = [0u8; 256];
    while remaining > 0 {
        let take = remaining.min(buf.len());
        reader.read_exact(&mut buf[..take])?;
        remaining -= take;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn build_ply(extra_vertex_prop: bool) -> Vec<u8> {
        let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
        header.push_str("comment produced by a test\n");
        header.push_str("element vertex 4\n");
        header.push_str("property float x\nproperty float y\nproperty float z\n");
        if extra_vertex_prop {
            header.push_str("property float confidence\n");
        }
        header.push_str("element face 2\n");
        header.push_str("property list uchar int vertex_indices\n");
        header.push_str("end_header\n");

        let mut bytes = header.into_bytes();
        let verts: [[f32; 3]; 4] =
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
        for v in verts {
            for c in v {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            if extra_vertex_prop {
                bytes.extend_from_slice(&0.5f32.to_le_bytes());
            }
        }
        // Triangle + quad (the quad fans into two triangles).
        bytes.push(3);
        for i in [0i32, 1, 2] {
            bytes.extend_from_slice(&i.to_le_bytes());
        }
        bytes.push(4);
        for i in [0i32, 1, 2, 3] {
            bytes.extend_from_slice(&i.to_le_bytes());
        }
        bytes
    }

    #[test]
    fn reads_vertices_and_fan_triangulates() {
        let mesh = read_ply(Cursor::new(build_ply(false))).unwrap();
        assert_eq!(mesh.vertices.len(), 4);
        assert_eq!(
            mesh.triangles,
            vec![[0, 1, 2], [0, 1, 2], [0, 2, 3]]
        );
        assert_eq!(mesh.vertices[2], Vec3::new(1.0, 1.0, 0.0));
    }

    #[test]
    fn skips_extra_vertex_properties() {
        let mesh = read_ply(Cursor::new(build_ply(true))).unwrap();
        assert_eq!(mesh.vertices.len(), 4);
        assert_eq!(mesh.vertices[1], Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_ascii_format() {
        let src = b"ply\nformat ascii 1.0\nend_header\n".to_vec();
        assert!(read_ply(Cursor::new(src)).is_err());
    }

    #[test]
    fn rejects_bad_magic() {
        let src = b"plz\n".to_vec();
        assert!(read_ply(Cursor::new(src)).is_err());
    }

    #[test]
    fn rejects_double_coordinates() {
        let src = b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nend_header\n".to_vec();
        assert!(read_ply(Cursor::new(src)).is_err());
    }
}
