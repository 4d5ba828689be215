//! Binary field dumps.
//!
//! Ground-truth displacement dump ("NVF1"): magic, u64 LE record count,
//! then per record 6 float32 LE: query xyz, displacement xyz.
//!
//! Lattice dump ("NVFL"): magic, 3x u32 LE dims, 6x float32 LE bounds
//! (min, max), then dims-product x 3 float32 LE displacement vectors. Lets
//! tests feed the extractor analytic fields from disk.

use std::io::{Read, Write};

use crate::error::{NvfError, Result};
use crate::extract::LatticeField;
use crate::geom::Vec3;

pub const FIELD_MAGIC: &[u8; 4] = b"NVF1";
pub const LATTICE_MAGIC: &[u8; 4] = b"NVFL";

/// One labeled query: position and displacement toward the surface.
pub type FieldRecord = (Vec3, Vec3);

pub fn write_field_dump(records: &[FieldRecord], writer: &mut impl Write) -> Result<()> {
    writer.write_all(FIELD_MAGIC)?;
    writer.write_all(&(records.len() as u64).to_le_bytes())?;
    for (q, d) in records {
        for v in [q.x, q.y, q.z, d.x, d.y, d.z] {
            writer.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_field_dump(reader: &mut impl Read) -> Result<Vec<FieldRecord>> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(NvfError::format("bad field dump magic (expected NVF1)"));
    }
    let mut count_bytes = [0u8; 8];
    reader.read_exact(&mut count_bytes)?;
    let count = u64::from_le_bytes(count_bytes) as usize;

    let mut records = Vec::with_capacity(count);
    let mut buf = [0u8; 24];
    for _ in 0..count {
        reader.read_exact(&mut buf)?;
        let f = |i: usize| {
            f32::from_le_bytes([buf[4 * i], buf[4 * i + 1], buf[4 * i + 2], buf[4 * i + 3]])
                as f64
        };
        records.push((Vec3::new(f(0), f(1), f(2)), Vec3::new(f(3), f(4), f(5))));
    }
    Ok(records)
}

pub fn write_lattice_dump(field: &LatticeField, writer: &mut impl Write) -> Result<()> {
    writer.write_all(LATTICE_MAGIC)?;
    for d in field.dims {
        writer.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in [
        field.min.x, field.min.y, field.min.z, field.max.x, field.max.y, field.max.z,
    ] {
        writer.write_all(&(v as f32).to_le_bytes())?;
    }
    for v in &field.vectors {
        for c in v {
            writer.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_lattice_dump(reader: &mut impl Read) -> Result<LatticeField> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != LATTICE_MAGIC {
        return Err(NvfError::format("bad lattice dump magic (expected NVFL)"));
    }
    let mut u32buf = [0u8; 4];
    let mut dims = [0usize; 3];
    for d in &mut dims {
        reader.read_exact(&mut u32buf)?;
        *d = u32::from_le_bytes(u32buf) as usize;
    }
    let mut bounds = [0f32; 6];
    for b in &mut bounds {
        reader.read_exact(&mut u32buf)?;
        *b = f32::from_le_bytes(u32buf);
    }
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| NvfError::format("lattice dims overflow"))?;
    let mut vectors = Vec::with_capacity(n);
    let mut vbuf = [0u8; 12];
    for _ in 0..n {
        reader.read_exact(&mut vbuf)?;
        vectors.push([
            f32::from_le_bytes([vbuf[0], vbuf[1], vbuf[2], vbuf[3]]),
            f32::from_le_bytes([vbuf[4], vbuf[5], vbuf[6], vbuf[7]]),
            f32::from_le_bytes([vbuf[8], vbuf[9], vbuf[10], vbuf[11]]),
        ]);
    }
    Ok(LatticeField {
        dims,
        min: Vec3::new(bounds[0] as f64, bounds[1] as f64, bounds[2] as f64),
        max: Vec3::new(bounds[3] as f64, bounds[4] as f64, bounds[5] as f64),
        vectors,
    })
}
