//! Particle files.
//!
//! CSV: header `index,x,y,z,charge`, one particle per row.
//!
//! Binary (little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `H2PT` |
//! | 4     | `u32` format version |
//! | 8     | `u64` particle count `n` |
//! | 40·n  | per particle: `u64` index, `f64` x, y, z, charge |

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::Particle;
use crate::error::{Error, Result};
use crate::FORMAT_VERSION;

pub const PARTICLE_MAGIC: [u8; 4] = *b"H2PT";

#[derive(Serialize, Deserialize)]
struct Row {
    index: u64,
    x: f64,
    y: f64,
    z: f64,
    charge: f64,
}

pub fn write_csv<W: Write>(writer: W, particles: &[Particle]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in particles {
        w.serialize(Row {
            index: p.index,
            x: p.position[0],
            y: p.position[1],
            z: p.position[2],
            charge: p.charge,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<Particle>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        out.push(Particle { position: [row.x, row.y, row.z], index: row.index, charge: row.charge });
    }
    Ok(out)
}

pub fn write_binary<W: Write>(mut w: W, particles: &[Particle]) -> Result<()> {
    w.write_all(&PARTICLE_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u64::<LittleEndian>(particles.len() as u64)?;
    for p in particles {
        w.write_u64::<LittleEndian>(p.index)?;
        for c in p.position {
            w.write_f64::<LittleEndian>(c)?;
        }
        w.write_f64::<LittleEndian>(p.charge)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Vec<Particle>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != PARTICLE_MAGIC {
        return Err(Error::Format("not a particle file (bad magic)".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported particle file version {version}")));
    }
    let n = r.read_u64::<LittleEndian>()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let index = r.read_u64::<LittleEndian>()?;
        let mut position = [0.0; 3];
        for c in &mut position {
            *c = r.read_f64::<LittleEndian>()?;
        }
        let charge = r.read_f64::<LittleEndian>()?;
        out.push(Particle { position, index, charge });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate, DistributionKind, DistributionSpec};

    #[test]
    fn csv_round_trip_is_exact() {
        let ps = generate(&DistributionSpec::new(DistributionKind::Plummer, 200, 5)).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &ps).unwrap();
        assert!(buf.starts_with(b"index,x,y,z,charge\n"));
        assert_eq!(read_csv(&buf[..]).unwrap(), ps);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let ps = generate(&DistributionSpec::new(DistributionKind::SphereSurface, 100, 5)).unwrap();
        let mut buf = Vec::new();
        write_binary(&mut buf, &ps).unwrap();
        assert_eq!(buf.len(), 16 + 40 * 100);
        assert_eq!(read_binary(&buf[..]).unwrap(), ps);
    }

    #[test]
    fn binary_rejects_bad_magic() {
        assert!(matches!(read_binary(&b"XXXX\x01\0\0\0"[..]), Err(Error::Format(_))));
    }
}
