//! Flat binary shot files: little-endian header (magic "SHOT", version u32, shot count
//! u64, photon count u16, flags u16, basis u8) followed by one record per shot holding
//! the photon fields as interleaved (re, im) f32 pairs and, when outcomes are present,
//! one outcome byte.

use super::{QubitBasis, ShotBatch};
use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex32;
use std::io::{Read, Write};

pub const SHOT_MAGIC: &[u8; 4] = b"SHOT";
pub const SHOT_VERSION: u32 = 1;

const FLAG_DARK: u16 = 1;
const FLAG_OUTCOMES: u16 = 2;

pub fn write_shots<W: Write>(w: &mut W, batch: &ShotBatch) -> Result<()> {
    let shots = batch.shots();
    let n = batch.n_photons;
    if batch.fields.len() != shots * n || (batch.basis.is_some() && batch.outcomes.len() != shots) {
        return Err(Error::Format(
            "batch arrays disagree with the shot count".into(),
        ));
    }
    let photons = u16::try_from(n)
        .map_err(|_| Error::Format(format!("{n} photons exceed the u16 header field")))?;
    let mut flags = 0;
    if batch.dark {
        flags |= FLAG_DARK;
    }
    if batch.basis.is_some() {
        flags |= FLAG_OUTCOMES;
    }
    w.write_all(SHOT_MAGIC)?;
    w.write_u32::<LittleEndian>(SHOT_VERSION)?;
    w.write_u64::<LittleEndian>(shots as u64)?;
    w.write_u16::<LittleEndian>(photons)?;
    w.write_u16::<LittleEndian>(flags)?;
    w.write_u8(batch.basis.map_or(0, QubitBasis::code))?;
    for s in 0..shots {
        for z in &batch.fields[s * n..(s + 1) * n] {
            w.write_f32::<LittleEndian>(z.re)?;
            w.write_f32::<LittleEndian>(z.im)?;
        }
        if batch.basis.is_some() {
            w.write_u8(u8::from(batch.outcomes[s]))?;
        }
    }
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file ends before the declared shot count".into())
    } else {
        e.into()
    }
}

pub fn read_shots<R: Read>(r: &mut R) -> Result<ShotBatch> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != SHOT_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != SHOT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let shots = r.read_u64::<LittleEndian>().map_err(truncated)? as usize;
    let n = r.read_u16::<LittleEndian>().map_err(truncated)? as usize;
    let flags = r.read_u16::<LittleEndian>().map_err(truncated)?;
    if flags & !(FLAG_DARK | FLAG_OUTCOMES) != 0 {
        return Err(Error::Format(format!("unknown flags {flags:#x}")));
    }
    let code = r.read_u8().map_err(truncated)?;
    let basis = if flags & FLAG_OUTCOMES != 0 {
        Some(
            QubitBasis::from_code(code)
                .ok_or_else(|| Error::Format(format!("unknown basis code {code}")))?,
        )
    } else {
        None
    };
    let mut fields = Vec::with_capacity(shots.saturating_mul(n).min(1 << 28));
    let mut outcomes = Vec::new();
    for _ in 0..shots {
        for _ in 0..n {
            let re = r.read_f32::<LittleEndian>().map_err(truncated)?;
            let im = r.read_f32::<LittleEndian>().map_err(truncated)?;
            fields.push(Complex32::new(re, im));
        }
        if basis.is_some() {
            outcomes.push(match r.read_u8().map_err(truncated)? {
                0 => false,
                1 => true,
                b => return Err(Error::Format(format!("outcome byte {b}"))),
            });
        }
    }
    Ok(ShotBatch {
        n_photons: n,
        dark: flags & FLAG_DARK != 0,
        basis,
        fields,
        outcomes,
    })
}
