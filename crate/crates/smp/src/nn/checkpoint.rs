//! Checkpoint file format.
//!
//! Layout: magic `SMPL`, format version (u32 LE), manifest blob, raw
//! little-endian f64 parameter array, then the EMA shadow array (length 0
//! when absent). Composite artifacts (diffusion prior, policy trainer)
//! append tagged extension sections after the core block.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, SmpError};
use crate::nn::{Manifest, ParamSet};
use crate::wire;

pub const MAGIC: &[u8; 4] = b"SMPL";
pub const VERSION: u32 = 1;

/// A parsed checkpoint: core parameters plus tagged extension sections.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ParamSet,
    pub ema: Option<Vec<f64>>,
    pub sections: Vec<([u8; 4], Vec<u8>)>,
}

impl Checkpoint {
    pub fn section(&self, tag: &[u8; 4]) -> Option<&[u8]> {
        self.sections
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(_, b)| b.as_slice())
    }

    pub fn require_section(&self, tag: &[u8; 4]) -> Result<&[u8]> {
        self.section(tag).ok_or_else(|| {
            SmpError::Format(format!(
                "checkpoint is missing section {:?}",
                String::from_utf8_lossy(tag)
            ))
        })
    }
}

pub(crate) fn write_body(w: &mut impl Write, set: &ParamSet, ema: Option<&[f64]>) -> Result<()> {
    let manifest_bytes = set.manifest.encode();
    wire::write_u32(w, manifest_bytes.len() as u32)?;
    w.write_all(&manifest_bytes)?;
    wire::write_f64_slice(w, &set.values)?;
    match ema {
        Some(shadow) => {
            assert_eq!(shadow.len(), set.values.len(), "EMA length mismatch");
            wire::write_f64_slice(w, shadow)?;
        }
        None => wire::write_f64_slice(w, &[])?,
    }
    Ok(())
}

pub(crate) fn read_body(r: &mut impl Read) -> Result<(ParamSet, Option<Vec<f64>>)> {
    let manifest_len = wire::read_u32(r)? as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    r.read_exact(&mut manifest_bytes)?;
    let manifest = Manifest::decode(&manifest_bytes)?;
    let values = wire::read_f64_slice(r)?;
    if values.len() != manifest.param_count() {
        return Err(SmpError::Format(format!(
            "parameter array has {} values, manifest expects {}",
            values.len(),
            manifest.param_count()
        )));
    }
    let ema = wire::read_f64_slice(r)?;
    let ema = if ema.is_empty() {
        None
    } else if ema.len() == values.len() {
        Some(ema)
    } else {
        return Err(SmpError::Format("EMA array length mismatch".into()));
    };
    Ok((ParamSet { manifest, values }, ema))
}

pub fn write_checkpoint(
    path: &Path,
    set: &ParamSet,
    ema: Option<&[f64]>,
    sections: &[([u8; 4], Vec<u8>)],
) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    wire::write_u32(&mut w, VERSION)?;
    write_body(&mut w, set, ema)?;
    wire::write_u32(&mut w, sections.len() as u32)?;
    for (tag, bytes) in sections {
        w.write_all(tag)?;
        wire::write_bytes(&mut w, bytes)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SmpError::Format(format!(
            "bad magic {:?} in {}",
            String::from_utf8_lossy(&magic),
            path.display()
        )));
    }
    let version = wire::read_u32(&mut r)?;
    if version != VERSION {
        return Err(SmpError::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let (params, ema) = read_body(&mut r)?;
    let n_sections = wire::read_u32(&mut r)? as usize;
    let mut sections = Vec::with_capacity(n_sections);
    for _ in 0..n_sections {
        let mut tag = [0u8; 4];
        r.read_exact(&mut tag)?;
        let bytes = wire::read_bytes(&mut r)?;
        sections.push((tag, bytes));
    }
    Ok(Checkpoint {
        params,
        ema,
        sections,
    })
}
