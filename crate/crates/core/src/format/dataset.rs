//! Binarized dataset: id sequences plus lengths, written once by
//! preprocessing and consumed by training.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::model_file::atomic_write;
use crate::error::{FormatError, FormatResult};
use crate::textpipe::PairIds;

pub const MAGIC: &[u8; 4] = b"MNDS";
pub const VERSION: u32 = 1;

const MAX_LEN: u32 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub pairs: Vec<PairIds>,
}

fn write_ids(w: &mut impl Write, ids: &[u32]) -> FormatResult<()> {
    w.write_u32::<LittleEndian>(ids.len() as u32)?;
    for &id in ids {
        w.write_u32::<LittleEndian>(id)?;
    }
    Ok(())
}

fn read_ids(r: &mut impl Read) -> FormatResult<Vec<u32>> {
    let len = r.read_u32::<LittleEndian>()?;
    if len > MAX_LEN {
        return Err(FormatError::Corrupt { what: format!("sequence of {len} ids") });
    }
    let mut ids = Vec::with_capacity(len as usize);
    for _ in 0..len {
        ids.push(r.read_u32::<LittleEndian>()?);
    }
    Ok(ids)
}

pub fn write_dataset_to(w: &mut impl Write, ds: &Dataset) -> FormatResult<()> {
    let n_src_f = ds.pairs.first().map_or(0, |p| p.src_factors.len());
    let n_tgt_f = ds.pairs.first().map_or(0, |p| p.tgt_factors.len());
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(n_src_f as u32)?;
    w.write_u32::<LittleEndian>(n_tgt_f as u32)?;
    w.write_u32::<LittleEndian>(ds.pairs.len() as u32)?;
    for p in &ds.pairs {
        write_ids(w, &p.src)?;
        write_ids(w, &p.tgt)?;
        for f in &p.src_factors {
            write_ids(w, f)?;
        }
        for f in &p.tgt_factors {
            write_ids(w, f)?;
        }
    }
    Ok(())
}

pub fn read_dataset_from(r: &mut impl Read) -> FormatResult<Dataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic { expected: "MNDS" });
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(FormatError::Version { found: version, supported: VERSION });
    }
    let n_src_f = r.read_u32::<LittleEndian>()? as usize;
    let n_tgt_f = r.read_u32::<LittleEndian>()? as usize;
    if n_src_f > 16 || n_tgt_f > 16 {
        return Err(FormatError::Corrupt { what: "factor count".into() });
    }
    let n_pairs = r.read_u32::<LittleEndian>()?;
    let mut pairs = Vec::with_capacity(n_pairs.min(MAX_LEN) as usize);
    for _ in 0..n_pairs {
        let src = read_ids(r)?;
        let tgt = read_ids(r)?;
        let mut src_factors = Vec::with_capacity(n_src_f);
        for _ in 0..n_src_f {
            let f = read_ids(r)?;
            if f.len() != src.len() {
                return Err(FormatError::Corrupt { what: "factor/source length mismatch".into() });
            }
            src_factors.push(f);
        }
        let mut tgt_factors = Vec::with_capacity(n_tgt_f);
        for _ in 0..n_tgt_f {
            let f = read_ids(r)?;
            if f.len() != tgt.len() {
                return Err(FormatError::Corrupt { what: "factor/target length mismatch".into() });
            }
            tgt_factors.push(f);
        }
        pairs.push(PairIds { src, tgt, src_factors, tgt_factors });
    }
    Ok(Dataset { pairs })
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> FormatResult<()> {
    atomic_write(path, |w: &mut BufWriter<File>| write_dataset_to(w, ds))
}

pub fn load_dataset(path: &Path) -> FormatResult<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    read_dataset_from(&mut r)
}
