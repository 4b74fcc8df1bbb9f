//! Binary checkpoint container for named f32 parameter tensors plus a small
//! string key/value config section.
//!
//! Layout, little-endian throughout:
//!   magic   8 bytes  "RLSRCKPT"
//!   version u16      (currently 1)
//!   kv_count u16, then per pair: key_len u16, key, value_len u16, value
//!   param_count u32, then per record:
//!     name_len u16, name, rank u8, extents u32 * rank, data f32 * product
//!
//! Round-trips are bit-exact on the parameter payload.

use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RLSRCKPT";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

fn write_str<W: Write>(w: &mut W, s: &str, what: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::Checkpoint(format!("{what} '{s}' exceeds {} bytes", u16::MAX)))?;
    w.write_u16::<LittleEndian>(len)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R, what: &str) -> Result<String> {
    let len = r.read_u16::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint(format!("{what} is not valid UTF-8")))
}

pub fn write_checkpoint<W: Write>(
    w: &mut W,
    config: &BTreeMap<String, String>,
    entries: &[CheckpointEntry],
) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u16::<LittleEndian>(CHECKPOINT_VERSION)?;
    let kv_count = u16::try_from(config.len())
        .map_err(|_| Error::Checkpoint("too many config entries".into()))?;
    w.write_u16::<LittleEndian>(kv_count)?;
    for (k, v) in config {
        write_str(w, k, "config key")?;
        write_str(w, v, "config value")?;
    }
    let param_count = u32::try_from(entries.len())
        .map_err(|_| Error::Checkpoint("too many parameter records".into()))?;
    w.write_u32::<LittleEndian>(param_count)?;
    for e in entries {
        write_str(w, &e.name, "parameter name")?;
        let rank = u8::try_from(e.shape.len())
            .map_err(|_| Error::Checkpoint(format!("'{}' rank exceeds 255", e.name)))?;
        w.write_u8(rank)?;
        let mut count = 1usize;
        for &ext in &e.shape {
            let ext32 = u32::try_from(ext)
                .map_err(|_| Error::Checkpoint(format!("'{}' extent too large", e.name)))?;
            w.write_u32::<LittleEndian>(ext32)?;
            count = count
                .checked_mul(ext)
                .ok_or_else(|| Error::Checkpoint(format!("'{}' element count overflow", e.name)))?;
        }
        if count != e.data.len() {
            return Err(Error::Checkpoint(format!(
                "'{}' shape {:?} implies {count} elements, data holds {}",
                e.name,
                e.shape,
                e.data.len()
            )));
        }
        for &v in &e.data {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(
    r: &mut R,
) -> Result<(BTreeMap<String, String>, Vec<CheckpointEntry>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let kv_count = r.read_u16::<LittleEndian>()?;
    let mut config = BTreeMap::new();
    for _ in 0..kv_count {
        let k = read_str(r, "config key")?;
        let v = read_str(r, "config value")?;
        config.insert(k, v);
    }
    let param_count = r.read_u32::<LittleEndian>()?;
    let mut entries = Vec::with_capacity(param_count as usize);
    for _ in 0..param_count {
        let name = read_str(r, "parameter name")?;
        let rank = r.read_u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut count = 1usize;
        for _ in 0..rank {
            let ext = r.read_u32::<LittleEndian>()? as usize;
            count = count
                .checked_mul(ext)
                .ok_or_else(|| Error::Checkpoint(format!("'{name}' element count overflow")))?;
            shape.push(ext);
        }
        let mut data = vec![0f32; count];
        r.read_f32_into::<LittleEndian>(&mut data)?;
        entries.push(CheckpointEntry { name, shape, data });
    }
    Ok((config, entries))
}

pub fn save_checkpoint<P: AsRef<Path>>(
    path: P,
    config: &BTreeMap<String, String>,
    entries: &[CheckpointEntry],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, config, entries)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<P: AsRef<Path>>(
    path: P,
) -> Result<(BTreeMap<String, String>, Vec<CheckpointEntry>)> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r)
}
