//! Checkpoint file: magic, version, the resolved run config, the objective
//! table when one was used, then the full trainer state.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::env::{Env, Landscape, ObjectiveSource, ObjectiveTable};
use crate::error::{Error, Result};
use crate::gfn::Trainer;

use super::config::RunConfig;

const MAGIC: &[u8; 8] = b"MOGFNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(s.len() as u64)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let bad = |e: std::io::Error| Error::Checkpoint(format!("header: {e}"));
    let n = r.read_u64::<LittleEndian>().map_err(bad)?;
    if n > 1 << 32 {
        return Err(Error::Checkpoint(format!("implausible string length {n}")));
    }
    let mut buf = vec![0u8; n as usize];
    r.read_exact(&mut buf).map_err(bad)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("string section is not UTF-8".into()))
}

pub fn write_checkpoint<W: Write>(w: &mut W, cfg: &RunConfig, trainer: &Trainer) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    write_str(w, &cfg.to_text())?;
    match &trainer.env().landscape().source {
        ObjectiveSource::Tabulated(t) => {
            w.write_u8(1)?;
            write_str(w, &t.to_text(trainer.env().grid()))?;
        }
        ObjectiveSource::LinearCoords => w.write_u8(0)?,
    }
    trainer.write_state(w)
}

/// Reads a checkpoint. Objectives come from the embedded table, never from
/// the table path recorded in the config.
pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(RunConfig, Trainer)> {
    let bad = |e: std::io::Error| Error::Checkpoint(format!("header: {e}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(bad)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(bad)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let text = read_str(r)?;
    let cfg = RunConfig::parse(&text)?;
    let has_table = r.read_u8().map_err(bad)? != 0;
    let base = Landscape::preset(cfg.preset);
    let landscape = if has_table {
        let t = read_str(r)?;
        base.with_source(ObjectiveSource::Tabulated(ObjectiveTable::parse(&cfg.grid, &t)?))
    } else {
        base
    };
    let env = Env::new(cfg.grid, landscape)?;
    let trainer = Trainer::read_state(env, cfg.train.clone(), r)?;
    Ok((cfg, trainer))
}

pub fn save(path: &Path, cfg: &RunConfig, trainer: &Trainer) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, cfg, trainer).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(RunConfig, Trainer)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file))
}
