//! Checkpoint format: one JSON header line (version, shape, variant, norm,
//! seed) followed by the four tables as raw little-endian f32, row-major, in
//! the order entity embeddings, translations, head rotations, tail rotations.
//! Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, NormKind, ParamTable, ScoreVariant};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Scoring setup stored alongside the tables so a checkpoint is evaluable
/// on its own.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub variant: ScoreVariant,
    pub norm: NormKind,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    dim: usize,
    num_entities: usize,
    num_relations: usize,
    variant: ScoreVariant,
    norm: NormKind,
    seed: u64,
}

pub fn save_checkpoint(path: &Path, params: &ModelParams<f32>, meta: &CheckpointMeta) -> Result<()> {
    let io = |e| Error::io(path, e);
    let header = Header {
        version: CHECKPOINT_VERSION,
        dim: params.dim(),
        num_entities: params.num_entities(),
        num_relations: params.num_relations(),
        variant: meta.variant,
        norm: meta.norm,
        seed: meta.seed,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    serde_json::to_writer(&mut w, &header)
        .map_err(|e| Error::CheckpointFormat(format!("header encode: {e}")))?;
    w.write_all(b"\n").map_err(io)?;
    for table in ParamTable::ALL {
        for &x in params.table(table) {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams<f32>, CheckpointMeta)> {
    let io = |e| Error::io(path, e);
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut header_line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let got = r.read(&mut byte).map_err(io)?;
        if got == 0 {
            return Err(Error::CheckpointFormat("missing header line".to_string()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header_line.push(byte[0]);
        if header_line.len() > 4096 {
            return Err(Error::CheckpointFormat("header line too long".to_string()));
        }
    }
    let header: Header = serde_json::from_slice(&header_line)
        .map_err(|e| Error::CheckpointFormat(format!("header decode: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: header.version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(io)?;
    let entity_len = header.num_entities * header.dim;
    let rel_len = header.num_relations * header.dim;
    let expected = (entity_len + 3 * rel_len) * 4;
    if body.len() != expected {
        return Err(Error::CheckpointFormat(format!(
            "table payload is {} bytes, expected {expected}",
            body.len()
        )));
    }
    let mut floats = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()));
    let mut take = |len: usize| -> Vec<f32> { floats.by_ref().take(len).collect() };
    let entity = take(entity_len);
    let trans = take(rel_len);
    let rot_head = take(rel_len);
    let rot_tail = take(rel_len);
    let params = ModelParams::from_tables(
        header.num_entities,
        header.num_relations,
        header.dim,
        entity,
        trans,
        rot_head,
        rot_tail,
    )?;
    if !params.all_finite() {
        return Err(Error::CheckpointFormat(
            "tables contain non-finite values".to_string(),
        ));
    }
    Ok((
        params,
        CheckpointMeta {
            variant: header.variant,
            norm: header.norm,
            seed: header.seed,
        },
    ))
}
