//! `ACTD` activation dump files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  "ACTD"
//! version      u16      1
//! image id     u32 length + UTF-8 bytes
//! N            u32      number of blocks
//! blocks       N x (H u32, W u32, C u32)
//! D1, D2       u32, u32
//! flags        u8       bit 0: class probabilities present
//! classes      u32      length of the class-probability vector (0 if absent)
//! payload      f32      blocks 1..N (channel-major, then row-major),
//!                       fc1, fc2, class probabilities
//! ```
//!
//! The declared sizes must account for the payload exactly.

use std::path::Path;

use crate::codec::{ByteReader, ByteWriter};
use crate::config::BlockShape;
use crate::error::{Error, Result};
use crate::tensor::{BlockActivations, NetworkActivations};

pub const MAGIC: [u8; 4] = *b"ACTD";
pub const VERSION: u16 = 1;
const FLAG_CLASS_PROBS: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDump {
    pub image_id: String,
    pub activations: NetworkActivations,
}

pub fn encode_dump(acts: &NetworkActivations, image_id: &str) -> Vec<u8> {
    let payload: usize = acts.blocks().iter().map(|b| b.shape().len()).sum::<usize>()
        + acts.fc1().len()
        + acts.fc2().len()
        + acts.class_probs().map_or(0, <[f32]>::len);
    let mut w = ByteWriter::with_capacity(64 + image_id.len() + 12 * acts.num_blocks() + 4 * payload);
    w.bytes(&MAGIC);
    w.u16(VERSION);
    w.str(image_id);
    w.u32(acts.num_blocks() as u32);
    for b in acts.blocks() {
        w.u32(b.height() as u32);
        w.u32(b.width() as u32);
        w.u32(b.num_channels() as u32);
    }
    w.u32(acts.fc1().len() as u32);
    w.u32(acts.fc2().len() as u32);
    let probs = acts.class_probs();
    w.u8(if probs.is_some() { FLAG_CLASS_PROBS } else { 0 });
    w.u32(probs.map_or(0, |p| p.len() as u32));
    for b in acts.blocks() {
        for ch in b.channels() {
            w.f32s(ch.values());
        }
    }
    w.f32s(acts.fc1());
    w.f32s(acts.fc2());
    if let Some(p) = probs {
        w.f32s(p);
    }
    w.into_inner()
}

pub fn decode_dump(bytes: &[u8]) -> Result<ActivationDump> {
    let mut r = ByteReader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let image_id = r.str()?;
    let n = r.u32()? as usize;
    if n == 0 {
        return Err(r.invalid("dump declares zero blocks").into());
    }
    let mut shapes = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        let h = r.u32()? as usize;
        let w = r.u32()? as usize;
        let c = r.u32()? as usize;
        shapes.push(BlockShape::new(h, w, c));
    }
    let d1 = r.u32()? as usize;
    let d2 = r.u32()? as usize;
    let flags = r.u8()?;
    if flags & !FLAG_CLASS_PROBS != 0 {
        return Err(r.invalid(format!("unknown flag bits {flags:#04x}")).into());
    }
    let classes = r.u32()? as usize;
    let has_probs = flags & FLAG_CLASS_PROBS != 0;
    if !has_probs && classes != 0 {
        return Err(r.invalid("class count set without the class-probability flag").into());
    }

    let values: u64 = shapes.iter().map(|s| s.len() as u64).sum::<u64>()
        + d1 as u64
        + d2 as u64
        + classes as u64;
    r.expect_remaining(values * 4)?;

    let mut blocks = Vec::with_capacity(n);
    for (m, shape) in shapes.iter().enumerate() {
        let data = r.f32s(shape.len())?;
        blocks.push(BlockActivations::from_channel_major(m + 1, *shape, &data)?);
    }
    let fc1 = r.f32s(d1)?;
    let fc2 = r.f32s(d2)?;
    let probs = if has_probs { Some(r.f32s(classes)?) } else { None };
    let activations = NetworkActivations::new(blocks, fc1, fc2, probs)?;
    Ok(ActivationDump {
        image_id,
        activations,
    })
}

pub fn write_dump(acts: &NetworkActivations, image_id: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_dump(acts, image_id)).map_err(|e| Error::io(path, e))
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<ActivationDump> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dump(&bytes).map_err(|e| e.at_path(path))
}
