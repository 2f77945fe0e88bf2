//! Binary tag files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! header  16 B   "SWTG" | version u16 | tick_ps u16 | records u32 | recorder u8 | 3 reserved
//! record  12 B   tag u64 | channel u8 | flags u8 | truth index u16
//! truth   4 B + 12 B each (only when some record is annotated)
//!                count u32 | { pulse u64 | photon u8 | 3 reserved }
//! ```
//!
//! Flags: bit 0 marks a record with a truth-table entry, bit 1 a dark count.

use std::path::Path;

use crate::error::{Error, Result};
use crate::link::{Channel, DetectionEvent, Origin};
use crate::tagstream::{check_sorted, Recorder, TagStream};

pub const MAGIC: &[u8; 4] = b"SWTG";
pub const VERSION: u16 = 1;
pub const TICK_PS: u16 = 156;
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 12;
const TRUTH_LEN: usize = 12;

const FLAG_TRUTH: u8 = 1;
const FLAG_DARK: u8 = 2;

fn bad(msg: impl Into<String>) -> Error {
    Error::TagFormat(msg.into())
}

/// Serializes `stream`. With `truth` set, photon origins go into the
/// trailing table, which holds at most 65 535 entries.
pub fn encode(stream: &TagStream, truth: bool) -> Result<Vec<u8>> {
    check_sorted(&stream.events)?;
    let n = u32::try_from(stream.events.len()).map_err(|_| bad("more than 2³² records"))?;
    let mut table: Vec<(u64, u8)> = Vec::new();
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.events.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&TICK_PS.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.push(stream.recorder.id());
    out.extend_from_slice(&[0; 3]);
    for e in &stream.events {
        let mut flags = 0u8;
        let mut idx = 0u16;
        if e.origin.is_dark() {
            flags |= FLAG_DARK;
        }
        if truth {
            if let (Some(p), Some(ph)) = (e.origin.pulse(), e.origin.photon_id()) {
                idx = u16::try_from(table.len()).map_err(|_| bad("truth table exceeds 65535 entries"))?;
                table.push((p, ph));
                flags |= FLAG_TRUTH;
            }
        }
        out.extend_from_slice(&e.tag.to_le_bytes());
        out.push(e.channel as u8);
        out.push(flags);
        out.extend_from_slice(&idx.to_le_bytes());
    }
    if !table.is_empty() {
        out.extend_from_slice(&(table.len() as u32).to_le_bytes());
        for (p, ph) in table {
            out.extend_from_slice(&p.to_le_bytes());
            out.push(ph);
            out.extend_from_slice(&[0; 3]);
        }
    }
    Ok(out)
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes(b[i..i + 4].try_into().expect("4 bytes"))
}

fn u64_at(b: &[u8], i: usize) -> u64 {
    u64::from_le_bytes(b[i..i + 8].try_into().expect("8 bytes"))
}

/// Parses a tag file image. Block length is not stored and must be supplied.
pub fn decode(bytes: &[u8], block_seconds: f64) -> Result<TagStream> {
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16_at(bytes, 4);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let tick = u16_at(bytes, 6);
    if tick != TICK_PS {
        return Err(bad(format!("tick of {tick} ps, expected {TICK_PS}")));
    }
    let n = u32_at(bytes, 8) as usize;
    let recorder = Recorder::from_id(bytes[12]).ok_or_else(|| bad(format!("unknown recorder {}", bytes[12])))?;
    let body_end = n
        .checked_mul(RECORD_LEN)
        .and_then(|x| x.checked_add(HEADER_LEN))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| bad(format!("truncated: {n} records declared")))?;

    let mut raw = Vec::with_capacity(n);
    let mut annotated = false;
    for i in 0..n {
        let at = HEADER_LEN + i * RECORD_LEN;
        let channel = Channel::from_u8(bytes[at + 8]).ok_or_else(|| bad(format!("record {i}: channel {}", bytes[at + 8])))?;
        let flags = bytes[at + 9];
        if flags & !(FLAG_TRUTH | FLAG_DARK) != 0 || flags == FLAG_TRUTH | FLAG_DARK {
            return Err(bad(format!("record {i}: flags {flags:#04x}")));
        }
        annotated |= flags & FLAG_TRUTH != 0;
        raw.push((u64_at(bytes, at), channel, flags, u16_at(bytes, at + 10)));
    }

    let mut table = Vec::new();
    let rest = &bytes[body_end..];
    if annotated {
        if rest.len() < 4 {
            return Err(bad("truncated truth table"));
        }
        let m = u32_at(rest, 0) as usize;
        if rest.len() != 4 + m * TRUTH_LEN {
            return Err(bad(format!("truth table of {m} entries has {} bytes", rest.len() - 4)));
        }
        for j in 0..m {
            let at = 4 + j * TRUTH_LEN;
            let pulse = u64_at(rest, at);
            if pulse >= 1 << 54 {
                return Err(bad(format!("truth entry {j}: pulse {pulse} out of range")));
            }
            table.push(Origin::photon(pulse, rest[at + 8]));
        }
    } else if !rest.is_empty() {
        return Err(bad(format!("{} trailing bytes", rest.len())));
    }

    let events = raw
        .into_iter()
        .enumerate()
        .map(|(i, (tag, channel, flags, idx))| {
            let origin = if flags & FLAG_TRUTH != 0 {
                *table.get(idx as usize).ok_or_else(|| bad(format!("record {i}: truth index {idx}")))?
            } else if flags & FLAG_DARK != 0 {
                Origin::DARK
            } else {
                Origin::UNKNOWN
            };
            Ok(DetectionEvent { channel, tag, origin })
        })
        .collect::<Result<Vec<_>>>()?;
    TagStream::new(recorder, events, block_seconds)
}

pub fn export_tags(stream: &TagStream, path: &Path, truth: bool) -> Result<()> {
    Ok(std::fs::write(path, encode(stream, truth)?)?)
}

pub fn import_tags(path: &Path, block_seconds: f64) -> Result<TagStream> {
    decode(&std::fs::read(path)?, block_seconds)
}
