//! Packed 1-bit sequence files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `SPB1`                            |
//! | 4      | 2    | version (1)                             |
//! | 6      | 2    | bit order, 0 = MSB is leftmost pixel    |
//! | 8      | 4    | height                                  |
//! | 12     | 4    | width                                   |
//! | 16     | 4    | frame count                             |
//! | 20     | 8    | frame period, seconds (f64)             |
//! | 28     | ...  | frames, rows of `ceil(W / 8)` bytes     |
//!
//! Padding bits at the end of each row are zero.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::BitFrame;
use crate::sensor::BinarySequence;

pub const PACKED_MAGIC: &[u8; 4] = b"SPB1";
pub const PACKED_VERSION: u16 = 1;
pub const PACKED_HEADER_LEN: usize = 28;
const MSB_FIRST: u16 = 0;

pub fn encode_packed_binary(seq: &BinarySequence) -> Result<Vec<u8>> {
    let (h, w) = seq.dims().unwrap_or((0, 0));
    let u32_of = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Domain(format!("{what} {v} does not fit the header")))
    };
    let row_bytes = w.div_ceil(8);
    let mut out = Vec::with_capacity(PACKED_HEADER_LEN + seq.len() * h * row_bytes);
    out.extend_from_slice(PACKED_MAGIC);
    out.extend_from_slice(&PACKED_VERSION.to_le_bytes());
    out.extend_from_slice(&MSB_FIRST.to_le_bytes());
    out.extend_from_slice(&u32_of(h, "height")?.to_le_bytes());
    out.extend_from_slice(&u32_of(w, "width")?.to_le_bytes());
    out.extend_from_slice(&u32_of(seq.len(), "frame count")?.to_le_bytes());
    out.extend_from_slice(&seq.frame_period.to_le_bytes());
    for f in seq.frames() {
        for row in f.as_slice().chunks_exact(w) {
            for byte_px in row.chunks(8) {
                let mut byte = 0u8;
                for (i, &bit) in byte_px.iter().enumerate() {
                    byte |= (bit as u8) << (7 - i);
                }
                out.push(byte);
            }
        }
    }
    Ok(out)
}

fn read_u32(b: &[u8], at: usize) -> usize {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes")) as usize
}

pub fn decode_packed_binary(bytes: &[u8]) -> Result<BinarySequence> {
    if bytes.len() < 4 || &bytes[..4] != PACKED_MAGIC {
        return Err(Error::Magic {
            expected: PACKED_MAGIC.to_vec(),
            found: bytes.iter().take(4).copied().collect(),
        });
    }
    if bytes.len() < PACKED_HEADER_LEN {
        return Err(Error::Truncated {
            what: "packed binary header",
            needed: PACKED_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != PACKED_VERSION {
        return Err(Error::Version {
            what: "packed binary",
            found: version as u32,
            supported: PACKED_VERSION as u32,
        });
    }
    let order = u16::from_le_bytes([bytes[6], bytes[7]]);
    if order != MSB_FIRST {
        return Err(Error::Format(format!("unknown bit order {order}")));
    }
    let (h, w, n) = (read_u32(bytes, 8), read_u32(bytes, 12), read_u32(bytes, 16));
    let frame_period = f64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes"));
    let row_bytes = w.div_ceil(8);
    let frame_bytes = h * row_bytes;
    let needed = PACKED_HEADER_LEN + n * frame_bytes;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            what: "packed binary frames",
            needed,
            found: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last frame",
            bytes.len() - needed
        )));
    }
    let frames = bytes[PACKED_HEADER_LEN..]
        .chunks_exact(frame_bytes.max(1))
        .take(n)
        .map(|fb| {
            let mut bits = Vec::with_capacity(h * w);
            for row in fb.chunks_exact(row_bytes) {
                bits.extend((0..w).map(|x| row[x / 8] >> (7 - x % 8) & 1 == 1));
            }
            BitFrame::from_vec(h, w, bits)
        })
        .collect::<Result<Vec<_>>>()?;
    BinarySequence::new(frames, frame_period)
}

pub fn write_packed_binary(path: &Path, seq: &BinarySequence) -> Result<()> {
    let bytes = encode_packed_binary(seq)?;
    fs::write(path, bytes).map_err(|e| Error::io_at(path, e))
}

pub fn read_packed_binary(path: &Path) -> Result<BinarySequence> {
    let bytes = fs::read(path).map_err(|e| Error::io_at(path, e))?;
    decode_packed_binary(&bytes)
}
