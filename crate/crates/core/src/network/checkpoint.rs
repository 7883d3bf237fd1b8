//! Versioned binary checkpoints.
//!
//! Layout (integers and floats little-endian):
//!
//! | offset | size | field                                              |
//! |--------|------|----------------------------------------------------|
//! | 0      | 8    | magic `SPADCKPT`                                   |
//! | 8      | 4    | format version (1)                                 |
//! | 12     | 1    | float width in bytes: 4 (f32) or 8 (f64)           |
//! | 13     | 1    | flags: bit 0 = optimiser momentum buffers follow   |
//! | 14     | 1    | skip topology: 0 cascade, 1 raw input              |
//! | 15     | 1    | trained bit level (0 = unknown)                    |
//! | 16     | 4×6  | blocks, channels, k_t, k_h, k_w, convs per block   |
//! | 40     | 8    | leaky slope (f64)                                  |
//! | 48     | 8    | step (u64)                                         |
//! | 56     | 8    | parameter count P (u64)                            |
//! | 64     | P·w  | parameters, block by block, each layer's weights   |
//! |        |      | `(C_out, C_in, k_t, k_h, k_w)` then its biases     |
//! |        | P·w  | momentum buffers in the same order, if flagged     |

use std::fs;
use std::path::Path;

use super::{NetworkConfig, NetworkWeights, SkipTopology};
use crate::error::{Error, Result};
use crate::sensor::BitLevel;
use crate::tensor::{ParamSet, SgdState};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SPADCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_HEADER_LEN: usize = 64;

/// Storage width of parameters. `F64` round-trips bitwise; `F32` halves the
/// file size and rounds every value to single precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FloatFormat {
    F32,
    #[default]
    F64,
}

impl FloatFormat {
    fn width(self) -> usize {
        match self {
            FloatFormat::F32 => 4,
            FloatFormat::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub weights: NetworkWeights,
    pub step: u64,
    pub bit_level: Option<BitLevel>,
    pub optimizer: Option<SgdState>,
}

impl Checkpoint {
    /// Fails with [`Error::ConfigMismatch`] if the stored architecture differs
    /// from `cfg`.
    pub fn expect_config(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.config != *cfg {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint holds {:?}, expected {:?}",
                self.config, cfg
            )));
        }
        Ok(())
    }
}

fn put_values(out: &mut Vec<u8>, values: &[f64], format: FloatFormat) {
    for &v in values {
        match format {
            FloatFormat::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            FloatFormat::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint, format: FloatFormat) -> Result<Vec<u8>> {
    ckpt.weights.check_config(&ckpt.config)?;
    let c = &ckpt.config;
    let params = ckpt.weights.param_slices();
    let count: usize = params.iter().map(|s| s.len()).sum();
    let momentum = ckpt.optimizer.as_ref().filter(|s| !s.velocity.is_empty());
    if let Some(m) = momentum {
        let aligned = m.velocity.len() == params.len() && m.velocity.iter().zip(&params).all(|(v, p)| v.len() == p.len());
        if !aligned {
            return Err(Error::Shape("momentum buffers do not match the weights".into()));
        }
    }
    let u32_of = |v: usize| u32::try_from(v).map_err(|_| Error::Domain(format!("{v} exceeds u32")));

    let mut out = Vec::with_capacity(CHECKPOINT_HEADER_LEN + count * format.width() * 2);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(format.width() as u8);
    out.push(momentum.is_some() as u8);
    out.push(match c.skip {
        SkipTopology::Cascade => 0,
        SkipTopology::RawInput => 1,
    });
    out.push(ckpt.bit_level.map_or(0, |b| b.bits()));
    for v in [c.num_blocks, c.channels, c.kernel[0], c.kernel[1], c.kernel[2], c.convs_per_block] {
        out.extend_from_slice(&u32_of(v)?.to_le_bytes());
    }
    out.extend_from_slice(&c.leaky_slope.to_le_bytes());
    out.extend_from_slice(&ckpt.step.to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    debug_assert_eq!(out.len(), CHECKPOINT_HEADER_LEN);
    for p in &params {
        put_values(&mut out, p, format);
    }
    if let Some(m) = momentum {
        for v in &m.velocity {
            put_values(&mut out, v, format);
        }
    }
    Ok(out)
}

fn u32_at(b: &[u8], at: usize) -> usize {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes")) as usize
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

fn read_values(bytes: &[u8], format: FloatFormat, dst: &mut [f64]) {
    match format {
        FloatFormat::F32 => {
            for (d, c) in dst.iter_mut().zip(bytes.chunks_exact(4)) {
                *d = f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64;
            }
        }
        FloatFormat::F64 => {
            for (d, c) in dst.iter_mut().zip(bytes.chunks_exact(8)) {
                *d = f64::from_le_bytes(c.try_into().expect("8 bytes"));
            }
        }
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let magic_len = CHECKPOINT_MAGIC.len().min(bytes.len());
    if bytes[..magic_len] != CHECKPOINT_MAGIC[..magic_len] || bytes.len() < CHECKPOINT_MAGIC.len() {
        if bytes[..magic_len] == CHECKPOINT_MAGIC[..magic_len] {
            return Err(Error::Truncated {
                what: "checkpoint header",
                needed: CHECKPOINT_HEADER_LEN,
                found: bytes.len(),
            });
        }
        return Err(Error::Magic {
            expected: CHECKPOINT_MAGIC.to_vec(),
            found: bytes[..magic_len].to_vec(),
        });
    }
    if bytes.len() < CHECKPOINT_HEADER_LEN {
        return Err(Error::Truncated {
            what: "checkpoint header",
            needed: CHECKPOINT_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = u32_at(bytes, 8) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            what: "checkpoint",
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let format = match bytes[12] {
        4 => FloatFormat::F32,
        8 => FloatFormat::F64,
        w => return Err(Error::Format(format!("unsupported float width {w}"))),
    };
    let has_momentum = bytes[13] & 1 == 1;
    let skip = match bytes[14] {
        0 => SkipTopology::Cascade,
        1 => SkipTopology::RawInput,
        s => return Err(Error::Format(format!("unknown skip topology {s}"))),
    };
    let bit_level = match bytes[15] {
        0 => None,
        b => Some(BitLevel::new(b)?),
    };
    let config = NetworkConfig {
        num_blocks: u32_at(bytes, 16),
        channels: u32_at(bytes, 20),
        kernel: [u32_at(bytes, 24), u32_at(bytes, 28), u32_at(bytes, 32)],
        convs_per_block: u32_at(bytes, 36),
        leaky_slope: f64::from_le_bytes(bytes[40..48].try_into().expect("8 bytes")),
        skip,
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let step = u64_at(bytes, 48);
    let count = u64_at(bytes, 56) as usize;
    if count != config.param_count() {
        return Err(Error::Format(format!(
            "checkpoint declares {count} parameters, its config implies {}",
            config.param_count()
        )));
    }
    let section = count * format.width();
    let needed = CHECKPOINT_HEADER_LEN + section * (1 + has_momentum as usize);
    if bytes.len() < needed {
        return Err(Error::Truncated {
            what: "checkpoint parameters",
            needed,
            found: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(Error::Format(format!("{} trailing bytes in checkpoint", bytes.len() - needed)));
    }

    let mut weights = NetworkWeights::zeros(&config)?;
    let mut at = CHECKPOINT_HEADER_LEN;
    for buf in weights.param_slices_mut() {
        let n = buf.len() * format.width();
        read_values(&bytes[at..at + n], format, buf);
        at += n;
    }
    if !weights.is_finite() {
        return Err(Error::NonFinite("checkpoint weights".into()));
    }
    let optimizer = has_momentum.then(|| {
        let velocity = weights
            .param_slices()
            .iter()
            .map(|p| {
                let mut v = vec![0.0; p.len()];
                let n = p.len() * format.width();
                read_values(&bytes[at..at + n], format, &mut v);
                at += n;
                v
            })
            .collect();
        SgdState { velocity }
    });
    Ok(Checkpoint {
        config,
        weights,
        step,
        bit_level,
        optimizer,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint, format: FloatFormat) -> Result<()> {
    let bytes = encode_checkpoint(ckpt, format)?;
    // Write-then-rename so a crash never leaves a half-written checkpoint.
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io_at(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io_at(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io_at(path, e))?;
    decode_checkpoint(&bytes)
}
