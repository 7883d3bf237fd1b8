//! Dataset manifests and on-disk datasets.
//!
//! A manifest pins everything needed to regenerate a dataset bit for bit:
//! sources, crop geometry, bit level, hot-pixel settings, the split, and the
//! per-sequence seeds. It is stored as TOML:
//!
//! ```toml
//! schema_version = 1
//! rng_algorithm = "chacha8"
//! seed = 7
//! count = 4
//! bit_level = 2
//! sequence_seeds = [..]
//!
//! [source]
//! kind = "frames"                 # or "slow-gradient"
//! directories = ["videos/clip0"]
//! downsample_factor = 7
//!
//! [dims]
//! frames = 64
//! height = 100
//! width = 100
//!
//! [hot_pixels]
//! density = 0.002
//! seed = 0
//! mode = "per-sequence-fixed"
//!
//! [split]
//! train = 3
//! test = 1
//! ```
//!
//! On disk a dataset directory holds `manifest.toml` plus
//! `<split>/seq_<i>/clean/` (16-bit PGM) and `<split>/seq_<i>/input/`
//! (PGM with `maxval = N_b`, so the quantized input is exact).

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_clean_sequences, synthesize_pair, synthetic_clean_sequences, CleanSequence, Provenance, SeqDims,
    TrainingPair,
};
use crate::error::{Error, Result};
use crate::rng::{self, RNG_ALGORITHM};
use crate::sensor::{BitLevel, HotPixelSpec, QuantizedSequence};
use crate::video_io::{self, Depth};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceSpec {
    /// Directories of video frames, box-downsampled by `downsample_factor`.
    Frames {
        directories: Vec<PathBuf>,
        downsample_factor: usize,
    },
    /// Procedural constant / slow-ramp sequences.
    SlowGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub rng_algorithm: String,
    pub seed: u64,
    pub count: usize,
    pub bit_level: BitLevel,
    pub sequence_seeds: Vec<u64>,
    pub source: SourceSpec,
    pub dims: SeqDims,
    pub hot_pixels: HotPixelSpec,
    pub split: SplitCounts,
}

impl DatasetManifest {
    /// Test sequences are the last `test` of `count`; sequence seeds derive
    /// from `(seed, index)`.
    pub fn new(
        seed: u64,
        source: SourceSpec,
        dims: SeqDims,
        count: usize,
        test: usize,
        bit_level: BitLevel,
        hot_pixels: HotPixelSpec,
    ) -> Result<Self> {
        let m = Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            rng_algorithm: RNG_ALGORITHM.into(),
            seed,
            count,
            bit_level,
            sequence_seeds: (0..count as u64).map(|i| rng::child_seed(seed, i)).collect(),
            source,
            dims,
            hot_pixels,
            split: SplitCounts {
                train: count.saturating_sub(test),
                test,
            },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Version {
                what: "dataset manifest",
                found: self.schema_version,
                supported: MANIFEST_SCHEMA_VERSION,
            });
        }
        if self.rng_algorithm != RNG_ALGORITHM {
            return Err(Error::Domain(format!(
                "manifest uses RNG {:?}, this build provides {RNG_ALGORITHM:?}",
                self.rng_algorithm
            )));
        }
        if self.sequence_seeds.len() != self.count || self.split.train + self.split.test != self.count {
            return Err(Error::Domain(format!(
                "manifest count {} disagrees with {} seeds / split {}+{}",
                self.count,
                self.sequence_seeds.len(),
                self.split.train,
                self.split.test
            )));
        }
        self.hot_pixels.validate()
    }

    /// Hot-pixel settings for sequence `i`; each sequence gets its own sites.
    pub fn hot_pixels_for(&self, i: usize) -> HotPixelSpec {
        HotPixelSpec {
            seed: rng::child_seed(self.hot_pixels.seed, i as u64),
            ..self.hot_pixels
        }
    }

    pub fn split_of(&self, i: usize) -> Split {
        if i < self.split.train {
            Split::Train
        } else {
            Split::Test
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    manifest.validate()?;
    let text = toml::to_string(manifest).map_err(|e| Error::Format(format!("serialising manifest: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io_at(path, e))
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    let parse_err = |e: toml::de::Error| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let raw: toml::Table = toml::from_str(&text).map_err(parse_err)?;
    match raw.get("schema_version").and_then(|v| v.as_integer()) {
        Some(v) if v == MANIFEST_SCHEMA_VERSION as i64 => {}
        Some(v) => {
            return Err(Error::Version {
                what: "dataset manifest",
                found: v.clamp(0, u32::MAX as i64) as u32,
                supported: MANIFEST_SCHEMA_VERSION,
            })
        }
        None => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: "missing integer `schema_version`".into(),
            })
        }
    }
    let manifest: DatasetManifest = toml::from_str(&text).map_err(parse_err)?;
    manifest.validate()?;
    Ok(manifest)
}

fn clean_sequences(manifest: &DatasetManifest) -> Result<Vec<CleanSequence>> {
    match &manifest.source {
        SourceSpec::Frames {
            directories,
            downsample_factor,
        } => build_clean_sequences(directories, *downsample_factor, manifest.count, manifest.dims, manifest.seed),
        SourceSpec::SlowGradient => Ok(synthetic_clean_sequences(manifest.count, manifest.dims, manifest.seed)),
    }
}

/// Regenerates every training pair described by `manifest`, in index order.
pub fn generate_pairs(manifest: &DatasetManifest) -> Result<Vec<TrainingPair>> {
    manifest.validate()?;
    let clean = clean_sequences(manifest)?;
    clean
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut r = rng::stream(manifest.sequence_seeds[i], 0);
            synthesize_pair(c, manifest.bit_level, &manifest.hot_pixels_for(i), &mut r)
        })
        .collect()
}

fn sequence_dir(root: &Path, split: Split, i: usize) -> PathBuf {
    root.join(split.dir_name()).join(format!("seq_{i:05}"))
}

/// Generates the dataset and writes it, with its manifest, under `root`.
pub fn write_dataset(root: &Path, manifest: &DatasetManifest) -> Result<Vec<TrainingPair>> {
    let pairs = generate_pairs(manifest)?;
    fs::create_dir_all(root).map_err(|e| Error::io_at(root, e))?;
    write_manifest(&root.join(MANIFEST_FILE), manifest)?;
    for (i, pair) in pairs.iter().enumerate() {
        let dir = sequence_dir(root, manifest.split_of(i), i);
        video_io::write_frames(&dir.join("clean"), pair.target.frames(), Depth::Sixteen)?;
        video_io::write_quantized(&dir.join("input"), &pair.input)?;
    }
    Ok(pairs)
}

/// Loads one split of a dataset written by [`write_dataset`].
pub fn load_split(root: &Path, split: Split) -> Result<(DatasetManifest, Vec<TrainingPair>)> {
    let manifest = read_manifest(&root.join(MANIFEST_FILE))?;
    let pairs = (0..manifest.count)
        .filter(|&i| manifest.split_of(i) == split)
        .map(|i| {
            let dir = sequence_dir(root, split, i);
            let input = QuantizedSequence::new(video_io::read_frames(&dir.join("input"))?, manifest.bit_level)?;
            let target = CleanSequence::new(
                video_io::read_frames(&dir.join("clean"))?,
                Provenance {
                    source: dir.display().to_string(),
                    origin: [0; 3],
                },
            )?;
            TrainingPair::new(input, target)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, pairs))
}
