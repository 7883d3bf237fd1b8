//! Clean/degraded training pairs.
//!
//! Clean sequences are treated as noise-free high-bit-depth video. A degraded
//! input is synthesized frame by frame by averaging `N_b` Bernoulli readouts of
//! the clean frame and then saturating hot pixels.

mod augment;
mod manifest;
mod synthetic;

use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{common_dims, Frame};
use crate::rng;
use crate::sensor::{
    accumulate_bits, inject_hot_pixels, sample_binary_frame, BinarySequence, BitLevel, HotPixelSpec,
    QuantizedSequence,
};
use crate::video_io;

pub use augment::{augment, AugmentPlan, RESCALE_FACTORS};
pub use manifest::{
    generate_pairs, load_split, read_manifest, write_dataset, write_manifest, DatasetManifest, SourceSpec, Split,
    MANIFEST_FILE, MANIFEST_SCHEMA_VERSION,
};
pub use synthetic::{slow_gradient_sequence, synthetic_clean_sequences};

/// Spatio-temporal extent of a sequence or patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeqDims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl SeqDims {
    pub const fn new(frames: usize, height: usize, width: usize) -> Self {
        Self { frames, height, width }
    }

    pub fn fits_in(&self, other: &SeqDims) -> bool {
        self.frames <= other.frames && self.height <= other.height && self.width <= other.width
    }
}

impl std::fmt::Display for SeqDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{} (HxWxT)", self.height, self.width, self.frames)
    }
}

/// Clean sequence dimensions used for the training corpus: 100×100×64.
pub const DEFAULT_SEQUENCE_DIMS: SeqDims = SeqDims::new(64, 100, 100);
pub const DEFAULT_DOWNSAMPLE_FACTOR: usize = 7;

/// Where a clean sequence was cut from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    /// `[t, y, x]` of the crop in the downsampled source.
    pub origin: [usize; 3],
}

/// A high-bit-depth sequence in `[0, 1]`, treated as noise free.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanSequence {
    frames: Vec<Frame>,
    pub provenance: Provenance,
}

impl CleanSequence {
    pub fn new(frames: Vec<Frame>, provenance: Provenance) -> Result<Self> {
        common_dims(&frames)?;
        for (t, f) in frames.iter().enumerate() {
            if let Some(v) = f.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Domain(format!("clean frame {t}: value {v} outside [0, 1]")));
            }
        }
        Ok(Self { frames, provenance })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn dims(&self) -> SeqDims {
        let (h, w) = self.frames[0].dims();
        SeqDims::new(self.frames.len(), h, w)
    }
}

/// Degraded input and clean target of identical dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub input: QuantizedSequence,
    pub target: CleanSequence,
}

impl TrainingPair {
    pub fn new(input: QuantizedSequence, target: CleanSequence) -> Result<Self> {
        let (t, h, w) = input.dims();
        if SeqDims::new(t, h, w) != target.dims() {
            return Err(Error::Shape(format!(
                "input {} vs target {}",
                SeqDims::new(t, h, w),
                target.dims()
            )));
        }
        Ok(Self { input, target })
    }

    pub fn bit_level(&self) -> BitLevel {
        self.input.bit_level()
    }

    pub fn dims(&self) -> SeqDims {
        self.target.dims()
    }
}

/// Training patch extent; 60×60 spatial by 38 frames by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self {
            frames: 38,
            height: 60,
            width: 60,
        }
    }
}

impl PatchSpec {
    pub fn dims(&self) -> SeqDims {
        SeqDims::new(self.frames, self.height, self.width)
    }

    /// Smallest extent giving a `num_blocks`-block network full context on
    /// every axis, `2·3·K + 1`.
    pub fn min_extent(num_blocks: usize) -> usize {
        2 * 3 * num_blocks + 1
    }

    pub fn check_context(&self, num_blocks: usize) -> Result<()> {
        let min = Self::min_extent(num_blocks);
        if self.frames < min || self.height < min || self.width < min {
            return Err(Error::Domain(format!(
                "patch {} is smaller than the {min}-voxel context of a {num_blocks}-block network",
                self.dims()
            )));
        }
        Ok(())
    }
}

/// Non-overlapping `factor × factor` box average; trailing rows/columns that
/// do not fill a box are discarded.
pub fn box_downsample(frame: &Frame, factor: usize) -> Result<Frame> {
    if factor == 0 {
        return Err(Error::Domain("downsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(frame.clone());
    }
    let (h, w) = (frame.height() / factor, frame.width() / factor);
    if h == 0 || w == 0 {
        return Err(Error::Domain(format!(
            "{}x{} frame is smaller than the downsample factor {factor}",
            frame.height(),
            frame.width()
        )));
    }
    let area = (factor * factor) as f64;
    Ok(Frame::from_fn(h, w, |y, x| {
        let mut s = 0.0;
        for dy in 0..factor {
            for dx in 0..factor {
                s += frame.get(y * factor + dy, x * factor + dx);
            }
        }
        s / area
    }))
}

/// Crops the `dims` window at `origin = [t, y, x]`.
pub fn crop_frames(frames: &[Frame], origin: [usize; 3], dims: SeqDims) -> Vec<Frame> {
    frames[origin[0]..origin[0] + dims.frames]
        .iter()
        .map(|f| Frame::from_fn(dims.height, dims.width, |y, x| *f.get(origin[1] + y, origin[2] + x)))
        .collect()
}

fn random_origin(rng: &mut impl RngCore, outer: SeqDims, inner: SeqDims) -> [usize; 3] {
    [
        rng::below(rng, (outer.frames - inner.frames + 1) as u64) as usize,
        rng::below(rng, (outer.height - inner.height + 1) as u64) as usize,
        rng::below(rng, (outer.width - inner.width + 1) as u64) as usize,
    ]
}

struct LoadedSource {
    name: String,
    frames: Vec<Frame>,
}

/// Reads a source directory, converting to gray and box-downsampling frame by
/// frame. Returns `None` (with a warning) when the source is too small.
fn load_source(dir: &Path, factor: usize, dims: SeqDims) -> Result<Option<LoadedSource>> {
    let files = video_io::list_source_frames(dir)?;
    if files.len() < dims.frames {
        log::warn!(
            "skipping {}: {} frames, need {}",
            dir.display(),
            files.len(),
            dims.frames
        );
        return Ok(None);
    }
    let mut frames = Vec::with_capacity(files.len());
    for f in &files {
        let full = video_io::read_source_frame(f)?;
        if full.height() < dims.height * factor || full.width() < dims.width * factor {
            log::warn!(
                "skipping {}: {}x{} frames, need at least {}x{}",
                dir.display(),
                full.height(),
                full.width(),
                dims.height * factor,
                dims.width * factor
            );
            return Ok(None);
        }
        frames.push(box_downsample(&full, factor)?);
    }
    common_dims(&frames).map_err(|e| Error::Format(format!("{}: {e}", dir.display())))?;
    Ok(Some(LoadedSource {
        name: dir.display().to_string(),
        frames,
    }))
}

/// Builds `count` clean sequences from source frame directories.
///
/// Sequence `i` is cut from usable source `i mod n_sources` at a crop origin
/// drawn from the stream `(seed, i)`.
pub fn build_clean_sequences(
    sources: &[PathBuf],
    factor: usize,
    count: usize,
    dims: SeqDims,
    seed: u64,
) -> Result<Vec<CleanSequence>> {
    let mut usable = Vec::new();
    for dir in sources {
        match load_source(dir, factor, dims) {
            Ok(Some(s)) => usable.push(s),
            Ok(None) => {}
            Err(e) if e.is_io() || matches!(e, Error::Format(_) | Error::Image { .. }) => {
                log::warn!("skipping {}: {e}", dir.display());
            }
            Err(e) => return Err(e),
        }
    }
    if usable.is_empty() {
        return Err(Error::NoUsableSources(format!(
            "none of {} sources provides {} frames of at least {}x{} after downsampling by {factor}",
            sources.len(),
            dims.frames,
            dims.height,
            dims.width
        )));
    }
    (0..count)
        .map(|i| {
            let src = &usable[i % usable.len()];
            let (h, w) = src.frames[0].dims();
            let outer = SeqDims::new(src.frames.len(), h, w);
            let mut rng = rng::stream(seed, i as u64);
            let origin = random_origin(&mut rng, outer, dims);
            CleanSequence::new(
                crop_frames(&src.frames, origin, dims),
                Provenance {
                    source: src.name.clone(),
                    origin,
                },
            )
        })
        .collect()
}

/// Degrades a clean sequence to `bits` depth: `N_b` Bernoulli readouts per
/// frame, accumulated, then hot pixels. The target is the clean sequence.
pub fn synthesize_pair(
    clean: &CleanSequence,
    bits: BitLevel,
    hot: &HotPixelSpec,
    rng: &mut impl RngCore,
) -> Result<TrainingPair> {
    let n = bits.n_frames();
    let mut readouts = Vec::with_capacity(clean.frames().len() * n);
    for f in clean.frames() {
        for _ in 0..n {
            readouts.push(sample_binary_frame(f, rng)?);
        }
    }
    let binary = BinarySequence::new(readouts, 1.0)?;
    let input = inject_hot_pixels(&accumulate_bits(&binary, bits)?, hot)?;
    TrainingPair::new(input, clean.clone())
}

/// Cuts the same random window out of input and target.
pub fn sample_patch(pair: &TrainingPair, spec: &PatchSpec, rng: &mut impl RngCore) -> Result<TrainingPair> {
    let outer = pair.dims();
    if !spec.dims().fits_in(&outer) {
        return Err(Error::Domain(format!("patch {} larger than pair {outer}", spec.dims())));
    }
    let origin = random_origin(rng, outer, spec.dims());
    crop_pair(pair, origin, spec.dims())
}

pub fn crop_pair(pair: &TrainingPair, origin: [usize; 3], dims: SeqDims) -> Result<TrainingPair> {
    let input = QuantizedSequence::new_unchecked(crop_frames(pair.input.frames(), origin, dims), pair.bit_level());
    let p = &pair.target.provenance;
    let target = CleanSequence {
        frames: crop_frames(pair.target.frames(), origin, dims),
        provenance: Provenance {
            source: p.source.clone(),
            origin: [p.origin[0] + origin[0], p.origin[1] + origin[1], p.origin[2] + origin[2]],
        },
    };
    TrainingPair::new(input, target)
}
