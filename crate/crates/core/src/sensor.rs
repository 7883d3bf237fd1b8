//! Photon statistics and binary image formation for gated SPAD arrays.
//!
//! A pixel that expects `chi` counts during one gate (photons plus dark counts)
//! sees a Poisson-distributed number of counts, but the 1-bit counter only
//! reports whether at least one occurred, so a readout is a Bernoulli draw with
//! success probability `1 - exp(-chi)`. Averaging `N_b = 2^b - 1` consecutive
//! readouts gives a `b`-bit frame at `1 / N_b` of the readout rate.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{common_dims, BitFrame, Frame};
use crate::rng;

/// SwissSPAD gate time, seconds (documentation only).
pub const SWISSSPAD_GATE_TIME: f64 = 3.8e-9;
/// SwissSPAD full-array readout time, seconds (documentation only).
pub const SWISSSPAD_READOUT_TIME: f64 = 6.4e-6;

/// Default fraction of hot pixels injected into simulated data.
pub const DEFAULT_HOT_PIXEL_DENSITY: f64 = 0.002;
/// Upper bound on simulated hot-pixel density.
pub const MAX_HOT_PIXEL_DENSITY: f64 = 0.05;

/// Tolerance used when matching pixel values against `k / N_b`.
pub const LEVEL_TOLERANCE: f64 = 1e-9;

/// Photon budget of one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    /// Impinging photon rate at unit radiance, photons per second.
    pub impinging_rate: f64,
    /// Dark count rate, counts per second.
    pub dark_count_rate: f64,
    /// Photon detection efficiency in `[0, 1]`.
    pub pde: f64,
    /// Gate (exposure) time per readout, seconds.
    pub gate_time: f64,
}

impl SensorConfig {
    pub fn new(impinging_rate: f64, dark_count_rate: f64, pde: f64, gate_time: f64) -> Result<Self> {
        let cfg = Self {
            impinging_rate,
            dark_count_rate,
            pde,
            gate_time,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.impinging_rate >= 0.0
            && self.dark_count_rate >= 0.0
            && (0.0..=1.0).contains(&self.pde)
            && self.gate_time > 0.0
            && self.impinging_rate.is_finite()
            && self.dark_count_rate.is_finite()
            && self.gate_time.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid sensor configuration {self:?}")))
        }
    }
}

fn check_chi(chi: f64) -> Result<()> {
    if chi >= 0.0 && chi.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("expected count must be finite and >= 0, got {chi}")))
    }
}

fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Probability of exactly `k` counts when `chi` are expected.
///
/// Evaluated in log space once `k` or `chi` is large enough for the direct
/// form to overflow.
pub fn poisson_pmf(chi: f64, k: u64) -> Result<f64> {
    check_chi(chi)?;
    if k <= 20 && chi <= 1e3 {
        let factorial: f64 = (2..=k).map(|i| i as f64).product();
        return Ok(chi.powi(k as i32) / factorial * (-chi).exp());
    }
    if chi == 0.0 {
        return Ok(0.0);
    }
    Ok((k as f64 * chi.ln() - chi - ln_factorial(k)).exp())
}

/// Probability that a gate records a detection, `1 - exp(-chi)`.
pub fn detection_probability(chi: f64) -> Result<f64> {
    check_chi(chi)?;
    Ok(-(-chi).exp_m1())
}

/// Expected counts per gate for a pixel of relative radiance `radiance`:
/// `(radiance * impinging_rate * pde + dark_count_rate) * gate_time`.
pub fn expected_counts(config: &SensorConfig, radiance: f64) -> Result<f64> {
    config.validate()?;
    if !(radiance >= 0.0 && radiance.is_finite()) {
        return Err(Error::Domain(format!("radiance must be finite and >= 0, got {radiance}")));
    }
    Ok((radiance * config.impinging_rate * config.pde + config.dark_count_rate) * config.gate_time)
}

/// Maps a relative-radiance frame to per-pixel detection probabilities.
pub fn radiance_to_intensity(config: &SensorConfig, radiance: &Frame) -> Result<Frame> {
    let mut out = Frame::filled(radiance.height(), radiance.width(), 0.0);
    for (o, &r) in out.as_mut_slice().iter_mut().zip(radiance.as_slice()) {
        *o = detection_probability(expected_counts(config, r)?)?;
    }
    Ok(out)
}

/// Bit depth of an accumulated sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct BitLevel(u8);

impl BitLevel {
    pub const SUPPORTED: [BitLevel; 4] = [BitLevel(1), BitLevel(2), BitLevel(3), BitLevel(4)];

    pub fn new(bits: u8) -> Result<Self> {
        if (1..=4).contains(&bits) {
            Ok(Self(bits))
        } else {
            Err(Error::UnsupportedBitDepth(format!("{bits} bits")))
        }
    }

    #[inline]
    pub fn bits(self) -> u8 {
        self.0
    }

    /// Number of binary readouts averaged per frame, `2^b - 1`.
    #[inline]
    pub fn n_frames(self) -> usize {
        (1usize << self.0) - 1
    }

    /// The `N_b + 1` admissible pixel values `k / N_b`.
    pub fn levels(self) -> Vec<f64> {
        let n = self.n_frames();
        (0..=n).map(|k| k as f64 / n as f64).collect()
    }

    /// Nearest admissible level to `v` (clamped to `[0, 1]`).
    pub fn quantize(self, v: f64) -> f64 {
        let n = self.n_frames() as f64;
        (v.clamp(0.0, 1.0) * n).round() / n
    }

    /// Whether `v` equals some `k / N_b` to within [`LEVEL_TOLERANCE`].
    pub fn admits(self, v: f64) -> bool {
        let n = self.n_frames() as f64;
        let k = (v * n).round();
        (0.0..=n).contains(&k) && (v - k / n).abs() <= LEVEL_TOLERANCE
    }
}

impl TryFrom<u8> for BitLevel {
    type Error = Error;
    fn try_from(bits: u8) -> Result<Self> {
        BitLevel::new(bits)
    }
}

impl From<BitLevel> for u8 {
    fn from(b: BitLevel) -> u8 {
        b.0
    }
}

impl fmt::Display for BitLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Raw 1-bit readouts in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySequence {
    frames: Vec<BitFrame>,
    /// Seconds between consecutive readouts.
    pub frame_period: f64,
}

impl BinarySequence {
    pub fn new(frames: Vec<BitFrame>, frame_period: f64) -> Result<Self> {
        if !frames.is_empty() {
            common_dims(&frames)?;
        }
        Ok(Self {
            frames,
            frame_period,
        })
    }

    pub fn frames(&self) -> &[BitFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(height, width)`, or `None` for an empty sequence.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| f.dims())
    }
}

/// A `b`-bit sequence whose pixels take values in `{k / N_b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedSequence {
    frames: Vec<Frame>,
    bit_level: BitLevel,
}

impl QuantizedSequence {
    /// Validates that every pixel sits on the level grid of `bit_level`.
    pub fn new(frames: Vec<Frame>, bit_level: BitLevel) -> Result<Self> {
        common_dims(&frames)?;
        for (t, f) in frames.iter().enumerate() {
            if let Some(v) = f.as_slice().iter().find(|&&v| !bit_level.admits(v)) {
                return Err(Error::Domain(format!(
                    "frame {t}: value {v} is not a {bit_level}-bit level"
                )));
            }
        }
        Ok(Self { frames, bit_level })
    }

    pub(crate) fn new_unchecked(frames: Vec<Frame>, bit_level: BitLevel) -> Self {
        Self { frames, bit_level }
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn bit_level(&self) -> BitLevel {
        self.bit_level
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(frames, height, width)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let (h, w) = self.frames[0].dims();
        (self.frames.len(), h, w)
    }
}

/// How hot-pixel sites evolve over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HotPixelMode {
    /// One site set for the whole sequence, like a physical defect.
    PerSequenceFixed,
    /// Fresh sites drawn for every frame.
    PerFrameRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HotPixelSpec {
    pub density: f64,
    pub seed: u64,
    pub mode: HotPixelMode,
}

impl HotPixelSpec {
    pub fn new(density: f64, seed: u64, mode: HotPixelMode) -> Result<Self> {
        let spec = Self {
            density,
            seed,
            mode,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn none() -> Self {
        Self {
            density: 0.0,
            seed: 0,
            mode: HotPixelMode::PerSequenceFixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (0.0..=MAX_HOT_PIXEL_DENSITY).contains(&self.density) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "hot-pixel density {} outside [0, {MAX_HOT_PIXEL_DENSITY}]",
                self.density
            )))
        }
    }

    /// Number of hot sites per frame, `round(density * H * W)`.
    pub fn count(&self, height: usize, width: usize) -> usize {
        (self.density * (height * width) as f64).round() as usize
    }

    /// Sorted flat pixel indices that are hot in frame `frame`.
    pub fn sites(&self, height: usize, width: usize, frame: usize) -> Vec<usize> {
        let n = height * width;
        let count = self.count(height, width).min(n);
        if count == 0 {
            return Vec::new();
        }
        let stream = match self.mode {
            HotPixelMode::PerSequenceFixed => 0,
            HotPixelMode::PerFrameRandom => frame as u64 + 1,
        };
        let mut rng = rng::stream(self.seed, stream);
        // Partial Fisher-Yates over the pixel indices.
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + rng::below(&mut rng, (n - i) as u64) as usize;
            idx.swap(i, j);
        }
        let mut sites = idx[..count].to_vec();
        sites.sort_unstable();
        sites
    }

    /// Per-frame boolean masks of the hot sites.
    pub fn masks(&self, height: usize, width: usize, n_frames: usize) -> Vec<BitFrame> {
        (0..n_frames)
            .map(|t| {
                let mut m = BitFrame::filled(height, width, false);
                for s in self.sites(height, width, t) {
                    m.as_mut_slice()[s] = true;
                }
                m
            })
            .collect()
    }
}

impl Default for HotPixelSpec {
    fn default() -> Self {
        Self {
            density: DEFAULT_HOT_PIXEL_DENSITY,
            seed: 0,
            mode: HotPixelMode::PerSequenceFixed,
        }
    }
}

/// One binary readout: pixel `(i, j)` fires iff a uniform draw falls below
/// `intensity(i, j)`.
pub fn sample_binary_frame(intensity: &Frame, rng: &mut impl RngCore) -> Result<BitFrame> {
    if let Some(v) = intensity
        .as_slice()
        .iter()
        .find(|v| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::Domain(format!("intensity {v} outside [0, 1]")));
    }
    Ok(intensity.map(|&p| rng::uniform(rng) < p))
}

/// Averages consecutive groups of `N_b` readouts into `b`-bit frames.
///
/// Trailing readouts that do not fill a whole group are dropped.
pub fn accumulate_bits(seq: &BinarySequence, bits: BitLevel) -> Result<QuantizedSequence> {
    let (h, w) = seq
        .dims()
        .ok_or_else(|| Error::Domain("cannot accumulate an empty sequence".into()))?;
    let group = bits.n_frames();
    let out_len = seq.len() / group;
    if out_len == 0 {
        return Err(Error::Domain(format!(
            "{} readouts cannot fill one {bits}-bit frame ({group} needed)",
            seq.len()
        )));
    }
    let dropped = seq.len() - out_len * group;
    if dropped > 0 {
        log::warn!("dropping {dropped} trailing readouts that do not fill a {bits}-bit frame");
    }
    let scale = group as f64;
    let frames = seq.frames()[..out_len * group]
        .chunks_exact(group)
        .map(|chunk| {
            let mut counts = vec![0u32; h * w];
            for f in chunk {
                for (c, &b) in counts.iter_mut().zip(f.as_slice()) {
                    *c += b as u32;
                }
            }
            Frame::from_vec(h, w, counts.into_iter().map(|c| c as f64 / scale).collect())
                .expect("dims fixed above")
        })
        .collect();
    Ok(QuantizedSequence::new_unchecked(frames, bits))
}

/// Saturates the hot sites chosen by `spec` to 1.0.
pub fn inject_hot_pixels(seq: &QuantizedSequence, spec: &HotPixelSpec) -> Result<QuantizedSequence> {
    spec.validate()?;
    let (_, h, w) = seq.dims();
    let mut frames = seq.frames().to_vec();
    for (t, f) in frames.iter_mut().enumerate() {
        for s in spec.sites(h, w, t) {
            f.as_mut_slice()[s] = 1.0;
        }
    }
    Ok(QuantizedSequence::new_unchecked(frames, seq.bit_level()))
}

/// Smallest supported bit depth whose level grid contains every pixel value.
pub fn detect_bit_level(frames: &[Frame]) -> Result<BitLevel> {
    if frames.is_empty() || frames.iter().all(|f| f.is_empty()) {
        return Err(Error::Domain("cannot detect the bit level of an empty sequence".into()));
    }
    let mut candidates: Vec<BitLevel> = BitLevel::SUPPORTED.to_vec();
    for v in frames.iter().flat_map(|f| f.as_slice()) {
        candidates.retain(|b| b.admits(*v));
        if candidates.is_empty() {
            return Err(Error::UnsupportedBitDepth(format!("pixel value {v}")));
        }
    }
    Ok(candidates[0])
}
