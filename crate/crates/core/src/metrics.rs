//! Fidelity metrics and hot-pixel cleanup.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{common_dims, BitFrame, Frame};

fn check_pair(a: &[Frame], b: &[Frame]) -> Result<(usize, usize)> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("sequences have {} and {} frames", a.len(), b.len())));
    }
    let da = common_dims(a)?;
    let db = common_dims(b)?;
    if da != db {
        return Err(Error::Shape(format!("frame sizes differ: {da:?} vs {db:?}")));
    }
    Ok(da)
}

/// Mean squared error over every voxel.
pub fn mse(a: &[Frame], b: &[Frame]) -> Result<f64> {
    let (h, w) = check_pair(a, b)?;
    let total: f64 = a
        .iter()
        .zip(b)
        .flat_map(|(fa, fb)| fa.as_slice().iter().zip(fb.as_slice()))
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(total / (a.len() * h * w) as f64)
}

/// Peak signal-to-noise ratio in dB for peak value 1. Identical inputs give
/// `f64::INFINITY`.
pub fn psnr(a: &[Frame], b: &[Frame]) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    /// Side of the square Gaussian window; odd.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the data.
    pub data_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::Domain(format!("SSIM window must be odd, got {}", self.window)));
        }
        if !(self.sigma > 0.0 && self.data_range > 0.0 && self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::Domain(format!("invalid SSIM constants {self:?}")));
        }
        Ok(())
    }

    /// Normalised 1-D Gaussian taps.
    pub fn taps(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }
}

/// Valid-mode separable filtering of `src` (`h × w`) with `taps` on both axes.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&line[x..x + n]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (i, t) in taps.iter().enumerate() {
            let line = &rows[(y + i) * ow..(y + i + 1) * ow];
            for (o, v) in out[y * ow..(y + 1) * ow].iter_mut().zip(line) {
                *o += t * v;
            }
        }
    }
    out
}

/// Mean SSIM of one frame pair.
pub fn ssim_frame(a: &Frame, b: &Frame, cfg: &SsimConfig) -> Result<f64> {
    cfg.validate()?;
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("frame sizes differ: {:?} vs {:?}", a.dims(), b.dims())));
    }
    let (h, w) = a.dims();
    if h < cfg.window || w < cfg.window {
        return Err(Error::Domain(format!("{h}x{w} frame is smaller than the {0}x{0} SSIM window", cfg.window)));
    }
    let taps = cfg.taps();
    let (xa, xb) = (a.as_slice(), b.as_slice());
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { xa.iter().zip(xb).map(|(p, q)| f(*p, *q)).collect() };
    let mu_a = filter_valid(xa, h, w, &taps);
    let mu_b = filter_valid(xb, h, w, &taps);
    let aa = filter_valid(&prod(&|p, _| p * p), h, w, &taps);
    let bb = filter_valid(&prod(&|_, q| q * q), h, w, &taps);
    let ab = filter_valid(&prod(&|p, q| p * q), h, w, &taps);
    let c1 = (cfg.k1 * cfg.data_range).powi(2);
    let c2 = (cfg.k2 * cfg.data_range).powi(2);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}

/// Sequence SSIM: mean of per-frame scores.
pub fn ssim(a: &[Frame], b: &[Frame], cfg: &SsimConfig) -> Result<f64> {
    Ok(ssim_per_frame(a, b, cfg)?.iter().sum::<f64>() / a.len() as f64)
}

pub fn ssim_per_frame(a: &[Frame], b: &[Frame], cfg: &SsimConfig) -> Result<Vec<f64>> {
    check_pair(a, b)?;
    a.par_iter().zip(b).map(|(fa, fb)| ssim_frame(fa, fb, cfg)).collect()
}

/// Result of [`median_hot_pixel_fix`].
#[derive(Debug, Clone, PartialEq)]
pub struct HotPixelFix {
    pub frame: Frame,
    /// Masked pixels `(y, x)` whose whole neighbourhood was masked; left as is.
    pub unfixed: Vec<(usize, usize)>,
}

/// Replaces each masked pixel by the median of its unmasked 3×3 neighbours.
///
/// Neighbourhoods are clipped at the border and an even number of
/// neighbours averages the middle two.
pub fn median_hot_pixel_fix(frame: &Frame, mask: &BitFrame) -> Result<HotPixelFix> {
    if frame.dims() != mask.dims() {
        return Err(Error::Shape(format!("frame {:?} vs mask {:?}", frame.dims(), mask.dims())));
    }
    let (h, w) = frame.dims();
    let mut out = frame.clone();
    let mut unfixed = Vec::new();
    let mut vals = Vec::with_capacity(8);
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(y, x) {
                continue;
            }
            vals.clear();
            for ny in y.saturating_sub(1)..(y + 2).min(h) {
                for nx in x.saturating_sub(1)..(x + 2).min(w) {
                    if !*mask.get(ny, nx) {
                        vals.push(*frame.get(ny, nx));
                    }
                }
            }
            if vals.is_empty() {
                unfixed.push((y, x));
                continue;
            }
            vals.sort_by(f64::total_cmp);
            let m = vals.len() / 2;
            let med = if vals.len() % 2 == 1 { vals[m] } else { 0.5 * (vals[m - 1] + vals[m]) };
            out.set(y, x, med);
        }
    }
    Ok(HotPixelFix { frame: out, unfixed })
}

pub const SATURATION_THRESHOLD: f64 = 0.98;
pub const MIN_SATURATION_FRAMES: usize = 100;

/// Marks pixels whose temporal mean exceeds `threshold`. Needs at least
/// `min_frames` frames so a bright scene region is not mistaken for a defect.
pub fn hot_mask_from_saturation(frames: &[Frame], threshold: f64, min_frames: usize) -> Result<BitFrame> {
    let (h, w) = common_dims(frames)?;
    if frames.len() < min_frames {
        return Err(Error::Domain(format!(
            "saturation mask needs at least {min_frames} frames, got {}",
            frames.len()
        )));
    }
    let n = frames.len() as f64;
    Ok(BitFrame::from_fn(h, w, |y, x| {
        frames.iter().map(|f| *f.get(y, x)).sum::<f64>() / n > threshold
    }))
}

/// Machine-readable evaluation summary written by the `eval` command.
///
/// `psnr_db` is `null` when the sequences are identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub psnr_db: Option<f64>,
    pub ssim: f64,
    pub ssim_per_frame: Vec<f64>,
    pub ssim_config: SsimConfig,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub fn evaluate(reference: &[Frame], test: &[Frame], cfg: &SsimConfig) -> Result<EvalReport> {
    let (h, w) = check_pair(reference, test)?;
    let p = psnr(reference, test)?;
    let per_frame = ssim_per_frame(reference, test, cfg)?;
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        frames: reference.len(),
        height: h,
        width: w,
        psnr_db: p.is_finite().then_some(p),
        ssim: per_frame.iter().sum::<f64>() / per_frame.len() as f64,
        ssim_per_frame: per_frame,
        ssim_config: *cfg,
    })
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io_at(path, e))
}
