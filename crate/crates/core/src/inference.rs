//! Full-sequence restoration by overlapping 3-D tiles.
//!
//! A sequence is cut into `(T, H, W)` tiles whose origins advance by
//! `patch − overlap` on each axis, the last origin snapped so the tile ends on
//! the boundary. Each tile goes through the network independently and the
//! outputs are blended with a separable weight that ramps linearly across
//! every face shared with a neighbouring tile and is flat elsewhere.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{common_dims, Frame};
use crate::network::{forward, NetworkConfig, NetworkWeights};
use crate::sensor::{detect_bit_level, BitLevel};
use crate::tensor::{Dims5, Tensor5};

pub const DEFAULT_TILE: [usize; 3] = [38, 60, 60];
pub const DEFAULT_OVERLAP: [usize; 3] = [8, 10, 10];

/// Tile layout over a `(T, H, W)` sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    seq: [usize; 3],
    patch: [usize; 3],
    overlap: [usize; 3],
    axis_origins: [Vec<usize>; 3],
}

fn axis_origins(len: usize, patch: usize, overlap: usize) -> Vec<usize> {
    let stride = patch.saturating_sub(overlap).max(1);
    let mut out = vec![0];
    while out.last().expect("nonempty") + patch < len {
        let next = (out.last().expect("nonempty") + stride).min(len - patch);
        out.push(next);
    }
    out
}

impl TilePlan {
    /// Plans tiles of `patch` (clamped per axis to the sequence) overlapping by
    /// `overlap` voxels.
    pub fn new(seq: [usize; 3], patch: [usize; 3], overlap: [usize; 3]) -> Result<Self> {
        if seq.contains(&0) || patch.contains(&0) {
            return Err(Error::Domain(format!(
                "tile planning needs positive extents, got sequence {seq:?} and patch {patch:?}"
            )));
        }
        let patch = [0, 1, 2].map(|a| patch[a].min(seq[a]));
        let overlap = [0, 1, 2].map(|a| overlap[a].min(patch[a] - 1));
        let axis_origins = [0, 1, 2].map(|a| axis_origins(seq[a], patch[a], overlap[a]));
        Ok(Self {
            seq,
            patch,
            overlap,
            axis_origins,
        })
    }

    /// A plan with explicit per-axis origins, used to check blend behaviour on
    /// shifted grids. Every voxel must be covered.
    pub fn from_origins(seq: [usize; 3], patch: [usize; 3], overlap: [usize; 3], origins: [Vec<usize>; 3]) -> Result<Self> {
        if seq.contains(&0) || patch.contains(&0) {
            return Err(Error::Domain("tile planning needs positive extents".into()));
        }
        for a in 0..3 {
            if patch[a] > seq[a] {
                return Err(Error::Plan(format!("axis {a}: patch {} exceeds sequence {}", patch[a], seq[a])));
            }
            let mut covered = vec![false; seq[a]];
            for &o in &origins[a] {
                if o + patch[a] > seq[a] {
                    return Err(Error::Plan(format!("axis {a}: tile at {o} runs past the end")));
                }
                covered[o..o + patch[a]].iter_mut().for_each(|c| *c = true);
            }
            if let Some(gap) = covered.iter().position(|c| !c) {
                return Err(Error::Plan(format!("axis {a}: voxel {gap} is not covered")));
            }
        }
        let mut origins = origins;
        origins.iter_mut().for_each(|o| {
            o.sort_unstable();
            o.dedup();
        });
        Ok(Self {
            seq,
            patch,
            overlap: [0, 1, 2].map(|a| overlap[a].min(patch[a] - 1)),
            axis_origins: origins,
        })
    }

    pub fn seq_dims(&self) -> [usize; 3] {
        self.seq
    }

    /// Effective (clamped) tile extent.
    pub fn patch(&self) -> [usize; 3] {
        self.patch
    }

    pub fn overlap(&self) -> [usize; 3] {
        self.overlap
    }

    pub fn axis_origins(&self, axis: usize) -> &[usize] {
        &self.axis_origins[axis]
    }

    /// All tile origins `[t, y, x]`, time-major.
    pub fn origins(&self) -> Vec<[usize; 3]> {
        let [ts, ys, xs] = &self.axis_origins;
        let mut out = Vec::with_capacity(ts.len() * ys.len() * xs.len());
        for &t in ts {
            for &y in ys {
                for &x in xs {
                    out.push([t, y, x]);
                }
            }
        }
        out
    }

    /// Blend weights along `axis` for a tile starting at `origin`. Faces on
    /// the sequence boundary are not ramped, so weights stay in `(0, 1]`.
    pub fn axis_weights(&self, axis: usize, origin: usize) -> Vec<f64> {
        let p = self.patch[axis];
        let ramp = (self.overlap[axis] + 1) as f64;
        let ramp_lo = origin > 0;
        let ramp_hi = origin + p < self.seq[axis];
        (0..p)
            .map(|i| {
                let lo = if ramp_lo { (i + 1) as f64 / ramp } else { 1.0 };
                let hi = if ramp_hi { (p - i) as f64 / ramp } else { 1.0 };
                lo.min(hi).min(1.0)
            })
            .collect()
    }

    /// Number of tiles covering each voxel, `(T, H, W)` row-major.
    pub fn coverage(&self) -> Vec<u32> {
        let [st, sh, sw] = self.seq;
        let mut cov = vec![0u32; st * sh * sw];
        for [t0, y0, x0] in self.origins() {
            for t in t0..t0 + self.patch[0] {
                for y in y0..y0 + self.patch[1] {
                    let row = (t * sh + y) * sw;
                    cov[row + x0..row + x0 + self.patch[2]].iter_mut().for_each(|c| *c += 1);
                }
            }
        }
        cov
    }
}

/// Plans tiles for a sequence of `seq` = `[T, H, W]`.
pub fn plan_tiles(seq: [usize; 3], patch: [usize; 3], overlap: [usize; 3]) -> Result<TilePlan> {
    TilePlan::new(seq, patch, overlap)
}

/// Cuts tile `origin` out of a `(T, H, W)` row-major volume.
pub fn extract_tile(volume: &[f64], plan: &TilePlan, origin: [usize; 3]) -> Vec<f64> {
    let [_, sh, sw] = plan.seq;
    let [pt, ph, pw] = plan.patch;
    let mut out = Vec::with_capacity(pt * ph * pw);
    for t in origin[0]..origin[0] + pt {
        for y in origin[1]..origin[1] + ph {
            let row = (t * sh + y) * sw + origin[2];
            out.extend_from_slice(&volume[row..row + pw]);
        }
    }
    out
}

/// Blends tiles into a `(T, H, W)` row-major volume as `Σ w·tile / Σ w`.
///
/// Tiles are accumulated in slice order so the result does not depend on
/// how they were produced.
pub fn merge_tiles(tiles: &[([usize; 3], Vec<f64>)], plan: &TilePlan) -> Result<Vec<f64>> {
    let [st, sh, sw] = plan.seq;
    let [pt, ph, pw] = plan.patch;
    let mut acc = vec![0.0; st * sh * sw];
    let mut norm = vec![0.0; st * sh * sw];
    for (origin, tile) in tiles {
        if tile.len() != pt * ph * pw {
            return Err(Error::Shape(format!(
                "tile at {origin:?} has {} values, plan expects {}",
                tile.len(),
                pt * ph * pw
            )));
        }
        if (0..3).any(|a| origin[a] + plan.patch[a] > plan.seq[a]) {
            return Err(Error::Plan(format!("tile at {origin:?} runs past the sequence")));
        }
        let [wt, wy, wx] = [0, 1, 2].map(|a| plan.axis_weights(a, origin[a]));
        for (i, t) in (origin[0]..origin[0] + pt).enumerate() {
            for (j, y) in (origin[1]..origin[1] + ph).enumerate() {
                let row = (t * sh + y) * sw + origin[2];
                let src = &tile[(i * ph + j) * pw..][..pw];
                let wty = wt[i] * wy[j];
                for k in 0..pw {
                    let w = wty * wx[k];
                    acc[row + k] += w * src[k];
                    norm[row + k] += w;
                }
            }
        }
    }
    if let Some(gap) = norm.iter().position(|&n| n == 0.0) {
        let (t, r) = (gap / (sh * sw), gap % (sh * sw));
        return Err(Error::Plan(format!("voxel (t={t}, y={}, x={}) is not covered by any tile", r / sw, r % sw)));
    }
    for (a, n) in acc.iter_mut().zip(&norm) {
        // A voxel inside a single tile keeps its value bit for bit.
        if *n != 1.0 {
            *a /= n;
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RestoreOptions {
    pub tile: [usize; 3],
    pub overlap: [usize; 3],
    /// Bit level the model was trained on; a mismatch with the input is
    /// logged, not rejected.
    pub model_bits: Option<BitLevel>,
}

impl Default for RestoreOptions {
    fn default() -> Self {
        Self {
            tile: DEFAULT_TILE,
            overlap: DEFAULT_OVERLAP,
            model_bits: None,
        }
    }
}

fn check_bit_level(frames: &[Frame], expected: Option<BitLevel>) {
    match (detect_bit_level(frames), expected) {
        (Ok(found), Some(want)) if found != want => {
            log::warn!("input looks like {found} data but the model was trained on {want}")
        }
        (Ok(found), _) => log::info!("input bit level: {found}"),
        (Err(e), _) => log::warn!("could not detect input bit level: {e}"),
    }
}

/// Restores a low-bit sequence to a sequence of the same length and size.
///
/// Only the final block estimate is used. Values are clamped to `[0, 1]`.
pub fn restore(frames: &[Frame], weights: &NetworkWeights, cfg: &NetworkConfig, opts: &RestoreOptions) -> Result<Vec<Frame>> {
    cfg.validate()?;
    weights.check_config(cfg)?;
    let (h, w) = common_dims(frames)?;
    check_bit_level(frames, opts.model_bits);
    let plan = plan_tiles([frames.len(), h, w], opts.tile, opts.overlap)?;
    let volume: Vec<f64> = frames.iter().flat_map(|f| f.as_slice().iter().copied()).collect();
    let [pt, ph, pw] = plan.patch();
    log::info!(
        "restoring {}x{}x{} with {} tiles of {pt}x{ph}x{pw}",
        frames.len(),
        h,
        w,
        plan.origins().len()
    );
    let tiles = plan
        .origins()
        .into_par_iter()
        .map(|origin| {
            let input = Tensor5::from_vec(Dims5::new(1, 1, pt, ph, pw), extract_tile(&volume, &plan, origin))?;
            let out = forward(weights, cfg, &input)?;
            Ok((origin, out.last().as_slice().to_vec()))
        })
        .collect::<Result<Vec<_>>>()?;
    let merged = merge_tiles(&tiles, &plan)?;
    Ok(merged
        .chunks_exact(h * w)
        .map(|p| Frame::from_vec(h, w, p.iter().map(|v| v.clamp(0.0, 1.0)).collect()).expect("plane size"))
        .collect())
}
