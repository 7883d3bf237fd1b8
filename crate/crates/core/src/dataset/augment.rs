//! Joint geometric augmentation of input/target pairs.

use rand::RngCore;

use super::{CleanSequence, TrainingPair};
use crate::frame::Frame;
use crate::rng;
use crate::sensor::QuantizedSequence;

/// Spatial rescale factors; the patch is resampled about its centre and
/// cropped or edge-padded back to its original size.
pub const RESCALE_FACTORS: [f64; 5] = [0.8, 0.9, 1.0, 1.1, 1.25];

/// One draw of augmentation choices, applied identically to input and target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentPlan {
    pub scale: f64,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    /// Clockwise rotation by `quarter_turns · 90°`.
    pub quarter_turns: u8,
}

impl AugmentPlan {
    pub const IDENTITY: AugmentPlan = AugmentPlan {
        scale: 1.0,
        flip_horizontal: false,
        flip_vertical: false,
        quarter_turns: 0,
    };

    /// Independent coin flips for each transform. Odd quarter turns are only
    /// drawn for square frames so that batch shapes stay fixed.
    pub fn draw(rng: &mut impl RngCore, square: bool) -> Self {
        let scale = if rng::coin(rng) {
            RESCALE_FACTORS[rng::below(rng, RESCALE_FACTORS.len() as u64) as usize]
        } else {
            1.0
        };
        let flip_horizontal = rng::coin(rng);
        let flip_vertical = rng::coin(rng);
        let mut quarter_turns = rng::below(rng, 4) as u8;
        if !square {
            quarter_turns &= !1;
        }
        Self {
            scale,
            flip_horizontal,
            flip_vertical,
            quarter_turns,
        }
    }

    fn apply_frame(&self, frame: &Frame) -> Frame {
        let mut f = if self.scale == 1.0 {
            frame.clone()
        } else {
            rescale_about_centre(frame, self.scale)
        };
        if self.flip_horizontal {
            f = Frame::from_fn(f.height(), f.width(), |y, x| *f.get(y, f.width() - 1 - x));
        }
        if self.flip_vertical {
            f = Frame::from_fn(f.height(), f.width(), |y, x| *f.get(f.height() - 1 - y, x));
        }
        for _ in 0..self.quarter_turns % 4 {
            f = rotate_clockwise(&f);
        }
        f
    }

    pub fn apply(&self, pair: &TrainingPair) -> TrainingPair {
        let bits = pair.bit_level();
        let input = pair
            .input
            .frames()
            .iter()
            .map(|f| {
                let mut g = self.apply_frame(f);
                if self.scale != 1.0 {
                    for v in g.as_mut_slice() {
                        *v = bits.quantize(*v);
                    }
                }
                g
            })
            .collect();
        let target = pair.target.frames().iter().map(|f| self.apply_frame(f)).collect();
        TrainingPair {
            input: QuantizedSequence::new_unchecked(input, bits),
            target: CleanSequence {
                frames: target,
                provenance: pair.target.provenance.clone(),
            },
        }
    }
}

/// Draws a plan and applies it.
pub fn augment(pair: &TrainingPair, rng: &mut impl RngCore) -> TrainingPair {
    let d = pair.dims();
    AugmentPlan::draw(rng, d.height == d.width).apply(pair)
}

fn rotate_clockwise(f: &Frame) -> Frame {
    let (h, w) = f.dims();
    Frame::from_fn(w, h, |y, x| *f.get(h - 1 - x, y))
}

/// Bilinear resample magnified by `scale` about the frame centre, same output
/// size, clamped to the edge outside the source.
fn rescale_about_centre(f: &Frame, scale: f64) -> Frame {
    let (h, w) = f.dims();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    Frame::from_fn(h, w, |y, x| {
        let sy = ((y as f64 - cy) / scale + cy).clamp(0.0, h as f64 - 1.0);
        let sx = ((x as f64 - cx) / scale + cx).clamp(0.0, w as f64 - 1.0);
        let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
        let top = f.get(y0, x0) * (1.0 - fx) + f.get(y0, x1) * fx;
        let bottom = f.get(y1, x0) * (1.0 - fx) + f.get(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Provenance;
    use crate::sensor::BitLevel;

    fn pair(h: usize, w: usize) -> TrainingPair {
        let b = BitLevel::new(4).unwrap();
        let frames: Vec<Frame> = (0..3)
            .map(|t| Frame::from_fn(h, w, |y, x| ((t + 3 * y + 5 * x) % 16) as f64 / 15.0))
            .collect();
        let target = CleanSequence::new(
            frames.iter().map(|f| f.map(|v| v * 0.9 + 0.05)).collect(),
            Provenance {
                source: "t".into(),
                origin: [0; 3],
            },
        )
        .unwrap();
        TrainingPair::new(QuantizedSequence::new(frames, b).unwrap(), target).unwrap()
    }

    fn histogram(frames: &[Frame]) -> Vec<u64> {
        let mut v: Vec<u64> = frames.iter().flat_map(|f| f.as_slice().iter().map(|x| x.to_bits())).collect();
        v.sort_unstable();
        v
    }

    #[test]
    fn identity_plan_is_noop() {
        let p = pair(6, 6);
        assert_eq!(AugmentPlan::IDENTITY.apply(&p), p);
    }

    #[test]
    fn half_turn_is_an_involution() {
        let p = pair(5, 7);
        let plan = AugmentPlan {
            quarter_turns: 2,
            ..AugmentPlan::IDENTITY
        };
        assert_eq!(plan.apply(&plan.apply(&p)), p);
        let quarter = AugmentPlan {
            quarter_turns: 1,
            ..AugmentPlan::IDENTITY
        };
        let sq = pair(6, 6);
        let four = (0..4).fold(sq.clone(), |acc, _| quarter.apply(&acc));
        assert_eq!(four, sq);
    }

    #[test]
    fn flips_permute_pixels() {
        let p = pair(6, 6);
        for plan in [
            AugmentPlan {
                flip_horizontal: true,
                ..AugmentPlan::IDENTITY
            },
            AugmentPlan {
                flip_vertical: true,
                ..AugmentPlan::IDENTITY
            },
        ] {
            let q = plan.apply(&p);
            assert_ne!(q, p);
            assert_eq!(histogram(q.input.frames()), histogram(p.input.frames()));
            assert_eq!(histogram(q.target.frames()), histogram(p.target.frames()));
        }
    }

    #[test]
    fn rescale_requantizes_input_and_keeps_ranges() {
        let p = pair(8, 8);
        for &scale in &RESCALE_FACTORS {
            let q = AugmentPlan {
                scale,
                ..AugmentPlan::IDENTITY
            }
            .apply(&p);
            assert_eq!(q.dims(), p.dims());
            let b = q.bit_level();
            assert!(q.input.frames().iter().flat_map(|f| f.as_slice()).all(|&v| b.admits(v)));
            assert!(q.target.frames().iter().flat_map(|f| f.as_slice()).all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn random_draws_keep_pair_dims() {
        let mut r = rng::stream(2, 0);
        let rect = pair(4, 6);
        for _ in 0..50 {
            assert_eq!(augment(&rect, &mut r).dims(), rect.dims());
        }
    }
}
