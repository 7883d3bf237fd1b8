//! Procedural clean sequences: constants and slow linear ramps in space and
//! time. Used as a license-free stand-in corpus and for small training tasks
//! where the optimal restorer is known to be local averaging.

use rand::RngCore;

use super::{CleanSequence, Provenance, SeqDims};
use crate::frame::Frame;
use crate::rng;

pub const SLOW_GRADIENT_SOURCE: &str = "synthetic:slow-gradient";

/// A sequence that is constant with probability 1/2 and otherwise a linear
/// ramp whose total swing is at most 0.3 across each spatial axis and 0.2
/// across the duration. Base levels lie in `[0.2, 0.8]`.
pub fn slow_gradient_sequence(dims: SeqDims, rng: &mut impl RngCore) -> CleanSequence {
    let base = 0.2 + 0.6 * rng::uniform(rng);
    let (gy, gx, gt) = if rng::coin(rng) {
        (0.0, 0.0, 0.0)
    } else {
        (
            0.6 * rng::uniform(rng) - 0.3,
            0.6 * rng::uniform(rng) - 0.3,
            0.4 * rng::uniform(rng) - 0.2,
        )
    };
    let norm = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 - 0.5 } else { 0.0 };
    let frames = (0..dims.frames)
        .map(|t| {
            let tt = gt * norm(t, dims.frames);
            Frame::from_fn(dims.height, dims.width, |y, x| {
                (base + gy * norm(y, dims.height) + gx * norm(x, dims.width) + tt).clamp(0.0, 1.0)
            })
        })
        .collect();
    CleanSequence::new(
        frames,
        Provenance {
            source: SLOW_GRADIENT_SOURCE.into(),
            origin: [0; 3],
        },
    )
    .expect("values clamped to [0, 1]")
}

/// `count` slow-gradient sequences; sequence `i` draws from stream `(seed, i)`.
pub fn synthetic_clean_sequences(count: usize, dims: SeqDims, seed: u64) -> Vec<CleanSequence> {
    (0..count)
        .map(|i| slow_gradient_sequence(dims, &mut rng::stream(seed, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_and_smoothness() {
        let seqs = synthetic_clean_sequences(20, SeqDims::new(8, 16, 16), 1);
        let mut constants = 0;
        for s in &seqs {
            let f0 = &s.frames()[0];
            let all: Vec<f64> = s.frames().iter().flat_map(|f| f.as_slice().iter().copied()).collect();
            assert!(all.iter().all(|v| (0.0..=1.0).contains(v)));
            if all.iter().all(|&v| v == all[0]) {
                constants += 1;
            }
            // Neighbouring pixels differ by at most 0.3 / 15.
            for y in 0..16 {
                for x in 1..16 {
                    assert!((f0.get(y, x) - f0.get(y, x - 1)).abs() <= 0.3 / 15.0 + 1e-12);
                }
            }
        }
        assert!(constants > 0 && constants < 20);
        assert_eq!(seqs, synthetic_clean_sequences(20, SeqDims::new(8, 16, 16), 1));
    }
}
