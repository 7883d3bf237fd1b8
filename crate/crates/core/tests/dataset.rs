mod common;

use common::*;
use proptest::prelude::*;
use sha2::{Digest, Sha256};
use spad_core::dataset::{
    augment, generate_pairs, load_split, synthesize_pair, write_dataset, AugmentPlan, CleanSequence, DatasetManifest,
    Provenance, SeqDims, SourceSpec, Split,
};
use spad_core::rng;
use spad_core::sensor::{BitLevel, HotPixelMode, HotPixelSpec};
use spad_core::Frame;

fn manifest(seed: u64) -> DatasetManifest {
    DatasetManifest::new(
        seed,
        SourceSpec::SlowGradient,
        SeqDims::new(5, 9, 10),
        4,
        1,
        BitLevel::new(2).unwrap(),
        HotPixelSpec::new(0.02, 3, HotPixelMode::PerSequenceFixed).unwrap(),
    )
    .unwrap()
}

fn digest(pairs: &[spad_core::dataset::TrainingPair]) -> Vec<u8> {
    let mut h = Sha256::new();
    for p in pairs {
        for f in p.input.frames().iter().chain(p.target.frames()) {
            for v in f.as_slice() {
                h.update(v.to_le_bytes());
            }
        }
    }
    h.finalize().to_vec()
}

#[test]
fn regeneration_from_manifest_is_bit_identical() {
    let a = generate_pairs(&manifest(5)).unwrap();
    let b = generate_pairs(&manifest(5)).unwrap();
    assert_eq!(digest(&a), digest(&b));
    assert_ne!(digest(&a), digest(&generate_pairs(&manifest(6)).unwrap()));
}

#[test]
fn written_dataset_loads_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(8);
    let pairs = write_dataset(dir.path(), &m).unwrap();
    let (m2, train) = load_split(dir.path(), Split::Train).unwrap();
    let (_, test) = load_split(dir.path(), Split::Test).unwrap();
    assert_eq!(m2, m);
    assert_eq!(train.len(), 3);
    assert_eq!(test.len(), 1);
    for (orig, loaded) in pairs.iter().zip(train.iter().chain(&test)) {
        // Inputs are stored losslessly; targets at 16-bit precision.
        assert_eq!(orig.input.frames(), loaded.input.frames());
        for (a, b) in orig.target.frames().iter().zip(loaded.target.frames()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() <= 0.5 / 65535.0 + 1e-15);
            }
        }
    }
}

#[test]
fn synthesized_input_is_unbiased() {
    // Average 2000 degradations of one clean frame; every bit level.
    let clean = CleanSequence::new(
        vec![Frame::from_fn(4, 4, |y, x| 0.05 + 0.9 * (y * 4 + x) as f64 / 15.0)],
        Provenance {
            source: "ramp".into(),
            origin: [0; 3],
        },
    )
    .unwrap();
    let m = 2000usize;
    for bits in 1..=4u8 {
        let b = BitLevel::new(bits).unwrap();
        let nb = b.n_frames() as f64;
        let mut r = rng(bits as u64);
        let mut sum = [0.0; 16];
        for _ in 0..m {
            let p = synthesize_pair(&clean, b, &HotPixelSpec::none(), &mut r).unwrap();
            for (s, v) in sum.iter_mut().zip(p.input.frames()[0].as_slice()) {
                *s += v;
            }
        }
        // Pooled over the 16 pixels: mean of m·16 accumulated-Bernoulli draws.
        let p: &[f64] = clean.frames()[0].as_slice();
        let total: f64 = sum.iter().sum::<f64>() / m as f64;
        let expect: f64 = p.iter().sum();
        let sigma = (p.iter().map(|q| q * (1.0 - q) / nb).sum::<f64>() / m as f64).sqrt();
        assert!((total - expect).abs() <= 3.0 * sigma, "{bits}-bit: {total} vs {expect} (σ {sigma})");
        for (i, (s, q)) in sum.iter().zip(p).enumerate() {
            let sd = (q * (1.0 - q) / (nb * m as f64)).sqrt();
            assert!((s / m as f64 - q).abs() <= 4.5 * sd, "{bits}-bit pixel {i}");
        }
    }
}

#[test]
fn hot_pixels_are_saturated_and_counted() {
    let m = manifest(12);
    let pairs = generate_pairs(&m).unwrap();
    for (i, p) in pairs.iter().enumerate() {
        let spec = m.hot_pixels_for(i);
        let sites = spec.sites(9, 10, 0);
        assert_eq!(sites.len(), spec.count(9, 10));
        for f in p.input.frames() {
            for &s in &sites {
                assert_eq!(f.as_slice()[s], 1.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn augmentation_keeps_levels_and_pairing(seed in any::<u64>(), bits in 1u8..=4) {
        let b = BitLevel::new(bits).unwrap();
        let clean = spad_core::dataset::synthetic_clean_sequences(1, SeqDims::new(3, 8, 8), seed).remove(0);
        let mut r = rng::stream(seed, 1);
        let pair = synthesize_pair(&clean, b, &HotPixelSpec::default(), &mut r).unwrap();
        let out = augment(&pair, &mut r);
        prop_assert_eq!(out.bit_level(), b);
        prop_assert_eq!(out.input.frames().len(), 3);
        prop_assert_eq!(out.input.frames()[0].dims(), out.target.frames()[0].dims());
        for f in out.input.frames() {
            prop_assert!(f.as_slice().iter().all(|&v| b.admits(v)));
        }
        for f in out.target.frames() {
            prop_assert!(f.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        prop_assert_eq!(AugmentPlan::IDENTITY.apply(&pair), pair);
    }
}
