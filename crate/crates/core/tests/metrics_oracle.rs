mod common;

use common::*;
use proptest::prelude::*;
use spad_core::metrics::{median_hot_pixel_fix, psnr, ssim, ssim_frame, SsimConfig};
use spad_core::rng;
use spad_core::{BitFrame, Frame};

fn random_frame(r: &mut rng::StreamRng, h: usize, w: usize) -> Frame {
    Frame::from_fn(h, w, |_, _| uniform_in(r, 0.0, 1.0))
}

#[test]
fn psnr_of_constant_offset_is_20_db() {
    let a: Vec<Frame> = (0..4).map(|i| Frame::filled(8, 8, 0.1 * i as f64)).collect();
    let b: Vec<Frame> = a.iter().map(|f| f.map(|v| v + 0.1)).collect();
    assert!((psnr(&a, &b).unwrap() - 20.0).abs() <= 1e-6);
    assert!((psnr(&b, &a).unwrap() - 20.0).abs() <= 1e-6);
}

#[test]
fn psnr_falls_as_noise_grows() {
    let mut r = rng(1);
    let clean = vec![random_frame(&mut r, 24, 24); 3];
    let noisy = |sigma: f64, r: &mut rng::StreamRng| -> Vec<Frame> {
        clean.iter().map(|f| f.map(|v| v + sigma * (uniform_in(r, -1.0, 1.0)))).collect()
    };
    let p: Vec<f64> = [0.01, 0.05, 0.2].iter().map(|&s| psnr(&clean, &noisy(s, &mut r)).unwrap()).collect();
    assert!(p[0] > p[1] && p[1] > p[2], "{p:?}");
}

#[test]
fn ssim_matches_direct_window_implementation() {
    let mut r = rng(9);
    let cfg = SsimConfig::default();
    for case in 0..5 {
        let a = random_frame(&mut r, 16 + case, 20);
        // Correlated pair: a blend of `a` and fresh noise.
        let noise = random_frame(&mut r, 16 + case, 20);
        let b = Frame::from_fn(a.height(), a.width(), |y, x| 0.7 * a.get(y, x) + 0.3 * noise.get(y, x));
        let lib = ssim_frame(&a, &b, &cfg).unwrap();
        let oracle = naive_ssim(&a, &b);
        assert!((lib - oracle).abs() <= 1e-4, "case {case}: {lib} vs {oracle}");
        assert!((lib - ssim_frame(&b, &a, &cfg).unwrap()).abs() <= 1e-15);
    }
}

#[test]
fn ssim_basic_properties() {
    let mut r = rng(3);
    let a = vec![random_frame(&mut r, 12, 12), random_frame(&mut r, 12, 12)];
    assert_eq!(ssim(&a, &a, &SsimConfig::default()).unwrap(), 1.0);
    let bin: Vec<Frame> = a.iter().map(|f| f.map(|&v| if v > 0.5 { 1.0 } else { 0.0 })).collect();
    let inv: Vec<Frame> = bin.iter().map(|f| f.map(|v| 1.0 - v)).collect();
    assert!(ssim(&bin, &inv, &SsimConfig::default()).unwrap() <= 0.0);
}

fn centre_mask(h: usize, w: usize, y: usize, x: usize) -> BitFrame {
    let mut m = BitFrame::filled(h, w, false);
    m.set(y, x, true);
    m
}

#[test]
fn median_fix_hand_cases() {
    // Neighbours 1..8 around a hot centre: middle two are 4 and 5.
    let vals = [1.0, 2.0, 3.0, 4.0, 0.99, 5.0, 6.0, 7.0, 8.0];
    let f = Frame::from_vec(3, 3, vals.to_vec()).unwrap();
    let fixed = median_hot_pixel_fix(&f, &centre_mask(3, 3, 1, 1)).unwrap();
    assert_eq!(*fixed.frame.get(1, 1), 4.5);
    assert!(fixed.unfixed.is_empty());

    // Constant frame with one hot pixel.
    let mut c = Frame::filled(5, 6, 0.25);
    c.set(3, 4, 1.0);
    assert_eq!(median_hot_pixel_fix(&c, &centre_mask(5, 6, 3, 4)).unwrap().frame, Frame::filled(5, 6, 0.25));

    // Border pixels whose neighbourhoods include another masked pixel.
    let g = Frame::from_vec(2, 4, vec![0.1, 0.9, 0.3, 0.0, 0.5, 0.7, 0.2, 0.0]).unwrap();
    let mut m = BitFrame::filled(2, 4, false);
    m.set(0, 1, true);
    m.set(1, 2, true);
    // Neighbours of (0,1) without masked ones: 0.1, 0.3, 0.5, 0.7 -> 0.4.
    // Neighbours of (1,2) without masked ones: 0.3, 0.0, 0.7, 0.0 -> 0.15.
    let out = median_hot_pixel_fix(&g, &m).unwrap().frame;
    assert!((out.get(0, 1) - 0.4).abs() < 1e-15);
    assert!((out.get(1, 2) - 0.15).abs() < 1e-15);

    // Empty mask leaves the frame alone.
    assert_eq!(median_hot_pixel_fix(&g, &BitFrame::filled(2, 4, false)).unwrap().frame, g);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn median_fix_is_idempotent(h in 1usize..8, w in 1usize..8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_frame(&mut r, h, w);
        let m = BitFrame::from_fn(h, w, |_, _| uniform_in(&mut r, 0.0, 1.0) < 0.2);
        let once = median_hot_pixel_fix(&f, &m).unwrap().frame;
        let twice = median_hot_pixel_fix(&once, &m).unwrap().frame;
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn metrics_are_symmetric(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = vec![random_frame(&mut r, 11, 13)];
        let b = vec![random_frame(&mut r, 11, 13)];
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        let cfg = SsimConfig::default();
        prop_assert!((ssim(&a, &b, &cfg).unwrap() - ssim(&b, &a, &cfg).unwrap()).abs() < 1e-15);
    }
}
