//! Independent reference implementations shared by the integration tests.
//! Everything here is written for clarity, not speed, and deliberately avoids
//! the library's own kernels.

#![allow(dead_code)]

pub mod checks;

use spad_core::rng::{self, StreamRng};
use spad_core::tensor::{Dims5, Padding, Tensor5};
use spad_core::Frame;

pub fn rng(seed: u64) -> StreamRng {
    rng::stream(seed, 0)
}

pub fn uniform_in(r: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng::uniform(r)
}

pub fn random_tensor(dims: Dims5, r: &mut StreamRng, lo: f64, hi: f64) -> Tensor5 {
    Tensor5::from_fn(dims, |_| uniform_in(r, lo, hi)).unwrap()
}

/// `max |a - b| / max |reference|`.
pub fn max_rel_err(a: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(a.len(), reference.len());
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(reference).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// `||a - b|| / ||reference||` in the Euclidean norm.
pub fn norm_rel_err(a: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(a.len(), reference.len());
    let num: f64 = a.iter().zip(reference).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = reference.iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Cross-correlation by direct summation: weights `(C_out, C_in, kt, kh, kw)`.
pub fn naive_conv3d(input: &Tensor5, weights: &Tensor5, bias: &[f64], padding: Padding) -> Tensor5 {
    let d = input.dims();
    let k = weights.dims();
    let (pt, ph, pw) = match padding {
        Padding::Same => (k.t / 2, k.h / 2, k.w / 2),
        Padding::Valid => (0, 0, 0),
    };
    let (to, ho, wo) = (d.t + 2 * pt + 1 - k.t, d.h + 2 * ph + 1 - k.h, d.w + 2 * pw + 1 - k.w);
    let out_dims = Dims5::new(d.n, k.n, to, ho, wo);
    let mut out = Tensor5::zeros(out_dims).unwrap();
    for n in 0..d.n {
        for co in 0..k.n {
            for t in 0..to {
                for y in 0..ho {
                    for x in 0..wo {
                        let mut acc = bias[co];
                        for ci in 0..d.c {
                            for dt in 0..k.t {
                                for dy in 0..k.h {
                                    for dx in 0..k.w {
                                        let ti = t as isize + dt as isize - pt as isize;
                                        let yi = y as isize + dy as isize - ph as isize;
                                        let xi = x as isize + dx as isize - pw as isize;
                                        if ti < 0
                                            || yi < 0
                                            || xi < 0
                                            || ti >= d.t as isize
                                            || yi >= d.h as isize
                                            || xi >= d.w as isize
                                        {
                                            continue;
                                        }
                                        acc += weights.get([co, ci, dt, dy, dx])
                                            * input.get([n, ci, ti as usize, yi as usize, xi as usize]);
                                    }
                                }
                            }
                        }
                        out.set([n, co, t, y, x], acc);
                    }
                }
            }
        }
    }
    out
}

/// SSIM of one frame pair by explicit 2-D windows (no separable filtering).
pub fn naive_ssim(a: &Frame, b: &Frame) -> f64 {
    const WIN: usize = 11;
    const SIGMA: f64 = 1.5;
    let c1 = (0.01f64).powi(2);
    let c2 = (0.03f64).powi(2);
    let r = (WIN / 2) as f64;
    let mut g = [[0.0; WIN]; WIN];
    let mut total = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - r, j as f64 - r);
            *v = (-(dy * dy + dx * dx) / (2.0 * SIGMA * SIGMA)).exp();
            total += *v;
        }
    }
    let (h, w) = a.dims();
    let mut sum = 0.0;
    let mut count = 0;
    for y in 0..=h - WIN {
        for x in 0..=w - WIN {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..WIN {
                for j in 0..WIN {
                    let wgt = g[i][j] / total;
                    ma += wgt * a.get(y + i, x + j);
                    mb += wgt * b.get(y + i, x + j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..WIN {
                for j in 0..WIN {
                    let wgt = g[i][j] / total;
                    let da = a.get(y + i, x + j) - ma;
                    let db = b.get(y + i, x + j) - mb;
                    va += wgt * da * da;
                    vb += wgt * db * db;
                    cov += wgt * da * db;
                }
            }
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

/// Central finite difference of `f` at `x` in coordinate `i`.
pub fn central_difference(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let up = f(x);
    x[i] = orig - h;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * h)
}
