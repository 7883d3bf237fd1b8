//! Oracle checks shared by the focused test files and the acceptance gate.
//! Each returns the measured error so callers apply their own tolerance.

use super::*;
use spad_core::network::{forward, init_weights, loss_and_gradients, multi_block_loss, NetworkConfig, NetworkWeights, SkipTopology};
use spad_core::rng::{self, StreamRng};
use spad_core::sensor::sample_binary_frame;
use spad_core::tensor::{
    charbonnier, conv3d_backward, conv3d_forward, leaky_relu, leaky_relu_backward, ConvKernel3, Dims5, LossConfig,
    Padding, ParamSet, Tensor5,
};
use spad_core::Frame;

pub struct ConvCase {
    pub input: Tensor5,
    pub kernel: ConvKernel3,
    pub padding: Padding,
}

fn odd(r: &mut StreamRng, max: usize) -> usize {
    2 * rng::below(r, (max / 2 + 1) as u64) as usize + 1
}

pub fn random_conv_case(seed: u64) -> ConvCase {
    let mut r = rng(seed);
    let k = [odd(&mut r, 5), odd(&mut r, 5), odd(&mut r, 5)];
    let padding = if rng::coin(&mut r) { Padding::Same } else { Padding::Valid };
    let mut extent = |kk: usize| {
        let lo = if padding == Padding::Valid { kk } else { 1 };
        lo + rng::below(&mut r, 6) as usize
    };
    let (t, h, w) = (extent(k[0]), extent(k[1]), extent(k[2]));
    let n = 1 + rng::below(&mut r, 2) as usize;
    let c_in = 1 + rng::below(&mut r, 3) as usize;
    let c_out = 1 + rng::below(&mut r, 3) as usize;
    let input = random_tensor(Dims5::new(n, c_in, t, h, w), &mut r, -1.0, 1.0);
    let weights = random_tensor(Dims5::new(c_out, c_in, k[0], k[1], k[2]), &mut r, -1.0, 1.0);
    let bias = (0..c_out).map(|_| uniform_in(&mut r, -0.5, 0.5)).collect();
    ConvCase {
        input,
        kernel: ConvKernel3::new(weights, bias).unwrap(),
        padding,
    }
}

/// Library forward pass against direct summation, max-relative.
pub fn conv_forward_error(seed: u64) -> f64 {
    let c = random_conv_case(seed);
    let fast = conv3d_forward(&c.input, &c.kernel, c.padding).unwrap();
    let slow = naive_conv3d(&c.input, c.kernel.weights(), c.kernel.bias(), c.padding);
    if fast.dims() != slow.dims() {
        return f64::INFINITY;
    }
    max_rel_err(fast.as_slice(), slow.as_slice())
}

fn dot(a: &Tensor5, b: &Tensor5) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Convolution input, weight and bias gradients against central differences
/// of `<conv(x), probe>`.
pub fn conv_fd_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = random_tensor(Dims5::new(2, 2, 4, 5, 6), &mut r, -1.0, 1.0);
    let w = random_tensor(Dims5::new(3, 2, 3, 3, 3), &mut r, -0.5, 0.5);
    let b: Vec<f64> = (0..3).map(|_| uniform_in(&mut r, -0.5, 0.5)).collect();
    let kernel = ConvKernel3::new(w.clone(), b.clone()).unwrap();
    let probe = random_tensor(Dims5::new(2, 3, 4, 5, 6), &mut r, -1.0, 1.0);
    let loss = |x: &Tensor5, k: &ConvKernel3| dot(&conv3d_forward(x, k, Padding::Same).unwrap(), &probe);
    let g = conv3d_backward(&x, &kernel, &probe, Padding::Same).unwrap();

    let h = 1e-4;
    let (mut fd, mut an) = (vec![], vec![]);
    let mut xs = x.as_slice().to_vec();
    for i in (0..xs.len()).step_by(7) {
        fd.push(central_difference(&mut xs, i, h, |v| {
            loss(&Tensor5::from_vec(x.dims(), v.to_vec()).unwrap(), &kernel)
        }));
        an.push(g.input.as_slice()[i]);
    }
    let mut ws = w.as_slice().to_vec();
    for i in (0..ws.len()).step_by(5) {
        fd.push(central_difference(&mut ws, i, h, |v| {
            let k = ConvKernel3::new(Tensor5::from_vec(w.dims(), v.to_vec()).unwrap(), b.clone()).unwrap();
            loss(&x, &k)
        }));
        an.push(g.weights.as_slice()[i]);
    }
    let mut bs = b.clone();
    for i in 0..bs.len() {
        fd.push(central_difference(&mut bs, i, h, |v| {
            loss(&x, &ConvKernel3::new(w.clone(), v.to_vec()).unwrap())
        }));
        an.push(g.bias[i]);
    }
    max_rel_err(&an, &fd)
}

/// Leaky ReLU gradient, with samples kept away from the kink so the
/// difference quotient is exact.
pub fn leaky_fd_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = Tensor5::from_fn(Dims5::new(1, 2, 3, 4, 5), |_| {
        let v = uniform_in(&mut r, 0.01, 1.0);
        if rng::coin(&mut r) {
            v
        } else {
            -v
        }
    })
    .unwrap();
    let probe = random_tensor(x.dims(), &mut r, -1.0, 1.0);
    let slope = 0.1;
    let y = leaky_relu(&x, slope);
    let g = leaky_relu_backward(&y, &probe, slope).unwrap();
    let mut xs = x.as_slice().to_vec();
    let fd: Vec<f64> = (0..xs.len())
        .map(|i| {
            central_difference(&mut xs, i, 1e-5, |v| {
                dot(&leaky_relu(&Tensor5::from_vec(x.dims(), v.to_vec()).unwrap(), slope), &probe)
            })
        })
        .collect();
    max_rel_err(g.as_slice(), &fd)
}

pub fn charbonnier_fd_error(seed: u64) -> f64 {
    let cfg = LossConfig::default();
    let mut r = rng(seed);
    let pred = random_tensor(Dims5::new(2, 1, 3, 4, 4), &mut r, 0.0, 1.0);
    let target = random_tensor(pred.dims(), &mut r, 0.0, 1.0);
    let (_, g) = charbonnier(&pred, &target, &cfg).unwrap();
    let mut ps = pred.as_slice().to_vec();
    let fd: Vec<f64> = (0..ps.len())
        .map(|i| {
            central_difference(&mut ps, i, 1e-7, |v| {
                charbonnier(&Tensor5::from_vec(pred.dims(), v.to_vec()).unwrap(), &target, &cfg)
                    .unwrap()
                    .0
            })
        })
        .collect();
    max_rel_err(g.as_slice(), &fd)
}

/// End-to-end check on a K=2, 4-channel network over an 8³ patch: six
/// entries of every weight and bias buffer against central differences of
/// the summed block loss, norm-relative.
pub fn network_fd_error(skip: SkipTopology, seed: u64) -> f64 {
    let cfg = NetworkConfig {
        num_blocks: 2,
        channels: 4,
        skip,
        ..NetworkConfig::default()
    };
    let mut r = rng(seed + 500);
    let weights = init_weights(&cfg, seed).unwrap();
    let input = random_tensor(Dims5::new(1, 1, 8, 8, 8), &mut r, 0.0, 1.0);
    let target = random_tensor(input.dims(), &mut r, 0.0, 1.0);
    let loss_cfg = LossConfig::default();
    let lg = loss_and_gradients(&weights, &cfg, &input, &target, &loss_cfg).unwrap();
    let analytic: Vec<Vec<f64>> = lg.gradients.param_slices().iter().map(|s| s.to_vec()).collect();

    let eval = |w: &NetworkWeights| multi_block_loss(&forward(w, &cfg, &input).unwrap(), &target, &loss_cfg).unwrap();
    let h = 1e-6;
    let (mut fd, mut an) = (vec![], vec![]);
    for (buf, grads) in analytic.iter().enumerate() {
        for _ in 0..grads.len().min(6) {
            let i = rng::below(&mut r, grads.len() as u64) as usize;
            let mut w = weights.clone();
            let orig = w.param_slices()[buf][i];
            w.param_slices_mut()[buf][i] = orig + h;
            let up = eval(&w);
            w.param_slices_mut()[buf][i] = orig - h;
            let down = eval(&w);
            fd.push((up - down) / (2.0 * h));
            an.push(grads[i]);
        }
    }
    norm_rel_err(&an, &fd)
}

/// Pooled and per-pixel z-scores of `m` Bernoulli readouts of `intensity`.
pub fn bernoulli_z_scores(intensity: &Frame, m: usize, seed: u64) -> (f64, Vec<f64>) {
    let mut r = rng(seed);
    let mut counts = vec![0u64; intensity.len()];
    for _ in 0..m {
        let b = sample_binary_frame(intensity, &mut r).unwrap();
        for (c, &bit) in counts.iter_mut().zip(b.as_slice()) {
            *c += bit as u64;
        }
    }
    let mf = m as f64;
    let per_pixel: Vec<f64> = counts
        .iter()
        .zip(intensity.as_slice())
        .map(|(&c, &p)| (c as f64 - mf * p) / (mf * p * (1.0 - p)).sqrt())
        .collect();
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    let mean: f64 = intensity.as_slice().iter().map(|p| mf * p).sum();
    let var: f64 = intensity.as_slice().iter().map(|p| mf * p * (1.0 - p)).sum();
    ((total - mean) / var.sqrt(), per_pixel)
}
