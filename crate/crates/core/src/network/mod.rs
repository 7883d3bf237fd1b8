//! Cascaded 3-D convolutional residual blocks.
//!
//! Each block runs `input conv → LReLU → (conv → LReLU)×m → output conv` and
//! adds its skip input to the result, producing an estimate `û_k` of the clean
//! patch. Block `k` consumes `û_{k-1}` (the raw patch for the first block).
//! Training minimises the sum over blocks of the Charbonnier loss of every
//! estimate, so earlier blocks get gradient both directly and through the
//! blocks after them.

mod checkpoint;
mod train;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{
    charbonnier, conv3d_backward, conv3d_backward_params, conv3d_forward, elementwise_add, leaky_relu,
    leaky_relu_backward, ConvKernel3, Dims5, LossConfig, Padding, ParamSet, Tensor5,
};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, FloatFormat,
    CHECKPOINT_HEADER_LEN, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use train::{make_batch, train, TrainConfig, TrainOutcome, TrainState};

/// What the skip connection of block `k > 1` adds back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipTopology {
    /// `û_k = û_{k-1} + R_k(û_{k-1})`.
    #[default]
    Cascade,
    /// `û_k = x + R_k(û_{k-1})`, every skip adds the raw input patch.
    RawInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_blocks: usize,
    pub channels: usize,
    /// `[k_t, k_h, k_w]`, odd.
    pub kernel: [usize; 3],
    pub leaky_slope: f64,
    /// Convolutions per block: one input, `n - 2` intermediate, one output.
    pub convs_per_block: usize,
    #[serde(default)]
    pub skip: SkipTopology,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_blocks: 3,
            channels: 60,
            kernel: [3, 3, 3],
            leaky_slope: 0.1,
            convs_per_block: 5,
            skip: SkipTopology::Cascade,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(format!("network config: {m}")));
        if self.num_blocks == 0 {
            return bad("num_blocks must be >= 1".into());
        }
        if self.channels == 0 {
            return bad("channels must be >= 1".into());
        }
        if self.kernel.iter().any(|&k| k % 2 == 0) {
            return bad(format!("kernel extents must be odd, got {:?}", self.kernel));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad(format!("leaky_slope must lie in (0, 1), got {}", self.leaky_slope));
        }
        if self.convs_per_block < 2 {
            return bad("convs_per_block must be >= 2".into());
        }
        Ok(())
    }

    /// `(C_out, C_in)` of each convolution in a block.
    pub fn layer_channels(&self) -> Vec<(usize, usize)> {
        let c = self.channels;
        let mut v = vec![(c, 1)];
        v.extend(std::iter::repeat_n((c, c), self.convs_per_block - 2));
        v.push((1, c));
        v
    }

    pub fn param_count(&self) -> usize {
        let taps: usize = self.kernel.iter().product();
        self.num_blocks
            * self
                .layer_channels()
                .iter()
                .map(|&(o, i)| o * i * taps + o)
                .sum::<usize>()
    }
}

/// Kernels of every block, `blocks[k][layer]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    blocks: Vec<Vec<ConvKernel3>>,
}

impl NetworkWeights {
    pub fn zeros(cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let block = cfg
            .layer_channels()
            .into_iter()
            .map(|(o, i)| ConvKernel3::zeros(o, i, cfg.kernel))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            blocks: vec![block; cfg.num_blocks],
        })
    }

    pub fn blocks(&self) -> &[Vec<ConvKernel3>] {
        &self.blocks
    }

    pub fn block_mut(&mut self, k: usize) -> &mut [ConvKernel3] {
        &mut self.blocks[k]
    }

    /// Fails with [`Error::ConfigMismatch`] unless every layer has the shape
    /// `cfg` prescribes.
    pub fn check_config(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.blocks.len() != cfg.num_blocks {
            return Err(Error::ConfigMismatch(format!(
                "weights have {} blocks, config {}",
                self.blocks.len(),
                cfg.num_blocks
            )));
        }
        let expect = cfg.layer_channels();
        for (k, block) in self.blocks.iter().enumerate() {
            if block.len() != expect.len() {
                return Err(Error::ConfigMismatch(format!(
                    "block {k} has {} layers, config {}",
                    block.len(),
                    expect.len()
                )));
            }
            for (l, (layer, &(o, i))) in block.iter().zip(&expect).enumerate() {
                if layer.c_out() != o || layer.c_in() != i || layer.extent() != cfg.kernel {
                    return Err(Error::ConfigMismatch(format!(
                        "block {k} layer {l}: {}x{} kernel {:?}, config expects {o}x{i} kernel {:?}",
                        layer.c_out(),
                        layer.c_in(),
                        layer.extent(),
                        cfg.kernel
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl ParamSet for NetworkWeights {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.blocks
            .iter()
            .flatten()
            .flat_map(|k| [k.weights().as_slice(), k.bias()])
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for k in self.blocks.iter_mut().flatten() {
            let (w, b) = k.params_mut();
            out.push(w);
            out.push(b);
        }
        out
    }
}

/// Zero-mean Gaussian kernels with variance `2 / fan_in`, zero biases.
pub fn init_weights(cfg: &NetworkConfig, seed: u64) -> Result<NetworkWeights> {
    let mut weights = NetworkWeights::zeros(cfg)?;
    let mut r = rng::StreamRng::seed_from_u64(seed);
    for kernel in weights.blocks.iter_mut().flatten() {
        let d = kernel.weights().dims();
        let fan_in = (d.c * d.t * d.h * d.w) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        for w in kernel.weights_mut().as_mut_slice() {
            *w = normal.sample(&mut r);
        }
    }
    Ok(weights)
}

/// Per-block estimates `û_1 .. û_K`, each shaped like the input.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutputs {
    pub estimates: Vec<Tensor5>,
}

impl BlockOutputs {
    /// The last block's estimate, the network's restored patch.
    pub fn last(&self) -> &Tensor5 {
        self.estimates.last().expect("at least one block")
    }
}

/// Post-activation outputs of every non-final convolution, per block.
struct Trace {
    activations: Vec<Vec<Tensor5>>,
}

fn check_input(weights: &NetworkWeights, cfg: &NetworkConfig, input: &Tensor5) -> Result<()> {
    cfg.validate()?;
    weights.check_config(cfg)?;
    if input.dims().c != 1 {
        return Err(Error::Shape(format!(
            "network input must have one channel, got {}",
            input.dims().c
        )));
    }
    Ok(())
}

fn run_block(
    layers: &[ConvKernel3],
    slope: f64,
    branch_input: &Tensor5,
    skip: &Tensor5,
    keep: bool,
) -> Result<(Tensor5, Vec<Tensor5>)> {
    let mut acts: Vec<Tensor5> = Vec::with_capacity(layers.len() - 1);
    let (last, hidden) = layers.split_last().expect("convs_per_block >= 2");
    for layer in hidden {
        let x = acts.last().unwrap_or(branch_input);
        let y = leaky_relu(&conv3d_forward(x, layer, Padding::Same)?, slope);
        if !keep {
            acts.clear();
        }
        acts.push(y);
    }
    let residual = conv3d_forward(acts.last().expect("one hidden layer"), last, Padding::Same)?;
    let estimate = elementwise_add(skip, &residual)?;
    if !keep {
        acts.clear();
    }
    Ok((estimate, acts))
}

fn forward_impl(
    weights: &NetworkWeights,
    cfg: &NetworkConfig,
    input: &Tensor5,
    keep: bool,
) -> Result<(BlockOutputs, Trace)> {
    check_input(weights, cfg, input)?;
    let mut estimates: Vec<Tensor5> = Vec::with_capacity(cfg.num_blocks);
    let mut activations = Vec::with_capacity(cfg.num_blocks);
    for layers in &weights.blocks {
        let branch = estimates.last().unwrap_or(input);
        let skip = match cfg.skip {
            SkipTopology::Cascade => branch,
            SkipTopology::RawInput => input,
        };
        let (estimate, acts) = run_block(layers, cfg.leaky_slope, branch, skip, keep)?;
        estimates.push(estimate);
        activations.push(acts);
    }
    Ok((BlockOutputs { estimates }, Trace { activations }))
}

/// Runs every block on a single-channel `(N, 1, T, H, W)` input.
pub fn forward(weights: &NetworkWeights, cfg: &NetworkConfig, input: &Tensor5) -> Result<BlockOutputs> {
    forward_impl(weights, cfg, input, false).map(|(o, _)| o)
}

/// `Σ_k charbonnier(û_k, target)`.
pub fn multi_block_loss(outputs: &BlockOutputs, target: &Tensor5, cfg: &LossConfig) -> Result<f64> {
    outputs
        .estimates
        .iter()
        .map(|u| charbonnier(u, target, cfg).map(|(l, _)| l))
        .sum()
}

/// Loss of one batch and its gradient with respect to every parameter.
#[derive(Debug, Clone)]
pub struct LossAndGradients {
    pub loss: f64,
    pub block_losses: Vec<f64>,
    pub gradients: NetworkWeights,
    pub outputs: BlockOutputs,
}

/// Forward pass, multi-block loss, and exact backward pass.
pub fn loss_and_gradients(
    weights: &NetworkWeights,
    cfg: &NetworkConfig,
    input: &Tensor5,
    target: &Tensor5,
    loss_cfg: &LossConfig,
) -> Result<LossAndGradients> {
    if input.dims() != target.dims() {
        return Err(Error::Shape(format!("input {} vs target {}", input.dims(), target.dims())));
    }
    let (outputs, trace) = forward_impl(weights, cfg, input, true)?;
    let mut gradients = NetworkWeights::zeros(cfg)?;
    let mut block_losses = vec![0.0; cfg.num_blocks];
    // Gradient reaching û_k from the blocks after it.
    let mut carry: Option<Tensor5> = None;

    for k in (0..cfg.num_blocks).rev() {
        let (loss, direct) = charbonnier(&outputs.estimates[k], target, loss_cfg)?;
        block_losses[k] = loss;
        let d_estimate = match carry.take() {
            Some(c) => elementwise_add(&direct, &c)?,
            None => direct,
        };
        let layers = &weights.blocks[k];
        let acts = &trace.activations[k];
        let branch_input = if k == 0 { input } else { &outputs.estimates[k - 1] };

        let mut d = d_estimate.clone();
        let mut d_branch = None;
        for l in (0..layers.len()).rev() {
            let layer_input = if l == 0 { branch_input } else { &acts[l - 1] };
            let grads = gradients.block_mut(k);
            if l == 0 && k == 0 {
                let (gw, gb) = conv3d_backward_params(layer_input, &layers[l], &d, Padding::Same)?;
                *grads[l].weights_mut() = gw;
                grads[l].bias_mut().copy_from_slice(&gb);
                break;
            }
            let g = conv3d_backward(layer_input, &layers[l], &d, Padding::Same)?;
            *grads[l].weights_mut() = g.weights;
            grads[l].bias_mut().copy_from_slice(&g.bias);
            if l > 0 {
                d = leaky_relu_backward(&acts[l - 1], &g.input, cfg.leaky_slope)?;
            } else {
                d_branch = Some(g.input);
            }
        }
        if k > 0 {
            let d_branch = d_branch.expect("input gradient computed for k > 0");
            carry = Some(match cfg.skip {
                SkipTopology::Cascade => elementwise_add(&d_branch, &d_estimate)?,
                SkipTopology::RawInput => d_branch,
            });
        }
    }
    Ok(LossAndGradients {
        loss: block_losses.iter().sum(),
        block_losses,
        gradients,
        outputs,
    })
}

/// Shape of a single-channel input batch.
pub fn input_dims(batch: usize, frames: usize, height: usize, width: usize) -> Dims5 {
    Dims5::new(batch, 1, frames, height, width)
}
