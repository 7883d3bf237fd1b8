//! 3-D cross-correlation over `(t, h, w)` and its exact gradients.
//!
//! Each sample is zero-padded once. Output positions are then processed in
//! chunks small enough to stay in cache: the receptive fields of a chunk are
//! unrolled into a `(C_in·k_t·k_h·k_w) × chunk` column matrix and multiplied by
//! the `C_out × (C_in·k_t·k_h·k_w)` weight matrix. The input gradient is the
//! same correlation applied to the padded output gradient with the flipped,
//! channel-transposed kernel. Reductions run over a fixed partition of
//! positions and are summed in order, so results do not depend on the thread
//! count.

use rayon::prelude::*;

use super::{Dims5, Tensor5};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero-pad `(k - 1) / 2` on each side so `(T, H, W)` is preserved.
    #[default]
    Same,
    /// No padding; each axis shrinks by `k - 1`.
    Valid,
}

/// Weights `(C_out, C_in, k_t, k_h, k_w)` plus one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel3 {
    weights: Tensor5,
    bias: Vec<f64>,
}

impl ConvKernel3 {
    pub fn new(weights: Tensor5, bias: Vec<f64>) -> Result<Self> {
        let d = weights.dims();
        if d.t.is_multiple_of(2) || d.h.is_multiple_of(2) || d.w.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "kernel extents must be odd, got {}x{}x{}",
                d.t, d.h, d.w
            )));
        }
        if bias.len() != d.n {
            return Err(Error::Shape(format!(
                "{} output channels but {} biases",
                d.n,
                bias.len()
            )));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("kernel bias".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(c_out: usize, c_in: usize, extent: [usize; 3]) -> Result<Self> {
        let w = Tensor5::zeros(Dims5::new(c_out, c_in, extent[0], extent[1], extent[2]))?;
        Self::new(w, vec![0.0; c_out])
    }

    #[inline]
    pub fn c_out(&self) -> usize {
        self.weights.dims().n
    }

    #[inline]
    pub fn c_in(&self) -> usize {
        self.weights.dims().c
    }

    /// `[k_t, k_h, k_w]`.
    #[inline]
    pub fn extent(&self) -> [usize; 3] {
        let d = self.weights.dims();
        [d.t, d.h, d.w]
    }

    pub fn weights(&self) -> &Tensor5 {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Tensor5 {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Weights and bias as flat buffers, borrowed together.
    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.weights.as_mut_slice(), &mut self.bias)
    }
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor5,
    pub weights: Tensor5,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    c_in: usize,
    c_out: usize,
    kt: usize,
    kh: usize,
    kw: usize,
    pt: usize,
    ph: usize,
    pw: usize,
    t_out: usize,
    h_out: usize,
    w_out: usize,
}

impl Geometry {
    fn new(input: Dims5, kernel: &ConvKernel3, padding: Padding) -> Result<Self> {
        if input.c != kernel.c_in() {
            return Err(Error::Shape(format!(
                "input has {} channels, kernel expects {}",
                input.c,
                kernel.c_in()
            )));
        }
        let [kt, kh, kw] = kernel.extent();
        let (pt, ph, pw) = match padding {
            Padding::Same => ((kt - 1) / 2, (kh - 1) / 2, (kw - 1) / 2),
            Padding::Valid => (0, 0, 0),
        };
        let out = |len: usize, k: usize, p: usize| -> Result<usize> {
            (len + 2 * p)
                .checked_sub(k - 1)
                .filter(|&o| o > 0)
                .ok_or_else(|| Error::Shape(format!("axis of length {len} too short for kernel extent {k}")))
        };
        Ok(Self {
            n: input.n,
            c_in: input.c,
            c_out: kernel.c_out(),
            kt,
            kh,
            kw,
            pt,
            ph,
            pw,
            t_out: out(input.t, kt, pt)?,
            h_out: out(input.h, kh, ph)?,
            w_out: out(input.w, kw, pw)?,
        })
    }

    fn taps(&self) -> usize {
        self.kt * self.kh * self.kw
    }

    fn out_dims(&self) -> Dims5 {
        Dims5::new(self.n, self.c_out, self.t_out, self.h_out, self.w_out)
    }
}

/// Upper bound on the elements of one column-matrix chunk, sized to stay in cache.
const COLS_BUDGET: usize = 1 << 16;

/// Weight-gradient partial sums are reduced over this many fixed position
/// ranges, whatever the thread count, so the result is reproducible.
const REDUCE_GROUPS: usize = 16;

/// One zero-padded sample `(C, T, H, W)`, flattened.
///
/// On the padded grid an output voxel `(t, h, w)` is identified with the flat
/// position `q = (t·H + h)·W + w` of its receptive-field corner, so tap
/// `(dt, dh, dw)` of every output reads position `q + (dt·H + dh)·W + dw`.
/// A chunk of consecutive positions therefore unrolls into column rows that are
/// plain contiguous copies; positions that fall in the padding margin are
/// computed and discarded.
struct Padded {
    data: Vec<f64>,
    c: usize,
    dims: [usize; 3],
    out: [usize; 3],
    kernel: [usize; 3],
}

impl Padded {
    fn new(x: &Tensor5, n: usize, pad: [usize; 3], kernel: [usize; 3]) -> Self {
        let d = x.dims();
        let dims = [d.t + 2 * pad[0], d.h + 2 * pad[1], d.w + 2 * pad[2]];
        let vol = dims[0] * dims[1] * dims[2];
        let mut data = vec![0.0; d.c * vol];
        for (c, dst) in data.chunks_exact_mut(vol).enumerate() {
            let src = x.volume(n, c);
            for t in 0..d.t {
                for h in 0..d.h {
                    let at = ((t + pad[0]) * dims[1] + h + pad[1]) * dims[2] + pad[2];
                    let from = (t * d.h + h) * d.w;
                    dst[at..at + d.w].copy_from_slice(&src[from..from + d.w]);
                }
            }
        }
        let out = [0, 1, 2].map(|a| dims[a] + 1 - kernel[a]);
        Self { data, c: d.c, dims, out, kernel }
    }

    fn volume(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Column-matrix rows: input channels times taps.
    fn rows(&self) -> usize {
        self.c * self.kernel[0] * self.kernel[1] * self.kernel[2]
    }

    /// One past the last position that is a real output voxel.
    fn positions(&self) -> usize {
        let [t, h, w] = self.out;
        ((t - 1) * self.dims[1] + h - 1) * self.dims[2] + w
    }

    fn out_len(&self) -> usize {
        self.out[0] * self.out[1] * self.out[2]
    }

    fn chunk_len(&self) -> usize {
        (COLS_BUDGET / self.rows()).clamp(64, 4096)
    }

    fn chunks(&self) -> Vec<(usize, usize)> {
        let (len, step) = (self.positions(), self.chunk_len());
        (0..len).step_by(step).map(|q| (q, (q + step).min(len))).collect()
    }

    /// Unrolls positions `q0..q1` into `cols` (`rows × (q1 - q0)`).
    fn unroll(&self, q0: usize, q1: usize, cols: &mut [f64]) {
        let len = q1 - q0;
        let [kt, kh, kw] = self.kernel;
        let [_, hp, wp] = self.dims;
        let mut rows = cols.chunks_exact_mut(len);
        for vol in self.data.chunks_exact(self.volume()) {
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let off = (dt * hp + dh) * wp + dw + q0;
                        rows.next()
                            .expect("column buffer sized by rows")
                            .copy_from_slice(&vol[off..off + len]);
                    }
                }
            }
        }
    }

    /// Runs of real output voxels inside positions `q0..q1`, as
    /// `(offset in chunk, flat output index, length)`.
    fn runs(&self, q0: usize, q1: usize) -> Vec<(usize, usize, usize)> {
        let [_, hp, wp] = self.dims;
        let [_, ho, wo] = self.out;
        let mut runs = Vec::new();
        let mut q = q0;
        while q < q1 {
            let (row, w) = (q / wp, q % wp);
            let (t, h) = (row / hp, row % hp);
            if w < wo && h < ho {
                let len = (wo - w).min(q1 - q);
                runs.push((q - q0, (t * ho + h) * wo + w, len));
            }
            q = (row + 1) * wp;
        }
        runs
    }

    /// Correlates with `weights` (`c_out × rows`, row-major) plus optional
    /// bias, writing `c_out` output volumes into `out`.
    fn correlate(&self, c_out: usize, weights: &[f64], bias: Option<&[f64]>, out: &mut [f64]) {
        let rows = self.rows();
        let out_len = self.out_len();
        let chunks = self.chunks();
        let results: Vec<Vec<f64>> = chunks
            .par_iter()
            .map_init(
                || vec![0.0; rows * self.chunk_len()],
                |cols, &(q0, q1)| {
                    let len = q1 - q0;
                    let cols = &mut cols[..rows * len];
                    self.unroll(q0, q1, cols);
                    let mut res = vec![0.0; c_out * len];
                    if let Some(bias) = bias {
                        for (row, &b) in res.chunks_exact_mut(len).zip(bias) {
                            row.fill(b);
                        }
                    }
                    gemm(c_out, rows, len, weights, (rows, 1), cols, (len, 1), 1.0, &mut res);
                    res
                },
            )
            .collect();
        for (&(q0, q1), res) in chunks.iter().zip(&results) {
            let len = q1 - q0;
            for (j, o, run) in self.runs(q0, q1) {
                for co in 0..c_out {
                    let dst = co * out_len + o;
                    out[dst..dst + run].copy_from_slice(&res[co * len + j..co * len + j + run]);
                }
            }
        }
    }

    /// Adds `Σ_q grad(q) · cols(q)ᵀ` to `acc` (`c_out × rows`), where `grad`
    /// holds `c_out` output-gradient volumes.
    fn accumulate_weight_grad(&self, c_out: usize, grad: &[f64], acc: &mut [f64]) {
        let rows = self.rows();
        let out_len = self.out_len();
        let chunks = self.chunks();
        let per_group = chunks.len().div_ceil(REDUCE_GROUPS);
        let partials: Vec<Vec<f64>> = chunks
            .par_chunks(per_group)
            .map(|group| {
                let mut part = vec![0.0; c_out * rows];
                let mut cols = vec![0.0; rows * self.chunk_len()];
                let mut gy = vec![0.0; c_out * self.chunk_len()];
                for &(q0, q1) in group {
                    let len = q1 - q0;
                    let (cols, gy) = (&mut cols[..rows * len], &mut gy[..c_out * len]);
                    self.unroll(q0, q1, cols);
                    gy.fill(0.0);
                    for (j, o, run) in self.runs(q0, q1) {
                        for co in 0..c_out {
                            let src = co * out_len + o;
                            gy[co * len + j..co * len + j + run].copy_from_slice(&grad[src..src + run]);
                        }
                    }
                    gemm(c_out, len, rows, gy, (len, 1), cols, (1, len), 1.0, &mut part);
                }
                part
            })
            .collect();
        for part in partials {
            for (a, b) in acc.iter_mut().zip(&part) {
                *a += b;
            }
        }
    }
}

/// `C (m×n) = A (m×k) · B (k×n) + beta·C`, with arbitrary strides on A and B
/// and row-major contiguous C.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    let span = |rows: usize, cols: usize, (rs, cs): (usize, usize)| (rows - 1) * rs + (cols - 1) * cs + 1;
    assert!(a.len() >= span(m, k, a_strides));
    assert!(b.len() >= span(k, n, b_strides));
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above guarantee every strided access stays inside
    // the borrowed slices, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Cross-correlation of `input` with `kernel` plus per-channel bias.
pub fn conv3d_forward(input: &Tensor5, kernel: &ConvKernel3, padding: Padding) -> Result<Tensor5> {
    let g = Geometry::new(input.dims(), kernel, padding)?;
    let dims = g.out_dims();
    let mut output = vec![0.0; dims.len()];
    let per_sample = g.c_out * dims.volume();
    for (n, out) in output.chunks_exact_mut(per_sample).enumerate() {
        let padded = Padded::new(input, n, [g.pt, g.ph, g.pw], kernel.extent());
        padded.correlate(g.c_out, kernel.weights().as_slice(), Some(kernel.bias()), out);
    }
    Ok(Tensor5::from_raw(dims, output))
}

/// The kernel of the adjoint correlation: spatially flipped with input and
/// output channels swapped, as a `c_in × (c_out·taps)` matrix.
fn adjoint_weights(kernel: &ConvKernel3, g: &Geometry) -> Vec<f64> {
    let taps = g.taps();
    let w = kernel.weights().as_slice();
    let mut adj = vec![0.0; g.c_in * g.c_out * taps];
    for co in 0..g.c_out {
        for ci in 0..g.c_in {
            let src = &w[(co * g.c_in + ci) * taps..][..taps];
            let dst = &mut adj[(ci * g.c_out + co) * taps..][..taps];
            for (d, s) in dst.iter_mut().zip(src.iter().rev()) {
                *d = *s;
            }
        }
    }
    adj
}

fn backward_impl(
    input: &Tensor5,
    kernel: &ConvKernel3,
    grad_output: &Tensor5,
    padding: Padding,
    need_input: bool,
) -> Result<(Option<Tensor5>, Tensor5, Vec<f64>)> {
    let g = Geometry::new(input.dims(), kernel, padding)?;
    if grad_output.dims() != g.out_dims() {
        return Err(Error::Shape(format!(
            "grad_output is {}, forward output is {}",
            grad_output.dims(),
            g.out_dims()
        )));
    }
    let extent = kernel.extent();
    let pads = [g.pt, g.ph, g.pw];
    let mut grad_w = vec![0.0; g.c_out * g.c_in * g.taps()];
    let mut grad_b = vec![0.0; g.c_out];
    for n in 0..g.n {
        for (b, co) in grad_b.iter_mut().zip(0..g.c_out) {
            *b += grad_output.volume(n, co).iter().sum::<f64>();
        }
        let padded = Padded::new(input, n, pads, extent);
        let per_sample = g.c_out * grad_output.dims().volume();
        let grad = &grad_output.as_slice()[n * per_sample..(n + 1) * per_sample];
        padded.accumulate_weight_grad(g.c_out, grad, &mut grad_w);
    }

    let grad_in = need_input.then(|| {
        // The input gradient is the output gradient, padded by `k - 1 - p`,
        // correlated with the adjoint kernel.
        let adj = adjoint_weights(kernel, &g);
        let back_pads = [0, 1, 2].map(|a| extent[a] - 1 - pads[a]);
        let mut data = vec![0.0; input.len()];
        let per_sample = g.c_in * input.dims().volume();
        for (n, out) in data.chunks_exact_mut(per_sample).enumerate() {
            let padded = Padded::new(grad_output, n, back_pads, extent);
            padded.correlate(g.c_in, &adj, None, out);
        }
        Tensor5::from_raw(input.dims(), data)
    });
    let grad_w = Tensor5::from_raw(kernel.weights().dims(), grad_w);
    Ok((grad_in, grad_w, grad_b))
}

/// Exact gradients of [`conv3d_forward`] given the upstream gradient.
pub fn conv3d_backward(
    input: &Tensor5,
    kernel: &ConvKernel3,
    grad_output: &Tensor5,
    padding: Padding,
) -> Result<ConvGrads> {
    let (gi, weights, bias) = backward_impl(input, kernel, grad_output, padding, true)?;
    Ok(ConvGrads {
        input: gi.expect("input gradient requested"),
        weights,
        bias,
    })
}

/// Like [`conv3d_backward`] but skips the input gradient (first layer).
pub fn conv3d_backward_params(
    input: &Tensor5,
    kernel: &ConvKernel3,
    grad_output: &Tensor5,
    padding: Padding,
) -> Result<(Tensor5, Vec<f64>)> {
    let (_, weights, bias) = backward_impl(input, kernel, grad_output, padding, false)?;
    Ok((weights, bias))
}
