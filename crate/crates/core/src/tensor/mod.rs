//! Dense 5-axis tensors and the hand-differentiated operators the network is
//! built from.

mod activation;
mod conv;
mod loss;
mod sgd;

use std::fmt;

use crate::error::{Error, Result};
use crate::frame::{common_dims, Frame};

pub use activation::{leaky_relu, leaky_relu_backward};
pub use conv::{conv3d_backward, conv3d_backward_params, conv3d_forward, ConvGrads, ConvKernel3, Padding};
pub use loss::{charbonnier, LossConfig, DEFAULT_ETA};
pub use sgd::{grad_norm, sgd_step, ParamSet, SgdConfig, SgdState};

/// Axis extents `(batch, channels, time, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims5 {
    pub n: usize,
    pub c: usize,
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims5 {
    pub const fn new(n: usize, c: usize, t: usize, h: usize, w: usize) -> Self {
        Self { n, c, t, h, w }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.c * self.t * self.h * self.w
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one `(t, h, w)` volume.
    #[inline]
    pub fn volume(&self) -> usize {
        self.t * self.h * self.w
    }

    #[inline]
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn with_channels(self, c: usize) -> Self {
        Self { c, ..self }
    }
}

impl fmt::Display for Dims5 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}x{}", self.n, self.c, self.t, self.h, self.w)
    }
}

/// Row-major `(N, C, T, H, W)` array with `W` varying fastest.
#[derive(Clone, PartialEq)]
pub struct Tensor5 {
    dims: Dims5,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor5 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor5").field("dims", &self.dims).finish_non_exhaustive()
    }
}

fn check_dims(dims: Dims5) -> Result<()> {
    if dims.n == 0 || dims.c == 0 || dims.t == 0 || dims.h == 0 || dims.w == 0 {
        return Err(Error::Shape(format!("every axis must be >= 1, got {dims}")));
    }
    Ok(())
}

impl Tensor5 {
    pub fn zeros(dims: Dims5) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: Dims5, value: f64) -> Result<Self> {
        check_dims(dims)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("fill value {value}")));
        }
        Ok(Self {
            dims,
            data: vec![value; dims.len()],
        })
    }

    /// Wraps `data`, rejecting wrong lengths and non-finite values.
    pub fn from_vec(dims: Dims5, data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        if data.len() != dims.len() {
            return Err(Error::Shape(format!(
                "{dims} needs {} values, got {}",
                dims.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("element {i} is {}", data[i])));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: Dims5, mut f: impl FnMut([usize; 5]) -> f64) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..dims.n {
            for c in 0..dims.c {
                for t in 0..dims.t {
                    for h in 0..dims.h {
                        for w in 0..dims.w {
                            data.push(f([n, c, t, h, w]));
                        }
                    }
                }
            }
        }
        Self::from_vec(dims, data)
    }

    /// Internal constructor for results of finite arithmetic on checked tensors.
    pub(crate) fn from_raw(dims: Dims5, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.len(), data.len());
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> Dims5 {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, idx: [usize; 5]) -> usize {
        let d = self.dims;
        (((idx[0] * d.c + idx[1]) * d.t + idx[2]) * d.h + idx[3]) * d.w + idx[4]
    }

    #[inline]
    pub fn get(&self, idx: [usize; 5]) -> f64 {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 5], value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// The contiguous `(T, H, W)` volume of sample `n`, channel `c`.
    pub fn volume(&self, n: usize, c: usize) -> &[f64] {
        let v = self.dims.volume();
        let start = (n * self.dims.c + c) * v;
        &self.data[start..start + v]
    }

    pub fn volume_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let v = self.dims.volume();
        let start = (n * self.dims.c + c) * v;
        &mut self.data[start..start + v]
    }

    /// Whether every element is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Stacks single-channel sequences of equal shape into an `(N, 1, T, H, W)` batch.
    pub fn from_sequences(seqs: &[&[Frame]]) -> Result<Self> {
        let first = seqs.first().ok_or_else(|| Error::Shape("empty batch".into()))?;
        let (h, w) = common_dims(first)?;
        let t = first.len();
        let mut data = Vec::with_capacity(seqs.len() * t * h * w);
        for (i, s) in seqs.iter().enumerate() {
            if s.len() != t || common_dims(s)? != (h, w) {
                return Err(Error::Shape(format!("batch element {i} differs in shape from element 0")));
            }
            for f in s.iter() {
                data.extend_from_slice(f.as_slice());
            }
        }
        Self::from_vec(Dims5::new(seqs.len(), 1, t, h, w), data)
    }

    /// The `(T, H, W)` volume of sample `n`, channel `c`, as frames.
    pub fn to_frames(&self, n: usize, c: usize) -> Vec<Frame> {
        let d = self.dims;
        self.volume(n, c)
            .chunks_exact(d.plane())
            .map(|p| Frame::from_vec(d.h, d.w, p.to_vec()).expect("plane size"))
            .collect()
    }
}

fn same_shape(a: &Tensor5, b: &Tensor5, op: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("{op}: {} vs {}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Voxelwise `a + b`.
pub fn elementwise_add(a: &Tensor5, b: &Tensor5) -> Result<Tensor5> {
    same_shape(a, b, "elementwise_add")?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Ok(Tensor5::from_raw(a.dims, data))
}

/// In-place `acc += other`.
pub fn add_assign(acc: &mut Tensor5, other: &Tensor5) -> Result<()> {
    same_shape(acc, other, "add_assign")?;
    for (a, b) in acc.data.iter_mut().zip(&other.data) {
        *a += b;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(d: Dims5, scale: f64) -> Tensor5 {
        Tensor5::from_fn(d, |i| scale * (i.iter().sum::<usize>() as f64).sin()).unwrap()
    }

    #[test]
    fn construction_rejects_bad_input() {
        let d = Dims5::new(1, 1, 2, 2, 2);
        assert!(Tensor5::from_vec(d, vec![0.0; 7]).is_err());
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(matches!(Tensor5::from_vec(d, v), Err(Error::NonFinite(_))));
        assert!(Tensor5::zeros(Dims5::new(1, 0, 1, 1, 1)).is_err());
    }

    #[test]
    fn indexing_is_row_major() {
        let d = Dims5::new(2, 3, 4, 5, 6);
        let t = Tensor5::from_fn(d, |[n, c, t, h, w]| (n * 10000 + c * 1000 + t * 100 + h * 10 + w) as f64).unwrap();
        assert_eq!(t.get([1, 2, 3, 4, 5]), 12345.0);
        assert_eq!(t.as_slice()[1], 1.0);
        assert_eq!(t.volume(1, 2)[0], 12000.0);
    }

    #[test]
    fn frames_round_trip() {
        let a: Vec<Frame> = (0..3).map(|t| Frame::from_fn(2, 4, |y, x| (t * 8 + y * 4 + x) as f64)).collect();
        let b: Vec<Frame> = a.iter().map(|f| f.map(|v| -v)).collect();
        let batch = Tensor5::from_sequences(&[&a, &b]).unwrap();
        assert_eq!(batch.dims(), Dims5::new(2, 1, 3, 2, 4));
        assert_eq!(batch.to_frames(0, 0), a);
        assert_eq!(batch.to_frames(1, 0), b);
        assert!(Tensor5::from_sequences(&[&a, &b[..2]]).is_err());
    }

    #[test]
    fn add_examples() {
        let d = Dims5::new(1, 2, 3, 4, 5);
        let a = ramp(d, 1.0);
        let b = ramp(d, -0.3);
        let z = Tensor5::zeros(d).unwrap();
        assert_eq!(elementwise_add(&a, &z).unwrap(), a);
        assert_eq!(elementwise_add(&a, &b).unwrap(), elementwise_add(&b, &a).unwrap());
        let s = elementwise_add(&a, &b).unwrap();
        assert_eq!(s.get([0, 1, 2, 3, 4]), a.get([0, 1, 2, 3, 4]) + b.get([0, 1, 2, 3, 4]));
        let other = Tensor5::zeros(Dims5::new(1, 2, 3, 4, 4)).unwrap();
        assert!(matches!(elementwise_add(&a, &other), Err(Error::Shape(_))));
    }
}
