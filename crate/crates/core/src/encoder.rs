//! Dilated residual convolution encoder.
//!
//! `x (B × T × N)` → affine projection → timestamp mask → `depth` residual blocks
//! → affine output head `(B × T × M)`. Block `d` holds two kernel-3 convolutions
//! with dilation `2^d` and same-length zero padding:
//!
//! ```text
//! h ─┬─ gelu ─ conv ─ gelu ─ conv ─(+)─▶
//!    └──────────────────────────────┘
//! ```
//!
//! The backward pass is written out by hand; [`Encoder`] doubles as the container
//! for its own gradients and optimizer moments.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::is_missing;
use crate::{Error, Result};

pub const KERNEL_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Each timestamp kept independently with probability 0.5.
    #[default]
    Binomial,
    AllTrue,
    /// Everything kept except the final timestamp.
    MaskLast,
}

impl MaskMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Binomial => "binomial",
            Self::AllTrue => "all_true",
            Self::MaskLast => "mask_last",
        }
    }
}

impl fmt::Display for MaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binomial" => Ok(Self::Binomial),
            "all_true" => Ok(Self::AllTrue),
            "mask_last" => Ok(Self::MaskLast),
            other => Err(Error::Config(format!("unknown mask mode {other:?}"))),
        }
    }
}

/// Length-`t` keep-mask (`true` = kept).
pub fn generate_mask<R: Rng + ?Sized>(t: usize, mode: MaskMode, rng: &mut R) -> Result<Vec<bool>> {
    if t == 0 {
        return Err(Error::InvalidInput("mask length must be >= 1".into()));
    }
    Ok(match mode {
        MaskMode::AllTrue => vec![true; t],
        MaskMode::MaskLast => (0..t).map(|i| i + 1 < t).collect(),
        MaskMode::Binomial => (0..t).map(|_| rng.random_bool(0.5)).collect(),
    })
}

/// `B × T` keep-mask, one independent row per sample.
pub fn generate_batch_mask<R: Rng + ?Sized>(
    b: usize,
    t: usize,
    mode: MaskMode,
    rng: &mut R,
) -> Result<Array2<bool>> {
    let mut m = Array2::from_elem((b, t), true);
    for mut row in m.rows_mut() {
        let v = generate_mask(t, mode, rng)?;
        row.assign(&Array1::from(v));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dims: usize,
    pub hidden_dims: usize,
    pub output_dims: usize,
    pub depth: usize,
    /// Mask used while training.
    pub mask_mode: MaskMode,
}

impl EncoderConfig {
    pub fn new(input_dims: usize) -> Self {
        Self {
            input_dims,
            hidden_dims: 64,
            output_dims: 320,
            depth: 10,
            mask_mode: MaskMode::Binomial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dims == 0 || self.hidden_dims == 0 || self.output_dims == 0 || self.depth == 0
        {
            return Err(Error::Config(format!(
                "encoder dims and depth must be >= 1: {self:?}"
            )));
        }
        if self.depth > 30 {
            return Err(Error::Config(format!("depth {} too large", self.depth)));
        }
        Ok(())
    }
}

fn uniform_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    bound: f64,
    rng: &mut R,
) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

fn uniform_vec<R: Rng + ?Sized>(n: usize, bound: f64, rng: &mut R) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || rng.random_range(-bound..bound))
}

/// Affine map applied per row: `y = x W + b`, `W` is `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn new<R: Rng + ?Sized>(inp: usize, out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inp as f64).sqrt();
        Self {
            weight: uniform_matrix(inp, out, bound, rng),
            bias: uniform_vec(out, bound, rng),
        }
    }

    fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        dy: ArrayView2<'_, f64>,
        grad: &mut Linear,
    ) -> Array2<f64> {
        grad.weight += &x.t().dot(&dy);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.t())
    }
}

/// Kernel-3 dilated convolution with same-length zero padding.
///
/// Weights are stored `in × (3·out)` with tap `k` in columns `k·out..(k+1)·out`;
/// tap `k` reads input offset `(k − 1)·dilation`.
#[derive(Debug, Clone, PartialEq)]
pub struct DilatedConv {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub dilation: usize,
}

impl DilatedConv {
    fn new<R: Rng + ?Sized>(inp: usize, out: usize, dilation: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((inp * KERNEL_SIZE) as f64).sqrt();
        Self {
            weight: uniform_matrix(inp, KERNEL_SIZE * out, bound, rng),
            bias: uniform_vec(out, bound, rng),
            dilation,
        }
    }

    fn out_dims(&self) -> usize {
        self.bias.len()
    }

    /// `x` is `(B·T) × in`, rows ordered sample-major.
    fn forward(&self, x: ArrayView2<'_, f64>, b: usize, t: usize) -> Array2<f64> {
        let co = self.out_dims();
        let taps = x.dot(&self.weight);
        let mut out = Array2::zeros((b * t, co));
        for k in 0..KERNEL_SIZE {
            let off = k as isize - 1;
            let shift = off * self.dilation as isize;
            // out[t] += taps_k[t + shift]
            let (lo, hi) = valid_range(t, shift);
            if lo >= hi {
                continue;
            }
            for i in 0..b {
                let base = i * t;
                let src = (base as isize + lo as isize + shift) as usize;
                let n = hi - lo;
                let mut dst = out.slice_mut(s![base + lo..base + hi, ..]);
                dst += &taps.slice(s![src..src + n, k * co..(k + 1) * co]);
            }
        }
        out += &self.bias;
        out
    }

    fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        dy: ArrayView2<'_, f64>,
        b: usize,
        t: usize,
        grad: &mut DilatedConv,
    ) -> Array2<f64> {
        let co = self.out_dims();
        let mut dtaps = Array2::zeros((b * t, KERNEL_SIZE * co));
        for k in 0..KERNEL_SIZE {
            let shift = (k as isize - 1) * self.dilation as isize;
            let (lo, hi) = valid_range(t, shift);
            if lo >= hi {
                continue;
            }
            for i in 0..b {
                let base = i * t;
                let src = (base as isize + lo as isize + shift) as usize;
                let n = hi - lo;
                let mut dst = dtaps.slice_mut(s![src..src + n, k * co..(k + 1) * co]);
                dst += &dy.slice(s![base + lo..base + hi, ..]);
            }
        }
        grad.weight += &x.t().dot(&dtaps);
        grad.bias += &dy.sum_axis(Axis(0));
        dtaps.dot(&self.weight.t())
    }
}

/// Output positions `[lo, hi)` whose source `pos + shift` lies in `[0, t)`.
fn valid_range(t: usize, shift: isize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (t as isize - shift.max(0)).max(0) as usize;
    (lo.min(t), hi.min(t))
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_C: f64 = 0.044_715;

#[inline]
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_K * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub conv1: DilatedConv,
    pub conv2: DilatedConv,
}

struct BlockCache {
    input: Array2<f64>,
    act1: Array2<f64>,
    pre2: Array2<f64>,
    act2: Array2<f64>,
}

impl ResidualBlock {
    fn forward(&self, h: Array2<f64>, b: usize, t: usize) -> (Array2<f64>, BlockCache) {
        let act1 = h.mapv(gelu);
        let pre2 = self.conv1.forward(act1.view(), b, t);
        let act2 = pre2.mapv(gelu);
        let out = self.conv2.forward(act2.view(), b, t) + &h;
        (
            out,
            BlockCache {
                input: h,
                act1,
                pre2,
                act2,
            },
        )
    }

    fn backward(
        &self,
        c: &BlockCache,
        dout: &Array2<f64>,
        b: usize,
        t: usize,
        grad: &mut ResidualBlock,
    ) -> Array2<f64> {
        let dact2 = self
            .conv2
            .backward(c.act2.view(), dout.view(), b, t, &mut grad.conv2);
        let dpre2 = dact2 * &c.pre2.mapv(gelu_grad);
        let dact1 = self
            .conv1
            .backward(c.act1.view(), dpre2.view(), b, t, &mut grad.conv1);
        dact1 * &c.input.mapv(gelu_grad) + dout
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub input: Linear,
    pub blocks: Vec<ResidualBlock>,
    pub output: Linear,
}

/// Activations kept for [`Encoder::backward`].
pub struct ForwardCache {
    batch: usize,
    len: usize,
    x: Array2<f64>,
    keep: Array2<f64>,
    blocks: Vec<BlockCache>,
    last: Array2<f64>,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dims;
        let input = Linear::new(config.input_dims, h, rng);
        let blocks = (0..config.depth)
            .map(|d| ResidualBlock {
                conv1: DilatedConv::new(h, h, 1 << d, rng),
                conv2: DilatedConv::new(h, h, 1 << d, rng),
            })
            .collect();
        let output = Linear::new(h, config.output_dims, rng);
        Ok(Self {
            config,
            input,
            blocks,
            output,
        })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.named_tensors()
            .into_iter()
            .map(|(_, _, d)| d)
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        fn sl<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        let mut out = vec![sl(&mut self.input.weight), sl(&mut self.input.bias)];
        for b in &mut self.blocks {
            out.push(sl(&mut b.conv1.weight));
            out.push(sl(&mut b.conv1.bias));
            out.push(sl(&mut b.conv2.weight));
            out.push(sl(&mut b.conv2.bias));
        }
        out.push(sl(&mut self.output.weight));
        out.push(sl(&mut self.output.bias));
        out
    }

    /// `(name, shape, data)` for every parameter tensor, in [`Self::tensors`] order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        fn entry<D: ndarray::Dimension>(
            name: String,
            a: &ndarray::Array<f64, D>,
        ) -> (String, Vec<usize>, &[f64]) {
            (
                name,
                a.shape().to_vec(),
                a.as_slice().expect("standard layout"),
            )
        }
        let mut out = vec![
            entry("input.weight".into(), &self.input.weight),
            entry("input.bias".into(), &self.input.bias),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push(entry(format!("blocks.{i}.conv1.weight"), &b.conv1.weight));
            out.push(entry(format!("blocks.{i}.conv1.bias"), &b.conv1.bias));
            out.push(entry(format!("blocks.{i}.conv2.weight"), &b.conv2.weight));
            out.push(entry(format!("blocks.{i}.conv2.bias"), &b.conv2.bias));
        }
        out.push(entry("output.weight".into(), &self.output.weight));
        out.push(entry("output.bias".into(), &self.output.bias));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Inference forward pass; `mask` selects the timestamp mask.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: ArrayView3<'_, f64>,
        mask: MaskMode,
        rng: &mut R,
    ) -> Result<Array3<f64>> {
        let (b, t, _) = x.dim();
        if t == 0 {
            return Err(Error::InvalidInput("empty time axis".into()));
        }
        let keep = generate_batch_mask(b, t, mask, rng)?;
        self.forward_with_mask(x, &keep).map(|(z, _)| z)
    }

    /// Forward pass with an explicit `B × T` keep-mask, returning the cache for
    /// [`Self::backward`]. Missing-marker timestamps are zero-filled and masked.
    pub fn forward_with_mask(
        &self,
        x: ArrayView3<'_, f64>,
        keep: &Array2<bool>,
    ) -> Result<(Array3<f64>, ForwardCache)> {
        let (b, t, n) = x.dim();
        if n != self.config.input_dims {
            return Err(Error::Shape(format!(
                "input has {n} channels, encoder expects {}",
                self.config.input_dims
            )));
        }
        if keep.dim() != (b, t) {
            return Err(Error::Shape(format!(
                "mask {:?} vs batch ({b}, {t})",
                keep.dim()
            )));
        }
        let mut x2 = x
            .to_shape((b * t, n))
            .map_err(|e| Error::Shape(e.to_string()))?
            .to_owned();
        let mut keepf = Array2::<f64>::zeros((b * t, 1));
        for (r, mut row) in x2.rows_mut().into_iter().enumerate() {
            let observed = !row.iter().any(|v| is_missing(*v));
            if !observed {
                row.fill(0.0);
            }
            if observed && keep[[r / t, r % t]] {
                keepf[[r, 0]] = 1.0;
            }
        }
        let mut h = self.input.forward(x2.view());
        h *= &keepf;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let (next, c) = blk.forward(h, b, t);
            caches.push(c);
            h = next;
        }
        let out = self.output.forward(h.view());
        let z = out
            .into_shape_with_order((b, t, self.config.output_dims))
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok((
            z,
            ForwardCache {
                batch: b,
                len: t,
                x: x2,
                keep: keepf,
                blocks: caches,
                last: h,
            },
        ))
    }

    /// Accumulate parameter gradients for upstream gradient `dz` into `grad`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dz: ArrayView3<'_, f64>,
        grad: &mut Encoder,
    ) -> Result<()> {
        let (b, t) = (cache.batch, cache.len);
        if dz.dim() != (b, t, self.config.output_dims) {
            return Err(Error::Shape(format!("upstream gradient {:?}", dz.dim())));
        }
        let dz2 = dz
            .to_shape((b * t, self.config.output_dims))
            .map_err(|e| Error::Shape(e.to_string()))?;
        let mut dh = self
            .output
            .backward(cache.last.view(), dz2.view(), &mut grad.output);
        for ((blk, c), g) in self
            .blocks
            .iter()
            .zip(&cache.blocks)
            .zip(&mut grad.blocks)
            .rev()
        {
            dh = blk.backward(c, &dh, b, t, g);
        }
        dh *= &cache.keep;
        self.input
            .backward(cache.x.view(), dh.view(), &mut grad.input);
        Ok(())
    }
}
