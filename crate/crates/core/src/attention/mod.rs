//! Forward-pass reference kernels: asymmetric convolution (AC) block,
//! channel attention (CAM), spatial attention (SAM) and the combined
//! attention module (AM).
//!
//! Tensors are height x width x channels, row-major, channels fastest.

mod weights;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use weights::{read_weights, weights_manifest, write_weights, WeightStore};

#[derive(Debug, Error, PartialEq)]
pub enum AttentionError {
    #[error("expected {expected} channels, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("channel count {0} is odd")]
    OddChannels(usize),
    #[error("{channels} channels cannot be split into {groups} groups")]
    IndivisibleGroups { channels: usize, groups: usize },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("weights: {0}")]
    Weights(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Tensor { h, w, c, data: vec![0.0; h * w * c] }
    }

    pub fn filled(h: usize, w: usize, c: usize, v: f64) -> Self {
        Tensor { h, w, c, data: vec![v; h * w * c] }
    }

    pub fn from_vec(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self, AttentionError> {
        if data.len() != h * w * c {
            return Err(AttentionError::InvalidTensor(format!(
                "{} values for {h}x{w}x{c}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AttentionError::InvalidTensor("non-finite value".into()));
        }
        Ok(Tensor { h, w, c, data })
    }

    pub fn from_fn(h: usize, w: usize, c: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor::zeros(h, w, c);
        for y in 0..h {
            for x in 0..w {
                for k in 0..c {
                    t.data[(y * w + x) * c + k] = f(y, x, k);
                }
            }
        }
        t
    }

    /// Standard-normal entries scaled by `std`.
    pub fn random(h: usize, w: usize, c: usize, std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, std).expect("std is finite and non-negative");
        Tensor { h, w, c, data: (0..h * w * c).map(|_| n.sample(&mut rng)).collect() }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, k: usize) -> f64 {
        self.data[(y * self.w + x) * self.c + k]
    }

    pub fn set(&mut self, y: usize, x: usize, k: usize, v: f64) {
        self.data[(y * self.w + x) * self.c + k] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { data: self.data.iter().map(|v| f(*v)).collect(), ..*self }
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.dims(), other.dims(), "tensor shapes differ");
        Tensor {
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
            ..*self
        }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Concatenation along channels.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor, AttentionError> {
        if (self.h, self.w) != (other.h, other.w) {
            return Err(AttentionError::InvalidTensor("spatial sizes differ".into()));
        }
        let c = self.c + other.c;
        let mut data = Vec::with_capacity(self.h * self.w * c);
        for i in 0..self.h * self.w {
            data.extend_from_slice(&self.data[i * self.c..(i + 1) * self.c]);
            data.extend_from_slice(&other.data[i * other.c..(i + 1) * other.c]);
        }
        Ok(Tensor { h: self.h, w: self.w, c, data })
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn relu(v: f64) -> f64 {
    v.max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub kh: usize,
    pub kw: usize,
    pub cin: usize,
    pub cout: usize,
    /// `[kh][kw][cin][cout]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub dilation: usize,
}

impl ConvKernel {
    pub fn new(
        (kh, kw, cin, cout): (usize, usize, usize, usize),
        weights: Vec<f64>,
        bias: Vec<f64>,
        dilation: usize,
    ) -> Result<Self, AttentionError> {
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(AttentionError::InvalidKernel(format!("{kh}x{kw} is not odd")));
        }
        if dilation == 0 {
            return Err(AttentionError::InvalidKernel("dilation must be at least 1".into()));
        }
        if weights.len() != kh * kw * cin * cout || bias.len() != cout {
            return Err(AttentionError::InvalidKernel(format!(
                "{} weights and {} biases for {kh}x{kw}x{cin}x{cout}",
                weights.len(),
                bias.len()
            )));
        }
        Ok(ConvKernel { kh, kw, cin, cout, weights, bias, dilation })
    }

    pub fn zeros(kh: usize, kw: usize, cin: usize, cout: usize, dilation: usize) -> Self {
        ConvKernel::new((kh, kw, cin, cout), vec![0.0; kh * kw * cin * cout], vec![0.0; cout], dilation)
            .expect("valid kernel shape")
    }

    /// Normal weights with standard deviation 0.05, zero biases.
    pub fn random(kh: usize, kw: usize, cin: usize, cout: usize, dilation: usize, rng: &mut ChaCha8Rng) -> Self {
        let n = Normal::new(0.0, 0.05).unwrap();
        let mut k = ConvKernel::zeros(kh, kw, cin, cout, dilation);
        k.weights.iter_mut().for_each(|w| *w = n.sample(rng));
        k
    }

    /// 1x1 kernel copying every channel.
    pub fn identity(channels: usize) -> Self {
        let mut k = ConvKernel::zeros(1, 1, channels, channels, 1);
        for c in 0..channels {
            k.weights[c * channels + c] = 1.0;
        }
        k
    }

    pub fn weight(&self, i: usize, j: usize, ci: usize, co: usize) -> f64 {
        self.weights[((i * self.kw + j) * self.cin + ci) * self.cout + co]
    }

    pub fn set_weight(&mut self, i: usize, j: usize, ci: usize, co: usize, v: f64) {
        self.weights[((i * self.kw + j) * self.cin + ci) * self.cout + co] = v;
    }
}

/// Cross-correlation with zero "same" padding.
pub fn conv2d(input: &Tensor, k: &ConvKernel) -> Result<Tensor, AttentionError> {
    if input.c != k.cin {
        return Err(AttentionError::ChannelMismatch { expected: k.cin, found: input.c });
    }
    let (h, w) = (input.h, input.w);
    let mut out = Tensor::zeros(h, w, k.cout);
    let (ch, cw) = ((k.kh / 2) as isize, (k.kw / 2) as isize);
    let d = k.dilation as isize;
    for y in 0..h {
        for x in 0..w {
            let o = (y * w + x) * k.cout;
            out.data[o..o + k.cout].copy_from_slice(&k.bias);
            for i in 0..k.kh {
                let sy = y as isize + (i as isize - ch) * d;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for j in 0..k.kw {
                    let sx = x as isize + (j as isize - cw) * d;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let src = (sy as usize * w + sx as usize) * k.cin;
                    for ci in 0..k.cin {
                        let v = input.data[src + ci];
                        if v == 0.0 {
                            continue;
                        }
                        let base = ((i * k.kw + j) * k.cin + ci) * k.cout;
                        for co in 0..k.cout {
                            out.data[o + co] += v * k.weights[base + co];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupNorm {
    pub groups: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub epsilon: f64,
}

impl GroupNorm {
    /// Identity affine, epsilon 1e-5.
    pub fn new(channels: usize, groups: usize) -> Self {
        GroupNorm { groups, gamma: vec![1.0; channels], beta: vec![0.0; channels], epsilon: 1e-5 }
    }
}

pub fn group_norm(input: &Tensor, gn: &GroupNorm) -> Result<Tensor, AttentionError> {
    let c = input.c;
    if gn.groups == 0 || c % gn.groups != 0 {
        return Err(AttentionError::IndivisibleGroups { channels: c, groups: gn.groups });
    }
    if gn.gamma.len() != c || gn.beta.len() != c {
        return Err(AttentionError::ChannelMismatch { expected: c, found: gn.gamma.len().min(gn.beta.len()) });
    }
    let per = c / gn.groups;
    let n = (input.h * input.w * per) as f64;
    let mut out = input.clone();
    for g in 0..gn.groups {
        let chans = g * per..(g + 1) * per;
        let values = || {
            input
                .data
                .chunks_exact(c)
                .flat_map(|px| px[chans.clone()].iter().copied())
        };
        let mean = values().sum::<f64>() / n;
        let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + gn.epsilon).sqrt();
        for px in out.data.chunks_exact_mut(c) {
            for k in chans.clone() {
                px[k] = (px[k] - mean) * inv * gn.gamma[k] + gn.beta[k];
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ACWeights {
    pub square: ConvKernel,
    pub horizontal: ConvKernel,
    pub vertical: ConvKernel,
    pub norm: GroupNorm,
}

impl ACWeights {
    pub fn random(k: usize, cin: usize, cout: usize, groups: usize, rng: &mut ChaCha8Rng) -> Self {
        ACWeights {
            square: ConvKernel::random(k, k, cin, cout, 1, rng),
            horizontal: ConvKernel::random(1, k, cin, cout, 1, rng),
            vertical: ConvKernel::random(k, 1, cin, cout, 1, rng),
            norm: GroupNorm::new(cout, groups),
        }
    }

    pub fn zeros(k: usize, cin: usize, cout: usize, groups: usize) -> Self {
        ACWeights {
            square: ConvKernel::zeros(k, k, cin, cout, 1),
            horizontal: ConvKernel::zeros(1, k, cin, cout, 1),
            vertical: ConvKernel::zeros(k, 1, cin, cout, 1),
            norm: GroupNorm::new(cout, groups),
        }
    }

    /// The three branches folded into one k x k kernel.
    pub fn fused(&self) -> ConvKernel {
        let mut f = self.square.clone();
        let (k, c) = (f.kh / 2, f.kw / 2);
        for ci in 0..f.cin {
            for co in 0..f.cout {
                for j in 0..self.horizontal.kw {
                    let v = f.weight(k, j, ci, co) + self.horizontal.weight(0, j, ci, co);
                    f.set_weight(k, j, ci, co, v);
                }
                for i in 0..self.vertical.kh {
                    let v = f.weight(i, c, ci, co) + self.vertical.weight(i, 0, ci, co);
                    f.set_weight(i, c, ci, co, v);
                }
            }
        }
        for (o, b) in f.bias.iter_mut().enumerate() {
            *b += self.horizontal.bias[o] + self.vertical.bias[o];
        }
        f
    }
}

/// Sum of the square, horizontal and vertical convolutions.
pub fn ac_branch_sum(input: &Tensor, w: &ACWeights) -> Result<Tensor, AttentionError> {
    let s = conv2d(input, &w.square)?;
    let h = conv2d(input, &w.horizontal)?;
    let v = conv2d(input, &w.vertical)?;
    Ok(s.add(&h).add(&v))
}

pub fn ac_block(input: &Tensor, w: &ACWeights) -> Result<Tensor, AttentionError> {
    Ok(group_norm(&ac_branch_sum(input, w)?, &w.norm)?.map(relu))
}

/// Width of the CAM bottleneck.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SqueezeRatio {
    /// One sixteenth of the compressed width C/2.
    #[default]
    HalfOverSixteen,
    /// One sixteenth of the input width C.
    FullOverSixteen,
}

impl SqueezeRatio {
    pub fn width(self, channels: usize) -> usize {
        match self {
            SqueezeRatio::HalfOverSixteen => channels / 32,
            SqueezeRatio::FullOverSixteen => channels / 16,
        }
        .max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CAMWeights {
    /// C -> C/2.
    pub compress: ConvKernel,
    /// C/2 -> bottleneck, shared by both pooling branches.
    pub squeeze: ConvKernel,
    /// Bottleneck -> C/2.
    pub expand: ConvKernel,
}

impl CAMWeights {
    pub fn random(channels: usize, ratio: SqueezeRatio, rng: &mut ChaCha8Rng) -> Self {
        let (half, s) = (channels / 2, ratio.width(channels));
        CAMWeights {
            compress: ConvKernel::random(1, 1, channels, half, 1, rng),
            squeeze: ConvKernel::random(1, 1, half, s, 1, rng),
            expand: ConvKernel::random(1, 1, s, half, 1, rng),
        }
    }
}

fn global_pool(t: &Tensor) -> (Tensor, Tensor) {
    let mut avg = Tensor::zeros(1, 1, t.c);
    let mut max = Tensor::filled(1, 1, t.c, f64::NEG_INFINITY);
    for px in t.data.chunks_exact(t.c) {
        for k in 0..t.c {
            avg.data[k] += px[k];
            max.data[k] = max.data[k].max(px[k]);
        }
    }
    let n = (t.h * t.w) as f64;
    avg.data.iter_mut().for_each(|v| *v /= n);
    (avg, max)
}

/// Channel map of an already compressed feature `f_c`.
pub fn cam_from_compressed(f_c: &Tensor, w: &CAMWeights) -> Result<Tensor, AttentionError> {
    let (avg, max) = global_pool(f_c);
    let branch = |p: &Tensor| -> Result<Tensor, AttentionError> {
        conv2d(&conv2d(p, &w.squeeze)?.map(relu), &w.expand)
    };
    Ok(branch(&avg)?.add(&branch(&max)?).map(sigmoid))
}

/// Returns the 1 x 1 x C/2 channel map.
pub fn cam(input: &Tensor, w: &CAMWeights) -> Result<Tensor, AttentionError> {
    if input.c % 2 != 0 {
        return Err(AttentionError::OddChannels(input.c));
    }
    cam_from_compressed(&conv2d(input, &w.compress)?, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SAMWeights {
    /// 1x1 kernels, 2 -> 1.
    pub pointwise: [ConvKernel; 3],
    /// 3x3 kernels with dilations 1, 2, 3; 2 -> 1.
    pub dilated: [ConvKernel; 3],
}

impl SAMWeights {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        SAMWeights {
            pointwise: std::array::from_fn(|_| ConvKernel::random(1, 1, 2, 1, 1, rng)),
            dilated: std::array::from_fn(|i| ConvKernel::random(3, 3, 2, 1, i + 1, rng)),
        }
    }
}

/// Per-pixel mean and max over channels, as a two-channel tensor.
pub fn channel_pool(input: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(input.h, input.w, 2);
    for (px, o) in input.data.chunks_exact(input.c).zip(out.data.chunks_exact_mut(2)) {
        o[0] = px.iter().sum::<f64>() / input.c as f64;
        o[1] = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    out
}

/// Returns the H x W x 1 spatial map.
pub fn sam(input: &Tensor, w: &SAMWeights) -> Result<Tensor, AttentionError> {
    let pooled = channel_pool(input);
    let mut acc = Tensor::zeros(input.h, input.w, 1);
    for (p, d) in w.pointwise.iter().zip(&w.dilated) {
        acc = acc.add(&conv2d(&pooled, p)?).add(&conv2d(&pooled, d)?);
    }
    Ok(acc.map(sigmoid))
}

/// Scales every channel of `t` by the matching entry of a 1 x 1 x C map.
pub fn apply_channel_map(t: &Tensor, m: &Tensor) -> Result<Tensor, AttentionError> {
    if m.dims() != (1, 1, t.c) {
        return Err(AttentionError::ChannelMismatch { expected: t.c, found: m.c });
    }
    let mut out = t.clone();
    for px in out.data.chunks_exact_mut(t.c) {
        px.iter_mut().zip(&m.data).for_each(|(v, s)| *v *= s);
    }
    Ok(out)
}

/// Scales every pixel of `t` by the matching entry of an H x W x 1 map.
pub fn apply_spatial_map(t: &Tensor, m: &Tensor) -> Result<Tensor, AttentionError> {
    if m.dims() != (t.h, t.w, 1) {
        return Err(AttentionError::InvalidTensor(format!(
            "spatial map {:?} does not fit {:?}",
            m.dims(),
            t.dims()
        )));
    }
    let mut out = t.clone();
    for (px, s) in out.data.chunks_exact_mut(t.c).zip(&m.data) {
        px.iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AMWeights {
    pub cam: CAMWeights,
    pub sam: SAMWeights,
    /// C -> C/2 compression for the spatial branch.
    pub spatial_compress: ConvKernel,
    /// C -> output channels.
    pub ac: ACWeights,
}

/// Structural hyper-parameters of an attention module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AMConfig {
    pub channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub groups: usize,
    pub squeeze: SqueezeRatio,
}

impl AMWeights {
    pub fn random(cfg: &AMConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AMWeights {
            cam: CAMWeights::random(cfg.channels, cfg.squeeze, &mut rng),
            sam: SAMWeights::random(&mut rng),
            spatial_compress: ConvKernel::random(1, 1, cfg.channels, cfg.channels / 2, 1, &mut rng),
            ac: ACWeights::random(cfg.kernel, cfg.channels, cfg.out_channels, cfg.groups, &mut rng),
        }
    }
}

/// Intermediate AM quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct AMBranches {
    pub f_c: Tensor,
    pub m_c: Tensor,
    pub f_s: Tensor,
    pub m_s: Tensor,
}

pub fn attention_branches(input: &Tensor, w: &AMWeights) -> Result<AMBranches, AttentionError> {
    if input.c % 2 != 0 {
        return Err(AttentionError::OddChannels(input.c));
    }
    let f_c = conv2d(input, &w.cam.compress)?;
    let m_c = cam_from_compressed(&f_c, &w.cam)?;
    let f_s = conv2d(input, &w.spatial_compress)?;
    let m_s = sam(input, &w.sam)?;
    Ok(AMBranches { f_c, m_c, f_s, m_s })
}

/// AC block over the two refined branches, concatenated along channels.
pub fn combine_branches(b: &AMBranches, ac: &ACWeights) -> Result<Tensor, AttentionError> {
    let channel = apply_channel_map(&b.f_c, &b.m_c)?;
    let spatial = apply_spatial_map(&b.f_s, &b.m_s)?;
    ac_block(&channel.concat_channels(&spatial)?, ac)
}

pub fn attention_module(input: &Tensor, w: &AMWeights) -> Result<Tensor, AttentionError> {
    combine_branches(&attention_branches(input, w)?, &w.ac)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn cfg() -> AMConfig {
        AMConfig { channels: 8, out_channels: 8, kernel: 3, groups: 4, squeeze: SqueezeRatio::default() }
    }

    #[test]
    fn identity_kernel() {
        let t = Tensor::random(5, 4, 3, 1.0, 1);
        assert_eq!(conv2d(&t, &ConvKernel::identity(3)).unwrap(), t);
    }

    #[test]
    fn ones_kernel_on_impulse() {
        let mut t = Tensor::zeros(5, 5, 1);
        t.set(2, 2, 0, 1.0);
        let k = ConvKernel::new((3, 3, 1, 1), vec![1.0; 9], vec![0.0], 1).unwrap();
        let out = conv2d(&t, &k).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                let want = if (1..=3).contains(&y) && (1..=3).contains(&x) { 1.0 } else { 0.0 };
                assert_eq!(out.get(y, x, 0), want);
            }
        }
    }

    #[test]
    fn dilation_spreads_support() {
        let mut t = Tensor::zeros(9, 9, 1);
        t.set(4, 4, 0, 1.0);
        let k = ConvKernel::new((3, 3, 1, 1), vec![1.0; 9], vec![0.0], 2).unwrap();
        let out = conv2d(&t, &k).unwrap();
        let support: Vec<(usize, usize)> = (0..9)
            .flat_map(|y| (0..9).map(move |x| (y, x)))
            .filter(|&(y, x)| out.get(y, x, 0) != 0.0)
            .collect();
        assert_eq!(support.len(), 9);
        let ys: Vec<usize> = support.iter().map(|p| p.0).collect();
        assert_eq!((*ys.iter().min().unwrap(), *ys.iter().max().unwrap()), (2, 6));
    }

    #[test]
    fn conv_rejects_bad_input() {
        let t = Tensor::zeros(3, 3, 2);
        assert_eq!(
            conv2d(&t, &ConvKernel::identity(3)),
            Err(AttentionError::ChannelMismatch { expected: 3, found: 2 })
        );
        assert!(ConvKernel::new((2, 3, 1, 1), vec![0.0; 6], vec![0.0], 1).is_err());
        assert!(ConvKernel::new((3, 3, 1, 1), vec![0.0; 9], vec![0.0], 0).is_err());
    }

    #[test]
    fn conv_is_linear() {
        let k = ConvKernel::random(3, 3, 4, 5, 2, &mut rng(3));
        let (a, b) = (Tensor::random(7, 6, 4, 1.0, 4), Tensor::random(7, 6, 4, 1.0, 5));
        let combo = a.zip_with(&b, |x, y| 2.0 * x - 0.5 * y);
        let lhs = conv2d(&combo, &k).unwrap();
        let rhs = conv2d(&a, &k).unwrap().zip_with(&conv2d(&b, &k).unwrap(), |x, y| 2.0 * x - 0.5 * y);
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn group_norm_cases() {
        let c = Tensor::filled(4, 4, 4, 3.0);
        assert!(group_norm(&c, &GroupNorm::new(4, 2)).unwrap().data().iter().all(|v| *v == 0.0));
        let t = Tensor::random(4, 4, 4, 2.0, 9);
        let mut gn = GroupNorm::new(4, 2);
        gn.beta = vec![5.0; 4];
        let out = group_norm(&t, &gn).unwrap();
        let mean = out.data().iter().sum::<f64>() / out.data().len() as f64;
        assert!((mean - 5.0).abs() < 1e-9);
        assert_eq!(
            group_norm(&t, &GroupNorm::new(4, 3)),
            Err(AttentionError::IndivisibleGroups { channels: 4, groups: 3 })
        );
        // groups = C normalizes each channel separately
        let inst = group_norm(&t, &GroupNorm::new(4, 4)).unwrap();
        for k in 0..4 {
            let vals: Vec<f64> = inst.data().chunks_exact(4).map(|p| p[k]).collect();
            assert!(vals.iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn ac_branches_add_and_fuse() {
        let w = ACWeights::random(3, 4, 6, 3, &mut rng(11));
        let t = Tensor::random(8, 8, 4, 1.0, 12);
        let sum = ac_branch_sum(&t, &w).unwrap();
        let fused = conv2d(&t, &w.fused()).unwrap();
        assert!(sum.max_abs_diff(&fused) < 1e-12);
        let mut square_only = w.clone();
        square_only.horizontal = ConvKernel::zeros(1, 3, 4, 6, 1);
        square_only.vertical = ConvKernel::zeros(3, 1, 4, 6, 1);
        assert_eq!(ac_branch_sum(&t, &square_only).unwrap(), conv2d(&t, &w.square).unwrap());
    }

    #[test]
    fn ac_zero_weights_constant() {
        let mut w = ACWeights::zeros(3, 2, 2, 1);
        w.norm.beta = vec![0.7, -1.0];
        let out = ac_block(&Tensor::random(4, 4, 2, 1.0, 2), &w).unwrap();
        for px in out.data().chunks_exact(2) {
            assert_eq!(px, [0.7, 0.0]);
        }
    }

    #[test]
    fn cam_ranges_and_constant_input() {
        let w = CAMWeights::random(8, SqueezeRatio::default(), &mut rng(21));
        let m = cam(&Tensor::random(6, 6, 8, 1.0, 22), &w).unwrap();
        assert_eq!(m.dims(), (1, 1, 4));
        assert!(m.data().iter().all(|v| *v > 0.0 && *v < 1.0));
        assert!(cam(&Tensor::zeros(6, 6, 8), &w).unwrap().data().iter().all(|v| *v == 0.5));
        assert_eq!(cam(&Tensor::zeros(2, 2, 5), &w), Err(AttentionError::OddChannels(5)));

        // spatially constant: both branches equal, hand-evaluated
        let px: Vec<f64> = (0..8).map(|k| k as f64 * 0.3 - 1.0).collect();
        let t = Tensor::from_fn(4, 4, 8, |_, _, k| px[k]);
        let fc: Vec<f64> = (0..4)
            .map(|o| (0..8).map(|i| px[i] * w.compress.weight(0, 0, i, o)).sum())
            .collect();
        let s: Vec<f64> = (0..w.squeeze.cout)
            .map(|o| relu((0..4).map(|i| fc[i] * w.squeeze.weight(0, 0, i, o)).sum()))
            .collect();
        let m = cam(&t, &w).unwrap();
        for o in 0..4 {
            let e: f64 = (0..s.len()).map(|i| s[i] * w.expand.weight(0, 0, i, o)).sum();
            assert!((m.get(0, 0, o) - sigmoid(2.0 * e)).abs() < 1e-12);
        }
    }

    #[test]
    fn squeeze_widths() {
        assert_eq!(SqueezeRatio::HalfOverSixteen.width(64), 2);
        assert_eq!(SqueezeRatio::FullOverSixteen.width(64), 4);
        assert_eq!(SqueezeRatio::HalfOverSixteen.width(8), 1);
    }

    #[test]
    fn sam_range_and_equivariance() {
        let w = SAMWeights::random(&mut rng(31));
        let t = Tensor::random(16, 16, 4, 1.0, 32);
        let m = sam(&t, &w).unwrap();
        assert_eq!(m.dims(), (16, 16, 1));
        assert!(m.data().iter().all(|v| *v > 0.0 && *v < 1.0));
        let shifted = Tensor::from_fn(16, 16, 4, |y, x, k| if y > 0 && x > 0 { t.get(y - 1, x - 1, k) } else { 0.0 });
        let ms = sam(&shifted, &w).unwrap();
        // receptive radius 3; stay clear of both borders
        for y in 3..12 {
            for x in 3..12 {
                assert!((ms.get(y + 1, x + 1, 0) - m.get(y, x, 0)).abs() < 1e-12);
            }
        }
        let flat = Tensor::from_fn(3, 3, 5, |y, x, _| (y * 3 + x) as f64);
        let p = channel_pool(&flat);
        assert!(p.data().chunks_exact(2).all(|v| v[0] == v[1]));
    }

    #[test]
    fn am_shapes_and_identities() {
        let w = AMWeights::random(&cfg(), 41);
        let t = Tensor::random(16, 16, 8, 1.0, 42);
        let out = attention_module(&t, &w).unwrap();
        assert_eq!(out.dims(), (16, 16, 8));
        let b = attention_branches(&t, &w).unwrap();
        assert_eq!(apply_channel_map(&b.f_c, &Tensor::filled(1, 1, 4, 1.0)).unwrap(), b.f_c);
        assert_eq!(apply_spatial_map(&b.f_s, &Tensor::filled(16, 16, 1, 1.0)).unwrap(), b.f_s);
        let z = attention_module(&Tensor::zeros(6, 6, 8), &w).unwrap();
        assert!(z.data().iter().all(|v| *v == 0.0));
        assert_eq!(
            attention_module(&Tensor::zeros(4, 4, 6), &w),
            Err(AttentionError::ChannelMismatch { expected: 8, found: 6 })
        );
    }

    #[test]
    fn seeded_init_is_reproducible() {
        assert_eq!(AMWeights::random(&cfg(), 5), AMWeights::random(&cfg(), 5));
        assert_ne!(AMWeights::random(&cfg(), 5), AMWeights::random(&cfg(), 6));
    }
}
