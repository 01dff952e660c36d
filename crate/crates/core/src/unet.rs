//! U-net-style encoder/decoder for de-aliasing, with hand-written forward
//! and backward passes over f64 tensors.
//!
//! Layer plan for `depth = d`, `base_channels = b`, `in_channels = c_in`
//! (all 3x3 convolutions are zero-padded to keep the spatial size and are
//! followed by ReLU; the final 1x1 convolution is linear):
//!
//! - encoder level `l` in `0..d`: conv `enc{l}a` (prev -> b*2^l), conv
//!   `enc{l}b` (b*2^l -> b*2^l), then 2x2 max-pool
//! - bottleneck: conv `bot_a` (b*2^(d-1) -> b*2^d), conv `bot_b`
//! - decoder level `l` in `d-1..=0`: nearest-neighbor x2 upsample, conv
//!   `up{l}` (b*2^(l+1) -> b*2^l), channel concat `[up, skip_l]`, conv
//!   `dec{l}a` (2*b*2^l -> b*2^l), conv `dec{l}b`
//! - output: 1x1 conv `out` (b -> 1), linear; with `residual` set, input
//!   channel 0 is added to the output
//!
//! Desk-scale default is depth 3, base 16; a full-scale run uses depth 4,
//! base 64.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::ImageSlice;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub depth: usize,
    pub base_channels: usize,
    pub in_channels: usize,
    pub seed: u64,
    #[serde(default)]
    pub residual: bool,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::InvalidConfig("depth must be >= 1".into()));
        }
        if self.base_channels < 1 {
            return Err(Error::InvalidConfig("base_channels must be >= 1".into()));
        }
        if self.in_channels != 1 && self.in_channels != 2 {
            return Err(Error::InvalidConfig("in_channels must be 1 or 2".into()));
        }
        Ok(())
    }
}

/// Named parameter tensor, row-major f64 data.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
struct ConvSpec {
    name: String,
    in_c: usize,
    out_c: usize,
    kernel: usize,
}

/// Convolution list in execution (and serialization) order.
fn conv_specs(config: &NetConfig) -> Vec<ConvSpec> {
    let (d, b) = (config.depth, config.base_channels);
    let ch = |l: usize| b << l;
    let mut specs = Vec::new();
    let mut conv = |name: String, in_c: usize, out_c: usize, kernel: usize| {
        specs.push(ConvSpec { name, in_c, out_c, kernel });
    };
    let mut prev = config.in_channels;
    for l in 0..d {
        conv(format!("enc{l}a"), prev, ch(l), 3);
        conv(format!("enc{l}b"), ch(l), ch(l), 3);
        prev = ch(l);
    }
    conv("bot_a".into(), prev, ch(d), 3);
    conv("bot_b".into(), ch(d), ch(d), 3);
    for l in (0..d).rev() {
        conv(format!("up{l}"), ch(l + 1), ch(l), 3);
        conv(format!("dec{l}a"), 2 * ch(l), ch(l), 3);
        conv(format!("dec{l}b"), ch(l), ch(l), 3);
    }
    conv("out".into(), b, 1, 1);
    specs
}

/// Total parameter count (weights + biases) for a configuration.
pub fn param_count(config: &NetConfig) -> usize {
    conv_specs(config)
        .iter()
        .map(|s| s.out_c * s.in_c * s.kernel * s.kernel + s.out_c)
        .sum()
}

#[derive(Clone, Debug)]
pub struct NetWeights {
    pub config: NetConfig,
    pub tensors: Vec<Tensor>,
}

impl NetWeights {
    fn tensor_index(&self, name: &str) -> usize {
        self.tensors
            .iter()
            .position(|t| t.name == name)
            .unwrap_or_else(|| panic!("missing tensor {name}"))
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.tensors.iter_mut().map(|t| t.data.as_mut_slice()).collect()
    }
}

/// Deterministic He-style initialization: weights ~ N(0, sqrt(2 / fan_in)),
/// biases zero. Values are quantized through f32 so a freshly initialized
/// net survives the f32 checkpoint format bit-exactly.
pub fn init(config: &NetConfig) -> Result<NetWeights> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tensors = Vec::new();
    for spec in conv_specs(config) {
        let fan_in = spec.in_c * spec.kernel * spec.kernel;
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("std is positive");
        let n = spec.out_c * spec.in_c * spec.kernel * spec.kernel;
        let data: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng) as f32 as f64).collect();
        tensors.push(Tensor {
            name: format!("{}.weight", spec.name),
            shape: vec![spec.out_c, spec.in_c, spec.kernel, spec.kernel],
            data,
        });
        tensors.push(Tensor {
            name: format!("{}.bias", spec.name),
            shape: vec![spec.out_c],
            data: vec![0.0; spec.out_c],
        });
    }
    Ok(NetWeights { config: *config, tensors })
}

/// Stacks single-channel images into a (C, H, W) input tensor.
pub fn stack_channels(channels: &[&ImageSlice]) -> Result<Array3<f64>> {
    if channels.is_empty() {
        return Err(Error::InvalidInput("empty channel stack".into()));
    }
    let (h, w) = (channels[0].height(), channels[0].width());
    let mut out = Array3::zeros((channels.len(), h, w));
    for (c, img) in channels.iter().enumerate() {
        if img.height() != h || img.width() != w {
            return Err(Error::ShapeMismatch("channel shapes differ".into()));
        }
        out.as_slice_mut().unwrap()[c * h * w..(c + 1) * h * w].copy_from_slice(img.pixels());
    }
    Ok(out)
}

fn im2col(input: &Array3<f64>, kernel: usize, pad: usize) -> Array2<f64> {
    let (c, h, w) = input.dim();
    let data = input.as_slice().expect("standard layout");
    let mut cols = Array2::zeros((c * kernel * kernel, h * w));
    let cols_slice = cols.as_slice_mut().unwrap();
    let hw = h * w;
    for ch in 0..c {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (ch * kernel + ky) * kernel + kx;
                let base = row * hw;
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = ch * hw + sy as usize * w;
                    for x in 0..w {
                        let sx = x as isize + kx as isize - pad as isize;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        cols_slice[base + y * w + x] = data[src_row + sx as usize];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(dcols: &Array2<f64>, c: usize, h: usize, w: usize, kernel: usize, pad: usize) -> Array3<f64> {
    let mut out = Array3::zeros((c, h, w));
    let out_slice = out.as_slice_mut().unwrap();
    let dslice = dcols.as_slice().expect("standard layout");
    let hw = h * w;
    for ch in 0..c {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (ch * kernel + ky) * kernel + kx;
                let base = row * hw;
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst_row = ch * hw + sy as usize * w;
                    for x in 0..w {
                        let sx = x as isize + kx as isize - pad as isize;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        out_slice[dst_row + sx as usize] += dslice[base + y * w + x];
                    }
                }
            }
        }
    }
    out
}

fn conv_forward(weight: &Tensor, bias: &Tensor, input: &Array3<f64>, relu: bool) -> Array3<f64> {
    let (out_c, in_c, kernel) = (weight.shape[0], weight.shape[1], weight.shape[2]);
    let (c, h, w) = input.dim();
    debug_assert_eq!(c, in_c);
    let pad = kernel / 2;
    let cols = im2col(input, kernel, pad);
    let w2 = ArrayView2::from_shape((out_c, in_c * kernel * kernel), &weight.data).unwrap();
    let mut out2 = w2.dot(&cols);
    for (mut row, &b) in out2.rows_mut().into_iter().zip(&bias.data) {
        for v in row.iter_mut() {
            *v += b;
            if relu && *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    out2.into_shape_with_order((out_c, h, w)).unwrap()
}

/// Returns (grad_weight, grad_bias, grad_input). `output` is the post-ReLU
/// activation when `relu` is set; its zeros gate the incoming gradient.
fn conv_backward(
    weight: &Tensor,
    input: &Array3<f64>,
    output: &Array3<f64>,
    grad_out: &Array3<f64>,
    relu: bool,
) -> (Vec<f64>, Vec<f64>, Array3<f64>) {
    let (out_c, in_c, kernel) = (weight.shape[0], weight.shape[1], weight.shape[2]);
    let (c, h, w) = input.dim();
    let pad = kernel / 2;
    let hw = h * w;

    let mut g = grad_out.clone();
    if relu {
        let gs = g.as_slice_mut().unwrap();
        let os = output.as_slice().unwrap();
        for (gv, &ov) in gs.iter_mut().zip(os) {
            if ov <= 0.0 {
                *gv = 0.0;
            }
        }
    }
    let g2 = ArrayView2::from_shape((out_c, hw), g.as_slice().unwrap()).unwrap();

    let cols = im2col(input, kernel, pad);
    let grad_w = g2.dot(&cols.t());
    let grad_b: Vec<f64> = g2.rows().into_iter().map(|r| r.sum()).collect();

    let w2 = ArrayView2::from_shape((out_c, in_c * kernel * kernel), &weight.data).unwrap();
    let dcols = w2.t().dot(&g2);
    let grad_in = col2im(&dcols, c, h, w, kernel, pad);
    (grad_w.into_raw_vec_and_offset().0, grad_b, grad_in)
}

fn maxpool2(input: &Array3<f64>) -> (Array3<f64>, Vec<usize>) {
    let (c, h, w) = input.dim();
    let (oh, ow) = (h / 2, w / 2);
    let data = input.as_slice().unwrap();
    let mut out = Array3::zeros((c, oh, ow));
    let out_slice = out.as_slice_mut().unwrap();
    let mut argmax = vec![0usize; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best_idx = ch * h * w + (2 * y) * w + 2 * x;
                let mut best = data[best_idx];
                for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = ch * h * w + (2 * y + dy) * w + 2 * x + dx;
                    if data[idx] > best {
                        best = data[idx];
                        best_idx = idx;
                    }
                }
                let oidx = ch * oh * ow + y * ow + x;
                out_slice[oidx] = best;
                argmax[oidx] = best_idx;
            }
        }
    }
    (out, argmax)
}

fn maxpool2_backward(grad_out: &Array3<f64>, argmax: &[usize], c: usize, h: usize, w: usize) -> Array3<f64> {
    let mut grad_in = Array3::zeros((c, h, w));
    let gi = grad_in.as_slice_mut().unwrap();
    for (g, &idx) in grad_out.as_slice().unwrap().iter().zip(argmax) {
        gi[idx] += g;
    }
    grad_in
}

fn upsample_nearest2(input: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = input.dim();
    let mut out = Array3::zeros((c, 2 * h, 2 * w));
    let (os, is) = (2 * h * 2 * w, h * w);
    let out_slice = out.as_slice_mut().unwrap();
    let in_slice = input.as_slice().unwrap();
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let v = in_slice[ch * is + y * w + x];
                for (dy, dx) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)] {
                    out_slice[ch * os + (2 * y + dy) * 2 * w + 2 * x + dx] = v;
                }
            }
        }
    }
    out
}

fn upsample_nearest2_backward(grad_out: &Array3<f64>) -> Array3<f64> {
    let (c, h2, w2) = grad_out.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut grad_in = Array3::zeros((c, h, w));
    let gi = grad_in.as_slice_mut().unwrap();
    let go = grad_out.as_slice().unwrap();
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (dy, dx) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)] {
                    acc += go[ch * h2 * w2 + (2 * y + dy) * w2 + 2 * x + dx];
                }
                gi[ch * h * w + y * w + x] = acc;
            }
        }
    }
    grad_in
}

fn concat_channels(a: &Array3<f64>, b: &Array3<f64>) -> Array3<f64> {
    let (ca, h, w) = a.dim();
    let (cb, _, _) = b.dim();
    let mut out = Array3::zeros((ca + cb, h, w));
    let os = out.as_slice_mut().unwrap();
    os[..ca * h * w].copy_from_slice(a.as_slice().unwrap());
    os[ca * h * w..].copy_from_slice(b.as_slice().unwrap());
    out
}

struct ConvTrace {
    input: Array3<f64>,
    output: Array3<f64>,
}

pub struct ForwardCache {
    conv_traces: Vec<ConvTrace>,
    pool_argmax: Vec<Vec<usize>>,
    pool_in_dims: Vec<(usize, usize, usize)>,
    input_dim: (usize, usize, usize),
}

fn check_input(config: &NetConfig, input: &Array3<f64>) -> Result<()> {
    let (c, h, w) = input.dim();
    if c != config.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, config wants {}",
            c, config.in_channels
        )));
    }
    let div = 1usize << config.depth;
    if h % div != 0 || w % div != 0 || h / div == 0 || w / div == 0 {
        return Err(Error::ShapeMismatch(format!(
            "spatial size {}x{} not divisible by 2^{}",
            h, w, config.depth
        )));
    }
    Ok(())
}

/// Forward pass keeping every intermediate needed for `backward`.
pub fn forward_cached(weights: &NetWeights, input: &Array3<f64>) -> Result<(Array2<f64>, ForwardCache)> {
    check_input(&weights.config, input)?;
    let d = weights.config.depth;
    let mut cache = ForwardCache {
        conv_traces: Vec::new(),
        pool_argmax: Vec::new(),
        pool_in_dims: Vec::new(),
        input_dim: input.dim(),
    };

    let conv = |cache: &mut ForwardCache, name: &str, x: Array3<f64>, relu: bool| {
        let wi = weights.tensor_index(&format!("{name}.weight"));
        let bi = weights.tensor_index(&format!("{name}.bias"));
        let out = conv_forward(&weights.tensors[wi], &weights.tensors[bi], &x, relu);
        cache.conv_traces.push(ConvTrace { input: x, output: out.clone() });
        out
    };

    let mut x = input.clone();
    let mut skips = Vec::new();
    for l in 0..d {
        x = conv(&mut cache, &format!("enc{l}a"), x, true);
        x = conv(&mut cache, &format!("enc{l}b"), x, true);
        skips.push(x.clone());
        cache.pool_in_dims.push(x.dim());
        let (pooled, argmax) = maxpool2(&x);
        cache.pool_argmax.push(argmax);
        x = pooled;
    }
    x = conv(&mut cache, "bot_a", x, true);
    x = conv(&mut cache, "bot_b", x, true);
    for l in (0..d).rev() {
        x = upsample_nearest2(&x);
        x = conv(&mut cache, &format!("up{l}"), x, true);
        x = concat_channels(&x, &skips[l]);
        x = conv(&mut cache, &format!("dec{l}a"), x, true);
        x = conv(&mut cache, &format!("dec{l}b"), x, true);
    }
    x = conv(&mut cache, "out", x, false);

    let (_, h, w) = input.dim();
    let mut out2 = Array2::zeros((h, w));
    out2.as_slice_mut().unwrap().copy_from_slice(&x.as_slice().unwrap()[..h * w]);
    if weights.config.residual {
        let in_slice = input.as_slice().unwrap();
        for (o, &i) in out2.as_slice_mut().unwrap().iter_mut().zip(&in_slice[..h * w]) {
            *o += i;
        }
    }
    Ok((out2, cache))
}

/// Maps a channel stack to a single-channel image.
pub fn forward(weights: &NetWeights, input: &Array3<f64>) -> Result<ImageSlice> {
    let (out, _) = forward_cached(weights, input)?;
    let (h, w) = out.dim();
    ImageSlice::new(h, w, out.into_raw_vec_and_offset().0)
}

/// Backward pass. Returns parameter gradients (same order and shapes as
/// `weights.tensors`) and the gradient with respect to the input stack.
pub fn backward(
    weights: &NetWeights,
    cache: &ForwardCache,
    grad_out: &Array2<f64>,
) -> Result<(Vec<Tensor>, Array3<f64>)> {
    let d = weights.config.depth;
    let b = weights.config.base_channels;
    let ch = |l: usize| b << l;
    let (h, w) = grad_out.dim();
    if (1, h, w) != (1, cache.input_dim.1, cache.input_dim.2) {
        return Err(Error::ShapeMismatch("gradient does not match forward output".into()));
    }

    let mut grads: Vec<Tensor> = weights
        .tensors
        .iter()
        .map(|t| Tensor { name: t.name.clone(), shape: t.shape.clone(), data: vec![0.0; t.len()] })
        .collect();

    let mut trace_idx = cache.conv_traces.len();
    // Consumes conv traces in reverse execution order.
    let conv_back =
        |grads: &mut Vec<Tensor>, trace_idx: &mut usize, name: &str, g: Array3<f64>, relu: bool| {
            *trace_idx -= 1;
            let trace = &cache.conv_traces[*trace_idx];
            let wi = weights.tensor_index(&format!("{name}.weight"));
            let bi = weights.tensor_index(&format!("{name}.bias"));
            let (gw, gb, gi) =
                conv_backward(&weights.tensors[wi], &trace.input, &trace.output, &g, relu);
            for (acc, v) in grads[wi].data.iter_mut().zip(gw) {
                *acc += v;
            }
            for (acc, v) in grads[bi].data.iter_mut().zip(gb) {
                *acc += v;
            }
            gi
        };

    let mut g = Array3::zeros((1, h, w));
    g.as_slice_mut().unwrap().copy_from_slice(grad_out.as_slice().unwrap());

    let mut g = conv_back(&mut grads, &mut trace_idx, "out", g, false);
    let mut skip_grads: Vec<Option<Array3<f64>>> = vec![None; d];
    for l in 0..d {
        g = conv_back(&mut grads, &mut trace_idx, &format!("dec{l}b"), g, true);
        g = conv_back(&mut grads, &mut trace_idx, &format!("dec{l}a"), g, true);
        // Split the concat gradient into the upsample branch and the skip.
        let (c_total, gh, gw2) = g.dim();
        let c_up = ch(l);
        let gs = g.as_slice().unwrap();
        let mut g_up = Array3::zeros((c_up, gh, gw2));
        g_up.as_slice_mut().unwrap().copy_from_slice(&gs[..c_up * gh * gw2]);
        let mut g_skip = Array3::zeros((c_total - c_up, gh, gw2));
        g_skip.as_slice_mut().unwrap().copy_from_slice(&gs[c_up * gh * gw2..]);
        skip_grads[l] = Some(g_skip);
        let g_pre = conv_back(&mut grads, &mut trace_idx, &format!("up{l}"), g_up, true);
        g = upsample_nearest2_backward(&g_pre);
    }
    g = conv_back(&mut grads, &mut trace_idx, "bot_b", g, true);
    g = conv_back(&mut grads, &mut trace_idx, "bot_a", g, true);
    for l in (0..d).rev() {
        let (c, ih, iw) = cache.pool_in_dims[l];
        let mut gi = maxpool2_backward(&g, &cache.pool_argmax[l], c, ih, iw);
        let skip = skip_grads[l].take().expect("skip gradient missing");
        for (a, &s) in gi.as_slice_mut().unwrap().iter_mut().zip(skip.as_slice().unwrap()) {
            *a += s;
        }
        g = conv_back(&mut grads, &mut trace_idx, &format!("enc{l}b"), gi, true);
        g = conv_back(&mut grads, &mut trace_idx, &format!("enc{l}a"), g, true);
    }
    debug_assert_eq!(trace_idx, 0);

    if weights.config.residual {
        let gs = g.as_slice_mut().unwrap();
        for (a, &v) in gs[..h * w].iter_mut().zip(grad_out.as_slice().unwrap()) {
            *a += v;
        }
    }
    Ok((grads, g))
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointManifest {
    config: NetConfig,
    tensors: Vec<TensorEntry>,
}

/// Writes `<base>.json` (manifest) and `<base>.blob` (little-endian f32
/// values, tensors concatenated in manifest order, offsets in elements).
pub fn save(weights: &NetWeights, base: &Path) -> Result<()> {
    let mut entries = Vec::new();
    let mut blob = Vec::new();
    let mut offset = 0usize;
    for t in &weights.tensors {
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset,
            len: t.len(),
        });
        for &v in &t.data {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
        offset += t.len();
    }
    let manifest = CheckpointManifest { config: weights.config, tensors: entries };
    fs::write(base.with_extension("json"), serde_json::to_string_pretty(&manifest)?)?;
    fs::write(base.with_extension("blob"), blob)?;
    Ok(())
}

pub fn load(base: &Path) -> Result<NetWeights> {
    let manifest: CheckpointManifest =
        serde_json::from_str(&fs::read_to_string(base.with_extension("json"))?)
            .map_err(|e| Error::CorruptFile(format!("checkpoint manifest: {e}")))?;
    manifest.config.validate().map_err(|e| Error::CorruptFile(e.to_string()))?;
    let blob = fs::read(base.with_extension("blob"))?;

    let specs = conv_specs(&manifest.config);
    let mut expected = Vec::new();
    for s in &specs {
        expected.push((format!("{}.weight", s.name), vec![s.out_c, s.in_c, s.kernel, s.kernel]));
        expected.push((format!("{}.bias", s.name), vec![s.out_c]));
    }
    if manifest.tensors.len() != expected.len() {
        return Err(Error::CorruptFile(format!(
            "checkpoint lists {} tensors, config implies {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }

    let mut tensors = Vec::new();
    let mut offset = 0usize;
    for (entry, (name, shape)) in manifest.tensors.iter().zip(&expected) {
        if &entry.name != name || &entry.shape != shape {
            return Err(Error::CorruptFile(format!(
                "tensor {} has shape {:?}, config implies {} with {:?}",
                entry.name, entry.shape, name, shape
            )));
        }
        let len: usize = shape.iter().product();
        if entry.len != len || entry.offset != offset {
            return Err(Error::CorruptFile(format!("tensor {} offset/len mismatch", entry.name)));
        }
        let byte_start = offset * 4;
        let byte_end = (offset + len) * 4;
        if byte_end > blob.len() {
            return Err(Error::CorruptFile("checkpoint blob truncated".into()));
        }
        let data: Vec<f64> = blob[byte_start..byte_end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::CorruptFile(format!("non-finite value in tensor {}", entry.name)));
        }
        tensors.push(Tensor { name: entry.name.clone(), shape: shape.clone(), data });
        offset += len;
    }
    if blob.len() != offset * 4 {
        return Err(Error::CorruptFile("checkpoint blob size mismatch".into()));
    }
    Ok(NetWeights { config: manifest.config, tensors })
}
