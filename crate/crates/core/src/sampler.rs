//! Acquisition model: trainable per-line logits relaxed to a soft mask by a
//! large-slope sigmoid, penalized toward sparsity with an L1 term, and
//! binarized to a top-`budget` line mask after training.
//!
//! The soft acquisition path is `magnitude(ifft(soft_mask * fft(t2)))`. Its
//! gradient with respect to the per-line probabilities uses the unitarity of
//! the centered transform: with upstream complex gradient `gz` pulled back
//! through the magnitude, `dL/dp_i = sum_j Re(conj(F(gz))[i,j] * K[i,j])`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{
    apply_line_mask, fft2_centered, fft2_centered_buf, ifft2_centered, magnitude_image,
    ComplexImage, ImageSlice, KSpaceSlice,
};
use crate::masks::{mask_from_probabilities, LineMask};

/// Trainable sampler state: per-line logits, sigmoid slope, sparsity weight.
#[derive(Clone, Debug)]
pub struct SamplerParams {
    pub logits: Vec<f64>,
    pub slope: f64,
    pub sparsity_coeff: f64,
}

impl SamplerParams {
    /// Seeded init with logits i.i.d. uniform in [-0.01, 0.01], so the soft
    /// mask starts near 0.5 even under a large slope.
    pub fn init(n: usize, slope: f64, sparsity_coeff: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = (0..n).map(|_| rng.random_range(-0.01..0.01)).collect();
        let params = Self { logits, slope, sparsity_coeff };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope > 0.0) || !self.slope.is_finite() {
            return Err(Error::InvalidConfig(format!("slope {} must be positive", self.slope)));
        }
        if self.sparsity_coeff < 0.0 || !self.sparsity_coeff.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sparsity coefficient {} must be nonnegative",
                self.sparsity_coeff
            )));
        }
        if self.logits.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("non-finite logit".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.logits.len()
    }
}

/// Per-line acquisition probabilities, each strictly inside (0, 1).
#[derive(Clone, Debug)]
pub struct SoftMask {
    probs: Vec<f64>,
}

impl SoftMask {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// p_i = sigmoid(slope * w_i).
pub fn soft_mask(params: &SamplerParams) -> SoftMask {
    let probs = params
        .logits
        .iter()
        .map(|&w| 1.0 / (1.0 + (-params.slope * w).exp()))
        .collect();
    SoftMask { probs }
}

/// dp_i/dw_i = slope * p_i * (1 - p_i); chains a probability-space gradient
/// back to logit space.
pub fn chain_probs_to_logits(params: &SamplerParams, mask: &SoftMask, grad_probs: &[f64]) -> Vec<f64> {
    mask.probs
        .iter()
        .zip(grad_probs)
        .map(|(&p, &g)| g * params.slope * p * (1.0 - p))
        .collect()
}

/// Mean-normalized L1 penalty: lambda * mean(p).
pub fn sparsity_penalty(mask: &SoftMask, lambda: f64) -> f64 {
    lambda * mask.probs.iter().sum::<f64>() / mask.probs.len() as f64
}

/// Cache of the forward pass intermediates needed by the backward pass.
pub struct AcquireCache {
    kspace: KSpaceSlice,
    z: ComplexImage,
    magnitude: ImageSlice,
}

/// Soft-masked zero-filled image: magnitude(ifft(p * fft(t2))).
pub fn acquire_soft(img_t2: &ImageSlice, mask: &SoftMask) -> Result<ImageSlice> {
    Ok(acquire_soft_cached(img_t2, mask)?.0)
}

pub fn acquire_soft_cached(img_t2: &ImageSlice, mask: &SoftMask) -> Result<(ImageSlice, AcquireCache)> {
    if mask.len() != img_t2.height() {
        return Err(Error::ShapeMismatch(format!(
            "soft mask length {} does not match image height {}",
            mask.len(),
            img_t2.height()
        )));
    }
    let kspace = fft2_centered(img_t2)?;
    let masked = apply_line_mask(&kspace, &mask.probs)?;
    let z = ifft2_centered(&masked)?;
    let magnitude = magnitude_image(&z);
    let out = magnitude.clone();
    Ok((out, AcquireCache { kspace, z, magnitude }))
}

/// Gradient of a scalar loss with respect to the soft-mask probabilities,
/// given the loss gradient at the acquired magnitude image.
pub fn acquire_soft_backward(cache: &AcquireCache, grad_output: &[f64]) -> Result<Vec<f64>> {
    let (h, w) = (cache.kspace.height(), cache.kspace.width());
    if grad_output.len() != h * w {
        return Err(Error::ShapeMismatch(format!(
            "gradient length {} does not match {}x{} image",
            grad_output.len(),
            h,
            w
        )));
    }
    // Pull the gradient back through the magnitude: gz = g * z / |z|
    // (subgradient 0 where |z| = 0).
    let mut gz_re = vec![0.0; h * w];
    let mut gz_im = vec![0.0; h * w];
    for idx in 0..h * w {
        let m = cache.magnitude.pixels()[idx];
        if m > 0.0 {
            gz_re[idx] = grad_output[idx] * cache.z.real[idx] / m;
            gz_im[idx] = grad_output[idx] * cache.z.imag[idx] / m;
        }
    }
    // Adjoint of the unitary inverse transform is the forward transform.
    let (g_re, g_im) = fft2_centered_buf(&gz_re, &gz_im, h, w);
    let (k_re, k_im) = (cache.kspace.real_plane(), cache.kspace.imag_plane());
    let mut grad = vec![0.0; h];
    for r in 0..h {
        let mut acc = 0.0;
        for c in 0..w {
            let idx = r * w + c;
            // Re(conj(G) * K)
            acc += g_re[idx] * k_re[idx] + g_im[idx] * k_im[idx];
        }
        grad[r] = acc;
    }
    Ok(grad)
}

/// Binarizes the trained sampler: top-`budget` lines of the soft mask.
pub fn extract_mask(params: &SamplerParams, budget: usize) -> Result<LineMask> {
    mask_from_probabilities(soft_mask(params).probs(), budget)
}

/// Fraction of lines whose probability exceeds `threshold`.
pub fn effective_rate(mask: &SoftMask, threshold: f64) -> f64 {
    mask.probs.iter().filter(|&&p| p > threshold).count() as f64 / mask.probs.len() as f64
}

#[derive(Serialize, Deserialize)]
struct SamplerHeader {
    n: usize,
    slope: f64,
    lambda: f64,
}

/// Writes `<base>.json` (header) and `<base>.blob` (little-endian f32 logits).
pub fn save_sampler(params: &SamplerParams, base: &Path) -> Result<()> {
    let header = SamplerHeader {
        n: params.n(),
        slope: params.slope,
        lambda: params.sparsity_coeff,
    };
    fs::write(base.with_extension("json"), serde_json::to_string_pretty(&header)?)?;
    let mut blob = Vec::with_capacity(params.n() * 4);
    for &w in &params.logits {
        blob.extend_from_slice(&(w as f32).to_le_bytes());
    }
    fs::write(base.with_extension("blob"), blob)?;
    Ok(())
}

pub fn load_sampler(base: &Path) -> Result<SamplerParams> {
    let header: SamplerHeader =
        serde_json::from_str(&fs::read_to_string(base.with_extension("json"))?)
            .map_err(|e| Error::CorruptFile(format!("sampler header: {e}")))?;
    let blob = fs::read(base.with_extension("blob"))?;
    if blob.len() != header.n * 4 {
        return Err(Error::CorruptFile(format!(
            "sampler blob has {} bytes, header says n = {}",
            blob.len(),
            header.n
        )));
    }
    let logits = blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let params = SamplerParams { logits, slope: header.slope, sparsity_coeff: header.lambda };
    params.validate().map_err(|e| Error::CorruptFile(e.to_string()))?;
    Ok(params)
}
