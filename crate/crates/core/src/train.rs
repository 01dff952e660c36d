//! Two-stage training pipeline and its plumbing: MAE loss, Adam, seeded
//! batching, per-epoch validation, and test-set evaluation.
//!
//! Stage 1 trains the sampler logits jointly with a reconstructor on
//! soft-masked zero-filled inputs; the binary mask is then extracted by
//! budgeted thresholding. Stage 2 trains a fresh reconstructor with the
//! fixed binary mask. Both stages minimize MAE against the ground-truth
//! target contrast; stage 1 adds the sampler's L1 sparsity term.
//!
//! Everything is deterministic given the seed: the shuffle order is a pure
//! function of (seed, epoch), and all arithmetic is sequential f64.

use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SlicePair;
use crate::error::{Error, Result};
use crate::fourier::{zero_filled_recon, ImageSlice};
use crate::masks::{acceleration, LineMask};
use crate::metrics::{self, EvalReport, MaskDescriptor, SliceMetrics};
use crate::sampler::{
    acquire_soft, acquire_soft_backward, acquire_soft_cached, chain_probs_to_logits, extract_mask,
    soft_mask, sparsity_penalty, SamplerParams,
};
use crate::unet::{self, stack_channels, NetConfig, NetWeights};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub budget: usize,
    pub lambda: f64,
    pub slope: f64,
    pub multi_contrast: bool,
    pub depth: usize,
    pub base_channels: usize,
    pub residual: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 4,
            steps: 500,
            seed: 0,
            budget: 6,
            lambda: 0.01,
            slope: 10.0,
            multi_contrast: true,
            depth: 3,
            base_channels: 16,
            residual: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be >= 1".into()));
        }
        Ok(())
    }

    fn net_config(&self) -> NetConfig {
        NetConfig {
            depth: self.depth,
            base_channels: self.base_channels,
            in_channels: if self.multi_contrast { 2 } else { 1 },
            seed: self.seed.wrapping_add(1),
            residual: self.residual,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub phase: &'static str,
    pub loss_total: Option<f64>,
    pub loss_mae: Option<f64>,
    pub loss_sparsity: Option<f64>,
    pub val_mae: Option<f64>,
    pub val_psnr: Option<f64>,
    pub val_ssim: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    pub final_mask: Option<LineMask>,
    pub wall_clock_secs: f64,
}

impl TrainLog {
    /// CSV schema: step,phase,loss_total,loss_mae,loss_sparsity,val_psnr,
    /// val_ssim with empty cells where a column does not apply. Wall-clock
    /// is intentionally not part of the file so artifacts stay reproducible.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
        let mut out = String::from("step,phase,loss_total,loss_mae,loss_sparsity,val_psnr,val_ssim\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.step,
                row.phase,
                opt(row.loss_total),
                opt(row.loss_mae),
                opt(row.loss_sparsity),
                opt(row.val_psnr),
                opt(row.val_ssim)
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn first_loss(&self) -> Option<f64> {
        self.rows.iter().find_map(|r| r.loss_total)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.loss_total)
    }

    pub fn last_val_psnr(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.val_psnr)
    }

    pub fn last_val_mae(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.val_mae)
    }
}

/// Mean absolute error; the stage loss on images.
pub fn mae_loss(pred: &ImageSlice, target: &ImageSlice) -> Result<f64> {
    metrics::mae(pred, target)
}

pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: usize,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update over grouped parameter slices.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch("adam group count mismatch".into()));
    }
    for (g, p) in grads.iter().zip(params.iter()) {
        if g.len() != p.len() {
            return Err(Error::ShapeMismatch("adam group size mismatch".into()));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: state.t + 1, detail: "non-finite gradient".into() });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.adam_beta1.powi(t);
    let bc2 = 1.0 - cfg.adam_beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..p.len() {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

/// Shuffle order for one epoch; a pure function of (seed, epoch).
fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch.wrapping_add(1));
    idx.shuffle(&mut rng);
    idx
}

/// Yields `steps` batches, starting a freshly shuffled epoch whenever the
/// previous one is exhausted. Every slice is visited exactly once per epoch.
struct BatchIter {
    n: usize,
    seed: u64,
    batch_size: usize,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl BatchIter {
    fn new(n: usize, seed: u64, batch_size: usize) -> Self {
        Self { n, seed, batch_size, epoch: 0, order: epoch_order(n, seed, 0), pos: 0 }
    }

    /// Returns the batch and whether it closes out an epoch.
    fn next_batch(&mut self) -> (Vec<usize>, bool) {
        if self.pos >= self.n {
            self.epoch += 1;
            self.order = epoch_order(self.n, self.seed, self.epoch);
            self.pos = 0;
        }
        let end = (self.pos + self.batch_size).min(self.n);
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        (batch, self.pos >= self.n)
    }
}

fn check_dataset(train: &[SlicePair], val: &[SlicePair]) -> Result<(usize, usize)> {
    let first = train
        .first()
        .ok_or_else(|| Error::InvalidInput("empty training set".into()))?;
    let (h, w) = (first.t1.height(), first.t1.width());
    for pair in train.iter().chain(val) {
        if pair.t1.height() != h || pair.t1.width() != w || !pair.t1.same_shape(&pair.t2) {
            return Err(Error::ShapeMismatch("all slices must share one shape".into()));
        }
    }
    Ok((h, w))
}

fn check_finite_loss(loss: f64, step: usize, last: Option<(usize, f64)>) -> Result<()> {
    if loss.is_finite() {
        return Ok(());
    }
    let detail = match last {
        Some((s, l)) => format!("last finite loss {l} at step {s}"),
        None => "first step already non-finite".into(),
    };
    Err(Error::Diverged { step, detail })
}

/// MAE gradient at the prediction: sign(pred - target) / n_pixels.
fn mae_grad(pred: &Array2<f64>, target: &ImageSlice) -> Array2<f64> {
    let n = target.pixels().len() as f64;
    let mut g = pred.clone();
    for (gv, &t) in g.as_slice_mut().unwrap().iter_mut().zip(target.pixels()) {
        *gv = (*gv - t).signum() / n;
        if *gv == 0.0 {
            *gv = 0.0; // sign(0) contributes nothing
        }
    }
    g
}

fn array_to_image(a: &Array2<f64>) -> ImageSlice {
    let (h, w) = a.dim();
    ImageSlice::new(h, w, a.as_slice().unwrap().to_vec()).expect("shape valid")
}

/// Validation metrics over precomputed per-slice input stacks.
fn validate_set(net: &NetWeights, val: &[SlicePair], inputs: &[Array3<f64>]) -> Result<(f64, f64, f64)> {
    let mut mae_sum = 0.0;
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    for (pair, input) in val.iter().zip(inputs) {
        let pred = unet::forward(net, input)?;
        mae_sum += metrics::mae(&pred, &pair.t2)?;
        psnr_sum += metrics::psnr(&pred, &pair.t2, 1.0)?;
        ssim_sum += metrics::ssim(&pred, &pair.t2, 1.0)?;
    }
    let n = val.len() as f64;
    Ok((mae_sum / n, psnr_sum / n, ssim_sum / n))
}

/// Stage 1: joint sampler + reconstructor training on soft-masked inputs.
pub fn train_stage1(
    train: &[SlicePair],
    val: &[SlicePair],
    cfg: &TrainConfig,
) -> Result<(SamplerParams, NetWeights, TrainLog)> {
    cfg.validate()?;
    let (h, _w) = check_dataset(train, val)?;
    let start = Instant::now();

    let mut sampler = SamplerParams::init(h, cfg.slope, cfg.lambda, cfg.seed)?;
    let mut net = unet::init(&cfg.net_config())?;

    let mut sizes: Vec<usize> = net.tensors.iter().map(|t| t.len()).collect();
    sizes.push(sampler.logits.len());
    let mut adam = AdamState::new(&sizes);

    let mut log = TrainLog::default();
    let mut batches = BatchIter::new(train.len(), cfg.seed, cfg.batch_size);
    let mut last_finite: Option<(usize, f64)> = None;

    for step in 1..=cfg.steps {
        let (batch, epoch_done) = batches.next_batch();
        let probs = soft_mask(&sampler);

        let mut net_grads: Vec<Vec<f64>> =
            net.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        let mut prob_grads = vec![0.0; h];
        let mut mae_sum = 0.0;
        for &idx in &batch {
            let pair = &train[idx];
            let (acquired, acq_cache) = acquire_soft_cached(&pair.t2, &probs)?;
            let input = if cfg.multi_contrast {
                stack_channels(&[&acquired, &pair.t1])?
            } else {
                stack_channels(&[&acquired])?
            };
            let (pred, cache) = unet::forward_cached(&net, &input)?;
            mae_sum += mae_loss(&array_to_image(&pred), &pair.t2)?;

            let grad_out = mae_grad(&pred, &pair.t2);
            let (grads, grad_input) = unet::backward(&net, &cache, &grad_out)?;
            for (acc, g) in net_grads.iter_mut().zip(&grads) {
                for (a, &v) in acc.iter_mut().zip(&g.data) {
                    *a += v;
                }
            }
            // Only channel 0 (the acquired image) feeds back into the sampler.
            let ch0: Vec<f64> = grad_input.as_slice().unwrap()[..acquired.pixels().len()].to_vec();
            let gp = acquire_soft_backward(&acq_cache, &ch0)?;
            for (a, v) in prob_grads.iter_mut().zip(gp) {
                *a += v;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        for g in net_grads.iter_mut().flat_map(|g| g.iter_mut()) {
            *g *= scale;
        }
        for g in prob_grads.iter_mut() {
            *g *= scale;
            *g += cfg.lambda / h as f64; // L1 term gradient
        }
        let logit_grads = chain_probs_to_logits(&sampler, &probs, &prob_grads);

        let loss_mae = mae_sum * scale;
        let loss_sparsity = sparsity_penalty(&probs, cfg.lambda);
        let loss_total = loss_mae + loss_sparsity;
        check_finite_loss(loss_total, step, last_finite)?;
        last_finite = Some((step, loss_total));
        log.rows.push(LogRow {
            step,
            phase: "stage1",
            loss_total: Some(loss_total),
            loss_mae: Some(loss_mae),
            loss_sparsity: Some(loss_sparsity),
            val_mae: None,
            val_psnr: None,
            val_ssim: None,
        });

        {
            let mut params: Vec<&mut [f64]> =
                net.tensors.iter_mut().map(|t| t.data.as_mut_slice()).collect();
            params.push(sampler.logits.as_mut_slice());
            let mut grads: Vec<&[f64]> = net_grads.iter().map(|g| g.as_slice()).collect();
            grads.push(&logit_grads);
            adam_step(&mut params, &grads, &mut adam, cfg)?;
        }

        if (epoch_done || step == cfg.steps) && !val.is_empty() {
            let probs = soft_mask(&sampler);
            let inputs: Vec<Array3<f64>> = val
                .iter()
                .map(|pair| {
                    let acquired = acquire_soft(&pair.t2, &probs)?;
                    if cfg.multi_contrast {
                        stack_channels(&[&acquired, &pair.t1])
                    } else {
                        stack_channels(&[&acquired])
                    }
                })
                .collect::<Result<_>>()?;
            let (val_mae, val_psnr, val_ssim) = validate_set(&net, val, &inputs)?;
            log.rows.push(LogRow {
                step,
                phase: "stage1",
                loss_total: None,
                loss_mae: None,
                loss_sparsity: None,
                val_mae: Some(val_mae),
                val_psnr: Some(val_psnr),
                val_ssim: Some(val_ssim),
            });
        }
    }

    log.final_mask = Some(extract_mask(&sampler, cfg.budget)?);
    log.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok((sampler, net, log))
}

/// Stage 2: trains a reconstructor with a fixed binary mask.
pub fn train_stage2(
    train: &[SlicePair],
    val: &[SlicePair],
    mask: &LineMask,
    cfg: &TrainConfig,
) -> Result<(NetWeights, TrainLog)> {
    cfg.validate()?;
    let (h, _w) = check_dataset(train, val)?;
    if mask.n_lines() != h {
        return Err(Error::ShapeMismatch(format!(
            "mask covers {} lines but images have {} rows",
            mask.n_lines(),
            h
        )));
    }
    let start = Instant::now();
    let weights = mask.as_weights();

    // The zero-filled inputs are fixed for the whole stage.
    let build = |pair: &SlicePair| -> Result<Array3<f64>> {
        let zf = zero_filled_recon(&pair.t2, &weights)?;
        if cfg.multi_contrast {
            stack_channels(&[&zf, &pair.t1])
        } else {
            stack_channels(&[&zf])
        }
    };
    let train_inputs: Vec<Array3<f64>> = train.iter().map(build).collect::<Result<_>>()?;
    let val_inputs: Vec<Array3<f64>> = val.iter().map(build).collect::<Result<_>>()?;

    let mut net = unet::init(&cfg.net_config())?;
    let sizes: Vec<usize> = net.tensors.iter().map(|t| t.len()).collect();
    let mut adam = AdamState::new(&sizes);

    let mut log = TrainLog::default();
    let mut batches = BatchIter::new(train.len(), cfg.seed, cfg.batch_size);
    let mut last_finite: Option<(usize, f64)> = None;

    for step in 1..=cfg.steps {
        let (batch, epoch_done) = batches.next_batch();
        let mut net_grads: Vec<Vec<f64>> =
            net.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        let mut mae_sum = 0.0;
        for &idx in &batch {
            let pair = &train[idx];
            let (pred, cache) = unet::forward_cached(&net, &train_inputs[idx])?;
            mae_sum += mae_loss(&array_to_image(&pred), &pair.t2)?;
            let grad_out = mae_grad(&pred, &pair.t2);
            let (grads, _) = unet::backward(&net, &cache, &grad_out)?;
            for (acc, g) in net_grads.iter_mut().zip(&grads) {
                for (a, &v) in acc.iter_mut().zip(&g.data) {
                    *a += v;
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        for g in net_grads.iter_mut().flat_map(|g| g.iter_mut()) {
            *g *= scale;
        }
        let loss = mae_sum * scale;
        check_finite_loss(loss, step, last_finite)?;
        last_finite = Some((step, loss));
        log.rows.push(LogRow {
            step,
            phase: "stage2",
            loss_total: Some(loss),
            loss_mae: Some(loss),
            loss_sparsity: None,
            val_mae: None,
            val_psnr: None,
            val_ssim: None,
        });

        {
            let mut params: Vec<&mut [f64]> =
                net.tensors.iter_mut().map(|t| t.data.as_mut_slice()).collect();
            let grads: Vec<&[f64]> = net_grads.iter().map(|g| g.as_slice()).collect();
            adam_step(&mut params, &grads, &mut adam, cfg)?;
        }

        if (epoch_done || step == cfg.steps) && !val.is_empty() {
            let (val_mae, val_psnr, val_ssim) = validate_set(&net, val, &val_inputs)?;
            log.rows.push(LogRow {
                step,
                phase: "stage2",
                loss_total: None,
                loss_mae: None,
                loss_sparsity: None,
                val_mae: Some(val_mae),
                val_psnr: Some(val_psnr),
                val_ssim: Some(val_ssim),
            });
        }
    }

    log.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok((net, log))
}

/// Per-slice and aggregate metrics of a trained reconstructor under a fixed
/// mask on the test set.
pub fn evaluate(
    net: &NetWeights,
    mask: &LineMask,
    test: &[SlicePair],
    multi_contrast: bool,
    mask_source: &str,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let weights = mask.as_weights();
    let mut per_slice = Vec::with_capacity(test.len());
    for pair in test {
        let zf = zero_filled_recon(&pair.t2, &weights)?;
        let input = if multi_contrast {
            stack_channels(&[&zf, &pair.t1])?
        } else {
            stack_channels(&[&zf])?
        };
        let pred = unet::forward(net, &input)?;
        per_slice.push(SliceMetrics {
            slice_id: pair.id.clone(),
            mae: metrics::mae(&pred, &pair.t2)?,
            psnr_db: metrics::psnr(&pred, &pair.t2, 1.0)?,
            ssim: metrics::ssim(&pred, &pair.t2, 1.0)?,
        });
    }
    let descriptor = MaskDescriptor {
        n_lines: mask.n_lines(),
        budget: mask.budget(),
        indices: mask.indices().to_vec(),
        source: mask_source.to_string(),
    };
    let accel = acceleration(mask.n_lines(), mask.budget())?;
    EvalReport::from_slices(per_slice, descriptor, accel)
}

/// Reconstructs one slice with a trained net, returning the zero-filled
/// input alongside the prediction (used for figure export).
pub fn reconstruct_slice(
    net: &NetWeights,
    mask: &LineMask,
    pair: &SlicePair,
    multi_contrast: bool,
) -> Result<(ImageSlice, ImageSlice)> {
    let zf = zero_filled_recon(&pair.t2, &mask.as_weights())?;
    let input = if multi_contrast {
        stack_channels(&[&zf, &pair.t1])?
    } else {
        stack_channels(&[&zf])?
    };
    let pred = unet::forward(net, &input)?;
    Ok((zf, pred))
}
