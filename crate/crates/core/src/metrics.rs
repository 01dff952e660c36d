//! Image-quality metrics (MAE, PSNR, SSIM), error maps, and evaluation
//! report export.
//!
//! SSIM follows the standard reference formulation: 11x11 Gaussian window
//! with sigma 1.5, K1 = 0.01, K2 = 0.03, computed only where the window fits
//! fully (5-pixel border crop), mean over the valid map. `data_range` is 1.0
//! throughout the pipeline since intensities are normalized to [0, 1].

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::ImageSlice;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_same_shape(x: &ImageSlice, y: &ImageSlice) -> Result<()> {
    if !x.same_shape(y) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            x.height(),
            x.width(),
            y.height(),
            y.width()
        )));
    }
    Ok(())
}

/// Mean absolute error over pixels.
pub fn mae(x: &ImageSlice, y: &ImageSlice) -> Result<f64> {
    check_same_shape(x, y)?;
    let n = x.pixels().len() as f64;
    Ok(x.pixels().iter().zip(y.pixels()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
}

/// Peak signal-to-noise ratio in dB; +infinity when the images are equal.
pub fn psnr(x: &ImageSlice, y: &ImageSlice, data_range: f64) -> Result<f64> {
    check_same_shape(x, y)?;
    if !(data_range > 0.0) {
        return Err(Error::InvalidInput(format!("data_range {} must be positive", data_range)));
    }
    let n = x.pixels().len() as f64;
    let mse = x.pixels().iter().zip(y.pixels()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (data_range * data_range / mse).log10())
    }
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Valid-region separable Gaussian filter: output has (H-10) x (W-10) values.
fn filter_valid(img: &[f64], h: usize, w: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let vw = w - SSIM_WINDOW + 1;
    let vh = h - SSIM_WINDOW + 1;
    // Horizontal pass.
    let mut tmp = vec![0.0; h * vw];
    for y in 0..h {
        for x in 0..vw {
            let mut acc = 0.0;
            for (i, &kv) in kernel.iter().enumerate() {
                acc += kv * img[y * w + x + i];
            }
            tmp[y * vw + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0; vh * vw];
    for y in 0..vh {
        for x in 0..vw {
            let mut acc = 0.0;
            for (i, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[(y + i) * vw + x];
            }
            out[y * vw + x] = acc;
        }
    }
    out
}

/// Structural similarity index, mean over the valid window positions.
pub fn ssim(x: &ImageSlice, y: &ImageSlice, data_range: f64) -> Result<f64> {
    check_same_shape(x, y)?;
    let (h, w) = (x.height(), x.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "image {}x{} smaller than the {}x{} SSIM window",
            h, w, SSIM_WINDOW, SSIM_WINDOW
        )));
    }
    let kernel = gaussian_kernel();
    let xs = x.pixels();
    let ys = y.pixels();
    let xx: Vec<f64> = xs.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = ys.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| a * b).collect();

    let mu_x = filter_valid(xs, h, w, &kernel);
    let mu_y = filter_valid(ys, h, w, &kernel);
    let m_xx = filter_valid(&xx, h, w, &kernel);
    let m_yy = filter_valid(&yy, h, w, &kernel);
    let m_xy = filter_valid(&xy, h, w, &kernel);

    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = m_xx[i] - mx * mx;
        let var_y = m_yy[i] - my * my;
        let cov = m_xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
            / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
    }
    Ok(total / mu_x.len() as f64)
}

/// Per-pixel absolute difference.
pub fn error_map(x: &ImageSlice, y: &ImageSlice) -> Result<ImageSlice> {
    check_same_shape(x, y)?;
    let pixels = x.pixels().iter().zip(y.pixels()).map(|(a, b)| (a - b).abs()).collect();
    ImageSlice::new(x.height(), x.width(), pixels)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SliceMetrics {
    pub slice_id: String,
    pub mae: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Describes the sampling mask an evaluation ran with.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MaskDescriptor {
    pub n_lines: usize,
    pub budget: usize,
    pub indices: Vec<usize>,
    pub source: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub per_slice: Vec<SliceMetrics>,
    pub mean_mae: f64,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub mask: MaskDescriptor,
    pub acceleration: f64,
}

impl EvalReport {
    pub fn from_slices(per_slice: Vec<SliceMetrics>, mask: MaskDescriptor, acceleration: f64) -> Result<Self> {
        if per_slice.is_empty() {
            return Err(Error::InvalidInput("empty evaluation set".into()));
        }
        let n = per_slice.len() as f64;
        let mean_mae = per_slice.iter().map(|s| s.mae).sum::<f64>() / n;
        let mean_psnr_db = per_slice.iter().map(|s| s.psnr_db).sum::<f64>() / n;
        let mean_ssim = per_slice.iter().map(|s| s.ssim).sum::<f64>() / n;
        Ok(Self { per_slice, mean_mae, mean_psnr_db, mean_ssim, mask, acceleration })
    }
}

fn fmt_metric(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

/// CSV export: one row per slice plus a final MEAN row. Infinite PSNR is
/// written as the string "inf".
pub fn write_report_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut out = String::from("slice_id,mae,psnr_db,ssim\n");
    for s in &report.per_slice {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.slice_id,
            fmt_metric(s.mae),
            fmt_metric(s.psnr_db),
            fmt_metric(s.ssim)
        ));
    }
    out.push_str(&format!(
        "MEAN,{},{},{}\n",
        fmt_metric(report.mean_mae),
        fmt_metric(report.mean_psnr_db),
        fmt_metric(report.mean_ssim)
    ));
    fs::write(path, out)?;
    Ok(())
}

/// Binary PGM (P5) export, maxval 65535, big-endian 16-bit samples,
/// value = round(clamp(v, 0, 1) * 65535).
pub fn write_pgm16(img: &ImageSlice, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    write!(file, "P5\n{} {}\n65535\n", img.width(), img.height())?;
    let mut bytes = Vec::with_capacity(img.pixels().len() * 2);
    for &v in img.pixels() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    file.write_all(&bytes)?;
    Ok(())
}
