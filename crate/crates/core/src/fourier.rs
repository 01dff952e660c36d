//! Centered orthonormal 2D Fourier pair and Cartesian line-masked
//! acquisition simulation.
//!
//! Conventions, fixed once for the whole crate:
//! - forward transform: `K = fftshift(FFT2(x)) / sqrt(H*W)`
//! - inverse transform: `x = IFFT2(ifftshift(K)) / sqrt(H*W)`
//! - the DC coefficient sits at row `H/2`, column `W/2` (floor division)
//! - phase-encode lines are ROWS of the DC-centered spectrum
//!
//! The orthonormal scaling makes the pair unitary, so Parseval holds exactly
//! and the inverse transform is also the adjoint of the forward one (the
//! sampler's gradient path relies on that).

use std::cell::RefCell;

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Real-valued H×W magnitude image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSlice {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl ImageSlice {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput("image dimensions must be positive".into()));
        }
        if pixels.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "expected {} pixels for {}x{}, got {}",
                height * width,
                height,
                width,
                pixels.len()
            )));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, pixels: vec![0.0; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn same_shape(&self, other: &ImageSlice) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn all_finite(&self) -> bool {
        self.pixels.iter().all(|v| v.is_finite())
    }
}

/// Complex H×W spectrum stored as separate real/imaginary planes,
/// DC-centered.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceSlice {
    height: usize,
    width: usize,
    real_plane: Vec<f64>,
    imag_plane: Vec<f64>,
}

impl KSpaceSlice {
    pub fn new(height: usize, width: usize, real_plane: Vec<f64>, imag_plane: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput("k-space dimensions must be positive".into()));
        }
        if real_plane.len() != height * width || imag_plane.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "k-space planes must have {} elements",
                height * width
            )));
        }
        Ok(Self { height, width, real_plane, imag_plane })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn real_plane(&self) -> &[f64] {
        &self.real_plane
    }

    pub fn imag_plane(&self) -> &[f64] {
        &self.imag_plane
    }

    /// Total spectral energy `sum(re^2 + im^2)`.
    pub fn energy(&self) -> f64 {
        self.real_plane
            .iter()
            .zip(&self.imag_plane)
            .map(|(r, i)| r * r + i * i)
            .sum()
    }
}

/// Complex-valued image-domain result of the inverse transform.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    pub height: usize,
    pub width: usize,
    pub real: Vec<f64>,
    pub imag: Vec<f64>,
}

/// Per-pixel magnitude `sqrt(re^2 + im^2)`.
pub fn magnitude_image(z: &ComplexImage) -> ImageSlice {
    let pixels = z
        .real
        .iter()
        .zip(&z.imag)
        .map(|(r, i)| (r * r + i * i).sqrt())
        .collect();
    ImageSlice { height: z.height, width: z.width, pixels }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place 2D FFT on a row-major complex buffer, unscaled.
fn fft2_raw(buf: &mut [Complex<f64>], height: usize, width: usize, inverse: bool) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let row_fft = if inverse {
            planner.plan_fft_inverse(width)
        } else {
            planner.plan_fft_forward(width)
        };
        for row in buf.chunks_exact_mut(width) {
            row_fft.process(row);
        }
        let col_fft = if inverse {
            planner.plan_fft_inverse(height)
        } else {
            planner.plan_fft_forward(height)
        };
        // Columns via transpose, row FFTs, transpose back.
        let mut tr = vec![Complex::default(); buf.len()];
        for r in 0..height {
            for c in 0..width {
                tr[c * height + r] = buf[r * width + c];
            }
        }
        for col in tr.chunks_exact_mut(height) {
            col_fft.process(col);
        }
        for r in 0..height {
            for c in 0..width {
                buf[r * width + c] = tr[c * height + r];
            }
        }
    });
}

fn shift2(buf: &[Complex<f64>], height: usize, width: usize, inverse: bool) -> Vec<Complex<f64>> {
    let (dr, dc) = if inverse {
        (height - height / 2, width - width / 2)
    } else {
        (height / 2, width / 2)
    };
    let mut out = vec![Complex::default(); buf.len()];
    for r in 0..height {
        let nr = (r + dr) % height;
        for c in 0..width {
            let nc = (c + dc) % width;
            out[nr * width + nc] = buf[r * width + c];
        }
    }
    out
}

/// Centered orthonormal forward transform of a complex buffer.
pub(crate) fn fft2_centered_buf(
    re: &[f64],
    im: &[f64],
    height: usize,
    width: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut buf: Vec<Complex<f64>> = re
        .iter()
        .zip(im)
        .map(|(&r, &i)| Complex::new(r, i))
        .collect();
    fft2_raw(&mut buf, height, width, false);
    let shifted = shift2(&buf, height, width, false);
    let scale = 1.0 / ((height * width) as f64).sqrt();
    let (mut out_re, mut out_im) = (Vec::with_capacity(buf.len()), Vec::with_capacity(buf.len()));
    for v in shifted {
        out_re.push(v.re * scale);
        out_im.push(v.im * scale);
    }
    (out_re, out_im)
}

/// Centered orthonormal inverse transform of a complex buffer.
pub(crate) fn ifft2_centered_buf(
    re: &[f64],
    im: &[f64],
    height: usize,
    width: usize,
) -> (Vec<f64>, Vec<f64>) {
    let buf: Vec<Complex<f64>> = re
        .iter()
        .zip(im)
        .map(|(&r, &i)| Complex::new(r, i))
        .collect();
    let mut unshifted = shift2(&buf, height, width, true);
    fft2_raw(&mut unshifted, height, width, true);
    let scale = 1.0 / ((height * width) as f64).sqrt();
    let (mut out_re, mut out_im) = (Vec::with_capacity(buf.len()), Vec::with_capacity(buf.len()));
    for v in unshifted {
        out_re.push(v.re * scale);
        out_im.push(v.im * scale);
    }
    (out_re, out_im)
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height < 2 || width < 2 {
        return Err(Error::InvalidInput(format!(
            "transform needs H, W >= 2, got {}x{}",
            height, width
        )));
    }
    Ok(())
}

/// Centered orthonormal 2D FFT of a real image.
pub fn fft2_centered(img: &ImageSlice) -> Result<KSpaceSlice> {
    check_dims(img.height, img.width)?;
    if !img.all_finite() {
        return Err(Error::InvalidInput("non-finite pixel in image".into()));
    }
    let zeros = vec![0.0; img.pixels.len()];
    let (re, im) = fft2_centered_buf(&img.pixels, &zeros, img.height, img.width);
    KSpaceSlice::new(img.height, img.width, re, im)
}

/// Centered orthonormal inverse 2D FFT; the result is complex in general.
pub fn ifft2_centered(k: &KSpaceSlice) -> Result<ComplexImage> {
    check_dims(k.height, k.width)?;
    if !k.real_plane.iter().chain(&k.imag_plane).all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in k-space".into()));
    }
    let (re, im) = ifft2_centered_buf(&k.real_plane, &k.imag_plane, k.height, k.width);
    Ok(ComplexImage { height: k.height, width: k.width, real: re, imag: im })
}

/// Multiplies row `i` of both k-space planes by `mask[i]`.
///
/// Mask values must lie in [0, 1]; a binary mask retains or zeroes whole
/// phase-encode lines.
pub fn apply_line_mask(k: &KSpaceSlice, mask: &[f64]) -> Result<KSpaceSlice> {
    if mask.len() != k.height {
        return Err(Error::ShapeMismatch(format!(
            "mask length {} does not match {} k-space rows",
            mask.len(),
            k.height
        )));
    }
    for (i, &m) in mask.iter().enumerate() {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::InvalidMask(format!("mask[{}] = {} outside [0, 1]", i, m)));
        }
    }
    let mut re = k.real_plane.clone();
    let mut im = k.imag_plane.clone();
    for r in 0..k.height {
        let m = mask[r];
        for c in 0..k.width {
            re[r * k.width + c] *= m;
            im[r * k.width + c] *= m;
        }
    }
    KSpaceSlice::new(k.height, k.width, re, im)
}

/// Zero-filled reconstruction: fft -> line mask -> ifft -> magnitude.
pub fn zero_filled_recon(img: &ImageSlice, mask: &[f64]) -> Result<ImageSlice> {
    let k = fft2_centered(img)?;
    let masked = apply_line_mask(&k, mask)?;
    let z = ifft2_centered(&masked)?;
    Ok(magnitude_image(&z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force centered DFT oracle, independent of the FFT path:
    /// K[u,v] = sum_{m,n} x[m,n] exp(-2*pi*i*((u-cu)m/H + (v-cv)n/W)) / sqrt(HW)
    pub(crate) fn dft2_centered_oracle(img: &ImageSlice) -> (Vec<f64>, Vec<f64>) {
        let (h, w) = (img.height(), img.width());
        let (cu, cv) = (h / 2, w / 2);
        let mut re = vec![0.0; h * w];
        let mut im = vec![0.0; h * w];
        let scale = 1.0 / ((h * w) as f64).sqrt();
        for u in 0..h {
            for v in 0..w {
                let (mut sr, mut si) = (0.0, 0.0);
                for m in 0..h {
                    for n in 0..w {
                        let ang = -2.0 * std::f64::consts::PI
                            * ((u as f64 - cu as f64) * m as f64 / h as f64
                                + (v as f64 - cv as f64) * n as f64 / w as f64);
                        let x = img.get(m, n);
                        sr += x * ang.cos();
                        si += x * ang.sin();
                    }
                }
                re[u * w + v] = sr * scale;
                im[u * w + v] = si * scale;
            }
        }
        (re, im)
    }

    pub(crate) fn random_image(h: usize, w: usize, seed: u64) -> ImageSlice {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels = (0..h * w).map(|_| rng.random::<f64>()).collect();
        ImageSlice::new(h, w, pixels).unwrap()
    }

    #[test]
    fn constant_image_concentrates_on_dc() {
        let c = 0.7;
        let img = ImageSlice::new(6, 8, vec![c; 48]).unwrap();
        let k = fft2_centered(&img).unwrap();
        let dc = 3 * 8 + 4;
        let expected = c * 48f64.sqrt();
        for idx in 0..48 {
            let (re, im) = (k.real_plane()[idx], k.imag_plane()[idx]);
            if idx == dc {
                assert!((re - expected).abs() < 1e-9, "dc {} vs {}", re, expected);
                assert!(im.abs() < 1e-9);
            } else {
                assert!(re.abs() < 1e-9 && im.abs() < 1e-9, "leak at {}", idx);
            }
        }
    }

    #[test]
    fn round_trip_is_identity() {
        for (h, w, seed) in [(4, 4, 1u64), (8, 6, 2), (16, 16, 3), (15, 9, 4)] {
            let img = random_image(h, w, seed);
            let k = fft2_centered(&img).unwrap();
            let z = ifft2_centered(&k).unwrap();
            let back = magnitude_image(&z);
            for (a, b) in img.pixels().iter().zip(back.pixels()) {
                assert!((a - b).abs() < 1e-6);
            }
            let max_im = z.imag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max_im < 1e-6, "real input should give real inverse");
        }
    }

    #[test]
    fn matches_brute_force_dft_on_4x4() {
        let img = ImageSlice::new(4, 4, (0..16).map(|v| v as f64).collect()).unwrap();
        let k = fft2_centered(&img).unwrap();
        let (ore, oim) = dft2_centered_oracle(&img);
        for idx in 0..16 {
            assert!((k.real_plane()[idx] - ore[idx]).abs() < 1e-9);
            assert!((k.imag_plane()[idx] - oim[idx]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_spectrum_gives_zero_image() {
        let k = KSpaceSlice::new(4, 4, vec![0.0; 16], vec![0.0; 16]).unwrap();
        let z = ifft2_centered(&k).unwrap();
        assert!(z.real.iter().chain(&z.imag).all(|&v| v == 0.0));
    }

    #[test]
    fn unit_dc_coefficient_gives_constant_image() {
        let mut re = vec![0.0; 64];
        re[4 * 8 + 4] = 1.0;
        let k = KSpaceSlice::new(8, 8, re, vec![0.0; 64]).unwrap();
        let z = ifft2_centered(&k).unwrap();
        for idx in 0..64 {
            assert!((z.real[idx] - 0.125).abs() < 1e-12);
            assert!(z.imag[idx].abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_holds() {
        for seed in 0..20u64 {
            let img = random_image(12, 10, seed);
            let k = fft2_centered(&img).unwrap();
            let image_energy: f64 = img.pixels().iter().map(|v| v * v).sum();
            assert!((image_energy - k.energy()).abs() / image_energy < 1e-6);
        }
    }

    #[test]
    fn identity_and_null_masks() {
        let img = random_image(8, 8, 11);
        let k = fft2_centered(&img).unwrap();
        let same = apply_line_mask(&k, &vec![1.0; 8]).unwrap();
        assert_eq!(k, same);
        let none = apply_line_mask(&k, &vec![0.0; 8]).unwrap();
        assert!(none.real_plane().iter().chain(none.imag_plane()).all(|&v| v == 0.0));
    }

    #[test]
    fn dc_only_mask_recovers_constant_image() {
        let img = ImageSlice::new(8, 8, vec![0.3; 64]).unwrap();
        let mut mask = vec![0.0; 8];
        mask[4] = 1.0;
        let out = zero_filled_recon(&img, &mask).unwrap();
        for v in out.pixels() {
            assert!((v - 0.3).abs() < 1e-6);
        }
    }

    #[test]
    fn full_mask_reproduces_input() {
        let img = random_image(16, 16, 5);
        let out = zero_filled_recon(&img, &vec![1.0; 16]).unwrap();
        for (a, b) in img.pixels().iter().zip(out.pixels()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_filled_matches_oracle_route() {
        // Mask-then-inverse computed from the brute-force DFT oracle.
        let img = random_image(6, 6, 42);
        let mask = [1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let out = zero_filled_recon(&img, &mask).unwrap();

        let (mut ore, mut oim) = dft2_centered_oracle(&img);
        for r in 0..6 {
            for c in 0..6 {
                ore[r * 6 + c] *= mask[r];
                oim[r * 6 + c] *= mask[r];
            }
        }
        // Inverse centered DFT, double loop.
        let (h, w) = (6usize, 6usize);
        let (cu, cv) = (h / 2, w / 2);
        let scale = 1.0 / ((h * w) as f64).sqrt();
        for m in 0..h {
            for n in 0..w {
                let (mut sr, mut si) = (0.0, 0.0);
                for u in 0..h {
                    for v in 0..w {
                        let ang = 2.0 * std::f64::consts::PI
                            * ((u as f64 - cu as f64) * m as f64 / h as f64
                                + (v as f64 - cv as f64) * n as f64 / w as f64);
                        let (re, im) = (ore[u * w + v], oim[u * w + v]);
                        sr += re * ang.cos() - im * ang.sin();
                        si += re * ang.sin() + im * ang.cos();
                    }
                }
                let mag = ((sr * scale).powi(2) + (si * scale).powi(2)).sqrt();
                assert!((mag - out.get(m, n)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn binary_masking_is_idempotent() {
        let img = random_image(8, 8, 7);
        let k = fft2_centered(&img).unwrap();
        let mask = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let once = apply_line_mask(&k, &mask).unwrap();
        let twice = apply_line_mask(&once, &mask).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn nested_masks_capture_monotone_energy() {
        let img = random_image(8, 8, 9);
        let k = fft2_centered(&img).unwrap();
        let m1 = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let m2 = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let e1 = apply_line_mask(&k, &m1).unwrap().energy();
        let e2 = apply_line_mask(&k, &m2).unwrap().energy();
        assert!(e1 <= e2);
    }

    #[test]
    fn rejects_bad_inputs() {
        let img = ImageSlice::new(4, 4, vec![f64::NAN; 16]).unwrap();
        assert!(matches!(fft2_centered(&img), Err(Error::InvalidInput(_))));

        let ok = random_image(4, 4, 0);
        let k = fft2_centered(&ok).unwrap();
        assert!(matches!(apply_line_mask(&k, &[1.0; 3]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(apply_line_mask(&k, &[1.5, 0.0, 0.0, 0.0]), Err(Error::InvalidMask(_))));

        let tiny = ImageSlice::new(1, 4, vec![0.0; 4]).unwrap();
        assert!(matches!(fft2_centered(&tiny), Err(Error::InvalidInput(_))));
    }
}
