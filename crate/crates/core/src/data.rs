//! Synthetic paired-contrast phantom generation, normalization, dataset
//! splits, and the bit-exact paired-slice file format.
//!
//! Each phantom pair shares geometry (seeded random ellipses assigning
//! tissue labels) while the two contrasts map labels to intensity through
//! independent lookups, so the images are structurally aligned but
//! differently weighted. Ingesting real data is limited to the pair file
//! format below; converting scanner formats is an external concern.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::ImageSlice;

pub const PAIR_MAGIC: [u8; 4] = *b"MCMR";
pub const PAIR_VERSION: u16 = 1;

/// A registered pair of contrasts of the same anatomy.
#[derive(Clone, Debug, PartialEq)]
pub struct SlicePair {
    pub t1: ImageSlice,
    pub t2: ImageSlice,
    pub id: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub version: u32,
    pub height: usize,
    pub width: usize,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: Option<u64>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Self = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::CorruptFile(format!("manifest: {e}")))?;
        Ok(manifest)
    }
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
    theta: f64,
    label: usize,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let (s, c) = self.theta.sin_cos();
        let u = (dx * c + dy * s) / self.ax;
        let v = (-dx * s + dy * c) / self.ay;
        u * u + v * v <= 1.0
    }
}

/// Clamp negatives to zero then divide by the maximum (all-zero input stays
/// all zeros).
pub fn normalize(img: &ImageSlice) -> ImageSlice {
    let mut pixels: Vec<f64> = img.pixels().iter().map(|&v| v.max(0.0)).collect();
    let max = pixels.iter().fold(0.0f64, |m, &v| m.max(v));
    if max > 0.0 {
        pixels.iter_mut().for_each(|v| *v /= max);
    }
    ImageSlice::new(img.height(), img.width(), pixels).expect("shape preserved")
}

fn quantize_f32(img: &ImageSlice) -> ImageSlice {
    let pixels = img.pixels().iter().map(|&v| v as f32 as f64).collect();
    ImageSlice::new(img.height(), img.width(), pixels).expect("shape preserved")
}

/// Smooth low-order polynomial field with the given peak amplitude.
fn bias_field(h: usize, w: usize, amplitude: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let coeffs: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut field = vec![0.0; h * w];
    let mut max_abs = 0.0f64;
    for y in 0..h {
        let v = 2.0 * y as f64 / (h - 1) as f64 - 1.0;
        for x in 0..w {
            let u = 2.0 * x as f64 / (w - 1) as f64 - 1.0;
            let val = coeffs[0] + coeffs[1] * u + coeffs[2] * v + coeffs[3] * u * v
                + coeffs[4] * u * u
                + coeffs[5] * v * v;
            field[y * w + x] = val;
            max_abs = max_abs.max(val.abs());
        }
    }
    if max_abs > 0.0 {
        let scale = amplitude / max_abs;
        field.iter_mut().for_each(|v| *v *= scale);
    }
    field
}

/// Deterministic paired-contrast phantom: shared ellipse geometry, per-label
/// intensity lookups drawn independently for each contrast, plus a small
/// bias field and Gaussian noise (sigma 0.01), clamped and normalized to
/// [0, 1] per slice.
pub fn generate_phantom_pair(height: usize, width: usize, seed: u64) -> Result<SlicePair> {
    if height < 32 || width < 32 || height % 8 != 0 || width % 8 != 0 {
        return Err(Error::InvalidInput(format!(
            "phantom dimensions {}x{} must be >= 32 and divisible by 8",
            height, width
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_ellipses = rng.random_range(5..=12);
    let (hf, wf) = (height as f64, width as f64);
    let mut ellipses = Vec::with_capacity(n_ellipses);
    // A large outer ellipse plays the role of the head outline; the rest are
    // smaller internal structures.
    ellipses.push(Ellipse {
        cy: hf * rng.random_range(0.45..0.55),
        cx: wf * rng.random_range(0.45..0.55),
        ay: hf * rng.random_range(0.3..0.42),
        ax: wf * rng.random_range(0.3..0.42),
        theta: rng.random_range(0.0..std::f64::consts::PI),
        label: 1,
    });
    for label in 2..=n_ellipses {
        ellipses.push(Ellipse {
            cy: hf * rng.random_range(0.25..0.75),
            cx: wf * rng.random_range(0.25..0.75),
            ay: hf * rng.random_range(0.04..0.18),
            ax: wf * rng.random_range(0.04..0.18),
            theta: rng.random_range(0.0..std::f64::consts::PI),
            label,
        });
    }

    let mut labels = vec![0usize; height * width];
    for y in 0..height {
        for x in 0..width {
            for e in &ellipses {
                if e.contains(y as f64 + 0.5, x as f64 + 0.5) {
                    labels[y * width + x] = e.label;
                }
            }
        }
    }

    // Independent per-contrast intensity lookups; label 0 is background.
    let lookup = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut table = vec![0.0];
        table.extend((0..n_ellipses).map(|_| rng.random_range(0.25..1.0)));
        table
    };
    let lookup_t1 = lookup(&mut rng);
    let lookup_t2 = lookup(&mut rng);

    let noise = Normal::new(0.0, 0.01).expect("valid sigma");
    let render = |table: &[f64], rng: &mut ChaCha8Rng| -> ImageSlice {
        let amplitude = rng.random_range(0.005..0.03);
        let bias = bias_field(height, width, amplitude, rng);
        let pixels: Vec<f64> = labels
            .iter()
            .zip(&bias)
            .map(|(&l, &b)| (table[l] + b + noise.sample(rng)).max(0.0))
            .collect();
        ImageSlice::new(height, width, pixels).expect("shape is valid")
    };
    let t1 = quantize_f32(&normalize(&render(&lookup_t1, &mut rng)));
    let t2 = quantize_f32(&normalize(&render(&lookup_t2, &mut rng)));
    Ok(SlicePair { t1, t2, id: format!("phantom_{seed:06}") })
}

fn push_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

/// Pair file layout: magic "MCMR", u16 LE version, u32 LE H, u32 LE W,
/// u16 LE n_contrasts = 2, then H*W little-endian f32 for T1 (row-major)
/// followed by H*W for T2.
pub fn write_pair(pair: &SlicePair, path: &Path) -> Result<()> {
    if !pair.t1.same_shape(&pair.t2) {
        return Err(Error::ShapeMismatch("pair contrasts differ in shape".into()));
    }
    let (h, w) = (pair.t1.height(), pair.t1.width());
    let mut buf = Vec::with_capacity(16 + 8 * h * w);
    buf.extend_from_slice(&PAIR_MAGIC);
    push_u16(&mut buf, PAIR_VERSION);
    push_u32(&mut buf, h as u32);
    push_u32(&mut buf, w as u32);
    push_u16(&mut buf, 2);
    for img in [&pair.t1, &pair.t2] {
        for &v in img.pixels() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_pair(path: &Path) -> Result<SlicePair> {
    let buf = fs::read(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "slice".into());
    if buf.len() < 16 {
        return Err(Error::CorruptFile(format!("{}: truncated header", path.display())));
    }
    if buf[..4] != PAIR_MAGIC {
        return Err(Error::CorruptFile(format!("{}: bad magic", path.display())));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != PAIR_VERSION {
        return Err(Error::CorruptFile(format!("{}: unsupported version {}", path.display(), version)));
    }
    let h = u32::from_le_bytes([buf[6], buf[7], buf[8], buf[9]]) as usize;
    let w = u32::from_le_bytes([buf[10], buf[11], buf[12], buf[13]]) as usize;
    let n_contrasts = u16::from_le_bytes([buf[14], buf[15]]);
    if n_contrasts != 2 {
        return Err(Error::CorruptFile(format!(
            "{}: expected 2 contrasts, found {}",
            path.display(),
            n_contrasts
        )));
    }
    if h == 0 || w == 0 {
        return Err(Error::CorruptFile(format!("{}: zero dimension", path.display())));
    }
    let expected = 16 + 8 * h * w;
    if buf.len() != expected {
        return Err(Error::CorruptFile(format!(
            "{}: {} bytes, expected {}",
            path.display(),
            buf.len(),
            expected
        )));
    }
    let read_plane = |offset: usize| -> ImageSlice {
        let pixels = buf[offset..offset + 4 * h * w]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        ImageSlice::new(h, w, pixels).expect("size checked")
    };
    let t1 = read_plane(16);
    let t2 = read_plane(16 + 4 * h * w);
    Ok(SlicePair { t1, t2, id })
}

/// Seeded shuffle then split into train/val/test of the requested sizes.
/// When the fractions sum to 1 the split is an exact partition.
pub fn split(ids: &[String], fractions: (f64, f64, f64), seed: u64) -> Result<(Vec<String>, Vec<String>, Vec<String>)> {
    let (ft, fv, fe) = fractions;
    if ft < 0.0 || fv < 0.0 || fe < 0.0 || ft + fv + fe > 1.0 + 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split fractions ({ft}, {fv}, {fe}) must be nonnegative and sum to <= 1"
        )));
    }
    let mut shuffled: Vec<String> = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let n = ids.len();
    let n_train = (ft * n as f64).round() as usize;
    let n_val = ((fv * n as f64).round() as usize).min(n - n_train);
    let n_test = if (ft + fv + fe - 1.0).abs() < 1e-9 {
        n - n_train - n_val
    } else {
        ((fe * n as f64).round() as usize).min(n - n_train - n_val)
    };
    let train = shuffled[..n_train].to_vec();
    let val = shuffled[n_train..n_train + n_val].to_vec();
    let test = shuffled[n_train + n_val..n_train + n_val + n_test].to_vec();
    Ok((train, val, test))
}

/// Loads the pairs referenced by one manifest split; paths are relative to
/// the manifest's directory.
pub fn load_split(manifest_dir: &Path, files: &[String]) -> Result<Vec<SlicePair>> {
    files.iter().map(|f| read_pair(&manifest_dir.join(f))).collect()
}
