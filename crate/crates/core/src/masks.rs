//! Deterministic generators for baseline Cartesian line-sampling masks and
//! budget/rate utilities.
//!
//! All generators return exactly `budget` distinct phase-encode line indices
//! in `[0, n)`. Centering rule used throughout: a contiguous block of `b`
//! lines starts at `n/2 - ceil((b-1)/2)`, i.e. it is symmetric around the DC
//! line for odd `b` and carries the extra line on the low-index side for
//! even `b`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary line mask: a sorted set of sampled phase-encode line indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineMask {
    n_lines: usize,
    indices: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct LineMaskFile {
    n_lines: usize,
    budget: usize,
    indices: Vec<usize>,
}

impl LineMask {
    pub fn new(n_lines: usize, mut indices: Vec<usize>) -> Result<Self> {
        if n_lines == 0 {
            return Err(Error::InvalidMask("n_lines must be positive".into()));
        }
        indices.sort_unstable();
        if indices.is_empty() {
            return Err(Error::InvalidMask("mask must contain at least one line".into()));
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidMask("duplicate line index".into()));
        }
        if *indices.last().unwrap() >= n_lines {
            return Err(Error::InvalidMask(format!(
                "index {} out of range for {} lines",
                indices.last().unwrap(),
                n_lines
            )));
        }
        Ok(Self { n_lines, indices })
    }

    pub fn n_lines(&self) -> usize {
        self.n_lines
    }

    pub fn budget(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// 0/1 weight vector of length `n_lines`, usable with `apply_line_mask`.
    pub fn as_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_lines];
        for &i in &self.indices {
            w[i] = 1.0;
        }
        w
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&LineMaskFile {
            n_lines: self.n_lines,
            budget: self.indices.len(),
            indices: self.indices.clone(),
        })
        .expect("mask serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LineMaskFile =
            serde_json::from_str(text).map_err(|e| Error::CorruptFile(format!("mask json: {e}")))?;
        if file.indices.len() != file.budget {
            return Err(Error::CorruptFile(format!(
                "mask file budget {} but {} indices",
                file.budget,
                file.indices.len()
            )));
        }
        if file.indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::CorruptFile("mask indices not strictly increasing".into()));
        }
        Self::new(file.n_lines, file.indices).map_err(|e| Error::CorruptFile(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

fn check_budget(n: usize, budget: usize) -> Result<()> {
    if budget == 0 || budget > n {
        return Err(Error::InvalidBudget(format!("budget {} out of range for n = {}", budget, n)));
    }
    Ok(())
}

fn centered_block(n: usize, size: usize) -> std::ops::Range<usize> {
    let start = n / 2 - (size.max(1) - 1).div_ceil(2);
    start..start + size
}

/// Low-resolution mask: `budget` contiguous lines centered on the DC row.
pub fn lowres_mask(n: usize, budget: usize) -> Result<LineMask> {
    check_budget(n, budget)?;
    LineMask::new(n, centered_block(n, budget).collect())
}

/// Equidistant mask: `round(center_fraction * budget)` contiguous centered
/// lines plus the remainder spread evenly over the complement.
pub fn equidistant_mask(n: usize, budget: usize, center_fraction: f64) -> Result<LineMask> {
    check_budget(n, budget)?;
    if !(center_fraction > 0.0 && center_fraction <= 1.0) {
        return Err(Error::InvalidBudget(format!(
            "center_fraction {} outside (0, 1]",
            center_fraction
        )));
    }
    let center = ((center_fraction * budget as f64).round() as usize).min(budget);
    let block = if center > 0 { centered_block(n, center) } else { 0..0 };
    let mut indices: Vec<usize> = block.clone().collect();
    let peripheral = budget - center;
    if peripheral > 0 {
        let complement: Vec<usize> = (0..n).filter(|i| !block.contains(i)).collect();
        let len = complement.len();
        if peripheral == 1 {
            indices.push(complement[(len - 1) / 2]);
        } else {
            for j in 0..peripheral {
                let pos = (j as f64 * (len - 1) as f64 / (peripheral - 1) as f64).round() as usize;
                indices.push(complement[pos]);
            }
        }
    }
    LineMask::new(n, indices)
}

/// Gaussian variable-density mask: the DC line plus `budget - 1` lines drawn
/// without replacement from weights `exp(-(i - n/2)^2 / (2 sigma^2))` using a
/// ChaCha8 generator seeded with `seed` (inverse-CDF draw per line).
pub fn gaussian_mask(n: usize, budget: usize, sigma: f64, seed: u64) -> Result<LineMask> {
    check_budget(n, budget)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidSigma(format!("sigma {} must be positive and finite", sigma)));
    }
    let dc = n / 2;
    let weight = |i: usize| {
        let d = i as f64 - dc as f64;
        (-d * d / (2.0 * sigma * sigma)).exp()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; n];
    chosen[dc] = true;
    for _ in 1..budget {
        let total: f64 = (0..n).filter(|&i| !chosen[i]).map(weight).sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for i in (0..n).filter(|&i| !chosen[i]) {
            acc += weight(i);
            if u < acc {
                pick = Some(i);
                break;
            }
        }
        // Fall back to the last free index when rounding pushes u past acc.
        let pick = pick.unwrap_or_else(|| (0..n).rev().find(|&i| !chosen[i]).unwrap());
        chosen[pick] = true;
    }
    LineMask::new(n, (0..n).filter(|&i| chosen[i]).collect())
}

/// Top-`budget` lines by probability; ties broken toward the DC line, then
/// toward the lower index.
pub fn mask_from_probabilities(probs: &[f64], budget: usize) -> Result<LineMask> {
    let n = probs.len();
    check_budget(n, budget)?;
    for (i, &p) in probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidMask(format!("probability[{}] = {} outside [0, 1]", i, p)));
        }
    }
    let dc = n / 2;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .unwrap()
            .then_with(|| a.abs_diff(dc).cmp(&b.abs_diff(dc)))
            .then_with(|| a.cmp(&b))
    });
    LineMask::new(n, order[..budget].to_vec())
}

/// Acceleration factor R = n / budget.
pub fn acceleration(n: usize, budget: usize) -> Result<f64> {
    if budget == 0 {
        return Err(Error::InvalidBudget("budget must be positive".into()));
    }
    Ok(n as f64 / budget as f64)
}
