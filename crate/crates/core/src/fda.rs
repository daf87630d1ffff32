//! Low-frequency magnitude swapping between a source and a target image.
//!
//! The source spectrum keeps its phase everywhere; inside a small centred
//! rectangle of half-width `alpha` (in normalized frequency) its magnitude is
//! replaced by the target's.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image2D;
use crate::spectral::{
    centered_reflection, forward_dft, inverse_dft, recombine, shift_dc, split_mag_phase, unshift_dc,
    MagPhase,
};

pub const DEFAULT_ALPHA: f64 = 0.014;

/// Binary low-frequency mask in centred coordinates (DC at `(⌊H/2⌋, ⌊W/2⌋)`).
#[derive(Debug, Clone, PartialEq)]
pub struct LowFreqMask {
    width: usize,
    height: usize,
    alpha: f64,
    data: Vec<bool>,
}

impl LowFreqMask {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// `(row, col)` of every set entry in row-major order.
    pub fn ones(&self) -> Vec<(usize, usize)> {
        (0..self.data.len())
            .filter(|&i| self.data[i])
            .map(|i| (i / self.width, i % self.width))
            .collect()
    }

    pub fn to_image(&self) -> Image2D {
        Image2D::new(
            self.width,
            self.height,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask dimensions are valid")
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Whether index `i` of an axis of length `n` satisfies `-α < 2i/n - 1 < α`.
///
/// Evaluated as `|2i - n| < α·n` so that boundary indices with a rational
/// `2i/n - 1 == ±α` stay excluded despite rounding.
fn in_band(i: usize, n: usize, alpha: f64) -> bool {
    ((2 * i) as f64 - n as f64).abs() < alpha * n as f64
}

pub fn build_mask(width: usize, height: usize, alpha: f64) -> Result<LowFreqMask> {
    if width == 0 || height == 0 {
        return Err(Error::Parameter(format!(
            "mask dimensions must be positive, got {width}x{height}"
        )));
    }
    check_alpha(alpha)?;
    let rows: Vec<bool> = (0..height).map(|r| in_band(r, height, alpha)).collect();
    let cols: Vec<bool> = (0..width).map(|c| in_band(c, width, alpha)).collect();
    let data = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| r && c))
        .collect();
    Ok(LowFreqMask { width, height, alpha, data })
}

/// What to do with adapted values that leave `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangePolicy {
    #[default]
    Clip,
    Rescale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdaParams {
    pub alpha: f64,
    pub range_policy: RangePolicy,
}

impl Default for FdaParams {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, range_policy: RangePolicy::Clip }
    }
}

impl FdaParams {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)
    }
}

impl RangePolicy {
    pub fn apply(self, img: &Image2D) -> Image2D {
        match self {
            RangePolicy::Clip => img.clamped(0.0, 1.0),
            RangePolicy::Rescale => {
                let (lo, hi) = img.min_max();
                if hi - lo > f64::EPSILON {
                    img.rescaled()
                } else {
                    img.clamped(0.0, 1.0)
                }
            }
        }
    }
}

fn centered_mag_phase(img: &Image2D) -> MagPhase {
    split_mag_phase(&shift_dc(&forward_dft(img)))
}

fn check_same_shape(source: &Image2D, target: &Image2D) -> Result<()> {
    if source.shape() != target.shape() {
        return Err(Error::Shape {
            left_label: "source",
            left: source.shape(),
            right_label: "target",
            right: target.shape(),
        });
    }
    Ok(())
}

/// Averages every magnitude with its point reflection about the centre bin.
fn symmetrize(magnitude: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; magnitude.len()];
    for row in 0..height {
        let rr = centered_reflection(row, height);
        for col in 0..width {
            let rc = centered_reflection(col, width);
            out[row * width + col] = 0.5 * (magnitude[row * width + col] + magnitude[rr * width + rc]);
        }
    }
    out
}

fn swap_and_invert(source: &MagPhase, target_magnitude: &[f64], mask: &LowFreqMask) -> Result<Image2D> {
    let magnitude: Vec<f64> = mask
        .data
        .iter()
        .zip(source.magnitude.iter().zip(target_magnitude))
        .map(|(&inside, (&s, &t))| if inside { t } else { s })
        .collect();
    let mut swapped = MagPhase { magnitude, ..source.clone() };
    match inverse_dft(&unshift_dc(&recombine(&swapped)?)) {
        Err(Error::SpectralInconsistency { .. }) => {
            // Odd axes put the band off-centre, so the swapped magnitude is
            // no longer even; restore the symmetry a real image needs.
            swapped.magnitude = symmetrize(&swapped.magnitude, mask.width, mask.height);
            inverse_dft(&unshift_dc(&recombine(&swapped)?))
        }
        other => other,
    }
}

/// The adapted image before any range policy is applied.
pub fn adapt_raw(source: &Image2D, target: &Image2D, alpha: f64) -> Result<Image2D> {
    check_same_shape(source, target)?;
    let mask = build_mask(source.width(), source.height(), alpha)?;
    let target_mp = centered_mag_phase(target);
    swap_and_invert(&centered_mag_phase(source), &target_mp.magnitude, &mask)
}

/// Adapts `source` toward `target` and maps the result into `[0, 1]`.
pub fn adapt(source: &Image2D, target: &Image2D, params: &FdaParams) -> Result<Image2D> {
    params.validate()?;
    Ok(params.range_policy.apply(&adapt_raw(source, target, params.alpha)?))
}

/// `output[i] = adapt(sources[i], targets[pairing[i]])`, computed in parallel
/// with results in input order.
pub fn adapt_batch(
    sources: &[Image2D],
    targets: &[Image2D],
    pairing: &[usize],
    params: &FdaParams,
) -> Result<Vec<Image2D>> {
    params.validate()?;
    if pairing.len() != sources.len() {
        return Err(Error::Manifest(format!(
            "pairing has {} entries for {} sources",
            pairing.len(),
            sources.len()
        )));
    }
    if let Some((i, &t)) = pairing.iter().enumerate().find(|(_, &t)| t >= targets.len()) {
        return Err(Error::Manifest(format!(
            "source {i} is paired with target {t}, but only {} targets exist",
            targets.len()
        )));
    }
    let Some(first) = sources.first() else {
        return Ok(Vec::new());
    };
    for (s, &t) in sources.iter().zip(pairing) {
        check_same_shape(first, s)?;
        check_same_shape(s, &targets[t])?;
    }
    let mask = build_mask(first.width(), first.height(), params.alpha)?;

    let mut used: Vec<usize> = pairing.to_vec();
    used.sort_unstable();
    used.dedup();
    let target_mags: BTreeMap<usize, Vec<f64>> = used
        .par_iter()
        .map(|&t| (t, centered_mag_phase(&targets[t]).magnitude))
        .collect();

    sources
        .par_iter()
        .zip(pairing.par_iter())
        .map(|(s, t)| {
            let raw = swap_and_invert(&centered_mag_phase(s), &target_mags[t], &mask)?;
            Ok(params.range_policy.apply(&raw))
        })
        .collect()
}
