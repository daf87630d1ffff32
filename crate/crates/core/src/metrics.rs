//! Dice similarity coefficient and batch evaluation reports.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{read_gray8, Image2D};
use crate::simulator::{list_images, MASK_THRESHOLD};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Parameter(format!(
                "mask {width}x{height} cannot hold {} pixels",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Reads an 8-bit image, pixel `> 127` meaning foreground.
    pub fn read(path: &Path) -> Result<Self> {
        let gray = read_gray8(path)?;
        Self::new(
            gray.width() as usize,
            gray.height() as usize,
            gray.as_raw().iter().map(|&p| p > MASK_THRESHOLD).collect(),
        )
    }
}

/// `(2|S∩Ŝ| + ε) / (|S| + |Ŝ| + ε)`.
pub fn dice(s: &BinaryMask, s_hat: &BinaryMask, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if s.shape() != s_hat.shape() {
        return Err(Error::Shape {
            left_label: "ground truth",
            left: s.shape(),
            right_label: "prediction",
            right: s_hat.shape(),
        });
    }
    let (mut both, mut a, mut b) = (0usize, 0usize, 0usize);
    for (&x, &y) in s.data.iter().zip(&s_hat.data) {
        a += x as usize;
        b += y as usize;
        both += (x && y) as usize;
    }
    Ok((2.0 * both as f64 + epsilon) / ((a + b) as f64 + epsilon))
}

/// `pixel > t` becomes foreground.
pub fn threshold(img: &Image2D, t: f64) -> BinaryMask {
    BinaryMask {
        width: img.width(),
        height: img.height(),
        data: img.data().iter().map(|&v| v > t).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ids: Vec<String>,
    pub dsc: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    pub epsilon: f64,
}

impl EvalReport {
    pub fn from_scores(ids: Vec<String>, dsc: Vec<f64>, epsilon: f64) -> Self {
        let n = dsc.len();
        let (mean, median, std) = if n == 0 {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let mean = dsc.iter().sum::<f64>() / n as f64;
            let var = dsc.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
            let mut sorted = dsc.clone();
            sorted.sort_by(f64::total_cmp);
            let median = if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            };
            (mean, median, var.sqrt())
        };
        Self { ids, dsc, mean, median, std, epsilon }
    }

    pub fn to_table(&self) -> String {
        let width = self.ids.iter().map(String::len).max().unwrap_or(2).max(2);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  dsc", "id");
        for (id, d) in self.ids.iter().zip(&self.dsc) {
            let _ = writeln!(out, "{id:<width$}  {d:.6}");
        }
        let _ = writeln!(out, "{:<width$}  {:.6}", "mean", self.mean);
        let _ = writeln!(out, "{:<width$}  {:.6}", "median", self.median);
        let _ = writeln!(out, "{:<width$}  {:.6}", "std", self.std);
        out
    }
}

fn file_names(dir: &Path) -> Result<BTreeSet<String>> {
    Ok(list_images(dir)?
        .into_iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect())
}

/// Scores every same-named prediction/ground-truth pair, ordered by name.
pub fn evaluate_batch(pred_dir: &Path, gt_dir: &Path, epsilon: f64) -> Result<EvalReport> {
    let preds = file_names(pred_dir)?;
    let gts = file_names(gt_dir)?;
    let orphans: Vec<String> = preds
        .symmetric_difference(&gts)
        .map(|name| {
            let dir = if preds.contains(name) { pred_dir } else { gt_dir };
            dir.join(name).display().to_string()
        })
        .collect();
    if !orphans.is_empty() {
        return Err(Error::Pairing { orphans });
    }
    let ids: Vec<String> = preds.into_iter().collect();
    let dsc = ids
        .par_iter()
        .map(|id| {
            let gt = BinaryMask::read(&gt_dir.join(id))?;
            let pred = BinaryMask::read(&pred_dir.join(id))?;
            dice(&gt, &pred, epsilon)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_scores(ids, dsc, epsilon))
}
