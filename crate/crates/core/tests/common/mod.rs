//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the FFT path.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use usfda::Image2D;

/// Direct double sum `F(m,n) = Σ_r Σ_c I(r,c)·e^{-j2π(r·m/H + c·n/W)}`.
pub fn naive_dft(img: &Image2D) -> Vec<Complex64> {
    let (w, h) = img.shape();
    let mut out = vec![Complex64::default(); w * h];
    for m in 0..h {
        for n in 0..w {
            let mut acc = Complex64::default();
            for r in 0..h {
                for c in 0..w {
                    let angle = -2.0 * PI * ((r * m) as f64 / h as f64 + (c * n) as f64 / w as f64);
                    acc += img.get(r, c) * Complex64::from_polar(1.0, angle);
                }
            }
            out[m * w + n] = acc;
        }
    }
    out
}

/// Direct inverse sum with the `1/(W·H)` factor.
pub fn naive_idft(spec: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); w * h];
    for r in 0..h {
        for c in 0..w {
            let mut acc = Complex64::default();
            for m in 0..h {
                for n in 0..w {
                    let angle = 2.0 * PI * ((r * m) as f64 / h as f64 + (c * n) as f64 / w as f64);
                    acc += spec[m * w + n] * Complex64::from_polar(1.0, angle);
                }
            }
            out[r * w + c] = acc / (w * h) as f64;
        }
    }
    out
}

/// Mask predicate evaluated on the literal form `-α < 2i/N - 1 < α`.
pub fn literal_band(i: usize, n: usize, alpha: f64) -> bool {
    let x = 2.0 * i as f64 / n as f64 - 1.0;
    -alpha < x && x < alpha
}

/// Straight-line magnitude swap on the corner-DC spectrum: a corner bin
/// `(m, n)` sits at centred index `((m + ⌊H/2⌋) mod H, (n + ⌊W/2⌋) mod W)`.
pub fn naive_fda(source: &Image2D, target: &Image2D, alpha: f64) -> Vec<f64> {
    let (w, h) = source.shape();
    let fs = naive_dft(source);
    let ft = naive_dft(target);
    let mut swapped = vec![Complex64::default(); w * h];
    for m in 0..h {
        for n in 0..w {
            let i = m * w + n;
            let inside = literal_band((m + h / 2) % h, h, alpha) && literal_band((n + w / 2) % w, w, alpha);
            let mag = if inside { ft[i].norm() } else { fs[i].norm() };
            swapped[i] = Complex64::from_polar(mag, fs[i].im.atan2(fs[i].re));
        }
    }
    naive_idft(&swapped, w, h).iter().map(|z| z.re).collect()
}

pub fn random_image(w: usize, h: usize, seed: u64) -> Image2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image2D::from_fn(w, h, |_, _| rng.random()).unwrap()
}

pub fn disk_mask(size: usize, center_row: f64, center_col: f64, radius: f64) -> Image2D {
    Image2D::from_fn(size, size, |r, c| {
        let d = ((r as f64 + 0.5 - center_row).powi(2) + (c as f64 + 0.5 - center_col).powi(2)).sqrt();
        if d < radius { 1.0 } else { 0.0 }
    })
    .unwrap()
}

pub fn ellipse_mask(size: usize, cr: f64, cc: f64, ar: f64, ac: f64) -> Image2D {
    Image2D::from_fn(size, size, |r, c| {
        let y = (r as f64 + 0.5 - cr) / ar;
        let x = (c as f64 + 0.5 - cc) / ac;
        if x * x + y * y < 1.0 { 1.0 } else { 0.0 }
    })
    .unwrap()
}

pub fn write_mask_png(path: &Path, mask: &Image2D) {
    usfda::image::write_image(path, mask).unwrap();
}

/// Pixels whose whole `(2r+1)²` neighbourhood satisfies `pred`.
pub fn erode(mask: &Image2D, radius: i64, pred: impl Fn(f64) -> bool) -> Vec<bool> {
    let (w, h) = mask.shape();
    let mut out = vec![false; w * h];
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let mut all = true;
            'scan: for dr in -radius..=radius {
                for dc in -radius..=radius {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 || !pred(mask.get(rr as usize, cc as usize)) {
                        all = false;
                        break 'scan;
                    }
                }
            }
            out[r as usize * w + c as usize] = all;
        }
    }
    out
}

pub fn masked_mean(img: &Image2D, sel: &[bool]) -> f64 {
    let (sum, n) = img
        .data()
        .iter()
        .zip(sel)
        .filter(|(_, &s)| s)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    sum / n as f64
}

/// `(row, col)` centroid of the selected pixels.
pub fn centroid(w: usize, sel: &[bool]) -> (f64, f64) {
    let (mut r, mut c, mut n) = (0.0, 0.0, 0.0);
    for (i, _) in sel.iter().enumerate().filter(|(_, &s)| s) {
        r += (i / w) as f64;
        c += (i % w) as f64;
        n += 1.0;
    }
    (r / n, c / n)
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Simulator phenomenology of one sample, measured on the rendered output.
pub struct SampleStats {
    pub region_px: usize,
    pub interior_mean: f64,
    pub exterior_mean: f64,
    pub rayleigh_ratio: f64,
    pub speckle_px: usize,
    pub centroid_offset: f64,
}

/// bmode below this counts as dark when locating the anechoic region.
pub const DARK_LEVEL: f64 = 0.3;
/// Eroding distance for the interior/exterior contrast.
pub const CONTRAST_ERODE: i64 = 3;
/// Distance from the region and the image border for speckle statistics.
pub const SPECKLE_MARGIN: i64 = 12;

pub fn sample_stats(sample: &usfda::simulator::SimulatedSample) -> SampleStats {
    let gt = &sample.ground_truth;
    let (w, _) = gt.shape();
    let interior = erode(gt, CONTRAST_ERODE, |v| v > 0.5);
    let exterior = erode(gt, CONTRAST_ERODE, |v| v < 0.5);
    // Erosion treats out-of-image as failing, so this also keeps the margin
    // away from the border.
    let speckle = erode(gt, SPECKLE_MARGIN, |v| v < 0.5);
    let env: Vec<f64> = sample
        .envelope
        .data()
        .iter()
        .zip(&speckle)
        .filter(|(_, &s)| s)
        .map(|(&v, _)| v)
        .collect();
    let (m, s) = mean_std(&env);
    let dark: Vec<bool> = sample.bmode.data().iter().map(|&v| v < DARK_LEVEL).collect();
    let truth: Vec<bool> = gt.data().iter().map(|&v| v > 0.5).collect();
    let (dr, dc) = centroid(w, &dark);
    let (tr, tc) = centroid(w, &truth);
    SampleStats {
        region_px: truth.iter().filter(|&&b| b).count(),
        interior_mean: masked_mean(&sample.bmode, &interior),
        exterior_mean: masked_mean(&sample.bmode, &exterior),
        rayleigh_ratio: m / s,
        speckle_px: env.len(),
        centroid_offset: ((dr - tr).powi(2) + (dc - tc).powi(2)).sqrt(),
    }
}

/// Twenty distinct anechoic shapes on a 256 grid.
pub fn shape_bank() -> Vec<Image2D> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..20)
        .map(|i| {
            let cr = rng.random_range(80.0..176.0);
            let cc = rng.random_range(80.0..176.0);
            if i % 2 == 0 {
                disk_mask(256, cr, cc, rng.random_range(20.0..50.0))
            } else {
                ellipse_mask(256, cr, cc, rng.random_range(15.0..45.0), rng.random_range(20.0..60.0))
            }
        })
        .collect()
}
