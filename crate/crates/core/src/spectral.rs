//! 2D discrete Fourier analysis: forward and inverse transforms,
//! magnitude/phase decomposition, and DC centring.
//!
//! Conventions: the forward transform is the unnormalized sum
//! `F(m,n) = Σ_r Σ_c I(r,c)·exp(-j2π(r·m/H + c·n/W))` with `r` the row index,
//! and the inverse carries the `1/(W·H)` factor. Any size is supported;
//! rustfft picks mixed-radix or Bluestein plans per axis.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image2D;

/// Relative tolerance on `max|imag|` accepted by [`inverse_dft`].
pub const IMAG_RESIDUE_TOLERANCE: f64 = 1e-6;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Where the zero-frequency bin sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcPosition {
    Corner,
    Centered,
}

/// Complex `W×H` spectrum, row-major like [`Image2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D {
    width: usize,
    height: usize,
    data: Vec<Complex64>,
    dc: DcPosition,
}

impl Spectrum2D {
    pub fn new(width: usize, height: usize, data: Vec<Complex64>, dc: DcPosition) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Parameter(format!(
                "spectrum {width}x{height} cannot hold {} bins",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput {
                index,
                reason: format!("non-finite bin {}", data[index]),
            });
        }
        Ok(Self { width, height, data, dc })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn dc_position(&self) -> DcPosition {
        self.dc
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }
}

/// Magnitude and phase arrays of a spectrum. Phase lies in `(-π, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MagPhase {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    pub phase: Vec<f64>,
    pub dc: DcPosition,
}

fn fft_rows(data: &mut [Complex64], row_len: usize, direction: FftDirection) {
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(row_len, direction));
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(data, &mut scratch);
}

fn transpose(data: &[Complex64], width: usize, height: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); data.len()];
    for row in 0..height {
        for col in 0..width {
            out[col * height + row] = data[row * width + col];
        }
    }
    out
}

fn fft_2d(data: &mut Vec<Complex64>, width: usize, height: usize, direction: FftDirection) {
    fft_rows(data, width, direction);
    let mut t = transpose(data, width, height);
    fft_rows(&mut t, height, direction);
    *data = transpose(&t, height, width);
}

/// Unnormalized forward 2D DFT, DC at the corner.
pub fn forward_dft(img: &Image2D) -> Spectrum2D {
    let (width, height) = img.shape();
    let mut data: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_2d(&mut data, width, height, FftDirection::Forward);
    Spectrum2D { width, height, data, dc: DcPosition::Corner }
}

/// Inverse 2D DFT with `1/(W·H)` normalization, returning the real part.
///
/// Fails with [`Error::SpectralInconsistency`] when the imaginary residue
/// exceeds `1e-6·(max|real| + 1)`, which means the spectrum was not
/// conjugate-symmetric. A centred spectrum is unshifted first.
pub fn inverse_dft(spec: &Spectrum2D) -> Result<Image2D> {
    let spec = unshift_dc(spec);
    let (width, height) = spec.shape();
    let mut data = spec.data;
    fft_2d(&mut data, width, height, FftDirection::Inverse);
    let scale = 1.0 / (width * height) as f64;
    let mut max_real = 0.0f64;
    let mut max_imag = 0.0f64;
    for z in data.iter_mut() {
        *z *= scale;
        max_real = max_real.max(z.re.abs());
        max_imag = max_imag.max(z.im.abs());
    }
    let threshold = IMAG_RESIDUE_TOLERANCE * (max_real + 1.0);
    if max_imag >= threshold {
        return Err(Error::SpectralInconsistency { residue: max_imag, threshold });
    }
    Image2D::new(width, height, data.into_iter().map(|z| z.re).collect())
}

/// Splits a spectrum into magnitude and phase; `arg(0)` is defined as 0.
pub fn split_mag_phase(spec: &Spectrum2D) -> MagPhase {
    let magnitude = spec.data.iter().map(|z| z.norm()).collect();
    let phase = spec
        .data
        .iter()
        .map(|z| {
            if z.re == 0.0 && z.im == 0.0 {
                0.0
            } else {
                let p = z.im.atan2(z.re);
                if p <= -PI { PI } else { p }
            }
        })
        .collect();
    MagPhase {
        width: spec.width,
        height: spec.height,
        magnitude,
        phase,
        dc: spec.dc,
    }
}

/// Rebuilds `magnitude·e^{j·phase}`, keeping the DC position of `mp`.
pub fn recombine(mp: &MagPhase) -> Result<Spectrum2D> {
    let n = mp.width * mp.height;
    if mp.magnitude.len() != n || mp.phase.len() != n {
        return Err(Error::Parameter(format!(
            "magnitude/phase lengths {}/{} do not match {}x{}",
            mp.magnitude.len(),
            mp.phase.len(),
            mp.width,
            mp.height
        )));
    }
    if let Some(index) = mp.magnitude.iter().position(|&m| !(m >= 0.0)) {
        return Err(Error::InvalidInput {
            index,
            reason: format!("magnitude {} is negative or NaN", mp.magnitude[index]),
        });
    }
    let data = mp
        .magnitude
        .iter()
        .zip(&mp.phase)
        .map(|(&m, &p)| Complex64::from_polar(m, p))
        .collect();
    Spectrum2D::new(mp.width, mp.height, data, mp.dc)
}

/// Cyclic rotation by `(shift_rows, shift_cols)` of a row-major buffer.
pub(crate) fn roll<T: Copy + Default>(
    data: &[T],
    width: usize,
    height: usize,
    shift_rows: usize,
    shift_cols: usize,
) -> Vec<T> {
    let mut out = vec![T::default(); data.len()];
    for row in 0..height {
        let dst_row = (row + shift_rows) % height;
        for col in 0..width {
            out[dst_row * width + (col + shift_cols) % width] = data[row * width + col];
        }
    }
    out
}

/// Moves DC from the corner to `(⌊H/2⌋, ⌊W/2⌋)`. A centred spectrum is
/// returned unchanged.
pub fn shift_dc(spec: &Spectrum2D) -> Spectrum2D {
    match spec.dc {
        DcPosition::Centered => spec.clone(),
        DcPosition::Corner => Spectrum2D {
            width: spec.width,
            height: spec.height,
            data: roll(&spec.data, spec.width, spec.height, spec.height / 2, spec.width / 2),
            dc: DcPosition::Centered,
        },
    }
}

/// Inverse of [`shift_dc`]. A corner spectrum is returned unchanged.
pub fn unshift_dc(spec: &Spectrum2D) -> Spectrum2D {
    match spec.dc {
        DcPosition::Corner => spec.clone(),
        DcPosition::Centered => Spectrum2D {
            width: spec.width,
            height: spec.height,
            data: roll(
                &spec.data,
                spec.width,
                spec.height,
                spec.height - spec.height / 2,
                spec.width - spec.width / 2,
            ),
            dc: DcPosition::Corner,
        },
    }
}

/// Index of the point reflection `k → -k` of a centred-layout bin.
pub(crate) fn centered_reflection(index: usize, len: usize) -> usize {
    let center = len / 2;
    (2 * center + len - index) % len
}

/// `log(1 + |F|)` with DC centred, min-max normalized; for inspection.
pub fn log_magnitude_image(img: &Image2D) -> Image2D {
    let spec = shift_dc(&forward_dft(img));
    let data = spec.data.iter().map(|z| z.norm().ln_1p()).collect();
    Image2D::new(spec.width, spec.height, data)
        .expect("log magnitude is finite")
        .rescaled()
}
