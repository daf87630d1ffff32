//! Convolution-model speckle simulator.
//!
//! Scatterers with Gaussian amplitudes are dropped uniformly over a 2D
//! phantom; those inside the anechoic mask get zero amplitude. The field is
//! binned onto an RF grid (axial step `c/(2·fs)`, lateral pitch one
//! wavelength), convolved with a separable pulse-echo PSF, envelope-detected
//! along depth, log-compressed to a 60 dB window and resampled.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{is_image_path, read_gray8, Image2D};

pub const DYNAMIC_RANGE_DB: f64 = 60.0;
pub const DEFAULT_OUT_SIZE: usize = 256;
pub const MIN_OUT_SIZE: usize = 16;

/// Mask pixels above this 8-bit value are inside the anechoic region.
pub const MASK_THRESHOLD: u8 = 127;

// Masks with more than this fraction of mid-grey pixels are rejected.
const MAX_AMBIGUOUS_FRACTION: f64 = 0.10;

/// FWHM to standard deviation for a Gaussian.
const FWHM_TO_SIGMA: f64 = 0.424_660_900_144_009_5;

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub width_mm: f64,
    pub depth_mm: f64,
    pub n_scatterers: usize,
    /// Binary mask stretched over the full phantom extent.
    pub anechoic_mask: Image2D,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn new(anechoic_mask: Image2D, seed: u64) -> Self {
        let defaults = PhantomGeometry::default();
        Self {
            width_mm: defaults.width_mm,
            depth_mm: defaults.depth_mm,
            n_scatterers: defaults.n_scatterers,
            anechoic_mask,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scatterers == 0 {
            return Err(Error::Parameter("n_scatterers must be at least 1".into()));
        }
        if !(self.width_mm > 0.0 && self.depth_mm > 0.0) {
            return Err(Error::Parameter(format!(
                "phantom extent must be positive, got {} x {} mm",
                self.width_mm, self.depth_mm
            )));
        }
        if let Some(i) = self.anechoic_mask.data().iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput {
                index: i,
                reason: "anechoic mask must be binary".into(),
            });
        }
        Ok(())
    }
}

/// The serializable part of a phantom description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomGeometry {
    pub width_mm: f64,
    pub depth_mm: f64,
    pub n_scatterers: usize,
}

impl Default for PhantomGeometry {
    fn default() -> Self {
        Self { width_mm: 50.0, depth_mm: 50.0, n_scatterers: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsfParams {
    pub center_frequency_hz: f64,
    pub fractional_bandwidth: f64,
    pub speed_of_sound_mps: f64,
    pub f_number: f64,
    pub sampling_frequency_hz: f64,
}

impl Default for PsfParams {
    fn default() -> Self {
        Self {
            center_frequency_hz: 3.5e6,
            fractional_bandwidth: 0.6,
            speed_of_sound_mps: 1540.0,
            f_number: 2.0,
            sampling_frequency_hz: 40e6,
        }
    }
}

impl PsfParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("center_frequency_hz", self.center_frequency_hz),
            ("fractional_bandwidth", self.fractional_bandwidth),
            ("speed_of_sound_mps", self.speed_of_sound_mps),
            ("f_number", self.f_number),
            ("sampling_frequency_hz", self.sampling_frequency_hz),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.fractional_bandwidth >= 2.0 {
            return Err(Error::Parameter(format!(
                "fractional_bandwidth must be below 2, got {}",
                self.fractional_bandwidth
            )));
        }
        if self.sampling_frequency_hz <= 2.0 * self.center_frequency_hz {
            return Err(Error::Parameter(format!(
                "sampling frequency {} Hz does not exceed twice the centre frequency",
                self.sampling_frequency_hz
            )));
        }
        Ok(())
    }

    pub fn wavelength_mm(&self) -> f64 {
        self.speed_of_sound_mps / self.center_frequency_hz * 1e3
    }

    pub fn axial_step_mm(&self) -> f64 {
        self.speed_of_sound_mps / (2.0 * self.sampling_frequency_hz) * 1e3
    }

    /// Gaussian-windowed cosine pulse sampled at `fs`; the -6 dB spectral
    /// width is `fractional_bandwidth·f0`.
    pub fn axial_kernel(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let sigma_f = self.fractional_bandwidth * self.center_frequency_hz * FWHM_TO_SIGMA;
        let sigma_samples = self.sampling_frequency_hz / (2.0 * PI * sigma_f);
        let window = 6.0 * sigma_samples;
        if window < 3.0 {
            return Err(Error::Parameter(format!(
                "pulse window spans {window:.2} samples, need at least 3"
            )));
        }
        let half = (3.0 * sigma_samples).ceil() as i64;
        let omega = 2.0 * PI * self.center_frequency_hz / self.sampling_frequency_hz;
        Ok((-half..=half)
            .map(|k| {
                let k = k as f64;
                (-k * k / (2.0 * sigma_samples * sigma_samples)).exp() * (omega * k).cos()
            })
            .collect())
    }

    /// Gaussian beam profile in units of lateral lines; FWHM is `λ·f_number`.
    pub fn lateral_kernel(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let sigma = self.f_number * FWHM_TO_SIGMA;
        let half = (3.0 * sigma).ceil().max(1.0) as i64;
        Ok((-half..=half)
            .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub lateral_mm: f64,
    pub axial_mm: f64,
    pub amplitude: f64,
}

/// Returns `n_scatterers` uniform positions with standard-normal amplitudes,
/// zeroing those whose nearest mask pixel is set.
pub fn scatter_field(spec: &PhantomSpec) -> Result<Vec<Scatterer>> {
    spec.validate()?;
    let mask = &spec.anechoic_mask;
    let (mw, mh) = mask.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.n_scatterers);
    for _ in 0..spec.n_scatterers {
        let lateral_mm = rng.random::<f64>() * spec.width_mm;
        let axial_mm = rng.random::<f64>() * spec.depth_mm;
        let amplitude: f64 = rng.sample(StandardNormal);
        let col = ((lateral_mm / spec.width_mm * mw as f64) as usize).min(mw - 1);
        let row = ((axial_mm / spec.depth_mm * mh as f64) as usize).min(mh - 1);
        let amplitude = if mask.get(row, col) > 0.5 { 0.0 } else { amplitude };
        out.push(Scatterer { lateral_mm, axial_mm, amplitude });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mask_id: Option<String>,
    pub phantom: PhantomGeometry,
    pub seed: u64,
    pub psf: PsfParams,
    pub out_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSample {
    /// Log-compressed, `[0, 1]`.
    pub bmode: Image2D,
    /// Linear envelope normalized to its maximum.
    pub envelope: Image2D,
    pub ground_truth: Image2D,
    pub provenance: Provenance,
}

/// Lines are stored lateral-major: `lines[col][axial_sample]`.
fn bin_scatterers(
    spec: &PhantomSpec,
    scatterers: &[Scatterer],
    n_lines: usize,
    n_samples: usize,
) -> Vec<Vec<f64>> {
    let mut lines = vec![vec![0.0; n_samples]; n_lines];
    for s in scatterers {
        let col = ((s.lateral_mm / spec.width_mm * n_lines as f64) as usize).min(n_lines - 1);
        let row = ((s.axial_mm / spec.depth_mm * n_samples as f64) as usize).min(n_samples - 1);
        lines[col][row] += s.amplitude;
    }
    lines
}

fn convolve_same(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let half = kernel.len() / 2;
    let n = signal.len();
    let mut out = vec![0.0; n];
    for (i, &x) in signal.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (k, &h) in kernel.iter().enumerate() {
            let j = i + k;
            if j >= half && j - half < n {
                out[j - half] += x * h;
            }
        }
    }
    out
}

/// Magnitude of the analytic signal of each line.
fn envelope_lines(lines: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = lines[0].len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut gain = vec![0.0; n];
    gain[0] = 1.0;
    for g in gain.iter_mut().take(n.div_ceil(2)).skip(1) {
        *g = 2.0;
    }
    if n % 2 == 0 {
        gain[n / 2] = 1.0;
    }
    lines
        .iter()
        .map(|line| {
            let mut buf: Vec<Complex64> = line.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fwd.process(&mut buf);
            for (z, &g) in buf.iter_mut().zip(&gain) {
                *z *= g;
            }
            inv.process(&mut buf);
            buf.iter().map(|z| z.norm() / n as f64).collect()
        })
        .collect()
}

fn lines_to_image(lines: &[Vec<f64>]) -> Result<Image2D> {
    let n_lines = lines.len();
    let n_samples = lines[0].len();
    Image2D::from_fn(n_lines, n_samples, |row, col| lines[col][row])
}

/// Maps a max-normalized envelope to `[0, 1]` over a 60 dB window.
pub fn log_compress(normalized_envelope: f64) -> f64 {
    if normalized_envelope <= 0.0 {
        return 0.0;
    }
    let db = (20.0 * normalized_envelope.log10()).clamp(-DYNAMIC_RANGE_DB, 0.0);
    (db + DYNAMIC_RANGE_DB) / DYNAMIC_RANGE_DB
}

/// Nearest-to-threshold binarization of a bilinearly resampled mask.
pub fn resample_mask(mask: &Image2D, width: usize, height: usize) -> Result<Image2D> {
    let r = mask.resample_bilinear(width, height)?;
    Image2D::new(
        width,
        height,
        r.data().iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect(),
    )
}

pub fn render_bmode(
    spec: &PhantomSpec,
    scatterers: &[Scatterer],
    psf: &PsfParams,
    out_size: usize,
) -> Result<SimulatedSample> {
    spec.validate()?;
    if scatterers.is_empty() {
        return Err(Error::Parameter("scatterer list is empty".into()));
    }
    if out_size < MIN_OUT_SIZE {
        return Err(Error::Parameter(format!(
            "output size must be at least {MIN_OUT_SIZE}, got {out_size}"
        )));
    }
    let axial_kernel = psf.axial_kernel()?;
    let lateral_kernel = psf.lateral_kernel()?;
    let n_lines = ((spec.width_mm / psf.wavelength_mm()).round() as usize).max(1);
    let n_samples = ((spec.depth_mm / psf.axial_step_mm()).round() as usize).max(2);

    let lines = bin_scatterers(spec, scatterers, n_lines, n_samples);
    let axial: Vec<Vec<f64>> = lines
        .par_iter()
        .map(|line| convolve_same(line, &axial_kernel))
        .collect();
    let rf: Vec<Vec<f64>> = (0..n_lines)
        .map(|col| {
            let half = lateral_kernel.len() / 2;
            let mut out = vec![0.0; n_samples];
            for (k, &w) in lateral_kernel.iter().enumerate() {
                let src = col + k;
                if src < half || src - half >= n_lines {
                    continue;
                }
                for (o, &v) in out.iter_mut().zip(&axial[src - half]) {
                    *o += w * v;
                }
            }
            out
        })
        .collect();

    let envelope = envelope_lines(&rf);
    let peak = envelope.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let env_norm: Vec<Vec<f64>> = envelope
        .iter()
        .map(|l| l.iter().map(|&v| v * scale).collect())
        .collect();
    let bmode_fine: Vec<Vec<f64>> = env_norm
        .iter()
        .map(|l| l.iter().map(|&v| log_compress(v)).collect())
        .collect();

    let envelope = lines_to_image(&env_norm)?.resample_bilinear(out_size, out_size)?;
    let bmode = lines_to_image(&bmode_fine)?
        .resample_bilinear(out_size, out_size)?
        .clamped(0.0, 1.0);
    let ground_truth = resample_mask(&spec.anechoic_mask, out_size, out_size)?;

    Ok(SimulatedSample {
        bmode,
        envelope,
        ground_truth,
        provenance: Provenance {
            mask_id: None,
            phantom: PhantomGeometry {
                width_mm: spec.width_mm,
                depth_mm: spec.depth_mm,
                n_scatterers: spec.n_scatterers,
            },
            seed: spec.seed,
            psf: *psf,
            out_size,
        },
    })
}

/// Scatters and renders in one step.
pub fn simulate(spec: &PhantomSpec, psf: &PsfParams, out_size: usize) -> Result<SimulatedSample> {
    render_bmode(spec, &scatter_field(spec)?, psf, out_size)
}

/// Loads an 8-bit mask file and binarizes it at `> 127`.
///
/// Files where more than 10% of pixels sit in the mid-grey band 32..=223
/// are not masks and are rejected.
pub fn load_mask(path: &Path) -> Result<Image2D> {
    let gray = read_gray8(path)?;
    let pixels = gray.as_raw();
    if pixels.is_empty() {
        return Err(Error::Ingestion { path: path.into(), reason: "empty image".into() });
    }
    let ambiguous = pixels.iter().filter(|&&p| (32..=223).contains(&p)).count();
    if ambiguous as f64 > MAX_AMBIGUOUS_FRACTION * pixels.len() as f64 {
        return Err(Error::Ingestion {
            path: path.into(),
            reason: format!(
                "not a binary mask ({ambiguous} of {} pixels are mid-grey)",
                pixels.len()
            ),
        });
    }
    Image2D::new(
        gray.width() as usize,
        gray.height() as usize,
        pixels.iter().map(|&p| if p > MASK_THRESHOLD { 1.0 } else { 0.0 }).collect(),
    )
}

/// Image files directly under `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_image_path(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub phantom: PhantomGeometry,
    pub psf: PsfParams,
    pub out_size: usize,
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self {
            phantom: PhantomGeometry::default(),
            psf: PsfParams::default(),
            out_size: DEFAULT_OUT_SIZE,
        }
    }
}

/// Picks `count` distinct masks from `mask_dir` with a seeded shuffle and
/// simulates one sample per mask. Sample `i` uses phantom seed `seed ^ i`.
pub fn generate_dataset(
    mask_dir: &Path,
    count: usize,
    seed: u64,
    params: &SimulationParams,
) -> Result<Vec<SimulatedSample>> {
    params.psf.validate()?;
    let mut masks = list_images(mask_dir)?;
    if count > masks.len() {
        return Err(Error::Configuration(format!(
            "requested {count} samples but {} holds only {} masks",
            mask_dir.display(),
            masks.len()
        )));
    }
    masks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    masks.truncate(count);

    masks
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let mask = load_mask(path)?;
            let mask = resample_mask(&mask, params.out_size, params.out_size)?;
            let spec = PhantomSpec {
                width_mm: params.phantom.width_mm,
                depth_mm: params.phantom.depth_mm,
                n_scatterers: params.phantom.n_scatterers,
                anechoic_mask: mask,
                seed: seed ^ i as u64,
            };
            let mut sample = simulate(&spec, &params.psf, params.out_size)?;
            sample.provenance.mask_id = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned());
            Ok(sample)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(w: usize, h: usize, f: impl Fn(usize, usize) -> bool) -> Image2D {
        Image2D::from_fn(w, h, |r, c| if f(r, c) { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn fully_anechoic_phantom_is_silent() {
        let spec = PhantomSpec {
            n_scatterers: 2000,
            ..PhantomSpec::new(mask_from(8, 8, |_, _| true), 1)
        };
        let field = scatter_field(&spec).unwrap();
        assert!(field.iter().all(|s| s.amplitude == 0.0));
        let sample = render_bmode(&spec, &field, &PsfParams::default(), 32).unwrap();
        assert!(sample.envelope.data().iter().all(|&v| v == 0.0));
        assert!(sample.bmode.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scatter_field_is_deterministic() {
        let spec = PhantomSpec::new(mask_from(16, 16, |_, _| false), 42);
        assert_eq!(scatter_field(&spec).unwrap(), scatter_field(&spec).unwrap());
        let other = PhantomSpec { seed: 43, ..spec.clone() };
        assert_ne!(scatter_field(&spec).unwrap(), scatter_field(&other).unwrap());
    }

    #[test]
    fn half_plane_zeroes_half() {
        let spec = PhantomSpec::new(mask_from(64, 64, |_, c| c < 32), 9);
        let field = scatter_field(&spec).unwrap();
        assert_eq!(field.len(), 100_000);
        let zero = field.iter().filter(|s| s.amplitude == 0.0).count() as f64 / 1e5;
        assert!((zero - 0.5).abs() < 0.01, "zero fraction {zero}");
        // Zeroed scatterers are exactly the ones in the left half.
        assert!(field.iter().all(|s| (s.amplitude == 0.0) == (s.lateral_mm < 25.0)));
    }

    #[test]
    fn invalid_phantoms() {
        let mask = mask_from(4, 4, |_, _| false);
        let bad = [
            PhantomSpec { n_scatterers: 0, ..PhantomSpec::new(mask.clone(), 0) },
            PhantomSpec { width_mm: 0.0, ..PhantomSpec::new(mask.clone(), 0) },
            PhantomSpec::new(Image2D::filled(4, 4, 0.5).unwrap(), 0),
        ];
        for spec in bad {
            assert!(scatter_field(&spec).is_err());
        }
    }

    #[test]
    fn degenerate_pulse_is_rejected() {
        let psf = PsfParams {
            fractional_bandwidth: 1.9,
            sampling_frequency_hz: 8e6,
            ..PsfParams::default()
        };
        assert!(matches!(psf.axial_kernel(), Err(Error::Parameter(_))));
        assert!(PsfParams::default().axial_kernel().unwrap().len() >= 3);
    }

    #[test]
    fn kernels_are_symmetric() {
        let psf = PsfParams::default();
        for k in [psf.axial_kernel().unwrap(), psf.lateral_kernel().unwrap()] {
            assert_eq!(k.len() % 2, 1);
            let n = k.len();
            for i in 0..n {
                assert!((k[i] - k[n - 1 - i]).abs() < 1e-15);
            }
            assert_eq!(k[n / 2], 1.0);
        }
    }

    #[test]
    fn log_compression_window() {
        assert_eq!(log_compress(1.0), 1.0);
        assert_eq!(log_compress(0.0), 0.0);
        assert_eq!(log_compress(1e-4), 0.0);
        assert!((log_compress(0.1) - 40.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_envelope_of_tone() {
        // A windowless cosine with an integer number of cycles has unit envelope.
        let n = 128;
        let line: Vec<f64> = (0..n).map(|i| (2.0 * PI * 8.0 * i as f64 / n as f64).cos()).collect();
        let env = envelope_lines(&[line]);
        assert!(env[0].iter().all(|&v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn render_rejects_small_output() {
        let spec = PhantomSpec { n_scatterers: 100, ..PhantomSpec::new(mask_from(4, 4, |_, _| false), 0) };
        let field = scatter_field(&spec).unwrap();
        assert!(render_bmode(&spec, &field, &PsfParams::default(), 8).is_err());
        assert!(render_bmode(&spec, &[], &PsfParams::default(), 32).is_err());
    }
}
