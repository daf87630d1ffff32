mod common;

use common::{naive_dft, naive_idft, random_image};
use proptest::prelude::*;
use rustfft::num_complex::Complex64;
use usfda::spectral::{forward_dft, inverse_dft, DcPosition, Spectrum2D};
use usfda::Image2D;

#[test]
fn forward_matches_naive_on_8x8() {
    let img = random_image(8, 8, 1);
    let spec = forward_dft(&img);
    let oracle = naive_dft(&img);
    let err = spec.data().iter().zip(&oracle).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-6, "max error {err}");
}

#[test]
fn inverse_matches_naive_on_symmetric_8x8() {
    // The spectrum of a real image is conjugate-symmetric by construction.
    let spec_data = naive_dft(&random_image(8, 8, 2));
    let spec = Spectrum2D::new(8, 8, spec_data.clone(), DcPosition::Corner).unwrap();
    let img = inverse_dft(&spec).unwrap();
    let oracle = naive_idft(&spec_data, 8, 8);
    for (v, z) in img.data().iter().zip(&oracle) {
        assert!((v - z.re).abs() < 1e-6);
        assert!(z.im.abs() < 1e-9);
    }
}

#[test]
fn roundtrip_at_awkward_sizes() {
    for (w, h) in [(8, 8), (256, 256), (255, 257), (1, 13), (97, 1)] {
        let img = random_image(w, h, (w * 1000 + h) as u64);
        let back = inverse_dft(&forward_dft(&img)).unwrap();
        assert!(back.max_abs_diff(&img) < 1e-9, "{w}x{h}");
    }
}

fn conj_symmetry_error(spec: &Spectrum2D) -> f64 {
    let (w, h) = spec.shape();
    let scale = spec.data().iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let mut worst = 0.0f64;
    for m in 0..h {
        for n in 0..w {
            let a = spec.get(m, n);
            let b = spec.get((h - m) % h, (w - n) % w).conj();
            worst = worst.max((a - b).norm() / scale);
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parseval(w in 1usize..40, h in 1usize..40, seed in any::<u64>()) {
        let img = random_image(w, h, seed);
        let spatial: f64 = img.data().iter().map(|v| v * v).sum();
        let spectral: f64 = forward_dft(&img).data().iter().map(|z| z.norm_sqr()).sum::<f64>() / (w * h) as f64;
        prop_assert!((spatial - spectral).abs() <= 1e-6 * spatial.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn conjugate_symmetry(w in 1usize..40, h in 1usize..40, seed in any::<u64>()) {
        let spec = forward_dft(&random_image(w, h, seed));
        prop_assert!(conj_symmetry_error(&spec) < 1e-9);
    }

    #[test]
    fn linearity(w in 1usize..24, h in 1usize..24, seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = random_image(w, h, seed);
        let y = random_image(w, h, seed.wrapping_add(1));
        let combo = Image2D::new(w, h, x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let lhs = forward_dft(&combo);
        let (fx, fy) = (forward_dft(&x), forward_dft(&y));
        let scale = lhs.data().iter().map(|z| z.norm()).fold(1.0, f64::max);
        for ((l, p), q) in lhs.data().iter().zip(fx.data()).zip(fy.data()) {
            let rhs: Complex64 = a * p + b * q;
            prop_assert!((l - rhs).norm() <= 1e-9 * scale);
        }
    }
}
