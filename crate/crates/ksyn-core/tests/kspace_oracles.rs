//! Spectral algebra checked against an independent quadruple-loop DFT.
//!
//! The oracle below evaluates the transform definition term by term and
//! shares no code with the library's mixed-radix engine.

use ksyn_core::kspace::{decompose, fftshift, ifftshift, recompose};
use ksyn_core::{dft2, idft2, Spectrum, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

const TAU: f64 = core::f64::consts::TAU;

/// Literal forward DFT: k(u,v) = Σ_h Σ_w x(h,w)·e^{-j2π(hu/H + wv/W)}.
fn naive_dft2(frame: &[C64], h: usize, w: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            let mut acc = C64::new(0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let ang = -TAU * (y as f64 * u as f64 / h as f64 + x as f64 * v as f64 / w as f64);
                    acc += frame[y * w + x] * C64::new(ang.cos(), ang.sin());
                }
            }
            out[u * w + v] = acc;
        }
    }
    out
}

/// Literal inverse DFT with 1/(HW) normalization.
fn naive_idft2(spec: &[C64], h: usize, w: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); h * w];
    let scale = 1.0 / (h * w) as f64;
    for y in 0..h {
        for x in 0..w {
            let mut acc = C64::new(0.0, 0.0);
            for u in 0..h {
                for v in 0..w {
                    let ang = TAU * (y as f64 * u as f64 / h as f64 + x as f64 * v as f64 / w as f64);
                    acc += spec[u * w + v] * C64::new(ang.cos(), ang.sin());
                }
            }
            out[y * w + x] = acc * scale;
        }
    }
    out
}

fn random_frame(rng: &mut ChaCha12Rng, n: usize) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

#[test]
fn fast_dft_matches_naive_on_all_grids_up_to_8x8() {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    for h in 2..=8usize {
        for w in 2..=8usize {
            let frame = random_frame(&mut rng, h * w);
            let fast = dft2(&frame, h, w).unwrap();
            let naive = naive_dft2(&frame, h, w);
            let err = max_abs_diff(fast.data(), &naive);
            assert!(err < 1e-12, "grid {h}x{w}: max error {err:.3e}");
        }
    }
}

#[test]
fn fast_idft_matches_naive_inverse_on_8x8() {
    let mut rng = ChaCha12Rng::seed_from_u64(102);
    let data = random_frame(&mut rng, 64);
    let spec = Spectrum::new(data.clone(), 8, 8, false).unwrap();
    let fast = idft2(&spec).unwrap();
    let naive = naive_idft2(&data, 8, 8);
    assert!(max_abs_diff(&fast, &naive) < 1e-12);
}

#[test]
fn round_trip_up_to_192() {
    let mut rng = ChaCha12Rng::seed_from_u64(103);
    for &(h, w) in &[(8usize, 8usize), (64, 64), (192, 192), (64, 96)] {
        let frame = random_frame(&mut rng, h * w);
        let spec = dft2(&frame, h, w).unwrap();
        let back = idft2(&spec).unwrap();
        let peak = frame.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let err = max_abs_diff(&back, &frame);
        assert!(err < 1e-10 * peak, "grid {h}x{w}: {err:.3e} vs peak {peak:.3e}");
    }
}

#[test]
fn parseval_with_this_normalization() {
    let mut rng = ChaCha12Rng::seed_from_u64(104);
    for &(h, w) in &[(16usize, 16usize), (64, 64), (48, 96)] {
        let frame = random_frame(&mut rng, h * w);
        let spec = dft2(&frame, h, w).unwrap();
        let image_energy: f64 = frame.iter().map(|z| z.norm_sqr()).sum();
        let spec_energy: f64 = spec.data().iter().map(|z| z.norm_sqr()).sum::<f64>() / (h * w) as f64;
        let rel = (image_energy - spec_energy).abs() / image_energy;
        assert!(rel < 1e-8, "grid {h}x{w}: relative error {rel:.3e}");
    }
}

#[test]
fn transform_is_linear() {
    let mut rng = ChaCha12Rng::seed_from_u64(105);
    let (h, w) = (16, 12);
    let xa = random_frame(&mut rng, h * w);
    let xb = random_frame(&mut rng, h * w);
    let (a, b) = (C64::new(0.7, -0.3), C64::new(-1.2, 0.4));
    let combined: Vec<C64> = xa.iter().zip(&xb).map(|(p, q)| a * p + b * q).collect();
    let lhs = dft2(&combined, h, w).unwrap();
    let sa = dft2(&xa, h, w).unwrap();
    let sb = dft2(&xb, h, w).unwrap();
    let rhs: Vec<C64> = sa.data().iter().zip(sb.data()).map(|(p, q)| a * p + b * q).collect();
    let scale = lhs.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(max_abs_diff(lhs.data(), &rhs) < 1e-10 * scale.max(1.0));
}

#[test]
fn decompose_recompose_round_trip() {
    let mut rng = ChaCha12Rng::seed_from_u64(106);
    let (h, w) = (16, 16);
    let frame = random_frame(&mut rng, h * w);
    let spec = dft2(&frame, h, w).unwrap();
    let ap = decompose(&spec).unwrap();
    for (i, (&a, &p)) in ap.amplitude.iter().zip(ap.phase.iter()).enumerate() {
        assert!(a >= 0.0, "amplitude negative at {i}");
        assert!(
            p > -core::f64::consts::PI && p <= core::f64::consts::PI,
            "phase out of (-π, π] at {i}: {p}"
        );
    }
    let back = recompose(&ap).unwrap();
    let peak = spec.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(max_abs_diff(back.data(), spec.data()) < 1e-10 * peak);
    assert_eq!(back.centered(), spec.centered());
}

#[test]
fn zero_amplitude_bins_recompose_to_zero_regardless_of_phase() {
    let amp = vec![0.0, 2.0, 0.0, 1.0];
    let phase = vec![2.5, 0.5, -1.0, 0.0];
    let s = ksyn_core::kspace::recompose_parts(&amp, &phase, 2, 2, false).unwrap();
    assert_eq!(s.data()[0], C64::new(0.0, 0.0));
    assert_eq!(s.data()[2], C64::new(0.0, 0.0));
}

#[test]
fn shift_round_trip_is_identity() {
    let mut rng = ChaCha12Rng::seed_from_u64(107);
    let (h, w) = (6, 10);
    let data = random_frame(&mut rng, h * w);
    let s = Spectrum::new(data, h, w, false).unwrap();
    let round = ifftshift(&fftshift(&s).unwrap()).unwrap();
    assert_eq!(round.data(), s.data());
    assert_eq!(round.centered(), s.centered());
}
