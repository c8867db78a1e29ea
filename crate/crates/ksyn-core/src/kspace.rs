//! Complex spectral algebra on 2D grids.
//!
//! The forward transform is the unnormalized DFT
//! `k(u,v) = Σ_h Σ_w x(h,w)·exp(-j2π(hu/H + wv/W))`; the inverse carries
//! the full `1/(HW)` factor so `idft2(dft2(x)) = x`. With this convention
//! Parseval reads `Σ|x|² = (1/HW)·Σ|k|²`.
//!
//! Amplitude/phase decomposition uses the four-quadrant angle; bins with
//! zero amplitude carry phase 0 by convention so recomposition is total.
//!
//! All spectral math runs in 64-bit floats: k-space dynamic range spans
//! several orders of magnitude and 32-bit round trips do not survive the
//! tolerances this module promises.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::error::{invalid, shape_mismatch, Error, Result};

pub type C64 = num_complex::Complex<f64>;

const TAU: f64 = 2.0 * PI;

/// A per-frame frequency grid. `centered` marks the DC bin at
/// `(H/2, W/2)` instead of `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    data: Vec<C64>,
    h: usize,
    w: usize,
    centered: bool,
}

impl Spectrum {
    pub fn new(data: Vec<C64>, h: usize, w: usize, centered: bool) -> Result<Self> {
        if h < 2 || w < 2 {
            return Err(invalid("Spectrum::new", format!("grid must be at least 2x2, got {h}x{w}")));
        }
        if data.len() != h * w {
            return Err(shape_mismatch(
                "Spectrum::new",
                format!("{}x{} = {} samples", h, w, h * w),
                format!("{} samples", data.len()),
            ));
        }
        check_finite("Spectrum::new", &data)?;
        Ok(Self { data, h, w, centered })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn get(&self, u: usize, v: usize) -> C64 {
        self.data[u * self.w + v]
    }
}

/// Magnitude and four-quadrant angle of a [`Spectrum`], same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudePhase {
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
    h: usize,
    w: usize,
    centered: bool,
}

impl AmplitudePhase {
    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn centered(&self) -> bool {
        self.centered
    }
}

fn check_finite(context: &'static str, data: &[C64]) -> Result<()> {
    for (i, z) in data.iter().enumerate() {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::NonFinite { context, index: i });
        }
    }
    Ok(())
}

/// Unnormalized forward 2D DFT of a row-major `h x w` complex frame.
///
/// Output is uncentered (DC at `(0,0)`); use [`fftshift`] to recenter.
pub fn dft2(frame: &[C64], h: usize, w: usize) -> Result<Spectrum> {
    if h < 2 || w < 2 {
        return Err(invalid("dft2", format!("grid must be at least 2x2, got {h}x{w}")));
    }
    if frame.len() != h * w {
        return Err(shape_mismatch(
            "dft2",
            format!("{} samples ({h}x{w})", h * w),
            format!("{} samples", frame.len()),
        ));
    }
    check_finite("dft2", frame)?;
    let data = transform_2d(frame, h, w, false);
    Ok(Spectrum { data, h, w, centered: false })
}

/// Inverse 2D DFT with `1/(HW)` normalization.
///
/// Rejects centered spectra: un-shift first so bin indices match the
/// transform's native layout.
pub fn idft2(spec: &Spectrum) -> Result<Vec<C64>> {
    if spec.centered {
        return Err(Error::WrongCentering { context: "idft2", expected_centered: false });
    }
    check_finite("idft2", &spec.data)?;
    let mut data = transform_2d(&spec.data, spec.h, spec.w, true);
    let scale = 1.0 / (spec.h as f64 * spec.w as f64);
    for z in &mut data {
        *z *= scale;
    }
    Ok(data)
}

/// Split a spectrum into magnitude and four-quadrant angle.
///
/// Zero-amplitude bins get phase 0; the angle is folded onto `(-π, π]`.
pub fn decompose(spec: &Spectrum) -> Result<AmplitudePhase> {
    check_finite("decompose", &spec.data)?;
    let mut amplitude = Vec::with_capacity(spec.data.len());
    let mut phase = Vec::with_capacity(spec.data.len());
    for z in &spec.data {
        let a = z.norm();
        if a == 0.0 {
            amplitude.push(0.0);
            phase.push(0.0);
        } else {
            amplitude.push(a);
            let mut p = z.im.atan2(z.re);
            // atan2 returns -π for negative real axis with -0 imaginary part.
            if p == -PI {
                p = PI;
            }
            phase.push(p);
        }
    }
    Ok(AmplitudePhase {
        amplitude,
        phase,
        h: spec.h,
        w: spec.w,
        centered: spec.centered,
    })
}

/// Rebuild a spectrum as `k = amplitude · exp(i·phase)` per bin.
pub fn recompose(ap: &AmplitudePhase) -> Result<Spectrum> {
    recompose_parts(&ap.amplitude, &ap.phase, ap.h, ap.w, ap.centered)
}

/// [`recompose`] over raw grids, used when the amplitude has been mixed
/// separately from its phase source.
pub fn recompose_parts(
    amplitude: &[f64],
    phase: &[f64],
    h: usize,
    w: usize,
    centered: bool,
) -> Result<Spectrum> {
    if amplitude.len() != h * w || phase.len() != h * w {
        return Err(shape_mismatch(
            "recompose",
            format!("{} bins ({h}x{w})", h * w),
            format!("{} amplitude / {} phase bins", amplitude.len(), phase.len()),
        ));
    }
    let mut data = Vec::with_capacity(amplitude.len());
    for (i, (&a, &p)) in amplitude.iter().zip(phase.iter()).enumerate() {
        if !a.is_finite() || !p.is_finite() {
            return Err(Error::NonFinite { context: "recompose", index: i });
        }
        if a < 0.0 {
            return Err(invalid(
                "recompose",
                format!("negative amplitude {a} at flat index {i}"),
            ));
        }
        if a == 0.0 {
            data.push(C64::new(0.0, 0.0));
        } else {
            data.push(C64::new(a * p.cos(), a * p.sin()));
        }
    }
    Ok(Spectrum { data, h, w, centered })
}

/// Swap quadrants so DC moves from `(0,0)` to `(H/2, W/2)`; flips the
/// centered flag. Requires even dimensions, where the shift is an exact
/// involution.
pub fn fftshift(spec: &Spectrum) -> Result<Spectrum> {
    shift_quadrants(spec)
}

/// Inverse of [`fftshift`]. Identical permutation on even grids.
pub fn ifftshift(spec: &Spectrum) -> Result<Spectrum> {
    shift_quadrants(spec)
}

fn shift_quadrants(spec: &Spectrum) -> Result<Spectrum> {
    let (h, w) = (spec.h, spec.w);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddDimensions { h, w });
    }
    let (hh, hw) = (h / 2, w / 2);
    let mut data = vec![C64::new(0.0, 0.0); h * w];
    for y in 0..h {
        let ny = (y + hh) % h;
        for x in 0..w {
            let nx = (x + hw) % w;
            data[ny * w + nx] = spec.data[y * w + x];
        }
    }
    Ok(Spectrum {
        data,
        h,
        w,
        centered: !spec.centered,
    })
}

/// Cyclic distance of bin `(u,v)` from DC, honoring the centering flag.
/// Used for radial frequency weighting.
pub fn bin_radius(u: usize, v: usize, h: usize, w: usize, centered: bool) -> f64 {
    let (du, dv) = if centered {
        (u as f64 - (h / 2) as f64, v as f64 - (w / 2) as f64)
    } else {
        let du = core::cmp::min(u, h - u) as f64;
        let dv = core::cmp::min(v, w - v) as f64;
        (du, dv)
    };
    du.hypot(dv)
}

// ---------------------------------------------------------------------------
// Mixed-radix FFT engine
// ---------------------------------------------------------------------------

/// Table-driven recursive Cooley-Tukey transform. Splits on the smallest
/// prime factor; prime lengths fall back to the O(n²) sum, so every length
/// is handled and the grid sizes used in practice (powers of 2 times 3)
/// run in O(n log n).
struct Fft1d {
    n: usize,
    table: Vec<C64>,
}

impl Fft1d {
    fn new(n: usize, inverse: bool) -> Self {
        let sign = if inverse { 1.0 } else { -1.0 };
        let table = (0..n)
            .map(|l| {
                let ang = sign * TAU * (l as f64) / (n as f64);
                C64::new(ang.cos(), ang.sin())
            })
            .collect();
        Self { n, table }
    }

    fn transform(&self, x: &[C64]) -> Vec<C64> {
        debug_assert_eq!(x.len(), self.n);
        self.rec(x, 1)
    }

    // `stride` maps sub-transform twiddle indices into the master table:
    // the sub-length is always n / stride.
    fn rec(&self, x: &[C64], stride: usize) -> Vec<C64> {
        let n = x.len();
        if n == 1 {
            return vec![x[0]];
        }
        let p = smallest_prime_factor(n);
        if p == n {
            return self.naive(x, stride);
        }
        let m = n / p;
        let mut subs = Vec::with_capacity(p);
        for j in 0..p {
            let sub: Vec<C64> = (0..m).map(|a| x[a * p + j]).collect();
            subs.push(self.rec(&sub, stride * p));
        }
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (k, slot) in out.iter_mut().enumerate() {
            let r = k % m;
            let mut acc = C64::new(0.0, 0.0);
            for (j, sub) in subs.iter().enumerate() {
                let tw = self.table[((j * k) % n) * stride];
                acc += tw * sub[r];
            }
            *slot = acc;
        }
        out
    }

    fn naive(&self, x: &[C64], stride: usize) -> Vec<C64> {
        let n = x.len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (a, &xa) in x.iter().enumerate() {
                acc += self.table[((a * k) % n) * stride] * xa;
            }
            *slot = acc;
        }
        out
    }
}

fn smallest_prime_factor(n: usize) -> usize {
    if n % 2 == 0 {
        return 2;
    }
    let mut f = 3;
    while f * f <= n {
        if n % f == 0 {
            return f;
        }
        f += 2;
    }
    n
}

fn transform_2d(data: &[C64], h: usize, w: usize, inverse: bool) -> Vec<C64> {
    let row_plan = Fft1d::new(w, inverse);
    let mut rows = Vec::with_capacity(h * w);
    for r in 0..h {
        rows.extend(row_plan.transform(&data[r * w..(r + 1) * w]));
    }
    let col_plan = if h == w {
        row_plan
    } else {
        Fft1d::new(h, inverse)
    };
    let mut out = vec![C64::new(0.0, 0.0); h * w];
    let mut col = vec![C64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = rows[r * w + c];
        }
        let t = col_plan.transform(&col);
        for r in 0..h {
            out[r * w + c] = t[r];
        }
    }
    out
}
