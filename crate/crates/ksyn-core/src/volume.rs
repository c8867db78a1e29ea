//! Complex 2D-t cine volumes.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::kspace::{dft2, Spectrum, C64};
use crate::rng::fnv1a64;

/// A complex-valued image-domain volume of `T` frames on an `H x W` grid,
/// frames stored contiguously (`[t][h][w]` order).
///
/// `H` and `W` must be even so the centered-spectrum convention is an
/// exact involution downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct CineVolume {
    data: Vec<C64>,
    h: usize,
    w: usize,
    t: usize,
    /// In-plane pixel spacing in millimetres. Metadata only.
    pub pixel_spacing_mm: f64,
    /// Time between frames in milliseconds. Metadata only.
    pub frame_interval_ms: f64,
}

impl CineVolume {
    pub fn new(data: Vec<C64>, h: usize, w: usize, t: usize) -> Result<Self> {
        if h < 2 || w < 2 || t < 1 {
            return Err(invalid(
                "CineVolume::new",
                format!("need H,W >= 2 and T >= 1, got {h}x{w}x{t}"),
            ));
        }
        if h % 2 != 0 || w % 2 != 0 {
            return Err(invalid(
                "CineVolume::new",
                format!("H and W must be even, got {h}x{w}"),
            ));
        }
        if data.len() != h * w * t {
            return Err(shape_mismatch(
                "CineVolume::new",
                format!("{} samples ({h}x{w}x{t})", h * w * t),
                format!("{} samples", data.len()),
            ));
        }
        for (i, z) in data.iter().enumerate() {
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::NonFinite {
                    context: "CineVolume::new",
                    index: i,
                });
            }
        }
        Ok(Self {
            data,
            h,
            w,
            t,
            pixel_spacing_mm: 1.0,
            frame_interval_ms: 1.0,
        })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn frames(&self) -> usize {
        self.t
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[C64] {
        let n = self.h * self.w;
        &self.data[t * n..(t + 1) * n]
    }

    /// Unnormalized forward DFT of frame `t` (uncentered).
    pub fn spectrum(&self, t: usize) -> Result<Spectrum> {
        dft2(self.frame(t), self.h, self.w)
    }

    /// Magnitude image of frame `t`.
    pub fn magnitude_frame(&self, t: usize) -> Vec<f64> {
        self.frame(t).iter().map(|z| z.norm()).collect()
    }

    /// Peak magnitude over the whole volume.
    pub fn peak_magnitude(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Sum of squared magnitudes of frame `t`.
    pub fn frame_energy(&self, t: usize) -> f64 {
        self.frame(t).iter().map(|z| z.norm_sqr()).sum()
    }

    /// FNV-1a over the raw sample bits; cheap determinism fingerprint.
    pub fn content_hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for z in &self.data {
            let mut bytes = [0u8; 16];
            bytes[..8].copy_from_slice(&z.re.to_bits().to_le_bytes());
            bytes[8..].copy_from_slice(&z.im.to_bits().to_le_bytes());
            h ^= fnv1a64(&bytes);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_odd_grids_and_bad_lengths() {
        assert!(CineVolume::new(vec![C64::new(0.0, 0.0); 6 * 4], 6, 4, 1).is_ok());
        assert!(CineVolume::new(vec![C64::new(0.0, 0.0); 5 * 4], 5, 4, 1).is_err());
        assert!(CineVolume::new(vec![C64::new(0.0, 0.0); 7], 2, 2, 2).is_err());
    }

    #[test]
    fn frame_views_are_disjoint() {
        let mut data = vec![C64::new(0.0, 0.0); 2 * 2 * 3];
        data[4] = C64::new(9.0, 0.0); // frame 1, first sample
        let v = CineVolume::new(data, 2, 2, 3).unwrap();
        assert_eq!(v.frame(0)[0], C64::new(0.0, 0.0));
        assert_eq!(v.frame(1)[0], C64::new(9.0, 0.0));
    }

    #[test]
    fn content_hash_tracks_bits() {
        let a = CineVolume::new(vec![C64::new(1.0, 0.0); 8], 2, 2, 2).unwrap();
        let mut data = vec![C64::new(1.0, 0.0); 8];
        data[3] = C64::new(1.0 + 1e-15, 0.0);
        let b = CineVolume::new(data, 2, 2, 2).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash(), a.clone().content_hash());
    }
}
