//! Core algorithms for dynamic (cine) k-space synthesis.
//!
//! The crate covers the full frequency-domain pipeline:
//!
//! - [`kspace`] — complex 2D DFT/IDFT, amplitude/phase decomposition and
//!   quadrant shifts on even grids.
//! - [`volume`] — the complex 2D-t cine volume carrier type.
//! - [`phantom`] — analytic moving-ellipse cine phantoms with known ground
//!   truth, plus PCA-based subset selection.
//! - [`fusion`] — temporal fusion of amplitude spectra (adjacent / skip /
//!   grouped schemes with optional radial frequency weighting).
//! - [`nn`] — a minimal reverse-mode substrate (conv / transposed-conv /
//!   group-norm / SiLU / linear, Adam, EMA) over a fixed layer vocabulary.
//! - [`codec`] — the frequency compression model: patch encoder, optional
//!   vector-quantized bottleneck, shallow volume module, mirror decoder.
//! - [`diffusion`] — DDPM in latent space with step-wise fused-signal
//!   conditioning: cosine schedule, forward noising, training loss,
//!   ancestral sampling.
//! - [`metrics`] — Fréchet feature distance, KID, unbiased MMD², PSNR /
//!   SSIM / MSE, and corpus-level evaluation via a fixed seeded embedder.
//! - [`masks`] — golden-angle radial undersampling masks and the
//!   zero-filled baseline.
//!
//! All operations are pure functions of their inputs (no internal
//! mutability, no IO); file formats and orchestration live in the
//! companion CLI crate. The crate is `no_std`-compatible (`alloc`
//! required) when built without the default `std` feature.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod codec;
pub mod diffusion;
pub mod error;
pub mod fusion;
pub mod kspace;
pub mod linalg;
pub mod masks;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod rng;
pub mod volume;

pub use error::{Error, Result};
pub use kspace::{dft2, idft2, AmplitudePhase, Spectrum, C64};
pub use volume::CineVolume;
