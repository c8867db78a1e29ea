//! Temporal fusion of amplitude spectra.
//!
//! New frequency signals are manufactured by convexly mixing the
//! amplitude components of frames taken at different time points while
//! keeping the anchor frame's phase intact. Three schemes are supported:
//! adjacent-frame (cyclic neighbors), skip-frame (linear distance >= 2)
//! and grouped (Dirichlet-weighted multi-frame mixes). An optional radial
//! profile `w(r)` band-limits the mixing: bins where `w(r) = 0` keep the
//! anchor amplitude exactly, and `w(r) = 1` recovers the plain scheme.
//!
//! Mixes are evaluated in anchored-difference form with per-bin clamping,
//! so the endpoint, fixed-point and convexity guarantees hold bit-for-bit
//! in floating point, not just in exact arithmetic.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;
use rand::Rng;

use crate::error::{invalid, shape_mismatch, Result};
use crate::kspace::{bin_radius, decompose, recompose_parts, AmplitudePhase, Spectrum};
use crate::phantom::PhantomCorpus;
use crate::rng::{child_seed, stream};
use crate::volume::CineVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionScheme {
    Adjacent,
    Skip,
    Grouped,
}

/// Mixing weights: a scalar μ for pair schemes (weight of the anchor
/// frame, per `K^A = μ·k_m^A + (1-μ)·k_n^A`), or explicit convex weights
/// over `[anchor, partners...]` for the grouped scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionWeights {
    Scalar(f64),
    PerFrame(Vec<f64>),
}

/// Radial band profile `w(r) ∈ [0,1]`, sampled at integer radii; lookups
/// round and clamp to the last entry.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    values: Vec<f64>,
}

impl RadialProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("RadialProfile", "profile must not be empty"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("RadialProfile", "profile values must lie in [0, 1]"));
        }
        Ok(Self { values })
    }

    pub fn lookup(&self, radius: f64) -> f64 {
        let idx = radius.round() as usize;
        self.values[idx.min(self.values.len() - 1)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One fusion instruction: which frames to mix, how, and with what
/// frequency weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionSpec {
    pub scheme: FusionScheme,
    /// Anchor frame `t_m`; its phase is attached to the fused amplitude.
    pub anchor: usize,
    /// Partner frames `t_n…`: one for adjacent/skip, `G-1` for grouped.
    pub partners: Vec<usize>,
    pub weights: FusionWeights,
    pub freq_weighting: Option<RadialProfile>,
    pub seed: u64,
}

impl FusionSpec {
    pub fn adjacent(anchor: usize, partner: usize, mu: f64) -> Self {
        Self {
            scheme: FusionScheme::Adjacent,
            anchor,
            partners: alloc::vec![partner],
            weights: FusionWeights::Scalar(mu),
            freq_weighting: None,
            seed: 0,
        }
    }

    pub fn validate(&self, t: usize) -> Result<()> {
        let ctx = "FusionSpec";
        if self.anchor >= t || self.partners.iter().any(|&p| p >= t) {
            return Err(invalid(ctx, format!("frame index out of range for T={t}")));
        }
        let mut seen = self.partners.clone();
        seen.push(self.anchor);
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid(ctx, "anchor and partner frames must be distinct"));
        }
        match self.scheme {
            FusionScheme::Adjacent => {
                if self.partners.len() != 1 {
                    return Err(invalid(ctx, "adjacent scheme takes exactly one partner"));
                }
                let d = cyclic_distance(self.anchor, self.partners[0], t);
                if d != 1 {
                    return Err(invalid(
                        ctx,
                        format!(
                            "adjacent scheme requires cyclic distance 1, frames {} and {} are {d} apart",
                            self.anchor, self.partners[0]
                        ),
                    ));
                }
                self.scalar_mu()?;
            }
            FusionScheme::Skip => {
                if self.partners.len() != 1 {
                    return Err(invalid(ctx, "skip scheme takes exactly one partner"));
                }
                let d = self.anchor.abs_diff(self.partners[0]);
                if d < 2 {
                    return Err(invalid(
                        ctx,
                        format!(
                            "skip scheme requires |t_m - t_n| >= 2, frames {} and {} are {d} apart",
                            self.anchor, self.partners[0]
                        ),
                    ));
                }
                self.scalar_mu()?;
            }
            FusionScheme::Grouped => {
                if self.partners.is_empty() {
                    return Err(invalid(ctx, "grouped scheme needs at least one partner"));
                }
                match &self.weights {
                    FusionWeights::PerFrame(w) => {
                        if w.len() != self.partners.len() + 1 {
                            return Err(invalid(
                                ctx,
                                format!(
                                    "grouped scheme needs {} weights (anchor + partners), got {}",
                                    self.partners.len() + 1,
                                    w.len()
                                ),
                            ));
                        }
                        if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
                            return Err(invalid(ctx, "grouped weights must be non-negative"));
                        }
                        let sum: f64 = w.iter().sum();
                        if (sum - 1.0).abs() > 1e-12 {
                            return Err(invalid(
                                ctx,
                                format!("grouped weights must sum to 1 within 1e-12, got {sum}"),
                            ));
                        }
                    }
                    FusionWeights::Scalar(_) => {
                        return Err(invalid(ctx, "grouped scheme needs per-frame weights"));
                    }
                }
            }
        }
        Ok(())
    }

    fn scalar_mu(&self) -> Result<f64> {
        match &self.weights {
            FusionWeights::Scalar(mu) => {
                if !(0.0..=1.0).contains(mu) {
                    Err(invalid("FusionSpec", format!("μ must lie in [0,1], got {mu}")))
                } else {
                    Ok(*mu)
                }
            }
            FusionWeights::PerFrame(_) => Err(invalid(
                "FusionSpec",
                "pair schemes take a scalar μ, not per-frame weights",
            )),
        }
    }
}

fn cyclic_distance(a: usize, b: usize, t: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(t - d)
}

/// A fused guidance signal: mixed amplitude, the anchor frame whose phase
/// was attached, and the recomposed complex spectrum.
#[derive(Debug, Clone)]
pub struct FusedSignal {
    pub spec: FusionSpec,
    pub fused_amplitude: Vec<f64>,
    /// Frame index whose phase is attached (the anchor).
    pub phase_source: usize,
    pub spectrum: Spectrum,
}

/// Per-bin convex combination `μ·k_m^A + (1-μ)·k_n^A` (Eq.-level pair
/// fusion). Exact at the endpoints and clamped to the per-bin envelope.
pub fn fuse_pair(ap_m: &AmplitudePhase, ap_n: &AmplitudePhase, mu: f64) -> Result<Vec<f64>> {
    if ap_m.h() != ap_n.h() || ap_m.w() != ap_n.w() {
        return Err(shape_mismatch(
            "fuse_pair",
            format!("{}x{}", ap_m.h(), ap_m.w()),
            format!("{}x{}", ap_n.h(), ap_n.w()),
        ));
    }
    if !(0.0..=1.0).contains(&mu) {
        return Err(invalid("fuse_pair", format!("μ must lie in [0,1], got {mu}")));
    }
    Ok(ap_m
        .amplitude
        .iter()
        .zip(&ap_n.amplitude)
        .map(|(&am, &an)| mix_bin(am, an, mu))
        .collect())
}

// K = μ·a_m + (1-μ)·a_n computed as a_n + μ·(a_m - a_n):
//  μ=0 gives a_n bit-for-bit, μ=1 is short-circuited, equal inputs are a
//  fixed point, and the clamp pins the result inside the bin envelope.
#[inline]
fn mix_bin(am: f64, an: f64, mu: f64) -> f64 {
    if mu == 1.0 {
        return am;
    }
    let v = an + mu * (am - an);
    v.max(am.min(an)).min(am.max(an))
}

/// Fuse the frames named by `spec` out of `volume`.
///
/// Pair schemes follow [`fuse_pair`]; the grouped scheme applies its
/// convex weights in anchored form. With `freq_weighting` present, the
/// partner-side coefficients are scaled by `w(r)` at each bin's cyclic
/// radius, so unweighted bands keep the anchor amplitude exactly. The
/// anchor frame's phase is attached and the spectrum recomposed.
pub fn fuse(volume: &CineVolume, spec: &FusionSpec) -> Result<FusedSignal> {
    spec.validate(volume.frames())?;
    let anchor = decompose(&volume.spectrum(spec.anchor)?)?;
    let partners: Vec<AmplitudePhase> = spec
        .partners
        .iter()
        .map(|&p| decompose(&volume.spectrum(p)?))
        .collect::<Result<_>>()?;
    let partner_refs: Vec<&AmplitudePhase> = partners.iter().collect();
    fuse_decomposed(&anchor, &partner_refs, spec)
}

/// [`fuse`] over already-decomposed frames (lets samplers cache spectra).
pub fn fuse_decomposed(
    anchor: &AmplitudePhase,
    partners: &[&AmplitudePhase],
    spec: &FusionSpec,
) -> Result<FusedSignal> {
    if partners.len() != spec.partners.len() {
        return Err(invalid(
            "fuse",
            format!("expected {} partner frames, got {}", spec.partners.len(), partners.len()),
        ));
    }
    let (h, w) = (anchor.h(), anchor.w());
    for p in partners {
        if p.h() != h || p.w() != w {
            return Err(shape_mismatch("fuse", format!("{h}x{w}"), format!("{}x{}", p.h(), p.w())));
        }
    }

    let n_bins = h * w;
    let mut fused = Vec::with_capacity(n_bins);
    match (&spec.weights, &spec.freq_weighting) {
        (FusionWeights::Scalar(mu), None) => {
            let ap_n = partners[0];
            for i in 0..n_bins {
                fused.push(mix_bin(anchor.amplitude[i], ap_n.amplitude[i], *mu));
            }
        }
        (FusionWeights::Scalar(mu), Some(profile)) => {
            let ap_n = partners[0];
            for i in 0..n_bins {
                let r = bin_radius(i / w, i % w, h, w, anchor.centered());
                let coeff = profile.lookup(r) * (1.0 - mu);
                fused.push(mix_anchored(
                    anchor.amplitude[i],
                    &[ap_n.amplitude[i]],
                    &[coeff],
                ));
            }
        }
        (FusionWeights::PerFrame(weights), profile) => {
            let partner_weights = &weights[1..];
            let mut amps = Vec::with_capacity(partners.len());
            let mut coeffs = Vec::with_capacity(partners.len());
            for i in 0..n_bins {
                amps.clear();
                coeffs.clear();
                let lambda = match profile {
                    Some(p) => p.lookup(bin_radius(i / w, i % w, h, w, anchor.centered())),
                    None => 1.0,
                };
                for (p, &wg) in partners.iter().zip(partner_weights) {
                    amps.push(p.amplitude[i]);
                    coeffs.push(lambda * wg);
                }
                fused.push(mix_anchored(anchor.amplitude[i], &amps, &coeffs));
            }
        }
    }

    let spectrum = recompose_parts(&fused, &anchor.phase, h, w, anchor.centered())?;
    Ok(FusedSignal {
        spec: spec.clone(),
        fused_amplitude: fused,
        phase_source: spec.anchor,
        spectrum,
    })
}

// a_anchor + Σ_g c_g·(a_g - a_anchor), clamped to the group envelope.
// c_g = 0 contributes exactly nothing, so band-limited and degenerate
// weights reproduce the anchor bit-for-bit.
#[inline]
fn mix_anchored(anchor: f64, amps: &[f64], coeffs: &[f64]) -> f64 {
    let mut v = anchor;
    let mut lo = anchor;
    let mut hi = anchor;
    for (&a, &c) in amps.iter().zip(coeffs) {
        v += c * (a - anchor);
        lo = lo.min(a);
        hi = hi.max(a);
    }
    v.max(lo).min(hi)
}

/// Scheme draw probabilities for [`sample_guidance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeMix {
    pub adjacent: f64,
    pub skip: f64,
    pub grouped: f64,
}

impl SchemeMix {
    pub fn adjacent_only() -> Self {
        Self { adjacent: 1.0, skip: 0.0, grouped: 0.0 }
    }

    pub fn uniform() -> Self {
        Self { adjacent: 1.0 / 3.0, skip: 1.0 / 3.0, grouped: 1.0 / 3.0 }
    }

    fn validate(&self, t: usize) -> Result<()> {
        let parts = [self.adjacent, self.skip, self.grouped];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("SchemeMix", "probabilities must be non-negative"));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid("SchemeMix", format!("probabilities must sum to 1, got {sum}")));
        }
        if t < 2 && (self.adjacent > 0.0 || self.grouped > 0.0) {
            return Err(invalid("SchemeMix", "fusion needs at least two frames"));
        }
        if t < 3 && self.skip > 0.0 {
            return Err(invalid(
                "SchemeMix",
                format!("skip scheme needs |t_m - t_n| >= 2, impossible with T={t}"),
            ));
        }
        Ok(())
    }
}

/// Draw `n` guidance signals from a corpus: volumes and anchor frames
/// uniform, schemes per `mix`, μ ~ U(0,1), grouped weights from a flat
/// Dirichlet. Deterministic under `seed`; draw `i` owns stream `i`, so
/// any evaluation order gives identical output.
pub fn sample_guidance(
    corpus: &PhantomCorpus,
    n: usize,
    mix: SchemeMix,
    seed: u64,
) -> Result<Vec<FusedSignal>> {
    if corpus.is_empty() {
        return Err(invalid("sample_guidance", "corpus is empty"));
    }
    let t = corpus.volumes[0].frames();
    if corpus.volumes.iter().any(|v| v.frames() != t) {
        return Err(invalid("sample_guidance", "corpus volumes must share one frame count"));
    }
    mix.validate(t)?;
    if n == 0 {
        return Ok(Vec::new());
    }

    // Lazy per-(volume, frame) decomposition cache.
    let mut cache: Vec<Vec<Option<AmplitudePhase>>> =
        corpus.volumes.iter().map(|v| alloc::vec![None; v.frames()]).collect();
    let mut decomposed = |cache: &mut Vec<Vec<Option<AmplitudePhase>>>, vol: usize, frame: usize| -> Result<AmplitudePhase> {
        if cache[vol][frame].is_none() {
            let ap = decompose(&corpus.volumes[vol].spectrum(frame)?)?;
            cache[vol][frame] = Some(ap);
        }
        Ok(cache[vol][frame].clone().expect("just filled"))
    };

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream(seed, i as u64);
        let vol = rng.gen_range(0..corpus.len());
        let u_scheme: f64 = rng.gen();
        let scheme = if u_scheme < mix.adjacent {
            FusionScheme::Adjacent
        } else if u_scheme < mix.adjacent + mix.skip {
            FusionScheme::Skip
        } else {
            FusionScheme::Grouped
        };
        let mu: f64 = rng.gen();
        let anchor = rng.gen_range(0..t);

        let spec = match scheme {
            FusionScheme::Adjacent => {
                let partner = if rng.gen_bool(0.5) { (anchor + 1) % t } else { (anchor + t - 1) % t };
                FusionSpec {
                    scheme,
                    anchor,
                    partners: alloc::vec![partner],
                    weights: FusionWeights::Scalar(mu),
                    freq_weighting: None,
                    seed: child_seed(seed, i as u64),
                }
            }
            FusionScheme::Skip => {
                let candidates: Vec<usize> =
                    (0..t).filter(|&j| anchor.abs_diff(j) >= 2).collect();
                let partner = candidates[rng.gen_range(0..candidates.len())];
                FusionSpec {
                    scheme,
                    anchor,
                    partners: alloc::vec![partner],
                    weights: FusionWeights::Scalar(mu),
                    freq_weighting: None,
                    seed: child_seed(seed, i as u64),
                }
            }
            FusionScheme::Grouped => {
                let group = t.min(3);
                let mut candidates: Vec<usize> = (0..t).filter(|&j| j != anchor).collect();
                let mut partners = Vec::with_capacity(group - 1);
                for _ in 0..group - 1 {
                    partners.push(candidates.remove(rng.gen_range(0..candidates.len())));
                }
                // flat Dirichlet = normalized unit exponentials
                let mut gammas: Vec<f64> =
                    (0..group).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
                let sum: f64 = gammas.iter().sum();
                if sum > 0.0 {
                    for g in &mut gammas {
                        *g /= sum;
                    }
                } else {
                    gammas = alloc::vec![1.0 / group as f64; group];
                }
                // exact convexity: force the weights to sum to 1
                let head: f64 = gammas[1..].iter().sum();
                gammas[0] = 1.0 - head;
                FusionSpec {
                    scheme,
                    anchor,
                    partners,
                    weights: FusionWeights::PerFrame(gammas),
                    freq_weighting: None,
                    seed: child_seed(seed, i as u64),
                }
            }
        };

        spec.validate(t)?;
        let anchor_ap = decomposed(&mut cache, vol, spec.anchor)?;
        let partner_aps: Vec<AmplitudePhase> = spec
            .partners
            .iter()
            .map(|&p| decomposed(&mut cache, vol, p))
            .collect::<Result<_>>()?;
        let refs: Vec<&AmplitudePhase> = partner_aps.iter().collect();
        out.push(fuse_decomposed(&anchor_ap, &refs, &spec)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::C64;
    use crate::phantom::{generate_phantom, make_corpus_with_split, PhantomSpec};

    fn test_volume(seed: u64, t: usize) -> CineVolume {
        let spec = PhantomSpec {
            h: 16,
            w: 16,
            t,
            n_ellipses: 1,
            motion_amplitude: 0.05,
            contrast_levels: alloc::vec![0.8],
            noise_sigma: 0.0,
            seed,
        };
        // 16x16 placement can reject under motion; walk seeds until one fits.
        let mut s = seed;
        loop {
            let mut sp = spec.clone();
            sp.seed = s;
            match generate_phantom(&sp) {
                Ok(v) => return v,
                Err(_) => s += 1,
            }
        }
    }

    fn aps(v: &CineVolume) -> Vec<AmplitudePhase> {
        (0..v.frames()).map(|t| decompose(&v.spectrum(t).unwrap()).unwrap()).collect()
    }

    #[test]
    fn fuse_pair_endpoints_are_bit_exact() {
        let v = test_volume(1, 4);
        let ap = aps(&v);
        assert_eq!(fuse_pair(&ap[0], &ap[1], 1.0).unwrap(), ap[0].amplitude);
        assert_eq!(fuse_pair(&ap[0], &ap[1], 0.0).unwrap(), ap[1].amplitude);
    }

    fn flat_ap(value: f64, h: usize, w: usize) -> AmplitudePhase {
        let s = Spectrum::new(alloc::vec![C64::new(value, 0.0); h * w], h, w, false).unwrap();
        decompose(&s).unwrap()
    }

    #[test]
    fn fuse_pair_midpoint() {
        // bins (2, 6) at μ=0.5 must give exactly 4
        let am = flat_ap(2.0, 2, 2);
        let an = flat_ap(6.0, 2, 2);
        assert_eq!(fuse_pair(&am, &an, 0.5).unwrap(), alloc::vec![4.0; 4]);
    }

    #[test]
    fn fuse_pair_rejects_shape_mismatch() {
        let a = flat_ap(1.0, 2, 2);
        let b = flat_ap(1.0, 2, 4);
        assert!(fuse_pair(&a, &b, 0.5).is_err());
    }

    #[test]
    fn grouped_degenerate_weights_reproduce_anchor() {
        let v = test_volume(2, 4);
        let spec = FusionSpec {
            scheme: FusionScheme::Grouped,
            anchor: 0,
            partners: alloc::vec![1, 2],
            weights: FusionWeights::PerFrame(alloc::vec![1.0, 0.0, 0.0]),
            freq_weighting: None,
            seed: 0,
        };
        let fused = fuse(&v, &spec).unwrap();
        let anchor = decompose(&v.spectrum(0).unwrap()).unwrap();
        assert_eq!(fused.fused_amplitude, anchor.amplitude);
    }

    #[test]
    fn fuse_matches_hand_composed_pair_pipeline() {
        let v = test_volume(3, 2);
        let spec = FusionSpec::adjacent(0, 1, 0.3);
        let fused = fuse(&v, &spec).unwrap();
        let ap0 = decompose(&v.spectrum(0).unwrap()).unwrap();
        let ap1 = decompose(&v.spectrum(1).unwrap()).unwrap();
        let amp = fuse_pair(&ap0, &ap1, 0.3).unwrap();
        let spec2 = recompose_parts(&amp, &ap0.phase, 16, 16, false).unwrap();
        assert_eq!(fused.spectrum.data(), spec2.data());
        assert_eq!(fused.phase_source, 0);
    }

    #[test]
    fn zero_profile_reproduces_anchor_bitwise() {
        let v = test_volume(4, 4);
        let spec = FusionSpec {
            freq_weighting: Some(RadialProfile::new(alloc::vec![0.0]).unwrap()),
            ..FusionSpec::adjacent(1, 2, 0.7)
        };
        let fused = fuse(&v, &spec).unwrap();
        let anchor = decompose(&v.spectrum(1).unwrap()).unwrap();
        assert_eq!(fused.fused_amplitude, anchor.amplitude);
        let anchor_spec = recompose_parts(&anchor.amplitude, &anchor.phase, 16, 16, false).unwrap();
        assert_eq!(fused.spectrum.data(), anchor_spec.data());
    }

    #[test]
    fn static_volume_is_a_fixed_point() {
        let spec = PhantomSpec {
            h: 16,
            w: 16,
            t: 4,
            n_ellipses: 1,
            motion_amplitude: 0.0,
            contrast_levels: alloc::vec![0.8],
            noise_sigma: 0.0,
            seed: 6,
        };
        let v = generate_phantom(&spec).unwrap();
        let common = decompose(&v.spectrum(0).unwrap()).unwrap();
        for fspec in [
            FusionSpec::adjacent(0, 1, 0.37),
            FusionSpec {
                scheme: FusionScheme::Skip,
                anchor: 0,
                partners: alloc::vec![2],
                weights: FusionWeights::Scalar(0.81),
                freq_weighting: None,
                seed: 0,
            },
            FusionSpec {
                scheme: FusionScheme::Grouped,
                anchor: 0,
                partners: alloc::vec![1, 3],
                weights: FusionWeights::PerFrame(alloc::vec![0.2, 0.5, 0.3]),
                freq_weighting: None,
                seed: 0,
            },
        ] {
            let fused = fuse(&v, &fspec).unwrap();
            assert_eq!(fused.fused_amplitude, common.amplitude, "{:?}", fspec.scheme);
        }
    }

    #[test]
    fn spec_validation_catches_bad_frames() {
        assert!(FusionSpec::adjacent(0, 2, 0.5).validate(8).is_err());
        assert!(FusionSpec::adjacent(0, 7, 0.5).validate(8).is_ok(), "cyclic wrap");
        assert!(FusionSpec::adjacent(0, 0, 0.5).validate(8).is_err(), "distinct frames");
        assert!(FusionSpec::adjacent(0, 1, 1.5).validate(8).is_err(), "μ range");
        let skip = FusionSpec {
            scheme: FusionScheme::Skip,
            anchor: 0,
            partners: alloc::vec![7],
            weights: FusionWeights::Scalar(0.5),
            freq_weighting: None,
            seed: 0,
        };
        // |0-7| = 7 >= 2: valid even though cyclically adjacent.
        assert!(skip.validate(8).is_ok());
    }

    #[test]
    fn sample_guidance_empty_and_deterministic() {
        let base = PhantomSpec {
            h: 8,
            w: 8,
            t: 4,
            n_ellipses: 1,
            motion_amplitude: 0.0,
            contrast_levels: alloc::vec![0.9],
            noise_sigma: 0.01,
            seed: 0,
        };
        let corpus = make_corpus_with_split(3, &base, 9, 0).unwrap();
        assert!(sample_guidance(&corpus, 0, SchemeMix::adjacent_only(), 1).unwrap().is_empty());
        let a = sample_guidance(&corpus, 5, SchemeMix::adjacent_only(), 1).unwrap();
        let b = sample_guidance(&corpus, 5, SchemeMix::adjacent_only(), 1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.spectrum.data(), y.spectrum.data());
            assert_eq!(x.spec.scheme, FusionScheme::Adjacent);
        }
    }

    #[test]
    fn sample_guidance_rejects_skip_on_short_corpus() {
        let base = PhantomSpec {
            h: 8,
            w: 8,
            t: 2,
            n_ellipses: 1,
            motion_amplitude: 0.0,
            contrast_levels: alloc::vec![0.9],
            noise_sigma: 0.0,
            seed: 0,
        };
        let corpus = make_corpus_with_split(2, &base, 9, 0).unwrap();
        let mix = SchemeMix { adjacent: 0.5, skip: 0.5, grouped: 0.0 };
        assert!(sample_guidance(&corpus, 3, mix, 1).is_err());
        assert!(sample_guidance(&corpus, 3, SchemeMix::adjacent_only(), 1).is_ok());
    }
}
