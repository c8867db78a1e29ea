//! Frequency compression model: a per-frame patch encoder over the
//! 2-channel complex representation, an optional vector-quantized
//! bottleneck, a shallow temporal volume module producing the latent
//! tensor `z`, and the mirror decoder.
//!
//! K-space dynamic range spans several orders of magnitude, so volumes
//! pass through a signed-log normalization (`s(x) = sign(x)·ln(1+|x|/λ)`
//! per real/imaginary component, λ the median absolute component value)
//! before the networks see them; the inverse map is exact and the record
//! travels with the normalized volume.
//!
//! The volume module mixes time through a cyclic window of adjacent
//! frames stacked as channels, so a codec trained on 3-frame patches
//! applies unchanged to any frame count.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::kspace::{fftshift, idft2, ifftshift, Spectrum, C64};
use crate::nn::{
    Adam, AdamParams, Conv2d, ConvTranspose2d, Ema, GroupNorm, ParamSet, Scalar, SiLu,
    StepOutcome, Tensor4,
};
use crate::phantom::PhantomCorpus;
use crate::rng::stream;
use crate::volume::CineVolume;

// ---------------------------------------------------------------------------
// K-space volumes and normalization
// ---------------------------------------------------------------------------

/// Per-frame centered spectra of one cine volume (the `K` being
/// compressed and reconstructed).
#[derive(Debug, Clone)]
pub struct KSpaceVolume {
    frames: Vec<Spectrum>,
    h: usize,
    w: usize,
}

impl KSpaceVolume {
    pub fn new(frames: Vec<Spectrum>) -> Result<Self> {
        if frames.is_empty() {
            return Err(invalid("KSpaceVolume", "need at least one frame"));
        }
        let (h, w) = (frames[0].h(), frames[0].w());
        for (i, f) in frames.iter().enumerate() {
            if f.h() != h || f.w() != w {
                return Err(shape_mismatch(
                    "KSpaceVolume",
                    format!("{h}x{w}"),
                    format!("{}x{} at frame {i}", f.h(), f.w()),
                ));
            }
            if !f.centered() {
                return Err(Error::WrongCentering {
                    context: "KSpaceVolume",
                    expected_centered: true,
                });
            }
        }
        Ok(Self { frames, h, w })
    }

    /// Forward-transform a cine volume frame by frame (centered layout).
    pub fn from_cine(vol: &CineVolume) -> Result<Self> {
        let frames = (0..vol.frames())
            .map(|t| fftshift(&vol.spectrum(t)?))
            .collect::<Result<Vec<_>>>()?;
        Self::new(frames)
    }

    /// Inverse-transform back to the image domain.
    pub fn to_cine(&self) -> Result<CineVolume> {
        let mut data = Vec::with_capacity(self.h * self.w * self.frames.len());
        for f in &self.frames {
            data.extend(idft2(&ifftshift(f)?)?);
        }
        CineVolume::new(data, self.h, self.w, self.frames.len())
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, t: usize) -> &Spectrum {
        &self.frames[t]
    }

    /// Replicate a single spectrum `t` times (lifting a fused guidance
    /// frame into a volume for encoding).
    pub fn replicate(spec: &Spectrum, t: usize) -> Result<Self> {
        Self::new(vec![spec.clone(); t.max(1)])
    }
}

/// Normalization record: the λ of the signed-log map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormRecord {
    pub lambda: f64,
}

/// A k-space volume mapped into normalized 2-channel real form,
/// `(T, 2, H, W)` with channel 0 = real, 1 = imaginary.
#[derive(Debug, Clone)]
pub struct NormalizedKVolume {
    pub data: Vec<f64>,
    pub h: usize,
    pub w: usize,
    pub t: usize,
    pub record: NormRecord,
}

fn signed_log(x: f64, lambda: f64) -> f64 {
    x.signum() * (x.abs() / lambda).ln_1p()
}

fn signed_exp(s: f64, lambda: f64) -> f64 {
    s.signum() * lambda * s.abs().exp_m1()
}

/// Signed-log normalization with λ = median absolute component value
/// over the volume. Rejects volumes whose median is zero (all-zero or
/// degenerate input), where the map is undefined.
pub fn normalize_kspace(vol: &KSpaceVolume) -> Result<NormalizedKVolume> {
    let (h, w, t) = (vol.h(), vol.w(), vol.frames());
    let mut components = Vec::with_capacity(2 * h * w * t);
    for f in &vol.frames {
        for z in f.data() {
            components.push(z.re.abs());
            components.push(z.im.abs());
        }
    }
    components.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite by construction"));
    let lambda = median_of_sorted(&components);
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(invalid(
            "normalize_kspace",
            format!("median absolute value {lambda} leaves the signed-log map undefined"),
        ));
    }
    normalize_kspace_with(vol, NormRecord { lambda })
}

/// [`normalize_kspace`] under an externally supplied record (used when a
/// synthesized volume must share its guidance's scale).
pub fn normalize_kspace_with(vol: &KSpaceVolume, record: NormRecord) -> Result<NormalizedKVolume> {
    if record.lambda <= 0.0 || !record.lambda.is_finite() {
        return Err(invalid("normalize_kspace", "λ must be finite and positive"));
    }
    let (h, w, t) = (vol.h(), vol.w(), vol.frames());
    let plane = h * w;
    let mut data = Vec::with_capacity(2 * plane * t);
    for f in &vol.frames {
        for z in f.data() {
            data.push(signed_log(z.re, record.lambda));
        }
        for z in f.data() {
            data.push(signed_log(z.im, record.lambda));
        }
    }
    Ok(NormalizedKVolume { data, h, w, t, record })
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Exact inverse of [`normalize_kspace`].
pub fn denormalize_kspace(nv: &NormalizedKVolume) -> Result<KSpaceVolume> {
    let plane = nv.h * nv.w;
    let mut frames = Vec::with_capacity(nv.t);
    for t in 0..nv.t {
        let base = t * 2 * plane;
        let mut bins = Vec::with_capacity(plane);
        for i in 0..plane {
            let re = signed_exp(nv.data[base + i], nv.record.lambda);
            let im = signed_exp(nv.data[base + plane + i], nv.record.lambda);
            bins.push(C64::new(re, im));
        }
        frames.push(Spectrum::new(bins, nv.h, nv.w, true)?);
    }
    KSpaceVolume::new(frames)
}

impl NormalizedKVolume {
    pub fn to_tensor<F: Scalar>(&self) -> Tensor4<F> {
        Tensor4::from_vec(
            self.data.iter().map(|&v| F::from_f64_c(v)).collect(),
            [self.t, 2, self.h, self.w],
        )
        .expect("layout is consistent by construction")
    }

    /// Rebuild from a network output tensor plus a record.
    pub fn from_tensor<F: Scalar>(tensor: &Tensor4<F>, record: NormRecord) -> Result<Self> {
        let [t, c, h, w] = tensor.shape();
        if c != 2 {
            return Err(shape_mismatch(
                "NormalizedKVolume::from_tensor",
                "2 channels",
                format!("{c} channels"),
            ));
        }
        Ok(Self {
            data: tensor.data().iter().map(|v| v.to_f64_c()).collect(),
            h,
            w,
            t,
            record,
        })
    }
}

// ---------------------------------------------------------------------------
// Latents
// ---------------------------------------------------------------------------

/// The compact latent `z`: stored as `(T, C_z, H/8, W/8)` with frames as
/// the leading axis; logically `(C_z, H/8, W/8, T)`.
#[derive(Debug, Clone)]
pub struct LatentTensor<F> {
    pub data: Tensor4<F>,
}

impl<F: Scalar> LatentTensor<F> {
    /// Logical shape `(C_z, H/8, W/8, T)`.
    pub fn shape_czhwt(&self) -> [usize; 4] {
        let [t, c, h, w] = self.data.shape();
        [c, h, w, t]
    }

    /// Reinterpret as a single U-Net sample `(1, T·C_z, H/8, W/8)`.
    pub fn to_unet_input(&self) -> Tensor4<F> {
        let [t, c, h, w] = self.data.shape();
        self.data
            .clone()
            .reshape([1, t * c, h, w])
            .expect("same element count")
    }

    /// Inverse of [`Self::to_unet_input`].
    pub fn from_unet_output(tensor: Tensor4<F>, t: usize) -> Result<Self> {
        let [one, tc, h, w] = tensor.shape();
        if one != 1 || tc % t != 0 {
            return Err(shape_mismatch(
                "LatentTensor::from_unet_output",
                format!("(1, {t}*C, h, w)"),
                format!("{:?}", tensor.shape()),
            ));
        }
        Ok(Self {
            data: tensor.reshape([t, tc / t, h, w])?,
        })
    }
}

// ---------------------------------------------------------------------------
// Codec configuration and models
// ---------------------------------------------------------------------------

/// Architecture of the codec (8x spatial downsampling is fixed by the
/// three stride-2 stages).
#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub spatial_c1: usize,
    pub spatial_c2: usize,
    /// Dimension of the quantized per-position feature vectors.
    pub code_dim: usize,
    pub codebook_size: usize,
    pub quantize: bool,
    /// Channels of the latent `z` (C_z).
    pub latent_channels: usize,
    pub volume_hidden: usize,
    /// Cyclic temporal window of the volume module (odd).
    pub temporal_window: usize,
    pub gn_groups: usize,
}

impl CodecConfig {
    pub fn desk() -> Self {
        Self {
            spatial_c1: 32,
            spatial_c2: 64,
            code_dim: 8,
            codebook_size: 256,
            quantize: true,
            latent_channels: 4,
            volume_hidden: 96,
            temporal_window: 3,
            gn_groups: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.temporal_window % 2 == 0 || self.temporal_window == 0 {
            return Err(invalid("CodecConfig", "temporal_window must be odd"));
        }
        if self.code_dim == 0
            || self.codebook_size == 0
            || self.latent_channels == 0
            || self.spatial_c1 == 0
            || self.spatial_c2 == 0
            || self.volume_hidden == 0
        {
            return Err(invalid("CodecConfig", "all sizes must be positive"));
        }
        Ok(())
    }

    pub fn check_grid(&self, h: usize, w: usize) -> Result<()> {
        if h % 8 != 0 || w % 8 != 0 {
            return Err(invalid(
                "CodecConfig",
                format!("grid {h}x{w} must be divisible by 8 (three stride-2 stages)"),
            ));
        }
        Ok(())
    }
}

/// Patch encoder: three stride-2 stages, a feature projection, then the
/// temporal volume module producing `z`.
#[derive(Debug, Clone)]
pub struct EncoderModel<F> {
    conv1: Conv2d<F>,
    gn1: GroupNorm<F>,
    act1: SiLu<F>,
    conv2: Conv2d<F>,
    gn2: GroupNorm<F>,
    act2: SiLu<F>,
    conv3: Conv2d<F>,
    gn3: GroupNorm<F>,
    act3: SiLu<F>,
    proj: Conv2d<F>,
    vol_a: Conv2d<F>,
    act_v: SiLu<F>,
    vol_b: Conv2d<F>,
    window: usize,
}

impl<F: Scalar> EncoderModel<F> {
    fn new<R: Rng>(cfg: &CodecConfig, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<F>,
    {
        let g = cfg.gn_groups;
        Self {
            conv1: Conv2d::new(2, cfg.spatial_c1, 3, 2, rng),
            gn1: GroupNorm::new(cfg.spatial_c1, g),
            act1: SiLu::new(),
            conv2: Conv2d::new(cfg.spatial_c1, cfg.spatial_c2, 3, 2, rng),
            gn2: GroupNorm::new(cfg.spatial_c2, g),
            act2: SiLu::new(),
            conv3: Conv2d::new(cfg.spatial_c2, cfg.spatial_c2, 3, 2, rng),
            gn3: GroupNorm::new(cfg.spatial_c2, g),
            act3: SiLu::new(),
            proj: Conv2d::new(cfg.spatial_c2, cfg.code_dim, 3, 1, rng),
            vol_a: Conv2d::new(cfg.temporal_window * cfg.code_dim, cfg.volume_hidden, 3, 1, rng),
            act_v: SiLu::new(),
            vol_b: Conv2d::new(cfg.volume_hidden, cfg.latent_channels, 3, 1, rng),
            window: cfg.temporal_window,
        }
    }

    /// Per-frame feature path (frames ride the batch axis).
    fn forward_features(&mut self, x: &Tensor4<F>) -> Result<Tensor4<F>> {
        let h = self.act1.forward(&self.gn1.forward(&self.conv1.forward(x)?)?);
        let h = self.act2.forward(&self.gn2.forward(&self.conv2.forward(&h)?)?);
        let h = self.act3.forward(&self.gn3.forward(&self.conv3.forward(&h)?)?);
        self.proj.forward(&h)
    }

    fn backward_features(&mut self, df: &Tensor4<F>) -> Tensor4<F> {
        let d = self.proj.backward(df);
        let d = self.conv3.backward(&self.gn3.backward(&self.act3.backward(&d)));
        let d = self.conv2.backward(&self.gn2.backward(&self.act2.backward(&d)));
        self.conv1.backward(&self.gn1.backward(&self.act1.backward(&d)))
    }

    fn infer_features(&self, x: &Tensor4<F>) -> Result<Tensor4<F>> {
        let h = SiLu::infer(&self.gn1.infer(&self.conv1.infer(x)?)?);
        let h = SiLu::infer(&self.gn2.infer(&self.conv2.infer(&h)?)?);
        let h = SiLu::infer(&self.gn3.infer(&self.conv3.infer(&h)?)?);
        self.proj.infer(&h)
    }

    /// Volume module over (possibly quantized) features. `group` is the
    /// temporal extent of each sequence in the batch.
    fn forward_volume(&mut self, f: &Tensor4<F>, group: usize) -> Result<Tensor4<F>> {
        let s = window_stack(f, self.window, group);
        let v = self.act_v.forward(&self.vol_a.forward(&s)?);
        self.vol_b.forward(&v)
    }

    fn backward_volume(&mut self, dz: &Tensor4<F>, group: usize) -> Tensor4<F> {
        let dv = self.vol_b.backward(dz);
        let ds = self.vol_a.backward(&self.act_v.backward(&dv));
        window_stack_backward(&ds, self.window, group)
    }

    fn infer_volume(&self, f: &Tensor4<F>, group: usize) -> Result<Tensor4<F>> {
        let s = window_stack(f, self.window, group);
        let v = SiLu::infer(&self.vol_a.infer(&s)?);
        self.vol_b.infer(&v)
    }
}

impl<F: Scalar> ParamSet<F> for EncoderModel<F> {
    fn visit_params<'a>(&'a self, out: &mut Vec<&'a Tensor4<F>>) {
        self.conv1.visit_params(out);
        self.gn1.visit_params(out);
        self.conv2.visit_params(out);
        self.gn2.visit_params(out);
        self.conv3.visit_params(out);
        self.gn3.visit_params(out);
        self.proj.visit_params(out);
        self.vol_a.visit_params(out);
        self.vol_b.visit_params(out);
    }

    fn visit_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor4<F>>) {
        self.conv1.visit_params_mut(out);
        self.gn1.visit_params_mut(out);
        self.conv2.visit_params_mut(out);
        self.gn2.visit_params_mut(out);
        self.conv3.visit_params_mut(out);
        self.gn3.visit_params_mut(out);
        self.proj.visit_params_mut(out);
        self.vol_a.visit_params_mut(out);
        self.vol_b.visit_params_mut(out);
    }

    fn push_param_names(&self, prefix: &str, out: &mut Vec<String>) {
        for (name, layer) in [
            ("conv1", &self.conv1 as &dyn ParamSet<F>),
            ("gn1", &self.gn1),
            ("conv2", &self.conv2),
            ("gn2", &self.gn2),
            ("conv3", &self.conv3),
            ("gn3", &self.gn3),
            ("proj", &self.proj),
            ("vol_a", &self.vol_a),
            ("vol_b", &self.vol_b),
        ] {
            layer.push_param_names(&format!("{prefix}encoder.{name}"), out);
        }
    }
}

/// Mirror decoder: volume module back to per-position features, then
/// three transposed-conv stages up to the 2-channel frame grid.
#[derive(Debug, Clone)]
pub struct DecoderModel<F> {
    vol_a: Conv2d<F>,
    act_v: SiLu<F>,
    vol_b: Conv2d<F>,
    conv_in: Conv2d<F>,
    gn0: GroupNorm<F>,
    act0: SiLu<F>,
    up1: ConvTranspose2d<F>,
    gn1: GroupNorm<F>,
    act1: SiLu<F>,
    up2: ConvTranspose2d<F>,
    gn2: GroupNorm<F>,
    act2: SiLu<F>,
    up3: ConvTranspose2d<F>,
    gn3: GroupNorm<F>,
    act3: SiLu<F>,
    conv_out: Conv2d<F>,
    window: usize,
}

impl<F: Scalar> DecoderModel<F> {
    fn new<R: Rng>(cfg: &CodecConfig, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<F>,
    {
        let g = cfg.gn_groups;
        Self {
            vol_a: Conv2d::new(
                cfg.temporal_window * cfg.latent_channels,
                cfg.volume_hidden,
                3,
                1,
                rng,
            ),
            act_v: SiLu::new(),
            vol_b: Conv2d::new(cfg.volume_hidden, cfg.code_dim, 3, 1, rng),
            conv_in: Conv2d::new(cfg.code_dim, cfg.spatial_c2, 3, 1, rng),
            gn0: GroupNorm::new(cfg.spatial_c2, g),
            act0: SiLu::new(),
            up1: ConvTranspose2d::new(cfg.spatial_c2, cfg.spatial_c2, rng),
            gn1: GroupNorm::new(cfg.spatial_c2, g),
            act1: SiLu::new(),
            up2: ConvTranspose2d::new(cfg.spatial_c2, cfg.spatial_c1, rng),
            gn2: GroupNorm::new(cfg.spatial_c1, g),
            act2: SiLu::new(),
            up3: ConvTranspose2d::new(cfg.spatial_c1, cfg.spatial_c1, rng),
            gn3: GroupNorm::new(cfg.spatial_c1, g),
            act3: SiLu::new(),
            conv_out: Conv2d::new(cfg.spatial_c1, 2, 3, 1, rng),
            window: cfg.temporal_window,
        }
    }

    fn forward(&mut self, z: &Tensor4<F>, group: usize) -> Result<Tensor4<F>> {
        let s = window_stack(z, self.window, group);
        let v = self.act_v.forward(&self.vol_a.forward(&s)?);
        let f = self.vol_b.forward(&v)?;
        let h = self.act0.forward(&self.gn0.forward(&self.conv_in.forward(&f)?)?);
        let h = self.act1.forward(&self.gn1.forward(&self.up1.forward(&h)?)?);
        let h = self.act2.forward(&self.gn2.forward(&self.up2.forward(&h)?)?);
        let h = self.act3.forward(&self.gn3.forward(&self.up3.forward(&h)?)?);
        self.conv_out.forward(&h)
    }

    fn backward(&mut self, dout: &Tensor4<F>, group: usize) -> Tensor4<F> {
        let d = self.conv_out.backward(dout);
        let d = self.up3.backward(&self.gn3.backward(&self.act3.backward(&d)));
        let d = self.up2.backward(&self.gn2.backward(&self.act2.backward(&d)));
        let d = self.up1.backward(&self.gn1.backward(&self.act1.backward(&d)));
        let df = self.conv_in.backward(&self.gn0.backward(&self.act0.backward(&d)));
        let dv = self.vol_b.backward(&df);
        let ds = self.vol_a.backward(&self.act_v.backward(&dv));
        window_stack_backward(&ds, self.window, group)
    }

    fn infer(&self, z: &Tensor4<F>, group: usize) -> Result<Tensor4<F>> {
        let s = window_stack(z, self.window, group);
        let v = SiLu::infer(&self.vol_a.infer(&s)?);
        let f = self.vol_b.infer(&v)?;
        let h = SiLu::infer(&self.gn0.infer(&self.conv_in.infer(&f)?)?);
        let h = SiLu::infer(&self.gn1.infer(&self.up1.infer(&h)?)?);
        let h = SiLu::infer(&self.gn2.infer(&self.up2.infer(&h)?)?);
        let h = SiLu::infer(&self.gn3.infer(&self.up3.infer(&h)?)?);
        self.conv_out.infer(&h)
    }
}

impl<F: Scalar> ParamSet<F> for DecoderModel<F> {
    fn visit_params<'a>(&'a self, out: &mut Vec<&'a Tensor4<F>>) {
        self.vol_a.visit_params(out);
        self.vol_b.visit_params(out);
        self.conv_in.visit_params(out);
        self.gn0.visit_params(out);
        self.up1.visit_params(out);
        self.gn1.visit_params(out);
        self.up2.visit_params(out);
        self.gn2.visit_params(out);
        self.up3.visit_params(out);
        self.gn3.visit_params(out);
        self.conv_out.visit_params(out);
    }

    fn visit_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor4<F>>) {
        self.vol_a.visit_params_mut(out);
        self.vol_b.visit_params_mut(out);
        self.conv_in.visit_params_mut(out);
        self.gn0.visit_params_mut(out);
        self.up1.visit_params_mut(out);
        self.gn1.visit_params_mut(out);
        self.up2.visit_params_mut(out);
        self.gn2.visit_params_mut(out);
        self.up3.visit_params_mut(out);
        self.gn3.visit_params_mut(out);
        self.conv_out.visit_params_mut(out);
    }

    fn push_param_names(&self, prefix: &str, out: &mut Vec<String>) {
        for (name, layer) in [
            ("vol_a", &self.vol_a as &dyn ParamSet<F>),
            ("vol_b", &self.vol_b),
            ("conv_in", &self.conv_in),
            ("gn0", &self.gn0),
            ("up1", &self.up1),
            ("gn1", &self.gn1),
            ("up2", &self.up2),
            ("gn2", &self.gn2),
            ("up3", &self.up3),
            ("gn3", &self.gn3),
            ("conv_out", &self.conv_out),
        ] {
            layer.push_param_names(&format!("{prefix}decoder.{name}"), out);
        }
    }
}

/// Cyclic temporal windows stacked as channels: input `(N, C, h, w)`
/// grouped into sequences of `group` frames; output `(N, win·C, h, w)`
/// where slot `k` holds frame `t + k - win/2` (cyclic within the group).
fn window_stack<F: Scalar>(x: &Tensor4<F>, win: usize, group: usize) -> Tensor4<F> {
    let [n, c, h, w] = x.shape();
    assert!(n % group == 0, "batch must divide into temporal groups");
    let half = win / 2;
    let mut y = Tensor4::zeros([n, win * c, h, w]);
    let plane = h * w;
    for b in 0..n {
        let block = (b / group) * group;
        let local = b - block;
        for k in 0..win {
            let src_t = block + (local + k + group * win - half) % group;
            for ci in 0..c {
                let src = x.index(src_t, ci, 0, 0);
                let dst = y.index(b, k * c + ci, 0, 0);
                y.data_mut()[dst..dst + plane].copy_from_slice(&x.data()[src..src + plane]);
            }
        }
    }
    y
}

fn window_stack_backward<F: Scalar>(dy: &Tensor4<F>, win: usize, group: usize) -> Tensor4<F> {
    let [n, wc, h, w] = dy.shape();
    let c = wc / win;
    let half = win / 2;
    let mut dx = Tensor4::zeros([n, c, h, w]);
    let plane = h * w;
    for b in 0..n {
        let block = (b / group) * group;
        let local = b - block;
        for k in 0..win {
            let src_t = block + (local + k + group * win - half) % group;
            for ci in 0..c {
                let src = dy.index(b, k * c + ci, 0, 0);
                let dst = dx.index(src_t, ci, 0, 0);
                for i in 0..plane {
                    dx.data_mut()[dst + i] = dx.data()[dst + i] + dy.data()[src + i];
                }
            }
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// Codebook
// ---------------------------------------------------------------------------

/// Vector-quantization codebook with usage counters.
#[derive(Debug, Clone)]
pub struct Codebook<F> {
    /// `(K, D, 1, 1)` entries.
    pub entries: Tensor4<F>,
    pub usage: Vec<u64>,
}

impl<F: Scalar> Codebook<F> {
    fn new<R: Rng>(size: usize, dim: usize, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<F>,
    {
        let mut entries = Tensor4::randn([size, dim, 1, 1], 0.1, rng);
        entries.enable_grad();
        Self {
            entries,
            usage: vec![0; size],
        }
    }

    pub fn size(&self) -> usize {
        self.entries.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.entries.shape()[1]
    }

    /// Nearest entry per spatial position (L2 over the feature axis).
    /// Pure: usage accounting is the trainer's job, via the indices.
    pub fn quantize(&self, features: &Tensor4<F>) -> (Tensor4<F>, Vec<u32>) {
        let [n, d, h, w] = features.shape();
        debug_assert_eq!(d, self.dim());
        let k = self.size();
        let mut q = Tensor4::zeros([n, d, h, w]);
        let mut indices = Vec::with_capacity(n * h * w);
        for ni in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let mut best = 0usize;
                    let mut best_d = F::infinity();
                    for ki in 0..k {
                        let mut acc = F::zero();
                        for di in 0..d {
                            let delta =
                                features.at(ni, di, y, x) - self.entries.data()[ki * d + di];
                            acc = acc + delta * delta;
                        }
                        if acc < best_d {
                            best_d = acc;
                            best = ki;
                        }
                    }
                    indices.push(best as u32);
                    for di in 0..d {
                        q.set(ni, di, y, x, self.entries.data()[best * d + di]);
                    }
                }
            }
        }
        (q, indices)
    }
}

impl<F: Scalar> ParamSet<F> for Codebook<F> {
    fn visit_params<'a>(&'a self, out: &mut Vec<&'a Tensor4<F>>) {
        out.push(&self.entries);
    }

    fn visit_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor4<F>>) {
        out.push(&mut self.entries);
    }

    fn push_param_names(&self, prefix: &str, out: &mut Vec<String>) {
        out.push(format!("{prefix}codebook.entries"));
    }
}

// ---------------------------------------------------------------------------
// The bundled codec
// ---------------------------------------------------------------------------

/// Encoder, decoder, optional codebook, and the latent statistics the
/// diffusion stage scales by.
#[derive(Debug, Clone)]
pub struct CodecModel<F> {
    pub config: CodecConfig,
    pub encoder: EncoderModel<F>,
    pub decoder: DecoderModel<F>,
    pub codebook: Option<Codebook<F>>,
    /// Per-latent-channel mean measured on the training corpus.
    pub latent_mean: Vec<f64>,
    /// Per-latent-channel std measured on the training corpus.
    pub latent_std: Vec<f64>,
    /// Median λ of the training volumes; the fallback normalization
    /// scale for synthesized volumes.
    pub default_lambda: f64,
}

impl<F: Scalar> CodecModel<F> {
    pub fn init(config: &CodecConfig, seed: u64) -> Result<Self>
    where
        StandardNormal: Distribution<F>,
    {
        config.validate()?;
        let mut rng = stream(seed, 0);
        let encoder = EncoderModel::new(config, &mut rng);
        let decoder = DecoderModel::new(config, &mut rng);
        let codebook = if config.quantize {
            Some(Codebook::new(config.codebook_size, config.code_dim, &mut rng))
        } else {
            None
        };
        let cz = config.latent_channels;
        Ok(Self {
            config: config.clone(),
            encoder,
            decoder,
            codebook,
            latent_mean: vec![0.0; cz],
            latent_std: vec![1.0; cz],
            default_lambda: 1.0,
        })
    }

    /// Scale a latent into the standardized space the diffusion model
    /// operates in.
    pub fn scale_latent(&self, z: &LatentTensor<F>) -> LatentTensor<F> {
        let mut out = z.data.clone();
        let [t, c, h, w] = out.shape();
        for ti in 0..t {
            for ci in 0..c {
                let m = F::from_f64_c(self.latent_mean[ci]);
                let s = F::from_f64_c(1.0 / self.latent_std[ci].max(1e-12));
                let base = out.index(ti, ci, 0, 0);
                for i in 0..h * w {
                    out.data_mut()[base + i] = (out.data()[base + i] - m) * s;
                }
            }
        }
        LatentTensor { data: out }
    }

    pub fn unscale_latent(&self, z: &LatentTensor<F>) -> LatentTensor<F> {
        let mut out = z.data.clone();
        let [t, c, h, w] = out.shape();
        for ti in 0..t {
            for ci in 0..c {
                let m = F::from_f64_c(self.latent_mean[ci]);
                let s = F::from_f64_c(self.latent_std[ci].max(1e-12));
                let base = out.index(ti, ci, 0, 0);
                for i in 0..h * w {
                    out.data_mut()[base + i] = out.data()[base + i] * s + m;
                }
            }
        }
        LatentTensor { data: out }
    }
}

/// Encode a normalized k-space volume into its latent `z` (frozen model;
/// pure).
pub fn encode<F: Scalar>(model: &CodecModel<F>, nv: &NormalizedKVolume) -> Result<LatentTensor<F>> {
    model.config.check_grid(nv.h, nv.w)?;
    let x = nv.to_tensor::<F>();
    let features = model.encoder.infer_features(&x)?;
    let features = match &model.codebook {
        Some(cb) => cb.quantize(&features).0,
        None => features,
    };
    let z = model.encoder.infer_volume(&features, nv.t)?;
    Ok(LatentTensor { data: z })
}

/// Decode a latent back to a k-space volume under `record`'s scaling.
pub fn decode<F: Scalar>(
    model: &CodecModel<F>,
    z: &LatentTensor<F>,
    record: NormRecord,
) -> Result<KSpaceVolume> {
    let [t, c, _, _] = z.data.shape();
    if c != model.config.latent_channels {
        return Err(shape_mismatch(
            "decode",
            format!("{} latent channels", model.config.latent_channels),
            format!("{c}"),
        ));
    }
    let out = model.decoder.infer(&z.data, t)?;
    let nv = NormalizedKVolume::from_tensor(&out, record)?;
    denormalize_kspace(&nv)
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Optimization settings for [`train_codec`].
#[derive(Debug, Clone, PartialEq)]
pub struct CodecTrainConfig {
    pub iterations: usize,
    pub lr: f64,
    pub batch: usize,
    /// Temporal patch extent (the 3 of 64x64x3 patches).
    pub patch_t: usize,
    /// Spatial patch edge; volumes larger than this are randomly cropped
    /// (even offsets keep the crop grid codec-compatible).
    pub patch_hw: usize,
    pub ema_decay: f64,
    pub codebook_weight: f64,
    pub commitment_weight: f64,
    /// Dead-code revival cadence (iterations); 0 disables revival.
    pub revive_every: usize,
    /// Divergence-recovery snapshot cadence (iterations).
    pub snapshot_every: usize,
    pub seed: u64,
}

impl CodecTrainConfig {
    /// Desk-scale operating point: converges on phantom corpora in
    /// minutes of CPU.
    pub fn desk(seed: u64) -> Self {
        Self {
            iterations: 2000,
            lr: 1e-3,
            batch: 2,
            patch_t: 3,
            patch_hw: 64,
            ema_decay: 0.999,
            codebook_weight: 1.0,
            commitment_weight: 0.25,
            revive_every: 100,
            snapshot_every: 50,
            seed,
        }
    }

    /// The published stage-1 hyperparameters (64x64x3 patches, 350
    /// iterations, lr 4.5e-6), kept as provenance; they assume the
    /// original training infrastructure and do not converge from scratch
    /// at desk scale.
    pub fn paper(seed: u64) -> Self {
        Self {
            iterations: 350,
            lr: 4.5e-6,
            ..Self::desk(seed)
        }
    }
}

/// Everything [`train_codec`] produces: raw and EMA weights, optimizer
/// state for checkpointing, and the loss trace.
#[derive(Debug, Clone)]
pub struct CodecTrainResult<F> {
    pub model: CodecModel<F>,
    pub ema_model: CodecModel<F>,
    pub adam: Adam<F>,
    pub loss_history: Vec<f64>,
    pub diverged: bool,
}

/// Two-channel MSE plus (when quantizing) codebook and commitment terms,
/// optimized with Adam over random `patch_hw²·patch_t` crops.
pub fn train_codec<F: Scalar>(
    corpus: &PhantomCorpus,
    config: &CodecConfig,
    train: &CodecTrainConfig,
) -> Result<CodecTrainResult<F>>
where
    StandardNormal: Distribution<F>,
{
    config.validate()?;
    let train_idx = corpus.train_indices();
    if train_idx.is_empty() {
        return Err(invalid("train_codec", "corpus has no training volumes"));
    }
    if train.batch == 0 || train.iterations == 0 {
        return Err(invalid("train_codec", "batch and iterations must be positive"));
    }

    // Normalize every training volume once.
    let mut normalized = Vec::with_capacity(train_idx.len());
    let mut lambdas = Vec::with_capacity(train_idx.len());
    for &i in &train_idx {
        let kv = KSpaceVolume::from_cine(&corpus.volumes[i])?;
        let nv = normalize_kspace(&kv)?;
        lambdas.push(nv.record.lambda);
        normalized.push(nv);
    }
    let (h, w, t_frames) = (normalized[0].h, normalized[0].w, normalized[0].t);
    let (ph, pw) = (h.min(train.patch_hw), w.min(train.patch_hw));
    config.check_grid(ph, pw)?;
    let patch_t = train.patch_t.min(t_frames).max(1);

    let mut model = CodecModel::<F>::init(config, train.seed)?;
    let mut adam = Adam::new(AdamParams::with_lr(train.lr));
    let mut ema = Ema::new(train.ema_decay, &collect_codec_params(&model))?;

    let mut rng = stream(train.seed, 1);
    let mut loss_history = Vec::with_capacity(train.iterations);
    let mut diverged = false;
    let mut snapshot: (CodecModel<F>, Ema<F>) = (model.clone(), ema.clone());
    let mut usage_at_revival = model.codebook.as_ref().map(|cb| cb.usage.clone());

    for iter in 0..train.iterations {
        // Assemble the batch: (B·patch_t, 2, ph, pw), frames as batch.
        let mut batch = Tensor4::<F>::zeros([train.batch * patch_t, 2, ph, pw]);
        for b in 0..train.batch {
            let nv = &normalized[rng.gen_range(0..normalized.len())];
            let t0 = rng.gen_range(0..t_frames);
            let y0 = if h > ph { rng.gen_range(0..=(h - ph) / 2) * 2 } else { 0 };
            let x0 = if w > pw { rng.gen_range(0..=(w - pw) / 2) * 2 } else { 0 };
            for k in 0..patch_t {
                let src_t = (t0 + k) % t_frames;
                for ch in 0..2 {
                    for y in 0..ph {
                        let src = ((src_t * 2 + ch) * h + (y0 + y)) * w + x0;
                        let dst = batch.index(b * patch_t + k, ch, y, 0);
                        for x in 0..pw {
                            batch.data_mut()[dst + x] = F::from_f64_c(nv.data[src + x]);
                        }
                    }
                }
            }
        }

        // Forward.
        let features = model.encoder.forward_features(&batch)?;
        let vq = model.codebook.as_ref().map(|cb| cb.quantize(&features));
        let vq_input = vq.as_ref().map(|(q, _)| q.clone()).unwrap_or_else(|| features.clone());
        let z = model.encoder.forward_volume(&vq_input, patch_t)?;
        let recon = model.decoder.forward(&z, patch_t)?;

        // Losses (accumulated in f64).
        let n_elems = recon.len() as f64;
        let mut mse = 0.0f64;
        for (r, x) in recon.data().iter().zip(batch.data()) {
            let d = r.to_f64_c() - x.to_f64_c();
            mse += d * d;
        }
        mse /= n_elems;

        let mut vq_term = 0.0f64;
        if let Some((q, _)) = &vq {
            let nf = features.len() as f64;
            for (qv, fv) in q.data().iter().zip(features.data()) {
                let d = qv.to_f64_c() - fv.to_f64_c();
                vq_term += d * d;
            }
            vq_term /= nf;
        }
        let loss =
            mse + (train.codebook_weight + train.commitment_weight) * vq_term;
        loss_history.push(loss);

        if !loss.is_finite() {
            // Abort with the last finite snapshot retained.
            model = snapshot.0;
            ema = snapshot.1;
            diverged = true;
            break;
        }

        // Backward.
        zero_codec_grads(&mut model);
        let scale = F::from_f64_c(2.0 / n_elems);
        let mut d_recon = recon.clone();
        for (d, (r, x)) in d_recon
            .data_mut()
            .iter_mut()
            .zip(recon.data().iter().zip(batch.data()))
        {
            *d = (*r - *x) * scale;
        }
        let dz = model.decoder.backward(&d_recon, patch_t);
        let d_quantized = model.encoder.backward_volume(&dz, patch_t);

        let mut d_features = d_quantized;
        if let Some((q, idx)) = &vq {
            let nf = features.len() as f64;
            // Commitment pulls encoder features toward their codes; the
            // straight-through estimator passes d_quantized unchanged.
            let cw = F::from_f64_c(2.0 * train.commitment_weight / nf);
            for (df, (fv, qv)) in d_features
                .data_mut()
                .iter_mut()
                .zip(features.data().iter().zip(q.data()))
            {
                *df = *df + cw * (*fv - *qv);
            }
            // Codebook term pushes codes toward the features they serve.
            let cb = model.codebook.as_mut().expect("quantize implies codebook");
            let dim = cb.dim();
            let [_, d, hh, ww] = features.shape();
            let kw = F::from_f64_c(2.0 * train.codebook_weight / nf);
            let mut dentries = vec![F::zero(); cb.entries.len()];
            for (pos, &code) in idx.iter().enumerate() {
                let ni = pos / (hh * ww);
                let rem = pos % (hh * ww);
                let (y, x) = (rem / ww, rem % ww);
                for di in 0..d {
                    let delta = q.at(ni, di, y, x) - features.at(ni, di, y, x);
                    dentries[code as usize * dim + di] =
                        dentries[code as usize * dim + di] + kw * delta;
                }
                cb.usage[code as usize] += 1;
            }
            cb.entries.accumulate_grad(&dentries);
        }
        model.encoder.backward_features(&d_features);

        // Step + EMA.
        let outcome = {
            let mut params = collect_codec_params_mut(&mut model);
            adam.step(&mut params)
        };
        if outcome == StepOutcome::Applied {
            ema.update(&collect_codec_params(&model));
        }

        // Dead-code revival: reseed codes unused since the last check to
        // feature vectors from the current batch.
        if train.revive_every > 0 && (iter + 1) % train.revive_every == 0 {
            if let (Some(cb), Some(last)) = (model.codebook.as_mut(), usage_at_revival.as_mut()) {
                let [n, d, hh, ww] = features.shape();
                let positions = n * hh * ww;
                for k in 0..cb.size() {
                    if cb.usage[k] == last[k] {
                        let pos = rng.gen_range(0..positions);
                        let ni = pos / (hh * ww);
                        let rem = pos % (hh * ww);
                        for di in 0..d {
                            cb.entries.data_mut()[k * d + di] =
                                features.at(ni, di, rem / ww, rem % ww);
                        }
                    }
                }
                *last = cb.usage.clone();
            }
        }

        if train.snapshot_every > 0 && (iter + 1) % train.snapshot_every == 0 {
            snapshot = (model.clone(), ema.clone());
        }
    }

    // EMA-weights copy.
    let mut ema_model = model.clone();
    {
        let mut params = collect_codec_params_mut(&mut ema_model);
        ema.apply_to(&mut params);
    }

    // Latent statistics over the training corpus (raw weights) and the
    // default λ for synthesis-time de-normalization.
    lambdas.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
    let default_lambda = median_of_sorted(&lambdas);
    let (mean, std) = latent_statistics(&model, &normalized)?;
    model.latent_mean = mean.clone();
    model.latent_std = std.clone();
    model.default_lambda = default_lambda;
    ema_model.latent_mean = mean;
    ema_model.latent_std = std;
    ema_model.default_lambda = default_lambda;

    Ok(CodecTrainResult {
        model,
        ema_model,
        adam,
        loss_history,
        diverged,
    })
}

fn latent_statistics<F: Scalar>(
    model: &CodecModel<F>,
    volumes: &[NormalizedKVolume],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let cz = model.config.latent_channels;
    let mut sum = vec![0.0f64; cz];
    let mut sum_sq = vec![0.0f64; cz];
    let mut count = vec![0usize; cz];
    for nv in volumes {
        let z = encode(model, nv)?;
        let [t, c, h, w] = z.data.shape();
        for ti in 0..t {
            for ci in 0..c {
                let base = z.data.index(ti, ci, 0, 0);
                for i in 0..h * w {
                    let v = z.data.data()[base + i].to_f64_c();
                    sum[ci] += v;
                    sum_sq[ci] += v * v;
                    count[ci] += 1;
                }
            }
        }
    }
    let mut mean = vec![0.0; cz];
    let mut std = vec![1.0; cz];
    for ci in 0..cz {
        let n = count[ci].max(1) as f64;
        mean[ci] = sum[ci] / n;
        let var = (sum_sq[ci] / n - mean[ci] * mean[ci]).max(1e-12);
        std[ci] = var.sqrt();
    }
    Ok((mean, std))
}

pub fn collect_codec_params<F: Scalar>(model: &CodecModel<F>) -> Vec<&Tensor4<F>> {
    let mut out = Vec::new();
    model.encoder.visit_params(&mut out);
    model.decoder.visit_params(&mut out);
    if let Some(cb) = &model.codebook {
        cb.visit_params(&mut out);
    }
    out
}

pub fn collect_codec_params_mut<F: Scalar>(model: &mut CodecModel<F>) -> Vec<&mut Tensor4<F>> {
    let mut out = Vec::new();
    model.encoder.visit_params_mut(&mut out);
    model.decoder.visit_params_mut(&mut out);
    if let Some(cb) = &mut model.codebook {
        cb.visit_params_mut(&mut out);
    }
    out
}

pub fn codec_param_names<F: Scalar>(model: &CodecModel<F>) -> Vec<String> {
    let mut out = Vec::new();
    model.encoder.push_param_names("", &mut out);
    model.decoder.push_param_names("", &mut out);
    if let Some(cb) = &model.codebook {
        cb.push_param_names("", &mut out);
    }
    out
}

fn zero_codec_grads<F: Scalar>(model: &mut CodecModel<F>) {
    for p in collect_codec_params_mut(model) {
        p.zero_grad();
    }
}
