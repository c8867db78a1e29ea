//! The fixed layer vocabulary with hand-written reverse-mode gradients.
//!
//! Layers cache what their backward pass needs during `forward`; `infer`
//! is the cache-free path for frozen models. Backward passes accumulate
//! into the parameter gradient buffers and return the input gradient.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{shape_mismatch, Result};
use crate::nn::{ParamSet, Scalar, Tensor4};

fn expect_shape<F: Scalar>(
    ctx: &'static str,
    x: &Tensor4<F>,
    channels: usize,
) -> Result<()> {
    if x.shape()[1] != channels {
        return Err(shape_mismatch(
            ctx,
            format!("{channels} input channels"),
            format!("{} (shape {:?})", x.shape()[1], x.shape()),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

/// 3x3 convolution (any odd kernel), stride 1 or 2, zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d<F> {
    pub weight: Tensor4<F>,
    pub bias: Tensor4<F>,
    stride: usize,
    pad: usize,
    cache: Option<Tensor4<F>>,
}

impl<F: Scalar> Conv2d<F> {
    /// He-initialized conv; `pad = k/2` keeps stride-1 shapes.
    pub fn new<R: Rng>(in_c: usize, out_c: usize, k: usize, stride: usize, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<F>,
    {
        let std = (2.0 / (in_c * k * k) as f64).sqrt();
        let mut weight = Tensor4::randn([out_c, in_c, k, k], std, rng);
        weight.enable_grad();
        let mut bias = Tensor4::zeros([1, out_c, 1, 1]);
        bias.enable_grad();
        Self {
            weight,
            bias,
            stride,
            pad: k / 2,
            cache: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&mut self, x: &Tensor4<F>) -> Result<Tensor4<F>> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    /// Cache-free forward for frozen models.
    pub fn infer(&self, x: &Tensor4<F>) -> Result<Tensor4<F>> {
        expect_shape("Conv2d", x, self.in_channels())?;
        let [bn, in_c, h, w] = x.shape();
        let [out_c, _, k, _] = self.weight.shape();
        let (s, p) = (self.stride, self.pad);
        let oh = (h + 2 * p - k) / s + 1;
        let ow = (w + 2 * p - k) / s + 1;
        let mut y = Tensor4::zeros([bn, out_c, oh, ow]);
        for n in 0..bn {
            for oc in 0..out_c {
                let b = self.bias.data()[oc];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b;
                        for ic in 0..in_c {
                            for ky in 0..k {
                                let iy = (oy * s + ky) as isize - p as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let x_row = x.index(n, ic, iy as usize, 0);
                                let w_row = self.weight.index(oc, ic, ky, 0);
                                for kx in 0..k {
                                    let ix = (ox * s + kx) as isize - p as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    acc = acc
                                        + x.data()[x_row + ix as usize]
                                            * self.weight.data()[w_row + kx];
                                }
                            }
                        }
                        y.set(n, oc, oy, ox, acc);
                    }
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4<F>) -> Tensor4<F> {
        let x = self.cache.take().expect("Conv2d::backward without forward");
        let [bn, in_c, h, w] = x.shape();
        let [out_c, _, k, _] = self.weight.shape();
        let (s, p) = (self.stride, self.pad);
        let [dn, dc, oh, ow] = dy.shape();
        assert_eq!((dn, dc), (bn, out_c), "Conv2d::backward shape");

        let mut dx = Tensor4::zeros([bn, in_c, h, w]);
        let mut dw = vec![F::zero(); self.weight.len()];
        let mut db = vec![F::zero(); out_c];
        for n in 0..bn {
            for oc in 0..out_c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = dy.at(n, oc, oy, ox);
                        if g == F::zero() {
                            continue;
                        }
                        db[oc] = db[oc] + g;
                        for ic in 0..in_c {
                            for ky in 0..k {
                                let iy = (oy * s + ky) as isize - p as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let x_row = x.index(n, ic, iy as usize, 0);
                                let w_row = self.weight.index(oc, ic, ky, 0);
                                let dx_row = dx.index(n, ic, iy as usize, 0);
                                for kx in 0..k {
                                    let ix = (ox * s + kx) as isize - p as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    dw[w_row + kx] =
                                        dw[w_row + kx] + g * x.data()[x_row + ix as usize];
                                    dx.data_mut()[dx_row + ix as usize] =
                                        dx.data()[dx_row + ix as usize]
                                            + g * self.weight.data()[w_row + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
        self.weight.accumulate_grad(&dw);
        self.bias.accumulate_grad(&db);
        dx
    }
}

impl<F: Scalar> ParamSet<F> for Conv2d<F> {
    fn visit_params<'a>(&'a self, out: &mut Vec<&'a Tensor4<F>>) {
        out.push(&self.weight);
        out.push(&self.bias);
    }

    fn visit_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor4<F>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }

    fn push_param_names(&self, prefix: &str, out: &mut Vec<String>) {
        out.push(format!("{prefix}.weight"));
        out.push(format!("{prefix}.bias"));
    }
}

// ---------------------------------------------------------------------------
// ConvTranspose2d
// ---------------------------------------------------------------------------

/// Transposed convolution, kernel 4, stride 2, padding 1: exact 2x
/// upsampling. Weight layout (in_c, out_c, k, k).
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<F> {
    pub weight: Tensor4<F>,
    pub bias: Tensor4<F>,
    cache: Option<Tensor4<F>>,
}

const TK: usize = 4;
const TS: usize = 2;
const TP: usize = 1;

impl<F: Scalar> ConvTranspose2d<F> {
    pub fn new<R: Rng>(in_c: usize, out_c: usize, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<F>,
    {
        let std = (2.0 / (in_c * TK * TK) as f64).sqrt();
        let mut weight = Tensor4::randn([in_c, out_c, TK, TK], std, rng);
        weight.enable_grad();
        let mut bias = Tensor4::zeros([1, out_c, 1, 1]);
        bias.enable_grad();
        Self { weight, bias, cache: None }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&mut self, x: &Tensor4<F>) -> Result<Tensor4<F>> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor4<F>) -> Result<Tensor4<F>> {
        expect_shape("ConvTranspose2d", x, self.in_channels())?;
        let [bn, in_c, ih, iw] = x.shape();
        let out_c = self.out_channels();
        let (oh, ow) = (ih * TS, iw * TS);
        let mut y = Tensor4::zeros([bn, out_c, oh, ow]);
        for n in 0..bn {
            for ic in 0..in_c {
                for iy in 0..ih {
                    for ix in 0..iw {
                        let v = x.at(n, ic, iy, ix);
                        if v == F::zero() {
                            continue;
                        }
                        for oc in 0..out_c {
                            let w_row = self.weight.index(ic, oc, 0, 0);
                            for ky in 0..TK {
                                let oy = (iy * TS + ky) as isize - TP as isize;
                                if oy < 0 || oy >= oh as isize {
                                    continue;
                                }
                                let y_row = y.index(n, oc, oy as usize, 0);
                                for kx in 0..TK {
                                    let ox = (ix * TS + kx) as isize - TP as isize;
                                    if ox < 0 || ox >= ow as isize {
                                        continue;
                                    }
                                    y.data_mut()[y_row + ox as usize] = y.data()
                                        [y_row + ox as usize]
                                        + v * self.weight.data()[w_row + ky * TK + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
        for n in 0..bn {
            for oc in 0..out_c {
                let b = self.bias.data()[oc];
                let base = y.index(n, oc, 0, 0);
                for i in 0..oh * ow {
                    y.data_mut()[base + i] = y.data()[base + i] + b;
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4<F>) -> Tensor4<F> {
        let x = self.cache.take().expect("ConvTranspose2d::backward without forward");
        let [bn, in_c, ih, iw] = x.shape();
        let out_c = self.out_channels();
        let [_, _, oh, ow] = dy.shape();
        assert_eq!((oh, ow), (ih * TS, iw * TS), "ConvTranspose2d::backward shape");

        let mut dx = Tensor4::zeros([bn, in_c, ih, iw]);
        let mut dw = vec![F::zero(); self.weight.len()];
        let mut db = vec![F::zero(); out_c];
        for n in 0..bn {
            for oc in 0..out_c {
                let base = dy.index(n, oc, 0, 0);
                for i in 0..oh * ow {
                    db[oc] = db[oc] + dy.data()[base + i];
                }
            }
            for ic in 0..in_c {
                for iy in 0..ih {
                    for ix in 0..iw {
                        let xv = x.at(n, ic, iy, ix);
                        let mut acc = F::zero();
                        for oc in 0..out_c {
                            let w_row = self.weight.index(ic, oc, 0, 0);
                            for ky in 0..TK {
                                let oy = (iy * TS + ky) as isize - TP as isize;
                                if oy < 0 || oy >= oh as isize {
                                    continue;
                                }
                                let dy_row = dy.index(n, oc, oy as usize, 0);
                                for kx in 0..TK {
                                    let ox = (ix * TS + kx) as isize - TP as isize;
                                    if ox < 0 || ox >= ow as isize {
                                        continue;
                                    }
                                    let g = dy.data()[dy_row + ox as usize];
                                    acc = acc + g * self.weight.data()[w_row + ky * TK + kx];
                                    dw[w_row + ky * TK + kx] =
                                        dw[w_row + ky * TK + kx] + g * xv;
                                }
                            }
                        }
                        dx.set(n, ic, iy, ix, acc);
                    }
                }
            }
        }
        self.weight.accumulate_grad(&dw);
        self.bias.accumulate_grad(&db);
        dx
    }
}

impl<F: Scalar> ParamSet<F> for ConvTranspose2d<F> {
    fn visit_params<'a>(&'a self, out: &mut Vec<&'a Tensor4<F>>) {
        out.push(&self.weight);
        out.push(&self.bias);
    }

    fn visit_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor4<F>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }

    fn push_param_names(&self, prefix: &str, out: &mut Vec<String>) {
        out.push(format!("{prefix}.weight"));
        out.push(format!("{prefix}.bias"));
    }
}

// ---------------------------------------------------------------------------
// GroupNorm
// ---------------------------------------------------------------------------

/// Group normalization over (C/G, H, W) per sample and group.
#[derive(Debug, Clone)]
pub struct GroupNorm<F> {
    pub gamma: Tensor4<F>,
    pub beta: Tensor4<F>,
    groups: usize,
    eps: f64,
    cache: Option<GnCache<F>>,
}

#[derive(Debug, Clone)]
struct GnCache<F> {
    x_hat: Tensor4<F>,
    rstd: Vec<F>,
}

impl<F: Scalar> GroupNorm<F> {
    /// `groups` is clamped to the channel count so narrow layers still
    /// normalize per channel.
    pub fn new(channels: usize, groups: usize) -> Self {
        let groups = groups.min(channels).max(1);
        assert!(channels % groups == 0, "channels must divide into groups");
        let mut gamma = Tensor4::zeros([1, channels, 1, 1]);
        gamma.data_mut().iter_mut().for_each(|v| *v = F::one());
        gamma.enable_grad();
        let mut beta = Tensor4::zeros([1, channels, 1, 1]);
        beta.enable_grad();
        Self {
            gamma,
            beta,
            groups,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.shape()[1]
    }

    pub fn forward(&mut self, x: &Tensor4<F>) -> Result<Tensor4<F>> {
        let (y, cache) = self.run(x)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor4<F>) -> Result<Tensor4<F>> {
        Ok(self.run(x)?.0)
    }

    fn run(&self, x: &Tensor4<F>) -> Result<(Tensor4<F>, GnCache<F>)> {
        expect_shape("GroupNorm", x, self.channels())?;
        let [bn, c, h, w] = x.shape();
        let cg = c / self.groups;
        let m = cg * h * w;
        let m_f = F::from_f64_c(m as f64);
        let mut x_hat = Tensor4::zeros([bn, c, h, w]);
        let mut y = Tensor4::zeros([bn, c, h, w]);
        let mut rstd = Vec::with_capacity(bn * self.groups);
        for n in 0..bn {
            for g in 0..self.groups {
                let start = x.index(n, g * cg, 0, 0);
                let xs = &x.data()[start..start + m];
                let mean: F = xs.iter().copied().sum::<F>() / m_f;
                let var: F = xs
                    .iter()
                    .map(|&v| (v - mean) * (v - mean))
                    .sum::<F>()
                    / m_f;
                let r = (var + F::from_f64_c(self.eps)).sqrt().recip();
                rstd.push(r);
                for ci in 0..cg {
                    let ch = g * cg + ci;
                    let gamma = self.gamma.data()[ch];
                    let beta = self.beta.data()[ch];
                    let xi = x.index(n, ch, 0, 0);
                    for i in 0..h * w {
                        let xh = (x.data()[xi + i] - mean) * r;
                        x_hat.data_mut()[xi + i] = xh;
                        y.data_mut()[xi + i] = gamma * xh + beta;
                    }
                }
            }
        }
        Ok((y, GnCache { x_hat, rstd }))
    }

    pub fn backward(&mut self, dy: &Tensor4<F>) -> Tensor4<F> {
        let GnCache { x_hat, rstd } =
            self.cache.take().expect("GroupNorm::backward without forward");
        let [bn, c, h, w] = x_hat.shape();
        let cg = c / self.groups;
        let m = cg * h * w;
        let m_f = F::from_f64_c(m as f64);

        let mut dgamma = vec![F::zero(); c];
        let mut dbeta = vec![F::zero(); c];
        for n in 0..bn {
            for ch in 0..c {
                let base = x_hat.index(n, ch, 0, 0);
                for i in 0..h * w {
                    let g = dy.data()[base + i];
                    dgamma[ch] = dgamma[ch] + g * x_hat.data()[base + i];
                    dbeta[ch] = dbeta[ch] + g;
                }
            }
        }

        let mut dx = Tensor4::zeros([bn, c, h, w]);
        for n in 0..bn {
            for g in 0..self.groups {
                let r = rstd[n * self.groups + g];
                // d̂ = dy·γ; dx = r·(d̂ − mean(d̂) − x̂·mean(d̂·x̂))
                let mut sum_dh = F::zero();
                let mut sum_dh_xh = F::zero();
                for ci in 0..cg {
                    let ch = g * cg + ci;
                    let gamma = self.gamma.data()[ch];
                    let base = x_hat.index(n, ch, 0, 0);
                    for i in 0..h * w {
                        let dh = dy.data()[base + i] * gamma;
                        sum_dh = sum_dh + dh;
                        sum_dh_xh = sum_dh_xh + dh * x_hat.data()[base + i];
                    }
                }
                let mean_dh = sum_dh / m_f;
                let mean_dh_xh = sum_dh_xh / m_f;
                for ci in 0..cg {
                    let ch = g * cg + ci;
                    let gamma = self.gamma.data()[ch];
                    let base = x_hat.index(n, ch, 0, 0);
                    for i in 0..h * w {
                        let dh = dy.data()[base + i] * gamma;
                        dx.data_mut()[base + i] =
                            r * (dh - mean_dh - x_hat.data()[base + i] * mean_dh_xh);
                    }
                }
            }
        }
        self.gamma.accumulate_grad(&dgamma);
        self.beta.accumulate_grad(&dbeta);
        dx
    }
}

impl<F: Scalar> ParamSet<F> for GroupNorm<F> {
    fn visit_params<'a>(&'a self, out: &mut Vec<&'a Tensor4<F>>) {
        out.push(&self.gamma);
        out.push(&self.beta);
    }

    fn visit_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor4<F>>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }

    fn push_param_names(&self, prefix: &str, out: &mut Vec<String>) {
        out.push(format!("{prefix}.gamma"));
        out.push(format!("{prefix}.beta"));
    }
}

// ---------------------------------------------------------------------------
// SiLU
// ---------------------------------------------------------------------------

/// x · sigmoid(x).
#[derive(Debug, Clone, Default)]
pub struct SiLu<F> {
    cache: Option<Tensor4<F>>,
}

impl<F: Scalar> SiLu<F> {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor4<F>) -> Tensor4<F> {
        self.cache = Some(x.clone());
        Self::infer(x)
    }

    pub fn infer(x: &Tensor4<F>) -> Tensor4<F> {
        let mut y = x.clone();
        for v in y.data_mut() {
            *v = *v * sigmoid(*v);
        }
        y
    }

    pub fn backward(&mut self, dy: &Tensor4<F>) -> Tensor4<F> {
        let x = self.cache.take().expect("SiLu::backward without forward");
        let mut dx = dy.clone();
        for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
            let s = sigmoid(xv);
            *d = *d * s * (F::one() + xv * (F::one() - s));
        }
        dx
    }
}

#[inline]
fn sigmoid<F: Scalar>(x: F) -> F {
    (F::one() + (-x).exp()).recip()
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

/// Fully connected layer on (n, features, 1, 1) tensors.
#[derive(Debug, Clone)]
pub struct Linear<F> {
    pub weight: Tensor4<F>, // (out, in, 1, 1)
    pub bias: Tensor4<F>,   // (1, out, 1, 1)
    cache: Option<Tensor4<F>>,
}

impl<F: Scalar> Linear<F> {
    pub fn new<R: Rng>(in_f: usize, out_f: usize, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<F>,
    {
        let std = (2.0 / in_f as f64).sqrt();
        let mut weight = Tensor4::randn([out_f, in_f, 1, 1], std, rng);
        weight.enable_grad();
        let mut bias = Tensor4::zeros([1, out_f, 1, 1]);
        bias.enable_grad();
        Self { weight, bias, cache: None }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&mut self, x: &Tensor4<F>) -> Result<Tensor4<F>> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor4<F>) -> Result<Tensor4<F>> {
        expect_shape("Linear", x, self.in_features())?;
        let [bn, in_f, _, _] = x.shape();
        let out_f = self.out_features();
        let mut y = Tensor4::zeros([bn, out_f, 1, 1]);
        for n in 0..bn {
            for o in 0..out_f {
                let mut acc = self.bias.data()[o];
                let w_row = self.weight.index(o, 0, 0, 0);
                let x_row = x.index(n, 0, 0, 0);
                for i in 0..in_f {
                    acc = acc + self.weight.data()[w_row + i] * x.data()[x_row + i];
                }
                y.set(n, o, 0, 0, acc);
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4<F>) -> Tensor4<F> {
        let x = self.cache.take().expect("Linear::backward without forward");
        let [bn, in_f, _, _] = x.shape();
        let out_f = self.out_features();
        let mut dx = Tensor4::zeros([bn, in_f, 1, 1]);
        let mut dw = vec![F::zero(); self.weight.len()];
        let mut db = vec![F::zero(); out_f];
        for n in 0..bn {
            for o in 0..out_f {
                let g = dy.at(n, o, 0, 0);
                if g == F::zero() {
                    continue;
                }
                db[o] = db[o] + g;
                let w_row = self.weight.index(o, 0, 0, 0);
                for i in 0..in_f {
                    dw[w_row + i] = dw[w_row + i] + g * x.at(n, i, 0, 0);
                    let di = dx.index(n, i, 0, 0);
                    dx.data_mut()[di] = dx.data()[di] + g * self.weight.data()[w_row + i];
                }
            }
        }
        self.weight.accumulate_grad(&dw);
        self.bias.accumulate_grad(&db);
        dx
    }
}

impl<F: Scalar> ParamSet<F> for Linear<F> {
    fn visit_params<'a>(&'a self, out: &mut Vec<&'a Tensor4<F>>) {
        out.push(&self.weight);
        out.push(&self.bias);
    }

    fn visit_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor4<F>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }

    fn push_param_names(&self, prefix: &str, out: &mut Vec<String>) {
        out.push(format!("{prefix}.weight"));
        out.push(format!("{prefix}.bias"));
    }
}

// ---------------------------------------------------------------------------
// Resampling, concatenation, embeddings
// ---------------------------------------------------------------------------

/// Nearest-neighbor 2x upsample.
pub fn upsample2x_nearest<F: Scalar>(x: &Tensor4<F>) -> Tensor4<F> {
    let [n, c, h, w] = x.shape();
    let mut y = Tensor4::zeros([n, c, h * 2, w * 2]);
    for ni in 0..n {
        for ci in 0..c {
            for yi in 0..h * 2 {
                for xi in 0..w * 2 {
                    y.set(ni, ci, yi, xi, x.at(ni, ci, yi / 2, xi / 2));
                }
            }
        }
    }
    y
}

/// Input gradient of [`upsample2x_nearest`]: each source pixel collects
/// its 2x2 destination block.
pub fn upsample2x_backward<F: Scalar>(dy: &Tensor4<F>) -> Tensor4<F> {
    let [n, c, oh, ow] = dy.shape();
    let (h, w) = (oh / 2, ow / 2);
    let mut dx = Tensor4::zeros([n, c, h, w]);
    for ni in 0..n {
        for ci in 0..c {
            for yi in 0..oh {
                for xi in 0..ow {
                    let i = dx.index(ni, ci, yi / 2, xi / 2);
                    dx.data_mut()[i] = dx.data()[i] + dy.at(ni, ci, yi, xi);
                }
            }
        }
    }
    dx
}

/// Nearest-neighbor 2x downsample (top-left pick); used to resize the
/// condition latent onto coarser U-Net scales.
pub fn downsample2x_nearest<F: Scalar>(x: &Tensor4<F>) -> Tensor4<F> {
    let [n, c, h, w] = x.shape();
    let mut y = Tensor4::zeros([n, c, h / 2, w / 2]);
    for ni in 0..n {
        for ci in 0..c {
            for yi in 0..h / 2 {
                for xi in 0..w / 2 {
                    y.set(ni, ci, yi, xi, x.at(ni, ci, yi * 2, xi * 2));
                }
            }
        }
    }
    y
}

/// Concatenate along the channel axis.
pub fn concat_channels<F: Scalar>(a: &Tensor4<F>, b: &Tensor4<F>) -> Result<Tensor4<F>> {
    let [na, ca, ha, wa] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(shape_mismatch(
            "concat_channels",
            format!("batch/spatial {:?}", [na, ha, wa]),
            format!("{:?}", [nb, hb, wb]),
        ));
    }
    let mut y = Tensor4::zeros([na, ca + cb, ha, wa]);
    for n in 0..na {
        for c in 0..ca {
            let src = a.index(n, c, 0, 0);
            let dst = y.index(n, c, 0, 0);
            y.data_mut()[dst..dst + ha * wa].copy_from_slice(&a.data()[src..src + ha * wa]);
        }
        for c in 0..cb {
            let src = b.index(n, c, 0, 0);
            let dst = y.index(n, ca + c, 0, 0);
            y.data_mut()[dst..dst + ha * wa].copy_from_slice(&b.data()[src..src + ha * wa]);
        }
    }
    Ok(y)
}

/// Split a channel concatenation back into its two parts.
pub fn split_channels<F: Scalar>(t: &Tensor4<F>, c_first: usize) -> (Tensor4<F>, Tensor4<F>) {
    let [n, c, h, w] = t.shape();
    assert!(c_first <= c, "split point beyond channel count");
    let mut a = Tensor4::zeros([n, c_first, h, w]);
    let mut b = Tensor4::zeros([n, c - c_first, h, w]);
    for ni in 0..n {
        for ci in 0..c_first {
            let src = t.index(ni, ci, 0, 0);
            let dst = a.index(ni, ci, 0, 0);
            a.data_mut()[dst..dst + h * w].copy_from_slice(&t.data()[src..src + h * w]);
        }
        for ci in c_first..c {
            let src = t.index(ni, ci, 0, 0);
            let dst = b.index(ni, ci - c_first, 0, 0);
            b.data_mut()[dst..dst + h * w].copy_from_slice(&t.data()[src..src + h * w]);
        }
    }
    (a, b)
}

/// Sinusoidal timestep embedding (sin half then cos half), the standard
/// transformer/DDPM construction with base period 10000.
pub fn timestep_embedding<F: Scalar>(t: usize, dim: usize) -> Tensor4<F> {
    assert!(dim >= 2 && dim % 2 == 0, "embedding dim must be even");
    let half = dim / 2;
    let mut out = Tensor4::zeros([1, dim, 1, 1]);
    for i in 0..half {
        let freq = (-(10000.0f64.ln()) * i as f64 / half as f64).exp();
        let ang = t as f64 * freq;
        out.data_mut()[i] = F::from_f64_c(ang.sin());
        out.data_mut()[half + i] = F::from_f64_c(ang.cos());
    }
    out
}
