//! Finite-difference gradient checks for every layer in the vocabulary
//! and a multi-layer composition.
//!
//! The oracle is a central difference of the scalar loss L = Σ y⊙r for a
//! fixed random projection r; it exercises parameter gradients and input
//! gradients together. f64 instances are checked at 1e-6, f32 instances
//! at the 1e-3 the 32-bit training path promises.

use ksyn_core::nn::{
    concat_channels, split_channels, upsample2x_backward, upsample2x_nearest, Conv2d,
    ConvTranspose2d, GroupNorm, Linear, ParamSet, Scalar, SiLu, Tensor4,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// Dot-product loss against a fixed projection, accumulated in f64.
fn loss<F: Scalar>(y: &Tensor4<F>, r: &Tensor4<F>) -> f64 {
    y.data()
        .iter()
        .zip(r.data())
        .map(|(&a, &b)| a.to_f64_c() * b.to_f64_c())
        .sum()
}

/// Aggregate relative error between two gradient vectors.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-300)
}

/// Central-difference check over all parameters and the input tensor.
fn gradcheck<F, M, Fw, Bw>(model: &M, x: &Tensor4<F>, fw: Fw, bw: Bw, h: f64, tol: f64, label: &str)
where
    F: Scalar,
    M: Clone + ParamSet<F>,
    Fw: Fn(&mut M, &Tensor4<F>) -> Tensor4<F>,
    Bw: Fn(&mut M, &Tensor4<F>) -> Tensor4<F>,
    StandardNormal: Distribution<F>,
{
    let mut rng = ChaCha12Rng::seed_from_u64(0xFEED);
    let mut work = model.clone();
    let y = fw(&mut work, x);
    let r = Tensor4::<F>::randn(y.shape(), 1.0, &mut rng);
    work.zero_grads();
    let dx = bw(&mut work, &r);

    // Analytic gradient vector: params then input.
    let mut analytic: Vec<f64> = Vec::new();
    for p in work.params() {
        let g = p.grad().expect("parameter gradient missing");
        analytic.extend(g.iter().map(|v| v.to_f64_c()));
    }
    analytic.extend(dx.data().iter().map(|v| v.to_f64_c()));

    // Finite differences.
    let mut numeric: Vec<f64> = Vec::new();
    let n_params = model.params().len();
    let hf = F::from_f64_c(h);
    for k in 0..n_params {
        let len = model.params()[k].len();
        for i in 0..len {
            let mut plus = model.clone();
            plus.params_mut()[k].data_mut()[i] = plus.params()[k].data()[i] + hf;
            let lp = loss(&fw(&mut plus, x), &r);
            let mut minus = model.clone();
            minus.params_mut()[k].data_mut()[i] = minus.params()[k].data()[i] - hf;
            let lm = loss(&fw(&mut minus, x), &r);
            numeric.push((lp - lm) / (2.0 * h));
        }
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] = xp.data()[i] + hf;
        let lp = loss(&fw(&mut work.clone(), &xp), &r);
        let mut xm = x.clone();
        xm.data_mut()[i] = xm.data()[i] - hf;
        let lm = loss(&fw(&mut work.clone(), &xm), &r);
        numeric.push((lp - lm) / (2.0 * h));
    }

    let err = rel_err(&numeric, &analytic);
    assert!(err < tol, "{label}: relative gradient error {err:.3e} >= {tol:.1e}");
}

fn randn<F: Scalar>(shape: [usize; 4], seed: u64) -> Tensor4<F>
where
    StandardNormal: Distribution<F>,
{
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    Tensor4::randn(shape, 1.0, &mut rng)
}

#[test]
fn conv_stride1_f64() {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let conv = Conv2d::<f64>::new(2, 3, 3, 1, &mut rng);
    let x = randn([2, 2, 5, 6], 11);
    gradcheck(
        &conv,
        &x,
        |m, x| m.forward(x).unwrap(),
        |m, dy| m.backward(dy),
        1e-5,
        1e-6,
        "conv3x3 s1 f64",
    );
}

#[test]
fn conv_stride2_f64() {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let conv = Conv2d::<f64>::new(3, 2, 3, 2, &mut rng);
    let x = randn([1, 3, 6, 8], 12);
    gradcheck(
        &conv,
        &x,
        |m, x| m.forward(x).unwrap(),
        |m, dy| m.backward(dy),
        1e-5,
        1e-6,
        "conv3x3 s2 f64",
    );
}

#[test]
fn conv_stride1_f32_at_32bit_tolerance() {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let conv = Conv2d::<f32>::new(2, 2, 3, 1, &mut rng);
    let x = randn([1, 2, 5, 5], 13);
    gradcheck(
        &conv,
        &x,
        |m, x| m.forward(x).unwrap(),
        |m, dy| m.backward(dy),
        1e-3,
        1e-3,
        "conv3x3 s1 f32",
    );
}

#[test]
fn transposed_conv_f64() {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let t = ConvTranspose2d::<f64>::new(2, 3, &mut rng);
    let x = randn([1, 2, 3, 4], 14);
    gradcheck(
        &t,
        &x,
        |m, x| m.forward(x).unwrap(),
        |m, dy| m.backward(dy),
        1e-5,
        1e-6,
        "tconv s2 f64",
    );
}

#[test]
fn group_norm_f64() {
    let gn = GroupNorm::<f64>::new(4, 2);
    let x = randn([2, 4, 3, 3], 15);
    gradcheck(
        &gn,
        &x,
        |m, x| m.forward(x).unwrap(),
        |m, dy| m.backward(dy),
        1e-5,
        1e-6,
        "group-norm f64",
    );
}

#[test]
fn linear_f64() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let lin = Linear::<f64>::new(4, 3, &mut rng);
    let x = randn([3, 4, 1, 1], 16);
    gradcheck(
        &lin,
        &x,
        |m, x| m.forward(x).unwrap(),
        |m, dy| m.backward(dy),
        1e-5,
        1e-6,
        "linear f64",
    );
}

#[test]
fn silu_f64() {
    // SiLU has no parameters; wrap it in a zero-param model.
    #[derive(Clone)]
    struct Wrap(SiLu<f64>);
    impl ParamSet<f64> for Wrap {
        fn visit_params<'a>(&'a self, _out: &mut Vec<&'a Tensor4<f64>>) {}
        fn visit_params_mut<'a>(&'a mut self, _out: &mut Vec<&'a mut Tensor4<f64>>) {}
        fn push_param_names(&self, _prefix: &str, _out: &mut Vec<String>) {}
    }
    let x = randn([1, 3, 4, 4], 17);
    gradcheck(
        &Wrap(SiLu::new()),
        &x,
        |m, x| m.0.forward(x),
        |m, dy| m.0.backward(dy),
        1e-5,
        1e-6,
        "silu f64",
    );
}

#[test]
fn upsample_backward_is_exact_adjoint() {
    // ⟨up(x), y⟩ = ⟨x, upᵀ(y)⟩ bit-for-bit in f64 on small grids.
    let x = randn::<f64>([1, 2, 3, 4], 18);
    let y = randn::<f64>([1, 2, 6, 8], 19);
    let lhs: f64 = upsample2x_nearest(&x)
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| a * b)
        .sum();
    let rhs: f64 = x
        .data()
        .iter()
        .zip(upsample2x_backward(&y).data())
        .map(|(a, b)| a * b)
        .sum();
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
}

/// Three-layer encoder-style stack: conv s2 → group-norm → SiLU →
/// transposed conv → SiLU → conv s1, with a channel concat of the input
/// on the way out. Covers composition and concat/split gradients.
#[derive(Clone)]
struct Stack {
    conv_in: Conv2d<f64>,
    gn: GroupNorm<f64>,
    act1: SiLu<f64>,
    up: ConvTranspose2d<f64>,
    act2: SiLu<f64>,
    conv_out: Conv2d<f64>,
    split_at: usize,
}

impl Stack {
    fn new(rng: &mut ChaCha12Rng) -> Self {
        Self {
            conv_in: Conv2d::new(2, 4, 3, 2, rng),
            gn: GroupNorm::new(4, 2),
            act1: SiLu::new(),
            up: ConvTranspose2d::new(4, 3, rng),
            act2: SiLu::new(),
            conv_out: Conv2d::new(5, 2, 3, 1, rng),
            split_at: 3,
        }
    }

    fn forward(&mut self, x: &Tensor4<f64>) -> Tensor4<f64> {
        let h = self.conv_in.forward(x).unwrap();
        let h = self.gn.forward(&h).unwrap();
        let h = self.act1.forward(&h);
        let h = self.up.forward(&h).unwrap();
        let h = self.act2.forward(&h);
        let cat = concat_channels(&h, x).unwrap();
        self.conv_out.forward(&cat).unwrap()
    }

    fn backward(&mut self, dy: &Tensor4<f64>) -> Tensor4<f64> {
        let dcat = self.conv_out.backward(dy);
        let (dh, dx_skip) = split_channels(&dcat, self.split_at);
        let dh = self.act2.backward(&dh);
        let dh = self.up.backward(&dh);
        let dh = self.act1.backward(&dh);
        let dh = self.gn.backward(&dh);
        let mut dx = self.conv_in.backward(&dh);
        for (a, b) in dx.data_mut().iter_mut().zip(dx_skip.data()) {
            *a += *b;
        }
        dx
    }
}

impl ParamSet<f64> for Stack {
    fn visit_params<'a>(&'a self, out: &mut Vec<&'a Tensor4<f64>>) {
        self.conv_in.visit_params(out);
        self.gn.visit_params(out);
        self.up.visit_params(out);
        self.conv_out.visit_params(out);
    }

    fn visit_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor4<f64>>) {
        self.conv_in.visit_params_mut(out);
        self.gn.visit_params_mut(out);
        self.up.visit_params_mut(out);
        self.conv_out.visit_params_mut(out);
    }

    fn push_param_names(&self, prefix: &str, out: &mut Vec<String>) {
        self.conv_in.push_param_names(&format!("{prefix}conv_in"), out);
        self.gn.push_param_names(&format!("{prefix}gn"), out);
        self.up.push_param_names(&format!("{prefix}up"), out);
        self.conv_out.push_param_names(&format!("{prefix}conv_out"), out);
    }
}

#[test]
fn three_layer_stack_end_to_end_f64() {
    let mut rng = ChaCha12Rng::seed_from_u64(6);
    let stack = Stack::new(&mut rng);
    let x = randn([1, 2, 4, 4], 20);
    gradcheck(
        &stack,
        &x,
        |m, x| m.forward(x),
        |m, dy| m.backward(dy),
        1e-5,
        1e-6,
        "3-layer stack f64",
    );
}

#[test]
fn forward_is_deterministic() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let mut conv = Conv2d::<f32>::new(2, 4, 3, 1, &mut rng);
    let x = randn::<f32>([2, 2, 8, 8], 21);
    let y1 = conv.forward(&x).unwrap();
    let y2 = conv.forward(&x).unwrap();
    assert_eq!(y1.data(), y2.data());
}
