//! Layer set of the generator and discriminator, each with a hand-written
//! backward pass. Layers cache what their backward pass needs during forward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::conv::{conv2d_backward, conv2d_forward, KERNEL};
use super::real::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Execution mode of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, dropout on, running statistics updated.
    Train,
    /// Training-time behaviour without touching running statistics; used for
    /// a network that is held fixed while gradients flow through it.
    Frozen,
    /// Running statistics, dropout off.
    Infer,
}

impl Mode {
    fn batch_stats(self) -> bool {
        !matches!(self, Mode::Infer)
    }
}

#[derive(Debug, Clone)]
pub struct Param<T: Real> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    fn accumulate(&mut self, g: &Tensor<T>) {
        for (a, &b) in self.grad.data_mut().iter_mut().zip(g.data()) {
            *a = *a + b;
        }
    }
}

/// Non-trainable named state such as batch-norm running statistics.
#[derive(Debug, Clone)]
pub struct Buffer<T: Real> {
    pub name: String,
    pub value: Tensor<T>,
}

pub trait Layer<T: Real>: Send {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;

    /// Propagates `grad` (d loss / d output) to the input, adding parameter
    /// gradients into each [`Param::grad`].
    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        Vec::new()
    }
}

fn cached<'a, T: Real>(c: &'a Option<Tensor<T>>, layer: &str) -> Result<&'a Tensor<T>> {
    c.as_ref()
        .ok_or_else(|| Error::invalid(format!("{layer}: backward called before forward")))
}

fn normal_init<T: Real>(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("valid std");
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(dist.sample(rng))).collect();
    Tensor::new(shape, data).expect("shape product matches")
}

/// Standard deviation of the normal weight initializer.
pub const INIT_STD: f64 = 0.02;

pub struct Dense<T: Real> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::from_params(
            Param::new(format!("{name}.weight"), normal_init(&[inputs, outputs], INIT_STD, rng)),
            Param::new(format!("{name}.bias"), Tensor::zeros(&[outputs])),
        )
    }

    pub fn from_params(weight: Param<T>, bias: Param<T>) -> Self {
        Self {
            weight,
            bias,
            input: None,
        }
    }

    fn dims(&self) -> (usize, usize) {
        let s = self.weight.value.shape();
        (s[0], s[1])
    }
}

impl<T: Real> Layer<T> for Dense<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (n_in, n_out) = self.dims();
        let b = x.batch();
        x.expect_shape(&[b, n_in], "dense input")?;
        let mut out = Vec::with_capacity(b * n_out);
        for _ in 0..b {
            out.extend_from_slice(self.bias.value.data());
        }
        T::gemm(
            b,
            n_in,
            n_out,
            T::one(),
            x.data(),
            (n_in as isize, 1),
            self.weight.value.data(),
            (n_out as isize, 1),
            T::one(),
            &mut out,
            n_out,
        );
        self.input = Some(x.clone());
        Tensor::new(&[b, n_out], out)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let (n_in, n_out) = self.dims();
        let x = cached(&self.input, "dense")?;
        let b = x.batch();
        grad.expect_shape(&[b, n_out], "dense grad")?;
        // dW += Xᵀ·dY
        T::gemm(
            n_in,
            b,
            n_out,
            T::one(),
            x.data(),
            (1, n_in as isize),
            grad.data(),
            (n_out as isize, 1),
            T::one(),
            self.weight.grad.data_mut(),
            n_out,
        );
        for row in grad.data().chunks_exact(n_out) {
            for (acc, &v) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *acc = *acc + v;
            }
        }
        // dX = dY·Wᵀ
        let mut dx = vec![T::zero(); b * n_in];
        T::gemm(
            b,
            n_out,
            n_in,
            T::one(),
            grad.data(),
            (n_out as isize, 1),
            self.weight.value.data(),
            (1, n_out as isize),
            T::zero(),
            &mut dx,
            n_in,
        );
        Tensor::new(&[b, n_in], dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub struct Conv2d<T: Real> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    input: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(name: &str, c_in: usize, c_out: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::from_params(
            Param::new(
                format!("{name}.weight"),
                normal_init(&[KERNEL, KERNEL, c_in, c_out], INIT_STD, rng),
            ),
            Param::new(format!("{name}.bias"), Tensor::zeros(&[c_out])),
            stride,
        )
    }

    pub fn from_params(weight: Param<T>, bias: Param<T>, stride: usize) -> Self {
        Self {
            weight,
            bias,
            stride,
            input: None,
        }
    }
}

impl<T: Real> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = conv2d_forward(x, &self.weight.value, &self.bias.value, self.stride)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = cached(&self.input, "conv2d")?;
        let (dx, dw, db) = conv2d_backward(x, &self.weight.value, grad, self.stride)?;
        self.weight.accumulate(&dw);
        self.bias.accumulate(&db);
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub const BN_MOMENTUM: f64 = 0.8;
pub const BN_EPS: f64 = 1e-5;

/// Per-channel normalization over every axis but the last.
pub struct BatchNorm<T: Real> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Buffer<T>,
    pub running_var: Buffer<T>,
    cache: Option<BnCache<T>>,
}

struct BnCache<T: Real> {
    x_hat: Tensor<T>,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self::from_parts(
            Param::new(format!("{name}.gamma"), Tensor::full(&[channels], T::one())),
            Param::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            Buffer {
                name: format!("{name}.running_mean"),
                value: Tensor::zeros(&[channels]),
            },
            Buffer {
                name: format!("{name}.running_var"),
                value: Tensor::full(&[channels], T::one()),
            },
        )
    }

    pub fn from_parts(gamma: Param<T>, beta: Param<T>, running_mean: Buffer<T>, running_var: Buffer<T>) -> Self {
        Self {
            gamma,
            beta,
            running_mean,
            running_var,
            cache: None,
        }
    }

    fn channels(&self) -> usize {
        self.gamma.value.len()
    }
}

impl<T: Real> Layer<T> for BatchNorm<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let c = self.channels();
        if x.shape().last() != Some(&c) {
            return Err(Error::invalid(format!(
                "batchnorm expects {c} channels, got shape {:?}",
                x.shape()
            )));
        }
        let per_channel = x.len() / c;
        let (mean, var) = if mode.batch_stats() {
            if x.batch() < 2 {
                return Err(Error::invalid("batchnorm needs a batch of at least 2 in training mode"));
            }
            let mut mean = vec![0.0f64; c];
            for row in x.data().chunks_exact(c) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v.f64();
                }
            }
            mean.iter_mut().for_each(|m| *m /= per_channel as f64);
            let mut var = vec![0.0f64; c];
            for row in x.data().chunks_exact(c) {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    let d = v.f64() - m;
                    *s += d * d;
                }
            }
            var.iter_mut().for_each(|s| *s /= per_channel as f64);
            if mode == Mode::Train {
                let keep = BN_MOMENTUM;
                for (r, m) in self.running_mean.value.data_mut().iter_mut().zip(&mean) {
                    *r = T::lit(keep * r.f64() + (1.0 - keep) * m);
                }
                for (r, v) in self.running_var.value.data_mut().iter_mut().zip(&var) {
                    *r = T::lit(keep * r.f64() + (1.0 - keep) * v);
                }
            }
            (mean, var)
        } else {
            (
                self.running_mean.value.data().iter().map(|v| v.f64()).collect(),
                self.running_var.value.data().iter().map(|v| v.f64()).collect::<Vec<_>>(),
            )
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut x_hat = Vec::with_capacity(x.len());
        let mut out = Vec::with_capacity(x.len());
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        for row in x.data().chunks_exact(c) {
            for ch in 0..c {
                let h = T::lit((row[ch].f64() - mean[ch]) * inv_std[ch]);
                x_hat.push(h);
                out.push(gamma[ch] * h + beta[ch]);
            }
        }
        self.cache = Some(BnCache {
            x_hat: Tensor::new(x.shape(), x_hat)?,
            inv_std,
            batch_stats: mode.batch_stats(),
        });
        Tensor::new(x.shape(), out)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::invalid("batchnorm: backward called before forward"))?;
        let c = self.channels();
        grad.expect_shape(cache.x_hat.shape(), "batchnorm grad")?;
        let n = (grad.len() / c) as f64;
        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dy_xhat = vec![0.0f64; c];
        for (g, h) in grad.data().chunks_exact(c).zip(cache.x_hat.data().chunks_exact(c)) {
            for ch in 0..c {
                sum_dy[ch] += g[ch].f64();
                sum_dy_xhat[ch] += g[ch].f64() * h[ch].f64();
            }
        }
        for ch in 0..c {
            let gg = &mut self.gamma.grad.data_mut()[ch];
            *gg = *gg + T::lit(sum_dy_xhat[ch]);
            let bg = &mut self.beta.grad.data_mut()[ch];
            *bg = *bg + T::lit(sum_dy[ch]);
        }
        let gamma = self.gamma.value.data();
        let mut dx = Vec::with_capacity(grad.len());
        for (g, h) in grad.data().chunks_exact(c).zip(cache.x_hat.data().chunks_exact(c)) {
            for ch in 0..c {
                let scale = gamma[ch].f64() * cache.inv_std[ch];
                let v = if cache.batch_stats {
                    scale * (g[ch].f64() - sum_dy[ch] / n - h[ch].f64() * sum_dy_xhat[ch] / n)
                } else {
                    scale * g[ch].f64()
                };
                dx.push(T::lit(v));
            }
        }
        Tensor::new(grad.shape(), dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::LeakyRelu(a) => {
                if x > T::zero() {
                    x
                } else {
                    x * T::lit(a)
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => {
                // split by sign so exp never overflows
                if x >= T::zero() {
                    T::one() / (T::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (T::one() + e)
                }
            }
        }
    }

    // Derivative expressed through the input x and the output y.
    fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu(a) => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::lit(a)
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
        }
    }
}

pub struct ActivationLayer<T: Real> {
    pub kind: Activation,
    io: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Real> ActivationLayer<T> {
    pub fn new(kind: Activation) -> Self {
        Self { kind, io: None }
    }
}

impl<T: Real> Layer<T> for ActivationLayer<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let kind = self.kind;
        let y = x.map(|v| kind.apply(v));
        self.io = Some((x.clone(), y.clone()));
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let (x, y) = self
            .io
            .as_ref()
            .ok_or_else(|| Error::invalid("activation: backward called before forward"))?;
        grad.expect_shape(x.shape(), "activation grad")?;
        let kind = self.kind;
        let data = grad
            .data()
            .iter()
            .zip(x.data().iter().zip(y.data()))
            .map(|(&g, (&xv, &yv))| g * kind.derivative(xv, yv))
            .collect();
        Tensor::new(grad.shape(), data)
    }
}

/// Inverted dropout with a private, seeded mask stream.
pub struct Dropout<T: Real> {
    pub rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<T>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(rate: f64, seed: u64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
        Self {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        }
    }
}

impl<T: Real> Layer<T> for Dropout<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Infer || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep = T::lit(1.0 / (1.0 - self.rate));
        let rate = self.rate;
        let mask: Vec<T> = (0..x.len())
            .map(|_| {
                if self.rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        self.mask = Some(mask);
        Tensor::new(x.shape(), data)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        match &self.mask {
            None => Ok(grad.clone()),
            Some(mask) => {
                if mask.len() != grad.len() {
                    return Err(Error::invalid("dropout grad does not match the cached mask"));
                }
                let data = grad.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
                Tensor::new(grad.shape(), data)
            }
        }
    }
}

/// Nearest-neighbour 2× upsampling of an NHWC tensor.
#[derive(Default)]
pub struct Upsample2x {
    in_shape: Option<Vec<usize>>,
}

impl<T: Real> Layer<T> for Upsample2x {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let &[b, h, w, c] = x.shape() else {
            return Err(Error::invalid(format!("upsample expects NHWC, got {:?}", x.shape())));
        };
        let mut out = Vec::with_capacity(x.len() * 4);
        for n in 0..b {
            for y in 0..h {
                let row = &x.data()[((n * h + y) * w) * c..][..w * c];
                for _ in 0..2 {
                    for px in row.chunks_exact(c) {
                        out.extend_from_slice(px);
                        out.extend_from_slice(px);
                    }
                }
            }
        }
        self.in_shape = Some(x.shape().to_vec());
        Tensor::new(&[b, 2 * h, 2 * w, c], out)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .in_shape
            .clone()
            .ok_or_else(|| Error::invalid("upsample: backward called before forward"))?;
        let [b, h, w, c] = shape[..] else { unreachable!() };
        grad.expect_shape(&[b, 2 * h, 2 * w, c], "upsample grad")?;
        let mut dx = vec![T::zero(); b * h * w * c];
        let g = grad.data();
        for n in 0..b {
            for y in 0..2 * h {
                for x in 0..2 * w {
                    let src = &g[((n * 2 * h + y) * 2 * w + x) * c..][..c];
                    let dst = &mut dx[((n * h + y / 2) * w + x / 2) * c..][..c];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = *d + s;
                    }
                }
            }
        }
        Tensor::new(&shape, dx)
    }
}

/// Reinterprets the per-sample shape; `target` excludes the batch axis.
/// An empty target flattens.
pub struct Reshape {
    target: Vec<usize>,
    in_shape: Option<Vec<usize>>,
}

impl Reshape {
    pub fn new(target: &[usize]) -> Self {
        Self {
            target: target.to_vec(),
            in_shape: None,
        }
    }

    pub fn flatten() -> Self {
        Self::new(&[])
    }
}

impl<T: Real> Layer<T> for Reshape {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let b = x.batch();
        let mut shape = vec![b];
        if self.target.is_empty() {
            shape.push(x.len() / b.max(1));
        } else {
            shape.extend_from_slice(&self.target);
        }
        self.in_shape = Some(x.shape().to_vec());
        x.clone().reshaped(&shape)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .in_shape
            .as_ref()
            .ok_or_else(|| Error::invalid("reshape: backward called before forward"))?;
        grad.clone().reshaped(shape)
    }
}
