//! The generator and discriminator stacks.

use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    Activation, ActivationLayer, BatchNorm, Buffer, Conv2d, Dense, Dropout, Layer, Mode, Param,
    Reshape, Upsample2x,
};
use super::real::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Ordered stack of layers.
pub struct Sequential<T: Real> {
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Real> Default for Sequential<T> {
    fn default() -> Self {
        Self { layers: Vec::new() }
    }
}

impl<T: Real> Sequential<T> {
    pub fn push(&mut self, layer: impl Layer<T> + 'static) {
        self.layers.push(Box::new(layer));
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode)?;
            h.ensure_finite("forward pass")?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
            g.ensure_finite("backward pass")?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn buffers(&self) -> Vec<&Buffer<T>> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }

    /// Every named tensor (parameters, then buffers) in layer order.
    pub fn state(&self) -> Vec<(&str, &Tensor<T>)> {
        let mut out: Vec<(&str, &Tensor<T>)> = Vec::new();
        for l in &self.layers {
            out.extend(l.params().into_iter().map(|p| (p.name.as_str(), &p.value)));
            out.extend(l.buffers().into_iter().map(|b| (b.name.as_str(), &b.value)));
        }
        out
    }

    /// Overwrites every named tensor from `tensors`; each must be present with a matching shape.
    pub fn load_state(&mut self, tensors: &BTreeMap<String, Tensor<T>>) -> Result<()> {
        for l in &mut self.layers {
            for p in l.params_mut() {
                assign(&p.name, &mut p.value, tensors)?;
            }
            for b in l.buffers_mut() {
                assign(&b.name, &mut b.value, tensors)?;
            }
        }
        Ok(())
    }

    /// Hash of every parameter and buffer bit pattern.
    pub fn digest(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (name, t) in self.state() {
            name.hash(&mut h);
            for v in t.data() {
                v.f64().to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

fn assign<T: Real>(name: &str, dst: &mut Tensor<T>, src: &BTreeMap<String, Tensor<T>>) -> Result<()> {
    let t = src.get(name).ok_or_else(|| Error::Checkpoint {
        tensor: name.to_string(),
        message: "missing from checkpoint".into(),
    })?;
    if t.shape() != dst.shape() {
        return Err(Error::Checkpoint {
            tensor: name.to_string(),
            message: format!("shape {:?} does not match network {:?}", t.shape(), dst.shape()),
        });
    }
    *dst = t.clone();
    Ok(())
}

/// Generator layout: dense → ReLU → reshape to side×side×c0 → three
/// (upsample, conv, batch-norm, ReLU) blocks → conv to RGB → tanh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GeneratorConfig {
    pub input_dim: usize,
    pub base_side: usize,
    pub channels: [usize; 4],
    pub out_channels: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            input_dim: 312,
            base_side: 8,
            channels: [1024, 512, 256, 128],
            out_channels: 3,
        }
    }
}

impl GeneratorConfig {
    /// Same topology with every hidden channel count divided by `divisor`.
    pub fn width_divided(divisor: usize) -> Self {
        let base = Self::default();
        Self {
            channels: base.channels.map(|c| (c / divisor.max(1)).max(1)),
            ..base
        }
    }

    pub fn dense_outputs(&self) -> usize {
        self.base_side * self.base_side * self.channels[0]
    }

    pub fn output_side(&self) -> usize {
        self.base_side * 8
    }
}

pub struct GeneratorNet<T: Real = f32> {
    pub config: GeneratorConfig,
    pub net: Sequential<T>,
}

impl<T: Real> GeneratorNet<T> {
    /// Fresh network with N(0, 0.02) weights, zero biases, γ = 1, β = 0.
    pub fn new(config: GeneratorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.channels;
        let mut net = Sequential::default();
        net.push(Dense::new("gen.dense", config.input_dim, config.dense_outputs(), &mut rng));
        net.push(ActivationLayer::new(Activation::Relu));
        net.push(Reshape::new(&[config.base_side, config.base_side, c[0]]));
        for i in 0..3 {
            net.push(Upsample2x::default());
            net.push(Conv2d::new(&format!("gen.conv{}", i + 1), c[i], c[i + 1], 1, &mut rng));
            net.push(BatchNorm::new(&format!("gen.bn{}", i + 1), c[i + 1]));
            net.push(ActivationLayer::new(Activation::Relu));
        }
        net.push(Conv2d::new("gen.conv_out", c[3], config.out_channels, 1, &mut rng));
        net.push(ActivationLayer::new(Activation::Tanh));
        Self { config, net }
    }

    /// (batch, input_dim) → (batch, side, side, 3) in [−1, 1].
    pub fn forward(&mut self, csi: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        csi.expect_shape(&[csi.batch(), self.config.input_dim], "generator input")?;
        self.net.forward(csi, mode)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.net.backward(grad)
    }
}

impl GeneratorConfig {
    /// Recovers the layout from checkpoint tensor shapes.
    pub fn infer_from<T: Real>(tensors: &BTreeMap<String, Tensor<T>>) -> Result<Self> {
        let shape = |name: &str, rank: usize| -> Result<Vec<usize>> {
            let t = tensors.get(name).ok_or_else(|| Error::Checkpoint {
                tensor: name.into(),
                message: "missing from checkpoint".into(),
            })?;
            if t.shape().len() != rank {
                return Err(Error::Checkpoint {
                    tensor: name.into(),
                    message: format!("expected rank {rank}, got {:?}", t.shape()),
                });
            }
            Ok(t.shape().to_vec())
        };
        let dense = shape("gen.dense.weight", 2)?;
        let c1 = shape("gen.conv1.weight", 4)?;
        let c2 = shape("gen.conv2.weight", 4)?;
        let c3 = shape("gen.conv3.weight", 4)?;
        let out = shape("gen.conv_out.weight", 4)?;
        let c0 = c1[2];
        let side2 = dense[1] / c0.max(1);
        let side = (side2 as f64).sqrt().round() as usize;
        if side * side * c0 != dense[1] {
            return Err(Error::Checkpoint {
                tensor: "gen.dense.weight".into(),
                message: format!("{} outputs cannot reshape to side×side×{c0}", dense[1]),
            });
        }
        Ok(Self {
            input_dim: dense[0],
            base_side: side,
            channels: [c0, c2[2], c3[2], out[2]],
            out_channels: out[3],
        })
    }
}

/// Discriminator layout: four (stride-2 conv, [batch-norm], LeakyReLU 0.2,
/// dropout) blocks, the first without batch norm → flatten → dense(1) → sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiscriminatorConfig {
    pub image_side: usize,
    pub in_channels: usize,
    pub filters: [usize; 4],
    pub dropout: f64,
    pub leak: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            image_side: 64,
            in_channels: 3,
            filters: [32, 64, 128, 256],
            dropout: 0.25,
            leak: 0.2,
        }
    }
}

impl DiscriminatorConfig {
    pub fn width_divided(divisor: usize) -> Self {
        let base = Self::default();
        Self {
            filters: base.filters.map(|c| (c / divisor.max(1)).max(1)),
            ..base
        }
    }

    pub fn flat_features(&self) -> usize {
        let mut side = self.image_side;
        for _ in 0..4 {
            side = side.div_ceil(2);
        }
        side * side * self.filters[3]
    }
}

pub struct DiscriminatorNet<T: Real = f32> {
    pub config: DiscriminatorConfig,
    pub net: Sequential<T>,
}

impl<T: Real> DiscriminatorNet<T> {
    pub fn new(config: DiscriminatorConfig, seed: u64, dropout_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = config.filters;
        let mut net = Sequential::default();
        let mut c_in = config.in_channels;
        for i in 0..4 {
            net.push(Conv2d::new(&format!("disc.conv{}", i + 1), c_in, f[i], 2, &mut rng));
            if i > 0 {
                net.push(BatchNorm::new(&format!("disc.bn{}", i + 1), f[i]));
            }
            net.push(ActivationLayer::new(Activation::LeakyRelu(config.leak)));
            net.push(Dropout::new(config.dropout, dropout_seed.wrapping_add(i as u64)));
            c_in = f[i];
        }
        net.push(Reshape::flatten());
        net.push(Dense::new("disc.dense", config.flat_features(), 1, &mut rng));
        net.push(ActivationLayer::new(Activation::Sigmoid));
        Self { config, net }
    }

    /// (batch, side, side, 3) → (batch, 1) probabilities of "real".
    pub fn forward(&mut self, images: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let s = self.config.image_side;
        images.expect_shape(&[images.batch(), s, s, self.config.in_channels], "discriminator input")?;
        self.net.forward(images, mode)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.net.backward(grad)
    }
}
