//! Small CPU neural-network engine: NHWC tensors, the generator/discriminator
//! layer set with explicit backward passes, MSE/BCE losses and Adam.

mod adam;
mod checkpoint;
mod conv;
mod layers;
mod loss;
mod nets;
mod real;
mod tensor;

pub use adam::{AdamConfig, AdamState, Moments};
pub use checkpoint::{adam_from_tensors, adam_to_tensors, Checkpoint, ADAM_MAGIC, WEIGHTS_MAGIC};
pub use conv::{conv2d_backward, conv2d_forward};
pub use layers::{
    Activation, ActivationLayer, BatchNorm, Buffer, Conv2d, Dense, Dropout, Layer, Mode, Param,
    Reshape, Upsample2x, BN_EPS, BN_MOMENTUM, INIT_STD,
};
pub use loss::{bce_loss, mse_loss, P_CLAMP};
pub use nets::{DiscriminatorConfig, DiscriminatorNet, GeneratorConfig, GeneratorNet, Sequential};
pub use real::Real;
pub use tensor::Tensor;

/// pixel / 127.5 − 1.
pub fn normalize_pixel(p: u8) -> f32 {
    p as f32 / 127.5 - 1.0
}

/// (x + 1)·127.5, rounded half up and clamped to [0, 255].
pub fn denormalize_pixel(x: f32) -> u8 {
    ((x as f64 + 1.0) * 127.5 + 0.5).floor().clamp(0.0, 255.0) as u8
}
