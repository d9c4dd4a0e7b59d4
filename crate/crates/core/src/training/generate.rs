use crate::codec::CsiFeatureVector;
use crate::error::{Error, Result};
use crate::nn::{denormalize_pixel, Checkpoint, GeneratorConfig, GeneratorNet, Mode, Tensor};
use crate::scene::{Image, IMAGE_SIDE};

const CHUNK: usize = 32;

/// Rebuilds the generator a checkpoint describes.
pub fn load_generator(ck: &Checkpoint) -> Result<GeneratorNet> {
    let map = ck.tensor_map();
    let config = GeneratorConfig::infer_from(&map)?;
    if config.output_side() != IMAGE_SIDE || config.out_channels != 3 {
        return Err(Error::Checkpoint {
            tensor: "gen.conv_out.weight".into(),
            message: format!(
                "generator emits {0}x{0}x{1}, expected {IMAGE_SIDE}x{IMAGE_SIDE}x3",
                config.output_side(),
                config.out_channels
            ),
        });
    }
    let mut g = GeneratorNet::new(config, 0);
    g.net.load_state(&map)?;
    Ok(g)
}

/// Inference-mode forward pass and 8-bit conversion. Batch statistics are not
/// used, so the result does not depend on how inputs are grouped.
pub fn generate_with(generator: &mut GeneratorNet, features: &[CsiFeatureVector]) -> Result<Vec<Image>> {
    let dim = generator.config.input_dim;
    let mut out = Vec::with_capacity(features.len());
    for chunk in features.chunks(CHUNK) {
        let mut data = Vec::with_capacity(chunk.len() * dim);
        for f in chunk {
            if f.len() != dim {
                return Err(Error::invalid(format!("feature vector has {} values, generator expects {dim}", f.len())));
            }
            data.extend_from_slice(f.as_slice());
        }
        let y = generator.forward(&Tensor::new(&[chunk.len(), dim], data)?, Mode::Infer)?;
        for img in y.data().chunks_exact(IMAGE_SIDE * IMAGE_SIDE * 3) {
            out.push(Image::new(img.iter().map(|&v| denormalize_pixel(v)).collect())?);
        }
    }
    Ok(out)
}

pub fn generate_images(ck: &Checkpoint, features: &[CsiFeatureVector]) -> Result<Vec<Image>> {
    generate_with(&mut load_generator(ck)?, features)
}
