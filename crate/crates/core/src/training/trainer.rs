use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{TrainConfig, TrainLogRecord, TrainMode};
use crate::error::{Error, Result};
use crate::nn::{
    adam_from_tensors, adam_to_tensors, bce_loss, mse_loss, normalize_pixel, AdamState, Checkpoint,
    DiscriminatorNet, GeneratorNet, Mode, Tensor,
};
use crate::scene::{Dataset, IMAGE_BYTES, IMAGE_SIDE};

pub const REAL: f32 = 1.0;
pub const FAKE: f32 = 0.0;
pub const GEN_OPT: &str = "gen_opt";
pub const DISC_OPT: &str = "disc_opt";

/// Dataset converted once into network-ready arrays.
pub struct TrainingData {
    n: usize,
    input_dim: usize,
    features: Vec<f32>,
    images: Vec<f32>,
}

impl TrainingData {
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let input_dim = d.feature_len();
        let mut features = Vec::with_capacity(d.len() * input_dim);
        let mut images = Vec::with_capacity(d.len() * IMAGE_BYTES);
        for (i, s) in d.samples.iter().enumerate() {
            if s.features.len() != input_dim {
                return Err(Error::invalid(format!("sample {i}: {} features, expected {input_dim}", s.features.len())));
            }
            features.extend_from_slice(s.features.as_slice());
            images.extend(s.image.pixels().iter().map(|&p| normalize_pixel(p)));
        }
        Ok(Self {
            n: d.len(),
            input_dim,
            features,
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// (features (b, input_dim), images (b, 64, 64, 3) in [−1, 1]).
    pub fn batch(&self, idx: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
        let mut f = Vec::with_capacity(idx.len() * self.input_dim);
        let mut im = Vec::with_capacity(idx.len() * IMAGE_BYTES);
        for &i in idx {
            f.extend_from_slice(&self.features[i * self.input_dim..(i + 1) * self.input_dim]);
            im.extend_from_slice(&self.images[i * IMAGE_BYTES..(i + 1) * IMAGE_BYTES]);
        }
        (
            Tensor::new(&[idx.len(), self.input_dim], f).expect("sized"),
            Tensor::new(&[idx.len(), IMAGE_SIDE, IMAGE_SIDE, 3], im).expect("sized"),
        )
    }
}

/// Independent sub-seed for one consumer of randomness.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r.next_u64()
}

fn labels(b: usize, v: f32) -> Tensor<f32> {
    Tensor::full(&[b, 1], v)
}

pub struct Trainer {
    pub config: TrainConfig,
    pub generator: GeneratorNet,
    /// Never built in generator-only mode.
    pub discriminator: Option<DiscriminatorNet>,
    g_opt: AdamState,
    d_opt: Option<AdamState>,
    batch_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    pub iteration: usize,
    pub generality_steps: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let s = config.seed;
        let generator = GeneratorNet::new(config.generator, derive_seed(s, 1));
        let discriminator = config
            .mode
            .uses_discriminator()
            .then(|| DiscriminatorNet::new(config.discriminator, derive_seed(s, 2), derive_seed(s, 3)));
        let d_opt = discriminator.as_ref().map(|_| AdamState::new(config.adam));
        Ok(Self {
            g_opt: AdamState::new(config.adam),
            d_opt,
            batch_rng: ChaCha8Rng::seed_from_u64(derive_seed(s, 4)),
            noise_rng: ChaCha8Rng::seed_from_u64(derive_seed(s, 5)),
            generator,
            discriminator,
            config,
            iteration: 0,
            generality_steps: 0,
        })
    }

    fn freeze_guard(&self, which: &'static str) -> Option<u64> {
        if !self.config.check_freeze {
            return None;
        }
        match which {
            "generator" => Some(self.generator.net.digest()),
            _ => self.discriminator.as_ref().map(|d| d.net.digest()),
        }
    }

    fn freeze_verify(&self, which: &'static str, before: Option<u64>, during: &str) -> Result<()> {
        if let Some(b) = before {
            if self.freeze_guard(which) != Some(b) {
                return Err(Error::invalid(format!("{which} changed during the {during} step")));
            }
        }
        Ok(())
    }

    /// One MSE step of the generator on a paired batch.
    pub fn regression_step(&mut self, csi: &Tensor<f32>, real: &Tensor<f32>) -> Result<f64> {
        let guard = self.freeze_guard("discriminator");
        self.generator.net.zero_grad();
        let y = self.generator.forward(csi, Mode::Train)?;
        let (loss, g) = mse_loss(&y, real)?;
        self.generator.backward(&g)?;
        self.g_opt.step(&mut self.generator.net.params_mut())?;
        self.freeze_verify("discriminator", guard, "regression")?;
        Ok(loss)
    }

    pub fn discriminator_step(&mut self, images: &Tensor<f32>, label: f32) -> Result<f64> {
        let guard = self.freeze_guard("generator");
        let d = self.discriminator.as_mut().expect("discriminator exists in adversarial modes");
        let opt = self.d_opt.as_mut().expect("paired with discriminator");
        d.net.zero_grad();
        let p = d.forward(images, Mode::Train)?;
        let (loss, g) = bce_loss(&p, &labels(images.batch(), label))?;
        d.backward(&g)?;
        opt.step(&mut d.net.params_mut())?;
        self.freeze_verify("generator", guard, "discriminator")?;
        Ok(loss)
    }

    /// Generator trained through the frozen discriminator toward REAL.
    pub fn generality_step(&mut self, csi: &Tensor<f32>) -> Result<f64> {
        let guard = self.freeze_guard("discriminator");
        let d = self.discriminator.as_mut().expect("discriminator exists in adversarial modes");
        self.generator.net.zero_grad();
        d.net.zero_grad();
        let y = self.generator.forward(csi, Mode::Train)?;
        let p = d.forward(&y, Mode::Frozen)?;
        let (loss, g) = bce_loss(&p, &labels(csi.batch(), REAL))?;
        let gy = d.backward(&g)?;
        d.net.zero_grad();
        self.generator.backward(&gy)?;
        self.g_opt.step(&mut self.generator.net.params_mut())?;
        self.freeze_verify("discriminator", guard, "generality")?;
        Ok(loss)
    }

    fn noise(&mut self, b: usize) -> Tensor<f32> {
        let dim = self.config.generator.input_dim;
        let data = (0..b * dim).map(|_| self.noise_rng.sample::<f32, _>(StandardNormal)).collect();
        Tensor::new(&[b, dim], data).expect("sized")
    }

    /// One iteration of the configured procedure.
    pub fn step(&mut self, data: &TrainingData) -> Result<TrainLogRecord> {
        if data.input_dim() != self.config.generator.input_dim {
            return Err(Error::invalid(format!(
                "dataset has {} features, generator expects {}",
                data.input_dim(),
                self.config.generator.input_dim
            )));
        }
        let start = Instant::now();
        self.iteration += 1;
        let i = self.iteration;
        let b = self.config.batch_size;
        let idx: Vec<usize> = (0..b).map(|_| self.batch_rng.random_range(0..data.len())).collect();
        let (csi, real) = data.batch(&idx);
        let mut rec = TrainLogRecord {
            iteration: i,
            generator_mse: None,
            discriminator_bce: None,
            generality_bce: None,
            millis: 0,
        };
        match self.config.mode {
            TrainMode::GeneratorOnly => {
                rec.generator_mse = Some(self.regression_step(&csi, &real)?);
            }
            TrainMode::GanOnly => {
                let lr = self.discriminator_step(&real, REAL)?;
                let fake = self.generator.forward(&csi, Mode::Infer)?;
                let lf = self.discriminator_step(&fake, FAKE)?;
                rec.discriminator_bce = Some((lr + lf) / 2.0);
                rec.generality_bce = Some(self.generality_step(&csi)?);
                self.generality_steps += 1;
            }
            TrainMode::Hybrid => {
                rec.generator_mse = Some(self.regression_step(&csi, &real)?);
                let lr = self.discriminator_step(&real, REAL)?;
                let z = self.noise(b);
                let fake = self.generator.forward(&z, Mode::Infer)?;
                let lf = self.discriminator_step(&fake, FAKE)?;
                rec.discriminator_bce = Some((lr + lf) / 2.0);
                if i.is_multiple_of(self.config.k) {
                    rec.generality_bce = Some(self.generality_step(&csi)?);
                    self.generality_steps += 1;
                }
            }
        }
        for v in [rec.generator_mse, rec.discriminator_bce, rec.generality_bce].into_iter().flatten() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NonFinite("training loss"));
            }
        }
        rec.millis = start.elapsed().as_millis() as u64;
        Ok(rec)
    }

    /// Network tensors plus both optimizers.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut tensors: Vec<(String, Tensor<f32>)> = self
            .generator
            .net
            .state()
            .into_iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        let mut opt = adam_to_tensors(GEN_OPT, &self.g_opt);
        if let (Some(d), Some(o)) = (&self.discriminator, &self.d_opt) {
            tensors.extend(d.net.state().into_iter().map(|(n, t)| (n.to_string(), t.clone())));
            opt.extend(adam_to_tensors(DISC_OPT, o));
        }
        Checkpoint {
            tensors,
            optimizer: Some(opt),
        }
    }

    /// Restores networks and optimizer moments; iteration counting restarts
    /// from the optimizer step.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        let map = ck.tensor_map();
        self.generator.net.load_state(&map)?;
        if let Some(d) = &mut self.discriminator {
            d.net.load_state(&map)?;
        }
        if let Some(opt) = &ck.optimizer {
            self.g_opt = adam_from_tensors(GEN_OPT, opt, self.config.adam)?;
            if self.d_opt.is_some() {
                self.d_opt = Some(adam_from_tensors(DISC_OPT, opt, self.config.adam)?);
            }
        }
        Ok(())
    }
}

/// Result of a complete run.
pub struct TrainOutcome {
    pub records: Vec<TrainLogRecord>,
    pub generality_steps: usize,
    pub checkpoint: Checkpoint,
}

/// Runs `cfg.iterations` iterations. `on_record` sees every log record;
/// `on_checkpoint` is called at the configured cadence and after the last iteration.
pub fn run_training(
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut on_record: impl FnMut(&TrainLogRecord) -> Result<()>,
    mut on_checkpoint: impl FnMut(usize, &Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    let data = TrainingData::from_dataset(dataset)?;
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut records = Vec::with_capacity(cfg.iterations);
    for i in 1..=cfg.iterations {
        let rec = trainer.step(&data)?;
        on_record(&rec)?;
        records.push(rec);
        if cfg.checkpoint_every > 0 && i % cfg.checkpoint_every == 0 && i != cfg.iterations {
            on_checkpoint(i, &trainer.checkpoint())?;
        }
    }
    let checkpoint = trainer.checkpoint();
    on_checkpoint(cfg.iterations, &checkpoint)?;
    Ok(TrainOutcome {
        records,
        generality_steps: trainer.generality_steps,
        checkpoint,
    })
}

fn run_mode(dataset: &Dataset, cfg: &TrainConfig, mode: TrainMode) -> Result<TrainOutcome> {
    if cfg.mode != mode {
        return Err(Error::invalid(format!("config mode is {}, expected {mode}", cfg.mode)));
    }
    run_training(dataset, cfg, |_| Ok(()), |_, _| Ok(()))
}

pub fn train_generator_only(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    run_mode(dataset, cfg, TrainMode::GeneratorOnly)
}

pub fn train_gan_only(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    run_mode(dataset, cfg, TrainMode::GanOnly)
}

pub fn train_hybrid(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    run_mode(dataset, cfg, TrainMode::Hybrid)
}
