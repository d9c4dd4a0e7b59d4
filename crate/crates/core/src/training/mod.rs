//! The three learning procedures and image generation.

mod config;
mod generate;
mod trainer;

pub use config::{TrainConfig, TrainLogRecord, TrainMode, DEFAULT_SEED};
pub use generate::{generate_images, generate_with, load_generator};
pub use trainer::{
    run_training, train_gan_only, train_generator_only, train_hybrid, TrainOutcome, Trainer, TrainingData,
    DISC_OPT, FAKE, GEN_OPT, REAL,
};
