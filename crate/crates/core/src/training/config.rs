use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, DiscriminatorConfig, GeneratorConfig};

pub const DEFAULT_SEED: u64 = 20_200_101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// CSI→image regression only (MSE).
    GeneratorOnly,
    /// Adversarial only; the generator never sees a paired image.
    GanOnly,
    /// Regression every iteration plus an adversarial "generality" step every K.
    Hybrid,
}

impl TrainMode {
    pub fn short_name(self) -> &'static str {
        match self {
            TrainMode::GeneratorOnly => "gonly",
            TrainMode::GanOnly => "gan",
            TrainMode::Hybrid => "hybrid",
        }
    }

    pub fn uses_discriminator(self) -> bool {
        self != TrainMode::GeneratorOnly
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gonly" | "generator_only" => Ok(TrainMode::GeneratorOnly),
            "gan" | "gan_only" => Ok(TrainMode::GanOnly),
            "hybrid" => Ok(TrainMode::Hybrid),
            _ => Err(Error::invalid(format!("unknown training mode `{s}` (gonly|gan|hybrid)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Iterations (one batch each).
    pub iterations: usize,
    pub batch_size: usize,
    /// Generality interval (hybrid only).
    pub k: usize,
    pub seed: u64,
    /// Write the checkpoint every this many iterations (0 = final only).
    pub checkpoint_every: usize,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub adam: AdamConfig,
    /// Verify, around every step, that the network not being trained is bit-identical.
    pub check_freeze: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Hybrid,
            iterations: 32_000,
            batch_size: 32,
            k: 8,
            seed: DEFAULT_SEED,
            checkpoint_every: 1_000,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            adam: AdamConfig::default(),
            check_freeze: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::invalid("iterations must be >= 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be >= 2"));
        }
        if self.k < 1 {
            return Err(Error::invalid("generality interval K must be >= 1"));
        }
        if self.generator.output_side() != self.discriminator.image_side {
            return Err(Error::invalid(format!(
                "generator emits {}px images, discriminator expects {}px",
                self.generator.output_side(),
                self.discriminator.image_side
            )));
        }
        if self.generator.out_channels != self.discriminator.in_channels {
            return Err(Error::invalid("generator and discriminator channel counts differ"));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub iteration: usize,
    pub generator_mse: Option<f64>,
    /// Mean of the real and fake discriminator losses.
    pub discriminator_bce: Option<f64>,
    pub generality_bce: Option<f64>,
    pub millis: u64,
}

impl TrainLogRecord {
    pub const HEADER: &'static str = "iteration\tgenerator_mse\tdiscriminator_bce\tgenerality_bce\tms";

    /// Tab-separated; absent losses are written as `-`.
    pub fn to_line(&self) -> String {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6e}"));
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.iteration,
            f(self.generator_mse),
            f(self.discriminator_bce),
            f(self.generality_bce),
            self.millis
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::invalid(format!("log line has {} columns: `{line}`", cols.len())));
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s == "-" {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| Error::invalid(format!("bad loss `{s}`")))
            }
        };
        Ok(Self {
            iteration: cols[0].parse().map_err(|_| Error::invalid(format!("bad iteration `{}`", cols[0])))?,
            generator_mse: num(cols[1])?,
            discriminator_bce: num(cols[2])?,
            generality_bce: num(cols[3])?,
            millis: cols[4].parse().map_err(|_| Error::invalid(format!("bad ms `{}`", cols[4])))?,
        })
    }

    /// Same record with the timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self { millis: 0, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_original_setup() {
        let c = TrainConfig::default();
        assert_eq!((c.iterations, c.batch_size, c.k, c.checkpoint_every), (32_000, 32, 8, 1_000));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn invariants() {
        for bad in [
            TrainConfig { iterations: 0, ..Default::default() },
            TrainConfig { batch_size: 1, ..Default::default() },
            TrainConfig { k: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn modes_parse() {
        assert_eq!("gonly".parse::<TrainMode>().unwrap(), TrainMode::GeneratorOnly);
        assert_eq!("gan".parse::<TrainMode>().unwrap(), TrainMode::GanOnly);
        assert!("wgan".parse::<TrainMode>().is_err());
    }

    #[test]
    fn log_line_round_trip() {
        let r = TrainLogRecord {
            iteration: 8,
            generator_mse: Some(0.25),
            discriminator_bce: Some(0.7),
            generality_bce: None,
            millis: 12,
        };
        let line = r.to_line();
        assert_eq!(line.split('\t').count(), 5);
        assert!(line.contains("\t-\t"));
        assert_eq!(TrainLogRecord::parse_line(&line).unwrap(), r);
    }
}
