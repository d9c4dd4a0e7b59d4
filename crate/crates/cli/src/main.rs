use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use csi2image::eval::{evaluate, MetricsReport};
use csi2image::nn::{Checkpoint, DiscriminatorConfig, GeneratorConfig};
use csi2image::scene::{gen_dataset, Dataset, Image, Scenario, SimConfig, Split};
use csi2image::training::{generate_images, run_training, TrainConfig, TrainLogRecord, TrainMode, DEFAULT_SEED};
use csi2image::{write_atomic, Error, Result};

const THREADS_ENV: &str = "CSI2IMG_THREADS";

#[derive(Parser, Debug)]
#[command(name = "csi2image", version, about = "Generate camera images from compressed Wi-Fi CSI")]
struct Cli {
    /// Worker threads for dataset generation [env: CSI2IMG_THREADS, default 1]
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize paired train/test datasets.
    GenData(GenDataArgs),
    /// Train a generator (and discriminator) on a dataset.
    Train(TrainArgs),
    /// Write generated and ground-truth images as PPM files.
    Generate(GenerateArgs),
    /// Score generated images and write a metrics report.
    Eval(EvalArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenDataArgs {
    /// exp1 | exp2 | walk
    #[arg(long, default_value = "exp1", value_parser = parse_scenario)]
    scenario: Scenario,
    /// Training samples [default: the scenario's original count]
    #[arg(long = "train")]
    n_train: Option<usize>,
    /// Test samples [default: the scenario's original count]
    #[arg(long = "test")]
    n_test: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Directory for train.bin, test.bin and manifest.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// gonly | gan | hybrid
    #[arg(long, value_parser = parse_mode)]
    mode: TrainMode,
    #[arg(long, default_value_t = 32_000)]
    iters: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Generality interval (hybrid)
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// Dataset directory from gen-data
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Training log [default: <ckpt>.log]
    #[arg(long)]
    log: Option<PathBuf>,
    /// Checkpoint cadence in iterations (0 = final only)
    #[arg(long, default_value_t = 1_000)]
    checkpoint_every: usize,
    /// Divide every generator channel count by this (1 = full size)
    #[arg(long, default_value_t = 1)]
    gen_width_divisor: usize,
    /// Divide every discriminator filter count by this (1 = full size)
    #[arg(long, default_value_t = 1)]
    disc_width_divisor: usize,
    /// Verify the frozen network is untouched around every step (slow)
    #[arg(long)]
    check_freeze: bool,
}

#[derive(Args, Debug, Serialize)]
struct GenerateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// train | test
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    /// Directory for the PPM images
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[arg(long, required_unless_present = "oracle", conflicts_with = "oracle")]
    ckpt: Option<PathBuf>,
    /// Score the ground-truth images against themselves
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    data: PathBuf,
    /// train | test
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    /// Metrics report (JSON)
    #[arg(long)]
    report: PathBuf,
}

fn parse_scenario(s: &str) -> std::result::Result<Scenario, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<TrainMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Removes everything registered unless disarmed by [`Outputs::commit`].
struct Outputs {
    files: Vec<PathBuf>,
    dir: Option<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            dir: None,
            committed: false,
        }
    }

    /// Creates `dir` if needed; it is removed on failure only if this run created it.
    fn dir(&mut self, dir: &Path) -> Result<()> {
        if !dir.exists() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            self.dir = Some(dir.to_path_buf());
        }
        Ok(())
    }

    fn file(&mut self, path: PathBuf) -> PathBuf {
        self.files.push(path.clone());
        path
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
        if let Some(d) = &self.dir {
            let _ = std::fs::remove_dir_all(d);
        }
    }
}

#[derive(Serialize)]
struct RunRecord<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    threads: usize,
    args: &'a T,
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

fn run_record<T: Serialize>(command: &str, threads: usize, args: &T) -> Vec<u8> {
    to_json(&RunRecord {
        command,
        version: env!("CARGO_PKG_VERSION"),
        threads,
        args,
    })
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Some(t) = flag {
        return Ok(t.max(1));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|t| t.max(1))
            .map_err(|_| Error::invalid(format!("{THREADS_ENV}={v} is not a thread count"))),
        Err(_) => Ok(1),
    }
}

fn read_split(data: &Path, split: Split) -> Result<Dataset> {
    let path = split.file_in(data);
    Dataset::read(&path).map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn gen_data(args: &GenDataArgs, threads: usize) -> Result<()> {
    let (dt, ds) = args.scenario.default_counts();
    let (n_train, n_test) = (args.n_train.unwrap_or(dt), args.n_test.unwrap_or(ds));
    let mut out = Outputs::new();
    out.dir(&args.out)?;
    for split in [Split::Train, Split::Test] {
        out.file(split.file_in(&args.out));
    }
    out.file(args.out.join(csi2image::scene::MANIFEST_FILE));
    let run = out.file(args.out.join("run.json"));
    let started = Instant::now();
    let sim = SimConfig::default();
    let manifest = gen_dataset(args.scenario, n_train, n_test, args.seed, &sim, threads, &args.out)?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        scenario: Scenario,
        n_train: usize,
        n_test: usize,
        seed: u64,
        out: &'a Path,
        sim: &'a SimConfig,
    }
    let resolved = Resolved {
        scenario: args.scenario,
        n_train,
        n_test,
        seed: args.seed,
        out: &args.out,
        sim: &sim,
    };
    write_atomic(&run, &run_record("gen-data", threads, &resolved))?;
    eprintln!(
        "gen-data: {} {} train / {} test samples in {:.1}s; min class-prototype distance {:.3}",
        args.scenario.name(),
        n_train,
        n_test,
        started.elapsed().as_secs_f64(),
        manifest.class_separation.min_distance
    );
    out.commit();
    Ok(())
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    if args.gen_width_divisor == 0 || args.disc_width_divisor == 0 {
        return Err(Error::invalid("width divisors must be >= 1"));
    }
    let cfg = TrainConfig {
        mode: args.mode,
        iterations: args.iters,
        batch_size: args.batch,
        k: args.k,
        seed: args.seed,
        checkpoint_every: args.checkpoint_every,
        generator: GeneratorConfig::width_divided(args.gen_width_divisor),
        discriminator: DiscriminatorConfig::width_divided(args.disc_width_divisor),
        check_freeze: args.check_freeze,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train(args: &TrainArgs, threads: usize) -> Result<()> {
    let cfg = train_config(args)?;
    let dataset = read_split(&args.data, Split::Train)?;
    if let Some(parent) = args.ckpt.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(Error::invalid(format!("checkpoint directory {} does not exist", parent.display())));
        }
    }
    let mut out = Outputs::new();
    let ckpt = out.file(args.ckpt.clone());
    let log_path = out.file(args.log.clone().unwrap_or_else(|| sidecar(&args.ckpt, ".log")));
    let run = out.file(sidecar(&args.ckpt, ".run.json"));

    #[derive(Serialize)]
    struct Resolved<'a> {
        data: &'a Path,
        ckpt: &'a Path,
        log: &'a Path,
        train: &'a TrainConfig,
    }
    let resolved = Resolved {
        data: &args.data,
        ckpt: &ckpt,
        log: &log_path,
        train: &cfg,
    };
    write_atomic(&run, &run_record("train", threads, &resolved))?;

    let file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = std::io::BufWriter::new(file);
    let io = |e| Error::io(&log_path, e);
    writeln!(log, "# config {}", serde_json::to_string(&cfg).expect("serializable")).map_err(io)?;
    writeln!(log, "{}", TrainLogRecord::HEADER).map_err(io)?;
    eprintln!(
        "train: mode {} for {} iterations on {} samples (generator {:?}, seed {})",
        cfg.mode,
        cfg.iterations,
        dataset.len(),
        cfg.generator.channels,
        cfg.seed
    );
    let every = (cfg.iterations / 20).max(1);
    let outcome = run_training(
        &dataset,
        &cfg,
        |rec| {
            writeln!(log, "{}", rec.to_line()).map_err(io)?;
            if rec.iteration % every == 0 {
                eprintln!("train: {}", rec.to_line());
            }
            Ok(())
        },
        |_, ck| ck.write(&ckpt),
    )?;
    log.flush().map_err(io)?;
    eprintln!(
        "train: done; {} generality steps; checkpoint {}",
        outcome.generality_steps,
        ckpt.display()
    );
    out.commit();
    Ok(())
}

fn generated(ckpt: &Path, data: &Dataset) -> Result<Vec<Image>> {
    let ck = Checkpoint::read(ckpt)?;
    let features: Vec<_> = data.samples.iter().map(|s| s.features.clone()).collect();
    generate_images(&ck, &features)
}

fn generate(args: &GenerateArgs, threads: usize) -> Result<()> {
    let data = read_split(&args.data, args.split)?;
    let images = generated(&args.ckpt, &data)?;
    let mut out = Outputs::new();
    out.dir(&args.out)?;
    for (i, (img, s)) in images.iter().zip(&data.samples).enumerate() {
        let g = out.file(args.out.join(format!("{i:05}.ppm")));
        write_atomic(&g, &img.to_ppm())?;
        let t = out.file(args.out.join(format!("{i:05}_truth.ppm")));
        write_atomic(&t, &s.image.to_ppm())?;
    }
    let run = out.file(args.out.join("run.json"));
    write_atomic(&run, &run_record("generate", threads, args))?;
    eprintln!("generate: {} image pairs in {}", images.len(), args.out.display());
    out.commit();
    Ok(())
}

fn eval(args: &EvalArgs, threads: usize) -> Result<MetricsReport> {
    let data = read_split(&args.data, args.split)?;
    let images = match &args.ckpt {
        Some(ck) if !args.oracle => generated(ck, &data)?,
        _ => data.samples.iter().map(|s| s.image.clone()).collect(),
    };
    let report = evaluate(&images, &data, args.split)?;
    let mut out = Outputs::new();
    let path = out.file(args.report.clone());
    write_atomic(&path, report.to_json().as_bytes())?;
    let run = out.file(sidecar(&args.report, ".run.json"));
    write_atomic(&run, &run_record("eval", threads, args))?;
    eprintln!("eval: {}", report.summary());
    out.commit();
    Ok(report)
}

fn run(cli: Cli) -> Result<()> {
    let threads = resolve_threads(cli.threads)?;
    match &cli.command {
        Command::GenData(a) => gen_data(a, threads),
        Command::Train(a) => train(a, threads),
        Command::Generate(a) => generate(a, threads),
        Command::Eval(a) => eval(a, threads).map(|_| ()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
