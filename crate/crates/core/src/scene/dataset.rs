//! Paired (CSI feature, image) samples and the dataset file.
//!
//! ```text
//! "CSI2IMG1" | u32 count | u16 feature_len | u16 image_side | u8 flags (bit 0: walk_t present)
//! per sample: u16 label | [f32 walk_t] | feature_len × f32 | side·side·3 bytes RGB
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::channel::{synth_channel, ChannelParams};
use super::render::{render_scene, Image, Scene, IMAGE_BYTES, IMAGE_SIDE, MAX_JITTER};
use crate::binio::{read_file, write_atomic, ByteReader, ByteWriter};
use crate::codec::{
    decompose_v, feature_vector, reconstruct_v, svd_small, AntennaConfig, Codebook, CsiFeatureVector,
    SteeringMatrix, DECOMPOSE_GRAM_TOL,
};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"CSI2IMG1";
const FLAG_WALK: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: CsiFeatureVector,
    pub image: Image,
    pub label: u16,
    pub walk_t: Option<f32>,
}

impl Sample {
    pub fn scene(&self) -> Result<Scene> {
        Scene::from_label(self.label, self.walk_t)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub walk: bool,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_len(&self) -> usize {
        self.samples.first().map_or(AntennaConfig::default().feature_len(), |s| s.features.len())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let flen = self.feature_len();
        let mut w = ByteWriter::default();
        w.bytes(DATASET_MAGIC);
        w.u32(self.samples.len() as u32);
        w.u16(flen as u16);
        w.u16(IMAGE_SIDE as u16);
        w.u8(if self.walk { FLAG_WALK } else { 0 });
        for (i, s) in self.samples.iter().enumerate() {
            if s.features.len() != flen {
                return Err(Error::invalid(format!("sample {i} has {} features, expected {flen}", s.features.len())));
            }
            if s.walk_t.is_some() != self.walk {
                return Err(Error::invalid(format!("sample {i}: walk_t presence disagrees with dataset flag")));
            }
            w.u16(s.label);
            if let Some(t) = s.walk_t {
                w.f32(t);
            }
            w.f32_slice(s.features.as_slice());
            w.bytes(s.image.pixels());
        }
        Ok(w.buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(DATASET_MAGIC)?;
        let count = r.u32("sample count")? as usize;
        let flen = r.u16("feature length")? as usize;
        let side_at = r.offset();
        let side = r.u16("image side")? as usize;
        if side != IMAGE_SIDE {
            return Err(Error::Format {
                offset: side_at,
                message: format!("image side {side}, expected {IMAGE_SIDE}"),
            });
        }
        let flags = r.u8("flags")?;
        if flags & !FLAG_WALK != 0 {
            return Err(r.error(format!("unknown flag bits {flags:#x}")));
        }
        let walk = flags & FLAG_WALK != 0;
        let per_sample = 2 + if walk { 4 } else { 0 } + 4 * flen + IMAGE_BYTES;
        // capacity bounded by what the bytes can hold, not by the header's claim
        let mut samples = Vec::with_capacity(count.min(r.remaining() / per_sample + 1));
        for i in 0..count {
            let label = r.u16(&format!("label of sample {i}"))?;
            let walk_t = if walk { Some(r.f32(&format!("walk_t of sample {i}"))?) } else { None };
            let at = r.offset();
            let f = r.f32_vec(flen, &format!("features of sample {i}"))?;
            if !f.iter().all(|v| v.is_finite()) {
                return Err(Error::Format {
                    offset: at,
                    message: format!("sample {i} has non-finite features"),
                });
            }
            let px = r.bytes(IMAGE_BYTES, &format!("image of sample {i}"))?.to_vec();
            samples.push(Sample {
                features: CsiFeatureVector(f),
                image: Image::new(px)?,
                label,
                walk_t,
            });
        }
        if !r.is_empty() {
            return Err(r.error("trailing bytes after last sample"));
        }
        Ok(Self { walk, samples })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn file_in(self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.bin", self.name()))
    }

    fn stream_id(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Test => 2,
        }
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split `{s}` (train|test)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// One user in one of three slots.
    Exp1,
    /// One or two users.
    Exp2,
    /// One user walking an oval.
    Walk,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Exp1 => "exp1",
            Scenario::Exp2 => "exp2",
            Scenario::Walk => "walk",
        }
    }

    /// (train, test) sample counts of the original experiments.
    pub fn default_counts(self) -> (usize, usize) {
        match self {
            Scenario::Exp1 => (180, 184),
            Scenario::Exp2 => (720, 330),
            Scenario::Walk => (515, 498),
        }
    }

    /// Slot bitmasks of the scenario's classes; empty for the walk.
    pub fn classes(self) -> &'static [u8] {
        match self {
            Scenario::Exp1 => &[0b001, 0b010, 0b100],
            Scenario::Exp2 => &[0b001, 0b010, 0b100, 0b011, 0b101, 0b110],
            Scenario::Walk => &[],
        }
    }

    pub fn draw_scene<R: Rng + ?Sized>(self, rng: &mut R) -> Scene {
        match self {
            Scenario::Walk => {
                let t: f32 = rng.random();
                Scene::walk(t as f64, 0).expect("t in [0, 1)")
            }
            _ => {
                let classes = self.classes();
                let mask = classes[rng.random_range(0..classes.len())];
                let jitter = rng.random_range(-MAX_JITTER..=MAX_JITTER);
                Scene::from_mask(mask, jitter).expect("scenario classes are valid")
            }
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp1" => Ok(Scenario::Exp1),
            "exp2" => Ok(Scenario::Exp2),
            "walk" => Ok(Scenario::Walk),
            _ => Err(Error::invalid(format!("unknown scenario `{s}` (exp1|exp2|walk)"))),
        }
    }
}

/// Everything that turns a scene into CSI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimConfig {
    pub antennas: AntennaConfig,
    pub codebook: Codebook,
    pub channel: ChannelParams,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.antennas.validate()?;
        self.channel.validate()?;
        let (a, c) = (&self.antennas, &self.channel);
        if (a.n_rx, a.n_tx, a.n_subcarriers) != (c.n_rx, c.n_tx, c.n_subcarriers) {
            return Err(Error::invalid("antenna config and channel dimensions disagree"));
        }
        Ok(())
    }
}

/// Synthesises CSI for `scene` and passes every subcarrier through the
/// feedback codec (SVD → V → angles → indices → angles → V), so the features
/// carry the same quantization error a real capture would.
pub fn make_sample<R: Rng + ?Sized>(scene: &Scene, sim: &SimConfig, rng: &mut R) -> Result<Sample> {
    scene.validate()?;
    let cfg = &sim.antennas;
    let mut per_sc = Vec::with_capacity(cfg.n_subcarriers);
    for sc in 0..cfg.n_subcarriers {
        let h = synth_channel(scene, sc, &sim.channel, rng)?;
        let svd = svd_small(&h.adjoint())?;
        let v = SteeringMatrix::new(svd.v.leading_columns(cfg.n_tx), DECOMPOSE_GRAM_TOL)?.phase_normalized();
        let record = decompose_v(&v, sim.codebook)?;
        per_sc.push(reconstruct_v(&record.dequantize()?, cfg)?);
    }
    let walk_t = match scene.occupancy {
        super::Occupancy::Walk(t) => Some(t as f32),
        _ => None,
    };
    Ok(Sample {
        features: feature_vector(&per_sc, cfg)?,
        image: render_scene(scene),
        label: scene.label(),
        walk_t,
    })
}

/// Independent stream per (seed, split, index): generation order and thread
/// count cannot change any sample.
pub fn sample_rng(seed: u64, split: Split, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((split.stream_id() << 32) | index as u64);
    rng
}

pub fn gen_split(scenario: Scenario, n: usize, seed: u64, split: Split, sim: &SimConfig, threads: usize) -> Result<Dataset> {
    sim.validate()?;
    let one = |i: usize| -> Result<Sample> {
        let mut rng = sample_rng(seed, split, i);
        let scene = scenario.draw_scene(&mut rng);
        make_sample(&scene, sim, &mut rng)
    };
    let threads = threads.clamp(1, n.max(1));
    let samples = if threads == 1 {
        (0..n).map(one).collect::<Result<Vec<_>>>()?
    } else {
        let chunk = n.div_ceil(threads);
        let parts: Vec<Result<Vec<Sample>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let one = &one;
                    s.spawn(move || (t * chunk..((t + 1) * chunk).min(n)).map(one).collect())
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("generation thread panicked")).collect()
        });
        let mut all = Vec::with_capacity(n);
        for p in parts {
            all.extend(p?);
        }
        all
    };
    Ok(Dataset {
        walk: scenario == Scenario::Walk,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistance {
    pub a: String,
    pub b: String,
    pub distance: f64,
}

/// Pairwise distances between noise-free class prototypes' feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSeparation {
    pub min_distance: f64,
    pub pairs: Vec<ClassDistance>,
}

pub fn class_separation(scenario: Scenario, sim: &SimConfig) -> Result<ClassSeparation> {
    let quiet = SimConfig {
        channel: ChannelParams {
            noise_rel: 0.0,
            ..sim.channel.clone()
        },
        ..sim.clone()
    };
    let prototypes: Vec<(String, Scene)> = match scenario {
        // the walk has no classes; use the three positions it sweeps through
        Scenario::Walk => [0.0, 0.25, 0.5]
            .iter()
            .map(|&t| (format!("walk t={t}"), Scene::walk(t, 0).unwrap()))
            .collect(),
        _ => scenario
            .classes()
            .iter()
            .map(|&m| {
                let s = Scene::from_mask(m, 0).unwrap();
                (format!("slots {:?}", s.occupied_slots()), s)
            })
            .collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let feats = prototypes
        .iter()
        .map(|(_, s)| make_sample(s, &quiet, &mut rng).map(|x| x.features))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for i in 0..feats.len() {
        for j in i + 1..feats.len() {
            let d = feats[i]
                .as_slice()
                .iter()
                .zip(feats[j].as_slice())
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            pairs.push(ClassDistance {
                a: prototypes[i].0.clone(),
                b: prototypes[j].0.clone(),
                distance: d,
            });
        }
    }
    let min_distance = pairs.iter().map(|p| p.distance).fold(f64::INFINITY, f64::min);
    Ok(ClassSeparation { min_distance, pairs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scenario: Scenario,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub sim: SimConfig,
    pub class_separation: ClassSeparation,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `train.bin`, `test.bin` and `manifest.json` into `dir`.
pub fn gen_dataset(
    scenario: Scenario,
    n_train: usize,
    n_test: usize,
    seed: u64,
    sim: &SimConfig,
    threads: usize,
    dir: &Path,
) -> Result<DatasetManifest> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::invalid("train and test counts must be at least 1"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let train = gen_split(scenario, n_train, seed, Split::Train, sim, threads)?;
    let test = gen_split(scenario, n_test, seed, Split::Test, sim, threads)?;
    let manifest = DatasetManifest {
        scenario,
        n_train,
        n_test,
        seed,
        sim: sim.clone(),
        class_separation: class_separation(scenario, sim)?,
    };
    train.write(&Split::Train.file_in(dir))?;
    test.write(&Split::Test.file_in(dir))?;
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}
