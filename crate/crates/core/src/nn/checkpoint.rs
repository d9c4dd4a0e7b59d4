//! Checkpoint file.
//!
//! ```text
//! "C2IWGT01" | u32 count | count × tensor
//! [ "C2IADM01" | u32 count | count × tensor ]        optional optimizer state
//! tensor: u16 name_len | name | u8 rank | rank × u32 dim | f32 data
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::adam::{AdamConfig, AdamState, Moments};
use super::tensor::Tensor;
use crate::binio::{read_file, write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"C2IWGT01";
pub const ADAM_MAGIC: &[u8; 8] = b"C2IADM01";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor<f32>)>,
    pub optimizer: Option<Vec<(String, Tensor<f32>)>>,
}

fn write_section(w: &mut ByteWriter, magic: &[u8; 8], tensors: &[(String, Tensor<f32>)]) -> Result<()> {
    w.bytes(magic);
    w.u32(tensors.len() as u32);
    for (name, t) in tensors {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(Error::invalid(format!("tensor name too long: {name}")));
        }
        w.u16(bytes.len() as u16);
        w.bytes(bytes);
        w.u8(t.shape().len() as u8);
        for &d in t.shape() {
            w.u32(d as u32);
        }
        w.f32_slice(t.data());
    }
    Ok(())
}

fn read_section(r: &mut ByteReader) -> Result<Vec<(String, Tensor<f32>)>> {
    let count = r.u32("tensor count")?;
    let mut out = Vec::with_capacity(count.min(4096) as usize);
    for _ in 0..count {
        let len = r.u16("tensor name length")? as usize;
        let at = r.offset();
        let name = String::from_utf8(r.bytes(len, "tensor name")?.to_vec()).map_err(|_| Error::Format {
            offset: at,
            message: "tensor name is not UTF-8".into(),
        })?;
        let rank = r.u8("tensor rank")? as usize;
        if rank > 4 {
            return Err(r.error(format!("tensor `{name}` has rank {rank} > 4")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor dim")? as usize);
        }
        let n: usize = shape.iter().product();
        let data = r.f32_vec(n, &format!("data of tensor `{name}`"))?;
        let t = Tensor::new(&shape, data)?;
        if !t.data().iter().all(|v| v.is_finite()) {
            return Err(Error::Checkpoint {
                tensor: name,
                message: "contains non-finite values".into(),
            });
        }
        out.push((name, t));
    }
    Ok(out)
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::default();
        write_section(&mut w, WEIGHTS_MAGIC, &self.tensors)?;
        if let Some(opt) = &self.optimizer {
            write_section(&mut w, ADAM_MAGIC, opt)?;
        }
        Ok(w.buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(WEIGHTS_MAGIC)?;
        let tensors = read_section(&mut r)?;
        let optimizer = if r.is_empty() {
            None
        } else {
            r.expect_magic(ADAM_MAGIC)?;
            Some(read_section(&mut r)?)
        };
        if !r.is_empty() {
            return Err(r.error("trailing bytes after checkpoint"));
        }
        Ok(Self { tensors, optimizer })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }

    pub fn tensor_map(&self) -> BTreeMap<String, Tensor<f32>> {
        self.tensors.iter().cloned().collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }
}

/// Flattens an optimizer into named tensors under `prefix`.
pub fn adam_to_tensors(prefix: &str, state: &AdamState<f32>) -> Vec<(String, Tensor<f32>)> {
    let c = state.config;
    let mut out = vec![
        (
            format!("{prefix}.config"),
            Tensor::new(&[4], vec![c.lr as f32, c.beta1 as f32, c.beta2 as f32, c.eps as f32]).unwrap(),
        ),
        (
            format!("{prefix}.step"),
            Tensor::new(&[], vec![state.step as f32]).unwrap(),
        ),
    ];
    for (name, m) in &state.moments {
        out.push((format!("{prefix}/{name}.m"), m.m.clone()));
        out.push((format!("{prefix}/{name}.v"), m.v.clone()));
    }
    out
}

/// Inverse of [`adam_to_tensors`]; hyperparameters come from `config`.
pub fn adam_from_tensors(prefix: &str, tensors: &[(String, Tensor<f32>)], config: AdamConfig) -> Result<AdamState<f32>> {
    let mut state = AdamState::new(config);
    let step_name = format!("{prefix}.step");
    let step = tensors
        .iter()
        .find(|(n, _)| *n == step_name)
        .ok_or_else(|| Error::Checkpoint {
            tensor: step_name.clone(),
            message: "missing from optimizer section".into(),
        })?;
    state.step = step.1.data()[0] as u64;
    let lead = format!("{prefix}/");
    let mut partial: BTreeMap<String, (Option<Tensor<f32>>, Option<Tensor<f32>>)> = BTreeMap::new();
    for (name, t) in tensors {
        let Some(rest) = name.strip_prefix(&lead) else { continue };
        if let Some(p) = rest.strip_suffix(".m") {
            partial.entry(p.to_string()).or_default().0 = Some(t.clone());
        } else if let Some(p) = rest.strip_suffix(".v") {
            partial.entry(p.to_string()).or_default().1 = Some(t.clone());
        }
    }
    for (name, pair) in partial {
        match pair {
            (Some(m), Some(v)) if m.shape() == v.shape() => {
                state.moments.insert(name, Moments { m, v });
            }
            _ => {
                return Err(Error::Checkpoint {
                    tensor: format!("{prefix}/{name}"),
                    message: "incomplete or mismatched moment pair".into(),
                })
            }
        }
    }
    Ok(state)
}
