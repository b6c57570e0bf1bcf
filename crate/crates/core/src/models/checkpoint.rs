use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::Tensor;

use super::vae::{
    ArchConfig, Preset, SentenceVae, TwoLevelVae, SENTENCE_PARAM_NAMES, TASK_PARAM_NAMES,
};
use super::ModelError;

pub const MAGIC: &[u8; 8] = b"CPRBCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Sentence,
    TwoLevel,
}

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    Sentence(SentenceVae),
    TwoLevel(TwoLevelVae),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Sentence(_) => ModelKind::Sentence,
            Model::TwoLevel(_) => ModelKind::TwoLevel,
        }
    }

    pub fn arch(&self) -> &ArchConfig {
        match self {
            Model::Sentence(m) => &m.arch,
            Model::TwoLevel(m) => &m.sentence.arch,
        }
    }

    pub fn sentence(&self) -> &SentenceVae {
        match self {
            Model::Sentence(m) => m,
            Model::TwoLevel(m) => &m.sentence,
        }
    }

    pub fn new(
        kind: ModelKind,
        arch: ArchConfig,
        rng: &mut impl rand::Rng,
    ) -> Result<Self, ModelError> {
        Ok(match kind {
            ModelKind::Sentence => Model::Sentence(SentenceVae::new(arch, rng)?),
            ModelKind::TwoLevel => Model::TwoLevel(TwoLevelVae::new(arch, rng)?),
        })
    }

    pub fn param_count(&self) -> usize {
        match self {
            Model::Sentence(m) => m.param_count(),
            Model::TwoLevel(m) => m.param_count(),
        }
    }

    pub fn named_params(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            Model::Sentence(m) => SENTENCE_PARAM_NAMES.into_iter().zip(m.params()).collect(),
            Model::TwoLevel(m) => SENTENCE_PARAM_NAMES
                .into_iter()
                .chain(TASK_PARAM_NAMES)
                .zip(m.params())
                .collect(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Model::Sentence(m) => m.params_mut(),
            Model::TwoLevel(m) => m.params_mut(),
        }
    }

    /// Same architecture; parameters are overwritten by the caller.
    fn skeleton(kind: ModelKind, arch: &ArchConfig) -> Result<Self, ModelError> {
        Self::new(kind, arch.clone(), &mut ChaCha8Rng::seed_from_u64(0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub preset: Preset,
    pub arch: ArchConfig,
    pub seed: u64,
    /// Effective run configuration, echoed verbatim.
    pub config: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: Model,
}

fn ckpt_err(path: &Path, msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Layout: magic, u32 version, u32 header length, JSON header, then every
/// tensor as little-endian f32 in header order.
pub fn write_checkpoint(
    path: &Path,
    model: &Model,
    preset: Preset,
    seed: u64,
    config: serde_json::Value,
) -> Result<(), ModelError> {
    let named = model.named_params();
    let header = CheckpointHeader {
        kind: model.kind(),
        preset,
        arch: model.arch().clone(),
        seed,
        config,
        tensors: named
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ckpt_err(path, e.to_string()))?;
    let total: usize = named.iter().map(|(_, t)| t.len()).sum();
    let mut buf = Vec::with_capacity(16 + json.len() + 4 * total);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, t) in &named {
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let io = |source| ModelError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&buf).map_err(io)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(ckpt_err(path, "not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(ckpt_err(path, format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = bytes
        .get(16..16 + hlen)
        .ok_or_else(|| ckpt_err(path, "truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(body).map_err(|e| ckpt_err(path, format!("bad header: {e}")))?;

    let mut model = Model::skeleton(header.kind, &header.arch)?;
    let expected: Vec<TensorEntry> = model
        .named_params()
        .iter()
        .map(|(n, t)| TensorEntry {
            name: n.to_string(),
            shape: t.shape().to_vec(),
        })
        .collect();
    if expected != header.tensors {
        return Err(ckpt_err(
            path,
            "tensor list does not match the architecture",
        ));
    }
    let payload = &bytes[16 + hlen..];
    let total: usize = expected
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    if payload.len() != 4 * total {
        return Err(ckpt_err(
            path,
            format!(
                "payload has {} bytes, expected {}",
                payload.len(),
                4 * total
            ),
        ));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
    for t in model.params_mut() {
        for w in t.data_mut() {
            *w = values.next().expect("length checked");
        }
    }
    Ok(Checkpoint { header, model })
}
