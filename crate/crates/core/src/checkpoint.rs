//! Checkpoint files.
//!
//! ```text
//! "CCKP" | u32 version | u32 header length | JSON header | payload
//! ```
//!
//! All integers are little-endian. The count payload is `u64 N` followed by
//! four sorted runs (unigram, left bigram, right bigram, trigram), each a
//! `u32` entry count then `(u32 ids..., u64 count)` entries. The neural
//! payload is the tensor table: `u32` tensor count, then per tensor a `u32`
//! name length, the UTF-8 name, a `u32` rank, `u32` dimensions and row-major
//! f32 data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::count::CountTables;
use crate::error::{Error, Result};
use crate::lm::{BackendKind, MaskedLm, MaskedQuery, PredictionDistribution};
use crate::neural::{Layout, ModelConfig, NeuralModel, ParameterSet};

pub const MAGIC: &[u8; 4] = b"CCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendHeader {
    Count { alpha: f64 },
    Neural { model: ModelConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub backend: BackendHeader,
    pub vocab_fingerprint: String,
    pub vocab_size: usize,
    pub seed: u64,
    /// Training configuration echo.
    pub config: serde_json::Value,
}

/// Any checkpointable backend.
#[derive(Debug, Clone)]
pub enum Model {
    Count(CountTables),
    Neural(NeuralModel),
}

impl Model {
    fn as_lm(&self) -> &dyn MaskedLm {
        match self {
            Model::Count(m) => m,
            Model::Neural(m) => m,
        }
    }
}

impl MaskedLm for Model {
    fn kind(&self) -> BackendKind {
        self.as_lm().kind()
    }

    fn vocab_fingerprint(&self) -> &str {
        self.as_lm().vocab_fingerprint()
    }

    fn vocab_size(&self) -> usize {
        self.as_lm().vocab_size()
    }

    fn conditional(&self, query: &MaskedQuery) -> Result<PredictionDistribution> {
        self.as_lm().conditional(query)
    }

    fn conditional_batch(&self, queries: &[MaskedQuery]) -> Result<Vec<PredictionDistribution>> {
        self.as_lm().conditional_batch(queries)
    }
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    model: &Model,
    seed: u64,
    config: serde_json::Value,
) -> Result<()> {
    let backend = match model {
        Model::Count(t) => BackendHeader::Count { alpha: t.alpha() },
        Model::Neural(n) => BackendHeader::Neural { model: *n.config() },
    };
    let header = CheckpointHeader {
        backend,
        vocab_fingerprint: model.vocab_fingerprint().to_string(),
        vocab_size: model.vocab_size(),
        seed,
        config,
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    match model {
        Model::Count(t) => t.write_payload(&mut w)?,
        Model::Neural(n) => n.params().write_tensors(&mut w)?,
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(CheckpointHeader, Model)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("file too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)
        .map_err(|_| Error::Checkpoint("missing version".into()))?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    r.read_exact(&mut word)
        .map_err(|_| Error::Checkpoint("missing header length".into()))?;
    let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut json)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;

    let model = match &header.backend {
        BackendHeader::Count { alpha } => Model::Count(CountTables::read_payload(
            &mut r,
            header.vocab_fingerprint.clone(),
            header.vocab_size,
            *alpha,
        )?),
        BackendHeader::Neural { model } => {
            if model.vocab_size != header.vocab_size {
                return Err(Error::Checkpoint(
                    "model and header vocab sizes differ".into(),
                ));
            }
            let params = ParameterSet::read_tensors(&mut r, Layout::new(model))?;
            Model::Neural(NeuralModel::with_fingerprint(
                *model,
                params,
                header.vocab_fingerprint.clone(),
            )?)
        }
    };
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok((header, model))
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model,
    seed: u64,
    config: serde_json::Value,
) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), model, seed, config)
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, Model)> {
    let file = File::open(path).map_err(|_| Error::MissingArtifact(path.to_path_buf()))?;
    read_checkpoint(BufReader::new(file))
}
