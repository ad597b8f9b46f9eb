use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{PairSchema, Preprocessing, Vocab};
use crate::error::{Error, Result};

use super::config::ModelConfig;
use super::network::Model;
use super::params::Params;

const MAGIC: &[u8; 8] = b"CBGRUCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    /// Offset in values from the start of the parameter section.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    model: ModelConfig,
    class_names: Vec<String>,
    schema: PairSchema,
    vocab: Vocab,
    preprocessing: Preprocessing,
    tensors: Vec<TensorEntry>,
}

/// A trained model with everything needed to encode new data for it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub schema: PairSchema,
    pub vocab: Vocab,
    pub preprocessing: Preprocessing,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let values = &self.model.params.values;
        let mut offset = 0;
        let tensors = values
            .entries()
            .into_iter()
            .map(|e| {
                let t = TensorEntry {
                    name: e.name,
                    shape: [e.shape.0, e.shape.1],
                    offset,
                };
                offset += e.data.len();
                t
            })
            .collect();
        let manifest = Manifest {
            format_version: CHECKPOINT_VERSION,
            model: self.model.config.clone(),
            class_names: self.model.config.class_names.clone(),
            schema: self.schema.clone(),
            vocab: self.vocab.clone(),
            preprocessing: self.preprocessing.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for x in values.flatten() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: String| Error::Format(m);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(fmt("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(fmt(format!(
                "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < len {
            return Err(fmt("truncated manifest".into()));
        }
        let manifest: Manifest =
            serde_json::from_slice(&body[..len]).map_err(|e| fmt(format!("manifest: {e}")))?;
        if manifest.format_version != version || manifest.class_names != manifest.model.class_names
        {
            return Err(fmt("manifest header fields disagree".into()));
        }
        manifest
            .model
            .validate()
            .map_err(|e| fmt(format!("stored model config: {e}")))?;
        let mut params = Params::init(
            &manifest.model,
            manifest.vocab.num_tokens(),
            manifest.vocab.num_positions(),
        )
        .map_err(|e| fmt(format!("stored model config: {e}")))?;
        let expected = params.entries();
        let layout_ok = expected.len() == manifest.tensors.len()
            && expected
                .iter()
                .zip(&manifest.tensors)
                .fold((true, 0), |(ok, off), (e, t)| {
                    (
                        ok && e.name == t.name
                            && [e.shape.0, e.shape.1] == t.shape
                            && t.offset == off,
                        off + e.data.len(),
                    )
                })
                .0;
        if !layout_ok {
            return Err(fmt(
                "tensor shapes do not match the stored model config".into()
            ));
        }
        let n = params.num_scalars();
        let data = &body[len..];
        if data.len() != 8 * n {
            return Err(fmt(format!(
                "parameter section holds {} bytes, expected {}",
                data.len(),
                8 * n
            )));
        }
        let flat: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.assign_flat(&flat)?;
        Ok(Self {
            model: Model::from_params(manifest.model, params)?,
            schema: manifest.schema,
            vocab: manifest.vocab,
            preprocessing: manifest.preprocessing,
        })
    }

    /// Writes to a sibling temporary file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        let write = || -> std::io::Result<()> {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()
        };
        write().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
