//! Checkpoint directories: `index.json` plus one FGMR file per parameter
//! and per optimizer moment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LossRecord;
use crate::data::{read_tensor_stored, write_atomic, write_tensor, StoredTensor};
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::model::{FgMae, ModelConfig, ParamStore};
use crate::numerics::{Moments, SeedRng, Tensor};

pub const INDEX_FILE: &str = "index.json";
const FORMAT: &str = "fgmae-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub name: String,
    pub m_file: String,
    pub v_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointIndex {
    pub format: String,
    pub version: u32,
    pub step: usize,
    pub optimizer_step: u64,
    pub config_digest: String,
    pub model: ModelConfig,
    pub feature: FeatureSpec,
    pub params: Vec<ParamEntry>,
    pub moments: Vec<MomentEntry>,
    pub rng: SeedRng,
    pub loss_history: Vec<LossRecord>,
}

/// Full training state as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub optimizer_step: u64,
    pub config_digest: String,
    pub model: FgMae<f32>,
    pub feature: FeatureSpec,
    pub moments: BTreeMap<String, Moments<f32>>,
    pub rng: SeedRng,
    pub loss_history: Vec<LossRecord>,
}

fn file_stem(name: &str) -> String {
    name.replace(['/', '\\'], "_")
}

/// Writes into a sibling temp directory and swaps it into place.
pub fn save_checkpoint(ck: &Checkpoint, dir: &Path) -> Result<()> {
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "ckpt".into());
    let tmp = parent.join(format!(".{name}.tmp"));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    for sub in ["params", "moments"] {
        let d = tmp.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }

    let mut params = Vec::new();
    for (name, t) in ck.model.params.iter() {
        let file = format!("params/{}.fgmr", file_stem(name));
        write_tensor(&tmp.join(&file), t)?;
        params.push(ParamEntry {
            name: name.clone(),
            dims: t.dims().to_vec(),
            file,
        });
    }
    let mut moments = Vec::new();
    for (name, mo) in &ck.moments {
        let stem = file_stem(name);
        let (m_file, v_file) = (format!("moments/{stem}.m.fgmr"), format!("moments/{stem}.v.fgmr"));
        write_tensor(&tmp.join(&m_file), &mo.m)?;
        write_tensor(&tmp.join(&v_file), &mo.v)?;
        moments.push(MomentEntry {
            name: name.clone(),
            m_file,
            v_file,
        });
    }
    let index = CheckpointIndex {
        format: FORMAT.into(),
        version: 1,
        step: ck.step,
        optimizer_step: ck.optimizer_step,
        config_digest: ck.config_digest.clone(),
        model: ck.model.config.clone(),
        feature: ck.feature,
        params,
        moments,
        rng: ck.rng.clone(),
        loss_history: ck.loss_history.clone(),
    };
    write_atomic(&tmp.join(INDEX_FILE), &serde_json::to_vec_pretty(&index)?)?;

    let old: Option<PathBuf> = if dir.exists() {
        let old = parent.join(format!(".{name}.old"));
        if old.exists() {
            std::fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
        }
        std::fs::rename(dir, &old).map_err(|e| Error::io(dir, e))?;
        Some(old)
    } else {
        None
    };
    std::fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
    if let Some(old) = old {
        std::fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    }
    Ok(())
}

pub fn read_index(dir: &Path) -> Result<CheckpointIndex> {
    let path = dir.join(INDEX_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: CheckpointIndex =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if index.format != FORMAT {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint index", path.display())));
    }
    Ok(index)
}

fn read_f32(path: &Path) -> Result<Tensor<f32>> {
    match read_tensor_stored(path)? {
        StoredTensor::F32(t) => Ok(t),
        StoredTensor::F64(_) => Err(Error::Checkpoint(format!("{} holds f64 data, expected f32", path.display()))),
    }
}

/// Loads a checkpoint, checking each tensor against the shape in the index.
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let index = read_index(dir)?;
    let mut params = ParamStore::new();
    for e in &index.params {
        let t = read_f32(&dir.join(&e.file))?;
        if t.dims() != e.dims.as_slice() {
            return Err(Error::ParamShape {
                name: e.name.clone(),
                expected: e.dims.clone(),
                found: t.dims().to_vec(),
            });
        }
        params.insert(e.name.clone(), t);
    }
    let mut moments = BTreeMap::new();
    for e in &index.moments {
        let m = read_f32(&dir.join(&e.m_file))?;
        let v = read_f32(&dir.join(&e.v_file))?;
        let p = params
            .get(&e.name)
            .map_err(|_| Error::Checkpoint(format!("moments for unknown parameter {}", e.name)))?;
        if m.dims() != p.dims() || v.dims() != p.dims() {
            return Err(Error::ParamShape {
                name: e.name.clone(),
                expected: p.dims().to_vec(),
                found: m.dims().to_vec(),
            });
        }
        moments.insert(e.name.clone(), Moments { m, v });
    }
    Ok(Checkpoint {
        step: index.step,
        optimizer_step: index.optimizer_step,
        config_digest: index.config_digest,
        model: FgMae {
            config: index.model,
            params,
        },
        feature: index.feature,
        moments,
        rng: index.rng,
        loss_history: index.loss_history,
    })
}

/// Copies checkpoint parameters into a freshly built model for `config`.
/// Every parameter the model expects must be present with the same shape;
/// extra checkpoint parameters (e.g. decoder weights when only the encoder
/// is needed) are ignored unless `strict`.
pub fn load_params_into(model: &mut FgMae<f32>, stored: &ParamStore<f32>, strict: bool) -> Result<()> {
    let names: Vec<String> = model.params.names().cloned().collect();
    for name in &names {
        let t = stored
            .get(name)
            .map_err(|_| Error::Checkpoint(format!("checkpoint lacks parameter {name}")))?;
        model.params.assign(name, t.clone())?;
    }
    if strict {
        if let Some(extra) = stored.names().find(|n| !model.params.contains(n)) {
            return Err(Error::Checkpoint(format!("checkpoint has unexpected parameter {extra}")));
        }
    }
    Ok(())
}
