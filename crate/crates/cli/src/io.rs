//! File helpers: JSON config documents, numeric matrices, text outputs.

use std::path::{Path, PathBuf};

use fgmae::data::{decode_tensor, MAGIC};
use fgmae::{Error, Result};
use serde_json::{Map, Value};

/// A parsed JSON config object plus the directory relative paths in it
/// resolve from.
pub struct ConfigDoc {
    pub map: Map<String, Value>,
    pub base: PathBuf,
}

impl ConfigDoc {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let Value::Object(map) = value else {
            return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
        };
        Ok(Self {
            map,
            base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    /// Removes a path-valued key, resolving it against the config's directory.
    pub fn take_path(&mut self, key: &str) -> Result<Option<PathBuf>> {
        match self.map.remove(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(self.base.join(s))),
            Some(other) => Err(Error::Config(format!("`{key}` must be a path string, got {other}"))),
        }
    }

    /// Sets `key`, logging when a flag replaces a config value.
    pub fn override_field(&mut self, key: &str, flag: &str, value: Value) {
        match self.map.get(key) {
            Some(old) if *old != value => eprintln!("note: {flag} overrides config {key} ({old} -> {value})"),
            _ => {}
        }
        self.map.insert(key.to_string(), value);
    }

    /// Seed precedence: flag, then config, then `FGMAE_SEED`.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<()> {
        if let Some(s) = flag {
            self.override_field("seed", "--seed", s.into());
        } else if !self.map.contains_key("seed") {
            if let Some(s) = env_seed()? {
                eprintln!("note: seed {s} taken from FGMAE_SEED");
                self.map.insert("seed".into(), s.into());
            }
        }
        Ok(())
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.map)
    }
}

pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var("FGMAE_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("FGMAE_SEED={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// A numeric array: FGMR tensors keep their dims; text files are rows of
/// comma- or whitespace-separated numbers (`#` starts a comment line).
pub struct Matrix {
    pub data: Vec<f64>,
    pub cols: usize,
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        let t = decode_tensor(&bytes, path)?.into_tensor::<f64>();
        let dims = t.dims().to_vec();
        let cols = match dims.len() {
            0 => 1,
            1 => dims[0],
            _ => *dims.last().unwrap(),
        };
        return Ok(Matrix {
            data: t.data().to_vec(),
            cols,
        });
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Config(format!("{}: not FGMR or text", path.display())))?;
    let mut data = Vec::new();
    let mut cols = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Config(format!(
                    "{}:{}: row has {} values, expected {c}",
                    path.display(),
                    i + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        data.extend(row);
    }
    Ok(Matrix {
        data,
        cols: cols.unwrap_or(0),
    })
}

/// Non-negative integer entries (class ids, 0/1 flags).
pub fn as_ids(m: &Matrix, what: &str) -> Result<Vec<usize>> {
    m.data
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{what}: {v} is not a class id")))
            }
        })
        .collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Prefixes CSV text with the `# config sha256:` line.
pub fn stamped(digest: &str, csv: &str) -> String {
    format!("# config sha256:{digest}\n{csv}")
}
