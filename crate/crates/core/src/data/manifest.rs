//! Scene manifests: one CSV row per (location, season) image.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SeedRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "MS")]
    Ms,
    #[serde(rename = "SAR")]
    Sar,
}

impl Modality {
    pub fn channels(self) -> usize {
        match self {
            Modality::Ms => 13,
            Modality::Sar => 2,
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MS" => Ok(Modality::Ms),
            "SAR" => Ok(Modality::Sar),
            _ => Err(Error::Config(format!("unknown modality {s:?} (expected MS or SAR)"))),
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modality::Ms => "MS",
            Modality::Sar => "SAR",
        })
    }
}

/// One manifest row. `label` holds class ids separated by `;` (a single id
/// for single-label tasks).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub location_id: String,
    pub season: u8,
    pub modality: Modality,
    pub path: String,
    #[serde(default)]
    pub label: Option<String>,
}

impl SceneEntry {
    /// Class ids in the label column.
    pub fn classes(&self) -> Result<Vec<usize>> {
        let Some(label) = self.label.as_deref().filter(|l| !l.is_empty()) else {
            return Ok(Vec::new());
        };
        label
            .split(';')
            .map(|c| {
                c.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Manifest(format!("bad label {label:?} for {}", self.location_id)))
            })
            .collect()
    }
}

/// A set of scene rows plus the directory their relative paths resolve from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneManifest {
    pub root: PathBuf,
    pub entries: Vec<SceneEntry>,
}

impl SceneManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<SceneEntry>) -> Result<Self> {
        let m = Self {
            root: root.into(),
            entries,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let entries = rdr.deserialize().collect::<std::result::Result<Vec<SceneEntry>, _>>()?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(root, entries)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            wtr.serialize(e)?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::Manifest(e.to_string()))?;
        super::fgmr::write_atomic(path, &bytes)
    }

    /// Seasons in 0..4 with no (location, season) pair repeated.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            if e.season > 3 {
                return Err(Error::Manifest(format!("season {} out of range for {}", e.season, e.location_id)));
            }
            if !seen.insert((e.location_id.as_str(), e.season, e.modality)) {
                return Err(Error::Manifest(format!(
                    "duplicate season {} for location {}",
                    e.season, e.location_id
                )));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, entry: &SceneEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    /// Rows grouped by location, locations in sorted order.
    pub fn locations(&self) -> BTreeMap<&str, Vec<&SceneEntry>> {
        let mut map: BTreeMap<&str, Vec<&SceneEntry>> = BTreeMap::new();
        for e in &self.entries {
            map.entry(e.location_id.as_str()).or_default().push(e);
        }
        map
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Uniformly picks one of the location's available seasons.
pub fn select_season<'a>(manifest: &'a SceneManifest, location_id: &str, rng: &mut SeedRng) -> Result<&'a SceneEntry> {
    let options: Vec<&SceneEntry> = manifest.entries.iter().filter(|e| e.location_id == location_id).collect();
    if options.is_empty() {
        return Err(Error::Manifest(format!("unknown location {location_id:?}")));
    }
    Ok(options[rng.below(options.len())])
}
