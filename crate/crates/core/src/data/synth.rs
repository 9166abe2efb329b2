//! Synthetic multispectral and SAR scenes standing in for real imagery.
//!
//! Multispectral scenes are Voronoi partitions into land-cover classes with
//! class-specific 13-band signatures and smooth illumination modulation.
//! SAR scenes are oriented backscatter textures (equal mean intensity for
//! every class) multiplied by unit-mean gamma speckle.

use std::f64::consts::PI;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::Modality;
use crate::error::{Error, Result};
use crate::numerics::{SeedRng, Tensor};

pub const MS_CLASSES: usize = 8;
pub const SAR_CLASSES: usize = 6;

pub const MS_CLASS_NAMES: [&str; MS_CLASSES] = [
    "vegetation",
    "forest",
    "cropland",
    "water",
    "urban",
    "bare_soil",
    "snow",
    "wetland",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSceneParams {
    pub seed: u64,
    #[serde(default = "default_size")]
    pub size: usize,
    pub modality: Modality,
    /// Voronoi cells (MS) or blobs plus background (SAR).
    #[serde(default = "default_structures")]
    pub n_structures: usize,
    /// Speckle looks, SAR only.
    #[serde(default = "default_looks")]
    pub looks: f64,
    #[serde(default)]
    pub season: u8,
    /// Restrict the classes drawn; `None` uses every class.
    #[serde(default)]
    pub class_pool: Option<Vec<usize>>,
}

fn default_size() -> usize {
    264
}

fn default_structures() -> usize {
    4
}

fn default_looks() -> f64 {
    1.0
}

impl SyntheticSceneParams {
    pub fn new(seed: u64, modality: Modality) -> Self {
        Self {
            seed,
            size: default_size(),
            modality,
            n_structures: default_structures(),
            looks: default_looks(),
            season: 0,
            class_pool: None,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self.modality {
            Modality::Ms => MS_CLASSES,
            Modality::Sar => SAR_CLASSES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.looks < 1.0 || !self.looks.is_finite() {
            return Err(Error::Config(format!("speckle looks must be >= 1, got {}", self.looks)));
        }
        if self.size < 2 || self.n_structures == 0 || self.season > 3 {
            return Err(Error::Config("scene size >= 2, structures >= 1, season in 0..4".into()));
        }
        if let Some(pool) = &self.class_pool {
            if pool.is_empty() || pool.iter().any(|&c| c >= self.n_classes()) {
                return Err(Error::Config(format!("class pool {pool:?} invalid for {}", self.modality)));
            }
        }
        Ok(())
    }

    fn pool(&self) -> Vec<usize> {
        self.class_pool.clone().unwrap_or_else(|| (0..self.n_classes()).collect())
    }
}

/// A generated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// `[C, size, size]`.
    pub image: Tensor<f32>,
    /// Noise-free field for SAR scenes.
    pub clean: Option<Tensor<f32>>,
    /// Per-pixel class id, row-major.
    pub mask: Vec<u8>,
    /// Multi-hot class presence.
    pub labels: Vec<u8>,
    /// Class covering the most pixels (lowest id on ties).
    pub class: usize,
}

pub fn synth_scene(p: &SyntheticSceneParams) -> Result<Scene> {
    match p.modality {
        Modality::Ms => synth_multispectral_scene(p),
        Modality::Sar => synth_sar_scene(p),
    }
}

/// `(green, red, nir, swir)` reflectance per class.
const KEY_BANDS: [[f64; 4]; MS_CLASSES] = [
    [0.08, 0.05, 0.45, 0.20],
    [0.05, 0.03, 0.35, 0.15],
    [0.10, 0.08, 0.30, 0.22],
    [0.08, 0.05, 0.02, 0.01],
    [0.15, 0.17, 0.22, 0.30],
    [0.14, 0.20, 0.26, 0.35],
    [0.85, 0.85, 0.75, 0.10],
    [0.07, 0.05, 0.20, 0.08],
];

/// 13-band signature laid out to match the default band map
/// (green 2, red 3, NIR 7, SWIR 10).
pub fn ms_signature(class: usize) -> [f64; 13] {
    let [g, r, n, s] = KEY_BANDS[class];
    [
        0.9 * g + 0.02,
        0.8 * g + 0.01,
        g,
        r,
        r + 0.25 * (n - r),
        r + 0.5 * (n - r),
        r + 0.75 * (n - r),
        n,
        0.98 * n,
        0.3 * n,
        s,
        0.7 * s,
        0.5 * s,
    ]
}

fn voronoi(size: usize, sites: &[(f64, f64, usize)]) -> Vec<u8> {
    let mut mask = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut best = (f64::INFINITY, 0);
            for &(sx, sy, c) in sites {
                let d = (px - sx).powi(2) + (py - sy).powi(2);
                if d < best.0 {
                    best = (d, c);
                }
            }
            mask.push(best.1 as u8);
        }
    }
    mask
}

fn summarize(mask: &[u8], n_classes: usize) -> (Vec<u8>, usize) {
    let mut counts = vec![0usize; n_classes];
    for &m in mask {
        counts[m as usize] += 1;
    }
    let labels = counts.iter().map(|&c| u8::from(c > 0)).collect();
    let class = (0..n_classes).fold(0, |best, c| if counts[c] > counts[best] { c } else { best });
    (labels, class)
}

pub fn synth_multispectral_scene(p: &SyntheticSceneParams) -> Result<Scene> {
    p.validate()?;
    if p.modality != Modality::Ms {
        return Err(Error::Config("multispectral generator called with SAR params".into()));
    }
    let root = SeedRng::new(p.seed);
    let mut layout = root.split("layout");
    let pool = p.pool();
    let n = p.size;
    let sites: Vec<(f64, f64, usize)> = (0..p.n_structures)
        .map(|_| {
            let (x, y) = (layout.uniform() * n as f64, layout.uniform() * n as f64);
            (x, y, pool[layout.below(pool.len())])
        })
        .collect();
    let mask = voronoi(n, &sites);

    // seasonal illumination: a few low-frequency waves
    let mut season = root.split_indexed("season", p.season as u64);
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let ang = season.uniform() * 2.0 * PI;
            let freq = (0.5 + season.uniform() * 1.5) / n as f64;
            (ang, freq, season.uniform() * 2.0 * PI)
        })
        .collect();
    let gain = 0.9 + 0.2 * season.uniform();
    let mut noise = root.split_indexed("noise", p.season as u64);
    let hw = n * n;
    let mut data = vec![0f32; 13 * hw];
    for y in 0..n {
        for x in 0..n {
            let i = y * n + x;
            let m: f64 = waves
                .iter()
                .map(|&(a, f, ph)| (2.0 * PI * f * (x as f64 * a.cos() + y as f64 * a.sin()) + ph).sin())
                .sum::<f64>();
            let modulation = gain * (1.0 + 0.05 * m);
            let sig = ms_signature(mask[i] as usize);
            for (b, s) in sig.iter().enumerate() {
                let v = s * modulation + 0.005 * (noise.uniform() - 0.5);
                data[b * hw + i] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    let (labels, class) = summarize(&mask, MS_CLASSES);
    Ok(Scene {
        image: Tensor::new(vec![13, n, n], data)?,
        clean: None,
        mask,
        labels,
        class,
    })
}

/// Orientation (radians) and wavelength (pixels) of a SAR texture class.
pub fn sar_texture(class: usize) -> (f64, f64) {
    let angle = (class % 3) as f64 * PI / 3.0;
    let wavelength = if class < 3 { 6.0 } else { 11.0 };
    (angle, wavelength)
}

/// Mean backscatter of VV and VH; identical for every class.
pub const SAR_MEAN: [f64; 2] = [0.25, 0.1];
const SAR_CONTRAST: f64 = 0.8;

/// Unit-mean gamma speckle factors (shape `looks`, scale `1/looks`).
pub fn speckle(n: usize, looks: f64, rng: &mut SeedRng) -> Result<Vec<f64>> {
    let g = Gamma::new(looks, 1.0 / looks).map_err(|e| Error::Config(format!("speckle looks {looks}: {e}")))?;
    Ok((0..n).map(|_| g.sample(rng)).collect())
}

pub fn synth_sar_scene(p: &SyntheticSceneParams) -> Result<Scene> {
    p.validate()?;
    if p.modality != Modality::Sar {
        return Err(Error::Config("SAR generator called with multispectral params".into()));
    }
    let root = SeedRng::new(p.seed);
    let mut layout = root.split("layout");
    let pool = p.pool();
    let n = p.size;
    let nf = n as f64;
    let background = pool[layout.below(pool.len())];
    let mut mask = vec![background as u8; n * n];
    for _ in 1..p.n_structures {
        let class = pool[layout.below(pool.len())];
        let (cx, cy) = (layout.uniform() * nf, layout.uniform() * nf);
        let r = nf * (0.08 + 0.12 * layout.uniform());
        for y in 0..n {
            for x in 0..n {
                if (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2) < r * r {
                    mask[y * n + x] = class as u8;
                }
            }
        }
    }

    // per-season phase of each class texture
    let mut season = root.split_indexed("season", p.season as u64);
    let phases: Vec<[f64; 2]> = (0..SAR_CLASSES)
        .map(|_| [season.uniform() * 2.0 * PI, season.uniform() * 2.0 * PI])
        .collect();
    let hw = n * n;
    let mut clean = vec![0f64; 2 * hw];
    for y in 0..n {
        for x in 0..n {
            let i = y * n + x;
            let c = mask[i] as usize;
            let (ang, wl) = sar_texture(c);
            let t = 2.0 * PI * (x as f64 * ang.cos() + y as f64 * ang.sin()) / wl;
            for pol in 0..2 {
                clean[pol * hw + i] = SAR_MEAN[pol] * (1.0 + SAR_CONTRAST * (t + phases[c][pol]).sin());
            }
        }
    }
    let mut rng = root.split_indexed("speckle", p.season as u64);
    let factors = speckle(2 * hw, p.looks, &mut rng)?;
    let noisy: Vec<f32> = clean.iter().zip(&factors).map(|(c, f)| (c * f) as f32).collect();
    let (labels, class) = summarize(&mask, SAR_CLASSES);
    Ok(Scene {
        image: Tensor::new(vec![2, n, n], noisy)?,
        clean: Some(Tensor::new(vec![2, n, n], clean.into_iter().map(|v| v as f32).collect())?),
        mask,
        labels,
        class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{compute_ndi, BandMap};

    fn small(seed: u64, modality: Modality) -> SyntheticSceneParams {
        SyntheticSceneParams {
            size: 48,
            ..SyntheticSceneParams::new(seed, modality)
        }
    }

    #[test]
    fn vegetation_scene_has_high_ndvi() {
        let p = SyntheticSceneParams {
            class_pool: Some(vec![0]),
            ..small(1, Modality::Ms)
        };
        let s = synth_multispectral_scene(&p).unwrap();
        let img = s.image.reshape([1, 13, 48, 48]).unwrap();
        let ndi = compute_ndi(&img, &BandMap::default()).unwrap();
        let ndvi_mean = ndi.data()[..48 * 48].iter().sum::<f64>() / (48.0 * 48.0);
        assert!(ndvi_mean > 0.3, "{ndvi_mean}");
        assert_eq!(s.labels, vec![1, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn labels_match_mask() {
        for seed in 0..5 {
            for m in [Modality::Ms, Modality::Sar] {
                let s = synth_scene(&small(seed, m)).unwrap();
                for (c, &bit) in s.labels.iter().enumerate() {
                    assert_eq!(bit == 1, s.mask.contains(&(c as u8)));
                }
                assert_eq!(s.labels[s.class], 1);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_scene(&small(9, Modality::Sar)).unwrap();
        let b = synth_scene(&small(9, Modality::Sar)).unwrap();
        assert_eq!(a, b);
        let c = synth_scene(&small(10, Modality::Sar)).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn sar_channels_and_positive_values() {
        let s = synth_sar_scene(&small(2, Modality::Sar)).unwrap();
        assert_eq!(s.image.dims(), &[2, 48, 48]);
        assert!(s.image.data().iter().all(|&v| v >= 0.0));
        assert!(SyntheticSceneParams {
            looks: 0.5,
            ..small(2, Modality::Sar)
        }
        .validate()
        .is_err());
    }
}
