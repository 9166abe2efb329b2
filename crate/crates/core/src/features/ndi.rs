use serde::{Deserialize, Serialize};

use super::image_dims;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

/// Channel positions of the bands the indices need. Defaults follow the
/// Sentinel-2 L1C band order (B8 = NIR, B4 = red, B3 = green, B11 = SWIR).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandMap {
    pub nir: usize,
    pub red: usize,
    pub green: usize,
    pub swir: usize,
}

impl Default for BandMap {
    fn default() -> Self {
        Self {
            nir: 7,
            red: 3,
            green: 2,
            swir: 10,
        }
    }
}

impl BandMap {
    pub fn validate(&self, channels: usize) -> Result<()> {
        let idx = [self.nir, self.red, self.green, self.swir];
        for (i, &a) in idx.iter().enumerate() {
            if a >= channels {
                return Err(Error::Feature(format!(
                    "band index {a} out of range for {channels}-channel input"
                )));
            }
            if idx[..i].contains(&a) {
                return Err(Error::Feature(format!("band index {a} used twice in band map")));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for BandMap {
    type Err = Error;

    /// Parses `nir,red,green,swir`, e.g. `7,3,2,10`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidArgument(format!("band map {s:?} is not a list of indices")))?;
        match parts[..] {
            [nir, red, green, swir] => Ok(Self { nir, red, green, swir }),
            _ => Err(Error::InvalidArgument(format!(
                "band map needs 4 indices nir,red,green,swir; got {s:?}"
            ))),
        }
    }
}

/// `(x − y) / (x + y)`, defined as 0 where `x + y == 0`.
#[inline]
pub fn normalized_difference(x: f64, y: f64) -> f64 {
    let den = x + y;
    if den == 0.0 {
        0.0
    } else {
        (x - y) / den
    }
}

/// `[B, 3, H, W]` with channels `[NDVI, NDWI, NDBI]`.
pub fn compute_ndi<S: Scalar>(image: &Tensor<S>, bands: &BandMap) -> Result<Tensor<f64>> {
    let (b, c, h, w) = image_dims(image)?;
    bands.validate(c)?;
    let hw = h * w;
    let src = image.data();
    let mut out = Vec::with_capacity(b * 3 * hw);
    for bi in 0..b {
        let band = |k: usize, i: usize| src[(bi * c + k) * hw + i].as_f64();
        out.extend((0..hw).map(|i| normalized_difference(band(bands.nir, i), band(bands.red, i))));
        out.extend((0..hw).map(|i| normalized_difference(band(bands.green, i), band(bands.nir, i))));
        out.extend((0..hw).map(|i| normalized_difference(band(bands.swir, i), band(bands.nir, i))));
    }
    Tensor::new(vec![b, 3, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixel(nir: f64, red: f64, green: f64, swir: f64) -> Tensor<f64> {
        let mut v = vec![0.0; 13];
        v[7] = nir;
        v[3] = red;
        v[2] = green;
        v[10] = swir;
        Tensor::new([1, 13, 1, 1], v).unwrap()
    }

    #[test]
    fn ndvi_direct_arithmetic() {
        let n = compute_ndi(&pixel(0.8, 0.2, 0.1, 0.1), &BandMap::default()).unwrap();
        assert!((n.data()[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn equal_bands_give_zero() {
        let n = compute_ndi(&pixel(0.5, 0.5, 0.5, 0.5), &BandMap::default()).unwrap();
        assert_eq!(n.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_denominator_convention() {
        let n = compute_ndi(&pixel(0.0, 0.0, 0.3, 0.2), &BandMap::default()).unwrap();
        assert_eq!(n.data()[0], 0.0);
    }

    #[test]
    fn band_map_validation() {
        let img = Tensor::<f64>::zeros([1, 2, 4, 4]);
        assert!(matches!(compute_ndi(&img, &BandMap::default()), Err(Error::Feature(_))));
        let dup = BandMap {
            nir: 1,
            red: 1,
            green: 2,
            swir: 3,
        };
        assert!(dup.validate(13).is_err());
        assert_eq!("7,3,2,10".parse::<BandMap>().unwrap(), BandMap::default());
        assert!("7,3".parse::<BandMap>().is_err());
    }
}
