//! The hierarchical latent: `L` grids at dyadically decreasing resolution.

use rand::Rng;

use crate::error::{Error, Result};

/// Largest number of pyramid levels accepted.
pub const MAX_LEVELS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
enum Values {
    Continuous(Vec<f64>),
    Integer { values: Vec<i32>, amplitudes: Vec<u32> },
}

/// Latent pyramid. Level `k` is a `ceil(H / 2^k) × ceil(W / 2^k)` grid;
/// all levels live in one flat buffer, finest first.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPyramid {
    height: usize,
    width: usize,
    offsets: Vec<usize>,
    values: Values,
}

impl LatentPyramid {
    /// Zero-initialized continuous pyramid.
    pub fn new(height: usize, width: usize, levels: usize) -> Result<Self> {
        let offsets = Self::layout(height, width, levels)?;
        let total = *offsets.last().unwrap();
        Ok(Self {
            height,
            width,
            offsets,
            values: Values::Continuous(vec![0.0; total]),
        })
    }

    /// Continuous pyramid from a flat buffer laid out finest level first.
    pub fn from_flat(height: usize, width: usize, levels: usize, flat: Vec<f64>) -> Result<Self> {
        let mut pyr = Self::new(height, width, levels)?;
        if flat.len() != pyr.len() {
            return Err(Error::DimensionMismatch(format!(
                "flat latent has {} values, expected {}",
                flat.len(),
                pyr.len()
            )));
        }
        pyr.values = Values::Continuous(flat);
        Ok(pyr)
    }

    /// Integer pyramid; amplitudes are the per-channel max magnitudes.
    pub fn from_integers(height: usize, width: usize, levels: usize, flat: Vec<i32>) -> Result<Self> {
        let offsets = Self::layout(height, width, levels)?;
        if flat.len() != *offsets.last().unwrap() {
            return Err(Error::DimensionMismatch(format!(
                "flat latent has {} values, expected {}",
                flat.len(),
                offsets.last().unwrap()
            )));
        }
        let amplitudes = offsets
            .windows(2)
            .map(|r| flat[r[0]..r[1]].iter().map(|v| v.unsigned_abs()).max().unwrap_or(0))
            .collect();
        Ok(Self {
            height,
            width,
            offsets,
            values: Values::Integer { values: flat, amplitudes },
        })
    }

    fn layout(height: usize, width: usize, levels: usize) -> Result<Vec<usize>> {
        if levels == 0 || levels > MAX_LEVELS {
            return Err(Error::invalid(format!("latent levels must be in 1..={MAX_LEVELS}, got {levels}")));
        }
        if height == 0 || width == 0 {
            return Err(Error::invalid("latent pyramid needs a non-empty image"));
        }
        let mut offsets = Vec::with_capacity(levels + 1);
        let mut acc = 0;
        offsets.push(0);
        for k in 0..levels {
            let (h, w) = Self::level_dims(height, width, k);
            if h * w == 0 {
                return Err(Error::invalid(format!("level {k} has an empty grid")));
            }
            acc += h * w;
            offsets.push(acc);
        }
        Ok(offsets)
    }

    /// Grid size of level `k` for an `height × width` image.
    pub fn level_dims(height: usize, width: usize, k: usize) -> (usize, usize) {
        (height.div_ceil(1 << k), width.div_ceil(1 << k))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn levels(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn dims(&self, k: usize) -> (usize, usize) {
        Self::level_dims(self.height, self.width, k)
    }

    /// Total latent sample count over all levels.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat-buffer range of level `k`.
    pub fn range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn is_integer(&self) -> bool {
        matches!(self.values, Values::Integer { .. })
    }

    /// Level `k` as reals, regardless of mode.
    pub fn channel_f64(&self, k: usize) -> Vec<f64> {
        let r = self.range(k);
        match &self.values {
            Values::Continuous(v) => v[r].to_vec(),
            Values::Integer { values, .. } => values[r].iter().map(|&v| v as f64).collect(),
        }
    }

    /// Mutable access to a continuous level.
    ///
    /// Panics on an integer pyramid.
    pub fn channel_mut(&mut self, k: usize) -> &mut [f64] {
        let r = self.range(k);
        match &mut self.values {
            Values::Continuous(v) => &mut v[r],
            Values::Integer { .. } => panic!("integer latents are read-only"),
        }
    }

    /// Integer samples of level `k`, if quantized.
    pub fn channel_int(&self, k: usize) -> Option<&[i32]> {
        match &self.values {
            Values::Integer { values, .. } => Some(&values[self.range(k)]),
            Values::Continuous(_) => None,
        }
    }

    pub fn continuous(&self) -> Option<&[f64]> {
        match &self.values {
            Values::Continuous(v) => Some(v),
            Values::Integer { .. } => None,
        }
    }

    pub fn integers(&self) -> Option<&[i32]> {
        match &self.values {
            Values::Integer { values, .. } => Some(values),
            Values::Continuous(_) => None,
        }
    }

    /// Max |value| of level `k`; zero for continuous pyramids.
    pub fn amplitude(&self, k: usize) -> u32 {
        match &self.values {
            Values::Integer { amplitudes, .. } => amplitudes[k],
            Values::Continuous(_) => 0,
        }
    }

    /// Adds independent U[-0.5, 0.5] noise to every sample.
    pub fn noise_proxy<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Self> {
        let Values::Continuous(v) = &self.values else {
            return Err(Error::invalid("noise proxy needs a continuous pyramid"));
        };
        let noise = sample_noise(v.len(), rng);
        Ok(Self {
            values: Values::Continuous(v.iter().zip(noise).map(|(a, u)| a + u).collect()),
            ..self.clone()
        })
    }

    /// Rounds every sample half away from zero.
    pub fn quantize(&self) -> Result<Self> {
        let Values::Continuous(v) = &self.values else {
            return Err(Error::invalid("pyramid is already quantized"));
        };
        let ints = quantize_values(v)?;
        Self::from_integers(self.height, self.width, self.levels(), ints)
    }
}

/// `n` draws from U[-0.5, 0.5].
pub fn sample_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()
}

pub(crate) fn quantize_values(v: &[f64]) -> Result<Vec<i32>> {
    v.iter()
        .map(|&x| {
            if !x.is_finite() {
                return Err(Error::NonFinite("latent value".into()));
            }
            let r = x.round();
            if r.abs() > i32::MAX as f64 {
                return Err(Error::invalid(format!("latent value {x} out of range")));
            }
            Ok(r as i32)
        })
        .collect()
}
