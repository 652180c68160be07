//! Autoregressive context model for the latent pyramid.
//!
//! Every latent sample is coded under a Laplace distribution whose mean and
//! log-scale are predicted by a small MLP from causal neighbors in the same
//! channel. Neighbors outside the grid read as zero.

use crate::error::{Error, Result};
use crate::laplace;
use crate::latent::LatentPyramid;
use crate::mlp::{MlpWeights, Scratch};

/// Largest supported context size.
pub const MAX_CONTEXT: usize = 24;
pub const DEFAULT_CONTEXT: usize = 12;

/// Causal neighbor offsets `(di, dj)`, in raster order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextPattern {
    offsets: Vec<(i32, i32)>,
}

impl ContextPattern {
    /// The `size` causal offsets nearest to the current sample (ties broken
    /// by row, then column), listed in raster order. For `size = 12` this is
    /// rows `i-2` and `i-1` at `dj ∈ -2..=2` plus `(0, -2)` and `(0, -1)`.
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || size > MAX_CONTEXT {
            return Err(Error::invalid(format!("context size must be in 1..={MAX_CONTEXT}, got {size}")));
        }
        let mut cand: Vec<(i32, i32)> = (-4..=0)
            .flat_map(|di| (-4..=4).map(move |dj| (di, dj)))
            .filter(|&(di, dj)| di < 0 || dj < 0)
            .collect();
        cand.sort_by_key(|&(di, dj)| (di * di + dj * dj, -di, dj));
        cand.truncate(size);
        cand.sort();
        Ok(Self { offsets: cand })
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Flat index of every neighbor of every sample of an `h × w` grid, or
    /// `None` for positions outside the grid. Sample-major.
    pub fn neighbor_indices(&self, h: usize, w: usize) -> Vec<Option<usize>> {
        let mut out = Vec::with_capacity(h * w * self.len());
        for i in 0..h {
            for j in 0..w {
                out.extend(self.offsets.iter().map(|&(di, dj)| {
                    let r = i as i64 + di as i64;
                    let c = j as i64 + dj as i64;
                    (r >= 0 && c >= 0 && (c as usize) < w).then(|| r as usize * w + c as usize)
                }));
            }
        }
        out
    }
}

impl Default for ContextPattern {
    fn default() -> Self {
        Self::new(DEFAULT_CONTEXT).unwrap()
    }
}

/// Context vector of sample `(i, j)` of a row-major `h × w` grid.
pub fn extract_context<T: Copy + Into<f64>>(grid: &[T], h: usize, w: usize, i: usize, j: usize, pattern: &ContextPattern) -> Vec<f64> {
    let mut out = vec![0.0; pattern.len()];
    fill_context(grid, h, w, i, j, pattern, &mut out);
    out
}

#[inline]
pub(crate) fn fill_context<T: Copy + Into<f64>>(grid: &[T], _h: usize, w: usize, i: usize, j: usize, pattern: &ContextPattern, out: &mut [f64]) {
    for (slot, &(di, dj)) in out.iter_mut().zip(&pattern.offsets) {
        let r = i as i64 + di as i64;
        let c = j as i64 + dj as i64;
        *slot = if r >= 0 && c >= 0 && (c as usize) < w {
            grid[r as usize * w + c as usize].into()
        } else {
            0.0
        };
    }
}

/// Laplace mean and scale of one latent sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaplaceParams {
    pub mu: f64,
    pub scale: f64,
}

impl LaplaceParams {
    pub(crate) fn from_outputs(out: &[f64]) -> Result<Self> {
        if !out[0].is_finite() || !out[1].is_finite() {
            return Err(Error::NonFinite("context model output".into()));
        }
        Ok(Self {
            mu: out[0],
            scale: laplace::scale_from_log(out[1]),
        })
    }
}

/// Runs the context model: output 0 is the mean, output 1 the log-scale.
pub fn predict(arm: &MlpWeights, context: &[f64]) -> Result<LaplaceParams> {
    if arm.arch().output != 2 {
        return Err(Error::invalid("context model must have two outputs"));
    }
    LaplaceParams::from_outputs(&arm.forward(context)?)
}

/// Probability of integer `v` under `p`, floored at 2^-16.
pub fn laplace_prob(v: i32, p: LaplaceParams) -> f64 {
    laplace::bin_prob(v as f64, p.mu, p.scale)
}

/// Laplace parameters for every sample of one channel, computed in raster
/// order from the channel's own values.
pub fn channel_params<T: Copy + Into<f64>>(grid: &[T], h: usize, w: usize, arm: &MlpWeights, pattern: &ContextPattern) -> Result<Vec<LaplaceParams>> {
    let mut scratch = Scratch::new(arm.arch());
    let mut ctx = vec![0.0; pattern.len()];
    let mut out = [0.0; 2];
    let mut params = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            fill_context(grid, h, w, i, j, pattern, &mut ctx);
            arm.forward_into(&ctx, &mut scratch, &mut out);
            params.push(LaplaceParams::from_outputs(&out)?);
        }
    }
    Ok(params)
}

/// Estimated bits for the whole pyramid: `Σ -log2 p(v | context)`. Works on
/// both continuous and integer pyramids; continuous values enter the context
/// and the integration bounds as they are.
pub fn rate_bits(pyramid: &LatentPyramid, arm: &MlpWeights, pattern: &ContextPattern) -> Result<f64> {
    Ok(channel_rates(pyramid, arm, pattern)?.iter().sum())
}

/// Per-channel estimated bits.
pub fn channel_rates(pyramid: &LatentPyramid, arm: &MlpWeights, pattern: &ContextPattern) -> Result<Vec<f64>> {
    if arm.arch().input != pattern.len() {
        return Err(Error::DimensionMismatch(format!(
            "context model takes {} inputs but the pattern has {}",
            arm.arch().input,
            pattern.len()
        )));
    }
    (0..pyramid.levels())
        .map(|k| {
            let (h, w) = pyramid.dims(k);
            let grid = pyramid.channel_f64(k);
            let params = channel_params(&grid, h, w, arm, pattern)?;
            Ok(grid
                .iter()
                .zip(&params)
                .map(|(&v, p)| laplace::bin_bits(v, p.mu, p.scale))
                .sum())
        })
        .collect()
}
