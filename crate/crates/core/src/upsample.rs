//! Bicubic ×2 upsampling of latent grids and assembly of the dense
//! per-pixel latent.
//!
//! Kernel: Catmull-Rom (`a = -0.5`). Output sample `o` of a doubled axis sits
//! at input coordinate `o / 2 - 0.25` (half-pixel centers). Taps that fall
//! outside the grid read the nearest edge sample. A pass always produces
//! `2n` samples per axis and is then cropped to the requested size, which
//! must be `2n - 1` or `2n`.
//!
//! With that alignment every output uses one of two fixed 4-tap filters, both
//! exactly representable in binary floating point.

use crate::error::{Error, Result};
use crate::latent::LatentPyramid;

/// Filter for even outputs `2m`, applied to inputs `m-2 ..= m+1`.
const EVEN_TAPS: [f64; 4] = [-0.0234375, 0.2265625, 0.8671875, -0.0703125];
/// Filter for odd outputs `2m+1`, applied to inputs `m-1 ..= m+2`.
const ODD_TAPS: [f64; 4] = [-0.0703125, 0.8671875, 0.2265625, -0.0234375];

#[inline]
fn taps(o: usize, n: usize) -> ([usize; 4], &'static [f64; 4]) {
    let m = (o / 2) as isize;
    let (first, w) = if o % 2 == 0 { (m - 2, &EVEN_TAPS) } else { (m - 1, &ODD_TAPS) };
    let last = n as isize - 1;
    let mut idx = [0usize; 4];
    for (t, slot) in idx.iter_mut().enumerate() {
        *slot = (first + t as isize).clamp(0, last) as usize;
    }
    (idx, w)
}

fn check_dims(h: usize, w: usize, out_h: usize, out_w: usize) -> Result<()> {
    if h == 0 || w == 0 {
        return Err(Error::invalid("cannot upsample an empty grid"));
    }
    let ok = |n: usize, out: usize| out + 1 >= 2 * n && out <= 2 * n;
    if !ok(h, out_h) || !ok(w, out_w) {
        return Err(Error::DimensionMismatch(format!(
            "{h}x{w} grid cannot be doubled to {out_h}x{out_w}"
        )));
    }
    Ok(())
}

/// Upsamples a row-major `h × w` grid by two and crops to `out_h × out_w`.
pub fn upsample_x2(input: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Result<Vec<f64>> {
    check_dims(h, w, out_h, out_w)?;
    if input.len() != h * w {
        return Err(Error::DimensionMismatch(format!(
            "grid holds {} samples, expected {}",
            input.len(),
            h * w
        )));
    }
    // Horizontal pass: h × out_w.
    let mut horiz = vec![0.0; h * out_w];
    for r in 0..h {
        let row = &input[r * w..(r + 1) * w];
        let out = &mut horiz[r * out_w..(r + 1) * out_w];
        for (o, dst) in out.iter_mut().enumerate() {
            let (idx, k) = taps(o, w);
            *dst = k[0] * row[idx[0]] + k[1] * row[idx[1]] + k[2] * row[idx[2]] + k[3] * row[idx[3]];
        }
    }
    // Vertical pass: out_h × out_w.
    let mut out = vec![0.0; out_h * out_w];
    for o in 0..out_h {
        let (idx, k) = taps(o, h);
        let dst = &mut out[o * out_w..(o + 1) * out_w];
        let rows: [&[f64]; 4] = std::array::from_fn(|t| &horiz[idx[t] * out_w..(idx[t] + 1) * out_w]);
        for (c, d) in dst.iter_mut().enumerate() {
            *d = k[0] * rows[0][c] + k[1] * rows[1][c] + k[2] * rows[2][c] + k[3] * rows[3][c];
        }
    }
    Ok(out)
}

/// Transpose of [`upsample_x2`]: maps a gradient on the `out_h × out_w`
/// output back onto the `h × w` input grid.
pub(crate) fn upsample_x2_adjoint(grad_out: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let mut horiz = vec![0.0; h * out_w];
    for o in 0..out_h {
        let (idx, k) = taps(o, h);
        let src = &grad_out[o * out_w..(o + 1) * out_w];
        for t in 0..4 {
            let dst = &mut horiz[idx[t] * out_w..(idx[t] + 1) * out_w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k[t] * s;
            }
        }
    }
    let mut grad_in = vec![0.0; h * w];
    for r in 0..h {
        let src = &horiz[r * out_w..(r + 1) * out_w];
        let dst = &mut grad_in[r * w..(r + 1) * w];
        for (o, s) in src.iter().enumerate() {
            let (idx, k) = taps(o, w);
            for t in 0..4 {
                dst[idx[t]] += k[t] * s;
            }
        }
    }
    grad_in
}

/// Upsamples one latent channel from level `level` of an `height × width`
/// pyramid to full resolution by iterated ×2 passes.
pub fn upsample_to_full(grid: &[f64], level: usize, height: usize, width: usize) -> Result<Vec<f64>> {
    let mut cur = grid.to_vec();
    for k in (1..=level).rev() {
        let (h, w) = LatentPyramid::level_dims(height, width, k);
        let (oh, ow) = LatentPyramid::level_dims(height, width, k - 1);
        cur = upsample_x2(&cur, h, w, oh, ow)?;
    }
    Ok(cur)
}

/// Dense latent: `height × width` pixels with `levels` values per pixel,
/// pixel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLatent {
    pub height: usize,
    pub width: usize,
    pub levels: usize,
    pub values: Vec<f64>,
}

impl DenseLatent {
    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.values[index * self.levels..(index + 1) * self.levels]
    }
}

/// Upsamples every channel of the pyramid to full resolution and interleaves
/// them per pixel, channel 0 first.
pub fn build_dense(pyramid: &LatentPyramid) -> Result<DenseLatent> {
    let (height, width, levels) = (pyramid.height(), pyramid.width(), pyramid.levels());
    let n = height * width;
    let mut values = vec![0.0; n * levels];
    for k in 0..levels {
        let full = upsample_to_full(&pyramid.channel_f64(k), k, height, width)?;
        if full.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "channel {k} upsampled to {} samples, expected {n}",
                full.len()
            )));
        }
        for (p, v) in full.into_iter().enumerate() {
            values[p * levels + k] = v;
        }
    }
    Ok(DenseLatent {
        height,
        width,
        levels,
        values,
    })
}
