//! Quantization and entropy coding of MLP parameters, and the search for the
//! quantization steps of both networks.
//!
//! Each network is quantized with one scalar step `Δ` taken from
//! [`STEP_GRID`]. The quanta are coded under a zero-mean Laplace whose scale
//! comes from the standard deviation of the dequantized parameters; that
//! deviation travels in the stream header as an `f32`.

use crate::arm::{self, ContextPattern, LaplaceParams};
use crate::codec;
use crate::error::{Error, Result};
use crate::image::{self, Image};
use crate::laplace;
use crate::latent::LatentPyramid;
use crate::mlp::{Architecture, MlpWeights, Precision};
use crate::range_coder::{self, RangeDecoder, RangeEncoder};

/// Candidate quantization steps, coarsest first. The header stores an index
/// into this table.
pub const STEP_GRID: [f64; 9] = [1e-1, 5e-2, 1e-2, 5e-3, 1e-3, 5e-4, 1e-4, 5e-5, 1e-5];

/// Floor on the model deviation, relative to the step.
const SIGMA_FLOOR: f64 = 1e-6;

/// Quantized parameters of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedMlp {
    pub arch: Architecture,
    pub quanta: Vec<i32>,
    pub step: f64,
    /// Population standard deviation of the dequantized parameters, as sent.
    pub sigma: f32,
}

impl QuantizedMlp {
    pub fn dequantize(&self) -> Result<MlpWeights> {
        let flat: Vec<f64> = self.quanta.iter().map(|&q| self.step * q as f64).collect();
        MlpWeights::from_flat(self.arch.clone(), &flat, Precision::Quantized { step: self.step })
    }

    /// Laplace scale used to code the quanta, in units of the step.
    pub fn model_scale(&self) -> f64 {
        let sigma = (self.sigma as f64).max(SIGMA_FLOOR * self.step);
        sigma / std::f64::consts::SQRT_2 / self.step
    }

    pub fn amplitude(&self) -> u32 {
        self.quanta.iter().map(|q| q.unsigned_abs()).max().unwrap_or(0)
    }
}

/// Grid index of `step`, if it is one of [`STEP_GRID`].
pub fn step_index(step: f64) -> Option<usize> {
    STEP_GRID.iter().position(|&s| s == step)
}

/// Rounds every parameter to the nearest multiple of `step` (ties away from
/// zero).
pub fn quantize_weights(w: &MlpWeights, step: f64) -> Result<QuantizedMlp> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid(format!("quantization step must be positive, got {step}")));
    }
    let flat = w.to_flat();
    let quanta = flat
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                return Err(Error::NonFinite("MLP weight".into()));
            }
            let q = (v / step).round();
            if q.abs() > i32::MAX as f64 / 2.0 {
                return Err(Error::invalid(format!("weight {v} too large for step {step}")));
            }
            Ok(q as i32)
        })
        .collect::<Result<Vec<_>>>()?;
    let deq: Vec<f64> = quanta.iter().map(|&q| step * q as f64).collect();
    let n = deq.len() as f64;
    let mean = deq.iter().sum::<f64>() / n;
    let var = deq.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(QuantizedMlp {
        arch: w.arch().clone(),
        quanta,
        step,
        sigma: var.sqrt() as f32,
    })
}

/// Estimated bits for all quanta: `Σ -log2 P(q)` where `P(q)` is the
/// Laplace mass of `[Δ(q - 0.5), Δ(q + 0.5)]`, floored at 2^-16.
pub fn weight_rate_bits(q: &QuantizedMlp) -> f64 {
    let b = q.model_scale();
    q.quanta.iter().map(|&v| laplace::bin_bits(v as f64, 0.0, b)).sum()
}

/// Range-codes the quanta. The payload starts with the largest magnitude as
/// a `u32`, which bounds the coded alphabet.
pub fn encode_weights(q: &QuantizedMlp) -> Result<Vec<u8>> {
    let amp = q.amplitude();
    let cdf = range_coder::build_cdf(LaplaceParams { mu: 0.0, scale: q.model_scale() }, amp);
    let mut enc = RangeEncoder::new();
    for &v in &q.quanta {
        enc.encode_symbol(v, &cdf)?;
    }
    let mut out = amp.to_le_bytes().to_vec();
    out.extend(enc.finish());
    Ok(out)
}

pub fn decode_weights(payload: &[u8], arch: Architecture, step: f64, sigma: f32) -> Result<QuantizedMlp> {
    if payload.len() < 4 {
        return Err(Error::corrupt("weight substream is truncated"));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::corrupt(format!("invalid weight deviation {sigma}")));
    }
    let amp = u32::from_le_bytes(payload[..4].try_into().unwrap());
    if amp > i32::MAX as u32 / 2 {
        return Err(Error::corrupt("weight amplitude out of range"));
    }
    let mut q = QuantizedMlp {
        quanta: Vec::new(),
        arch,
        step,
        sigma,
    };
    let cdf = range_coder::build_cdf(LaplaceParams { mu: 0.0, scale: q.model_scale() }, amp);
    let mut dec = RangeDecoder::new(&payload[4..])?;
    q.quanta = (0..q.arch.param_count()).map(|_| dec.decode_symbol(&cdf)).collect::<Result<_>>()?;
    dec.finish()?;
    Ok(q)
}

/// Cost terms of one step pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairCost {
    pub synthesis_index: usize,
    pub arm_index: usize,
    /// MSE of the 8-bit reconstruction on the `[0, 1]` scale.
    pub distortion: f64,
    pub latent_bits: f64,
    pub synthesis_bits: f64,
    pub arm_bits: f64,
    /// `distortion + λ (latent + synthesis + arm bits) / pixels`.
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepSearch {
    pub best: PairCost,
    /// Every evaluated pair, synthesis index major.
    pub table: Vec<PairCost>,
}

/// Everything a step search evaluates: the image, the quantized latents and
/// the full-precision networks.
pub struct SearchInput<'a> {
    pub image: &'a Image,
    pub latents: &'a LatentPyramid,
    pub synthesis: &'a MlpWeights,
    pub arm: &'a MlpWeights,
    pub pattern: &'a ContextPattern,
    pub lambda: f64,
}

/// Evaluates the rate-distortion cost of every `(synthesis, arm)` pair of
/// grid indices and returns the cheapest. Ties go to the coarser steps,
/// synthesis first.
///
/// Distortion depends only on the synthesis step and latent rate only on
/// the context-model step, so each network is quantized and evaluated once
/// per candidate and the pair costs are assembled from those terms.
pub fn search_steps(input: &SearchInput<'_>, synthesis_candidates: &[usize], arm_candidates: &[usize]) -> Result<StepSearch> {
    let sorted = |c: &[usize]| -> Result<Vec<usize>> {
        let mut c = c.to_vec();
        c.sort_unstable();
        c.dedup();
        if c.is_empty() || c.iter().any(|&i| i >= STEP_GRID.len()) {
            return Err(Error::invalid("step candidates must be non-empty grid indices"));
        }
        Ok(c)
    };
    let synth_idx = sorted(synthesis_candidates)?;
    let arm_idx = sorted(arm_candidates)?;
    let pixels = input.image.pixels() as f64;

    let synth_terms = synth_idx
        .iter()
        .map(|&i| {
            let q = quantize_weights(input.synthesis, STEP_GRID[i])?;
            let recon = codec::synthesize(input.latents, &q.dequantize()?)?;
            Ok((distortion(input.image, &recon)?, weight_rate_bits(&q)))
        })
        .collect::<Result<Vec<_>>>()?;
    let arm_terms = arm_idx
        .iter()
        .map(|&j| {
            let q = quantize_weights(input.arm, STEP_GRID[j])?;
            let latent = arm::rate_bits(input.latents, &q.dequantize()?, input.pattern)?;
            Ok((latent, weight_rate_bits(&q)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = Vec::with_capacity(synth_idx.len() * arm_idx.len());
    let mut best: Option<PairCost> = None;
    for (&i, &(distortion, synthesis_bits)) in synth_idx.iter().zip(&synth_terms) {
        for (&j, &(latent_bits, arm_bits)) in arm_idx.iter().zip(&arm_terms) {
            let cost = distortion + input.lambda * (latent_bits + synthesis_bits + arm_bits) / pixels;
            let pc = PairCost {
                synthesis_index: i,
                arm_index: j,
                distortion,
                latent_bits,
                synthesis_bits,
                arm_bits,
                cost,
            };
            table.push(pc);
            if cost.is_finite() && best.map_or(true, |b| cost < b.cost) {
                best = Some(pc);
            }
        }
    }
    let best = best.ok_or_else(|| Error::Divergence("every quantization step pair has a non-finite cost".into()))?;
    Ok(StepSearch { best, table })
}

/// MSE between two 8-bit images on the `[0, 1]` scale.
pub fn distortion(a: &Image, b: &Image) -> Result<f64> {
    Ok(image::mse(a, b)? / (255.0 * 255.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// One input, no hidden layer: `n/2` weights followed by `n/2` biases.
    fn net(flat: &[f64]) -> MlpWeights {
        MlpWeights::from_flat(Architecture::new(1, vec![], flat.len() / 2), flat, Precision::Full).unwrap()
    }

    #[test]
    fn grid_scalar_quantizer() {
        let w = net(&[0.04, -0.06]);
        let q = quantize_weights(&w, 0.05).unwrap();
        assert_eq!(q.quanta, vec![1, -1]);
        assert_eq!(q.dequantize().unwrap().to_flat(), vec![0.05, -0.05]);
        assert!(quantize_weights(&w, 0.0).is_err());
        assert!(quantize_weights(&net(&[f64::NAN, 0.0]), 0.1).is_err());
    }

    #[test]
    fn coarse_step_zeroes_everything() {
        let q = quantize_weights(&net(&[0.01, -0.02, 0.015, 0.0]), 0.1).unwrap();
        assert!(q.quanta.iter().all(|&v| v == 0));
        assert_eq!(q.sigma, 0.0);
        let bits = weight_rate_bits(&q);
        assert!(bits.is_finite() && bits >= 0.0);
        let per = -laplace::bin_prob(0.0, 0.0, q.model_scale()).log2();
        assert!((bits - 4.0 * per).abs() < 1e-12);
        let payload = encode_weights(&q).unwrap();
        let back = decode_weights(&payload, q.arch.clone(), q.step, q.sigma).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn quantization_error_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = MlpWeights::init(Architecture::two_hidden(7, 12, 3), &mut rng).unwrap();
        for &step in &STEP_GRID {
            let q = quantize_weights(&w, step).unwrap();
            let deq = q.dequantize().unwrap().to_flat();
            for (a, b) in w.to_flat().iter().zip(&deq) {
                assert!((a - b).abs() <= step / 2.0 * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn single_parameter_rate() {
        let q = QuantizedMlp {
            arch: Architecture::new(1, vec![], 1),
            quanta: vec![0],
            step: 0.01,
            sigma: 0.01,
        };
        // -log2(1 - exp(-0.005 * sqrt(2) / 0.01))
        let expected = -(1.0 - (-0.005 * 2f64.sqrt() / 0.01).exp()).log2();
        let bits = weight_rate_bits(&q);
        assert!((bits - expected).abs() < 1e-6, "{bits}");
        assert!((bits - 0.9802).abs() < 1e-3);
    }

    #[test]
    fn estimate_matches_coded_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = MlpWeights::init(Architecture::two_hidden(12, 12, 2), &mut rng).unwrap();
        for &step in &STEP_GRID[..6] {
            let q = quantize_weights(&w, step).unwrap();
            let payload = encode_weights(&q).unwrap();
            let coded = ((payload.len() - 4) * 8) as f64;
            let est = weight_rate_bits(&q);
            assert!(coded <= est * 1.02 + 64.0, "step {step}: coded {coded} est {est}");
            let back = decode_weights(&payload, q.arch.clone(), q.step, q.sigma).unwrap();
            assert_eq!(back.dequantize().unwrap(), q.dequantize().unwrap());
        }
    }

    #[test]
    fn fine_steps_round_trip_through_escape() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let w = MlpWeights::init(Architecture::two_hidden(7, 12, 3), &mut rng).unwrap();
        let q = quantize_weights(&w, 1e-5).unwrap();
        assert!(q.amplitude() > range_coder::MAX_DIRECT_AMPLITUDE);
        let payload = encode_weights(&q).unwrap();
        assert_eq!(decode_weights(&payload, q.arch.clone(), q.step, q.sigma).unwrap(), q);
        assert!(decode_weights(&payload[..payload.len() - 2], q.arch.clone(), q.step, q.sigma).is_err());
    }

    #[test]
    fn grid_indices() {
        assert_eq!(step_index(1e-1), Some(0));
        assert_eq!(step_index(1e-5), Some(8));
        assert_eq!(step_index(2e-3), None);
    }
}
