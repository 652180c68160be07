//! Rate-distortion training of the latents and both networks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arm::ContextPattern;
use crate::autodiff::{Adam, Graph, NodeId, Op, ParamId, ParamSet};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::latent::{self, LatentPyramid};
use crate::mlp::{Architecture, MlpWeights, Precision};

use super::EncodeConfig;

/// Fraction of iterations run at the base learning rate before the cosine
/// decay.
const CONSTANT_FRACTION: f64 = 0.9;
/// Trailing fraction of iterations whose quantized cost is tracked for
/// checkpoint selection.
const SELECTION_FRACTION: f64 = 0.02;
/// Spacing, as a fraction of iterations, of the quantized-loss checkpoints
/// taken before the decay.
const CHECKPOINT_FRACTION: f64 = 0.01;

/// Result of training: continuous latents and full-precision networks.
#[derive(Clone, Debug)]
pub struct Trained {
    pub latents: LatentPyramid,
    pub synthesis: MlpWeights,
    pub arm: MlpWeights,
    pub iterations: usize,
    /// Loss with true quantization at the selected checkpoint.
    pub quantized_loss: f64,
}

struct Net {
    layers: Vec<(ParamId, ParamId)>,
}

impl Net {
    fn register(w: &MlpWeights, params: &mut ParamSet) -> Self {
        let layers = w
            .layers()
            .iter()
            .map(|l| (params.add(l.weight.clone()), params.add(l.bias.clone())))
            .collect();
        Self { layers }
    }

    fn build(&self, graph: &mut Graph, params: &ParamSet, arch: &Architecture, mut x: NodeId) -> Result<NodeId> {
        let dims = arch.layer_dims();
        let last = dims.len() - 1;
        for (li, (&(w, b), &(in_dim, out_dim))) in self.layers.iter().zip(&dims).enumerate() {
            let wn = graph.push(Op::Param(w), params)?;
            let bn = graph.push(Op::Param(b), params)?;
            x = graph.push(Op::Affine { x, w: wn, b: bn, in_dim, out_dim }, params)?;
            if li < last {
                x = graph.push(Op::Relu(x), params)?;
            }
        }
        Ok(x)
    }

    fn extract(&self, params: &ParamSet, arch: &Architecture) -> Result<MlpWeights> {
        let flat: Vec<f64> = self
            .layers
            .iter()
            .flat_map(|&(w, b)| params.get(w).values.iter().chain(&params.get(b).values).copied())
            .collect();
        MlpWeights::from_flat(arch.clone(), &flat, Precision::Full)
    }
}

/// The training graph:
/// `loss = MSE(x, f_θ(upsample(y + u))) + λ / pixels · Σ -log2 p_ψ(y + u)`.
struct Model {
    graph: Graph,
    params: ParamSet,
    latent: ParamId,
    noise: NodeId,
    loss: NodeId,
    synthesis: Net,
    arm: Net,
    synth_arch: Architecture,
    arm_arch: Architecture,
    height: usize,
    width: usize,
    levels: usize,
}

impl Model {
    fn new(image: &Image, cfg: &EncodeConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (height, width, levels) = (image.height, image.width, cfg.levels);
        let pyramid = LatentPyramid::new(height, width, levels)?;
        let pattern = ContextPattern::new(cfg.context)?;
        let synth_arch = Architecture::two_hidden(levels, cfg.hidden_width, image.channels);
        let arm_arch = Architecture::two_hidden(cfg.context, cfg.hidden_width, 2);
        let synth_init = MlpWeights::init(synth_arch.clone(), rng)?;
        let arm_init = MlpWeights::init(arm_arch.clone(), rng)?;

        let mut params = ParamSet::new();
        let latent = params.add(pyramid.continuous().unwrap().to_vec());
        let synthesis = Net::register(&synth_init, &mut params);
        let arm = Net::register(&arm_init, &mut params);

        let mut g = Graph::new();
        let y = g.push(Op::Param(latent), &params)?;
        let noise = g.push(Op::Input(pyramid.len()), &params)?;
        let noisy = g.push(Op::Add(y, noise), &params)?;

        let mut channels = Vec::with_capacity(levels);
        for k in 0..levels {
            let r = pyramid.range(k);
            let mut cur = g.push(Op::Slice { x: noisy, start: r.start, len: r.len() }, &params)?;
            for j in (1..=k).rev() {
                let (h, w) = LatentPyramid::level_dims(height, width, j);
                let (out_h, out_w) = LatentPyramid::level_dims(height, width, j - 1);
                cur = g.push(Op::Upsample2x { x: cur, h, w, out_h, out_w }, &params)?;
            }
            channels.push(cur);
        }
        let dense = g.push(Op::Concat(channels), &params)?;
        let rgb = synthesis.build(&mut g, &params, &synth_arch, dense)?;
        let mse = g.push(Op::Mse { pred: rgb, target: planar_target(image) }, &params)?;

        // One plane per context position, each covering every latent sample.
        let c = pattern.len();
        let mut sample_major = Vec::with_capacity(pyramid.len() * c);
        for k in 0..levels {
            let (h, w) = pyramid.dims(k);
            let base = pyramid.range(k).start;
            sample_major.extend(pattern.neighbor_indices(h, w).into_iter().map(|i| i.map(|i| i + base)));
        }
        let index = (0..c).flat_map(|p| sample_major.iter().skip(p).step_by(c).copied()).collect();
        let contexts = g.push(Op::Gather { x: noisy, index }, &params)?;
        let laplace = arm.build(&mut g, &params, &arm_arch, contexts)?;
        let bits = g.push(Op::LaplaceBits { values: noisy, params: laplace }, &params)?;
        let rate = g.push(Op::Scale(bits, cfg.lambda / image.pixels() as f64), &params)?;
        let loss = g.push(Op::Add(mse, rate), &params)?;

        Ok(Self {
            graph: g,
            params,
            latent,
            noise,
            loss,
            synthesis,
            arm,
            synth_arch,
            arm_arch,
            height,
            width,
            levels,
        })
    }

    /// Loss with the latents rounded instead of perturbed.
    fn quantized_loss(&mut self) -> Result<f64> {
        let y = &self.params.get(self.latent).values;
        let offset: Vec<f64> = y.iter().map(|v| v.round() - v).collect();
        self.graph.set_input(self.noise, &offset)?;
        self.graph.forward(&self.params)?;
        Ok(self.graph.scalar(self.loss))
    }
}

/// Image samples on `[0, 1]`, one plane per color channel.
fn planar_target(image: &Image) -> Vec<f64> {
    let unit = image.to_unit();
    (0..image.channels).flat_map(|c| unit.iter().skip(c).step_by(image.channels).copied()).collect()
}

fn learning_rate(cfg: &EncodeConfig, scale: f64, it: usize) -> f64 {
    let n = cfg.iterations as f64;
    let t = it as f64;
    let knee = CONSTANT_FRACTION * n;
    let base = cfg.learning_rate * scale;
    let end = cfg.final_learning_rate * scale;
    if t < knee || n <= knee {
        base
    } else {
        let progress = ((t - knee) / (n - knee)).min(1.0);
        end + 0.5 * (base - end) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// Overfits latents and networks to `image`. A non-finite loss restarts
/// training once at a fifth of the learning rate.
pub fn train(image: &Image, cfg: &EncodeConfig) -> Result<Trained> {
    match run(image, cfg, 1.0) {
        Err(Error::Divergence(first)) => run(image, cfg, 0.2).map_err(|e| match e {
            Error::Divergence(second) => Error::Divergence(format!("{first}; after restart at lr/5: {second}")),
            other => other,
        }),
        other => other,
    }
}

fn run(image: &Image, cfg: &EncodeConfig, lr_scale: f64) -> Result<Trained> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::new(image, cfg, &mut rng)?;
    let mut opt = Adam::new(cfg.learning_rate * lr_scale, &model.params);
    let n = cfg.iterations;
    let selection_start = n - ((n as f64 * SELECTION_FRACTION).ceil() as usize).min(n);
    let decay_start = (n as f64 * CONSTANT_FRACTION).ceil() as usize;
    let checkpoint_every = ((n as f64 * CHECKPOINT_FRACTION).ceil() as usize).max(1);
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut checkpoint: Option<(f64, Vec<Vec<f64>>)> = None;

    for it in 0..n {
        // The noise proxy can keep improving while the rounded loss gets
        // worse (latents drift to half-integers under a sharp prior). The
        // decay starts from the best rounded state seen so far.
        if it == decay_start {
            if let Some((q, snapshot)) = checkpoint.take() {
                if q < model.quantized_loss()? {
                    model.params.restore(&snapshot);
                    opt = Adam::new(opt.lr, &model.params);
                }
            }
        }
        let noise = latent::sample_noise(model.params.get(model.latent).len(), &mut rng);
        model.graph.set_input(model.noise, &noise)?;
        model.params.zero_grad();
        model.graph.forward(&model.params)?;
        let loss = model.graph.scalar(model.loss);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("loss became {loss} at iteration {it}")));
        }
        model.graph.backward(model.loss, &mut model.params)?;
        opt.lr = learning_rate(cfg, lr_scale, it);
        opt.step(&mut model.params).map_err(|e| Error::Divergence(format!("iteration {it}: {e}")))?;

        if it < decay_start && (it + 1) % checkpoint_every == 0 {
            let q = model.quantized_loss()?;
            if q.is_finite() && checkpoint.as_ref().map_or(true, |(b, _)| q < *b) {
                checkpoint = Some((q, model.params.values()));
            }
        }
        if it >= selection_start {
            let q = model.quantized_loss()?;
            if q.is_finite() && best.as_ref().map_or(true, |(b, _)| q < *b) {
                best = Some((q, model.params.values()));
            }
        }
    }

    let quantized_loss = match best {
        Some((loss, snapshot)) => {
            model.params.restore(&snapshot);
            loss
        }
        None => model.quantized_loss()?,
    };
    if !quantized_loss.is_finite() {
        return Err(Error::Divergence(format!("final quantized loss is {quantized_loss}")));
    }
    let latents = LatentPyramid::from_flat(model.height, model.width, model.levels, model.params.get(model.latent).values.clone())?;
    Ok(Trained {
        latents,
        synthesis: model.synthesis.extract(&model.params, &model.synth_arch)?,
        arm: model.arm.extract(&model.params, &model.arm_arch)?,
        iterations: n,
        quantized_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let cfg = EncodeConfig {
            iterations: 1000,
            ..EncodeConfig::default()
        };
        assert_eq!(learning_rate(&cfg, 1.0, 0), 1e-2);
        assert_eq!(learning_rate(&cfg, 1.0, 899), 1e-2);
        assert!((learning_rate(&cfg, 1.0, 950) - (1e-4 + 0.5 * (1e-2 - 1e-4))).abs() < 1e-12);
        assert!((learning_rate(&cfg, 1.0, 1000) - 1e-4).abs() < 1e-15);
        assert!((learning_rate(&cfg, 0.2, 0) - 2e-3).abs() < 1e-15);
        let mut prev = f64::MAX;
        for it in 0..1000 {
            let lr = learning_rate(&cfg, 1.0, it);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn training_reduces_quantized_loss() {
        let px: Vec<u8> = (0..12 * 12).flat_map(|i| [(i * 3) as u8, 128, (255 - i) as u8]).collect();
        let img = Image::new(12, 12, 3, px).unwrap();
        let short = EncodeConfig {
            iterations: 1,
            lambda: 1e-3,
            levels: 3,
            ..EncodeConfig::default()
        };
        let long = EncodeConfig { iterations: 300, ..short.clone() };
        let a = train(&img, &short).unwrap();
        let b = train(&img, &long).unwrap();
        assert!(b.quantized_loss < 0.5 * a.quantized_loss, "{} vs {}", b.quantized_loss, a.quantized_loss);
        assert_eq!(b.latents.levels(), 3);
    }

    #[test]
    fn training_is_deterministic() {
        let px: Vec<u8> = (0..8 * 8 * 3).map(|i| (i * 11 % 256) as u8).collect();
        let img = Image::new(8, 8, 3, px).unwrap();
        let cfg = EncodeConfig {
            iterations: 20,
            levels: 2,
            ..EncodeConfig::default()
        };
        let a = train(&img, &cfg).unwrap();
        let b = train(&img, &cfg).unwrap();
        assert_eq!(a.latents, b.latents);
        assert_eq!(a.synthesis, b.synthesis);
        assert_eq!(a.arm, b.arm);
    }
}
