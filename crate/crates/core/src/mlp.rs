//! Small fully connected ReLU networks used for synthesis and for the
//! context model.

use rand::Rng;

use crate::error::{Error, Result};

/// Layer sizes: `input → hidden[0] → … → output`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl Architecture {
    pub fn new(input: usize, hidden: Vec<usize>, output: usize) -> Self {
        Self { input, hidden, output }
    }

    /// Two hidden layers of `width`.
    pub fn two_hidden(input: usize, width: usize, output: usize) -> Self {
        Self::new(input, vec![width, width], output)
    }

    /// `(fan_in, fan_out)` for every layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input;
        for &h in self.hidden.iter().chain(std::iter::once(&self.output)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Multiplications for one forward pass.
    pub fn macs(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o).sum()
    }

    pub fn max_width(&self) -> usize {
        self.hidden.iter().copied().chain([self.input, self.output]).max().unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid(format!("degenerate architecture {self:?}")));
        }
        Ok(())
    }
}

/// Decoder multiplications per image pixel: one synthesis pass per pixel
/// plus one context-model pass per latent sample, where a pyramid of
/// `levels` holds `Σ 4^-k` latent samples per pixel.
pub fn mac_per_pixel(synthesis: &Architecture, arm: &Architecture, levels: usize) -> f64 {
    let density: f64 = (0..levels).map(|k| 0.25f64.powi(k as i32)).sum();
    synthesis.macs() as f64 + arm.macs() as f64 * density
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `fan_out × fan_in`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Precision {
    Full,
    /// Every parameter is an integer multiple of the step.
    Quantized { step: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpWeights {
    arch: Architecture,
    layers: Vec<Layer>,
    precision: Precision,
}

impl MlpWeights {
    /// All-zero weights and biases.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .layer_dims()
            .into_iter()
            .map(|(i, o)| Layer {
                weight: vec![0.0; i * o],
                bias: vec![0.0; o],
            })
            .collect();
        Ok(Self {
            arch,
            layers,
            precision: Precision::Full,
        })
    }

    /// Weights uniform in `±1/√fan_in`, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut w = Self::zeros(arch)?;
        for (layer, (fan_in, _)) in w.layers.iter_mut().zip(w.arch.layer_dims()) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut layer.weight {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Ok(w)
    }

    /// Rebuilds weights from the flat order of [`MlpWeights::to_flat`].
    pub fn from_flat(arch: Architecture, flat: &[f64], precision: Precision) -> Result<Self> {
        let mut w = Self::zeros(arch)?;
        if flat.len() != w.arch.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for an architecture of {}",
                flat.len(),
                w.arch.param_count()
            )));
        }
        let mut at = 0;
        for layer in &mut w.layers {
            for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *v = flat[at];
                at += 1;
            }
        }
        w.precision = precision;
        Ok(w)
    }

    /// Layer by layer: weights row-major, then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.arch.input {
            return Err(Error::DimensionMismatch(format!(
                "MLP expects {} inputs, got {}",
                self.arch.input,
                input.len()
            )));
        }
        let mut scratch = Scratch::new(&self.arch);
        let mut out = vec![0.0; self.arch.output];
        self.forward_into(input, &mut scratch, &mut out);
        Ok(out)
    }

    /// Allocation-free forward pass. Each output starts from its bias and
    /// accumulates products in input order; encoder and decoder rely on this
    /// order being fixed.
    pub fn forward_into(&self, input: &[f64], scratch: &mut Scratch, out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.arch.input);
        let Scratch { a, b } = scratch;
        a[..input.len()].copy_from_slice(input);
        let mut width = input.len();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let fan_out = layer.bias.len();
            for o in 0..fan_out {
                let row = &layer.weight[o * width..(o + 1) * width];
                let mut acc = layer.bias[o];
                for (w, x) in row.iter().zip(&a[..width]) {
                    acc += w * x;
                }
                b[o] = if li < last { acc.max(0.0) } else { acc };
            }
            std::mem::swap(a, b);
            width = fan_out;
        }
        out.copy_from_slice(&a[..width]);
    }
}

/// Reusable activation buffers for [`MlpWeights::forward_into`].
#[derive(Clone, Debug)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Scratch {
    pub fn new(arch: &Architecture) -> Self {
        let n = arch.max_width();
        Self {
            a: vec![0.0; n],
            b: vec![0.0; n],
        }
    }
}
