//! Encoder and decoder pipelines and the stream layout that joins them.
//!
//! Encoding trains the latents and both networks, rounds the latents, picks
//! the weight quantization steps and serializes everything. Decoding reverses
//! the serialization, entropy-decodes each latent channel in raster order,
//! upsamples and runs the synthesis network per pixel.

mod train;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use train::{train, Trained};

use crate::arm::{ContextPattern, LaplaceParams, MAX_CONTEXT};
use crate::bitstream::{self, Header, CRC_LEN};
use crate::error::{Error, Result};
use crate::image::{self, Image};
use crate::latent::{LatentPyramid, MAX_LEVELS};
use crate::mlp::{Architecture, MlpWeights, Scratch};
use crate::range_coder::{self, RangeDecoder, RangeEncoder};
use crate::upsample;
use crate::weights::{self, QuantizedMlp, SearchInput, StepSearch, STEP_GRID};

/// Output channels of the synthesis network.
pub const CHANNELS: usize = 3;
/// Largest hidden width accepted by the encoder and the stream.
pub const MAX_WIDTH: usize = 64;

/// λ for quality levels 1 (smallest files) to 5.
pub const QUALITY_LAMBDAS: [f64; 5] = [0.02, 0.004, 0.001, 0.0004, 0.0001];

/// λ of a quality level in `1..=5`.
pub fn lambda_for_quality(quality: u8) -> Result<f64> {
    match quality {
        1..=5 => Ok(QUALITY_LAMBDAS[quality as usize - 1]),
        q => Err(Error::invalid(format!("quality must be in 1..=5, got {q}"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodeConfig {
    /// Weight of the rate term; the loss is `MSE + λ · bits / pixels` with
    /// MSE on `[0, 1]` samples.
    pub lambda: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Learning rate at the end of the cosine decay.
    pub final_learning_rate: f64,
    pub levels: usize,
    pub context: usize,
    pub hidden_width: usize,
    pub seed: u64,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            lambda: QUALITY_LAMBDAS[2],
            iterations: 40_000,
            learning_rate: 1e-2,
            final_learning_rate: 1e-4,
            levels: 7,
            context: 12,
            hidden_width: 12,
            seed: 0,
        }
    }
}

impl EncodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.final_learning_rate > 0.0 && self.final_learning_rate <= self.learning_rate) {
            return Err(Error::invalid("final learning rate must be in (0, learning rate]"));
        }
        if !(1..=MAX_LEVELS).contains(&self.levels) {
            return Err(Error::invalid(format!("levels must be in 1..={MAX_LEVELS}, got {}", self.levels)));
        }
        if !(1..=MAX_CONTEXT).contains(&self.context) {
            return Err(Error::invalid(format!("context size must be in 1..={MAX_CONTEXT}, got {}", self.context)));
        }
        if !(1..=MAX_WIDTH).contains(&self.hidden_width) {
            return Err(Error::invalid(format!("hidden width must be in 1..={MAX_WIDTH}, got {}", self.hidden_width)));
        }
        Ok(())
    }

    pub fn synthesis_arch(&self) -> Architecture {
        Architecture::two_hidden(self.levels, self.hidden_width, CHANNELS)
    }

    pub fn arm_arch(&self) -> Architecture {
        Architecture::two_hidden(self.context, self.hidden_width, 2)
    }
}

/// Rate and distortion of one encode. Rates come from the stream length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdReport {
    /// `null` in JSON when the reconstruction is exact.
    pub psnr_db: f64,
    pub bpp_total: f64,
    pub bpp_latent: f64,
    pub bpp_mlp: f64,
    /// Header, length prefixes of the weight substreams and checksum.
    pub bpp_header: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl RdReport {
    /// Fraction of the stream spent on network weights.
    pub fn mlp_share(&self) -> f64 {
        self.bpp_mlp / self.bpp_total
    }
}

/// Byte accounting of a stream. The fields sum to the stream length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamSizes {
    /// Fixed header, amplitudes and the trailing checksum.
    pub header: usize,
    /// Both weight substreams with their length prefixes.
    pub mlp: usize,
    /// Every latent substream with its length prefix.
    pub latent: usize,
    /// Payload bytes of each latent substream, without the prefix.
    pub latent_payloads: Vec<usize>,
}

impl StreamSizes {
    pub fn total(&self) -> usize {
        self.header + self.mlp + self.latent
    }
}

/// The coded parts of an image.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamParts {
    /// Integer latents.
    pub latents: LatentPyramid,
    pub synthesis: QuantizedMlp,
    pub arm: QuantizedMlp,
    pub pattern: ContextPattern,
}

#[derive(Clone, Debug)]
pub struct EncodeOutput {
    pub bytes: Vec<u8>,
    pub report: RdReport,
    pub sizes: StreamSizes,
    /// What the decoder will produce from `bytes`.
    pub reconstruction: Image,
    pub search: StepSearch,
    pub parts: StreamParts,
}

/// Fits the codec to `img` and serializes the result.
pub fn encode(img: &Image, cfg: &EncodeConfig) -> Result<EncodeOutput> {
    let start = Instant::now();
    cfg.validate()?;
    check_image(img)?;
    let trained = train(img, cfg)?;
    let latents = trained.latents.quantize()?;
    let pattern = ContextPattern::new(cfg.context)?;
    let all: Vec<usize> = (0..STEP_GRID.len()).collect();
    let search = weights::search_steps(
        &SearchInput {
            image: img,
            latents: &latents,
            synthesis: &trained.synthesis,
            arm: &trained.arm,
            pattern: &pattern,
            lambda: cfg.lambda,
        },
        &all,
        &all,
    )?;
    let parts = StreamParts {
        synthesis: weights::quantize_weights(&trained.synthesis, STEP_GRID[search.best.synthesis_index])?,
        arm: weights::quantize_weights(&trained.arm, STEP_GRID[search.best.arm_index])?,
        latents,
        pattern,
    };
    let bytes = write_stream(&parts)?;
    let reconstruction = synthesize(&parts.latents, &parts.synthesis.dequantize()?)?;
    let sizes = parse_stream(&bytes)?.sizes;
    let pixels = img.pixels() as f64;
    let bpp = |bytes: usize| 8.0 * bytes as f64 / pixels;
    let report = RdReport {
        psnr_db: image::psnr(img, &reconstruction)?,
        bpp_total: bpp(bytes.len()),
        bpp_latent: bpp(sizes.latent),
        bpp_mlp: bpp(sizes.mlp),
        bpp_header: bpp(sizes.header),
        iterations: trained.iterations,
        seconds: start.elapsed().as_secs_f64(),
        lambda: cfg.lambda,
        seed: cfg.seed,
    };
    Ok(EncodeOutput {
        bytes,
        report,
        sizes,
        reconstruction,
        search,
        parts,
    })
}

fn check_image(img: &Image) -> Result<()> {
    if img.channels != CHANNELS {
        return Err(Error::UnsupportedImage(format!("{} channels; the codec takes RGB", img.channels)));
    }
    if img.height > u16::MAX as usize || img.width > u16::MAX as usize {
        return Err(Error::UnsupportedImage(format!("{}x{} exceeds 65535 in a dimension", img.height, img.width)));
    }
    Ok(())
}

/// Runs the synthesis network on the upsampled latents and converts to 8-bit
/// samples: clamp to `[0, 1]`, scale by 255, round half away from zero.
pub fn synthesize(latents: &LatentPyramid, synthesis: &MlpWeights) -> Result<Image> {
    synthesize_counted(latents, synthesis, &mut 0)
}

fn synthesize_counted(latents: &LatentPyramid, synthesis: &MlpWeights, macs: &mut u64) -> Result<Image> {
    let arch = synthesis.arch();
    if arch.input != latents.levels() {
        return Err(Error::DimensionMismatch(format!(
            "synthesis takes {} inputs for {} latent channels",
            arch.input,
            latents.levels()
        )));
    }
    let dense = upsample::build_dense(latents)?;
    let n = dense.height * dense.width;
    let mut scratch = Scratch::new(arch);
    let mut out = vec![0.0; arch.output];
    let mut samples = Vec::with_capacity(n * arch.output);
    for p in 0..n {
        synthesis.forward_into(dense.pixel(p), &mut scratch, &mut out);
        samples.extend(out.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    *macs += (n * arch.macs()) as u64;
    Image::new(dense.height, dense.width, arch.output, samples)
}

/// Laplace parameters from the context network, without the error check on
/// non-finite outputs (the encoder verified them).
fn coding_params(arm: &MlpWeights, ctx: &[f64], scratch: &mut Scratch) -> Result<LaplaceParams> {
    let mut out = [0.0; 2];
    arm.forward_into(ctx, scratch, &mut out);
    LaplaceParams::from_outputs(&out).map_err(|_| Error::corrupt("context model produced a non-finite output"))
}

/// Range-codes one latent channel in raster order. A channel whose amplitude
/// is zero is implied by the header and produces an empty payload.
pub fn encode_channel(grid: &[i32], h: usize, w: usize, amplitude: u32, arm: &MlpWeights, pattern: &ContextPattern) -> Result<Vec<u8>> {
    if amplitude == 0 {
        return Ok(Vec::new());
    }
    let mut scratch = Scratch::new(arm.arch());
    let mut ctx = vec![0.0; pattern.len()];
    let mut enc = RangeEncoder::new();
    for i in 0..h {
        for j in 0..w {
            crate::arm::fill_context(grid, h, w, i, j, pattern, &mut ctx);
            let p = coding_params(arm, &ctx, &mut scratch)?;
            enc.encode_symbol(grid[i * w + j], &range_coder::build_cdf(p, amplitude))?;
        }
    }
    Ok(enc.finish())
}

/// Inverse of [`encode_channel`]. Adds the context-network MACs spent to
/// `macs`.
pub fn decode_channel(
    data: &[u8],
    h: usize,
    w: usize,
    amplitude: u32,
    arm: &MlpWeights,
    pattern: &ContextPattern,
    macs: &mut u64,
) -> Result<Vec<i32>> {
    let mut grid = vec![0i32; h * w];
    if amplitude == 0 {
        if !data.is_empty() {
            return Err(Error::corrupt("payload present for a zero-amplitude channel"));
        }
        return Ok(grid);
    }
    let mut scratch = Scratch::new(arm.arch());
    let mut ctx = vec![0.0; pattern.len()];
    let mut dec = RangeDecoder::new(data)?;
    for i in 0..h {
        for j in 0..w {
            crate::arm::fill_context(&grid, h, w, i, j, pattern, &mut ctx);
            let p = coding_params(arm, &ctx, &mut scratch)?;
            grid[i * w + j] = dec.decode_symbol(&range_coder::build_cdf(p, amplitude))?;
        }
    }
    dec.finish()?;
    *macs += (h * w * arm.arch().macs()) as u64;
    Ok(grid)
}

/// Serializes the parts into a sealed stream.
pub fn write_stream(parts: &StreamParts) -> Result<Vec<u8>> {
    let lat = &parts.latents;
    if !lat.is_integer() {
        return Err(Error::invalid("latents must be quantized before serialization"));
    }
    let levels = lat.levels();
    let (width, context) = (parts.synthesis.arch.max_width(), parts.pattern.len());
    let synth_arch = Architecture::two_hidden(levels, width, CHANNELS);
    let arm_arch = Architecture::two_hidden(context, width, 2);
    if parts.synthesis.arch != synth_arch || parts.arm.arch != arm_arch {
        return Err(Error::DimensionMismatch("networks do not match the latent and context layout".into()));
    }
    if lat.height() > u16::MAX as usize || lat.width() > u16::MAX as usize || width > MAX_WIDTH {
        return Err(Error::invalid("dimensions exceed the stream limits"));
    }
    let index = |q: &QuantizedMlp| weights::step_index(q.step).ok_or_else(|| Error::invalid(format!("step {} is not on the grid", q.step)));
    let amplitudes = (0..levels)
        .map(|k| u16::try_from(lat.amplitude(k)).map_err(|_| Error::invalid(format!("latent channel {k} amplitude exceeds 65535"))))
        .collect::<Result<Vec<_>>>()?;
    let header = Header {
        height: lat.height() as u16,
        width: lat.width() as u16,
        levels: levels as u8,
        context: context as u8,
        hidden_width: width as u8,
        synthesis_step_index: index(&parts.synthesis)? as u8,
        arm_step_index: index(&parts.arm)? as u8,
        synthesis_sigma: parts.synthesis.sigma,
        arm_sigma: parts.arm.sigma,
        amplitudes,
    };

    let arm = parts.arm.dequantize()?;
    let mut out = Vec::new();
    header.write(&mut out);
    bitstream::write_substream(&mut out, &weights::encode_weights(&parts.arm)?);
    bitstream::write_substream(&mut out, &weights::encode_weights(&parts.synthesis)?);
    for k in 0..levels {
        let (h, w) = lat.dims(k);
        let payload = encode_channel(lat.channel_int(k).unwrap(), h, w, lat.amplitude(k), &arm, &parts.pattern)?;
        bitstream::write_substream(&mut out, &payload);
    }
    bitstream::seal(&mut out);
    Ok(out)
}

/// A stream split into its parts, with the weights decoded and the latent
/// payloads still range-coded.
#[derive(Clone, Debug)]
pub struct ParsedStream<'a> {
    pub header: Header,
    pub synthesis: QuantizedMlp,
    pub arm: QuantizedMlp,
    pub pattern: ContextPattern,
    pub latent_payloads: Vec<&'a [u8]>,
    pub sizes: StreamSizes,
}

impl ParsedStream<'_> {
    pub fn height(&self) -> usize {
        self.header.height as usize
    }

    pub fn width(&self) -> usize {
        self.header.width as usize
    }

    pub fn levels(&self) -> usize {
        self.header.levels as usize
    }
}

/// Checks framing and checksum and decodes the network weights.
pub fn parse_stream(data: &[u8]) -> Result<ParsedStream<'_>> {
    let body = bitstream::unseal(data)?;
    let (header, used) = Header::parse(body)?;
    let (height, width, levels) = (header.height as usize, header.width as usize, header.levels as usize);
    let (context, hidden) = (header.context as usize, header.hidden_width as usize);
    if height == 0 || width == 0 {
        return Err(Error::corrupt("zero image dimension"));
    }
    if !(1..=MAX_LEVELS).contains(&levels) || !(1..=MAX_CONTEXT).contains(&context) || !(1..=MAX_WIDTH).contains(&hidden) {
        return Err(Error::corrupt("layout fields out of range"));
    }
    let step = |i: u8| {
        STEP_GRID
            .get(i as usize)
            .copied()
            .ok_or_else(|| Error::corrupt(format!("step index {i} out of range")))
    };
    let (synth_step, arm_step) = (step(header.synthesis_step_index)?, step(header.arm_step_index)?);
    let subs = bitstream::read_substreams(&body[used..], 2 + levels)?;
    let arm = weights::decode_weights(subs[0], Architecture::two_hidden(context, hidden, 2), arm_step, header.arm_sigma)?;
    let synthesis = weights::decode_weights(subs[1], Architecture::two_hidden(levels, hidden, CHANNELS), synth_step, header.synthesis_sigma)?;
    let latent_payloads = subs[2..].to_vec();
    let sizes = StreamSizes {
        header: used + CRC_LEN,
        mlp: 8 + subs[0].len() + subs[1].len(),
        latent: latent_payloads.iter().map(|p| 4 + p.len()).sum(),
        latent_payloads: latent_payloads.iter().map(|p| p.len()).collect(),
    };
    Ok(ParsedStream {
        pattern: ContextPattern::new(context)?,
        header,
        synthesis,
        arm,
        latent_payloads,
        sizes,
    })
}

/// Multiply-accumulates spent by one decode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecodeStats {
    pub synthesis_macs: u64,
    pub arm_macs: u64,
    pub pixels: u64,
}

impl DecodeStats {
    pub fn macs_per_pixel(&self) -> f64 {
        (self.synthesis_macs + self.arm_macs) as f64 / self.pixels as f64
    }
}

#[derive(Clone, Debug)]
pub struct Decoded {
    pub image: Image,
    pub latents: LatentPyramid,
    pub stats: DecodeStats,
}

pub fn decode(data: &[u8]) -> Result<Image> {
    Ok(decode_with_threads(data, 1)?.image)
}

/// Decodes with up to `threads` latent channels in flight at once. The result
/// does not depend on `threads`.
pub fn decode_with_threads(data: &[u8], threads: usize) -> Result<Decoded> {
    let s = parse_stream(data)?;
    let (height, width, levels) = (s.height(), s.width(), s.levels());
    let arm = s.arm.dequantize()?;
    let synthesis = s.synthesis.dequantize()?;

    let job = |k: usize| -> Result<(Vec<i32>, u64)> {
        let (h, w) = LatentPyramid::level_dims(height, width, k);
        let mut macs = 0;
        let grid = decode_channel(s.latent_payloads[k], h, w, s.header.amplitudes[k] as u32, &arm, &s.pattern, &mut macs)?;
        Ok((grid, macs))
    };
    let threads = threads.clamp(1, levels);
    let results: Vec<Result<(Vec<i32>, u64)>> = if threads == 1 {
        (0..levels).map(job).collect()
    } else {
        let mut slots: Vec<Option<Result<(Vec<i32>, u64)>>> = (0..levels).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let job = &job;
                    scope.spawn(move || (t..levels).step_by(threads).map(|k| (k, job(k))).collect::<Vec<_>>())
                })
                .collect();
            for h in handles {
                for (k, r) in h.join().expect("channel decoder panicked") {
                    slots[k] = Some(r);
                }
            }
        });
        slots.into_iter().map(|r| r.unwrap()).collect()
    };

    let mut flat = Vec::new();
    let mut arm_macs = 0;
    for r in results {
        let (grid, macs) = r?;
        flat.extend(grid);
        arm_macs += macs;
    }
    let latents = LatentPyramid::from_integers(height, width, levels, flat)?;
    for k in 0..levels {
        if latents.amplitude(k) > s.header.amplitudes[k] as u32 {
            return Err(Error::corrupt(format!("latent channel {k} exceeds its amplitude")));
        }
    }
    let mut synthesis_macs = 0;
    let image = synthesize_counted(&latents, &synthesis, &mut synthesis_macs)?;
    Ok(Decoded {
        image,
        latents,
        stats: DecodeStats {
            synthesis_macs,
            arm_macs,
            pixels: (height * width) as u64,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::Precision;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_parts(h: usize, w: usize, levels: usize, seed: u64) -> StreamParts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = EncodeConfig { levels, ..EncodeConfig::default() };
        let n: usize = (0..levels).map(|k| {
            let (a, b) = LatentPyramid::level_dims(h, w, k);
            a * b
        }).sum();
        let flat = (0..n).map(|_| rng.gen_range(-4..=4)).collect();
        let latents = LatentPyramid::from_integers(h, w, levels, flat).unwrap();
        let synth = MlpWeights::init(cfg.synthesis_arch(), &mut rng).unwrap();
        let arm = MlpWeights::init(cfg.arm_arch(), &mut rng).unwrap();
        StreamParts {
            latents,
            synthesis: weights::quantize_weights(&synth, 1e-3).unwrap(),
            arm: weights::quantize_weights(&arm, 5e-3).unwrap(),
            pattern: ContextPattern::default(),
        }
    }

    #[test]
    fn config_validation() {
        assert!(EncodeConfig::default().validate().is_ok());
        for bad in [
            EncodeConfig { lambda: 0.0, ..EncodeConfig::default() },
            EncodeConfig { lambda: f64::NAN, ..EncodeConfig::default() },
            EncodeConfig { levels: 0, ..EncodeConfig::default() },
            EncodeConfig { levels: 17, ..EncodeConfig::default() },
            EncodeConfig { hidden_width: 65, ..EncodeConfig::default() },
            EncodeConfig { context: 0, ..EncodeConfig::default() },
            EncodeConfig { final_learning_rate: 1.0, ..EncodeConfig::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidArgument(_))), "{bad:?}");
        }
        assert_eq!(lambda_for_quality(3).unwrap(), 0.001);
        assert!(lambda_for_quality(0).is_err() && lambda_for_quality(6).is_err());
    }

    #[test]
    fn stream_round_trip_and_accounting() {
        let parts = random_parts(13, 21, 4, 5);
        let bytes = write_stream(&parts).unwrap();
        let parsed = parse_stream(&bytes).unwrap();
        assert_eq!(parsed.sizes.total(), bytes.len());
        assert_eq!(parsed.synthesis, parts.synthesis);
        assert_eq!(parsed.arm, parts.arm);
        assert_eq!((parsed.height(), parsed.width(), parsed.levels()), (13, 21, 4));
        for threads in [1, 2, 8] {
            let d = decode_with_threads(&bytes, threads).unwrap();
            assert_eq!(d.latents, parts.latents);
            assert_eq!(d.image, synthesize(&parts.latents, &parts.synthesis.dequantize().unwrap()).unwrap());
        }
    }

    #[test]
    fn zero_channels_cost_nothing() {
        let mut parts = random_parts(8, 8, 3, 9);
        let zeros = vec![0; parts.latents.len()];
        parts.latents = LatentPyramid::from_integers(8, 8, 3, zeros).unwrap();
        let bytes = write_stream(&parts).unwrap();
        let parsed = parse_stream(&bytes).unwrap();
        assert_eq!(parsed.sizes.latent_payloads, vec![0, 0, 0]);
        let d = decode_with_threads(&bytes, 1).unwrap();
        assert_eq!(d.stats.arm_macs, 0);
    }

    #[test]
    fn mac_counter_matches_architecture() {
        let parts = random_parts(16, 16, 3, 2);
        let bytes = write_stream(&parts).unwrap();
        let d = decode_with_threads(&bytes, 1).unwrap();
        assert!((0..3).all(|k| parts.latents.amplitude(k) > 0));
        assert_eq!(d.stats.synthesis_macs, 256 * 264 - 256 * (7 - 3) * 12);
        assert_eq!(d.stats.arm_macs, (256 + 64 + 16) * 312);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = write_stream(&random_parts(12, 12, 3, 1)).unwrap();
        for pos in [0, 5, 30, bytes.len() / 2, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x04;
            assert!(matches!(decode(&bad), Err(Error::Corrupt(_))), "byte {pos}");
        }
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::Corrupt(_))));
        assert!(matches!(decode(&[]), Err(Error::Corrupt(_))));
    }

    #[test]
    fn synthesis_rounds_and_clamps() {
        let latents = LatentPyramid::from_integers(1, 2, 1, vec![0, 1]).unwrap();
        // Output = 0.5 + 0.6 * y for the single input, on three channels.
        let arch = Architecture::new(1, vec![], 3);
        let net = MlpWeights::from_flat(arch, &[0.6, 0.6, 0.6, 0.5, 0.5, 0.5], Precision::Full).unwrap();
        let img = synthesize(&latents, &net).unwrap();
        // 0.5 * 255 = 127.5 rounds away from zero; 1.1 clamps to 1.
        assert_eq!(img.samples, vec![128, 128, 128, 255, 255, 255]);
    }

    #[test]
    fn rejects_unsupported_images() {
        let gray = Image::new(4, 4, 1, vec![0; 16]).unwrap();
        assert!(matches!(encode(&gray, &EncodeConfig::default()), Err(Error::UnsupportedImage(_))));
    }
}
