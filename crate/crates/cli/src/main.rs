use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coolcodec::codec::{self, EncodeConfig};
use coolcodec::{image, Error, Image};
use serde_json::json;

/// Overfitted single-image codec.
#[derive(Parser, Debug)]
#[command(name = "coolcodec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the codec to an image and write the stream.
    Encode(EncodeArgs),
    /// Decode a stream to PPM, or PNG when the output ends in .png.
    Decode {
        input: PathBuf,
        output: PathBuf,
    },
    /// Print PSNR and rate of a decoded image and its stream as JSON.
    Eval {
        original: PathBuf,
        decoded: PathBuf,
        stream: PathBuf,
    },
    /// Print the header fields of a stream.
    Info { stream: PathBuf },
}

#[derive(Args, Debug)]
struct EncodeArgs {
    input: PathBuf,
    output: PathBuf,
    /// Rate-distortion tradeoff; larger values give smaller files.
    #[arg(long, conflicts_with = "quality")]
    lambda: Option<f64>,
    /// Preset from 1 (smallest) to 5 (best quality).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    quality: Option<u8>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hidden width of both networks.
    #[arg(long)]
    width: Option<usize>,
    /// Number of latent levels.
    #[arg(long)]
    levels: Option<usize>,
    /// Where to write the JSON rate-distortion report.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) | Error::UnsupportedImage(_) | Error::MalformedImage(_) => 2,
            Error::Corrupt(_) => 3,
            Error::Divergence(_) | Error::NonFinite(_) => 4,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("coolcodec: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Encode(args) => encode(args),
        Command::Decode { input, output } => {
            check_input(&input)?;
            check_output(&output)?;
            let data = fs::read(&input).map_err(|e| io_failure(&input, e))?;
            let decoded = codec::decode_with_threads(&data, decode_threads())?;
            decoded.image.save(&output)?;
            Ok(())
        }
        Command::Eval { original, decoded, stream } => {
            for p in [&original, &decoded, &stream] {
                check_input(p)?;
            }
            let a = Image::load(&original)?;
            let b = Image::load(&decoded)?;
            let data = fs::read(&stream).map_err(|e| io_failure(&stream, e))?;
            let parsed = codec::parse_stream(&data)?;
            if (parsed.height(), parsed.width()) != (a.height, a.width) {
                return Err(usage(format!(
                    "stream is {}x{} but the original is {}x{}",
                    parsed.height(),
                    parsed.width(),
                    a.height,
                    a.width
                )));
            }
            let pixels = a.pixels() as f64;
            let bpp = |bytes: usize| 8.0 * bytes as f64 / pixels;
            let s = &parsed.sizes;
            let out = json!({
                "psnr_db": image::psnr(&a, &b)?,
                "bpp_total": bpp(data.len()),
                "bpp_latent": bpp(s.latent),
                "bpp_mlp": bpp(s.mlp),
                "bpp_header": bpp(s.header),
                "height": a.height,
                "width": a.width,
            });
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
            Ok(())
        }
        Command::Info { stream } => {
            check_input(&stream)?;
            let data = fs::read(&stream).map_err(|e| io_failure(&stream, e))?;
            let p = codec::parse_stream(&data)?;
            let h = &p.header;
            let amps: Vec<String> = h.amplitudes.iter().map(u16::to_string).collect();
            println!("H={}", h.height);
            println!("W={}", h.width);
            println!("L={}", h.levels);
            println!("C={}", h.context);
            println!("width={}", h.hidden_width);
            println!("synthesis_step={}", p.synthesis.step);
            println!("arm_step={}", p.arm.step);
            println!("synthesis_sigma={}", h.synthesis_sigma);
            println!("arm_sigma={}", h.arm_sigma);
            println!("amplitudes={}", amps.join(","));
            println!("bytes_header={}", p.sizes.header);
            println!("bytes_mlp={}", p.sizes.mlp);
            println!("bytes_latent={}", p.sizes.latent);
            println!("bytes_total={}", data.len());
            Ok(())
        }
    }
}

fn encode(args: EncodeArgs) -> Result<(), Failure> {
    let mut cfg = EncodeConfig {
        seed: args.seed,
        ..EncodeConfig::default()
    };
    match (args.lambda, args.quality) {
        (Some(l), _) => cfg.lambda = l,
        (None, Some(q)) => cfg.lambda = codec::lambda_for_quality(q)?,
        (None, None) => {}
    }
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    if let Some(w) = args.width {
        cfg.hidden_width = w;
    }
    if let Some(l) = args.levels {
        cfg.levels = l;
    }
    cfg.validate()?;
    check_input(&args.input)?;
    check_output(&args.output)?;
    if let Some(r) = &args.report {
        check_output(r)?;
    }

    let img = Image::load(&args.input)?;
    let out = codec::encode(&img, &cfg)?;
    fs::write(&args.output, &out.bytes).map_err(|e| io_failure(&args.output, e))?;
    if let Some(r) = &args.report {
        let text = serde_json::to_string_pretty(&out.report).unwrap();
        fs::write(r, text + "\n").map_err(|e| io_failure(r, e))?;
    }
    Ok(())
}

fn check_input(path: &Path) -> Result<(), Failure> {
    if !path.is_file() {
        return Err(Failure {
            code: 2,
            message: format!("{}: no such file", path.display()),
        });
    }
    Ok(())
}

fn check_output(path: &Path) -> Result<(), Failure> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(Failure {
            code: 2,
            message: format!("{}: directory does not exist", parent.display()),
        });
    }
    Ok(())
}

/// Decode parallelism: the machine's, capped by `COOLCODEC_THREADS`.
fn decode_threads() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("COOLCODEC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(cap) if cap > 0 => available.min(cap),
        _ => available,
    }
}
