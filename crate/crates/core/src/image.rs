//! 8-bit RGB rasters, PPM/PNG I/O and distortion metrics.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major, channel-interleaved 8-bit image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub samples: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, samples: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if samples.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {height}x{width}x{channels} image",
                samples.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            samples,
        })
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Samples scaled to `[0, 1]`.
    pub fn to_unit(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64 / 255.0).collect()
    }

    /// Reads an 8-bit binary PPM (`P6`) or PNG file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(b"P6") {
            parse_ppm(bytes)
        } else if bytes.starts_with(b"\x89PNG") {
            parse_png(bytes)
        } else if bytes.len() >= 2 && bytes[0] == b'P' && bytes[1].is_ascii_digit() {
            Err(Error::UnsupportedImage(format!("netpbm variant P{}", bytes[1] as char)))
        } else {
            Err(Error::UnsupportedImage("not a PPM or PNG file".into()))
        }
    }

    /// Writes PNG when the extension is `png`, binary PPM otherwise.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        let bytes = if is_png { self.to_png()? } else { self.to_ppm()? };
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn to_ppm(&self) -> Result<Vec<u8>> {
        if self.channels != 3 {
            return Err(Error::UnsupportedImage("PPM output needs 3 channels".into()));
        }
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.samples);
        Ok(out)
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let color = match self.channels {
            1 => ::image::ExtendedColorType::L8,
            3 => ::image::ExtendedColorType::Rgb8,
            c => return Err(Error::UnsupportedImage(format!("{c}-channel PNG output"))),
        };
        let mut out = Vec::new();
        ::image::ImageEncoder::write_image(
            ::image::codecs::png::PngEncoder::new(&mut out),
            &self.samples,
            self.width as u32,
            self.height as u32,
            color,
        )
        .map_err(|e| Error::MalformedImage(e.to_string()))?;
        Ok(out)
    }
}

fn parse_ppm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Whitespace and comments before each header number.
        loop {
            match bytes.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedImage("missing PPM header field".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::MalformedImage("PPM header field out of range".into()))?;
    }
    let [width, height, maxval] = fields;
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::MalformedImage("PPM header not terminated".into()));
    }
    pos += 1;
    if maxval != 255 {
        return Err(Error::UnsupportedImage(format!("PPM maxval {maxval}; only 8-bit (255) is supported")));
    }
    if width == 0 || height == 0 {
        return Err(Error::MalformedImage("PPM with zero dimension".into()));
    }
    let n = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| Error::MalformedImage("PPM dimensions overflow".into()))?;
    let data = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::MalformedImage(format!("PPM payload has {} of {n} bytes", bytes.len() - pos)))?;
    Image::new(height, width, 3, data.to_vec())
}

fn parse_png(bytes: &[u8]) -> Result<Image> {
    let img = ::image::load(Cursor::new(bytes), ::image::ImageFormat::Png).map_err(|e| Error::MalformedImage(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        ::image::DynamicImage::ImageRgb8(buf) => Image::new(h, w, 3, buf.into_raw()),
        ::image::DynamicImage::ImageLuma8(buf) => {
            let rgb = buf.into_raw().into_iter().flat_map(|v| [v, v, v]).collect();
            Image::new(h, w, 3, rgb)
        }
        other => Err(Error::UnsupportedImage(format!("PNG color type {:?}", other.color()))),
    }
}

/// Mean squared error over all samples, in 8-bit units.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    if (a.height, a.width, a.channels) != (b.height, b.width, b.channels) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height, a.width, a.channels, b.height, b.width, b.channels
        )));
    }
    let sum: f64 = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.samples.len() as f64)
}

/// PSNR over all channels jointly; `+∞` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { 10.0 * (255.0 * 255.0 / m).log10() })
}

/// Bits per pixel of a `bits`-long stream for `img`.
pub fn bpp(bits: u64, img: &Image) -> f64 {
    bits as f64 / img.pixels() as f64
}
