//! Byte-oriented range coder over 16-bit quantized Laplace CDFs.
//!
//! The coder keeps a 32-bit range and a 33-bit low with deferred carry
//! propagation, and renormalizes a byte at a time whenever the range drops
//! below 2^24. The first byte of a classic carry-less stream is always zero
//! and is not written.

use crate::arm::LaplaceParams;
use crate::error::{Error, Result};
use crate::laplace;

pub const PROB_BITS: u32 = 16;
pub const PROB_TOTAL: u32 = 1 << PROB_BITS;
const TOP: u32 = 1 << 24;

/// Values with magnitude above this are sent through an escape symbol
/// followed by raw bits.
pub const MAX_DIRECT_AMPLITUDE: u32 = 1023;

/// Cumulative counts for the alphabet `[-A, A]`, totalling 2^16, every
/// symbol count at least one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedCdf {
    amplitude: u32,
    direct: u32,
    cum: Vec<u32>,
}

impl QuantizedCdf {
    pub fn amplitude(&self) -> u32 {
        self.amplitude
    }

    /// Number of coded symbols, including the escape symbol if any.
    pub fn symbols(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn has_escape(&self) -> bool {
        self.amplitude > self.direct
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cum
    }

    /// Count of value `v`; for escaped values, the escape count.
    pub fn count(&self, v: i32) -> u32 {
        let s = self.symbol_of(v);
        self.cum[s + 1] - self.cum[s]
    }

    fn symbol_of(&self, v: i32) -> usize {
        let t = self.direct as i64;
        let v = v as i64;
        if v.abs() <= t {
            (v + t) as usize
        } else {
            (2 * t + 1) as usize
        }
    }

    fn find(&self, target: u32) -> usize {
        // Largest s with cum[s] <= target.
        self.cum.partition_point(|&c| c <= target) - 1
    }
}

/// Discretizes Laplace(`p.mu`, `p.scale`) onto `[-A, A]`. The outermost
/// symbols absorb the tails. Each symbol first receives one count; the
/// remaining `2^16 - n` are spread by rounding the scaled cumulative mass,
/// which keeps the table monotone and the total exact.
pub fn build_cdf(p: LaplaceParams, amplitude: u32) -> QuantizedCdf {
    let direct = amplitude.min(MAX_DIRECT_AMPLITUDE);
    let escape = amplitude > direct;
    let n_direct = 2 * direct as usize + 1;
    let n = n_direct + escape as usize;
    let spread = (PROB_TOTAL as usize - n) as f64;
    let t = direct as f64;

    // Real cumulative mass at the left edge of every direct symbol.
    let left_tail = if escape { laplace::cdf(-t - 0.5, p.mu, p.scale) } else { 0.0 };
    let mut real = Vec::with_capacity(n + 1);
    real.push(0.0);
    for i in 1..n_direct {
        let edge = -t - 0.5 + i as f64;
        real.push(laplace::cdf(edge, p.mu, p.scale) - left_tail);
    }
    if escape {
        real.push(laplace::cdf(t + 0.5, p.mu, p.scale) - left_tail);
    }
    real.push(1.0);

    let cum = real
        .iter()
        .enumerate()
        .map(|(i, &c)| (c.clamp(0.0, 1.0) * spread).round() as u32 + i as u32)
        .collect();
    QuantizedCdf { amplitude, direct, cum }
}

/// Uniform table over `[-A, A]` (no escape; `A` must be small).
pub fn uniform_cdf(amplitude: u32) -> QuantizedCdf {
    assert!(amplitude <= MAX_DIRECT_AMPLITUDE);
    let n = 2 * amplitude as u64 + 1;
    let cum = (0..=n).map(|i| (i * PROB_TOTAL as u64 / n) as u32).collect();
    QuantizedCdf {
        amplitude,
        direct: amplitude,
        cum,
    }
}

fn bit_len(v: u32) -> u32 {
    32 - v.leading_zeros()
}

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    first: bool,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending: 1,
            first: true,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low > u32::MAX as u64 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                let b = byte.wrapping_add(carry);
                if self.first {
                    debug_assert_eq!(b, 0);
                    self.first = false;
                } else {
                    self.out.push(b);
                }
                byte = 0xFF;
                self.pending -= 1;
                if self.pending == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Codes the interval `[start, start + size)` out of `2^bits`.
    pub fn encode_freq(&mut self, start: u32, size: u32, bits: u32) {
        debug_assert!(size > 0 && bits <= PROB_BITS && start + size <= 1 << bits);
        let r = self.range >> bits;
        self.low += r as u64 * start as u64;
        self.range = r * size;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// Codes `value` in `bits` raw bits, sixteen at a time.
    pub fn encode_bits(&mut self, value: u32, bits: u32) {
        let mut left = bits;
        while left > 0 {
            let chunk = left.min(PROB_BITS);
            left -= chunk;
            let part = (value >> left) & ((1 << chunk) - 1);
            self.encode_freq(part, 1, chunk);
        }
    }

    pub fn encode_symbol(&mut self, v: i32, cdf: &QuantizedCdf) -> Result<()> {
        if v.unsigned_abs() > cdf.amplitude {
            return Err(Error::invalid(format!("symbol {v} outside [-{0}, {0}]", cdf.amplitude)));
        }
        let s = cdf.symbol_of(v);
        self.encode_freq(cdf.cum[s], cdf.cum[s + 1] - cdf.cum[s], PROB_BITS);
        if v.unsigned_abs() > cdf.direct {
            let extra = cdf.amplitude - cdf.direct - 1;
            self.encode_bits((v < 0) as u32, 1);
            self.encode_bits(v.unsigned_abs() - cdf.direct - 1, bit_len(extra));
        }
        Ok(())
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        let mut d = Self {
            data,
            pos: 0,
            code: 0,
            range: u32::MAX,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte()? as u32;
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| Error::corrupt("range-coded stream is truncated"))?;
        self.pos += 1;
        Ok(b)
    }

    /// Returns the target count in `[0, 2^bits)`; must be followed by
    /// [`RangeDecoder::consume`].
    fn peek(&mut self, bits: u32) -> Result<(u32, u32)> {
        let r = self.range >> bits;
        let v = self.code / r;
        if v >= 1 << bits {
            return Err(Error::corrupt("range decoder state out of bounds"));
        }
        Ok((v, r))
    }

    fn consume(&mut self, r: u32, start: u32, size: u32) -> Result<()> {
        self.code -= r * start;
        self.range = r * size;
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte()? as u32;
            self.range <<= 8;
        }
        Ok(())
    }

    pub fn decode_bits(&mut self, bits: u32) -> Result<u32> {
        let mut left = bits;
        let mut value = 0u32;
        while left > 0 {
            let chunk = left.min(PROB_BITS);
            left -= chunk;
            let (v, r) = self.peek(chunk)?;
            self.consume(r, v, 1)?;
            value = (value << chunk) | v;
        }
        Ok(value)
    }

    pub fn decode_symbol(&mut self, cdf: &QuantizedCdf) -> Result<i32> {
        let (target, r) = self.peek(PROB_BITS)?;
        let s = cdf.find(target);
        self.consume(r, cdf.cum[s], cdf.cum[s + 1] - cdf.cum[s])?;
        let t = cdf.direct as i64;
        if (s as i64) <= 2 * t {
            return Ok((s as i64 - t) as i32);
        }
        let negative = self.decode_bits(1)? == 1;
        let extra = cdf.amplitude - cdf.direct - 1;
        let m = self.decode_bits(bit_len(extra))?;
        if m > extra {
            return Err(Error::corrupt(format!("escaped magnitude exceeds amplitude {}", cdf.amplitude)));
        }
        let mag = (m + cdf.direct + 1) as i64;
        Ok((if negative { -mag } else { mag }) as i32)
    }

    /// Checks that the whole payload was consumed.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::corrupt(format!(
                "{} trailing bytes after range-coded payload",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Ideal code length of `v` under `cdf`, in bits.
pub fn ideal_bits(v: i32, cdf: &QuantizedCdf) -> f64 {
    let c = cdf.count(v) as f64;
    let mut bits = PROB_BITS as f64 - c.log2();
    if v.unsigned_abs() > cdf.direct {
        bits += 1.0 + bit_len(cdf.amplitude - cdf.direct - 1) as f64;
    }
    bits
}
