//! Container layout.
//!
//! ```text
//! magic "CCHC" | version u8 | H u16 | W u16 | L u8 | C u8 | width u8
//! | synthesis step index u8 | context-model step index u8
//! | synthesis sigma f32 | context-model sigma f32 | amplitude u16 × L
//! | substreams: context-model weights, synthesis weights, latent 0..L-1
//!   (each a u32 byte length followed by the payload)
//! | CRC-32 of everything before it, u32
//! ```
//!
//! All integers and floats are little-endian.

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CCHC";
pub const VERSION: u8 = 1;
pub const CRC_LEN: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub height: u16,
    pub width: u16,
    pub levels: u8,
    pub context: u8,
    pub hidden_width: u8,
    pub synthesis_step_index: u8,
    pub arm_step_index: u8,
    pub synthesis_sigma: f32,
    pub arm_sigma: f32,
    pub amplitudes: Vec<u16>,
}

impl Header {
    /// Serialized size in bytes.
    pub fn len(&self) -> usize {
        Self::fixed_len() + 2 * self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    const fn fixed_len() -> usize {
        4 + 1 + 2 + 2 + 1 + 1 + 1 + 1 + 1 + 4 + 4
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.push(self.levels);
        out.push(self.context);
        out.push(self.hidden_width);
        out.push(self.synthesis_step_index);
        out.push(self.arm_step_index);
        out.extend_from_slice(&self.synthesis_sigma.to_le_bytes());
        out.extend_from_slice(&self.arm_sigma.to_le_bytes());
        for a in &self.amplitudes {
            out.extend_from_slice(&a.to_le_bytes());
        }
    }

    /// Parses the header at the start of `data`; returns it with the number
    /// of bytes consumed. Only structural checks are done here.
    pub fn parse(data: &[u8]) -> Result<(Self, usize)> {
        let mut r = Reader::new(data);
        if r.take(4)? != MAGIC {
            return Err(Error::corrupt("bad magic"));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::corrupt(format!("unsupported stream version {version}")));
        }
        let height = r.u16()?;
        let width = r.u16()?;
        let levels = r.u8()?;
        let context = r.u8()?;
        let hidden_width = r.u8()?;
        let synthesis_step_index = r.u8()?;
        let arm_step_index = r.u8()?;
        let synthesis_sigma = r.f32()?;
        let arm_sigma = r.f32()?;
        let amplitudes = (0..levels).map(|_| r.u16()).collect::<Result<_>>()?;
        Ok((
            Self {
                height,
                width,
                levels,
                context,
                hidden_width,
                synthesis_step_index,
                arm_step_index,
                synthesis_sigma,
                arm_sigma,
                amplitudes,
            },
            r.pos,
        ))
    }
}

/// Appends a length-prefixed substream.
pub fn write_substream(out: &mut Vec<u8>, payload: &[u8]) {
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
}

/// Appends the CRC-32 of `out`.
pub fn seal(out: &mut Vec<u8>) {
    let crc = crc32fast::hash(out);
    out.extend_from_slice(&crc.to_le_bytes());
}

/// Verifies the trailing checksum and returns the data it covers.
pub fn unseal(data: &[u8]) -> Result<&[u8]> {
    if data.len() < CRC_LEN {
        return Err(Error::corrupt("stream too short"));
    }
    let (body, tail) = data.split_at(data.len() - CRC_LEN);
    if !body.starts_with(MAGIC) {
        return Err(Error::corrupt("bad magic"));
    }
    if crc32fast::hash(body).to_le_bytes() != tail {
        return Err(Error::corrupt("checksum mismatch"));
    }
    Ok(body)
}

/// Splits `count` length-prefixed substreams off `data`.
pub fn read_substreams(data: &[u8], count: usize) -> Result<Vec<&[u8]>> {
    let mut r = Reader::new(data);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let len = r.u32().map_err(|_| Error::corrupt(format!("substream {i} length is truncated")))? as usize;
        out.push(r.take(len).map_err(|_| Error::corrupt(format!("substream {i} is truncated")))?);
    }
    if r.pos != data.len() {
        return Err(Error::corrupt(format!("{} unexpected bytes after substreams", data.len() - r.pos)));
    }
    Ok(out)
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(|| Error::corrupt("unexpected end of stream"))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
