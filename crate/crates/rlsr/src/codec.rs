//! The on-disk compression artifact: a fixed 28-byte header followed by a
//! lossy-encoded low-resolution payload, plus the compress/decompress
//! pipeline built on it.
//!
//! Header layout, all integers little-endian:
//! magic "RLSR" (4) | version u8 | orig_width u32 | orig_height u32 |
//! channels u8 | factor u8 | payload_codec u8 | payload_len u64 |
//! crc32 u32 over the preceding 24 bytes.
//!
//! The checksum makes every single-byte header corruption detectable;
//! without it, a flipped dimension byte would parse into a wrong-but-valid
//! container.

use crate::error::{Error, Result};
use crate::model::Generator;
use crate::raster::Image;
use crate::resample::{bicubic_downsample, resample, Filter};
use byteorder::{ByteOrder, LittleEndian};

pub const CONTAINER_MAGIC: &[u8; 4] = b"RLSR";
pub const CONTAINER_VERSION: u8 = 1;
/// Bytes before the payload: 24 checksummed plus the 4-byte checksum.
pub const HEADER_LEN: usize = 28;
const CRC_OFFSET: usize = 24;

/// Reflected CRC-32 (IEEE 802.3, polynomial 0xEDB88320), bitwise form; the
/// checksummed region is 24 bytes, so table lookups buy nothing.
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = !0u32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadCodec {
    Jpeg,
    Png,
}

impl PayloadCodec {
    pub fn id(self) -> u8 {
        match self {
            PayloadCodec::Jpeg => 0,
            PayloadCodec::Png => 1,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(PayloadCodec::Jpeg),
            1 => Ok(PayloadCodec::Png),
            other => Err(Error::ContainerField(format!("unknown payload codec id {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PayloadCodec::Jpeg => "jpeg",
            PayloadCodec::Png => "png",
        }
    }
}

impl std::str::FromStr for PayloadCodec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jpeg" | "jpg" => Ok(PayloadCodec::Jpeg),
            "png" => Ok(PayloadCodec::Png),
            other => Err(Error::Config(format!("unknown payload codec '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub orig_width: u32,
    pub orig_height: u32,
    pub channels: u8,
    pub factor: u8,
    pub payload_codec: PayloadCodec,
    pub payload: Vec<u8>,
}

impl Container {
    /// Low-resolution extents implied by the header: ceil(orig / factor),
    /// matching the reflection-padded downsampling in `compress`.
    pub fn lr_dims(&self) -> (u32, u32) {
        let f = self.factor as u32;
        ((self.orig_width + f - 1) / f, (self.orig_height + f - 1) / f)
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = vec![0u8; HEADER_LEN + self.payload.len()];
        out[0..4].copy_from_slice(CONTAINER_MAGIC);
        out[4] = CONTAINER_VERSION;
        LittleEndian::write_u32(&mut out[5..9], self.orig_width);
        LittleEndian::write_u32(&mut out[9..13], self.orig_height);
        out[13] = self.channels;
        out[14] = self.factor;
        out[15] = self.payload_codec.id();
        LittleEndian::write_u64(&mut out[16..24], self.payload.len() as u64);
        let crc = crc32(&out[..CRC_OFFSET]);
        LittleEndian::write_u32(&mut out[CRC_OFFSET..HEADER_LEN], crc);
        out[HEADER_LEN..].copy_from_slice(&self.payload);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Container> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::ContainerTruncated { needed: HEADER_LEN, have: bytes.len() });
        }
        if &bytes[0..4] != CONTAINER_MAGIC {
            return Err(Error::ContainerMagic);
        }
        if bytes[4] != CONTAINER_VERSION {
            return Err(Error::ContainerVersion(bytes[4]));
        }
        let stored_crc = LittleEndian::read_u32(&bytes[CRC_OFFSET..HEADER_LEN]);
        if crc32(&bytes[..CRC_OFFSET]) != stored_crc {
            return Err(Error::ContainerChecksum);
        }
        let orig_width = LittleEndian::read_u32(&bytes[5..9]);
        let orig_height = LittleEndian::read_u32(&bytes[9..13]);
        let channels = bytes[13];
        let factor = bytes[14];
        let payload_codec = PayloadCodec::from_id(bytes[15])?;
        let payload_len = LittleEndian::read_u64(&bytes[16..24]);
        if orig_width == 0 || orig_height == 0 {
            return Err(Error::ContainerField("zero image extent".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::ContainerField(format!("channels must be 1 or 3, got {channels}")));
        }
        if !matches!(factor, 2 | 4 | 8) {
            return Err(Error::ContainerField(format!("factor must be 2, 4 or 8, got {factor}")));
        }
        let actual = (bytes.len() - HEADER_LEN) as u64;
        if payload_len != actual {
            return Err(Error::ContainerLength { header: payload_len, actual });
        }
        Ok(Container {
            orig_width,
            orig_height,
            channels,
            factor,
            payload_codec,
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}

/// Downsample by `factor` with the antialiased bicubic kernel, encode the
/// low-resolution image through the selected codec, and wrap the bytes with
/// the original dimensions for exact-size reconstruction.
pub fn compress(img: &Image, factor: usize, quality: u8, codec: PayloadCodec) -> Result<Container> {
    if !matches!(factor, 2 | 4 | 8) {
        return Err(Error::InvalidInput {
            op: "compress",
            message: format!("factor must be 2, 4 or 8, got {factor}"),
        });
    }
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidInput {
            op: "compress",
            message: format!("quality must be in [1,100], got {quality}"),
        });
    }
    let lr = bicubic_downsample(img, factor)?;
    let payload = match codec {
        PayloadCodec::Jpeg => lr.encode_jpeg(quality)?,
        PayloadCodec::Png => lr.encode_png()?,
    };
    Ok(Container {
        orig_width: img.width() as u32,
        orig_height: img.height() as u32,
        channels: img.channels() as u8,
        factor: factor as u8,
        payload_codec: codec,
        payload,
    })
}

/// Reconstruction backend for `decompress`.
pub enum Upsampler<'a> {
    /// Fixed-kernel resampling.
    Filter(Filter),
    /// Learned super-resolution; the generator's scale must equal the
    /// container's factor.
    Model(&'a Generator<f32>),
}

/// Decode the payload and upsample back to exactly the original extents.
/// Rounding slack from non-divisible originals lands on the right/bottom
/// edge (that is where `compress` padded) and is cropped away.
pub fn decompress(c: &Container, upsampler: &Upsampler) -> Result<Image> {
    let lr = Image::decode(&c.payload)?;
    let (lw, lh) = c.lr_dims();
    if lr.width() != lw as usize || lr.height() != lh as usize {
        return Err(Error::ContainerField(format!(
            "payload decodes to {}x{}, header implies {lw}x{lh}",
            lr.width(),
            lr.height()
        )));
    }
    if lr.channels() != c.channels as usize {
        return Err(Error::ContainerField(format!(
            "payload has {} channels, header says {}",
            lr.channels(),
            c.channels
        )));
    }
    let (w, h) = (c.orig_width as usize, c.orig_height as usize);
    match upsampler {
        Upsampler::Filter(filter) => resample(&lr, w, h, *filter),
        Upsampler::Model(g) => {
            if g.config().scale != c.factor as usize {
                return Err(Error::Config(format!(
                    "model upsamples by {}, container factor is {}",
                    g.config().scale,
                    c.factor
                )));
            }
            let x = lr.to_tensor::<f32>();
            let (hr, _) = g.forward(&x, false)?;
            let full = Image::from_tensor(&hr)?;
            full.crop(0, 0, w, h)
        }
    }
}
