//! Binary netpbm codec: P6 colour images and P5 grey masks, maxval 255.

use thiserror::Error;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("bad magic: expected {expected}, found {found:?}")]
    BadMagic { expected: &'static str, found: String },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported maxval {0} (only 255)")]
    MaxVal(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

impl CodecError {
    pub fn kind(&self) -> &'static str {
        match self {
            CodecError::BadMagic { .. } => "codec-magic",
            CodecError::Header(_) => "codec-header",
            CodecError::MaxVal(_) => "codec-maxval",
            CodecError::Truncated { .. } => "codec-truncated",
        }
    }
}

/// 8-bit interleaved samples, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub samples: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<u8>) -> Result<Self> {
        if !(channels == 1 || channels == 3) {
            return Err(Error::invalid(format!("images have 1 or 3 channels, got {channels}")));
        }
        if width == 0 || height == 0 || samples.len() != width * height * channels {
            return Err(Error::shape(format!(
                "{width}×{height}×{channels} image needs {} samples, got {}",
                width * height * channels,
                samples.len()
            )));
        }
        Ok(Self { width, height, channels, samples })
    }

    /// C×H×W tensor with samples mapped to [0, 1].
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let (w, h, c) = (self.width, self.height, self.channels);
        let scale = T::lit(255.0);
        let data = (0..c * h * w)
            .map(|i| {
                let (ch, p) = (i / (h * w), i % (h * w));
                T::lit(self.samples[p * c + ch] as f64) / scale
            })
            .collect();
        Tensor::from_vec(&[c, h, w], data).expect("extents are positive")
    }

    /// Inverse of [`to_tensor`](Self::to_tensor); values are quantized as `floor(v·255 + 0.5)`
    /// after clamping to [0, 1].
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Self> {
        let (c, h, w) = match t.shape() {
            &[c, h, w] => (c, h, w),
            &[1, c, h, w] => (c, h, w),
            s => return Err(Error::shape(format!("expected C×H×W tensor, got {s:?}"))),
        };
        let mut samples = vec![0u8; c * h * w];
        for (i, v) in t.data().iter().enumerate() {
            let (ch, p) = (i / (h * w), i % (h * w));
            samples[p * c + ch] = quantize(v.as_f64());
        }
        Self::new(w, h, c, samples)
    }

    /// 1×H×W tensor with 1.0 where the sample is ≥ 128.
    pub fn to_mask<T: Scalar>(&self) -> Result<Tensor<T>> {
        if self.channels != 1 {
            return Err(Error::shape(format!("masks have one channel, got {}", self.channels)));
        }
        let data = self.samples.iter().map(|&s| if s >= 128 { T::one() } else { T::zero() }).collect();
        Tensor::from_vec(&[1, self.height, self.width], data)
    }

    /// P5 mask from a binary tensor: foreground 255, background 0.
    pub fn from_mask<T: Scalar>(t: &Tensor<T>) -> Result<Self> {
        let (h, w) = match t.shape() {
            &[h, w] | &[1, h, w] | &[1, 1, h, w] => (h, w),
            s => return Err(Error::shape(format!("expected a single-channel mask, got {s:?}"))),
        };
        let samples = t.data().iter().map(|&v| if v > T::lit(0.5) { 255 } else { 0 }).collect();
        Self::new(w, h, 1, samples)
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

struct Header {
    width: usize,
    height: usize,
    offset: usize,
}

fn parse_header(bytes: &[u8], magic: &'static str) -> Result<Header, CodecError> {
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(CodecError::BadMagic { expected: magic, found });
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments before each field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
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
        let name = ["width", "height", "maxval"][i];
        if start == pos {
            return Err(CodecError::Header(format!("missing {name}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text.parse().map_err(|_| CodecError::Header(format!("{name} `{text}` out of range")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(CodecError::Header("expected one whitespace byte after maxval".into()));
    }
    if fields[2] != 255 {
        return Err(CodecError::MaxVal(fields[2]));
    }
    if fields[0] == 0 || fields[1] == 0 {
        return Err(CodecError::Header(format!("zero extent {}×{}", fields[0], fields[1])));
    }
    Ok(Header { width: fields[0] as usize, height: fields[1] as usize, offset: pos + 1 })
}

fn decode(bytes: &[u8], magic: &'static str, channels: usize) -> Result<ImageBuffer, CodecError> {
    let h = parse_header(bytes, magic)?;
    let expected = h.width * h.height * channels;
    let payload = &bytes[h.offset..];
    if payload.len() < expected {
        return Err(CodecError::Truncated { expected, found: payload.len() });
    }
    Ok(ImageBuffer { width: h.width, height: h.height, channels, samples: payload[..expected].to_vec() })
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ImageBuffer, CodecError> {
    decode(bytes, "P6", 3)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<ImageBuffer, CodecError> {
    decode(bytes, "P5", 1)
}

fn encode(img: &ImageBuffer, magic: &str) -> Vec<u8> {
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.samples);
    out
}

pub fn encode_ppm(img: &ImageBuffer) -> Result<Vec<u8>> {
    if img.channels != 3 {
        return Err(Error::shape("P6 needs a 3-channel image"));
    }
    Ok(encode(img, "P6"))
}

pub fn encode_pgm(img: &ImageBuffer) -> Result<Vec<u8>> {
    if img.channels != 1 {
        return Err(Error::shape("P5 needs a 1-channel image"));
    }
    Ok(encode(img, "P5"))
}
