//! Raster types, binary Netpbm (P5/P6) codecs and grayscale conversion.
//!
//! All pipeline stages operate on [`GrayImage`]. Color input is converted
//! with BT.601 luma weights, rounding half up.

use std::path::Path;

use thiserror::Error;

/// Errors raised while constructing or decoding an image.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("bad magic: expected {expected}, found {found:?}")]
    BadMagic {
        expected: &'static str,
        found: String,
    },
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: i64, height: i64 },
    #[error("unsupported maxval {0} (must be in 1..=255)")]
    UnsupportedMaxval(i64),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated raster: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("raster length {len} does not match {width}x{height}x{channels}")]
    LengthMismatch {
        width: usize,
        height: usize,
        channels: usize,
        len: usize,
    },
    #[error("unsupported image format: {0}")]
    Unsupported(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// 8-bit single-channel raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidDimensions {
                width: width as i64,
                height: height as i64,
            });
        }
        if data.len() != width * height {
            return Err(ImageError::LengthMismatch {
                width,
                height,
                channels: 1,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image filled with a single intensity.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    ///
    /// Panics if either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    /// Pixel access with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

/// 8-bit interleaved RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidDimensions {
                width: width as i64,
                height: height as i64,
            });
        }
        if data.len() != 3 * width * height {
            return Err(ImageError::LengthMismatch {
                width,
                height,
                channels: 3,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

struct NetpbmHeader {
    width: usize,
    height: usize,
    raster_offset: usize,
}

/// Skips whitespace and `#` comments, returning the position of the next token.
fn skip_separators(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() {
        match bytes[pos] {
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' && bytes[pos] != b'\r' {
                    pos += 1;
                }
            }
            b if b.is_ascii_whitespace() => pos += 1,
            _ => break,
        }
    }
    pos
}

fn read_decimal(bytes: &[u8], pos: &mut usize, field: &str) -> Result<i64, ImageError> {
    *pos = skip_separators(bytes, *pos);
    let start = *pos;
    let negative = bytes.get(*pos) == Some(&b'-');
    if negative {
        *pos += 1;
    }
    let digits_start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == digits_start {
        return if *pos >= bytes.len() {
            Err(ImageError::MalformedHeader(format!(
                "unexpected end of header reading {field}"
            )))
        } else {
            Err(ImageError::MalformedHeader(format!(
                "expected decimal {field}, found byte 0x{:02x}",
                bytes[*pos]
            )))
        };
    }
    let text = std::str::from_utf8(&bytes[start..*pos]).expect("ascii digits");
    text.parse::<i64>()
        .map_err(|_| ImageError::MalformedHeader(format!("{field} out of range: {text}")))
}

fn parse_header(bytes: &[u8], magic: &'static str) -> Result<NetpbmHeader, ImageError> {
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(ImageError::BadMagic {
            expected: magic,
            found,
        });
    }
    let mut pos = 2;
    if pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
        return Err(ImageError::MalformedHeader(
            "missing separator after magic".into(),
        ));
    }
    let width = read_decimal(bytes, &mut pos, "width")?;
    let height = read_decimal(bytes, &mut pos, "height")?;
    if width <= 0 || height <= 0 {
        return Err(ImageError::InvalidDimensions { width, height });
    }
    let maxval = read_decimal(bytes, &mut pos, "maxval")?;
    if !(1..=255).contains(&maxval) {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(_) => {
            return Err(ImageError::MalformedHeader(
                "maxval must be followed by a single whitespace byte".into(),
            ))
        }
        None => {
            return Err(ImageError::Truncated {
                expected: (width * height) as usize,
                found: 0,
            })
        }
    }
    Ok(NetpbmHeader {
        width: width as usize,
        height: height as usize,
        raster_offset: pos,
    })
}

fn take_raster(
    bytes: &[u8],
    header: &NetpbmHeader,
    channels: usize,
) -> Result<Vec<u8>, ImageError> {
    let expected = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or(ImageError::InvalidDimensions {
            width: header.width as i64,
            height: header.height as i64,
        })?;
    let available = bytes.len() - header.raster_offset;
    if available < expected {
        return Err(ImageError::Truncated {
            expected,
            found: available,
        });
    }
    Ok(bytes[header.raster_offset..header.raster_offset + expected].to_vec())
}

/// Decodes a binary PGM (`P5`) image.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let header = parse_header(bytes, "P5")?;
    let data = take_raster(bytes, &header, 1)?;
    GrayImage::new(header.width, header.height, data)
}

/// Decodes a binary PPM (`P6`) image.
pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, ImageError> {
    let header = parse_header(bytes, "P6")?;
    let data = take_raster(bytes, &header, 3)?;
    RgbImage::new(header.width, header.height, data)
}

/// Encodes in canonical form: `P5\n{w} {h}\n255\n` followed by the raster.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// BT.601 luma, rounded half up. Integer arithmetic keeps the rounding exact.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let weighted = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((weighted + 500) / 1000).min(255) as u8
}

pub fn rgb_to_gray(img: &RgbImage) -> GrayImage {
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| luma(p[0], p[1], p[2]))
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Decodes any supported format to grayscale: PGM and PPM natively, PNG and
/// JPEG through the `image` crate.
pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    match bytes.get(..2) {
        Some(b"P5") => decode_pgm(bytes),
        Some(b"P6") => decode_ppm(bytes).map(|rgb| rgb_to_gray(&rgb)),
        _ => {
            let decoded = ::image::load_from_memory(bytes)
                .map_err(|e| ImageError::Unsupported(e.to_string()))?
                .to_rgb8();
            let (w, h) = decoded.dimensions();
            let rgb = RgbImage::new(w as usize, h as usize, decoded.into_raw())?;
            Ok(rgb_to_gray(&rgb))
        }
    }
}

pub fn read_gray(path: &Path) -> Result<GrayImage, ImageError> {
    let bytes = std::fs::read(path).map_err(|e| ImageError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    decode_gray(&bytes)
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<(), ImageError> {
    std::fs::write(path, encode_pgm(img)).map_err(|e| ImageError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
