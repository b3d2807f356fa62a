//! Grayscale images, binary PGM files, and small plane math.
//!
//! [`ImageGray`] is the integer pixel carrier used across the toolkit;
//! [`RealPlane`] is the float counterpart used by cost maps, probability
//! maps and convolution. Saved PGMs are canonical byte-for-byte:
//! `P5\n<width> <height>\n255\n` followed by the raw row-major payload,
//! so identical pixels always produce identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("bad magic number (only binary P5 is supported)")]
    BadMagic,
    #[error("unsupported maxval {0} (only 255 is supported)")]
    BadMaxval(u32),
    #[error("zero image dimensions")]
    ZeroDimensions,
    #[error("truncated pixel payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("trailing bytes after pixel payload")]
    TrailingBytes,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("pixel buffer has {got} bytes, expected {width}x{height}={expected}")]
    LengthMismatch {
        got: usize,
        width: u32,
        height: u32,
        expected: usize,
    },
    #[error("mirror margin {margin} exceeds plane dimensions {width}x{height}")]
    MarginTooLarge {
        margin: usize,
        width: usize,
        height: usize,
    },
    #[error("kernel sides must be odd, got {width}x{height}")]
    EvenKernel { width: usize, height: usize },
    #[error("plane {pw}x{ph} is smaller than kernel {kw}x{kh}")]
    PlaneSmallerThanKernel {
        pw: usize,
        ph: usize,
        kw: usize,
        kh: usize,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageGray {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl ImageGray {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimensions);
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(ImageError::LengthMismatch {
                got: pixels.len(),
                width,
                height,
                expected,
            });
        }
        Ok(ImageGray {
            width,
            height,
            pixels,
        })
    }

    pub fn constant(width: u32, height: u32, value: u8) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn n_pixels(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.pixels[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn to_plane(&self) -> RealPlane {
        RealPlane {
            width: self.width as usize,
            height: self.height as usize,
            values: self.pixels.iter().map(|&p| f64::from(p)).collect(),
        }
    }
}

/// Parses a binary (P5) PGM with maxval 255.
///
/// Header parsing is strict: `#` comments are honored between header
/// tokens, exactly one whitespace byte separates the maxval from the
/// payload, and any bytes beyond the payload are an error.
pub fn load_pgm_bytes(data: &[u8]) -> Result<ImageGray, ImageError> {
    let mut pos = 0usize;

    fn skip_separators(data: &[u8], pos: &mut usize) {
        while *pos < data.len() {
            match data[*pos] {
                b' ' | b'\t' | b'\r' | b'\n' | 0x0b | 0x0c => *pos += 1,
                b'#' => {
                    while *pos < data.len() && data[*pos] != b'\n' {
                        *pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn read_token<'a>(data: &'a [u8], pos: &mut usize) -> &'a [u8] {
        let start = *pos;
        while *pos < data.len() && !data[*pos].is_ascii_whitespace() && data[*pos] != b'#' {
            *pos += 1;
        }
        &data[start..*pos]
    }

    let magic = read_token(data, &mut pos);
    if magic != b"P5" {
        return Err(ImageError::BadMagic);
    }

    let mut fields = [0u32; 3];
    for slot in fields.iter_mut() {
        skip_separators(data, &mut pos);
        let tok = read_token(data, &mut pos);
        if tok.is_empty() {
            return Err(ImageError::MalformedHeader("missing header field".into()));
        }
        let text = std::str::from_utf8(tok)
            .map_err(|_| ImageError::MalformedHeader("non-ascii header field".into()))?;
        *slot = text
            .parse::<u32>()
            .map_err(|_| ImageError::MalformedHeader(format!("bad header field `{text}`")))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimensions);
    }
    if maxval != 255 {
        return Err(ImageError::BadMaxval(maxval));
    }

    // Exactly one whitespace byte before the payload.
    match data.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(ImageError::MalformedHeader(
                "expected single whitespace before payload".into(),
            ))
        }
    }

    let expected = width as usize * height as usize;
    let found = data.len() - pos;
    if found < expected {
        return Err(ImageError::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(ImageError::TrailingBytes);
    }
    ImageGray::new(width, height, data[pos..].to_vec())
}

pub fn load_pgm(path: &Path) -> Result<ImageGray, ImageError> {
    load_pgm_bytes(&fs::read(path)?)
}

/// Canonical P5 encoding: `P5\n<w> <h>\n255\n` + payload.
pub fn save_pgm_bytes(img: &ImageGray) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.pixels.len() + 20);
    write!(out, "P5\n{} {}\n255\n", img.width, img.height).expect("vec write");
    out.extend_from_slice(&img.pixels);
    out
}

pub fn save_pgm(img: &ImageGray, path: &Path) -> Result<(), ImageError> {
    fs::write(path, save_pgm_bytes(img))?;
    Ok(())
}

/// Row-major plane of doubles.
#[derive(Debug, Clone, PartialEq)]
pub struct RealPlane {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl RealPlane {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height, "plane buffer length");
        assert!(width > 0 && height > 0, "plane dimensions");
        RealPlane {
            width,
            height,
            values,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }
}

/// Reflected index for mirror extension without repeating the border
/// sample: `[a, b, c]` extended by one on each side reads `b a b c b`.
#[inline]
fn mirror_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Extends a plane by `margin` on every side with mirrored samples.
pub fn mirror_pad(plane: &RealPlane, margin: usize) -> Result<RealPlane, ImageError> {
    if margin > plane.width.min(plane.height) {
        return Err(ImageError::MarginTooLarge {
            margin,
            width: plane.width,
            height: plane.height,
        });
    }
    let w = plane.width + 2 * margin;
    let h = plane.height + 2 * margin;
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        let sy = mirror_index(y as isize - margin as isize, plane.height);
        for x in 0..w {
            let sx = mirror_index(x as isize - margin as isize, plane.width);
            values.push(plane.get(sx, sy));
        }
    }
    Ok(RealPlane::new(w, h, values))
}

/// Same-size correlation-style convolution with mirror-extended borders.
///
/// The kernel is applied as written (no flip): output(x, y) is the sum of
/// `kernel(i, j) * plane(x + i - cx, y + j - cy)` with mirrored indexing,
/// where (cx, cy) is the kernel center. Kernel sides must be odd and the
/// plane at least as large as the kernel.
pub fn convolve2d(plane: &RealPlane, kernel: &RealPlane) -> Result<RealPlane, ImageError> {
    if kernel.width % 2 == 0 || kernel.height % 2 == 0 {
        return Err(ImageError::EvenKernel {
            width: kernel.width,
            height: kernel.height,
        });
    }
    if plane.width < kernel.width || plane.height < kernel.height {
        return Err(ImageError::PlaneSmallerThanKernel {
            pw: plane.width,
            ph: plane.height,
            kw: kernel.width,
            kh: kernel.height,
        });
    }
    let cx = (kernel.width / 2) as isize;
    let cy = (kernel.height / 2) as isize;
    let mut out = Vec::with_capacity(plane.width * plane.height);
    for y in 0..plane.height as isize {
        for x in 0..plane.width as isize {
            let mut acc = 0.0;
            for j in 0..kernel.height as isize {
                let sy = mirror_index(y + j - cy, plane.height);
                for i in 0..kernel.width as isize {
                    let sx = mirror_index(x + i - cx, plane.width);
                    acc += kernel.get(i as usize, j as usize) * plane.get(sx, sy);
                }
            }
            out.push(acc);
        }
    }
    Ok(RealPlane::new(plane.width, plane.height, out))
}

/// 3x3 high-pass kernel shared by the cost function and the residual
/// features: `[[-1, 2, -1], [2, -4, 2], [-1, 2, -1]]`.
pub fn kb_kernel() -> RealPlane {
    RealPlane::new(
        3,
        3,
        vec![-1.0, 2.0, -1.0, 2.0, -4.0, 2.0, -1.0, 2.0, -1.0],
    )
}
