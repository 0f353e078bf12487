//! Grayscale rasters, foreground masks and their file formats.
//!
//! Luminance is always stored as a real in `[0, 1]` (0 = black) regardless of
//! the source bit depth. PNG (8/16-bit gray, gray+alpha, RGB, RGBA, palette)
//! and binary/ASCII PGM/PPM are read; PNG and PGM are written. PNG `pHYs`
//! metadata in pixels-per-metre is carried through as `pixels_per_mm`.

use std::cmp::Ordering;
use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use thiserror::Error;

use crate::scalar::Real;

/// ITU-R BT.601 luma weights.
const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

pub const HISTOGRAM_BINS: usize = 256;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image {path}: {reason}")]
    CorruptImage { path: String, reason: String },
    #[error("threshold {0} is outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("image has fewer than two distinct luminance levels")]
    DegenerateImage,
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Row-major grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage<T> {
    width: usize,
    height: usize,
    luminance: Vec<T>,
    pixels_per_mm: Option<T>,
}

impl<T: Real> RasterImage<T> {
    pub fn new(width: usize, height: usize, luminance: Vec<T>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if luminance.len() != width * height {
            return Err(RasterError::InvalidRaster(format!(
                "expected {} luminance values, got {}",
                width * height,
                luminance.len()
            )));
        }
        if let Some(i) = luminance
            .iter()
            .position(|&v| !(v >= T::zero() && v <= T::one()))
        {
            return Err(RasterError::InvalidRaster(format!(
                "luminance at index {i} is outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            luminance,
            pixels_per_mm: None,
        })
    }

    /// Uniform image; `value` is clamped into `[0, 1]`.
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        let v = value.max(T::zero()).min(T::one());
        Self {
            width,
            height,
            luminance: vec![v; width * height],
            pixels_per_mm: None,
        }
    }

    pub fn with_pixels_per_mm(mut self, ppmm: Option<T>) -> Self {
        self.pixels_per_mm = ppmm.filter(|v| *v > T::zero() && v.is_finite());
        self
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels_per_mm(&self) -> Option<T> {
        self.pixels_per_mm
    }

    #[inline]
    pub fn luminance(&self) -> &[T] {
        &self.luminance
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.luminance[y * self.width + x]
    }

    /// Sets a pixel, clamping into `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.luminance[y * self.width + x] = value.max(T::zero()).min(T::one());
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[T] {
        &self.luminance[y * self.width..(y + 1) * self.width]
    }

    /// Applies `f` to every pixel, clamping the result.
    pub fn map_in_place(&mut self, mut f: impl FnMut(usize, usize, T) -> T) {
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                self.luminance[i] = f(x, y, self.luminance[i]).max(T::zero()).min(T::one());
            }
        }
    }

    /// Converts the scalar type, e.g. to run an `f64` image through an `f32` pipeline.
    pub fn cast<U: Real>(&self) -> RasterImage<U> {
        RasterImage {
            width: self.width,
            height: self.height,
            luminance: self
                .luminance
                .iter()
                .map(|v| U::lit(v.as_f64()).max(U::zero()).min(U::one()))
                .collect(),
            pixels_per_mm: self.pixels_per_mm.map(|v| U::lit(v.as_f64())),
        }
    }

    /// Nearest-neighbour upscale by an integer factor.
    pub fn upscale(&self, factor: usize) -> Self {
        assert!(factor >= 1, "upscale factor must be at least 1");
        let (w, h) = (self.width * factor, self.height * factor);
        let mut luminance = Vec::with_capacity(w * h);
        for y in 0..h {
            let src = self.row(y / factor);
            luminance.extend((0..w).map(|x| src[x / factor]));
        }
        Self {
            width: w,
            height: h,
            luminance,
            pixels_per_mm: self.pixels_per_mm.map(|p| p * T::from_usize_lossy(factor)),
        }
    }

    fn to_gray8(&self) -> Vec<u8> {
        self.luminance.iter().map(|&v| quantise(v)).collect()
    }
}

#[inline]
fn quantise<T: Real>(v: T) -> u8 {
    (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Row-major boolean mask (true = ink).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        if bits.len() != width * height {
            return Err(RasterError::InvalidRaster(format!(
                "expected {} mask bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Like [`get`](Self::get) but `false` outside the mask.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Foreground coordinates in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }
}

/// Marks pixels strictly darker than `threshold`.
pub fn binarise<T: Real>(img: &RasterImage<T>, threshold: T) -> Result<BinaryMask, RasterError> {
    if !(threshold > T::zero() && threshold < T::one()) {
        return Err(RasterError::InvalidThreshold(threshold.as_f64()));
    }
    Ok(BinaryMask {
        width: img.width,
        height: img.height,
        bits: img.luminance.iter().map(|&v| v < threshold).collect(),
    })
}

#[inline]
pub(crate) fn histogram_bin<T: Real>(v: T) -> usize {
    let b = (v.as_f64() * HISTOGRAM_BINS as f64).floor();
    (b.max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

pub fn luminance_histogram<T: Real>(img: &RasterImage<T>) -> [u64; HISTOGRAM_BINS] {
    let mut hist = [0u64; HISTOGRAM_BINS];
    for &v in &img.luminance {
        hist[histogram_bin(v)] += 1;
    }
    hist
}

/// Otsu split on a 256-bin histogram.
///
/// Returns the last bin of the dark class. When several splits reach the same
/// between-class variance (an empty valley between two clusters) the middle
/// of that plateau is chosen.
pub(crate) fn otsu_split(hist: &[u64; HISTOGRAM_BINS]) -> Option<usize> {
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let total: f64 = hist.iter().map(|&c| c as f64).sum();
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();

    let mut best = f64::NEG_INFINITY;
    let (mut first, mut last) = (0usize, 0usize);
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    for k in 0..HISTOGRAM_BINS - 1 {
        w0 += hist[k] as f64;
        sum0 += k as f64 * hist[k] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best {
            best = var;
            first = k;
            last = k;
        } else if var == best {
            last = k;
        }
    }
    Some((first + last) / 2)
}

/// Threshold maximising the between-class variance of the luminance histogram.
///
/// The result `t` is meant for [`binarise`]: bins `0..=k` form the dark class
/// and `t = (k + 1) / 256`.
pub fn otsu_threshold<T: Real>(img: &RasterImage<T>) -> Result<T, RasterError> {
    let hist = luminance_histogram(img);
    let k = otsu_split(&hist).ok_or(RasterError::DegenerateImage)?;
    Ok(T::from_usize_lossy(k + 1) / T::from_usize_lossy(HISTOGRAM_BINS))
}

const BACKGROUND_PERCENTILE: f64 = 0.9;

/// Divides out slowly varying illumination. Each pixel is scaled by the
/// paper brightness around it: the 90th-percentile luminance of
/// `block`-pixel tiles, interpolated bilinearly between tile centres.
/// Output is clamped to `[0, 1]`.
pub fn flatten_background<T: Real>(img: &RasterImage<T>, block: usize) -> RasterImage<T> {
    let block = block.max(1);
    let (w, h) = (img.width, img.height);
    let (nx, ny) = (w.div_ceil(block), h.div_ceil(block));
    let mut tiles = Vec::with_capacity(nx * ny);
    let mut buf = Vec::with_capacity(block * block);
    for ty in 0..ny {
        for tx in 0..nx {
            buf.clear();
            for y in ty * block..((ty + 1) * block).min(h) {
                buf.extend_from_slice(&img.row(y)[tx * block..((tx + 1) * block).min(w)]);
            }
            let k = ((buf.len() - 1) as f64 * BACKGROUND_PERCENTILE).round() as usize;
            let (_, v, _) = buf.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
            tiles.push((*v).max(T::lit(1e-3)));
        }
    }
    // interpolation weights between neighbouring tile centres
    let axis = |n: usize, tiles_n: usize| -> Vec<(usize, usize, T)> {
        (0..n)
            .map(|p| {
                let f = ((p as f64 + 0.5) / block as f64 - 0.5).max(0.0);
                let i0 = (f.floor() as usize).min(tiles_n - 1);
                let i1 = (i0 + 1).min(tiles_n - 1);
                (i0, i1, T::lit((f - i0 as f64).clamp(0.0, 1.0)))
            })
            .collect()
    };
    let (ax, ay) = (axis(w, nx), axis(h, ny));
    let mut out = img.clone();
    out.map_in_place(|x, y, v| {
        let ((x0, x1, tx), (y0, y1, ty)) = (ax[x], ay[y]);
        let t = |i: usize, j: usize| tiles[j * nx + i];
        let top = t(x0, y0) + (t(x1, y0) - t(x0, y0)) * tx;
        let bottom = t(x0, y1) + (t(x1, y1) - t(x0, y1)) * tx;
        let bg = top + (bottom - top) * ty;
        v / bg
    });
    out
}

/// Otsu threshold among pixels no darker than `floor`, i.e. the split of
/// the light class left by an earlier threshold.
pub fn otsu_threshold_above<T: Real>(img: &RasterImage<T>, floor: T) -> Result<T, RasterError> {
    let mut hist = luminance_histogram(img);
    let first = histogram_bin(floor);
    hist[..first].iter_mut().for_each(|c| *c = 0);
    let k = otsu_split(&hist).ok_or(RasterError::DegenerateImage)?;
    Ok(T::from_usize_lossy(k + 1) / T::from_usize_lossy(HISTOGRAM_BINS))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Png,
    Pnm,
}

fn sniff(bytes: &[u8]) -> Option<Format> {
    const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";
    if bytes.starts_with(PNG_MAGIC) {
        return Some(Format::Png);
    }
    match bytes {
        [b'P', b'2' | b'3' | b'5' | b'6', ..] => Some(Format::Pnm),
        _ => None,
    }
}

/// Loads a PNG or PGM/PPM file as normalised luminance.
pub fn load_image<T: Real>(path: impl AsRef<Path>) -> Result<RasterImage<T>, RasterError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => RasterError::FileNotFound(shown.clone()),
        _ => RasterError::Io {
            path: shown.clone(),
            source: e,
        },
    })?;
    match sniff(&bytes) {
        Some(Format::Png) => decode_png(&bytes, &shown),
        Some(Format::Pnm) => decode_pnm(&bytes, &shown),
        None => Err(RasterError::UnsupportedFormat(shown)),
    }
}

fn corrupt(path: &str, reason: impl ToString) -> RasterError {
    RasterError::CorruptImage {
        path: path.to_string(),
        reason: reason.to_string(),
    }
}

fn decode_png<T: Real>(bytes: &[u8], path: &str) -> Result<RasterImage<T>, RasterError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| corrupt(path, e))?;
    let ppmm = reader.info().pixel_dims.and_then(|d| match d.unit {
        png::Unit::Meter if d.xppu > 0 => Some(d.xppu as f64 / 1000.0),
        _ => None,
    });
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| corrupt(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| corrupt(path, e))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let channels = frame.color_type.samples();
    let data = &buf[..frame.buffer_size()];
    let mut lum = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = &data[y * frame.line_size..y * frame.line_size + w * channels];
        for px in row.chunks_exact(channels) {
            lum.push(T::lit(pixel_luma(px)));
        }
    }
    Ok(RasterImage::new(w, h, lum)?.with_pixels_per_mm(ppmm.map(T::lit)))
}

/// Luma of an 8-bit gray, gray+alpha, RGB or RGBA pixel; alpha composites onto white.
fn pixel_luma(px: &[u8]) -> f64 {
    let (l, a) = match px.len() {
        1 => (px[0] as f64, 255.0),
        2 => (px[0] as f64, px[1] as f64),
        3 => (rgb_luma(px), 255.0),
        _ => (rgb_luma(px), px[3] as f64),
    };
    let a = a / 255.0;
    ((l / 255.0) * a + (1.0 - a)).clamp(0.0, 1.0)
}

fn rgb_luma(px: &[u8]) -> f64 {
    LUMA_R * px[0] as f64 + LUMA_G * px[1] as f64 + LUMA_B * px[2] as f64
}

fn decode_pnm<T: Real>(bytes: &[u8], path: &str) -> Result<RasterImage<T>, RasterError> {
    use image::ImageDecoder;
    let decoder = image::codecs::pnm::PnmDecoder::new(Cursor::new(bytes))
        .map_err(|e| corrupt(path, e))?;
    let (w, h) = decoder.dimensions();
    let color = decoder.color_type();
    let mut buf = vec![0u8; decoder.total_bytes() as usize];
    decoder
        .read_image(&mut buf)
        .map_err(|e| corrupt(path, e))?;
    let lum: Vec<T> = match color {
        image::ColorType::L8 => buf.iter().map(|&v| T::lit(v as f64 / 255.0)).collect(),
        image::ColorType::Rgb8 => buf
            .chunks_exact(3)
            .map(|px| T::lit((rgb_luma(px) / 255.0).clamp(0.0, 1.0)))
            .collect(),
        image::ColorType::L16 => buf
            .chunks_exact(2)
            .map(|b| T::lit(u16::from_ne_bytes([b[0], b[1]]) as f64 / 65535.0))
            .collect(),
        image::ColorType::Rgb16 => buf
            .chunks_exact(6)
            .map(|b| {
                let c = |i: usize| u16::from_ne_bytes([b[2 * i], b[2 * i + 1]]) as f64;
                let l = LUMA_R * c(0) + LUMA_G * c(1) + LUMA_B * c(2);
                T::lit((l / 65535.0).clamp(0.0, 1.0))
            })
            .collect(),
        other => {
            return Err(RasterError::UnsupportedFormat(format!(
                "{path}: PNM colour type {other:?}"
            )))
        }
    };
    RasterImage::new(w as usize, h as usize, lum)
}

fn io_err(path: &Path, source: std::io::Error) -> RasterError {
    RasterError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes an 8-bit image. `.pgm`/`.pnm` produce binary PGM, anything else PNG.
pub fn save_image<T: Real>(img: &RasterImage<T>, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let bytes = match ext.as_deref() {
        Some("pgm") | Some("pnm") => encode_pgm(img),
        _ => encode_png(img)?,
    };
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Binary PGM (P5) bytes.
pub fn encode_pgm<T: Real>(img: &RasterImage<T>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_gray8());
    out
}

/// 8-bit grayscale PNG bytes, with `pHYs` when the resolution is known.
pub fn encode_png<T: Real>(img: &RasterImage<T>) -> Result<Vec<u8>, RasterError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut out), img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        if let Some(ppmm) = img.pixels_per_mm {
            let ppm = (ppmm.as_f64() * 1000.0).round() as u32;
            enc.set_pixel_dims(Some(png::PixelDimensions {
                xppu: ppm,
                yppu: ppm,
                unit: png::Unit::Meter,
            }));
        }
        let mut writer = enc
            .write_header()
            .map_err(|e| RasterError::InvalidRaster(e.to_string()))?;
        writer
            .write_image_data(&img.to_gray8())
            .map_err(|e| RasterError::InvalidRaster(e.to_string()))?;
    }
    Ok(out)
}

/// Writes a 1-bit grayscale PNG; ink is black (0), background white (1).
pub fn save_mask_png(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    let row_bytes = mask.width.div_ceil(8);
    let mut packed = vec![0u8; row_bytes * mask.height];
    for y in 0..mask.height {
        for x in 0..mask.width {
            if !mask.get(x, y) {
                packed[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, mask.width as u32, mask.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::One);
        let mut writer = enc
            .write_header()
            .map_err(|e| RasterError::InvalidRaster(e.to_string()))?;
        writer
            .write_image_data(&packed)
            .map_err(|e| RasterError::InvalidRaster(e.to_string()))?;
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a mask image: pixels darker than mid-gray are ink.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask, RasterError> {
    let img: RasterImage<f32> = load_image(path)?;
    Ok(BinaryMask {
        width: img.width,
        height: img.height,
        bits: img.luminance.iter().map(|&v| v < 0.5).collect(),
    })
}
