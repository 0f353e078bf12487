//! Rotation of rasters about their centre with bilinear resampling.
//!
//! Angle convention (used across the crate): a positive angle turns the +x
//! axis toward the +y axis of pixel coordinates (x right, y down). A
//! horizontal line rotated by `a` therefore has normal angle `90 + a`, and
//! rotating by `-a` undoes it.

use crate::raster::RasterImage;
use crate::scalar::Real;

use super::RotationError;

pub const MAX_ROTATION_DEGREES: f64 = 45.0;

/// Smallest size `>= needed` with the same parity as `base`, so the
/// rotated canvas stays centred on whole pixels.
fn enlarged(needed: f64, base: usize) -> usize {
    let mut n = (needed - 1e-6).ceil().max(1.0) as usize;
    if n < base && needed >= base as f64 - 1e-6 {
        n = base;
    }
    if (n + base) % 2 == 1 {
        n += 1;
    }
    n
}

/// Exact sine/cosine for multiples of 90 degrees.
pub(crate) fn sin_cos_degrees<T: Real>(deg: T) -> (T, T) {
    let d = deg.as_f64();
    let q = d / 90.0;
    if (q - q.round()).abs() < 1e-12 {
        return match (q.round() as i64).rem_euclid(4) {
            0 => (T::zero(), T::one()),
            1 => (T::one(), T::zero()),
            2 => (T::zero(), -T::one()),
            _ => (-T::one(), T::zero()),
        };
    }
    deg.to_radians().sin_cos()
}

/// Bilinear sample; neighbours outside the raster read as `fill`.
#[inline]
pub(crate) fn sample_bilinear<T: Real>(img: &RasterImage<T>, sx: T, sy: T, fill: T) -> T {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let fx0 = sx.floor();
    let fy0 = sy.floor();
    let (x0, y0) = match (fx0.to_isize(), fy0.to_isize()) {
        (Some(x), Some(y)) => (x, y),
        _ => return fill,
    };
    if x0 < -1 || y0 < -1 || x0 >= w || y0 >= h {
        return fill;
    }
    let (ax, ay) = (sx - fx0, sy - fy0);
    let px = |x: isize, y: isize| -> T {
        if x >= 0 && y >= 0 && x < w && y < h {
            img.get(x as usize, y as usize)
        } else {
            fill
        }
    };
    let top = px(x0, y0) * (T::one() - ax) + px(x0 + 1, y0) * ax;
    let bottom = px(x0, y0 + 1) * (T::one() - ax) + px(x0 + 1, y0 + 1) * ax;
    top * (T::one() - ay) + bottom * ay
}

/// Rotates about the image centre onto a canvas enlarged to hold the
/// rotated bounds; uncovered pixels are white.
pub fn rotate_image<T: Real>(img: &RasterImage<T>, angle_degrees: T) -> Result<RasterImage<T>, RotationError> {
    if !(angle_degrees.abs() <= T::lit(MAX_ROTATION_DEGREES)) {
        return Err(RotationError::AngleOutOfRange(angle_degrees.as_f64()));
    }
    Ok(rotate_unbounded(img, angle_degrees))
}

/// [`rotate_image`] without the angle limit.
pub(crate) fn rotate_unbounded<T: Real>(img: &RasterImage<T>, angle_degrees: T) -> RasterImage<T> {
    if angle_degrees == T::zero() {
        return img.clone();
    }
    let (s, c) = sin_cos_degrees(angle_degrees);
    let (w, h) = (img.width(), img.height());
    let (wf, hf) = (w as f64, h as f64);
    let (sa, ca) = (s.as_f64().abs(), c.as_f64().abs());
    let nw = enlarged(wf * ca + hf * sa, w);
    let nh = enlarged(wf * sa + hf * ca, h);

    let two = T::lit(2.0);
    let (cx, cy) = (T::from_usize_lossy(w - 1) / two, T::from_usize_lossy(h - 1) / two);
    let (ncx, ncy) = (T::from_usize_lossy(nw - 1) / two, T::from_usize_lossy(nh - 1) / two);
    let mut out = vec![T::one(); nw * nh];
    for y in 0..nh {
        let dy = T::from_usize_lossy(y) - ncy;
        for x in 0..nw {
            let dx = T::from_usize_lossy(x) - ncx;
            // inverse rotation back into the source frame
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            out[y * nw + x] = sample_bilinear(img, sx, sy, T::one())
                .max(T::zero())
                .min(T::one());
        }
    }
    RasterImage::new(nw, nh, out)
        .expect("rotated raster is well formed")
        .with_pixels_per_mm(img.pixels_per_mm())
}
