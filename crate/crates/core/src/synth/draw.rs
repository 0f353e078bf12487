use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::raster::RasterImage;
use crate::scalar::Real;

fn darken(lum: &mut [f64], width: usize, x: i64, y: i64, value: f64) {
    if x < 0 || y < 0 || x as usize >= width {
        return;
    }
    if let Some(v) = lum.get_mut(y as usize * width + x as usize) {
        *v = v.min(value);
    }
}

/// Grid lines every millimetre, two pixels wide every fifth.
pub(super) fn grid(lum: &mut [f64], width: usize, height: usize, pitch: f64, value: f64) {
    let lines = |extent: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut k = 0usize;
        loop {
            let at = (k as f64 * pitch).round() as usize;
            if at >= extent {
                break;
            }
            out.push(at);
            if k % 5 == 0 && at + 1 < extent {
                out.push(at + 1);
            }
            k += 1;
        }
        out
    };
    for x in lines(width) {
        for y in 0..height {
            lum[y * width + x] = lum[y * width + x].min(value);
        }
    }
    for y in lines(height) {
        for v in &mut lum[y * width..(y + 1) * width] {
            *v = v.min(value);
        }
    }
}

/// A bare grid page of the given size, for calibration tests.
pub fn render_grid<T: Real>(width_mm: f64, height_mm: f64, pitch_px_per_mm: f64, grid_luminance: f64) -> RasterImage<T> {
    let w = (width_mm * pitch_px_per_mm).round() as usize + 1;
    let h = (height_mm * pitch_px_per_mm).round() as usize + 1;
    let mut lum = vec![1.0; w * h];
    grid(&mut lum, w, h, pitch_px_per_mm, grid_luminance);
    RasterImage::new(w, h, lum.into_iter().map(T::lit).collect()).expect("valid grid raster")
}

/// Calls `plot` for every pixel of the Bresenham lines joining the points,
/// with a flag telling whether the segment is steeper than 45 degrees.
pub(super) fn polyline(points: &[(i64, i64)], mut plot: impl FnMut(i64, i64, bool)) {
    if let [only] = points {
        plot(only.0, only.1, false);
    }
    for (i, w) in points.windows(2).enumerate() {
        let ((mut x, mut y), (x1, y1)) = (w[0], w[1]);
        let dx = (x1 - x).abs();
        let dy = -(y1 - y).abs();
        let sx = if x < x1 { 1 } else { -1 };
        let sy = if y < y1 { 1 } else { -1 };
        let steep = -dy > dx;
        let mut err = dx + dy;
        // the shared endpoint is plotted once, by the earlier segment
        let mut first = i == 0;
        loop {
            if first || (x, y) != w[0] {
                plot(x, y, steep);
            }
            first = false;
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }
}

/// The two pixels of a pen of width 2 at a plotted point: stacked for
/// shallow segments, side by side for steep ones.
pub(super) fn pen(x: i64, y: i64, steep: bool) -> [(i64, i64); 2] {
    if steep {
        [(x, y), (x + 1, y)]
    } else {
        [(x, y), (x, y + 1)]
    }
}

fn stroke(lum: &mut [f64], width: usize, points: &[(i64, i64)], value: f64) {
    polyline(points, |x, y, steep| {
        for (px, py) in pen(x, y, steep) {
            darken(lum, width, px, py, value);
        }
    });
}

/// 1 mV by 0.2 s rectangle in the left margin, on baseline row `base`.
pub(super) fn calibration_pulse(
    lum: &mut [f64],
    width: usize,
    height: usize,
    pitch: f64,
    base: i64,
    px_per_mv: f64,
    value: f64,
) {
    let mm = |v: f64| (v * pitch).round() as i64;
    let top = base - px_per_mv.round() as i64;
    if top < 0 || base as usize >= height {
        return;
    }
    let pts = [
        (mm(2.0), base),
        (mm(4.0), base),
        (mm(4.0), top),
        (mm(9.0), top),
        (mm(9.0), base),
        (mm(11.0), base),
    ];
    stroke(lum, width, &pts, value);
}

/// Rows of dark word-like blocks inside the top margin.
pub(super) fn header_block(
    lum: &mut [f64],
    width: usize,
    pitch: f64,
    margin_top_mm: f64,
    value: f64,
    rng: &mut ChaCha8Rng,
) {
    let glyph_h = (2.5 * pitch).round().max(2.0) as usize;
    let stroke_w = (0.4 * pitch).round().max(1.0) as usize;
    for line in 0..2 {
        let y0 = ((3.0 + 4.5 * line as f64) * pitch).round() as usize;
        if (y0 + glyph_h) as f64 > (margin_top_mm - 2.0) * pitch {
            break;
        }
        let mut x = (12.0 * pitch).round() as usize;
        let x_end = width.saturating_sub((20.0 * pitch) as usize);
        while x < x_end {
            let word = (rng.random_range(3.0..14.0) * pitch) as usize;
            for xx in x..(x + word).min(x_end) {
                if ((xx - x) / stroke_w) % 2 == 0 {
                    for yy in y0..y0 + glyph_h {
                        lum[yy * width + xx] = lum[yy * width + xx].min(value);
                    }
                }
            }
            x += word + (rng.random_range(2.0..5.0) * pitch) as usize;
        }
    }
}

/// A slightly darker, gently curving band across the page.
pub(super) fn wrinkle(lum: &mut [f64], width: usize, height: usize, pitch: f64, rng: &mut ChaCha8Rng) {
    let (w, h) = (width as f64, height as f64);
    let (cx, cy) = (rng.random_range(0.0..w), rng.random_range(0.0..h));
    let phi = rng.random_range(0.0..std::f64::consts::PI);
    let amp = rng.random_range(2.0..6.0) * pitch;
    let wavelength = rng.random_range(40.0..120.0) * pitch;
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let (dir, normal) = ((phi.cos(), phi.sin()), (-phi.sin(), phi.cos()));
    let reach = w.hypot(h);
    let half_width = 1.5;

    let mut hit = vec![false; width * height];
    let mut u = -reach;
    while u <= reach {
        let off = amp * (std::f64::consts::TAU * u / wavelength + phase).sin();
        let x = cx + u * dir.0 + off * normal.0;
        let y = cy + u * dir.1 + off * normal.1;
        if x > -2.0 && y > -2.0 && x < w + 2.0 && y < h + 2.0 {
            let (x0, x1) = ((x - half_width).ceil() as i64, (x + half_width).floor() as i64);
            let (y0, y1) = ((y - half_width).ceil() as i64, (y + half_width).floor() as i64);
            for yy in y0.max(0)..=y1.min(height as i64 - 1) {
                for xx in x0.max(0)..=x1.min(width as i64 - 1) {
                    hit[yy as usize * width + xx as usize] = true;
                }
            }
        }
        u += 0.5;
    }
    for (v, &h) in lum.iter_mut().zip(&hit) {
        if h {
            *v *= super::WRINKLE_DARKENING;
        }
    }
}

/// Low-frequency multiplicative darkening across the page.
pub(super) fn shadow(lum: &mut [f64], width: usize, height: usize, strength: f64, rng: &mut ChaCha8Rng) {
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let period = (width as f64).hypot(height as f64);
    let (c, s) = (phi.cos(), phi.sin());
    for y in 0..height {
        for x in 0..width {
            let u = (x as f64 * c + y as f64 * s) / period;
            let g = 0.5 * (1.0 + (std::f64::consts::TAU * u + phase).cos());
            lum[y * width + x] *= 1.0 - strength * g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bresenham_plots_each_pixel_once() {
        let mut seen = Vec::new();
        polyline(&[(0, 0), (4, 2), (4, 5)], |x, y, _| seen.push((x, y)));
        assert_eq!(seen.first(), Some(&(0, 0)));
        assert_eq!(seen.last(), Some(&(4, 5)));
        let mut dedup = seen.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), seen.len());
        // 8-connected
        for w in seen.windows(2) {
            assert!((w[0].0 - w[1].0).abs() <= 1 && (w[0].1 - w[1].1).abs() <= 1);
        }
    }

    #[test]
    fn shallow_line_has_one_pixel_per_column() {
        let mut cols = std::collections::HashMap::new();
        polyline(&[(0, 0), (9, 3), (20, 1)], |x, _, steep| {
            assert!(!steep);
            *cols.entry(x).or_insert(0) += 1
        });
        assert_eq!(cols.len(), 21);
        assert!(cols.values().all(|&n| n == 1));
    }

    #[test]
    fn grid_lines_land_on_rounded_multiples() {
        let g: RasterImage<f64> = render_grid(10.0, 5.0, 4.6, 0.6);
        assert_eq!(g.width(), 47);
        for x in 0..g.width() {
            let on = (0..=10).any(|k| (k as f64 * 4.6).round() as usize == x) || x == 1 || x == 24;
            assert_eq!(g.get(x, 2) == 0.6, on, "column {x}");
        }
    }
}
