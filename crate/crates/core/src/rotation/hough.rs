//! Straight-line Hough transform over edge points.
//!
//! Points are given in the accumulator frame: callers centre image
//! coordinates first so `rho` ranges over `[-diag, +diag]` around the image
//! centre. Each point votes once per `theta` bin at
//! `rho = x cos(theta) + y sin(theta)`, rounded to the nearest `rho` bin.

use rayon::prelude::*;

use crate::raster::BinaryMask;
use crate::scalar::Real;

use super::RotationError;

/// A line `x cos(theta) + y sin(theta) = rho`, `theta` in `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PolarLine<T> {
    pub rho: T,
    pub theta: T,
    pub votes: u32,
}

impl<T: Real> PolarLine<T> {
    pub fn theta_degrees(&self) -> T {
        self.theta.to_degrees()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoughAccumulator<T> {
    theta_first: usize,
    theta_bins: usize,
    rho_bins: usize,
    rho_offset: usize,
    theta_step: T,
    rho_step: T,
    counts: Vec<u32>,
}

impl<T: Real> HoughAccumulator<T> {
    pub fn theta_bins(&self) -> usize {
        self.theta_bins
    }

    pub fn rho_bins(&self) -> usize {
        self.rho_bins
    }

    pub fn theta_step(&self) -> T {
        self.theta_step
    }

    pub fn rho_step(&self) -> T {
        self.rho_step
    }

    /// Angle at the centre of local theta bin `i`.
    pub fn theta(&self, i: usize) -> T {
        T::from_usize_lossy(self.theta_first + i) * self.theta_step
    }

    pub fn rho(&self, j: usize) -> T {
        T::from_isize_lossy(j as isize - self.rho_offset as isize) * self.rho_step
    }

    #[inline]
    pub fn count(&self, theta_bin: usize, rho_bin: usize) -> u32 {
        self.counts[theta_bin * self.rho_bins + rho_bin]
    }

    /// Local rho bin for a rho value, if in range.
    pub fn rho_bin(&self, rho: T) -> Option<usize> {
        let k = crate::scalar::round_to_isize(rho / self.rho_step)? + self.rho_offset as isize;
        (k >= 0 && (k as usize) < self.rho_bins).then_some(k as usize)
    }

    pub fn total_votes(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Number of bins of width `step` whose start lies in `[0, pi)`.
pub(crate) fn full_theta_bins<T: Real>(step: T) -> usize {
    let q = (T::PI() / step).as_f64();
    let n = if (q - q.round()).abs() < 1e-9 {
        q.round()
    } else {
        q.ceil()
    };
    n.max(1.0) as usize
}

fn check_steps<T: Real>(theta_step: T, rho_step: T, diag: T) -> Result<(), RotationError> {
    if !(theta_step > T::zero() && theta_step.is_finite()) {
        return Err(RotationError::InvalidParameter(format!(
            "theta_step must be positive, got {theta_step}"
        )));
    }
    if !(rho_step > T::zero() && rho_step.is_finite()) {
        return Err(RotationError::InvalidParameter(format!(
            "rho_step must be positive, got {rho_step}"
        )));
    }
    if !(diag >= T::zero() && diag.is_finite()) {
        return Err(RotationError::InvalidParameter(format!(
            "diag must be non-negative, got {diag}"
        )));
    }
    Ok(())
}

/// Full-range accumulator: theta bins cover `[0, pi)`.
pub fn hough_accumulate<T: Real>(
    points: &[(T, T)],
    theta_step: T,
    rho_step: T,
    diag: T,
) -> Result<HoughAccumulator<T>, RotationError> {
    check_steps(theta_step, rho_step, diag)?;
    let n = full_theta_bins(theta_step);
    accumulate_bins(points, theta_step, rho_step, diag, 0, n)
}

/// Accumulates only theta bins `first..first + count` (global bin indices).
pub fn hough_accumulate_window<T: Real>(
    points: &[(T, T)],
    theta_step: T,
    rho_step: T,
    diag: T,
    first: usize,
    count: usize,
) -> Result<HoughAccumulator<T>, RotationError> {
    check_steps(theta_step, rho_step, diag)?;
    if count == 0 {
        return Err(RotationError::InvalidParameter(
            "theta window must contain at least one bin".into(),
        ));
    }
    accumulate_bins(points, theta_step, rho_step, diag, first, count)
}

const LANES: usize = 4;

fn accumulate_bins<T: Real>(
    points: &[(T, T)],
    theta_step: T,
    rho_step: T,
    diag: T,
    first: usize,
    theta_bins: usize,
) -> Result<HoughAccumulator<T>, RotationError> {
    let rho_offset = (diag / rho_step).ceil().to_usize().unwrap_or(0);
    let rho_bins = 2 * rho_offset + 1;
    let mut counts = vec![0u32; theta_bins * rho_bins];
    // x * (1/step) equals x / step exactly when step is a power of two
    let step64 = rho_step.as_f64();
    let inv = (step64.to_bits() & ((1u64 << 52) - 1) == 0).then(|| T::one() / rho_step);

    counts
        .par_chunks_mut(rho_bins)
        .enumerate()
        .try_for_each_init(
            || vec![0u32; LANES * rho_bins],
            |scratch, (i, row)| {
                let theta = T::from_usize_lossy(first + i) * theta_step;
                let (s, c) = theta.sin_cos();
                // neighbouring points often hit the same bin; spreading
                // increments over several copies breaks the store chain
                scratch.iter_mut().for_each(|v| *v = 0);
                for (j, &(x, y)) in points.iter().enumerate() {
                    let rho = x * c + y * s;
                    if rho.abs() > diag {
                        return Err(RotationError::PointOutOfRange {
                            x: x.as_f64(),
                            y: y.as_f64(),
                            diag: diag.as_f64(),
                        });
                    }
                    let q = match inv {
                        Some(inv) => rho * inv,
                        None => rho / rho_step,
                    };
                    let k = crate::scalar::round_to_isize(q).unwrap_or(0) + rho_offset as isize;
                    scratch[(j % LANES) * rho_bins + k as usize] += 1;
                }
                for (r, out) in row.iter_mut().enumerate() {
                    *out = (0..LANES).map(|l| scratch[l * rho_bins + r]).sum();
                }
                Ok(())
            },
        )?;

    Ok(HoughAccumulator {
        theta_first: first,
        theta_bins,
        rho_bins,
        rho_offset,
        theta_step,
        rho_step,
        counts,
    })
}

/// Foreground pixels with at least one background 4-neighbour, row-major.
pub fn extract_edges(mask: &BinaryMask) -> Vec<(usize, usize)> {
    mask.foreground()
        .filter(|&(x, y)| {
            let (x, y) = (x as isize, y as isize);
            !(mask.get_signed(x - 1, y)
                && mask.get_signed(x + 1, y)
                && mask.get_signed(x, y - 1)
                && mask.get_signed(x, y + 1))
        })
        .collect()
}

/// Bins with at least `min_votes` that are maximal in their 3x3 neighbourhood.
///
/// Sorted by votes descending, then theta and rho ascending.
pub fn extract_peak_lines<T: Real>(acc: &HoughAccumulator<T>, min_votes: u32) -> Vec<PolarLine<T>> {
    let min_votes = min_votes.max(1);
    let (nt, nr) = (acc.theta_bins, acc.rho_bins);
    let mut peaks: Vec<(usize, usize, u32)> = Vec::new();
    for i in 0..nt {
        for j in 0..nr {
            let v = acc.count(i, j);
            if v < min_votes {
                continue;
            }
            let mut is_max = true;
            'nb: for di in -1isize..=1 {
                for dj in -1isize..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ii, jj) = (i as isize + di, j as isize + dj);
                    if ii < 0 || jj < 0 || ii as usize >= nt || jj as usize >= nr {
                        continue;
                    }
                    if acc.count(ii as usize, jj as usize) > v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                peaks.push((i, j, v));
            }
        }
    }
    peaks.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    peaks
        .into_iter()
        .map(|(i, j, votes)| PolarLine {
            rho: acc.rho(j),
            theta: acc.theta(i),
            votes,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Point-outer double loop, recomputing every angle.
    fn naive(points: &[(f64, f64)], theta_step: f64, rho_step: f64, diag: f64) -> (usize, usize, Vec<u32>) {
        let nt = full_theta_bins(theta_step);
        let off = (diag / rho_step).ceil() as usize;
        let nr = 2 * off + 1;
        let mut grid = vec![vec![0u32; nr]; nt];
        for &(x, y) in points {
            for (i, row) in grid.iter_mut().enumerate() {
                let theta = i as f64 * theta_step;
                let rho = x * theta.cos() + y * theta.sin();
                let k = (rho / rho_step).round() as isize + off as isize;
                row[k as usize] += 1;
            }
        }
        (nt, nr, grid.into_iter().flatten().collect())
    }

    #[test]
    fn empty_points_give_zero_accumulator() {
        let acc = hough_accumulate::<f64>(&[], 1f64.to_radians(), 1.0, 10.0).unwrap();
        assert_eq!(acc.theta_bins(), 180);
        assert_eq!(acc.total_votes(), 0);
    }

    #[test]
    fn origin_votes_rho_zero_everywhere() {
        let acc = hough_accumulate(&[(0.0f64, 0.0)], 1f64.to_radians(), 1.0, 4.0).unwrap();
        let j0 = acc.rho_bin(0.0).unwrap();
        for i in 0..acc.theta_bins() {
            assert_eq!(acc.count(i, j0), 1);
        }
        assert_eq!(acc.total_votes(), 180);
    }

    #[test]
    fn three_collinear_points_peak_at_ninety() {
        let pts = [(0.0f64, 5.0), (3.0, 5.0), (7.0, 5.0)];
        let acc = hough_accumulate(&pts, 1f64.to_radians(), 1.0, 10.0).unwrap();
        // brute force over every bin: with 1 px rho bins the three points
        // share a bin for every theta within a few degrees of 90, all at rho 5
        let best = (0..acc.theta_bins())
            .flat_map(|i| (0..acc.rho_bins()).map(move |j| (i, j)))
            .map(|(i, j)| acc.count(i, j))
            .max()
            .unwrap();
        assert_eq!(best, 3);
        let maxima: Vec<(usize, f64)> = (0..acc.theta_bins())
            .flat_map(|i| (0..acc.rho_bins()).map(move |j| (i, j)))
            .filter(|&(i, j)| acc.count(i, j) == 3)
            .map(|(i, j)| (i, acc.rho(j)))
            .collect();
        let thetas: Vec<usize> = maxima.iter().map(|m| m.0).collect();
        assert_eq!(thetas, (86..=93).collect::<Vec<_>>());
        assert!(maxima.iter().all(|m| m.1 == 5.0));

        let lines = extract_peak_lines(&acc, 3);
        assert_eq!(lines.len(), 8);
        assert!(lines.iter().all(|l| l.rho == 5.0 && l.votes == 3));
        assert!(lines
            .iter()
            .any(|l| (l.theta_degrees() - 90.0).abs() < 1e-9));
    }

    #[test]
    fn out_of_range_point_is_rejected() {
        let r = hough_accumulate(&[(10.0f64, 0.0)], 0.1, 1.0, 5.0);
        assert!(matches!(r, Err(RotationError::PointOutOfRange { .. })));
        assert!(hough_accumulate::<f64>(&[], 0.0, 1.0, 5.0).is_err());
        assert!(hough_accumulate::<f64>(&[], 0.1, -1.0, 5.0).is_err());
    }

    #[test]
    fn zero_accumulator_has_no_peaks() {
        let acc = hough_accumulate::<f64>(&[], 0.1, 1.0, 5.0).unwrap();
        assert!(extract_peak_lines(&acc, 1).is_empty());
    }

    #[test]
    fn equal_peaks_ordered_by_theta_then_rho() {
        let mut acc = hough_accumulate::<f64>(&[], 1f64.to_radians(), 1.0, 10.0).unwrap();
        let nr = acc.rho_bins();
        acc.counts[50 * nr + 3] = 7;
        acc.counts[20 * nr + 15] = 7;
        acc.counts[20 * nr + 5] = 7;
        let lines = extract_peak_lines(&acc, 1);
        let keys: Vec<(f64, f64)> = lines
            .iter()
            .map(|l| (l.theta_degrees().round(), l.rho))
            .collect();
        assert_eq!(keys, vec![(20.0, -5.0), (20.0, 5.0), (50.0, -7.0)]);
    }

    #[test]
    fn edges_of_solid_block() {
        let mut m = BinaryMask::empty(5, 5);
        for y in 1..4 {
            for x in 1..4 {
                m.set(x, y, true);
            }
        }
        let e = extract_edges(&m);
        assert_eq!(e.len(), 8);
        assert!(!e.contains(&(2, 2)));
        assert_eq!(e[0], (1, 1));
        assert_eq!(e[7], (3, 3));

        let mut single = BinaryMask::empty(3, 3);
        single.set(1, 1, true);
        assert_eq!(extract_edges(&single), vec![(1, 1)]);
        assert!(extract_edges(&BinaryMask::empty(4, 4)).is_empty());
    }

    #[test]
    fn window_matches_full_range_rows() {
        let pts = [(1.0f64, 2.0), (-3.0, 4.0), (5.0, -1.0)];
        let step = 0.5f64.to_radians();
        let full = hough_accumulate(&pts, step, 1.0, 8.0).unwrap();
        let win = hough_accumulate_window(&pts, step, 1.0, 8.0, 100, 30).unwrap();
        for i in 0..30 {
            assert_eq!(win.theta(i), full.theta(100 + i));
            for j in 0..full.rho_bins() {
                assert_eq!(win.count(i, j), full.count(100 + i, j));
            }
        }
    }

    proptest! {
        #[test]
        fn vote_conservation(pts in proptest::collection::vec((-20i32..20, -20i32..20), 0..50)) {
            let pts: Vec<(f64, f64)> = pts.into_iter().map(|(x, y)| (x as f64, y as f64)).collect();
            let acc = hough_accumulate(&pts, 0.5f64.to_radians(), 1.0, 29.0).unwrap();
            prop_assert_eq!(acc.total_votes(), (pts.len() * acc.theta_bins()) as u64);
        }

        #[test]
        fn matches_naive_oracle(bits in proptest::collection::vec(any::<bool>(), 64), w in 1usize..9) {
            let h = bits.len() / w;
            let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
            let pts: Vec<(f64, f64)> = (0..w * h)
                .filter(|&i| bits[i])
                .map(|i| ((i % w) as f64 - cx, (i / w) as f64 - cy))
                .collect();
            let diag = (cx * cx + cy * cy).sqrt() + 1.0;
            let step = 2f64.to_radians();
            let acc = hough_accumulate(&pts, step, 1.0, diag).unwrap();
            let (nt, nr, grid) = naive(&pts, step, 1.0, diag);
            prop_assert_eq!(acc.theta_bins(), nt);
            prop_assert_eq!(acc.rho_bins(), nr);
            prop_assert_eq!(&acc.counts, &grid);
        }
    }
}
