//! Angle-window and parallel-cluster filtering of detected lines.

use crate::scalar::Real;

use super::{PolarLine, RotationError};

/// Vote-weighted mean angle in degrees.
pub fn weighted_mean_degrees<T: Real>(lines: &[PolarLine<T>]) -> T {
    let (mut wsum, mut vsum) = (T::zero(), T::zero());
    for l in lines {
        let v = T::from_u32(l.votes).unwrap_or_else(T::one);
        wsum += v * l.theta_degrees();
        vsum += v;
    }
    wsum / vsum
}

/// Keeps the largest cluster of mutually parallel lines inside the angle window.
///
/// A cluster is a run of lines (in angle order) all within `parallel_tol_degrees`
/// of the run's vote-weighted mean angle. Ties between equally large clusters go
/// to the one holding the highest-vote line, then the larger vote total, then
/// the smaller angle. The returned lines keep their input order.
pub fn filter_lines<T: Real>(
    lines: &[PolarLine<T>],
    centre_degrees: T,
    half_range_degrees: T,
    min_parallel: usize,
    parallel_tol_degrees: T,
) -> Result<Vec<PolarLine<T>>, RotationError> {
    if !(half_range_degrees > T::zero()) {
        return Err(RotationError::InvalidParameter(format!(
            "half_range_degrees must be positive, got {half_range_degrees}"
        )));
    }
    if min_parallel == 0 {
        return Err(RotationError::InvalidParameter(
            "min_parallel must be at least 1".into(),
        ));
    }
    if !(parallel_tol_degrees >= T::zero()) {
        return Err(RotationError::InvalidParameter(format!(
            "parallel_tol_degrees must be non-negative, got {parallel_tol_degrees}"
        )));
    }

    // bin angles carry rounding error, about 1e-5 degrees in f32
    let slack = T::lit(1e-9).max(T::epsilon() * T::lit(1024.0));
    let mut idx: Vec<usize> = (0..lines.len())
        .filter(|&i| (lines[i].theta_degrees() - centre_degrees).abs() <= half_range_degrees + slack)
        .collect();
    if idx.len() < min_parallel {
        return Err(RotationError::NoParallelCluster {
            candidates: idx.len(),
            required: min_parallel,
        });
    }
    idx.sort_by(|&a, &b| {
        let (la, lb) = (&lines[a], &lines[b]);
        la.theta
            .partial_cmp(&lb.theta)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(la.rho.partial_cmp(&lb.rho).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.cmp(&b))
    });

    let angle: Vec<T> = idx.iter().map(|&i| lines[i].theta_degrees()).collect();
    let votes: Vec<u64> = idx.iter().map(|&i| lines[i].votes as u64).collect();
    let n = idx.len();
    // prefix sums of votes and vote-weighted angle
    let mut pv = vec![0u64; n + 1];
    let mut pw = vec![T::zero(); n + 1];
    for k in 0..n {
        pv[k + 1] = pv[k] + votes[k];
        pw[k + 1] = pw[k] + T::from_u64(votes[k]).unwrap_or_else(T::one) * angle[k];
    }
    let top_vote_pos = (0..n)
        .max_by(|&a, &b| votes[a].cmp(&votes[b]).then(b.cmp(&a)))
        .expect("non-empty");

    let span_limit = parallel_tol_degrees + parallel_tol_degrees + slack;
    // (start, end inclusive)
    let mut best: Option<(usize, usize)> = None;
    for i in 0..n {
        let mut last_valid = None;
        for j in i..n {
            if angle[j] - angle[i] > span_limit {
                break;
            }
            let total = pv[j + 1] - pv[i];
            let mean = (pw[j + 1] - pw[i]) / T::from_u64(total).unwrap_or_else(T::one);
            if (angle[i] - mean).abs() <= parallel_tol_degrees + slack
                && (angle[j] - mean).abs() <= parallel_tol_degrees + slack
            {
                last_valid = Some(j);
            }
        }
        let Some(j) = last_valid else { continue };
        if j + 1 - i < min_parallel {
            continue;
        }
        best = match best {
            None => Some((i, j)),
            Some((bi, bj)) => {
                let (size, bsize) = (j + 1 - i, bj + 1 - bi);
                let has_top = i <= top_vote_pos && top_vote_pos <= j;
                let b_has_top = bi <= top_vote_pos && top_vote_pos <= bj;
                let (tot, btot) = (pv[j + 1] - pv[i], pv[bj + 1] - pv[bi]);
                let better = size > bsize
                    || (size == bsize && has_top && !b_has_top)
                    || (size == bsize && has_top == b_has_top && tot > btot);
                if better {
                    Some((i, j))
                } else {
                    Some((bi, bj))
                }
            }
        };
    }

    let (i, j) = best.ok_or(RotationError::NoParallelCluster {
        candidates: n,
        required: min_parallel,
    })?;
    let mut keep: Vec<usize> = idx[i..=j].to_vec();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|k| lines[k]).collect())
}
