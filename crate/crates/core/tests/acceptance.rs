//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use ecgdigit::grid::{estimate_grid_pitch, make_calibration};
use ecgdigit::harness::{cmd_digitise, cmd_render, digitise_image, PipelineConfig, Precision, RenderSuiteConfig};
use ecgdigit::raster::BinaryMask;
use ecgdigit::rotation::{estimate_rotation, hough_accumulate, RotationConfig, RotationError};
use ecgdigit::scoring::{aligned_snr, score_record, snr, ScoringConfig, Snr};
use ecgdigit::segmentation::{default_layout, densify_mask, Density, LeadKey, LeadLayout, LeadMask, PageGeometry};
use ecgdigit::synth::{render_grid, generate_sample, narrow_peaks_record, render, RenderConfig, SuiteRanges};
use ecgdigit::vectorise::columns_to_trace;
use ecgdigit::Sample32;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn random_signal(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(1..=2000);
    let normal = Normal::new(0.0, rng.random_range(0.01..5.0)).unwrap();
    loop {
        let y: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
        if y.iter().any(|&v| v != 0.0) {
            return y;
        }
    }
}

fn zero_baseline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut inexact = 0;
    for _ in 0..1000 {
        let y = random_signal(&mut rng);
        let v = match snr(&y, &vec![0.0; y.len()]) {
            Ok(Snr::Finite(v)) => v,
            other => return outcome(false, format!("unexpected {other:?}")),
        };
        worst = worst.max(v.abs());
        inexact += usize::from(v != 0.0);
    }
    outcome(
        worst <= 1e-9 && inexact == 0,
        format!("max |snr| {worst:e} dB, {inexact} inexact"),
    )
}

fn snr_hand_oracle() -> Outcome {
    let two = match snr(&[2.0f64, 0.0], &[1.0, 0.0]) {
        Ok(Snr::Finite(v)) => v,
        other => return outcome(false, format!("snr([2,0],[1,0]) = {other:?}")),
    };
    let want = 20.0 * 2f64.log10();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let y = random_signal(&mut rng);
        let y_hat: Vec<f64> = y.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        let plain = snr(&y, &y_hat).unwrap();
        let aligned = aligned_snr(&y, &y_hat, 0, 0.0, 0.01).unwrap().snr;
        let same = match (plain, aligned) {
            (Snr::Finite(a), Snr::Finite(b)) => a.to_bits() == b.to_bits(),
            (a, b) => a == b,
        };
        mismatches += usize::from(!same);
    }
    outcome(
        (two - 6.0206).abs() <= 1e-4 && (two - want).abs() < 1e-12 && mismatches == 0,
        format!("snr([2,0],[1,0]) = {two:.6} dB, {mismatches}/1000 aligned mismatches"),
    )
}

/// Vote grid by the textbook double loop.
fn naive_hough(points: &[(f64, f64)], theta_step: f64, rho_step: f64, diag: f64) -> Vec<Vec<u32>> {
    let q = std::f64::consts::PI / theta_step;
    let n_theta = if (q - q.round()).abs() < 1e-9 { q.round() } else { q.ceil() } as usize;
    let off = (diag / rho_step).ceil() as usize;
    let mut acc = vec![vec![0u32; 2 * off + 1]; n_theta];
    for (i, row) in acc.iter_mut().enumerate() {
        let theta = i as f64 * theta_step;
        for &(x, y) in points {
            let rho = x * theta.cos() + y * theta.sin();
            let k = (rho / rho_step).round() as isize + off as isize;
            row[k as usize] += 1;
        }
    }
    acc
}

fn hough_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    let mut bins = 0usize;
    for case in 0..100 {
        let (w, h) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let density = rng.random_range(0.0..0.5);
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let points: Vec<(f64, f64)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|_| rng.random_bool(density))
            .map(|(x, y)| (x as f64 - cx, y as f64 - cy))
            .collect();
        let diag = (cx * cx + cy * cy).sqrt() + 1.0;
        let theta_step = [1.0f64, 0.5, 0.25, 0.7][case % 4].to_radians();
        let rho_step = [1.0, 0.5, 0.75][case % 3];
        let acc = hough_accumulate(&points, theta_step, rho_step, diag).unwrap();
        let want = naive_hough(&points, theta_step, rho_step, diag);
        let shape_ok = acc.theta_bins() == want.len() && acc.rho_bins() == want[0].len();
        let equal = shape_ok
            && want
                .iter()
                .enumerate()
                .all(|(i, row)| row.iter().enumerate().all(|(j, &c)| acc.count(i, j) == c));
        bins += want.len() * want[0].len();
        bad += usize::from(!equal);
    }
    outcome(bad == 0, format!("{bad}/100 images differ, {bins} bins compared"))
}

fn rotation_recovery() -> Outcome {
    let ranges = SuiteRanges::augmented();
    let cfg = RotationConfig::default();
    let n = 500;
    let (mut ok, mut soft, mut wrong) = (0, 0, 0);
    let mut worst = 0.0f64;
    for i in 0..n {
        let s: Sample32 = generate_sample(i, 4000, &ranges).unwrap();
        let alpha = s.config.rotation_degrees;
        match estimate_rotation(&s.image, &cfg) {
            Ok(est) => {
                let err = (est.angle_degrees as f64 + alpha).abs();
                if err <= 0.5 {
                    ok += 1;
                    worst = worst.max(err);
                } else {
                    wrong += 1;
                }
            }
            Err(RotationError::NoLinesDetected | RotationError::NoParallelCluster { .. }) => soft += 1,
            Err(_) => wrong += 1,
        }
    }
    let failed = soft + wrong;
    let rate = ok as f64 / n as f64;
    let flagged = if failed == 0 { 1.0 } else { soft as f64 / failed as f64 };
    outcome(
        rate >= 0.99 && flagged >= 0.8,
        format!(
            "{ok}/{n} within 0.5 deg (worst {worst:.3}), failures: {soft} raised, {wrong} wrong"
        ),
    )
}

fn grid_pitch() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for pitch in [5.0, 7.0, 10.0, 13.0, 16.0, 20.0] {
        for k in 0..10 {
            let w_mm = rng.random_range(40.0..120.0);
            let h_mm = rng.random_range(30.0..80.0);
            let lum = rng.random_range(0.5..0.85);
            let mut img = render_grid::<f64>(w_mm, h_mm, pitch, lum);
            if k % 2 == 1 {
                let noise = Normal::new(0.0, rng.random_range(0.0..0.03)).unwrap();
                img.map_in_place(|_, _, v| (v + noise.sample(&mut rng)).clamp(0.0, 1.0));
            }
            match estimate_grid_pitch(&img) {
                Ok(p) => {
                    let rel = (p - pitch).abs() / pitch;
                    worst = worst.max(rel);
                    if rel > 0.02 {
                        failures.push(format!("{pitch}->{p:.3}"));
                    }
                }
                Err(e) => failures.push(format!("{pitch}: {e}")),
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("worst relative error {:.4}%, failures {failures:?}", worst * 100.0),
    )
}

/// Per-column mean row, linear interpolation across empty columns.
fn trace_oracle(mask: &BinaryMask) -> Option<(usize, Vec<f64>)> {
    let means: Vec<(usize, f64)> = (0..mask.width())
        .filter_map(|x| {
            let rows: Vec<usize> = (0..mask.height()).filter(|&y| mask.get(x, y)).collect();
            (!rows.is_empty()).then(|| (x, rows.iter().sum::<usize>() as f64 / rows.len() as f64))
        })
        .collect();
    if means.len() < 2 {
        return None;
    }
    let (first, last) = (means[0].0, means[means.len() - 1].0);
    let mut out = Vec::new();
    for c in first..=last {
        let right = means.iter().position(|m| m.0 >= c).unwrap();
        let (c2, r2) = means[right];
        if c2 == c {
            out.push(r2);
        } else {
            let (c1, r1) = means[right - 1];
            out.push(r1 + (r2 - r1) * ((c - c1) as f64 / (c2 - c1) as f64));
        }
    }
    Some((first, out))
}

/// One lead spanning a 64x64 page at 1 px/mm, 1 mm/s.
fn unit_layout() -> LeadLayout {
    LeadLayout {
        name: "single".into(),
        rows: 1,
        cols: 1,
        lead_order: vec!["I".into()],
        rhythm_leads: vec![],
        record_seconds: 64.0,
        geometry: PageGeometry {
            margin_left_mm: 0.0,
            margin_right_mm: 0.0,
            margin_top_mm: 0.0,
            margin_bottom_mm: 0.0,
            band_height_mm: 64.0,
        },
    }
}

fn vectorisation_oracle() -> Outcome {
    let placed = unit_layout().place(&make_calibration(1.0f64, 10.0, 1.0).unwrap(), (0.0, 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut trace_bad, mut idem_bad, mut traced) = (0, 0, 0);
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let density = rng.random_range(0.0..0.3);
        let bits: Vec<bool> = (0..w * h).map(|_| rng.random_bool(density)).collect();
        let raw = BinaryMask::new(w, h, bits).unwrap();
        let (m, clipped) = LeadMask::clipped(LeadKey::segment("I"), raw.clone(), Density::Sparse, &placed);
        assert_eq!(clipped, 0);
        match (columns_to_trace::<f64>(&m), trace_oracle(&raw)) {
            (Ok(t), Some((start, rows))) => {
                traced += 1;
                trace_bad += usize::from(t.col_start != start || t.rows != rows);
            }
            (Err(_), None) => {}
            _ => trace_bad += 1,
        }
        if let Ok(d) = densify_mask(&m) {
            let again = densify_mask(&d).unwrap();
            idem_bad += usize::from(again.mask() != d.mask());
        }
    }
    outcome(
        trace_bad == 0 && idem_bad == 0,
        format!("{trace_bad}/200 trace mismatches ({traced} traceable), {idem_bad} non-idempotent densify"),
    )
}

fn round_trip() -> Outcome {
    let cfg = PipelineConfig::default();
    let scoring = ScoringConfig::default();
    let run = |ranges: &SuiteRanges, seed: u64| {
        let (mut means, mut leads, mut positive) = (Vec::new(), 0, 0);
        for i in 0..200 {
            let s: Sample32 = generate_sample(i, seed, ranges).unwrap();
            let (pred, _) = digitise_image(&s.image, &cfg, None);
            let r = score_record(&s.truth_record, &pred, &scoring).unwrap();
            for v in r.per_lead_snr_db.values() {
                leads += 1;
                positive += usize::from(match v {
                    Snr::Finite(x) => *x > 0.0,
                    Snr::Infinite => true,
                });
            }
            if let Some(m) = r.mean_snr_db.finite() {
                means.push(m as f64);
            }
        }
        let mean = means.iter().sum::<f64>() / means.len().max(1) as f64;
        (mean, positive as f64 / leads.max(1) as f64)
    };
    let (clean_mean, clean_pos) = run(&SuiteRanges::clean(), 7000);
    let (aug_mean, aug_pos) = run(&SuiteRanges::augmented(), 8000);
    outcome(
        clean_mean >= 10.0 && clean_pos >= 0.95 && aug_mean >= 5.0,
        format!(
            "clean {clean_mean:.2} dB, {:.1}% leads > 0; augmented {aug_mean:.2} dB, {:.1}% leads > 0",
            clean_pos * 100.0,
            aug_pos * 100.0
        ),
    )
}

fn peak_attenuation() -> Outcome {
    let layout = default_layout();
    let cfg = PipelineConfig::default();
    let fs = 500.0;
    // one column spans 8 ms at 5 px/mm and 25 mm/s
    let sigma = 0.002;
    let (mut cases, mut below, mut worst_ratio) = (0, 0, 0.0f64);
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let truth = narrow_peaks_record::<f64>(&layout, fs, sigma, &mut rng);
        let page = RenderConfig {
            seed,
            ..RenderConfig::default()
        };
        let s = render(&truth, &layout, &page).unwrap();
        let (pred, _) = digitise_image(&s.image, &cfg, None);
        for (name, lead) in &truth.leads {
            let Some(p) = pred.lead(name) else { continue };
            let v = &lead.samples;
            for i in 1..v.len().saturating_sub(1) {
                if !(v[i] > 0.4 && v[i] >= v[i - 1] && v[i] > v[i + 1]) {
                    continue;
                }
                let t = lead.start_seconds + i as f64 / fs;
                let window = p.samples.iter().enumerate().filter(|(j, _)| {
                    let tj = p.start_seconds + *j as f64 / pred.sampling_rate_hz;
                    (tj - t).abs() <= 0.04
                });
                let Some(peak) = window.map(|(_, &x)| x).reduce(f64::max) else { continue };
                cases += 1;
                below += usize::from(peak <= v[i]);
                worst_ratio = worst_ratio.max(peak / v[i]);
            }
        }
    }
    let frac = below as f64 / cases.max(1) as f64;
    outcome(
        cases > 0 && frac >= 0.95,
        format!(
            "{below}/{cases} peaks at or below truth ({:.1}%), max ratio {worst_ratio:.3}",
            frac * 100.0
        ),
    )
}

fn tree(dir: &Path) -> Vec<(std::path::PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = walkdir::WalkDir::new(dir)
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(dir).unwrap().to_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let cfg = PipelineConfig {
        precision: Precision::F32,
        render: RenderSuiteConfig {
            samples: 4,
            seed: 21,
            ranges: SuiteRanges::augmented(),
        },
        ..PipelineConfig::default()
    };
    let dirs: Vec<_> = (0..4).map(|_| tempfile::tempdir().unwrap()).collect();
    let (ra, rb, da, db) = (dirs[0].path(), dirs[1].path(), dirs[2].path(), dirs[3].path());
    let ma = cmd_render(&cfg, ra, 1).unwrap();
    cmd_render(&cfg, rb, 0).unwrap();
    let images: Vec<_> = ma.entries.iter().map(|e| ra.join(&e.image)).collect();
    cmd_digitise(&images, &cfg, da, 1).unwrap();
    cmd_digitise(&images, &cfg, db, 0).unwrap();
    let (ta, tb, tc, td) = (tree(ra), tree(rb), tree(da), tree(db));
    let render_same = ta == tb;
    let digitise_same = tc == td;
    outcome(
        render_same && digitise_same,
        format!(
            "render {} files {}, digitise {} files {}",
            ta.len(),
            if render_same { "identical" } else { "differ" },
            tc.len(),
            if digitise_same { "identical" } else { "differ" }
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Option<Duration>, fn() -> Outcome); 9] = [
        ("zero baseline scores 0 dB", Some(Duration::from_secs(1)), zero_baseline),
        ("snr hand value, unaligned equivalence", Some(Duration::from_secs(1)), snr_hand_oracle),
        ("hough matches naive oracle", Some(Duration::from_secs(10)), hough_oracle),
        ("rotation recovery", Some(Duration::from_secs(300)), rotation_recovery),
        ("grid pitch within 2%", Some(Duration::from_secs(60)), grid_pitch),
        ("vectorisation oracle, densify idempotent", Some(Duration::from_secs(10)), vectorisation_oracle),
        ("end-to-end round trip", Some(Duration::from_secs(600)), round_trip),
        ("narrow peaks attenuated", None, peak_attenuation),
        ("render and digitise deterministic", None, determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let r = check();
        let took = start.elapsed();
        let in_time = budget.is_none_or(|b| took <= b);
        let pass = r.passed && in_time;
        failed += usize::from(!pass);
        let limit = budget.map_or(String::new(), |b| format!(" / {} s", b.as_secs()));
        println!(
            "{} {} {name}: {} [{:.2} s{limit}]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            r.detail,
            took.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
