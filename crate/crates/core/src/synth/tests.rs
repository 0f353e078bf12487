use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::record::LeadSignal;
use crate::segmentation::{default_layout, segment_by_threshold, write_mask_bundle, ingest_masks, LeadKey};
use crate::vectorise::{assemble_record, columns_to_trace, trace_to_signal, traces_from_masks, VectoriseConfig};

fn clean(pitch: f64) -> RenderConfig {
    RenderConfig {
        pitch_px_per_mm: pitch,
        include_header_text: false,
        ..RenderConfig::default()
    }
}

fn record(kind: SignalKind, seed: u64) -> DigitisedRecord<f64> {
    generate_record(kind, &default_layout(), 100.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn digitise_truth(s: &SyntheticSample<f64>) -> DigitisedRecord<f64> {
    let (traces, failed) = traces_from_masks::<f64>(&s.truth_masks);
    assert!(failed.is_empty());
    let cal = s.config.calibration();
    assemble_record(&traces, &default_layout(), &s.placed, &cal, &VectoriseConfig::default()).unwrap()
}

#[test]
fn page_size_follows_layout() {
    let s = render(&record(SignalKind::Flat, 0), &default_layout(), &clean(5.0)).unwrap();
    assert_eq!((s.image.width(), s.image.height()), (1336, 701));
    assert_eq!(s.truth_masks.len(), 13);
}

#[test]
fn flat_record_round_trips_to_zero() {
    let s = render(&record(SignalKind::Flat, 0), &default_layout(), &clean(4.3)).unwrap();
    let rec = digitise_truth(&s);
    for (name, lead) in &rec.leads {
        assert!(lead.samples.iter().all(|v| v.abs() <= 0.02), "{name}");
    }
}

#[test]
fn square_pulse_height_matches_geometry() {
    let pitch = 5.0;
    let s = render(&record(SignalKind::SquarePulses, 0), &default_layout(), &clean(pitch)).unwrap();
    let ii = s.truth_masks.iter().find(|m| m.key().to_string() == "II").unwrap();
    let region = s.placed.region(&LeadKey::segment("II")).unwrap();
    let base = region.baseline_row.round() as usize;
    // the pulse at 0.4 s into the record sits in lead I's slot; lead II is in band 1
    // and its slot covers 0..2.5 s, so 0.4 s is at column time_zero_x + 0.4 * 125
    let x = (s.placed.time_zero_x + 0.4 * 125.0).round() as usize;
    let rows: Vec<usize> = (0..s.image.height()).filter(|&y| ii.mask().get(x, y)).collect();
    let top = *rows.first().unwrap();
    assert_eq!(base - top, (0.5 * 10.0 * pitch) as usize);

    let rec = digitise_truth(&s);
    let plateau = &rec.lead("II").unwrap().samples[32..48];
    assert!(plateau.iter().all(|v| (v - 0.5).abs() <= 0.05), "{plateau:?}");
}

#[test]
fn oversized_swing_overflows() {
    let mut rec = record(SignalKind::Flat, 0);
    rec.leads.get_mut("V2").unwrap().samples[100] = 6.0;
    rec.leads.get_mut("V2").unwrap().samples[101] = -6.0;
    assert!(matches!(
        render(&rec, &default_layout(), &clean(4.0)),
        Err(SynthError::LayoutOverflow { ref lead, .. }) if lead == "V2"
    ));
}

#[test]
fn missing_lead_and_bad_config_rejected() {
    let mut rec = record(SignalKind::Flat, 0);
    rec.leads.shift_remove("V6");
    assert!(matches!(
        render(&rec, &default_layout(), &clean(4.0)),
        Err(SynthError::RecordMismatch(_))
    ));
    let cfg = RenderConfig {
        rotation_degrees: 31.0,
        trace_luminance: 0.9,
        ..RenderConfig::default()
    };
    match render(&record(SignalKind::Flat, 0), &default_layout(), &cfg) {
        Err(SynthError::InvalidConfig(errs)) => assert_eq!(errs.len(), 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn truth_masks_reproduce_shallow_signals_within_half_a_pixel() {
    let layout = default_layout();
    let mut rec = DigitisedRecord::new(100.0, 10.0);
    for key in layout.keys() {
        let slot = layout.slot(&key).unwrap();
        let n = (slot.duration_seconds * 100.0).round() as usize;
        let samples = (0..n)
            .map(|i| 0.4 * (std::f64::consts::TAU * 0.7 * (slot.start_seconds + i as f64 / 100.0)).sin())
            .collect();
        rec.leads.insert(key.to_string(), LeadSignal { start_seconds: slot.start_seconds, samples });
    }
    let cfg = clean(4.7);
    let s = render(&rec, &layout, &cfg).unwrap();
    let cal = cfg.calibration::<f64>();
    let pps = cal.px_per_second();
    for m in &s.truth_masks {
        let region = s.placed.region(m.key()).unwrap();
        let t = columns_to_trace::<f64>(m).unwrap();
        let v = trace_to_signal(&t, region.baseline_row.round() + 0.5, &cal);
        let truth = rec.lead(&m.key().to_string()).unwrap();
        for (i, &y) in truth.samples.iter().enumerate() {
            let x = (s.placed.time_zero_x + (truth.start_seconds + i as f64 / 100.0) * pps).round() as usize;
            if !region.contains_col(x) || x < t.col_start || x >= t.col_start + t.len() {
                continue;
            }
            let got = v[x - t.col_start];
            assert!(
                (got - y).abs() <= 0.5 * cal.mv_per_pixel() + 1e-9,
                "{} sample {i}: {got} vs {y}",
                m.key()
            );
        }
    }
}

#[test]
fn threshold_segmentation_matches_truth_on_clean_pages() {
    for (seed, pitch) in [(1u64, 4.0), (2, 4.5), (3, 5.0)] {
        let cfg = RenderConfig {
            pitch_px_per_mm: pitch,
            ..RenderConfig::default()
        };
        let s = render(&record(SignalKind::SyntheticEcg, seed), &default_layout(), &cfg).unwrap();
        let masks = segment_by_threshold(&s.image, &s.placed, &Default::default()).unwrap();
        let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
        for truth in &s.truth_masks {
            let pred = masks.iter().find(|m| m.key() == truth.key()).unwrap();
            for (&a, &b) in truth.mask().bits().iter().zip(pred.mask().bits()) {
                match (a, b) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fnn += 1,
                    _ => {}
                }
            }
        }
        let recall = tp as f64 / (tp + fnn) as f64;
        let false_rate = fp as f64 / (tp + fp) as f64;
        assert!(recall >= 0.95, "recall {recall}");
        assert!(false_rate <= 0.02, "false positives {false_rate}");
    }
}

#[test]
fn truth_bundle_round_trips() {
    let s = render(&record(SignalKind::SyntheticEcg, 4), &default_layout(), &clean(4.0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_mask_bundle(dir.path(), &s.truth_masks).unwrap();
    let (back, clipped) = ingest_masks(
        dir.path(),
        &default_layout(),
        &s.placed,
        s.image.width(),
        s.image.height(),
    )
    .unwrap();
    assert_eq!(clipped, 0);
    assert_eq!(back, s.truth_masks);
}

#[test]
fn rotation_is_recoverable() {
    for (i, alpha) in [-23.4, -4.0, 0.0, 2.75, 17.1].into_iter().enumerate() {
        let cfg = RenderConfig {
            pitch_px_per_mm: 4.0,
            rotation_degrees: alpha,
            noise_sigma: 0.05,
            wrinkle_count: 3,
            seed: i as u64,
            ..RenderConfig::default()
        };
        let s = render(&record(SignalKind::SyntheticEcg, i as u64), &default_layout(), &cfg).unwrap();
        let est = crate::rotation::estimate_rotation(&s.image, &Default::default()).unwrap();
        assert!((est.angle_degrees + alpha).abs() <= 0.5, "{alpha}: {est:?}");
    }
}

#[test]
fn rendered_pitch_is_recovered() {
    for pitch in [4.0, 5.0, 7.0] {
        let s = render(&record(SignalKind::SyntheticEcg, 9), &default_layout(), &RenderConfig {
            pitch_px_per_mm: pitch,
            noise_sigma: 0.03,
            ..RenderConfig::default()
        })
        .unwrap();
        let p = crate::grid::estimate_grid_pitch(&s.image).unwrap();
        assert!((p - pitch).abs() / pitch < 0.02, "{pitch}: {p}");
    }
}

#[test]
fn suites_are_deterministic() {
    let ranges = SuiteRanges::augmented();
    let a: Vec<SyntheticSample<f32>> = generate_suite(2, 7, &ranges).unwrap();
    let b: Vec<SyntheticSample<f32>> = generate_suite(2, 7, &ranges).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.image.luminance(), y.image.luminance());
        assert_eq!(x.config, y.config);
    }
    // sample k depends only on seed + k
    let c: SyntheticSample<f32> = generate_sample(1, 7, &ranges).unwrap();
    assert_eq!(c.image.luminance(), a[1].image.luminance());
    assert!(matches!(generate_suite::<f32>(0, 7, &ranges), Err(SynthError::EmptySuite)));
}

#[test]
fn four_variant_pattern() {
    let s: Vec<SyntheticSample<f32>> = generate_suite(4, 11, &SuiteRanges::four_variants()).unwrap();
    let rot: Vec<f64> = s.iter().map(|x| x.config.rotation_degrees).collect();
    let wr: Vec<u32> = s.iter().map(|x| x.config.wrinkle_count).collect();
    assert_eq!(rot, vec![1.0, 2.0, 3.0, 0.0]);
    assert_eq!(wr, vec![0, 0, 0, 3]);
    assert!(s[3].config.shadow_strength > 0.0);
}
