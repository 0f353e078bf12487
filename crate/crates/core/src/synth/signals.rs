use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::record::{DigitisedRecord, LeadSignal};
use crate::scalar::Real;
use crate::segmentation::LeadLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Flat,
    /// +0.5 mV, 0.2 s pulses once a second.
    SquarePulses,
    /// Gaussian P, Q, R, S and T bumps at 60 to 90 beats per minute.
    SyntheticEcg,
}

/// Relative time (s), amplitude (mV) and width (s) of one bump.
type Bump = (f64, f64, f64);

struct Beat {
    rr: f64,
    phase: f64,
    bumps: [Bump; 5],
}

impl Beat {
    fn random(rng: &mut impl Rng) -> Self {
        let rr = 60.0 / rng.random_range(60.0..=90.0);
        Self {
            rr,
            phase: rng.random_range(0.0..rr),
            bumps: [
                (-0.18, rng.random_range(0.08..0.2), 0.025),
                (-0.028, rng.random_range(-0.15..-0.05), 0.01),
                (0.0, 1.0, rng.random_range(0.012..0.02)),
                (0.03, rng.random_range(-0.3..-0.1), 0.012),
                (rng.random_range(0.24..0.32), rng.random_range(0.15..0.35), 0.045),
            ],
        }
    }

    fn value(&self, t: f64) -> f64 {
        let k = ((t - self.phase) / self.rr).round();
        (-1..=1)
            .map(|d| {
                let centre = self.phase + (k + d as f64) * self.rr;
                self.bumps
                    .iter()
                    .map(|&(at, a, w)| {
                        let u = (t - centre - at) / w;
                        a * (-0.5 * u * u).exp()
                    })
                    .sum::<f64>()
            })
            .sum()
    }
}

fn build<T: Real>(
    layout: &LeadLayout,
    fs: f64,
    mut lead_fn: impl FnMut(&str) -> Box<dyn Fn(f64) -> f64>,
) -> DigitisedRecord<T> {
    let mut rec = DigitisedRecord::new(T::lit(fs), T::lit(layout.record_seconds));
    let mut fns: Vec<(String, Box<dyn Fn(f64) -> f64>)> = Vec::new();
    for key in layout.keys() {
        let slot = layout.slot(&key).expect("key from layout");
        if !fns.iter().any(|(n, _)| *n == key.name) {
            fns.push((key.name.clone(), lead_fn(&key.name)));
        }
        let f = &fns.iter().find(|(n, _)| *n == key.name).expect("inserted").1;
        let n = (slot.duration_seconds * fs).round() as usize;
        let samples = (0..n)
            .map(|i| T::lit(f(slot.start_seconds + i as f64 / fs)))
            .collect();
        rec.leads.insert(
            key.to_string(),
            LeadSignal {
                start_seconds: T::lit(slot.start_seconds),
                samples,
            },
        );
    }
    rec
}

/// A record for `layout` at `fs` Hz. A lead's segment and rhythm strip
/// share one underlying signal.
pub fn generate_record<T: Real>(
    kind: SignalKind,
    layout: &LeadLayout,
    fs: f64,
    rng: &mut impl Rng,
) -> DigitisedRecord<T> {
    match kind {
        SignalKind::Flat => build(layout, fs, |_| Box::new(|_| 0.0)),
        SignalKind::SquarePulses => build(layout, fs, |_| {
            Box::new(|t: f64| {
                let u = t.rem_euclid(1.0);
                if (0.3..0.5).contains(&u) {
                    0.5
                } else {
                    0.0
                }
            })
        }),
        SignalKind::SyntheticEcg => {
            let beat = std::sync::Arc::new(Beat::random(rng));
            build(layout, fs, |name| {
                let mut gain = rng.random_range(0.4..1.1);
                if name == "aVR" {
                    gain = -gain;
                }
                let b = beat.clone();
                Box::new(move |t| gain * b.value(t))
            })
        }
    }
}

/// Isolated Gaussian spikes of width `sigma_s`, one per second, with
/// amplitudes in `[0.5, 1.3]` mV; everything else is zero.
pub fn narrow_peaks_record<T: Real>(
    layout: &LeadLayout,
    fs: f64,
    sigma_s: f64,
    rng: &mut impl Rng,
) -> DigitisedRecord<T> {
    build(layout, fs, |_| {
        let times: Vec<(f64, f64)> = (0..layout.record_seconds.ceil() as usize)
            .map(|k| {
                (
                    k as f64 + rng.random_range(0.2..0.8),
                    rng.random_range(0.5..1.3),
                )
            })
            .collect();
        Box::new(move |t| {
            times
                .iter()
                .map(|&(c, a)| {
                    let u = (t - c) / sigma_s;
                    a * (-0.5 * u * u).exp()
                })
                .sum()
        })
    })
}
