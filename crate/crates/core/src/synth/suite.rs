use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::segmentation::LeadLayout;

use super::signals::{generate_record, SignalKind};
use super::{render, RenderConfig, SynthError, SyntheticSample};

/// How one config field varies across a suite. In JSON: a number, an
/// object `{"min": a, "max": b}`, or an array cycled by sample index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep<V> {
    Fixed(V),
    Uniform { min: V, max: V },
    Cycle(Vec<V>),
}

pub trait SweepValue: Copy {
    fn uniform(min: Self, max: Self, rng: &mut ChaCha8Rng) -> Self;
}

impl SweepValue for f64 {
    fn uniform(min: f64, max: f64, rng: &mut ChaCha8Rng) -> f64 {
        if min >= max {
            min
        } else {
            rng.random_range(min..=max)
        }
    }
}

impl SweepValue for u32 {
    fn uniform(min: u32, max: u32, rng: &mut ChaCha8Rng) -> u32 {
        if min >= max {
            min
        } else {
            rng.random_range(min..=max)
        }
    }
}

impl<V: SweepValue> Sweep<V> {
    fn pick(&self, index: usize, rng: &mut ChaCha8Rng) -> Option<V> {
        match self {
            Sweep::Fixed(v) => Some(*v),
            Sweep::Uniform { min, max } => Some(V::uniform(*min, *max, rng)),
            Sweep::Cycle(vs) => vs.get(index % vs.len().max(1)).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteRanges {
    pub pitch_px_per_mm: Sweep<f64>,
    pub rotation_degrees: Sweep<f64>,
    pub noise_sigma: Sweep<f64>,
    pub wrinkle_count: Sweep<u32>,
    pub shadow_strength: Sweep<f64>,
    pub grid_luminance: Sweep<f64>,
    pub trace_luminance: Sweep<f64>,
    pub include_calibration_pulse: bool,
    pub include_header_text: bool,
    pub signal: SignalKind,
    pub sampling_rate_hz: f64,
    pub layout: String,
}

impl Default for SuiteRanges {
    /// Clean pages: no rotation, noise, wrinkles or shadow.
    fn default() -> Self {
        Self {
            pitch_px_per_mm: Sweep::Uniform { min: 4.0, max: 5.0 },
            rotation_degrees: Sweep::Fixed(0.0),
            noise_sigma: Sweep::Fixed(0.0),
            wrinkle_count: Sweep::Fixed(0),
            shadow_strength: Sweep::Fixed(0.0),
            grid_luminance: Sweep::Uniform { min: 0.6, max: 0.75 },
            trace_luminance: Sweep::Uniform { min: 0.0, max: 0.2 },
            include_calibration_pulse: true,
            include_header_text: true,
            signal: SignalKind::SyntheticEcg,
            sampling_rate_hz: 100.0,
            layout: crate::segmentation::DEFAULT_LAYOUT_NAME.into(),
        }
    }
}

impl SuiteRanges {
    pub fn clean() -> Self {
        Self::default()
    }

    /// Rotation up to 30 degrees, noise up to 0.05, up to 3 wrinkles, light shadow.
    pub fn augmented() -> Self {
        Self {
            rotation_degrees: Sweep::Uniform { min: -30.0, max: 30.0 },
            noise_sigma: Sweep::Uniform { min: 0.0, max: 0.05 },
            wrinkle_count: Sweep::Uniform { min: 0, max: 3 },
            shadow_strength: Sweep::Uniform { min: 0.0, max: 0.2 },
            ..Self::default()
        }
    }

    /// Four variants: rotated by 1, 2 and 3 degrees, then unrotated with
    /// wrinkles and a shadow.
    pub fn four_variants() -> Self {
        Self {
            rotation_degrees: Sweep::Cycle(vec![1.0, 2.0, 3.0, 0.0]),
            wrinkle_count: Sweep::Cycle(vec![0, 0, 0, 3]),
            shadow_strength: Sweep::Cycle(vec![0.0, 0.0, 0.0, 0.25]),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if LeadLayout::by_name(&self.layout).is_none() {
            errs.push(format!("unknown layout {:?}", self.layout));
        }
        if !(self.sampling_rate_hz > 0.0 && self.sampling_rate_hz.is_finite()) {
            errs.push(format!("sampling_rate_hz must be positive, got {}", self.sampling_rate_hz));
        }
        let empty_cycle = |name: &str, is_empty: bool, errs: &mut Vec<String>| {
            if is_empty {
                errs.push(format!("{name}: empty cycle"));
            }
        };
        for (name, s) in [
            ("pitch_px_per_mm", &self.pitch_px_per_mm),
            ("rotation_degrees", &self.rotation_degrees),
            ("noise_sigma", &self.noise_sigma),
            ("shadow_strength", &self.shadow_strength),
            ("grid_luminance", &self.grid_luminance),
            ("trace_luminance", &self.trace_luminance),
        ] {
            empty_cycle(name, matches!(s, Sweep::Cycle(v) if v.is_empty()), &mut errs);
        }
        empty_cycle(
            "wrinkle_count",
            matches!(&self.wrinkle_count, Sweep::Cycle(v) if v.is_empty()),
            &mut errs,
        );
        errs
    }

    /// The render config of sample `index`, drawn from `rng`.
    fn draw(&self, index: usize, seed: u64, rng: &mut ChaCha8Rng) -> RenderConfig {
        let f = |s: &Sweep<f64>, rng: &mut ChaCha8Rng| s.pick(index, rng).unwrap_or(0.0);
        RenderConfig {
            pitch_px_per_mm: f(&self.pitch_px_per_mm, rng),
            rotation_degrees: f(&self.rotation_degrees, rng),
            noise_sigma: f(&self.noise_sigma, rng),
            wrinkle_count: self.wrinkle_count.pick(index, rng).unwrap_or(0),
            shadow_strength: f(&self.shadow_strength, rng),
            grid_luminance: f(&self.grid_luminance, rng),
            trace_luminance: f(&self.trace_luminance, rng),
            include_calibration_pulse: self.include_calibration_pulse,
            include_header_text: self.include_header_text,
            seed,
            ..RenderConfig::default()
        }
    }
}

/// Sample `index` of the suite seeded by `seed`; it depends only on
/// `seed + index` and the ranges.
pub fn generate_sample<T: Real>(
    index: usize,
    seed: u64,
    ranges: &SuiteRanges,
) -> Result<SyntheticSample<T>, SynthError> {
    let errs = ranges.validate();
    if !errs.is_empty() {
        return Err(SynthError::InvalidConfig(errs));
    }
    let layout = LeadLayout::by_name(&ranges.layout).expect("validated layout");
    let sample_seed = seed.wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let cfg = ranges.draw(index, sample_seed, &mut rng);
    let record = generate_record(ranges.signal, &layout, ranges.sampling_rate_hz, &mut rng);
    render(&record, &layout, &cfg)
}

/// `n` samples, generated in parallel, returned in index order.
pub fn generate_suite<T: Real>(
    n: usize,
    seed: u64,
    ranges: &SuiteRanges,
) -> Result<Vec<SyntheticSample<T>>, SynthError> {
    if n == 0 {
        return Err(SynthError::EmptySuite);
    }
    (0..n)
        .into_par_iter()
        .map(|i| generate_sample(i, seed, ranges))
        .collect()
}
