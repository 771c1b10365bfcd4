//! Seeded synthetic ward audio.
//!
//! Four event classes over a pink-noise floor:
//! - conversation: 300-3000 Hz band-limited noise, 3-5 Hz syllabic envelope
//! - footsteps: decaying broadband bursts at 1.5-2.5 steps per second
//! - oxygenator: 50-120 Hz hum with harmonics over a steady low-passed pedestal
//! - alarm: a repeating three-note pure-tone beep melody in 1-4 kHz
//!
//! Every clip is normalized to its recipe's RMS level, so level never gives
//! a class away.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};

pub const SAMPLE_RATE: u32 = 32_000;
pub const CLIP_SECONDS: usize = 10;
pub const CLIP_SAMPLES: usize = SAMPLE_RATE as usize * CLIP_SECONDS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SoundClass {
    Conversation,
    Footsteps,
    Oxygenator,
    Alarm,
}

impl SoundClass {
    pub const ALL: [SoundClass; 4] = [
        SoundClass::Conversation,
        SoundClass::Footsteps,
        SoundClass::Oxygenator,
        SoundClass::Alarm,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SoundClass::Conversation => "conversation",
            SoundClass::Footsteps => "footsteps",
            SoundClass::Oxygenator => "oxygenator",
            SoundClass::Alarm => "alarm",
        }
    }
}

impl fmt::Display for SoundClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SoundClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SoundClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| invalid(format!("unknown sound class {s:?}")))
    }
}

/// Everything needed to regenerate one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecipe {
    /// Sorted, deduplicated.
    pub classes: Vec<SoundClass>,
    pub seed: u64,
    /// Level of each event relative to the background.
    pub snr_db: f64,
    /// RMS of the final clip in dB full scale.
    pub level_dbfs: f64,
}

impl ClipRecipe {
    pub fn new(mut classes: Vec<SoundClass>, seed: u64, snr_db: f64, level_dbfs: f64) -> Self {
        classes.sort();
        classes.dedup();
        Self {
            classes,
            seed,
            snr_db,
            level_dbfs,
        }
    }

    pub fn target(&self) -> Vec<f64> {
        let mut t = vec![0.0; SoundClass::ALL.len()];
        for c in &self.classes {
            t[c.index()] = 1.0;
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub waveform: Vec<f64>,
    pub target: Vec<f64>,
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn normalize(x: &mut [f64], target_rms: f64) {
    let r = rms(x);
    if r > 0.0 {
        let g = target_rms / r;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

fn white(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Pink noise from Paul Kellet's refined filter on white noise.
fn pink(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    (0..n)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let out = b.iter().sum::<f64>() + w * 0.5362;
            b[6] = w * 0.115926;
            out
        })
        .collect()
}

/// Brick-wall band-pass in the frequency domain.
fn bandpass(x: &[f64], lo_hz: f64, hi_hz: f64) -> Vec<f64> {
    thread_local! {
        // plans for long transforms are costly to build; reuse them across clips
        static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    }
    let n = x.len();
    let (fwd, inv) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    });
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    let df = SAMPLE_RATE as f64 / n as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * df;
        if f < lo_hz || f > hi_hz {
            *c = Complex64::default();
        }
    }
    inv.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn conversation(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let carrier = bandpass(&white(rng, n), 300.0, 3000.0);
    let rate = rng.gen_range(3.0..5.0);
    let phase = rng.gen_range(0.0..2.0 * PI);
    // slow phrase-level swell so utterances do not all look alike
    let swell_rate = rng.gen_range(0.1..0.3);
    let swell_phase = rng.gen_range(0.0..2.0 * PI);
    let fs = SAMPLE_RATE as f64;
    carrier
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let t = i as f64 / fs;
            let s = 0.5 - 0.5 * (2.0 * PI * rate * t + phase).cos();
            let syllable = s * s.sqrt();
            let swell = 0.6 + 0.4 * (2.0 * PI * swell_rate * t + swell_phase).sin();
            c * syllable * swell
        })
        .collect()
}

fn footsteps(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let rate = rng.gen_range(1.5..2.5);
    let tau = rng.gen_range(0.010..0.030);
    let burst_len = (0.15 * fs) as usize;
    let mut out = vec![0.0; n];
    let mut t = rng.gen_range(0.0..1.0 / rate);
    while t < n as f64 / fs {
        let start = (t * fs) as usize;
        let gain = rng.gen_range(0.7..1.0);
        for j in 0..burst_len.min(n - start) {
            let env = (-(j as f64) / (tau * fs)).exp();
            let w: f64 = rng.sample(StandardNormal);
            out[start + j] += gain * env * w;
        }
        t += (1.0 / rate) * rng.gen_range(0.9..1.1);
    }
    out
}

fn oxygenator(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let f0 = rng.gen_range(50.0..120.0);
    let phases: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    // one-pole low-pass around 500 Hz for the pedestal
    let a = (-2.0 * PI * 500.0 / fs).exp();
    let mut lp = 0.0;
    let noise = white(rng, n);
    // each harmonic is a rotating phasor; its imaginary part is the sine
    let mut osc: Vec<Complex64> = phases.iter().map(|&ph| Complex64::from_polar(1.0, ph)).collect();
    let step: Vec<Complex64> = (1..=osc.len())
        .map(|h| Complex64::from_polar(1.0, 2.0 * PI * f0 * h as f64 / fs))
        .collect();
    let hum: Vec<f64> = (0..n)
        .map(|_| {
            let mut v = 0.0;
            for (h, (z, r)) in osc.iter_mut().zip(&step).enumerate() {
                v += z.im / (h + 1) as f64;
                *z *= r;
            }
            v
        })
        .collect();
    let mut pedestal: Vec<f64> = noise
        .iter()
        .map(|&w| {
            lp = a * lp + (1.0 - a) * w;
            lp
        })
        .collect();
    normalize(&mut pedestal, rms(&hum) * 0.5);
    hum.iter().zip(&pedestal).map(|(h, p)| h + p).collect()
}

fn alarm(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let notes: Vec<f64> = (0..3).map(|_| rng.gen_range(1000.0..4000.0)).collect();
    let period = rng.gen_range(0.8..1.5);
    let beep = 0.12;
    let gap = 0.03;
    let ramp = 0.005;
    let offset = rng.gen_range(0.0..period);
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let pos = (t + offset) % period;
            let slot = (pos / (beep + gap)) as usize;
            if slot >= notes.len() {
                return 0.0;
            }
            let within = pos - slot as f64 * (beep + gap);
            if within >= beep {
                return 0.0;
            }
            let env = if within < ramp {
                0.5 - 0.5 * (PI * within / ramp).cos()
            } else if beep - within < ramp {
                0.5 - 0.5 * (PI * (beep - within) / ramp).cos()
            } else {
                1.0
            };
            env * (2.0 * PI * notes[slot] * t).sin()
        })
        .collect()
}

/// Generates the waveform for `class` with unit RMS.
pub fn event(class: SoundClass, rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut x = match class {
        SoundClass::Conversation => conversation(rng, n),
        SoundClass::Footsteps => footsteps(rng, n),
        SoundClass::Oxygenator => oxygenator(rng, n),
        SoundClass::Alarm => alarm(rng, n),
    };
    normalize(&mut x, 1.0);
    x
}

/// Unit-RMS pink background.
pub fn background(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut x = pink(rng, n);
    normalize(&mut x, 1.0);
    x
}

/// Renders a 10 s clip and its multilabel target.
pub fn synthesize(recipe: &ClipRecipe) -> Clip {
    synthesize_len(recipe, CLIP_SAMPLES)
}

pub fn synthesize_len(recipe: &ClipRecipe, n: usize) -> Clip {
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let mut x = background(&mut rng, n);
    let gain = 10f64.powf(recipe.snr_db / 20.0);
    for &c in &recipe.classes {
        let e = event(c, &mut rng, n);
        x.iter_mut().zip(&e).for_each(|(a, b)| *a += gain * b);
    }
    normalize(&mut x, 10f64.powf(recipe.level_dbfs / 20.0));
    Clip {
        waveform: x,
        target: recipe.target(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub n_per_class: usize,
    pub n_mixtures: usize,
    /// Background-only clips (empty class set), spread over a wide level range.
    pub n_background: usize,
    pub seed: u64,
    pub snr_db: (f64, f64),
    pub level_dbfs: (f64, f64),
    pub background_level_dbfs: (f64, f64),
}

impl DatasetConfig {
    pub fn new(n_per_class: usize, seed: u64) -> Self {
        Self {
            n_per_class,
            n_mixtures: n_per_class,
            n_background: n_per_class / 2,
            seed,
            snr_db: (6.0, 20.0),
            level_dbfs: (-40.0, -15.0),
            background_level_dbfs: (-90.0, -30.0),
        }
    }
}

/// Recipes split into disjoint train / validation / test sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<ClipRecipe>,
    pub val: Vec<ClipRecipe>,
    pub test: Vec<ClipRecipe>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Balanced singles, random 2-3 class mixtures and background-only clips.
/// Each group is split 80/10/10; clip seeds are `seed * 2^20 + i` for a
/// running index `i`, so no seed is shared between clips or splits.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    if cfg.n_per_class == 0 {
        return Err(invalid("n_per_class must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = cfg.seed.wrapping_mul(1 << 20);
    let mut next_seed = 0u64;
    let mut recipe = |rng: &mut ChaCha8Rng, classes: Vec<SoundClass>, level: (f64, f64)| {
        let r = ClipRecipe::new(
            classes,
            base.wrapping_add(next_seed),
            rng.gen_range(cfg.snr_db.0..=cfg.snr_db.1),
            rng.gen_range(level.0..=level.1),
        );
        next_seed += 1;
        r
    };
    let mut groups: Vec<Vec<ClipRecipe>> = Vec::new();
    for class in SoundClass::ALL {
        groups.push(
            (0..cfg.n_per_class)
                .map(|_| recipe(&mut rng, vec![class], cfg.level_dbfs))
                .collect(),
        );
    }
    groups.push(
        (0..cfg.n_mixtures)
            .map(|_| {
                let k = rng.gen_range(2..=3);
                let classes = SoundClass::ALL.choose_multiple(&mut rng, k).copied().collect();
                recipe(&mut rng, classes, cfg.level_dbfs)
            })
            .collect(),
    );
    groups.push(
        (0..cfg.n_background)
            .map(|_| recipe(&mut rng, Vec::new(), cfg.background_level_dbfs))
            .collect(),
    );
    let mut ds = Dataset {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for group in groups {
        let n = group.len();
        let n_val = n / 10;
        let n_test = n / 10;
        let n_train = n - n_val - n_test;
        let mut it = group.into_iter();
        ds.train.extend(it.by_ref().take(n_train));
        ds.val.extend(it.by_ref().take(n_val));
        ds.test.extend(it);
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recipe(classes: Vec<SoundClass>, seed: u64) -> ClipRecipe {
        ClipRecipe::new(classes, seed, 10.0, -20.0)
    }

    #[test]
    fn background_only_has_zero_target() {
        let clip = synthesize(&recipe(vec![], 1));
        assert_eq!(clip.target, vec![0.0; 4]);
        assert_eq!(clip.waveform.len(), CLIP_SAMPLES);
        assert!(rms(&clip.waveform) > 0.0);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let r = recipe(vec![SoundClass::Alarm, SoundClass::Conversation], 9);
        let a = synthesize(&r);
        let b = synthesize(&r);
        assert!(a.waveform.iter().zip(&b.waveform).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(synthesize(&recipe(r.classes.clone(), 10)).waveform, a.waveform);
    }

    #[test]
    fn rms_matches_level() {
        for (i, c) in SoundClass::ALL.into_iter().enumerate() {
            let r = ClipRecipe::new(vec![c], i as u64, 12.0, -27.5);
            let level = 20.0 * rms(&synthesize(&r).waveform).log10();
            assert!((level + 27.5).abs() <= 3.0, "{c}: {level}");
        }
    }

    #[test]
    fn targets_follow_classes() {
        let r = recipe(vec![SoundClass::Alarm, SoundClass::Footsteps, SoundClass::Alarm], 0);
        assert_eq!(r.classes.len(), 2);
        assert_eq!(r.target(), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn class_names_parse() {
        for c in SoundClass::ALL {
            assert_eq!(c.name().parse::<SoundClass>().unwrap(), c);
        }
        assert!("train".parse::<SoundClass>().is_err());
    }

    #[test]
    fn dataset_split_arithmetic() {
        let mut cfg = DatasetConfig::new(100, 5);
        cfg.n_mixtures = 20;
        cfg.n_background = 0;
        let ds = build_dataset(&cfg).unwrap();
        let singles = |v: &[ClipRecipe]| v.iter().filter(|r| r.classes.len() == 1).count();
        assert_eq!(singles(&ds.train) + singles(&ds.val) + singles(&ds.test), 400);
        assert_eq!(singles(&ds.train), 320);
        assert_eq!(singles(&ds.val), 40);
        assert_eq!(singles(&ds.test), 40);
        assert_eq!(ds.len(), 420);
    }

    #[test]
    fn dataset_is_deterministic_and_disjoint() {
        let cfg = DatasetConfig::new(12, 3);
        let a = build_dataset(&cfg).unwrap();
        assert_eq!(a, build_dataset(&cfg).unwrap());
        let mut seeds: Vec<u64> = a.train.iter().chain(&a.val).chain(&a.test).map(|r| r.seed).collect();
        let n = seeds.len();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), n);
        assert!(build_dataset(&DatasetConfig::new(0, 1)).is_err());
    }
}
