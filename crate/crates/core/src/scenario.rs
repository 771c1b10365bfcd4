//! A scripted ward day: who wears a badge when, and what the room sounds
//! like in each 10 s window.
//!
//! Conversation is placed only in windows whose occupancy bin holds at
//! least `threshold` adults. Footsteps accompany every badge entry and
//! exit, an oxygenator runs for a block in the early morning, and a few
//! alarms go off at random.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classify::WINDOW_MS;
use crate::corpus::{synthesize, ClipRecipe, SoundClass};
use crate::distill::prepare_in_background;
use crate::dsp::{analyze_waveform, FilterbankSpec, ThirdOctaveFrame, ThirdOctaveSpectrogram};
use crate::error::{invalid, Result};
use crate::report::{merge_events, occupancy, BadgeEvent, OccupancyTimeline, Role, DEFAULT_BIN_S, DEFAULT_MULTI_ADULT};

const HOUR_MS: i64 = 3_600_000;
const MINUTE_MS: i64 = 60_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DayConfig {
    pub start_ms: i64,
    pub hours: u32,
    pub seed: u64,
    pub bin_s: u32,
    pub threshold: usize,
    /// Probability that a window holds an alarm.
    pub alarm_rate: f64,
}

impl Default for DayConfig {
    fn default() -> Self {
        Self {
            // 2023-04-12T00:00:00Z
            start_ms: 1_681_257_600_000,
            hours: 24,
            seed: 2023,
            bin_s: DEFAULT_BIN_S,
            threshold: DEFAULT_MULTI_ADULT,
            alarm_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayScenario {
    pub config: DayConfig,
    pub badges: Vec<BadgeEvent>,
    pub occupancy: OccupancyTimeline,
    /// One recipe per 10 s window, in time order.
    pub windows: Vec<ClipRecipe>,
}

impl DayScenario {
    pub fn span(&self) -> (i64, i64) {
        let start = self.config.start_ms;
        (start, start + self.config.hours as i64 * HOUR_MS)
    }

    pub fn window_start(&self, i: usize) -> i64 {
        self.config.start_ms + i as i64 * WINDOW_MS
    }
}

fn visit(id: &str, role: Role, enter_ms: i64, minutes: i64) -> BadgeEvent {
    BadgeEvent {
        badge_id: id.to_string(),
        role,
        enter_ms,
        exit_ms: enter_ms + minutes * MINUTE_MS,
    }
}

fn badge_script(cfg: &DayConfig, rng: &mut ChaCha8Rng) -> Vec<BadgeEvent> {
    let t0 = cfg.start_ms;
    let jitter = |rng: &mut ChaCha8Rng, minutes: i64| rng.gen_range(-minutes..=minutes) * MINUTE_MS;
    let mut events = Vec::new();
    // nurse rounds every three hours, alternating between two nurses
    for (k, hour) in (0..cfg.hours as i64).step_by(3).enumerate() {
        let nurse = if k % 2 == 0 { "nurse-1" } else { "nurse-2" };
        let enter = t0 + hour * HOUR_MS + 30 * MINUTE_MS + jitter(rng, 20);
        events.push(visit(nurse, Role::Professional, enter, rng.gen_range(10..=25)));
    }
    let at = |hour: i64, minute: i64| t0 + hour * HOUR_MS + minute * MINUTE_MS;
    let mut day: Vec<BadgeEvent> = vec![
        visit("doctor-1", Role::Professional, at(10, 0) + jitter(rng, 15), rng.gen_range(20..=40)),
        visit("parent-1", Role::Parent, at(9, 0) + jitter(rng, 30), rng.gen_range(120..=180)),
        visit("parent-1", Role::Parent, at(17, 0) + jitter(rng, 30), rng.gen_range(150..=180)),
        visit("parent-2", Role::Parent, at(18, 0) + jitter(rng, 10), rng.gen_range(45..=75)),
    ];
    events.append(&mut day);
    let end = t0 + cfg.hours as i64 * HOUR_MS;
    events.retain(|e| e.enter_ms < end && e.exit_ms > t0);
    merge_events(events)
}

/// Builds the badge log, its occupancy, and one clip recipe per window.
pub fn scripted_day(cfg: &DayConfig) -> Result<DayScenario> {
    if cfg.hours == 0 {
        return Err(invalid("a day needs at least one hour"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let badges = badge_script(cfg, &mut rng);
    let span = (cfg.start_ms, cfg.start_ms + cfg.hours as i64 * HOUR_MS);
    let occ = occupancy(&badges, cfg.bin_s, span)?;
    let transitions: Vec<i64> = badges.iter().flat_map(|b| [b.enter_ms, b.exit_ms]).collect();
    let n_windows = ((span.1 - span.0) / WINDOW_MS) as usize;
    let base = cfg.seed.wrapping_mul(1 << 24);
    let windows = (0..n_windows)
        .map(|i| {
            let start = span.0 + i as i64 * WINDOW_MS;
            let mut classes = Vec::new();
            if occ.bin_of(start).is_some_and(|b| occ.counts[b] >= cfg.threshold) {
                classes.push(SoundClass::Conversation);
            }
            if transitions.iter().any(|&t| (t - start).abs() <= 30_000) {
                classes.push(SoundClass::Footsteps);
            }
            let hour = (start - span.0) / HOUR_MS;
            if (2..6).contains(&hour) {
                classes.push(SoundClass::Oxygenator);
            }
            if rng.gen_bool(cfg.alarm_rate) {
                classes.push(SoundClass::Alarm);
            }
            let level = rng.gen_range(-40.0..-30.0);
            ClipRecipe::new(classes, base.wrapping_add(i as u64), 10.0, level)
        })
        .collect();
    Ok(DayScenario {
        config: cfg.clone(),
        badges,
        occupancy: occ,
        windows,
    })
}

/// Third-octave frames of one window's audio, at stored precision.
pub fn window_frames(recipe: &ClipRecipe, spec: &FilterbankSpec) -> Result<Vec<Vec<f64>>> {
    let clip = synthesize(recipe);
    let tob = analyze_waveform(&clip.waveform, spec, 0)?.quantized();
    Ok(tob.frames.into_iter().map(|f| f.band_power).collect())
}

/// Renders the whole day as one contiguous third-octave spectrogram.
/// Audio is synthesized on a producer thread behind a queue of `capacity`.
pub fn day_spectrogram(sc: &DayScenario, capacity: usize) -> Result<ThirdOctaveSpectrogram> {
    let spec = FilterbankSpec::standard();
    let per_window = prepare_in_background(&sc.windows, capacity, |r| window_frames(r, &spec))?;
    let mut tob = ThirdOctaveSpectrogram::new(spec, sc.config.start_ms);
    let mut index = 0u64;
    for frames in per_window {
        for band_power in frames {
            tob.push(ThirdOctaveFrame {
                frame_index: index,
                band_power,
            })?;
            index += 1;
        }
    }
    Ok(tob)
}
