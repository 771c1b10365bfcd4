use quietward_core::classify::{DetectionTimeline, DetectionWindow};
use quietward_core::config::PipelineConfig;
use quietward_core::corpus::{synthesize, ClipRecipe, SoundClass};
use quietward_core::dsp::{analyze_waveform, FilterbankSpec};
use quietward_core::mel::{linear_transcode, mel_from_waveform, MelSpec};
use quietward_core::render::{spectrogram_panels, timeline};
use quietward_core::report::{occupancy, BadgeEvent, Role};
use quietward_core::wav;

const T0: i64 = 1_681_257_600_000;

fn badges() -> Vec<BadgeEvent> {
    vec![
        BadgeEvent {
            badge_id: "nurse-1".into(),
            role: Role::Professional,
            enter_ms: T0 + 600_000,
            exit_ms: T0 + 1_800_000,
        },
        BadgeEvent {
            badge_id: "parent-1".into(),
            role: Role::Parent,
            enter_ms: T0 + 900_000,
            exit_ms: T0 + 3_000_000,
        },
    ]
}

fn detections() -> DetectionTimeline {
    let mut t = DetectionTimeline::new(vec!["Conversation".into(), "Footsteps".into()]);
    for i in 0..360 {
        let v = if (90..180).contains(&i) { 1.0 } else { 0.5 };
        t.windows.push(DetectionWindow {
            start_ms: T0 + i * 10_000,
            y: vec![v, 1.0 - v / 2.0],
            raw: vec![v, 0.2],
        });
    }
    t
}

#[test]
fn timeline_is_byte_deterministic() {
    let occ = occupancy(&badges(), 180, (T0, T0 + 3_600_000)).unwrap();
    let a = timeline(&detections(), &occ, &badges(), 2);
    let b = timeline(&detections(), &occ, &badges(), 2);
    assert_eq!(a, b);
    assert_eq!(a.matches("<g class=\"curve\"").count(), 2);
    assert_eq!(a.matches("<g class=\"badge\"").count(), 2);
    assert!(a.contains("<polyline"));
}

#[test]
fn empty_detections_draw_badge_rows_only() {
    let occ = occupancy(&badges(), 180, (T0, T0 + 3_600_000)).unwrap();
    let empty = DetectionTimeline::new(vec!["Conversation".into()]);
    let svg = timeline(&empty, &occ, &badges(), 2);
    assert!(!svg.contains("<polyline"));
    assert_eq!(svg.matches("<g class=\"badge\"").count(), 2);
}

#[test]
fn clip_figure_has_three_panels_and_is_stable() {
    let clip = synthesize(&ClipRecipe::new(vec![SoundClass::Footsteps], 3, 12.0, -25.0));
    let tob = analyze_waveform(&clip.waveform, &FilterbankSpec::standard(), 0).unwrap();
    let spec = MelSpec::default();
    let transcoded = linear_transcode(&tob, &spec).unwrap();
    let truth = mel_from_waveform(&clip.waveform, &spec).unwrap();
    let svg = spectrogram_panels(&tob, &transcoded, &truth);
    assert_eq!(svg.matches("<g class=\"panel\"").count(), 3);
    assert_eq!(svg, spectrogram_panels(&tob, &transcoded, &truth));
}

#[test]
fn wav_round_trip_and_rate_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.wav");
    let x: Vec<f64> = (0..3200).map(|i| ((i as f64) * 0.01).sin() * 0.5).collect();
    wav::write(&path, 32_000, &x).unwrap();
    let back = wav::read(&path, 32_000).unwrap();
    assert_eq!(back.samples.len(), x.len());
    assert!(back.samples.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1.0 / 32768.0));

    let other = dir.path().join("b.wav");
    wav::write(&other, 44_100, &x).unwrap();
    let e = wav::read(&other, 32_000).unwrap_err().to_string();
    assert!(e.contains("44100") && e.contains("resample"), "{e}");
}

#[test]
fn config_defaults_and_overrides() {
    let cfg = PipelineConfig::parse("# site settings\nalpha = 1.0\nbin_s=60\n").unwrap();
    assert_eq!(cfg.alpha, 1.0);
    assert_eq!(cfg.bin_s, 60);
    assert_eq!(cfg.multi_adult, 2);
    assert_eq!(PipelineConfig::default().alpha, 0.5);
    assert_eq!(PipelineConfig::default().bin_s, 180);
    assert!(PipelineConfig::parse("alpah = 0.4").is_err());
    assert!(PipelineConfig::parse("alpha = 1.5").is_err());
    assert!(PipelineConfig::parse("alpha").is_err());
}
