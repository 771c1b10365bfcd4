use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quietward_core::classify::{DetectionTimeline, DetectionWindow};
use quietward_core::codec::write_file;
use quietward_core::corpus::{synthesize_len, ClipRecipe, SoundClass};
use quietward_core::distill::{silent_tob, TeacherModel, TranscoderModel};
use quietward_core::report::{write_badges, BadgeEvent, Role};
use quietward_core::wav;

const T0: i64 = 1_681_257_600_000;

fn quietward(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quietward"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run quietward")
}

fn ok(args: &[&str]) -> String {
    let out = quietward(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = quietward(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn clip_wav(dir: &Path, name: &str, seconds: usize, rate: u32) -> PathBuf {
    let recipe = ClipRecipe::new(vec![SoundClass::Conversation, SoundClass::Alarm], 5, 12.0, -25.0);
    let clip = synthesize_len(&recipe, seconds * 32_000);
    let path = dir.join(name);
    wav::write(&path, rate, &clip.waveform).unwrap();
    path
}

/// Untrained but valid checkpoints; enough to exercise the plumbing.
fn init_models(dir: &Path) -> (PathBuf, PathBuf) {
    let teacher = dir.join("teacher.qwnn");
    let student = dir.join("student.qwnn");
    let mut t = TeacherModel::init(1).unwrap();
    t.network.freeze();
    t.save(&teacher).unwrap();
    TranscoderModel::init(2).unwrap().save(&student).unwrap();
    (teacher, student)
}

#[test]
fn analyze_reports_frames_and_bitrate() {
    let dir = tempfile::tempdir().unwrap();
    let input = clip_wav(dir.path(), "ten.wav", 10, 32_000);
    let tob = dir.path().join("ten.tob");
    let out = ok(&["analyze", s(&input), s(&tob)]);
    assert!(out.contains("80 frames"), "{out}");
    assert!(out.contains("928.0 B/s"), "{out}");
    assert_eq!(std::fs::metadata(&tob).unwrap().len(), 142 + 80 * 116);
}

#[test]
fn analyze_rejects_other_sample_rates() {
    let dir = tempfile::tempdir().unwrap();
    let input = clip_wav(dir.path(), "cd.wav", 1, 44_100);
    let err = fails(&["analyze", s(&input), s(&dir.path().join("x.tob"))]);
    assert!(err.contains("44100") && err.contains("resample"), "{err}");
}

#[test]
fn missing_teacher_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let tob = dir.path().join("s.tob");
    write_file(&tob, &silent_tob(80), 0.0).unwrap();
    let missing = dir.path().join("nope.qwnn");
    let err = fails(&["detect", s(&tob), "--linear", "--teacher", s(&missing), "--out", s(&dir.path().join("d.csv"))]);
    assert!(err.contains("teacher"), "{err}");
    let err = fails(&["distill", "--teacher", s(&missing), "--out", s(&dir.path().join("st.qwnn"))]);
    assert!(err.contains("teacher"), "{err}");
    let err = fails(&["detect", s(&tob), "--linear", "--out", s(&dir.path().join("d.csv"))]);
    assert!(err.contains("teacher"), "{err}");
}

#[test]
fn wav_and_stored_detection_agree_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (teacher, student) = init_models(dir.path());
    let input = clip_wav(dir.path(), "minute.wav", 60, 32_000);
    let tob = dir.path().join("minute.tob");
    let start = "2023-04-12T08:00:00Z";
    ok(&["analyze", s(&input), s(&tob), "--start", start]);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    ok(&["detect", s(&tob), "--teacher", s(&teacher), "--student", s(&student), "--out", s(&a)]);
    ok(&["detect", s(&input), "--teacher", s(&teacher), "--student", s(&student), "--start", start, "--out", s(&b)]);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 1 + 6 * 4);
    assert!(text.starts_with("window_start_iso8601,nicu_label,y,raw_score"));
    let det = DetectionTimeline::read_csv(text.as_bytes()).unwrap();
    assert_eq!(det.windows[0].start_ms, T0 + 8 * 3_600_000);
    assert_eq!(det.labels, ["Conversation", "Footsteps", "Oxygenator", "Hospital phone"]);

    let c = dir.path().join("c.csv");
    ok(&["detect", s(&tob), "--teacher", s(&teacher), "--linear", "--alpha", "1", "--out", s(&c)]);
    let det = DetectionTimeline::load_csv(&c).unwrap();
    assert!(det.windows.iter().all(|w| w.y.contains(&1.0)));
}

#[test]
fn config_file_supplies_paths_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let (teacher, _) = init_models(dir.path());
    let tob = dir.path().join("s.tob");
    write_file(&tob, &silent_tob(80), 0.0).unwrap();
    let cfg = dir.path().join("site.conf");
    std::fs::write(&cfg, format!("# ward 3\nteacher = {}\nalpha = 1.0\n", teacher.display())).unwrap();
    let out = dir.path().join("d.csv");
    ok(&["--config", s(&cfg), "detect", s(&tob), "--linear", "--out", s(&out)]);
    let one = DetectionTimeline::load_csv(&out).unwrap();
    ok(&["--config", s(&cfg), "detect", s(&tob), "--linear", "--alpha", "0.5", "--out", s(&out)]);
    let half = DetectionTimeline::load_csv(&out).unwrap();
    for (a, b) in one.windows[0].y.iter().zip(&half.windows[0].y) {
        assert!((a.sqrt() - b).abs() < 1e-15);
    }

    std::fs::write(&cfg, "alpha = 0.5\nalhpa = 1\n").unwrap();
    let err = fails(&["--config", s(&cfg), "detect", s(&tob), "--linear", "--out", s(&out)]);
    assert!(err.contains("line 2"), "{err}");
}

fn day_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let labels: Vec<String> = ["Conversation", "Footsteps"].iter().map(|s| s.to_string()).collect();
    let mut det = DetectionTimeline::new(labels);
    for i in 0..8640i64 {
        let talk = (3240..3600).contains(&i);
        det.windows.push(DetectionWindow {
            start_ms: T0 + i * 10_000,
            y: vec![if talk { 1.0 } else { 0.5 }, 0.5],
            raw: vec![0.5, 0.5],
        });
    }
    let detections = dir.join("det.csv");
    det.save_csv(&detections).unwrap();
    let visit = |id: &str, role, from_h: i64, to_h: i64| BadgeEvent {
        badge_id: id.into(),
        role,
        enter_ms: T0 + from_h * 3_600_000,
        exit_ms: T0 + to_h * 3_600_000,
    };
    let badges = dir.join("badges.csv");
    let events = vec![
        visit("nurse-1", Role::Professional, 9, 10),
        visit("parent-1", Role::Parent, 8, 12),
    ];
    write_badges(&events, std::fs::File::create(&badges).unwrap()).unwrap();
    (detections, badges)
}

#[test]
fn report_bins_a_day_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (detections, badges) = day_fixture(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = ok(&["report", "--detections", s(&detections), "--badges", s(&badges), "--out-dir", s(&a)]);
    ok(&["report", "--detections", s(&detections), "--badges", s(&badges), "--out-dir", s(&b)]);
    assert!(out.contains("480 bins"), "{out}");
    let bins = std::fs::read_to_string(a.join("bins.csv")).unwrap();
    assert_eq!(bins.lines().count(), 481);
    for f in ["bins.csv", "summary.csv", "timeline.svg"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary = std::fs::read_to_string(a.join("summary.csv")).unwrap();
    assert!(summary.contains("Conversation,1.000000,0.500000,0.500000,20,460"), "{summary}");
}

#[test]
fn report_requires_the_badge_file() {
    let dir = tempfile::tempdir().unwrap();
    let (detections, _) = day_fixture(dir.path());
    let missing = dir.path().join("missing.csv");
    let err = fails(&["report", "--detections", s(&detections), "--badges", s(&missing), "--out-dir", s(dir.path())]);
    assert!(err.contains("badge"), "{err}");
}

fn error_trajectory(stdout: &str) -> Vec<f64> {
    stdout
        .lines()
        .filter_map(|l| l.split("consistency error ").nth(1))
        .map(|v| v.trim().parse().unwrap())
        .collect()
}

#[test]
fn audit_reconstructs_and_reports_a_falling_error() {
    let dir = tempfile::tempdir().unwrap();
    let silent = dir.path().join("silent.tob");
    write_file(&silent, &silent_tob(16), 0.0).unwrap();
    let out = dir.path().join("silent.wav");
    ok(&["audit", s(&silent), s(&out), "--iters", "3"]);
    assert!(wav::read(&out, 32_000).unwrap().samples.iter().all(|&v| v == 0.0));

    let input = clip_wav(dir.path(), "talk.wav", 3, 32_000);
    let tob = dir.path().join("talk.tob");
    ok(&["analyze", s(&input), s(&tob)]);
    let (a, b) = (dir.path().join("a.wav"), dir.path().join("b.wav"));
    let printed = ok(&["audit", s(&tob), s(&a), "--seed", "4"]);
    ok(&["audit", s(&tob), s(&b), "--seed", "4"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let errors = error_trajectory(&printed);
    assert_eq!(errors.len(), 60);
    assert!(errors.windows(2).all(|w| w[1] <= w[0]), "{errors:?}");
}

#[test]
fn render_draws_three_panels() {
    let dir = tempfile::tempdir().unwrap();
    let input = clip_wav(dir.path(), "clip.wav", 2, 32_000);
    let svg = dir.path().join("clip.svg");
    ok(&["render", s(&input), "--out", s(&svg)]);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<g class=\"panel\"").count(), 3);
}

#[test]
fn synth_writes_clip_and_day() {
    let dir = tempfile::tempdir().unwrap();
    let clip = dir.path().join("steps.wav");
    ok(&["synth", "clip", s(&clip), "--classes", "footsteps", "--seconds", "2", "--level-dbfs", "-30"]);
    assert_eq!(wav::read(&clip, 32_000).unwrap().samples.len(), 64_000);
    let err = fails(&["synth", "clip", s(&clip), "--classes", "violin"]);
    assert!(err.contains("violin"), "{err}");

    let (tob, badges) = (dir.path().join("day.tob"), dir.path().join("badges.csv"));
    let out = ok(&["synth", "day", "--tob", s(&tob), "--badges", s(&badges), "--hours", "1"]);
    assert!(out.starts_with("28800 frames"), "{out}");
    assert_eq!(std::fs::metadata(&tob).unwrap().len(), 142 + 28_800 * 116);
}

#[test]
fn training_and_distillation_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let small = ["--n-per-class", "12", "--seed", "9"];
    let train = |name: &str| {
        let out = dir.path().join(format!("{name}.qwnn"));
        let log = dir.path().join(format!("{name}.csv"));
        let mut args = vec!["train", "--out", s(&out), "--log", s(&log), "--epochs", "1", "--min-clips", "5"];
        args.extend(small);
        ok(&args);
        (std::fs::read(&out).unwrap(), std::fs::read_to_string(&log).unwrap())
    };
    let (ta, la) = train("t1");
    let (tb, lb) = train("t2");
    assert_eq!(ta, tb);
    assert_eq!(la, lb);
    assert_eq!(la.lines().count(), 1 + 2);

    let teacher = dir.path().join("t1.qwnn");
    let distill = |name: &str| {
        let out = dir.path().join(format!("{name}.qwnn"));
        let log = dir.path().join(format!("{name}.csv"));
        let mut args = vec!["distill", "--teacher", s(&teacher), "--out", s(&out), "--log", s(&log), "--epochs", "1"];
        args.extend(small);
        let stdout = ok(&args);
        (std::fs::read(&out).unwrap(), std::fs::read_to_string(&log).unwrap(), stdout)
    };
    let (sa, la, out) = distill("s1");
    let (sb, lb, _) = distill("s2");
    assert_eq!(sa, sb);
    assert_eq!(la, lb);
    assert_eq!(la.lines().count(), 1 + 2);
    assert!(out.contains("test bce"), "{out}");
}
