use std::fs::File;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use quietward_core::classify::{parse_time, LabelMap, LinearTranscoder, Transcoder};
use quietward_core::codec::{self, TobHeader};
use quietward_core::config::PipelineConfig;
use quietward_core::corpus::{build_dataset, synthesize, synthesize_len, ClipRecipe, DatasetConfig, SoundClass, SAMPLE_RATE};
use quietward_core::distill::{
    distill_transcoder, evaluate, evaluate_linear, prepare_distill, teacher_accuracy, train_teacher, DistillConfig,
    TeacherConfig, TeacherModel, TrainingLog, TranscoderModel,
};
use quietward_core::dsp::{analyze_waveform, FilterbankSpec, StreamAnalyzer, ThirdOctaveFrame, STANDARD_SAMPLE_RATE};
use quietward_core::mel::{griffin_lim, mel_from_waveform, pinv_reconstruct, MelSpec};
use quietward_core::pipeline::{analyze_to_file, detect_frames};
use quietward_core::render::{spectrogram_panels, timeline, write_svg};
use quietward_core::report::{align, load_badges, occupancy, write_badges};
use quietward_core::scenario::{day_spectrogram, scripted_day, DayConfig};
use quietward_core::wav;

fn start_ms(start: Option<&str>) -> Result<i64> {
    match start {
        Some(s) => parse_time(s).with_context(|| format!("bad start time {s:?}")),
        None => Ok(0),
    }
}

pub fn analyze(cfg: &PipelineConfig, input: &Path, output: &Path, start: Option<&str>) -> Result<()> {
    let reader = wav::open_checked(input, STANDARD_SAMPLE_RATE)?;
    let spec = FilterbankSpec::standard();
    let t0 = start_ms(start)?;
    ensure!(t0 >= 0, "start time before 1970 cannot be stored");
    let header = TobHeader::for_spec(&spec, t0 as u64, cfg.calibration_db);
    let header_bytes = header.size() as u64;
    let samples = reader.into_samples::<i16>().map(|s| s.map(wav::pcm_to_f64));
    let frames = StreamAnalyzer::new(spec.clone())?.frames(samples);
    let (n, bytes) = analyze_to_file(frames, output, header, cfg.queue_capacity)
        .with_context(|| format!("analyzing {}", input.display()))?;
    let seconds = n as f64 / spec.frames_per_second();
    print!("{n} frames, {seconds:.3} s, {bytes} bytes");
    if n > 0 {
        println!(", {:.1} B/s", (bytes - header_bytes) as f64 / seconds);
    } else {
        println!();
    }
    Ok(())
}

fn parse_classes(list: &str) -> Result<Vec<SoundClass>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<SoundClass>().map_err(Into::into))
        .collect()
}

pub fn synth_clip(output: &Path, classes: &str, seed: u64, snr_db: f64, level_dbfs: f64, seconds: f64) -> Result<()> {
    ensure!(seconds > 0.0, "clip length must be positive");
    let recipe = ClipRecipe::new(parse_classes(classes)?, seed, snr_db, level_dbfs);
    let n = (seconds * SAMPLE_RATE as f64).round() as usize;
    let clip = synthesize_len(&recipe, n);
    wav::write(output, SAMPLE_RATE, &clip.waveform)?;
    println!("{} samples written to {}", clip.waveform.len(), output.display());
    Ok(())
}

pub fn synth_corpus(cfg: &PipelineConfig, out_dir: &Path) -> Result<()> {
    let ds = build_dataset(&DatasetConfig::new(cfg.n_per_class, cfg.seed))?;
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = String::from("file,split,classes,seed,snr_db,level_dbfs\n");
    for (split, recipes) in [("train", &ds.train), ("val", &ds.val), ("test", &ds.test)] {
        for r in recipes.iter() {
            let name = format!("{split}-{}.wav", r.seed);
            wav::write(out_dir.join(&name), SAMPLE_RATE, &synthesize(r).waveform)?;
            let classes: Vec<&str> = r.classes.iter().map(|c| c.name()).collect();
            manifest.push_str(&format!(
                "{name},{split},{},{},{},{}\n",
                classes.join(";"),
                r.seed,
                r.snr_db,
                r.level_dbfs
            ));
        }
    }
    std::fs::write(out_dir.join("manifest.csv"), manifest)?;
    println!("{} clips written to {}", ds.len(), out_dir.display());
    Ok(())
}

pub fn synth_day(cfg: &PipelineConfig, tob_out: &Path, badges_out: &Path, hours: u32, seed: u64) -> Result<()> {
    let day = DayConfig {
        hours,
        seed,
        bin_s: cfg.bin_s,
        threshold: cfg.multi_adult,
        ..DayConfig::default()
    };
    let sc = scripted_day(&day)?;
    let tob = day_spectrogram(&sc, cfg.queue_capacity)?;
    let bytes = codec::write_file(tob_out, &tob, cfg.calibration_db)?;
    write_badges(&sc.badges, File::create(badges_out)?)?;
    let multi = sc.occupancy.counts.iter().filter(|&&c| c >= day.threshold).count();
    println!(
        "{} frames ({bytes} bytes), {} badge visits, {multi} of {} bins with at least {} adults",
        tob.len(),
        sc.badges.len(),
        sc.occupancy.counts.len(),
        day.threshold
    );
    Ok(())
}

fn print_log(log: &TrainingLog, metric: &str) {
    println!("epoch,loss,{metric}");
    for r in &log.rows {
        println!("{},{:.6},{:.4}", r.epoch, r.loss, r.agreement);
    }
}

fn check_divergence(log: &TrainingLog) -> Result<()> {
    if log.diverged() {
        bail!(
            "training diverged: final loss {:.6} above initial {:.6}",
            log.final_loss().unwrap_or(f64::NAN),
            log.initial_loss().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

pub fn train(cfg: &PipelineConfig, out: &Path, log_path: Option<&Path>) -> Result<()> {
    let ds = build_dataset(&DatasetConfig::new(cfg.n_per_class, cfg.seed))?;
    let defaults = TeacherConfig::default();
    let tc = TeacherConfig {
        epochs: cfg.teacher_epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate.unwrap_or(defaults.learning_rate),
        seed: cfg.seed,
        min_clips_per_class: cfg.teacher_min_clips,
        queue_capacity: cfg.queue_capacity,
    };
    let (teacher, log) = train_teacher(&ds.train, &ds.val, &tc)?;
    teacher.save(out)?;
    if let Some(p) = log_path {
        log.save_csv(p)?;
    }
    print_log(&log, "val_macro_accuracy");
    let acc = teacher_accuracy(&teacher, &ds.test, cfg.queue_capacity)?;
    println!("test macro accuracy {acc:.4}");
    check_divergence(&log)
}

fn load_teacher(cfg: &PipelineConfig) -> Result<TeacherModel> {
    let path = cfg.teacher.as_ref().context("no teacher checkpoint given (--teacher or `teacher =` in the config)")?;
    TeacherModel::load(path).with_context(|| format!("loading teacher checkpoint {}", path.display()))
}

pub fn distill(cfg: &PipelineConfig, out: &Path, log_path: Option<&Path>) -> Result<()> {
    let teacher = load_teacher(cfg)?;
    let ds = build_dataset(&DatasetConfig::new(cfg.n_per_class, cfg.seed))?;
    let cap = cfg.queue_capacity;
    let train = prepare_distill(&teacher, &ds.train, cap)?;
    let val = prepare_distill(&teacher, &ds.val, cap)?;
    let defaults = DistillConfig::default();
    let dc = DistillConfig {
        epochs: cfg.distill_epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate.unwrap_or(defaults.learning_rate),
        seed: cfg.seed.wrapping_add(1),
        hard_targets: cfg.hard_targets,
        queue_capacity: cap,
    };
    let (student, log) = distill_transcoder(TranscoderModel::init(dc.seed)?, &teacher, &train, &val, &dc)?;
    student.save(out)?;
    if let Some(p) = log_path {
        log.save_csv(p)?;
    }
    print_log(&log, "val_agreement");
    let test = prepare_distill(&teacher, &ds.test, cap)?;
    let s = evaluate(&student, &teacher, &test)?;
    let l = evaluate_linear(&teacher, &test)?;
    println!("test bce {:.6} agreement {:.4} (linear: bce {:.6} agreement {:.4})", s.bce, s.agreement, l.bce, l.agreement);
    check_divergence(&log)
}

fn quantize(frame: ThirdOctaveFrame) -> ThirdOctaveFrame {
    ThirdOctaveFrame {
        band_power: frame.band_power.iter().map(|&p| p as f32 as f64).collect(),
        ..frame
    }
}

pub fn detect(cfg: &PipelineConfig, input: &Path, out: &Path, linear: bool, start: Option<&str>) -> Result<()> {
    let teacher = load_teacher(cfg)?;
    let transcoder: Box<dyn Transcoder> = if linear {
        Box::new(LinearTranscoder {
            spec: teacher.mel.clone(),
        })
    } else {
        let path = cfg.student.as_ref().context("no student checkpoint given (--student, --linear, or `student =` in the config)")?;
        Box::new(TranscoderModel::load(path).with_context(|| format!("loading student checkpoint {}", path.display()))?)
    };
    let map = match &cfg.label_map {
        Some(p) => LabelMap::load(p).with_context(|| format!("reading label map {}", p.display()))?,
        None => LabelMap::default(),
    };
    let is_wav = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    let det = if is_wav {
        // frames go through the same f32 rounding as a stored file
        let reader = wav::open_checked(input, STANDARD_SAMPLE_RATE)?;
        let spec = FilterbankSpec::standard();
        let samples = reader.into_samples::<i16>().map(|s| s.map(wav::pcm_to_f64));
        let frames = StreamAnalyzer::new(spec.clone())?.frames(samples).map(|f| f.map(quantize));
        detect_frames(frames, &spec, start_ms(start)?, transcoder.as_ref(), &teacher, &map, cfg.alpha, cfg.queue_capacity)?
    } else {
        let tob = codec::read_file(input).with_context(|| format!("reading {}", input.display()))?;
        let spec = tob.spec.clone();
        let t0 = tob.start_time_ms;
        detect_frames(tob.frames.into_iter().map(Ok), &spec, t0, transcoder.as_ref(), &teacher, &map, cfg.alpha, cfg.queue_capacity)?
    };
    det.save_csv(out)?;
    println!("{} windows x {} labels written to {}", det.windows.len(), det.labels.len(), out.display());
    Ok(())
}

pub fn report(cfg: &PipelineConfig, detections: &Path, badges: &Path, out_dir: &Path) -> Result<()> {
    let det = quietward_core::classify::DetectionTimeline::load_csv(detections)
        .with_context(|| format!("reading detections {}", detections.display()))?;
    let events = load_badges(badges).with_context(|| format!("reading badge file {}", badges.display()))?;
    let span = det.span().context("detection file has no windows")?;
    let occ = occupancy(&events, cfg.bin_s, span)?;
    let rep = align(&det, &occ, cfg.multi_adult)?;
    std::fs::create_dir_all(out_dir)?;
    rep.write_bins_csv(File::create(out_dir.join("bins.csv"))?)?;
    rep.write_summary_csv(File::create(out_dir.join("summary.csv"))?)?;
    write_svg(out_dir.join("timeline.svg"), &timeline(&det, &occ, &events, cfg.multi_adult))?;
    println!("{} bins: {} multi-adult, {} other", rep.bins.len(), rep.n_multi, rep.n_other);
    if rep.multi_adult_empty() {
        println!("no bin reaches {} adults; the multi-adult partition is empty", cfg.multi_adult);
    }
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    for c in &rep.classes {
        println!(
            "{}: multi-adult {} other {} difference {}",
            c.label,
            opt(c.mean_multi),
            opt(c.mean_other),
            opt(c.difference)
        );
    }
    Ok(())
}

pub fn audit(cfg: &PipelineConfig, input: &Path, output: &Path) -> Result<()> {
    let tob = codec::read_file(input).with_context(|| format!("reading {}", input.display()))?;
    let spec = MelSpec::default();
    let mag = pinv_reconstruct(&tob, &spec)?;
    let gl = griffin_lim(&mag, &spec, cfg.gl_iters, cfg.seed)?;
    for (i, e) in gl.errors.iter().enumerate() {
        println!("iteration {:>3}: consistency error {e:.6e}", i + 1);
    }
    wav::write(output, spec.sample_rate_hz, &gl.waveform)?;
    println!("{} samples written to {}", gl.waveform.len(), output.display());
    Ok(())
}

pub fn render(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    let clip = wav::read(input, STANDARD_SAMPLE_RATE)?;
    let tob = analyze_waveform(&clip.samples, &FilterbankSpec::standard(), 0)?.quantized();
    let spec = MelSpec::default();
    let transcoded = match &cfg.student {
        Some(p) => TranscoderModel::load(p)
            .with_context(|| format!("loading student checkpoint {}", p.display()))?
            .transcode(&tob)?,
        None => LinearTranscoder { spec: spec.clone() }.transcode(&tob)?,
    };
    let truth = mel_from_waveform(&clip.samples, &spec)?;
    write_svg(out, &spectrogram_panels(&tob, &transcoded, &truth))?;
    println!("figure written to {}", out.display());
    Ok(())
}
