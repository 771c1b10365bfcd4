//! `quietward`: analysis, training, detection, reporting and audit verbs
//! over the third-octave monitoring pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use quietward_core::config::PipelineConfig;

#[derive(Parser)]
#[command(name = "quietward", version, about = "Privacy-preserving acoustic monitoring of hospital rooms")]
struct Cli {
    /// Pipeline config file of `key = value` lines. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a 32 kHz PCM16 mono WAV into a .tob third-octave file.
    Analyze {
        input: PathBuf,
        output: PathBuf,
        /// Recording start, ISO 8601 (default 1970-01-01T00:00:00Z).
        #[arg(long)]
        start: Option<String>,
        #[arg(long)]
        calibration_db: Option<f32>,
        #[command(flatten)]
        queue: QueueFlag,
    },
    /// Generate synthetic audio.
    Synth {
        #[command(subcommand)]
        what: SynthCommand,
    },
    /// Train the teacher classifier on the synthetic corpus.
    Train {
        /// Teacher checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        min_clips: Option<usize>,
        #[command(flatten)]
        training: TrainingFlags,
    },
    /// Distill a third-octave to mel transcoder from a frozen teacher.
    Distill {
        #[arg(long)]
        teacher: Option<PathBuf>,
        /// Student checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Train against thresholded teacher outputs.
        #[arg(long)]
        hard_targets: bool,
        #[command(flatten)]
        training: TrainingFlags,
    },
    /// Detect ward sound events in a .tob or .wav recording.
    Detect {
        input: PathBuf,
        /// Detection timeline CSV to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        student: Option<PathBuf>,
        /// Use the linear resampling transcoder instead of a student.
        #[arg(long, conflicts_with = "student")]
        linear: bool,
        /// Ward label map file (default: the built-in map).
        #[arg(long)]
        map: Option<PathBuf>,
        /// Rank compression exponent, in (0, 1] (default 0.5).
        #[arg(long)]
        alpha: Option<f64>,
        /// Start time for WAV input, ISO 8601.
        #[arg(long)]
        start: Option<String>,
        #[command(flatten)]
        queue: QueueFlag,
    },
    /// Align detections with badge occupancy and draw the day timeline.
    Report {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        badges: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Occupancy bin length in seconds (default 180).
        #[arg(long)]
        bin_s: Option<u32>,
        /// Adult count at which a bin counts as multi-adult (default 2).
        #[arg(long)]
        multi_adult: Option<usize>,
    },
    /// Reconstruct audio from a .tob file to judge what it reveals.
    Audit {
        input: PathBuf,
        output: PathBuf,
        /// Griffin-Lim iterations (default 60).
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw third-octave, transcoded mel and true mel panels for a clip.
    Render {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Transcode with this student (default: linear resampling).
        #[arg(long)]
        student: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// One clip as a WAV file.
    Clip {
        output: PathBuf,
        /// Comma-separated classes: conversation, footsteps, oxygenator,
        /// alarm. Empty for background only.
        #[arg(long, default_value = "")]
        classes: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 15.0)]
        snr_db: f64,
        #[arg(long, default_value_t = -25.0, allow_hyphen_values = true)]
        level_dbfs: f64,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
    },
    /// The whole labeled corpus as WAV files plus a manifest.
    Corpus {
        out_dir: PathBuf,
        #[arg(long)]
        n_per_class: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// A scripted day: third-octave recording plus badge log.
    Day {
        #[arg(long)]
        tob: PathBuf,
        #[arg(long)]
        badges: PathBuf,
        #[arg(long, default_value_t = 24)]
        hours: u32,
        #[arg(long, default_value_t = 2023)]
        seed: u64,
        #[command(flatten)]
        queue: QueueFlag,
    },
}

#[derive(Args)]
struct TrainingFlags {
    #[arg(long)]
    n_per_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[command(flatten)]
    queue: QueueFlag,
}

#[derive(Args)]
struct QueueFlag {
    /// Bounded queue length between pipeline stages.
    #[arg(long)]
    queue_capacity: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl QueueFlag {
    fn apply(&self, cfg: &mut PipelineConfig) {
        set(&mut cfg.queue_capacity, self.queue_capacity);
    }
}

impl TrainingFlags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        set(&mut cfg.n_per_class, self.n_per_class);
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.batch_size, self.batch_size);
        if self.learning_rate.is_some() {
            cfg.learning_rate = self.learning_rate;
        }
        self.queue.apply(cfg);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Analyze {
            input,
            output,
            start,
            calibration_db,
            queue,
        } => {
            set(&mut cfg.calibration_db, calibration_db);
            queue.apply(&mut cfg);
            cfg.validate()?;
            commands::analyze(&cfg, &input, &output, start.as_deref())
        }
        Command::Synth { what } => match what {
            SynthCommand::Clip {
                output,
                classes,
                seed,
                snr_db,
                level_dbfs,
                seconds,
            } => commands::synth_clip(&output, &classes, seed, snr_db, level_dbfs, seconds),
            SynthCommand::Corpus {
                out_dir,
                n_per_class,
                seed,
            } => {
                set(&mut cfg.n_per_class, n_per_class);
                set(&mut cfg.seed, seed);
                commands::synth_corpus(&cfg, &out_dir)
            }
            SynthCommand::Day {
                tob,
                badges,
                hours,
                seed,
                queue,
            } => {
                queue.apply(&mut cfg);
                cfg.validate()?;
                commands::synth_day(&cfg, &tob, &badges, hours, seed)
            }
        },
        Command::Train {
            out,
            log,
            epochs,
            min_clips,
            training,
        } => {
            set(&mut cfg.teacher_epochs, epochs);
            set(&mut cfg.teacher_min_clips, min_clips);
            training.apply(&mut cfg);
            cfg.validate()?;
            commands::train(&cfg, &out, log.as_deref())
        }
        Command::Distill {
            teacher,
            out,
            log,
            epochs,
            hard_targets,
            training,
        } => {
            if teacher.is_some() {
                cfg.teacher = teacher;
            }
            set(&mut cfg.distill_epochs, epochs);
            cfg.hard_targets |= hard_targets;
            training.apply(&mut cfg);
            cfg.validate()?;
            commands::distill(&cfg, &out, log.as_deref())
        }
        Command::Detect {
            input,
            out,
            teacher,
            student,
            linear,
            map,
            alpha,
            start,
            queue,
        } => {
            if teacher.is_some() {
                cfg.teacher = teacher;
            }
            if student.is_some() {
                cfg.student = student;
            }
            if map.is_some() {
                cfg.label_map = map;
            }
            set(&mut cfg.alpha, alpha);
            queue.apply(&mut cfg);
            cfg.validate()?;
            commands::detect(&cfg, &input, &out, linear, start.as_deref())
        }
        Command::Report {
            detections,
            badges,
            out_dir,
            bin_s,
            multi_adult,
        } => {
            set(&mut cfg.bin_s, bin_s);
            set(&mut cfg.multi_adult, multi_adult);
            cfg.validate()?;
            commands::report(&cfg, &detections, &badges, &out_dir)
        }
        Command::Audit {
            input,
            output,
            iters,
            seed,
        } => {
            set(&mut cfg.gl_iters, iters);
            set(&mut cfg.seed, seed);
            commands::audit(&cfg, &input, &output)
        }
        Command::Render { input, out, student } => {
            if student.is_some() {
                cfg.student = student;
            }
            commands::render(&cfg, &input, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
