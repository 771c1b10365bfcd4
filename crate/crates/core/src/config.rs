//! Line-oriented `key = value` pipeline configuration.
//!
//! Blank lines and text after `#` are ignored. Unknown keys are errors so
//! that typos do not silently fall back to defaults.

use std::path::{Path, PathBuf};

use crate::classify::DEFAULT_ALPHA;
use crate::error::{invalid, Error, Result};
use crate::report::{DEFAULT_BIN_S, DEFAULT_MULTI_ADULT};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub teacher: Option<PathBuf>,
    pub student: Option<PathBuf>,
    pub label_map: Option<PathBuf>,
    pub alpha: f64,
    pub bin_s: u32,
    pub multi_adult: usize,
    pub seed: u64,
    pub queue_capacity: usize,
    pub calibration_db: f32,
    pub n_per_class: usize,
    pub teacher_epochs: usize,
    /// Minimum training clips per class before teacher training starts.
    pub teacher_min_clips: usize,
    pub distill_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: Option<f64>,
    pub hard_targets: bool,
    pub gl_iters: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            teacher: None,
            student: None,
            label_map: None,
            alpha: DEFAULT_ALPHA,
            bin_s: DEFAULT_BIN_S,
            multi_adult: DEFAULT_MULTI_ADULT,
            seed: 1,
            queue_capacity: 16,
            calibration_db: 0.0,
            n_per_class: 100,
            teacher_epochs: 4,
            teacher_min_clips: 100,
            distill_epochs: 8,
            batch_size: 8,
            learning_rate: None,
            hard_targets: false,
            gl_iters: 60,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
}

fn parse_bool(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("bad value {v:?} for {key}, expected true or false")),
    }
}

impl PipelineConfig {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "teacher" => self.teacher = Some(PathBuf::from(v)),
            "student" => self.student = Some(PathBuf::from(v)),
            "label_map" => self.label_map = Some(PathBuf::from(v)),
            "alpha" => self.alpha = parse_value("alpha", v)?,
            "bin_s" => self.bin_s = parse_value("bin_s", v)?,
            "multi_adult" => self.multi_adult = parse_value("multi_adult", v)?,
            "seed" => self.seed = parse_value("seed", v)?,
            "queue_capacity" => self.queue_capacity = parse_value("queue_capacity", v)?,
            "calibration_db" => self.calibration_db = parse_value("calibration_db", v)?,
            "n_per_class" => self.n_per_class = parse_value("n_per_class", v)?,
            "teacher_epochs" => self.teacher_epochs = parse_value("teacher_epochs", v)?,
            "teacher_min_clips" => self.teacher_min_clips = parse_value("teacher_min_clips", v)?,
            "distill_epochs" => self.distill_epochs = parse_value("distill_epochs", v)?,
            "batch_size" => self.batch_size = parse_value("batch_size", v)?,
            "learning_rate" => self.learning_rate = Some(parse_value("learning_rate", v)?),
            "hard_targets" => self.hard_targets = parse_bool("hard_targets", v)?,
            "gl_iters" => self.gl_iters = parse_value("gl_iters", v)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Defaults overridden by the lines of `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: i + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| perr("expected `key = value`".into()))?;
            cfg.set(k, v).map_err(perr)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if self.bin_s == 0 {
            return Err(invalid("bin_s must be positive"));
        }
        if self.queue_capacity == 0 || self.batch_size == 0 {
            return Err(invalid("queue_capacity and batch_size must be positive"));
        }
        Ok(())
    }
}
