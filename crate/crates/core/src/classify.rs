//! Scoring 10 s windows, reciprocal-rank compression and mapping classifier
//! labels onto ward labels.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::dsp::ThirdOctaveSpectrogram;
use crate::error::{invalid, Error, Result};
use crate::mel::{self, MelSpec, MelSpectrogram};

/// Length of one detection window.
pub const WINDOW_MS: i64 = 10_000;
pub const DEFAULT_ALPHA: f64 = 0.5;

pub fn format_time(ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .map(|t| t.to_rfc3339_opts(SecondsFormat::Millis, true))
        .unwrap_or_else(|| ms.to_string())
}

pub fn parse_time(s: &str) -> Result<i64> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.timestamp_millis())
        .map_err(|e| invalid(format!("bad timestamp {s:?}: {e}")))
}

/// Raw multilabel outputs for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub scores: Vec<f64>,
    pub class_names: Vec<String>,
    pub window_start_ms: i64,
}

/// `(1 / rank)^alpha` per class.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedScores {
    pub y: Vec<f64>,
    pub alpha: f64,
}

/// 1-based rank of each class in descending score order; ties go to the
/// lower class index.
pub fn ranks(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps ascending index among equal scores
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut rank = vec![0; scores.len()];
    for (pos, &k) in order.iter().enumerate() {
        rank[k] = pos + 1;
    }
    rank
}

/// Replaces each score by its reciprocal rank raised to `alpha`.
pub fn rank_compress(scores: &[f64], alpha: f64) -> Result<RankedScores> {
    if scores.is_empty() {
        return Err(invalid("empty score vector"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha {alpha} outside (0, 1]")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(invalid("non-finite score"));
    }
    let y = ranks(scores)
        .into_iter()
        .map(|r| (1.0 / r as f64).powf(alpha))
        .collect();
    Ok(RankedScores { y, alpha })
}

/// Ward label to classifier label, in the order written.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub entries: Vec<(String, String)>,
}

/// The ward-to-AudioSet correspondence shipped as the default map.
pub const DEFAULT_LABEL_MAP: &str = "\
# ward label = classifier (AudioSet) label
Conversation = Conversation
Footsteps = Walk, footsteps
Oxygenator = Train
Hospital phone = Electronic music
";

impl Default for LabelMap {
    fn default() -> Self {
        Self::parse(DEFAULT_LABEL_MAP).expect("default map parses")
    }
}

impl LabelMap {
    /// Parses `ward = source` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (ward, source) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected `ward label = source label`".into(),
            })?;
            let (ward, source) = (ward.trim(), source.trim());
            if ward.is_empty() || source.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "empty label".into(),
                });
            }
            if !seen.insert(ward.to_string()) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("duplicate ward label {ward:?}"),
                });
            }
            entries.push((ward.to_string(), source.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(w, s)| format!("{w} = {s}\n"))
            .collect()
    }

    pub fn ward_labels(&self) -> Vec<String> {
        self.entries.iter().map(|(w, _)| w.clone()).collect()
    }

    /// Binds the map to a classifier's label list. Unknown source labels
    /// fail here, once, rather than on every window.
    pub fn resolve(&self, class_names: &[String]) -> Result<ResolvedMap> {
        let indices = self
            .entries
            .iter()
            .map(|(ward, source)| {
                class_names
                    .iter()
                    .position(|c| c == source)
                    .map(|k| (ward.clone(), k))
                    .ok_or_else(|| {
                        invalid(format!(
                            "label map: {source:?} (for {ward:?}) is not a classifier class"
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ResolvedMap { indices })
    }
}

/// A label map checked against a specific class list.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedMap {
    indices: Vec<(String, usize)>,
}

impl ResolvedMap {
    pub fn labels(&self) -> Vec<String> {
        self.indices.iter().map(|(w, _)| w.clone()).collect()
    }

    pub fn source_index(&self, i: usize) -> usize {
        self.indices[i].1
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Each ward label takes the value of its source class.
pub fn adapt_labels(values: &[f64], map: &ResolvedMap) -> Vec<(String, f64)> {
    map.indices
        .iter()
        .map(|(w, k)| (w.clone(), values[*k]))
        .collect()
}

/// Anything that scores a mel spectrogram over a fixed label list.
pub trait Classifier {
    fn class_names(&self) -> &[String];
    /// Per-class scores in (0, 1).
    fn classify(&self, mel: &MelSpectrogram) -> Result<Vec<f64>>;
}

/// Anything that turns a third-octave spectrogram into a mel spectrogram.
pub trait Transcoder {
    fn transcode(&self, tob: &ThirdOctaveSpectrogram) -> Result<MelSpectrogram>;
}

/// The linear resampling baseline.
#[derive(Debug, Clone, Default)]
pub struct LinearTranscoder {
    pub spec: MelSpec,
}

impl Transcoder for LinearTranscoder {
    fn transcode(&self, tob: &ThirdOctaveSpectrogram) -> Result<MelSpectrogram> {
        mel::linear_transcode(tob, &self.spec)
    }
}

/// Detections for one window: `y` and the raw score per ward label.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionWindow {
    pub start_ms: i64,
    pub y: Vec<f64>,
    pub raw: Vec<f64>,
}

/// Ward-label detections over contiguous, non-overlapping windows.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTimeline {
    pub labels: Vec<String>,
    pub window_ms: i64,
    pub windows: Vec<DetectionWindow>,
}

impl DetectionTimeline {
    pub fn new(labels: Vec<String>) -> Self {
        Self {
            labels,
            window_ms: WINDOW_MS,
            windows: Vec::new(),
        }
    }

    pub fn series(&self, label: &str) -> Option<Vec<(i64, f64)>> {
        let i = self.labels.iter().position(|l| l == label)?;
        Some(self.windows.iter().map(|w| (w.start_ms, w.y[i])).collect())
    }

    pub fn span(&self) -> Option<(i64, i64)> {
        Some((
            self.windows.first()?.start_ms,
            self.windows.last()?.start_ms + self.window_ms,
        ))
    }

    /// Appends one window computed from raw classifier scores.
    pub fn push_scores(&mut self, start_ms: i64, scores: &[f64], map: &ResolvedMap, alpha: f64) -> Result<()> {
        let ranked = rank_compress(scores, alpha)?;
        self.windows.push(DetectionWindow {
            start_ms,
            y: adapt_labels(&ranked.y, map).into_iter().map(|(_, v)| v).collect(),
            raw: adapt_labels(scores, map).into_iter().map(|(_, v)| v).collect(),
        });
        Ok(())
    }

    /// CSV with columns `window_start_iso8601,nicu_label,y,raw_score`.
    /// Values are written in shortest round-trip form.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["window_start_iso8601", "nicu_label", "y", "raw_score"])?;
        for win in &self.windows {
            let ts = format_time(win.start_ms);
            for (i, label) in self.labels.iter().enumerate() {
                out.write_record([
                    ts.as_str(),
                    label,
                    &win.y[i].to_string(),
                    &win.raw[i].to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "window_start_iso8601" || &headers[1] != "nicu_label" || &headers[2] != "y" {
            return Err(Error::Parse {
                line: 1,
                msg: "expected header window_start_iso8601,nicu_label,y[,raw_score]".into(),
            });
        }
        let mut labels: Vec<String> = Vec::new();
        let mut windows: Vec<DetectionWindow> = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let perr = |msg: String| Error::Parse { line, msg };
            let start = parse_time(&rec[0]).map_err(|e| perr(e.to_string()))?;
            let label = rec[1].to_string();
            let y: f64 = rec[2].trim().parse().map_err(|_| perr(format!("bad y {:?}", &rec[2])))?;
            let raw: f64 = match rec.get(3) {
                Some(s) if !s.trim().is_empty() => {
                    s.trim().parse().map_err(|_| perr(format!("bad raw_score {s:?}")))?
                }
                _ => f64::NAN,
            };
            let li = match labels.iter().position(|l| *l == label) {
                Some(li) => li,
                None => {
                    if windows.len() > 1 {
                        return Err(perr(format!("label {label:?} first seen after the first window")));
                    }
                    labels.push(label);
                    for w in &mut windows {
                        w.y.push(f64::NAN);
                        w.raw.push(f64::NAN);
                    }
                    labels.len() - 1
                }
            };
            if windows.last().map(|w| w.start_ms) != Some(start) {
                if let Some(last) = windows.last() {
                    if start <= last.start_ms {
                        return Err(perr("windows out of order".into()));
                    }
                }
                windows.push(DetectionWindow {
                    start_ms: start,
                    y: vec![f64::NAN; labels.len()],
                    raw: vec![f64::NAN; labels.len()],
                });
            }
            let w = windows.last_mut().unwrap();
            w.y[li] = y;
            w.raw[li] = raw;
        }
        Ok(Self {
            labels,
            window_ms: WINDOW_MS,
            windows,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Frames per detection window for a spectrogram's frame rate.
pub fn frames_per_window(tob: &ThirdOctaveSpectrogram) -> usize {
    (WINDOW_MS / tob.spec.frame_ms() as i64) as usize
}

/// Tiles `tob` into contiguous 10 s windows (a shorter remainder is
/// ignored) and runs transcode, classify, rank compression and label
/// adaptation on each.
pub fn detect_stream(
    tob: &ThirdOctaveSpectrogram,
    transcoder: &dyn Transcoder,
    classifier: &dyn Classifier,
    map: &LabelMap,
    alpha: f64,
) -> Result<DetectionTimeline> {
    let resolved = map.resolve(classifier.class_names())?;
    let per = frames_per_window(tob);
    let n_windows = tob.len() / per;
    if n_windows == 0 {
        return Err(invalid(format!(
            "stream of {} ms is shorter than one {WINDOW_MS} ms window",
            tob.duration_ms()
        )));
    }
    let mut timeline = DetectionTimeline::new(resolved.labels());
    for w in 0..n_windows {
        let window = tob.slice(w * per, per);
        let mel = transcoder.transcode(&window)?;
        let scores = classifier.classify(&mel)?;
        timeline.push_scores(window.start_time_ms, &scores, &resolved, alpha)?;
    }
    Ok(timeline)
}

/// Builds a timeline from precomputed scores, e.g. an external model's.
pub fn detect_from_scores(scores: &[ClassScores], map: &LabelMap, alpha: f64) -> Result<DetectionTimeline> {
    let first = scores.first().ok_or_else(|| invalid("no score rows"))?;
    let resolved = map.resolve(&first.class_names)?;
    let mut timeline = DetectionTimeline::new(resolved.labels());
    for s in scores {
        timeline.push_scores(s.window_start_ms, &s.scores, &resolved, alpha)?;
    }
    Ok(timeline)
}

/// Reads scores from a CSV whose first column is the window start
/// (RFC 3339) and whose remaining columns are named classes.
pub fn import_external_scores<R: std::io::Read>(r: R) -> Result<Vec<ClassScores>> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let headers = rd.headers()?.clone();
    if headers.len() < 2 || !headers[0].starts_with("window_start") {
        return Err(Error::Parse {
            line: 1,
            msg: "header must be window_start followed by class names".into(),
        });
    }
    let class_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                line,
                msg: format!("{} cells, header has {}", rec.len(), headers.len()),
            });
        }
        let window_start_ms = parse_time(&rec[0]).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let scores = rec
            .iter()
            .skip(1)
            .zip(&class_names)
            .map(|(cell, col)| {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("column {col:?}: {cell:?} is not a number"),
                })?;
                if !(v > 0.0 && v < 1.0) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("column {col:?}: score {v} outside (0, 1)"),
                    });
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(ClassScores {
            scores,
            class_names: class_names.clone(),
            window_start_ms,
        });
    }
    Ok(out)
}
