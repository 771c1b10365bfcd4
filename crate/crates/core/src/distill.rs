//! The frozen teacher classifier, the six-layer transcoder student, and
//! teacher-student distillation between them.
//!
//! Both networks work on log10 power normalized by [`normalize`]. The
//! teacher reads a mel spectrogram laid out `[1, n_mels, time]`; the student
//! reads third-octave frames laid out `[n_bands, 1, time]` (bands as
//! channels) and writes `[n_mels, 1, 12.5 * time]`, which is the same buffer
//! as the teacher's input.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::mpsc;

use quietward_nn::checkpoint::Checkpoint;
use quietward_nn::{bce_loss, Adam, AdamConfig, Conv2d, Layer, Network, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classify::{ranks, Classifier, LinearTranscoder, Transcoder};
use crate::corpus::{self, ClipRecipe, SoundClass};
use crate::dsp::{analyze_waveform, FilterbankSpec, ThirdOctaveFrame, ThirdOctaveSpectrogram};
use crate::error::{invalid, Result};
use crate::mel::{mel_from_waveform, MelSpec, MelSpectrogram};

/// Log10 power `x` maps to `(x - NORM_CENTER) / NORM_SCALE`.
pub const NORM_CENTER: f64 = -5.0;
pub const NORM_SCALE: f64 = 2.5;

/// Teacher class names, in corpus class order. They are the AudioSet
/// labels the default ward label map points at.
pub const TEACHER_CLASSES: [&str; 4] = ["Conversation", "Walk, footsteps", "Train", "Electronic music"];

pub fn normalize(log10_power: f64) -> f64 {
    (log10_power - NORM_CENTER) / NORM_SCALE
}

pub fn denormalize(x: f64) -> f64 {
    x * NORM_SCALE + NORM_CENTER
}

fn log10_floor(p: f64, floor: f64) -> f64 {
    if p > 0.0 {
        p.log10().max(floor)
    } else {
        floor
    }
}

/// Index of the largest value; ties go to the lower index.
pub fn top1(scores: &[f64]) -> usize {
    ranks(scores).iter().position(|&r| r == 1).unwrap_or(0)
}

/// Frozen multilabel classifier over mel spectrograms.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherModel {
    pub network: Network,
    pub class_names: Vec<String>,
    pub mel: MelSpec,
}

impl TeacherModel {
    /// Three strided convolutions, global average over time, two dense layers.
    pub fn architecture(n_mels: usize, n_classes: usize) -> Vec<Layer> {
        let h1 = n_mels.div_ceil(2);
        let h2 = h1.div_ceil(2);
        vec![
            Layer::Conv2d(Conv2d {
                in_channels: 1,
                out_channels: 8,
                kernel: (3, 5),
                stride: (2, 4),
                padding: (1, 2),
            }),
            Layer::Relu,
            Layer::Conv2d(Conv2d {
                in_channels: 8,
                out_channels: 16,
                kernel: (3, 3),
                stride: (2, 2),
                padding: (1, 1),
            }),
            Layer::Relu,
            Layer::Conv2d(Conv2d::same(16, 16, (3, 3))),
            Layer::Relu,
            Layer::AvgPoolGlobal,
            Layer::Dense {
                inputs: 16 * h2,
                outputs: 32,
            },
            Layer::Relu,
            Layer::Dense {
                inputs: 32,
                outputs: n_classes,
            },
            Layer::Sigmoid,
        ]
    }

    /// Untrained, trainable teacher for the four corpus classes.
    pub fn init(seed: u64) -> Result<Self> {
        let mel = MelSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let network = Network::init(Self::architecture(mel.n_mels, TEACHER_CLASSES.len()), &mut rng)?;
        Ok(Self {
            network,
            class_names: TEACHER_CLASSES.iter().map(|s| s.to_string()).collect(),
            mel,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Normalized `[1, n_mels, time]` input tensor.
    pub fn mel_input(&self, mel: &MelSpectrogram) -> Result<Tensor> {
        if mel.spec.n_mels != self.mel.n_mels {
            return Err(invalid(format!(
                "teacher expects {} mel bins, got {}",
                self.mel.n_mels, mel.spec.n_mels
            )));
        }
        if mel.n_frames == 0 {
            return Err(invalid("empty mel spectrogram"));
        }
        let (n, t) = (mel.spec.n_mels, mel.n_frames);
        let mut data = vec![0.0; n * t];
        for (ti, frame) in mel.data.chunks_exact(n).enumerate() {
            for (m, &v) in frame.iter().enumerate() {
                data[m * t + ti] = normalize(v);
            }
        }
        Ok(Tensor::new(vec![1, n, t], data)?)
    }

    pub fn scores(&self, input: &Tensor) -> Result<Vec<f64>> {
        Ok(self.network.forward(input)?.into_data())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new(self.network.clone());
        ckpt.meta.insert("kind".into(), "teacher".into());
        ckpt.meta.insert("classes".into(), self.class_names.join("|"));
        ckpt.meta.insert("n_mels".into(), self.mel.n_mels.to_string());
        ckpt
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        expect_kind(&ckpt.meta, "teacher")?;
        let class_names: Vec<String> = ckpt
            .meta
            .get("classes")
            .ok_or_else(|| invalid("teacher checkpoint lacks class names"))?
            .split('|')
            .map(str::to_string)
            .collect();
        let mel = mel_from_meta(&ckpt.meta)?;
        let out = ckpt.network.output_shape(&[1, mel.n_mels, 1000])?;
        if out != [class_names.len()] {
            return Err(invalid(format!(
                "teacher network outputs {out:?} for {} classes",
                class_names.len()
            )));
        }
        Ok(Self {
            network: ckpt.network,
            class_names,
            mel,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

fn expect_kind(meta: &BTreeMap<String, String>, kind: &str) -> Result<()> {
    match meta.get("kind") {
        Some(k) if k == kind => Ok(()),
        other => Err(invalid(format!("expected a {kind} checkpoint, found {other:?}"))),
    }
}

fn mel_from_meta(meta: &BTreeMap<String, String>) -> Result<MelSpec> {
    let mut mel = MelSpec::default();
    if let Some(n) = meta.get("n_mels") {
        mel.n_mels = n
            .parse()
            .map_err(|_| invalid(format!("bad n_mels {n:?} in checkpoint")))?;
    }
    Ok(mel)
}

impl Classifier for TeacherModel {
    fn class_names(&self) -> &[String] {
        &self.class_names
    }

    fn classify(&self, mel: &MelSpectrogram) -> Result<Vec<f64>> {
        self.scores(&self.mel_input(mel)?)
    }
}

/// Six-layer convolutional third-octave to mel transcoder.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscoderModel {
    pub network: Network,
    pub filterbank: FilterbankSpec,
    pub mel: MelSpec,
}

impl TranscoderModel {
    /// Time runs along the width axis with bands, then mel bins, as
    /// channels. Two 2x upsamplings and a final 3.125x interpolation take
    /// 8 frames/s to 100 frames/s.
    pub fn architecture(n_bands: usize, n_mels: usize) -> Vec<Layer> {
        let conv = |i, o, k| Layer::Conv2d(Conv2d::same(i, o, (1, k)));
        let up = |s| Layer::Upsample2d {
            scale_h: 1.0,
            scale_w: s,
        };
        vec![
            conv(n_bands, 64, 3),
            Layer::Relu,
            up(2.0),
            conv(64, 64, 3),
            Layer::Relu,
            up(2.0),
            conv(64, 64, 3),
            Layer::Relu,
            conv(64, 64, 3),
            Layer::Relu,
            conv(64, 64, 1),
            Layer::Relu,
            conv(64, n_mels, 1),
            up(3.125),
        ]
    }

    pub fn init(seed: u64) -> Result<Self> {
        let filterbank = FilterbankSpec::standard();
        let mel = MelSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let network = Network::init(Self::architecture(filterbank.n_bands(), mel.n_mels), &mut rng)?;
        Ok(Self {
            network,
            filterbank,
            mel,
        })
    }

    /// Mel frames produced for `n` third-octave frames.
    pub fn output_frames(&self, n: usize) -> usize {
        self.mel.frames_for(n * self.filterbank.frame_samples)
    }

    /// Normalized `[n_bands, 1, time]` input tensor.
    pub fn tob_input(&self, tob: &ThirdOctaveSpectrogram) -> Result<Tensor> {
        if tob.is_empty() {
            return Err(invalid("empty third-octave spectrogram"));
        }
        let nb = self.filterbank.n_bands();
        if tob.spec.n_bands() != nb {
            return Err(invalid(format!(
                "transcoder expects {nb} bands, got {}",
                tob.spec.n_bands()
            )));
        }
        let t = tob.len();
        let mut data = vec![0.0; nb * t];
        for (ti, frame) in tob.frames.iter().enumerate() {
            for (b, &p) in frame.band_power.iter().enumerate() {
                data[b * t + ti] = normalize(log10_floor(p, self.mel.log_floor));
            }
        }
        Ok(Tensor::new(vec![nb, 1, t], data)?)
    }

    /// Converts a network output `[n_mels, 1, time]` to a mel spectrogram.
    pub fn output_to_mel(&self, out: &Tensor) -> Result<MelSpectrogram> {
        let (n, t) = (out.shape()[0], out.shape()[2]);
        let mut data = vec![0.0; n * t];
        for (m, row) in out.data().chunks_exact(t).enumerate() {
            for (ti, &v) in row.iter().enumerate() {
                data[ti * n + m] = denormalize(v);
            }
        }
        Ok(MelSpectrogram {
            spec: self.mel.clone(),
            n_frames: t,
            data,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new(self.network.clone());
        ckpt.meta.insert("kind".into(), "transcoder".into());
        ckpt.meta.insert("n_mels".into(), self.mel.n_mels.to_string());
        ckpt.meta.insert(
            "band_centers_hz".into(),
            self.filterbank
                .bands
                .iter()
                .map(|b| format!("{:?}", b.center_hz))
                .collect::<Vec<_>>()
                .join(","),
        );
        ckpt
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        expect_kind(&ckpt.meta, "transcoder")?;
        let mel = mel_from_meta(&ckpt.meta)?;
        let filterbank = FilterbankSpec::standard();
        let out = ckpt.network.output_shape(&[filterbank.n_bands(), 1, 80])?;
        if out != [mel.n_mels, 1, 1000] {
            return Err(invalid(format!("transcoder maps 80 frames to {out:?}")));
        }
        Ok(Self {
            network: ckpt.network,
            filterbank,
            mel,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

impl Transcoder for TranscoderModel {
    fn transcode(&self, tob: &ThirdOctaveSpectrogram) -> Result<MelSpectrogram> {
        transcode(self, tob)
    }
}

/// Runs the student on a third-octave spectrogram of any non-zero length.
pub fn transcode(student: &TranscoderModel, tob: &ThirdOctaveSpectrogram) -> Result<MelSpectrogram> {
    let out = student.network.forward(&student.tob_input(tob)?)?;
    debug_assert_eq!(out.shape()[2], student.output_frames(tob.len()));
    student.output_to_mel(&out)
}

/// Runs `f` over `items` on a producer thread, handing results to the
/// caller through a queue of at most `capacity` entries. Output order
/// matches input order.
pub fn prepare_in_background<I, T, F>(items: &[I], capacity: usize, f: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> Result<T> + Sync,
{
    let (tx, rx) = mpsc::sync_channel::<Result<T>>(capacity.max(1));
    std::thread::scope(|s| {
        s.spawn(|| {
            for item in items {
                let r = f(item);
                let failed = r.is_err();
                if tx.send(r).is_err() || failed {
                    break;
                }
            }
            drop(tx);
        });
        let mut out = Vec::with_capacity(items.len());
        for r in rx {
            out.push(r?);
        }
        Ok(out)
    })
}

/// A teacher training example: normalized mel and multi-hot labels.
#[derive(Debug, Clone)]
struct MelExample {
    input: Vec<f32>,
    n_frames: usize,
    labels: Vec<f64>,
}

impl MelExample {
    fn tensor(&self, n_mels: usize) -> Tensor {
        Tensor::new(
            vec![1, n_mels, self.n_frames],
            self.input.iter().map(|&v| v as f64).collect(),
        )
        .expect("example shape")
    }
}

fn mel_example(teacher: &TeacherModel, recipe: &ClipRecipe) -> Result<MelExample> {
    let clip = corpus::synthesize(recipe);
    let mel = mel_from_waveform(&clip.waveform, &teacher.mel)?;
    let input = teacher.mel_input(&mel)?;
    Ok(MelExample {
        input: input.data().iter().map(|&v| v as f32).collect(),
        n_frames: mel.n_frames,
        labels: clip.target,
    })
}

/// One row per epoch; row 0 is measured before any update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    /// Held-out agreement with the teacher (distillation) or macro
    /// per-class accuracy against labels (teacher training).
    pub agreement: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn initial_loss(&self) -> Option<f64> {
        self.rows.first().map(|r| r.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }

    /// True when training ended with a higher loss than it started with.
    pub fn diverged(&self) -> bool {
        match (self.initial_loss(), self.final_loss()) {
            (Some(a), Some(b)) => !(b <= a),
            _ => false,
        }
    }

    /// CSV with columns `epoch,loss,agreement`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "loss", "agreement"])?;
        for r in &self.rows {
            out.write_record([
                r.epoch.to_string(),
                format!("{:.9}", r.loss),
                format!("{:.6}", r.agreement),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Minimum number of training clips containing each class.
    pub min_clips_per_class: usize,
    pub queue_capacity: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            batch_size: 8,
            learning_rate: 3e-3,
            seed: 1,
            min_clips_per_class: 100,
            queue_capacity: 8,
        }
    }
}

fn check_corpus(train: &[ClipRecipe], min_per_class: usize) -> Result<()> {
    for class in SoundClass::ALL {
        let n = train.iter().filter(|r| r.classes.contains(&class)).count();
        if n < min_per_class {
            return Err(invalid(format!(
                "corpus too small: {n} clips contain {class}, need at least {min_per_class}"
            )));
        }
    }
    Ok(())
}

/// Mean over classes of the fraction of clips whose thresholded score
/// matches the label.
pub fn macro_accuracy(scores: &[Vec<f64>], labels: &[Vec<f64>]) -> f64 {
    let k = labels.first().map_or(0, Vec::len);
    if k == 0 {
        return 0.0;
    }
    let per_class: f64 = (0..k)
        .map(|c| {
            let hits = scores
                .iter()
                .zip(labels)
                .filter(|(s, l)| (s[c] > 0.5) == (l[c] > 0.5))
                .count();
            hits as f64 / labels.len() as f64
        })
        .sum();
    per_class / k as f64
}

fn teacher_eval(teacher: &TeacherModel, examples: &[MelExample]) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut total = 0.0;
    let mut scores = Vec::with_capacity(examples.len());
    for ex in examples {
        let p = teacher.network.forward(&ex.tensor(teacher.mel.n_mels))?;
        let (loss, _) = bce_loss(&p, &Tensor::from_vec(ex.labels.clone()))?;
        total += loss;
        scores.push(p.into_data());
    }
    Ok((total / examples.len().max(1) as f64, scores))
}

/// Trains the teacher on labeled clips and returns it frozen.
///
/// Log rows report training-set BCE and macro per-class accuracy on `val`.
pub fn train_teacher(
    train: &[ClipRecipe],
    val: &[ClipRecipe],
    cfg: &TeacherConfig,
) -> Result<(TeacherModel, TrainingLog)> {
    check_corpus(train, cfg.min_clips_per_class)?;
    if cfg.batch_size == 0 {
        return Err(invalid("batch size must be positive"));
    }
    let mut teacher = TeacherModel::init(cfg.seed)?;
    let train_ex = prepare_in_background(train, cfg.queue_capacity, |r| mel_example(&teacher, r))?;
    let val_ex = prepare_in_background(val, cfg.queue_capacity, |r| mel_example(&teacher, r))?;
    let val_labels: Vec<Vec<f64>> = val_ex.iter().map(|e| e.labels.clone()).collect();

    let mut log = TrainingLog::default();
    let record = |teacher: &TeacherModel, epoch, log: &mut TrainingLog| -> Result<()> {
        let (loss, _) = teacher_eval(teacher, &train_ex)?;
        let (_, vs) = teacher_eval(teacher, &val_ex)?;
        let row = EpochLog {
            epoch,
            loss,
            agreement: macro_accuracy(&vs, &val_labels),
        };
        log::info!("teacher epoch {epoch}: loss {loss:.5} val accuracy {:.4}", row.agreement);
        log.rows.push(row);
        Ok(())
    };
    record(&teacher, 0, &mut log)?;

    let mut opt = Adam::new(
        &teacher.network,
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7e_ac4e);
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let n_mels = teacher.mel.n_mels;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &train_ex[i];
                let trace = teacher.network.forward_trace(&ex.tensor(n_mels))?;
                let (_, mut g) = bce_loss(&trace.output(), &Tensor::from_vec(ex.labels.clone()))?;
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
                let bp = teacher.network.backprop(&trace, &g)?;
                teacher.network.accumulate(&bp.param_grads);
            }
            opt.step(&mut teacher.network);
        }
        record(&teacher, epoch, &mut log)?;
    }
    teacher.network.freeze();
    Ok((teacher, log))
}

/// Held-out macro per-class accuracy of a teacher against clip labels.
pub fn teacher_accuracy(teacher: &TeacherModel, clips: &[ClipRecipe], capacity: usize) -> Result<f64> {
    let ex = prepare_in_background(clips, capacity, |r| mel_example(teacher, r))?;
    let (_, scores) = teacher_eval(teacher, &ex)?;
    let labels: Vec<Vec<f64>> = ex.iter().map(|e| e.labels.clone()).collect();
    Ok(macro_accuracy(&scores, &labels))
}

/// A 10 s clip as the student sees it, paired with the teacher's output on
/// the clip's true mel spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillExample {
    /// Third-octave frames at stored (`f32`) precision.
    pub tob: ThirdOctaveSpectrogram,
    /// Teacher sigmoid outputs on the ground-truth mel spectrogram.
    pub target: Vec<f64>,
    /// Corpus labels, kept for reporting only.
    pub labels: Vec<f64>,
}

/// Synthesizes a clip and computes both of its representations. The mel
/// spectrogram is consumed here to produce the teacher target.
pub fn distill_example(teacher: &TeacherModel, fb: &FilterbankSpec, recipe: &ClipRecipe) -> Result<DistillExample> {
    let clip = corpus::synthesize(recipe);
    let mel = mel_from_waveform(&clip.waveform, &teacher.mel)?;
    let target = teacher.classify(&mel)?;
    let tob = analyze_waveform(&clip.waveform, fb, 0)?.quantized();
    Ok(DistillExample {
        tob,
        target,
        labels: clip.target,
    })
}

pub fn prepare_distill(
    teacher: &TeacherModel,
    recipes: &[ClipRecipe],
    capacity: usize,
) -> Result<Vec<DistillExample>> {
    let fb = FilterbankSpec::standard();
    prepare_in_background(recipes, capacity, |r| distill_example(teacher, &fb, r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Train against thresholded teacher outputs instead of probabilities.
    pub hard_targets: bool,
    pub queue_capacity: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 2,
            hard_targets: false,
            queue_capacity: 8,
        }
    }
}

/// BCE against teacher targets and top-1 agreement with the teacher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub bce: f64,
    pub agreement: f64,
    pub n: usize,
}

/// Scores `examples` through `transcoder` and the teacher.
pub fn evaluate(
    transcoder: &dyn Transcoder,
    teacher: &TeacherModel,
    examples: &[DistillExample],
) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(invalid("no examples to evaluate"));
    }
    let mut bce = 0.0;
    let mut agree = 0usize;
    for ex in examples {
        let mel = transcoder.transcode(&ex.tob)?;
        let p = teacher.classify(&mel)?;
        let (loss, _) = bce_loss(&Tensor::from_vec(p.clone()), &Tensor::from_vec(ex.target.clone()))?;
        bce += loss;
        if top1(&p) == top1(&ex.target) {
            agree += 1;
        }
    }
    Ok(Evaluation {
        bce: bce / examples.len() as f64,
        agreement: agree as f64 / examples.len() as f64,
        n: examples.len(),
    })
}

/// The same evaluation for the linear resampling baseline.
pub fn evaluate_linear(teacher: &TeacherModel, examples: &[DistillExample]) -> Result<Evaluation> {
    evaluate(
        &LinearTranscoder {
            spec: teacher.mel.clone(),
        },
        teacher,
        examples,
    )
}

fn training_target(ex: &DistillExample, hard: bool) -> Tensor {
    let t = if hard {
        ex.target.iter().map(|&p| if p > 0.5 { 1.0 } else { 0.0 }).collect()
    } else {
        ex.target.clone()
    };
    Tensor::from_vec(t)
}

/// Trains the student so that `teacher(student(tob))` matches the teacher's
/// output on the true mel spectrogram. Only student parameters change; the
/// teacher must already be frozen.
///
/// Row 0 of the log is measured before training; every row reports BCE over
/// `train` and top-1 agreement over `val`.
pub fn distill_transcoder(
    mut student: TranscoderModel,
    teacher: &TeacherModel,
    train: &[DistillExample],
    val: &[DistillExample],
    cfg: &DistillConfig,
) -> Result<(TranscoderModel, TrainingLog)> {
    if !teacher.network.is_frozen() {
        return Err(invalid("teacher must be frozen before distillation"));
    }
    if train.is_empty() || val.is_empty() {
        return Err(invalid("distillation needs training and validation examples"));
    }
    if cfg.batch_size == 0 {
        return Err(invalid("batch size must be positive"));
    }
    let mut log = TrainingLog::default();
    let record = |student: &TranscoderModel, epoch, log: &mut TrainingLog| -> Result<()> {
        let loss = evaluate(student, teacher, train)?.bce;
        let agreement = evaluate(student, teacher, val)?.agreement;
        log::info!("distill epoch {epoch}: loss {loss:.5} agreement {agreement:.4}");
        log.rows.push(EpochLog {
            epoch,
            loss,
            agreement,
        });
        Ok(())
    };
    record(&student, 0, &mut log)?;

    let mut opt = Adam::new(
        &student.network,
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd157_111);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &train[i];
                let s_trace = student.network.forward_trace(&student.tob_input(&ex.tob)?)?;
                let s_out = s_trace.output();
                let t_in = s_out.clone().reshape(vec![1, s_out.shape()[0], s_out.shape()[2]])?;
                let t_trace = teacher.network.forward_trace(&t_in)?;
                let (_, mut g) = bce_loss(&t_trace.output(), &training_target(ex, cfg.hard_targets))?;
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
                let t_bp = teacher.network.backprop(&t_trace, &g)?;
                let g_mel = t_bp.input_grad.reshape(s_out.shape().to_vec())?;
                let s_bp = student.network.backprop(&s_trace, &g_mel)?;
                student.network.accumulate(&s_bp.param_grads);
            }
            opt.step(&mut student.network);
        }
        record(&student, epoch, &mut log)?;
    }
    Ok((student, log))
}

/// A third-octave spectrogram of silence.
pub fn silent_tob(n_frames: usize) -> ThirdOctaveSpectrogram {
    let spec = FilterbankSpec::standard();
    let n = spec.n_bands();
    let mut tob = ThirdOctaveSpectrogram::new(spec, 0);
    for i in 0..n_frames {
        tob.push(ThirdOctaveFrame {
            frame_index: i as u64,
            band_power: vec![0.0; n],
        })
        .expect("contiguous frames");
    }
    tob
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn student_has_six_weighted_layers_and_maps_80_to_1000() {
        let s = TranscoderModel::init(0).unwrap();
        assert_eq!(s.network.weighted_layers(), 6);
        let out = s.network.output_shape(&[29, 1, 80]).unwrap();
        assert_eq!(out, vec![64, 1, 1000]);
        for t in [1, 2, 3, 8, 79, 160] {
            let out = s.network.output_shape(&[29, 1, t]).unwrap();
            assert_eq!(out[2], s.output_frames(t), "t = {t}");
        }
    }

    #[test]
    fn teacher_shape() {
        let t = TeacherModel::init(0).unwrap();
        assert_eq!(t.network.output_shape(&[1, 64, 1000]).unwrap(), vec![4]);
    }

    #[test]
    fn student_output_feeds_teacher() {
        let s = TranscoderModel::init(3).unwrap();
        let mut t = TeacherModel::init(4).unwrap();
        t.network.freeze();
        let mel = transcode(&s, &silent_tob(80)).unwrap();
        assert_eq!(mel.n_frames, 1000);
        let p = t.classify(&mel).unwrap();
        assert_eq!(p.len(), 4);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(transcode(&s, &silent_tob(0)).is_err());
    }

    #[test]
    fn normalization_round_trips() {
        for x in [-10.0, -5.0, 0.0, 1.5] {
            assert!((denormalize(normalize(x)) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn top1_ties_go_low() {
        assert_eq!(top1(&[0.2, 0.9, 0.9]), 1);
        assert_eq!(top1(&[0.5]), 0);
    }

    #[test]
    fn macro_accuracy_counts_per_class() {
        let s = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
        let l = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        assert!((macro_accuracy(&s, &l) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn background_queue_preserves_order_and_errors() {
        let items: Vec<u32> = (0..50).collect();
        let out = prepare_in_background(&items, 2, |&i| Ok(i * 2)).unwrap();
        assert_eq!(out, items.iter().map(|i| i * 2).collect::<Vec<_>>());
        let r = prepare_in_background(&items, 2, |&i| if i == 7 { Err(invalid("seven")) } else { Ok(i) });
        assert!(r.is_err());
    }

    #[test]
    fn unfrozen_teacher_is_rejected() {
        let s = TranscoderModel::init(0).unwrap();
        let t = TeacherModel::init(0).unwrap();
        let ex = DistillExample {
            tob: silent_tob(80),
            target: vec![0.5; 4],
            labels: vec![0.0; 4],
        };
        let r = distill_transcoder(s, &t, std::slice::from_ref(&ex), std::slice::from_ref(&ex), &DistillConfig::default());
        assert!(r.unwrap_err().to_string().contains("frozen"));
    }

    #[test]
    fn small_corpus_is_rejected() {
        let ds = corpus::build_dataset(&corpus::DatasetConfig::new(10, 1)).unwrap();
        let e = train_teacher(&ds.train, &ds.val, &TeacherConfig::default()).unwrap_err();
        assert!(e.to_string().contains("too small"));
    }

    #[test]
    fn checkpoints_round_trip() {
        let s = TranscoderModel::init(5).unwrap();
        let back = TranscoderModel::from_checkpoint(
            Checkpoint::read_from(s.to_checkpoint().to_bytes().unwrap().as_slice()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, s);
        let t = TeacherModel::init(6).unwrap();
        let back = TeacherModel::from_checkpoint(
            Checkpoint::read_from(t.to_checkpoint().to_bytes().unwrap().as_slice()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, t);
        assert!(TeacherModel::from_checkpoint(s.to_checkpoint()).is_err());
    }
}
