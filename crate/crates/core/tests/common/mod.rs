//! Trained models shared by the integration tests.
//!
//! Training is deterministic, so checkpoints are cached under the cargo
//! target tmpdir and reused by later test binaries. Delete the directory to
//! force retraining.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use quietward_core::corpus::{build_dataset, Dataset, DatasetConfig};
use quietward_core::distill::{
    distill_transcoder, prepare_distill, train_teacher, DistillConfig, DistillExample, TeacherConfig,
    TeacherModel, TrainingLog, TranscoderModel,
};

pub const N_PER_CLASS: usize = 100;
pub const DATA_SEED: u64 = 1;
const CACHE_TAG: &str = "v1";

pub fn cache_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!("quietward-models-{CACHE_TAG}"));
    std::fs::create_dir_all(&dir).expect("create model cache dir");
    dir
}

fn atomic_write(path: &PathBuf, bytes: &[u8]) {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).expect("write checkpoint");
    std::fs::rename(&tmp, path).expect("publish checkpoint");
}

pub fn dataset() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| build_dataset(&DatasetConfig::new(N_PER_CLASS, DATA_SEED)).unwrap())
}

pub fn train_fresh_teacher() -> (TeacherModel, TrainingLog) {
    let d = dataset();
    train_teacher(&d.train, &d.val, &TeacherConfig::default()).unwrap()
}

pub fn teacher() -> &'static TeacherModel {
    static TEACHER: OnceLock<TeacherModel> = OnceLock::new();
    TEACHER.get_or_init(|| {
        let path = cache_dir().join("teacher.qwnn");
        if let Ok(t) = TeacherModel::load(&path) {
            return t;
        }
        let (t, _) = train_fresh_teacher();
        atomic_write(&path, &t.to_checkpoint().to_bytes().unwrap());
        t
    })
}

/// Distillation examples for the train, validation and test splits.
pub struct DistillData {
    pub train: Vec<DistillExample>,
    pub val: Vec<DistillExample>,
    pub test: Vec<DistillExample>,
}

pub fn distill_data() -> &'static DistillData {
    static DATA: OnceLock<DistillData> = OnceLock::new();
    DATA.get_or_init(|| {
        let d = dataset();
        let t = teacher();
        DistillData {
            train: prepare_distill(t, &d.train, 8).unwrap(),
            val: prepare_distill(t, &d.val, 8).unwrap(),
            test: prepare_distill(t, &d.test, 8).unwrap(),
        }
    })
}

pub fn run_distillation() -> (TranscoderModel, TrainingLog) {
    let cfg = DistillConfig::default();
    let data = distill_data();
    let student = TranscoderModel::init(cfg.seed).unwrap();
    distill_transcoder(student, teacher(), &data.train, &data.val, &cfg).unwrap()
}

pub fn store_student(student: &TranscoderModel) {
    atomic_write(&cache_dir().join("student.qwnn"), &student.to_checkpoint().to_bytes().unwrap());
}

pub fn student() -> &'static TranscoderModel {
    static STUDENT: OnceLock<TranscoderModel> = OnceLock::new();
    STUDENT.get_or_init(|| {
        if let Ok(s) = TranscoderModel::load(cache_dir().join("student.qwnn")) {
            return s;
        }
        let (s, _) = run_distillation();
        store_student(&s);
        s
    })
}
