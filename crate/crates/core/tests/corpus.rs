use std::collections::BTreeSet;

use quietward_core::corpus::{build_dataset, rms, synthesize, ClipRecipe, DatasetConfig, SoundClass};
use quietward_core::dsp::{analyze_waveform, FilterbankSpec};

fn level_db(x: &[f64]) -> f64 {
    20.0 * rms(x).log10()
}

/// Mean band-power vector of a clip scaled to unit total, in dB. Clip
/// levels span 25 dB, so the shape is compared rather than the loudness.
fn mean_band_shape(x: &[f64]) -> Vec<f64> {
    let tob = analyze_waveform(x, &FilterbankSpec::standard(), 0).unwrap();
    let mut acc = vec![0.0; tob.spec.n_bands()];
    for f in &tob.frames {
        for (a, p) in acc.iter_mut().zip(&f.band_power) {
            *a += p;
        }
    }
    let total: f64 = acc.iter().sum();
    acc.iter().map(|p| 10.0 * (p / total).max(1e-20).log10()).collect()
}

/// Mean absolute change of total band power between consecutive frames,
/// relative to the mean total.
fn power_flux(x: &[f64]) -> f64 {
    let tob = analyze_waveform(x, &FilterbankSpec::standard(), 0).unwrap();
    let totals: Vec<f64> = tob.frames.iter().map(|f| f.band_power.iter().sum()).collect();
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    let flux = totals.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (totals.len() - 1) as f64;
    flux / mean
}

#[test]
fn every_clip_is_within_3_db_of_its_level() {
    let ds = build_dataset(&DatasetConfig::new(10, 4)).unwrap();
    for r in ds.train.iter().chain(&ds.val).chain(&ds.test) {
        let got = level_db(&synthesize(r).waveform);
        assert!((got - r.level_dbfs).abs() <= 3.0, "{:?}: {got} dBFS", r);
    }
}

#[test]
fn footsteps_flux_exceeds_oxygenator_flux() {
    for seed in 0..5 {
        let steps = synthesize(&ClipRecipe::new(vec![SoundClass::Footsteps], 100 + seed, 15.0, -25.0));
        let hum = synthesize(&ClipRecipe::new(vec![SoundClass::Oxygenator], 200 + seed, 15.0, -25.0));
        assert!((level_db(&steps.waveform) - level_db(&hum.waveform)).abs() < 1e-6);
        let (a, b) = (power_flux(&steps.waveform), power_flux(&hum.waveform));
        assert!(a > b, "seed {seed}: footsteps {a} oxygenator {b}");
    }
}

#[test]
fn nearest_centroid_separates_single_class_clips() {
    let ds = build_dataset(&DatasetConfig::new(40, 5)).unwrap();
    let singles = |v: &[ClipRecipe]| -> Vec<(usize, Vec<f64>)> {
        v.iter()
            .filter(|r| r.classes.len() == 1)
            .map(|r| (r.classes[0].index(), mean_band_shape(&synthesize(r).waveform)))
            .collect()
    };
    let train = singles(&ds.train);
    let held: Vec<_> = singles(&ds.val).into_iter().chain(singles(&ds.test)).collect();
    let mut centroids = vec![vec![0.0; 29]; 4];
    let mut counts = [0usize; 4];
    for (c, v) in &train {
        counts[*c] += 1;
        centroids[*c].iter_mut().zip(v).for_each(|(a, b)| *a += b);
    }
    for (c, n) in centroids.iter_mut().zip(counts) {
        c.iter_mut().for_each(|v| *v /= n as f64);
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let correct = held
        .iter()
        .filter(|(c, v)| {
            let best = (0..4)
                .min_by(|&i, &j| dist(v, &centroids[i]).total_cmp(&dist(v, &centroids[j])))
                .unwrap();
            best == *c
        })
        .count();
    let acc = correct as f64 / held.len() as f64;
    assert!(acc >= 0.7, "nearest-centroid accuracy {acc}");
}

#[test]
fn splits_are_sized_and_disjoint() {
    let cfg = DatasetConfig::new(100, 1);
    let ds = build_dataset(&cfg).unwrap();
    let singles = ds
        .train
        .iter()
        .chain(&ds.val)
        .chain(&ds.test)
        .filter(|r| r.classes.len() == 1)
        .count();
    assert_eq!(singles, 400);
    assert_eq!(ds.len(), 400 + cfg.n_mixtures + cfg.n_background);
    assert_eq!(ds.val.len(), ds.len() / 10);
    assert_eq!(ds.test.len(), ds.len() / 10);
    let seeds = |v: &[ClipRecipe]| v.iter().map(|r| r.seed).collect::<BTreeSet<_>>();
    let (a, b, c) = (seeds(&ds.train), seeds(&ds.val), seeds(&ds.test));
    assert_eq!(a.len() + b.len() + c.len(), ds.len());
    assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
    assert_eq!(build_dataset(&cfg).unwrap(), ds);
}
