use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use quietward_core::dsp::{FilterbankSpec, ThirdOctaveFrame, ThirdOctaveSpectrogram};
use quietward_core::mel::{
    band_matrix, griffin_lim, linear_transcode, magnitude_to_power, mel_filterbank, pinv_reconstruct,
    pseudo_inverse, MagnitudeStft, MelSpec, Stft,
};

fn tob_from(frames: Vec<Vec<f64>>) -> ThirdOctaveSpectrogram {
    let mut tob = ThirdOctaveSpectrogram::new(FilterbankSpec::standard(), 0);
    for (i, band_power) in frames.into_iter().enumerate() {
        tob.push(ThirdOctaveFrame {
            frame_index: i as u64,
            band_power,
        })
        .unwrap();
    }
    tob
}

#[test]
fn every_filter_row_has_positive_mass() {
    for row in mel_filterbank(&MelSpec::default()) {
        assert!(row.iter().sum::<f64>() > 0.0);
    }
}

#[test]
fn ten_seconds_of_frames_give_1000_mel_frames() {
    let tob = tob_from(vec![vec![1e-4; 29]; 80]);
    assert_eq!(linear_transcode(&tob, &MelSpec::default()).unwrap().n_frames, 1000);
}

#[test]
fn pseudo_inverse_matches_closed_form_for_disjoint_rows() {
    // rows of the band matrix are 0/1 with disjoint support, so A+ is A^T
    // with each nonzero row divided by its bin count; the lowest bands hold
    // no bin at this FFT size and their rows stay zero
    let a = band_matrix(&FilterbankSpec::standard(), &MelSpec::default());
    let counts: Vec<f64> = a.row_iter().map(|r| r.sum()).collect();
    assert!(counts[0] == 0.0 && counts[28] > 0.0);
    let expected = DMatrix::from_fn(a.ncols(), a.nrows(), |k, b| {
        if counts[b] > 0.0 {
            a[(b, k)] / counts[b]
        } else {
            0.0
        }
    });
    let got = pseudo_inverse(&a);
    assert!((&got - &expected).norm() <= 1e-10);
    assert!((&a * &got * &a - &a).norm() <= 1e-8);
}

#[test]
fn griffin_lim_recovers_a_tone_magnitude() {
    let spec = MelSpec::default();
    let x: Vec<f64> = (0..32_000).map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / 32_000.0).sin()).collect();
    let stft = Stft::new(&spec);
    let target = MagnitudeStft::from_stft(&stft.forward(&x, spec.frames_for(x.len())));
    let gl = griffin_lim(&target, &spec, 60, 5).unwrap();
    let norm: f64 = target
        .data
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let k = i % target.n_bins;
            let w = if k == 0 || k == target.n_bins - 1 { 1.0 } else { 2.0 };
            w * m * m
        })
        .sum::<f64>()
        .sqrt();
    let rel = gl.errors.last().unwrap() / norm;
    assert!(rel <= 0.1, "relative error {rel}");
    for i in [1, 10, 50] {
        assert!(gl.errors[i] <= gl.errors[i - 1] + 1e-9);
    }
}

#[test]
fn zero_magnitudes_give_a_silent_waveform() {
    let spec = MelSpec::default();
    let tob = tob_from(vec![vec![0.0; 29]; 8]);
    let mag = pinv_reconstruct(&tob, &spec).unwrap();
    assert!(mag.data.iter().all(|&m| m == 0.0));
    let gl = griffin_lim(&mag, &spec, 5, 1).unwrap();
    assert!(gl.waveform.iter().all(|&s| s == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn linear_transcode_stays_within_input_range(
        powers in prop::collection::vec(prop::collection::vec(1e-9f64..1.0, 29), 1..6)
    ) {
        let spec = MelSpec::default();
        let mel = linear_transcode(&tob_from(powers.clone()), &spec).unwrap();
        prop_assert_eq!(mel.n_frames, (powers.len() * 4000).div_ceil(320));
        for t in 0..mel.n_frames {
            let src = &powers[(t * 320 / 4000).min(powers.len() - 1)];
            let lo = src.iter().cloned().fold(f64::INFINITY, f64::min).log10();
            let hi = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max).log10();
            for &v in mel.frame(t) {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn pinv_reconstruction_recovers_band_powers(
        powers in prop::collection::vec(0.0f64..1.0, 29)
    ) {
        let spec = MelSpec::default();
        let tob = tob_from(vec![powers.clone()]);
        let mag = pinv_reconstruct(&tob, &spec).unwrap();
        let per_bin = magnitude_to_power(mag.frame(0), &spec);
        let a = band_matrix(&tob.spec, &spec);
        for (b, &p) in powers.iter().enumerate() {
            if a.row(b).sum() == 0.0 {
                continue;
            }
            let got: f64 = a.row(b).iter().zip(&per_bin).map(|(w, v)| w * v).sum();
            prop_assert!((got - p).abs() <= 1e-6 * p.max(1e-12));
        }
    }
}
