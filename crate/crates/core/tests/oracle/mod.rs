//! Reference computations shared by the DSP tests and the acceptance suite.
#![allow(dead_code)]

use std::f64::consts::PI;

use quietward_core::dsp::FilterbankSpec;

/// Band powers by direct DFT summation: every bin whose center frequency
/// lies in `[lo, hi)` of a band contributes its one-sided power.
pub struct DftOracle {
    n_fft: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
    edges: Vec<(f64, f64)>,
    fs: f64,
}

impl DftOracle {
    pub fn new(spec: &FilterbankSpec) -> Self {
        let n = spec.n_fft;
        let edges = (-17..=11)
            .map(|b: i32| {
                let lo = 1000.0 * 10f64.powf((2 * b - 1) as f64 / 20.0);
                let hi = 1000.0 * 10f64.powf((2 * b + 1) as f64 / 20.0);
                (lo, hi)
            })
            .collect();
        Self {
            n_fft: n,
            cos: (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).cos()).collect(),
            sin: (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).sin()).collect(),
            edges,
            fs: spec.sample_rate_hz as f64,
        }
    }

    pub fn bands(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n_fft;
        let df = self.fs / n as f64;
        let top = (self.edges.last().unwrap().1 / df).ceil() as usize;
        let mut out = vec![0.0; self.edges.len()];
        for k in 1..=top {
            let f = k as f64 * df;
            let Some(b) = self.edges.iter().position(|&(lo, hi)| f >= lo && f < hi) else {
                continue;
            };
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &s) in x.iter().enumerate() {
                let j = (k * i) % n;
                re += s * self.cos[j];
                im -= s * self.sin[j];
            }
            out[b] += 2.0 * (re * re + im * im) / (x.len() as f64 * n as f64);
        }
        out
    }
}

/// Sum of Gaussian-enveloped tones centered in the frame. The envelope keeps
/// each tone's spectrum within a few tens of Hz of its carrier.
pub fn smooth_signal(tones: &[(f64, f64)]) -> Vec<f64> {
    let sigma = 0.012 * 32_000.0;
    (0..4000)
        .map(|i| {
            let t = i as f64 - 2000.0;
            let env = (-0.5 * (t / sigma).powi(2)).exp();
            tones
                .iter()
                .map(|&(f, a)| a * env * (2.0 * PI * f * i as f64 / 32_000.0).cos())
                .sum::<f64>()
        })
        .collect()
}

