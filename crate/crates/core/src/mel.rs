//! Mel spectrograms, the linear third-octave to mel baseline, and the
//! inversion tools used to audit how much a stored spectrogram gives away
//! (pseudoinverse of the band-summation map followed by Griffin-Lim).

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::dsp::{FilterbankSpec, ThirdOctaveSpectrogram};
use crate::error::{invalid, Result};

/// Front-end parameters of the mel representation.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpec {
    pub sample_rate_hz: u32,
    pub n_mels: usize,
    pub hop_samples: usize,
    pub win_samples: usize,
    pub n_fft: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    /// Lower bound on log10 power.
    pub log_floor: f64,
}

impl Default for MelSpec {
    fn default() -> Self {
        Self {
            sample_rate_hz: 32_000,
            n_mels: 64,
            hop_samples: 320,
            win_samples: 1024,
            n_fft: 1024,
            fmin_hz: 50.0,
            fmax_hz: 14_000.0,
            log_floor: -10.0,
        }
    }
}

impl MelSpec {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn hop_ms(&self) -> f64 {
        1000.0 * self.hop_samples as f64 / self.sample_rate_hz as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 || self.hop_samples == 0 || self.win_samples == 0 {
            return Err(invalid("mel spec has a zero dimension"));
        }
        if self.win_samples > self.n_fft {
            return Err(invalid("window longer than FFT"));
        }
        if !(0.0 <= self.fmin_hz && self.fmin_hz < self.fmax_hz)
            || self.fmax_hz > self.sample_rate_hz as f64 / 2.0
        {
            return Err(invalid("mel frequency range invalid"));
        }
        Ok(())
    }

    /// Number of STFT frames for a signal of `n_samples`: one per hop,
    /// rounded up.
    pub fn frames_for(&self, n_samples: usize) -> usize {
        n_samples.div_ceil(self.hop_samples)
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `n_mels + 2` HTK-mel-spaced edge frequencies from fmin to fmax.
fn mel_points(spec: &MelSpec) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(spec.fmin_hz), hz_to_mel(spec.fmax_hz));
    (0..spec.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (spec.n_mels + 1) as f64))
        .collect()
}

/// Center frequency of each mel bin.
pub fn mel_centers_hz(spec: &MelSpec) -> Vec<f64> {
    let p = mel_points(spec);
    p[1..=spec.n_mels].to_vec()
}

/// Triangular filters with unit peak, `n_mels` rows of `n_fft / 2 + 1` weights.
pub fn mel_filterbank(spec: &MelSpec) -> Vec<Vec<f64>> {
    let p = mel_points(spec);
    let df = spec.sample_rate_hz as f64 / spec.n_fft as f64;
    (0..spec.n_mels)
        .map(|m| {
            let (l, c, r) = (p[m], p[m + 1], p[m + 2]);
            (0..spec.n_bins())
                .map(|k| {
                    let f = k as f64 * df;
                    if f <= l || f >= r {
                        0.0
                    } else if f <= c {
                        (f - l) / (c - l)
                    } else {
                        (r - f) / (r - c)
                    }
                })
                .collect()
        })
        .collect()
}

/// Log10 mel power, `[time x n_mels]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub spec: MelSpec,
    pub n_frames: usize,
    pub data: Vec<f64>,
}

impl MelSpectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.spec.n_mels..(t + 1) * self.spec.n_mels]
    }

    /// Constant spectrogram at the log floor.
    pub fn silent(spec: &MelSpec, n_frames: usize) -> Self {
        Self {
            data: vec![spec.log_floor; n_frames * spec.n_mels],
            spec: spec.clone(),
            n_frames,
        }
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Centered STFT with zero padding: frame `t` is centered on sample
/// `t * hop`, and there are `ceil(len / hop)` frames.
pub struct Stft {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(spec: &MelSpec) -> Self {
        let mut planner = FftPlanner::new();
        let mut window = hann(spec.win_samples);
        // center a shorter window inside the FFT frame
        let pad = spec.n_fft - spec.win_samples;
        let mut w = vec![0.0; pad / 2];
        w.append(&mut window);
        w.resize(spec.n_fft, 0.0);
        Self {
            n_fft: spec.n_fft,
            hop: spec.hop_samples,
            window: w,
            fwd: planner.plan_fft_forward(spec.n_fft),
            inv: planner.plan_fft_inverse(spec.n_fft),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Scale turning `|X_k|^2` into per-bin mean-square power (before the
    /// one-sided doubling), so bin powers of a stationary signal sum to its
    /// mean square.
    pub fn power_scale(&self) -> f64 {
        let s2: f64 = self.window.iter().map(|w| w * w).sum();
        1.0 / (self.n_fft as f64 * s2)
    }

    fn frame_start(&self, t: usize) -> isize {
        (t * self.hop) as isize - (self.n_fft / 2) as isize
    }

    /// One-sided spectra, `n_frames x (n_fft / 2 + 1)`.
    pub fn forward(&self, x: &[f64], n_frames: usize) -> Vec<Vec<Complex64>> {
        let n = self.n_fft;
        let mut buf = vec![Complex64::default(); n];
        let mut scratch = vec![Complex64::default(); self.fwd.get_inplace_scratch_len()];
        (0..n_frames)
            .map(|t| {
                let start = self.frame_start(t);
                for (i, b) in buf.iter_mut().enumerate() {
                    let idx = start + i as isize;
                    let s = if idx >= 0 && (idx as usize) < x.len() {
                        x[idx as usize]
                    } else {
                        0.0
                    };
                    *b = Complex64::new(s * self.window[i], 0.0);
                }
                self.fwd.process_with_scratch(&mut buf, &mut scratch);
                buf[..self.n_bins()].to_vec()
            })
            .collect()
    }

    /// Least-squares inverse: the signal of length `len` whose STFT is
    /// closest to `spec` in the full-spectrum norm.
    pub fn inverse(&self, spec: &[Vec<Complex64>], len: usize) -> Vec<f64> {
        let n = self.n_fft;
        let mut num = vec![0.0; len];
        let mut den = vec![0.0; len];
        let mut buf = vec![Complex64::default(); n];
        for (t, half) in spec.iter().enumerate() {
            for k in 0..n {
                buf[k] = if k < half.len() {
                    half[k]
                } else {
                    half[n - k].conj()
                };
            }
            self.inv.process(&mut buf);
            let start = self.frame_start(t);
            for i in 0..n {
                let idx = start + i as isize;
                if idx < 0 || idx as usize >= len {
                    continue;
                }
                let w = self.window[i];
                num[idx as usize] += w * buf[i].re / n as f64;
                den[idx as usize] += w * w;
            }
        }
        num.iter()
            .zip(&den)
            .map(|(a, d)| if *d > 1e-12 { a / d } else { 0.0 })
            .collect()
    }
}

fn one_sided_weight(k: usize, n_fft: usize) -> f64 {
    if k == 0 || 2 * k == n_fft {
        1.0
    } else {
        2.0
    }
}

/// STFT, power spectrum, HTK mel filterbank, log10 with floor.
pub fn mel_from_waveform(samples: &[f64], spec: &MelSpec) -> Result<MelSpectrogram> {
    spec.validate()?;
    if samples.len() < spec.win_samples {
        return Err(invalid(format!(
            "{} samples is shorter than one {}-sample window",
            samples.len(),
            spec.win_samples
        )));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(invalid("non-finite sample"));
    }
    let stft = Stft::new(spec);
    let n_frames = spec.frames_for(samples.len());
    let frames = stft.forward(samples, n_frames);
    let fb = mel_filterbank(spec);
    let support: Vec<(usize, usize)> = fb.iter().map(|row| nonzero_span(row)).collect();
    let scale = stft.power_scale();
    let mut data = Vec::with_capacity(n_frames * spec.n_mels);
    let mut power = vec![0.0; stft.n_bins()];
    for frame in &frames {
        for (k, (p, x)) in power.iter_mut().zip(frame).enumerate() {
            *p = one_sided_weight(k, spec.n_fft) * x.norm_sqr() * scale;
        }
        for (row, &(lo, hi)) in fb.iter().zip(&support) {
            let e: f64 = row[lo..hi].iter().zip(&power[lo..hi]).map(|(w, p)| w * p).sum();
            data.push(log_with_floor(e, spec.log_floor));
        }
    }
    Ok(MelSpectrogram {
        spec: spec.clone(),
        n_frames,
        data,
    })
}

/// Smallest range holding every non-zero weight of a filter.
fn nonzero_span(row: &[f64]) -> (usize, usize) {
    match row.iter().position(|&w| w != 0.0) {
        Some(lo) => (lo, row.iter().rposition(|&w| w != 0.0).unwrap() + 1),
        None => (0, 0),
    }
}

fn log_with_floor(p: f64, floor: f64) -> f64 {
    if p > 0.0 {
        p.log10().max(floor)
    } else {
        floor
    }
}

/// Index of the third-octave frame that contains STFT frame `t`.
fn source_frame(t: usize, hop: usize, frame_samples: usize, n: usize) -> usize {
    (t * hop / frame_samples).min(n - 1)
}

fn output_frames(tob: &ThirdOctaveSpectrogram, spec: &MelSpec) -> usize {
    spec.frames_for(tob.len() * tob.spec.frame_samples)
}

/// The naive resampler: hold each 125 ms frame in time, interpolate log
/// band power linearly in log-frequency onto mel bin centers.
pub fn linear_transcode(tob: &ThirdOctaveSpectrogram, spec: &MelSpec) -> Result<MelSpectrogram> {
    if tob.is_empty() {
        return Err(invalid("empty third-octave spectrogram"));
    }
    spec.validate()?;
    let band_x: Vec<f64> = tob.spec.bands.iter().map(|b| b.center_hz.log10()).collect();
    let weights: Vec<(usize, usize, f64)> = mel_centers_hz(spec)
        .iter()
        .map(|&f| interp_weight(&band_x, f.log10()))
        .collect();
    let n_frames = output_frames(tob, spec);
    let logs: Vec<Vec<f64>> = tob
        .frames
        .iter()
        .map(|f| {
            f.band_power
                .iter()
                .map(|&p| log_with_floor(p, spec.log_floor))
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(n_frames * spec.n_mels);
    for t in 0..n_frames {
        let row = &logs[source_frame(t, spec.hop_samples, tob.spec.frame_samples, tob.len())];
        for &(i0, i1, a) in &weights {
            data.push(row[i0] + a * (row[i1] - row[i0]));
        }
    }
    Ok(MelSpectrogram {
        spec: spec.clone(),
        n_frames,
        data,
    })
}

/// Bracketing indices and upper weight for `x` on ascending knots, clamped
/// to the end knots outside their range.
fn interp_weight(knots: &[f64], x: f64) -> (usize, usize, f64) {
    let last = knots.len() - 1;
    if x <= knots[0] {
        return (0, 0, 0.0);
    }
    if x >= knots[last] {
        return (last, last, 0.0);
    }
    let i = knots.partition_point(|&k| k <= x) - 1;
    (i, i + 1, (x - knots[i]) / (knots[i + 1] - knots[i]))
}

/// Band-summation matrix `[n_bands x n_bins]` mapping per-bin power of the
/// STFT described by `mel` to band power: 1 where the bin center falls in
/// the band, 0 elsewhere.
pub fn band_matrix(fb: &FilterbankSpec, mel: &MelSpec) -> DMatrix<f64> {
    let df = mel.sample_rate_hz as f64 / mel.n_fft as f64;
    let n_bins = mel.n_bins();
    DMatrix::from_fn(fb.n_bands(), n_bins, |b, k| {
        let f = k as f64 * df;
        let band = &fb.bands[b];
        if f >= band.lo_hz && f < band.hi_hz {
            1.0
        } else {
            0.0
        }
    })
}

/// Moore-Penrose pseudoinverse via SVD.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone()
        .pseudo_inverse(1e-10)
        .expect("non-negative tolerance")
}

/// Magnitude spectrogram, `n_frames x n_bins` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeStft {
    pub n_frames: usize,
    pub n_bins: usize,
    pub data: Vec<f64>,
}

impl MagnitudeStft {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn from_stft(frames: &[Vec<Complex64>]) -> Self {
        let n_bins = frames.first().map_or(0, Vec::len);
        Self {
            n_frames: frames.len(),
            n_bins,
            data: frames.iter().flatten().map(|c| c.norm()).collect(),
        }
    }
}

/// Per-bin power estimate from band powers through the pseudoinverse,
/// negatives clamped, converted to STFT magnitudes and held for the
/// duration of each 125 ms frame.
pub fn pinv_reconstruct(tob: &ThirdOctaveSpectrogram, spec: &MelSpec) -> Result<MagnitudeStft> {
    if tob.is_empty() {
        return Err(invalid("empty third-octave spectrogram"));
    }
    spec.validate()?;
    let a = band_matrix(&tob.spec, spec);
    let a_pinv = pseudo_inverse(&a);
    let stft = Stft::new(spec);
    let scale = stft.power_scale();
    let n_bins = spec.n_bins();
    let mags: Vec<Vec<f64>> = tob
        .frames
        .iter()
        .map(|f| {
            let p = nalgebra::DVector::from_column_slice(&f.band_power);
            let bins = &a_pinv * p;
            bins.iter()
                .enumerate()
                .map(|(k, &pw)| (pw.max(0.0) / (one_sided_weight(k, spec.n_fft) * scale)).sqrt())
                .collect()
        })
        .collect();
    let n_frames = output_frames(tob, spec);
    let mut data = Vec::with_capacity(n_frames * n_bins);
    for t in 0..n_frames {
        data.extend_from_slice(&mags[source_frame(t, spec.hop_samples, tob.spec.frame_samples, tob.len())]);
    }
    Ok(MagnitudeStft {
        n_frames,
        n_bins,
        data,
    })
}

/// Per-bin power implied by a magnitude frame; inverse of the conversion in
/// [`pinv_reconstruct`].
pub fn magnitude_to_power(mag: &[f64], spec: &MelSpec) -> Vec<f64> {
    let scale = Stft::new(spec).power_scale();
    mag.iter()
        .enumerate()
        .map(|(k, m)| one_sided_weight(k, spec.n_fft) * m * m * scale)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GriffinLim {
    pub waveform: Vec<f64>,
    /// Consistency error `|| |STFT(x_i)| - target ||` after each iteration.
    pub errors: Vec<f64>,
}

/// Full-spectrum Frobenius distance between `|frames|` and `target`.
pub fn consistency_error(frames: &[Vec<Complex64>], target: &MagnitudeStft, n_fft: usize) -> f64 {
    let mut acc = 0.0;
    for (t, frame) in frames.iter().enumerate() {
        for (k, (x, m)) in frame.iter().zip(target.frame(t)).enumerate() {
            let d = x.norm() - m;
            acc += one_sided_weight(k, n_fft) * d * d;
        }
    }
    acc.sqrt()
}

/// Alternating projections between the target magnitude and consistent
/// spectrograms. The starting phase is seeded and random per bin but
/// coherent across frames, as for a stationary signal. The waveform has
/// `n_frames * hop` samples.
pub fn griffin_lim(mag: &MagnitudeStft, spec: &MelSpec, iters: usize, seed: u64) -> Result<GriffinLim> {
    if iters == 0 {
        return Err(invalid("griffin_lim needs at least one iteration"));
    }
    if mag.n_bins != spec.n_bins() {
        return Err(invalid(format!(
            "magnitude has {} bins, STFT has {}",
            mag.n_bins,
            spec.n_bins()
        )));
    }
    let stft = Stft::new(spec);
    let len = mag.n_frames * spec.hop_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // one random phase per bin, advanced by the bin frequency at each hop
    let phase0: Vec<f64> = (0..mag.n_bins).map(|_| rng.gen_range(-PI..PI)).collect();
    let advance = 2.0 * PI * spec.hop_samples as f64 / spec.n_fft as f64;
    let mut current: Vec<Vec<Complex64>> = (0..mag.n_frames)
        .map(|t| {
            mag.frame(t)
                .iter()
                .zip(&phase0)
                .enumerate()
                .map(|(k, (&m, &p))| Complex64::from_polar(m, p + advance * (k * t) as f64))
                .collect()
        })
        .collect();
    let mut errors = Vec::with_capacity(iters);
    let mut x = Vec::new();
    for _ in 0..iters {
        x = stft.inverse(&current, len);
        let rebuilt = stft.forward(&x, mag.n_frames);
        errors.push(consistency_error(&rebuilt, mag, spec.n_fft));
        for (t, (dst, src)) in current.iter_mut().zip(&rebuilt).enumerate() {
            for ((d, s), &m) in dst.iter_mut().zip(src).zip(mag.frame(t)) {
                let r = s.norm();
                *d = if r > 0.0 {
                    s * (m / r)
                } else {
                    Complex64::new(m, 0.0)
                };
            }
        }
    }
    Ok(GriffinLim { waveform: x, errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::ThirdOctaveFrame;

    fn sine(freq: f64, n: usize, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / 32_000.0).sin())
            .collect()
    }

    #[test]
    fn zeros_sit_on_the_floor() {
        let spec = MelSpec::default();
        let m = mel_from_waveform(&vec![0.0; 32_000], &spec).unwrap();
        assert_eq!(m.n_frames, 100);
        assert!(m.data.iter().all(|&v| v == spec.log_floor));
    }

    #[test]
    fn too_short_input_errors() {
        assert!(mel_from_waveform(&[0.0; 1000], &MelSpec::default()).is_err());
    }

    #[test]
    fn sine_peaks_in_nearest_mel_bin() {
        let spec = MelSpec::default();
        let centers = mel_centers_hz(&spec);
        let nearest = centers
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1000.0).abs().total_cmp(&(b.1 - 1000.0).abs()))
            .unwrap()
            .0;
        let m = mel_from_waveform(&sine(1000.0, 32_000, 1.0), &spec).unwrap();
        for t in 0..m.n_frames {
            let row = m.frame(t);
            let arg = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(arg, nearest, "frame {t}");
        }
    }

    #[test]
    fn doubling_amplitude_adds_log10_4() {
        let spec = MelSpec::default();
        let a = mel_from_waveform(&sine(700.0, 16_000, 0.1), &spec).unwrap();
        let b = mel_from_waveform(&sine(700.0, 16_000, 0.2), &spec).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            if *x > spec.log_floor {
                assert!((y - x - 4f64.log10()).abs() < 1e-9, "{x} {y}");
            }
        }
    }

    #[test]
    fn filterbank_has_no_holes() {
        let spec = MelSpec::default();
        let fb = mel_filterbank(&spec);
        assert!(fb.iter().all(|row| row.iter().sum::<f64>() > 0.0));
        let df = 32_000.0 / 1024.0;
        for k in 0..spec.n_bins() {
            let f = k as f64 * df;
            if f > spec.fmin_hz && f < spec.fmax_hz {
                let total: f64 = fb.iter().map(|r| r[k]).sum();
                assert!(total > 0.0, "hole at {f} Hz");
            }
        }
    }

    fn tob_from(frames: Vec<Vec<f64>>) -> ThirdOctaveSpectrogram {
        let mut tob = ThirdOctaveSpectrogram::new(FilterbankSpec::standard(), 0);
        for (i, p) in frames.into_iter().enumerate() {
            tob.push(ThirdOctaveFrame {
                frame_index: i as u64,
                band_power: p,
            })
            .unwrap();
        }
        tob
    }

    #[test]
    fn linear_transcode_shapes_and_constants() {
        let tob = tob_from(vec![vec![1e-3; 29]; 80]);
        let m = linear_transcode(&tob, &MelSpec::default()).unwrap();
        assert_eq!(m.n_frames, 1000);
        assert!(m.data.iter().all(|&v| (v + 3.0).abs() < 1e-12));
        let odd = tob_from(vec![vec![1e-3; 29]; 3]);
        assert_eq!(linear_transcode(&odd, &MelSpec::default()).unwrap().n_frames, 38);
    }

    #[test]
    fn single_band_gives_unimodal_profile() {
        let spec = MelSpec::default();
        let mut p = vec![0.0; 29];
        p[17] = 1.0; // 1 kHz
        let m = linear_transcode(&tob_from(vec![p]), &spec).unwrap();
        let row = m.frame(0);
        let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert!(row[..peak].windows(2).all(|w| w[0] <= w[1]));
        assert!(row[peak..].windows(2).all(|w| w[0] >= w[1]));
        let centers = mel_centers_hz(&spec);
        let bc = 1000f64.log10();
        let closest = (0..centers.len())
            .min_by(|&a, &b| (centers[a].log10() - bc).abs().total_cmp(&(centers[b].log10() - bc).abs()))
            .unwrap();
        assert_eq!(peak, closest);
    }

    #[test]
    fn pinv_of_silence_is_silent() {
        let tob = tob_from(vec![vec![0.0; 29]; 8]);
        let mag = pinv_reconstruct(&tob, &MelSpec::default()).unwrap();
        assert_eq!(mag.n_frames, 100);
        assert!(mag.data.iter().all(|&m| m == 0.0));
        let gl = griffin_lim(&mag, &MelSpec::default(), 3, 1).unwrap();
        assert!(gl.waveform.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pseudo_inverse_identity() {
        let a = band_matrix(&FilterbankSpec::standard(), &MelSpec::default());
        let ap = pseudo_inverse(&a);
        let err = (&a * &ap * &a - &a).norm();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn single_band_power_survives_reconstruction() {
        let spec = MelSpec::default();
        let fb = FilterbankSpec::standard();
        let a = band_matrix(&fb, &spec);
        for b in 0..29 {
            if a.row(b).sum() == 0.0 {
                continue; // band narrower than one bin at this STFT size
            }
            let mut p = vec![0.0; 29];
            p[b] = 0.25;
            let mag = pinv_reconstruct(&tob_from(vec![p]), &spec).unwrap();
            let power = magnitude_to_power(mag.frame(0), &spec);
            let back: f64 = (0..spec.n_bins()).map(|k| a[(b, k)] * power[k]).sum();
            assert!((back - 0.25).abs() <= 1e-6 * 0.25, "band {b}: {back}");
        }
    }

    #[test]
    fn griffin_lim_zero_iterations_rejected() {
        let mag = MagnitudeStft {
            n_frames: 2,
            n_bins: 513,
            data: vec![0.0; 1026],
        };
        assert!(griffin_lim(&mag, &MelSpec::default(), 0, 0).is_err());
    }
}
