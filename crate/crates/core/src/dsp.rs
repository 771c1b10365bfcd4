//! Third-octave filterbank design and frame analysis.
//!
//! Bands follow the base-ten series: center `1000 * 10^(b/10)` Hz with edges
//! a factor `10^(1/20)` either side. Analysis is a zero-padded FFT of a
//! rectangular 125 ms frame whose one-sided bin powers are summed into the
//! band that contains each bin's center frequency.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};

/// Preferred-number series used for nominal band labels.
const R10: [f64; 10] = [1.0, 1.25, 1.6, 2.0, 2.5, 3.15, 4.0, 5.0, 6.3, 8.0];

/// One third-octave band, indexed by its IEC band number (0 is 1 kHz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandDefinition {
    pub index: i32,
    pub center_hz: f64,
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub nominal_hz: f64,
}

/// Band edge number `k` is the half-band point `1000 * 10^(k/20)`; band `b`
/// spans edges `2b - 1` to `2b + 1`. Sharing this function is what makes
/// adjacent edges bit-identical.
fn edge_hz(k: i32) -> f64 {
    1000.0 * 10f64.powf(k as f64 / 20.0)
}

impl BandDefinition {
    pub fn from_index(index: i32) -> Self {
        let decade = index.div_euclid(10);
        let step = index.rem_euclid(10) as usize;
        Self {
            index,
            center_hz: edge_hz(2 * index),
            lo_hz: edge_hz(2 * index - 1),
            hi_hz: edge_hz(2 * index + 1),
            nominal_hz: R10[step] * 1000.0 * 10f64.powi(decade),
        }
    }

    /// Recovers the band whose exact center is closest to `center_hz`.
    pub fn from_center(center_hz: f64) -> Result<Self> {
        if !(center_hz.is_finite() && center_hz > 0.0) {
            return Err(invalid(format!("band center {center_hz} Hz")));
        }
        let index = (10.0 * (center_hz / 1000.0).log10()).round() as i32;
        let band = Self::from_index(index);
        if ((band.center_hz - center_hz) / band.center_hz).abs() > 1e-4 {
            return Err(invalid(format!(
                "{center_hz} Hz is not a base-ten third-octave center"
            )));
        }
        Ok(band)
    }
}

/// Every band whose nominal center lies in `[fmin_hz, fmax_hz]`, ascending.
pub fn design_bands(fmin_hz: f64, fmax_hz: f64) -> Result<Vec<BandDefinition>> {
    if !(fmin_hz > 0.0 && fmin_hz.is_finite() && fmax_hz.is_finite()) || fmin_hz > fmax_hz {
        return Err(invalid(format!(
            "band range [{fmin_hz}, {fmax_hz}] Hz is empty or invalid"
        )));
    }
    // 1 mHz .. 1 GHz is far outside any audio use
    let bands: Vec<_> = (-60..=60)
        .map(BandDefinition::from_index)
        .filter(|b| b.nominal_hz >= fmin_hz && b.nominal_hz <= fmax_hz)
        .collect();
    if bands.is_empty() {
        return Err(invalid(format!(
            "no third-octave band center in [{fmin_hz}, {fmax_hz}] Hz"
        )));
    }
    Ok(bands)
}

/// Analysis parameters shared by the sensor and everything downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterbankSpec {
    pub sample_rate_hz: u32,
    pub frame_samples: usize,
    pub n_fft: usize,
    pub bands: Vec<BandDefinition>,
}

pub const STANDARD_SAMPLE_RATE: u32 = 32_000;
pub const FRAME_MS: u32 = 125;

impl FilterbankSpec {
    /// 32 kHz, 125 ms frames, 29 bands from 20 Hz to 12.5 kHz.
    pub fn standard() -> Self {
        let bands = design_bands(20.0, 12_500.0).expect("standard band range");
        Self::new(STANDARD_SAMPLE_RATE, FRAME_MS, bands).expect("standard profile is valid")
    }

    /// Picks the smallest power-of-two FFT length that covers a frame and
    /// leaves no band without at least one bin.
    pub fn new(sample_rate_hz: u32, frame_ms: u32, bands: Vec<BandDefinition>) -> Result<Self> {
        if sample_rate_hz == 0 || frame_ms == 0 {
            return Err(invalid("sample rate and frame length must be positive"));
        }
        if !(sample_rate_hz as u64 * frame_ms as u64).is_multiple_of(1000) {
            return Err(invalid(format!(
                "{frame_ms} ms is not a whole number of samples at {sample_rate_hz} Hz"
            )));
        }
        let frame_samples = (sample_rate_hz as u64 * frame_ms as u64 / 1000) as usize;
        let mut n_fft = frame_samples.next_power_of_two();
        while !Self::every_band_has_bins(sample_rate_hz, n_fft, &bands) {
            n_fft *= 2;
            if n_fft > 1 << 24 {
                return Err(invalid("bands too narrow for any reasonable FFT length"));
            }
        }
        let spec = Self {
            sample_rate_hz,
            frame_samples,
            n_fft,
            bands,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn every_band_has_bins(fs: u32, n_fft: usize, bands: &[BandDefinition]) -> bool {
        let df = fs as f64 / n_fft as f64;
        bands.iter().all(|b| {
            let k = (b.lo_hz / df).ceil();
            k * df < b.hi_hz
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return Err(invalid("filterbank has no bands"));
        }
        if self.n_fft < self.frame_samples {
            return Err(invalid("n_fft shorter than a frame"));
        }
        if self.bands.windows(2).any(|w| w[0].center_hz >= w[1].center_hz) {
            return Err(invalid("band centers must increase"));
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        if self.bands.last().unwrap().hi_hz >= nyquist {
            return Err(invalid("highest band reaches Nyquist"));
        }
        Ok(())
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn frame_ms(&self) -> u32 {
        (self.frame_samples as u64 * 1000 / self.sample_rate_hz as u64) as u32
    }

    pub fn frames_per_second(&self) -> f64 {
        self.sample_rate_hz as f64 / self.frame_samples as f64
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / self.n_fft as f64
    }

    /// Half-open FFT bin range `[lo, hi)` assigned to each band.
    pub fn band_bins(&self) -> Vec<(usize, usize)> {
        let df = self.bin_hz();
        let first_at_or_above = |f: f64| {
            let mut k = (f / df).ceil() as usize;
            while k > 0 && (k - 1) as f64 * df >= f {
                k -= 1;
            }
            while (k as f64) * df < f {
                k += 1;
            }
            k
        };
        self.bands
            .iter()
            .map(|b| (first_at_or_above(b.lo_hz), first_at_or_above(b.hi_hz)))
            .collect()
    }

    /// Frequency range covered by the bands.
    pub fn coverage_hz(&self) -> (f64, f64) {
        (self.bands[0].lo_hz, self.bands.last().unwrap().hi_hz)
    }
}

/// Band powers (mean square, linear, full-scale reference) for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ThirdOctaveFrame {
    pub frame_index: u64,
    pub band_power: Vec<f64>,
}

/// A contiguous run of analyzed frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ThirdOctaveSpectrogram {
    pub spec: FilterbankSpec,
    pub frames: Vec<ThirdOctaveFrame>,
    pub start_time_ms: i64,
}

impl ThirdOctaveSpectrogram {
    pub fn new(spec: FilterbankSpec, start_time_ms: i64) -> Self {
        Self {
            spec,
            frames: Vec::new(),
            start_time_ms,
        }
    }

    /// Appends a frame, enforcing contiguous indices and band count.
    pub fn push(&mut self, frame: ThirdOctaveFrame) -> Result<()> {
        if frame.band_power.len() != self.spec.n_bands() {
            return Err(invalid(format!(
                "frame has {} bands, spectrogram has {}",
                frame.band_power.len(),
                self.spec.n_bands()
            )));
        }
        if let Some(last) = self.frames.last() {
            if frame.frame_index != last.frame_index + 1 {
                return Err(invalid(format!(
                    "frame {} does not follow frame {}",
                    frame.frame_index, last.frame_index
                )));
            }
        }
        self.frames.push(frame);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_ms(&self) -> i64 {
        self.frames.len() as i64 * self.spec.frame_ms() as i64
    }

    /// Rounds every band power to the stored `f32` precision, giving the
    /// same values a reader sees after a round trip through a `.tob` file.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        for f in &mut out.frames {
            for p in &mut f.band_power {
                *p = *p as f32 as f64;
            }
        }
        out
    }

    /// Frames `[start, start + len)` as a new spectrogram with adjusted start time.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        let frame_ms = self.spec.frame_ms() as i64;
        Self {
            spec: self.spec.clone(),
            frames: self.frames[start..start + len].to_vec(),
            start_time_ms: self.start_time_ms + start as i64 * frame_ms,
        }
    }
}

/// Converts band power to decibels, clamped below at `floor_db`.
pub fn to_db(frame: &ThirdOctaveFrame, floor_db: f64) -> Vec<f64> {
    frame
        .band_power
        .iter()
        .map(|&p| {
            if p > 0.0 {
                (10.0 * p.log10()).max(floor_db)
            } else {
                floor_db
            }
        })
        .collect()
}

/// FFT-based frame analyzer. Holds the plan and scratch buffers, so reuse
/// one per thread.
pub struct Analyzer {
    spec: FilterbankSpec,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    band_bins: Vec<(usize, usize)>,
}

impl Analyzer {
    pub fn new(spec: FilterbankSpec) -> Result<Self> {
        spec.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(spec.n_fft);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Ok(Self {
            band_bins: spec.band_bins(),
            buf: vec![Complex64::default(); spec.n_fft],
            spec,
            fft,
            scratch,
        })
    }

    pub fn spec(&self) -> &FilterbankSpec {
        &self.spec
    }

    pub fn analyze_frame(&mut self, samples: &[f64], frame_index: u64) -> Result<ThirdOctaveFrame> {
        if samples.len() != self.spec.frame_samples {
            return Err(invalid(format!(
                "frame needs {} samples, got {}",
                self.spec.frame_samples,
                samples.len()
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(invalid("non-finite sample in frame"));
        }
        let n = self.spec.n_fft;
        for (dst, &s) in self.buf.iter_mut().zip(samples) {
            *dst = Complex64::new(s, 0.0);
        }
        self.buf[samples.len()..].fill(Complex64::default());
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);

        // one-sided bin power, scaled so that the sum over all bins is the
        // frame's mean square
        let norm = 1.0 / (self.spec.frame_samples as f64 * n as f64);
        let band_power = self
            .band_bins
            .iter()
            .map(|&(lo, hi)| {
                (lo..hi)
                    .map(|k| {
                        let w = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
                        w * self.buf[k].norm_sqr()
                    })
                    .sum::<f64>()
                    * norm
            })
            .collect();
        Ok(ThirdOctaveFrame {
            frame_index,
            band_power,
        })
    }
}

/// One-shot analysis of a single frame.
pub fn analyze_frame(samples: &[f64], spec: &FilterbankSpec) -> Result<ThirdOctaveFrame> {
    Analyzer::new(spec.clone())?.analyze_frame(samples, 0)
}

/// Incremental analysis: feed samples in arbitrary chunks, get a frame for
/// every complete 125 ms block. At most one partial frame is buffered.
pub struct StreamAnalyzer {
    analyzer: Analyzer,
    pending: Vec<f64>,
    next_index: u64,
}

impl StreamAnalyzer {
    pub fn new(spec: FilterbankSpec) -> Result<Self> {
        let pending = Vec::with_capacity(spec.frame_samples);
        Ok(Self {
            analyzer: Analyzer::new(spec)?,
            pending,
            next_index: 0,
        })
    }

    pub fn spec(&self) -> &FilterbankSpec {
        self.analyzer.spec()
    }

    /// Samples held back waiting for the rest of their frame.
    pub fn buffered(&self) -> usize {
        self.pending.len()
    }

    pub fn push(&mut self, mut samples: &[f64]) -> Result<Vec<ThirdOctaveFrame>> {
        let n = self.analyzer.spec.frame_samples;
        let mut out = Vec::new();
        while !samples.is_empty() {
            let take = (n - self.pending.len()).min(samples.len());
            self.pending.extend_from_slice(&samples[..take]);
            samples = &samples[take..];
            if self.pending.len() == n {
                let frame = self.analyzer.analyze_frame(&self.pending, self.next_index);
                self.pending.clear();
                out.push(frame?);
                self.next_index += 1;
            }
        }
        Ok(out)
    }

    /// Pull-based adapter: yields frames as the source produces samples. A
    /// source error is yielded once, after every frame completed before it.
    /// The trailing partial frame is dropped when the source ends.
    pub fn frames<I, E>(self, source: I) -> FrameStream<I>
    where
        I: Iterator<Item = std::result::Result<f64, E>>,
        E: Into<Box<dyn std::error::Error + Send + Sync>>,
    {
        FrameStream {
            inner: self,
            source,
            done: false,
        }
    }
}

pub struct FrameStream<I> {
    inner: StreamAnalyzer,
    source: I,
    done: bool,
}

impl<I, E> Iterator for FrameStream<I>
where
    I: Iterator<Item = std::result::Result<f64, E>>,
    E: Into<Box<dyn std::error::Error + Send + Sync>>,
{
    type Item = Result<ThirdOctaveFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let n = self.inner.analyzer.spec.frame_samples;
        while self.inner.pending.len() < n {
            match self.source.next() {
                Some(Ok(s)) => self.inner.pending.push(s),
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(Error::Source(e.into())));
                }
                None => {
                    self.done = true;
                    return None;
                }
            }
        }
        let index = self.inner.next_index;
        let frame = self.inner.analyzer.analyze_frame(&self.inner.pending, index);
        self.inner.pending.clear();
        self.inner.next_index += 1;
        if frame.is_err() {
            self.done = true;
        }
        Some(frame)
    }
}

/// Analyzes a whole waveform; trailing samples short of a frame are ignored.
pub fn analyze_waveform(
    samples: &[f64],
    spec: &FilterbankSpec,
    start_time_ms: i64,
) -> Result<ThirdOctaveSpectrogram> {
    let mut stream = StreamAnalyzer::new(spec.clone())?;
    let mut tob = ThirdOctaveSpectrogram::new(spec.clone(), start_time_ms);
    for frame in stream.push(samples)? {
        tob.push(frame)?;
    }
    Ok(tob)
}
