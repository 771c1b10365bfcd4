//! RIFF/WAVE PCM16 mono input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{invalid, Result};

/// Mono samples scaled to [-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Wav {
    pub sample_rate_hz: u32,
    pub samples: Vec<f64>,
}

/// Opens a WAV file and checks it is 16-bit PCM, mono, at `expected_rate`.
/// A different rate is an error; nothing is resampled.
pub fn open_checked(
    path: impl AsRef<Path>,
    expected_rate: u32,
) -> Result<WavReader<std::io::BufReader<std::fs::File>>> {
    let path = path.as_ref();
    let reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_rate != expected_rate {
        return Err(invalid(format!(
            "{}: sample rate is {} Hz, expected {expected_rate} Hz; resample the file explicitly first",
            path.display(),
            spec.sample_rate
        )));
    }
    if spec.channels != 1 {
        return Err(invalid(format!("{}: {} channels, expected mono", path.display(), spec.channels)));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(invalid(format!("{}: expected 16-bit PCM", path.display())));
    }
    Ok(reader)
}

pub fn read(path: impl AsRef<Path>, expected_rate: u32) -> Result<Wav> {
    let mut reader = open_checked(path, expected_rate)?;
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(pcm_to_f64))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Wav {
        sample_rate_hz: expected_rate,
        samples,
    })
}

pub fn pcm_to_f64(s: i16) -> f64 {
    s as f64 / 32768.0
}

/// Rounds to the nearest 16-bit step, clipping at full scale.
pub fn f64_to_pcm(x: f64) -> i16 {
    (x * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn write(path: impl AsRef<Path>, sample_rate_hz: u32, samples: &[f64]) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample(f64_to_pcm(s))?;
    }
    w.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm_conversion_round_trips() {
        for s in [i16::MIN, -1, 0, 1, 12345, i16::MAX] {
            assert_eq!(f64_to_pcm(pcm_to_f64(s)), s);
        }
        assert_eq!(f64_to_pcm(2.0), i16::MAX);
        assert_eq!(f64_to_pcm(-2.0), i16::MIN);
    }

    #[test]
    fn rate_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write(&p, 44_100, &[0.0; 100]).unwrap();
        let e = read(&p, 32_000).unwrap_err().to_string();
        assert!(e.contains("44100") && e.contains("resample"), "{e}");
        write(&p, 32_000, &[0.25, -0.5]).unwrap();
        assert_eq!(read(&p, 32_000).unwrap().samples, vec![0.25, -0.5]);
    }
}
