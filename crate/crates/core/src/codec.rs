//! `.tob` files: an append-only store of third-octave frames.
//!
//! Layout, all integers little-endian:
//!
//! | field              | type            |
//! |--------------------|-----------------|
//! | magic `TOB1`       | 4 bytes         |
//! | version            | u16 (1)         |
//! | sample_rate_hz     | u32             |
//! | frame_ms           | u16 (125)       |
//! | n_bands            | u16             |
//! | band_centers_hz    | n_bands x f32   |
//! | calibration_db     | f32             |
//! | start_time_unix_ms | u64             |
//! | payload            | frames x n_bands x f32 |
//!
//! Frames carry no timestamp; frame `i` starts at `start + i * frame_ms`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::dsp::{BandDefinition, FilterbankSpec, ThirdOctaveFrame, ThirdOctaveSpectrogram};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"TOB1";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TobHeader {
    pub magic: [u8; 4],
    pub version: u16,
    pub sample_rate_hz: u32,
    pub frame_ms: u16,
    pub n_bands: u16,
    pub band_centers_hz: Vec<f32>,
    pub calibration_db: f32,
    pub start_time_unix_ms: u64,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

impl TobHeader {
    pub fn for_spec(spec: &FilterbankSpec, start_time_unix_ms: u64, calibration_db: f32) -> Self {
        Self {
            magic: MAGIC,
            version: VERSION,
            sample_rate_hz: spec.sample_rate_hz,
            frame_ms: spec.frame_ms() as u16,
            n_bands: spec.n_bands() as u16,
            band_centers_hz: spec.bands.iter().map(|b| b.center_hz as f32).collect(),
            calibration_db,
            start_time_unix_ms,
        }
    }

    /// Encoded size in bytes.
    pub fn size(&self) -> usize {
        4 + 2 + 4 + 2 + 2 + 4 * self.band_centers_hz.len() + 4 + 8
    }

    pub fn frame_bytes(&self) -> usize {
        4 * self.n_bands as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.magic != MAGIC {
            return Err(format_err(format!("bad magic {:?}", self.magic)));
        }
        if self.version != VERSION {
            return Err(format_err(format!("unsupported version {}", self.version)));
        }
        if self.frame_ms != 125 {
            return Err(format_err(format!("frame_ms must be 125, got {}", self.frame_ms)));
        }
        if self.n_bands == 0 || self.band_centers_hz.len() != self.n_bands as usize {
            return Err(format_err("band count does not match band centers"));
        }
        if self.band_centers_hz.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(format_err("band centers must be strictly increasing"));
        }
        if self.sample_rate_hz == 0 {
            return Err(format_err("zero sample rate"));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(self.size());
        b.extend_from_slice(&self.magic);
        b.extend_from_slice(&self.version.to_le_bytes());
        b.extend_from_slice(&self.sample_rate_hz.to_le_bytes());
        b.extend_from_slice(&self.frame_ms.to_le_bytes());
        b.extend_from_slice(&self.n_bands.to_le_bytes());
        for c in &self.band_centers_hz {
            b.extend_from_slice(&c.to_le_bytes());
        }
        b.extend_from_slice(&self.calibration_db.to_le_bytes());
        b.extend_from_slice(&self.start_time_unix_ms.to_le_bytes());
        b
    }

    pub fn decode<R: Read>(r: &mut R) -> Result<Self> {
        fn take<const N: usize, R: Read>(r: &mut R, what: &str) -> Result<[u8; N]> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf)
                .map_err(|_| format_err(format!("header truncated in {what}")))?;
            Ok(buf)
        }
        let magic = take::<4, _>(r, "magic")?;
        if magic != MAGIC {
            return Err(format_err(format!("bad magic {magic:?}")));
        }
        let version = u16::from_le_bytes(take(r, "version")?);
        if version != VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let sample_rate_hz = u32::from_le_bytes(take(r, "sample_rate_hz")?);
        let frame_ms = u16::from_le_bytes(take(r, "frame_ms")?);
        let n_bands = u16::from_le_bytes(take(r, "n_bands")?);
        let band_centers_hz = (0..n_bands)
            .map(|_| take(r, "band_centers_hz").map(f32::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        let calibration_db = f32::from_le_bytes(take(r, "calibration_db")?);
        let start_time_unix_ms = u64::from_le_bytes(take(r, "start_time_unix_ms")?);
        let header = Self {
            magic,
            version,
            sample_rate_hz,
            frame_ms,
            n_bands,
            band_centers_hz,
            calibration_db,
            start_time_unix_ms,
        };
        header.validate()?;
        Ok(header)
    }

    /// Rebuilds the analysis profile described by the header.
    pub fn filterbank_spec(&self) -> Result<FilterbankSpec> {
        let bands = self
            .band_centers_hz
            .iter()
            .map(|&c| BandDefinition::from_center(c as f64))
            .collect::<Result<Vec<_>>>()?;
        FilterbankSpec::new(self.sample_rate_hz, self.frame_ms as u32, bands)
    }
}

/// Appends frames to a `.tob` file, flushing after each one so a power cut
/// loses at most the frame being written.
pub struct TobWriter {
    out: BufWriter<File>,
    header: TobHeader,
    frames: u64,
}

impl TobWriter {
    pub fn create(path: impl AsRef<Path>, header: TobHeader) -> Result<Self> {
        header.validate()?;
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&header.encode())?;
        out.flush()?;
        Ok(Self {
            out,
            header,
            frames: 0,
        })
    }

    pub fn header(&self) -> &TobHeader {
        &self.header
    }

    pub fn frames_written(&self) -> u64 {
        self.frames
    }

    pub fn bytes_written(&self) -> u64 {
        self.header.size() as u64 + self.frames * self.header.frame_bytes() as u64
    }

    pub fn append_frame(&mut self, frame: &ThirdOctaveFrame) -> Result<()> {
        let powers: Vec<f32> = frame.band_power.iter().map(|&p| p as f32).collect();
        self.append_raw(&powers)
    }

    /// Appends already-quantized band powers.
    pub fn append_raw(&mut self, powers: &[f32]) -> Result<()> {
        if powers.len() != self.header.n_bands as usize {
            return Err(Error::InvalidArgument(format!(
                "frame has {} bands, file has {}",
                powers.len(),
                self.header.n_bands
            )));
        }
        if powers.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite band power".into()));
        }
        let mut buf = Vec::with_capacity(powers.len() * 4);
        for p in powers {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        self.out.write_all(&buf)?;
        self.out.flush()?;
        self.frames += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        self.out.flush()?;
        self.out.get_ref().sync_all()?;
        Ok(self.frames)
    }
}

/// Raw contents of a `.tob` file.
#[derive(Debug, Clone, PartialEq)]
pub struct TobFile {
    pub header: TobHeader,
    pub frames: Vec<Vec<f32>>,
    /// Bytes of a trailing partial frame that were discarded.
    pub torn_bytes: usize,
}

impl TobFile {
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let header = TobHeader::decode(&mut cursor)?;
        let fb = header.frame_bytes();
        let torn_bytes = cursor.len() % fb;
        if torn_bytes != 0 {
            log::warn!("dropping {torn_bytes} bytes of a partially written frame");
        }
        let frames = cursor
            .chunks_exact(fb)
            .map(|chunk| {
                chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect()
            })
            .collect();
        Ok(Self {
            header,
            frames,
            torn_bytes,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    pub fn into_spectrogram(self) -> Result<ThirdOctaveSpectrogram> {
        let spec = self.header.filterbank_spec()?;
        let mut tob = ThirdOctaveSpectrogram::new(spec, self.header.start_time_unix_ms as i64);
        for (i, f) in self.frames.into_iter().enumerate() {
            tob.push(ThirdOctaveFrame {
                frame_index: i as u64,
                band_power: f.into_iter().map(f64::from).collect(),
            })?;
        }
        Ok(tob)
    }
}

/// Reads a `.tob` file as a spectrogram, dropping any torn trailing frame.
pub fn read_file(path: impl AsRef<Path>) -> Result<ThirdOctaveSpectrogram> {
    TobFile::read(path)?.into_spectrogram()
}

/// Writes a whole spectrogram. Returns the number of bytes written.
pub fn write_file(
    path: impl AsRef<Path>,
    tob: &ThirdOctaveSpectrogram,
    calibration_db: f32,
) -> Result<u64> {
    let header = TobHeader::for_spec(&tob.spec, tob.start_time_ms.max(0) as u64, calibration_db);
    let mut w = TobWriter::create(path, header)?;
    for f in &tob.frames {
        w.append_frame(f)?;
    }
    let bytes = w.bytes_written();
    w.finish()?;
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> TobHeader {
        TobHeader::for_spec(&FilterbankSpec::standard(), 1_700_000_000_000, 94.0)
    }

    #[test]
    fn standard_header_is_142_bytes() {
        assert_eq!(header().size(), 142);
        assert_eq!(header().encode().len(), 142);
    }

    #[test]
    fn header_round_trip() {
        let h = header();
        let bytes = h.encode();
        assert_eq!(TobHeader::decode(&mut bytes.as_slice()).unwrap(), h);
        assert_eq!(h.filterbank_spec().unwrap(), FilterbankSpec::standard());
    }

    #[test]
    fn header_errors() {
        let mut bytes = header().encode();
        assert!(TobHeader::decode(&mut &bytes[..100]).is_err());
        bytes[4] = 9;
        let e = TobHeader::decode(&mut bytes.as_slice()).unwrap_err();
        assert!(e.to_string().contains("version"));
        bytes[0] = b'X';
        let e = TobHeader::decode(&mut bytes.as_slice()).unwrap_err();
        assert!(e.to_string().contains("magic"));
    }

    #[test]
    fn unsorted_centers_rejected() {
        let mut h = header();
        h.band_centers_hz.swap(3, 4);
        assert!(h.validate().is_err());
    }
}
