//! Third-octave analysis, storage, transcoding and detection for
//! privacy-preserving room acoustics monitoring.

pub mod classify;
pub mod codec;
pub mod config;
pub mod corpus;
pub mod distill;
pub mod dsp;
mod error;
pub mod mel;
pub mod pipeline;
pub mod render;
pub mod report;
pub mod scenario;
pub mod wav;

pub use error::{Error, Result};
