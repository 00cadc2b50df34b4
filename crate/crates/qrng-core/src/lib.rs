//! Post-detection pipeline of a heterodyne source-device-independent QRNG.
//!
//! The crate covers everything downstream of the ADC: a parametric synthetic
//! source (or QRAW capture ingestion), the DSP conditioning chain (high-pass,
//! sine mixing, low-pass, rational resampling), LO-power calibration,
//! certified conditional min-entropy, Toeplitz extraction sized by the
//! leftover hashing lemma, and an embedded statistical test battery.

pub mod bits;
pub mod calibration;
pub mod dsp;
pub mod entropy;
pub mod error;
pub mod extractor;
pub mod hash;
pub mod pipeline;
pub mod signal;
pub mod stats;
pub mod stattests;

pub use bits::BitBuffer;
pub use error::{Error, Result};
pub use signal::qraw::{read_capture, write_capture, CaptureMeta, CaptureReader, CaptureWriter};
pub use signal::{SampleBlock, SourceParams, SyntheticSource};
