//! Multiuser time-reversal (TR) and circular-shift time-reversal (CSTR)
//! precoding over discrete multipath channels.
//!
//! The pipeline is:
//!
//! 1. [`channel`]: build, generate or ingest channel impulse responses.
//! 2. [`precoder`]: time-reverse, normalize and circularly shift them into
//!    transmit prefilters, then combine several users into one unit-power
//!    transmit waveform.
//! 3. [`propagation`]: push the composite waveform through each user's
//!    channel and split the result into intended signal and interference.
//! 4. [`metrics`]: read the Signal/Image peaks, SIR at the decision instant
//!    and empirical CDFs.
//! 5. [`scenario`]: peak-power-vs-shift and multiuser SIR experiments over
//!    channel ensembles.
//!
//! [`cli`] drives the experiments from a TOML run configuration and writes
//! CSV/JSON outputs.
//!
//! ```
//! use cstr_sim::channel::Cir;
//! use cstr_sim::metrics::signal_image_split;
//! use cstr_sim::precoder::ShiftSpec;
//!
//! let h = Cir::new("demo", vec![1.0.into(); 4], 1e-9).unwrap();
//! let (signal, image) = signal_image_split(&h, ShiftSpec::right(1)).unwrap();
//! assert!((signal - 1.5).abs() < 1e-12);
//! assert!((image - 0.5).abs() < 1e-12);
//! ```

pub mod channel;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod precoder;
pub mod propagation;
pub mod scenario;

pub use error::{Error, Result};
pub use num_complex::Complex64;
