//! Blind single-channel speech dereverberation with convolutive
//! nonnegative matrix factorization under switching beta-divergences.
//!
//! A dictionary of spectral atoms is learned from the reverberant power
//! spectrogram with one divergence, then held fixed while activations and
//! per-band reverberation kernels are fitted with another. The ratio of the
//! dry model to the reverberant model is applied as a gain and the signal is
//! resynthesized with the observed phase.
//!
//! ```no_run
//! use beta_dereverb::audio::{read_wav, write_wav};
//! use beta_dereverb::pipeline::{dereverberate, DereverbConfig};
//!
//! let input = read_wav("reverberant.wav")?;
//! let result = dereverberate(&input, &DereverbConfig::default())?;
//! write_wav(&result.restored_signal, "restored.wav")?;
//! # Ok::<(), beta_dereverb::error::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod cli;
pub mod divergence;
pub mod dsp;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod plot;
pub mod stft;
pub mod updates;
