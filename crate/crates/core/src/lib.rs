//! Noise-robust speech emotion recognition, desk scale.
//!
//! The pipeline: speech enhancement in the STFT domain, an SNR-level score
//! from the cosine similarity between original and enhanced spectrograms, a
//! clamped-score blend of original and enhanced waveforms, a noise-only gate,
//! and a multitask emotion head (10 categories plus arousal/valence/dominance)
//! trained in three phases. A synthetic data generator and evaluation harness
//! stand in for proprietary corpora.
//!
//! All randomness flows from explicit 64-bit seeds through ChaCha8 streams,
//! so every training run and synthesized corpus is bit-reproducible.

pub mod audio;
pub mod checkpoint;
pub mod dsp;
pub mod emotion;
pub mod enhance;
pub mod error;
pub mod fsio;
pub mod manifest;
pub mod mixing;
pub mod pipeline;
pub mod reconstitution;
pub mod rng;
pub mod snr;
pub mod synth;
pub mod train;

pub use audio::{read_wav, resample_to_16k, write_wav, Waveform, WavEncoding, TARGET_SAMPLE_RATE};
pub use dsp::{istft, log_mel, magnitude, rms, stft, MelFeatureSeq, Spectrogram, StftConfig};
pub use error::{Error, Result};
