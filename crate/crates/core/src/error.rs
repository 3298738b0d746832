use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {detail}")]
    UnsupportedWav { path: PathBuf, detail: String },

    #[error("{path}: audio stream contains no samples")]
    EmptyAudio { path: PathBuf },

    #[error("unsupported sample rate {rate} Hz; expected one of 8000, 16000, 22050, 44100, 48000")]
    UnsupportedRate { rate: u32 },

    #[error("waveform must contain at least one sample")]
    EmptyWaveform,

    #[error("waveform contains non-finite samples")]
    NonFiniteSamples,

    #[error("spectrogram shapes differ: {a_frames}x{a_bins} vs {b_frames}x{b_bins}")]
    ShapeMismatch {
        a_frames: usize,
        a_bins: usize,
        b_frames: usize,
        b_bins: usize,
    },

    #[error("zero-energy {which} signal")]
    ZeroEnergy { which: &'static str },

    #[error("waveform lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("manifest {path} contains no records")]
    EmptyManifest { path: PathBuf },

    #[error("manifest {path}, line {line}: {detail}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("record {id} has no emotion label")]
    MissingLabel { id: String },

    #[error("no enhanced audio named {id}.wav in {dir}")]
    MissingExternal { id: String, dir: PathBuf },

    #[error("scorer has {scorer} weights but feature has {feature} entries")]
    DimensionMismatch { scorer: usize, feature: usize },

    #[error("noise estimation needs at least {min} frames, got {got}")]
    TooFewFrames { got: usize, min: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("batch of {got} is too small; the concordance loss needs at least 2 samples")]
    BatchTooSmall { got: usize },

    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },

    #[error("missing prerequisite checkpoint {path}; run the earlier phase first")]
    MissingCheckpoint { path: PathBuf },

    #[error("empty {what}")]
    EmptyInput { what: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
