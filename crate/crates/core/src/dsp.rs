//! STFT analysis/synthesis and spectral features.
//!
//! The whole pipeline runs on one fixed analysis setup: Hann window of 400
//! samples, hop 100, FFT size 400, centered (reflect-padded) framing at
//! 16 kHz. That gives F = 201 frequency bins and T = floor(len/hop) + 1
//! frames for any input length.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::{Waveform, TARGET_SAMPLE_RATE};
use crate::error::{Error, Result};

/// Analysis parameters. The defaults are the only supported configuration;
/// they are carried as data so spectrogram consumers can validate shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub win_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub centered: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            win_len: 400,
            hop: 100,
            fft_size: 400,
            centered: true,
        }
    }
}

impl StftConfig {
    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn n_frames(&self, source_len: usize) -> usize {
        source_len / self.hop + 1
    }

    fn validate(&self) {
        assert!(self.win_len > 0 && self.hop > 0);
        assert_eq!(self.win_len, self.fft_size, "window must fill the FFT");
        assert_eq!(self.win_len % self.hop, 0, "hop must divide the window (COLA)");
        assert!(self.centered, "only centered framing is supported");
    }
}

/// Complex time-frequency matrix, frames x bins, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Vec<Complex<f64>>,
    n_frames: usize,
    n_bins: usize,
    cfg: StftConfig,
    source_len: usize,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn from_parts(
        data: Vec<Complex<f64>>,
        n_frames: usize,
        n_bins: usize,
        cfg: StftConfig,
        source_len: usize,
        sample_rate: u32,
    ) -> Self {
        assert_eq!(data.len(), n_frames * n_bins);
        Self {
            data,
            n_frames,
            n_bins,
            cfg,
            source_len,
            sample_rate,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn cfg(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frame(&self, t: usize) -> &[Complex<f64>] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn at(&self, t: usize, f: usize) -> Complex<f64> {
        self.data[t * self.n_bins + f]
    }

    pub fn data(&self) -> &[Complex<f64>] {
        &self.data
    }

    pub fn same_shape(&self, other: &Spectrogram) -> bool {
        self.n_frames == other.n_frames && self.n_bins == other.n_bins
    }
}

/// Dense real matrix, rows x cols, row-major. Used for magnitudes, powers and
/// mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn from_vec(data: Vec<f64>, rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { data, rows, cols }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Periodic Hann window, the COLA-friendly variant for hop = len/4.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// Index into `x` with reflection at both ends (no edge repetition, bounces
/// as needed so any pad width works for any length >= 1).
fn reflect_index(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let mut k = i.rem_euclid(period);
    if k >= n as i64 {
        k = period - k;
    }
    k as usize
}

/// Short-time Fourier transform with centered framing.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Spectrogram {
    cfg.validate();
    assert_eq!(
        w.sample_rate(),
        TARGET_SAMPLE_RATE,
        "stft expects 16 kHz input; resample first"
    );

    let x = w.samples();
    let n = x.len();
    let pad = cfg.win_len / 2;
    let n_frames = cfg.n_frames(n);
    let n_bins = cfg.n_bins();
    let window = hann(cfg.win_len);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.fft_size);

    let mut data = Vec::with_capacity(n_frames * n_bins);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    for t in 0..n_frames {
        let start = t as i64 * cfg.hop as i64 - pad as i64;
        for (k, slot) in buf.iter_mut().enumerate() {
            let v = x[reflect_index(start + k as i64, n)];
            *slot = Complex::new(v * window[k], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend_from_slice(&buf[..n_bins]);
    }

    Spectrogram::from_parts(data, n_frames, n_bins, *cfg, n, w.sample_rate())
}

/// Inverse STFT by weighted overlap-add with squared-window normalization,
/// trimmed to the recorded source length.
pub fn istft(s: &Spectrogram) -> Result<Waveform> {
    let cfg = s.cfg();
    cfg.validate();
    if s.source_len() == 0 {
        return Err(Error::InvalidConfig(
            "spectrogram has no source length; cannot invert".into(),
        ));
    }

    let pad = cfg.win_len / 2;
    let padded_len = s.source_len() + 2 * pad;
    let window = hann(cfg.win_len);

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(cfg.fft_size);

    let mut acc = vec![0.0f64; padded_len];
    let mut wsum = vec![0.0f64; padded_len];
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); ifft.get_inplace_scratch_len()];

    for t in 0..s.n_frames() {
        let frame = s.frame(t);
        buf[..s.n_bins()].copy_from_slice(frame);
        // Rebuild the conjugate-symmetric upper half for a real output.
        for k in s.n_bins()..cfg.fft_size {
            buf[k] = frame[cfg.fft_size - k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);

        let offset = t * cfg.hop;
        for k in 0..cfg.win_len {
            let i = offset + k;
            if i < padded_len {
                acc[i] += buf[k].re / cfg.fft_size as f64 * window[k];
                wsum[i] += window[k] * window[k];
            }
        }
    }

    let samples: Vec<f64> = (pad..pad + s.source_len())
        .map(|i| acc[i] / wsum[i].max(1e-8))
        .collect();
    Waveform::new(samples, s.sample_rate())
}

/// Element-wise complex modulus of a spectrogram.
pub fn magnitude(s: &Spectrogram) -> Matrix {
    let data = s.data().iter().map(|c| c.norm()).collect();
    Matrix::from_vec(data, s.n_frames(), s.n_bins())
}

/// Element-wise power (squared modulus).
pub fn power(s: &Spectrogram) -> Matrix {
    let data = s.data().iter().map(|c| c.norm_sqr()).collect();
    Matrix::from_vec(data, s.n_frames(), s.n_bins())
}

/// Root-mean-square of a sample slice.
pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt()
}

/// Log-mel energies, frames x mel bins.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFeatureSeq {
    pub frames: Matrix,
}

impl MelFeatureSeq {
    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn n_mels(&self) -> usize {
        self.frames.cols()
    }
}

pub const MEL_BINS: usize = 64;
pub const LOG_FLOOR: f64 = 1e-10;

/// Triangular mel filterbank on the HTK scale, 0 to 8 kHz, rows normalized to
/// unit weight so a flat power spectrum maps to a flat mel profile.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// mel bins x fft bins, row-major.
    weights: Matrix,
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_bins: usize, sample_rate: u32) -> Self {
        assert!(n_mels >= 1);
        let f_max = sample_rate as f64 / 2.0;
        let mel_max = hz_to_mel(f_max);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
            .collect();
        // Bin k sits at k * rate / fft_size; n_bins = fft_size/2 + 1.
        let bin_hz = sample_rate as f64 / (2 * (n_bins - 1)) as f64;

        let mut weights = Matrix::zeros(n_mels, n_bins);
        for m in 0..n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = weights.row_mut(m);
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                if f > lo && f < mid {
                    *w = (f - lo) / (mid - lo);
                } else if (f - mid).abs() < 1e-9 {
                    *w = 1.0;
                } else if f > mid && f < hi {
                    *w = (hi - f) / (hi - mid);
                }
            }
            let sum: f64 = weights.row(m).iter().sum();
            assert!(sum > 0.0, "mel row {m} has no support");
            for w in weights.row_mut(m) {
                *w /= sum;
            }
        }
        Self { weights }
    }

    pub fn n_mels(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// Apply to one power frame.
    pub fn apply(&self, power_frame: &[f64], out: &mut [f64]) {
        assert_eq!(power_frame.len(), self.weights.cols());
        assert_eq!(out.len(), self.weights.rows());
        for (m, slot) in out.iter_mut().enumerate() {
            *slot = self
                .weights
                .row(m)
                .iter()
                .zip(power_frame)
                .map(|(w, p)| w * p)
                .sum();
        }
    }
}

/// Log-mel features of a spectrogram: filterbank on the power spectrogram,
/// then natural log with a fixed floor.
pub fn log_mel(s: &Spectrogram, n_mels: usize) -> MelFeatureSeq {
    let fb = MelFilterbank::new(n_mels, s.n_bins(), s.sample_rate());
    log_mel_with(s, &fb)
}

pub fn log_mel_with(s: &Spectrogram, fb: &MelFilterbank) -> MelFeatureSeq {
    let pw = power(s);
    let mut frames = Matrix::zeros(s.n_frames(), fb.n_mels());
    let mut mel = vec![0.0; fb.n_mels()];
    for t in 0..s.n_frames() {
        fb.apply(pw.row(t), &mut mel);
        for (m, &e) in mel.iter().enumerate() {
            frames.row_mut(t)[m] = e.max(LOG_FLOOR).ln();
        }
    }
    MelFeatureSeq { frames }
}
