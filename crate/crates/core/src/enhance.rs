//! The speech-enhancement stage: noisy spectrogram in, enhanced spectrogram
//! out.
//!
//! Ships a classical spectral-subtraction baseline and a decision-directed
//! Wiener variant, plus a file-based adapter so any externally produced
//! enhanced audio (one `<utterance_id>.wav` per input) can stand in for the
//! built-in enhancer. Phase is always reused from the noisy input. The stage
//! is stateless: enhancing never depends on earlier calls.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, Waveform, TARGET_SAMPLE_RATE};
use crate::dsp::{istft, magnitude, stft, Matrix, Spectrogram, StftConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnhancerKind {
    SpectralSubtraction,
    Wiener,
    External,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnhancerConfig {
    pub kind: EnhancerKind,
    /// Over-subtraction factor.
    pub alpha: f64,
    /// Spectral floor as a fraction of the input magnitude.
    pub beta: f64,
    /// Fraction of lowest-energy frames used for the noise profile.
    pub noise_quantile: f64,
    pub external_dir: Option<PathBuf>,
}

impl Default for EnhancerConfig {
    fn default() -> Self {
        Self {
            kind: EnhancerKind::SpectralSubtraction,
            alpha: 2.0,
            beta: 0.02,
            noise_quantile: 0.10,
            external_dir: None,
        }
    }
}

impl EnhancerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "oversubtraction alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(0.0 < self.beta && self.beta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "spectral floor beta must be in (0, 1), got {}",
                self.beta
            )));
        }
        if !(0.0 < self.noise_quantile && self.noise_quantile < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "noise quantile must be in (0, 0.5), got {}",
                self.noise_quantile
            )));
        }
        if self.kind == EnhancerKind::External && self.external_dir.is_none() {
            return Err(Error::InvalidConfig(
                "external enhancer needs external_dir".into(),
            ));
        }
        Ok(())
    }
}

pub const MIN_PROFILE_FRAMES: usize = 5;

/// Per-bin mean magnitude over the ceil(q*T) frames with the lowest total
/// energy. Those frames approximate noise-only regions when the signal has
/// quiet gaps.
pub fn estimate_noise_profile(mag: &Matrix, q: f64) -> Result<Vec<f64>> {
    let t = mag.rows();
    if t < MIN_PROFILE_FRAMES {
        return Err(Error::TooFewFrames {
            got: t,
            min: MIN_PROFILE_FRAMES,
        });
    }
    let mut order: Vec<usize> = (0..t).collect();
    let energy: Vec<f64> = (0..t)
        .map(|r| mag.row(r).iter().map(|m| m * m).sum::<f64>())
        .collect();
    order.sort_by(|&a, &b| energy[a].total_cmp(&energy[b]).then(a.cmp(&b)));
    let k = ((q * t as f64).ceil() as usize).clamp(1, t);

    let mut profile = vec![0.0; mag.cols()];
    for &r in &order[..k] {
        for (p, m) in profile.iter_mut().zip(mag.row(r)) {
            *p += m;
        }
    }
    for p in &mut profile {
        *p /= k as f64;
    }
    Ok(profile)
}

/// Magnitude subtraction against a fixed profile:
/// out = max(|S| - alpha * profile, beta * |S|), phase kept from the input.
pub fn subtract_with_profile(s: &Spectrogram, cfg: &EnhancerConfig, profile: &[f64]) -> Spectrogram {
    assert_eq!(profile.len(), s.n_bins());
    let mut data = Vec::with_capacity(s.n_frames() * s.n_bins());
    for t in 0..s.n_frames() {
        for (f, &c) in s.frame(t).iter().enumerate() {
            let m = c.norm();
            let target = (m - cfg.alpha * profile[f]).max(cfg.beta * m);
            data.push(if m > 0.0 { c * (target / m) } else { c });
        }
    }
    Spectrogram::from_parts(
        data,
        s.n_frames(),
        s.n_bins(),
        *s.cfg(),
        s.source_len(),
        s.sample_rate(),
    )
}

/// Decision-directed Wiener gain per bin: xi estimated with smoothing 0.98,
/// gain = xi / (1 + xi).
fn wiener_with_profile(s: &Spectrogram, profile: &[f64]) -> Spectrogram {
    const SMOOTHING: f64 = 0.98;
    let n_bins = s.n_bins();
    let mut data = Vec::with_capacity(s.n_frames() * n_bins);
    let mut prev_term = vec![1.0f64; n_bins]; // G^2 * gamma from the last frame
    for t in 0..s.n_frames() {
        for (f, &c) in s.frame(t).iter().enumerate() {
            let noise_power = profile[f] * profile[f];
            if noise_power <= 0.0 {
                data.push(c);
                continue;
            }
            let gamma = c.norm_sqr() / noise_power;
            let xi = SMOOTHING * prev_term[f] + (1.0 - SMOOTHING) * (gamma - 1.0).max(0.0);
            let gain = xi / (1.0 + xi);
            prev_term[f] = gain * gain * gamma;
            data.push(c * gain);
        }
    }
    Spectrogram::from_parts(
        data,
        s.n_frames(),
        n_bins,
        *s.cfg(),
        s.source_len(),
        s.sample_rate(),
    )
}

/// A configured, stateless enhancer.
#[derive(Debug, Clone)]
pub struct Enhancer {
    cfg: EnhancerConfig,
}

impl Enhancer {
    pub fn new(cfg: EnhancerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn cfg(&self) -> &EnhancerConfig {
        &self.cfg
    }

    /// Enhance a spectrogram. `utt_id` is only needed by the external
    /// adapter, which loads `<external_dir>/<utt_id>.wav`.
    pub fn enhance(&self, s: &Spectrogram, utt_id: Option<&str>) -> Result<Spectrogram> {
        // Clips shorter than the profile minimum carry no usable noise
        // context; they pass through with a zero profile.
        let profile_or_zero = |s: &Spectrogram| -> Result<Vec<f64>> {
            if s.n_frames() < MIN_PROFILE_FRAMES {
                Ok(vec![0.0; s.n_bins()])
            } else {
                estimate_noise_profile(&magnitude(s), self.cfg.noise_quantile)
            }
        };
        match self.cfg.kind {
            EnhancerKind::SpectralSubtraction => {
                let profile = profile_or_zero(s)?;
                Ok(subtract_with_profile(s, &self.cfg, &profile))
            }
            EnhancerKind::Wiener => {
                let profile = profile_or_zero(s)?;
                Ok(wiener_with_profile(s, &profile))
            }
            EnhancerKind::External => {
                let dir = self.cfg.external_dir.as_ref().expect("validated");
                let id = utt_id.ok_or_else(|| Error::InvalidConfig(
                    "external enhancer needs an utterance id".into(),
                ))?;
                let path = dir.join(format!("{id}.wav"));
                if !path.exists() {
                    return Err(Error::MissingExternal {
                        id: id.to_string(),
                        dir: dir.clone(),
                    });
                }
                let w = read_wav(&path)?;
                if w.sample_rate() != TARGET_SAMPLE_RATE {
                    return Err(Error::UnsupportedWav {
                        path,
                        detail: format!(
                            "external enhanced audio must be 16 kHz, got {}",
                            w.sample_rate()
                        ),
                    });
                }
                let enh = stft(&w, s.cfg());
                if !enh.same_shape(s) {
                    return Err(Error::ShapeMismatch {
                        a_frames: s.n_frames(),
                        a_bins: s.n_bins(),
                        b_frames: enh.n_frames(),
                        b_bins: enh.n_bins(),
                    });
                }
                Ok(enh)
            }
        }
    }

    /// Full waveform path: returns the enhanced waveform (same length as the
    /// input) plus both spectrograms for downstream similarity scoring.
    pub fn enhance_waveform(
        &self,
        w: &Waveform,
        utt_id: Option<&str>,
    ) -> Result<(Waveform, Spectrogram, Spectrogram)> {
        let orig = stft(w, &StftConfig::default());
        let enh = self.enhance(&orig, utt_id)?;
        let w_en = istft(&enh)?;
        debug_assert_eq!(w_en.len(), w.len());
        Ok((w_en, orig, enh))
    }
}
