//! Waveform reconstitution: blend the original and enhanced waveforms by the
//! clamped SNR score, w_re = w_in * S' + w_en * (1 - S'), and gate noise-only
//! inputs. A clean signal (S' = 1) passes through untouched; a noise-only
//! signal (S' = 0) is fully replaced by its enhanced version.

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::snr::{classify_noise_only, SignalClass, SnrScore};

#[derive(Debug, Clone)]
pub struct ReconstitutionResult {
    pub w_re: Waveform,
    pub s_prime: f64,
    /// True when the score fell below the gate: no emotion prediction should
    /// be made for this input.
    pub gated: bool,
}

/// Blend per Eq-style convex combination; lengths must already match (the
/// enhancer's length-preserving contract guarantees this for pipeline use).
pub fn reconstitute(
    w_in: &Waveform,
    w_en: &Waveform,
    s: &SnrScore,
    threshold: f64,
) -> Result<ReconstitutionResult> {
    if w_in.len() != w_en.len() {
        return Err(Error::LengthMismatch {
            left: w_in.len(),
            right: w_en.len(),
        });
    }
    let s_prime = s.clamped;
    let samples: Vec<f64> = w_in
        .samples()
        .iter()
        .zip(w_en.samples())
        .map(|(a, b)| a * s_prime + b * (1.0 - s_prime))
        .collect();
    Ok(ReconstitutionResult {
        w_re: Waveform::new(samples, w_in.sample_rate())?,
        s_prime,
        gated: classify_noise_only(s, threshold) == SignalClass::NoiseOnly,
    })
}

/// Blend the raw sample buffers; used where the waveforms are already in hand
/// as slices (training inner loops).
pub fn blend_samples(w_in: &[f64], w_en: &[f64], s_prime: f64) -> Vec<f64> {
    w_in.iter()
        .zip(w_en)
        .map(|(a, b)| a * s_prime + b * (1.0 - s_prime))
        .collect()
}

/// CSV dump of (index, w_in, w_en, w_re) rows for waveform inspection.
pub fn waveform_dump_csv(w_in: &Waveform, w_en: &Waveform, w_re: &Waveform) -> String {
    let mut out = String::from("index,w_in,w_en,w_re\n");
    for i in 0..w_in.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i,
            w_in.samples()[i],
            w_en.samples()[i],
            w_re.samples()[i]
        ));
    }
    out
}
