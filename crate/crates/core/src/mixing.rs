//! Additive noise contamination at exact target SNR levels.
//!
//! SNR is defined on full-utterance RMS: 20*log10(rms(speech)/rms(noise)).
//! The noise is length-matched to the speech (looped when shorter, seeded
//! random crop when longer), scaled, and added. If the sum clips, the whole
//! mixture and both stored addends are scaled together so the target SNR is
//! preserved exactly.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, resample_to_16k, write_wav, WavEncoding, Waveform, TARGET_SAMPLE_RATE};
use crate::dsp::rms;
use crate::error::{Error, Result};
use crate::manifest::{Kind, ManifestRecord};
use crate::rng::{derive_seed, rng_for};

/// How one mixture was made. `seed` fixes the noise crop so the mixture can
/// be reproduced bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub target_snr_db: f64,
    pub noise_path: PathBuf,
    pub seed: u64,
}

/// Gain to apply to the noise so the mixture hits the target SNR:
/// g = rms(speech)/rms(noise) * 10^(-snr/20).
pub fn noise_gain(speech: &Waveform, noise: &Waveform, target_snr_db: f64) -> Result<f64> {
    let rs = rms(speech.samples());
    let rn = rms(noise.samples());
    if rs == 0.0 {
        return Err(Error::ZeroEnergy { which: "speech" });
    }
    if rn == 0.0 {
        return Err(Error::ZeroEnergy { which: "noise" });
    }
    Ok(rs / rn * 10f64.powf(-target_snr_db / 20.0))
}

/// Measured SNR between two stored addends, in dB.
pub fn measured_snr_db(speech: &[f64], noise: &[f64]) -> f64 {
    20.0 * (rms(speech) / rms(noise)).log10()
}

/// A mixture with its scaled components, for exact SNR verification.
#[derive(Debug, Clone)]
pub struct MixParts {
    pub speech: Vec<f64>,
    pub noise: Vec<f64>,
    pub mixture: Waveform,
}

/// Loop or crop `noise` to exactly `len` samples.
fn length_match(noise: &[f64], len: usize, seed: u64) -> Vec<f64> {
    if noise.len() == len {
        return noise.to_vec();
    }
    if noise.len() < len {
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            let take = (len - out.len()).min(noise.len());
            out.extend_from_slice(&noise[..take]);
        }
        return out;
    }
    let mut rng = rng_for(seed);
    let start = rng.random_range(0..=noise.len() - len);
    noise[start..start + len].to_vec()
}

pub fn mix_components(speech: &Waveform, noise: &Waveform, spec: &MixSpec) -> Result<MixParts> {
    if speech.sample_rate() != TARGET_SAMPLE_RATE || noise.sample_rate() != TARGET_SAMPLE_RATE {
        return Err(Error::InvalidConfig(format!(
            "mixing needs 16 kHz inputs, got {} and {}",
            speech.sample_rate(),
            noise.sample_rate()
        )));
    }

    let matched = length_match(noise.samples(), speech.len(), spec.seed);
    let matched_w = Waveform::new(matched, TARGET_SAMPLE_RATE)?;
    let g = noise_gain(speech, &matched_w, spec.target_snr_db)?;

    let mut speech_out: Vec<f64> = speech.samples().to_vec();
    let mut noise_out: Vec<f64> = matched_w.samples().iter().map(|v| v * g).collect();
    let mut mixture: Vec<f64> = speech_out
        .iter()
        .zip(&noise_out)
        .map(|(s, n)| s + n)
        .collect();

    // Peak-normalize the whole mixture; scaling both components equally
    // keeps the SNR intact.
    let peak = mixture.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        let k = 0.99 / peak;
        for v in &mut mixture {
            *v *= k;
        }
        for v in &mut speech_out {
            *v *= k;
        }
        for v in &mut noise_out {
            *v *= k;
        }
    }

    Ok(MixParts {
        speech: speech_out,
        noise: noise_out,
        mixture: Waveform::new(mixture, TARGET_SAMPLE_RATE)?,
    })
}

/// Contaminate speech with noise per `spec` and return the mixture.
pub fn mix(speech: &Waveform, noise: &Waveform, spec: &MixSpec) -> Result<Waveform> {
    Ok(mix_components(speech, noise, spec)?.mixture)
}

/// Synthesize one mixture per speech record, pairing each with a
/// seeded-random noise record and a seeded-random SNR from `snr_levels`.
/// Mixture WAVs (float32) are written under `out_dir`; labels and split are
/// copied from the speech record. Per-record seeds are derived from `seed`
/// and the record index, so the result is order-independent.
pub fn synthesize_corpus(
    speech_records: &[ManifestRecord],
    noise_records: &[ManifestRecord],
    snr_levels: &[f64],
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<ManifestRecord>> {
    if speech_records.is_empty() {
        return Err(Error::EmptyInput {
            what: "speech manifest",
        });
    }
    if noise_records.is_empty() {
        return Err(Error::EmptyInput {
            what: "noise manifest",
        });
    }
    if snr_levels.is_empty() {
        return Err(Error::EmptyInput { what: "SNR levels" });
    }
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Write {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let mut out = Vec::with_capacity(speech_records.len());
    for (i, sp) in speech_records.iter().enumerate() {
        let mut rng = rng_for(derive_seed(seed, i as u64));
        let noise_rec = &noise_records[rng.random_range(0..noise_records.len())];
        let snr = snr_levels[rng.random_range(0..snr_levels.len())];
        let mix_seed: u64 = rng.random();

        let speech = resample_to_16k(&read_wav(&sp.path)?)?;
        let noise = resample_to_16k(&read_wav(&noise_rec.path)?)?;
        let spec = MixSpec {
            target_snr_db: snr,
            noise_path: noise_rec.path.clone(),
            seed: mix_seed,
        };
        let mixture = mix(&speech, &noise, &spec)?;

        let name = format!("mix_{}_{}.wav", sp.id(), format_snr(snr));
        let path = out_dir.join(name);
        write_wav(&mixture, &path, WavEncoding::Float32)?;

        let mut rec = ManifestRecord::new(path, sp.split, Kind::Mixture);
        rec.category = sp.category;
        rec.arousal = sp.arousal;
        rec.valence = sp.valence;
        rec.dominance = sp.dominance;
        rec.noise_path = Some(spec.noise_path.clone());
        rec.snr_db = Some(snr);
        rec.seed = Some(mix_seed);
        out.push(rec);
    }
    Ok(out)
}

fn format_snr(snr: f64) -> String {
    if (snr - snr.round()).abs() < 1e-9 {
        format!("{}db", snr.round() as i64)
    } else {
        format!("{:.1}db", snr).replace('.', "p")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, TARGET_SAMPLE_RATE).unwrap()
    }

    fn random_wave(len: usize, seed: u64, amp: f64) -> Waveform {
        let mut rng = rng_for(seed);
        wave((0..len).map(|_| rng.random_range(-amp..amp)).collect())
    }

    #[test]
    fn gain_for_equal_rms_at_zero_db_is_one() {
        let s = wave(vec![0.3; 100]);
        let n = wave(vec![-0.3; 100]);
        assert!((noise_gain(&s, &n, 0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gain_for_equal_rms_at_twenty_db_is_tenth() {
        let s = wave(vec![0.25; 64]);
        let n = wave(vec![0.25; 64]);
        assert!((noise_gain(&s, &n, 20.0).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn gain_formula_and_measured_snr_agree() {
        // rms(speech)=0.2, rms(noise)=0.1, 6 dB target -> g = 2*10^(-0.3).
        let s = wave(vec![0.2; 128]);
        let n = wave(vec![0.1; 128]);
        let g = noise_gain(&s, &n, 6.0).unwrap();
        assert!((g - 2.0 * 10f64.powf(-0.3)).abs() < 1e-12);

        let scaled: Vec<f64> = n.samples().iter().map(|v| v * g).collect();
        let snr = measured_snr_db(s.samples(), &scaled);
        assert!((snr - 6.0).abs() < 1e-9, "snr {snr}");
    }

    #[test]
    fn zero_energy_inputs_are_rejected() {
        let z = wave(vec![0.0; 10]);
        let s = wave(vec![0.5; 10]);
        assert!(matches!(
            noise_gain(&z, &s, 0.0),
            Err(Error::ZeroEnergy { which: "speech" })
        ));
        assert!(matches!(
            noise_gain(&s, &z, 0.0),
            Err(Error::ZeroEnergy { which: "noise" })
        ));
    }

    #[test]
    fn mix_hits_target_snr_exactly() {
        let speech = random_wave(4_000, 21, 0.5);
        let noise = random_wave(6_000, 22, 0.4);
        for &snr in &[6.0, 10.0, 14.0] {
            let spec = MixSpec {
                target_snr_db: snr,
                noise_path: "n.wav".into(),
                seed: 7,
            };
            let parts = mix_components(&speech, &noise, &spec).unwrap();
            let got = measured_snr_db(&parts.speech, &parts.noise);
            assert!((got - snr).abs() < 1e-6, "target {snr} got {got}");
        }
    }

    #[test]
    fn peak_normalization_preserves_snr() {
        // Loud speech + loud noise at 0 dB must clip without normalization.
        let speech = wave(
            (0..2_000)
                .map(|i| 0.95 * (2.0 * std::f64::consts::PI * 220.0 * i as f64 / 16_000.0).sin())
                .collect(),
        );
        let noise = random_wave(2_000, 31, 0.9);
        let spec = MixSpec {
            target_snr_db: 0.0,
            noise_path: "n.wav".into(),
            seed: 3,
        };
        let parts = mix_components(&speech, &noise, &spec).unwrap();
        let peak = parts
            .mixture
            .samples()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak <= 0.99 + 1e-12);
        let got = measured_snr_db(&parts.speech, &parts.noise);
        assert!((got - 0.0).abs() < 1e-6, "snr {got}");
        // Mixture really is the sum of the stored addends.
        for i in 0..parts.mixture.len() {
            let want = parts.speech[i] + parts.noise[i];
            assert!((parts.mixture.samples()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn short_noise_is_looped_without_gaps() {
        let speech = random_wave(1_000, 41, 0.5);
        let noise = wave(vec![0.25; 300]);
        let spec = MixSpec {
            target_snr_db: 10.0,
            noise_path: "n.wav".into(),
            seed: 5,
        };
        let parts = mix_components(&speech, &noise, &spec).unwrap();
        // Constant noise looped: every scaled-noise sample equals the first.
        assert!(parts.noise.iter().all(|&v| (v - parts.noise[0]).abs() < 1e-15));
        assert_eq!(parts.noise.len(), 1_000);
    }

    #[test]
    fn same_seed_same_mixture() {
        let speech = random_wave(2_000, 51, 0.5);
        let noise = random_wave(9_000, 52, 0.4);
        let spec = MixSpec {
            target_snr_db: 6.0,
            noise_path: "n.wav".into(),
            seed: 99,
        };
        let a = mix(&speech, &noise, &spec).unwrap();
        let b = mix(&speech, &noise, &spec).unwrap();
        assert_eq!(a, b);
        let other = mix(
            &speech,
            &noise,
            &MixSpec {
                seed: 100,
                ..spec.clone()
            },
        )
        .unwrap();
        // A different crop seed gives a different crop (noise is longer than
        // speech, so the crop start matters).
        assert_ne!(a, other);
    }
}
