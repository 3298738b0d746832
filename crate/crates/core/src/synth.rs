//! Synthetic desk-scale corpus: pseudo-speech with parameter-derived emotion
//! labels, plus white/pink/babble noise.
//!
//! Pseudo-speech is a harmonic series (pitch 80-300 Hz) under a formant-like
//! spectral envelope, amplitude-modulated at a 2-8 Hz syllabic rate with deep
//! troughs, plus a touch of aspiration noise. Labels are deterministic
//! functions of the generation parameters: modulation depth drives arousal,
//! pitch height drives valence, spectral tilt drives dominance, and the ten
//! categories are ten distinct formant templates. They are arbitrary but
//! learnable, which is all the toy emotion block needs.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;

use crate::audio::{write_wav, WavEncoding, Waveform, TARGET_SAMPLE_RATE};
use crate::dsp::rms;
use crate::error::{Error, Result};
use crate::manifest::{write_manifest, Kind, ManifestRecord, Split};
use crate::rng::{derive_seed, rng_for};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_speech: usize,
    pub n_noise: usize,
    pub min_dur_s: f64,
    pub max_dur_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_speech: 200,
            n_noise: 100,
            min_dur_s: 1.0,
            max_dur_s: 2.0,
        }
    }
}

/// Ten formant templates (F1, F2) in Hz, one per emotion category.
const TEMPLATES: [(f64, f64); 10] = [
    (380.0, 1150.0),
    (425.0, 1660.0),
    (470.0, 2170.0),
    (515.0, 2680.0),
    (560.0, 1490.0),
    (605.0, 2000.0),
    (650.0, 2510.0),
    (695.0, 1320.0),
    (740.0, 1830.0),
    (785.0, 2340.0),
];

const MAX_HARMONIC_HZ: f64 = 7_800.0;

/// Noise variants, in generation order; the name is embedded in each noise
/// file name so evaluation harnesses can stratify by kind.
pub const NOISE_KINDS: [&str; 3] = ["white", "pink", "babble"];

fn lorentz(f: f64, center: f64, bw: f64) -> f64 {
    1.0 / (1.0 + ((f - center) / bw).powi(2))
}

fn split_for(i: usize, n: usize) -> Split {
    let train_end = (n * 7).div_ceil(10);
    let val_end = (n * 85).div_ceil(100);
    if i < train_end {
        Split::Train
    } else if i < val_end {
        Split::Val
    } else {
        Split::Test
    }
}

fn duration_samples(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> usize {
    let dur = rng.random_range(cfg.min_dur_s..cfg.max_dur_s);
    (dur * TARGET_SAMPLE_RATE as f64) as usize
}

/// Raised-cosine edge taper, 20 ms.
fn apply_edge_taper(x: &mut [f64]) {
    let ramp = (TARGET_SAMPLE_RATE as usize / 50).min(x.len() / 2);
    for i in 0..ramp {
        let g = 0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos();
        x[i] *= g;
        let j = x.len() - 1 - i;
        x[j] *= g;
    }
}

fn normalize_peak(x: &mut [f64], target: f64) {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let k = target / peak;
        for v in x.iter_mut() {
            *v *= k;
        }
    }
}

/// Forward-backward one-pole smoothing; `tau` is the time constant in
/// samples. Zero-phase, so envelope edges soften without shifting.
fn smooth_in_place(x: &mut [f64], tau: usize) {
    let a = 1.0 - (-1.0 / tau as f64).exp();
    let mut state = x[0];
    for v in x.iter_mut() {
        state += a * (*v - state);
        *v = state;
    }
    let mut state = x[x.len() - 1];
    for v in x.iter_mut().rev() {
        state += a * (*v - state);
        *v = state;
    }
}

pub struct SpeechParams {
    pub category: u8,
    pub arousal: f64,
    pub valence: f64,
    pub dominance: f64,
}

/// Render one pseudo-speech utterance. Exposed so tests can build single
/// utterances without a whole corpus.
pub fn render_speech(rng: &mut ChaCha8Rng, category: u8, cfg: &SynthConfig) -> (Waveform, SpeechParams) {
    let n = duration_samples(rng, cfg);
    let f0 = rng.random_range(80.0..300.0);
    let am_rate = rng.random_range(2.0..8.0);
    let am_depth = rng.random_range(0.3..0.95);
    let am_phase = rng.random_range(0.0..2.0 * PI);
    let tilt = rng.random_range(0.0..1.0);
    let (t1, t2) = TEMPLATES[category as usize];
    let f1 = t1 * rng.random_range(0.985..1.015);
    let f2 = t2 * rng.random_range(0.985..1.015);
    let peak = rng.random_range(0.3..0.75);
    // Inter-phrase pauses: every utterance gets stretches of near-silence,
    // which is also what the enhancer's noise estimate feeds on.
    let pause_rate = rng.random_range(1.2..3.0);
    let pause_frac = rng.random_range(0.28..0.45);
    let pause_phase = rng.random_range(0.0..1.0);

    let fs = TARGET_SAMPLE_RATE as f64;
    let n_harm = ((MAX_HARMONIC_HZ / f0) as usize).max(1);
    let tilt_exp = 0.3 + 0.7 * tilt;

    // One phasor per harmonic; rotating it advances the oscillator without a
    // sin() per sample.
    let mut states: Vec<Complex<f64>> = Vec::with_capacity(n_harm);
    let mut steps: Vec<Complex<f64>> = Vec::with_capacity(n_harm);
    for k in 1..=n_harm {
        let freq = k as f64 * f0;
        let amp = (lorentz(freq, f1, 130.0)
            + lorentz(freq, f2, 180.0)
            + 0.5 * lorentz(freq, 2_900.0, 300.0)
            + 0.3 * lorentz(freq, 4_800.0, 700.0)
            + 0.1)
            * (k as f64).powf(-tilt_exp);
        let phase = rng.random_range(0.0..2.0 * PI);
        states.push(Complex::from_polar(amp, phase));
        steps.push(Complex::from_polar(1.0, 2.0 * PI * freq / fs));
    }

    // Slow pitch drift (a few percent) so harmonics wander across bins the
    // way natural intonation does.
    let drift_rate = rng.random_range(0.25..0.8);
    let drift_amt = rng.random_range(0.01..0.04);
    let drift_phase = rng.random_range(0.0..2.0 * PI);
    let mut voiced = vec![0.0f64; n];
    for (i, v) in voiced.iter_mut().enumerate() {
        let bend = 1.0 + drift_amt * (2.0 * PI * drift_rate * i as f64 / fs + drift_phase).sin();
        let mut sum = 0.0;
        for (k, s) in states.iter_mut().enumerate() {
            sum += s.im;
            let freq = (k + 1) as f64 * f0 * bend;
            *s *= Complex::from_polar(1.0, 2.0 * PI * freq / fs);
        }
        *v = sum;
    }
    let _ = steps;

    // Syllabic envelopes: voiced syllables on the crests, fricative-like
    // bursts in the inter-syllable dips, everything gated by the pause
    // pattern and smoothed to avoid clicks.
    let mut env = vec![0.0f64; n];
    let mut fric_env = vec![0.0f64; n];
    for i in 0..n {
        let u = 0.5 - 0.5 * (2.0 * PI * am_rate * i as f64 / fs + am_phase).cos();
        let d = (pause_rate * i as f64 / fs + pause_phase).fract();
        let gate = if d < pause_frac { 0.01 } else { 1.0 };
        env[i] = ((1.0 - am_depth) + am_depth * u.powf(1.5)) * gate;
        fric_env[i] = (1.0 - u).powi(2) * gate;
    }
    smooth_in_place(&mut env, 80);
    smooth_in_place(&mut fric_env, 80);

    // Aspiration plus fricative noise: highpassed white (first difference),
    // weak everywhere as breathiness, strong in the fricative slots.
    let voiced_rms = rms(&voiced);
    let fric_level = rng.random_range(0.55..0.75);
    let mut prev = 0.0;
    let mut hiss = vec![0.0f64; n];
    for a in hiss.iter_mut() {
        let w: f64 = rng.random_range(-1.0..1.0);
        *a = w - prev;
        prev = w;
    }
    let hiss_rms = rms(&hiss).max(1e-12);
    let asp_gain = 0.12 * voiced_rms / hiss_rms;
    let fric_gain = fric_level * voiced_rms / hiss_rms;

    // Voiced low-frequency rumble (chest resonance): keeps the sub-pitch
    // bins occupied whenever the voice is on.
    let mut rumble = vec![0.0f64; n];
    let lp = 1.0 - (-2.0 * PI * 100.0 / fs).exp();
    let mut state = 0.0;
    for r in rumble.iter_mut() {
        let w: f64 = rng.random_range(-1.0..1.0);
        state += lp * (w - state);
        *r = state;
    }
    let rumble_gain = rng.random_range(0.06..0.35) * voiced_rms / rms(&rumble).max(1e-12);

    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            env[i] * (voiced[i] + asp_gain * hiss[i] + rumble_gain * rumble[i])
                + fric_env[i] * fric_gain * hiss[i]
        })
        .collect();
    apply_edge_taper(&mut samples);

    // A recording floor of varying level and color: "clean" training speech
    // behaves like real recordings, some near-pristine, some noticeably
    // roomy. The spread is what teaches the scorer to interpolate between
    // the corner of perfect similarity and genuinely noisy inputs.
    let floor_snr_db = rng.random_range(14.0..40.0);
    let floor_gain = rms(&samples) * 10f64.powf(-floor_snr_db / 20.0);
    if rng.random_range(0.0..1.0) < 0.5 {
        // White floor; uniform noise has rms 1/sqrt(3).
        for v in samples.iter_mut() {
            *v += floor_gain * 3f64.sqrt() * rng.random_range(-1.0..1.0);
        }
    } else {
        // Pink floor.
        let mut b = [0.0f64; 7];
        let mut floor = Vec::with_capacity(n);
        for _ in 0..n {
            let w: f64 = rng.random_range(-1.0..1.0);
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            floor.push(b.iter().sum::<f64>() + w * 0.5362);
            b[6] = w * 0.115926;
        }
        let g = floor_gain / rms(&floor).max(1e-12);
        for (v, f) in samples.iter_mut().zip(&floor) {
            *v += f * g;
        }
    }
    normalize_peak(&mut samples, peak);

    let params = SpeechParams {
        category,
        arousal: (1.0 + 6.0 * (am_depth - 0.3) / 0.65).clamp(1.0, 7.0),
        valence: (1.0 + 6.0 * (f0 - 80.0) / 220.0).clamp(1.0, 7.0),
        dominance: (1.0 + 6.0 * tilt).clamp(1.0, 7.0),
    };
    (
        Waveform::new(samples, TARGET_SAMPLE_RATE).expect("synthesized speech is valid"),
        params,
    )
}

/// Render one noise clip: white, pink, or babble-like depending on `variant`.
pub fn render_noise(rng: &mut ChaCha8Rng, variant: usize, cfg: &SynthConfig) -> Waveform {
    let n = duration_samples(rng, cfg);
    let peak = rng.random_range(0.3..0.6);
    let fs = TARGET_SAMPLE_RATE as f64;

    let mut samples = match variant % 3 {
        0 => {
            // White with a gentle random tilt, so no two clips share the
            // exact same spectral shape.
            let lp_a = 1.0 - (-2.0 * PI * rng.random_range(400.0..2_000.0) / fs).exp();
            let tilt = rng.random_range(-0.6..0.6);
            let mut state = 0.0;
            (0..n)
                .map(|_| {
                    let w: f64 = rng.random_range(-1.0..1.0);
                    state += lp_a * (w - state);
                    w + tilt * state
                })
                .collect::<Vec<f64>>()
        }
        1 => {
            // Paul Kellet's economical pink filter, blended with a leaky
            // integrator (brown-ish) so the low-frequency slope varies.
            let brown_mix = rng.random_range(0.0..0.5);
            let mut brown = 0.0f64;
            let mut b = [0.0f64; 7];
            (0..n)
                .map(|_| {
                    let w: f64 = rng.random_range(-1.0..1.0);
                    b[0] = 0.99886 * b[0] + w * 0.0555179;
                    b[1] = 0.99332 * b[1] + w * 0.0750759;
                    b[2] = 0.96900 * b[2] + w * 0.1538520;
                    b[3] = 0.86650 * b[3] + w * 0.3104856;
                    b[4] = 0.55000 * b[4] + w * 0.5329522;
                    b[5] = -0.7616 * b[5] - w * 0.0168980;
                    let pink = b.iter().sum::<f64>() + w * 0.5362;
                    b[6] = w * 0.115926;
                    brown = 0.995 * brown + 0.1 * w;
                    pink + brown_mix * brown * 8.0
                })
                .collect()
        }
        _ => {
            // Babble-like: several overlapping voices, shallow modulation, no
            // silent gaps.
            let mut acc = vec![0.0f64; n];
            let n_voices = rng.random_range(3..=8);
            for _ in 0..n_voices {
                let f0 = rng.random_range(100.0..260.0);
                let rate = rng.random_range(2.0..5.0);
                let phase_am = rng.random_range(0.0..2.0 * PI);
                let mut states: Vec<Complex<f64>> = Vec::new();
                let mut steps: Vec<Complex<f64>> = Vec::new();
                for k in 1..=18 {
                    let amp = 1.0 / (k as f64).sqrt();
                    let ph = rng.random_range(0.0..2.0 * PI);
                    states.push(Complex::from_polar(amp, ph));
                    steps.push(Complex::from_polar(1.0, 2.0 * PI * k as f64 * f0 / fs));
                }
                for (i, a) in acc.iter_mut().enumerate() {
                    let mut sum = 0.0;
                    for (s, z) in states.iter_mut().zip(&steps) {
                        sum += s.im;
                        *s *= z;
                    }
                    let u = 0.5 - 0.5 * (2.0 * PI * rate * i as f64 / fs + phase_am).cos();
                    *a += sum * (0.4 + 0.6 * u);
                }
            }
            // Stationary ambience bed under the voices: real babble sits on
            // a hum of room noise, and that bed is what stationary-noise
            // estimation can latch onto.
            let bed_level = rng.random_range(1.5..3.5);
            let acc_rms = rms(&acc).max(1e-12);
            let mut bed: Vec<f64> = Vec::with_capacity(n);
            let mut b = [0.0f64; 7];
            for _ in 0..n {
                let w: f64 = rng.random_range(-1.0..1.0);
                b[0] = 0.99886 * b[0] + w * 0.0555179;
                b[1] = 0.99332 * b[1] + w * 0.0750759;
                b[2] = 0.96900 * b[2] + w * 0.1538520;
                b[3] = 0.86650 * b[3] + w * 0.3104856;
                b[4] = 0.55000 * b[4] + w * 0.5329522;
                b[5] = -0.7616 * b[5] - w * 0.0168980;
                bed.push(b.iter().sum::<f64>() + w * 0.5362);
                b[6] = w * 0.115926;
            }
            let bed_gain = bed_level * acc_rms / rms(&bed).max(1e-12);
            for (a, bd) in acc.iter_mut().zip(&bed) {
                *a += bd * bed_gain + rng.random_range(-1.0..1.0) * 0.08 * acc_rms;
            }
            acc
        }
    };

    apply_edge_taper(&mut samples);
    normalize_peak(&mut samples, peak);
    Waveform::new(samples, TARGET_SAMPLE_RATE).expect("synthesized noise is valid")
}

/// Generate the synthetic corpus under `out_dir`: `speech/` and `noise/` WAV
/// directories plus `speech.jsonl` and `noise.jsonl` manifests. Returns the
/// records with paths resolved against `out_dir`.
pub fn generate_synthetic_desk_data(
    out_dir: &Path,
    seed: u64,
    cfg: &SynthConfig,
) -> Result<(Vec<ManifestRecord>, Vec<ManifestRecord>)> {
    let speech_dir = out_dir.join("speech");
    let noise_dir = out_dir.join("noise");
    for d in [&speech_dir, &noise_dir] {
        std::fs::create_dir_all(d).map_err(|source| Error::Write {
            path: d.clone(),
            source,
        })?;
    }

    let speech_base = derive_seed(seed, 1);
    let noise_base = derive_seed(seed, 2);

    let mut speech_records = Vec::with_capacity(cfg.n_speech);
    for i in 0..cfg.n_speech {
        let mut rng = rng_for(derive_seed(speech_base, i as u64));
        let category = (i % 10) as u8;
        let (w, params) = render_speech(&mut rng, category, cfg);
        let rel = PathBuf::from(format!("speech/spk_{i:04}.wav"));
        write_wav(&w, &out_dir.join(&rel), WavEncoding::Float32)?;

        let mut rec = ManifestRecord::new(rel, split_for(i, cfg.n_speech), Kind::Speech);
        rec.category = Some(params.category);
        rec.arousal = Some(params.arousal);
        rec.valence = Some(params.valence);
        rec.dominance = Some(params.dominance);
        speech_records.push(rec);
    }

    let mut noise_records = Vec::with_capacity(cfg.n_noise);
    for i in 0..cfg.n_noise {
        let mut rng = rng_for(derive_seed(noise_base, i as u64));
        let w = render_noise(&mut rng, i, cfg);
        let kind = NOISE_KINDS[i % NOISE_KINDS.len()];
        let rel = PathBuf::from(format!("noise/noise_{kind}_{i:04}.wav"));
        write_wav(&w, &out_dir.join(&rel), WavEncoding::Float32)?;
        noise_records.push(ManifestRecord::new(
            rel,
            split_for(i, cfg.n_noise),
            Kind::Noise,
        ));
    }

    write_manifest(&out_dir.join("speech.jsonl"), &speech_records)?;
    write_manifest(&out_dir.join("noise.jsonl"), &noise_records)?;

    // Hand back records with resolved paths, matching what read_manifest
    // would produce.
    for rec in speech_records.iter_mut().chain(noise_records.iter_mut()) {
        rec.path = out_dir.join(&rec.path);
    }
    Ok((speech_records, noise_records))
}
