//! SNR-level detection.
//!
//! The feature is the per-frequency-bin cosine similarity between the
//! original and enhanced magnitude spectrograms, taken along the time axis.
//! That yields a fixed 201-entry vector regardless of utterance length: the
//! less the enhancer changed a bin, the closer its entry is to 1. A trainable
//! affine scorer maps the feature to a scalar score S, trained with MSE
//! against 1 for clean speech and 0 for noise. S clamped to [0, 1] drives
//! reconstitution; S against a threshold (default 0.6) gates noise-only
//! input.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, resample_to_16k};
use crate::dsp::{magnitude, stft, Spectrogram, StftConfig};
use crate::enhance::Enhancer;
use crate::error::{Error, Result};
use crate::fsio;
use crate::manifest::{Kind, ManifestRecord};
use crate::rng::rng_for;
use crate::train::{shuffled_indices, EarlyStopper, Momentum, TrainConfig, TrainingLog};
use crate::train::EpochStats;

/// Default decision threshold on the raw score.
pub const NOISE_GATE_THRESHOLD: f64 = 0.6;

/// Per-bin cosine similarities, one entry per frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityFeature {
    pub values: Vec<f64>,
}

/// Cosine similarity along time for every frequency bin of two spectrograms
/// of identical shape. Zero-norm rules: both series zero means the enhancer
/// changed nothing (similarity 1); exactly one zero means maximal change
/// (similarity 0).
pub fn similarity_feature(orig: &Spectrogram, enh: &Spectrogram) -> Result<SimilarityFeature> {
    if !orig.same_shape(enh) {
        return Err(Error::ShapeMismatch {
            a_frames: orig.n_frames(),
            a_bins: orig.n_bins(),
            b_frames: enh.n_frames(),
            b_bins: enh.n_bins(),
        });
    }
    let mo = magnitude(orig);
    let me = magnitude(enh);
    let (t, f_bins) = (mo.rows(), mo.cols());
    let mut values = Vec::with_capacity(f_bins);
    for f in 0..f_bins {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for row in 0..t {
            let a = mo.at(row, f);
            let b = me.at(row, f);
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        let v = if na == 0.0 && nb == 0.0 {
            1.0
        } else if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
        };
        values.push(v);
    }
    Ok(SimilarityFeature { values })
}

/// Affine scorer: raw = weights . feature + bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearScorer {
    /// Deterministic start: zero weights, bias midway between the two
    /// training targets.
    pub fn new(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.5,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

/// Raw score S with its clamped companion S' = min(max(0, S), 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrScore {
    pub raw: f64,
    pub clamped: f64,
}

pub fn clamp_score(raw: f64) -> f64 {
    raw.max(0.0).min(1.0)
}

pub fn score(feature: &SimilarityFeature, scorer: &LinearScorer) -> Result<SnrScore> {
    if feature.values.len() != scorer.weights.len() {
        return Err(Error::DimensionMismatch {
            scorer: scorer.weights.len(),
            feature: feature.values.len(),
        });
    }
    let raw = scorer
        .weights
        .iter()
        .zip(&feature.values)
        .map(|(w, v)| w * v)
        .sum::<f64>()
        + scorer.bias;
    Ok(SnrScore {
        raw,
        clamped: clamp_score(raw),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalClass {
    Speech,
    NoiseOnly,
}

impl SignalClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            SignalClass::Speech => "speech",
            SignalClass::NoiseOnly => "noise_only",
        }
    }
}

/// Noise-only iff raw score < threshold; a score exactly at the threshold
/// counts as speech.
pub fn classify_noise_only(s: &SnrScore, threshold: f64) -> SignalClass {
    if s.raw < threshold {
        SignalClass::NoiseOnly
    } else {
        SignalClass::Speech
    }
}

/// Feature for one utterance: STFT, enhance, per-bin similarity.
pub fn scorer_feature(
    w: &crate::audio::Waveform,
    enhancer: &Enhancer,
    utt_id: Option<&str>,
) -> Result<SimilarityFeature> {
    let orig = stft(w, &StftConfig::default());
    let enh = enhancer.enhance(&orig, utt_id)?;
    similarity_feature(&orig, &enh)
}

/// Batch MSE on the raw score plus gradients. Loss = mean((raw - target)^2).
pub fn scorer_batch_loss(
    scorer: &LinearScorer,
    feats: &[&SimilarityFeature],
    targets: &[f64],
) -> Result<(f64, Vec<f64>, f64)> {
    assert_eq!(feats.len(), targets.len());
    let n = feats.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; scorer.dim()];
    let mut grad_b = 0.0;
    for (f, &t) in feats.iter().zip(targets) {
        let s = score(f, scorer)?;
        let err = s.raw - t;
        loss += err * err;
        let g = 2.0 * err / n;
        for (gw, v) in grad_w.iter_mut().zip(&f.values) {
            *gw += g * v;
        }
        grad_b += g;
    }
    Ok((loss / n, grad_w, grad_b))
}

/// Mean squared error of the raw score over a feature set.
pub fn scorer_mse(scorer: &LinearScorer, feats: &[SimilarityFeature], targets: &[f64]) -> Result<f64> {
    let mut loss = 0.0;
    for (f, &t) in feats.iter().zip(targets) {
        let s = score(f, scorer)?;
        loss += (s.raw - t) * (s.raw - t);
    }
    Ok(loss / feats.len() as f64)
}

/// Features and targets extracted from clean-speech and noise manifests:
/// speech scores toward 1, noise toward 0.
pub struct ScorerDataset {
    pub train_feats: Vec<SimilarityFeature>,
    pub train_targets: Vec<f64>,
    pub val_feats: Vec<SimilarityFeature>,
    pub val_targets: Vec<f64>,
}

pub fn build_scorer_dataset(
    speech: &[ManifestRecord],
    noise: &[ManifestRecord],
    enhancer: &Enhancer,
) -> Result<ScorerDataset> {
    if speech.is_empty() {
        return Err(Error::EmptyInput {
            what: "speech manifest",
        });
    }
    if noise.is_empty() {
        return Err(Error::EmptyInput {
            what: "noise manifest",
        });
    }
    let mut ds = ScorerDataset {
        train_feats: Vec::new(),
        train_targets: Vec::new(),
        val_feats: Vec::new(),
        val_targets: Vec::new(),
    };
    for (records, target) in [(speech, 1.0), (noise, 0.0)] {
        for rec in records {
            let split = rec.split;
            if split == crate::manifest::Split::Test {
                continue;
            }
            let w = resample_to_16k(&read_wav(&rec.path)?)?;
            let f = scorer_feature(&w, enhancer, Some(&rec.id()))?;
            if split == crate::manifest::Split::Train {
                ds.train_feats.push(f);
                ds.train_targets.push(target);
            } else {
                ds.val_feats.push(f);
                ds.val_targets.push(target);
            }
        }
    }
    if ds.train_feats.is_empty() {
        return Err(Error::EmptyInput {
            what: "scorer training split",
        });
    }
    if ds.val_feats.is_empty() {
        return Err(Error::EmptyInput {
            what: "scorer validation split",
        });
    }
    Ok(ds)
}

/// Train the affine scorer with SGD + momentum and early stopping on
/// validation MSE. Returns the parameters from the best validation epoch.
pub fn train_scorer_on(ds: &ScorerDataset, hyper: &TrainConfig) -> Result<(LinearScorer, TrainingLog)> {
    let dim = ds.train_feats[0].values.len();
    let mut scorer = LinearScorer::new(dim);
    let mut best = scorer.clone();
    let mut opt_w = Momentum::new(dim);
    let mut opt_b = Momentum::new(1);
    let mut stopper = EarlyStopper::new(hyper.patience);
    let mut rng = rng_for(hyper.seed);
    let mut log = TrainingLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
    };

    // One shuffle up front: fixed batch partitions keep the validation
    // trajectory smooth enough that patience measures convergence, not
    // reshuffling noise.
    let order = shuffled_indices(ds.train_feats.len(), &mut rng);
    for epoch in 0..hyper.max_epochs {
        let mut train_loss_sum = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(hyper.batch_size) {
            let feats: Vec<&SimilarityFeature> =
                chunk.iter().map(|&i| &ds.train_feats[i]).collect();
            let targets: Vec<f64> = chunk.iter().map(|&i| ds.train_targets[i]).collect();
            let (loss, grad_w, grad_b) = scorer_batch_loss(&scorer, &feats, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            opt_w.step(&mut scorer.weights, &grad_w, hyper.lr, hyper.momentum);
            let mut bias = [scorer.bias];
            opt_b.step(&mut bias, &[grad_b], hyper.lr, hyper.momentum);
            scorer.bias = bias[0];
            train_loss_sum += loss;
            n_batches += 1;
        }
        let train_loss = train_loss_sum / n_batches as f64;
        let val_loss = scorer_mse(&scorer, &ds.val_feats, &ds.val_targets)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        log.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if stopper.observe(epoch, val_loss) {
            best = scorer.clone();
        }
        if stopper.should_stop() {
            log.stopped_early = true;
            break;
        }
    }
    log.best_epoch = stopper.best_epoch();
    log.best_val_loss = stopper.best_val_loss();
    Ok((best, log))
}

/// End-to-end phase-1 training from manifests.
pub fn train_scorer(
    speech: &[ManifestRecord],
    noise: &[ManifestRecord],
    enhancer: &Enhancer,
    hyper: &TrainConfig,
) -> Result<(LinearScorer, TrainingLog)> {
    let ds = build_scorer_dataset(speech, noise, enhancer)?;
    train_scorer_on(&ds, hyper)
}

/// One scored record.
#[derive(Debug, Clone)]
pub struct ScoreRow {
    pub id: String,
    pub raw: f64,
    pub clamped: f64,
    pub decision: SignalClass,
    pub group: String,
}

#[derive(Debug, Clone)]
pub struct GroupSummary {
    pub group: String,
    pub mean_raw: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
    pub groups: Vec<GroupSummary>,
    pub skipped: usize,
}

/// Group key for the per-SNR summary.
pub fn record_group(rec: &ManifestRecord) -> String {
    match rec.kind {
        Kind::Noise => "noise_only".to_string(),
        Kind::Speech => "clean".to_string(),
        Kind::Mixture => match rec.snr_db {
            Some(snr) => format!("snr_{snr:.0}"),
            None => "mixture".to_string(),
        },
    }
}

/// Score every readable record; unreadable audio is skipped and counted.
pub fn score_manifest(
    records: &[ManifestRecord],
    scorer: &LinearScorer,
    enhancer: &Enhancer,
    threshold: f64,
) -> Result<ScoreReport> {
    let mut rows = Vec::with_capacity(records.len());
    let mut skipped = 0usize;
    for rec in records {
        let w = match read_wav(&rec.path).and_then(|w| resample_to_16k(&w)) {
            Ok(w) => w,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let f = scorer_feature(&w, enhancer, Some(&rec.id()))?;
        let s = score(&f, scorer)?;
        rows.push(ScoreRow {
            id: rec.id(),
            raw: s.raw,
            clamped: s.clamped,
            decision: classify_noise_only(&s, threshold),
            group: record_group(rec),
        });
    }

    let mut groups: Vec<GroupSummary> = Vec::new();
    for row in &rows {
        match groups.iter_mut().find(|g| g.group == row.group) {
            Some(g) => {
                g.mean_raw += row.raw;
                g.count += 1;
            }
            None => groups.push(GroupSummary {
                group: row.group.clone(),
                mean_raw: row.raw,
                count: 1,
            }),
        }
    }
    for g in &mut groups {
        g.mean_raw /= g.count as f64;
    }

    Ok(ScoreReport {
        rows,
        groups,
        skipped,
    })
}

pub fn write_scores_csv(report: &ScoreReport, path: &Path) -> Result<()> {
    let mut out = String::from("id,raw_score,clamped_score,decision\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.id,
            row.raw,
            row.clamped,
            row.decision.as_str()
        ));
    }
    fsio::atomic_write_str(path, &out)
}

pub fn write_summary_csv(report: &ScoreReport, path: &Path) -> Result<()> {
    let mut out = String::from("group,mean_raw,count\n");
    for g in &report.groups {
        out.push_str(&format!("{},{},{}\n", g.group, g.mean_raw, g.count));
    }
    fsio::atomic_write_str(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{Waveform, TARGET_SAMPLE_RATE};
    use rand::Rng;
    use rustfft::num_complex::Complex;

    fn spect(data: Vec<Complex<f64>>, t: usize, f: usize) -> Spectrogram {
        Spectrogram::from_parts(data, t, f, StftConfig::default(), 100, TARGET_SAMPLE_RATE)
    }

    #[test]
    fn self_similarity_is_one() {
        let data: Vec<Complex<f64>> = (0..6).map(|i| Complex::new(i as f64 + 1.0, 0.5)).collect();
        let s = spect(data.clone(), 3, 2);
        let f = similarity_feature(&s, &s).unwrap();
        for v in f.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_ignores_positive_scaling() {
        let data: Vec<Complex<f64>> = (0..6).map(|i| Complex::new(i as f64 + 1.0, -0.3)).collect();
        let s = spect(data.clone(), 3, 2);
        let doubled = spect(data.iter().map(|c| c * 2.0).collect(), 3, 2);
        let f = similarity_feature(&s, &doubled).unwrap();
        for v in f.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_series_score_zero() {
        // Bin 0: orig [1, 0], enh [0, 1] -> cosine 0.
        let orig = spect(vec![Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)], 2, 1);
        let enh = spect(vec![Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)], 2, 1);
        let f = similarity_feature(&orig, &enh).unwrap();
        assert_eq!(f.values, vec![0.0]);
    }

    #[test]
    fn zero_norm_rules() {
        // Both zero -> 1; exactly one zero -> 0.
        let zero = spect(vec![Complex::new(0.0, 0.0); 2], 2, 1);
        let nonzero = spect(vec![Complex::new(1.0, 0.0); 2], 2, 1);
        assert_eq!(similarity_feature(&zero, &zero).unwrap().values, vec![1.0]);
        assert_eq!(similarity_feature(&zero, &nonzero).unwrap().values, vec![0.0]);
        assert_eq!(similarity_feature(&nonzero, &zero).unwrap().values, vec![0.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = spect(vec![Complex::new(1.0, 0.0); 4], 2, 2);
        let b = spect(vec![Complex::new(1.0, 0.0); 6], 3, 2);
        assert!(matches!(
            similarity_feature(&a, &b),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn score_clamps_per_definition() {
        let f = SimilarityFeature { values: vec![0.0; 4] };
        let cases = [(0.5, 0.5), (1.3, 1.0), (-0.2, 0.0)];
        for (bias, want_clamped) in cases {
            let scorer = LinearScorer {
                weights: vec![0.0; 4],
                bias,
            };
            let s = score(&f, &scorer).unwrap();
            assert_eq!(s.raw, bias);
            assert_eq!(s.clamped, want_clamped);
        }
    }

    #[test]
    fn score_is_affine_in_the_feature() {
        let mut rng = rng_for(17);
        let scorer = LinearScorer {
            weights: (0..8).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: 0.3,
        };
        let f1 = SimilarityFeature {
            values: (0..8).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let f2 = SimilarityFeature {
            values: (0..8).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let a = 0.35;
        let blend = SimilarityFeature {
            values: f1
                .values
                .iter()
                .zip(&f2.values)
                .map(|(x, y)| a * x + (1.0 - a) * y)
                .collect(),
        };
        let sa = score(&f1, &scorer).unwrap().raw;
        let sb = score(&f2, &scorer).unwrap().raw;
        let sc = score(&blend, &scorer).unwrap().raw;
        assert!((sc - (a * sa + (1.0 - a) * sb)).abs() < 1e-12);
    }

    #[test]
    fn clamp_is_idempotent() {
        for raw in [-3.0, -0.2, 0.0, 0.4, 1.0, 2.5] {
            assert_eq!(clamp_score(clamp_score(raw)), clamp_score(raw));
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = SimilarityFeature { values: vec![1.0; 3] };
        let scorer = LinearScorer::new(4);
        assert!(matches!(
            score(&f, &scorer),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn threshold_rule_with_boundary_tie() {
        let mk = |raw| SnrScore {
            raw,
            clamped: clamp_score(raw),
        };
        assert_eq!(
            classify_noise_only(&mk(0.9), NOISE_GATE_THRESHOLD),
            SignalClass::Speech
        );
        assert_eq!(
            classify_noise_only(&mk(0.3), NOISE_GATE_THRESHOLD),
            SignalClass::NoiseOnly
        );
        // Exactly at the threshold counts as speech.
        assert_eq!(
            classify_noise_only(&mk(0.6), NOISE_GATE_THRESHOLD),
            SignalClass::Speech
        );
    }

    fn synthetic_dataset(sep: f64, n: usize) -> ScorerDataset {
        // Speech-like features near 1, noise-like features near `sep`.
        let mut rng = rng_for(23);
        let dim = 16;
        let mut ds = ScorerDataset {
            train_feats: Vec::new(),
            train_targets: Vec::new(),
            val_feats: Vec::new(),
            val_targets: Vec::new(),
        };
        for i in 0..n {
            for (center, target) in [(1.0, 1.0), (sep, 0.0)] {
                let f = SimilarityFeature {
                    values: (0..dim)
                        .map(|_| (center as f64 + rng.random_range(-0.05..0.05)).clamp(-1.0, 1.0))
                        .collect(),
                };
                if i % 5 == 4 {
                    ds.val_feats.push(f);
                    ds.val_targets.push(target);
                } else {
                    ds.train_feats.push(f);
                    ds.train_targets.push(target);
                }
            }
        }
        ds
    }

    #[test]
    fn separable_features_train_to_low_mse() {
        let ds = synthetic_dataset(0.3, 100);
        let hyper = TrainConfig {
            max_epochs: 2_000,
            ..TrainConfig::scorer_defaults(3)
        };
        let (scorer, log) = train_scorer_on(&ds, &hyper).unwrap();
        assert!(
            log.best_val_loss < 0.05,
            "val mse {} after {} epochs",
            log.best_val_loss,
            log.epochs.len()
        );
        // Sanity: scores land on the right side for both classes.
        let s_speech = score(&ds.val_feats[0], &scorer).unwrap().raw;
        assert!(s_speech > 0.6, "speech scored {s_speech}");
    }

    #[test]
    fn single_example_converges_monotonically() {
        // One example with target 1: a convex quadratic, so the raw score
        // approaches 1 monotonically epoch over epoch.
        let f = SimilarityFeature {
            values: vec![0.9; 8],
        };
        let ds = ScorerDataset {
            train_feats: vec![f.clone()],
            train_targets: vec![1.0],
            val_feats: vec![f.clone()],
            val_targets: vec![1.0],
        };
        let mut scorer = LinearScorer::new(8);
        let mut opt_w = Momentum::new(8);
        let mut opt_b = Momentum::new(1);
        let mut last = score(&f, &scorer).unwrap().raw;
        for _ in 0..50 {
            let (_, gw, gb) = scorer_batch_loss(&scorer, &[&f], &[1.0]).unwrap();
            opt_w.step(&mut scorer.weights, &gw, 1e-2, 0.0);
            let mut b = [scorer.bias];
            opt_b.step(&mut b, &[gb], 1e-2, 0.0);
            scorer.bias = b[0];
            let now = score(&f, &scorer).unwrap().raw;
            assert!(now >= last - 1e-12, "raw went backwards: {last} -> {now}");
            assert!(now <= 1.0 + 1e-9);
            last = now;
        }
        assert!(last > 0.5);
    }

    #[test]
    fn scorer_gradients_match_finite_differences() {
        let mut rng = rng_for(29);
        let dim = 12;
        for _ in 0..20 {
            let scorer = LinearScorer {
                weights: (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect(),
                bias: rng.random_range(-0.5..0.5),
            };
            let feats: Vec<SimilarityFeature> = (0..6)
                .map(|_| SimilarityFeature {
                    values: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                })
                .collect();
            let refs: Vec<&SimilarityFeature> = feats.iter().collect();
            let targets: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();

            let (_, grad_w, grad_b) = scorer_batch_loss(&scorer, &refs, &targets).unwrap();

            let h = 1e-5;
            for d in 0..dim {
                let mut plus = scorer.clone();
                plus.weights[d] += h;
                let mut minus = scorer.clone();
                minus.weights[d] -= h;
                let lp = scorer_batch_loss(&plus, &refs, &targets).unwrap().0;
                let lm = scorer_batch_loss(&minus, &refs, &targets).unwrap().0;
                let fd = (lp - lm) / (2.0 * h);
                let denom = fd.abs().max(grad_w[d].abs()).max(1e-8);
                assert!(
                    (fd - grad_w[d]).abs() / denom <= 1e-4,
                    "w[{d}]: fd {fd} analytic {}",
                    grad_w[d]
                );
            }
            let mut plus = scorer.clone();
            plus.bias += h;
            let mut minus = scorer.clone();
            minus.bias -= h;
            let lp = scorer_batch_loss(&plus, &refs, &targets).unwrap().0;
            let lm = scorer_batch_loss(&minus, &refs, &targets).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(grad_b.abs()).max(1e-8);
            assert!((fd - grad_b).abs() / denom <= 1e-4);
        }
    }

    #[test]
    fn training_is_deterministic_under_a_fixed_seed() {
        let ds = synthetic_dataset(0.4, 40);
        let hyper = TrainConfig {
            max_epochs: 50,
            ..TrainConfig::scorer_defaults(9)
        };
        let (a, la) = train_scorer_on(&ds, &hyper).unwrap();
        let (b, lb) = train_scorer_on(&ds, &hyper).unwrap();
        assert_eq!(a, b);
        assert_eq!(la.epochs.len(), lb.epochs.len());
    }

    #[test]
    fn empty_manifest_scores_to_empty_report() {
        let enhancer = Enhancer::new(Default::default()).unwrap();
        let scorer = LinearScorer::new(201);
        let report = score_manifest(&[], &scorer, &enhancer, NOISE_GATE_THRESHOLD).unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(report.skipped, 0);
    }

    #[test]
    fn unreadable_records_are_skipped_and_counted() {
        let enhancer = Enhancer::new(Default::default()).unwrap();
        let scorer = LinearScorer::new(201);
        let rec = ManifestRecord::new(
            "/no/such/file.wav".into(),
            crate::manifest::Split::Test,
            Kind::Speech,
        );
        let report = score_manifest(&[rec], &scorer, &enhancer, 0.6).unwrap();
        assert_eq!(report.skipped, 1);
        assert!(report.rows.is_empty());
    }

    #[test]
    fn feature_values_stay_in_unit_interval_on_real_audio() {
        let mut rng = rng_for(31);
        let samples: Vec<f64> = (0..2_000).map(|_| rng.random_range(-0.5..0.5)).collect();
        let w = Waveform::new(samples, TARGET_SAMPLE_RATE).unwrap();
        let enhancer = Enhancer::new(Default::default()).unwrap();
        let f = scorer_feature(&w, &enhancer, None).unwrap();
        assert_eq!(f.values.len(), 201);
        for v in f.values {
            assert!((-1.0..=1.0).contains(&v));
        }
    }
}
