//! Emotion-block training: phase-2 style training on a fixed input
//! transform, and phase-3 joint fine-tuning where the emotion loss also
//! drives the SNR scorer through the reconstitution blend and the score
//! clamp.

use crate::audio::{read_wav, resample_to_16k, Waveform};
use crate::dsp::{MelFilterbank, StftConfig, MEL_BINS};
use crate::enhance::Enhancer;
use crate::error::{Error, Result};
use crate::manifest::ManifestRecord;
use crate::rng::{derive_seed, rng_for};
use crate::snr::{
    build_scorer_dataset, clamp_score, score, scorer_batch_loss, scorer_mse, similarity_feature,
    LinearScorer, SimilarityFeature,
};
use crate::train::{shuffled_indices, EarlyStopper, EpochStats, Momentum, TrainConfig, TrainingLog};

use super::{
    clamp_derivative, emotion_batch_loss, pooled_logmel, reconstituted_features, EmotionGrads,
    EmotionLabel, EmotionModel, LossWeights, FEATURE_DIM, HIDDEN_DIM, N_ATTRS, N_CLASSES,
};

/// What the emotion block sees during training and inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    /// The waveform as-is.
    Raw,
    /// The enhanced waveform (phase 2).
    Enhanced,
    /// The score-blended waveform with a fixed scorer (phase 3 uses the
    /// trainable variant in `finetune_joint`).
    Reconstituted,
}

#[derive(Debug, Clone, Default)]
pub struct LabeledFeatures {
    pub xs: Vec<Vec<f64>>,
    pub labels: Vec<EmotionLabel>,
    pub ids: Vec<String>,
}

impl LabeledFeatures {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

fn load_audio(rec: &ManifestRecord) -> Result<Waveform> {
    resample_to_16k(&read_wav(&rec.path)?)
}

/// Pooled features for every labeled record under the chosen input mode.
pub fn extract_features(
    records: &[ManifestRecord],
    mode: InputMode,
    enhancer: &Enhancer,
    scorer: Option<&LinearScorer>,
    fb: &MelFilterbank,
) -> Result<LabeledFeatures> {
    let mut out = LabeledFeatures::default();
    for rec in records {
        let label = rec.label().ok_or_else(|| Error::MissingLabel { id: rec.id() })?;
        let w = load_audio(rec)?;
        let x = match mode {
            InputMode::Raw => pooled_logmel(&w, fb),
            InputMode::Enhanced => {
                let (w_en, _, _) = enhancer.enhance_waveform(&w, Some(&rec.id()))?;
                pooled_logmel(&w_en, fb)
            }
            InputMode::Reconstituted => {
                let scorer = scorer.ok_or_else(|| {
                    Error::InvalidConfig("reconstituted mode needs a trained scorer".into())
                })?;
                let (w_en, s_orig, s_enh) = enhancer.enhance_waveform(&w, Some(&rec.id()))?;
                let f = similarity_feature(&s_orig, &s_enh)?;
                let s = score(&f, scorer)?;
                reconstituted_features(&w, &w_en, s.clamped, fb, false)?.0
            }
        };
        out.xs.push(x);
        out.labels.push(label);
        out.ids.push(rec.id());
    }
    Ok(out)
}

/// Momentum state for every tensor of the emotion model.
pub struct EmotionOptimizer {
    w_hidden: Momentum,
    b_hidden: Momentum,
    w_cat: Momentum,
    b_cat: Momentum,
    w_attr: Vec<Momentum>,
    b_attr: Momentum,
}

impl EmotionOptimizer {
    pub fn new(model: &EmotionModel) -> Self {
        Self {
            w_hidden: Momentum::new(model.w_hidden.len()),
            b_hidden: Momentum::new(model.b_hidden.len()),
            w_cat: Momentum::new(model.w_cat.len()),
            b_cat: Momentum::new(model.b_cat.len()),
            w_attr: (0..N_ATTRS).map(|_| Momentum::new(model.hidden_dim)).collect(),
            b_attr: Momentum::new(N_ATTRS),
        }
    }

    pub fn step(&mut self, model: &mut EmotionModel, grads: &EmotionGrads, lr: f64, momentum: f64) {
        self.w_hidden.step(&mut model.w_hidden, &grads.w_hidden, lr, momentum);
        self.b_hidden.step(&mut model.b_hidden, &grads.b_hidden, lr, momentum);
        self.w_cat.step(&mut model.w_cat, &grads.w_cat, lr, momentum);
        self.b_cat.step(&mut model.b_cat, &grads.b_cat, lr, momentum);
        for (a, opt) in self.w_attr.iter_mut().enumerate() {
            opt.step(&mut model.w_attr[a], &grads.w_attr[a], lr, momentum);
        }
        self.b_attr.step(&mut model.b_attr, &grads.b_attr, lr, momentum);
    }
}

/// Full-set loss used for validation: CE over the set plus per-epoch CCC
/// terms.
pub fn emotion_eval_loss(
    model: &EmotionModel,
    data: &LabeledFeatures,
    weights: &LossWeights,
) -> Result<f64> {
    Ok(emotion_batch_loss(model, &data.xs, &data.labels, weights)?.loss)
}

/// Train from a starting model on fixed features. Mini-batches of fewer than
/// two samples cannot carry the concordance loss and are skipped.
pub fn train_emotion_core(
    mut model: EmotionModel,
    train: &LabeledFeatures,
    val: &LabeledFeatures,
    hyper: &TrainConfig,
    weights: &LossWeights,
) -> Result<(EmotionModel, TrainingLog)> {
    if train.is_empty() {
        return Err(Error::EmptyInput {
            what: "emotion training split",
        });
    }
    if val.len() < 2 {
        return Err(Error::EmptyInput {
            what: "emotion validation split (need at least 2 records)",
        });
    }

    let mut best = model.clone();
    let mut opt = EmotionOptimizer::new(&model);
    let mut stopper = EarlyStopper::new(hyper.patience);
    let mut shuffle_rng = rng_for(derive_seed(hyper.seed, 1));
    let mut log = TrainingLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
    };

    for epoch in 0..hyper.max_epochs {
        let order = shuffled_indices(train.len(), &mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(hyper.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| train.xs[i].clone()).collect();
            let labels: Vec<EmotionLabel> = chunk.iter().map(|&i| train.labels[i]).collect();
            let eval = emotion_batch_loss(&model, &xs, &labels, weights)?;
            if !eval.loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            opt.step(&mut model, &eval.grads, hyper.lr, hyper.momentum);
            loss_sum += eval.loss;
            n_batches += 1;
        }
        let train_loss = loss_sum / n_batches.max(1) as f64;
        let val_loss = emotion_eval_loss(&model, val, weights)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        log.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if stopper.observe(epoch, val_loss) {
            best = model.clone();
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

/// Phase-2 style training from manifests: fresh seeded init, features fixed
/// by the input mode.
pub fn train_emotion(
    train_records: &[ManifestRecord],
    val_records: &[ManifestRecord],
    mode: InputMode,
    enhancer: &Enhancer,
    scorer: Option<&LinearScorer>,
    hyper: &TrainConfig,
    weights: &LossWeights,
) -> Result<(EmotionModel, TrainingLog)> {
    let fb = MelFilterbank::new(MEL_BINS, StftConfig::default().n_bins(), 16_000);
    let train = extract_features(train_records, mode, enhancer, scorer, &fb)?;
    let val = extract_features(val_records, mode, enhancer, scorer, &fb)?;
    let model = EmotionModel::init(FEATURE_DIM, HIDDEN_DIM, N_CLASSES, derive_seed(hyper.seed, 0));
    train_emotion_core(model, &train, &val, hyper, weights)
}

#[derive(Debug, Clone)]
pub struct JointHyper {
    pub emotion: TrainConfig,
    pub scorer: TrainConfig,
    /// When false, the emotion loss does not push gradients through S' into
    /// the scorer; only the MSE objective moves it.
    pub joint_score_grad: bool,
    pub weights: LossWeights,
}

impl JointHyper {
    pub fn defaults(seed: u64) -> Self {
        Self {
            emotion: TrainConfig {
                max_epochs: 60,
                ..TrainConfig::emotion_defaults(seed)
            },
            scorer: TrainConfig::scorer_defaults(seed),
            joint_score_grad: false,
            weights: LossWeights::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct JointModels {
    pub emotion: EmotionModel,
    pub scorer: LinearScorer,
}

struct JointRecord {
    path: std::path::PathBuf,
    id: String,
    label: EmotionLabel,
}

fn joint_records(records: &[ManifestRecord]) -> Result<Vec<JointRecord>> {
    records
        .iter()
        .map(|rec| {
            Ok(JointRecord {
                path: rec.path.clone(),
                id: rec.id(),
                label: rec.label().ok_or_else(|| Error::MissingLabel { id: rec.id() })?,
            })
        })
        .collect()
}

struct JointSample {
    x: Vec<f64>,
    dx_dsprime: Vec<f64>,
    raw: f64,
}

/// Per-record state that does not depend on the trainable parameters: the
/// input waveform, its enhanced version, and the similarity feature. Cached
/// once so epochs only pay for the reconstitution-dependent part.
struct JointCacheEntry {
    w_in: Waveform,
    w_en: Waveform,
    feature: SimilarityFeature,
    label: EmotionLabel,
}

fn build_joint_cache(records: &[JointRecord], enhancer: &Enhancer) -> Result<Vec<JointCacheEntry>> {
    records
        .iter()
        .map(|rec| {
            let w = resample_to_16k(&read_wav(&rec.path)?)?;
            let (w_en, s_orig, s_enh) = enhancer.enhance_waveform(&w, Some(&rec.id))?;
            let feature = similarity_feature(&s_orig, &s_enh)?;
            Ok(JointCacheEntry {
                w_in: w,
                w_en,
                feature,
                label: rec.label,
            })
        })
        .collect()
}

fn joint_sample(
    entry: &JointCacheEntry,
    scorer: &LinearScorer,
    fb: &MelFilterbank,
    with_derivative: bool,
) -> Result<JointSample> {
    let s = score(&entry.feature, scorer)?;
    let (x, dx) = reconstituted_features(
        &entry.w_in,
        &entry.w_en,
        clamp_score(s.raw),
        fb,
        with_derivative,
    )?;
    Ok(JointSample {
        x,
        dx_dsprime: dx.unwrap_or_default(),
        raw: s.raw,
    })
}

/// Phase 3: alternate, per step, (a) the emotion objective on reconstituted
/// waveforms, whose gradient also reaches the scorer through S' unless
/// disabled, and (b) the scorer's own MSE objective on clean/noise batches.
/// Early stopping watches the combined validation criterion (emotion loss
/// plus scorer MSE, weight one each).
pub fn finetune_joint(
    emo_train: &[ManifestRecord],
    emo_val: &[ManifestRecord],
    snr_speech: &[ManifestRecord],
    snr_noise: &[ManifestRecord],
    enhancer: &Enhancer,
    start: JointModels,
    hyper: &JointHyper,
) -> Result<(JointModels, TrainingLog)> {
    let fb = MelFilterbank::new(MEL_BINS, StftConfig::default().n_bins(), 16_000);
    let train = joint_records(emo_train)?;
    let val = joint_records(emo_val)?;
    if train.is_empty() {
        return Err(Error::EmptyInput {
            what: "emotion training split",
        });
    }
    if val.len() < 2 {
        return Err(Error::EmptyInput {
            what: "emotion validation split (need at least 2 records)",
        });
    }
    let scorer_ds = build_scorer_dataset(snr_speech, snr_noise, enhancer)?;
    let train_cache = build_joint_cache(&train, enhancer)?;
    let val_cache = build_joint_cache(&val, enhancer)?;

    let mut model = start.emotion;
    let mut scorer = start.scorer;
    let mut best = JointModels {
        emotion: model.clone(),
        scorer: scorer.clone(),
    };
    let mut emo_opt = EmotionOptimizer::new(&model);
    let mut sc_opt_w = Momentum::new(scorer.dim());
    let mut sc_opt_b = Momentum::new(1);
    let mut stopper = EarlyStopper::new(hyper.emotion.patience);
    let mut emo_rng = rng_for(derive_seed(hyper.emotion.seed, 1));
    let mut sc_rng = rng_for(derive_seed(hyper.scorer.seed, 2));
    let mut log = TrainingLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
    };

    // Scorer batches cycle through their own shuffled stream.
    let mut sc_order = shuffled_indices(scorer_ds.train_feats.len(), &mut sc_rng);
    let mut sc_at = 0usize;
    let next_scorer_batch = |sc_rng: &mut rand_chacha::ChaCha8Rng,
                                 sc_order: &mut Vec<usize>,
                                 sc_at: &mut usize,
                                 batch: usize|
     -> Vec<usize> {
        let mut idx = Vec::with_capacity(batch);
        for _ in 0..batch.min(scorer_ds.train_feats.len()) {
            if *sc_at >= sc_order.len() {
                *sc_order = shuffled_indices(scorer_ds.train_feats.len(), sc_rng);
                *sc_at = 0;
            }
            idx.push(sc_order[*sc_at]);
            *sc_at += 1;
        }
        idx
    };

    for epoch in 0..hyper.emotion.max_epochs {
        let order = shuffled_indices(train.len(), &mut emo_rng);
        let mut emo_loss_sum = 0.0;
        let mut sc_loss_sum = 0.0;
        let mut n_batches = 0usize;

        for chunk in order.chunks(hyper.emotion.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            // (a) Emotion objective on reconstituted waveforms.
            let samples: Vec<JointSample> = chunk
                .iter()
                .map(|&i| joint_sample(&train_cache[i], &scorer, &fb, true))
                .collect::<Result<_>>()?;
            let xs: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
            let labels: Vec<EmotionLabel> = chunk.iter().map(|&i| train[i].label).collect();
            let eval = emotion_batch_loss(&model, &xs, &labels, &hyper.weights)?;
            if !eval.loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }

            let mut grad_w = vec![0.0; scorer.dim()];
            let mut grad_b = 0.0;
            if hyper.joint_score_grad {
                for ((sample, g_x), &i) in samples.iter().zip(&eval.input_grads).zip(chunk) {
                    let d_loss_d_sprime: f64 = g_x
                        .iter()
                        .zip(&sample.dx_dsprime)
                        .map(|(g, d)| g * d)
                        .sum();
                    let d_loss_d_raw = d_loss_d_sprime * clamp_derivative(sample.raw);
                    for (gw, v) in grad_w.iter_mut().zip(&train_cache[i].feature.values) {
                        *gw += d_loss_d_raw * v;
                    }
                    grad_b += d_loss_d_raw;
                }
            }

            emo_opt.step(&mut model, &eval.grads, hyper.emotion.lr, hyper.emotion.momentum);
            sc_opt_w.step(&mut scorer.weights, &grad_w, hyper.scorer.lr, hyper.scorer.momentum);
            let mut bias = [scorer.bias];
            sc_opt_b.step(&mut bias, &[grad_b], hyper.scorer.lr, hyper.scorer.momentum);
            scorer.bias = bias[0];
            emo_loss_sum += eval.loss;

            // (b) Scorer MSE objective, as in phase 1.
            let idx = next_scorer_batch(
                &mut sc_rng,
                &mut sc_order,
                &mut sc_at,
                hyper.scorer.batch_size,
            );
            let feats: Vec<&SimilarityFeature> =
                idx.iter().map(|&i| &scorer_ds.train_feats[i]).collect();
            let targets: Vec<f64> = idx.iter().map(|&i| scorer_ds.train_targets[i]).collect();
            let (sc_loss, gw, gb) = scorer_batch_loss(&scorer, &feats, &targets)?;
            if !sc_loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            sc_opt_w.step(&mut scorer.weights, &gw, hyper.scorer.lr, hyper.scorer.momentum);
            let mut bias = [scorer.bias];
            sc_opt_b.step(&mut bias, &[gb], hyper.scorer.lr, hyper.scorer.momentum);
            scorer.bias = bias[0];
            sc_loss_sum += sc_loss;

            n_batches += 1;
        }

        // Combined validation criterion.
        let mut val_feats = LabeledFeatures::default();
        for (entry, rec) in val_cache.iter().zip(&val) {
            let s = joint_sample(entry, &scorer, &fb, false)?;
            val_feats.xs.push(s.x);
            val_feats.labels.push(entry.label);
            val_feats.ids.push(rec.id.clone());
        }
        let emo_val_loss = emotion_eval_loss(&model, &val_feats, &hyper.weights)?;
        let sc_val_loss = scorer_mse(&scorer, &scorer_ds.val_feats, &scorer_ds.val_targets)?;
        let val_loss = emo_val_loss + sc_val_loss;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }

        let nb = n_batches.max(1) as f64;
        log.epochs.push(EpochStats {
            epoch,
            train_loss: (emo_loss_sum + sc_loss_sum) / nb,
            val_loss,
        });
        if stopper.observe(epoch, val_loss) {
            best = JointModels {
                emotion: model.clone(),
                scorer: scorer.clone(),
            };
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
