//! Orchestration: the three training phases, the inference path (enhance,
//! score, reconstitute or gate, predict), metric computation, and the
//! five-way system comparison across noise conditions.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, resample_to_16k, Waveform};
use crate::checkpoint;
use crate::emotion::{
    finetune_joint, predict, train_emotion, EmotionModel, EmotionPrediction,
    InputMode, JointHyper, JointModels, LossWeights, N_CLASSES,
};
use crate::enhance::{Enhancer, EnhancerConfig};
use crate::error::{Error, Result};
use crate::fsio;
use crate::manifest::{Kind, ManifestRecord, Split};
use crate::mixing::synthesize_corpus;
use crate::reconstitution::reconstitute;
use crate::rng::derive_seed;
use crate::snr::{
    record_group, score, train_scorer, GroupSummary, LinearScorer,
    NOISE_GATE_THRESHOLD,
};
use crate::synth::{generate_synthetic_desk_data, SynthConfig};
use crate::train::TrainConfig;

/// Everything a full system run needs to know.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    pub enhancer: EnhancerConfig,
    pub threshold: f64,
    pub seed: u64,
    pub scorer_hyper: TrainConfig,
    pub emotion_hyper: TrainConfig,
    /// Epoch cap for the joint fine-tuning phase.
    pub joint_max_epochs: usize,
    /// Let the emotion loss reach the scorer through S' in phase 3.
    pub joint_score_grad: bool,
    pub loss_weights: LossWeights,
}

impl SystemConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            enhancer: EnhancerConfig::default(),
            threshold: NOISE_GATE_THRESHOLD,
            seed,
            scorer_hyper: TrainConfig::scorer_defaults(seed),
            emotion_hyper: TrainConfig::emotion_defaults(seed),
            joint_max_epochs: 60,
            joint_score_grad: false,
            loss_weights: LossWeights::default(),
        }
    }

    pub fn enhancer(&self) -> Result<Enhancer> {
        Enhancer::new(self.enhancer.clone())
    }

    pub fn joint_hyper(&self) -> JointHyper {
        JointHyper {
            emotion: TrainConfig {
                max_epochs: self.joint_max_epochs,
                ..self.emotion_hyper.clone()
            },
            scorer: self.scorer_hyper.clone(),
            joint_score_grad: self.joint_score_grad,
            weights: self.loss_weights.clone(),
        }
    }
}

/// Checkpoint and log locations under one run directory.
#[derive(Debug, Clone)]
pub struct PipelinePaths {
    pub root: PathBuf,
}

impl PipelinePaths {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    fn ensure(&self) -> Result<()> {
        for sub in ["checkpoints", "logs"] {
            let d = self.root.join(sub);
            std::fs::create_dir_all(&d).map_err(|source| Error::Write { path: d, source })?;
        }
        Ok(())
    }

    pub fn scorer_phase1(&self) -> PathBuf {
        self.root.join("checkpoints/scorer_phase1.ckpt")
    }

    pub fn emotion_phase2(&self) -> PathBuf {
        self.root.join("checkpoints/emotion_phase2.ckpt")
    }

    pub fn scorer_phase3(&self) -> PathBuf {
        self.root.join("checkpoints/scorer_phase3.ckpt")
    }

    pub fn emotion_phase3(&self) -> PathBuf {
        self.root.join("checkpoints/emotion_phase3.ckpt")
    }

    pub fn log(&self, phase: u8) -> PathBuf {
        self.root.join(format!("logs/phase{phase}.jsonl"))
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingCheckpoint {
            path: path.to_path_buf(),
        })
    }
}

/// Phase 1: train the SNR scorer on clean speech (target 1) and noise
/// (target 0).
pub fn run_phase1(
    cfg: &SystemConfig,
    speech: &[ManifestRecord],
    noise: &[ManifestRecord],
    paths: &PipelinePaths,
) -> Result<LinearScorer> {
    paths.ensure()?;
    let enhancer = cfg.enhancer()?;
    let (scorer, log) = train_scorer(speech, noise, &enhancer, &cfg.scorer_hyper)?;
    checkpoint::save_scorer(&paths.scorer_phase1(), &scorer, 1, &cfg.scorer_hyper)?;
    fsio::atomic_write_str(&paths.log(1), &log.to_jsonl())?;
    Ok(scorer)
}

/// Phase 2: train the emotion block on SE-processed speech.
pub fn run_phase2(
    cfg: &SystemConfig,
    emo_train: &[ManifestRecord],
    emo_val: &[ManifestRecord],
    paths: &PipelinePaths,
) -> Result<EmotionModel> {
    paths.ensure()?;
    require(&paths.scorer_phase1())?;
    let enhancer = cfg.enhancer()?;
    let (model, log) = train_emotion(
        emo_train,
        emo_val,
        InputMode::Enhanced,
        &enhancer,
        None,
        &cfg.emotion_hyper,
        &cfg.loss_weights,
    )?;
    checkpoint::save_emotion(&paths.emotion_phase2(), &model, 2, &cfg.emotion_hyper)?;
    fsio::atomic_write_str(&paths.log(2), &log.to_jsonl())?;
    Ok(model)
}

/// Phase 3: joint fine-tuning of both blocks.
pub fn run_phase3(
    cfg: &SystemConfig,
    emo_train: &[ManifestRecord],
    emo_val: &[ManifestRecord],
    snr_speech: &[ManifestRecord],
    snr_noise: &[ManifestRecord],
    paths: &PipelinePaths,
) -> Result<JointModels> {
    paths.ensure()?;
    require(&paths.scorer_phase1())?;
    require(&paths.emotion_phase2())?;
    let enhancer = cfg.enhancer()?;
    let start = JointModels {
        emotion: checkpoint::load_emotion(&paths.emotion_phase2())?,
        scorer: checkpoint::load_scorer(&paths.scorer_phase1())?,
    };
    let (models, log) = finetune_joint(
        emo_train,
        emo_val,
        snr_speech,
        snr_noise,
        &enhancer,
        start,
        &cfg.joint_hyper(),
    )?;
    checkpoint::save_emotion(&paths.emotion_phase3(), &models.emotion, 3, &cfg.emotion_hyper)?;
    checkpoint::save_scorer(&paths.scorer_phase3(), &models.scorer, 3, &cfg.scorer_hyper)?;
    fsio::atomic_write_str(&paths.log(3), &log.to_jsonl())?;
    Ok(models)
}

/// Inference result: either a prediction or a gated refusal, both carrying
/// the scores that produced them.
#[derive(Debug, Clone)]
pub enum InferOutcome {
    Gated {
        raw: f64,
        s_prime: f64,
    },
    Prediction {
        pred: EmotionPrediction,
        raw: f64,
        s_prime: f64,
    },
}

impl InferOutcome {
    pub fn raw(&self) -> f64 {
        match self {
            InferOutcome::Gated { raw, .. } | InferOutcome::Prediction { raw, .. } => *raw,
        }
    }

    pub fn s_prime(&self) -> f64 {
        match self {
            InferOutcome::Gated { s_prime, .. } | InferOutcome::Prediction { s_prime, .. } => {
                *s_prime
            }
        }
    }

    pub fn is_gated(&self) -> bool {
        matches!(self, InferOutcome::Gated { .. })
    }
}

/// Full inference path: enhance, score, reconstitute, gate or predict.
pub fn infer(
    w: &Waveform,
    enhancer: &Enhancer,
    scorer: &LinearScorer,
    model: &EmotionModel,
    threshold: f64,
    utt_id: Option<&str>,
) -> Result<InferOutcome> {
    let (w_en, s_orig, s_enh) = enhancer.enhance_waveform(w, utt_id)?;
    let f = crate::snr::similarity_feature(&s_orig, &s_enh)?;
    let s = score(&f, scorer)?;
    let rec = reconstitute(w, &w_en, &s, threshold)?;
    if rec.gated {
        return Ok(InferOutcome::Gated {
            raw: s.raw,
            s_prime: rec.s_prime,
        });
    }
    Ok(InferOutcome::Prediction {
        pred: predict(&rec.w_re, model),
        raw: s.raw,
        s_prime: rec.s_prime,
    })
}

/// One evaluated record: ground truth plus whatever the system produced.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub id: String,
    pub kind: Kind,
    pub group: String,
    pub label: Option<crate::emotion::EmotionLabel>,
    pub gated: bool,
    pub raw: f64,
    pub s_prime: f64,
    pub pred: Option<EmotionPrediction>,
}

/// Metrics over a set of outcomes. Gated utterances that carry speech labels
/// count as classification errors and are excluded from CCC.
#[derive(Debug, Clone, Serialize)]
pub struct MetricSummary {
    pub macro_f1: f64,
    pub ccc_arousal: f64,
    pub ccc_valence: f64,
    pub ccc_dominance: f64,
    pub detection_accuracy: f64,
    pub gate_rate_noise: f64,
    pub gated_speech: usize,
    pub n_labeled: usize,
    pub n_noise: usize,
    #[serde(skip)]
    pub mean_s_per_group: Vec<GroupSummary>,
}

impl MetricSummary {
    pub fn ccc(&self, a: usize) -> f64 {
        match a {
            0 => self.ccc_arousal,
            1 => self.ccc_valence,
            _ => self.ccc_dominance,
        }
    }
}

pub fn compute_metrics(outcomes: &[EvalOutcome]) -> MetricSummary {
    // Macro-F1 over the ten categories. A gated labeled utterance predicts
    // nothing: it adds a false negative for its true class.
    let mut tp = [0usize; N_CLASSES];
    let mut fp = [0usize; N_CLASSES];
    let mut fn_ = [0usize; N_CLASSES];
    for o in outcomes {
        let Some(label) = &o.label else { continue };
        let truth = label.category as usize;
        match (&o.pred, o.gated) {
            (Some(p), false) => {
                let got = p.category() as usize;
                if got == truth {
                    tp[truth] += 1;
                } else {
                    fp[got] += 1;
                    fn_[truth] += 1;
                }
            }
            _ => fn_[truth] += 1,
        }
    }
    let mut f1_sum = 0.0;
    for c in 0..N_CLASSES {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom > 0 {
            f1_sum += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    let macro_f1 = f1_sum / N_CLASSES as f64;

    // CCC per attribute over non-gated labeled records.
    let mut ccc3 = [0.0f64; 3];
    for a in 0..3 {
        let mut preds = Vec::new();
        let mut targets = Vec::new();
        for o in outcomes {
            if let (Some(label), Some(p), false) = (&o.label, &o.pred, o.gated) {
                preds.push(p.attr(a));
                targets.push(label.attr(a));
            }
        }
        ccc3[a] = if preds.len() >= 2 {
            crate::emotion::ccc(&preds, &targets)
        } else {
            0.0
        };
    }

    // Detection accuracy: noise should gate, labeled speech should not.
    let mut correct = 0usize;
    let mut n_noise = 0usize;
    let mut noise_gated = 0usize;
    let mut n_labeled = 0usize;
    let mut gated_speech = 0usize;
    for o in outcomes {
        match o.kind {
            Kind::Noise => {
                n_noise += 1;
                if o.gated {
                    noise_gated += 1;
                    correct += 1;
                }
            }
            _ => {
                n_labeled += 1;
                if o.gated {
                    gated_speech += 1;
                } else {
                    correct += 1;
                }
            }
        }
    }
    let detection_accuracy = if outcomes.is_empty() {
        0.0
    } else {
        correct as f64 / outcomes.len() as f64
    };
    let gate_rate_noise = if n_noise == 0 {
        0.0
    } else {
        noise_gated as f64 / n_noise as f64
    };

    // Mean raw score per group, ordered noise, ascending SNR, clean.
    let mut groups: Vec<GroupSummary> = Vec::new();
    for o in outcomes {
        match groups.iter_mut().find(|g| g.group == o.group) {
            Some(g) => {
                g.mean_raw += o.raw;
                g.count += 1;
            }
            None => groups.push(GroupSummary {
                group: o.group.clone(),
                mean_raw: o.raw,
                count: 1,
            }),
        }
    }
    for g in &mut groups {
        g.mean_raw /= g.count as f64;
    }
    groups.sort_by_key(|g| match g.group.as_str() {
        "noise_only" => (0, 0i64),
        "clean" => (2, 0),
        other => (
            1,
            other
                .strip_prefix("snr_")
                .and_then(|s| s.parse::<i64>().ok())
                .unwrap_or(0),
        ),
    });

    MetricSummary {
        macro_f1,
        ccc_arousal: ccc3[0],
        ccc_valence: ccc3[1],
        ccc_dominance: ccc3[2],
        detection_accuracy,
        gate_rate_noise,
        gated_speech,
        n_labeled,
        n_noise,
        mean_s_per_group: groups,
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub metrics: MetricSummary,
    pub outcomes: Vec<EvalOutcome>,
    pub runtime_secs: f64,
    pub skipped: usize,
}

/// Run the full NRSER inference path over a record set and compute metrics.
pub fn evaluate(
    records: &[ManifestRecord],
    enhancer: &Enhancer,
    scorer: &LinearScorer,
    model: &EmotionModel,
    threshold: f64,
) -> Result<EvalReport> {
    let started = Instant::now();
    let mut outcomes = Vec::with_capacity(records.len());
    let mut skipped = 0usize;
    for rec in records {
        let w = match read_wav(&rec.path).and_then(|w| resample_to_16k(&w)) {
            Ok(w) => w,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let out = infer(&w, enhancer, scorer, model, threshold, Some(&rec.id()))?;
        outcomes.push(EvalOutcome {
            id: rec.id(),
            kind: rec.kind,
            group: record_group(rec),
            label: rec.label(),
            gated: out.is_gated(),
            raw: out.raw(),
            s_prime: out.s_prime(),
            pred: match out {
                InferOutcome::Prediction { pred, .. } => Some(pred),
                InferOutcome::Gated { .. } => None,
            },
        });
    }
    Ok(EvalReport {
        metrics: compute_metrics(&outcomes),
        outcomes,
        runtime_secs: started.elapsed().as_secs_f64(),
        skipped,
    })
}

/// Predictions CSV: one row per record with probabilities, attributes, score
/// and gate flag. Gated rows leave the prediction columns empty.
pub fn write_predictions_csv(outcomes: &[EvalOutcome], path: &Path) -> Result<()> {
    let mut out = String::from(
        "id,category,p0,p1,p2,p3,p4,p5,p6,p7,p8,p9,arousal,valence,dominance,s_prime,gated\n",
    );
    for o in outcomes {
        match &o.pred {
            Some(p) => {
                let probs: Vec<String> =
                    p.category_probs.iter().map(|v| format!("{v}")).collect();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    o.id,
                    p.category(),
                    probs.join(","),
                    p.arousal,
                    p.valence,
                    p.dominance,
                    o.s_prime,
                    o.gated
                ));
            }
            None => {
                out.push_str(&format!(
                    "{},,,,,,,,,,,,,,,{},{}\n",
                    o.id, o.s_prime, o.gated
                ));
            }
        }
    }
    fsio::atomic_write_str(path, &out)
}

// ---------------------------------------------------------------------------
// Desk corpus assembly
// ---------------------------------------------------------------------------

/// The synthetic corpus with its mixture sets: training/validation mixtures
/// at 6/10/14 dB against training noise, and test mixtures at 8 and 12 dB
/// against held-out noise.
#[derive(Debug, Clone)]
pub struct DeskCorpus {
    pub speech: Vec<ManifestRecord>,
    pub noise: Vec<ManifestRecord>,
    pub mix_trainval: Vec<ManifestRecord>,
    pub mix_test_8: Vec<ManifestRecord>,
    pub mix_test_12: Vec<ManifestRecord>,
}

impl DeskCorpus {
    pub fn split(records: &[ManifestRecord], split: Split) -> Vec<ManifestRecord> {
        records
            .iter()
            .filter(|r| r.split == split)
            .cloned()
            .collect()
    }

    pub fn speech_split(&self, split: Split) -> Vec<ManifestRecord> {
        Self::split(&self.speech, split)
    }

    pub fn noise_split(&self, split: Split) -> Vec<ManifestRecord> {
        Self::split(&self.noise, split)
    }

    /// Clean speech plus mixtures for one split: the emotion-training diet.
    pub fn emotion_records(&self, split: Split) -> Vec<ManifestRecord> {
        let mut out = self.speech_split(split);
        out.extend(Self::split(&self.mix_trainval, split));
        out
    }
}

pub const TRAIN_SNR_LEVELS: [f64; 3] = [6.0, 10.0, 14.0];
pub const TEST_SNR_LEVELS: [f64; 2] = [8.0, 12.0];

/// Generate the corpus and all mixture sets under `out_dir`, writing
/// manifests alongside.
pub fn prepare_desk_corpus(out_dir: &Path, seed: u64, synth_cfg: &SynthConfig) -> Result<DeskCorpus> {
    let (speech, noise) = generate_synthetic_desk_data(out_dir, seed, synth_cfg)?;

    let speech_trainval: Vec<ManifestRecord> = speech
        .iter()
        .filter(|r| r.split != Split::Test)
        .cloned()
        .collect();
    let speech_test = DeskCorpus::split(&speech, Split::Test);
    let noise_trainval: Vec<ManifestRecord> = noise
        .iter()
        .filter(|r| r.split != Split::Test)
        .cloned()
        .collect();
    let noise_test = DeskCorpus::split(&noise, Split::Test);

    let mix_trainval = synthesize_corpus(
        &speech_trainval,
        &noise_trainval,
        &TRAIN_SNR_LEVELS,
        derive_seed(seed, 21),
        &out_dir.join("mix_trainval"),
    )?;
    let mix_test_8 = synthesize_corpus(
        &speech_test,
        &noise_test,
        &[8.0],
        derive_seed(seed, 22),
        &out_dir.join("mix_test_8"),
    )?;
    let mix_test_12 = synthesize_corpus(
        &speech_test,
        &noise_test,
        &[12.0],
        derive_seed(seed, 23),
        &out_dir.join("mix_test_12"),
    )?;

    crate::manifest::write_manifest(&out_dir.join("mix_trainval.jsonl"), &mix_trainval)?;
    crate::manifest::write_manifest(&out_dir.join("mix_test_8.jsonl"), &mix_test_8)?;
    crate::manifest::write_manifest(&out_dir.join("mix_test_12.jsonl"), &mix_test_12)?;

    Ok(DeskCorpus {
        speech,
        noise,
        mix_trainval,
        mix_test_8,
        mix_test_12,
    })
}

// ---------------------------------------------------------------------------
// System comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    SClean,
    SNoisy,
    SEn,
    SEnPrime,
    Nrser,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::SClean,
        Variant::SNoisy,
        Variant::SEn,
        Variant::SEnPrime,
        Variant::Nrser,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::SClean => "s_clean",
            Variant::SNoisy => "s_noisy",
            Variant::SEn => "s_en",
            Variant::SEnPrime => "s_en_prime",
            Variant::Nrser => "nrser",
        }
    }
}

#[derive(Debug, Clone)]
pub struct VariantRow {
    pub variant: &'static str,
    pub condition: String,
    pub metrics: MetricSummary,
}

/// Evaluate a gate-less emotion model under a fixed test-time transform.
fn evaluate_plain(
    records: &[ManifestRecord],
    mode: InputMode,
    enhancer: &Enhancer,
    model: &EmotionModel,
) -> Result<Vec<EvalOutcome>> {
    let fb = crate::dsp::MelFilterbank::new(
        crate::dsp::MEL_BINS,
        crate::dsp::StftConfig::default().n_bins(),
        16_000,
    );
    let mut outcomes = Vec::with_capacity(records.len());
    for rec in records {
        let w = resample_to_16k(&read_wav(&rec.path)?)?;
        let x = match mode {
            InputMode::Raw => crate::emotion::pooled_logmel(&w, &fb),
            InputMode::Enhanced => {
                let (w_en, _, _) = enhancer.enhance_waveform(&w, Some(&rec.id()))?;
                crate::emotion::pooled_logmel(&w_en, &fb)
            }
            InputMode::Reconstituted => {
                return Err(Error::InvalidConfig(
                    "plain evaluation has no scorer; use evaluate()".into(),
                ))
            }
        };
        outcomes.push(EvalOutcome {
            id: rec.id(),
            kind: rec.kind,
            group: record_group(rec),
            label: rec.label(),
            gated: false,
            raw: f64::NAN,
            s_prime: f64::NAN,
            pred: Some(model.predict_features(&x)),
        });
    }
    Ok(outcomes)
}

/// Train every variant per its configuration row and evaluate each on clean,
/// 12 dB and 8 dB test conditions (plus held-out noise for the gate
/// metrics). Returns one row per variant and condition.
pub fn compare_variants(
    cfg: &SystemConfig,
    corpus: &DeskCorpus,
    work_dir: &Path,
) -> Result<Vec<VariantRow>> {
    let enhancer = cfg.enhancer()?;

    let speech_train = corpus.speech_split(Split::Train);
    let speech_val = corpus.speech_split(Split::Val);
    let emo_train = corpus.emotion_records(Split::Train);
    let emo_val = corpus.emotion_records(Split::Val);

    let hyper_for = |salt: u64| TrainConfig {
        seed: derive_seed(cfg.seed, salt),
        ..cfg.emotion_hyper.clone()
    };

    // S-clean: emotion block only, clean training data. S-en reuses it with
    // enhancement at test time.
    let (m_clean, _) = train_emotion(
        &speech_train,
        &speech_val,
        InputMode::Raw,
        &enhancer,
        None,
        &hyper_for(11),
        &cfg.loss_weights,
    )?;
    // S-noisy: clean plus contaminated training data, no enhancement.
    let (m_noisy, _) = train_emotion(
        &emo_train,
        &emo_val,
        InputMode::Raw,
        &enhancer,
        None,
        &hyper_for(12),
        &cfg.loss_weights,
    )?;
    // S-en': enhancement at training and test time.
    let (m_enp, _) = train_emotion(
        &emo_train,
        &emo_val,
        InputMode::Enhanced,
        &enhancer,
        None,
        &hyper_for(13),
        &cfg.loss_weights,
    )?;
    // NRSER: the full three phases.
    let paths = PipelinePaths::new(work_dir);
    run_phase1(cfg, &corpus.speech, &corpus.noise, &paths)?;
    run_phase2(cfg, &emo_train, &emo_val, &paths)?;
    let nrser = run_phase3(
        cfg,
        &emo_train,
        &emo_val,
        &corpus.speech,
        &corpus.noise,
        &paths,
    )?;

    let noise_test = corpus.noise_split(Split::Test);
    let conditions: [(&str, Vec<ManifestRecord>); 3] = [
        ("clean", corpus.speech_split(Split::Test)),
        ("snr_12", corpus.mix_test_12.clone()),
        ("snr_8", corpus.mix_test_8.clone()),
    ];

    let mut rows = Vec::with_capacity(Variant::ALL.len() * conditions.len());
    for variant in Variant::ALL {
        for (cond, labeled) in &conditions {
            let mut records = labeled.clone();
            records.extend(noise_test.iter().cloned());
            let metrics = match variant {
                Variant::SClean => {
                    compute_metrics(&evaluate_plain(&records, InputMode::Raw, &enhancer, &m_clean)?)
                }
                Variant::SNoisy => {
                    compute_metrics(&evaluate_plain(&records, InputMode::Raw, &enhancer, &m_noisy)?)
                }
                Variant::SEn => compute_metrics(&evaluate_plain(
                    &records,
                    InputMode::Enhanced,
                    &enhancer,
                    &m_clean,
                )?),
                Variant::SEnPrime => compute_metrics(&evaluate_plain(
                    &records,
                    InputMode::Enhanced,
                    &enhancer,
                    &m_enp,
                )?),
                Variant::Nrser => {
                    evaluate(&records, &enhancer, &nrser.scorer, &nrser.emotion, cfg.threshold)?
                        .metrics
                }
            };
            rows.push(VariantRow {
                variant: variant.name(),
                condition: cond.to_string(),
                metrics,
            });
        }
    }
    Ok(rows)
}

pub fn write_comparison_csv(rows: &[VariantRow], path: &Path) -> Result<()> {
    let mut out = String::from(
        "variant,condition,macro_f1,ccc_arousal,ccc_valence,ccc_dominance,\
         detection_accuracy,gated_refusal_rate_noise\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.variant,
            r.condition,
            r.metrics.macro_f1,
            r.metrics.ccc_arousal,
            r.metrics.ccc_valence,
            r.metrics.ccc_dominance,
            r.metrics.detection_accuracy,
            r.metrics.gate_rate_noise,
        ));
    }
    fsio::atomic_write_str(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emotion::EmotionLabel;

    fn outcome(
        id: &str,
        kind: Kind,
        label: Option<EmotionLabel>,
        pred_cat: Option<u8>,
        gated: bool,
    ) -> EvalOutcome {
        let pred = pred_cat.map(|c| {
            let mut probs = vec![0.01; N_CLASSES];
            probs[c as usize] = 1.0 - 0.09;
            EmotionPrediction {
                category_probs: probs,
                arousal: label.map(|l| l.arousal).unwrap_or(4.0),
                valence: label.map(|l| l.valence).unwrap_or(4.0),
                dominance: label.map(|l| l.dominance).unwrap_or(4.0),
            }
        });
        EvalOutcome {
            id: id.into(),
            kind,
            group: match kind {
                Kind::Noise => "noise_only".into(),
                _ => "clean".into(),
            },
            label,
            gated,
            raw: 0.5,
            s_prime: 0.5,
            pred,
        }
    }

    fn label(cat: u8) -> EmotionLabel {
        EmotionLabel {
            category: cat,
            arousal: 2.0 + cat as f64 * 0.3,
            valence: 6.0 - cat as f64 * 0.2,
            dominance: 3.0 + cat as f64 * 0.1,
        }
    }

    #[test]
    fn perfect_predictions_score_one() {
        let outcomes: Vec<EvalOutcome> = (0..10)
            .flat_map(|c| {
                (0..3).map(move |i| {
                    outcome(
                        &format!("s{c}_{i}"),
                        Kind::Speech,
                        Some(label(c)),
                        Some(c),
                        false,
                    )
                })
            })
            .collect();
        let m = compute_metrics(&outcomes);
        assert_eq!(m.macro_f1, 1.0);
        assert!((m.ccc_arousal - 1.0).abs() < 1e-12);
        assert!((m.ccc_valence - 1.0).abs() < 1e-12);
        assert!((m.ccc_dominance - 1.0).abs() < 1e-12);
        assert_eq!(m.detection_accuracy, 1.0);
    }

    #[test]
    fn all_one_class_predictor_on_balanced_set() {
        // Predicting class 0 on a balanced 10-class set: class-0 F1 is
        // 2n/(2n+9n) = 2/11, the rest are 0, macro = 2/110.
        let outcomes: Vec<EvalOutcome> = (0..10)
            .flat_map(|c| {
                (0..4).map(move |i| {
                    outcome(
                        &format!("s{c}_{i}"),
                        Kind::Speech,
                        Some(label(c)),
                        Some(0),
                        false,
                    )
                })
            })
            .collect();
        let m = compute_metrics(&outcomes);
        let want = (2.0 / 11.0) / 10.0;
        assert!((m.macro_f1 - want).abs() < 1e-12, "{} vs {want}", m.macro_f1);
    }

    #[test]
    fn gated_speech_counts_against_f1_and_detection() {
        let outcomes = vec![
            outcome("a", Kind::Speech, Some(label(1)), Some(1), false),
            outcome("b", Kind::Speech, Some(label(1)), None, true),
            outcome("n1", Kind::Noise, None, None, true),
            outcome("n2", Kind::Noise, None, None, false),
        ];
        let m = compute_metrics(&outcomes);
        // Class 1: tp=1, fn=1 -> F1 = 2/(2+0+1) = 2/3.
        assert!((m.macro_f1 - (2.0 / 3.0) / 10.0).abs() < 1e-12);
        // Correct: a (not gated), n1 (gated) -> 2 of 4.
        assert_eq!(m.detection_accuracy, 0.5);
        assert_eq!(m.gated_speech, 1);
        assert!((m.gate_rate_noise - 0.5).abs() < 1e-12);
    }

    #[test]
    fn group_means_are_ordered_noise_snr_clean() {
        let mut o1 = outcome("n", Kind::Noise, None, None, true);
        o1.raw = 0.1;
        let mut o2 = outcome("m", Kind::Mixture, Some(label(0)), Some(0), false);
        o2.group = "snr_6".into();
        o2.raw = 0.5;
        let mut o3 = outcome("m2", Kind::Mixture, Some(label(0)), Some(0), false);
        o3.group = "snr_14".into();
        o3.raw = 0.8;
        let mut o4 = outcome("c", Kind::Speech, Some(label(0)), Some(0), false);
        o4.raw = 0.95;
        let m = compute_metrics(&[o3, o4, o1, o2]);
        let names: Vec<&str> = m.mean_s_per_group.iter().map(|g| g.group.as_str()).collect();
        assert_eq!(names, vec!["noise_only", "snr_6", "snr_14", "clean"]);
    }
}
