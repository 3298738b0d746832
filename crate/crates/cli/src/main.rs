//! `nrser`: synthesis, mixing, enhancement, SNR scoring, three-phase
//! training, inference, evaluation and data-selection filtering for the
//! noise-robust speech emotion recognition pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Every stochastic
//! subcommand takes --seed and is bit-reproducible. NRSER_LOG controls
//! verbosity (error|warn|info|debug).

mod config;
mod logging;
mod parallel;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nrser_core::audio::{read_wav, resample_to_16k, write_wav, WavEncoding};
use nrser_core::emotion::{train_emotion, InputMode};
use nrser_core::fsio;
use nrser_core::manifest::{read_manifest, write_manifest, ManifestRecord, Split};
use nrser_core::mixing::synthesize_corpus;
use nrser_core::pipeline::{
    compare_variants, evaluate, infer, prepare_desk_corpus, run_phase1, run_phase2, run_phase3,
    write_comparison_csv, write_predictions_csv, DeskCorpus, InferOutcome, PipelinePaths,
};
use nrser_core::reconstitution::{reconstitute, waveform_dump_csv};
use nrser_core::snr::{
    classify_noise_only, score, scorer_feature, write_scores_csv, write_summary_csv,
    GroupSummary, ScoreReport, ScoreRow, SnrScore,
};
use nrser_core::synth::{generate_synthetic_desk_data, SynthConfig};
use nrser_core::{checkpoint, Error};

#[derive(Parser)]
#[command(
    name = "nrser",
    about = "Noise-robust speech emotion recognition pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// JSON config file; command-line flags win over file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Gate threshold on the raw SNR score.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Enhancer: spectral_subtraction, wiener or external.
    #[arg(long, global = true)]
    enhancer_kind: Option<String>,
    /// Over-subtraction factor.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Spectral floor.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Quantile of lowest-energy frames for the noise profile.
    #[arg(long, global = true)]
    noise_quantile: Option<f64>,
    /// Directory of externally enhanced <utterance_id>.wav files.
    #[arg(long, global = true)]
    external_dir: Option<PathBuf>,
    /// Cap on training epochs (applies to every block being trained).
    #[arg(long, global = true)]
    max_epochs: Option<usize>,
    /// Worker threads for per-utterance batch subcommands.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

impl CommonOpts {
    fn overrides(&self) -> config::Overrides {
        config::Overrides {
            threshold: self.threshold,
            enhancer_kind: self.enhancer_kind.clone(),
            alpha: self.alpha,
            beta: self.beta,
            noise_quantile: self.noise_quantile,
            external_dir: self.external_dir.clone(),
            joint_score_grad: None,
            max_epochs: self.max_epochs,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic desk corpus (speech with labels, noise).
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        n_speech: usize,
        #[arg(long, default_value_t = 100)]
        n_noise: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Contaminate speech with noise at the given SNR levels.
    Mix {
        #[arg(long)]
        speech: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        /// Comma-separated SNR levels in dB, e.g. 6,10,14.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Where to write the mixture manifest (default <out>/mixtures.jsonl).
        #[arg(long)]
        out_manifest: Option<PathBuf>,
        /// Only mix records of this split (train|val|test).
        #[arg(long)]
        split: Option<String>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Enhance a single WAV file.
    Enhance {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Score every record of a manifest with a trained scorer.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scorer: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional per-group mean CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Phase 1: train the SNR scorer on clean speech and noise.
    TrainSnr {
        #[arg(long)]
        speech: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Phase 2: train the emotion block (mode: raw|enhanced|reconstituted).
    TrainEmotion {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long, default_value = "enhanced")]
        mode: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Scorer checkpoint (required for reconstituted mode; for enhanced
        /// mode marks the phase-1 prerequisite).
        #[arg(long)]
        scorer: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Phase 3: jointly fine-tune the emotion block and the scorer.
    Finetune {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        speech: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Let the emotion loss push gradients through S' into the scorer.
        #[arg(long)]
        joint_score_grad: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run inference on one WAV file: prediction or gated refusal.
    Infer {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        scorer: PathBuf,
        #[arg(long)]
        emotion: PathBuf,
        /// Dump (index, w_in, w_en, w_re) rows to this CSV.
        #[arg(long)]
        dump_csv: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Evaluate trained checkpoints over one or more manifests.
    Eval {
        #[arg(long, required = true)]
        manifest: Vec<PathBuf>,
        #[arg(long)]
        scorer: PathBuf,
        #[arg(long)]
        emotion: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Train and evaluate all five system configurations.
    Compare {
        /// Directory for the generated corpus and checkpoints.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        n_speech: usize,
        #[arg(long, default_value_t = 100)]
        n_noise: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Keep manifest records the scorer rates at or above the threshold.
    Filter {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scorer: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rejected ids with scores/reasons.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits; anything else is a
            // usage error.
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("nrser: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("nrser: {msg}");
            ExitCode::from(2)
        }
    }
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn system_config(
    seed: u64,
    common: &CommonOpts,
    joint_score_grad: Option<bool>,
) -> Result<nrser_core::pipeline::SystemConfig, CliError> {
    let mut over = common.overrides();
    over.joint_score_grad = joint_score_grad;
    config::resolve(seed, common.config.as_deref(), &over).map_err(usage)
}

fn split_of(name: &str) -> Result<Split, CliError> {
    match name {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(usage(format!("unknown split {other:?}"))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SynthData {
            out,
            seed,
            n_speech,
            n_noise,
            common: _,
        } => {
            let cfg = SynthConfig {
                n_speech,
                n_noise,
                ..SynthConfig::default()
            };
            let (speech, noise) = generate_synthetic_desk_data(&out, seed, &cfg)?;
            logging::info(&format!(
                "wrote {} speech and {} noise records under {}",
                speech.len(),
                noise.len(),
                out.display()
            ));
            println!(
                "speech manifest: {}\nnoise manifest: {}",
                out.join("speech.jsonl").display(),
                out.join("noise.jsonl").display()
            );
            Ok(())
        }

        Command::Mix {
            speech,
            noise,
            levels,
            out,
            seed,
            out_manifest,
            split,
            common: _,
        } => {
            if levels.is_empty() {
                return Err(usage("--levels needs at least one SNR value"));
            }
            let mut speech_records = read_manifest(&speech)?;
            if let Some(name) = &split {
                let wanted = split_of(name)?;
                speech_records.retain(|r| r.split == wanted);
            }
            let noise_records = read_manifest(&noise)?;
            let mixtures = synthesize_corpus(&speech_records, &noise_records, &levels, seed, &out)?;
            let manifest_path = out_manifest.unwrap_or_else(|| out.join("mixtures.jsonl"));
            write_manifest(&manifest_path, &mixtures)?;
            println!("{} mixtures -> {}", mixtures.len(), manifest_path.display());
            Ok(())
        }

        Command::Enhance { wav, out, common } => {
            let cfg = system_config(0, &common, None)?;
            let enhancer = cfg.enhancer()?;
            let w = resample_to_16k(&read_wav(&wav)?)?;
            let id = wav
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let (w_en, _, _) = enhancer.enhance_waveform(&w, Some(&id))?;
            let clipped = write_wav(&w_en, &out, WavEncoding::Float32)?;
            if clipped > 0 {
                logging::warn(&format!("{clipped} samples clipped writing {}", out.display()));
            }
            println!("enhanced {} -> {}", wav.display(), out.display());
            Ok(())
        }

        Command::Score {
            manifest,
            scorer,
            out,
            summary,
            common,
        } => {
            let cfg = system_config(0, &common, None)?;
            let enhancer = cfg.enhancer()?;
            let scorer = checkpoint::load_scorer(&scorer)?;
            let records = read_manifest(&manifest)?;
            let report = score_records_parallel(&records, &scorer, &enhancer, cfg.threshold, common.jobs)?;
            if report.skipped > 0 {
                logging::warn(&format!("{} unreadable records skipped", report.skipped));
            }
            write_scores_csv(&report, &out)?;
            if let Some(path) = summary {
                write_summary_csv(&report, &path)?;
            }
            println!("{} rows -> {}", report.rows.len(), out.display());
            Ok(())
        }

        Command::TrainSnr {
            speech,
            noise,
            out_dir,
            seed,
            common,
        } => {
            let cfg = system_config(seed, &common, None)?;
            let speech_records = read_manifest(&speech)?;
            let noise_records = read_manifest(&noise)?;
            let paths = PipelinePaths::new(&out_dir);
            run_phase1(&cfg, &speech_records, &noise_records, &paths)?;
            println!("scorer checkpoint: {}", paths.scorer_phase1().display());
            Ok(())
        }

        Command::TrainEmotion {
            train,
            val,
            mode,
            out_dir,
            seed,
            scorer,
            common,
        } => {
            let cfg = system_config(seed, &common, None)?;
            let train_records = read_manifest(&train)?;
            let val_records = read_manifest(&val)?;
            let paths = PipelinePaths::new(&out_dir);
            match mode.as_str() {
                "enhanced" => {
                    run_phase2(&cfg, &train_records, &val_records, &paths)?;
                    println!("emotion checkpoint: {}", paths.emotion_phase2().display());
                }
                "raw" | "reconstituted" => {
                    let enhancer = cfg.enhancer()?;
                    let (input_mode, loaded);
                    let scorer_ref = match mode.as_str() {
                        "raw" => {
                            input_mode = InputMode::Raw;
                            None
                        }
                        _ => {
                            let path = scorer.as_ref().ok_or_else(|| {
                                usage("reconstituted mode needs --scorer CKPT")
                            })?;
                            input_mode = InputMode::Reconstituted;
                            loaded = checkpoint::load_scorer(path)?;
                            Some(&loaded)
                        }
                    };
                    let (model, log) = train_emotion(
                        &train_records,
                        &val_records,
                        input_mode,
                        &enhancer,
                        scorer_ref,
                        &cfg.emotion_hyper,
                        &cfg.loss_weights,
                    )?;
                    std::fs::create_dir_all(out_dir.join("checkpoints")).map_err(|source| {
                        Error::Write {
                            path: out_dir.join("checkpoints"),
                            source,
                        }
                    })?;
                    let ckpt = out_dir.join(format!("checkpoints/emotion_{mode}.ckpt"));
                    checkpoint::save_emotion(&ckpt, &model, 2, &cfg.emotion_hyper)?;
                    fsio::atomic_write_str(&out_dir.join(format!("logs_emotion_{mode}.jsonl")), &log.to_jsonl())?;
                    println!("emotion checkpoint: {}", ckpt.display());
                }
                other => return Err(usage(format!("unknown mode {other:?}"))),
            }
            Ok(())
        }

        Command::Finetune {
            train,
            val,
            speech,
            noise,
            out_dir,
            seed,
            joint_score_grad,
            common,
        } => {
            let cfg = system_config(seed, &common, Some(joint_score_grad))?;
            let train_records = read_manifest(&train)?;
            let val_records = read_manifest(&val)?;
            let speech_records = read_manifest(&speech)?;
            let noise_records = read_manifest(&noise)?;
            let paths = PipelinePaths::new(&out_dir);
            run_phase3(
                &cfg,
                &train_records,
                &val_records,
                &speech_records,
                &noise_records,
                &paths,
            )?;
            println!(
                "checkpoints: {} {}",
                paths.emotion_phase3().display(),
                paths.scorer_phase3().display()
            );
            Ok(())
        }

        Command::Infer {
            wav,
            scorer,
            emotion,
            dump_csv,
            common,
        } => {
            let cfg = system_config(0, &common, None)?;
            let enhancer = cfg.enhancer()?;
            let scorer = checkpoint::load_scorer(&scorer)?;
            let model = checkpoint::load_emotion(&emotion)?;
            let w = resample_to_16k(&read_wav(&wav)?)?;
            let id = wav
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();

            if let Some(path) = &dump_csv {
                let (w_en, s_orig, s_enh) = enhancer.enhance_waveform(&w, Some(&id))?;
                let f = nrser_core::snr::similarity_feature(&s_orig, &s_enh)?;
                let s = score(&f, &scorer)?;
                let rec = reconstitute(&w, &w_en, &s, cfg.threshold)?;
                fsio::atomic_write_str(path, &waveform_dump_csv(&w, &w_en, &rec.w_re))?;
            }

            match infer(&w, &enhancer, &scorer, &model, cfg.threshold, Some(&id))? {
                InferOutcome::Gated { s_prime, .. } => {
                    println!("gated (S'={s_prime:.4})");
                }
                InferOutcome::Prediction { pred, s_prime, .. } => {
                    let probs: Vec<String> =
                        pred.category_probs.iter().map(|p| format!("{p:.4}")).collect();
                    println!(
                        "category={} arousal={:.3} valence={:.3} dominance={:.3} S'={:.4} probs=[{}]",
                        pred.category(),
                        pred.arousal,
                        pred.valence,
                        pred.dominance,
                        s_prime,
                        probs.join(",")
                    );
                }
            }
            Ok(())
        }

        Command::Eval {
            manifest,
            scorer,
            emotion,
            out,
            predictions,
            common,
        } => {
            let cfg = system_config(0, &common, None)?;
            let enhancer = cfg.enhancer()?;
            let scorer = checkpoint::load_scorer(&scorer)?;
            let model = checkpoint::load_emotion(&emotion)?;
            let mut records = Vec::new();
            for path in &manifest {
                records.extend(read_manifest(path)?);
            }
            let report = evaluate(&records, &enhancer, &scorer, &model, cfg.threshold)?;
            if report.skipped > 0 {
                logging::warn(&format!("{} unreadable records skipped", report.skipped));
            }
            let m = &report.metrics;
            let mut csv = String::from(
                "macro_f1,ccc_arousal,ccc_valence,ccc_dominance,detection_accuracy,\
                 gate_rate_noise,gated_speech,n_labeled,n_noise,runtime_secs\n",
            );
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                m.macro_f1,
                m.ccc_arousal,
                m.ccc_valence,
                m.ccc_dominance,
                m.detection_accuracy,
                m.gate_rate_noise,
                m.gated_speech,
                m.n_labeled,
                m.n_noise,
                report.runtime_secs
            ));
            csv.push_str("group,mean_raw,count\n");
            for g in &m.mean_s_per_group {
                csv.push_str(&format!("{},{},{}\n", g.group, g.mean_raw, g.count));
            }
            fsio::atomic_write_str(&out, &csv)?;
            if let Some(path) = predictions {
                write_predictions_csv(&report.outcomes, &path)?;
            }
            println!(
                "macro_f1={:.4} detection_accuracy={:.4} -> {}",
                m.macro_f1,
                m.detection_accuracy,
                out.display()
            );
            Ok(())
        }

        Command::Compare {
            out_dir,
            seed,
            out,
            n_speech,
            n_noise,
            common,
        } => {
            let cfg = system_config(seed, &common, None)?;
            let synth_cfg = SynthConfig {
                n_speech,
                n_noise,
                ..SynthConfig::default()
            };
            let corpus: DeskCorpus =
                prepare_desk_corpus(&out_dir.join("data"), seed, &synth_cfg)?;
            let rows = compare_variants(&cfg, &corpus, &out_dir.join("nrser_run"))?;
            let csv_path = out.unwrap_or_else(|| out_dir.join("comparison.csv"));
            write_comparison_csv(&rows, &csv_path)?;
            for r in &rows {
                println!(
                    "{:<11} {:<7} macro_f1={:.4} gate_rate_noise={:.3}",
                    r.variant, r.condition, r.metrics.macro_f1, r.metrics.gate_rate_noise
                );
            }
            println!("table -> {}", csv_path.display());
            Ok(())
        }

        Command::Filter {
            manifest,
            scorer,
            out,
            report,
            common,
        } => {
            let cfg = system_config(0, &common, None)?;
            let enhancer = cfg.enhancer()?;
            let scorer = checkpoint::load_scorer(&scorer)?;
            let records = read_manifest(&manifest)?;

            let results = parallel::parallel_map(records.len(), common.jobs, |i| {
                let rec = &records[i];
                match read_wav(&rec.path)
                    .and_then(|w| resample_to_16k(&w))
                    .and_then(|w| scorer_feature(&w, &enhancer, Some(&rec.id())))
                    .and_then(|f| score(&f, &scorer))
                {
                    Ok(s) => (i, Ok(s.raw)),
                    Err(e) => (i, Err(e.to_string())),
                }
            });

            let mut kept = Vec::new();
            let mut rejected = String::from("id,raw_score,reason\n");
            let mut n_rejected = 0usize;
            for (i, outcome) in results {
                let rec = &records[i];
                match outcome {
                    Ok(raw) if raw >= cfg.threshold => kept.push(rec.clone()),
                    Ok(raw) => {
                        rejected.push_str(&format!("{},{},below_threshold\n", rec.id(), raw));
                        n_rejected += 1;
                    }
                    Err(reason) => {
                        rejected.push_str(&format!("{},,{}\n", rec.id(), reason.replace(',', ";")));
                        n_rejected += 1;
                    }
                }
            }
            write_manifest(&out, &kept)?;
            if let Some(path) = report {
                fsio::atomic_write_str(&path, &rejected)?;
            }
            println!(
                "kept {} of {} records -> {}",
                kept.len(),
                records.len(),
                out.display()
            );
            logging::info(&format!("rejected {n_rejected}"));
            Ok(())
        }
    }
}

/// score_manifest with a --jobs-controlled parallel map; output order always
/// follows the manifest.
fn score_records_parallel(
    records: &[ManifestRecord],
    scorer: &nrser_core::snr::LinearScorer,
    enhancer: &nrser_core::enhance::Enhancer,
    threshold: f64,
    jobs: usize,
) -> Result<ScoreReport, Error> {
    let results: Vec<Option<ScoreRow>> = parallel::parallel_map(records.len(), jobs, |i| {
        let rec = &records[i];
        let w = read_wav(&rec.path).and_then(|w| resample_to_16k(&w)).ok()?;
        let f = scorer_feature(&w, enhancer, Some(&rec.id())).ok()?;
        let s: SnrScore = score(&f, scorer).ok()?;
        Some(ScoreRow {
            id: rec.id(),
            raw: s.raw,
            clamped: s.clamped,
            decision: classify_noise_only(&s, threshold),
            group: nrser_core::snr::record_group(rec),
        })
    });

    let mut rows = Vec::with_capacity(records.len());
    let mut skipped = 0usize;
    for r in results {
        match r {
            Some(row) => rows.push(row),
            None => skipped += 1,
        }
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
