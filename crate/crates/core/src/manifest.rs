//! JSONL dataset manifests.
//!
//! One record per line. Fields: `path`, `split`, `kind`, and, when present,
//! `category`, `arousal`, `valence`, `dominance` (labels) plus `noise_path`,
//! `snr_db`, `seed` (mixture provenance). Absent fields are omitted from the
//! JSON. Relative paths are resolved against the manifest's directory on
//! read, so corpora stay relocatable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::emotion::EmotionLabel;
use crate::error::{Error, Result};
use crate::fsio;
use crate::mixing::MixSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Speech,
    Noise,
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub path: PathBuf,
    pub split: Split,
    pub kind: Kind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub arousal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dominance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub snr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
}

impl ManifestRecord {
    pub fn new(path: PathBuf, split: Split, kind: Kind) -> Self {
        Self {
            path,
            split,
            kind,
            category: None,
            arousal: None,
            valence: None,
            dominance: None,
            noise_path: None,
            snr_db: None,
            seed: None,
        }
    }

    /// Utterance id: the file stem.
    pub fn id(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn label(&self) -> Option<EmotionLabel> {
        Some(EmotionLabel {
            category: self.category?,
            arousal: self.arousal?,
            valence: self.valence?,
            dominance: self.dominance?,
        })
    }

    pub fn set_label(&mut self, label: &EmotionLabel) {
        self.category = Some(label.category);
        self.arousal = Some(label.arousal);
        self.valence = Some(label.valence);
        self.dominance = Some(label.dominance);
    }

    pub fn mix_spec(&self) -> Option<MixSpec> {
        Some(MixSpec {
            target_snr_db: self.snr_db?,
            noise_path: self.noise_path.clone()?,
            seed: self.seed?,
        })
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: ManifestRecord =
            serde_json::from_str(line).map_err(|e| Error::ManifestParse {
                path: path.to_path_buf(),
                line: i + 1,
                detail: e.to_string(),
            })?;
        if rec.path.is_relative() {
            rec.path = base.join(&rec.path);
        }
        if let Some(np) = &rec.noise_path {
            if np.is_relative() {
                rec.noise_path = Some(base.join(np));
            }
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec).expect("manifest records serialize"));
        out.push('\n');
    }
    fsio::atomic_write_str(path, &out)
}
