//! Checkpoint files: one JSON header line (schema version, block name,
//! phase, tensor shapes, seed, hyperparameters), then the parameters as
//! little-endian float32, one file per block. Serialization is
//! deterministic, so identical training runs produce byte-identical files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::emotion::{EmotionModel, FEATURE_DIM, HIDDEN_DIM, N_ATTRS, N_CLASSES};
use crate::error::{Error, Result};
use crate::fsio;
use crate::snr::LinearScorer;
use crate::train::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub schema_version: u32,
    pub block: String,
    pub phase: u8,
    pub shapes: Vec<(String, Vec<usize>)>,
    pub seed: u64,
    pub hyper: TrainConfig,
}

fn param_total(shapes: &[(String, Vec<usize>)]) -> usize {
    shapes
        .iter()
        .map(|(_, dims)| dims.iter().product::<usize>())
        .sum()
}

pub fn write_checkpoint(path: &Path, header: &CheckpointHeader, params: &[f64]) -> Result<()> {
    assert_eq!(
        params.len(),
        param_total(&header.shapes),
        "checkpoint shapes do not cover the parameter payload"
    );
    let mut bytes = serde_json::to_vec(header).expect("header serializes");
    bytes.push(b'\n');
    bytes.reserve(params.len() * 4);
    for &p in params {
        bytes.extend_from_slice(&(p as f32).to_le_bytes());
    }
    fsio::atomic_write(path, &bytes)
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint {
            path: path.to_path_buf(),
            detail: "missing header line".into(),
        })?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..newline]).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            detail: format!("bad header: {e}"),
        })?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            detail: format!("unsupported schema version {}", header.schema_version),
        });
    }
    let payload = &bytes[newline + 1..];
    let expected = param_total(&header.shapes);
    if payload.len() != expected * 4 {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            detail: format!(
                "payload is {} bytes, shapes want {}",
                payload.len(),
                expected * 4
            ),
        });
    }
    let params: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((header, params))
}

pub fn save_scorer(
    path: &Path,
    scorer: &LinearScorer,
    phase: u8,
    hyper: &TrainConfig,
) -> Result<()> {
    let header = CheckpointHeader {
        schema_version: SCHEMA_VERSION,
        block: "snr_scorer".into(),
        phase,
        shapes: vec![
            ("weights".into(), vec![scorer.dim()]),
            ("bias".into(), vec![1]),
        ],
        seed: hyper.seed,
        hyper: hyper.clone(),
    };
    let mut params = scorer.weights.clone();
    params.push(scorer.bias);
    write_checkpoint(path, &header, &params)
}

pub fn load_scorer(path: &Path) -> Result<LinearScorer> {
    let (header, params) = read_checkpoint(path)?;
    if header.block != "snr_scorer" {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            detail: format!("expected an snr_scorer block, found {}", header.block),
        });
    }
    let dim = params.len() - 1;
    Ok(LinearScorer {
        weights: params[..dim].to_vec(),
        bias: params[dim],
    })
}

pub fn save_emotion(
    path: &Path,
    model: &EmotionModel,
    phase: u8,
    hyper: &TrainConfig,
) -> Result<()> {
    let header = CheckpointHeader {
        schema_version: SCHEMA_VERSION,
        block: "emotion".into(),
        phase,
        shapes: vec![
            ("w_hidden".into(), vec![model.hidden_dim, model.input_dim]),
            ("b_hidden".into(), vec![model.hidden_dim]),
            ("w_cat".into(), vec![model.n_classes, model.hidden_dim]),
            ("b_cat".into(), vec![model.n_classes]),
            ("w_attr".into(), vec![N_ATTRS, model.hidden_dim]),
            ("b_attr".into(), vec![N_ATTRS]),
        ],
        seed: hyper.seed,
        hyper: hyper.clone(),
    };
    let flat = model.to_flat();
    // Reorder to the header's tensor order: attribute weights together, then
    // attribute biases.
    let mut params = Vec::with_capacity(flat.len());
    let wh = model.hidden_dim * model.input_dim;
    let wc = model.n_classes * model.hidden_dim;
    let base = wh + model.hidden_dim + wc + model.n_classes;
    params.extend_from_slice(&flat[..base]);
    for a in 0..N_ATTRS {
        let start = base + a * (model.hidden_dim + 1);
        params.extend_from_slice(&flat[start..start + model.hidden_dim]);
    }
    for a in 0..N_ATTRS {
        let start = base + a * (model.hidden_dim + 1);
        params.push(flat[start + model.hidden_dim]);
    }
    write_checkpoint(path, &header, &params)
}

pub fn load_emotion(path: &Path) -> Result<EmotionModel> {
    let (header, params) = read_checkpoint(path)?;
    if header.block != "emotion" {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            detail: format!("expected an emotion block, found {}", header.block),
        });
    }
    let dims: std::collections::HashMap<&str, &Vec<usize>> = header
        .shapes
        .iter()
        .map(|(n, d)| (n.as_str(), d))
        .collect();
    let hidden_dim = dims
        .get("b_hidden")
        .and_then(|d| d.first())
        .copied()
        .unwrap_or(HIDDEN_DIM);
    let input_dim = dims
        .get("w_hidden")
        .and_then(|d| d.get(1))
        .copied()
        .unwrap_or(FEATURE_DIM);
    let n_classes = dims
        .get("b_cat")
        .and_then(|d| d.first())
        .copied()
        .unwrap_or(N_CLASSES);

    // Undo the save-side tensor ordering.
    let wh = hidden_dim * input_dim;
    let wc = n_classes * hidden_dim;
    let base = wh + hidden_dim + wc + n_classes;
    let mut flat = Vec::with_capacity(params.len());
    flat.extend_from_slice(&params[..base]);
    for a in 0..N_ATTRS {
        let wstart = base + a * hidden_dim;
        flat.extend_from_slice(&params[wstart..wstart + hidden_dim]);
        flat.push(params[base + N_ATTRS * hidden_dim + a]);
    }
    EmotionModel::from_flat(input_dim, hidden_dim, n_classes, &flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("nrser-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn scorer_round_trip_at_f32_precision() {
        let mut rng = crate::rng::rng_for(91);
        let scorer = LinearScorer {
            weights: (0..201).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: 0.37,
        };
        let path = tmp("scorer.ckpt");
        let hyper = TrainConfig::scorer_defaults(7);
        save_scorer(&path, &scorer, 1, &hyper).unwrap();
        let back = load_scorer(&path).unwrap();
        assert_eq!(back.dim(), 201);
        for (a, b) in scorer.weights.iter().zip(&back.weights) {
            assert!((a - b).abs() <= (*a as f32).abs() as f64 * 1e-7 + 1e-9);
        }
        assert!((back.bias - 0.37).abs() < 1e-7);
    }

    #[test]
    fn emotion_round_trip_preserves_structure() {
        let model = EmotionModel::init(8, 6, 4, 13);
        let path = tmp("emotion.ckpt");
        save_emotion(&path, &model, 2, &TrainConfig::emotion_defaults(13)).unwrap();
        let back = load_emotion(&path).unwrap();
        assert_eq!(back.input_dim, 8);
        assert_eq!(back.hidden_dim, 6);
        assert_eq!(back.n_classes, 4);
        for (a, b) in model.to_flat().iter().zip(back.to_flat()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn identical_saves_are_byte_identical() {
        let model = EmotionModel::init(8, 6, 4, 29);
        let p1 = tmp("em1.ckpt");
        let p2 = tmp("em2.ckpt");
        let hyper = TrainConfig::emotion_defaults(29);
        save_emotion(&p1, &model, 2, &hyper).unwrap();
        save_emotion(&p2, &model, 2, &hyper).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn wrong_block_and_truncation_are_rejected() {
        let scorer = LinearScorer::new(8);
        let path = tmp("wrong.ckpt");
        save_scorer(&path, &scorer, 1, &TrainConfig::scorer_defaults(1)).unwrap();
        assert!(load_emotion(&path).is_err());

        let bytes = std::fs::read(&path).unwrap();
        let cut = tmp("cut.ckpt");
        std::fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_scorer(&cut),
            Err(Error::Checkpoint { .. })
        ));
    }
}
