//! Run configuration with three-way precedence: built-in defaults, then a
//! JSON config file, then command-line flags.

use std::path::{Path, PathBuf};

use serde_json::Value;

use nrser_core::enhance::{EnhancerConfig, EnhancerKind};
use nrser_core::pipeline::SystemConfig;

/// Flag-level overrides shared by most subcommands; `None` means "not set on
/// the command line".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub threshold: Option<f64>,
    pub enhancer_kind: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub noise_quantile: Option<f64>,
    pub external_dir: Option<PathBuf>,
    pub joint_score_grad: Option<bool>,
    pub max_epochs: Option<usize>,
}

pub fn parse_kind(name: &str) -> Result<EnhancerKind, String> {
    match name {
        "spectral_subtraction" => Ok(EnhancerKind::SpectralSubtraction),
        "wiener" => Ok(EnhancerKind::Wiener),
        "external" => Ok(EnhancerKind::External),
        other => Err(format!(
            "unknown enhancer kind {other:?} (expected spectral_subtraction, wiener or external)"
        )),
    }
}

/// Build the effective system configuration for a run.
pub fn resolve(
    seed: u64,
    config_file: Option<&Path>,
    overrides: &Overrides,
) -> Result<SystemConfig, String> {
    let mut cfg = SystemConfig::new(seed);

    if let Some(path) = config_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| format!("config {} is not valid JSON: {e}", path.display()))?;
        apply_json(&mut cfg, &v)?;
    }

    if let Some(t) = overrides.threshold {
        cfg.threshold = t;
    }
    if let Some(kind) = &overrides.enhancer_kind {
        cfg.enhancer.kind = parse_kind(kind)?;
    }
    if let Some(a) = overrides.alpha {
        cfg.enhancer.alpha = a;
    }
    if let Some(b) = overrides.beta {
        cfg.enhancer.beta = b;
    }
    if let Some(q) = overrides.noise_quantile {
        cfg.enhancer.noise_quantile = q;
    }
    if let Some(dir) = &overrides.external_dir {
        cfg.enhancer.external_dir = Some(dir.clone());
    }
    if let Some(j) = overrides.joint_score_grad {
        cfg.joint_score_grad = j;
    }
    if let Some(m) = overrides.max_epochs {
        cfg.scorer_hyper.max_epochs = m;
        cfg.emotion_hyper.max_epochs = m;
        cfg.joint_max_epochs = m;
    }

    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(format!(
            "threshold must lie in [0, 1], got {}",
            cfg.threshold
        ));
    }
    validate_enhancer(&cfg.enhancer)?;
    Ok(cfg)
}

fn validate_enhancer(cfg: &EnhancerConfig) -> Result<(), String> {
    cfg.validate().map_err(|e| e.to_string())
}

fn apply_json(cfg: &mut SystemConfig, v: &Value) -> Result<(), String> {
    let obj = v
        .as_object()
        .ok_or_else(|| "config root must be a JSON object".to_string())?;
    for (key, val) in obj {
        match key.as_str() {
            "threshold" => cfg.threshold = need_f64(key, val)?,
            "joint_score_grad" => {
                cfg.joint_score_grad = val
                    .as_bool()
                    .ok_or_else(|| format!("{key} must be a boolean"))?
            }
            "joint_max_epochs" => cfg.joint_max_epochs = need_f64(key, val)? as usize,
            "enhancer" => {
                let e = val
                    .as_object()
                    .ok_or_else(|| "enhancer must be an object".to_string())?;
                for (ek, ev) in e {
                    match ek.as_str() {
                        "kind" => {
                            let name = ev
                                .as_str()
                                .ok_or_else(|| "enhancer.kind must be a string".to_string())?;
                            cfg.enhancer.kind = parse_kind(name)?;
                        }
                        "alpha" => cfg.enhancer.alpha = need_f64(ek, ev)?,
                        "beta" => cfg.enhancer.beta = need_f64(ek, ev)?,
                        "noise_quantile" => cfg.enhancer.noise_quantile = need_f64(ek, ev)?,
                        "external_dir" => {
                            cfg.enhancer.external_dir = ev.as_str().map(PathBuf::from)
                        }
                        other => return Err(format!("unknown enhancer key {other:?}")),
                    }
                }
            }
            "scorer" | "emotion" => {
                let t = val
                    .as_object()
                    .ok_or_else(|| format!("{key} must be an object"))?;
                let target = if key == "scorer" {
                    &mut cfg.scorer_hyper
                } else {
                    &mut cfg.emotion_hyper
                };
                for (tk, tv) in t {
                    match tk.as_str() {
                        "lr" => target.lr = need_f64(tk, tv)?,
                        "momentum" => target.momentum = need_f64(tk, tv)?,
                        "batch_size" => target.batch_size = need_f64(tk, tv)? as usize,
                        "patience" => target.patience = need_f64(tk, tv)? as usize,
                        "max_epochs" => target.max_epochs = need_f64(tk, tv)? as usize,
                        other => return Err(format!("unknown {key} key {other:?}")),
                    }
                }
            }
            other => return Err(format!("unknown config key {other:?}")),
        }
    }
    Ok(())
}

fn need_f64(key: &str, v: &Value) -> Result<f64, String> {
    v.as_f64().ok_or_else(|| format!("{key} must be a number"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_defaults_file_flags() {
        let dir = std::env::temp_dir().join(format!("nrser-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cfg.json");
        std::fs::write(
            &path,
            r#"{"threshold": 0.5, "enhancer": {"alpha": 1.5}, "scorer": {"max_epochs": 10}}"#,
        )
        .unwrap();

        // File overrides defaults.
        let cfg = resolve(1, Some(&path), &Overrides::default()).unwrap();
        assert_eq!(cfg.threshold, 0.5);
        assert_eq!(cfg.enhancer.alpha, 1.5);
        assert_eq!(cfg.scorer_hyper.max_epochs, 10);

        // Flags override the file.
        let over = Overrides {
            threshold: Some(0.7),
            alpha: Some(2.5),
            ..Overrides::default()
        };
        let cfg = resolve(1, Some(&path), &over).unwrap();
        assert_eq!(cfg.threshold, 0.7);
        assert_eq!(cfg.enhancer.alpha, 2.5);
    }

    #[test]
    fn threshold_out_of_range_is_rejected() {
        let over = Overrides {
            threshold: Some(1.2),
            ..Overrides::default()
        };
        assert!(resolve(1, None, &over).is_err());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = std::env::temp_dir().join(format!("nrser-cfg2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        std::fs::write(&path, r#"{"thresold": 0.5}"#).unwrap();
        assert!(resolve(1, Some(&path), &Overrides::default()).is_err());
    }
}
