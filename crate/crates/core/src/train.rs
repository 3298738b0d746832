//! Shared training machinery: SGD with momentum, early stopping, epoch logs.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// SNR-scorer schedule: batch 32, lr 1e-4, momentum 0.9, patience 2.
    pub fn scorer_defaults(seed: u64) -> Self {
        Self {
            lr: 1e-4,
            momentum: 0.9,
            batch_size: 32,
            patience: 2,
            max_epochs: 5_000,
            seed,
        }
    }

    /// Emotion-block schedule: batch 8, lr 1e-4, momentum 0.9, patience 2.
    pub fn emotion_defaults(seed: u64) -> Self {
        Self {
            lr: 1e-4,
            momentum: 0.9,
            batch_size: 8,
            patience: 2,
            max_epochs: 150,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("epoch stats serialize"));
            out.push('\n');
        }
        out
    }
}

/// Classic momentum update: v <- mu*v + g; p <- p - lr*v.
#[derive(Debug, Clone)]
pub struct Momentum {
    velocity: Vec<f64>,
}

impl Momentum {
    pub fn new(dim: usize) -> Self {
        Self {
            velocity: vec![0.0; dim],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, momentum: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.velocity.len());
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            *v = momentum * *v + g;
            *p -= lr * *v;
        }
    }
}

/// Early stopping on validation loss: stop after `patience` consecutive
/// epochs without improvement over the best seen so far.
#[derive(Debug)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Returns true when the epoch improved on the best validation loss.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_val_loss(&self) -> f64 {
        self.best
    }
}

/// Fisher-Yates shuffle driven by an explicit generator, so epoch order is a
/// pure function of the training seed.
pub fn shuffled_indices(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<usize> {
    use rand::Rng;
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
