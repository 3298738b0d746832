//! Toy multitask emotion block.
//!
//! Features are pooled log-mel statistics (per-band mean and standard
//! deviation over time, 64 bands, so 128 inputs). One ReLU hidden layer feeds
//! four heads: a 10-way category softmax and three scalar regressors for
//! arousal, valence and dominance. The loss is cross-entropy plus
//! (1 - CCC) per attribute, computed per mini-batch. All gradients are
//! analytic, including the path through waveform reconstitution and the score
//! clamp used in joint fine-tuning; finite-difference checks pin them down in
//! the tests.

pub mod training;

pub use training::{
    extract_features, finetune_joint, train_emotion, train_emotion_core, InputMode, JointHyper,
    JointModels, LabeledFeatures,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::dsp::{stft, MelFeatureSeq, MelFilterbank, StftConfig, LOG_FLOOR, MEL_BINS};
use crate::error::{Error, Result};
use crate::rng::rng_for;

pub const N_CLASSES: usize = 10;
pub const N_ATTRS: usize = 3;
/// Pooled feature width: mel means concatenated with mel standard deviations.
pub const FEATURE_DIM: usize = 2 * MEL_BINS;
pub const HIDDEN_DIM: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmotionLabel {
    /// Category in 0..=9.
    pub category: u8,
    /// Attributes in [1, 7].
    pub arousal: f64,
    pub valence: f64,
    pub dominance: f64,
}

impl EmotionLabel {
    pub fn attr(&self, a: usize) -> f64 {
        match a {
            0 => self.arousal,
            1 => self.valence,
            _ => self.dominance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmotionPrediction {
    pub category_probs: Vec<f64>,
    pub arousal: f64,
    pub valence: f64,
    pub dominance: f64,
}

impl EmotionPrediction {
    pub fn category(&self) -> u8 {
        self.category_probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i as u8)
            .unwrap_or(0)
    }

    pub fn attr(&self, a: usize) -> f64 {
        match a {
            0 => self.arousal,
            1 => self.valence,
            _ => self.dominance,
        }
    }
}

/// Pooled features -> hidden ReLU layer -> category head + three attribute
/// heads.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
    /// hidden_dim x input_dim, row-major.
    pub w_hidden: Vec<f64>,
    pub b_hidden: Vec<f64>,
    /// n_classes x hidden_dim, row-major.
    pub w_cat: Vec<f64>,
    pub b_cat: Vec<f64>,
    /// Three attribute heads, each hidden_dim weights plus one bias.
    pub w_attr: Vec<Vec<f64>>,
    pub b_attr: Vec<f64>,
}

impl EmotionModel {
    /// Seeded init, uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    pub fn init(input_dim: usize, hidden_dim: usize, n_classes: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed);
        let b1 = 1.0 / (input_dim as f64).sqrt();
        let b2 = 1.0 / (hidden_dim as f64).sqrt();
        let draw = |bound: f64, n: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let w_hidden = draw(b1, hidden_dim * input_dim, &mut rng);
        let b_hidden = draw(b1, hidden_dim, &mut rng);
        let w_cat = draw(b2, n_classes * hidden_dim, &mut rng);
        let b_cat = draw(b2, n_classes, &mut rng);
        let mut w_attr = Vec::with_capacity(N_ATTRS);
        let mut b_attr = Vec::with_capacity(N_ATTRS);
        for _ in 0..N_ATTRS {
            w_attr.push(draw(b2, hidden_dim, &mut rng));
            b_attr.push(rng.random_range(-b2..b2));
        }
        Self {
            input_dim,
            hidden_dim,
            n_classes,
            w_hidden,
            b_hidden,
            w_cat,
            b_cat,
            w_attr,
            b_attr,
        }
    }

    pub fn zeroed(input_dim: usize, hidden_dim: usize, n_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            n_classes,
            w_hidden: vec![0.0; hidden_dim * input_dim],
            b_hidden: vec![0.0; hidden_dim],
            w_cat: vec![0.0; n_classes * hidden_dim],
            b_cat: vec![0.0; n_classes],
            w_attr: vec![vec![0.0; hidden_dim]; N_ATTRS],
            b_attr: vec![0.0; N_ATTRS],
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden_dim * self.input_dim
            + self.hidden_dim
            + self.n_classes * self.hidden_dim
            + self.n_classes
            + N_ATTRS * (self.hidden_dim + 1)
    }

    /// Flat parameter order: hidden weights, hidden bias, category weights,
    /// category bias, then each attribute head (weights, bias).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.w_hidden);
        out.extend_from_slice(&self.b_hidden);
        out.extend_from_slice(&self.w_cat);
        out.extend_from_slice(&self.b_cat);
        for a in 0..N_ATTRS {
            out.extend_from_slice(&self.w_attr[a]);
            out.push(self.b_attr[a]);
        }
        out
    }

    pub fn from_flat(
        input_dim: usize,
        hidden_dim: usize,
        n_classes: usize,
        flat: &[f64],
    ) -> Result<Self> {
        let mut model = Self::zeroed(input_dim, hidden_dim, n_classes);
        if flat.len() != model.param_count() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameters, got {}",
                model.param_count(),
                flat.len()
            )));
        }
        let mut at = 0usize;
        let mut take = |n: usize| {
            let s = &flat[at..at + n];
            at += n;
            s.to_vec()
        };
        model.w_hidden = take(hidden_dim * input_dim);
        model.b_hidden = take(hidden_dim);
        model.w_cat = take(n_classes * hidden_dim);
        model.b_cat = take(n_classes);
        for a in 0..N_ATTRS {
            model.w_attr[a] = take(hidden_dim);
            model.b_attr[a] = take(1)[0];
        }
        Ok(model)
    }

    pub fn forward(&self, x: &[f64]) -> ForwardPass {
        assert_eq!(x.len(), self.input_dim);
        let mut pre = self.b_hidden.clone();
        for h in 0..self.hidden_dim {
            let row = &self.w_hidden[h * self.input_dim..(h + 1) * self.input_dim];
            pre[h] += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        let hidden: Vec<f64> = pre.iter().map(|&p| p.max(0.0)).collect();

        let mut logits = self.b_cat.clone();
        for (k, logit) in logits.iter_mut().enumerate() {
            let row = &self.w_cat[k * self.hidden_dim..(k + 1) * self.hidden_dim];
            *logit += row.iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>();
        }
        let probs = softmax(&logits);

        let mut attrs = [0.0; N_ATTRS];
        for (a, out) in attrs.iter_mut().enumerate() {
            *out = self.b_attr[a]
                + self.w_attr[a]
                    .iter()
                    .zip(&hidden)
                    .map(|(w, v)| w * v)
                    .sum::<f64>();
        }

        ForwardPass {
            pre,
            hidden,
            logits,
            probs,
            attrs,
        }
    }

    pub fn predict_features(&self, x: &[f64]) -> EmotionPrediction {
        let f = self.forward(x);
        EmotionPrediction {
            category_probs: f.probs,
            arousal: f.attrs[0],
            valence: f.attrs[1],
            dominance: f.attrs[2],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub attrs: [f64; N_ATTRS],
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Per-mel-bin mean concatenated with per-bin population standard deviation
/// over time.
pub fn pool_features(m: &MelFeatureSeq) -> Vec<f64> {
    let (t, n_mels) = (m.n_frames(), m.n_mels());
    let mut means = vec![0.0; n_mels];
    for row in 0..t {
        for (mean, &v) in means.iter_mut().zip(m.frames.row(row)) {
            *mean += v;
        }
    }
    for mean in &mut means {
        *mean /= t as f64;
    }
    let mut stds = vec![0.0; n_mels];
    for row in 0..t {
        for (s, (&v, &mean)) in stds.iter_mut().zip(m.frames.row(row).iter().zip(&means)) {
            *s += (v - mean) * (v - mean);
        }
    }
    for s in &mut stds {
        *s = (*s / t as f64).sqrt();
    }
    means.extend(stds);
    means
}

/// Pooled log-mel features of a waveform.
pub fn pooled_logmel(w: &Waveform, fb: &MelFilterbank) -> Vec<f64> {
    let s = stft(w, &StftConfig::default());
    let mel = crate::dsp::log_mel_with(&s, fb);
    pool_features(&mel)
}

/// Forward pass and prediction straight from audio.
pub fn predict(w: &Waveform, model: &EmotionModel) -> EmotionPrediction {
    let fb = MelFilterbank::new(MEL_BINS, StftConfig::default().n_bins(), w.sample_rate());
    let x = pooled_logmel(w, &fb);
    model.predict_features(&x)
}

/// Concordance correlation coefficient with population moments:
/// 2*cov / (var_x + var_y + (mean_x - mean_y)^2). When the denominator is
/// zero (both constant, equal means) it is 1 for identical vectors and 0
/// otherwise.
pub fn ccc(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "ccc needs at least two samples");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut vx = 0.0;
    let mut vy = 0.0;
    let mut cov = 0.0;
    for (a, b) in x.iter().zip(y) {
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
        cov += (a - mx) * (b - my);
    }
    vx /= n;
    vy /= n;
    cov /= n;
    let denom = vx + vy + (mx - my) * (mx - my);
    if denom == 0.0 {
        return if x == y { 1.0 } else { 0.0 };
    }
    2.0 * cov / denom
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossWeights {
    pub ce: f64,
    pub ccc: [f64; N_ATTRS],
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ce: 1.0,
            ccc: [1.0; N_ATTRS],
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmotionGrads {
    pub w_hidden: Vec<f64>,
    pub b_hidden: Vec<f64>,
    pub w_cat: Vec<f64>,
    pub b_cat: Vec<f64>,
    pub w_attr: Vec<Vec<f64>>,
    pub b_attr: Vec<f64>,
}

impl EmotionGrads {
    pub fn zeros(model: &EmotionModel) -> Self {
        Self {
            w_hidden: vec![0.0; model.w_hidden.len()],
            b_hidden: vec![0.0; model.b_hidden.len()],
            w_cat: vec![0.0; model.w_cat.len()],
            b_cat: vec![0.0; model.b_cat.len()],
            w_attr: vec![vec![0.0; model.hidden_dim]; N_ATTRS],
            b_attr: vec![0.0; N_ATTRS],
        }
    }
}

pub struct BatchEval {
    pub loss: f64,
    pub grads: EmotionGrads,
    /// d loss / d input features, one vector per batch element; feeds the
    /// joint chain through the reconstitution blend.
    pub input_grads: Vec<Vec<f64>>,
}

/// Batch loss L = w_ce * CE + sum_a w_a * (1 - CCC_a) with analytic gradients
/// for every parameter and for the inputs.
pub fn emotion_batch_loss(
    model: &EmotionModel,
    xs: &[Vec<f64>],
    labels: &[EmotionLabel],
    weights: &LossWeights,
) -> Result<BatchEval> {
    assert_eq!(xs.len(), labels.len());
    let n = xs.len();
    if n < 2 {
        return Err(Error::BatchTooSmall { got: n });
    }
    let nf = n as f64;

    let passes: Vec<ForwardPass> = xs.iter().map(|x| model.forward(x)).collect();

    // Cross-entropy, averaged over the batch.
    let mut ce = 0.0;
    for (p, lab) in passes.iter().zip(labels) {
        ce -= p.probs[lab.category as usize].max(1e-300).ln();
    }
    ce /= nf;

    // CCC per attribute over the batch.
    let mut loss = weights.ce * ce;
    let mut ccc_grad_coeff: Vec<Vec<f64>> = vec![vec![0.0; n]; N_ATTRS]; // dL/d attr prediction
    for a in 0..N_ATTRS {
        let preds: Vec<f64> = passes.iter().map(|p| p.attrs[a]).collect();
        let targets: Vec<f64> = labels.iter().map(|l| l.attr(a)).collect();
        let mx = preds.iter().sum::<f64>() / nf;
        let my = targets.iter().sum::<f64>() / nf;
        let mut vx = 0.0;
        let mut vy = 0.0;
        let mut cov = 0.0;
        for (p, t) in preds.iter().zip(&targets) {
            vx += (p - mx) * (p - mx);
            vy += (t - my) * (t - my);
            cov += (p - mx) * (t - my);
        }
        vx /= nf;
        vy /= nf;
        cov /= nf;
        let denom = vx + vy + (mx - my) * (mx - my);
        if denom <= 0.0 {
            // Degenerate batch: flat term, no gradient signal.
            let edge = if preds == targets { 1.0 } else { 0.0 };
            loss += weights.ccc[a] * (1.0 - edge);
            continue;
        }
        let num = 2.0 * cov;
        let c = num / denom;
        loss += weights.ccc[a] * (1.0 - c);
        for i in 0..n {
            // dCCC/dx_i for population moments.
            let dnum = 2.0 / nf * (targets[i] - my);
            let ddenom = 2.0 / nf * ((preds[i] - mx) + (mx - my));
            let dccc = (dnum * denom - num * ddenom) / (denom * denom);
            ccc_grad_coeff[a][i] = -weights.ccc[a] * dccc;
        }
    }

    // Backprop.
    let mut grads = EmotionGrads::zeros(model);
    let mut input_grads = Vec::with_capacity(n);
    for (i, (pass, lab)) in passes.iter().zip(labels).enumerate() {
        // d loss / d logits from the CE term.
        let mut d_logits: Vec<f64> = pass
            .probs
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let onehot = if k == lab.category as usize { 1.0 } else { 0.0 };
                weights.ce * (p - onehot) / nf
            })
            .collect();

        let d_attr: Vec<f64> = (0..N_ATTRS).map(|a| ccc_grad_coeff[a][i]).collect();

        // Into the hidden layer.
        let mut d_hidden = vec![0.0; model.hidden_dim];
        for (k, dz) in d_logits.iter_mut().enumerate() {
            let row = &model.w_cat[k * model.hidden_dim..(k + 1) * model.hidden_dim];
            for (dh, w) in d_hidden.iter_mut().zip(row) {
                *dh += *dz * w;
            }
        }
        for a in 0..N_ATTRS {
            for (dh, w) in d_hidden.iter_mut().zip(&model.w_attr[a]) {
                *dh += d_attr[a] * w;
            }
        }
        let d_pre: Vec<f64> = d_hidden
            .iter()
            .zip(&pass.pre)
            .map(|(d, &p)| if p > 0.0 { *d } else { 0.0 })
            .collect();

        // Parameter gradients.
        let d_logits = d_logits; // re-freeze
        for (k, dz) in d_logits.iter().enumerate() {
            let row = &mut grads.w_cat[k * model.hidden_dim..(k + 1) * model.hidden_dim];
            for (g, h) in row.iter_mut().zip(&pass.hidden) {
                *g += dz * h;
            }
            grads.b_cat[k] += dz;
        }
        for a in 0..N_ATTRS {
            for (g, h) in grads.w_attr[a].iter_mut().zip(&pass.hidden) {
                *g += d_attr[a] * h;
            }
            grads.b_attr[a] += d_attr[a];
        }
        for (h, dp) in d_pre.iter().enumerate() {
            if *dp != 0.0 {
                let row = &mut grads.w_hidden[h * model.input_dim..(h + 1) * model.input_dim];
                for (g, v) in row.iter_mut().zip(&xs[i]) {
                    *g += dp * v;
                }
            }
            grads.b_hidden[h] += dp;
        }

        // Input gradient (for the joint chain).
        let mut d_x = vec![0.0; model.input_dim];
        for (h, dp) in d_pre.iter().enumerate() {
            if *dp != 0.0 {
                let row = &model.w_hidden[h * model.input_dim..(h + 1) * model.input_dim];
                for (dx, w) in d_x.iter_mut().zip(row) {
                    *dx += dp * w;
                }
            }
        }
        input_grads.push(d_x);
    }

    Ok(BatchEval {
        loss,
        grads,
        input_grads,
    })
}

/// Features of the reconstituted waveform w_re = s' * w_in + (1 - s') * w_en,
/// optionally with their derivative with respect to s'. The derivative rides
/// the chain STFT -> power -> mel -> log -> mean/std analytically, using the
/// linearity of the STFT (d stft(w_re)/d s' = stft(w_in - w_en)).
pub fn reconstituted_features(
    w_in: &Waveform,
    w_en: &Waveform,
    s_prime: f64,
    fb: &MelFilterbank,
    with_derivative: bool,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if w_in.len() != w_en.len() {
        return Err(Error::LengthMismatch {
            left: w_in.len(),
            right: w_en.len(),
        });
    }
    let cfg = StftConfig::default();
    let blended = crate::reconstitution::blend_samples(w_in.samples(), w_en.samples(), s_prime);
    let w_re = Waveform::new(blended, w_in.sample_rate())?;
    let spec = stft(&w_re, &cfg);
    let mel = crate::dsp::log_mel_with(&spec, fb);
    let x = pool_features(&mel);
    if !with_derivative {
        return Ok((x, None));
    }

    let diff: Vec<f64> = w_in
        .samples()
        .iter()
        .zip(w_en.samples())
        .map(|(a, b)| a - b)
        .collect();
    let dspec = stft(&Waveform::new(diff, w_in.sample_rate())?, &cfg);

    let (t, n_mels) = (mel.n_frames(), mel.n_mels());
    // d log-mel / d s' per frame and band.
    let mut dlog = crate::dsp::Matrix::zeros(t, n_mels);
    let mut mel_energy = vec![0.0; n_mels];
    let mut dmel_energy = vec![0.0; n_mels];
    let mut pw = vec![0.0; spec.n_bins()];
    let mut dpw = vec![0.0; spec.n_bins()];
    for row in 0..t {
        for (f, (a, d)) in spec.frame(row).iter().zip(dspec.frame(row)).enumerate() {
            pw[f] = a.norm_sqr();
            dpw[f] = 2.0 * (a.re * d.re + a.im * d.im);
        }
        fb.apply(&pw, &mut mel_energy);
        fb.apply(&dpw, &mut dmel_energy);
        for m in 0..n_mels {
            dlog.row_mut(row)[m] = if mel_energy[m] > LOG_FLOOR {
                dmel_energy[m] / mel_energy[m]
            } else {
                0.0
            };
        }
    }

    // Pooled derivative: d mean and d std per band.
    let mut dx = vec![0.0; 2 * n_mels];
    let tn = t as f64;
    for m in 0..n_mels {
        let mean: f64 = (0..t).map(|r| mel.frames.at(r, m)).sum::<f64>() / tn;
        let dmean: f64 = (0..t).map(|r| dlog.at(r, m)).sum::<f64>() / tn;
        let std = x[n_mels + m];
        dx[m] = dmean;
        dx[n_mels + m] = if std > 1e-12 {
            (0..t)
                .map(|r| (mel.frames.at(r, m) - mean) * dlog.at(r, m))
                .sum::<f64>()
                / tn
                / std
        } else {
            0.0
        };
    }
    Ok((x, Some(dx)))
}

/// Clamp pass-through derivative: 1 strictly inside (0, 1), 0 outside and at
/// the boundaries.
pub fn clamp_derivative(raw: f64) -> f64 {
    if raw > 0.0 && raw < 1.0 {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::Matrix;

    fn tiny_model(seed: u64) -> EmotionModel {
        EmotionModel::init(6, 5, 4, seed)
    }

    fn random_batch(
        model: &EmotionModel,
        n: usize,
        seed: u64,
    ) -> (Vec<Vec<f64>>, Vec<EmotionLabel>) {
        let mut rng = rng_for(seed);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..model.input_dim)
                    .map(|_| rng.random_range(-2.0..2.0))
                    .collect()
            })
            .collect();
        let labels: Vec<EmotionLabel> = (0..n)
            .map(|_| EmotionLabel {
                category: rng.random_range(0..model.n_classes) as u8,
                arousal: rng.random_range(1.0..7.0),
                valence: rng.random_range(1.0..7.0),
                dominance: rng.random_range(1.0..7.0),
            })
            .collect();
        (xs, labels)
    }

    #[test]
    fn pooling_constant_frames() {
        let m = MelFeatureSeq {
            frames: Matrix::from_vec(vec![2.5; 3 * 4], 3, 4),
        };
        let x = pool_features(&m);
        assert_eq!(&x[..4], &[2.5; 4]);
        assert_eq!(&x[4..], &[0.0; 4]);
    }

    #[test]
    fn pooling_single_frame_has_zero_std() {
        let m = MelFeatureSeq {
            frames: Matrix::from_vec(vec![1.0, -2.0, 3.0], 1, 3),
        };
        let x = pool_features(&m);
        assert_eq!(x, vec![1.0, -2.0, 3.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn pooling_matches_brute_force() {
        let mut rng = rng_for(77);
        let data: Vec<f64> = (0..10 * 64).map(|_| rng.random_range(-5.0..5.0)).collect();
        let m = MelFeatureSeq {
            frames: Matrix::from_vec(data.clone(), 10, 64),
        };
        let x = pool_features(&m);
        for band in 0..64 {
            let col: Vec<f64> = (0..10).map(|r| data[r * 64 + band]).collect();
            let mean = col.iter().sum::<f64>() / 10.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 10.0;
            assert!((x[band] - mean).abs() < 1e-6);
            assert!((x[64 + band] - var.sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn zeroed_model_predicts_uniform_probs() {
        let model = EmotionModel::zeroed(FEATURE_DIM, HIDDEN_DIM, N_CLASSES);
        let pred = model.predict_features(&vec![0.3; FEATURE_DIM]);
        for p in &pred.category_probs {
            assert!((p - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_known_value() {
        // logits [ln 2, 0 x9] -> p0 = 2/11.
        let mut logits = vec![0.0; 10];
        logits[0] = 2.0f64.ln();
        let p = softmax(&logits);
        assert!((p[0] - 2.0 / 11.0).abs() < 1e-12);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn probs_sum_to_one_for_random_inputs() {
        let model = tiny_model(1);
        let (xs, _) = random_batch(&model, 8, 2);
        for x in &xs {
            let p = model.forward(x).probs;
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn ccc_known_values() {
        // Perfect concordance.
        assert_eq!(ccc(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 1.0);
        // Constant prediction gives zero covariance.
        assert_eq!(ccc(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), 0.0);
        // Brute-force oracle for x=[1,2,3,4], y=[1,2,3,5]:
        // mx=2.5 my=2.75 vx=1.25 vy=2.1875 cov=1.625
        // ccc = 2*1.625 / (1.25 + 2.1875 + 0.0625) = 3.25/3.5 = 13/14.
        let got = ccc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 5.0]);
        assert!((got - 13.0 / 14.0).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn ccc_edge_cases_and_symmetric_permutation() {
        // Degenerate denominator: both constant with equal means.
        assert_eq!(ccc(&[2.0, 2.0], &[2.0, 2.0]), 1.0);
        // Jointly permuting pairs leaves ccc unchanged.
        let x = [0.5, 1.5, -1.0, 2.0];
        let y = [0.4, 1.0, -0.5, 2.5];
        let xp = [2.0, 0.5, 1.5, -1.0];
        let yp = [2.5, 0.4, 1.0, -0.5];
        assert!((ccc(&x, &y) - ccc(&xp, &yp)).abs() < 1e-12);
        assert!(ccc(&x, &y) >= -1.0 && ccc(&x, &y) <= 1.0);
    }

    #[test]
    fn uniform_probs_cost_ln_ten() {
        let model = EmotionModel::zeroed(FEATURE_DIM, HIDDEN_DIM, N_CLASSES);
        let xs = vec![vec![0.1; FEATURE_DIM], vec![-0.2; FEATURE_DIM]];
        let labels = vec![
            EmotionLabel {
                category: 3,
                arousal: 4.0,
                valence: 4.0,
                dominance: 4.0,
            },
            EmotionLabel {
                category: 7,
                arousal: 3.0,
                valence: 5.0,
                dominance: 2.0,
            },
        ];
        // Disable the CCC terms to isolate CE.
        let weights = LossWeights {
            ce: 1.0,
            ccc: [0.0; 3],
        };
        let eval = emotion_batch_loss(&model, &xs, &labels, &weights).unwrap();
        assert!((eval.loss - 10.0f64.ln()).abs() < 1e-9, "loss {}", eval.loss);
    }

    #[test]
    fn perfect_attribute_predictions_zero_the_ccc_terms() {
        // A model that reproduces the targets exactly via the bias path is
        // impractical; instead check the loss identity directly on ccc.
        let targets = [2.0, 5.0, 3.0, 6.0];
        assert_eq!(1.0 - ccc(&targets, &targets), 0.0);
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let model = tiny_model(3);
        let (xs, labels) = random_batch(&model, 1, 4);
        assert!(matches!(
            emotion_batch_loss(&model, &xs, &labels, &LossWeights::default()),
            Err(Error::BatchTooSmall { got: 1 })
        ));
    }

    /// The module's master numerical check: parameter gradients against
    /// central finite differences on random instances.
    #[test]
    fn emotion_gradients_match_finite_differences() {
        let weights = LossWeights::default();
        for inst in 0..20 {
            let model = tiny_model(100 + inst);
            let (xs, labels) = random_batch(&model, 6, 200 + inst);
            let eval = emotion_batch_loss(&model, &xs, &labels, &weights).unwrap();

            let flat = model.to_flat();
            let analytic = {
                let mut g = Vec::new();
                g.extend_from_slice(&eval.grads.w_hidden);
                g.extend_from_slice(&eval.grads.b_hidden);
                g.extend_from_slice(&eval.grads.w_cat);
                g.extend_from_slice(&eval.grads.b_cat);
                for a in 0..N_ATTRS {
                    g.extend_from_slice(&eval.grads.w_attr[a]);
                    g.push(eval.grads.b_attr[a]);
                }
                g
            };

            // Sample coordinates across all tensors.
            let mut rng = rng_for(300 + inst);
            let h = 1e-5;
            for _ in 0..40 {
                let d = rng.random_range(0..flat.len());
                let mut fplus = flat.clone();
                fplus[d] += h;
                let mut fminus = flat.clone();
                fminus[d] -= h;
                let mp =
                    EmotionModel::from_flat(model.input_dim, model.hidden_dim, model.n_classes, &fplus)
                        .unwrap();
                let mm = EmotionModel::from_flat(
                    model.input_dim,
                    model.hidden_dim,
                    model.n_classes,
                    &fminus,
                )
                .unwrap();
                let lp = emotion_batch_loss(&mp, &xs, &labels, &weights).unwrap().loss;
                let lm = emotion_batch_loss(&mm, &xs, &labels, &weights).unwrap().loss;
                let fd = (lp - lm) / (2.0 * h);
                let denom = fd.abs().max(analytic[d].abs()).max(1e-6);
                assert!(
                    (fd - analytic[d]).abs() / denom <= 1e-4,
                    "inst {inst} coord {d}: fd {fd} vs analytic {}",
                    analytic[d]
                );
            }
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let weights = LossWeights::default();
        let model = tiny_model(42);
        let (xs, labels) = random_batch(&model, 4, 43);
        let eval = emotion_batch_loss(&model, &xs, &labels, &weights).unwrap();
        let h = 1e-5;
        let mut rng = rng_for(44);
        for _ in 0..30 {
            let i = rng.random_range(0..xs.len());
            let d = rng.random_range(0..model.input_dim);
            let mut plus = xs.clone();
            plus[i][d] += h;
            let mut minus = xs.clone();
            minus[i][d] -= h;
            let lp = emotion_batch_loss(&model, &plus, &labels, &weights).unwrap().loss;
            let lm = emotion_batch_loss(&model, &minus, &labels, &weights).unwrap().loss;
            let fd = (lp - lm) / (2.0 * h);
            let got = eval.input_grads[i][d];
            let denom = fd.abs().max(got.abs()).max(1e-6);
            assert!((fd - got).abs() / denom <= 1e-4, "fd {fd} vs {got}");
        }
    }

    #[test]
    fn clamp_derivative_is_zero_at_and_beyond_boundaries() {
        assert_eq!(clamp_derivative(0.5), 1.0);
        assert_eq!(clamp_derivative(0.0), 0.0);
        assert_eq!(clamp_derivative(1.0), 0.0);
        assert_eq!(clamp_derivative(-0.3), 0.0);
        assert_eq!(clamp_derivative(1.7), 0.0);
    }

    #[test]
    fn flat_round_trip_preserves_model() {
        let model = tiny_model(9);
        let back =
            EmotionModel::from_flat(model.input_dim, model.hidden_dim, model.n_classes, &model.to_flat())
                .unwrap();
        assert_eq!(model, back);
    }

    /// Directional derivative of the whole feature pipeline with respect to
    /// the blend coefficient, against finite differences.
    #[test]
    fn reconstituted_feature_derivative_matches_finite_differences() {
        use crate::audio::TARGET_SAMPLE_RATE;
        let mut rng = rng_for(55);
        let n = 500;
        let w_in = Waveform::new(
            (0..n).map(|_| rng.random_range(-0.6..0.6)).collect(),
            TARGET_SAMPLE_RATE,
        )
        .unwrap();
        let w_en = Waveform::new(
            (0..n).map(|_| rng.random_range(-0.6..0.6)).collect(),
            TARGET_SAMPLE_RATE,
        )
        .unwrap();
        let fb = MelFilterbank::new(MEL_BINS, StftConfig::default().n_bins(), TARGET_SAMPLE_RATE);

        for &s in &[0.2, 0.5, 0.8] {
            let (_, dx) = reconstituted_features(&w_in, &w_en, s, &fb, true).unwrap();
            let dx = dx.unwrap();
            let h = 1e-6;
            let (xp, _) = reconstituted_features(&w_in, &w_en, s + h, &fb, false).unwrap();
            let (xm, _) = reconstituted_features(&w_in, &w_en, s - h, &fb, false).unwrap();
            for d in 0..dx.len() {
                let fd = (xp[d] - xm[d]) / (2.0 * h);
                let denom = fd.abs().max(dx[d].abs()).max(1e-6);
                assert!(
                    (fd - dx[d]).abs() / denom <= 1e-4,
                    "s {s} dim {d}: fd {fd} vs {}",
                    dx[d]
                );
            }
        }
    }
}
