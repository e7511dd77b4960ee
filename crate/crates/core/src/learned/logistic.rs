//! Multinomial softmax regression trained by full-batch gradient descent
//! on standardized features.

use serde::{Deserialize, Serialize};

use super::{Sample, N_CLASSES};
use crate::classifier::FeatureVector;
use crate::error::{Error, Result};

const N_FEATURES: usize = FeatureVector::LEN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// `weights[class][feature]`.
    pub weights: Vec<[f64; N_FEATURES]>,
    pub bias: Vec<f64>,
    pub feature_means: [f64; N_FEATURES],
    pub feature_stds: [f64; N_FEATURES],
}

/// Trainable parameters, separated from the standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticParams {
    pub weights: [[f64; N_FEATURES]; N_CLASSES],
    pub bias: [f64; N_CLASSES],
}

impl LogisticParams {
    pub fn zeros() -> Self {
        LogisticParams {
            weights: [[0.0; N_FEATURES]; N_CLASSES],
            bias: [0.0; N_CLASSES],
        }
    }

    fn logits(&self, x: &[f64; N_FEATURES]) -> [f64; N_CLASSES] {
        let mut z = self.bias;
        for (zk, wk) in z.iter_mut().zip(&self.weights) {
            *zk += wk.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        z
    }
}

pub fn softmax(z: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; N_CLASSES];
    let mut sum = 0.0;
    for (pk, zk) in p.iter_mut().zip(z) {
        *pk = (zk - max).exp();
        sum += *pk;
    }
    for pk in &mut p {
        *pk /= sum;
    }
    p
}

/// Mean cross-entropy plus `l2 / 2 * ||W||^2` (bias unpenalized).
pub fn loss(params: &LogisticParams, xs: &[[f64; N_FEATURES]], ys: &[usize], l2: f64) -> f64 {
    let n = xs.len() as f64;
    let ce: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let z = params.logits(x);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - z[y]
        })
        .sum();
    let reg: f64 = params
        .weights
        .iter()
        .flat_map(|w| w.iter())
        .map(|w| w * w)
        .sum();
    ce / n + 0.5 * l2 * reg
}

/// Analytic gradient of [`loss`].
pub fn gradient(
    params: &LogisticParams,
    xs: &[[f64; N_FEATURES]],
    ys: &[usize],
    l2: f64,
) -> LogisticParams {
    let n = xs.len() as f64;
    let mut g = LogisticParams::zeros();
    for (x, &y) in xs.iter().zip(ys) {
        let p = softmax(&params.logits(x));
        for k in 0..N_CLASSES {
            let r = p[k] - f64::from(u8::from(k == y));
            g.bias[k] += r;
            for j in 0..N_FEATURES {
                g.weights[k][j] += r * x[j];
            }
        }
    }
    for k in 0..N_CLASSES {
        g.bias[k] /= n;
        for j in 0..N_FEATURES {
            g.weights[k][j] = g.weights[k][j] / n + l2 * params.weights[k][j];
        }
    }
    g
}

pub(crate) fn standardization(samples: &[Sample]) -> ([f64; N_FEATURES], [f64; N_FEATURES]) {
    let n = samples.len() as f64;
    let mut mean = [0.0; N_FEATURES];
    for s in samples {
        for j in 0..N_FEATURES {
            mean[j] += s.x[j];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = [0.0; N_FEATURES];
    for s in samples {
        for j in 0..N_FEATURES {
            std[j] += (s.x[j] - mean[j]).powi(2);
        }
    }
    for sd in &mut std {
        *sd = (*sd / n).sqrt();
        // zero-variance columns standardize to 0 and keep zero weight
        if !(*sd > 1e-12) {
            *sd = 1.0;
        }
    }
    (mean, std)
}

fn standardize(x: &[f64; N_FEATURES], mean: &[f64; N_FEATURES], std: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
    let mut out = [0.0; N_FEATURES];
    for j in 0..N_FEATURES {
        out[j] = (x[j] - mean[j]) / std[j];
    }
    out
}

pub(crate) fn fit_logistic(
    samples: &[Sample],
    learning_rate: f64,
    iterations: usize,
    l2: f64,
) -> Result<LogisticModel> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut present = [false; N_CLASSES];
    for s in samples {
        present[s.label] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Domain(
            "logistic regression needs at least two classes".into(),
        ));
    }
    if !(learning_rate > 0.0) || !(l2 >= 0.0) {
        return Err(Error::Config(
            "learning_rate must be positive and l2 non-negative".into(),
        ));
    }

    let (mean, std) = standardization(samples);
    let xs: Vec<[f64; N_FEATURES]> = samples.iter().map(|s| standardize(&s.x, &mean, &std)).collect();
    let ys: Vec<usize> = samples.iter().map(|s| s.label).collect();

    let mut params = LogisticParams::zeros();
    let mut current = loss(&params, &xs, &ys, l2);
    for it in 0..iterations {
        let g = gradient(&params, &xs, &ys, l2);
        let mut next = params.clone();
        for k in 0..N_CLASSES {
            next.bias[k] -= learning_rate * g.bias[k];
            for j in 0..N_FEATURES {
                next.weights[k][j] -= learning_rate * g.weights[k][j];
            }
        }
        let next_loss = loss(&next, &xs, &ys, l2);
        if !next_loss.is_finite() {
            return Err(Error::NonFiniteLoss(it));
        }
        if next_loss > current + 1e-12 * current.abs().max(1.0) {
            return Err(Error::StepSize(format!(
                "loss rose from {current} to {next_loss} at iteration {it}; lower the learning rate"
            )));
        }
        params = next;
        current = next_loss;
    }

    Ok(LogisticModel {
        weights: params.weights.to_vec(),
        bias: params.bias.to_vec(),
        feature_means: mean,
        feature_stds: std,
    })
}

impl LogisticModel {
    pub fn probabilities(&self, x: &[f64; N_FEATURES]) -> [f64; N_CLASSES] {
        softmax(&self.logits(x))
    }

    fn logits(&self, x: &[f64; N_FEATURES]) -> [f64; N_CLASSES] {
        let xs = standardize(x, &self.feature_means, &self.feature_stds);
        let mut z = [0.0; N_CLASSES];
        for k in 0..N_CLASSES {
            z[k] = self.bias[k]
                + self.weights[k]
                    .iter()
                    .zip(&xs)
                    .map(|(w, v)| w * v)
                    .sum::<f64>();
        }
        z
    }

    /// Highest logit; ties go to the earlier class.
    pub fn predict_index(&self, x: &[f64; N_FEATURES]) -> usize {
        let z = self.logits(x);
        let mut best = 0;
        for k in 1..N_CLASSES {
            if z[k] > z[best] {
                best = k;
            }
        }
        best
    }
}
