//! Multinomial logistic regression over feature vectors.
//!
//! Features are standardized (the -200 sentinel blocks would otherwise
//! dominate the gradient scale), then an L2-regularized cross-entropy is
//! minimized by full-batch gradient descent with step halving. Prediction
//! returns the full softmax ranking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Hyperparameters for [`train_mlr`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MlrOptions {
    /// L2 penalty on non-bias weights.
    pub l2: f64,
    /// Initial learning rate; halved whenever a step would increase the loss.
    pub lr: f64,
    pub max_epochs: usize,
    /// Stop when the accepted-step loss improvement falls below this.
    pub tol: f64,
}

impl Default for MlrOptions {
    fn default() -> Self {
        MlrOptions {
            l2: 1e-4,
            lr: 0.1,
            max_epochs: 2000,
            tol: 1e-7,
        }
    }
}

/// Trained classifier: per-class weight rows (bias last) over standardized
/// features, with the standardization parameters baked in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlrModel<F> {
    pub classes: Vec<String>,
    /// `classes.len()` rows of `dim + 1` weights; the last column is the bias.
    pub weights: Vec<Vec<F>>,
    pub feat_mean: Vec<F>,
    /// Per-feature standard deviation; zero-variance features get 1.
    pub feat_std: Vec<F>,
    pub train_loss_trace: Vec<F>,
}

impl<F: Real> MlrModel<F> {
    pub fn dim(&self) -> usize {
        self.feat_mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.classes.len();
        let d = self.dim();
        if self.weights.len() != m || self.weights.iter().any(|r| r.len() != d + 1) {
            return Err(Error::validation("weight matrix shape mismatch"));
        }
        if self.feat_std.len() != d {
            return Err(Error::validation("standardization shape mismatch"));
        }
        let finite = |v: &[F]| v.iter().all(|x| x.is_finite());
        if !self.weights.iter().all(|r| finite(r)) || !finite(&self.feat_mean) {
            return Err(Error::validation("non-finite model parameter"));
        }
        if !self.feat_std.iter().all(|s| *s > F::zero()) {
            return Err(Error::validation("non-positive feature stddev"));
        }
        Ok(())
    }

    fn standardize(&self, x: &[F]) -> Vec<F> {
        x.iter()
            .zip(&self.feat_mean)
            .zip(&self.feat_std)
            .map(|((&x, &m), &s)| (x - m) / s)
            .collect()
    }

    /// Softmax probabilities in class order; sums to 1.
    pub fn probabilities(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.dim() {
            return Err(Error::contract(format!(
                "feature vector has {} entries, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        let z = self.standardize(x);
        let logits: Vec<F> = self
            .weights
            .iter()
            .map(|row| {
                let mut dot = row[z.len()]; // bias
                for (w, x) in row[..z.len()].iter().zip(&z) {
                    dot += *w * *x;
                }
                dot
            })
            .collect();
        Ok(softmax(&logits))
    }

    /// Classes ranked by descending probability, ties broken by class order.
    pub fn predict(&self, x: &[F]) -> Result<Vec<(usize, F)>> {
        let probs = self.probabilities(x)?;
        let mut ranked: Vec<(usize, F)> = probs.into_iter().enumerate().collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        Ok(ranked)
    }
}

fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits
        .iter()
        .copied()
        .fold(F::neg_infinity(), |a, b| a.max(b));
    let exps: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Flat-layout hot path in class-major-last (transposed) form: `weights_t`
/// holds `d + 1` groups of `m` entries (bias group last), `rows` is `n * d`
/// standardized features. The transpose makes both the logit accumulation
/// and the gradient update contiguous in the class dimension, which the
/// compiler vectorizes.
fn loss_and_grad_flat<F: Real>(
    weights_t: &[F],
    m: usize,
    d: usize,
    rows: &[F],
    labels: &[usize],
    l2: f64,
) -> (F, Vec<F>) {
    let n = labels.len();
    let nf = F::of(n as f64);

    // Chunked so rayon can fan out while the reduction order stays fixed.
    let chunk = 256;
    let partials: Vec<(F, Vec<F>)> = rows
        .par_chunks(chunk * d)
        .zip(labels.par_chunks(chunk))
        .map(|(xs, ys)| {
            let mut loss = F::zero();
            let mut grad = vec![F::zero(); (d + 1) * m];
            let mut logits = vec![F::zero(); m];
            for (x, &y) in xs.chunks_exact(d).zip(ys) {
                logits.copy_from_slice(&weights_t[d * m..]);
                for (j, &v) in x.iter().enumerate() {
                    let wj = &weights_t[j * m..(j + 1) * m];
                    for (logit, &w) in logits.iter_mut().zip(wj) {
                        *logit += w * v;
                    }
                }
                let probs = softmax(&logits);
                loss -= probs[y].max(F::of(1e-300)).ln();
                // Reuse the logit buffer for the per-class residual.
                logits.copy_from_slice(&probs);
                logits[y] -= F::one();
                for (j, &v) in x.iter().enumerate() {
                    let gj = &mut grad[j * m..(j + 1) * m];
                    for (g, &delta) in gj.iter_mut().zip(&logits) {
                        *g += delta * v;
                    }
                }
                for (g, &delta) in grad[d * m..].iter_mut().zip(&logits) {
                    *g += delta;
                }
            }
            (loss, grad)
        })
        .collect();

    let mut loss = F::zero();
    let mut grad = vec![F::zero(); (d + 1) * m];
    for (pl, pg) in partials {
        loss += pl;
        for (g, p) in grad.iter_mut().zip(&pg) {
            *g += *p;
        }
    }
    loss /= nf;
    for g in grad.iter_mut() {
        *g /= nf;
    }

    // L2 on everything but the bias group.
    let lambda = F::of(l2);
    for (w, g) in weights_t[..d * m].iter().zip(grad.iter_mut()) {
        loss += lambda * *w * *w;
        *g += F::of(2.0) * lambda * *w;
    }
    (loss, grad)
}

fn transpose<F: Real>(rows: &[Vec<F>], cols: usize) -> Vec<F> {
    let mut out = vec![F::zero(); rows.len() * cols];
    for (r, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[j * rows.len() + r] = v;
        }
    }
    out
}

fn untranspose<F: Real>(flat: &[F], m: usize, cols: usize) -> Vec<Vec<F>> {
    (0..m)
        .map(|c| (0..cols).map(|j| flat[j * m + c]).collect())
        .collect()
}

/// Mean cross-entropy plus L2 penalty, and its gradient, at `weights` over
/// standardized rows (bias input implicit). Exposed for gradient checking.
pub fn loss_and_grad<F: Real>(
    weights: &[Vec<F>],
    rows: &[Vec<F>],
    labels: &[usize],
    l2: f64,
) -> (F, Vec<Vec<F>>) {
    let m = weights.len();
    let d = rows.first().map_or(0, Vec::len);
    let w_t = transpose(weights, d + 1);
    let x_flat: Vec<F> = rows.iter().flatten().copied().collect();
    let (loss, grad_t) = loss_and_grad_flat(&w_t, m, d, &x_flat, labels, l2);
    (loss, untranspose(&grad_t, m, d + 1))
}

/// Fit the classifier. Deterministic: weights start at zero and the data
/// order is fixed, so the seed only matters if an initialization strategy
/// ever needs it.
pub fn train_mlr<F: Real>(
    x: &[Vec<F>],
    labels: &[usize],
    classes: Vec<String>,
    opts: MlrOptions,
    _seed: u64,
) -> Result<MlrModel<F>> {
    let m = classes.len();
    let n = x.len();
    if n == 0 || m < 2 {
        return Err(Error::contract(
            "training needs at least one sample and two classes",
        ));
    }
    if labels.len() != n {
        return Err(Error::contract("labels and features disagree on N"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= m) {
        return Err(Error::contract(format!("label {bad} out of range")));
    }
    let d = x[0].len();
    if x.iter().any(|row| row.len() != d) {
        return Err(Error::contract("ragged feature matrix"));
    }
    if x.iter().any(|row| row.iter().any(|v| !v.is_finite())) {
        return Err(Error::contract("non-finite feature value"));
    }

    // Standardization parameters from training data only.
    let nf = F::of(n as f64);
    let mut mean = vec![F::zero(); d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += *v;
        }
    }
    for v in &mut mean {
        *v /= nf;
    }
    let mut var = vec![F::zero(); d];
    for row in x {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let dlt = *v - *m;
            *s += dlt * dlt;
        }
    }
    let std: Vec<F> = var
        .into_iter()
        .map(|s| {
            let sd = (s / nf).sqrt();
            if sd > F::zero() {
                sd
            } else {
                F::one()
            }
        })
        .collect();
    let mut rows = vec![F::zero(); n * d];
    for (i, row) in x.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            rows[i * d + j] = (v - mean[j]) / std[j];
        }
    }

    let mut weights_t = vec![F::zero(); (d + 1) * m];
    let mut lr = F::of(opts.lr);
    let (mut loss, mut grad) = loss_and_grad_flat(&weights_t, m, d, &rows, labels, opts.l2);
    let mut trace = vec![loss];
    for _ in 0..opts.max_epochs {
        let candidate: Vec<F> = weights_t
            .iter()
            .zip(&grad)
            .map(|(&w, &g)| w - lr * g)
            .collect();
        let (new_loss, new_grad) = loss_and_grad_flat(&candidate, m, d, &rows, labels, opts.l2);
        if new_loss > loss {
            lr /= F::of(2.0);
            if lr < F::of(1e-12) {
                break;
            }
            continue;
        }
        let improved = loss - new_loss;
        weights_t = candidate;
        loss = new_loss;
        grad = new_grad;
        trace.push(loss);
        if improved < F::of(opts.tol) {
            break;
        }
    }

    Ok(MlrModel {
        classes,
        weights: untranspose(&weights_t, m, d + 1),
        feat_mean: mean,
        feat_std: std,
        train_loss_trace: trace,
    })
}
