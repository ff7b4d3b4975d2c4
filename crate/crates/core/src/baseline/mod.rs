//! Multinomial logistic regression on frozen embeddings.
//!
//! The head always sees L2-normalized embeddings, the same inputs the query
//! index uses. Training is single-threaded mini-batch gradient descent from
//! zero weights with a seeded per-epoch shuffle, so a given config always
//! produces the same model bit for bit.
//!
//! The L2 term is applied as a proximal step, `W <- (W - lr*g) / (1 + lr*l2)`,
//! which minimizes the same objective as a plain gradient step but stays
//! stable for any `l2`.

mod io;

use std::collections::BTreeSet;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::embedding::{EmbeddingStore, EmbeddingVector};
use crate::error::{Error, Result};
use crate::eval::metrics::{evaluate, Metrics};
use crate::rng::SeededRng;

pub use io::{load_model, save_model, QLRM_MAGIC, QLRM_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l2_lambda: 1e-4,
            epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    dim: usize,
    class_order: Vec<String>,
    /// Row-major `[classes × dim]`.
    weights: Vec<f32>,
    bias: Vec<f32>,
    /// Regularization strength used by [`logreg_loss_grad`]. Not persisted.
    l2_lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    /// Row-major, same shape as the weights.
    pub grad_weights: Vec<f64>,
    pub grad_bias: Vec<f64>,
}

impl LogRegModel {
    /// A zero-initialized model.
    pub fn zeros(dim: usize, class_order: Vec<String>, l2_lambda: f64) -> Result<Self> {
        Self::from_parts(
            dim,
            vec![0.0; dim * class_order.len()],
            vec![0.0; class_order.len()],
            class_order,
            l2_lambda,
        )
    }

    pub fn from_parts(
        dim: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        class_order: Vec<String>,
        l2_lambda: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidVector(
                "model dimension must be at least 1".into(),
            ));
        }
        if class_order.is_empty() {
            return Err(Error::TooFewClasses(0));
        }
        let unique: BTreeSet<&String> = class_order.iter().collect();
        if unique.len() != class_order.len() {
            return Err(Error::Corrupt("class order has duplicates".into()));
        }
        if weights.len() != dim * class_order.len() || bias.len() != class_order.len() {
            return Err(Error::Corrupt(format!(
                "parameter shapes do not match {} classes × {dim}",
                class_order.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Corrupt("non-finite model parameter".into()));
        }
        Ok(Self {
            dim,
            class_order,
            weights,
            bias,
            l2_lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_order(&self) -> &[String] {
        &self.class_order
    }

    pub fn num_classes(&self) -> usize {
        self.class_order.len()
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f32] {
        &mut self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f32] {
        &mut self.weights
    }

    pub fn l2_lambda(&self) -> f64 {
        self.l2_lambda
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights
            .iter()
            .map(|&w| f64::from(w) * f64::from(w))
            .sum::<f64>()
            .sqrt()
    }

    fn class_index(&self, label: &str) -> Result<usize> {
        self.class_order
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Softmax probabilities for `x` taken as is (no normalization).
    pub fn probabilities_raw(&self, x: &[f32]) -> Vec<f64> {
        let params = Params::from_model(self);
        softmax(&params.logits(x))
    }
}

/// f64 working copy of the parameters.
struct Params {
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Params {
    fn from_model(m: &LogRegModel) -> Self {
        Self {
            dim: m.dim,
            weights: m.weights.iter().map(|&w| f64::from(w)).collect(),
            bias: m.bias.iter().map(|&b| f64::from(b)).collect(),
        }
    }

    fn logits(&self, x: &[f32]) -> Vec<f64> {
        self.bias
            .iter()
            .enumerate()
            .map(|(c, &b)| {
                let row = &self.weights[c * self.dim..(c + 1) * self.dim];
                b + row
                    .iter()
                    .zip(x)
                    .map(|(&w, &v)| w * f64::from(v))
                    .sum::<f64>()
            })
            .collect()
    }

    /// Mean cross-entropy over the batch and its gradient, without the L2 term.
    fn data_loss_grad(&self, xs: &[&[f32]], ys: &[usize]) -> (f64, Vec<f64>, Vec<f64>) {
        let classes = self.bias.len();
        let mut loss = 0.0;
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; classes];
        for (x, &y) in xs.iter().zip(ys) {
            let z = self.logits(x);
            let lse = log_sum_exp(&z);
            loss += lse - z[y];
            for c in 0..classes {
                let dz = (z[c] - lse).exp() - if c == y { 1.0 } else { 0.0 };
                gb[c] += dz;
                let row = &mut gw[c * self.dim..(c + 1) * self.dim];
                for (g, &v) in row.iter_mut().zip(x.iter()) {
                    *g += dz * f64::from(v);
                }
            }
        }
        let inv = 1.0 / xs.len() as f64;
        gw.iter_mut().for_each(|g| *g *= inv);
        gb.iter_mut().for_each(|g| *g *= inv);
        (loss * inv, gw, gb)
    }

    fn l2(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    fn full_loss(&self, xs: &[&[f32]], ys: &[usize], l2_lambda: f64) -> f64 {
        self.data_loss_grad(xs, ys).0 + 0.5 * l2_lambda * self.l2()
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

/// Loss `-(1/B) Σ log softmax(Wx+b)[y] + (λ/2)‖W‖²` and its exact gradient.
/// Inputs are used as given.
pub fn logreg_loss_grad(
    model: &LogRegModel,
    batch: &[(&EmbeddingVector, &str)],
) -> Result<LossGrad> {
    if batch.is_empty() {
        return Err(Error::Empty("gradient batch is empty".into()));
    }
    let mut xs = Vec::with_capacity(batch.len());
    let mut ys = Vec::with_capacity(batch.len());
    for (x, label) in batch {
        if x.dim() != model.dim {
            return Err(Error::DimensionMismatch {
                expected: model.dim,
                actual: x.dim(),
            });
        }
        xs.push(x.values());
        ys.push(model.class_index(label)?);
    }
    let params = Params::from_model(model);
    let (loss, mut gw, gb) = params.data_loss_grad(&xs, &ys);
    for (g, w) in gw.iter_mut().zip(&params.weights) {
        *g += model.l2_lambda * w;
    }
    Ok(LossGrad {
        loss: loss + 0.5 * model.l2_lambda * params.l2(),
        grad_weights: gw,
        grad_bias: gb,
    })
}

/// Trains on (vector, label) examples. Returns the model and the full
/// training loss before the first epoch followed by the loss after each one.
pub fn fit(
    examples: &[(&EmbeddingVector, &str)],
    config: &TrainConfig,
) -> Result<(LogRegModel, Vec<f64>)> {
    if config.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
    }
    if !(config.learning_rate > 0.0) || !(config.l2_lambda >= 0.0) {
        return Err(Error::InvalidConfig(
            "learning rate must be > 0 and l2 >= 0".into(),
        ));
    }
    let classes: Vec<String> = examples
        .iter()
        .map(|(_, l)| l.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(Error::TooFewClasses(classes.len()));
    }
    let dim = examples[0].0.dim();
    let mut units = Vec::with_capacity(examples.len());
    for (x, _) in examples {
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x.dim(),
            });
        }
        units.push(x.normalize()?);
    }
    let mut model = LogRegModel::zeros(dim, classes, config.l2_lambda)?;
    let xs: Vec<&[f32]> = units.iter().map(|u| u.values()).collect();
    let ys: Vec<usize> = examples
        .iter()
        .map(|(_, l)| model.class_index(l))
        .collect::<Result<_>>()?;

    let mut params = Params::from_model(&model);
    let mut trace = vec![params.full_loss(&xs, &ys, config.l2_lambda)];
    let mut rng = SeededRng::new(config.seed, &["logreg-shuffle"]);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let shrink = 1.0 / (1.0 + config.learning_rate * config.l2_lambda);
    let mut bx: Vec<&[f32]> = Vec::with_capacity(config.batch_size);
    let mut by: Vec<usize> = Vec::with_capacity(config.batch_size);
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            bx.clear();
            by.clear();
            bx.extend(chunk.iter().map(|&i| xs[i]));
            by.extend(chunk.iter().map(|&i| ys[i]));
            let (_, gw, gb) = params.data_loss_grad(&bx, &by);
            for (w, g) in params.weights.iter_mut().zip(&gw) {
                *w = (*w - config.learning_rate * g) * shrink;
            }
            for (b, g) in params.bias.iter_mut().zip(&gb) {
                *b -= config.learning_rate * g;
            }
        }
        let loss = params.full_loss(&xs, &ys, config.l2_lambda);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        debug!("logreg epoch={epoch} loss={loss}");
        trace.push(loss);
    }
    model.weights = params.weights.iter().map(|&w| w as f32).collect();
    model.bias = params.bias.iter().map(|&b| b as f32).collect();
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        if last > first {
            warn!("logreg: final loss {last} exceeds initial loss {first}");
        }
    }
    Ok((model, trace))
}

/// Trains the classification head on every record of `train`.
pub fn train_logreg(
    train: &Dataset,
    store: &EmbeddingStore,
    config: &TrainConfig,
) -> Result<LogRegModel> {
    let mut examples = Vec::with_capacity(train.len());
    for r in train.iter() {
        examples.push((store.require(&r.id)?, r.label.as_str()));
    }
    if examples.is_empty() {
        return Err(Error::TooFewClasses(0));
    }
    Ok(fit(&examples, config)?.0)
}

/// Predicted label and class probabilities (in class order) for `q`, which
/// is normalized first. Argmax ties go to the earliest class.
pub fn predict_logreg(model: &LogRegModel, q: &EmbeddingVector) -> Result<(String, Vec<f64>)> {
    if q.dim() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            actual: q.dim(),
        });
    }
    let unit = q.normalize()?;
    let probs = model.probabilities_raw(unit.values());
    let mut best = 0;
    for (c, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = c;
        }
    }
    Ok((model.class_order[best].clone(), probs))
}

/// Metrics of the head over `test`, with vectors from `store`.
pub fn evaluate_logreg(
    test: &Dataset,
    model: &LogRegModel,
    store: &EmbeddingStore,
) -> Result<Metrics> {
    let preds = test
        .iter()
        .map(|r| {
            Ok((
                r.id.clone(),
                predict_logreg(model, store.require(&r.id)?)?.0,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let known: BTreeSet<String> = model.class_order.iter().cloned().collect();
    evaluate(&preds, test, Some(&known))
}

/// Scores the head on externally translated test queries. `translated`
/// carries the original ids; gold labels and languages come from
/// `original`, and `store` holds embeddings of the translated text.
pub fn translation_pipeline_eval(
    translated: &Dataset,
    original: &Dataset,
    model: &LogRegModel,
    store: &EmbeddingStore,
) -> Result<Metrics> {
    if translated.is_empty() {
        return Err(Error::Empty("translated test set has no records".into()));
    }
    let t_ids: BTreeSet<&str> = translated.iter().map(|r| r.id.as_str()).collect();
    let o_ids: BTreeSet<&str> = original.iter().map(|r| r.id.as_str()).collect();
    if t_ids != o_ids {
        let missing = o_ids.difference(&t_ids).next();
        let extra = t_ids.difference(&o_ids).next();
        return Err(Error::IdMismatch(format!(
            "translated set differs from original (first missing {missing:?}, first extra {extra:?})"
        )));
    }
    let preds = translated
        .iter()
        .map(|r| {
            Ok((
                r.id.clone(),
                predict_logreg(model, store.require(&r.id)?)?.0,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let known: BTreeSet<String> = model.class_order.iter().cloned().collect();
    evaluate(&preds, original, Some(&known))
}
