//! Float64 mini-batch gradient descent for an extractor plus classification head.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::extractor::{row_sums, ExtractorCache};
use super::{argmax_columns, col_unify, row_unify, FeatureExtractor, LabeledDataset, ZeroBiasHead};
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// Softmax cross-entropy over `scale · scores`.
    CrossEntropy,
    /// Squared error between raw scores and one-hot targets, summed over
    /// classes and averaged over the batch.
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: Loss,
    /// Temperature applied to cosine scores before the softmax.
    pub scale: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop as soon as validation accuracy reaches this value.
    pub stop_at_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: Loss::CrossEntropy,
            scale: 8.0,
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 32,
            seed: 7,
            stop_at_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "scale must be > 0, got {}",
                self.scale
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A classification head that can sit on top of a [`FeatureExtractor`].
pub trait TrainableHead: Clone {
    type Grad: Clone + std::fmt::Debug;
    type Cache;

    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    /// Multiplier applied to scores before the softmax.
    fn logit_scale(&self, cfg: &TrainConfig) -> f64;
    fn scores(&self, h: &Matrix) -> Result<Matrix>;
    fn forward_train(&self, h: &Matrix) -> Result<(Matrix, Self::Cache)>;
    /// Parameter gradients and `∂L/∂h` given `∂L/∂scores`.
    fn backward(&self, h: &Matrix, cache: &Self::Cache, d_scores: &Matrix) -> (Self::Grad, Matrix);
    fn descend(&mut self, grad: &Self::Grad, lr: f64);

    fn predict(&self, h: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_columns(&self.scores(h)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroBiasGrad {
    pub w0: Matrix,
    pub b: Vector,
    pub w1: Matrix,
}

pub struct ZeroBiasCache {
    y0_norms: Vec<f64>,
    y_unit: Matrix,
    w1_norms: Vec<f64>,
    w_unit: Matrix,
}

/// `∂L/∂v` for `u = v/|v|`, given `∂L/∂u`: `(g − u(u·g)) / |v|`.
fn unit_backward(
    u: nalgebra::DVectorView<'_, f64>,
    g: nalgebra::DVectorView<'_, f64>,
    norm: f64,
) -> Vector {
    (g - u * u.dot(&g)) / norm
}

impl TrainableHead for ZeroBiasHead {
    type Grad = ZeroBiasGrad;
    type Cache = ZeroBiasCache;

    fn input_dim(&self) -> usize {
        self.n0()
    }

    fn num_classes(&self) -> usize {
        ZeroBiasHead::num_classes(self)
    }

    fn logit_scale(&self, cfg: &TrainConfig) -> f64 {
        cfg.scale
    }

    fn scores(&self, h: &Matrix) -> Result<Matrix> {
        super::head_forward(self, h)
    }

    fn forward_train(&self, h: &Matrix) -> Result<(Matrix, ZeroBiasCache)> {
        let y0 = self.reduce(h)?;
        let y_unit = col_unify(&y0).map_err(|e| match e {
            Error::ZeroVectorColumn { index } => Error::ZeroFeature { column: index },
            other => other,
        })?;
        let w_unit = row_unify(&self.w1)?;
        let scores = &w_unit * &y_unit;
        let cache = ZeroBiasCache {
            y0_norms: y0.column_iter().map(|c| c.norm()).collect(),
            y_unit,
            w1_norms: self.w1.row_iter().map(|r| r.norm()).collect(),
            w_unit,
        };
        Ok((scores, cache))
    }

    fn backward(
        &self,
        h: &Matrix,
        cache: &ZeroBiasCache,
        d_scores: &Matrix,
    ) -> (ZeroBiasGrad, Matrix) {
        let d_w_unit = d_scores * cache.y_unit.transpose();
        let mut w1 = Matrix::zeros(self.w1.nrows(), self.w1.ncols());
        for r in 0..w1.nrows() {
            let u = cache.w_unit.row(r).transpose();
            let g = d_w_unit.row(r).transpose();
            let d = unit_backward(u.as_view(), g.as_view(), cache.w1_norms[r]);
            w1.set_row(r, &d.transpose());
        }
        let d_y_unit = cache.w_unit.transpose() * d_scores;
        let mut d_y0 = Matrix::zeros(d_y_unit.nrows(), d_y_unit.ncols());
        for j in 0..d_y0.ncols() {
            let d = unit_backward(
                cache.y_unit.column(j),
                d_y_unit.column(j),
                cache.y0_norms[j],
            );
            d_y0.set_column(j, &d);
        }
        let grad = ZeroBiasGrad {
            w0: &d_y0 * h.transpose(),
            b: row_sums(&d_y0),
            w1,
        };
        let d_h = self.w0.transpose() * d_y0;
        (grad, d_h)
    }

    fn descend(&mut self, grad: &ZeroBiasGrad, lr: f64) {
        self.w0 -= &grad.w0 * lr;
        self.b -= &grad.b * lr;
        self.w1 -= &grad.w1 * lr;
    }
}

/// Conventional affine head `W·h + b` used as an accuracy baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardHead {
    pub w: Matrix,
    pub b: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardHeadGrad {
    pub w: Matrix,
    pub b: Vector,
}

impl StandardHead {
    pub fn random(n0: usize, c: usize, rng: &mut impl rand::Rng) -> Self {
        let limit = (6.0 / (n0 + c) as f64).sqrt();
        Self {
            w: Matrix::from_fn(c, n0, |_, _| rng.random_range(-limit..limit)),
            b: Vector::zeros(c),
        }
    }
}

impl TrainableHead for StandardHead {
    type Grad = StandardHeadGrad;
    type Cache = ();

    fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    fn num_classes(&self) -> usize {
        self.w.nrows()
    }

    fn logit_scale(&self, _cfg: &TrainConfig) -> f64 {
        1.0
    }

    fn scores(&self, h: &Matrix) -> Result<Matrix> {
        if h.nrows() != self.w.ncols() {
            return Err(Error::DimensionMismatch {
                context: "standard head input rows",
                expected: self.w.ncols(),
                found: h.nrows(),
            });
        }
        let mut s = &self.w * h;
        for mut col in s.column_iter_mut() {
            col += &self.b;
        }
        Ok(s)
    }

    fn forward_train(&self, h: &Matrix) -> Result<(Matrix, ())> {
        Ok((self.scores(h)?, ()))
    }

    fn backward(&self, h: &Matrix, _cache: &(), d_scores: &Matrix) -> (StandardHeadGrad, Matrix) {
        let grad = StandardHeadGrad {
            w: d_scores * h.transpose(),
            b: row_sums(d_scores),
        };
        (grad, self.w.transpose() * d_scores)
    }

    fn descend(&mut self, grad: &StandardHeadGrad, lr: f64) {
        self.w -= &grad.w * lr;
        self.b -= &grad.b * lr;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vector,
}

/// Gradients for every extractor layer and the head, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<G> {
    pub layers: Vec<LayerGrad>,
    pub head: G,
}

/// Mean loss over the batch and its gradient with respect to the scores.
fn score_loss(scores: &Matrix, labels: &[usize], loss: Loss, scale: f64) -> (f64, Matrix) {
    let q = scores.ncols() as f64;
    let mut d = Matrix::zeros(scores.nrows(), scores.ncols());
    let mut total = 0.0;
    match loss {
        Loss::CrossEntropy => {
            for (j, col) in scores.column_iter().enumerate() {
                let z: Vec<f64> = col.iter().map(|v| scale * v).collect();
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
                let lse = max + sum.ln();
                total += lse - z[labels[j]];
                for (c, zc) in z.iter().enumerate() {
                    let p = (zc - lse).exp();
                    let t = if c == labels[j] { 1.0 } else { 0.0 };
                    d[(c, j)] = scale * (p - t) / q;
                }
            }
        }
        Loss::Mse => {
            for (j, col) in scores.column_iter().enumerate() {
                for (c, s) in col.iter().enumerate() {
                    let t = if c == labels[j] { 1.0 } else { 0.0 };
                    total += (s - t) * (s - t);
                    d[(c, j)] = 2.0 * (s - t) / q;
                }
            }
        }
    }
    (total / q, d)
}

struct Forward<C> {
    extractor: ExtractorCache,
    head: C,
    scores: Matrix,
}

fn forward<H: TrainableHead>(
    extractor: &FeatureExtractor,
    head: &H,
    x: &Matrix,
) -> Result<Forward<H::Cache>> {
    let cache = extractor.forward_cached(x)?;
    let h = cache.activations.last().expect("nonempty");
    let (scores, head_cache) = head.forward_train(h)?;
    Ok(Forward {
        extractor: cache,
        head: head_cache,
        scores,
    })
}

/// Batch loss and gradients for every parameter of `extractor` and `head`.
pub fn loss_and_grad<H: TrainableHead>(
    extractor: &FeatureExtractor,
    head: &H,
    batch: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(f64, Gradients<H::Grad>)> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let fwd = forward(extractor, head, batch.x())?;
    let (loss, d_scores) = score_loss(&fwd.scores, batch.y(), cfg.loss, head.logit_scale(cfg));
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let h = fwd.extractor.activations.last().expect("nonempty");
    let (head_grad, d_h) = head.backward(h, &fwd.head, &d_scores);
    let layers = extractor
        .backward(&fwd.extractor, d_h)
        .into_iter()
        .map(|(weight, bias)| LayerGrad { weight, bias })
        .collect();
    Ok((
        loss,
        Gradients {
            layers,
            head: head_grad,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained model; its loss is over the full training set.
    pub epoch: usize,
    pub loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<H> {
    pub extractor: FeatureExtractor,
    pub head: H,
    pub history: Vec<EpochRecord>,
}

impl<H> TrainOutcome<H> {
    pub fn initial_accuracy(&self) -> f64 {
        self.history.first().map_or(0.0, |r| r.val_accuracy)
    }

    pub fn final_accuracy(&self) -> f64 {
        self.history.last().map_or(0.0, |r| r.val_accuracy)
    }
}

/// Model state captured the first time validation accuracy reached `trigger`.
#[derive(Debug, Clone)]
pub struct Snapshot<H> {
    pub trigger: f64,
    pub epoch: usize,
    pub accuracy: f64,
    pub extractor: FeatureExtractor,
    pub head: H,
}

pub(crate) fn predict<H: TrainableHead>(
    extractor: &FeatureExtractor,
    head: &H,
    x: &Matrix,
) -> Result<Vec<usize>> {
    head.predict(&extractor.forward(x)?)
}

fn accuracy<H: TrainableHead>(
    extractor: &FeatureExtractor,
    head: &H,
    data: &LabeledDataset,
) -> Result<f64> {
    Ok(data.accuracy(&predict(extractor, head, data.x())?))
}

fn check_datasets<H: TrainableHead>(
    extractor: &FeatureExtractor,
    head: &H,
    train: &LabeledDataset,
    val: &LabeledDataset,
) -> Result<()> {
    if train.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    if train.num_classes() != val.num_classes() || train.num_classes() != head.num_classes() {
        return Err(Error::ModelMismatch(format!(
            "class counts differ: train {}, val {}, head {}",
            train.num_classes(),
            val.num_classes(),
            head.num_classes()
        )));
    }
    let out = extractor.output_dim(train.dim());
    if out != head.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "extractor output vs head input",
            expected: head.input_dim(),
            found: out,
        });
    }
    Ok(())
}

/// Train with plain mini-batch gradient descent.
pub fn train<H: TrainableHead>(
    extractor: FeatureExtractor,
    head: H,
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<H>> {
    train_with_snapshots(extractor, head, train, val, cfg, &[]).map(|(out, _)| out)
}

/// Like [`train`], but also captures the model the first time validation
/// accuracy reaches each of `triggers`. Accuracy is checked after every
/// mini-batch while triggers are pending.
pub fn train_with_snapshots<H: TrainableHead>(
    mut extractor: FeatureExtractor,
    mut head: H,
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
    triggers: &[f64],
) -> Result<(TrainOutcome<H>, Vec<Snapshot<H>>)> {
    cfg.validate()?;
    check_datasets(&extractor, &head, train, val)?;
    let mut rng = seeded(cfg.seed);
    let mut pending: Vec<f64> = triggers.to_vec();
    pending.sort_by(f64::total_cmp);
    let mut snapshots = Vec::new();

    let initial = accuracy(&extractor, &head, val)?;
    let (initial_loss, _) = loss_and_grad(&extractor, &head, train, cfg)?;
    let mut history = vec![EpochRecord {
        epoch: 0,
        loss: initial_loss,
        val_accuracy: initial,
    }];
    take_snapshots(&mut pending, &mut snapshots, 0, initial, &extractor, &head);

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train.select(chunk);
            let (loss, grads) = match loss_and_grad(&extractor, &head, &batch, cfg) {
                Ok(v) => v,
                Err(Error::NonFiniteLoss) => return Err(Error::Divergence { epoch }),
                Err(e) => return Err(e),
            };
            for (layer, g) in extractor.layers.iter_mut().zip(&grads.layers) {
                layer.weight -= &g.weight * cfg.learning_rate;
                layer.bias -= &g.bias * cfg.learning_rate;
            }
            head.descend(&grads.head, cfg.learning_rate);
            loss_sum += loss;
            batches += 1;
            if !pending.is_empty() {
                let acc = accuracy(&extractor, &head, val)?;
                take_snapshots(&mut pending, &mut snapshots, epoch, acc, &extractor, &head);
            }
        }
        let val_accuracy = accuracy(&extractor, &head, val)?;
        let loss = loss_sum / batches as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(EpochRecord {
            epoch,
            loss,
            val_accuracy,
        });
        if cfg.stop_at_accuracy.is_some_and(|t| val_accuracy >= t) {
            break;
        }
    }
    Ok((
        TrainOutcome {
            extractor,
            head,
            history,
        },
        snapshots,
    ))
}

fn take_snapshots<H: TrainableHead>(
    pending: &mut Vec<f64>,
    snapshots: &mut Vec<Snapshot<H>>,
    epoch: usize,
    acc: f64,
    extractor: &FeatureExtractor,
    head: &H,
) {
    while pending.first().is_some_and(|&t| acc >= t) {
        let trigger = pending.remove(0);
        snapshots.push(Snapshot {
            trigger,
            epoch,
            accuracy: acc,
            extractor: extractor.clone(),
            head: head.clone(),
        });
    }
}
