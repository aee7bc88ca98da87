//! Zero-bias dense head.
//!
//! The head first reduces a feature matrix `X` (N0×q, one sample per column)
//! to `Y0 = W0·X + b` (N1×q) and then scores every sample against the class
//! fingerprints stored as rows of `W1` (C×N1) by cosine similarity:
//!
//! ```text
//! cos(Y0, W1) = RU(W1) × CU(Y0)
//! ```
//!
//! where `RU` normalizes rows and `CU` normalizes columns to unit length. The
//! stored `W1` is unconstrained; normalization happens on every forward pass.

mod dataset;
mod extractor;
mod train;

pub use dataset::LabeledDataset;
pub use extractor::{Activation, DenseLayer, FeatureExtractor};
pub use train::{
    loss_and_grad, train, train_with_snapshots, EpochRecord, Gradients, LayerGrad, Loss, Snapshot,
    StandardHead, StandardHeadGrad, TrainConfig, TrainOutcome, TrainableHead, ZeroBiasGrad,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Norms below this are treated as zero vectors.
pub const ZERO_NORM: f64 = 1e-30;

/// Normalize every row of `m` to unit Euclidean norm.
pub fn row_unify(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let norm = row.norm();
        if !(norm >= ZERO_NORM) {
            return Err(Error::ZeroVectorRow { index: i });
        }
        row /= norm;
    }
    Ok(out)
}

/// Normalize every column of `m` to unit Euclidean norm.
pub fn col_unify(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !(norm >= ZERO_NORM) {
            return Err(Error::ZeroVectorColumn { index: j });
        }
        col /= norm;
    }
    Ok(out)
}

/// Dimension reduction `(W0, b)` followed by cosine fingerprint matching `W1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroBiasHead {
    pub(crate) w0: Matrix,
    pub(crate) b: Vector,
    pub(crate) w1: Matrix,
}

impl ZeroBiasHead {
    pub fn new(w0: Matrix, b: Vector, w1: Matrix) -> Result<Self> {
        let n1 = w0.nrows();
        if b.len() != n1 {
            return Err(Error::DimensionMismatch {
                context: "head bias",
                expected: n1,
                found: b.len(),
            });
        }
        if w1.ncols() != n1 {
            return Err(Error::DimensionMismatch {
                context: "fingerprint width",
                expected: n1,
                found: w1.ncols(),
            });
        }
        if n1 < 2 {
            return Err(Error::InvalidConfig(format!("N1 must be >= 2, got {n1}")));
        }
        if w1.nrows() < 1 || w0.ncols() < 1 {
            return Err(Error::InvalidConfig("head needs C >= 1 and N0 >= 1".into()));
        }
        let finite = w0
            .iter()
            .chain(b.iter())
            .chain(w1.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig(
                "head parameters must be finite".into(),
            ));
        }
        Ok(Self { w0, b, w1 })
    }

    /// Glorot-uniform `W0`, zero `b`, and fingerprints drawn from U(-1, 1).
    pub fn random(n0: usize, n1: usize, c: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        let limit = (6.0 / (n0 + n1) as f64).sqrt();
        let w0 = Matrix::from_fn(n1, n0, |_, _| rng.random_range(-limit..limit));
        let w1 = Matrix::from_fn(c, n1, |_, _| rng.random_range(-1.0..1.0));
        Self::new(w0, Vector::zeros(n1), w1)
    }

    pub fn n0(&self) -> usize {
        self.w0.ncols()
    }

    pub fn n1(&self) -> usize {
        self.w0.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.w1.nrows()
    }

    pub fn w0(&self) -> &Matrix {
        &self.w0
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn w1(&self) -> &Matrix {
        &self.w1
    }

    /// Unit-length fingerprints, one per row.
    pub fn fingerprints(&self) -> Result<Matrix> {
        row_unify(&self.w1)
    }

    /// `Y0 = W0·X + b`, the reduced features before fingerprint matching.
    pub fn reduce(&self, x: &Matrix) -> Result<Matrix> {
        if x.nrows() != self.n0() {
            return Err(Error::DimensionMismatch {
                context: "head input rows",
                expected: self.n0(),
                found: x.nrows(),
            });
        }
        let mut y0 = &self.w0 * x;
        for mut col in y0.column_iter_mut() {
            col += &self.b;
        }
        Ok(y0)
    }
}

/// Cosine similarities (C×q) between every fingerprint and every sample.
pub fn head_forward(head: &ZeroBiasHead, x: &Matrix) -> Result<Matrix> {
    let y0 = head.reduce(x)?;
    cosine_scores(head, &y0)
}

pub(crate) fn cosine_scores(head: &ZeroBiasHead, y0: &Matrix) -> Result<Matrix> {
    let unit = col_unify(y0).map_err(|e| match e {
        Error::ZeroVectorColumn { index } => Error::ZeroFeature { column: index },
        other => other,
    })?;
    Ok(head.fingerprints()? * unit)
}

/// Index of the largest score in each column; ties go to the lowest index.
pub fn argmax_columns(scores: &Matrix) -> Vec<usize> {
    scores
        .column_iter()
        .map(|col| {
            let mut best = 0;
            for (i, &v) in col.iter().enumerate().skip(1) {
                if v > col[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Nearest-fingerprint label for every sample column.
pub fn classify(head: &ZeroBiasHead, x: &Matrix) -> Result<Vec<usize>> {
    Ok(argmax_columns(&head_forward(head, x)?))
}
