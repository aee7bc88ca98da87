use crate::error::{Error, Result};
use crate::Matrix;

/// Samples stored column-wise (N0×q) with one integer label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: Matrix,
    y: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(x: Matrix, y: Vec<usize>, num_classes: usize) -> Result<Self> {
        if x.ncols() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: x.ncols(),
                found: y.len(),
            });
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Self { x, y, num_classes })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Columns selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select_columns(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn indices_of_class(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.y[i] == class).collect()
    }

    /// Fraction of `predicted` labels equal to the stored labels.
    pub fn accuracy(&self, predicted: &[usize]) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        let hits = self.y.iter().zip(predicted).filter(|(a, b)| a == b).count();
        hits as f64 / self.len() as f64
    }
}
