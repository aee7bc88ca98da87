//! Flat-file formats.
//!
//! Matrices are stored row-major next to their shape. Loading re-validates
//! every shape, and a detector's precision matrices are recomputed from the
//! stored covariances rather than trusted from disk.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::{BoundaryModelSet, ClassBoundary, FeatureSpace};
use crate::error::{Error, Result};
use crate::zb::{Activation, DenseLayer, FeatureExtractor, LabeledDataset, ZeroBiasHead};
use crate::{Matrix, Vector};

pub const FORMAT_VERSION: u32 = 1;

fn row_major(m: &Matrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(rows: usize, cols: usize, data: &[f64], what: &str) -> Result<Matrix> {
    if data.len() != rows * cols {
        return Err(Error::ModelMismatch(format!(
            "{what}: expected {rows}x{cols} = {} values, found {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(Matrix::from_row_slice(rows, cols, data))
}

fn check_version(version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::ModelMismatch(format!(
            "unsupported file version {version} (expected {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerFile {
    input: usize,
    output: usize,
    activation: Activation,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    n0: usize,
    n1: usize,
    classes: usize,
    w0: Vec<f64>,
    b: Vec<f64>,
    w1: Vec<f64>,
    extractor: Vec<LayerFile>,
}

/// Extractor plus head, i.e. everything needed to turn inputs into features.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub extractor: FeatureExtractor,
    pub head: ZeroBiasHead,
}

impl SavedModel {
    /// Width of the raw input rows the model accepts.
    pub fn input_dim(&self) -> usize {
        self.extractor.input_dim().unwrap_or(self.head.n0())
    }
}

pub fn model_to_json(extractor: &FeatureExtractor, head: &ZeroBiasHead) -> Result<String> {
    let file = ModelFile {
        version: FORMAT_VERSION,
        n0: head.n0(),
        n1: head.n1(),
        classes: head.num_classes(),
        w0: row_major(head.w0()),
        b: head.b().as_slice().to_vec(),
        w1: row_major(head.w1()),
        extractor: extractor
            .layers
            .iter()
            .map(|l| LayerFile {
                input: l.input_dim(),
                output: l.output_dim(),
                activation: l.activation,
                weight: row_major(&l.weight),
                bias: l.bias.as_slice().to_vec(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn model_from_json(text: &str) -> Result<SavedModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    check_version(file.version)?;
    let layers = file
        .extractor
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let weight =
                from_row_major(l.output, l.input, &l.weight, &format!("layer {i} weight"))?;
            if l.bias.len() != l.output {
                return Err(Error::ModelMismatch(format!(
                    "layer {i} bias has {} values",
                    l.bias.len()
                )));
            }
            DenseLayer::new(weight, Vector::from_vec(l.bias.clone()), l.activation)
        })
        .collect::<Result<Vec<_>>>()?;
    let extractor =
        FeatureExtractor::new(layers).map_err(|e| Error::ModelMismatch(e.to_string()))?;
    if let Some(last) = extractor.layers.last() {
        if last.output_dim() != file.n0 {
            return Err(Error::ModelMismatch(format!(
                "extractor emits {} features but the head expects N0 = {}",
                last.output_dim(),
                file.n0
            )));
        }
    }
    let w0 = from_row_major(file.n1, file.n0, &file.w0, "w0")?;
    let w1 = from_row_major(file.classes, file.n1, &file.w1, "w1")?;
    if file.b.len() != file.n1 {
        return Err(Error::ModelMismatch(format!(
            "b has {} values, expected {}",
            file.b.len(),
            file.n1
        )));
    }
    let head = ZeroBiasHead::new(w0, Vector::from_vec(file.b), w1)?;
    Ok(SavedModel { extractor, head })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BoundaryFile {
    id: usize,
    centroid: Vec<f64>,
    covariance: Vec<f64>,
    ridge: f64,
    cutoff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectorFile {
    version: u32,
    dim: usize,
    space: FeatureSpace,
    classes: Vec<BoundaryFile>,
}

pub fn detector_to_json(set: &BoundaryModelSet) -> Result<String> {
    let file = DetectorFile {
        version: FORMAT_VERSION,
        dim: set.dim(),
        space: set.space(),
        classes: set
            .boundaries()
            .iter()
            .map(|b| BoundaryFile {
                id: b.class_id(),
                centroid: b.centroid().as_slice().to_vec(),
                covariance: row_major(b.covariance()),
                ridge: b.ridge(),
                cutoff: b.cutoff(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn detector_from_json(text: &str) -> Result<BoundaryModelSet> {
    let file: DetectorFile = serde_json::from_str(text)?;
    check_version(file.version)?;
    let boundaries = file
        .classes
        .iter()
        .map(|c| {
            if c.centroid.len() != file.dim {
                return Err(Error::ModelMismatch(format!(
                    "class {} centroid has {} values, expected {}",
                    c.id,
                    c.centroid.len(),
                    file.dim
                )));
            }
            let cov = from_row_major(
                file.dim,
                file.dim,
                &c.covariance,
                &format!("class {} covariance", c.id),
            )?;
            ClassBoundary::new(
                c.id,
                Vector::from_vec(c.centroid.clone()),
                cov,
                c.ridge,
                c.cutoff,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    BoundaryModelSet::new(file.dim, file.space, boundaries)
}

/// Model and detector must agree on the reduced dimension and class count.
pub fn check_compatible(model: &SavedModel, set: &BoundaryModelSet) -> Result<()> {
    if model.head.n1() != set.dim() {
        return Err(Error::ModelMismatch(format!(
            "detector dimension {} differs from head N1 = {}",
            set.dim(),
            model.head.n1()
        )));
    }
    if let Some(b) = set
        .boundaries()
        .iter()
        .find(|b| b.class_id() >= model.head.num_classes())
    {
        return Err(Error::ModelMismatch(format!(
            "detector class {} is not a head class (C = {})",
            b.class_id(),
            model.head.num_classes()
        )));
    }
    Ok(())
}

pub fn save_model(path: &Path, extractor: &FeatureExtractor, head: &ZeroBiasHead) -> Result<()> {
    Ok(std::fs::write(path, model_to_json(extractor, head)?)?)
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_detector(path: &Path, set: &BoundaryModelSet) -> Result<()> {
    Ok(std::fs::write(path, detector_to_json(set)?)?)
}

pub fn load_detector(path: &Path) -> Result<BoundaryModelSet> {
    detector_from_json(&std::fs::read_to_string(path)?)
}

/// Parse one comma-separated row of finite numbers. `row` is 1-based.
pub fn parse_row(line: &str, row: u64) -> Result<Vec<f64>> {
    line.split(',')
        .enumerate()
        .map(|(k, field)| {
            let field = field.trim();
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::MalformedRow {
                    row,
                    reason: format!("field {} = {field:?} is not a finite number", k + 1),
                }),
            }
        })
        .collect()
}

/// Labelled samples as CSV rows `label,x1,…,xN`.
pub fn write_dataset<W: Write>(mut out: W, data: &LabeledDataset) -> Result<()> {
    for (j, col) in data.x().column_iter().enumerate() {
        write!(out, "{}", data.y()[j])?;
        for v in col.iter() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Inverse of [`write_dataset`]. With `num_classes = None` the class count is
/// one past the largest label.
pub fn read_dataset<R: BufRead>(input: R, num_classes: Option<usize>) -> Result<LabeledDataset> {
    let mut cols = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, line) in input.lines().enumerate() {
        let row = i as u64 + 1;
        let line = line?;
        let (label, rest) = line.split_once(',').ok_or_else(|| Error::MalformedRow {
            row,
            reason: "expected `label,x1,...`".into(),
        })?;
        let label: usize = label.trim().parse().map_err(|_| Error::MalformedRow {
            row,
            reason: format!("label {label:?} is not a non-negative integer"),
        })?;
        let values = parse_row(rest, row)?;
        if *width.get_or_insert(values.len()) != values.len() {
            return Err(Error::MalformedRow {
                row,
                reason: format!(
                    "{} features, earlier rows have {}",
                    values.len(),
                    width.unwrap()
                ),
            });
        }
        labels.push(label);
        cols.push(Vector::from_vec(values));
    }
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let x = if cols.is_empty() {
        Matrix::zeros(0, 0)
    } else {
        Matrix::from_columns(&cols)
    };
    LabeledDataset::new(x, labels, classes)
}

pub fn save_dataset(path: &Path, data: &LabeledDataset) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset(&mut out, data)?;
    out.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path, num_classes: Option<usize>) -> Result<LabeledDataset> {
    read_dataset(
        std::io::BufReader::new(std::fs::File::open(path)?),
        num_classes,
    )
}
