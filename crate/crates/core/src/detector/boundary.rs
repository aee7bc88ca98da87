use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::zb::{classify, col_unify, FeatureExtractor, LabeledDataset, ZeroBiasHead};
use crate::{Matrix, Vector};

/// Where class boundaries live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSpace {
    /// Reduced features projected onto the unit hypersphere (`CU(Y0)`), the
    /// surface on which fingerprint matching happens.
    #[default]
    Sphere,
    /// Raw reduced features `Y0 = W0·F(x) + b`.
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffMode {
    /// Largest distance among the fitting samples.
    Max,
    /// Empirical quantile of the fitting distances, e.g. 0.999.
    Quantile(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Ridge added to each covariance, as a multiple of `trace / dim`.
    pub ridge_scale: f64,
    pub cutoff: CutoffMode,
    pub space: FeatureSpace,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            ridge_scale: 1e-6,
            cutoff: CutoffMode::Max,
            space: FeatureSpace::Sphere,
        }
    }
}

/// Normal-data boundary of one known class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBoundary {
    class_id: usize,
    centroid: Vector,
    covariance: Matrix,
    precision: Matrix,
    cutoff: f64,
    ridge: f64,
}

impl ClassBoundary {
    /// Builds a boundary, inverting `covariance + ridge·I`.
    pub fn new(
        class_id: usize,
        centroid: Vector,
        covariance: Matrix,
        ridge: f64,
        cutoff: f64,
    ) -> Result<Self> {
        let dim = centroid.len();
        if covariance.nrows() != dim || covariance.ncols() != dim {
            return Err(Error::DimensionMismatch {
                context: "covariance shape",
                expected: dim,
                found: covariance.nrows().max(covariance.ncols()),
            });
        }
        if !(ridge >= 0.0) || !(cutoff >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "class {class_id}: ridge {ridge} and cutoff {cutoff} must be >= 0"
            )));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if !(asym <= 1e-9) {
            return Err(Error::InvalidConfig(format!(
                "class {class_id}: covariance not symmetric (max deviation {asym})"
            )));
        }
        let regularized = &covariance + Matrix::identity(dim, dim) * ridge;
        let precision = regularized
            .clone()
            .cholesky()
            .ok_or(Error::DegenerateClass {
                class: class_id,
                samples: 0,
                reason: "covariance is not positive definite",
            })?
            .inverse();
        let residual = (&precision * &regularized - Matrix::identity(dim, dim)).amax();
        if !(residual <= 1e-6) {
            return Err(Error::DegenerateClass {
                class: class_id,
                samples: 0,
                reason: "covariance is too ill-conditioned to invert",
            });
        }
        Ok(Self {
            class_id,
            centroid,
            covariance,
            precision,
            cutoff,
            ridge,
        })
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn centroid(&self) -> &Vector {
        &self.centroid
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn precision(&self) -> &Matrix {
        &self.precision
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        self.centroid.len()
    }

    pub fn set_cutoff(&mut self, cutoff: f64) -> Result<()> {
        if !(cutoff >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "cutoff must be >= 0, got {cutoff}"
            )));
        }
        self.cutoff = cutoff;
        Ok(())
    }

    /// Whether `x` lies inside this boundary.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        Ok(mahalanobis(x, self)? <= self.cutoff)
    }
}

/// `sqrt((x − c)ᵀ · P⁻¹ · (x − c))` using the boundary's regularized precision.
pub fn mahalanobis(x: &[f64], boundary: &ClassBoundary) -> Result<f64> {
    let dim = boundary.dim();
    if x.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "mahalanobis input",
            expected: dim,
            found: x.len(),
        });
    }
    let diff: Vec<f64> = x
        .iter()
        .zip(boundary.centroid.iter())
        .map(|(a, c)| a - c)
        .collect();
    let mut q = 0.0;
    for i in 0..dim {
        let mut row = 0.0;
        for j in 0..dim {
            row += boundary.precision[(i, j)] * diff[j];
        }
        q += diff[i] * row;
    }
    Ok(q.max(0.0).sqrt())
}

/// The converted detector: one boundary per known class.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryModelSet {
    dim: usize,
    space: FeatureSpace,
    boundaries: Vec<ClassBoundary>,
}

impl BoundaryModelSet {
    pub fn new(dim: usize, space: FeatureSpace, boundaries: Vec<ClassBoundary>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for b in &boundaries {
            if b.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: "boundary dimension",
                    expected: dim,
                    found: b.dim(),
                });
            }
            if !seen.insert(b.class_id) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate class id {}",
                    b.class_id
                )));
            }
        }
        Ok(Self {
            dim,
            space,
            boundaries,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn space(&self) -> FeatureSpace {
        self.space
    }

    pub fn boundaries(&self) -> &[ClassBoundary] {
        &self.boundaries
    }

    pub fn boundaries_mut(&mut self) -> &mut [ClassBoundary] {
        &mut self.boundaries
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    /// Whether `x` falls inside any class boundary.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "detector input",
                expected: self.dim,
                found: x.len(),
            });
        }
        for b in &self.boundaries {
            if b.contains(x)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// `0` (normal) when `x` is inside some class boundary, `1` (abnormal) otherwise.
pub fn detect(set: &BoundaryModelSet, x: &[f64]) -> Result<u8> {
    Ok(if set.contains(x)? { 0 } else { 1 })
}

/// [`detect`] applied to every column of `features`.
pub fn detect_batch(set: &BoundaryModelSet, features: &Matrix) -> Result<Vec<u8>> {
    (0..features.ncols())
        .map(|j| detect(set, features.column(j).as_slice()))
        .collect()
}

/// Reduced features `Y0 = W0·F(x) + b` (N1×q), no fingerprint matching.
///
/// Computed one column at a time so that a sample's features do not depend
/// on the batch it arrives in.
pub fn reduced_features(
    extractor: &FeatureExtractor,
    head: &ZeroBiasHead,
    x: &Matrix,
) -> Result<Matrix> {
    let mut out = Matrix::zeros(head.n1(), x.ncols());
    for j in 0..x.ncols() {
        let col = x.columns(j, 1).into_owned();
        let y0 = head.reduce(&extractor.forward(&col)?)?;
        out.set_column(j, &y0.column(0));
    }
    Ok(out)
}

/// Features in the space the detector operates on.
pub fn detection_features(
    extractor: &FeatureExtractor,
    head: &ZeroBiasHead,
    x: &Matrix,
    space: FeatureSpace,
) -> Result<Matrix> {
    let y0 = reduced_features(extractor, head, x)?;
    match space {
        FeatureSpace::Reduced => Ok(y0),
        FeatureSpace::Sphere => col_unify(&y0).map_err(|e| match e {
            Error::ZeroVectorColumn { index } => Error::ZeroFeature { column: index },
            other => other,
        }),
    }
}

/// Raw inputs (one per column) straight to detector decisions.
pub fn detect_inputs(
    extractor: &FeatureExtractor,
    head: &ZeroBiasHead,
    set: &BoundaryModelSet,
    x: &Matrix,
) -> Result<Vec<u8>> {
    detect_batch(set, &detection_features(extractor, head, x, set.space())?)
}

/// Indices of samples the classifier labels correctly.
pub fn correctly_classified(
    extractor: &FeatureExtractor,
    head: &ZeroBiasHead,
    data: &LabeledDataset,
) -> Result<Vec<usize>> {
    let predicted = classify(head, &extractor.forward(data.x())?)?;
    Ok((0..data.len())
        .filter(|&i| predicted[i] == data.y()[i])
        .collect())
}

/// Fit one boundary per known class from correctly classified training samples.
pub fn fit_boundaries(
    extractor: &FeatureExtractor,
    head: &ZeroBiasHead,
    train: &LabeledDataset,
    cfg: &FitConfig,
) -> Result<BoundaryModelSet> {
    if !(cfg.ridge_scale >= 0.0) {
        return Err(Error::InvalidConfig("ridge_scale must be >= 0".into()));
    }
    if let CutoffMode::Quantile(q) = cfg.cutoff {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "cutoff quantile must be in (0, 1], got {q}"
            )));
        }
    }
    let correct = correctly_classified(extractor, head, train)?;
    let features = detection_features(
        extractor,
        head,
        &train.select(&correct).x().clone(),
        cfg.space,
    )?;
    let labels: Vec<usize> = correct.iter().map(|&i| train.y()[i]).collect();
    let dim = head.n1();

    let mut boundaries = Vec::with_capacity(head.num_classes());
    for class in 0..head.num_classes() {
        let cols: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] == class).collect();
        let n = cols.len();
        if n < 2 {
            return Err(Error::DegenerateClass {
                class,
                samples: n,
                reason: "need at least two correctly classified samples",
            });
        }
        let f = features.select_columns(&cols);
        let centroid = Vector::from_iterator(dim, f.row_iter().map(|r| r.mean()));
        let mut centered = f.clone();
        for mut col in centered.column_iter_mut() {
            col -= &centroid;
        }
        let mut covariance = &centered * centered.transpose() / (n as f64 - 1.0);
        // exact symmetry
        covariance = (&covariance + covariance.transpose()) * 0.5;
        let ridge = cfg.ridge_scale * covariance.trace() / dim as f64;
        if ridge == 0.0 && n < dim + 1 {
            return Err(Error::DegenerateClass {
                class,
                samples: n,
                reason: "singular covariance without ridge",
            });
        }
        let mut boundary =
            ClassBoundary::new(class, centroid, covariance, ridge, 0.0).map_err(|e| match e {
                Error::DegenerateClass { class, reason, .. } => Error::DegenerateClass {
                    class,
                    samples: n,
                    reason,
                },
                other => other,
            })?;
        let mut distances = (0..n)
            .map(|j| mahalanobis(f.column(j).as_slice(), &boundary))
            .collect::<Result<Vec<f64>>>()?;
        distances.sort_by(f64::total_cmp);
        let cutoff = match cfg.cutoff {
            CutoffMode::Max => distances[n - 1],
            CutoffMode::Quantile(q) => {
                let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
                distances[idx]
            }
        };
        boundary.set_cutoff(cutoff)?;
        boundaries.push(boundary);
    }
    BoundaryModelSet::new(dim, cfg.space, boundaries)
}
