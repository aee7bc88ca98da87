//! Conversion of a trained zero-bias classifier into a binary abnormality
//! detector.
//!
//! For every known class the correctly classified training samples are mapped
//! to the detection feature space, and a centroid, covariance and cut-off
//! distance are recorded. The cut-off is the largest Mahalanobis distance
//! among those samples, so every sample used for fitting lies inside its own
//! class boundary. An input is normal (0) when it falls inside at least one
//! boundary, abnormal (1) otherwise.

mod boundary;
mod bounds;

pub use boundary::{
    correctly_classified, detect, detect_batch, detect_inputs, detection_features, fit_boundaries,
    mahalanobis, reduced_features, BoundaryModelSet, ClassBoundary, CutoffMode, FeatureSpace,
    FitConfig,
};
pub use bounds::{compute_bounds, DetectorBounds};
