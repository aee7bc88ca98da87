//! 2-D projection of fingerprints and sample features for external plotting.

use std::io::Write;

use crate::detector::detection_features;
use crate::detector::FeatureSpace;
use crate::error::Result;
use crate::zb::{FeatureExtractor, LabeledDataset, ZeroBiasHead};
use crate::{Matrix, Vector};

/// Top-`k` principal directions (columns) of the points in `x` (one per
/// column), by power iteration with deflation. Returns `(directions, mean)`.
///
/// Each direction is signed so that its largest-magnitude entry is positive.
pub fn principal_components(x: &Matrix, k: usize) -> (Matrix, Vector) {
    let (dim, n) = x.shape();
    let mean = if n == 0 {
        Vector::zeros(dim)
    } else {
        Vector::from_iterator(dim, x.row_iter().map(|r| r.mean()))
    };
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = &centered * centered.transpose() / (n.max(1) as f64);
    let k = k.min(dim);
    let mut dirs = Matrix::zeros(dim, k);
    for c in 0..k {
        // deterministic start, not orthogonal to any coordinate axis
        let mut v = Vector::from_fn(dim, |i, _| 1.0 + 0.1 * i as f64);
        v /= v.norm();
        let mut lambda = 0.0;
        for _ in 0..10_000 {
            let w = &cov * &v;
            let norm = w.norm();
            if norm < 1e-300 {
                break;
            }
            let next = w / norm;
            let converged = (&next - &v).norm() < 1e-13 || (&next + &v).norm() < 1e-13;
            v = next;
            lambda = norm;
            if converged {
                break;
            }
        }
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v = -v;
        }
        cov -= &v * v.transpose() * lambda;
        dirs.set_column(c, &v);
    }
    (dirs, mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Fingerprint,
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPoint {
    pub kind: PointKind,
    pub label: usize,
    pub pc1: f64,
    pub pc2: f64,
}

/// Unit fingerprints and unit sample features projected onto their top two
/// principal components.
pub fn project_system(
    extractor: &FeatureExtractor,
    head: &ZeroBiasHead,
    data: &LabeledDataset,
) -> Result<Vec<ProjectedPoint>> {
    let fingerprints = head.fingerprints()?.transpose();
    let features = detection_features(extractor, head, data.x(), FeatureSpace::Sphere)?;
    let all = Matrix::from_columns(
        &fingerprints
            .column_iter()
            .chain(features.column_iter())
            .map(|c| c.into_owned())
            .collect::<Vec<_>>(),
    );
    let (dirs, mean) = principal_components(&all, 2);
    let c = fingerprints.ncols();
    Ok(all
        .column_iter()
        .enumerate()
        .map(|(j, col)| {
            let centered = col - &mean;
            let pc = |k: usize| {
                if k < dirs.ncols() {
                    dirs.column(k).dot(&centered)
                } else {
                    0.0
                }
            };
            let (kind, label) = if j < c {
                (PointKind::Fingerprint, j)
            } else {
                (PointKind::Sample, data.y()[j - c])
            };
            ProjectedPoint {
                kind,
                label,
                pc1: pc(0),
                pc2: pc(1),
            }
        })
        .collect())
}

pub fn write_projection_csv<W: Write>(mut out: W, points: &[ProjectedPoint]) -> Result<()> {
    writeln!(out, "kind,label,pc1,pc2")?;
    for p in points {
        let kind = match p.kind {
            PointKind::Fingerprint => "fingerprint",
            PointKind::Sample => "sample",
        };
        writeln!(out, "{kind},{},{},{}", p.label, p.pc1, p.pc2)?;
    }
    Ok(())
}
