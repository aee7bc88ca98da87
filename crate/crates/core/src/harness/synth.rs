use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, substream};
use crate::zb::LabeledDataset;
use crate::{Matrix, Vector};

/// Gaussian clusters around class means scattered on a sphere of radius
/// `mean_scale`. Classes `0..known_classes` are known; the next
/// `abnormal_classes` labels are held out as abnormal data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n0: usize,
    pub known_classes: usize,
    pub abnormal_classes: usize,
    pub samples_per_class: usize,
    pub cluster_std: f64,
    pub mean_scale: f64,
    /// Standard deviation of pure-noise abnormal inputs.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n0: 16,
            known_classes: 6,
            abnormal_classes: 3,
            samples_per_class: 250,
            cluster_std: 1.0,
            mean_scale: 4.0,
            noise_std: 2.0,
            seed: 11,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 || self.known_classes == 0 || self.samples_per_class == 0 {
            return Err(Error::InvalidConfig(
                "n0, known_classes and samples_per_class must be >= 1".into(),
            ));
        }
        for (name, v) in [
            ("cluster_std", self.cluster_std),
            ("mean_scale", self.mean_scale),
            ("noise_std", self.noise_std),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Number of training samples taken from each known class.
    pub fn train_per_class(&self) -> usize {
        self.samples_per_class * 3 / 5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    /// Samples of the held-out classes, labelled `known_classes..`.
    pub abnormal: LabeledDataset,
    /// Class means, one column per class (known first).
    pub means: Matrix,
}

fn random_direction(n: usize, rng: &mut crate::rng::Rng) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Draw train/validation/abnormal sets; 60% of each known class goes to training.
pub fn gen_clusters(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let total = spec.known_classes + spec.abnormal_classes;
    let mut rng = seeded(spec.seed);
    let mut means = Matrix::zeros(spec.n0, total);
    for k in 0..total {
        means.set_column(k, &(random_direction(spec.n0, &mut rng) * spec.mean_scale));
    }
    let noise =
        Normal::new(0.0, spec.cluster_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let n = spec.samples_per_class;
    let n_train = spec.train_per_class();
    let mut train = (Vec::new(), Vec::new());
    let mut val = (Vec::new(), Vec::new());
    let mut abnormal = (Vec::new(), Vec::new());
    for k in 0..total {
        let mut class_rng = substream(spec.seed, k as u64 + 1);
        for s in 0..n {
            let x = means.column(k) + Vector::from_fn(spec.n0, |_, _| noise.sample(&mut class_rng));
            let target = if k >= spec.known_classes {
                &mut abnormal
            } else if s < n_train {
                &mut train
            } else {
                &mut val
            };
            target.0.push(x);
            target.1.push(k);
        }
    }
    let build = |(cols, labels): (Vec<Vector>, Vec<usize>), classes: usize| {
        let x = if cols.is_empty() {
            Matrix::zeros(spec.n0, 0)
        } else {
            Matrix::from_columns(&cols)
        };
        LabeledDataset::new(x, labels, classes)
    };
    Ok(SyntheticData {
        train: build(train, spec.known_classes)?,
        val: build(val, spec.known_classes)?,
        abnormal: build(abnormal, total)?,
        means,
    })
}

/// `n` pure-noise inputs with i.i.d. `N(0, noise_std²)` entries.
pub fn noise_samples(n: usize, spec: &SyntheticSpec, seed: u64) -> Result<Matrix> {
    let dist = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = seeded(seed);
    Ok(Matrix::from_fn(spec.n0, n, |_, _| dist.sample(&mut rng)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nearest_centroid(means: &Matrix, x: &Matrix, classes: usize) -> Vec<usize> {
        x.column_iter()
            .map(|c| {
                (0..classes)
                    .min_by(|&a, &b| {
                        let da = (c - means.column(a)).norm();
                        let db = (c - means.column(b)).norm();
                        da.total_cmp(&db)
                    })
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn split_sizes() {
        let spec = SyntheticSpec {
            known_classes: 1,
            abnormal_classes: 0,
            samples_per_class: 10,
            ..SyntheticSpec::default()
        };
        let d = gen_clusters(&spec).unwrap();
        assert_eq!(d.train.len(), 6);
        assert_eq!(d.val.len(), 4);
        assert!(d.abnormal.is_empty());
    }

    #[test]
    fn well_separated_clusters_are_nearly_perfectly_separable() {
        let spec = SyntheticSpec {
            mean_scale: 10.0,
            cluster_std: 0.5,
            ..SyntheticSpec::default()
        };
        let d = gen_clusters(&spec).unwrap();
        let pred = nearest_centroid(&d.means, d.val.x(), spec.known_classes);
        assert!(d.val.accuracy(&pred) >= 0.99);
    }

    #[test]
    fn abnormal_labels_are_disjoint_from_known() {
        let spec = SyntheticSpec::default();
        let d = gen_clusters(&spec).unwrap();
        assert_eq!(
            d.abnormal.len(),
            spec.abnormal_classes * spec.samples_per_class
        );
        assert!(d.abnormal.y().iter().all(|&l| l >= spec.known_classes));
        assert!(d
            .train
            .y()
            .iter()
            .chain(d.val.y())
            .all(|&l| l < spec.known_classes));
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SyntheticSpec::default();
        assert_eq!(gen_clusters(&spec).unwrap(), gen_clusters(&spec).unwrap());
        let other = SyntheticSpec {
            seed: 12,
            ..spec.clone()
        };
        assert_ne!(
            gen_clusters(&spec).unwrap().train,
            gen_clusters(&other).unwrap().train
        );
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = SyntheticSpec {
            cluster_std: 0.0,
            ..SyntheticSpec::default()
        };
        assert!(gen_clusters(&bad).is_err());
        let bad = SyntheticSpec {
            known_classes: 0,
            ..SyntheticSpec::default()
        };
        assert!(gen_clusters(&bad).is_err());
    }
}
