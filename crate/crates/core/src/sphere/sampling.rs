use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::BoundaryModelSet;
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::Matrix;

/// Monte Carlo settings for the false-negative bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub m_points: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            m_points: 20_000,
            seed: 2021,
            workers: 1,
        }
    }
}

/// `n` points uniformly distributed on the unit sphere in R^m, one per column.
///
/// Standard-normal vectors normalized to unit length.
pub fn uniform_sphere_sample(n: usize, m: usize, seed: u64) -> Matrix {
    let mut rng = seeded(seed);
    let mut out = Matrix::zeros(m, n);
    for mut col in out.column_iter_mut() {
        loop {
            for v in col.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let norm = col.norm();
            if norm > 1e-12 {
                col /= norm;
                break;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuFnrEstimate {
    pub ratio: f64,
    /// 95% normal-approximation binomial half-width.
    pub ci_halfwidth: f64,
    pub captured: usize,
    pub samples: usize,
}

/// Fraction of uniform unit-sphere points captured by at least one class
/// boundary.
///
/// The `m_points` samples are split across `workers` sub-streams; worker `w`
/// draws its share with seed `seed + w`, so the estimate depends only on
/// `(seed, workers)`.
pub fn estimate_ru_fnr(set: &BoundaryModelSet, cfg: &McConfig) -> Result<RuFnrEstimate> {
    if cfg.m_points == 0 || cfg.workers == 0 {
        return Err(Error::InvalidConfig(
            "m_points and workers must be >= 1".into(),
        ));
    }
    let dim = set.dim();
    if dim < 2 {
        return Err(Error::DimensionMismatch {
            context: "sphere dimension",
            expected: 2,
            found: dim,
        });
    }
    let base = cfg.m_points / cfg.workers;
    let extra = cfg.m_points % cfg.workers;
    let captured = (0..cfg.workers)
        .into_par_iter()
        .map(|w| {
            let count = base + usize::from(w < extra);
            let points = uniform_sphere_sample(count, dim, cfg.seed.wrapping_add(w as u64));
            let mut hits = 0usize;
            for j in 0..count {
                if set.contains(points.column(j).as_slice())? {
                    hits += 1;
                }
            }
            Ok(hits)
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    let m = cfg.m_points as f64;
    let ratio = captured as f64 / m;
    Ok(RuFnrEstimate {
        ratio,
        ci_halfwidth: 1.96 * (ratio * (1.0 - ratio) / m).sqrt(),
        captured,
        samples: cfg.m_points,
    })
}
