use serde::{Deserialize, Serialize};

use super::BoundaryModelSet;
use crate::error::{domain, Result};
use crate::sphere::{estimate_ru_fnr, McConfig};

/// Guaranteed performance envelope of a converted detector.
///
/// The false-positive rate is bounded by the classifier error `alpha`; the
/// false-negative rate under uniformly scattered abnormal features is bounded
/// by `ru_fnr`, the share of the unit sphere covered by class boundaries.
/// Abnormal events are sequentially detectable when `1 − ru_fnr > alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorBounds {
    pub alpha: f64,
    pub ru_fnr: f64,
    pub ru_fnr_ci: f64,
    pub fpr_upper: f64,
    pub fnr_upper: f64,
    pub tpr_lower: f64,
    pub detectable: bool,
}

impl DetectorBounds {
    pub fn from_rates(alpha: f64, ru_fnr: f64, ru_fnr_ci: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(domain(format!("alpha must be in [0, 1], got {alpha}")));
        }
        if !(0.0..=1.0).contains(&ru_fnr) {
            return Err(domain(format!("ru_fnr must be in [0, 1], got {ru_fnr}")));
        }
        let tpr_lower = 1.0 - ru_fnr;
        Ok(Self {
            alpha,
            ru_fnr,
            ru_fnr_ci,
            fpr_upper: alpha,
            fnr_upper: ru_fnr,
            tpr_lower,
            detectable: tpr_lower > alpha,
        })
    }
}

pub fn compute_bounds(set: &BoundaryModelSet, alpha: f64, mc: &McConfig) -> Result<DetectorBounds> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(domain(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let est = estimate_ru_fnr(set, mc)?;
    DetectorBounds::from_rates(alpha, est.ratio, est.ci_halfwidth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::FeatureSpace;

    #[test]
    fn empty_set_is_fully_detectable() {
        let set = BoundaryModelSet::new(4, FeatureSpace::Sphere, vec![]).unwrap();
        let b = compute_bounds(&set, 0.0, &McConfig::default()).unwrap();
        assert_eq!(b.ru_fnr, 0.0);
        assert_eq!(b.tpr_lower, 1.0);
        assert!(b.detectable);
    }

    #[test]
    fn equal_rates_are_not_detectable() {
        let b = DetectorBounds::from_rates(0.5, 0.5, 0.0).unwrap();
        assert_eq!(b.tpr_lower, 0.5);
        assert_eq!(b.fpr_upper, 0.5);
        assert!(!b.detectable);
        assert!(DetectorBounds::from_rates(1.5, 0.0, 0.0).is_err());
    }
}
