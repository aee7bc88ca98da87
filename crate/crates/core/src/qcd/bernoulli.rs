use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

fn check_prob(p: f64, name: &str) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} = {p} must lie in (0, 1)")))
    }
}

/// Log-likelihood ratio of one binary observation under Bernoulli(p1) vs Bernoulli(p0).
pub fn bernoulli_llr(i: u8, p1: f64, p0: f64) -> Result<f64> {
    check_prob(p1, "p1")?;
    check_prob(p0, "p0")?;
    Ok(llr_unchecked(i, p1, p0))
}

pub(crate) fn llr_unchecked(i: u8, p1: f64, p0: f64) -> f64 {
    if i != 0 {
        (p1 / p0).ln()
    } else {
        ((1.0 - p1) / (1.0 - p0)).ln()
    }
}

/// KL divergence `I(P1, P0)` between Bernoulli(p1) and Bernoulli(p0).
pub fn kl_bernoulli(p1: f64, p0: f64) -> Result<f64> {
    check_prob(p1, "p1")?;
    check_prob(p0, "p0")?;
    let kl = p1 * (p1 / p0).ln() + (1.0 - p1) * ((1.0 - p1) / (1.0 - p0)).ln();
    Ok(kl.max(0.0))
}

/// First-order worst-case delay `h / I(P1, P0)`.
pub fn approx_delay(h: f64, kl: f64) -> Result<f64> {
    if !(kl > 0.0) {
        return Err(domain(format!(
            "KL divergence {kl} <= 0: pre- and post-change outputs are indistinguishable"
        )));
    }
    Ok(h / kl)
}

/// Threshold recipe `h = log10(ARL · FPR)`.
///
/// The statistics themselves accumulate natural-log ratios, so the result is a
/// tuning knob rather than a calibrated guarantee.
pub fn threshold_from_arl(arl: f64, fpr: f64) -> Result<f64> {
    check_prob(fpr, "fpr")?;
    let product = arl * fpr;
    if !(arl > 0.0) || !(product > 1.0) {
        return Err(domain(format!(
            "ARL·FPR = {product} must exceed 1 for a positive threshold"
        )));
    }
    Ok(product.log10())
}

/// Pre- and post-change output distributions of the binary detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernoulliChangeModel {
    fpr: f64,
    tpr_lower: f64,
    tpr_max: f64,
    epsilon: f64,
}

impl BernoulliChangeModel {
    /// `tpr_max` is `1 − epsilon`. Requires `0 < fpr < tpr_lower ≤ tpr_max < 1`.
    pub fn new(fpr: f64, tpr_lower: f64, epsilon: f64) -> Result<Self> {
        check_prob(fpr, "fpr")?;
        check_prob(tpr_lower, "tpr_lower")?;
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(domain(format!("epsilon = {epsilon} must lie in (0, 1)")));
        }
        let tpr_max = 1.0 - epsilon;
        if !(tpr_lower <= tpr_max) {
            return Err(domain(format!(
                "tpr_lower {tpr_lower} exceeds tpr_max {tpr_max}"
            )));
        }
        if !(fpr < tpr_lower) {
            return Err(Error::NotDetectable {
                tpr_lower,
                fpr_upper: fpr,
            });
        }
        Ok(Self {
            fpr,
            tpr_lower,
            tpr_max,
            epsilon,
        })
    }

    pub fn fpr(&self) -> f64 {
        self.fpr
    }

    pub fn tpr_lower(&self) -> f64 {
        self.tpr_lower
    }

    pub fn tpr_max(&self) -> f64 {
        self.tpr_max
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}
