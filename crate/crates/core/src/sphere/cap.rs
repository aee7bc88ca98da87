use serde::{Deserialize, Serialize};

use super::special::reg_inc_beta;
use crate::error::{domain, Result};

/// A spherical cap of angular radius `sigma` on the unit sphere in R^m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapSpec {
    m: usize,
    sigma: f64,
}

impl CapSpec {
    pub fn new(m: usize, sigma: f64) -> Result<Self> {
        if m < 2 {
            return Err(domain(format!("cap dimension must be >= 2, got {m}")));
        }
        if !(sigma > 0.0 && sigma <= std::f64::consts::FRAC_PI_2) {
            return Err(domain(format!(
                "cap angle must be in (0, pi/2], got {sigma}"
            )));
        }
        Ok(Self { m, sigma })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Fraction of the unit sphere's surface covered by one σ-cap:
/// `½ · I_{2h−h²}((m−1)/2, ½)` with `h = 1 − cos σ`.
pub fn sigma_cap_ratio(spec: CapSpec) -> Result<f64> {
    // 2h − h² = sin²σ; the sine form is exact at σ = π/2
    let x = spec.sigma.sin().powi(2).min(1.0);
    Ok(0.5 * reg_inc_beta(x, (spec.m as f64 - 1.0) / 2.0, 0.5)?)
}

/// Area-ratio packing bound `floor(1 / r0)`, saturating at `u64::MAX`.
pub fn max_classes(spec: CapSpec) -> Result<u64> {
    let r0 = sigma_cap_ratio(spec)?;
    // absorb the last-bit error of r0 so exact reciprocals are not floored down
    let n = (1.0 / r0 * (1.0 + 1e-9)).floor();
    Ok(if n >= u64::MAX as f64 {
        u64::MAX
    } else {
        n as u64
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub m: usize,
    pub sigma: f64,
    pub r0: f64,
    pub max_classes: u64,
    /// `log10(1 / r0)`; stays finite where `max_classes` saturates.
    pub log10_capacity: f64,
}

/// One row per `(m, sigma)` pair, `m` varying slowest.
pub fn capacity_table(ms: &[usize], sigmas: &[f64]) -> Result<Vec<CapacityRow>> {
    let mut rows = Vec::with_capacity(ms.len() * sigmas.len());
    for &m in ms {
        for &sigma in sigmas {
            let spec = CapSpec::new(m, sigma)?;
            let r0 = sigma_cap_ratio(spec)?;
            rows.push(CapacityRow {
                m,
                sigma,
                r0,
                max_classes: max_classes(spec)?,
                log10_capacity: -r0.log10(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    fn ratio(m: usize, sigma: f64) -> f64 {
        sigma_cap_ratio(CapSpec::new(m, sigma).unwrap()).unwrap()
    }

    #[test]
    fn hemisphere_and_classic_caps() {
        for m in 2..=64 {
            assert_eq!(ratio(m, FRAC_PI_2), 0.5);
            assert_eq!(max_classes(CapSpec::new(m, FRAC_PI_2).unwrap()).unwrap(), 2);
        }
        assert!((ratio(2, FRAC_PI_4) - 0.25).abs() < 1e-12);
        assert!((ratio(3, FRAC_PI_3) - 0.25).abs() < 1e-12);
        assert_eq!(max_classes(CapSpec::new(3, FRAC_PI_3).unwrap()).unwrap(), 4);
    }

    #[test]
    fn rejects_invalid_caps() {
        assert!(CapSpec::new(1, 0.3).is_err());
        assert!(CapSpec::new(3, 0.0).is_err());
        assert!(CapSpec::new(3, 1.6).is_err());
    }

    #[test]
    fn ratio_monotone_on_grids() {
        for m in [2usize, 3, 8, 32, 128] {
            let mut prev = 0.0;
            for k in 1..=90 {
                let r = ratio(m, k as f64 * PI / 180.0);
                assert!(r > prev, "m={m} k={k}");
                prev = r;
            }
        }
        for k in 1..90 {
            let sigma = k as f64 * PI / 180.0;
            let mut prev = f64::INFINITY;
            for m in 2..=128 {
                let r = ratio(m, sigma);
                assert!(r < prev, "m={m} k={k}");
                prev = r;
            }
        }
    }

    #[test]
    fn max_classes_nondecreasing_in_dimension() {
        for k in 1..=18 {
            let sigma = k as f64 * PI / 36.0;
            let mut prev = 0;
            for m in 2..=64 {
                let n = max_classes(CapSpec::new(m, sigma).unwrap()).unwrap();
                assert!(n >= prev);
                assert!(n >= 2);
                prev = n;
            }
        }
    }

    #[test]
    fn table_layout() {
        let t = capacity_table(&[2, 3], &[FRAC_PI_4, FRAC_PI_2]).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!((t[1].m, t[1].sigma), (2, FRAC_PI_2));
        assert_eq!(t[1].max_classes, 2);
    }
}
