use super::bernoulli::llr_unchecked;
use super::{AlarmEvent, BernoulliChangeModel, ChartKind};
use crate::error::{domain, Result};

/// Bernoulli CUSUM: `S(k) = max(0, S(k−1) + g(k))`, alarm when `S(k) > h`.
///
/// The statistic resets to zero after an alarm; the step counter keeps running.
#[derive(Debug, Clone, PartialEq)]
pub struct CusumChart {
    model: BernoulliChangeModel,
    tpr: f64,
    s: f64,
    h: f64,
    k: u64,
    up: f64,
    down: f64,
}

impl CusumChart {
    /// Chart tuned to the post-change rate `tpr`.
    pub fn new(model: BernoulliChangeModel, tpr: f64, h: f64) -> Result<Self> {
        if !(tpr > 0.0 && tpr < 1.0) {
            return Err(domain(format!("chart tpr {tpr} must lie in (0, 1)")));
        }
        if h.is_nan() || h < 0.0 {
            return Err(domain(format!("threshold {h} must be >= 0")));
        }
        Ok(Self {
            model,
            tpr,
            s: 0.0,
            h,
            k: 0,
            up: llr_unchecked(1, tpr, model.fpr()),
            down: llr_unchecked(0, tpr, model.fpr()),
        })
    }

    pub fn model(&self) -> &BernoulliChangeModel {
        &self.model
    }

    pub fn tpr(&self) -> f64 {
        self.tpr
    }

    pub fn statistic(&self) -> f64 {
        self.s
    }

    pub fn threshold(&self) -> f64 {
        self.h
    }

    pub fn steps(&self) -> u64 {
        self.k
    }

    pub fn reset(&mut self) {
        self.s = 0.0;
    }

    pub fn step(&mut self, i: u8) -> Option<AlarmEvent> {
        let g = if i != 0 { self.up } else { self.down };
        self.step_increment(g)
    }

    /// Advance with an explicit log-likelihood increment.
    pub fn step_increment(&mut self, g: f64) -> Option<AlarmEvent> {
        self.k += 1;
        self.s = (self.s + g).max(0.0);
        if self.s > self.h {
            let statistic = self.s;
            self.s = 0.0;
            Some(AlarmEvent {
                time: self.k,
                tau_hat: None,
                statistic,
                chart: ChartKind::Cusum,
                chart_index: None,
            })
        } else {
            None
        }
    }
}
