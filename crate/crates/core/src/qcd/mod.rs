//! Quickest change detection over the detector's binary output stream.
//!
//! Before an abnormal event the detector emits 1 with probability `fpr`;
//! afterwards with some unknown `tpr ∈ [tpr_lower, tpr_max]`. The charts here
//! accumulate Bernoulli log-likelihood ratios and raise an [`AlarmEvent`] when
//! their statistic exceeds a threshold `h`. All charts reset to their initial
//! state after an alarm and keep counting steps.

mod bank;
mod bernoulli;
mod cusum;
mod glr;

pub use bank::{bank_grid, CusumBank};
pub use bernoulli::{
    approx_delay, bernoulli_llr, kl_bernoulli, threshold_from_arl, BernoulliChangeModel,
};
pub use cusum::CusumChart;
pub use glr::GlrChart;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    Glr,
    Cusum,
    Bank,
}

impl std::fmt::Display for ChartKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChartKind::Glr => "glr",
            ChartKind::Cusum => "cusum",
            ChartKind::Bank => "bank",
        })
    }
}

/// One alarm, serialized as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmEvent {
    /// 1-based step at which the alarm fired.
    pub time: u64,
    /// Estimated last pre-change step (GLR only).
    pub tau_hat: Option<u64>,
    pub statistic: f64,
    pub chart: ChartKind,
    /// 1-based index of the first crossing chart (bank only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart_index: Option<usize>,
}

/// Chart block of the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChartConfig {
    pub kind: ChartKind,
    pub fpr: f64,
    pub tpr_lower: f64,
    /// `tpr_max = 1 − epsilon`.
    pub epsilon: f64,
    /// Direct threshold. Mutually exclusive with `arl`.
    pub h: Option<f64>,
    /// Target run length between false alarms; `h = log10(arl · fpr)`.
    pub arl: Option<f64>,
    /// GLR window length.
    pub window: usize,
    /// Number of charts in a CUSUM bank.
    pub u: usize,
    /// Post-change rate of a single CUSUM chart; defaults to `tpr_lower`.
    pub cusum_tpr: Option<f64>,
}

/// Threshold used when neither `h` nor `arl` is given; high enough that
/// pre-change runs of 10⁴ samples rarely alarm at moderate false-positive rates.
pub const DEFAULT_THRESHOLD: f64 = 10.0;

impl Default for ChartConfig {
    fn default() -> Self {
        Self {
            kind: ChartKind::Glr,
            fpr: 0.05,
            tpr_lower: 0.6,
            epsilon: 0.01,
            h: None,
            arl: None,
            window: 200,
            u: 128,
            cusum_tpr: None,
        }
    }
}

impl ChartConfig {
    pub fn model(&self) -> Result<BernoulliChangeModel> {
        BernoulliChangeModel::new(self.fpr, self.tpr_lower, self.epsilon)
    }

    pub fn threshold(&self) -> Result<f64> {
        match (self.h, self.arl) {
            (Some(_), Some(_)) => Err(Error::InvalidConfig(
                "set either chart.h or chart.arl, not both".into(),
            )),
            (Some(h), None) => Ok(h),
            (None, Some(arl)) => threshold_from_arl(arl, self.fpr),
            (None, None) => Ok(DEFAULT_THRESHOLD),
        }
    }

    pub fn build(&self) -> Result<AnyChart> {
        let model = self.model()?;
        let h = self.threshold()?;
        Ok(match self.kind {
            ChartKind::Glr => AnyChart::Glr(GlrChart::new(model, self.window, h)?),
            ChartKind::Cusum => AnyChart::Cusum(CusumChart::new(
                model,
                self.cusum_tpr.unwrap_or(model.tpr_lower()),
                h,
            )?),
            ChartKind::Bank => AnyChart::Bank(CusumBank::new(model, self.u, h)?),
        })
    }
}

/// Any of the three charts behind one interface.
#[derive(Debug, Clone)]
pub enum AnyChart {
    Glr(GlrChart),
    Cusum(CusumChart),
    Bank(CusumBank),
}

impl AnyChart {
    pub fn step(&mut self, i: u8) -> Option<AlarmEvent> {
        match self {
            AnyChart::Glr(c) => c.step(i),
            AnyChart::Cusum(c) => c.step(i),
            AnyChart::Bank(c) => c.step(i),
        }
    }

    pub fn statistic(&self) -> f64 {
        match self {
            AnyChart::Glr(c) => c.statistic(),
            AnyChart::Cusum(c) => c.statistic(),
            AnyChart::Bank(c) => c.statistic(),
        }
    }

    pub fn reset(&mut self) {
        match self {
            AnyChart::Glr(c) => c.reset(),
            AnyChart::Cusum(c) => c.reset(),
            AnyChart::Bank(c) => c.reset(),
        }
    }

    pub fn kind(&self) -> ChartKind {
        match self {
            AnyChart::Glr(_) => ChartKind::Glr,
            AnyChart::Cusum(_) => ChartKind::Cusum,
            AnyChart::Bank(_) => ChartKind::Bank,
        }
    }
}
