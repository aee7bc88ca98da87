//! Monte Carlo over detector output streams.
//!
//! Every trial draws from its own sub-stream of the run seed, so results are
//! identical whatever the thread count.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcd::{AnyChart, ChartConfig};
use crate::rng::{substream, Rng};

/// Where binary detector outputs come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionSource {
    /// I.i.d. ones with the given probability.
    Bernoulli(f64),
    /// Resample (with replacement) precomputed detector decisions.
    Pool(Vec<u8>),
}

impl DecisionSource {
    fn validate(&self) -> Result<()> {
        match self {
            DecisionSource::Bernoulli(p) if !(0.0..=1.0).contains(p) => Err(Error::InvalidConfig(
                format!("Bernoulli rate {p} outside [0, 1]"),
            )),
            DecisionSource::Pool(v) if v.is_empty() => {
                Err(Error::InvalidConfig("empty decision pool".into()))
            }
            _ => Ok(()),
        }
    }

    /// Probability of a one.
    pub fn rate(&self) -> f64 {
        match self {
            DecisionSource::Bernoulli(p) => *p,
            DecisionSource::Pool(v) => v.iter().map(|&b| b as f64).sum::<f64>() / v.len() as f64,
        }
    }

    #[inline]
    fn sample(&self, rng: &mut Rng) -> u8 {
        match self {
            DecisionSource::Bernoulli(p) => u8::from(rng.random::<f64>() < *p),
            DecisionSource::Pool(v) => v[rng.random_range(0..v.len())],
        }
    }
}

/// Pre-change outputs for steps `1..change_time`, post-change outputs from
/// `change_time` (the first abnormal sample) through `length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamScenario {
    pub pre: DecisionSource,
    pub post: DecisionSource,
    pub change_time: u64,
    pub length: u64,
    pub seed: u64,
}

impl StreamScenario {
    pub fn validate(&self) -> Result<()> {
        if self.change_time == 0 || self.change_time > self.length {
            return Err(Error::InvalidConfig(format!(
                "change_time {} must lie in [1, length = {}]",
                self.change_time, self.length
            )));
        }
        self.pre.validate()?;
        self.post.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TrialOutcome {
    Detected(u64),
    FalseAlarm,
    Missed,
}

/// Distribution of `alarm_time − change_time` over the trials that alarmed
/// no earlier than the change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySummary {
    pub trials: usize,
    pub detected: usize,
    /// Trials whose first alarm came before the change.
    pub false_alarms: usize,
    /// Trials with no alarm at all.
    pub missed: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub median: Option<f64>,
    pub p10: Option<f64>,
    pub p90: Option<f64>,
    pub min: Option<u64>,
    pub max: Option<u64>,
}

impl DelaySummary {
    fn from_outcomes(outcomes: &[TrialOutcome]) -> Self {
        let mut delays: Vec<u64> = outcomes
            .iter()
            .filter_map(|o| match o {
                TrialOutcome::Detected(d) => Some(*d),
                _ => None,
            })
            .collect();
        delays.sort_unstable();
        let count = |want: TrialOutcome| outcomes.iter().filter(|&&o| o == want).count();
        let values: Vec<f64> = delays.iter().map(|&d| d as f64).collect();
        let (mean, std) = mean_std(&values).unzip();
        Self {
            trials: outcomes.len(),
            detected: delays.len(),
            false_alarms: count(TrialOutcome::FalseAlarm),
            missed: count(TrialOutcome::Missed),
            mean,
            std,
            median: quantile_sorted(&values, 0.5),
            p10: quantile_sorted(&values, 0.1),
            p90: quantile_sorted(&values, 0.9),
            min: delays.first().copied(),
            max: delays.last().copied(),
        }
    }
}

/// Sample mean and (n − 1) standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

fn run_trials<T: Send>(trials: usize, seed: u64, f: impl Fn(&mut Rng) -> T + Sync) -> Vec<T> {
    (0..trials)
        .into_par_iter()
        .map(|t| f(&mut substream(seed, t as u64)))
        .collect()
}

fn delay_trial(chart: &AnyChart, sc: &StreamScenario, rng: &mut Rng) -> TrialOutcome {
    let mut chart = chart.clone();
    for t in 1..=sc.length {
        let src = if t < sc.change_time {
            &sc.pre
        } else {
            &sc.post
        };
        if chart.step(src.sample(rng)).is_some() {
            return if t < sc.change_time {
                TrialOutcome::FalseAlarm
            } else {
                TrialOutcome::Detected(t - sc.change_time)
            };
        }
    }
    TrialOutcome::Missed
}

/// Detection-delay distribution of `chart` over `trials` simulated streams.
pub fn measure_delay(
    chart: &ChartConfig,
    scenario: &StreamScenario,
    trials: usize,
) -> Result<DelaySummary> {
    scenario.validate()?;
    let proto = chart.build()?;
    let outcomes = run_trials(trials, scenario.seed, |rng| {
        delay_trial(&proto, scenario, rng)
    });
    Ok(DelaySummary::from_outcomes(&outcomes))
}

/// Run length to the first (false) alarm on pure pre-change streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArlEstimate {
    pub trials: usize,
    pub cap: u64,
    /// Mean run length with censored runs counted at `cap` (a lower bound on
    /// the true ARL when `censored > 0`).
    pub mean_run_length: f64,
    /// 95% normal-approximation half-width of `mean_run_length`.
    pub ci_halfwidth: f64,
    /// Runs that reached `cap` without an alarm.
    pub censored: usize,
    /// Alarms per observed step.
    pub false_alarm_rate: f64,
}

/// Average run length of `chart` under `Bernoulli(chart.fpr)` input.
pub fn measure_arl(chart: &ChartConfig, trials: usize, seed: u64, cap: u64) -> Result<ArlEstimate> {
    if trials == 0 || cap == 0 {
        return Err(Error::InvalidConfig(
            "ARL needs trials >= 1 and cap >= 1".into(),
        ));
    }
    let proto = chart.build()?;
    let source = DecisionSource::Bernoulli(chart.fpr);
    let runs = run_trials(trials, seed, |rng| {
        let mut c = proto.clone();
        for t in 1..=cap {
            if c.step(source.sample(rng)).is_some() {
                return (t, false);
            }
        }
        (cap, true)
    });
    let lengths: Vec<f64> = runs.iter().map(|&(t, _)| t as f64).collect();
    let censored = runs.iter().filter(|r| r.1).count();
    let (mean, std) = mean_std(&lengths).expect("trials >= 1");
    let steps: f64 = lengths.iter().sum();
    Ok(ArlEstimate {
        trials,
        cap,
        mean_run_length: mean,
        ci_halfwidth: 1.96 * std / (trials as f64).sqrt(),
        censored,
        false_alarm_rate: (trials - censored) as f64 / steps,
    })
}

/// Alarms raised on fixed-length pure pre-change runs (the chart resets and
/// keeps going after each alarm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseAlarmCount {
    pub runs: usize,
    pub length: u64,
    pub alarms: u64,
    pub runs_with_alarm: usize,
}

impl FalseAlarmCount {
    pub fn rate(&self) -> f64 {
        self.alarms as f64 / (self.runs as f64 * self.length as f64)
    }
}

pub fn count_false_alarms(
    chart: &ChartConfig,
    source: &DecisionSource,
    runs: usize,
    length: u64,
    seed: u64,
) -> Result<FalseAlarmCount> {
    source.validate()?;
    let proto = chart.build()?;
    let counts = run_trials(runs, seed, |rng| {
        let mut c = proto.clone();
        (0..length)
            .filter(|_| c.step(source.sample(rng)).is_some())
            .count() as u64
    });
    Ok(FalseAlarmCount {
        runs,
        length,
        alarms: counts.iter().sum(),
        runs_with_alarm: counts.iter().filter(|&&c| c > 0).count(),
    })
}
