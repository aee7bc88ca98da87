use super::{AlarmEvent, BernoulliChangeModel, ChartKind, CusumChart};
use crate::error::{domain, Result};

/// `U` Bernoulli CUSUM charts sharing one threshold, tuned to post-change rates
/// spread over `[tpr_lower, tpr_max]`:
///
/// ```text
/// tpr_i = tpr_lower + (tpr_max − tpr_lower) · i² / U²,   i = 1..U
/// ```
///
/// The bank alarms when any chart crosses; all charts then reset.
#[derive(Debug, Clone)]
pub struct CusumBank {
    model: BernoulliChangeModel,
    charts: Vec<CusumChart>,
    h: f64,
    k: u64,
}

/// Quadratic grid of post-change rates.
pub fn bank_grid(model: &BernoulliChangeModel, u: usize) -> Vec<f64> {
    let (lo, hi) = (model.tpr_lower(), model.tpr_max());
    let u2 = (u * u) as f64;
    (1..=u)
        .map(|i| (lo + (hi - lo) * (i * i) as f64 / u2).min(hi))
        .collect()
}

impl CusumBank {
    pub fn new(model: BernoulliChangeModel, u: usize, h: f64) -> Result<Self> {
        if u == 0 {
            return Err(domain("bank needs at least one chart"));
        }
        let charts = bank_grid(&model, u)
            .into_iter()
            .map(|tpr| CusumChart::new(model, tpr, h))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            charts,
            h,
            k: 0,
        })
    }

    pub fn model(&self) -> &BernoulliChangeModel {
        &self.model
    }

    pub fn charts(&self) -> &[CusumChart] {
        &self.charts
    }

    pub fn threshold(&self) -> f64 {
        self.h
    }

    pub fn steps(&self) -> u64 {
        self.k
    }

    /// Largest statistic across the bank.
    pub fn statistic(&self) -> f64 {
        self.charts
            .iter()
            .map(CusumChart::statistic)
            .fold(0.0, f64::max)
    }

    pub fn reset(&mut self) {
        self.charts.iter_mut().for_each(CusumChart::reset);
    }

    pub fn step(&mut self, i: u8) -> Option<AlarmEvent> {
        self.k += 1;
        let mut first: Option<(usize, AlarmEvent)> = None;
        for (idx, chart) in self.charts.iter_mut().enumerate() {
            if let Some(a) = chart.step(i) {
                first.get_or_insert((idx, a));
            }
        }
        let (idx, alarm) = first?;
        self.reset();
        Some(AlarmEvent {
            time: self.k,
            tau_hat: None,
            statistic: alarm.statistic,
            chart: ChartKind::Bank,
            chart_index: Some(idx + 1),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let model = BernoulliChangeModel::new(0.05, 0.6, 0.01).unwrap();
        let g = bank_grid(&model, 100);
        assert_eq!(*g.last().unwrap(), 0.99);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(g.iter().all(|&t| (0.6..=0.99).contains(&t)));
        assert_eq!(bank_grid(&model, 1), vec![0.99]);
    }

    #[test]
    fn all_zero_stream_stays_quiet() {
        let model = BernoulliChangeModel::new(0.2, 0.6, 0.01).unwrap();
        let mut bank = CusumBank::new(model, 100, 4.0).unwrap();
        for _ in 0..100 {
            assert!(bank.step(0).is_none());
        }
        assert!(bank.charts().iter().all(|c| c.statistic() == 0.0));
    }

    #[test]
    fn top_chart_matches_standalone() {
        let model = BernoulliChangeModel::new(0.1, 0.5, 0.01).unwrap();
        let mut bank = CusumBank::new(model, 16, f64::INFINITY).unwrap();
        let mut solo = CusumChart::new(model, 0.99, f64::INFINITY).unwrap();
        let stream = [0u8, 1, 1, 0, 1, 0, 0, 0, 1, 1, 1, 0, 1];
        for &b in stream.iter().cycle().take(200) {
            bank.step(b);
            solo.step(b);
            assert_eq!(bank.charts()[15].statistic(), solo.statistic());
        }
    }

    #[test]
    fn alarm_reports_lowest_crossing_index() {
        let model = BernoulliChangeModel::new(0.01, 0.6, 0.01).unwrap();
        let mut bank = CusumBank::new(model, 4, 4.0).unwrap();
        // every chart has ln(tpr/0.01) > 4 on a single one
        let alarm = bank.step(1).unwrap();
        assert_eq!(alarm.chart_index, Some(1));
        assert_eq!(alarm.chart, ChartKind::Bank);
        assert_eq!(bank.statistic(), 0.0);
    }
}
