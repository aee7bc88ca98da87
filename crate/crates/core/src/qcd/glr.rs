use std::collections::VecDeque;

use super::{AlarmEvent, BernoulliChangeModel, ChartKind};
use crate::error::{domain, Result};

/// Windowed Bernoulli generalized-likelihood-ratio chart.
///
/// After observation `k` the statistic is
///
/// ```text
/// R_k = max(0, max_{τ ∈ [max(0, k−m), k−1]} Σ_{j=τ+1..k} ln[P̂_τ(I_j) / P0(I_j)])
/// P̂_τ = Bernoulli(clamp(mean(I_{τ+1..k}), tpr_lower, tpr_max))
/// ```
///
/// The clamped sample mean maximizes the (concave) segment log-likelihood over
/// `[tpr_lower, tpr_max]`, and because `tpr_lower > fpr` a leading zero always
/// lowers a segment's score. The maximum is therefore attained at a segment
/// starting on a one, so only those start points are scanned.
#[derive(Debug, Clone)]
pub struct GlrChart {
    model: BernoulliChangeModel,
    m: usize,
    h: f64,
    k: u64,
    /// Step index of the last reset; τ never reaches below it.
    origin: u64,
    /// Absolute times (1-based) of ones within the window, oldest first.
    ones: VecDeque<u64>,
    last_stat: f64,
    tau_hat: Option<u64>,
    ln_int: Vec<f64>,
    ln_fpr: f64,
    ln_one_minus_fpr: f64,
}

impl GlrChart {
    pub fn new(model: BernoulliChangeModel, window: usize, h: f64) -> Result<Self> {
        if window == 0 {
            return Err(domain("GLR window must be >= 1"));
        }
        if h.is_nan() || h < 0.0 {
            return Err(domain(format!("threshold {h} must be >= 0")));
        }
        let ln_int = (0..=window).map(|n| (n as f64).ln()).collect();
        Ok(Self {
            model,
            m: window,
            h,
            k: 0,
            origin: 0,
            ones: VecDeque::new(),
            last_stat: 0.0,
            tau_hat: None,
            ln_int,
            ln_fpr: model.fpr().ln(),
            ln_one_minus_fpr: (-model.fpr()).ln_1p(),
        })
    }

    pub fn model(&self) -> &BernoulliChangeModel {
        &self.model
    }

    pub fn window(&self) -> usize {
        self.m
    }

    pub fn threshold(&self) -> f64 {
        self.h
    }

    pub fn steps(&self) -> u64 {
        self.k
    }

    /// `R_k` after the latest step.
    pub fn statistic(&self) -> f64 {
        self.last_stat
    }

    /// Maximizing τ of the latest step, when `R_k > 0`.
    pub fn tau_hat(&self) -> Option<u64> {
        self.tau_hat
    }

    /// Number of observations currently inside the window.
    pub fn window_len(&self) -> usize {
        (self.k - self.origin).min(self.m as u64) as usize
    }

    pub fn reset(&mut self) {
        self.origin = self.k;
        self.ones.clear();
        self.last_stat = 0.0;
        self.tau_hat = None;
    }

    /// Log-likelihood ratio of a segment with `n` observations, `n1` of them ones.
    fn segment_score(&self, n: usize, n1: usize) -> f64 {
        let n0 = n - n1;
        let mean = n1 as f64 / n as f64;
        let (lo, hi) = (self.model.tpr_lower(), self.model.tpr_max());
        let (ln_p, ln_q) = if mean <= lo {
            (lo.ln(), (-lo).ln_1p())
        } else if mean >= hi {
            (hi.ln(), (-hi).ln_1p())
        } else {
            let ln_n = self.ln_int[n];
            (self.ln_int[n1] - ln_n, self.ln_int[n0] - ln_n)
        };
        let mut score = n1 as f64 * (ln_p - self.ln_fpr);
        if n0 > 0 {
            score += n0 as f64 * (ln_q - self.ln_one_minus_fpr);
        }
        score
    }

    pub fn step(&mut self, i: u8) -> Option<AlarmEvent> {
        self.k += 1;
        if i != 0 {
            self.ones.push_back(self.k);
        }
        let oldest = self.k.saturating_sub(self.m as u64).max(self.origin) + 1;
        while self.ones.front().is_some_and(|&t| t < oldest) {
            self.ones.pop_front();
        }

        let mut best = 0.0;
        let mut best_tau = None;
        for (count, &start) in self.ones.iter().rev().enumerate() {
            let n = (self.k - start + 1) as usize;
            let score = self.segment_score(n, count + 1);
            if score > best {
                best = score;
                best_tau = Some(start - 1);
            }
        }
        self.last_stat = best;
        self.tau_hat = best_tau;

        if best > self.h {
            let alarm = AlarmEvent {
                time: self.k,
                tau_hat: best_tau,
                statistic: best,
                chart: ChartKind::Glr,
                chart_index: None,
            };
            self.reset();
            Some(alarm)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcd::bernoulli::bernoulli_llr;
    use crate::rng::seeded;
    use rand::Rng;

    /// Exhaustive `R_k` over every τ in the window, summing per-observation ratios.
    fn brute_force(history: &[u8], m: usize, model: &BernoulliChangeModel) -> f64 {
        let k = history.len();
        let mut best = 0.0f64;
        for tau in k.saturating_sub(m)..k {
            let seg = &history[tau..k];
            let mean = seg.iter().map(|&b| b as f64).sum::<f64>() / seg.len() as f64;
            let p = mean.max(model.tpr_lower()).min(model.tpr_max());
            let total: f64 = seg
                .iter()
                .map(|&b| bernoulli_llr(b, p, model.fpr()).unwrap())
                .sum();
            best = best.max(total);
        }
        best
    }

    #[test]
    fn first_zero_gives_floor() {
        let model = BernoulliChangeModel::new(0.01, 0.6, 0.01).unwrap();
        let mut g = GlrChart::new(model, 200, 4.0).unwrap();
        assert!(g.step(0).is_none());
        assert_eq!(g.statistic(), 0.0);
        assert_eq!(g.tau_hat(), None);
    }

    #[test]
    fn single_one_clamps_to_tpr_max() {
        let model = BernoulliChangeModel::new(0.01, 0.6, 0.01).unwrap();
        let mut g = GlrChart::new(model, 200, 4.0).unwrap();
        let alarm = g.step(1).unwrap();
        assert_eq!(alarm.time, 1);
        assert_eq!(alarm.tau_hat, Some(0));
        assert!((alarm.statistic - 99f64.ln()).abs() < 1e-12);
        assert_eq!(alarm.chart, ChartKind::Glr);
        assert_eq!(g.statistic(), 0.0);
    }

    #[test]
    fn matches_brute_force_on_random_histories() {
        let model = BernoulliChangeModel::new(0.1, 0.4, 0.02).unwrap();
        let mut rng = seeded(77);
        for trial in 0..20 {
            let mut g = GlrChart::new(model, 50, f64::INFINITY).unwrap();
            let p_change = rng.random_range(0.2..0.9);
            let mut history = Vec::new();
            for t in 0..300 {
                let p = if t < 120 { 0.1 } else { p_change };
                let b = u8::from(rng.random_bool(p));
                history.push(b);
                g.step(b);
                let expect = brute_force(&history, 50, &model);
                assert!((g.statistic() - expect).abs() < 1e-9, "trial {trial} t {t}");
            }
        }
    }

    #[test]
    fn reset_restarts_history() {
        let model = BernoulliChangeModel::new(0.05, 0.6, 0.01).unwrap();
        let mut g = GlrChart::new(model, 10, 2.0).unwrap();
        assert!(g.step(1).is_some());
        assert_eq!(g.window_len(), 0);
        g.step(0);
        assert_eq!(g.window_len(), 1);
        assert_eq!(g.statistic(), 0.0);
        for _ in 0..20 {
            g.step(0);
        }
        assert_eq!(g.window_len(), 10);
    }

    proptest::proptest! {
        #[test]
        fn statistic_never_negative(bits in proptest::collection::vec(0u8..2, 1..200)) {
            let model = BernoulliChangeModel::new(0.2, 0.5, 0.01).unwrap();
            let mut g = GlrChart::new(model, 30, 3.0).unwrap();
            for b in bits {
                if let Some(a) = g.step(b) {
                    proptest::prop_assert!(a.tau_hat.unwrap() < a.time);
                }
                proptest::prop_assert!(g.statistic() >= 0.0);
                proptest::prop_assert!(g.window_len() <= 30);
            }
        }
    }
}
