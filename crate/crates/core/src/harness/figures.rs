//! Figure-data CSVs.
//!
//! Every table is a pure function of the configuration, so two runs with the
//! same config produce byte-identical files. Delay tables use the same seed
//! for every grid point (common random numbers), which keeps trends smooth.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{Config, FigureConfig};
use super::pipeline::accuracy_sweep;
use super::sim::{count_false_alarms, measure_arl, measure_delay, DecisionSource, StreamScenario};
use crate::error::{Error, Result};
use crate::qcd::{approx_delay, kl_bernoulli, ChartConfig, ChartKind};
use crate::sphere::capacity_table;

pub const FIGURE_FILES: [&str; 5] = [
    "fig4_capacity.csv",
    "fig12_perf.csv",
    "fig13_arl.csv",
    "fig14_delay.csv",
    "fig15_dist.csv",
];

/// Shortest round-trip text; exponent form for very small or large magnitudes.
fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn chart(kind: ChartKind, fig: &FigureConfig, fpr: f64, tpr_lower: f64, h: f64) -> ChartConfig {
    ChartConfig {
        kind,
        fpr,
        tpr_lower,
        epsilon: fig.epsilon,
        h: Some(h),
        arl: None,
        window: fig.window,
        ..ChartConfig::default()
    }
}

fn scenario(fig: &FigureConfig, fpr: f64, tpr: f64) -> StreamScenario {
    StreamScenario {
        pre: DecisionSource::Bernoulli(fpr),
        post: DecisionSource::Bernoulli(tpr),
        change_time: fig.change_time,
        length: fig.change_time + fig.max_length,
        seed: fig.seed,
    }
}

/// σ-cap ratio and class capacity over `m = 2..=capacity_max_m`.
pub fn fig4_capacity(fig: &FigureConfig) -> Result<String> {
    let steps = fig.capacity_sigma_steps;
    let sigmas: Vec<f64> = (1..=steps)
        .map(|k| k as f64 * std::f64::consts::PI / (2 * steps) as f64)
        .collect();
    let ms: Vec<usize> = (2..=fig.capacity_max_m).collect();
    let mut s = String::from("m,sigma,sigma_deg,r0,max_classes,log10_capacity\n");
    for r in capacity_table(&ms, &sigmas)? {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.m,
            num(r.sigma),
            num(r.sigma.to_degrees()),
            num(r.r0),
            r.max_classes,
            num(r.log10_capacity)
        )
        .unwrap();
    }
    Ok(s)
}

/// Detector rates at each training-accuracy snapshot.
pub fn fig12_perf(cfg: &Config) -> Result<String> {
    let rows = accuracy_sweep(cfg, &cfg.figures.accuracy_triggers)?;
    let mut s =
        String::from("trigger,accuracy,epoch,tpr,fpr,tnr,fnr,alpha,ru_fnr,tpr_sphere,tpr_noise\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            num(r.trigger),
            num(r.accuracy),
            r.epoch,
            num(r.tpr),
            num(r.fpr),
            num(r.tnr),
            num(r.fnr),
            num(r.alpha),
            num(r.ru_fnr),
            opt(r.tpr_sphere),
            num(r.tpr_noise)
        )
        .unwrap();
    }
    Ok(s)
}

/// Run length to a false alarm versus threshold.
pub fn fig13_arl(fig: &FigureConfig) -> Result<String> {
    let mut s =
        String::from("chart,h,mean_run_length,ci_halfwidth,censored,trials,cap,false_alarm_rate\n");
    for kind in [ChartKind::Glr, ChartKind::Cusum] {
        for &h in &fig.arl_h {
            let c = chart(kind, fig, fig.arl_fpr, fig.arl_tpr_lower, h);
            let a = measure_arl(&c, fig.arl_trials, fig.seed, fig.arl_cap)?;
            writeln!(
                s,
                "{kind},{},{},{},{},{},{},{}",
                num(h),
                num(a.mean_run_length),
                num(a.ci_halfwidth),
                a.censored,
                a.trials,
                a.cap,
                num(a.false_alarm_rate)
            )
            .unwrap();
        }
    }
    Ok(s)
}

/// Detection delay and false alarms on fixed-length pre-change runs versus
/// threshold, for one (fpr, tpr) model.
pub fn fig14_delay(fig: &FigureConfig) -> Result<String> {
    let mut s = String::from(
        "h,mean_delay,median_delay,std_delay,p90_delay,detected,trials,approx_delay,false_alarms,runs,run_length,false_alarm_rate\n",
    );
    let kl = kl_bernoulli(fig.delay_tpr_lower, fig.delay_fpr)?;
    for &h in &fig.delay_h {
        let c = chart(ChartKind::Glr, fig, fig.delay_fpr, fig.delay_tpr_lower, h);
        let d = measure_delay(&c, &scenario(fig, fig.delay_fpr, fig.delay_tpr), fig.trials)?;
        let fa = count_false_alarms(
            &c,
            &DecisionSource::Bernoulli(fig.delay_fpr),
            fig.false_alarm_runs,
            fig.false_alarm_length,
            fig.seed,
        )?;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            num(h),
            opt(d.mean),
            opt(d.median),
            opt(d.std),
            opt(d.p90),
            d.detected,
            d.trials,
            num(approx_delay(h, kl)?),
            fa.alarms,
            fa.runs,
            fa.length,
            num(fa.rate())
        )
        .unwrap();
    }
    Ok(s)
}

/// Delay distribution over a (tpr, fpr, h) grid; cells with `tpr <= fpr` are
/// skipped.
pub fn fig15_dist(fig: &FigureConfig) -> Result<String> {
    let mut s = String::from(
        "tpr,fpr,h,tpr_fpr_ratio,mean,median,p10,p90,std,detected,false_alarms,trials\n",
    );
    for &tpr in &fig.dist_tpr {
        for &fpr in &fig.dist_fpr {
            if tpr <= fpr || fpr >= fig.dist_tpr_lower {
                continue;
            }
            for &h in &fig.dist_h {
                let c = chart(ChartKind::Glr, fig, fpr, fig.dist_tpr_lower, h);
                let d = measure_delay(&c, &scenario(fig, fpr, tpr), fig.trials)?;
                writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    num(tpr),
                    num(fpr),
                    num(h),
                    num(tpr / fpr),
                    opt(d.mean),
                    opt(d.median),
                    opt(d.p10),
                    opt(d.p90),
                    opt(d.std),
                    d.detected,
                    d.false_alarms,
                    d.trials
                )
                .unwrap();
            }
        }
    }
    Ok(s)
}

/// Write all five figure CSVs into `out_dir`, returning their paths.
pub fn simulate(cfg: &Config, out_dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    if cfg.figures.trials == 0 {
        return Err(Error::InvalidConfig("figures.trials must be >= 1".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let fig = &cfg.figures;
    let tables = [
        fig4_capacity(fig)?,
        fig12_perf(cfg)?,
        fig13_arl(fig)?,
        fig14_delay(fig)?,
        fig15_dist(fig)?,
    ];
    let mut paths = Vec::new();
    for (name, body) in FIGURE_FILES.iter().zip(tables) {
        let path = out_dir.join(name);
        std::fs::write(&path, body)?;
        paths.push(path);
    }
    Ok(paths)
}
