//! Train → convert → bound → simulate, end to end.

use serde::{Deserialize, Serialize};

use super::config::{Config, PostChange, PreChange};
use super::sim::{
    measure_arl, measure_delay, ArlEstimate, DecisionSource, DelaySummary, StreamScenario,
};
use super::synth::{gen_clusters, noise_samples, SyntheticData};
use crate::detector::{
    compute_bounds, detect_batch, detect_inputs, fit_boundaries, BoundaryModelSet, DetectorBounds,
    FeatureSpace,
};
use crate::error::{Error, Result};
use crate::qcd::{approx_delay, kl_bernoulli, ChartConfig};
use crate::rng::seeded;
use crate::sphere::uniform_sphere_sample;
use crate::zb::{
    classify, train, train_with_snapshots, FeatureExtractor, LabeledDataset, TrainOutcome,
    ZeroBiasHead,
};

/// Freshly initialized extractor and head for `cfg.model`.
pub fn init_model(cfg: &Config) -> Result<(FeatureExtractor, ZeroBiasHead)> {
    let mut rng = seeded(cfg.model.seed);
    let mut dims = vec![cfg.data.n0];
    dims.extend(&cfg.model.hidden);
    let extractor = FeatureExtractor::random(&dims, cfg.model.activation, &mut rng)?;
    let head = ZeroBiasHead::random(
        *dims.last().unwrap(),
        cfg.model.n1,
        cfg.data.known_classes,
        &mut rng,
    )?;
    Ok((extractor, head))
}

pub fn train_model(cfg: &Config, data: &SyntheticData) -> Result<TrainOutcome<ZeroBiasHead>> {
    let (extractor, head) = init_model(cfg)?;
    train(extractor, head, &data.train, &data.val, &cfg.train)
}

fn rate(decisions: &[u8]) -> Option<f64> {
    if decisions.is_empty() {
        None
    } else {
        Some(decisions.iter().filter(|&&d| d == 1).count() as f64 / decisions.len() as f64)
    }
}

fn accuracy(
    extractor: &FeatureExtractor,
    head: &ZeroBiasHead,
    data: &LabeledDataset,
) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    Ok(data.accuracy(&classify(head, &extractor.forward(data.x())?)?))
}

/// Empirical detector rates on held-out data next to the guaranteed bounds.
///
/// `tpr` is measured on held-out abnormal classes (or, when there are none,
/// on uniform sphere points); `fnr = 1 − tpr` and `tnr = 1 − fpr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorMetrics {
    pub tpr: f64,
    pub fnr: f64,
    pub fpr: f64,
    pub tnr: f64,
    /// Validation classification error, the false-positive bound.
    pub alpha: f64,
    pub alpha_train: f64,
    /// Share of training samples flagged abnormal; never exceeds `alpha_train`.
    pub fpr_train: f64,
    pub ru_fnr: f64,
    pub ru_fnr_ci: f64,
    /// Detection rate on fresh uniform sphere points (sphere space only).
    pub tpr_sphere: Option<f64>,
    /// Detection rate on pure-noise inputs.
    pub tpr_noise: f64,
    pub val_accuracy: f64,
}

/// Everything produced before the chart phase.
#[derive(Debug, Clone)]
pub struct ConvertedSystem {
    pub extractor: FeatureExtractor,
    pub head: ZeroBiasHead,
    pub detector: BoundaryModelSet,
    pub bounds: DetectorBounds,
    pub metrics: DetectorMetrics,
}

/// Decisions on each pool a stream scenario may draw from.
#[derive(Debug, Clone)]
struct DecisionPools {
    normal: Vec<u8>,
    abnormal: Vec<u8>,
    sphere: Option<Vec<u8>>,
    noise: Vec<u8>,
    train: Vec<u8>,
}

fn decision_pools(
    extractor: &FeatureExtractor,
    head: &ZeroBiasHead,
    set: &BoundaryModelSet,
    data: &SyntheticData,
    cfg: &Config,
) -> Result<DecisionPools> {
    let seed = cfg.scenario.seed;
    let sphere = match set.space() {
        FeatureSpace::Sphere => Some(detect_batch(
            set,
            &uniform_sphere_sample(cfg.scenario.pool_size, set.dim(), seed),
        )?),
        FeatureSpace::Reduced => None,
    };
    let noise = noise_samples(cfg.scenario.pool_size, &cfg.data, seed.wrapping_add(1))?;
    Ok(DecisionPools {
        normal: detect_inputs(extractor, head, set, data.val.x())?,
        abnormal: detect_inputs(extractor, head, set, data.abnormal.x())?,
        sphere,
        noise: detect_inputs(extractor, head, set, &noise)?,
        train: detect_inputs(extractor, head, set, data.train.x())?,
    })
}

/// Fit boundaries for a trained model and measure how the detector behaves.
pub fn convert(
    cfg: &Config,
    data: &SyntheticData,
    extractor: FeatureExtractor,
    head: ZeroBiasHead,
) -> Result<ConvertedSystem> {
    let (system, _) = convert_with_pools(cfg, data, extractor, head)?;
    Ok(system)
}

fn convert_with_pools(
    cfg: &Config,
    data: &SyntheticData,
    extractor: FeatureExtractor,
    head: ZeroBiasHead,
) -> Result<(ConvertedSystem, DecisionPools)> {
    let detector = fit_boundaries(&extractor, &head, &data.train, &cfg.detector.fit)?;
    let val_accuracy = accuracy(&extractor, &head, &data.val)?;
    let alpha = 1.0 - val_accuracy;
    let bounds = compute_bounds(&detector, alpha, &cfg.detector.mc)?;
    let pools = decision_pools(&extractor, &head, &detector, data, cfg)?;
    let fpr = rate(&pools.normal).unwrap_or(0.0);
    let tpr_sphere = pools.sphere.as_deref().and_then(rate);
    let tpr = rate(&pools.abnormal).or(tpr_sphere).unwrap_or(0.0);
    let metrics = DetectorMetrics {
        tpr,
        fnr: 1.0 - tpr,
        fpr,
        tnr: 1.0 - fpr,
        alpha,
        alpha_train: 1.0 - accuracy(&extractor, &head, &data.train)?,
        fpr_train: rate(&pools.train).unwrap_or(0.0),
        ru_fnr: bounds.ru_fnr,
        ru_fnr_ci: bounds.ru_fnr_ci,
        tpr_sphere,
        tpr_noise: rate(&pools.noise).unwrap_or(0.0),
        val_accuracy,
    };
    let system = ConvertedSystem {
        extractor,
        head,
        detector,
        bounds,
        metrics,
    };
    Ok((system, pools))
}

/// The chart configuration actually used: pre-change rate and post-change
/// lower bound taken from `bounds`, with the rate floored and the lower bound
/// capped at `tpr_max`.
pub fn chart_from_bounds(
    chart: &ChartConfig,
    bounds: &DetectorBounds,
    fpr_floor: f64,
) -> Result<ChartConfig> {
    if !bounds.detectable {
        return Err(Error::NotDetectable {
            tpr_lower: bounds.tpr_lower,
            fpr_upper: bounds.fpr_upper,
        });
    }
    let tpr_max = 1.0 - chart.epsilon;
    let out = ChartConfig {
        fpr: bounds.fpr_upper.max(fpr_floor),
        tpr_lower: bounds.tpr_lower.min(tpr_max),
        ..chart.clone()
    };
    out.model()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartReport {
    /// Effective chart settings after applying the detector bounds.
    pub config: ChartConfig,
    pub h: f64,
    /// `I(tpr_lower, fpr)`.
    pub kl: f64,
    /// First-order worst-case delay `h / kl`.
    pub approx_delay: f64,
    pub pre_change_rate: f64,
    pub post_change_rate: f64,
    pub delay: DelaySummary,
    /// Fraction of scenario trials that alarmed before the change.
    pub false_alarm_rate: f64,
    pub arl: ArlEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub config: Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub training: TrainingSummary,
    pub detector: DetectorMetrics,
    pub bounds: DetectorBounds,
    pub chart: ChartReport,
    pub provenance: Provenance,
}

fn pre_source(pre: PreChange, pools: &DecisionPools) -> DecisionSource {
    match pre {
        PreChange::ValidationNormal => DecisionSource::Pool(pools.normal.clone()),
        PreChange::Bernoulli(p) => DecisionSource::Bernoulli(p),
    }
}

fn post_source(post: PostChange, pools: &DecisionPools) -> Result<DecisionSource> {
    Ok(match post {
        PostChange::AbnormalClass => DecisionSource::Pool(pools.abnormal.clone()),
        PostChange::UniformSphere => {
            DecisionSource::Pool(pools.sphere.clone().ok_or_else(|| {
                Error::InvalidConfig(
                    "uniform-sphere abnormalities need the sphere feature space".into(),
                )
            })?)
        }
        PostChange::Noise => DecisionSource::Pool(pools.noise.clone()),
        PostChange::Bernoulli(p) => DecisionSource::Bernoulli(p),
    })
}

/// Full run. Fails with [`Error::NotDetectable`] before any stream is
/// simulated when the bounds rule out sequential detection.
pub fn run_pipeline(cfg: &Config) -> Result<RunReport> {
    cfg.validate()?;
    let data = gen_clusters(&cfg.data)?;
    let outcome = train_model(cfg, &data)?;
    let training = TrainingSummary {
        epochs: outcome.history.len() - 1,
        initial_accuracy: outcome.initial_accuracy(),
        final_accuracy: outcome.final_accuracy(),
        final_loss: outcome.history.last().map_or(f64::NAN, |r| r.loss),
    };
    let (system, pools) = convert_with_pools(cfg, &data, outcome.extractor, outcome.head)?;
    if !system.bounds.detectable {
        return Err(Error::NotDetectable {
            tpr_lower: system.bounds.tpr_lower,
            fpr_upper: system.bounds.fpr_upper,
        });
    }

    let chart = if cfg.scenario.model_from_bounds {
        chart_from_bounds(&cfg.chart, &system.bounds, cfg.scenario.fpr_floor)?
    } else {
        cfg.chart.clone()
    };
    let model = chart.model()?;
    let h = chart.threshold()?;
    let kl = kl_bernoulli(model.tpr_lower(), model.fpr())?;
    let scenario = StreamScenario {
        pre: pre_source(cfg.scenario.pre, &pools),
        post: post_source(cfg.scenario.post, &pools)?,
        change_time: cfg.scenario.change_time,
        length: cfg.scenario.length,
        seed: cfg.scenario.seed,
    };
    let delay = measure_delay(&chart, &scenario, cfg.scenario.trials)?;
    let arl = measure_arl(
        &chart,
        cfg.scenario.arl_trials,
        cfg.scenario.seed,
        cfg.scenario.arl_cap,
    )?;
    let chart_report = ChartReport {
        h,
        kl,
        approx_delay: approx_delay(h, kl)?,
        pre_change_rate: scenario.pre.rate(),
        post_change_rate: scenario.post.rate(),
        false_alarm_rate: delay.false_alarms as f64 / delay.trials as f64,
        delay,
        arl,
        config: chart,
    };
    Ok(RunReport {
        training,
        detector: system.metrics,
        bounds: system.bounds,
        chart: chart_report,
        provenance: Provenance {
            config_hash: cfg.hash(),
            seed: cfg.data.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
        },
    })
}

/// Detector performance at one training snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub trigger: f64,
    /// Validation accuracy actually reached when the snapshot was taken.
    pub accuracy: f64,
    pub epoch: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub tnr: f64,
    pub fnr: f64,
    pub alpha: f64,
    pub ru_fnr: f64,
    pub tpr_sphere: Option<f64>,
    pub tpr_noise: f64,
}

/// Convert the model at each accuracy trigger and measure the detector.
///
/// Triggers never reached during training produce no row.
pub fn accuracy_sweep(cfg: &Config, triggers: &[f64]) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let data = gen_clusters(&cfg.data)?;
    let (extractor, head) = init_model(cfg)?;
    let (_, snapshots) = train_with_snapshots(
        extractor,
        head,
        &data.train,
        &data.val,
        &cfg.train,
        triggers,
    )?;
    snapshots
        .into_iter()
        .map(|s| {
            let m = convert(cfg, &data, s.extractor, s.head)?.metrics;
            Ok(SweepRow {
                trigger: s.trigger,
                accuracy: s.accuracy,
                epoch: s.epoch,
                tpr: m.tpr,
                fpr: m.fpr,
                tnr: m.tnr,
                fnr: m.fnr,
                alpha: m.alpha,
                ru_fnr: m.ru_fnr,
                tpr_sphere: m.tpr_sphere,
                tpr_noise: m.tpr_noise,
            })
        })
        .collect()
}
