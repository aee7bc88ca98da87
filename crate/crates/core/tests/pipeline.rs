use std::path::PathBuf;

use zbqd::harness::config::load_config;
use zbqd::harness::pipeline::{accuracy_sweep, run_pipeline, RunReport};
use zbqd::harness::Config;
use zbqd::Error;

fn shipped_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}

/// Well separated clusters and a short scenario, to keep the run quick.
///
/// With only 150 fitting samples per class the max cut-off noticeably
/// undercovers fresh samples (Mahalanobis distances with an estimated
/// covariance are larger out of sample); 300 per class keeps that effect
/// well below the slack.
fn separable() -> Config {
    let mut cfg = Config::default();
    cfg.data.mean_scale = 10.0;
    cfg.data.cluster_std = 0.5;
    cfg.data.samples_per_class = 500;
    cfg.scenario.trials = 100;
    cfg.scenario.arl_trials = 5;
    cfg.scenario.arl_cap = 100_000;
    cfg
}

#[test]
fn shipped_config_spells_out_the_defaults() {
    let (cfg, warnings) = load_config(Some(&shipped_config()), &[]).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(cfg, Config::default());
}

#[test]
fn separable_report_respects_bounds() {
    let cfg = separable();
    let r = run_pipeline(&cfg).unwrap();
    assert!(
        r.training.final_accuracy >= 0.98,
        "accuracy {}",
        r.training.final_accuracy
    );
    let d = &r.detector;
    assert!(d.fpr <= d.alpha + 0.02, "fpr {} alpha {}", d.fpr, d.alpha);
    let tpr_sphere = d.tpr_sphere.unwrap();
    assert!(
        tpr_sphere >= 1.0 - d.ru_fnr - 0.05,
        "sphere tpr {tpr_sphere} ru_fnr {}",
        d.ru_fnr
    );
    assert!(d.fpr_train <= d.alpha_train);

    // conservation is exact
    assert_eq!(d.tpr + d.fnr, 1.0);
    assert_eq!(d.tnr + d.fpr, 1.0);
    for rate in [
        d.tpr,
        d.fpr,
        d.tnr,
        d.fnr,
        d.alpha,
        d.ru_fnr,
        r.chart.false_alarm_rate,
    ] {
        assert!((0.0..=1.0).contains(&rate));
    }
    assert_eq!(r.provenance.config_hash, cfg.hash());
}

#[test]
fn report_round_trips_and_reproduces_from_embedded_config() {
    let cfg = separable();
    let r = run_pipeline(&cfg).unwrap();
    let text = serde_json::to_string(&r).unwrap();
    let back: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);

    let again = run_pipeline(&back.provenance.config).unwrap();
    assert_eq!(serde_json::to_string(&again).unwrap(), text);
}

#[test]
fn identical_means_give_no_usable_detector() {
    let mut cfg = separable();
    cfg.data.mean_scale = 1e-9;
    cfg.train.epochs = 10;
    match run_pipeline(&cfg) {
        Err(Error::NotDetectable { .. }) => {}
        Ok(r) => {
            let chance = 1.0 / cfg.data.known_classes as f64;
            assert!(
                (r.training.final_accuracy - chance).abs() <= 0.1,
                "{}",
                r.training.final_accuracy
            );
        }
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn sweep_reports_achieved_accuracy() {
    let cfg = Config::default();
    let rows = accuracy_sweep(&cfg, &[0.85]).unwrap();
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert_eq!(row.trigger, 0.85);
    assert!(row.accuracy >= 0.85);
    assert_ne!(row.accuracy, row.trigger);

    // a trigger above anything reachable yields no row
    assert!(accuracy_sweep(&cfg, &[1.01]).unwrap().is_empty());
}
