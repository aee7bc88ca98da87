//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.
//!
//! Runs without the libtest harness so the lines are always printed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use zbqd::detector::{correctly_classified, detect_batch, detect_inputs, fit_boundaries};
use zbqd::harness::config::{load_config, FigureConfig};
use zbqd::harness::figures::{simulate, FIGURE_FILES};
use zbqd::harness::pipeline::{accuracy_sweep, init_model};
use zbqd::harness::sim::{count_false_alarms, measure_delay, DecisionSource, StreamScenario};
use zbqd::harness::{gen_clusters, Config, SyntheticData};
use zbqd::qcd::{ChartConfig, ChartKind, GlrChart};
use zbqd::rng::{seeded, substream};
use zbqd::sphere::{estimate_ru_fnr, sigma_cap_ratio, uniform_sphere_sample, CapSpec, McConfig};
use zbqd::zb::{
    loss_and_grad, train, train_with_snapshots, Activation, DenseLayer, FeatureExtractor,
    LabeledDataset, Loss, StandardHead, TrainConfig, ZeroBiasHead,
};
use zbqd::{Matrix, Vector};

type Outcome = std::result::Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

// ---------------------------------------------------------------------------
// 1

/// Central difference of `f` around `x` in every coordinate.
fn numeric_grad(x: &Matrix, step: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut g = Matrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus[i] += step;
        let mut minus = x.clone();
        minus[i] -= step;
        g[i] = (f(&plus) - f(&minus)) / (2.0 * step);
    }
    g
}

fn rel_err(analytic: &Matrix, numeric: &Matrix) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

fn col(v: &Vector) -> Matrix {
    Matrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let (n_in, n0, n1, c, q) = (7, 6, 4, 3, 8);
    let step = 1e-5;
    let mut worst = 0.0f64;
    for instance in 0..20u64 {
        let mut rng = substream(404, instance);
        // even instances run through a tanh layer, odd ones feed the head directly
        let (extractor, width) = if instance % 2 == 0 {
            let layer = DenseLayer::new(
                random_matrix(n0, n_in, &mut rng),
                col_vec(n0, &mut rng),
                Activation::Tanh,
            )
            .unwrap();
            (FeatureExtractor::new(vec![layer]).unwrap(), n_in)
        } else {
            (FeatureExtractor::identity(), n0)
        };
        let head = ZeroBiasHead::new(
            random_matrix(n1, n0, &mut rng),
            col_vec(n1, &mut rng),
            random_matrix(c, n1, &mut rng),
        )
        .unwrap();
        let x = random_matrix(width, q, &mut rng);
        let y: Vec<usize> = (0..q).map(|_| rng.random_range(0..c)).collect();
        let batch = LabeledDataset::new(x, y, c).unwrap();
        let cfg = TrainConfig {
            loss: if instance % 4 < 2 {
                Loss::CrossEntropy
            } else {
                Loss::Mse
            },
            ..TrainConfig::default()
        };
        let loss =
            |e: &FeatureExtractor, h: &ZeroBiasHead| loss_and_grad(e, h, &batch, &cfg).unwrap().0;
        let (_, g) = loss_and_grad(&extractor, &head, &batch, &cfg).unwrap();

        let w0 = numeric_grad(head.w0(), step, |m| {
            loss(
                &extractor,
                &ZeroBiasHead::new(m.clone(), head.b().clone(), head.w1().clone()).unwrap(),
            )
        });
        let b = numeric_grad(&col(head.b()), step, |m| {
            let b = Vector::from_column_slice(m.as_slice());
            loss(
                &extractor,
                &ZeroBiasHead::new(head.w0().clone(), b, head.w1().clone()).unwrap(),
            )
        });
        let w1 = numeric_grad(head.w1(), step, |m| {
            loss(
                &extractor,
                &ZeroBiasHead::new(head.w0().clone(), head.b().clone(), m.clone()).unwrap(),
            )
        });
        worst = worst
            .max(rel_err(&g.head.w0, &w0))
            .max(rel_err(&col(&g.head.b), &b))
            .max(rel_err(&g.head.w1, &w1));

        for (l, lg) in g.layers.iter().enumerate() {
            let weight = numeric_grad(&extractor.layers[l].weight, step, |m| {
                let mut e = extractor.clone();
                e.layers[l].weight = m.clone();
                loss(&e, &head)
            });
            let bias = numeric_grad(&col(&extractor.layers[l].bias), step, |m| {
                let mut e = extractor.clone();
                e.layers[l].bias = Vector::from_column_slice(m.as_slice());
                loss(&e, &head)
            });
            worst = worst
                .max(rel_err(&lg.weight, &weight))
                .max(rel_err(&col(&lg.bias), &bias));
        }
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-4 && elapsed < Duration::from_secs(10),
        format!(
            "max relative error {worst:.2e} over 20 instances in {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn col_vec(n: usize, rng: &mut impl Rng) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-0.5..0.5))
}

// ---------------------------------------------------------------------------
// 2

fn sigma_cap_closed_forms() -> Outcome {
    use std::f64::consts::PI;
    let mut worst = 0.0f64;
    for k in 1..=50 {
        let sigma = k as f64 * (PI / 2.0) / 50.0;
        let r2 = sigma_cap_ratio(CapSpec::new(2, sigma).unwrap()).unwrap();
        let r3 = sigma_cap_ratio(CapSpec::new(3, sigma).unwrap()).unwrap();
        worst = worst
            .max((r2 - sigma / PI).abs())
            .max((r3 - (1.0 - sigma.cos()) / 2.0).abs());
    }
    let inexact: Vec<usize> = (2..=64)
        .filter(|&m| sigma_cap_ratio(CapSpec::new(m, PI / 2.0).unwrap()).unwrap() != 0.5)
        .collect();
    check(
        worst < 1e-10 && inexact.is_empty(),
        format!(
            "max error {worst:.2e} on 50 σ values; hemisphere not exactly 0.5 for m in {inexact:?}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 3, 4, 9

/// Default data, and the default model captured at three accuracy levels.
fn snapshots(
    cfg: &Config,
    data: &SyntheticData,
    triggers: &[f64],
) -> Vec<(f64, FeatureExtractor, ZeroBiasHead)> {
    let (e, h) = init_model(cfg).unwrap();
    let (_, snaps) =
        train_with_snapshots(e, h, &data.train, &data.val, &cfg.train, triggers).unwrap();
    snaps
        .into_iter()
        .map(|s| (s.accuracy, s.extractor, s.head))
        .collect()
}

fn fitting_set_exactness(
    cfg: &Config,
    models: &[(f64, FeatureExtractor, ZeroBiasHead)],
    data: &SyntheticData,
) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (acc, e, h) in models {
        let set = fit_boundaries(e, h, &data.train, &cfg.detector.fit).unwrap();
        let correct = correctly_classified(e, h, &data.train).unwrap();
        let fitted = data.train.select(&correct);
        let flagged_fitted = detect_inputs(e, h, &set, fitted.x())
            .unwrap()
            .iter()
            .filter(|&&d| d == 1)
            .count();
        let flagged_all = detect_inputs(e, h, &set, data.train.x())
            .unwrap()
            .iter()
            .filter(|&&d| d == 1)
            .count();
        let misclassified = data.train.len() - correct.len();
        // FPR ≤ α_train compared as counts over the same denominator
        ok &= flagged_fitted == 0 && flagged_all <= misclassified;
        lines.push(format!(
            "acc {acc:.3}: {flagged_fitted}/{} fitting samples flagged, train FPR {flagged_all}/{n} vs α {misclassified}/{n}",
            correct.len(),
            n = data.train.len()
        ));
    }
    check(ok, lines.join("; "))
}

fn sphere_consistency(
    cfg: &Config,
    models: &[(f64, FeatureExtractor, ZeroBiasHead)],
    data: &SyntheticData,
) -> Outcome {
    let m_points = 20_000;
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, (acc, e, h)) in models.iter().enumerate() {
        let set = fit_boundaries(e, h, &data.train, &cfg.detector.fit).unwrap();
        let est = estimate_ru_fnr(
            &set,
            &McConfig {
                m_points,
                ..McConfig::default()
            },
        )
        .unwrap();
        let fresh = uniform_sphere_sample(m_points, set.dim(), 90_000 + i as u64);
        let missed = detect_batch(&set, &fresh)
            .unwrap()
            .iter()
            .filter(|&&d| d == 0)
            .count();
        let miss_rate = missed as f64 / m_points as f64;
        // pooled two-sample binomial half-width at 95%
        let pooled = (est.ratio + miss_rate) / 2.0;
        let half = 1.96 * (pooled * (1.0 - pooled) * 2.0 / m_points as f64).sqrt();
        let diff = (miss_rate - est.ratio).abs();
        ok &= diff <= 3.0 * half;
        lines.push(format!(
            "acc {acc:.3}: estimate {:.5}, fresh miss rate {miss_rate:.5}, |Δ| {diff:.5} ≤ 3×{half:.5}",
            est.ratio
        ));
    }
    check(ok, lines.join("; "))
}

fn accuracy_trend(cfg: &Config) -> Outcome {
    let triggers = [0.7, 0.85, 0.96];
    let rows = accuracy_sweep(cfg, &triggers).unwrap();
    if rows.len() != triggers.len() {
        return Err(format!("only {} of 3 accuracy levels reached", rows.len()));
    }
    let ok = rows
        .windows(2)
        .all(|w| w[1].tpr >= w[0].tpr - 0.03 && w[1].fpr <= w[0].fpr + 0.03);
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("acc {:.3} tpr {:.3} fpr {:.3}", r.accuracy, r.tpr, r.fpr))
        .collect();
    check(ok, table.join("; "))
}

/// Same check on other data seeds; reported, not graded.
fn accuracy_trend_seeds(cfg: &Config) -> String {
    let mut passed = 0;
    let seeds = [12u64, 13, 14, 15, 16];
    for &seed in &seeds {
        let mut c = cfg.clone();
        c.data.seed = seed;
        if accuracy_trend(&c).is_ok() {
            passed += 1;
        }
    }
    format!("trend holds for {passed}/{} other data seeds", seeds.len())
}

// ---------------------------------------------------------------------------
// 5

/// `R_k` straight from the definition: every τ in the window, the clamped
/// segment mean, per-observation log-likelihood ratios.
fn glr_by_definition(history: &[u8], window: usize, fpr: f64, lo: f64, hi: f64) -> f64 {
    let k = history.len();
    let mut best = 0.0f64;
    for tau in k.saturating_sub(window)..k {
        let seg = &history[tau..];
        let ones = seg.iter().filter(|&&b| b == 1).count() as f64;
        let p = (ones / seg.len() as f64).clamp(lo, hi);
        let score: f64 = seg
            .iter()
            .map(|&b| {
                if b == 1 {
                    (p / fpr).ln()
                } else {
                    ((1.0 - p) / (1.0 - fpr)).ln()
                }
            })
            .sum();
        best = best.max(score);
    }
    best
}

fn glr_oracle() -> Outcome {
    let window = 200;
    let mut worst = 0.0f64;
    for s in 0..100u64 {
        let mut rng = substream(505, s);
        let fpr = rng.random_range(0.01..0.3);
        let lo = rng.random_range(fpr + 0.05..0.9);
        let model = ChartConfig {
            fpr,
            tpr_lower: lo,
            epsilon: 0.01,
            ..ChartConfig::default()
        }
        .model()
        .unwrap();
        let mut chart = GlrChart::new(model, window, f64::INFINITY).unwrap();
        // pre-change stretch then a random post-change rate
        let change = rng.random_range(0..1000);
        let post = rng.random_range(0.0..1.0);
        let mut history = Vec::with_capacity(1000);
        for t in 0..1000 {
            let p = if t < change { fpr } else { post };
            let bit = u8::from(rng.random::<f64>() < p);
            history.push(bit);
            chart.step(bit);
            let expected = glr_by_definition(&history, window, fpr, lo, 0.99);
            worst = worst.max((chart.statistic() - expected).abs());
        }
    }
    check(
        worst < 1e-9,
        format!("max |R_k − brute force| = {worst:.2e} over 100 streams × 1000 steps"),
    )
}

// ---------------------------------------------------------------------------
// 6, 7, 8

fn glr(fpr: f64, tpr_lower: f64, h: f64) -> ChartConfig {
    ChartConfig {
        kind: ChartKind::Glr,
        fpr,
        tpr_lower,
        h: Some(h),
        ..ChartConfig::default()
    }
}

fn bernoulli_scenario(fpr: f64, tpr: f64, seed: u64) -> StreamScenario {
    StreamScenario {
        pre: DecisionSource::Bernoulli(fpr),
        post: DecisionSource::Bernoulli(tpr),
        change_time: 100,
        length: 100_100,
        seed,
    }
}

/// Zero-state delay: the change happens at the first sample. With h = 4 a
/// single positive decision already crosses the threshold (ln 99 > 4), so any
/// pre-change stretch mostly ends in false alarms; that regime is reported
/// separately.
fn delay_headline() -> Outcome {
    let chart = glr(0.01, 0.6, 4.0);
    let zero_state = StreamScenario {
        change_time: 1,
        ..bernoulli_scenario(0.01, 0.99, 2021)
    };
    let d = measure_delay(&chart, &zero_state, 500).unwrap();
    let mean = d.mean.unwrap_or(f64::INFINITY);
    check(
        mean <= 10.0 && d.detected == 500,
        format!(
            "mean delay {mean:.3} samples, max {:?}, {} of 500 detected",
            d.max, d.detected
        ),
    )
}

fn delay_headline_steady_state() -> String {
    let d = measure_delay(
        &glr(0.01, 0.6, 4.0),
        &bernoulli_scenario(0.01, 0.99, 2021),
        500,
    )
    .unwrap();
    format!(
        "with 99 pre-change samples: {} of 500 trials alarm early, mean delay of the rest {:.3}",
        d.false_alarms,
        d.mean.unwrap_or(f64::NAN)
    )
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

fn linearity_and_cutoff(fig: &FigureConfig) -> Outcome {
    let (fpr, tpr, lo) = (fig.delay_fpr, fig.delay_tpr, fig.delay_tpr_lower);
    let hs = [12.0, 14.0, 16.0, 18.0, 20.0];
    let means: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let d = measure_delay(
                &glr(fpr, lo, h),
                &bernoulli_scenario(fpr, tpr, fig.seed),
                500,
            )
            .unwrap();
            d.mean.unwrap()
        })
        .collect();
    let r2 = r_squared(&hs, &means);
    // smallest threshold on the search grid from which every larger one is alarm-free
    let grid: Vec<f64> = (6..=15).map(|k| 2.0 * k as f64).collect();
    let counts: Vec<u64> = grid
        .iter()
        .map(|&h| {
            let c = glr(fpr, lo, h);
            count_false_alarms(&c, &DecisionSource::Bernoulli(fpr), 500, 10_000, fig.seed)
                .unwrap()
                .alarms
        })
        .collect();
    let cutoff = (0..grid.len())
        .find(|&i| counts[i..].iter().all(|&c| c == 0))
        .map(|i| grid[i]);
    let fmt: Vec<String> = means.iter().map(|m| format!("{m:.2}")).collect();
    check(
        r2 >= 0.95 && cutoff.is_some(),
        format!(
            "tpr {tpr}, fpr {fpr}: mean delays {} for h 12..20, R² {r2:.4}; \
             false alarms in 500×10⁴ for h 12..30 {counts:?}, cut-off h {cutoff:?}",
            fmt.join("/")
        ),
    )
}

fn bank_vs_glr() -> Outcome {
    let lo = 0.6;
    let h = 8.0;
    let mut worst = 0.0f64;
    let mut cells = Vec::new();
    for (i, &tpr) in [0.7, 0.85, 0.99].iter().enumerate() {
        for (j, &fpr) in [0.01, 0.05, 0.1].iter().enumerate() {
            let sc = bernoulli_scenario(fpr, tpr, 3000 + (3 * i + j) as u64);
            let g = measure_delay(&glr(fpr, lo, h), &sc, 500)
                .unwrap()
                .mean
                .unwrap();
            let bank = ChartConfig {
                kind: ChartKind::Bank,
                u: 128,
                ..glr(fpr, lo, h)
            };
            let b = measure_delay(&bank, &sc, 500).unwrap().mean.unwrap();
            let rel = (b - g).abs() / g;
            worst = worst.max(rel);
            cells.push(format!("({tpr},{fpr}) {g:.2}/{b:.2}"));
        }
    }
    check(
        worst <= 0.15,
        format!(
            "max relative gap {:.1}%; GLR/bank mean delays {}",
            worst * 100.0,
            cells.join(" ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 10

fn zero_bias_parity(cfg: &Config) -> Outcome {
    let mut zb = Vec::new();
    let mut std = Vec::new();
    for seed in 0..5u64 {
        let mut c = cfg.clone();
        c.data.seed = 100 + seed;
        c.model.seed = 200 + seed;
        c.train.seed = 300 + seed;
        let data = gen_clusters(&c.data).unwrap();
        let (e, h) = init_model(&c).unwrap();
        zb.push(
            train(e.clone(), h, &data.train, &data.val, &c.train)
                .unwrap()
                .final_accuracy(),
        );
        let width = *c.model.hidden.last().unwrap_or(&c.data.n0);
        let head = StandardHead::random(width, c.data.known_classes, &mut seeded(c.model.seed));
        std.push(
            train(e, head, &data.train, &data.val, &c.train)
                .unwrap()
                .final_accuracy(),
        );
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (mz, ms) = (median(&mut zb.clone()), median(&mut std.clone()));
    check(
        mz >= ms - 0.02,
        format!(
            "median accuracy zero-bias {mz:.4}, standard {ms:.4} (per seed {zb:.3?} vs {std:.3?})"
        ),
    )
}

// ---------------------------------------------------------------------------
// 11

fn simulate_determinism() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let (cfg, _) = load_config(Some(&path), &[]).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut times = Vec::new();
    for d in &dirs {
        let t = Instant::now();
        simulate(&cfg, d.path()).unwrap();
        times.push(t.elapsed());
    }
    let differing: Vec<&str> = FIGURE_FILES
        .iter()
        .copied()
        .filter(|f| {
            std::fs::read(dirs[0].path().join(f)).unwrap()
                != std::fs::read(dirs[1].path().join(f)).unwrap()
        })
        .collect();
    let slowest = times.iter().max().unwrap();
    check(
        differing.is_empty() && *slowest < Duration::from_secs(300),
        format!(
            "{} files, differing: {differing:?}; runs took {:.1}s and {:.1}s",
            FIGURE_FILES.len(),
            times[0].as_secs_f64(),
            times[1].as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------

fn run(results: &mut Vec<bool>, id: usize, name: &str, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!(
        "{tag} {id:>2} {name} [{:.1}s]: {detail}",
        start.elapsed().as_secs_f64()
    );
    results.push(outcome.is_ok());
}

fn main() -> ExitCode {
    let cfg = Config::default();
    let data = gen_clusters(&cfg.data).unwrap();
    let models = snapshots(&cfg, &data, &[0.7, 0.85, 0.96]);

    let mut results = Vec::new();
    run(&mut results, 1, "gradient correctness", gradient_check);
    run(
        &mut results,
        2,
        "σ-cap closed forms",
        sigma_cap_closed_forms,
    );
    run(&mut results, 3, "fitting-set exactness", || {
        fitting_set_exactness(&cfg, &models, &data)
    });
    run(&mut results, 4, "sphere miss-rate consistency", || {
        sphere_consistency(&cfg, &models, &data)
    });
    run(&mut results, 5, "GLR oracle equivalence", glr_oracle);
    run(&mut results, 6, "GLR delay headline", delay_headline);
    println!("INFO  6 {}", delay_headline_steady_state());
    run(
        &mut results,
        7,
        "delay linearity and false-alarm cut-off",
        || linearity_and_cutoff(&cfg.figures),
    );
    run(&mut results, 8, "CUSUM bank ≈ GLR", bank_vs_glr);
    run(&mut results, 9, "detector trend with accuracy", || {
        accuracy_trend(&cfg)
    });
    println!("INFO  9 {}", accuracy_trend_seeds(&cfg));
    run(&mut results, 10, "zero-bias accuracy parity", || {
        zero_bias_parity(&cfg)
    });
    run(
        &mut results,
        11,
        "simulate determinism and budget",
        simulate_determinism,
    );

    let passed = results.iter().filter(|&&r| r).count();
    println!("{passed}/{} acceptance criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
