use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use zbqd::detector::{compute_bounds, fit_boundaries, DetectorBounds};
use zbqd::harness::config::{load_config, parse_override, Config};
use zbqd::harness::figures::{fig4_capacity, simulate};
use zbqd::harness::monitor::{monitor, MonitorOptions};
use zbqd::harness::persist::{
    check_compatible, load_dataset, load_detector, load_model, save_dataset, save_detector,
    save_model,
};
use zbqd::harness::pipeline::{chart_from_bounds, init_model, run_pipeline, TrainingSummary};
use zbqd::harness::projection::{project_system, write_projection_csv};
use zbqd::harness::synth::gen_clusters;
use zbqd::zb::{classify, train, LabeledDataset};

/// Zero-bias classifiers as bounded abnormality detectors, with
/// quickest-change charts over their decisions.
#[derive(Debug, Parser)]
#[command(name = "zbqd", version)]
struct Cli {
    /// TOML or JSON config file. Its values win over command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override any config key, e.g. `--set chart.kind=cusum`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(flatten)]
    flags: Flags,

    #[command(subcommand)]
    command: Command,
}

/// Shorthands for common config keys.
#[derive(Debug, Args)]
struct Flags {
    /// data.seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// data.n0
    #[arg(long, global = true)]
    n0: Option<usize>,
    /// data.known_classes
    #[arg(long, global = true)]
    classes: Option<usize>,
    /// model.n1
    #[arg(long, global = true)]
    n1: Option<usize>,
    /// train.epochs
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// train.learning_rate
    #[arg(long = "learning-rate", global = true)]
    learning_rate: Option<f64>,
    /// chart.kind (glr, cusum, bank)
    #[arg(long, global = true)]
    chart: Option<String>,
    /// chart.h
    #[arg(long, global = true)]
    h: Option<f64>,
    /// chart.arl
    #[arg(long, global = true)]
    arl: Option<f64>,
    /// scenario.trials
    #[arg(long, global = true)]
    trials: Option<usize>,
}

impl Flags {
    fn overrides(&self) -> Vec<(String, Value)> {
        let mut out = Vec::new();
        let mut push = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                out.push((key.to_string(), v));
            }
        };
        push("data.seed", self.seed.map(Value::from));
        push("data.n0", self.n0.map(Value::from));
        push("data.known_classes", self.classes.map(Value::from));
        push("model.n1", self.n1.map(Value::from));
        push("train.epochs", self.epochs.map(Value::from));
        push("train.learning_rate", self.learning_rate.map(Value::from));
        push("chart.kind", self.chart.clone().map(Value::from));
        push("chart.h", self.h.map(Value::from));
        push("chart.arl", self.arl.map(Value::from));
        push("scenario.trials", self.trials.map(Value::from));
        out
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic train.csv, val.csv and abnormal.csv.
    Gen {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train a zero-bias model and save it as JSON.
    Train {
        /// Directory written by `gen`; generated from the config if omitted.
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Fit per-class boundaries for a trained model.
    Convert {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Compute the detector's FPR/TPR bounds.
    Bounds {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "FILE")]
        detector: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Also write the bounds JSON here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Print the σ-cap capacity table as CSV.
    Capacity {
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Write all figure-data CSVs.
    Simulate {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run detector and chart over CSV feature rows, emitting JSON lines.
    Monitor {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "FILE")]
        detector: PathBuf,
        /// CSV rows; standard input if omitted or `-`.
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        /// Bounds JSON from `bounds`; sets the chart's pre/post-change rates.
        #[arg(long, value_name = "FILE")]
        bounds: Option<PathBuf>,
        /// Only print alarm events.
        #[arg(long)]
        alarms_only: bool,
    },
    /// Run the whole pipeline and print the report JSON.
    Report {
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Also write fingerprints and validation features projected on
        /// their top two principal components.
        #[arg(long, value_name = "FILE")]
        project: Option<PathBuf>,
    },
}

struct Datasets {
    train: LabeledDataset,
    val: LabeledDataset,
}

const DATA_FILES: [&str; 3] = ["train.csv", "val.csv", "abnormal.csv"];

fn datasets(cfg: &Config, dir: Option<&Path>) -> Result<Datasets> {
    let Some(dir) = dir else {
        let d = gen_clusters(&cfg.data)?;
        return Ok(Datasets {
            train: d.train,
            val: d.val,
        });
    };
    let c = Some(cfg.data.known_classes);
    let read = |name: &str| {
        let path = dir.join(name);
        load_dataset(&path, c).with_context(|| format!("reading {}", path.display()))
    };
    Ok(Datasets {
        train: read(DATA_FILES[0])?,
        val: read(DATA_FILES[1])?,
    })
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    if let Some(p) = path {
        std::fs::write(p, format!("{text}\n"))
            .with_context(|| format!("writing {}", p.display()))?;
    }
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut overrides = cli.flags.overrides();
    for s in &cli.set {
        overrides.push(parse_override(s)?);
    }
    let (cfg, warnings) = load_config(cli.config.as_deref(), &overrides)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }

    match cli.command {
        Command::Gen { out } => {
            let d = gen_clusters(&cfg.data)?;
            std::fs::create_dir_all(&out)?;
            for (name, set) in DATA_FILES.iter().zip([&d.train, &d.val, &d.abnormal]) {
                save_dataset(&out.join(name), set)?;
            }
            eprintln!(
                "wrote {} train, {} val, {} abnormal rows to {}",
                d.train.len(),
                d.val.len(),
                d.abnormal.len(),
                out.display()
            );
        }
        Command::Train { data, out } => {
            let d = datasets(&cfg, data.as_deref())?;
            if d.train.dim() != cfg.data.n0 {
                bail!(
                    "training rows have {} values but data.n0 = {}",
                    d.train.dim(),
                    cfg.data.n0
                );
            }
            let (extractor, head) = init_model(&cfg)?;
            let outcome = train(extractor, head, &d.train, &d.val, &cfg.train)?;
            save_model(&out, &outcome.extractor, &outcome.head)?;
            write_json(
                None,
                &TrainingSummary {
                    epochs: outcome.history.len() - 1,
                    initial_accuracy: outcome.initial_accuracy(),
                    final_accuracy: outcome.final_accuracy(),
                    final_loss: outcome.history.last().map_or(f64::NAN, |r| r.loss),
                },
            )?;
        }
        Command::Convert { model, data, out } => {
            let m = load_model(&model)?;
            let d = datasets(&cfg, data.as_deref())?;
            let set = fit_boundaries(&m.extractor, &m.head, &d.train, &cfg.detector.fit)?;
            save_detector(&out, &set)?;
            eprintln!(
                "fitted {} class boundaries in {} dimensions",
                set.boundaries().len(),
                set.dim()
            );
        }
        Command::Bounds {
            model,
            detector,
            data,
            out,
        } => {
            let m = load_model(&model)?;
            let set = load_detector(&detector)?;
            check_compatible(&m, &set)?;
            let d = datasets(&cfg, data.as_deref())?;
            let predicted = classify(&m.head, &m.extractor.forward(d.val.x())?)?;
            let alpha = 1.0 - d.val.accuracy(&predicted);
            let bounds = compute_bounds(&set, alpha, &cfg.detector.mc)?;
            write_json(out.as_deref(), &bounds)?;
        }
        Command::Capacity { out } => {
            let csv = fig4_capacity(&cfg.figures)?;
            match out {
                Some(p) => std::fs::write(p, csv)?,
                None => io::stdout().lock().write_all(csv.as_bytes())?,
            }
        }
        Command::Simulate { out } => {
            for p in simulate(&cfg, &out)? {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Monitor {
            model,
            detector,
            input,
            bounds,
            alarms_only,
        } => {
            let m = load_model(&model)?;
            let set = load_detector(&detector)?;
            let chart = match bounds {
                Some(p) => {
                    let b: DetectorBounds = serde_json::from_str(&std::fs::read_to_string(&p)?)
                        .with_context(|| format!("reading {}", p.display()))?;
                    chart_from_bounds(&cfg.chart, &b, cfg.scenario.fpr_floor)?
                }
                None => cfg.chart.clone(),
            };
            let reader: Box<dyn BufRead> = match input {
                Some(p) if p.as_os_str() != "-" => Box::new(BufReader::new(
                    File::open(&p).with_context(|| format!("opening {}", p.display()))?,
                )),
                _ => Box::new(io::stdin().lock()),
            };
            let mut out = BufWriter::new(io::stdout().lock());
            let summary = monitor(
                &m,
                &set,
                &chart,
                reader,
                &mut out,
                MonitorOptions { alarms_only },
            )?;
            eprintln!(
                "{} rows, {} flagged abnormal, {} alarms",
                summary.rows,
                summary.abnormal_rows,
                summary.alarms.len()
            );
        }
        Command::Report { out, project } => {
            let report = run_pipeline(&cfg)?;
            write_json(out.as_deref(), &report)?;
            if let Some(p) = project {
                // same seeds, so this is the model the report was built from
                let d = gen_clusters(&cfg.data)?;
                let (extractor, head) = init_model(&cfg)?;
                let trained = train(extractor, head, &d.train, &d.val, &cfg.train)?;
                let points = project_system(&trained.extractor, &trained.head, &d.val)?;
                write_projection_csv(BufWriter::new(File::create(&p)?), &points)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<zbqd::Error>() {
                Some(zbqd::Error::NotDetectable { .. }) => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
