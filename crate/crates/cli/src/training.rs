//! `train` subcommand: dataset, model and optimizer from a config, metrics to disk.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tekfac::optimizer::{lr_schedule, train_step, Split};
use tekfac::{DenseNet, Optimizer, TrainReport};

use crate::config::{DatasetSource, ExperimentConfig};
use crate::dataset::{generate_synthetic, load_csv, Dataset};
use crate::error::{HarnessError, Result};

/// Independent random streams derived from the config seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Data = 0,
    Init = 1,
    Shuffle = 2,
    Labels = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match config.dataset {
        DatasetSource::Synthetic => generate_synthetic(&config.synthetic_spec(), config.seed),
        DatasetSource::Csv => {
            let path = config
                .csv_path
                .as_deref()
                .ok_or_else(|| HarnessError::Config("dataset = \"csv\" needs csv_path".into()))?;
            let data = load_csv(path, Some(config.classes))?;
            let split_seed = rand::Rng::random(&mut stream_rng(config.seed, Stream::Data));
            Ok(data.with_stratified_split(config.test_fraction, split_seed))
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub net: DenseNet,
    pub steps: usize,
    pub summary: String,
}

/// Trains on `data` and records metrics.
///
/// Evaluations on the full train and test splits happen before the first
/// step and after every epoch; a run cut short by `max_steps` gets a final
/// evaluation as well.
pub fn train(config: &ExperimentConfig, data: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    let opt_config = config.optimizer_config();
    let schedule = config.schedule();
    let widths = config.widths(data.feature_count(), data.class_count());
    let mut net = DenseNet::random(
        &widths,
        config.activation,
        &mut stream_rng(config.seed, Stream::Init),
    )?;
    let mut optimizer = Optimizer::new(config.method, &net);
    let mut shuffle_rng = stream_rng(config.seed, Stream::Shuffle);
    let mut label_rng = stream_rng(config.seed, Stream::Labels);

    let (train_x, train_y) = data.subset(Split::Train);
    let (test_x, test_y) = data.subset(Split::Test);
    if train_y.is_empty() {
        return Err(HarnessError::Config("training split is empty".into()));
    }

    let start = Instant::now();
    let elapsed = || {
        if config.wall_clock {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    };
    let mut report = TrainReport::default();
    let evaluate =
        |net: &DenseNet, report: &mut TrainReport, step: usize, epoch: usize| -> Result<()> {
            report.push_eval(
                step,
                epoch,
                Split::Train,
                elapsed(),
                net.evaluate(&train_x, &train_y)?,
            );
            if !test_y.is_empty() {
                report.push_eval(
                    step,
                    epoch,
                    Split::Test,
                    elapsed(),
                    net.evaluate(&test_x, &test_y)?,
                );
            }
            Ok(())
        };
    evaluate(&net, &mut report, 0, 0)?;

    let budget = config.max_steps.unwrap_or(usize::MAX);
    let mut step = 0;
    let mut order: Vec<usize> = (0..train_y.len()).collect();
    'epochs: for epoch in 0..config.epochs {
        if step >= budget {
            break;
        }
        let lr = lr_schedule(epoch, &opt_config);
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            if step >= budget {
                evaluate(&net, &mut report, step, epoch)?;
                break 'epochs;
            }
            let x = train_x.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| train_y[i]).collect();
            let outcome = train_step(
                &mut net,
                &mut optimizer,
                &x,
                &y,
                lr,
                &opt_config,
                &schedule,
                step,
                &mut label_rng,
            )?;
            report.push_step(step, epoch, elapsed(), &outcome);
            step += 1;
        }
        evaluate(&net, &mut report, step, epoch + 1)?;
    }

    let summary = summarize(config, &report, step, elapsed());
    Ok(TrainOutcome {
        report,
        net,
        steps: step,
        summary,
    })
}

fn summarize(
    config: &ExperimentConfig,
    report: &TrainReport,
    steps: usize,
    wall_ms: f64,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "method: {}", config.method);
    let _ = writeln!(s, "seed: {}", config.seed);
    let _ = writeln!(s, "steps: {steps}");
    for split in [Split::Train, Split::Test] {
        if let Some(r) = report.last_eval(split) {
            let _ = writeln!(s, "final_{}_loss: {}", split.name(), r.loss);
            let _ = writeln!(s, "final_{}_accuracy: {}", split.name(), r.accuracy);
        }
    }
    let _ = writeln!(s, "wall_ms: {wall_ms}");
    s
}

/// Paths written by [`run_training`].
#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub metrics: PathBuf,
    pub summary: PathBuf,
    pub outcome: TrainOutcome,
}

/// Loads the dataset, trains, and writes `metrics.csv` and `summary.txt` into
/// the configured output directory.
pub fn run_training(config: &ExperimentConfig) -> Result<TrainArtifacts> {
    config.validate()?;
    let data = load_dataset(config)?;
    let outcome = train(config, &data)?;
    let dir = &config.output;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let metrics = dir.join("metrics.csv");
    let summary = dir.join("summary.txt");
    write(&metrics, &outcome.report.to_csv())?;
    write(&summary, &outcome.summary)?;
    Ok(TrainArtifacts {
        metrics,
        summary,
        outcome,
    })
}

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}
