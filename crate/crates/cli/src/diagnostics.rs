//! `diagnose` subcommand: exact Fisher blocks of small random networks compared
//! with the four Kronecker-factored approximations built from the same batch.
//!
//! `diagnostics.csv` layout, one row per trial, layer and method:
//!
//! ```text
//! trial,layer,method,frobenius_error,relative_error,trace_fim,trace_approx
//! ```
//!
//! `snapshots.csv` holds each layer's curvature state after one refresh with
//! the configured damping, in long form:
//!
//! ```text
//! trial,layer,method,sigma,lambda,quantity,index,value
//! ```
//!
//! where `quantity` is `in_eigenvalue`, `out_eigenvalue` or `theta`.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use tekfac::approx::{BlockApproximation, StateSnapshot};
use tekfac::fim::{approximation_error, exact_block_fim};
use tekfac::network::sample_model_labels;
use tekfac::{DenseNet, FisherFlavor, LayerGradientBatch, Matrix, Method, MethodState};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::training::write;

/// Slack allowed on the error orderings.
pub const ORDERING_SLACK: f64 = 1e-10;

pub const DIAGNOSTICS_HEADER: &str =
    "trial,layer,method,frobenius_error,relative_error,trace_fim,trace_approx";
pub const SNAPSHOT_HEADER: &str = "trial,layer,method,sigma,lambda,quantity,index,value";

#[derive(Debug, Clone, PartialEq)]
pub struct DiagRecord {
    pub trial: usize,
    pub layer: usize,
    pub method: Method,
    pub frobenius_error: f64,
    pub relative_error: f64,
    pub trace_fim: f64,
    pub trace_approx: f64,
}

/// A row where a corrected method lost to its naive counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub trial: usize,
    pub layer: usize,
    pub corrected: Method,
    pub corrected_error: f64,
    pub naive_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsReport {
    pub records: Vec<DiagRecord>,
    pub snapshots: Vec<(usize, usize, StateSnapshot)>,
    pub violations: Vec<Violation>,
}

impl DiagnosticsReport {
    pub fn error(&self, trial: usize, layer: usize, method: Method) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.trial == trial && r.layer == layer && r.method == method)
            .map(|r| r.frobenius_error)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(DIAGNOSTICS_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.trial,
                r.layer,
                r.method,
                r.frobenius_error,
                r.relative_error,
                r.trace_fim,
                r.trace_approx
            );
        }
        out
    }

    pub fn snapshots_csv(&self) -> String {
        let mut out = String::from(SNAPSHOT_HEADER);
        out.push('\n');
        for (trial, layer, s) in &self.snapshots {
            let quantities = [
                ("in_eigenvalue", &s.in_values),
                ("out_eigenvalue", &s.out_values),
                ("theta", &s.theta),
            ];
            for (name, values) in quantities {
                for (i, v) in values.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{trial},{layer},{},{},{},{name},{i},{v}",
                        s.method, s.sigma, s.lambda
                    );
                }
            }
        }
        out
    }
}

/// Per-layer curvature batches of one random network and input batch.
pub fn trial_batches<R: Rng>(
    config: &ExperimentConfig,
    rng: &mut R,
) -> Result<Vec<LayerGradientBatch>> {
    let widths = &config.diag_widths;
    let net = DenseNet::random(widths, config.activation, rng)?;
    let x = Matrix::from_fn(config.diag_batch, widths[0], |_, _| {
        rng.sample(StandardNormal)
    });
    let pass = net.forward(&x)?;
    let labels = match config.fisher {
        FisherFlavor::True => sample_model_labels(&pass.logits, rng)?,
        // Random inputs have no dataset labels; uniform ones stand in.
        FisherFlavor::Empirical => (0..config.diag_batch)
            .map(|_| rng.random_range(0..net.output_dim()))
            .collect(),
    };
    Ok(net.backward(&pass.cache, &labels)?)
}

fn diagnose_trial(config: &ExperimentConfig, trial: usize) -> Result<DiagnosticsReport> {
    let mut rng = crate::training::stream_rng(config.seed, crate::training::Stream::Data);
    rng.set_stream(1000 + trial as u64);
    let batches = trial_batches(config, &mut rng)?;
    let damping = config.optimizer_config().damping();

    let mut out = DiagnosticsReport::default();
    for (layer, batch) in batches.iter().enumerate() {
        let exact = exact_block_fim(batch)?;
        let fim_norm = exact.matrix().norm();
        for method in Method::ALL {
            let approx = BlockApproximation::from_batch(method, batch)?;
            let err = approximation_error(&exact, &approx.dense()?)?;
            out.records.push(DiagRecord {
                trial,
                layer,
                method,
                frobenius_error: err,
                relative_error: if fim_norm > 0.0 { err / fim_norm } else { err },
                trace_fim: exact.trace(),
                trace_approx: approx.trace(),
            });

            let mut state = MethodState::new(method);
            state.refresh_factors(batch, config.beta2)?;
            state.refresh_eigenbasis(damping)?;
            state.refresh_rescaling(batch, config.beta1, damping)?;
            if let Some(s) = state.snapshot() {
                out.snapshots.push((trial, layer, s));
            }
        }
        for (corrected, naive) in [
            (Method::Tekfac, Method::Tkfac),
            (Method::Ekfac, Method::Kfac),
        ] {
            let ce = out.error(trial, layer, corrected).unwrap_or(f64::NAN);
            let ne = out.error(trial, layer, naive).unwrap_or(f64::NAN);
            if !(ce <= ne + ORDERING_SLACK) {
                out.violations.push(Violation {
                    trial,
                    layer,
                    corrected,
                    corrected_error: ce,
                    naive_error: ne,
                });
            }
        }
    }
    Ok(out)
}

/// Runs `trials` independent trials in parallel and merges them by trial index.
pub fn run_diagnostics(config: &ExperimentConfig, trials: usize) -> Result<DiagnosticsReport> {
    config.validate()?;
    let parts: Vec<DiagnosticsReport> = (0..trials)
        .into_par_iter()
        .map(|t| diagnose_trial(config, t))
        .collect::<Result<_>>()?;
    let mut merged = DiagnosticsReport::default();
    for p in parts {
        merged.records.extend(p.records);
        merged.snapshots.extend(p.snapshots);
        merged.violations.extend(p.violations);
    }
    Ok(merged)
}

pub struct DiagnosticsArtifacts {
    pub table: PathBuf,
    pub snapshots: PathBuf,
    pub report: DiagnosticsReport,
}

/// Writes both tables, then fails with a verification error if any ordering was violated.
pub fn run_and_write_diagnostics(
    config: &ExperimentConfig,
    trials: usize,
) -> Result<DiagnosticsArtifacts> {
    let report = run_diagnostics(config, trials)?;
    let dir = &config.output;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let table = dir.join("diagnostics.csv");
    let snapshots = dir.join("snapshots.csv");
    write(&table, &report.to_csv())?;
    write(&snapshots, &report.snapshots_csv())?;
    if let Some(v) = report.violations.first() {
        return Err(HarnessError::Verification(format!(
            "{} ordering violation(s); first: trial {} layer {}: {} error {} > {} error {}",
            report.violations.len(),
            v.trial,
            v.layer,
            v.corrected,
            v.corrected_error,
            match v.corrected {
                Method::Ekfac => Method::Kfac,
                _ => Method::Tkfac,
            },
            v.naive_error
        )));
    }
    Ok(DiagnosticsArtifacts {
        table,
        snapshots,
        report,
    })
}
