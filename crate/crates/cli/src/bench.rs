//! Per-step update timing.

use std::time::Instant;

use nalgebra::DVector;

use rckf_core::filter::{time_predict, FilterRegistry, UpdateStrategy};
use rckf_core::machine::as_process_model;
use rckf_core::scenario::{filter_measurement_covariance, simulate_truth, synthesize_measurements, FilterInputs, ScenarioConfig};

use crate::error::{simulation, CliError};

pub const WARMUP_STEPS: usize = 100;
pub const MIN_STEPS: usize = 100;

/// Update-time statistics of one filter, in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub variant: String,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub steps: usize,
}

impl TimingReport {
    pub fn from_nanos(variant: &str, nanos: &[u64]) -> Self {
        let mut ms: Vec<f64> = nanos.iter().map(|&n| n as f64 / 1e6).collect();
        ms.sort_by(f64::total_cmp);
        let steps = ms.len();
        let pick = |q: f64| {
            if steps == 0 {
                0.0
            } else {
                ms[((q * steps as f64).ceil() as usize).clamp(1, steps) - 1]
            }
        };
        Self {
            variant: variant.to_string(),
            mean_ms: if steps == 0 { 0.0 } else { ms.iter().sum::<f64>() / steps as f64 },
            p50_ms: pick(0.50),
            p99_ms: pick(0.99),
            steps,
        }
    }
}

/// Times the measurement update of every variant on identical inputs.
///
/// The reference trajectory is driven by the first variant; at each step
/// all variants update the same prediction, in an order that rotates per
/// step. Only the update call is inside the timed region, and the first
/// [`WARMUP_STEPS`] steps are discarded.
pub fn bench(cfg: &ScenarioConfig, variants: &[&str], steps: usize) -> Result<Vec<TimingReport>, CliError> {
    if steps < MIN_STEPS {
        return Err(CliError::Usage(format!("--steps must be at least {MIN_STEPS}, got {steps}")));
    }
    if variants.is_empty() {
        return Err(CliError::Usage("no filter variants to time".into()));
    }
    let registry = FilterRegistry::with_builtins(cfg.huber).map_err(|e| CliError::Config(e.to_string()))?;
    let strategies: Vec<_> = variants
        .iter()
        .map(|v| registry.get(v).map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<_, _>>()?;

    let total = steps + WARMUP_STEPS;
    let mut cfg = cfg.clone();
    cfg.t_end = cfg.t_end.max(total as f64 * cfg.dt);
    let truth = simulate_truth(&cfg).map_err(simulation)?;
    let (_, corrupted) = synthesize_measurements(&truth, &cfg).map_err(simulation)?;
    let prepared = FilterInputs::prepare(&cfg, &truth, &corrupted);
    let model = as_process_model(cfg.machine, cfg.dt, cfg.torque_mode).map_err(|e| CliError::Config(e.to_string()))?;

    let mut nanos = vec![Vec::with_capacity(steps); strategies.len()];
    let mut state = prepared.init.clone();
    for j in 0..total {
        let diverged = |step: usize, filter: &str, reason: String| CliError::Divergence {
            filter: filter.to_string(),
            step,
            reason,
        };
        let pred = time_predict(&state, &model, &prepared.inputs[j], &prepared.q)
            .map_err(|e| diverged(j + 1, variants[0], e.to_string()))?;
        let u: &DVector<f64> = &prepared.inputs[j + 1];
        let z = &prepared.measurements[j];
        let r = filter_measurement_covariance(&cfg, &pred.x_hat, u);
        let mut next = None;
        for offset in 0..strategies.len() {
            let i = (j + offset) % strategies.len();
            let strategy: &dyn UpdateStrategy = strategies[i].as_ref();
            let started = Instant::now();
            let outcome = strategy.update(&pred, z, &model, u, &r);
            let elapsed = started.elapsed().as_nanos() as u64;
            let outcome = outcome.map_err(|e| diverged(j + 1, variants[i], e.to_string()))?;
            if j >= WARMUP_STEPS {
                nanos[i].push(elapsed);
            }
            if i == 0 {
                next = Some(outcome.state);
            }
        }
        state = next.expect("reference variant updated");
    }
    Ok(variants
        .iter()
        .zip(&nanos)
        .map(|(v, n)| TimingReport::from_nanos(v, n))
        .collect())
}
