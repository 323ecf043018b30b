use std::path::{Path, PathBuf};

use rckf_core::filter::FilterRegistry;
use rckf_core::metrics::MetricsReport;
use rckf_core::scenario::{run_variant, simulate_truth, synthesize_measurements, FilterInputs, ScenarioConfig};

use crate::bench::{bench, TimingReport};
use crate::config::ConfigFile;
use crate::error::{simulation, CliError};
use crate::experiment::{
    failure_rows, matrix_rows, summary, CellResult, ExperimentMatrix, FAILURE_HEADER, MATRIX_HEADER, SUMMARY_HEADER,
};
use crate::output::{fmt_f64, read_measurements, write_measurements, write_metrics, write_rows, write_states};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct GlobalOpts {
    /// `None` uses the shipped default config.
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub quiet: bool,
}

impl GlobalOpts {
    pub fn load(&self) -> Result<(ConfigFile, ScenarioConfig), CliError> {
        let file = ConfigFile::load(self.config.as_deref())?;
        let mut cfg = file.to_scenario()?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok((file, cfg))
    }

    fn out(&self, name: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out_dir).map_err(CliError::io(&self.out_dir))?;
        Ok(self.out_dir.join(name))
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

/// Writes `truth.csv` and `measurements.csv`; returns the row count.
pub fn cmd_simulate(opts: &GlobalOpts) -> Result<usize, CliError> {
    let (_, cfg) = opts.load()?;
    let truth = simulate_truth(&cfg).map_err(simulation)?;
    let (_, corrupted) = synthesize_measurements(&truth, &cfg).map_err(simulation)?;
    let truth_path = opts.out("truth.csv")?;
    let meas_path = opts.out("measurements.csv")?;
    write_states(&truth_path, &truth.times, &truth.states)?;
    write_measurements(&meas_path, &truth.times, &corrupted)?;
    opts.say(format!(
        "wrote {} rows to {} and {}",
        truth.times.len(),
        truth_path.display(),
        meas_path.display()
    ));
    Ok(truth.times.len())
}

/// Runs one filter and writes `estimates_<filter>.csv` and
/// `metrics_<filter>.csv`. Truth is simulated from the config; the
/// measurements come from `measurements` when given.
pub fn cmd_estimate(opts: &GlobalOpts, filter: &str, measurements: Option<&Path>) -> Result<MetricsReport, CliError> {
    let (_, cfg) = opts.load()?;
    let registry = FilterRegistry::with_builtins(cfg.huber).map_err(|e| CliError::Config(e.to_string()))?;
    let name = registry.get(filter).map_err(|e| CliError::Usage(e.to_string()))?.name().to_string();
    let truth = simulate_truth(&cfg).map_err(simulation)?;
    let corrupted = match measurements {
        Some(path) => read_measurements(path, &truth.times)?,
        None => synthesize_measurements(&truth, &cfg).map_err(simulation)?.1,
    };
    let prepared = FilterInputs::prepare(&cfg, &truth, &corrupted);
    let run = run_variant(&cfg, &registry, &name, &prepared)
        .map_err(simulation)?
        .map_err(|e| CliError::Divergence {
            filter: name.clone(),
            step: e.step,
            reason: e.source.to_string(),
        })?;
    let estimates = run.estimates();
    let report = MetricsReport::compute(&name, &truth.states, &estimates, &corrupted)
        .map_err(|e| CliError::Simulation(e.to_string()))?;
    write_states(&opts.out(&format!("estimates_{name}.csv"))?, &truth.times, &estimates)?;
    write_metrics(&opts.out(&format!("metrics_{name}.csv"))?, &report)?;
    for v in &report.variables {
        let e1 = v.epsilon1.map(|e| format!("{e:.6}")).unwrap_or_else(|| "-".into());
        opts.say(format!("{name} {:>5}  epsilon1 {e1:>10}  epsilon2 {:.6}", v.variable.name(), v.epsilon2));
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub matrix: ExperimentMatrix,
    pub results: Vec<CellResult>,
}

/// Runs the full matrix for `seeds` consecutive seeds starting at the
/// config (or `--seed`) seed and writes `matrix.csv`, `summary.csv` and
/// `failures.csv`.
pub fn cmd_experiment(opts: &GlobalOpts, seeds: usize, timing: bool) -> Result<ExperimentOutcome, CliError> {
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let (file, cfg) = opts.load()?;
    let base = cfg.seed;
    let seed_list: Vec<u64> = (0..seeds as u64).map(|i| base.wrapping_add(i)).collect();
    let matrix = ExperimentMatrix::standard(cfg, file.outliers, seed_list);
    let results = matrix.run(opts.jobs)?;

    write_rows(&opts.out("matrix.csv")?, &MATRIX_HEADER, matrix_rows(&results, timing))?;
    let rows = summary(&matrix, &results);
    write_rows(&opts.out("summary.csv")?, &SUMMARY_HEADER, rows.iter().map(|r| r.to_record()))?;
    let failures = failure_rows(&results);
    write_rows(&opts.out("failures.csv")?, &FAILURE_HEADER, failures.iter().cloned())?;

    for r in rows.iter().filter(|r| r.indicator.name() == "epsilon1") {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        let imp = r.improvement().map(|v| format!("{:+.1}%", 100.0 * v)).unwrap_or_else(|| "-".into());
        opts.say(format!(
            "{:>15} {:>6} {:>5}  ckf {:>8}  rckf {:>8}  {imp}",
            r.noise.name(),
            crate::experiment::manner_name(r.manner),
            r.variable.name(),
            f(r.ckf),
            f(r.rckf)
        ));
    }
    for f in &failures {
        eprintln!("cell {}/{}/{} seed {} failed: {}", f[0], f[1], f[2], f[3], f[4]);
    }
    if !results.iter().any(CellResult::any_ok) {
        return Err(CliError::NoCellSucceeded(results.len()));
    }
    Ok(ExperimentOutcome { matrix, results })
}

/// Times CKF and RCKF updates and writes `timing.csv`.
pub fn cmd_bench(opts: &GlobalOpts, steps: usize) -> Result<Vec<TimingReport>, CliError> {
    let (_, cfg) = opts.load()?;
    let reports = bench(&cfg, &["ckf", "rckf"], steps)?;
    write_rows(
        &opts.out("timing.csv")?,
        &["filter", "mean_ms", "p50_ms", "p99_ms", "steps"],
        reports.iter().map(|r| {
            vec![
                r.variant.clone(),
                fmt_f64(r.mean_ms),
                fmt_f64(r.p50_ms),
                fmt_f64(r.p99_ms),
                r.steps.to_string(),
            ]
        }),
    )?;
    opts.say(format!("{:>6} {:>10} {:>10} {:>10} {:>7}", "filter", "mean ms", "p50 ms", "p99 ms", "steps"));
    for r in &reports {
        opts.say(format!(
            "{:>6} {:>10.4} {:>10.4} {:>10.4} {:>7}",
            r.variant, r.mean_ms, r.p50_ms, r.p99_ms, r.steps
        ));
    }
    Ok(reports)
}
