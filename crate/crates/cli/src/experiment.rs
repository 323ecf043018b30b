//! The noise × outlier-manner × filter comparison matrix.

use std::collections::BTreeMap;

use rayon::prelude::*;

use rckf_core::filter::FilterRegistry;
use rckf_core::metrics::{relative_improvement, MetricsReport, Variable};
use rckf_core::noise::NoiseKind;
use rckf_core::scenario::{run_scenario_with, NoiseConfig, ScenarioConfig};

use crate::config::{MannerKey, OutlierSection};
use crate::error::CliError;
use crate::output::{fmt_f64, fmt_opt};

pub const MATRIX_HEADER: [&str; 8] = [
    "noise",
    "manner",
    "filter",
    "seed",
    "variable",
    "epsilon1",
    "epsilon2",
    "mean_step_ms",
];

pub const SUMMARY_HEADER: [&str; 7] = ["noise", "manner", "indicator", "variable", "ckf", "rckf", "improvement_pct"];

pub const FAILURE_HEADER: [&str; 5] = ["noise", "manner", "filter", "seed", "error"];

pub fn manner_name(m: MannerKey) -> &'static str {
    match m {
        MannerKey::None => "none",
        MannerKey::Single => "single",
        MannerKey::Window => "window",
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentMatrix {
    pub noises: Vec<NoiseKind>,
    pub manners: Vec<MannerKey>,
    pub variants: Vec<String>,
    pub seeds: Vec<u64>,
    pub template: ScenarioConfig,
    pub outliers: OutlierSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub noise: NoiseKind,
    pub manner: MannerKey,
    pub seed: u64,
}

/// Metrics of one filter in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub report: MetricsReport,
    pub mean_step_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub key: CellKey,
    /// Keyed by variant name; `Err` carries the failure message.
    pub variants: BTreeMap<String, Result<VariantResult, String>>,
}

impl CellResult {
    pub fn any_ok(&self) -> bool {
        self.variants.values().any(|v| v.is_ok())
    }
}

impl ExperimentMatrix {
    /// All four noise kinds under both outlier manners for CKF and RCKF.
    pub fn standard(template: ScenarioConfig, outliers: OutlierSection, seeds: Vec<u64>) -> Self {
        Self {
            noises: NoiseKind::ALL.to_vec(),
            manners: vec![MannerKey::Single, MannerKey::Window],
            variants: vec!["ckf".into(), "rckf".into()],
            seeds,
            template,
            outliers,
        }
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::with_capacity(self.noises.len() * self.manners.len() * self.seeds.len());
        for &noise in &self.noises {
            for &manner in &self.manners {
                for &seed in &self.seeds {
                    out.push(CellKey { noise, manner, seed });
                }
            }
        }
        out
    }

    pub fn scenario_for(&self, key: &CellKey) -> ScenarioConfig {
        let mut cfg = self.template.clone();
        let power = cfg.noise.power;
        cfg.noise = NoiseConfig::table(key.noise);
        cfg.noise.power = power;
        cfg.outliers = self.outliers.for_manner(key.manner);
        cfg.seed = key.seed;
        cfg.run = 0;
        cfg
    }

    pub fn run_cell(&self, registry: &FilterRegistry, key: CellKey) -> CellResult {
        let cfg = self.scenario_for(&key);
        let names: Vec<&str> = self.variants.iter().map(String::as_str).collect();
        let variants = match run_scenario_with(&cfg, registry, &names) {
            Err(e) => self.variants.iter().map(|v| (v.clone(), Err(e.to_string()))).collect(),
            Ok(rec) => rec
                .estimates
                .iter()
                .map(|(name, est)| {
                    let result = est.as_ref().map_err(|e| e.to_string()).and_then(|run| {
                        MetricsReport::compute(name, &rec.truth, &run.estimates(), &rec.corrupted)
                            .map(|report| VariantResult {
                                report,
                                mean_step_ms: run.mean_step_ms(),
                            })
                            .map_err(|e| e.to_string())
                    });
                    (name.clone(), result)
                })
                .collect(),
        };
        CellResult { key, variants }
    }

    /// Runs every cell on a pool of `jobs` threads. The output order is the
    /// cell order regardless of scheduling.
    pub fn run(&self, jobs: Option<usize>) -> Result<Vec<CellResult>, CliError> {
        let registry = FilterRegistry::with_builtins(self.template.huber).map_err(|e| CliError::Config(e.to_string()))?;
        for v in &self.variants {
            registry.get(v).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = jobs {
            builder = builder.num_threads(n.max(1));
        }
        let pool = builder.build().map_err(|e| CliError::Usage(e.to_string()))?;
        let cells = self.cells();
        let mut results: Vec<CellResult> =
            pool.install(|| cells.par_iter().map(|&key| self.run_cell(&registry, key)).collect());
        results.sort_by_key(|r| r.key);
        Ok(results)
    }
}

/// `matrix.csv` rows: one per cell, filter and state variable.
pub fn matrix_rows(results: &[CellResult], timing: bool) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for cell in results {
        for (name, res) in &cell.variants {
            let Ok(v) = res else { continue };
            for m in &v.report.variables {
                rows.push(vec![
                    cell.key.noise.name().to_string(),
                    manner_name(cell.key.manner).to_string(),
                    name.clone(),
                    cell.key.seed.to_string(),
                    m.variable.name().to_string(),
                    fmt_opt(m.epsilon1),
                    fmt_f64(m.epsilon2),
                    if timing { fmt_f64(v.mean_step_ms) } else { String::new() },
                ]);
            }
        }
    }
    rows
}

pub fn failure_rows(results: &[CellResult]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for cell in results {
        for (name, res) in &cell.variants {
            if let Err(msg) = res {
                rows.push(vec![
                    cell.key.noise.name().to_string(),
                    manner_name(cell.key.manner).to_string(),
                    name.clone(),
                    cell.key.seed.to_string(),
                    msg.clone(),
                ]);
            }
        }
    }
    rows
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Indicator {
    Epsilon1,
    Epsilon2,
}

impl Indicator {
    pub fn name(self) -> &'static str {
        match self {
            Indicator::Epsilon1 => "epsilon1",
            Indicator::Epsilon2 => "epsilon2",
        }
    }
}

/// Per-seed values of one indicator for one filter in one noise/manner group.
pub fn collect(
    results: &[CellResult],
    noise: NoiseKind,
    manner: MannerKey,
    filter: &str,
    indicator: Indicator,
    variable: Variable,
) -> Vec<f64> {
    results
        .iter()
        .filter(|c| c.key.noise == noise && c.key.manner == manner)
        .filter_map(|c| c.variants.get(filter)?.as_ref().ok())
        .filter_map(|v| {
            let m = v.report.get(variable)?;
            match indicator {
                Indicator::Epsilon1 => m.epsilon1,
                Indicator::Epsilon2 => Some(m.epsilon2),
            }
        })
        .collect()
}

/// One summary row: medians over seeds and the relative improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub noise: NoiseKind,
    pub manner: MannerKey,
    pub indicator: Indicator,
    pub variable: Variable,
    pub ckf: Option<f64>,
    pub rckf: Option<f64>,
}

impl SummaryRow {
    pub fn improvement(&self) -> Option<f64> {
        relative_improvement(self.ckf?, self.rckf?)
    }

    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.noise.name().to_string(),
            manner_name(self.manner).to_string(),
            self.indicator.name().to_string(),
            self.variable.name().to_string(),
            fmt_opt(self.ckf),
            fmt_opt(self.rckf),
            fmt_opt(self.improvement().map(|v| 100.0 * v)),
        ]
    }
}

/// Noise × manner × indicator × variable, CKF and RCKF side by side.
pub fn summary(matrix: &ExperimentMatrix, results: &[CellResult]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &noise in &matrix.noises {
        for &manner in &matrix.manners {
            for indicator in [Indicator::Epsilon1, Indicator::Epsilon2] {
                for variable in Variable::ALL {
                    if indicator == Indicator::Epsilon1 && !variable.is_measured() {
                        continue;
                    }
                    let med = |f: &str| median(&mut collect(results, noise, manner, f, indicator, variable));
                    rows.push(SummaryRow {
                        noise,
                        manner,
                        indicator,
                        variable,
                        ckf: med("ckf"),
                        rckf: med("rckf"),
                    });
                }
            }
        }
    }
    rows
}
