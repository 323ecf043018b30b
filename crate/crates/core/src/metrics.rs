//! Estimation accuracy indicators.
//!
//! `epsilon1` compares the estimation error with the raw measurement error
//! (below one means the filter beats the sensor); `epsilon2` is the RMS
//! relative estimation error.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::machine::{MachineState, Measurement};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("variable {0} has no measurement channel")]
    NoMeasurementChannel(Variable),
    #[error("measurement error is identically zero")]
    ZeroDenominator,
    #[error("true value is zero at index {0}")]
    ZeroTruthValue(usize),
    #[error("reports come from different runs: {0}")]
    MismatchedRuns(String),
    #[error("empty series")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Delta,
    Omega,
    EqPrime,
    EdPrime,
}

impl Variable {
    pub const ALL: [Variable; 4] = [Variable::Delta, Variable::Omega, Variable::EqPrime, Variable::EdPrime];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Delta => "delta",
            Variable::Omega => "omega",
            Variable::EqPrime => "eqp",
            Variable::EdPrime => "edp",
        }
    }

    pub fn is_measured(self) -> bool {
        matches!(self, Variable::Delta | Variable::Omega)
    }

    /// Value of this variable in metric convention (`ω = 1 + Δω`).
    pub fn of_state(self, s: &MachineState) -> f64 {
        match self {
            Variable::Delta => s.delta,
            Variable::Omega => 1.0 + s.delta_omega,
            Variable::EqPrime => s.e_q_prime,
            Variable::EdPrime => s.e_d_prime,
        }
    }

    pub fn of_measurement(self, m: &Measurement) -> Option<f64> {
        match self {
            Variable::Delta => Some(m.delta_z),
            Variable::Omega => Some(m.omega_z),
            _ => None,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn same_len(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        Err(MetricsError::LengthMismatch(a, b))
    } else if a == 0 {
        Err(MetricsError::Empty)
    } else {
        Ok(())
    }
}

/// `sqrt(Σ(x̂ − x)²) / sqrt(Σ(z − x)²)`.
pub fn epsilon1(estimates: &[f64], truth: &[f64], measurements: &[f64]) -> Result<f64, MetricsError> {
    same_len(estimates.len(), truth.len())?;
    same_len(measurements.len(), truth.len())?;
    let num: f64 = estimates.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum();
    let den: f64 = measurements.iter().zip(truth).map(|(z, t)| (z - t).powi(2)).sum();
    if den == 0.0 {
        return Err(MetricsError::ZeroDenominator);
    }
    Ok(num.sqrt() / den.sqrt())
}

/// `sqrt((1/S) Σ((x̂ − x)/x)²)`.
pub fn epsilon2(estimates: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    same_len(estimates.len(), truth.len())?;
    let mut acc = 0.0;
    for (i, (e, t)) in estimates.iter().zip(truth).enumerate() {
        if *t == 0.0 {
            return Err(MetricsError::ZeroTruthValue(i));
        }
        acc += ((e - t) / t).powi(2);
    }
    Ok((acc / truth.len() as f64).sqrt())
}

/// Removes 2π jumps between consecutive samples.
pub fn unwrap_angles(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &v in series {
        if let Some(p) = prev {
            let mut jump = v - p;
            while jump > PI {
                offset -= 2.0 * PI;
                jump -= 2.0 * PI;
            }
            while jump < -PI {
                offset += 2.0 * PI;
                jump += 2.0 * PI;
            }
        }
        prev = Some(v);
        out.push(v + offset);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariableMetrics {
    pub variable: Variable,
    /// `None` for unmeasured variables.
    pub epsilon1: Option<f64>,
    pub epsilon2: f64,
}

/// Both indicators for every state variable of one filter run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub filter: String,
    pub s_m: usize,
    pub variables: Vec<VariableMetrics>,
}

impl MetricsReport {
    /// Indicators over steps `1..` (the initial guess at step 0 is excluded).
    pub fn compute(
        filter: &str,
        truth: &[MachineState],
        estimates: &[MachineState],
        measurements: &[Measurement],
    ) -> Result<Self, MetricsError> {
        same_len(truth.len(), estimates.len())?;
        same_len(truth.len(), measurements.len())?;
        if truth.len() < 2 {
            return Err(MetricsError::Empty);
        }
        let mut variables = Vec::with_capacity(4);
        for var in Variable::ALL {
            let mut t: Vec<f64> = truth[1..].iter().map(|s| var.of_state(s)).collect();
            let mut e: Vec<f64> = estimates[1..].iter().map(|s| var.of_state(s)).collect();
            if var == Variable::Delta {
                t = unwrap_angles(&t);
                e = unwrap_angles(&e);
            }
            let (t, e) = (&t[..], &e[..]);
            let epsilon1 = if var.is_measured() {
                let z: Vec<f64> = measurements[1..]
                    .iter()
                    .map(|m| var.of_measurement(m).expect("measured variable"))
                    .collect();
                Some(epsilon1(e, t, &z)?)
            } else {
                None
            };
            variables.push(VariableMetrics {
                variable: var,
                epsilon1,
                epsilon2: epsilon2(e, t)?,
            });
        }
        Ok(Self {
            filter: filter.to_string(),
            s_m: truth.len() - 1,
            variables,
        })
    }

    pub fn get(&self, var: Variable) -> Option<&VariableMetrics> {
        self.variables.iter().find(|v| v.variable == var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariableImprovement {
    pub variable: Variable,
    pub epsilon1: Option<f64>,
    pub epsilon2: Option<f64>,
}

/// `(reference − candidate) / reference`, defined when `reference > 0`.
pub fn relative_improvement(reference: f64, candidate: f64) -> Option<f64> {
    (reference > 0.0).then(|| (reference - candidate) / reference)
}

/// Relative reduction of each indicator going from `ckf` to `rckf`.
pub fn improvement_report(ckf: &MetricsReport, rckf: &MetricsReport) -> Result<Vec<VariableImprovement>, MetricsError> {
    if ckf.s_m != rckf.s_m {
        return Err(MetricsError::MismatchedRuns(format!("S_M {} vs {}", ckf.s_m, rckf.s_m)));
    }
    let vars_a: Vec<Variable> = ckf.variables.iter().map(|v| v.variable).collect();
    let vars_b: Vec<Variable> = rckf.variables.iter().map(|v| v.variable).collect();
    if vars_a != vars_b {
        return Err(MetricsError::MismatchedRuns("variable sets differ".into()));
    }
    Ok(ckf
        .variables
        .iter()
        .zip(&rckf.variables)
        .map(|(a, b)| VariableImprovement {
            variable: a.variable,
            epsilon1: match (a.epsilon1, b.epsilon1) {
                (Some(x), Some(y)) => relative_improvement(x, y),
                _ => None,
            },
            epsilon2: relative_improvement(a.epsilon2, b.epsilon2),
        })
        .collect())
}
