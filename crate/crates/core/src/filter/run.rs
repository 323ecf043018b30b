use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::{time_predict, FilterError, FilterState, ProcessModel, UpdateOutcome, UpdateStrategy};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("filter step {step}: {source}")]
pub struct StepError {
    pub step: usize,
    #[source]
    pub source: FilterError,
}

/// Estimates of one filter pass plus per-step wall time (prediction and
/// update, nanoseconds).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub states: Vec<FilterState>,
    pub step_nanos: Vec<u64>,
}

/// Runs predict/update over a measurement sequence.
///
/// `inputs` is sampled on the same grid as the states: `inputs[k]` is held
/// over the interval from step `k` to `k + 1` and is also the input at
/// which measurement `k` (taken at step `k`) is predicted. Hence
/// `measurements[j]` (at step `j + 1`) pairs with `inputs[j + 1]` and
/// `inputs.len() == measurements.len() + 1`.
///
/// `r_provider` receives the predicted state and the measurement-time
/// input and returns the measurement covariance for that step.
pub fn run_filter(
    model: &dyn ProcessModel,
    strategy: &dyn UpdateStrategy,
    init: FilterState,
    inputs: &[DVector<f64>],
    measurements: &[DVector<f64>],
    q: &DMatrix<f64>,
    r_provider: &dyn Fn(&FilterState, &DVector<f64>) -> DMatrix<f64>,
) -> Result<FilterRun, StepError> {
    run_filter_observed(model, strategy, init, inputs, measurements, q, r_provider, &mut |_, _, _| {})
}

/// [`run_filter`] with a callback receiving `(step, prediction, outcome)`
/// after every update.
#[allow(clippy::too_many_arguments)]
pub fn run_filter_observed(
    model: &dyn ProcessModel,
    strategy: &dyn UpdateStrategy,
    init: FilterState,
    inputs: &[DVector<f64>],
    measurements: &[DVector<f64>],
    q: &DMatrix<f64>,
    r_provider: &dyn Fn(&FilterState, &DVector<f64>) -> DMatrix<f64>,
    on_step: &mut dyn FnMut(usize, &FilterState, &UpdateOutcome),
) -> Result<FilterRun, StepError> {
    let expected_inputs = measurements.len() + 1;
    if !(inputs.len() == expected_inputs || (measurements.is_empty() && inputs.is_empty())) {
        return Err(StepError {
            step: 0,
            source: FilterError::DimensionMismatch {
                what: "input sequence",
                expected: expected_inputs,
                actual: inputs.len(),
            },
        });
    }
    let mut states = Vec::with_capacity(measurements.len() + 1);
    let mut step_nanos = Vec::with_capacity(measurements.len());
    let mut current = init;
    current.step_index = 0;
    states.push(current.clone());
    for (j, z) in measurements.iter().enumerate() {
        let step = j + 1;
        let wrap = |source| StepError { step, source };
        let started = Instant::now();
        let pred = time_predict(&current, model, &inputs[j], q).map_err(wrap)?;
        let u_meas = &inputs[j + 1];
        let r = r_provider(&pred, u_meas);
        let outcome = strategy.update(&pred, z, model, u_meas, &r).map_err(wrap)?;
        step_nanos.push(started.elapsed().as_nanos() as u64);
        on_step(step, &pred, &outcome);
        current = outcome.state;
        current.step_index = step;
        states.push(current.clone());
    }
    Ok(FilterRun { states, step_nanos })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::CkfStrategy;
    use crate::linear::LinearModel;

    #[test]
    fn empty_sequence_returns_initial_state() {
        let model = LinearModel::identity(2, 1);
        let init = FilterState::new(DVector::from_vec(vec![1.0, 2.0]), DMatrix::identity(2, 2));
        let run = run_filter(
            &model,
            &CkfStrategy,
            init.clone(),
            &[DVector::zeros(0)],
            &[],
            &DMatrix::zeros(2, 2),
            &|_, _| DMatrix::identity(1, 1),
        )
        .unwrap();
        assert_eq!(run.states, vec![init]);
        assert!(run.step_nanos.is_empty());
    }

    #[test]
    fn input_length_checked() {
        let model = LinearModel::identity(1, 1);
        let init = FilterState::new(DVector::zeros(1), DMatrix::identity(1, 1));
        let err = run_filter(
            &model,
            &CkfStrategy,
            init,
            &[DVector::zeros(0)],
            &[DVector::zeros(1)],
            &DMatrix::zeros(1, 1),
            &|_, _| DMatrix::identity(1, 1),
        )
        .unwrap_err();
        assert_eq!(err.step, 0);
    }

    #[test]
    fn step_errors_carry_index() {
        let model = LinearModel::identity(1, 1);
        let init = FilterState::new(DVector::zeros(1), DMatrix::identity(1, 1));
        let zs = vec![DVector::from_element(1, 0.1), DVector::from_element(1, f64::NAN)];
        let us = vec![DVector::zeros(0); 3];
        let err = run_filter(
            &model,
            &CkfStrategy,
            init,
            &us,
            &zs,
            &DMatrix::zeros(1, 1),
            &|_, _| DMatrix::identity(1, 1),
        )
        .unwrap_err();
        assert_eq!(err.step, 2);
        assert!(matches!(err.source, FilterError::NonFiniteState(_)));
    }
}
