//! Fourth-order (transient) synchronous machine model.
//!
//! State order is fixed as `[δ, Δω, E′q, E′d]` and input order as
//! `[T_m, E_f, U_t, φ]`. Angles are radians, everything else per unit.
//! Rotor speed is measured as `ω = 1 + Δω`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::ProcessModel;

pub const STATE_DIM: usize = 4;
pub const MEASUREMENT_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MachineError {
    #[error("invalid machine parameter `{key}`: {reason}")]
    InvalidParams { key: &'static str, reason: String },
    #[error("non-finite machine state")]
    NonFiniteState,
}

/// Generator constants. Reactances in p.u., time constants in seconds,
/// `omega_0` in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineParams {
    pub x_d: f64,
    pub x_d_prime: f64,
    pub x_q: f64,
    pub x_q_prime: f64,
    pub t_d0_prime: f64,
    pub t_q0_prime: f64,
    pub t_j: f64,
    pub d: f64,
    pub omega_0: f64,
}

impl Default for MachineParams {
    /// Example profile; not tied to any particular test system.
    fn default() -> Self {
        Self {
            x_d: 1.8,
            x_d_prime: 0.3,
            x_q: 1.7,
            x_q_prime: 0.55,
            t_d0_prime: 8.0,
            t_q0_prime: 0.4,
            t_j: 13.0,
            d: 2.0,
            omega_0: 2.0 * PI * 60.0,
        }
    }
}

impl MachineParams {
    pub fn validate(&self) -> Result<(), MachineError> {
        fn bad(key: &'static str, reason: &str) -> MachineError {
            MachineError::InvalidParams {
                key,
                reason: reason.to_string(),
            }
        }
        let all = [
            ("x_d", self.x_d),
            ("x_d_prime", self.x_d_prime),
            ("x_q", self.x_q),
            ("x_q_prime", self.x_q_prime),
            ("t_d0_prime", self.t_d0_prime),
            ("t_q0_prime", self.t_q0_prime),
            ("t_j", self.t_j),
            ("d", self.d),
            ("omega_0", self.omega_0),
        ];
        for (key, v) in all {
            if !v.is_finite() {
                return Err(bad(key, "must be finite"));
            }
        }
        if !(self.x_d_prime > 0.0) {
            return Err(bad("x_d_prime", "must be positive"));
        }
        if !(self.x_d > self.x_d_prime) {
            return Err(bad("x_d", "must exceed x_d_prime"));
        }
        if !(self.x_q_prime > 0.0) {
            return Err(bad("x_q_prime", "must be positive"));
        }
        if self.x_q < self.x_q_prime {
            return Err(bad("x_q", "must not be below x_q_prime"));
        }
        for (key, v) in [
            ("t_d0_prime", self.t_d0_prime),
            ("t_q0_prime", self.t_q0_prime),
            ("t_j", self.t_j),
            ("omega_0", self.omega_0),
        ] {
            if !(v > 0.0) {
                return Err(bad(key, "must be positive"));
            }
        }
        if self.d < 0.0 {
            return Err(bad("d", "must be non-negative"));
        }
        Ok(())
    }
}

/// How the electromagnetic torque is obtained from the air-gap power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TorqueMode {
    /// `T_e = P_e`.
    #[default]
    PowerEqualsTorque,
    /// `T_e = P_e / (1 + Δω)`.
    DivideBySpeed,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MachineState {
    pub delta: f64,
    pub delta_omega: f64,
    pub e_q_prime: f64,
    pub e_d_prime: f64,
}

impl MachineState {
    pub fn to_array(self) -> [f64; 4] {
        [self.delta, self.delta_omega, self.e_q_prime, self.e_d_prime]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            delta: a[0],
            delta_omega: a[1],
            e_q_prime: a[2],
            e_d_prime: a[3],
        }
    }

    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_row_slice(&self.to_array())
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::from_array([v[0], v[1], v[2], v[3]])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MachineInputs {
    pub t_m: f64,
    pub e_f: f64,
    pub u_t: f64,
    pub phi: f64,
}

impl MachineInputs {
    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_row_slice(&[self.t_m, self.e_f, self.u_t, self.phi])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            t_m: v[0],
            e_f: v[1],
            u_t: v[2],
            phi: v[3],
        }
    }
}

/// PMU measurement `[δ^z, ω^z, P_e^z]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurement {
    pub delta_z: f64,
    pub omega_z: f64,
    pub p_e_z: f64,
}

impl Measurement {
    pub fn to_array(self) -> [f64; 3] {
        [self.delta_z, self.omega_z, self.p_e_z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            delta_z: a[0],
            omega_z: a[1],
            p_e_z: a[2],
        }
    }

    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_row_slice(&self.to_array())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatorCurrents {
    pub i_d: f64,
    pub i_q: f64,
}

/// Measurement standard deviations. `sigma_u` is relative to `U_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSigmas {
    pub sigma_delta: f64,
    pub sigma_omega: f64,
    pub sigma_u: f64,
    pub sigma_phi: f64,
}

impl Default for MeasurementSigmas {
    fn default() -> Self {
        Self {
            sigma_delta: 2.0_f64.to_radians(),
            sigma_omega: 0.001,
            sigma_u: 0.001,
            sigma_phi: 0.1_f64.to_radians(),
        }
    }
}

pub fn stator_currents(state: &MachineState, inputs: &MachineInputs, params: &MachineParams) -> StatorCurrents {
    let (s, c) = (state.delta - inputs.phi).sin_cos();
    StatorCurrents {
        i_d: (state.e_q_prime - inputs.u_t * c) / params.x_d_prime,
        i_q: (inputs.u_t * s - state.e_d_prime) / params.x_q_prime,
    }
}

/// Active power delivered at the terminal.
pub fn electrical_power(state: &MachineState, inputs: &MachineInputs, params: &MachineParams) -> f64 {
    let angle = state.delta - inputs.phi;
    let (s, c) = angle.sin_cos();
    let u = inputs.u_t;
    let saliency = 1.0 / params.x_q_prime - 1.0 / params.x_d_prime;
    0.5 * u * u * (2.0 * angle).sin() * saliency + u * s * state.e_q_prime / params.x_d_prime
        - u * c * state.e_d_prime / params.x_q_prime
}

/// `(∂P_e/∂U_t, ∂P_e/∂φ)`.
pub fn electrical_power_partials(
    state: &MachineState,
    inputs: &MachineInputs,
    params: &MachineParams,
) -> (f64, f64) {
    let angle = state.delta - inputs.phi;
    let (s, c) = angle.sin_cos();
    let u = inputs.u_t;
    let saliency = 1.0 / params.x_q_prime - 1.0 / params.x_d_prime;
    let eq = state.e_q_prime / params.x_d_prime;
    let ed = state.e_d_prime / params.x_q_prime;
    let d_u = u * (2.0 * angle).sin() * saliency + s * eq - c * ed;
    let d_angle = u * u * (2.0 * angle).cos() * saliency + u * c * eq + u * s * ed;
    (d_u, -d_angle)
}

pub fn electromagnetic_torque(
    state: &MachineState,
    inputs: &MachineInputs,
    params: &MachineParams,
    mode: TorqueMode,
) -> f64 {
    let p_e = electrical_power(state, inputs, params);
    match mode {
        TorqueMode::PowerEqualsTorque => p_e,
        TorqueMode::DivideBySpeed => p_e / (1.0 + state.delta_omega),
    }
}

/// Right-hand side of the machine ODE, in state order.
pub fn state_derivative(
    state: &MachineState,
    inputs: &MachineInputs,
    params: &MachineParams,
    mode: TorqueMode,
) -> [f64; 4] {
    let currents = stator_currents(state, inputs, params);
    let t_e = electromagnetic_torque(state, inputs, params, mode);
    [
        params.omega_0 * state.delta_omega,
        (inputs.t_m - t_e - params.d * state.delta_omega) / params.t_j,
        (inputs.e_f - state.e_q_prime - (params.x_d - params.x_d_prime) * currents.i_d) / params.t_d0_prime,
        (-state.e_d_prime + (params.x_q - params.x_q_prime) * currents.i_q) / params.t_q0_prime,
    ]
}

fn axpy(x: &[f64; 4], k: &[f64; 4], h: f64) -> MachineState {
    MachineState::from_array([x[0] + h * k[0], x[1] + h * k[1], x[2] + h * k[2], x[3] + h * k[3]])
}

/// Classical RK4 step with the inputs held over the step.
pub fn rk4_step(
    state: &MachineState,
    inputs: &MachineInputs,
    params: &MachineParams,
    dt: f64,
    mode: TorqueMode,
) -> Result<MachineState, MachineError> {
    let x = state.to_array();
    let k1 = state_derivative(state, inputs, params, mode);
    let k2 = state_derivative(&axpy(&x, &k1, 0.5 * dt), inputs, params, mode);
    let k3 = state_derivative(&axpy(&x, &k2, 0.5 * dt), inputs, params, mode);
    let k4 = state_derivative(&axpy(&x, &k3, dt), inputs, params, mode);
    let mut next = [0.0; 4];
    for i in 0..4 {
        next[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let next = MachineState::from_array(next);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(MachineError::NonFiniteState)
    }
}

pub fn measure(state: &MachineState, inputs: &MachineInputs, params: &MachineParams) -> Measurement {
    Measurement {
        delta_z: state.delta,
        omega_z: 1.0 + state.delta_omega,
        p_e_z: electrical_power(state, inputs, params),
    }
}

/// Variance of the active-power channel propagated from the terminal
/// voltage magnitude and angle uncertainties.
pub fn power_variance(
    state: &MachineState,
    inputs: &MachineInputs,
    params: &MachineParams,
    sigmas: &MeasurementSigmas,
) -> f64 {
    let (d_u, d_phi) = electrical_power_partials(state, inputs, params);
    let sigma_u_abs = sigmas.sigma_u * inputs.u_t;
    d_u * d_u * sigma_u_abs * sigma_u_abs + d_phi * d_phi * sigmas.sigma_phi * sigmas.sigma_phi
}

/// Diagonal measurement covariance `diag(σ²_δ, σ²_ω, σ²_Pe)`.
pub fn measurement_covariance(
    state: &MachineState,
    inputs: &MachineInputs,
    params: &MachineParams,
    sigmas: &MeasurementSigmas,
) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(&[
        sigmas.sigma_delta * sigmas.sigma_delta,
        sigmas.sigma_omega * sigmas.sigma_omega,
        power_variance(state, inputs, params, sigmas),
    ]))
}

/// The machine discretized with RK4 at a fixed step, as a [`ProcessModel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineModel {
    pub params: MachineParams,
    pub dt: f64,
    pub torque_mode: TorqueMode,
}

pub fn as_process_model(params: MachineParams, dt: f64, torque_mode: TorqueMode) -> Result<MachineModel, MachineError> {
    params.validate()?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(MachineError::InvalidParams {
            key: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    Ok(MachineModel {
        params,
        dt,
        torque_mode,
    })
}

impl ProcessModel for MachineModel {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn measurement_dim(&self) -> usize {
        MEASUREMENT_DIM
    }

    fn transition(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let state = MachineState::from_slice(x.as_slice());
        let inputs = MachineInputs::from_slice(u.as_slice());
        match rk4_step(&state, &inputs, &self.params, self.dt, self.torque_mode) {
            Ok(next) => next.to_vector(),
            // the filter turns non-finite output into NonFiniteState
            Err(_) => DVector::from_element(STATE_DIM, f64::NAN),
        }
    }

    fn observe(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let state = MachineState::from_slice(x.as_slice());
        let inputs = MachineInputs::from_slice(u.as_slice());
        measure(&state, &inputs, &self.params).to_vector()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_state() -> MachineState {
        MachineState {
            delta: 0.8,
            delta_omega: 0.002,
            e_q_prime: 1.05,
            e_d_prime: 0.3,
        }
    }

    fn sample_inputs() -> MachineInputs {
        MachineInputs {
            t_m: 0.8,
            e_f: 2.0,
            u_t: 1.0,
            phi: 0.1,
        }
    }

    #[test]
    fn currents_vanish_on_aligned_emf() {
        let p = MachineParams::default();
        let inputs = sample_inputs();
        let mut s = sample_state();
        s.e_q_prime = inputs.u_t * (s.delta - inputs.phi).cos();
        assert!(stator_currents(&s, &inputs, &p).i_d.abs() < 1e-15);
        s.e_d_prime = inputs.u_t * (s.delta - inputs.phi).sin();
        assert!(stator_currents(&s, &inputs, &p).i_q.abs() < 1e-15);
    }

    #[test]
    fn power_zero_at_zero_angle() {
        let p = MachineParams::default();
        let inputs = sample_inputs();
        let s = MachineState {
            delta: inputs.phi,
            delta_omega: 0.0,
            e_q_prime: 1.1,
            e_d_prime: 0.0,
        };
        assert_eq!(electrical_power(&s, &inputs, &p), 0.0);
    }

    #[test]
    fn power_is_odd_in_angle_without_d_axis_emf() {
        let p = MachineParams::default();
        let inputs = MachineInputs {
            phi: 0.0,
            ..sample_inputs()
        };
        let mut s = sample_state();
        s.e_d_prime = 0.0;
        let plus = electrical_power(&s, &inputs, &p);
        s.delta = -s.delta;
        let minus = electrical_power(&s, &inputs, &p);
        assert!((plus + minus).abs() < 1e-15);
    }

    #[test]
    fn power_matches_terminal_identity() {
        let p = MachineParams::default();
        let s = sample_state();
        let inputs = sample_inputs();
        let cur = stator_currents(&s, &inputs, &p);
        let (sn, cs) = (s.delta - inputs.phi).sin_cos();
        let via_currents = inputs.u_t * sn * cur.i_d + inputs.u_t * cs * cur.i_q;
        assert!((via_currents - electrical_power(&s, &inputs, &p)).abs() < 1e-14);
    }

    #[test]
    fn derivative_rows() {
        let p = MachineParams::default();
        let mut s = sample_state();
        s.delta_omega = 0.0;
        let dx = state_derivative(&s, &sample_inputs(), &p, TorqueMode::PowerEqualsTorque);
        assert_eq!(dx[0], 0.0);

        s.delta_omega = 0.01;
        let low = state_derivative(&s, &sample_inputs(), &p, TorqueMode::PowerEqualsTorque)[1];
        let damped = MachineParams { d: p.d + 1.0, ..p };
        let high = state_derivative(&s, &sample_inputs(), &damped, TorqueMode::PowerEqualsTorque)[1];
        assert!(high < low);
    }

    #[test]
    fn torque_modes_differ_only_off_synchronous() {
        let p = MachineParams::default();
        let mut s = sample_state();
        s.delta_omega = 0.0;
        let a = electromagnetic_torque(&s, &sample_inputs(), &p, TorqueMode::PowerEqualsTorque);
        let b = electromagnetic_torque(&s, &sample_inputs(), &p, TorqueMode::DivideBySpeed);
        assert_eq!(a, b);
        s.delta_omega = 0.01;
        let c = electromagnetic_torque(&s, &sample_inputs(), &p, TorqueMode::DivideBySpeed);
        assert!((c - electrical_power(&s, &sample_inputs(), &p) / 1.01).abs() < 1e-15);
    }

    #[test]
    fn tiny_step_leaves_state_unchanged() {
        let p = MachineParams::default();
        let s = sample_state();
        let next = rk4_step(&s, &sample_inputs(), &p, 1e-12, TorqueMode::PowerEqualsTorque).unwrap();
        for (a, b) in next.to_array().iter().zip(s.to_array()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rk4_overflow_is_reported() {
        let p = MachineParams::default();
        let s = MachineState {
            delta_omega: 1e308,
            ..sample_state()
        };
        assert_eq!(
            rk4_step(&s, &sample_inputs(), &p, 1.0, TorqueMode::PowerEqualsTorque),
            Err(MachineError::NonFiniteState)
        );
    }

    #[test]
    fn measurement_channels() {
        let p = MachineParams::default();
        let mut s = sample_state();
        s.delta = 0.5;
        s.delta_omega = 0.0;
        let z = measure(&s, &sample_inputs(), &p);
        assert_eq!(z.delta_z, 0.5);
        assert_eq!(z.omega_z, 1.0);
        assert_eq!(z.p_e_z.to_bits(), electrical_power(&s, &sample_inputs(), &p).to_bits());
    }

    #[test]
    fn covariance_diagonal_values() {
        let p = MachineParams::default();
        let sig = MeasurementSigmas::default();
        let r = measurement_covariance(&sample_state(), &sample_inputs(), &p, &sig);
        // (2° in rad)² = 0.0349066² ≈ 1.21847e-3
        assert!((r[(0, 0)] - 1.21847e-3).abs() < 1e-8);
        assert!((sig.sigma_delta - 0.0349066).abs() < 1e-7);
        assert_eq!(r[(1, 1)], 1e-6);
        assert!(r[(2, 2)] > 0.0);
        assert_eq!(r[(0, 1)], 0.0);
        let silent = MeasurementSigmas {
            sigma_u: 0.0,
            sigma_phi: 0.0,
            ..sig
        };
        let r0 = measurement_covariance(&sample_state(), &sample_inputs(), &p, &silent);
        assert_eq!(r0[(2, 2)], 0.0);
    }

    #[test]
    fn partials_match_central_differences() {
        let p = MachineParams::default();
        let s = sample_state();
        let u = sample_inputs();
        let h = 1e-6;
        let pe = |inp: MachineInputs| electrical_power(&s, &inp, &p);
        let fd_u = (pe(MachineInputs { u_t: u.u_t + h, ..u }) - pe(MachineInputs { u_t: u.u_t - h, ..u })) / (2.0 * h);
        let fd_phi = (pe(MachineInputs { phi: u.phi + h, ..u }) - pe(MachineInputs { phi: u.phi - h, ..u })) / (2.0 * h);
        let (d_u, d_phi) = electrical_power_partials(&s, &u, &p);
        assert!((d_u - fd_u).abs() <= 1e-6 * d_u.abs());
        assert!((d_phi - fd_phi).abs() <= 1e-6 * d_phi.abs());
    }

    #[test]
    fn process_model_dimensions_and_delegation() {
        let m = as_process_model(MachineParams::default(), 0.02, TorqueMode::PowerEqualsTorque).unwrap();
        assert_eq!((m.state_dim(), m.measurement_dim()), (4, 3));
        let x = sample_state().to_vector();
        let u = sample_inputs().to_vector();
        let z = m.observe(&x, &u);
        assert_eq!(z, measure(&sample_state(), &sample_inputs(), &m.params).to_vector());
        let next = m.transition(&x, &u);
        let direct = rk4_step(&sample_state(), &sample_inputs(), &m.params, 0.02, TorqueMode::PowerEqualsTorque).unwrap();
        assert_eq!(next, direct.to_vector());
    }

    #[test]
    fn params_validation_names_key() {
        let bad = MachineParams {
            x_d: 0.2,
            ..Default::default()
        };
        match bad.validate().unwrap_err() {
            MachineError::InvalidParams { key, .. } => assert_eq!(key, "x_d"),
            e => panic!("unexpected {e:?}"),
        }
        assert!(as_process_model(MachineParams::default(), 0.0, TorqueMode::default()).is_err());
    }
}
