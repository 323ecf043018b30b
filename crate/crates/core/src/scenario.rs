//! Scenario assembly: operating point, fault profile, truth rollout,
//! measurement synthesis and filter execution.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::filter::{run_filter, FilterError, FilterRegistry, FilterRun, FilterState, HuberConfig, StepError};
use crate::machine::{
    self, as_process_model, MachineError, MachineInputs, MachineParams, MachineState, Measurement,
    MeasurementSigmas, TorqueMode,
};
use crate::noise::{corrupt_with, inject_outliers, NoiseError, NoiseKind, NoiseSpec, OutlierSpec, SeededStream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid `{key}`: {reason}")]
    InvalidConfig { key: &'static str, reason: String },
    #[error("invalid fault window: {0}")]
    InvalidWindow(String),
    #[error("steady state did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("truth simulation produced a non-finite state at step {step}")]
    NonFiniteState { step: usize },
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidConfig {
        key,
        reason: reason.into(),
    }
}

/// Tolerance used when comparing a grid time with a breakpoint.
const TIME_EPS: f64 = 1e-9;

/// Piecewise-constant or piecewise-linear schedule over time.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// `(t, value)` pairs sorted by time; the first one defines the value
    /// before any later breakpoint.
    pub breakpoints: Vec<(f64, f64)>,
    pub linear: bool,
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Self {
            breakpoints: vec![(0.0, value)],
            linear: false,
        }
    }

    pub fn steps(breakpoints: Vec<(f64, f64)>) -> Self {
        Self {
            breakpoints,
            linear: false,
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let bps = &self.breakpoints;
        let tol = TIME_EPS * t.abs().max(1.0);
        let idx = bps.iter().rposition(|&(bt, _)| bt <= t + tol).unwrap_or(0);
        if self.linear && idx + 1 < bps.len() {
            let (t0, v0) = bps[idx];
            let (t1, v1) = bps[idx + 1];
            if t1 > t0 && t > t0 {
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        bps[idx].1
    }

    /// Times where the schedule is not smooth.
    pub fn switch_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.breakpoints.iter().skip(1).map(|&(t, _)| t)
    }

    pub fn is_constant(&self) -> bool {
        self.breakpoints.windows(2).all(|w| w[0].1 == w[1].1)
    }
}

/// Input trajectories for `[T_m, E_f, U_t, φ]` over `[0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputProfile {
    pub t_m: Schedule,
    pub e_f: Schedule,
    pub u_t: Schedule,
    pub phi: Schedule,
    pub t_end: f64,
}

impl InputProfile {
    pub fn constant(base: MachineInputs, t_end: f64) -> Self {
        Self {
            t_m: Schedule::constant(base.t_m),
            e_f: Schedule::constant(base.e_f),
            u_t: Schedule::constant(base.u_t),
            phi: Schedule::constant(base.phi),
            t_end,
        }
    }

    pub fn at(&self, t: f64) -> MachineInputs {
        MachineInputs {
            t_m: self.t_m.value_at(t),
            e_f: self.e_f.value_at(t),
            u_t: self.u_t.value_at(t),
            phi: self.phi.value_at(t),
        }
    }

    fn switch_times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self
            .t_m
            .switch_times()
            .chain(self.e_f.switch_times())
            .chain(self.u_t.switch_times())
            .chain(self.phi.switch_times())
            .collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        for (key, s) in [("t_m", &self.t_m), ("e_f", &self.e_f), ("u_t", &self.u_t), ("phi", &self.phi)] {
            if s.breakpoints.is_empty() {
                return Err(invalid(key, "schedule has no breakpoints"));
            }
            if s.breakpoints.windows(2).any(|w| w[1].0 < w[0].0) {
                return Err(invalid(key, "breakpoints must be sorted by time"));
            }
            if s.breakpoints.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
                return Err(invalid(key, "breakpoints must be finite"));
            }
        }
        if self.u_t.breakpoints.iter().any(|&(_, v)| v < 0.0) {
            return Err(invalid("u_t", "terminal voltage must be non-negative"));
        }
        Ok(())
    }
}

/// Terminal-voltage dip standing in for a cleared three-phase fault.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultSpec {
    pub t_on: f64,
    pub duration: f64,
    pub u_t_dip: f64,
    pub u_t_post: f64,
    /// Optional partial clearing `(seconds after t_on, U_t)` before the
    /// final recovery, for two-ended clearing.
    pub partial_clear: Option<(f64, f64)>,
}

impl Default for FaultSpec {
    fn default() -> Self {
        Self {
            t_on: 1.2,
            duration: 5.0 / 60.0,
            u_t_dip: 0.35,
            u_t_post: 0.95,
            partial_clear: None,
        }
    }
}

pub fn build_fault_profile(base: MachineInputs, fault: &FaultSpec, t_end: f64) -> Result<InputProfile, ScenarioError> {
    let t_clear = fault.t_on + fault.duration;
    if !(fault.t_on >= 0.0) || !(fault.duration > 0.0) || t_clear > t_end + TIME_EPS {
        return Err(ScenarioError::InvalidWindow(format!(
            "fault [{}, {}] s must lie within [0, {t_end}] s with positive duration",
            fault.t_on, t_clear
        )));
    }
    if fault.u_t_dip < 0.0 || fault.u_t_post < 0.0 {
        return Err(ScenarioError::InvalidWindow("fault voltages must be non-negative".into()));
    }
    let mut bps = vec![(0.0, base.u_t), (fault.t_on, fault.u_t_dip)];
    if let Some((after, u)) = fault.partial_clear {
        if !(after > 0.0 && after < fault.duration) || u < 0.0 {
            return Err(ScenarioError::InvalidWindow(format!(
                "partial clearing at +{after} s must fall inside the fault"
            )));
        }
        bps.push((fault.t_on + after, u));
    }
    bps.push((t_clear, fault.u_t_post));
    let mut profile = InputProfile::constant(base, t_end);
    profile.u_t = Schedule::steps(bps);
    Ok(profile)
}

/// Finds the operating point with `Δω = 0` and all derivatives zero on the
/// stable branch of the power-angle curve.
pub fn steady_state_init(
    inputs: &MachineInputs,
    params: &MachineParams,
    torque_mode: TorqueMode,
) -> Result<MachineState, ScenarioError> {
    params.validate()?;
    let (u, ef) = (inputs.u_t, inputs.e_f);
    // with both EMF equations at rest the power reduces to the classical
    // salient-pole steady-state curve in the load angle
    let saliency = 1.0 / params.x_q - 1.0 / params.x_d;
    let power = |a: f64| ef * u * a.sin() / params.x_d + 0.5 * u * u * (2.0 * a).sin() * saliency;
    let slope = |a: f64| ef * u * a.cos() / params.x_d + u * u * (2.0 * a).cos() * saliency;

    let residual_of = |a: f64| {
        let state = state_at_angle(a, inputs, params);
        let dx = machine::state_derivative(&state, inputs, params, torque_mode);
        dx.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    };

    if !(slope(0.0) > 0.0) {
        return Err(ScenarioError::NoConvergence {
            residual: (power(0.0) - inputs.t_m).abs(),
        });
    }
    // peak of the curve: first zero of the slope on (0, π)
    let (mut lo, mut hi) = (0.0, std::f64::consts::PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let peak = lo;
    let target = inputs.t_m;
    if target > power(peak) || target < power(-peak) {
        let a = if target > 0.0 { peak } else { -peak };
        return Err(ScenarioError::NoConvergence { residual: residual_of(a) });
    }
    let (mut lo, mut hi) = (-peak, peak);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if power(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * peak {
            break;
        }
    }
    let mut angle = 0.5 * (lo + hi);
    // Newton polish on the exact curve
    for _ in 0..3 {
        let d = slope(angle);
        if d > 0.0 {
            angle -= (power(angle) - target) / d;
        }
    }
    let state = state_at_angle(angle, inputs, params);
    let residual = residual_of(angle);
    if residual > 1e-10 || !state.is_finite() {
        return Err(ScenarioError::NoConvergence { residual });
    }
    Ok(state)
}

fn state_at_angle(angle: f64, inputs: &MachineInputs, params: &MachineParams) -> MachineState {
    let (s, c) = angle.sin_cos();
    let u = inputs.u_t;
    MachineState {
        delta: inputs.phi + angle,
        delta_omega: 0.0,
        e_q_prime: (params.x_d_prime * inputs.e_f + (params.x_d - params.x_d_prime) * u * c) / params.x_d,
        e_d_prime: (params.x_q - params.x_q_prime) * u * s / params.x_q,
    }
}

/// Measurement noise per channel. The power channel defaults to zero-mean
/// Gaussian noise whose variance follows the terminal-voltage uncertainty
/// evaluated at the true state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub delta: NoiseSpec,
    pub omega: NoiseSpec,
    pub power: PowerNoise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerNoise {
    /// Gaussian with the state-dependent standard deviation.
    FromSigmas,
    Fixed(NoiseSpec),
}

impl NoiseConfig {
    /// The four noise settings of the comparison study: white Gaussian,
    /// then biased Gaussian, Laplace and Cauchy sharing σ and μ.
    pub fn table(kind: NoiseKind) -> Self {
        let sigma_delta = 2.0_f64.to_radians();
        let sigma_omega = 0.001;
        let (mu_delta, mu_omega) = match kind {
            NoiseKind::GaussianWhite => (0.0, 0.0),
            _ => (20.0_f64.to_radians(), 0.01),
        };
        Self {
            delta: NoiseSpec::new(kind, sigma_delta, mu_delta),
            omega: NoiseSpec::new(kind, sigma_omega, mu_omega),
            power: PowerNoise::FromSigmas,
        }
    }

    pub fn silent() -> Self {
        Self {
            delta: NoiseSpec::silent(),
            omega: NoiseSpec::silent(),
            power: PowerNoise::Fixed(NoiseSpec::silent()),
        }
    }
}

/// Filter initialization and tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    /// Relative bias applied to the steady-state transient EMFs.
    pub e_prime_bias: f64,
    pub p0_diag: [f64; 4],
    pub q_diag: [f64; 4],
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            e_prime_bias: 0.1,
            p0_diag: [1e-2, 1e-4, 1e-2, 1e-2],
            q_diag: [1e-6; 4],
        }
    }
}

/// Everything that defines one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub dt: f64,
    pub t_end: f64,
    pub machine: MachineParams,
    pub torque_mode: TorqueMode,
    pub base_inputs: MachineInputs,
    pub fault: Option<FaultSpec>,
    /// Replaces the fault-derived profile when set.
    pub profile: Option<InputProfile>,
    pub noise: NoiseConfig,
    pub outliers: OutlierSpec,
    pub init: InitSpec,
    pub sigmas: MeasurementSigmas,
    pub huber: HuberConfig,
    pub seed: u64,
    pub run: u64,
    /// Largest RK4 step of the truth integrator (s).
    pub truth_max_step: f64,
    /// Lower bound on the power-channel variance used by the filters.
    pub pe_variance_floor: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            t_end: 20.0,
            machine: MachineParams::default(),
            torque_mode: TorqueMode::default(),
            base_inputs: MachineInputs {
                t_m: 0.8,
                e_f: 2.0,
                u_t: 1.0,
                phi: 0.0,
            },
            fault: Some(FaultSpec::default()),
            profile: None,
            noise: NoiseConfig::table(NoiseKind::GaussianWhite),
            outliers: OutlierSpec::default(),
            init: InitSpec::default(),
            sigmas: MeasurementSigmas::default(),
            huber: HuberConfig::default(),
            seed: 1,
            run: 0,
            truth_max_step: 1e-3,
            pe_variance_floor: 1e-10,
        }
    }
}

impl ScenarioConfig {
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize
    }

    pub fn grid_len(&self) -> usize {
        self.steps() + 1
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.grid_len()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(invalid("t_end", "must be at least dt"));
        }
        if !(self.truth_max_step > 0.0) {
            return Err(invalid("truth_max_step", "must be positive"));
        }
        if !(self.pe_variance_floor >= 0.0) {
            return Err(invalid("pe_variance_floor", "must be non-negative"));
        }
        self.machine.validate()?;
        self.huber.validate()?;
        self.outliers.validate()?;
        if self.base_inputs.u_t < 0.0 {
            return Err(invalid("u_t", "terminal voltage must be non-negative"));
        }
        for (key, s) in [("noise.delta", &self.noise.delta), ("noise.omega", &self.noise.omega)] {
            if !(s.sigma >= 0.0) {
                return Err(invalid(key, "sigma must be non-negative"));
            }
        }
        let sig = &self.sigmas;
        if [sig.sigma_delta, sig.sigma_omega, sig.sigma_u, sig.sigma_phi]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return Err(invalid("sigmas", "standard deviations must be non-negative"));
        }
        if self.init.p0_diag.iter().any(|v| !(*v > 0.0)) {
            return Err(invalid("p0_diag", "entries must be positive"));
        }
        if self.init.q_diag.iter().any(|v| !(*v >= 0.0)) {
            return Err(invalid("q_diag", "entries must be non-negative"));
        }
        self.input_profile()?.validate()?;
        self.outliers.affected_steps(self.dt, self.grid_len())?;
        Ok(())
    }

    pub fn input_profile(&self) -> Result<InputProfile, ScenarioError> {
        if let Some(p) = &self.profile {
            return Ok(p.clone());
        }
        match &self.fault {
            Some(f) => build_fault_profile(self.base_inputs, f, self.t_end),
            None => Ok(InputProfile::constant(self.base_inputs, self.t_end)),
        }
    }
}

/// Truth trajectory sampled on the scenario grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub times: Vec<f64>,
    pub inputs: Vec<MachineInputs>,
    pub states: Vec<MachineState>,
}

/// Rolls the machine forward from its steady state. Between grid points the
/// integrator takes RK4 steps no longer than `truth_max_step`, split at
/// input switching times, so the truth follows the continuous profile.
pub fn simulate_truth(cfg: &ScenarioConfig) -> Result<Truth, ScenarioError> {
    cfg.validate()?;
    let profile = cfg.input_profile()?;
    let times = cfg.times();
    let inputs: Vec<MachineInputs> = times.iter().map(|&t| profile.at(t)).collect();
    let x0 = steady_state_init(&inputs[0], &cfg.machine, cfg.torque_mode)?;
    let switches = profile.switch_times();
    let mut states = Vec::with_capacity(times.len());
    states.push(x0);
    let mut x = x0;
    for k in 0..times.len() - 1 {
        let (t0, t1) = (times[k], times[k + 1]);
        let mut cuts = vec![t0];
        cuts.extend(switches.iter().copied().filter(|&s| s > t0 + TIME_EPS && s < t1 - TIME_EPS));
        cuts.push(t1);
        for seg in cuts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let u = profile.at(a);
            let n = ((b - a) / cfg.truth_max_step).ceil().max(1.0) as usize;
            let h = (b - a) / n as f64;
            for _ in 0..n {
                x = machine::rk4_step(&x, &u, &cfg.machine, h, cfg.torque_mode)
                    .map_err(|_| ScenarioError::NonFiniteState { step: k + 1 })?;
            }
        }
        states.push(x);
    }
    Ok(Truth { times, inputs, states })
}

/// Clean measurements at the truth and their noisy, outlier-corrupted copy.
pub fn synthesize_measurements(
    truth: &Truth,
    cfg: &ScenarioConfig,
) -> Result<(Vec<Measurement>, Vec<Measurement>), ScenarioError> {
    let clean: Vec<Measurement> = truth
        .states
        .iter()
        .zip(&truth.inputs)
        .map(|(s, u)| machine::measure(s, u, &cfg.machine))
        .collect();
    let power_sigma: Vec<f64> = truth
        .states
        .iter()
        .zip(&truth.inputs)
        .map(|(s, u)| machine::power_variance(s, u, &cfg.machine, &cfg.sigmas).sqrt())
        .collect();
    let noise = cfg.noise;
    let mut streams = SeededStream::per_channel(cfg.seed, cfg.run);
    let noisy = corrupt_with(
        &clean,
        |k, ch| match ch {
            0 => noise.delta,
            1 => noise.omega,
            _ => match noise.power {
                PowerNoise::FromSigmas => NoiseSpec::new(NoiseKind::GaussianWhite, power_sigma[k], 0.0),
                PowerNoise::Fixed(spec) => spec,
            },
        },
        &mut streams,
    )?;
    let corrupted = inject_outliers(&noisy, &cfg.outliers, cfg.dt)?;
    Ok((clean, corrupted))
}

/// Initial filter state from the first measurement and the (biased) steady
/// state.
pub fn initial_filter_state(cfg: &ScenarioConfig, first: &Measurement, steady: &MachineState) -> FilterState {
    let bias = 1.0 + cfg.init.e_prime_bias;
    let x0 = MachineState {
        delta: first.delta_z,
        delta_omega: first.omega_z - 1.0,
        e_q_prime: steady.e_q_prime * bias,
        e_d_prime: steady.e_d_prime * bias,
    };
    FilterState::new(
        x0.to_vector(),
        DMatrix::from_diagonal(&DVector::from_row_slice(&cfg.init.p0_diag)),
    )
}

/// Measurement covariance used by the filters at a predicted state.
pub fn filter_measurement_covariance(cfg: &ScenarioConfig, x_pred: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
    let state = MachineState::from_slice(x_pred.as_slice());
    let inputs = MachineInputs::from_slice(u.as_slice());
    let mut r = machine::measurement_covariance(&state, &inputs, &cfg.machine, &cfg.sigmas);
    if !(r[(2, 2)] >= cfg.pe_variance_floor) {
        r[(2, 2)] = cfg.pe_variance_floor;
    }
    r
}

/// One filter's estimates within a run.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantRun {
    pub run: FilterRun,
}

impl VariantRun {
    pub fn estimates(&self) -> Vec<MachineState> {
        self.run
            .states
            .iter()
            .map(|s| MachineState::from_slice(s.x_hat.as_slice()))
            .collect()
    }

    pub fn mean_step_ms(&self) -> f64 {
        if self.run.step_nanos.is_empty() {
            return 0.0;
        }
        let total: u64 = self.run.step_nanos.iter().sum();
        total as f64 / self.run.step_nanos.len() as f64 / 1e6
    }
}

/// All series of one scenario execution.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub times: Vec<f64>,
    pub inputs: Vec<MachineInputs>,
    pub truth: Vec<MachineState>,
    pub clean: Vec<Measurement>,
    pub corrupted: Vec<Measurement>,
    pub estimates: BTreeMap<String, Result<VariantRun, StepError>>,
}

/// Everything a filter pass needs, prepared once per scenario so that all
/// variants consume identical data.
#[derive(Debug, Clone)]
pub struct FilterInputs {
    pub init: FilterState,
    pub inputs: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
    pub q: DMatrix<f64>,
}

impl FilterInputs {
    pub fn prepare(cfg: &ScenarioConfig, truth: &Truth, corrupted: &[Measurement]) -> Self {
        Self {
            init: initial_filter_state(cfg, &corrupted[0], &truth.states[0]),
            inputs: truth.inputs.iter().map(|u| u.to_vector()).collect(),
            measurements: corrupted[1..].iter().map(|m| m.to_vector()).collect(),
            q: DMatrix::from_diagonal(&DVector::from_row_slice(&cfg.init.q_diag)),
        }
    }
}

/// Runs a named filter over prepared inputs.
pub fn run_variant(
    cfg: &ScenarioConfig,
    registry: &FilterRegistry,
    name: &str,
    prepared: &FilterInputs,
) -> Result<Result<VariantRun, StepError>, ScenarioError> {
    let strategy = registry.get(name)?;
    let model = as_process_model(cfg.machine, cfg.dt, cfg.torque_mode)?;
    let r_provider = |pred: &FilterState, u: &DVector<f64>| filter_measurement_covariance(cfg, &pred.x_hat, u);
    Ok(run_filter(
        &model,
        strategy.as_ref(),
        prepared.init.clone(),
        &prepared.inputs,
        &prepared.measurements,
        &prepared.q,
        &r_provider,
    )
    .map(|run| VariantRun { run }))
}

/// Simulates, synthesizes measurements once, and runs every requested
/// variant on the same corrupted series.
pub fn run_scenario(cfg: &ScenarioConfig, variants: &[&str]) -> Result<RunRecord, ScenarioError> {
    let registry = FilterRegistry::with_builtins(cfg.huber)?;
    run_scenario_with(cfg, &registry, variants)
}

pub fn run_scenario_with(
    cfg: &ScenarioConfig,
    registry: &FilterRegistry,
    variants: &[&str],
) -> Result<RunRecord, ScenarioError> {
    for v in variants {
        registry.get(v)?;
    }
    let truth = simulate_truth(cfg)?;
    let (clean, corrupted) = synthesize_measurements(&truth, cfg)?;
    let prepared = FilterInputs::prepare(cfg, &truth, &corrupted);
    let mut estimates = BTreeMap::new();
    for &name in variants {
        estimates.insert(name.to_ascii_lowercase(), run_variant(cfg, registry, name, &prepared)?);
    }
    Ok(RunRecord {
        times: truth.times,
        inputs: truth.inputs,
        truth: truth.states,
        clean,
        corrupted,
        estimates,
    })
}
