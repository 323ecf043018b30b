//! Seeded measurement noise and outlier injection.
//!
//! Every (run, channel) pair gets its own ChaCha20 stream, so draws on one
//! channel never shift another channel's sequence. Uniform variates used by
//! the inverse transforms are taken on the open interval, so the Laplace
//! logarithm and the Cauchy tangent stay finite.

use std::fmt;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::machine::Measurement;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("expected {expected} channel specs/streams, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("outlier time {time} s is outside the series horizon [0, {horizon}] s")]
    OutOfRange { time: f64, horizon: f64 },
    #[error("invalid outlier spec: {0}")]
    InvalidOutlier(String),
    #[error("unknown noise kind `{0}`")]
    UnknownKind(String),
}

/// Measurement channel index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Delta,
    Omega,
    Power,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Delta, Channel::Omega, Channel::Power];

    pub fn index(self) -> usize {
        match self {
            Channel::Delta => 0,
            Channel::Omega => 1,
            Channel::Power => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    GaussianWhite,
    GaussianBiased,
    Laplace,
    Cauchy,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::GaussianWhite,
        NoiseKind::GaussianBiased,
        NoiseKind::Laplace,
        NoiseKind::Cauchy,
    ];

    pub fn name(self) -> &'static str {
        self.sampler().name()
    }

    /// Numbering 1–4 used in the experiment tables.
    pub fn number(self) -> u8 {
        match self {
            NoiseKind::GaussianWhite => 1,
            NoiseKind::GaussianBiased => 2,
            NoiseKind::Laplace => 3,
            NoiseKind::Cauchy => 4,
        }
    }

    pub fn from_name(name: &str) -> Result<Self, NoiseError> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| NoiseError::UnknownKind(name.to_string()))
    }

    pub fn sampler(self) -> &'static dyn NoiseSampler {
        match self {
            NoiseKind::GaussianWhite => &GaussianWhiteSampler,
            NoiseKind::GaussianBiased => &GaussianBiasedSampler,
            NoiseKind::Laplace => &LaplaceSampler,
            NoiseKind::Cauchy => &CauchySampler,
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Noise distribution on one channel, in channel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
    #[serde(default)]
    pub mu: f64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, sigma: f64, mu: f64) -> Self {
        Self { kind, sigma, mu }
    }

    pub fn silent() -> Self {
        Self::new(NoiseKind::GaussianWhite, 0.0, 0.0)
    }

    /// Laplace scale `s = σ/√2`.
    pub fn laplace_scale(&self) -> f64 {
        self.sigma / std::f64::consts::SQRT_2
    }

    /// Cauchy location `a = 10σ`.
    pub fn cauchy_location(&self) -> f64 {
        10.0 * self.sigma
    }

    /// Cauchy scale `b = σ`.
    pub fn cauchy_scale(&self) -> f64 {
        self.sigma
    }

    pub fn sample(&self, stream: &mut SeededStream) -> f64 {
        self.kind.sampler().sample(self, stream)
    }
}

/// Identifies one independent stream within a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub run: u64,
    pub channel: u8,
}

impl StreamId {
    fn packed(self) -> u64 {
        (self.run << 8) | u64::from(self.channel)
    }
}

/// Deterministic ChaCha20 stream keyed by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct SeededStream {
    pub seed: u64,
    pub stream_id: StreamId,
    rng: ChaCha20Rng,
}

impl SeededStream {
    pub fn new(seed: u64, stream_id: StreamId) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id.packed());
        Self { seed, stream_id, rng }
    }

    /// One stream per measurement channel for the given run.
    pub fn per_channel(seed: u64, run: u64) -> Vec<SeededStream> {
        (0..3u8)
            .map(|channel| SeededStream::new(seed, StreamId { run, channel }))
            .collect()
    }

    /// Uniform on (0, 1), endpoints excluded.
    pub fn open01(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// A noise distribution selectable by name.
pub trait NoiseSampler: Send + Sync {
    fn name(&self) -> &'static str;
    fn sample(&self, spec: &NoiseSpec, stream: &mut SeededStream) -> f64;
}

pub struct GaussianWhiteSampler;
pub struct GaussianBiasedSampler;
pub struct LaplaceSampler;
pub struct CauchySampler;

impl NoiseSampler for GaussianWhiteSampler {
    fn name(&self) -> &'static str {
        "gaussian_white"
    }
    fn sample(&self, spec: &NoiseSpec, stream: &mut SeededStream) -> f64 {
        draw_gaussian(spec.mu, spec.sigma, stream)
    }
}

impl NoiseSampler for GaussianBiasedSampler {
    fn name(&self) -> &'static str {
        "gaussian_biased"
    }
    fn sample(&self, spec: &NoiseSpec, stream: &mut SeededStream) -> f64 {
        draw_gaussian(spec.mu, spec.sigma, stream)
    }
}

impl NoiseSampler for LaplaceSampler {
    fn name(&self) -> &'static str {
        "laplace"
    }
    fn sample(&self, spec: &NoiseSpec, stream: &mut SeededStream) -> f64 {
        draw_laplace(spec.mu, spec.sigma, stream)
    }
}

impl NoiseSampler for CauchySampler {
    fn name(&self) -> &'static str {
        "cauchy"
    }
    fn sample(&self, spec: &NoiseSpec, stream: &mut SeededStream) -> f64 {
        draw_cauchy(spec.sigma, stream)
    }
}

/// `mu + sigma · N(0, 1)` using the ziggurat standard normal of `rand_distr`.
/// Consumes one normal draw even when `sigma == 0`.
pub fn draw_gaussian(mu: f64, sigma: f64, stream: &mut SeededStream) -> f64 {
    let n = stream.standard_normal();
    if sigma == 0.0 {
        mu
    } else {
        mu + sigma * n
    }
}

/// Laplace inverse transform for `u1` in (−1, 1).
pub fn laplace_from_uniform(mu: f64, scale: f64, u1: f64) -> f64 {
    mu - scale * u1.signum() * (1.0 - u1.abs()).ln()
}

pub fn draw_laplace(mu: f64, sigma: f64, stream: &mut SeededStream) -> f64 {
    let u1 = 2.0 * stream.open01() - 1.0;
    laplace_from_uniform(mu, sigma / std::f64::consts::SQRT_2, u1)
}

/// Cauchy inverse transform for `u2` in (0, 1).
pub fn cauchy_from_uniform(location: f64, scale: f64, u2: f64) -> f64 {
    location + scale * (std::f64::consts::PI * (u2 - 0.5)).tan()
}

pub fn draw_cauchy(sigma: f64, stream: &mut SeededStream) -> f64 {
    let u2 = stream.open01();
    cauchy_from_uniform(10.0 * sigma, sigma, u2)
}

/// Adds channel noise with constant specs.
pub fn corrupt(
    series: &[Measurement],
    specs: &[NoiseSpec],
    streams: &mut [SeededStream],
) -> Result<Vec<Measurement>, NoiseError> {
    if specs.len() != 3 {
        return Err(NoiseError::ChannelMismatch {
            expected: 3,
            actual: specs.len(),
        });
    }
    corrupt_with(series, |_, ch| specs[ch], streams)
}

/// Adds channel noise with a spec chosen per `(step, channel)`.
pub fn corrupt_with(
    series: &[Measurement],
    spec_at: impl Fn(usize, usize) -> NoiseSpec,
    streams: &mut [SeededStream],
) -> Result<Vec<Measurement>, NoiseError> {
    if streams.len() != 3 {
        return Err(NoiseError::ChannelMismatch {
            expected: 3,
            actual: streams.len(),
        });
    }
    Ok(series
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let mut values = m.to_array();
            for (ch, (v, stream)) in values.iter_mut().zip(streams.iter_mut()).enumerate() {
                *v += spec_at(k, ch).sample(stream);
            }
            Measurement::from_array(values)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "manner", rename_all = "snake_case")]
pub enum OutlierManner {
    None,
    /// One corrupted sample at `t` seconds.
    Single { t: f64 },
    /// Every sample in `[t_start, t_end]`, endpoints included.
    Window { t_start: f64, t_end: f64 },
}

/// Outlier schedule: which samples of which channel get multiplied by `scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierSpec {
    pub manner: OutlierManner,
    pub channel: Channel,
    pub scale: f64,
}

impl Default for OutlierSpec {
    fn default() -> Self {
        Self {
            manner: OutlierManner::None,
            channel: Channel::Omega,
            scale: 1.10,
        }
    }
}

impl OutlierSpec {
    pub fn single(t: f64) -> Self {
        Self {
            manner: OutlierManner::Single { t },
            ..Default::default()
        }
    }

    pub fn window(t_start: f64, t_end: f64) -> Self {
        Self {
            manner: OutlierManner::Window { t_start, t_end },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(NoiseError::InvalidOutlier(format!("scale must be positive, got {}", self.scale)));
        }
        if let OutlierManner::Window { t_start, t_end } = self.manner {
            if !(t_start < t_end) {
                return Err(NoiseError::InvalidOutlier(format!(
                    "window start {t_start} must precede end {t_end}"
                )));
            }
        }
        Ok(())
    }

    /// Grid indices hit by this schedule on a series of `len` samples at
    /// spacing `dt`, sample `k` being at `k · dt`.
    pub fn affected_steps(&self, dt: f64, len: usize) -> Result<Vec<usize>, NoiseError> {
        self.validate()?;
        let horizon = len.saturating_sub(1) as f64 * dt;
        let index = |t: f64| -> Result<usize, NoiseError> {
            let k = (t / dt).round();
            if !t.is_finite() || k < 0.0 || k as usize >= len {
                Err(NoiseError::OutOfRange { time: t, horizon })
            } else {
                Ok(k as usize)
            }
        };
        match self.manner {
            OutlierManner::None => Ok(Vec::new()),
            OutlierManner::Single { t } => Ok(vec![index(t)?]),
            OutlierManner::Window { t_start, t_end } => Ok((index(t_start)?..=index(t_end)?).collect()),
        }
    }
}

/// Multiplies the scheduled samples of the chosen channel by `spec.scale`.
pub fn inject_outliers(series: &[Measurement], spec: &OutlierSpec, dt: f64) -> Result<Vec<Measurement>, NoiseError> {
    let steps = spec.affected_steps(dt, series.len())?;
    let mut out = series.to_vec();
    let ch = spec.channel.index();
    for k in steps {
        let mut values = out[k].to_array();
        values[ch] *= spec.scale;
        out[k] = Measurement::from_array(values);
    }
    Ok(out)
}
