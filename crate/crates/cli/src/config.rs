//! JSON experiment configuration.
//!
//! Angles are given in degrees in the file and converted to radians here;
//! everything past this module works in radians.

use std::path::Path;

use serde::{Deserialize, Serialize};

use rckf_core::filter::HuberConfig;
use rckf_core::machine::{MachineInputs, MachineParams, MeasurementSigmas, TorqueMode};
use rckf_core::noise::{Channel, NoiseKind, NoiseSpec, OutlierManner, OutlierSpec};
use rckf_core::scenario::{FaultSpec, InitSpec, NoiseConfig, PowerNoise, ScenarioConfig};

use crate::error::CliError;

/// The configuration shipped with the harness: the default fault scenario.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub machine: MachineParams,
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub outliers: OutlierSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub init: InitSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub torque_mode: TorqueMode,
    #[serde(default = "default_truth_step")]
    pub truth_max_step: f64,
    #[serde(default)]
    pub inputs: InputsSection,
    #[serde(default = "default_fault")]
    pub fault: Option<FaultSection>,
}

fn default_t_end() -> f64 {
    20.0
}

fn default_seed() -> u64 {
    1
}

fn default_truth_step() -> f64 {
    ScenarioConfig::default().truth_max_step
}

fn default_fault() -> Option<FaultSection> {
    Some(FaultSection::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputsSection {
    pub t_m: f64,
    pub e_f: f64,
    pub u_t: f64,
    pub phi_deg: f64,
}

impl Default for InputsSection {
    fn default() -> Self {
        let b = ScenarioConfig::default().base_inputs;
        Self {
            t_m: b.t_m,
            e_f: b.e_f,
            u_t: b.u_t,
            phi_deg: b.phi.to_degrees(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultSection {
    pub t_on: f64,
    pub duration: f64,
    pub u_t_dip: f64,
    pub u_t_post: f64,
    pub partial_clear: Option<PartialClear>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialClear {
    /// Seconds after fault onset.
    pub after: f64,
    pub u_t: f64,
}

impl Default for FaultSection {
    fn default() -> Self {
        let f = FaultSpec::default();
        Self {
            t_on: f.t_on,
            duration: f.duration,
            u_t_dip: f.u_t_dip,
            u_t_post: f.u_t_post,
            partial_clear: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleNoise {
    pub sigma_deg: f64,
    #[serde(default)]
    pub mu_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedNoise {
    pub sigma: f64,
    #[serde(default)]
    pub mu: f64,
}

/// Noise on the measurements. Channels left out take the study's preset
/// for `kind`; `power` left out means Gaussian noise at the propagated
/// power-channel standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: NoiseKind,
    pub delta: Option<AngleNoise>,
    pub omega: Option<SpeedNoise>,
    pub power: Option<NoiseSpec>,
}

impl NoiseSection {
    pub fn resolve(&self) -> NoiseConfig {
        let mut cfg = NoiseConfig::table(self.kind);
        if let Some(d) = self.delta {
            cfg.delta = NoiseSpec::new(self.kind, d.sigma_deg.to_radians(), d.mu_deg.to_radians());
        }
        if let Some(w) = self.omega {
            cfg.omega = NoiseSpec::new(self.kind, w.sigma, w.mu);
        }
        if let Some(p) = self.power {
            cfg.power = PowerNoise::Fixed(p);
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MannerKey {
    #[default]
    None,
    Single,
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierSection {
    pub manner: MannerKey,
    /// Time of the single outlier (s).
    pub t: Option<f64>,
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
    pub channel: Channel,
    pub scale: f64,
}

impl Default for OutlierSection {
    fn default() -> Self {
        Self {
            manner: MannerKey::None,
            t: None,
            t_start: None,
            t_end: None,
            channel: Channel::Omega,
            scale: 1.10,
        }
    }
}

/// Outlier times used by the experiment matrix when the config gives none.
pub const SINGLE_OUTLIER_T: f64 = 6.0;
pub const WINDOW_OUTLIERS: (f64, f64) = (2.0, 3.0);

impl OutlierSection {
    pub fn resolve(&self) -> Result<OutlierSpec, CliError> {
        let manner = match self.manner {
            MannerKey::None => OutlierManner::None,
            MannerKey::Single => OutlierManner::Single {
                t: self
                    .t
                    .ok_or_else(|| CliError::Config("outliers.t is required for manner `single`".into()))?,
            },
            MannerKey::Window => OutlierManner::Window {
                t_start: self
                    .t_start
                    .ok_or_else(|| CliError::Config("outliers.t_start is required for manner `window`".into()))?,
                t_end: self
                    .t_end
                    .ok_or_else(|| CliError::Config("outliers.t_end is required for manner `window`".into()))?,
            },
        };
        Ok(OutlierSpec {
            manner,
            channel: self.channel,
            scale: self.scale,
        })
    }

    /// The outlier schedule of `manner`, keeping configured times when the
    /// config uses the same manner.
    pub fn for_manner(&self, manner: MannerKey) -> OutlierSpec {
        let same = self.manner == manner;
        let manner = match manner {
            MannerKey::None => OutlierManner::None,
            MannerKey::Single => OutlierManner::Single {
                t: self.t.filter(|_| same).unwrap_or(SINGLE_OUTLIER_T),
            },
            MannerKey::Window => OutlierManner::Window {
                t_start: self.t_start.filter(|_| same).unwrap_or(WINDOW_OUTLIERS.0),
                t_end: self.t_end.filter(|_| same).unwrap_or(WINDOW_OUTLIERS.1),
            },
        };
        OutlierSpec {
            manner,
            channel: self.channel,
            scale: self.scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaSection {
    pub sigma_delta_deg: f64,
    pub sigma_omega: f64,
    /// Relative to the terminal voltage.
    pub sigma_u: f64,
    pub sigma_phi_deg: f64,
}

impl Default for SigmaSection {
    fn default() -> Self {
        let s = MeasurementSigmas::default();
        Self {
            sigma_delta_deg: s.sigma_delta.to_degrees(),
            sigma_omega: s.sigma_omega,
            sigma_u: s.sigma_u,
            sigma_phi_deg: s.sigma_phi.to_degrees(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub huber: HuberConfig,
    pub sigmas: SigmaSection,
    pub pe_variance_floor: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            huber: HuberConfig::default(),
            sigmas: SigmaSection::default(),
            pe_variance_floor: ScenarioConfig::default().pe_variance_floor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    pub e_prime_bias: f64,
    pub p0_diag: [f64; 4],
    pub q_diag: [f64; 4],
}

impl Default for InitSection {
    fn default() -> Self {
        let i = InitSpec::default();
        Self {
            e_prime_bias: i.e_prime_bias,
            p0_diag: i.p0_diag,
            q_diag: i.q_diag,
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Self::parse(DEFAULT_CONFIG),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
                Self::parse(&text).map_err(|e| match e {
                    CliError::Config(msg) => CliError::Config(format!("{}: {msg}", p.display())),
                    other => other,
                })
            }
        }
    }

    /// Builds and validates the scenario.
    pub fn to_scenario(&self) -> Result<ScenarioConfig, CliError> {
        let s = &self.scenario;
        let sig = &self.filter.sigmas;
        let cfg = ScenarioConfig {
            dt: s.dt,
            t_end: s.t_end,
            machine: self.machine,
            torque_mode: s.torque_mode,
            base_inputs: MachineInputs {
                t_m: s.inputs.t_m,
                e_f: s.inputs.e_f,
                u_t: s.inputs.u_t,
                phi: s.inputs.phi_deg.to_radians(),
            },
            fault: s.fault.map(|f| FaultSpec {
                t_on: f.t_on,
                duration: f.duration,
                u_t_dip: f.u_t_dip,
                u_t_post: f.u_t_post,
                partial_clear: f.partial_clear.map(|p| (p.after, p.u_t)),
            }),
            profile: None,
            noise: self.noise.resolve(),
            outliers: self.outliers.resolve()?,
            init: InitSpec {
                e_prime_bias: self.init.e_prime_bias,
                p0_diag: self.init.p0_diag,
                q_diag: self.init.q_diag,
            },
            sigmas: MeasurementSigmas {
                sigma_delta: sig.sigma_delta_deg.to_radians(),
                sigma_omega: sig.sigma_omega,
                sigma_u: sig.sigma_u,
                sigma_phi: sig.sigma_phi_deg.to_radians(),
            },
            huber: self.filter.huber,
            seed: s.seed,
            run: 0,
            truth_max_step: s.truth_max_step,
            pe_variance_floor: self.filter.pe_variance_floor,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_config_matches_library_defaults() {
        let cfg = ConfigFile::parse(DEFAULT_CONFIG).unwrap().to_scenario().unwrap();
        let lib = ScenarioConfig::default();
        assert_eq!(cfg.dt, lib.dt);
        assert_eq!(cfg.t_end, lib.t_end);
        assert_eq!(cfg.fault, lib.fault);
        assert_eq!(cfg.init, lib.init);
        assert_eq!(cfg.huber, lib.huber);
        assert!((cfg.sigmas.sigma_delta - lib.sigmas.sigma_delta).abs() < 1e-15);
        assert!((cfg.noise.delta.mu - lib.noise.delta.mu).abs() < 1e-15);
    }

    #[test]
    fn missing_dt_is_named() {
        let err = ConfigFile::parse(r#"{"scenario": {"t_end": 5}}"#).unwrap_err();
        assert!(err.to_string().contains("dt"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn invalid_value_names_key() {
        let err = ConfigFile::parse(r#"{"scenario": {"dt": 0.0}}"#)
            .unwrap()
            .to_scenario()
            .unwrap_err();
        assert!(err.to_string().contains("dt"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ConfigFile::parse(r#"{"scenario": {"dt": 0.02, "dtt": 1}}"#).is_err());
        assert!(ConfigFile::parse(r#"{"scenario": {"dt": 0.02}, "extra": {}}"#).is_err());
    }

    #[test]
    fn degrees_converted_once() {
        let cfg = ConfigFile::parse(
            r#"{"scenario": {"dt": 0.02}, "noise": {"kind": "laplace", "delta": {"sigma_deg": 4, "mu_deg": 10}}}"#,
        )
        .unwrap()
        .to_scenario()
        .unwrap();
        assert!((cfg.noise.delta.sigma - 4f64.to_radians()).abs() < 1e-15);
        assert!((cfg.noise.delta.mu - 10f64.to_radians()).abs() < 1e-15);
        assert_eq!(cfg.noise.omega, NoiseConfig::table(NoiseKind::Laplace).omega);
    }

    #[test]
    fn outlier_manner_needs_times() {
        let file = ConfigFile::parse(r#"{"scenario": {"dt": 0.02}, "outliers": {"manner": "single"}}"#).unwrap();
        let err = file.to_scenario().unwrap_err();
        assert!(err.to_string().contains("outliers.t"));
        let ok = ConfigFile::parse(r#"{"scenario": {"dt": 0.02}, "outliers": {"manner": "window", "t_start": 2, "t_end": 3}}"#)
            .unwrap()
            .to_scenario()
            .unwrap();
        assert_eq!(ok.outliers, OutlierSpec::window(2.0, 3.0));
    }

    #[test]
    fn null_fault_means_constant_inputs() {
        let cfg = ConfigFile::parse(r#"{"scenario": {"dt": 0.02, "fault": null}}"#)
            .unwrap()
            .to_scenario()
            .unwrap();
        assert!(cfg.fault.is_none());
    }
}
