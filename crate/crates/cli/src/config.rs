//! JSON configurations. Every file carries `"version"`; all other fields are
//! optional and fall back to the defaults below.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use strata_core::bilayer::{BilayerParams, DiffusionTreatment, StepOptions, DEFAULT_CFL};
use strata_core::harness::{BilayerInitial, CONFIG_VERSION};
use strata_core::hyperbolicity::StatePoint;
use strata_core::stratified::PycnoclineShape;

/// Configuration problems map to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Reads `path`, checks the schema version and deserialises the rest.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

pub fn parse<T: DeserializeOwned>(text: &str) -> anyhow::Result<T> {
    let mut value: serde_json::Value = serde_json::from_str(text)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| config_error("configuration must be a JSON object"))?;
    match obj.remove("version") {
        Some(v) if v.as_u64() == Some(CONFIG_VERSION as u64) => {}
        Some(v) => bail!(config_error(format!(
            "unsupported config version {v}, expected {CONFIG_VERSION}"
        ))),
        None => bail!(config_error("missing \"version\" field")),
    }
    Ok(serde_json::from_value(value)?)
}

fn default_length() -> f64 {
    2.0 * std::f64::consts::PI
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtlasConfig {
    pub h_s: f64,
    pub h_b: f64,
    pub rho_ratios: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub samples: usize,
    pub extent: f64,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        AtlasConfig {
            h_s: 1.0 / 3.0,
            h_b: 2.0 / 3.0,
            rho_ratios: vec![0.1, 0.5, 0.9],
            intercepts: vec![0.5, 1.5, 2.5],
            samples: 2000,
            extent: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub rho_s: f64,
    pub rho_b: f64,
    pub h_s: f64,
    pub h_b: f64,
    pub u_s: f64,
    pub u_b: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            rho_s: 0.5,
            rho_b: 1.0,
            h_s: 0.4,
            h_b: 0.6,
            u_s: 0.05,
            u_b: -0.05,
        }
    }
}

impl ClassifyConfig {
    pub fn point(&self) -> anyhow::Result<StatePoint> {
        StatePoint::new(self.rho_s, self.rho_b, self.h_s, self.h_b, self.u_s, self.u_b)
            .map_err(|e| config_error(e.to_string()))
    }
}

/// Bilayer initial data: closed-form shapes or a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum InitialSource {
    Closed(BilayerInitial),
    Csv { path: PathBuf },
}

impl Default for InitialSource {
    fn default() -> Self {
        InitialSource::Closed(BilayerInitial::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BilayerSimConfig {
    pub n_x: usize,
    #[serde(default = "default_length")]
    pub length: f64,
    pub params: BilayerParams,
    pub initial: InitialSource,
    pub t_end: f64,
    pub cfl: f64,
    pub dt: Option<f64>,
    pub diffusion: DiffusionTreatment,
    pub sample_interval: f64,
    /// Hyperbolicity margin required of the initial data.
    pub sigma: Option<f64>,
    pub blowup_factor: f64,
}

impl Default for BilayerSimConfig {
    fn default() -> Self {
        BilayerSimConfig {
            n_x: 128,
            length: default_length(),
            params: BilayerParams::normalised(0.5, 0.4, 0.05, 0.01).expect("valid defaults"),
            initial: InitialSource::default(),
            t_end: 1.0,
            cfl: DEFAULT_CFL,
            dt: None,
            diffusion: DiffusionTreatment::Explicit,
            sample_interval: 0.1,
            sigma: Some(0.05),
            blowup_factor: 1e3,
        }
    }
}

impl BilayerSimConfig {
    pub fn step(&self) -> StepOptions {
        StepOptions {
            cfl: self.cfl,
            diffusion: self.diffusion,
        }
    }
}

/// Level grid clustered around the bilayer interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelsConfig {
    pub n_below: usize,
    pub n_above: usize,
    pub stretch: f64,
}

impl Default for LevelsConfig {
    fn default() -> Self {
        LevelsConfig {
            n_below: 32,
            n_above: 32,
            stretch: 4.0,
        }
    }
}

/// Reference stratification of a stratified run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSource {
    BilayerEmbed,
    SmoothPycnocline { epsilon: f64, shape: PycnoclineShape },
    Csv { path: PathBuf },
}

/// Initial state of a stratified run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum StratifiedInitial {
    /// Bilayer data embedded on the level grid.
    Embedded(BilayerInitial),
    Csv { path: PathBuf },
    Rest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StratifiedSimConfig {
    pub n_x: usize,
    #[serde(default = "default_length")]
    pub length: f64,
    /// Bilayer reference used for embedding and pycnocline smoothing; its
    /// `kappa` is the run's diffusivity.
    pub params: BilayerParams,
    pub levels: LevelsConfig,
    pub profile: ProfileSource,
    pub initial: StratifiedInitial,
    pub t_end: f64,
    pub cfl: f64,
    pub dt: Option<f64>,
    pub sample_interval: f64,
}

impl Default for StratifiedSimConfig {
    fn default() -> Self {
        StratifiedSimConfig {
            n_x: 128,
            length: default_length(),
            params: BilayerParams::normalised(0.5, 0.5, 0.05, 0.1).expect("valid defaults"),
            levels: LevelsConfig::default(),
            profile: ProfileSource::SmoothPycnocline {
                epsilon: 0.02,
                shape: PycnoclineShape::Tanh,
            },
            initial: StratifiedInitial::Embedded(BilayerInitial::default()),
            t_end: 0.5,
            cfl: DEFAULT_CFL,
            dt: None,
            sample_interval: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub n_x: usize,
    #[serde(default = "default_length")]
    pub length: f64,
    pub params: BilayerParams,
    pub levels: LevelsConfig,
    pub epsilon: f64,
    pub shape: PycnoclineShape,
    pub initial: BilayerInitial,
    pub t_end: f64,
    pub dt: f64,
    pub sample_interval: f64,
    /// Sobolev index of the residual norm.
    pub s: f64,
    pub gap_tolerance: f64,
    pub ratio_tolerance: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            n_x: 64,
            length: default_length(),
            params: BilayerParams::normalised(0.5, 0.5, 0.05, 0.1).expect("valid defaults"),
            levels: LevelsConfig {
                n_below: 16,
                n_above: 16,
                stretch: 3.0,
            },
            epsilon: 0.05,
            shape: PycnoclineShape::Tanh,
            initial: BilayerInitial::default(),
            t_end: 0.5,
            dt: 0.005,
            sample_interval: 0.05,
            s: 2.0,
            gap_tolerance: 1e-10,
            ratio_tolerance: 1e-9,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use strata_core::harness::KappaSweepConfig;

    #[test]
    fn version_is_required_and_checked() {
        assert!(parse::<AtlasConfig>("{}").is_err());
        assert!(parse::<AtlasConfig>(r#"{"version": 99}"#).is_err());
        let c: AtlasConfig = parse(r#"{"version": 1, "rho_ratios": [0.2]}"#).unwrap();
        assert_eq!(c.rho_ratios, vec![0.2]);
        assert_eq!(c.intercepts, AtlasConfig::default().intercepts);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(parse::<KappaSweepConfig>(r#"{"version": 1, "kapas": [1]}"#).is_err());
        assert!(parse::<RefineConfig>(r#"{"version": 1, "epsilon": 0.1, "t": 1}"#).is_err());
    }

    #[test]
    fn tagged_sources() {
        let c: StratifiedSimConfig = parse(
            r#"{"version": 1,
                "profile": {"source": "csv", "path": "p.csv"},
                "initial": {"source": "rest"}}"#,
        )
        .unwrap();
        assert_eq!(c.profile, ProfileSource::Csv { path: "p.csv".into() });
        assert_eq!(c.initial, StratifiedInitial::Rest);
        let b: BilayerSimConfig = parse(
            r#"{"version": 1, "initial": {"source": "closed",
                "h_s": {"kind": "gaussian", "amplitude": 0.01, "center": 3.0, "width": 0.5},
                "h_b": {"kind": "zero"}, "u_s": {"kind": "zero"}, "u_b": {"kind": "zero"}}}"#,
        )
        .unwrap();
        assert!(matches!(b.initial, InitialSource::Closed(_)));
    }
}
