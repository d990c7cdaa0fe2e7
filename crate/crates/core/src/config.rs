//! Run configuration, read from and written to TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::PowerModel;
use crate::dsp::{validate_bands, FrontendConfig};
use crate::error::{Error, Result};
use crate::network::{build_nsm_topology, NetworkSpec, TopologyOptions};
use crate::stimuli::{HrProfile, SyntheticEcgOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub dt: f64,
    pub seed: u64,
    /// Defaults to the input duration.
    pub duration: Option<f64>,
    /// Current pulse into STATE(0) at the start of a run, putting the
    /// machine into its reset state.
    pub prime_current: f64,
    pub prime_duration: f64,
    pub precision: Precision,
}

impl Default for EngineSection {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            seed: 0,
            duration: None,
            prime_current: 400e-12,
            prime_duration: 0.2,
            precision: Precision::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub window: f64,
    pub threshold: f64,
    pub power: PowerModel,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            window: 0.1,
            threshold: 10.0,
            power: PowerModel::default(),
        }
    }
}

/// Synthetic ECG source; also the format of `--synthetic` profile files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticInput {
    pub profile: HrProfile,
    #[serde(default)]
    pub ecg: SyntheticEcgOptions,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticInput {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        s.profile.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    pub path: Option<PathBuf>,
    /// Sample rate for files without an `fs_hz=` line.
    pub fs_hz: Option<f64>,
    pub synthetic: Option<SyntheticInput>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: TopologyOptions,
    /// Replaces the generated state machine when present.
    pub custom_network: Option<NetworkSpec>,
    pub frontend: FrontendConfig,
    pub engine: EngineSection,
    pub analysis: AnalysisSection,
    pub input: InputSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// The network this config describes.
    pub fn network_spec(&self) -> Result<NetworkSpec> {
        match &self.custom_network {
            Some(spec) => {
                spec.validate()?;
                Ok(spec.clone())
            }
            None => build_nsm_topology(&self.network),
        }
    }

    /// Checks every section before anything runs. Errors are reported as
    /// configuration errors naming the section.
    pub fn validate(&self) -> Result<()> {
        let section = |name: &str, r: Result<()>| {
            r.map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("[{name}] {m}")),
                e => Error::Config(format!("[{name}] {e}")),
            })
        };
        section("network", self.network_spec().map(|_| ()))?;
        section("network", self.network.neuron.validate())?;
        section("network", self.network.encoder.validate())?;
        section("frontend", validate_bands(&self.frontend.bands))?;
        section("frontend", self.frontend.encoder.validate())?;
        let e = &self.engine;
        if !(e.dt > 0.0) || e.duration.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::Config(format!("[engine] dt and duration must be positive: {e:?}")));
        }
        if !(e.prime_current >= 0.0 && e.prime_duration >= 0.0) {
            return Err(Error::Config("[engine] priming must be non-negative".into()));
        }
        let a = &self.analysis;
        if !(a.window > 0.0 && a.threshold >= 0.0) {
            return Err(Error::Config(format!(
                "[analysis] window must be positive and threshold non-negative: {a:?}"
            )));
        }
        section("analysis", a.power.validate())?;
        if self.input.path.is_some() && self.input.synthetic.is_some() {
            return Err(Error::Config("[input] give either `path` or `synthetic`, not both".into()));
        }
        if let Some(s) = &self.input.synthetic {
            section("input", s.profile.validate())?;
        }
        Ok(())
    }
}
