//! Seeded Monte-Carlo sweeps over schemes and K, with paired channel draws,
//! equal-total-power comparisons and CSV output.

mod io;
mod trial;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::beamforming::AoConfig;
use crate::channel::{FadingSpec, Geometry, PathLossModel};
use crate::error::{Error, Result};
use crate::rate::{NoiseModel, PowerModel};
use crate::relay::RelayConfig;

pub use io::{aggregate_path, read_results, write_results, Aggregate, AGG_HEADER, CSV_HEADER};
pub use trial::{
    aggregate, apply_equal_power_mode, medians, run_sweep, run_trial, trial_channels, trial_seed,
    EqualPowerPlan, Medians,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "ris-n")]
    RisN,
    #[serde(rename = "ris-n-minus-k")]
    RisNMinusK,
    #[serde(rename = "hrris-fixed")]
    HrrisFixed,
    #[serde(rename = "hrris-dynamic")]
    HrrisDynamic,
    #[serde(rename = "relay")]
    Relay,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::RisN,
        Scheme::RisNMinusK,
        Scheme::HrrisFixed,
        Scheme::HrrisDynamic,
        Scheme::Relay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::RisN => "ris-n",
            Scheme::RisNMinusK => "ris-n-minus-k",
            Scheme::HrrisFixed => "hrris-fixed",
            Scheme::HrrisDynamic => "hrris-dynamic",
            Scheme::Relay => "relay",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scheme `{s}`")))
    }
}

/// Surface parameters shared by every sweep point. The element count comes
/// from the fading section; K and the architecture come from the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSettings {
    pub phase_bits: u32,
    /// Total power available for active processing, watts.
    pub active_power_budget: f64,
    pub per_element_budget: bool,
}

impl Default for SurfaceSettings {
    fn default() -> Self {
        Self {
            phase_bits: 2,
            active_power_budget: 1e-3,
            per_element_budget: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub geometry: Geometry,
    pub fading: FadingSpec,
    pub path_loss: PathLossModel,
    pub noise: NoiseModel,
    pub power: PowerModel,
    pub surface: SurfaceSettings,
    pub relay: RelayConfig,
    pub ao: AoConfig,
    pub schemes: Vec<Scheme>,
    pub k_values: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub equal_power_mode: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            geometry: Geometry::default(),
            fading: FadingSpec::default(),
            path_loss: PathLossModel::default(),
            noise: NoiseModel::default(),
            power: PowerModel::default(),
            surface: SurfaceSettings::default(),
            relay: RelayConfig::default(),
            ao: AoConfig::default(),
            schemes: Scheme::ALL.to_vec(),
            k_values: (1..=20).collect(),
            trials: 500,
            master_seed: 1,
            equal_power_mode: false,
        }
    }
}

impl ExperimentSpec {
    pub fn n_elements(&self) -> usize {
        self.fading.surface_elements
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.fading.validate()?;
        self.path_loss.validate()?;
        self.noise.validate()?;
        self.power.validate()?;
        self.ao.validate()?;
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.schemes.is_empty() {
            return Err(Error::invalid("no schemes selected"));
        }
        let n = self.n_elements();
        if let Some(k) = self.k_values.iter().find(|&&k| k > n) {
            return Err(Error::invalid(format!("K = {k} exceeds N = {n}")));
        }
        if self.k_values.is_empty() {
            return Err(Error::invalid("no K values selected"));
        }
        let s = &self.surface;
        if s.phase_bits == 0 || s.phase_bits > 16 {
            return Err(Error::invalid("phase resolution must be between 1 and 16 bits"));
        }
        if !(s.active_power_budget >= 0.0) || !s.active_power_budget.is_finite() {
            return Err(Error::invalid("active power budget must be a non-negative number"));
        }
        if !(0.0..1.0).contains(&self.relay.sigma_si2) || !(self.relay.relay_power > 0.0) {
            return Err(Error::invalid("relay power must be positive and its SI gain in [0, 1)"));
        }
        Ok(())
    }
}

/// One output row. Failed trials carry NaN metrics and an error tag in `flags`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub scheme: Scheme,
    pub n: usize,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub se: f64,
    pub ee: f64,
    pub total_power: f64,
    pub iterations: usize,
    pub converged: bool,
    pub flags: Vec<String>,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        !self.se.is_finite()
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<TrialResult>,
    pub aggregates: Vec<Aggregate>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("ris".parse::<Scheme>().is_err());
    }

    #[test]
    fn default_spec_survives_toml() {
        let spec = ExperimentSpec::default();
        let back = ExperimentSpec::from_toml_str(&spec.to_toml_string()).unwrap();
        assert_eq!(spec, back);
        assert_eq!(ExperimentSpec::from_toml_str("").unwrap(), spec);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            ExperimentSpec::from_toml_str("trails = 3"),
            Err(Error::Config(_))
        ));
        assert!(ExperimentSpec::from_toml_str("[noise]\nbandwith_hz = 1.0").is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(ExperimentSpec::from_toml_str("trials = 0").is_err());
        assert!(ExperimentSpec::from_toml_str("k_values = [101]").is_err());
        assert!(ExperimentSpec::from_toml_str("schemes = []").is_err());
        assert!(ExperimentSpec::from_toml_str("schemes = [\"relay\"]\nk_values = [4]").is_ok());
    }
}
