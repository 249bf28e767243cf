//! Scenario files. Every block rejects unknown keys.

use std::path::Path;

use gbdt::explicit::ExplicitFamilyParams;
use gbdt::inverse::RealizationInput;
use gbdt::json::{self, JsonComplex};
use gbdt::{CMat, HamiltonianField};
use serde::de::DeserializeOwned;
use serde::Deserialize;

#[derive(Debug)]
pub enum ConfigError {
    Read(String),
    Parse(String),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Read(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Parse(m) => write!(f, "malformed config: {m}"),
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Initial triple at `x = 0`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleInput {
    #[serde(rename = "A", with = "json::matrix")]
    pub a: CMat,
    #[serde(rename = "S", with = "json::matrix")]
    pub s: CMat,
    #[serde(rename = "Pi", with = "json::matrix")]
    pub pi: CMat,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HamiltonianInput {
    /// `H = β*β` with `β = [1 i]`.
    Base {},
    RankOne {
        #[serde(with = "json::matrix")]
        beta: CMat,
    },
    Tabulated {
        x: Vec<f64>,
        #[serde(with = "json::matrix_vec")]
        values: Vec<CMat>,
    },
}

impl HamiltonianInput {
    pub fn build(&self, l: f64) -> gbdt::Result<HamiltonianField> {
        match self {
            HamiltonianInput::Base {} => Ok(HamiltonianField::base(l)),
            HamiltonianInput::RankOne { beta } => HamiltonianField::rank_one(beta.clone(), l),
            HamiltonianInput::Tabulated { x, values } => HamiltonianField::tabulated(x.clone(), values.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformRoute {
    #[default]
    ClosedForm,
    Ode,
}

/// `verify-identity` and `transform`: either a general triple or the
/// closed-form family.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleConfig {
    #[serde(default)]
    pub triple: Option<TripleInput>,
    #[serde(default)]
    pub family: Option<ExplicitFamilyParams>,
    #[serde(default)]
    pub hamiltonian: Option<HamiltonianInput>,
    #[serde(default, rename = "J", with = "json::option_matrix")]
    pub j: Option<CMat>,
    #[serde(default, rename = "U", with = "json::option_matrix")]
    pub u: Option<CMat>,
    #[serde(default)]
    pub l: Option<f64>,
    #[serde(default)]
    pub grid_points: Option<usize>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub route: Option<TransformRoute>,
}

impl TripleConfig {
    pub fn check(&self) -> Result<(), ConfigError> {
        match (&self.triple, &self.family) {
            (Some(_), Some(_)) | (None, None) => {
                Err(ConfigError::Invalid("exactly one of \"triple\" and \"family\" is required".into()))
            }
            (None, Some(_)) if self.hamiltonian.is_some() || self.j.is_some() || self.l.is_some() => {
                Err(ConfigError::Invalid("\"family\" fixes H, J and l; drop \"hamiltonian\", \"J\" and \"l\"".into()))
            }
            (None, Some(_)) if self.u.is_some() => Err(ConfigError::Invalid("\"family\" carries its own \"U\"".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpRoute {
    /// Integrate the transformed system itself.
    #[default]
    Direct,
    /// Transport base boundary values with the multiplier `v`.
    ViaV,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpModel {
    /// The jump belonging to the system.
    #[default]
    Model,
    /// `R = I`, a negative control.
    Identity,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpConfig {
    /// Absent: the base system.
    #[serde(default)]
    pub family: Option<ExplicitFamilyParams>,
    #[serde(default)]
    pub l: Option<f64>,
    #[serde(default)]
    pub s: Option<Vec<f64>>,
    #[serde(default)]
    pub eta: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub route: Option<JumpRoute>,
    #[serde(default)]
    pub jump: Option<JumpModel>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertConfig {
    pub realization: RealizationInput,
    #[serde(default)]
    pub theta2: Option<Vec<JsonComplex>>,
    #[serde(default, rename = "U", with = "json::option_matrix")]
    pub u: Option<CMat>,
    #[serde(default)]
    pub l: Option<f64>,
    /// Real points for the round-trip comparison of `u`.
    #[serde(default)]
    pub samples: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub grid_points: Option<usize>,
    #[serde(default)]
    pub verify_jump: Option<bool>,
    #[serde(default)]
    pub s: Option<Vec<f64>>,
    #[serde(default)]
    pub eta: Option<Vec<f64>>,
    #[serde(default)]
    pub jump_tolerance: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"family":{"n":1,"b":[{"re":0,"im":1}],"g":[{"re":1,"im":0}],"l":1},"grid":5}"#;
        assert!(serde_json::from_str::<TripleConfig>(text).is_err());
        let text = r#"{"hamiltonian":{"kind":"base","beta":[]},"triple":{"A":[],"S":[],"Pi":[]}}"#;
        assert!(serde_json::from_str::<TripleConfig>(text).is_err());
    }

    #[test]
    fn exactly_one_source() {
        let text = r#"{"grid_points":5}"#;
        let cfg: TripleConfig = serde_json::from_str(text).unwrap();
        assert!(cfg.check().is_err());
    }

    #[test]
    fn pole_shorthand_parses() {
        let text = r#"{"realization":{"pole":{"re":0,"im":1},"theta":{"re":1.4142135623730951,"im":0}}}"#;
        let cfg: InvertConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.realization.build().unwrap().n(), 1);
    }
}
