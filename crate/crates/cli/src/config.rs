//! Run configuration: one JSON document with optional sections, resolved
//! per command.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shiftfunc_core::diagnostics::SweepAxes;
use shiftfunc_core::lowerbound::{Decoding, EstimationRule};
use shiftfunc_core::model::DEFAULT_STRONG_VARIANCE_MC;
use shiftfunc_core::spec::{ExperimentSpec, FunctionalSpec, VectorSpec};
use shiftfunc_core::{ChainConfig, CovarianceKind, SeedSpec};

use crate::error::CliError;

fn default_n_rep() -> usize {
    10_000
}

fn default_strong_mc() -> usize {
    DEFAULT_STRONG_VARIANCE_MC
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_n_rep")]
    pub n_rep: usize,
    #[serde(default)]
    pub bias_oracle_reps: usize,
    #[serde(default = "default_strong_mc")]
    pub strong_variance_mc: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            n_rep: default_n_rep(),
            bias_oracle_reps: 0,
            strong_variance_mc: default_strong_mc(),
        }
    }
}

fn default_s() -> f64 {
    2.0
}

fn default_lb_reps() -> usize {
    200
}

fn default_rule() -> EstimationRule {
    EstimationRule::PlugIn
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundSection {
    pub d: usize,
    /// Isotropic noise scale `σ` (`Σ = σ²I_d`).
    pub sigma: f64,
    #[serde(default = "default_s")]
    pub s: f64,
    /// Bump radius; defaults to `min(√(c′·min(σ²d, 1)), 0.9/8)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_lb_reps")]
    pub n_rep: usize,
    #[serde(default = "default_rule")]
    pub rule: EstimationRule,
    #[serde(default)]
    pub decoding: Decoding,
}

/// The whole configuration document. Every section except `seed` is
/// optional at parse time; commands require the sections they use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<CovarianceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalSpec>,
    #[serde(default)]
    pub theta: VectorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainConfig>,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lowerbound: Option<LowerBoundSection>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses a document, reporting the failing field path and position.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::Config(format!(
                "at `{path}` (line {}, column {}): {inner}",
                inner.line(),
                inner.column()
            ))
        })
    }

    pub fn seed(&self) -> SeedSpec {
        self.seed.map(SeedSpec::new).unwrap_or_default()
    }

    /// Canonical serialization of the resolved document.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        section
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("missing `{name}` section")))
    }

    pub fn experiment_spec(&self) -> Result<ExperimentSpec, CliError> {
        Ok(ExperimentSpec {
            model: Self::require(&self.model, "model")?.clone(),
            functional: Self::require(&self.functional, "functional")?.clone(),
            theta: self.theta.clone(),
            chain: *Self::require(&self.chain, "chain")?,
            n_rep: self.experiment.n_rep,
            bias_oracle_reps: self.experiment.bias_oracle_reps,
            strong_variance_mc: self.experiment.strong_variance_mc,
        })
    }

    pub fn sweep_axes(&self) -> Result<&SweepAxes, CliError> {
        Self::require(&self.sweep, "sweep")
    }

    pub fn lowerbound(&self) -> Result<&LowerBoundSection, CliError> {
        Self::require(&self.lowerbound, "lowerbound")
    }
}
