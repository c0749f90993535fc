//! The JSON scenario configuration and its translation into core types.

use std::path::{Path, PathBuf};

use bms_core::{
    DescentInit, PfosOptions, Portfolio, RateClass, ResidualLaw, ScaleAnchor, SimConfig,
    StartingLevel, TransitionRule,
};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_QUADRATURE_NODES: usize = 64;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub portfolio: PortfolioSpec,
    pub rule: RuleSpec,
    pub schemes: Vec<SchemeKind>,
    #[serde(default)]
    pub pfos: PfosSpec,
    #[serde(default = "default_quadrature_nodes")]
    pub quadrature_nodes: usize,
    #[serde(default)]
    pub simulation: Option<SimulationSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Free-form annotation echoed into every report (e.g. a caveat that the
    /// class weights are approximated).
    #[serde(default)]
    pub notes: Option<String>,
}

fn default_quadrature_nodes() -> usize {
    DEFAULT_QUADRATURE_NODES
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioSpec {
    pub classes: Vec<ClassSpec>,
    pub psi: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub lambda: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub levels: usize,
    pub penalty: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Pno,
    Ppos,
    Pfos,
    Poi,
    Debias,
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Pno => "pno",
            SchemeKind::Ppos => "ppos",
            SchemeKind::Pfos => "pfos",
            SchemeKind::Poi => "poi",
            SchemeKind::Debias => "debias",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PfosSpec {
    /// Scale constraint at level ⌊z/2⌋; omitted means "match the partially
    /// optimized table there".
    pub q: Option<f64>,
    pub init: InitSpec,
    pub tolerance: Option<f64>,
    pub max_cycles: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum InitSpec {
    #[default]
    Pno,
    Ppos,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub policyholders: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in_years: u32,
    #[serde(default = "default_sample_years")]
    pub sample_years: u32,
    pub seed: u64,
    #[serde(default)]
    pub starting_level: StartingLevel,
}

fn default_burn_in() -> u32 {
    200
}

fn default_sample_years() -> u32 {
    10
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ScenarioConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if config.schemes.is_empty() {
            return Err(CliError::Config("schemes: at least one scheme is required".into()));
        }
        Ok(config)
    }

    pub fn portfolio(&self) -> Result<Portfolio, CliError> {
        let classes = self
            .portfolio
            .classes
            .iter()
            .enumerate()
            .map(|(pos, spec)| RateClass {
                index: pos + 1,
                rate: spec.lambda,
                weight: spec.weight,
            })
            .collect();
        let residual = ResidualLaw::new(self.portfolio.psi)?;
        Ok(Portfolio::new(classes, residual)?)
    }

    pub fn transition_rule(&self) -> Result<TransitionRule, CliError> {
        Ok(TransitionRule::new(self.rule.levels, self.rule.penalty)?)
    }

    pub fn pfos_options(&self) -> PfosOptions {
        let defaults = PfosOptions::default();
        PfosOptions {
            init: match self.pfos.init {
                InitSpec::Pno => DescentInit::Pno,
                InitSpec::Ppos => DescentInit::Ppos,
            },
            anchor: match self.pfos.q {
                Some(q) => ScaleAnchor::Fixed(q),
                None => ScaleAnchor::MatchPpos,
            },
            tolerance: self.pfos.tolerance.unwrap_or(defaults.tolerance),
            max_cycles: self.pfos.max_cycles.unwrap_or(defaults.max_cycles),
        }
    }

    /// Requested schemes in the canonical reporting order, deduplicated.
    pub fn ordered_schemes(&self) -> Vec<SchemeKind> {
        [
            SchemeKind::Pno,
            SchemeKind::Ppos,
            SchemeKind::Pfos,
            SchemeKind::Poi,
            SchemeKind::Debias,
        ]
        .into_iter()
        .filter(|kind| self.schemes.contains(kind))
        .collect()
    }

    pub fn sim_config(&self, seed_override: Option<u64>) -> Result<SimConfig, CliError> {
        let spec = self.simulation.as_ref().ok_or_else(|| {
            CliError::Config("simulation: config has no simulation block".into())
        })?;
        Ok(SimConfig {
            policyholders: spec.policyholders,
            burn_in_years: spec.burn_in_years,
            sample_years: spec.sample_years,
            seed: seed_override.unwrap_or(spec.seed),
            starting_level: spec.starting_level,
        })
    }

    /// Display name: explicit `name`, else the file stem.
    pub fn display_name(&self, path: &Path) -> String {
        self.name.clone().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into())
        })
    }
}
