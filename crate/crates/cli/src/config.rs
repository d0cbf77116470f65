//! The TOML run configuration.

use std::path::Path;

use anyhow::{bail, Context};
use blrmpk::decision::{EwocConfig, IntervalSpec, StoppingConfig};
use blrmpk::sampler::McmcConfig;
use blrmpk::{Design, DoseGrid, ModelKind, PriorSpec, RateMethod};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    Blrm,
    BlrmPk,
    #[default]
    Both,
}

impl ModelChoice {
    /// Model kinds in output order: dose-only first.
    pub fn kinds(self) -> Vec<ModelKind> {
        match self {
            ModelChoice::Blrm => vec![ModelKind::DoseOnly],
            ModelChoice::BlrmPk => vec![ModelKind::JointPk],
            ModelChoice::Both => vec![ModelKind::DoseOnly, ModelKind::JointPk],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub doses: Vec<f64>,
    /// Defaults to the highest dose.
    pub ref_dose: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            doses: vec![0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 50.0],
            ref_dose: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub scenario: String,
    pub trials: usize,
    /// Overrides the scenario's log-exposure sd when set.
    pub pk_log_sd: Option<f64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            scenario: "scenario-1".into(),
            trials: 1000,
            pk_log_sd: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelChoice,
    pub format: OutputFormat,
    /// Dose unit label copied verbatim into outputs.
    pub unit: String,
    /// Exposure values are divided by this before fitting.
    pub pk_reference: f64,
    pub rate_method: RateMethod,
    pub grid: GridConfig,
    pub prior: PriorSpec,
    pub mcmc: McmcConfig,
    pub intervals: IntervalSpec,
    pub ewoc: EwocConfig,
    pub stopping: StoppingConfig,
    pub simulation: SimulationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelChoice::default(),
            format: OutputFormat::default(),
            unit: "unit".into(),
            pk_reference: 1.0,
            rate_method: RateMethod::default(),
            grid: GridConfig::default(),
            prior: PriorSpec::default(),
            mcmc: McmcConfig::default(),
            intervals: IntervalSpec::default(),
            ewoc: EwocConfig::default(),
            stopping: StoppingConfig::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.design().validate()?;
        self.dose_grid()?;
        if !(self.pk_reference > 0.0 && self.pk_reference.is_finite()) {
            bail!("pk_reference must be positive, got {}", self.pk_reference);
        }
        if self.simulation.trials < 1 {
            bail!("simulation.trials must be at least 1");
        }
        if let Some(sd) = self.simulation.pk_log_sd {
            if !(sd > 0.0 && sd.is_finite()) {
                bail!("simulation.pk_log_sd must be positive, got {sd}");
            }
        }
        Ok(())
    }

    pub fn design(&self) -> Design {
        Design {
            prior: self.prior,
            mcmc: self.mcmc,
            intervals: self.intervals,
            ewoc: self.ewoc,
            stopping: self.stopping,
            rate_method: self.rate_method,
        }
    }

    pub fn dose_grid(&self) -> blrmpk::Result<DoseGrid> {
        DoseGrid::new(self.grid.doses.clone(), self.grid.ref_dose)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_tables_keep_other_defaults() {
        let cfg: RunConfig = toml::from_str("[ewoc]\nfeasibility_bound = 0.2\n[mcmc]\nseed = 9\n").unwrap();
        assert_eq!(cfg.ewoc.feasibility_bound, 0.2);
        assert_eq!(cfg.ewoc.max_increment_ratio, 3.0);
        assert_eq!(cfg.mcmc.seed, 9);
        assert_eq!(cfg.mcmc.draws, 5000);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(toml::from_str::<RunConfig>("colour = 1\n").is_err());
        assert!(toml::from_str::<RunConfig>("[prior]\nsd_g9 = 1\n").is_err());
        let bad: RunConfig = toml::from_str("[intervals]\nud_upper = 0.4\n").unwrap();
        assert!(bad.validate().is_err());
        let bad: RunConfig = toml::from_str("[grid]\ndoses = [1, 1]\n").unwrap();
        assert!(bad.validate().is_err());
        let bad: RunConfig = toml::from_str("pk_reference = 0\n").unwrap();
        assert!(bad.validate().is_err());
    }
}
