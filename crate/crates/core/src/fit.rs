//! One model fit: sample the posterior and summarize it per dose.

use serde::{Deserialize, Serialize};

use crate::decision::{interval_probabilities, DosePosteriorSummary, EwocConfig, IntervalSpec, StoppingConfig};
use crate::error::Result;
use crate::model::{LogPosterior, ModelKind, PriorSpec, RateMethod, TrialDataset};
use crate::sampler::{sample_posterior_jittered, McmcConfig, PosteriorDraws};

/// Fraction of the prior sd used to spread chain starting points.
pub const INIT_JITTER: f64 = 0.5;

/// Everything that defines an escalation design apart from the model kind.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Design {
    pub prior: PriorSpec,
    pub mcmc: McmcConfig,
    pub intervals: IntervalSpec,
    pub ewoc: EwocConfig,
    pub stopping: StoppingConfig,
    pub rate_method: RateMethod,
}

impl Design {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.mcmc.validate()?;
        self.intervals.validate()?;
        self.ewoc.validate()?;
        self.stopping.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub kind: ModelKind,
    pub draws: PosteriorDraws,
    pub summaries: Vec<DosePosteriorSummary>,
}

/// Samples the posterior with chains started around the prior center.
pub fn sample_model(
    data: &TrialDataset,
    kind: ModelKind,
    prior: &PriorSpec,
    mcmc: &McmcConfig,
) -> Result<PosteriorDraws> {
    let posterior = LogPosterior::new(data, prior, kind)?;
    let center = prior.center(kind);
    let jitter: Vec<f64> = prior.scale(kind).iter().map(|s| INIT_JITTER * s).collect();
    sample_posterior_jittered(|theta| posterior.eval(theta), &center, &jitter, mcmc)
}

pub fn fit(data: &TrialDataset, kind: ModelKind, design: &Design) -> Result<Fit> {
    let draws = sample_model(data, kind, &design.prior, &design.mcmc)?;
    let summaries = interval_probabilities(&draws, data.grid(), kind, &design.intervals, design.rate_method)?;
    Ok(Fit { kind, draws, summaries })
}
