//! Virtual dose-escalation trials and their operating characteristics.
//!
//! Each subject's DLT is drawn from the scenario's true probability at the
//! received dose and, independently, `log(pk) ~ Normal(true log exposure, sd)`.
//! Trials start at the lowest dose, refit after every cohort and follow the
//! stopping and overdose-control rules of the design.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::scenario_rows;
use crate::decision::{
    check_stopping, next_dose, stopping_recommendation, dyadic_fraction, Decision, DosePosteriorSummary,
    IntervalSpec, Recommendation, StoppingDecision, ToxicityBand, TrialState,
};
use crate::error::{Error, Result};
use crate::fit::{fit, Design};
use crate::model::{DoseGrid, ModelKind, SubjectRecord, TrialDataset};
use crate::sampler::{derive_substream_seed, splitmix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub grid: DoseGrid,
    /// Mean of log exposure at each dose.
    pub true_log_exposure_mean: Vec<f64>,
    pub true_dlt_prob: Vec<f64>,
    /// Standard deviation of log exposure.
    pub pk_log_sd: f64,
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        grid: DoseGrid,
        true_log_exposure_mean: Vec<f64>,
        true_dlt_prob: Vec<f64>,
        pk_log_sd: f64,
    ) -> Result<Self> {
        let s = Self {
            name: name.into(),
            grid,
            true_log_exposure_mean,
            true_dlt_prob,
            pk_log_sd,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        if self.true_log_exposure_mean.len() != n || self.true_dlt_prob.len() != n {
            return Err(Error::InvalidConfig(format!(
                "scenario `{}` needs one exposure and one toxicity value per dose",
                self.name
            )));
        }
        if self.true_dlt_prob.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidConfig("true DLT probabilities must lie in (0, 1)".into()));
        }
        if self.true_dlt_prob.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("true DLT probabilities must be non-decreasing".into()));
        }
        if self.true_log_exposure_mean.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidConfig("true log exposures must be finite".into()));
        }
        if !(self.pk_log_sd > 0.0 && self.pk_log_sd.is_finite()) {
            return Err(Error::InvalidConfig("pk_log_sd must be positive".into()));
        }
        Ok(())
    }

    pub fn with_pk_log_sd(mut self, sd: f64) -> Self {
        self.pk_log_sd = sd;
        self
    }

    pub fn truth_at(&self, dose: f64) -> Result<(f64, f64)> {
        let i = self.grid.require_index(dose)?;
        Ok((self.true_log_exposure_mean[i], self.true_dlt_prob[i]))
    }
}

/// The two built-in truth scenarios, both with log-exposure sd 0.5.
pub fn builtin_scenarios() -> [Scenario; 2] {
    let rows = scenario_rows();
    let build = |id: u32, name: &str| {
        let mine: Vec<_> = rows.iter().filter(|r| r.0 == id).collect();
        let grid = DoseGrid::new(mine.iter().map(|r| r.1).collect(), None).expect("scenario grid");
        Scenario::new(
            name,
            grid,
            mine.iter().map(|r| r.2).collect(),
            mine.iter().map(|r| r.3).collect(),
            0.5,
        )
        .expect("bundled scenario is valid")
    };
    [build(1, "scenario-1"), build(2, "scenario-2")]
}

pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

pub fn classify_dose(true_prob: f64, intervals: &IntervalSpec) -> ToxicityBand {
    intervals.classify(true_prob)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortOutcome {
    pub dose: f64,
    pub dlt: Vec<bool>,
    pub pk: Vec<f64>,
}

impl CohortOutcome {
    pub fn has_dlt(&self) -> bool {
        self.dlt.iter().any(|&y| y)
    }

    pub fn records(&self) -> impl Iterator<Item = SubjectRecord> + '_ {
        self.dlt.iter().zip(&self.pk).map(|(&dlt, &pk)| SubjectRecord::new(self.dose, dlt, pk))
    }
}

/// Draws one cohort. Each subject consumes one uniform and one normal, in
/// that order, whatever the scenario parameters are.
pub fn generate_cohort<R: Rng + ?Sized>(s: &Scenario, dose: f64, size: usize, rng: &mut R) -> Result<CohortOutcome> {
    let (log_exposure, tox) = s.truth_at(dose)?;
    let mut dlt = Vec::with_capacity(size);
    let mut pk = Vec::with_capacity(size);
    for _ in 0..size {
        let u: f64 = rng.random();
        let z: f64 = rng.sample(StandardNormal);
        dlt.push(u < tox);
        pk.push((log_exposure + s.pk_log_sd * z).exp());
    }
    Ok(CohortOutcome { dose, dlt, pk })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortStep {
    pub outcome: CohortOutcome,
    pub recommendation: Recommendation,
    pub summaries: Vec<DosePosteriorSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub seed: u64,
    pub cohorts: Vec<CohortStep>,
    pub final_recommendation: Recommendation,
    pub total_n: usize,
}

impl TrialTrace {
    pub fn mtd(&self) -> Option<f64> {
        self.final_recommendation.decision.mtd()
    }

    /// Received doses, one per subject.
    pub fn subject_doses(&self) -> impl Iterator<Item = f64> + '_ {
        self.cohorts
            .iter()
            .flat_map(|c| std::iter::repeat_n(c.outcome.dose, c.outcome.dlt.len()))
    }
}

/// Runs one trial. The data stream and each refit's sampler get their own
/// substreams of `seed`.
pub fn run_trial(s: &Scenario, kind: ModelKind, design: &Design, seed: u64) -> Result<TrialTrace> {
    design.validate()?;
    s.validate()?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(derive_substream_seed(seed, 0));
    let mcmc_master = splitmix64(seed);
    let stopping = &design.stopping;

    let mut data = TrialDataset::empty(s.grid.clone());
    let mut state = TrialState::new(s.grid.len());
    let mut current = s.grid.lowest();
    let mut cohorts: Vec<CohortStep> = Vec::new();

    loop {
        let size = stopping.cohort_size.min(stopping.max_total - state.total());
        let outcome = generate_cohort(s, current, size, &mut data_rng)?;
        for r in outcome.records() {
            data.push(r)?;
        }
        state.counts[s.grid.require_index(current)?] += size;

        let mcmc = design.mcmc.with_seed(derive_substream_seed(mcmc_master, cohorts.len() as u64));
        let fitted = fit(&data, kind, &Design { mcmc, ..*design })?;
        let summaries = fitted.summaries;

        let stop = check_stopping(&state, &summaries, stopping, &design.ewoc);
        let recommendation = match stop {
            StoppingDecision::Continue => next_dose(current, &summaries, &design.ewoc)?,
            terminal => stopping_recommendation(terminal, &summaries, stopping, &design.ewoc)
                .expect("terminal decisions always produce a recommendation"),
        };
        let next = recommendation.decision.next_dose();
        cohorts.push(CohortStep { outcome, recommendation: recommendation.clone(), summaries });
        match next {
            Some(d) => current = d,
            None => {
                return Ok(TrialTrace {
                    seed,
                    cohorts,
                    final_recommendation: recommendation,
                    total_n: state.total(),
                });
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub pct_participants_tt: f64,
    pub pct_participants_od: f64,
    pub pct_participants_ud: f64,
    pub pr_mtd_tt: f64,
    pub pr_mtd_od: f64,
    pub pr_mtd_ud: f64,
    /// Trials that stopped without any admissible dose.
    pub pr_mtd_below_sd: f64,
    pub avg_sample_size: f64,
}

/// Counts of dose transitions against the previous cohort's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoherenceStats {
    pub transitions: usize,
    pub after_dlt: usize,
    pub escalations_after_dlt: usize,
    pub after_no_dlt: usize,
    pub deescalations_after_no_dlt: usize,
}

impl CoherenceStats {
    /// Escalations right after a cohort with a DLT, over all transitions.
    pub fn escalation_after_dlt_rate(&self) -> f64 {
        ratio(self.escalations_after_dlt, self.transitions)
    }

    /// Same count over the transitions that follow a DLT cohort.
    pub fn escalation_given_dlt_rate(&self) -> f64 {
        ratio(self.escalations_after_dlt, self.after_dlt)
    }

    pub fn deescalation_after_no_dlt_rate(&self) -> f64 {
        ratio(self.deescalations_after_no_dlt, self.transitions)
    }

    fn add(&mut self, trace: &TrialTrace) {
        for pair in trace.cohorts.windows(2) {
            let (prev, next) = (&pair[0].outcome, &pair[1].outcome);
            self.transitions += 1;
            if prev.has_dlt() {
                self.after_dlt += 1;
                if next.dose > prev.dose {
                    self.escalations_after_dlt += 1;
                }
            } else {
                self.after_no_dlt += 1;
                if next.dose < prev.dose {
                    self.deescalations_after_no_dlt += 1;
                }
            }
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortedTrial {
    pub index: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub scenario: String,
    pub kind: ModelKind,
    pub pk_log_sd: f64,
    pub n_trials: usize,
    pub oc: OperatingCharacteristics,
    pub coherence: CoherenceStats,
    /// Completed trials in index order.
    pub traces: Vec<TrialTrace>,
    /// Trials whose sampler failed; they are left out of `oc`.
    pub aborted: Vec<AbortedTrial>,
}

/// Runs `n_trials` replicates with seeds `derive_substream_seed(master_seed, i)`.
pub fn run_study(
    s: &Scenario,
    kind: ModelKind,
    design: &Design,
    n_trials: usize,
    master_seed: u64,
) -> Result<StudyResult> {
    if n_trials < 1 {
        return Err(Error::InvalidConfig("a study needs at least one trial".into()));
    }
    design.validate()?;
    s.validate()?;
    let outcomes: Vec<(usize, u64, Result<TrialTrace>)> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let seed = derive_substream_seed(master_seed, i as u64);
            (i, seed, run_trial(s, kind, design, seed))
        })
        .collect();

    let mut traces = Vec::with_capacity(n_trials);
    let mut aborted = Vec::new();
    for (index, seed, outcome) in outcomes {
        match outcome {
            Ok(t) => traces.push(t),
            Err(e @ Error::SamplerInit(_)) => aborted.push(AbortedTrial { index, seed, reason: e.to_string() }),
            Err(e) => return Err(e),
        }
    }
    let oc = operating_characteristics(s, &design.intervals, &traces);
    let mut coherence = CoherenceStats::default();
    for t in &traces {
        coherence.add(t);
    }
    Ok(StudyResult {
        scenario: s.name.clone(),
        kind,
        pk_log_sd: s.pk_log_sd,
        n_trials,
        oc,
        coherence,
        traces,
        aborted,
    })
}

/// Aggregates completed trials. Partitions are built from cumulative
/// fractions on a 2^-40 grid, so they sum to exactly 100 and 1.
pub fn operating_characteristics(
    s: &Scenario,
    intervals: &IntervalSpec,
    traces: &[TrialTrace],
) -> OperatingCharacteristics {
    let band_of = |dose: f64| {
        let (_, tox) = s.truth_at(dose).expect("trace doses come from the scenario grid");
        classify_dose(tox, intervals)
    };

    let (mut subj_tt, mut subj_od, mut subjects) = (0usize, 0usize, 0usize);
    let (mut mtd_tt, mut mtd_od, mut mtd_ud) = (0usize, 0usize, 0usize);
    for t in traces {
        for dose in t.subject_doses() {
            subjects += 1;
            match band_of(dose) {
                ToxicityBand::Target => subj_tt += 1,
                ToxicityBand::Over => subj_od += 1,
                ToxicityBand::Under => {}
            }
        }
        match t.final_recommendation.decision {
            Decision::StopDeclareMtd(d) => match band_of(d) {
                ToxicityBand::Target => mtd_tt += 1,
                ToxicityBand::Over => mtd_od += 1,
                ToxicityBand::Under => mtd_ud += 1,
            },
            _ => {}
        }
    }

    let n = traces.len();
    let pct = |count: usize| 100.0 * dyadic_fraction(count, subjects.max(1));
    let c_tt = pct(subj_tt);
    let c_tt_od = pct(subj_tt + subj_od);
    let pct_ud = if subjects == 0 { 0.0 } else { 100.0 - c_tt_od };

    let frac = |count: usize| dyadic_fraction(count, n.max(1));
    let m1 = frac(mtd_tt);
    let m2 = frac(mtd_tt + mtd_od);
    let m3 = frac(mtd_tt + mtd_od + mtd_ud);

    OperatingCharacteristics {
        pct_participants_tt: c_tt,
        pct_participants_od: c_tt_od - c_tt,
        pct_participants_ud: pct_ud,
        pr_mtd_tt: m1,
        pr_mtd_od: m2 - m1,
        pr_mtd_ud: m3 - m2,
        pr_mtd_below_sd: if n == 0 { 0.0 } else { 1.0 - m3 },
        avg_sample_size: if n == 0 { 0.0 } else { subjects as f64 / n as f64 },
    }
}
