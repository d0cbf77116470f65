//! Dose-escalation decisions from posterior draws: interval probabilities,
//! overdose control, next dose, MTD choice and stopping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rate_from_log_ratio, DoseGrid, ModelKind, ParameterPoint, RateMethod};
use crate::sampler::PosteriorDraws;

/// Dose increments are compared as ratios with this much slack so that
/// grids like 0.1 → 0.3 with a 3x cap are not lost to rounding.
const RATIO_SLACK: f64 = 1e-9;

/// Toxicity bands: under-dosing `[0, ud_upper)`, target `[ud_upper, tt_upper)`,
/// over-dosing `[tt_upper, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntervalSpec {
    pub ud_upper: f64,
    pub tt_upper: f64,
}

impl Default for IntervalSpec {
    fn default() -> Self {
        Self { ud_upper: 0.16, tt_upper: 0.33 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToxicityBand {
    #[serde(rename = "UD")]
    Under,
    #[serde(rename = "TT")]
    Target,
    #[serde(rename = "OD")]
    Over,
}

impl IntervalSpec {
    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.ud_upper && self.ud_upper < self.tt_upper && self.tt_upper < 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "intervals need 0 < ud_upper < tt_upper < 1, got {} and {}",
                self.ud_upper, self.tt_upper
            )))
        }
    }

    pub fn classify(&self, rate: f64) -> ToxicityBand {
        if rate < self.ud_upper {
            ToxicityBand::Under
        } else if rate < self.tt_upper {
            ToxicityBand::Target
        } else {
            ToxicityBand::Over
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DosePosteriorSummary {
    pub dose: f64,
    pub p_ud: f64,
    pub p_tt: f64,
    pub p_od: f64,
    pub mean_dlt_rate: f64,
    pub median_dlt_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EwocConfig {
    /// A dose is admissible while its overdose probability is below this.
    pub feasibility_bound: f64,
    /// Largest allowed ratio between the next and the current dose.
    pub max_increment_ratio: f64,
}

impl Default for EwocConfig {
    fn default() -> Self {
        Self { feasibility_bound: 0.25, max_increment_ratio: 3.0 }
    }
}

impl EwocConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.feasibility_bound > 0.0 && self.feasibility_bound < 1.0) {
            return Err(Error::InvalidConfig("ewoc.feasibility_bound must lie in (0, 1)".into()));
        }
        if !(self.max_increment_ratio >= 1.0 && self.max_increment_ratio.is_finite()) {
            return Err(Error::InvalidConfig("ewoc.max_increment_ratio must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingConfig {
    pub min_at_mtd: usize,
    pub tt_prob_threshold: f64,
    pub min_total_for_alt_stop: usize,
    pub max_total: usize,
    pub cohort_size: usize,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        Self {
            min_at_mtd: 6,
            tt_prob_threshold: 0.5,
            min_total_for_alt_stop: 15,
            max_total: 50,
            cohort_size: 3,
        }
    }
}

impl StoppingConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("min_at_mtd", self.min_at_mtd),
            ("min_total_for_alt_stop", self.min_total_for_alt_stop),
            ("max_total", self.max_total),
            ("cohort_size", self.cohort_size),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::InvalidConfig(format!("stopping.{name} must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.tt_prob_threshold) {
            return Err(Error::InvalidConfig("stopping.tt_prob_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", content = "dose", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    EscalateTo(f64),
    Stay(f64),
    DeescalateTo(f64),
    StopDeclareMtd(f64),
    StopNoMtd,
}

impl Decision {
    /// Dose to give next, if the trial continues.
    pub fn next_dose(&self) -> Option<f64> {
        match *self {
            Decision::EscalateTo(d) | Decision::Stay(d) | Decision::DeescalateTo(d) => Some(d),
            Decision::StopDeclareMtd(_) | Decision::StopNoMtd => None,
        }
    }

    pub fn mtd(&self) -> Option<f64> {
        match *self {
            Decision::StopDeclareMtd(d) => Some(d),
            _ => None,
        }
    }

    pub fn is_stop(&self) -> bool {
        self.next_dose().is_none()
    }
}

/// Which rule produced a recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Highest admissible dose within the increment cap.
    EwocMaxFeasible,
    /// No dose passes the overdose control.
    NoFeasibleDose,
    /// Enough patients at the MTD and its target probability is high enough.
    TargetProbabilityReached,
    /// Enough patients at the MTD and enough in total.
    MinimumSampleReached,
    MaxSampleSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rationale {
    pub rule: Rule,
    pub current_dose: Option<f64>,
    /// `current * max_increment_ratio`, when escalation was considered.
    pub increment_cap: Option<f64>,
    pub mtd_candidate: Option<f64>,
    pub p_od_next: Option<f64>,
    pub p_tt_mtd: Option<f64>,
}

impl Rationale {
    fn new(rule: Rule) -> Self {
        Self {
            rule,
            current_dose: None,
            increment_cap: None,
            mtd_candidate: None,
            p_od_next: None,
            p_tt_mtd: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub decision: Decision,
    pub feasible_doses: Vec<f64>,
    pub rationale: Rationale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "dose", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StoppingDecision {
    Continue,
    StopDeclareMtd(f64),
    StopNoMtd,
    StopMaxN,
}

/// Per-dose counts of treated subjects.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrialState {
    pub counts: Vec<usize>,
}

impl TrialState {
    pub fn new(grid_len: usize) -> Self {
        Self { counts: vec![0; grid_len] }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// `count / total` rounded to a multiple of 2^-40.
///
/// Band probabilities are differences of these cumulative fractions, so they
/// are exact multiples of 2^-40 and sum to exactly one in any order, and
/// `p_od` depends only on the count of draws below the target ceiling.
pub(crate) fn dyadic_fraction(count: usize, total: usize) -> f64 {
    const SCALE: f64 = (1u64 << 40) as f64;
    (count as f64 / total as f64 * SCALE).round() / SCALE
}

/// Per-dose posterior band probabilities.
pub fn interval_probabilities(
    draws: &PosteriorDraws,
    grid: &DoseGrid,
    kind: ModelKind,
    intervals: &IntervalSpec,
    method: RateMethod,
) -> Result<Vec<DosePosteriorSummary>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if draws.is_empty() {
        return Err(Error::Domain("no posterior draws".into()));
    }
    if draws.dim() != kind.dimension() {
        return Err(Error::Domain(format!(
            "draws have {} columns but the {} model needs {}",
            draws.dim(),
            kind.label(),
            kind.dimension()
        )));
    }
    let points: Vec<ParameterPoint> = draws.rows().map(|r| ParameterPoint::from_slice(kind, r)).collect();
    let ref_dose = grid.ref_dose();
    let mut rates = vec![0.0; points.len()];
    let summaries = grid
        .doses()
        .iter()
        .map(|&dose| {
            let log_ratio = (dose / ref_dose).ln();
            for (rate, p) in rates.iter_mut().zip(&points) {
                *rate = rate_from_log_ratio(p, log_ratio, kind, method);
            }
            summarize_rates(dose, &mut rates, intervals)
        })
        .collect();
    Ok(summaries)
}

/// Band probabilities and location summaries of one dose's rate draws.
/// Sorts `rates` in place.
pub fn summarize_rates(dose: f64, rates: &mut [f64], intervals: &IntervalSpec) -> DosePosteriorSummary {
    let m = rates.len();
    let (mut ud, mut tt) = (0usize, 0usize);
    for &r in rates.iter() {
        match intervals.classify(r) {
            ToxicityBand::Under => ud += 1,
            ToxicityBand::Target => tt += 1,
            ToxicityBand::Over => {}
        }
    }
    let below_ud = dyadic_fraction(ud, m);
    let below_tt = dyadic_fraction(ud + tt, m);
    let p_ud = below_ud;
    let p_tt = below_tt - below_ud;
    let p_od = 1.0 - below_tt;
    let mean_dlt_rate = rates.iter().sum::<f64>() / m as f64;
    rates.sort_unstable_by(f64::total_cmp);
    let median_dlt_rate = if m % 2 == 1 {
        rates[m / 2]
    } else {
        0.5 * (rates[m / 2 - 1] + rates[m / 2])
    };
    DosePosteriorSummary { dose, p_ud, p_tt, p_od, mean_dlt_rate, median_dlt_rate }
}

/// Doses whose overdose probability is below the feasibility bound.
pub fn feasible_doses(summaries: &[DosePosteriorSummary], ewoc: &EwocConfig) -> Vec<f64> {
    summaries
        .iter()
        .filter(|s| s.p_od < ewoc.feasibility_bound)
        .map(|s| s.dose)
        .collect()
}

fn summary_index(summaries: &[DosePosteriorSummary], dose: f64) -> Option<usize> {
    summaries
        .iter()
        .position(|s| (s.dose - dose).abs() <= RATIO_SLACK * s.dose.max(dose))
}

/// Highest feasible dose not exceeding `current * max_increment_ratio`.
/// De-escalation is uncapped.
pub fn next_dose(current: f64, summaries: &[DosePosteriorSummary], ewoc: &EwocConfig) -> Result<Recommendation> {
    summary_index(summaries, current).ok_or(Error::DoseNotInGrid(current))?;
    let feasible = feasible_doses(summaries, ewoc);
    let cap = current * ewoc.max_increment_ratio;
    let candidate = feasible
        .iter()
        .copied()
        .filter(|&d| d / current <= ewoc.max_increment_ratio * (1.0 + RATIO_SLACK))
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))));

    let mut rationale = Rationale::new(Rule::EwocMaxFeasible);
    rationale.current_dose = Some(current);
    rationale.increment_cap = Some(cap);

    let decision = match candidate {
        None => {
            rationale.rule = Rule::NoFeasibleDose;
            Decision::StopNoMtd
        }
        Some(d) => {
            rationale.p_od_next = summary_index(summaries, d).map(|i| summaries[i].p_od);
            let same = (d - current).abs() <= RATIO_SLACK * d.max(current);
            if same {
                Decision::Stay(current)
            } else if d > current {
                Decision::EscalateTo(d)
            } else {
                Decision::DeescalateTo(d)
            }
        }
    };
    Ok(Recommendation { decision, feasible_doses: feasible, rationale })
}

/// Feasible dose with the highest target-toxicity probability; ties go to
/// the lower dose.
pub fn recommended_mtd(summaries: &[DosePosteriorSummary], ewoc: &EwocConfig) -> Option<f64> {
    let mut best: Option<&DosePosteriorSummary> = None;
    for s in summaries.iter().filter(|s| s.p_od < ewoc.feasibility_bound) {
        let better = match best {
            None => true,
            Some(b) => s.p_tt > b.p_tt || (s.p_tt == b.p_tt && s.dose < b.dose),
        };
        if better {
            best = Some(s);
        }
    }
    best.map(|s| s.dose)
}

pub fn check_stopping(
    state: &TrialState,
    summaries: &[DosePosteriorSummary],
    stopping: &StoppingConfig,
    ewoc: &EwocConfig,
) -> StoppingDecision {
    let total = state.total();
    let Some(mtd) = recommended_mtd(summaries, ewoc) else {
        return StoppingDecision::StopNoMtd;
    };
    let idx = summary_index(summaries, mtd).expect("MTD comes from the summaries");
    let at_mtd = state.counts.get(idx).copied().unwrap_or(0);
    if at_mtd >= stopping.min_at_mtd
        && (summaries[idx].p_tt >= stopping.tt_prob_threshold || total >= stopping.min_total_for_alt_stop)
    {
        return StoppingDecision::StopDeclareMtd(mtd);
    }
    if total >= stopping.max_total {
        return StoppingDecision::StopMaxN;
    }
    StoppingDecision::Continue
}

/// Converts a terminal stopping decision into a recommendation.
pub fn stopping_recommendation(
    stop: StoppingDecision,
    summaries: &[DosePosteriorSummary],
    stopping: &StoppingConfig,
    ewoc: &EwocConfig,
) -> Option<Recommendation> {
    let feasible = feasible_doses(summaries, ewoc);
    let mtd = recommended_mtd(summaries, ewoc);
    let mut rationale = Rationale::new(Rule::NoFeasibleDose);
    rationale.mtd_candidate = mtd;
    rationale.p_tt_mtd = mtd.and_then(|d| summary_index(summaries, d)).map(|i| summaries[i].p_tt);
    let decision = match stop {
        StoppingDecision::Continue => return None,
        StoppingDecision::StopNoMtd => Decision::StopNoMtd,
        StoppingDecision::StopDeclareMtd(d) => {
            let reached = rationale.p_tt_mtd.is_some_and(|p| p >= stopping.tt_prob_threshold);
            rationale.rule = if reached {
                Rule::TargetProbabilityReached
            } else {
                Rule::MinimumSampleReached
            };
            Decision::StopDeclareMtd(d)
        }
        StoppingDecision::StopMaxN => {
            rationale.rule = Rule::MaxSampleSize;
            match mtd {
                Some(d) => Decision::StopDeclareMtd(d),
                None => Decision::StopNoMtd,
            }
        }
    };
    Some(Recommendation { decision, feasible_doses: feasible, rationale })
}
