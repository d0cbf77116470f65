//! Text and JSON rendering.
//!
//! Precision is fixed so that seeded runs are byte-identical: probabilities
//! and DLT rates 4 decimals, R̂ and acceptance 3, ESS 0, percentages and
//! average sample sizes 2. Doses are printed in their shortest exact form.

use blrmpk::decision::{Decision, DosePosteriorSummary, Recommendation, Rule, StoppingDecision};
use blrmpk::sampler::Diagnostics;
use blrmpk::simulator::{StudyResult, TrialTrace};
use blrmpk::ModelKind;
use serde_json::{json, Value};

pub const PROB_DP: usize = 4;
pub const RHAT_DP: usize = 3;
pub const ESS_DP: usize = 0;
pub const PCT_DP: usize = 2;
pub const SIZE_DP: usize = 2;

pub fn fixed(x: f64, dp: usize) -> String {
    // Avoid "-0.0000" for tiny negative round-off.
    let s = format!("{x:.dp$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_owned(),
        _ => s,
    }
}

fn num(x: f64, dp: usize) -> Value {
    Value::from(fixed(x, dp).parse::<f64>().expect("formatted float parses"))
}

/// Shortest form of a dose after rounding to 9 decimals, so that derived
/// values such as `3.2 * 3` print as `9.6`.
pub fn dose(x: f64) -> String {
    ((x * 1e9).round() / 1e9).to_string()
}

fn dose_list(doses: &[f64]) -> String {
    doses.iter().map(|&d| dose(d)).collect::<Vec<_>>().join(";")
}

pub fn decision_parts(d: &Decision) -> (&'static str, Option<f64>) {
    match *d {
        Decision::EscalateTo(x) => ("ESCALATE_TO", Some(x)),
        Decision::Stay(x) => ("STAY", Some(x)),
        Decision::DeescalateTo(x) => ("DEESCALATE_TO", Some(x)),
        Decision::StopDeclareMtd(x) => ("STOP_DECLARE_MTD", Some(x)),
        Decision::StopNoMtd => ("STOP_NO_MTD", None),
    }
}

pub fn rule_name(r: Rule) -> &'static str {
    match r {
        Rule::EwocMaxFeasible => "ewoc_max_feasible",
        Rule::NoFeasibleDose => "no_feasible_dose",
        Rule::TargetProbabilityReached => "target_probability_reached",
        Rule::MinimumSampleReached => "minimum_sample_reached",
        Rule::MaxSampleSize => "max_sample_size",
    }
}

fn stopping_parts(s: StoppingDecision) -> (&'static str, Option<f64>) {
    match s {
        StoppingDecision::Continue => ("CONTINUE", None),
        StoppingDecision::StopDeclareMtd(d) => ("STOP_DECLARE_MTD", Some(d)),
        StoppingDecision::StopNoMtd => ("STOP_NO_MTD", None),
        StoppingDecision::StopMaxN => ("STOP_MAX_N", None),
    }
}

fn opt_dose(d: Option<f64>) -> String {
    d.map(dose).unwrap_or_default()
}

/// Everything reported for one model fitted to one dataset.
pub struct ModelReport {
    pub kind: ModelKind,
    pub summaries: Vec<DosePosteriorSummary>,
    /// `(subjects, DLTs)` per grid dose.
    pub observed: Vec<(usize, usize)>,
    pub diagnostics: Diagnostics,
    pub acceptance: Vec<f64>,
    pub draws_per_chain: usize,
    pub current_dose: f64,
    pub recommendation: Recommendation,
    pub mtd_candidate: Option<f64>,
    pub stopping: StoppingDecision,
}

impl ModelReport {
    fn is_feasible(&self, dose: f64) -> bool {
        self.recommendation.feasible_doses.contains(&dose)
    }
}

fn csv_section(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("write to memory");
    for row in rows {
        w.write_record(&row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
}

const RECOMMENDATION_HEADER: [&str; 10] = [
    "model",
    "current_dose",
    "decision",
    "dose",
    "rule",
    "feasible_doses",
    "increment_cap",
    "p_od_next",
    "mtd_candidate",
    "stopping",
];

fn recommendation_row(r: &ModelReport) -> Vec<String> {
    let (action, next) = decision_parts(&r.recommendation.decision);
    let (stop, stop_dose) = stopping_parts(r.stopping);
    let stop = match stop_dose {
        Some(d) => format!("{stop}({})", dose(d)),
        None => stop.to_owned(),
    };
    let rat = &r.recommendation.rationale;
    vec![
        r.kind.label().to_owned(),
        dose(r.current_dose),
        action.to_owned(),
        opt_dose(next),
        rule_name(rat.rule).to_owned(),
        dose_list(&r.recommendation.feasible_doses),
        opt_dose(rat.increment_cap),
        rat.p_od_next.map(|p| fixed(p, PROB_DP)).unwrap_or_default(),
        opt_dose(r.mtd_candidate),
        stop,
    ]
}

/// Three blank-line separated tables: per-dose summaries, convergence
/// diagnostics and the recommendation.
pub fn fit_csv(unit: &str, reports: &[ModelReport]) -> String {
    let mut dose_rows = Vec::new();
    let mut diag_rows = Vec::new();
    for r in reports {
        for (s, &(n, dlt)) in r.summaries.iter().zip(&r.observed) {
            dose_rows.push(vec![
                r.kind.label().to_owned(),
                dose(s.dose),
                unit.to_owned(),
                n.to_string(),
                dlt.to_string(),
                fixed(s.p_ud, PROB_DP),
                fixed(s.p_tt, PROB_DP),
                fixed(s.p_od, PROB_DP),
                fixed(s.median_dlt_rate, PROB_DP),
                fixed(s.mean_dlt_rate, PROB_DP),
                r.is_feasible(s.dose).to_string(),
            ]);
        }
        let mean_acc = r.acceptance.iter().sum::<f64>() / r.acceptance.len() as f64;
        for (j, name) in r.kind.parameter_names().iter().enumerate() {
            diag_rows.push(vec![
                r.kind.label().to_owned(),
                (*name).to_owned(),
                r.diagnostics.rhat[j].map(|v| fixed(v, RHAT_DP)).unwrap_or_else(|_| "NA".into()),
                fixed(r.diagnostics.ess[j], ESS_DP),
                fixed(mean_acc, RHAT_DP),
                (r.acceptance.len() * r.draws_per_chain).to_string(),
            ]);
        }
    }
    let doses = csv_section(
        &["model", "dose", "unit", "n", "dlt", "p_ud", "p_tt", "p_od", "median_dlt_rate", "mean_dlt_rate", "feasible"],
        dose_rows,
    );
    let diags = csv_section(&["model", "parameter", "rhat", "ess", "acceptance", "draws"], diag_rows);
    format!("{doses}\n{diags}\n{}", recommend_csv(reports))
}

pub fn recommend_csv(reports: &[ModelReport]) -> String {
    csv_section(&RECOMMENDATION_HEADER, reports.iter().map(recommendation_row).collect())
}

fn recommendation_json(r: &ModelReport) -> Value {
    let (action, dose) = decision_parts(&r.recommendation.decision);
    let (stop, stop_dose) = stopping_parts(r.stopping);
    let rat = &r.recommendation.rationale;
    json!({
        "current_dose": r.current_dose,
        "decision": action,
        "dose": dose,
        "rule": rule_name(rat.rule),
        "feasible_doses": r.recommendation.feasible_doses,
        "increment_cap": rat.increment_cap.map(|c| (c * 1e9).round() / 1e9),
        "p_od_next": rat.p_od_next.map(|p| num(p, PROB_DP)),
        "mtd_candidate": r.mtd_candidate,
        "stopping": { "status": stop, "dose": stop_dose },
    })
}

pub fn fit_json(unit: &str, pk_reference: f64, reports: &[ModelReport]) -> Value {
    let models: Vec<Value> = reports
        .iter()
        .map(|r| {
            let doses: Vec<Value> = r
                .summaries
                .iter()
                .zip(&r.observed)
                .map(|(s, &(n, dlt))| {
                    json!({
                        "dose": s.dose,
                        "n": n,
                        "dlt": dlt,
                        "p_ud": num(s.p_ud, PROB_DP),
                        "p_tt": num(s.p_tt, PROB_DP),
                        "p_od": num(s.p_od, PROB_DP),
                        "median_dlt_rate": num(s.median_dlt_rate, PROB_DP),
                        "mean_dlt_rate": num(s.mean_dlt_rate, PROB_DP),
                        "feasible": r.is_feasible(s.dose),
                    })
                })
                .collect();
            let params: Vec<Value> = r
                .kind
                .parameter_names()
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    json!({
                        "name": name,
                        "rhat": r.diagnostics.rhat[j].ok().map(|v| num(v, RHAT_DP)),
                        "ess": num(r.diagnostics.ess[j], ESS_DP),
                    })
                })
                .collect();
            json!({
                "model": r.kind.label(),
                "doses": doses,
                "diagnostics": {
                    "parameters": params,
                    "acceptance": r.acceptance.iter().map(|&a| num(a, RHAT_DP)).collect::<Vec<_>>(),
                    "draws": r.acceptance.len() * r.draws_per_chain,
                    "warnings": r.diagnostics.warnings,
                },
                "recommendation": recommendation_json(r),
            })
        })
        .collect();
    json!({ "unit": unit, "pk_reference": pk_reference, "models": models })
}

pub fn recommend_json(reports: &[ModelReport]) -> Value {
    let models: Vec<Value> = reports
        .iter()
        .map(|r| {
            let mut v = recommendation_json(r);
            v["model"] = json!(r.kind.label());
            v
        })
        .collect();
    json!({ "models": models })
}

pub const OC_HEADER: [&str; 17] = [
    "scenario",
    "pk_log_sd",
    "model",
    "trials",
    "completed",
    "aborted",
    "pct_participants_tt",
    "pct_participants_od",
    "pct_participants_ud",
    "pr_mtd_tt",
    "pr_mtd_od",
    "pr_mtd_ud",
    "pr_mtd_below_sd",
    "avg_sample_size",
    "transitions",
    "escalations_after_dlt",
    "escalation_after_dlt_rate",
];

pub fn oc_csv(studies: &[StudyResult]) -> String {
    let rows = studies
        .iter()
        .map(|s| {
            let oc = &s.oc;
            vec![
                s.scenario.clone(),
                s.pk_log_sd.to_string(),
                s.kind.label().to_owned(),
                s.n_trials.to_string(),
                s.traces.len().to_string(),
                s.aborted.len().to_string(),
                fixed(oc.pct_participants_tt, PCT_DP),
                fixed(oc.pct_participants_od, PCT_DP),
                fixed(oc.pct_participants_ud, PCT_DP),
                fixed(oc.pr_mtd_tt, PROB_DP),
                fixed(oc.pr_mtd_od, PROB_DP),
                fixed(oc.pr_mtd_ud, PROB_DP),
                fixed(oc.pr_mtd_below_sd, PROB_DP),
                fixed(oc.avg_sample_size, SIZE_DP),
                s.coherence.transitions.to_string(),
                s.coherence.escalations_after_dlt.to_string(),
                fixed(s.coherence.escalation_after_dlt_rate(), PROB_DP),
            ]
        })
        .collect();
    csv_section(&OC_HEADER, rows)
}

pub fn oc_json(studies: &[StudyResult]) -> Value {
    let studies: Vec<Value> = studies
        .iter()
        .map(|s| {
            let oc = &s.oc;
            json!({
                "scenario": s.scenario,
                "pk_log_sd": s.pk_log_sd,
                "model": s.kind.label(),
                "trials": s.n_trials,
                "completed": s.traces.len(),
                "aborted": s.aborted,
                "oc": {
                    "pct_participants_tt": num(oc.pct_participants_tt, PCT_DP),
                    "pct_participants_od": num(oc.pct_participants_od, PCT_DP),
                    "pct_participants_ud": num(oc.pct_participants_ud, PCT_DP),
                    "pr_mtd_tt": num(oc.pr_mtd_tt, PROB_DP),
                    "pr_mtd_od": num(oc.pr_mtd_od, PROB_DP),
                    "pr_mtd_ud": num(oc.pr_mtd_ud, PROB_DP),
                    "pr_mtd_below_sd": num(oc.pr_mtd_below_sd, PROB_DP),
                    "avg_sample_size": num(oc.avg_sample_size, SIZE_DP),
                },
                "coherence": {
                    "transitions": s.coherence.transitions,
                    "after_dlt": s.coherence.after_dlt,
                    "escalations_after_dlt": s.coherence.escalations_after_dlt,
                    "escalation_after_dlt_rate": num(s.coherence.escalation_after_dlt_rate(), PROB_DP),
                    "escalation_given_dlt_rate": num(s.coherence.escalation_given_dlt_rate(), PROB_DP),
                },
            })
        })
        .collect();
    json!({ "studies": studies })
}

fn trace_final(t: &TrialTrace) -> (&'static str, String, &'static str) {
    let (action, dose) = decision_parts(&t.final_recommendation.decision);
    (action, opt_dose(dose), rule_name(t.final_recommendation.rationale.rule))
}

pub fn traces_csv(studies: &[StudyResult]) -> String {
    let mut rows = Vec::new();
    for s in studies {
        for (i, t) in s.traces.iter().enumerate() {
            let (action, mtd, rule) = trace_final(t);
            let doses: Vec<f64> = t.cohorts.iter().map(|c| c.outcome.dose).collect();
            let dlts: Vec<String> = t
                .cohorts
                .iter()
                .map(|c| c.outcome.dlt.iter().filter(|&&d| d).count().to_string())
                .collect();
            rows.push(vec![
                s.kind.label().to_owned(),
                i.to_string(),
                t.seed.to_string(),
                t.total_n.to_string(),
                t.cohorts.len().to_string(),
                action.to_owned(),
                mtd,
                rule.to_owned(),
                dose_list(&doses),
                dlts.join(";"),
            ]);
        }
    }
    csv_section(
        &["model", "trial", "seed", "total_n", "cohorts", "final_decision", "mtd", "rule", "cohort_doses", "cohort_dlts"],
        rows,
    )
}

pub fn traces_json(studies: &[StudyResult]) -> Value {
    let mut out = Vec::new();
    for s in studies {
        for (i, t) in s.traces.iter().enumerate() {
            let (action, _, rule) = trace_final(t);
            let cohorts: Vec<Value> = t
                .cohorts
                .iter()
                .map(|c| {
                    let (next, next_dose) = decision_parts(&c.recommendation.decision);
                    json!({
                        "dose": c.outcome.dose,
                        "dlt": c.outcome.dlt.iter().map(|&d| u8::from(d)).collect::<Vec<_>>(),
                        "pk": c.outcome.pk.iter().map(|&x| num(x, PROB_DP)).collect::<Vec<_>>(),
                        "decision": next,
                        "decision_dose": next_dose,
                    })
                })
                .collect();
            out.push(json!({
                "model": s.kind.label(),
                "trial": i,
                "seed": t.seed,
                "total_n": t.total_n,
                "final_decision": action,
                "mtd": t.mtd(),
                "rule": rule,
                "cohorts": cohorts,
            }));
        }
    }
    Value::Array(out)
}
