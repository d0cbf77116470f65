//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILING` are reported but do not fail the
//! target; any other failure exits non-zero.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use blrmpk::decision::{feasible_doses, DosePosteriorSummary, EwocConfig};
use blrmpk::model::{logistic, marginal_logistic_normal};
use blrmpk::sampler::{sample_posterior, McmcConfig};
use blrmpk::simulator::{builtin_scenario, run_study, Scenario, StudyResult};
use blrmpk::{fit, Design, DoseGrid, ModelKind, TrialDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

const KNOWN_FAILING: [&str; 4] = ["4", "5", "6", "S1"];

const TRIALS: usize = 250;

struct Target {
    example: usize,
    scenario: &'static str,
    sd: f64,
    dose_only: (f64, f64, f64),
    joint: (f64, f64, f64),
}

/// (pct_participants_tt, pr_mtd_tt, avg_sample_size) per arm.
const TARGETS: [Target; 4] = [
    Target { example: 1, scenario: "scenario-1", sd: 0.5, dose_only: (51.1, 0.69, 10.0), joint: (71.7, 0.90, 14.0) },
    Target { example: 2, scenario: "scenario-1", sd: 1.0, dose_only: (51.1, 0.69, 10.0), joint: (69.2, 0.86, 13.8) },
    Target { example: 3, scenario: "scenario-2", sd: 0.5, dose_only: (25.3, 0.41, 15.9), joint: (48.9, 0.80, 22.2) },
    Target { example: 4, scenario: "scenario-2", sd: 1.0, dose_only: (25.3, 0.41, 15.9), joint: (45.3, 0.74, 21.5) },
];

#[derive(Default)]
struct Outcome {
    passed: usize,
    known: Vec<String>,
    unexpected: Vec<String>,
}

impl Outcome {
    fn report(&mut self, id: &str, title: &str, pass: bool, detail: &str, started: Instant) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} [{id}] {title}: {detail} ({:.1} s)", started.elapsed().as_secs_f64());
        if pass {
            self.passed += 1;
        } else if KNOWN_FAILING.contains(&id.split('.').next().unwrap()) {
            self.known.push(id.to_owned());
        } else {
            self.unexpected.push(id.to_owned());
        }
    }
}

fn cli(args: &[&str], env: Option<(&str, &str)>) -> Vec<u8> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_blrmpk"));
    cmd.args(args);
    if let Some((k, v)) = env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn p_od_by_model(json: &[u8], dose: f64) -> Vec<(String, f64)> {
    let v: Value = serde_json::from_slice(json).unwrap();
    v["models"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| {
            let row = m["doses"].as_array().unwrap().iter().find(|d| d["dose"] == dose).unwrap();
            (m["model"].as_str().unwrap().to_owned(), row["p_od"].as_f64().unwrap())
        })
        .collect()
}

fn fit_application(dir: &Path, name: &str) -> Vec<u8> {
    let data = dir.join(format!("{name}.csv"));
    cli(&["datasets", name, "--out", data.to_str().unwrap()], None);
    let cfg = repo_file(&format!("configs/{name}.toml"));
    cli(&["fit", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--format", "json"], None)
}

/// Violations of the per-fit invariants in one set of summaries.
fn invariant_violations(s: &[DosePosteriorSummary], grid: &[f64], ewoc: &EwocConfig) -> usize {
    let mut bad = s.iter().filter(|x| x.p_ud + x.p_tt + x.p_od != 1.0).count();
    bad += s.windows(2).filter(|w| w[1].p_od < w[0].p_od).count();
    let feasible = feasible_doses(s, ewoc);
    if feasible[..] != grid[..feasible.len()] {
        bad += 1;
    }
    bad
}

fn main() {
    let mut outcome = Outcome::default();
    let dir = tempfile::tempdir().unwrap();
    let design = Design::default();
    let mut fits_checked = 0usize;
    let mut violations = 0usize;

    // 1
    let t = Instant::now();
    let grid = builtin_scenario("scenario-1").unwrap().grid;
    let mut medians = Vec::new();
    for kind in [ModelKind::DoseOnly, ModelKind::JointPk] {
        let f = fit(&TrialDataset::empty(grid.clone()), kind, &design).unwrap();
        let draws = f.draws.len();
        violations += invariant_violations(&f.summaries, grid.doses(), &design.ewoc);
        fits_checked += 1;
        medians.push((kind.label(), f.summaries.last().unwrap().median_dlt_rate, draws));
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = medians.iter().all(|m| (m.1 - 0.33).abs() <= 0.02 && m.2 >= 20_000) && secs < 10.0;
    let detail = medians
        .iter()
        .map(|m| format!("{} median at d* {:.4} from {} draws", m.0, m.1, m.2))
        .collect::<Vec<_>>()
        .join(", ");
    outcome.report("1", "prior calibration", pass, &format!("{detail}; target 0.33 +/- 0.02, < 10 s"), t);

    // 2
    let t = Instant::now();
    let s1 = builtin_scenario("scenario-1").unwrap();
    let worst = s1
        .true_log_exposure_mean
        .iter()
        .zip(&s1.true_dlt_prob)
        .map(|(e, p)| (logistic(-2.5 + 2.0 * e) - p).abs())
        .fold(0.0, f64::max);
    outcome.report(
        "2",
        "scenario-1 self-consistency",
        worst <= 0.005,
        &format!("max |logistic(-2.5 + 2 e) - tox| = {worst:.5}; tolerance 0.005"),
        t,
    );

    // 3
    let t = Instant::now();
    let p = p_od_by_model(&fit_application(dir.path(), "app1"), 50.0);
    let pass = p.len() == 2 && p.iter().all(|(_, v)| *v > 0.25) && t.elapsed().as_secs_f64() < 60.0;
    let detail = p.iter().map(|(m, v)| format!("{m} p_od(50) {v:.4}")).collect::<Vec<_>>().join(", ");
    outcome.report("3", "application 1, dose 50 not recommended", pass, &format!("{detail}; need > 0.25"), t);

    // 4
    let t = Instant::now();
    let p = p_od_by_model(&fit_application(dir.path(), "app2"), 3.2);
    let get = |m: &str| p.iter().find(|x| x.0 == m).map(|x| x.1).unwrap();
    let (blrm, pk) = (get("BLRM"), get("BLRM-PK"));
    let pass = blrm > 0.25 && pk < 0.25 && t.elapsed().as_secs_f64() < 90.0;
    outcome.report(
        "4",
        "application 2, dose 3.2 safe only under BLRM-PK",
        pass,
        &format!("BLRM p_od(3.2) {blrm:.4} (need > 0.25), BLRM-PK p_od(3.2) {pk:.4} (need < 0.25)"),
        t,
    );

    // 5, with the Example 1 studies kept for 8 and 9
    let mut example1: Option<(StudyResult, StudyResult)> = None;
    for target in &TARGETS {
        let t = Instant::now();
        let scenario: Scenario = builtin_scenario(target.scenario).unwrap().with_pk_log_sd(target.sd);
        let study = |kind| run_study(&scenario, kind, &design, TRIALS, design.mcmc.seed).unwrap();
        let (blrm, pk) = (study(ModelKind::DoseOnly), study(ModelKind::JointPk));
        let mut checks = Vec::new();
        let mut detail = Vec::new();
        for (r, (tt, prtt, n)) in [(&blrm, target.dose_only), (&pk, target.joint)] {
            let oc = &r.oc;
            checks.push((oc.pr_mtd_tt - prtt).abs() <= 0.08);
            checks.push((oc.pct_participants_tt - tt).abs() <= 8.0);
            checks.push((oc.avg_sample_size - n).abs() <= 2.0);
            checks.push(oc.pct_participants_od.abs() <= 2.0);
            checks.push(r.aborted.is_empty());
            detail.push(format!(
                "{} tt% {:.2}/{tt} prtt {:.3}/{prtt} n {:.2}/{n} od% {:.2} below {:.3}",
                r.kind.label(),
                oc.pct_participants_tt,
                oc.pr_mtd_tt,
                oc.avg_sample_size,
                oc.pct_participants_od,
                oc.pr_mtd_below_sd,
            ));
            for tr in &r.traces {
                for step in &tr.cohorts {
                    violations += invariant_violations(&step.summaries, scenario.grid.doses(), &design.ewoc);
                    fits_checked += 1;
                }
            }
            let oc_sum = oc.pct_participants_tt + oc.pct_participants_od + oc.pct_participants_ud;
            let mtd_sum = oc.pr_mtd_tt + oc.pr_mtd_od + oc.pr_mtd_ud + oc.pr_mtd_below_sd;
            violations += usize::from(oc_sum != 100.0) + usize::from(mtd_sum != 1.0);
        }
        let directional =
            pk.oc.pr_mtd_tt > blrm.oc.pr_mtd_tt && pk.oc.pct_participants_tt > blrm.oc.pct_participants_tt;
        detail.push(format!("BLRM-PK ahead on prtt and tt%: {directional}"));
        checks.push(directional);
        outcome.report(
            &format!("5.{}", target.example),
            &format!("Example {} ({}, sd {}), {TRIALS} trials per arm", target.example, target.scenario, target.sd),
            checks.iter().all(|&c| c),
            &detail.join("; "),
            t,
        );
        if target.example == 1 {
            example1 = Some((blrm, pk));
        }
    }

    // 6
    let t = Instant::now();
    let (mut ok, mut worst_mean, mut worst_cov, mut worst_rhat) = (0, 0.0f64, 0.0f64, 0.0f64);
    const SEEDS: u64 = 20;
    for seed in 0..SEEDS {
        let draws = sample_posterior(gaussian::log_density, &[0.0; 5], &McmcConfig::default().with_seed(seed)).unwrap();
        let mean_err = draws.mean().iter().zip(gaussian::MU).map(|(m, t)| (m - t).abs()).fold(0.0, f64::max);
        let cov_err = gaussian::relative_cov_error(&draws.covariance());
        let rhat = draws.diagnostics().max_rhat().unwrap();
        worst_mean = worst_mean.max(mean_err);
        worst_cov = worst_cov.max(cov_err);
        worst_rhat = worst_rhat.max(rhat);
        ok += usize::from(mean_err < 0.05 && cov_err < 0.10 && rhat < 1.01);
    }
    outcome.report(
        "6",
        "sampler on a 5-d Gaussian, 4 x 5000 draws",
        ok == SEEDS as usize,
        &format!(
            "{ok}/{SEEDS} seeds meet all bounds; worst mean error {worst_mean:.4} (< 0.05), \
             worst cov error {worst_cov:.4} (< 0.10), worst R-hat {worst_rhat:.4} (< 1.01)"
        ),
        t,
    );

    // 7
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let a = rng.random_range(-4.0..2.0);
        let b = rng.random_range(0.05..3.0);
        let mu = rng.random_range(-2.0..2.0);
        let sigma = rng.random_range(0.01..=2.0);
        let mut acc = 0.0;
        for _ in 0..500_000 {
            let z: f64 = rng.sample(StandardNormal);
            acc += logistic(a + b * (mu + sigma * z)) + logistic(a + b * (mu - sigma * z));
        }
        worst = worst.max((marginal_logistic_normal(a, b, mu, sigma) - acc / 1e6).abs());
    }
    outcome.report(
        "7",
        "quadrature vs 1e6-draw Monte Carlo",
        worst < 1e-3,
        &format!("largest gap over 50 points {worst:.2e}; tolerance 1e-3"),
        t,
    );

    // 8
    let t = Instant::now();
    outcome.report(
        "8",
        "hard invariants",
        violations == 0,
        &format!("{violations} violations over {fits_checked} fits and 8 OC tables"),
        t,
    );

    // 9
    let t = Instant::now();
    let (blrm, pk) = example1.expect("Example 1 ran");
    let (rb, rp) = (blrm.coherence.escalation_after_dlt_rate(), pk.coherence.escalation_after_dlt_rate());
    outcome.report(
        "9",
        "coherence, Example 1",
        rb <= 0.01 && rp <= 0.05,
        &format!(
            "escalations after a DLT cohort: BLRM {}/{} = {rb:.4} (<= 0.01), BLRM-PK {}/{} = {rp:.4} (<= 0.05)",
            blrm.coherence.escalations_after_dlt,
            blrm.coherence.transitions,
            pk.coherence.escalations_after_dlt,
            pk.coherence.transitions,
        ),
        t,
    );

    // 10
    let t = Instant::now();
    let data = dir.path().join("app1.csv");
    let cfg = repo_file("configs/app1.toml");
    let fit_args = ["fit", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap()];
    let sim_args = ["simulate", "--trials", "4", "--seed", "11", "--format", "json"];
    let mut identical = true;
    for args in [&fit_args[..], &sim_args[..]] {
        let first = cli(args, None);
        identical &= first == cli(args, None);
        identical &= first == cli(args, Some(("RAYON_NUM_THREADS", "1")));
        identical &= first == cli(args, Some(("RAYON_NUM_THREADS", "3")));
    }
    outcome.report(
        "10",
        "determinism",
        identical,
        &format!("fit and simulate byte-identical across repeats and 1/3/default threads: {identical}"),
        t,
    );

    // S1
    let t = Instant::now();
    let doses = vec![0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 50.0];
    let exposure = doses.iter().map(|d| (d / 50.0f64).ln()).collect();
    let flat = Scenario::new("flat-0.20", DoseGrid::new(doses, None).unwrap(), exposure, vec![0.2; 7], 0.5).unwrap();
    let declared: Vec<(&str, usize)> = [ModelKind::DoseOnly, ModelKind::JointPk]
        .into_iter()
        .map(|kind| {
            let r = run_study(&flat, kind, &design, 100, design.mcmc.seed).unwrap();
            (kind.label(), r.traces.iter().filter(|t| t.mtd().is_some()).count())
        })
        .collect();
    outcome.report(
        "S1",
        "flat 0.20 scenario declares an MTD",
        declared.iter().all(|d| d.1 >= 90),
        &declared.iter().map(|d| format!("{} {}/100", d.0, d.1)).collect::<Vec<_>>().join(", "),
        t,
    );

    println!(
        "acceptance: {} passed, {} known failures {:?}, {} unexpected failures {:?}",
        outcome.passed,
        outcome.known.len(),
        outcome.known,
        outcome.unexpected.len(),
        outcome.unexpected
    );
    if !outcome.unexpected.is_empty() {
        std::process::exit(1);
    }
}

mod gaussian {
    pub const MU: [f64; 5] = [1.0, -2.0, 0.5, 3.0, 0.0];

    const L: [[f64; 5]; 5] = [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [0.8, 0.6, 0.0, 0.0, 0.0],
        [-0.3, 0.2, 0.9, 0.0, 0.0],
        [0.5, 0.5, 0.5, 0.5, 0.0],
        [0.0, -0.7, 0.1, 0.3, 0.6],
    ];

    pub fn log_density(x: &[f64]) -> f64 {
        let mut z = [0.0; 5];
        for i in 0..5 {
            let partial: f64 = (0..i).map(|j| L[i][j] * z[j]).sum();
            z[i] = (x[i] - MU[i] - partial) / L[i][i];
        }
        -0.5 * z.iter().map(|v| v * v).sum::<f64>()
    }

    /// Frobenius norm of the error over that of the true covariance.
    pub fn relative_cov_error(cov: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..5 {
            for j in 0..5 {
                let truth: f64 = (0..5).map(|k| L[i][k] * L[j][k]).sum();
                num += (cov[i * 5 + j] - truth).powi(2);
                den += truth * truth;
            }
        }
        (num / den).sqrt()
    }
}
