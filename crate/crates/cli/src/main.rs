//! `blrmpk`: fit dose-escalation models, recommend doses, simulate designs.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 sampler failure.

mod config;
mod data;
mod report;
mod svg;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use blrmpk::datasets::{BundledDataset, SCENARIOS_CSV};
use blrmpk::decision::{check_stopping, next_dose, recommended_mtd, TrialState};
use blrmpk::simulator::run_study;
use blrmpk::{fit, Design, ModelKind, TrialDataset};
use clap::{Args, Parser, Subcommand};

use config::{ModelChoice, OutputFormat, RunConfig};
use report::ModelReport;

#[derive(Parser, Debug)]
#[command(name = "blrmpk", version, about = "Bayesian dose escalation with exposure-guided toxicity models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the model(s) and print per-dose interval probabilities.
    Fit(FitArgs),
    /// Recommend the next dose given the current one.
    Recommend(RecommendArgs),
    /// Simulate trials from a truth scenario and report operating characteristics.
    Simulate(SimulateArgs),
    /// Print a bundled dataset (app1, app2) or the simulation scenarios (scenarios).
    Datasets(DatasetsArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelChoice>,
    /// Overrides `mcmc.seed` (the master seed for `simulate`).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Write the main output here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if let Some(s) = self.seed {
            cfg.mcmc.seed = s;
        }
        if let Some(f) = self.format {
            cfg.format = f;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Trial data (`participant_id,dose,dlt,pk`); prior only when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RecommendArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dose the last cohort received; must be on the grid.
    #[arg(long)]
    current: f64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Built-in scenario (scenario-1, scenario-2) or a `dose,log_exposure,toxicity` file.
    #[arg(long)]
    scenario: Option<String>,
    /// Standard deviation of simulated log exposure.
    #[arg(long)]
    sd: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Per-trial summaries.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Stacked-bar chart of participant allocation.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DatasetsArgs {
    name: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn json_text(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn load_data(path: Option<&Path>, cfg: &RunConfig) -> anyhow::Result<TrialDataset> {
    let grid = cfg.dose_grid()?;
    let rows = match path {
        Some(p) => data::read_dataset(p)?,
        None => Vec::new(),
    };
    data::build_dataset(&rows, &grid, &cfg.model.kinds(), cfg.pk_reference)
}

fn model_report(data: &TrialDataset, kind: ModelKind, design: &Design, current: f64) -> anyhow::Result<ModelReport> {
    let fitted = fit(data, kind, design)?;
    for w in &fitted.draws.diagnostics().warnings {
        eprintln!("warning ({}): {w}", kind.label());
    }
    let grid = data.grid();
    let mut observed = vec![(0usize, 0usize); grid.len()];
    let mut state = TrialState::new(grid.len());
    for r in data.records() {
        let i = grid.require_index(r.dose)?;
        observed[i].0 += 1;
        observed[i].1 += usize::from(r.dlt);
        state.counts[i] += 1;
    }
    let recommendation = next_dose(current, &fitted.summaries, &design.ewoc)?;
    let stopping = check_stopping(&state, &fitted.summaries, &design.stopping, &design.ewoc);
    Ok(ModelReport {
        kind,
        mtd_candidate: recommended_mtd(&fitted.summaries, &design.ewoc),
        summaries: fitted.summaries,
        observed,
        diagnostics: fitted.draws.diagnostics().clone(),
        acceptance: fitted.draws.accept_rate().to_vec(),
        draws_per_chain: fitted.draws.draws_per_chain(),
        current_dose: current,
        recommendation,
        stopping,
    })
}

fn reports(data: &TrialDataset, cfg: &RunConfig, current: f64) -> anyhow::Result<Vec<ModelReport>> {
    let design = cfg.design();
    cfg.model
        .kinds()
        .into_iter()
        .map(|k| model_report(data, k, &design, current))
        .collect()
}

fn cmd_fit(args: &FitArgs) -> anyhow::Result<()> {
    let cfg = args.common.resolve()?;
    let data = load_data(args.data.as_deref(), &cfg)?;
    let current = data.records().last().map_or(data.grid().lowest(), |r| r.dose);
    let reports = reports(&data, &cfg, current)?;
    let text = match cfg.format {
        OutputFormat::Csv => report::fit_csv(&cfg.unit, &reports),
        OutputFormat::Json => json_text(&report::fit_json(&cfg.unit, cfg.pk_reference, &reports)),
    };
    emit(args.common.out.as_deref(), &text)
}

fn cmd_recommend(args: &RecommendArgs) -> anyhow::Result<()> {
    let cfg = args.common.resolve()?;
    let data = load_data(args.data.as_deref(), &cfg)?;
    if data.grid().index_of(args.current).is_none() {
        bail!("current dose {} is not on the configured dose grid", args.current);
    }
    let reports = reports(&data, &cfg, args.current)?;
    let text = match cfg.format {
        OutputFormat::Csv => report::recommend_csv(&reports),
        OutputFormat::Json => json_text(&report::recommend_json(&reports)),
    };
    emit(args.common.out.as_deref(), &text)
}

fn cmd_simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let mut cfg = args.common.resolve()?;
    if let Some(s) = &args.scenario {
        cfg.simulation.scenario = s.clone();
    }
    if let Some(n) = args.trials {
        cfg.simulation.trials = n;
    }
    if let Some(sd) = args.sd {
        cfg.simulation.pk_log_sd = Some(sd);
    }
    cfg.validate()?;
    let mut scenario = data::load_scenario(&cfg.simulation.scenario, cfg.grid.ref_dose)?;
    if let Some(sd) = cfg.simulation.pk_log_sd {
        scenario = scenario.with_pk_log_sd(sd);
    }
    scenario.validate()?;

    let design = cfg.design();
    let studies = cfg
        .model
        .kinds()
        .into_iter()
        .map(|kind| run_study(&scenario, kind, &design, cfg.simulation.trials, cfg.mcmc.seed))
        .collect::<blrmpk::Result<Vec<_>>>()?;
    for s in &studies {
        for a in &s.aborted {
            eprintln!("warning ({}): trial {} aborted: {}", s.kind.label(), a.index, a.reason);
        }
    }

    let (main, traces) = match cfg.format {
        OutputFormat::Csv => (report::oc_csv(&studies), report::traces_csv(&studies)),
        OutputFormat::Json => (
            json_text(&report::oc_json(&studies)),
            json_text(&report::traces_json(&studies)),
        ),
    };
    emit(args.common.out.as_deref(), &main)?;
    if let Some(p) = &args.traces {
        emit(Some(p), &traces)?;
    }
    if let Some(p) = &args.svg {
        emit(Some(p), &svg::allocation_chart(&studies))?;
    }
    Ok(())
}

fn cmd_datasets(args: &DatasetsArgs) -> anyhow::Result<()> {
    let text = match args.name.as_str() {
        "scenarios" => SCENARIOS_CSV,
        name => match BundledDataset::from_name(name) {
            Some(ds) => ds.csv(),
            None => bail!("unknown dataset `{name}` (available: app1, app2, scenarios)"),
        },
    };
    emit(args.out.as_deref(), text)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let sampler = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<blrmpk::Error>(), Some(blrmpk::Error::SamplerInit(_))));
    if sampler {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Recommend(a) => cmd_recommend(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Datasets(a) => cmd_datasets(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
