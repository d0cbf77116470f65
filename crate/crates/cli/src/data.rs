//! Trial data and scenario files.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use blrmpk::simulator::{builtin_scenario, Scenario};
use blrmpk::{DoseGrid, ModelKind, SubjectRecord, TrialDataset};
use csv::{ReaderBuilder, Trim};

/// One data row with the file line it came from (header is line 1).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub line: u64,
    pub participant_id: u64,
    pub record: SubjectRecord,
}

fn positive(field: &str, raw: &str, line: u64) -> anyhow::Result<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|_| anyhow!("line {line}: {field} `{raw}` is not a number"))?;
    if !(v > 0.0 && v.is_finite()) {
        bail!("line {line}: {field} must be positive, got {raw}");
    }
    Ok(v)
}

/// Parses `participant_id,dose,dlt[,pk]`. The pk column, or individual pk
/// cells, may be left out; whether that is acceptable depends on the model.
pub fn parse_dataset(text: &str) -> anyhow::Result<Vec<DatasetRow>> {
    let mut reader = ReaderBuilder::new()
        .trim(Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .context("line 1: unreadable header")?
        .iter()
        .map(str::to_owned)
        .collect();
    let has_pk = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["participant_id", "dose", "dlt"] => false,
        ["participant_id", "dose", "dlt", "pk"] => true,
        _ => bail!("line 1: expected header `participant_id,dose,dlt,pk`, got `{}`", header.join(",")),
    };
    let width = header.len();

    let mut rows = Vec::new();
    for result in reader.records() {
        let rec = result.map_err(|e| match e.position() {
            Some(p) => anyhow!("line {}: {e}", p.line()),
            None => anyhow!("{e}"),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            bail!("line {line}: expected {width} fields, found {}", rec.len());
        }
        let participant_id = rec[0]
            .parse()
            .map_err(|_| anyhow!("line {line}: participant_id `{}` is not a non-negative integer", &rec[0]))?;
        let dose = positive("dose", &rec[1], line)?;
        let dlt = match &rec[2] {
            "0" => false,
            "1" => true,
            other => bail!("line {line}: dlt must be 0 or 1, got `{other}`"),
        };
        let pk = match has_pk && !rec[3].is_empty() {
            true => Some(positive("pk", &rec[3], line)?),
            false => None,
        };
        rows.push(DatasetRow { line, participant_id, record: SubjectRecord { dose, dlt, pk } });
    }
    Ok(rows)
}

/// Checks rows against the grid and the models, then rescales exposure.
pub fn build_dataset(
    rows: &[DatasetRow],
    grid: &DoseGrid,
    kinds: &[ModelKind],
    pk_reference: f64,
) -> anyhow::Result<TrialDataset> {
    let needs_pk = kinds.contains(&ModelKind::JointPk);
    for row in rows {
        if grid.index_of(row.record.dose).is_none() {
            bail!("line {}: dose {} is not on the configured dose grid", row.line, row.record.dose);
        }
        if needs_pk && row.record.pk.is_none() {
            bail!("line {}: pk is missing but the blrm-pk model needs it", row.line);
        }
    }
    let records = rows.iter().map(|r| r.record).collect();
    Ok(TrialDataset::new(records, grid.clone())?.with_pk_reference(pk_reference)?)
}

pub fn read_dataset(path: &Path) -> anyhow::Result<Vec<DatasetRow>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_dataset(&text).with_context(|| format!("in {}", path.display()))
}

/// A built-in scenario name, or a `dose,log_exposure,toxicity` file.
pub fn load_scenario(spec: &str, ref_dose: Option<f64>) -> anyhow::Result<Scenario> {
    let mut scenario = match builtin_scenario(spec) {
        Some(s) => s,
        None => {
            let path = Path::new(spec);
            if !path.is_file() {
                bail!("unknown scenario `{spec}` (built-in: scenario-1, scenario-2; or a scenario file)");
            }
            read_scenario_file(path)?
        }
    };
    if let Some(r) = ref_dose {
        scenario.grid = DoseGrid::new(scenario.grid.doses().to_vec(), Some(r))?;
    }
    Ok(scenario)
}

fn read_scenario_file(path: &Path) -> anyhow::Result<Scenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut reader = ReaderBuilder::new().trim(Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != ["dose", "log_exposure", "toxicity"] {
        bail!("{}: line 1: expected header `dose,log_exposure,toxicity`", path.display());
    }
    let (mut doses, mut exposure, mut tox) = (Vec::new(), Vec::new(), Vec::new());
    for result in reader.records() {
        let rec = result.with_context(|| format!("in {}", path.display()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize, name: &str| -> anyhow::Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| anyhow!("{}: line {line}: {name} `{}` is not a number", path.display(), &rec[i]))
        };
        doses.push(num(0, "dose")?);
        exposure.push(num(1, "log_exposure")?);
        tox.push(num(2, "toxicity")?);
    }
    let name = path.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned());
    let grid = DoseGrid::new(doses, None)?;
    Ok(Scenario::new(name, grid, exposure, tox, 0.5)?)
}
