//! Bundled example trials and simulation truth tables.

use crate::error::{Error, Result};
use crate::model::{DoseGrid, SubjectRecord, TrialDataset};

/// 20-subject trial in which exposure rises steadily with dose.
pub const APP1_CSV: &str = include_str!("../data/app1.csv");
/// 39-subject trial in which subjects with and without DLTs have similar exposure.
pub const APP2_CSV: &str = include_str!("../data/app2.csv");
/// Per-dose true log exposure and DLT probability of the two simulation scenarios.
pub const SCENARIOS_CSV: &str = include_str!("../data/scenarios.csv");

pub const DATASET_HEADER: &str = "participant_id,dose,dlt,pk";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BundledDataset {
    App1,
    App2,
}

impl BundledDataset {
    pub const ALL: [BundledDataset; 2] = [BundledDataset::App1, BundledDataset::App2];

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "app1" => Some(Self::App1),
            "app2" => Some(Self::App2),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::App1 => "app1",
            Self::App2 => "app2",
        }
    }

    pub fn csv(self) -> &'static str {
        match self {
            Self::App1 => APP1_CSV,
            Self::App2 => APP2_CSV,
        }
    }

    /// Planned dose levels of the trial; the top level is the reference dose.
    pub fn grid(self) -> DoseGrid {
        let doses = match self {
            Self::App1 => vec![0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 50.0],
            Self::App2 => vec![0.13, 0.33, 0.83, 1.40, 1.87, 2.10, 2.47, 2.80, 3.20],
        };
        DoseGrid::new(doses, None).expect("bundled grid is valid")
    }

    pub fn records(self) -> Vec<SubjectRecord> {
        parse_dataset_csv(self.csv())
            .expect("bundled dataset parses")
            .into_iter()
            .map(|(_, r)| r)
            .collect()
    }

    pub fn dataset(self) -> TrialDataset {
        TrialDataset::new(self.records(), self.grid()).expect("bundled dataset matches its grid")
    }
}

/// Minimal reader for the bundled `participant_id,dose,dlt,pk` tables.
/// Line numbers in errors are 1-based and count the header.
pub fn parse_dataset_csv(text: &str) -> Result<Vec<(u64, SubjectRecord)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == DATASET_HEADER => {}
        _ => return Err(Error::Domain(format!("expected header `{DATASET_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Domain(format!("line {}: {what}", i + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let id = fields[0].parse().map_err(|_| bad("bad participant_id"))?;
        let dose: f64 = fields[1].parse().map_err(|_| bad("bad dose"))?;
        let dlt = match fields[2] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("dlt must be 0 or 1")),
        };
        let pk = if fields[3].is_empty() {
            None
        } else {
            Some(fields[3].parse::<f64>().map_err(|_| bad("bad pk"))?)
        };
        out.push((id, SubjectRecord { dose, dlt, pk }));
    }
    Ok(out)
}

/// Rows of the scenario truth table: `(scenario, dose, log_exposure, toxicity)`.
pub fn scenario_rows() -> Vec<(u32, f64, f64, f64)> {
    SCENARIOS_CSV
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].parse().expect("scenario id"),
                f[1].parse().expect("dose"),
                f[2].parse().expect("log exposure"),
                f[3].parse().expect("toxicity"),
            )
        })
        .collect()
}
