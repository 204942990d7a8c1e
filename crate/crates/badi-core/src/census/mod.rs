//! Block-group data model, reliability filtering, and derived variables.

pub mod parse;
pub mod variables;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoId;
use variables::{VariableKind, VARIABLES, VARIABLE_COUNT};

/// One census block group: geography, reliability counts, and the
/// 17 constructing variables with per-entry missingness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockGroupRecord {
    pub geoid: GeoId,
    pub population: u64,
    pub housing_units: u64,
    /// Fraction of the population living in group quarters, in [0, 1].
    pub group_quarters_pct: f64,
    /// Fixed-order 17-vector; `None` marks a missing value.
    pub variables: Vec<Option<f64>>,
}

impl BlockGroupRecord {
    pub fn new(
        geoid: GeoId,
        population: u64,
        housing_units: u64,
        group_quarters_pct: f64,
        variables: Vec<Option<f64>>,
    ) -> Result<Self> {
        let rec = BlockGroupRecord {
            geoid,
            population,
            housing_units,
            group_quarters_pct,
            variables,
        };
        rec.validate()?;
        Ok(rec)
    }

    /// Checks the domain invariants: vector length, percentage ranges,
    /// positive dollar values, group-quarters fraction in [0, 1].
    pub fn validate(&self) -> Result<()> {
        if self.variables.len() != VARIABLE_COUNT {
            return Err(Error::InvalidValue(format!(
                "{}: expected {} variables, got {}",
                self.geoid,
                VARIABLE_COUNT,
                self.variables.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.group_quarters_pct) {
            return Err(Error::InvalidValue(format!(
                "{}: group_quarters_pct {} outside [0, 1]",
                self.geoid, self.group_quarters_pct
            )));
        }
        for (j, value) in self.variables.iter().enumerate() {
            let Some(x) = value else { continue };
            if !x.is_finite() {
                return Err(Error::InvalidValue(format!(
                    "{}: variable {} ({}) is not finite",
                    self.geoid, j, VARIABLES[j].name
                )));
            }
            match VARIABLES[j].kind {
                VariableKind::Percent if !(0.0..=100.0).contains(x) => {
                    return Err(Error::InvalidValue(format!(
                        "{}: {} = {} outside [0, 100]",
                        self.geoid, VARIABLES[j].name, x
                    )));
                }
                VariableKind::Dollars if *x <= 0.0 => {
                    return Err(Error::InvalidValue(format!(
                        "{}: {} = {} must be > 0",
                        self.geoid, VARIABLES[j].name, x
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn missing_count(&self) -> usize {
        self.variables.iter().filter(|v| v.is_none()).count()
    }
}

/// Income disparity: natural log of 100 times the ratio of households
/// with income under $10,000 to households with income of $50,000 or more.
///
/// Returns `None` when either count is zero — the log is degenerate there
/// and the cell is left for imputation.
pub fn compute_income_disparity(under_10k: u64, at_least_50k: u64) -> Option<f64> {
    if under_10k == 0 || at_least_50k == 0 {
        return None;
    }
    Some((100.0 * under_10k as f64 / at_least_50k as f64).ln())
}

/// Why a block group was removed by the reliability filter.
/// `Display` gives the stable wire token used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    LowPopulation,
    LowHousing,
    HighGroupQuarters,
}

impl std::fmt::Display for FilterReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FilterReason::LowPopulation => "low_population",
            FilterReason::LowHousing => "low_housing",
            FilterReason::HighGroupQuarters => "high_group_quarters",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: Vec<GeoId>,
    pub removed: Vec<(GeoId, FilterReason)>,
}

pub const MIN_POPULATION: u64 = 100;
pub const MIN_HOUSING_UNITS: u64 = 30;
pub const MAX_GROUP_QUARTERS: f64 = 1.0 / 3.0;

/// Classifies one record against the reliability rules, first match wins:
/// population < 100, then housing units < 30, then group quarters > 1/3.
pub fn filter_reason(rec: &BlockGroupRecord) -> Option<FilterReason> {
    if rec.population < MIN_POPULATION {
        Some(FilterReason::LowPopulation)
    } else if rec.housing_units < MIN_HOUSING_UNITS {
        Some(FilterReason::LowHousing)
    } else if rec.group_quarters_pct > MAX_GROUP_QUARTERS {
        Some(FilterReason::HighGroupQuarters)
    } else {
        None
    }
}

/// Splits records into kept and removed sets per the reliability rules.
pub fn filter_block_groups(records: &[BlockGroupRecord]) -> FilterReport {
    let mut report = FilterReport::default();
    for rec in records {
        match filter_reason(rec) {
            None => report.kept.push(rec.geoid.clone()),
            Some(reason) => report.removed.push((rec.geoid.clone(), reason)),
        }
    }
    report
}

/// Applies the filter and returns the surviving records, geoid-sorted.
pub fn apply_filter(records: Vec<BlockGroupRecord>) -> (Vec<BlockGroupRecord>, FilterReport) {
    let report = filter_block_groups(&records);
    let mut kept: Vec<BlockGroupRecord> = records
        .into_iter()
        .filter(|r| filter_reason(r).is_none())
        .collect();
    kept.sort_by(|a, b| a.geoid.cmp(&b.geoid));
    (kept, report)
}

// --- canonical intermediate format: one JSON object per line ---

#[derive(Serialize, Deserialize)]
struct RecordLine {
    geoid: String,
    population: u64,
    housing_units: u64,
    group_quarters_pct: f64,
    variables: Vec<Option<f64>>,
}

/// Writes records in the canonical line-delimited JSON format.
pub fn write_records<W: Write>(mut w: W, records: &[BlockGroupRecord]) -> Result<()> {
    for rec in records {
        let line = RecordLine {
            geoid: rec.geoid.to_string(),
            population: rec.population,
            housing_units: rec.housing_units,
            group_quarters_pct: rec.group_quarters_pct,
            variables: rec.variables.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads records from the canonical line-delimited JSON format.
pub fn read_records<R: BufRead>(r: R) -> Result<Vec<BlockGroupRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(&line).map_err(|e| Error::Row {
            row: i + 1,
            message: e.to_string(),
        })?;
        let geoid = GeoId::parse(&parsed.geoid).map_err(|e| Error::Row {
            row: i + 1,
            message: e.to_string(),
        })?;
        let rec = BlockGroupRecord::new(
            geoid,
            parsed.population,
            parsed.housing_units,
            parsed.group_quarters_pct,
            parsed.variables,
        )
        .map_err(|e| Error::Row {
            row: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
