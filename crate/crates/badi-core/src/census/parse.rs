//! Delimited-text ingestion of block-group tables.
//!
//! Input is any delimited file with a header row; a [`TableSchema`] maps
//! logical fields to column names so callers can ingest extracts whose
//! headers do not match the canonical names.

use std::collections::BTreeSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::census::variables::{VARIABLES, VARIABLE_COUNT};
use crate::census::{compute_income_disparity, BlockGroupRecord};
use crate::error::{Error, Result};
use crate::geo::GeoId;

/// Where one of the 17 variables comes from in the input table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableSource {
    /// A single column holding the already-reduced value.
    Column(String),
    /// Household income bracket counts, reduced to the income-disparity
    /// log ratio at parse time.
    IncomeBrackets {
        under_10k: String,
        at_least_50k: String,
    },
}

/// Column mapping for a block-group table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableSchema {
    pub geoid: String,
    pub population: String,
    pub housing_units: String,
    /// Count of persons living in group quarters; reduced to a fraction
    /// of the population at parse time.
    pub group_quarters: String,
    /// One source per canonical variable slot, in canonical order.
    pub variables: Vec<VariableSource>,
}

impl Default for TableSchema {
    fn default() -> Self {
        TableSchema {
            geoid: "geoid".to_string(),
            population: "population".to_string(),
            housing_units: "housing_units".to_string(),
            group_quarters: "group_quarters".to_string(),
            variables: VARIABLES
                .iter()
                .map(|v| VariableSource::Column(v.name.to_string()))
                .collect(),
        }
    }
}

impl TableSchema {
    /// Validates shape: 17 sources, no duplicate slots.
    pub fn validate(&self) -> Result<()> {
        if self.variables.len() != VARIABLE_COUNT {
            return Err(Error::Schema(format!(
                "schema must map all {} variables, got {}",
                VARIABLE_COUNT,
                self.variables.len()
            )));
        }
        Ok(())
    }

    /// Canonical header for emitting a table this schema can re-read.
    pub fn header(&self) -> Vec<String> {
        let mut cols = vec![
            self.geoid.clone(),
            self.population.clone(),
            self.housing_units.clone(),
            self.group_quarters.clone(),
        ];
        for source in &self.variables {
            match source {
                VariableSource::Column(c) => cols.push(c.clone()),
                VariableSource::IncomeBrackets {
                    under_10k,
                    at_least_50k,
                } => {
                    cols.push(under_10k.clone());
                    cols.push(at_least_50k.clone());
                }
            }
        }
        cols
    }
}

/// Cell values treated as missing: blanks, common NA spellings, and the
/// ACS annotation sentinels (-666666666 and friends).
fn is_missing_cell(cell: &str) -> bool {
    let t = cell.trim();
    if t.is_empty() {
        return true;
    }
    matches!(
        t.to_ascii_lowercase().as_str(),
        "na" | "n/a" | "null" | "nan" | "."
    ) || matches!(t, "-666666666" | "-888888888" | "-999999999")
}

fn parse_f64(cell: &str, row: usize, col: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::Row {
        row,
        message: format!("column `{col}`: cannot parse `{cell}` as a number"),
    })
}

fn parse_count(cell: &str, row: usize, col: &str) -> Result<u64> {
    let x = parse_f64(cell, row, col)?;
    if x < 0.0 || x.fract() != 0.0 {
        return Err(Error::Row {
            row,
            message: format!("column `{col}`: `{cell}` is not a non-negative integer"),
        });
    }
    Ok(x as u64)
}

struct ResolvedSchema {
    geoid: usize,
    population: usize,
    housing_units: usize,
    group_quarters: usize,
    variables: Vec<ResolvedSource>,
}

enum ResolvedSource {
    Column(usize, String),
    IncomeBrackets {
        under_10k: (usize, String),
        at_least_50k: (usize, String),
    },
}

fn resolve(headers: &csv::StringRecord, schema: &TableSchema) -> Result<ResolvedSchema> {
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let mut variables = Vec::with_capacity(VARIABLE_COUNT);
    for source in &schema.variables {
        variables.push(match source {
            VariableSource::Column(c) => ResolvedSource::Column(find(c)?, c.clone()),
            VariableSource::IncomeBrackets {
                under_10k,
                at_least_50k,
            } => ResolvedSource::IncomeBrackets {
                under_10k: (find(under_10k)?, under_10k.clone()),
                at_least_50k: (find(at_least_50k)?, at_least_50k.clone()),
            },
        });
    }
    Ok(ResolvedSchema {
        geoid: find(&schema.geoid)?,
        population: find(&schema.population)?,
        housing_units: find(&schema.housing_units)?,
        group_quarters: find(&schema.group_quarters)?,
        variables,
    })
}

/// Parses a delimited block-group table into records.
///
/// Row numbers in errors are 1-based data rows (the header is row 0).
/// Duplicate GEOIDs are rejected; blank and sentinel cells become
/// missing flags.
pub fn parse_block_groups<R: Read>(
    reader: R,
    schema: &TableSchema,
    delimiter: u8,
) -> Result<Vec<BlockGroupRecord>> {
    schema.validate()?;
    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(false)
        .from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let resolved = resolve(&headers, schema)?;

    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, row_result) in csv_reader.records().enumerate() {
        let row_num = i + 1;
        let row = row_result?;
        let get = |idx: usize| row.get(idx).unwrap_or("");

        let geoid_cell = get(resolved.geoid).trim();
        let geoid = GeoId::parse(geoid_cell).map_err(|e| Error::Row {
            row: row_num,
            message: e.to_string(),
        })?;
        if !seen.insert(geoid.clone()) {
            return Err(Error::Row {
                row: row_num,
                message: format!("duplicate GEOID {geoid}"),
            });
        }

        let population = parse_count(get(resolved.population), row_num, &schema.population)?;
        let housing_units =
            parse_count(get(resolved.housing_units), row_num, &schema.housing_units)?;
        let gq_count = parse_count(
            get(resolved.group_quarters),
            row_num,
            &schema.group_quarters,
        )?;
        // population 0 => 0%; such rows fall to the population filter anyway
        let group_quarters_pct = if population == 0 {
            0.0
        } else {
            gq_count as f64 / population as f64
        };

        let mut values: Vec<Option<f64>> = Vec::with_capacity(VARIABLE_COUNT);
        for source in &resolved.variables {
            values.push(match source {
                ResolvedSource::Column(idx, name) => {
                    let cell = get(*idx);
                    if is_missing_cell(cell) {
                        None
                    } else {
                        Some(parse_f64(cell, row_num, name)?)
                    }
                }
                ResolvedSource::IncomeBrackets {
                    under_10k,
                    at_least_50k,
                } => {
                    let lo = get(under_10k.0);
                    let hi = get(at_least_50k.0);
                    if is_missing_cell(lo) || is_missing_cell(hi) {
                        None
                    } else {
                        let under = parse_count(lo, row_num, &under_10k.1)?;
                        let over = parse_count(hi, row_num, &at_least_50k.1)?;
                        compute_income_disparity(under, over)
                    }
                }
            });
        }

        let record =
            BlockGroupRecord::new(geoid, population, housing_units, group_quarters_pct, values)
                .map_err(|e| Error::Row {
                    row: row_num,
                    message: e.to_string(),
                })?;
        records.push(record);
    }
    Ok(records)
}

/// Writes records as a delimited table readable with the same schema.
/// Only `VariableSource::Column` schemas can round-trip; bracket sources
/// were reduced at parse time.
pub fn write_block_groups<W: std::io::Write>(
    writer: W,
    records: &[BlockGroupRecord],
    schema: &TableSchema,
    delimiter: u8,
) -> Result<()> {
    schema.validate()?;
    for source in &schema.variables {
        if let VariableSource::IncomeBrackets { .. } = source {
            return Err(Error::Schema(
                "cannot emit a table through a bracket-count schema".to_string(),
            ));
        }
    }
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(writer);
    w.write_record(schema.header())?;
    for rec in records {
        let mut row: Vec<String> = vec![
            rec.geoid.to_string(),
            rec.population.to_string(),
            rec.housing_units.to_string(),
            // emit the count so the table re-parses through the same schema
            ((rec.group_quarters_pct * rec.population as f64).round() as u64).to_string(),
        ];
        for value in &rec.variables {
            row.push(match value {
                Some(x) => format!("{x}"),
                None => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::census::variables::{INCOME_DISPARITY, MEDIAN_HOME_VALUE};

    fn full_row_csv() -> String {
        let schema = TableSchema::default();
        let mut header = schema.header().join(",");
        header.push('\n');
        // 17 canonical values, all present
        let values = [
            "65000", "1.2", "12", "20", "15", "8", "4", "2", "60", "5", "1500", "1100", "250000",
            "45", "6", "13", "87",
        ];
        header.push_str(&format!("360050001001,1200,400,60,{}\n", values.join(",")));
        header
    }

    #[test]
    fn parses_fully_populated_row() {
        let records =
            parse_block_groups(full_row_csv().as_bytes(), &TableSchema::default(), b',').unwrap();
        assert_eq!(records.len(), 1);
        let rec = &records[0];
        assert_eq!(rec.geoid.to_string(), "360050001001");
        assert_eq!(rec.missing_count(), 0);
        assert_eq!(rec.population, 1200);
        assert!((rec.group_quarters_pct - 0.05).abs() < 1e-12);
        assert_eq!(rec.variables[MEDIAN_HOME_VALUE], Some(250000.0));
    }

    #[test]
    fn blank_cell_sets_single_missing_flag() {
        let csv_text = full_row_csv().replace("250000", "");
        let records =
            parse_block_groups(csv_text.as_bytes(), &TableSchema::default(), b',').unwrap();
        let rec = &records[0];
        assert_eq!(rec.missing_count(), 1);
        assert_eq!(rec.variables[MEDIAN_HOME_VALUE], None);
        assert!(rec.variables[MEDIAN_HOME_VALUE - 1].is_some());
    }

    #[test]
    fn missing_population_column_is_fatal_and_named() {
        let csv_text = full_row_csv().replace("population", "people");
        let err =
            parse_block_groups(csv_text.as_bytes(), &TableSchema::default(), b',').unwrap_err();
        match err {
            Error::MissingColumn(name) => assert_eq!(name, "population"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn malformed_geoid_reports_row_number() {
        let csv_text = full_row_csv().replace("360050001001", "36005001");
        let err =
            parse_block_groups(csv_text.as_bytes(), &TableSchema::default(), b',').unwrap_err();
        match err {
            Error::Row { row, message } => {
                assert_eq!(row, 1);
                assert!(message.contains("36005001"));
            }
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_geoid_rejected() {
        let mut csv_text = full_row_csv();
        let data_line = csv_text.lines().nth(1).unwrap().to_string();
        csv_text.push_str(&data_line);
        csv_text.push('\n');
        let err =
            parse_block_groups(csv_text.as_bytes(), &TableSchema::default(), b',').unwrap_err();
        assert!(matches!(err, Error::Row { row: 2, .. }));
    }

    #[test]
    fn bracket_counts_reduce_to_disparity() {
        let mut schema = TableSchema::default();
        schema.variables[INCOME_DISPARITY] = VariableSource::IncomeBrackets {
            under_10k: "b19001_under10k".to_string(),
            at_least_50k: "b19001_50k_plus".to_string(),
        };
        let header = schema.header().join(",");
        let values = [
            "65000", "12", "20", "15", "8", "4", "2", "60", "5", "1500", "1100", "250000", "45",
            "6", "13", "87",
        ];
        let csv_text = format!(
            "{header}\n360050001001,1200,400,60,65000,40,40,{}\n",
            values[1..].join(",")
        );
        let records = parse_block_groups(csv_text.as_bytes(), &schema, b',').unwrap();
        let d = records[0].variables[INCOME_DISPARITY].unwrap();
        assert!((d - 100f64.ln()).abs() < 1e-12);

        // zero >=50k households: degenerate log, marked missing
        let csv_text = format!(
            "{header}\n360050001001,1200,400,60,65000,40,0,{}\n",
            values[1..].join(",")
        );
        let records = parse_block_groups(csv_text.as_bytes(), &schema, b',').unwrap();
        assert_eq!(records[0].variables[INCOME_DISPARITY], None);
    }

    #[test]
    fn tab_delimiter_and_round_trip() {
        let schema = TableSchema::default();
        let records = parse_block_groups(full_row_csv().as_bytes(), &schema, b',').unwrap();
        let mut buf = Vec::new();
        write_block_groups(&mut buf, &records, &schema, b'\t').unwrap();
        let back = parse_block_groups(buf.as_slice(), &schema, b'\t').unwrap();
        assert_eq!(back, records);
    }
}
