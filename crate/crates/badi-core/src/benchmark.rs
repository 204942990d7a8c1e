//! Correlation benchmarking: index-vs-housing per county and metro area,
//! index-vs-outcome correlations at county and tract level, and the decile
//! Spearman variants.
//!
//! Joins are inner joins on GEOID prefixes with the joined n reported per
//! row; any group below the suppression threshold is listed with a reason
//! instead of silently dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::census::variables::{MEDIAN_HOME_VALUE, VARIABLES};
use crate::census::BlockGroupRecord;
use crate::error::{Error, Result};
use crate::geo::GeoId;
use crate::index::IndexScores;
use crate::stats::{self, QuantileSummary, MIN_CORRELATION_N};

/// Geographic level of a table; fixes the expected GEOID length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoLevel {
    County,
    Tract,
    BlockGroup,
}

impl GeoLevel {
    pub fn geoid_len(self) -> usize {
        match self {
            GeoLevel::County => 5,
            GeoLevel::Tract => 11,
            GeoLevel::BlockGroup => 12,
        }
    }

    /// The level's prefix of a block-group GEOID.
    pub fn prefix_of(self, geoid: &GeoId) -> &str {
        match self {
            GeoLevel::County => geoid.county_key(),
            GeoLevel::Tract => geoid.tract_key(),
            GeoLevel::BlockGroup => geoid.as_str(),
        }
    }
}

impl std::fmt::Display for GeoLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GeoLevel::County => "county",
            GeoLevel::Tract => "tract",
            GeoLevel::BlockGroup => "block_group",
        })
    }
}

/// Per-geography outcome values keyed by GEOID and measure name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub level: GeoLevel,
    values: BTreeMap<(String, String), f64>,
}

impl OutcomeTable {
    pub fn new(level: GeoLevel) -> Self {
        OutcomeTable {
            level,
            values: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, geoid: &str, measure: &str, value: f64) -> Result<()> {
        if geoid.len() != self.level.geoid_len() || !geoid.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::InvalidValue(format!(
                "geoid `{geoid}` is not a {}-digit {} key",
                self.level.geoid_len(),
                self.level
            )));
        }
        if !value.is_finite() {
            return Err(Error::InvalidValue(format!(
                "non-finite value for ({geoid}, {measure})"
            )));
        }
        let key = (geoid.to_string(), measure.to_string());
        if self.values.insert(key, value).is_some() {
            return Err(Error::InvalidValue(format!(
                "duplicate outcome cell ({geoid}, {measure})"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn measures(&self) -> BTreeSet<String> {
        self.values.keys().map(|(_, m)| m.clone()).collect()
    }

    /// geoid -> value series for one measure.
    pub fn series(&self, measure: &str) -> BTreeMap<String, f64> {
        self.values
            .iter()
            .filter(|((_, m), _)| m == measure)
            .map(|((g, _), v)| (g.clone(), *v))
            .collect()
    }

    /// Reads delimited text with columns geoid, measure, value.
    pub fn read_csv<R: Read>(reader: R, level: GeoLevel) -> Result<Self> {
        let mut csv_reader = csv::Reader::from_reader(reader);
        let headers = csv_reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (gi, mi, vi) = (col("geoid")?, col("measure")?, col("value")?);
        let mut table = OutcomeTable::new(level);
        for (i, row) in csv_reader.records().enumerate() {
            let row = row?;
            let value: f64 = row
                .get(vi)
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|_| Error::Row {
                    row: i + 1,
                    message: "bad value".to_string(),
                })?;
            table
                .insert(
                    row.get(gi).unwrap_or_default().trim(),
                    row.get(mi).unwrap_or_default().trim(),
                    value,
                )
                .map_err(|e| Error::Row {
                    row: i + 1,
                    message: e.to_string(),
                })?;
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["geoid", "measure", "value"])?;
        for ((g, m), v) in &self.values {
            w.write_record([g.as_str(), m.as_str(), &format!("{v}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Block-group median home values lifted out of census records, for the
/// housing-correlation analyses.
pub fn home_value_table(records: &[BlockGroupRecord]) -> Result<OutcomeTable> {
    let mut table = OutcomeTable::new(GeoLevel::BlockGroup);
    for rec in records {
        if let Some(v) = rec.variables[MEDIAN_HOME_VALUE] {
            table.insert(rec.geoid.as_str(), VARIABLES[MEDIAN_HOME_VALUE].name, v)?;
        }
    }
    Ok(table)
}

/// county FIPS -> metropolitan (CBSA) id and name; a county belongs to at
/// most one metro.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetroCrosswalk {
    map: BTreeMap<String, (String, String)>,
}

impl MetroCrosswalk {
    pub fn insert(&mut self, county: &str, metro_id: &str, name: &str) -> Result<()> {
        if county.len() != 5 || !county.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::InvalidValue(format!(
                "county key `{county}` is not a 5-digit FIPS"
            )));
        }
        if let Some((existing, _)) = self.map.get(county) {
            if existing != metro_id {
                return Err(Error::InvalidValue(format!(
                    "county {county} mapped to two metro areas: {existing} and {metro_id}"
                )));
            }
            return Ok(());
        }
        self.map
            .insert(county.to_string(), (metro_id.to_string(), name.to_string()));
        Ok(())
    }

    pub fn metro_of(&self, county: &str) -> Option<&(String, String)> {
        self.map.get(county)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Reads delimited text with columns county_fips, cbsa, name.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut csv_reader = csv::Reader::from_reader(reader);
        let headers = csv_reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (ci, bi, ni) = (col("county_fips")?, col("cbsa")?, col("name")?);
        let mut cw = MetroCrosswalk::default();
        for (i, row) in csv_reader.records().enumerate() {
            let row = row?;
            cw.insert(
                row.get(ci).unwrap_or_default().trim(),
                row.get(bi).unwrap_or_default().trim(),
                row.get(ni).unwrap_or_default().trim(),
            )
            .map_err(|e| Error::Row {
                row: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(cw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Pearson,
    SpearmanDecile,
}

impl std::fmt::Display for Statistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Statistic::Pearson => "pearson",
            Statistic::SpearmanDecile => "spearman_decile",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    /// national, county:XXXXX, or metro:ID
    pub group: String,
    pub measure: String,
    pub variant: String,
    pub statistic: Statistic,
    pub value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressedRow {
    pub group: String,
    pub measure: String,
    pub variant: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
    pub suppressed: Vec<SuppressedRow>,
}

impl CorrelationReport {
    pub fn merge(&mut self, other: CorrelationReport) {
        self.rows.extend(other.rows);
        self.suppressed.extend(other.suppressed);
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["group", "measure", "variant", "statistic", "value", "n"])?;
        for r in &self.rows {
            w.write_record([
                r.group.as_str(),
                r.measure.as_str(),
                r.variant.as_str(),
                &r.statistic.to_string(),
                &format!("{}", r.value),
                &r.n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Unweighted (or weighted, when `weights` given) mean of block-group
/// values per geography prefix.
pub fn aggregate(
    values: &BTreeMap<GeoId, f64>,
    level: GeoLevel,
    weights: Option<&BTreeMap<GeoId, f64>>,
) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for (geoid, value) in values {
        let w = weights.and_then(|m| m.get(geoid).copied()).unwrap_or(1.0);
        let entry = sums
            .entry(level.prefix_of(geoid).to_string())
            .or_insert((0.0, 0.0));
        entry.0 += w * value;
        entry.1 += w;
    }
    sums.into_iter()
        .filter(|(_, (_, wsum))| *wsum > 0.0)
        .map(|(k, (sum, wsum))| (k, sum / wsum))
        .collect()
}

/// Per-county mean of block-group values.
pub fn county_aggregate(
    values: &BTreeMap<GeoId, f64>,
    weights: Option<&BTreeMap<GeoId, f64>>,
) -> BTreeMap<String, f64> {
    aggregate(values, GeoLevel::County, weights)
}

fn correlate(statistic: Statistic, x: &[f64], y: &[f64]) -> std::result::Result<f64, String> {
    let computed = match statistic {
        Statistic::Pearson => stats::pearson(x, y),
        Statistic::SpearmanDecile => stats::spearman_decile(x, y),
    };
    computed.map_err(|e| e.to_string())
}

/// Pearson between block-group index scores and block-group median home
/// value, within each county; plus the five-number summary over county
/// correlations. Counties with fewer than 3 joined block groups are
/// suppressed.
pub fn housing_correlation_by_county(
    scores: &IndexScores,
    housing: &OutcomeTable,
) -> Result<(CorrelationReport, Option<QuantileSummary>)> {
    if housing.level != GeoLevel::BlockGroup {
        return Err(Error::InvalidValue(
            "housing table must be block-group level".to_string(),
        ));
    }
    let measure = VARIABLES[MEDIAN_HOME_VALUE].name;
    let home = housing.series(measure);
    let variant = scores.variant.to_string();

    let mut by_county: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for row in &scores.rows {
        if let Some(&hv) = home.get(row.geoid.as_str()) {
            by_county
                .entry(row.geoid.county_key())
                .or_default()
                .push((row.rescaled, hv));
        }
    }

    let mut report = CorrelationReport::default();
    let mut county_corrs = Vec::new();
    for (county, pairs) in by_county {
        let group = format!("county:{county}");
        if pairs.len() < MIN_CORRELATION_N {
            report.suppressed.push(SuppressedRow {
                group,
                measure: measure.to_string(),
                variant: variant.clone(),
                reason: format!("n = {} < {}", pairs.len(), MIN_CORRELATION_N),
            });
            continue;
        }
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        match correlate(Statistic::Pearson, &x, &y) {
            Ok(value) => {
                county_corrs.push(value);
                report.rows.push(CorrelationRow {
                    group,
                    measure: measure.to_string(),
                    variant: variant.clone(),
                    statistic: Statistic::Pearson,
                    value,
                    n: pairs.len(),
                });
            }
            Err(reason) => report.suppressed.push(SuppressedRow {
                group,
                measure: measure.to_string(),
                variant: variant.clone(),
                reason,
            }),
        }
    }
    let summary = if county_corrs.is_empty() {
        None
    } else {
        Some(stats::quantile_summary(&county_corrs))
    };
    Ok((report, summary))
}

/// Pooled Pearson between index scores and home value over all member
/// block groups of each metro area in the crosswalk.
pub fn housing_correlation_by_metro(
    scores: &IndexScores,
    housing: &OutcomeTable,
    crosswalk: &MetroCrosswalk,
) -> Result<CorrelationReport> {
    if housing.level != GeoLevel::BlockGroup {
        return Err(Error::InvalidValue(
            "housing table must be block-group level".to_string(),
        ));
    }
    let measure = VARIABLES[MEDIAN_HOME_VALUE].name;
    let home = housing.series(measure);
    let variant = scores.variant.to_string();

    let mut by_metro: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for row in &scores.rows {
        let Some((metro_id, _)) = crosswalk.metro_of(row.geoid.county_key()) else {
            continue;
        };
        if let Some(&hv) = home.get(row.geoid.as_str()) {
            by_metro
                .entry(metro_id.as_str())
                .or_default()
                .push((row.rescaled, hv));
        }
    }

    let mut report = CorrelationReport::default();
    for (metro, pairs) in by_metro {
        let group = format!("metro:{metro}");
        if pairs.len() < MIN_CORRELATION_N {
            report.suppressed.push(SuppressedRow {
                group,
                measure: measure.to_string(),
                variant: variant.clone(),
                reason: format!("n = {} < {}", pairs.len(), MIN_CORRELATION_N),
            });
            continue;
        }
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        match correlate(Statistic::Pearson, &x, &y) {
            Ok(value) => report.rows.push(CorrelationRow {
                group,
                measure: measure.to_string(),
                variant: variant.clone(),
                statistic: Statistic::Pearson,
                value,
                n: pairs.len(),
            }),
            Err(reason) => report.suppressed.push(SuppressedRow {
                group,
                measure: measure.to_string(),
                variant: variant.clone(),
                reason,
            }),
        }
    }
    Ok(report)
}

/// Correlation of one or more index value tables (bADI/ADI and any
/// externally supplied indices) with every measure in an outcome table.
/// Inner join on GEOID; one row per (variant, measure).
pub fn outcome_correlations(
    index_tables: &[(String, BTreeMap<String, f64>)],
    outcomes: &OutcomeTable,
    statistic: Statistic,
) -> Result<CorrelationReport> {
    let mut report = CorrelationReport::default();
    for measure in outcomes.measures() {
        let outcome_series = outcomes.series(&measure);
        for (variant, index_series) in index_tables {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (geoid, iv) in index_series {
                if let Some(&ov) = outcome_series.get(geoid) {
                    x.push(*iv);
                    y.push(ov);
                }
            }
            let min_n = match statistic {
                Statistic::Pearson => MIN_CORRELATION_N,
                Statistic::SpearmanDecile => 10,
            };
            if x.len() < min_n {
                report.suppressed.push(SuppressedRow {
                    group: "national".to_string(),
                    measure: measure.clone(),
                    variant: variant.clone(),
                    reason: format!("joined n = {} < {min_n}", x.len()),
                });
                continue;
            }
            match correlate(statistic, &x, &y) {
                Ok(value) => report.rows.push(CorrelationRow {
                    group: "national".to_string(),
                    measure: measure.clone(),
                    variant: variant.clone(),
                    statistic,
                    value,
                    n: x.len(),
                }),
                Err(reason) => report.suppressed.push(SuppressedRow {
                    group: "national".to_string(),
                    measure: measure.clone(),
                    variant: variant.clone(),
                    reason,
                }),
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geoid(s: &str) -> GeoId {
        GeoId::parse(s).unwrap()
    }

    fn rand_stream(mut state: u64) -> impl FnMut() -> f64 {
        move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    #[test]
    fn county_aggregate_means() {
        let mut values = BTreeMap::new();
        values.insert(geoid("010010001001"), 90.0);
        values.insert(geoid("010010001002"), 110.0);
        values.insert(geoid("020010001001"), 55.0);
        let agg = county_aggregate(&values, None);
        assert_eq!(agg["01001"], 100.0);
        assert_eq!(agg["02001"], 55.0);
    }

    #[test]
    fn county_aggregate_matches_group_by_oracle() {
        let mut next = rand_stream(41);
        let mut values = BTreeMap::new();
        for c in 0..7u32 {
            for b in 0..23u32 {
                let g = geoid(&format!("01{:03}0001{:03}", c + 1, b + 1));
                values.insert(g, next() * 200.0);
            }
        }
        let agg = county_aggregate(&values, None);
        // naive oracle
        let mut by_county: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (g, v) in &values {
            by_county
                .entry(g.county_key().to_string())
                .or_default()
                .push(*v);
        }
        for (county, vals) in by_county {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((agg[&county] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_aggregate_uses_weights() {
        let mut values = BTreeMap::new();
        values.insert(geoid("010010001001"), 0.0);
        values.insert(geoid("010010001002"), 100.0);
        let mut weights = BTreeMap::new();
        weights.insert(geoid("010010001001"), 1.0);
        weights.insert(geoid("010010001002"), 3.0);
        let agg = county_aggregate(&values, Some(&weights));
        assert!((agg["01001"] - 75.0).abs() < 1e-12);
    }

    #[test]
    fn outcome_table_validates_and_round_trips() {
        let mut t = OutcomeTable::new(GeoLevel::County);
        t.insert("01001", "life_expectancy", 78.4).unwrap();
        assert!(t.insert("01001", "life_expectancy", 80.0).is_err()); // duplicate
        assert!(t.insert("0100", "life_expectancy", 80.0).is_err()); // wrong length
        t.insert("01003", "life_expectancy", 74.1).unwrap();

        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = OutcomeTable::read_csv(buf.as_slice(), GeoLevel::County).unwrap();
        assert_eq!(back.series("life_expectancy"), t.series("life_expectancy"));
    }

    #[test]
    fn crosswalk_rejects_conflicting_mapping() {
        let mut cw = MetroCrosswalk::default();
        cw.insert("36005", "35620", "New York-Newark-Jersey City")
            .unwrap();
        // same mapping repeated is fine
        cw.insert("36005", "35620", "New York-Newark-Jersey City")
            .unwrap();
        assert!(cw
            .insert("36005", "14460", "Boston-Cambridge-Newton")
            .is_err());
    }

    fn scores_from(values: &[(&str, f64)]) -> IndexScores {
        use crate::index::{IndexVariant, ScoreRow};
        IndexScores {
            variant: IndexVariant::Badi,
            rows: values
                .iter()
                .map(|(g, v)| ScoreRow {
                    geoid: geoid(g),
                    raw: *v,
                    rescaled: *v,
                    percentile: 1,
                    state_decile: 1,
                    quintile: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn county_housing_correlation_perfect_when_equal() {
        let scores = scores_from(&[
            ("010010001001", 1.0),
            ("010010001002", 2.0),
            ("010010001003", 5.0),
        ]);
        let mut housing = OutcomeTable::new(GeoLevel::BlockGroup);
        for row in &scores.rows {
            housing
                .insert(
                    row.geoid.as_str(),
                    VARIABLES[MEDIAN_HOME_VALUE].name,
                    row.rescaled,
                )
                .unwrap();
        }
        let (report, summary) = housing_correlation_by_county(&scores, &housing).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!((report.rows[0].value - 1.0).abs() < 1e-12);
        let s = summary.unwrap();
        assert_eq!(s.min, s.max);
    }

    #[test]
    fn county_below_threshold_is_suppressed() {
        let scores = scores_from(&[("010010001001", 1.0), ("010010001002", 2.0)]);
        let mut housing = OutcomeTable::new(GeoLevel::BlockGroup);
        housing
            .insert("010010001001", VARIABLES[MEDIAN_HOME_VALUE].name, 5.0)
            .unwrap();
        housing
            .insert("010010001002", VARIABLES[MEDIAN_HOME_VALUE].name, 9.0)
            .unwrap();
        let (report, summary) = housing_correlation_by_county(&scores, &housing).unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(report.suppressed.len(), 1);
        assert!(report.suppressed[0].reason.contains("n = 2"));
        assert!(summary.is_none());
    }

    #[test]
    fn independent_index_and_housing_have_small_median_correlation() {
        let mut next = rand_stream(4242);
        let mut rows = Vec::new();
        let mut housing = OutcomeTable::new(GeoLevel::BlockGroup);
        for c in 0..9u32 {
            for b in 0..1000u32 {
                let g = format!("01{:03}0{:03}{:03}", c + 1, b / 100, b % 1000);
                rows.push((g.clone(), next() * 10.0));
                housing
                    .insert(
                        &g,
                        VARIABLES[MEDIAN_HOME_VALUE].name,
                        100000.0 + next() * 300000.0,
                    )
                    .unwrap();
            }
        }
        let refs: Vec<(&str, f64)> = rows.iter().map(|(g, v)| (g.as_str(), *v)).collect();
        let scores = scores_from(&refs);
        let (report, summary) = housing_correlation_by_county(&scores, &housing).unwrap();
        assert_eq!(report.rows.len(), 9);
        let med = summary.unwrap().q2.abs();
        assert!(
            med < 0.1,
            "median |correlation| {med} too large for independent data"
        );
    }

    #[test]
    fn metro_of_one_county_equals_county_correlation() {
        let mut next = rand_stream(7);
        let mut pairs = Vec::new();
        let mut housing = OutcomeTable::new(GeoLevel::BlockGroup);
        for b in 0..50u32 {
            let g = format!("360050001{:03}", b + 1);
            let v = next() * 10.0;
            pairs.push((g.clone(), v));
            housing
                .insert(
                    &g,
                    VARIABLES[MEDIAN_HOME_VALUE].name,
                    50000.0 + v * 20000.0 + next(),
                )
                .unwrap();
        }
        let refs: Vec<(&str, f64)> = pairs.iter().map(|(g, v)| (g.as_str(), *v)).collect();
        let scores = scores_from(&refs);
        let mut cw = MetroCrosswalk::default();
        cw.insert("36005", "35620", "New York-Newark-Jersey City")
            .unwrap();

        let (county_report, _) = housing_correlation_by_county(&scores, &housing).unwrap();
        let metro_report = housing_correlation_by_metro(&scores, &housing, &cw).unwrap();
        assert_eq!(metro_report.rows.len(), 1);
        assert!((metro_report.rows[0].value - county_report.rows[0].value).abs() < 1e-15);
    }

    #[test]
    fn metro_pools_counties_like_concatenation_oracle() {
        let mut next = rand_stream(13);
        let mut pairs = Vec::new();
        let mut housing = OutcomeTable::new(GeoLevel::BlockGroup);
        for (county, base) in [("36005", 100000.0), ("36047", 400000.0)] {
            for b in 0..40u32 {
                let g = format!("{county}0001{:03}", b + 1);
                let v = next() * 10.0;
                pairs.push((g.clone(), v));
                housing
                    .insert(
                        &g,
                        VARIABLES[MEDIAN_HOME_VALUE].name,
                        base + v * 30000.0 + next() * 5000.0,
                    )
                    .unwrap();
            }
        }
        let refs: Vec<(&str, f64)> = pairs.iter().map(|(g, v)| (g.as_str(), *v)).collect();
        let scores = scores_from(&refs);
        let mut cw = MetroCrosswalk::default();
        cw.insert("36005", "35620", "NY metro").unwrap();
        cw.insert("36047", "35620", "NY metro").unwrap();

        let report = housing_correlation_by_metro(&scores, &housing, &cw).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].n, 80);

        // concatenate-and-correlate oracle
        let x: Vec<f64> = scores.rows.iter().map(|r| r.rescaled).collect();
        let home = housing.series(VARIABLES[MEDIAN_HOME_VALUE].name);
        let y: Vec<f64> = scores.rows.iter().map(|r| home[r.geoid.as_str()]).collect();
        let oracle = stats::pearson(&x, &y).unwrap();
        assert!((report.rows[0].value - oracle).abs() < 1e-12);
    }

    #[test]
    fn outcome_correlation_with_itself_is_one() {
        let mut index = BTreeMap::new();
        let mut outcomes = OutcomeTable::new(GeoLevel::County);
        for c in 0..20u32 {
            let key = format!("01{:03}", c + 1);
            let v = c as f64 * 1.3 + 1.0;
            index.insert(key.clone(), v);
            outcomes.insert(&key, "self", v).unwrap();
        }
        let tables = vec![("bADI".to_string(), index)];
        let report = outcome_correlations(&tables, &outcomes, Statistic::Pearson).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!((report.rows[0].value - 1.0).abs() < 1e-12);
        assert_eq!(report.rows[0].n, 20);
    }

    #[test]
    fn monotone_outcome_has_unit_decile_spearman() {
        let mut next = rand_stream(77);
        let mut index = BTreeMap::new();
        let mut outcomes = OutcomeTable::new(GeoLevel::Tract);
        for c in 0..3000u32 {
            let key = format!("01001{:06}", c + 1);
            let v = next() * 50.0;
            index.insert(key.clone(), v);
            outcomes
                .insert(&key, "warped", (v * 0.3).exp() + v)
                .unwrap();
        }
        let tables = vec![("bADI".to_string(), index)];
        let report = outcome_correlations(&tables, &outcomes, Statistic::SpearmanDecile).unwrap();
        assert!(report.rows[0].value > 0.99);
    }

    #[test]
    fn inner_join_reports_shrunken_n_and_suppresses_tiny_joins() {
        let mut index = BTreeMap::new();
        for c in 0..10u32 {
            index.insert(format!("01{:03}", c + 1), c as f64);
        }
        let mut outcomes = OutcomeTable::new(GeoLevel::County);
        // only two shared geoids
        outcomes.insert("01001", "m", 1.0).unwrap();
        outcomes.insert("01002", "m", 2.0).unwrap();
        outcomes.insert("09001", "m", 3.0).unwrap();
        let tables = vec![("bADI".to_string(), index)];
        let report = outcome_correlations(&tables, &outcomes, Statistic::Pearson).unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(report.suppressed.len(), 1);
        assert!(report.suppressed[0].reason.contains("joined n = 2"));
    }

    #[test]
    fn report_is_independent_of_input_row_order() {
        let mut next = rand_stream(99);
        let mut entries: Vec<(String, f64, f64)> = (0..60)
            .map(|c| (format!("01{:03}", c + 1), next() * 10.0, next() * 5.0))
            .collect();
        let build = |entries: &[(String, f64, f64)]| {
            let mut index = BTreeMap::new();
            let mut outcomes = OutcomeTable::new(GeoLevel::County);
            for (g, iv, ov) in entries {
                index.insert(g.clone(), *iv);
                outcomes.insert(g, "m", *ov).unwrap();
            }
            let tables = vec![("bADI".to_string(), index)];
            outcome_correlations(&tables, &outcomes, Statistic::Pearson).unwrap()
        };
        let r1 = build(&entries);
        entries.reverse();
        let r2 = build(&entries);
        assert_eq!(r1.rows, r2.rows);
    }
}
