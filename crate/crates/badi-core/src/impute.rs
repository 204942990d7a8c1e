//! Geographically nested k-nearest-neighbor imputation.
//!
//! Missing cells are filled from the k nearest block groups in the same
//! census tract when at least one candidate exists there, otherwise from
//! the same county. Distance is Euclidean over the variables observed in
//! both records, computed on column-standardized values, always against
//! the pre-imputation snapshot (no chaining). Ties break on ascending
//! GEOID, and the output is geoid-sorted, so results do not depend on
//! input record order.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::census::variables::VARIABLE_COUNT;
use crate::census::BlockGroupRecord;
use crate::error::{Error, Result};
use crate::geo::GeoId;

/// Candidate pool for one imputed cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Tract,
    County,
}

impl std::fmt::Display for Pool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pool::Tract => "tract",
            Pool::County => "county",
        })
    }
}

/// Distance metric identifier. Only the co-observed Euclidean metric on
/// column-standardized values is defined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    CoObservedEuclidean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImputationConfig {
    pub k: usize,
    pub metric: DistanceMetric,
    pub pool_order: Vec<Pool>,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        ImputationConfig {
            k: 5,
            metric: DistanceMetric::CoObservedEuclidean,
            pool_order: vec![Pool::Tract, Pool::County],
        }
    }
}

impl ImputationConfig {
    pub fn with_k(k: usize) -> Self {
        ImputationConfig {
            k,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidValue("imputation k must be >= 1".to_string()));
        }
        if self.pool_order.is_empty() {
            return Err(Error::InvalidValue(
                "pool_order must be non-empty".to_string(),
            ));
        }
        Ok(())
    }
}

/// Trace of one imputed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub geoid: GeoId,
    pub variable: usize,
    pub pool: Pool,
    /// Chosen neighbors, nearest first.
    pub neighbors: Vec<GeoId>,
    pub value: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ImputationAudit {
    pub entries: Vec<AuditEntry>,
}

impl ImputationAudit {
    /// Emits the audit as delimited text:
    /// geoid, variable_index, pool, neighbor_geoids (semicolon-joined), value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "geoid",
            "variable_index",
            "pool",
            "neighbor_geoids",
            "value",
        ])?;
        for e in &self.entries {
            let neighbors = e
                .neighbors
                .iter()
                .map(|g| g.to_string())
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                e.geoid.to_string(),
                e.variable.to_string(),
                e.pool.to_string(),
                neighbors,
                format!("{}", e.value),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Column means and population SDs over observed values, for the distance
/// standardization. A zero-SD column standardizes to 0 everywhere and so
/// contributes nothing to any distance.
fn column_stats(records: &[BlockGroupRecord]) -> (Vec<f64>, Vec<f64>) {
    let mut means = vec![0.0; VARIABLE_COUNT];
    let mut sds = vec![0.0; VARIABLE_COUNT];
    for j in 0..VARIABLE_COUNT {
        let mut sum = 0.0;
        let mut count = 0usize;
        for rec in records {
            if let Some(x) = rec.variables[j] {
                sum += x;
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        let m = sum / count as f64;
        let mut ss = 0.0;
        for rec in records {
            if let Some(x) = rec.variables[j] {
                ss += (x - m) * (x - m);
            }
        }
        means[j] = m;
        sds[j] = (ss / count as f64).sqrt();
    }
    (means, sds)
}

/// Distance under the configured metric; +inf when the two records share
/// no observed variable.
fn distance(metric: DistanceMetric, a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    match metric {
        DistanceMetric::CoObservedEuclidean => {
            let mut sum = 0.0;
            let mut shared = 0usize;
            for j in 0..VARIABLE_COUNT {
                if let (Some(x), Some(y)) = (a[j], b[j]) {
                    let d = x - y;
                    sum += d * d;
                    shared += 1;
                }
            }
            if shared == 0 {
                f64::INFINITY
            } else {
                sum.sqrt()
            }
        }
    }
}

/// Fills every missing cell, returning the completed records
/// (geoid-sorted) and a per-cell audit.
pub fn knn_impute(
    records: &[BlockGroupRecord],
    cfg: &ImputationConfig,
) -> Result<(Vec<BlockGroupRecord>, ImputationAudit)> {
    cfg.validate()?;
    let mut sorted: Vec<BlockGroupRecord> = records.to_vec();
    sorted.sort_by(|a, b| a.geoid.cmp(&b.geoid));

    let (means, sds) = column_stats(&sorted);
    // standardized snapshot for distances; observed-only
    let z: Vec<Vec<Option<f64>>> = sorted
        .iter()
        .map(|rec| {
            (0..VARIABLE_COUNT)
                .map(|j| {
                    rec.variables[j].map(|x| {
                        if sds[j] > 0.0 {
                            (x - means[j]) / sds[j]
                        } else {
                            0.0
                        }
                    })
                })
                .collect()
        })
        .collect();

    // geography indices over the sorted snapshot
    let mut by_tract: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut by_county: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, rec) in sorted.iter().enumerate() {
        by_tract.entry(rec.geoid.tract_key()).or_default().push(i);
        by_county.entry(rec.geoid.county_key()).or_default().push(i);
    }

    let mut fills: Vec<(usize, usize, f64)> = Vec::new();
    let mut audit = ImputationAudit::default();

    for (i, rec) in sorted.iter().enumerate() {
        let missing: Vec<usize> = (0..VARIABLE_COUNT)
            .filter(|&j| rec.variables[j].is_none())
            .collect();
        if missing.is_empty() {
            continue;
        }
        if missing.len() == VARIABLE_COUNT {
            return Err(Error::NoObservedVariables {
                geoid: rec.geoid.to_string(),
            });
        }
        for &j in &missing {
            // tract pool first; the county pool is consulted only when the
            // tract pool has zero candidates for this cell
            let mut pool_used = None;
            let mut candidates: Vec<usize> = Vec::new();
            for pool in &cfg.pool_order {
                let members = match pool {
                    Pool::Tract => by_tract.get(rec.geoid.tract_key()),
                    Pool::County => by_county.get(rec.geoid.county_key()),
                };
                if let Some(members) = members {
                    candidates = members
                        .iter()
                        .copied()
                        .filter(|&p| p != i && sorted[p].variables[j].is_some())
                        .collect();
                }
                if !candidates.is_empty() {
                    pool_used = Some(*pool);
                    break;
                }
            }
            let Some(pool) = pool_used else {
                return Err(Error::UnimputableCell {
                    geoid: rec.geoid.to_string(),
                    variable: j,
                    county: rec.geoid.county_key().to_string(),
                });
            };

            let mut ranked: Vec<(f64, usize)> = candidates
                .into_iter()
                .map(|p| (distance(cfg.metric, &z[i], &z[p]), p))
                .collect();
            // ties in distance break on ascending GEOID, which is the
            // ascending snapshot index
            ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            ranked.truncate(cfg.k.min(ranked.len()));

            let mut sum = 0.0;
            for &(_, p) in &ranked {
                sum += sorted[p].variables[j].unwrap();
            }
            let value = sum / ranked.len() as f64;
            fills.push((i, j, value));
            audit.entries.push(AuditEntry {
                geoid: rec.geoid.clone(),
                variable: j,
                pool,
                neighbors: ranked
                    .iter()
                    .map(|&(_, p)| sorted[p].geoid.clone())
                    .collect(),
                value,
            });
        }
    }

    // apply after all cells are decided: distances never see imputed values
    for (i, j, value) in fills {
        sorted[i].variables[j] = Some(value);
    }
    for rec in &sorted {
        rec.validate().map_err(|e| {
            Error::InvalidValue(format!("imputed value violates domain invariant: {e}"))
        })?;
    }
    Ok((sorted, audit))
}
