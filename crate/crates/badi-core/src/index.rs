//! Index construction: Z-score standardization, single-factor principal
//! factoring, score coefficients, mean-100/SD-20 rescaling, and ranking
//! into national percentiles, state deciles, and national quintiles.
//!
//! Two variants share the rescale/rank tail. bADI standardizes the 17
//! variables and derives weights from the leading factor of the reduced
//! correlation matrix (W = R^-1 L). The replication-mode ADI applies
//! externally supplied coefficients to the unstandardized variables, which
//! is exactly what makes it sensitive to the dollar-variable units.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::census::variables::{PCT_FAMILIES_BELOW_POVERTY, VARIABLES, VARIABLE_COUNT};
use crate::census::BlockGroupRecord;
use crate::error::{Error, Result};
use crate::geo::GeoId;
use crate::stats;

/// Z-scored variable matrix with the column statistics retained for audit.
#[derive(Debug, Clone)]
pub struct StandardizedMatrix {
    pub geoids: Vec<GeoId>,
    /// Row-major n x 17.
    pub z: Vec<Vec<f64>>,
    pub column_means: Vec<f64>,
    pub column_sds: Vec<f64>,
}

impl StandardizedMatrix {
    pub fn n(&self) -> usize {
        self.geoids.len()
    }
}

/// Z-scores each variable column with population SD (divisor n).
///
/// Records must be fully imputed. A zero-variance column is an error
/// naming the offending variable.
pub fn standardize(records: &[BlockGroupRecord]) -> Result<StandardizedMatrix> {
    let n = records.len();
    if n < 2 {
        return Err(Error::TooFewObservations { need: 2, got: n });
    }
    let mut columns: Vec<Vec<f64>> = (0..VARIABLE_COUNT).map(|_| Vec::with_capacity(n)).collect();
    for rec in records {
        for j in 0..VARIABLE_COUNT {
            let Some(x) = rec.variables[j] else {
                return Err(Error::InvalidValue(format!(
                    "{}: variable {} ({}) is missing; impute before standardizing",
                    rec.geoid, j, VARIABLES[j].name
                )));
            };
            columns[j].push(x);
        }
    }
    let mut column_means = Vec::with_capacity(VARIABLE_COUNT);
    let mut column_sds = Vec::with_capacity(VARIABLE_COUNT);
    for (j, col) in columns.iter().enumerate() {
        let m = stats::mean(col);
        let sd = stats::population_sd(col);
        if sd == 0.0 {
            return Err(Error::ZeroVariance {
                variable: VARIABLES[j].name.to_string(),
            });
        }
        column_means.push(m);
        column_sds.push(sd);
    }
    let z: Vec<Vec<f64>> = records
        .iter()
        .map(|rec| {
            (0..VARIABLE_COUNT)
                .map(|j| (rec.variables[j].unwrap() - column_means[j]) / column_sds[j])
                .collect()
        })
        .collect();
    Ok(StandardizedMatrix {
        geoids: records.iter().map(|r| r.geoid.clone()).collect(),
        z,
        column_means,
        column_sds,
    })
}

/// Controls for the factor extraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorConfig {
    /// Reject correlation matrices with condition number above this.
    pub condition_cap: f64,
    /// Extra principal-factor passes re-estimating communalities from the
    /// current loadings. 0 = classical single pass from squared multiple
    /// correlations.
    pub refinement_iterations: usize,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig {
            condition_cap: 1e12,
            refinement_iterations: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSource {
    Computed,
    External,
}

/// First-factor loadings and score coefficients for the 17 variables.
///
/// `loadings` and `score_coefficients` carry the eigensolver's sign;
/// `orientation_sign` is the factor applied at scoring time so that the
/// poverty loading is positive and higher scores mean more disadvantage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub schema_version: u32,
    pub source: CoefficientSource,
    pub loadings: Vec<f64>,
    pub score_coefficients: Vec<f64>,
    pub communalities: Vec<f64>,
    pub eigenvalue: f64,
    pub orientation_sign: f64,
}

impl CoefficientSet {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self> {
        let set: CoefficientSet = serde_json::from_reader(r)?;
        if set.loadings.len() != VARIABLE_COUNT || set.score_coefficients.len() != VARIABLE_COUNT {
            return Err(Error::InvalidValue(format!(
                "coefficient set must carry {VARIABLE_COUNT} loadings and score coefficients"
            )));
        }
        Ok(set)
    }
}

/// Correlation matrix of standardized columns: R = Z'Z / n.
fn correlation_matrix(zm: &StandardizedMatrix) -> DMatrix<f64> {
    let n = zm.n();
    let p = VARIABLE_COUNT;
    let mut r = DMatrix::<f64>::zeros(p, p);
    for row in &zm.z {
        for j in 0..p {
            for k in j..p {
                r[(j, k)] += row[j] * row[k];
            }
        }
    }
    for j in 0..p {
        for k in j..p {
            let v = r[(j, k)] / n as f64;
            r[(j, k)] = v;
            r[(k, j)] = v;
        }
    }
    r
}

/// Largest eigenpair of a symmetric matrix.
fn leading_eigenpair(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (
        eig.eigenvalues[best],
        eig.eigenvectors.column(best).into_owned(),
    )
}

/// Output of the raw extraction, before orientation.
#[derive(Debug, Clone)]
pub struct FactorExtraction {
    pub loadings: Vec<f64>,
    pub score_coefficients: Vec<f64>,
    pub communalities: Vec<f64>,
    pub eigenvalue: f64,
}

/// Principal factoring of a correlation matrix: squared-multiple-correlation
/// communalities on the diagonal, leading eigenpair of the reduced matrix,
/// loadings sqrt(lambda) * v, score coefficients W = R^-1 L.
///
/// Width-generic so the extraction can be checked against small analytic
/// cases; the public entry point fixes p = 17.
pub fn principal_factor_from_correlation(
    r: &DMatrix<f64>,
    cfg: &FactorConfig,
) -> Result<FactorExtraction> {
    let p = r.nrows();
    let eig = nalgebra::SymmetricEigen::new(r.clone());
    let lambda_min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let lambda_max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if lambda_min <= 0.0 {
        return Err(Error::SingularMatrix(format!(
            "smallest eigenvalue {lambda_min:.3e} is not positive"
        )));
    }
    if lambda_max / lambda_min > cfg.condition_cap {
        return Err(Error::SingularMatrix(format!(
            "condition number {:.3e} above cap {:.3e}",
            lambda_max / lambda_min,
            cfg.condition_cap
        )));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("inversion failed".to_string()))?;

    // initial communalities: squared multiple correlations
    let mut communalities: Vec<f64> = (0..p).map(|j| 1.0 - 1.0 / r_inv[(j, j)]).collect();
    let mut reduced = r.clone();
    let mut lambda;
    let mut loadings: Vec<f64>;
    let mut pass = 0;
    loop {
        for j in 0..p {
            reduced[(j, j)] = communalities[j];
        }
        let (l1, v1) = leading_eigenpair(&reduced);
        if l1 <= 0.0 {
            return Err(Error::NonPositiveEigenvalue(l1));
        }
        lambda = l1;
        loadings = v1.iter().map(|v| v * lambda.sqrt()).collect();
        if pass == cfg.refinement_iterations {
            break;
        }
        pass += 1;
        communalities = loadings.iter().map(|l| l * l).collect();
    }

    let l_vec = DVector::from_column_slice(&loadings);
    let w = &r_inv * &l_vec;
    Ok(FactorExtraction {
        loadings,
        score_coefficients: w.iter().copied().collect(),
        communalities,
        eigenvalue: lambda,
    })
}

/// Derives the bADI coefficient set from a standardized matrix.
pub fn principal_factor(zm: &StandardizedMatrix, cfg: &FactorConfig) -> Result<CoefficientSet> {
    let r = correlation_matrix(zm);
    let extraction = principal_factor_from_correlation(&r, cfg)?;
    let orientation_sign = if extraction.loadings[PCT_FAMILIES_BELOW_POVERTY] >= 0.0 {
        1.0
    } else {
        -1.0
    };
    Ok(CoefficientSet {
        schema_version: 1,
        source: CoefficientSource::Computed,
        loadings: extraction.loadings,
        score_coefficients: extraction.score_coefficients,
        communalities: extraction.communalities,
        eigenvalue: extraction.eigenvalue,
        orientation_sign,
    })
}

/// Raw scores: row dot score-coefficients, oriented.
pub fn score(zm: &StandardizedMatrix, coef: &CoefficientSet) -> Result<Vec<f64>> {
    if coef.score_coefficients.len() != VARIABLE_COUNT {
        return Err(Error::DimensionMismatch(format!(
            "expected {} score coefficients, got {}",
            VARIABLE_COUNT,
            coef.score_coefficients.len()
        )));
    }
    Ok(zm
        .z
        .iter()
        .map(|row| {
            let mut acc = 0.0;
            for j in 0..VARIABLE_COUNT {
                acc += row[j] * coef.score_coefficients[j];
            }
            acc * coef.orientation_sign
        })
        .collect())
}

/// Affine-maps raw scores to mean 100, population SD 20.
pub fn rescale(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.len() < 2 {
        return Err(Error::TooFewObservations {
            need: 2,
            got: raw.len(),
        });
    }
    let m = stats::mean(raw);
    let sd = stats::population_sd(raw);
    if sd == 0.0 {
        return Err(Error::ZeroVariance {
            variable: "raw_score".to_string(),
        });
    }
    Ok(raw.iter().map(|x| 100.0 + 20.0 * (x - m) / sd).collect())
}

/// Minimum population for percentiles to be meaningful; below this the
/// ranking still runs but callers should warn.
pub const PERCENTILE_WARN_N: usize = 100;

/// Rank positions for one geography list: national percentile (1..=100),
/// state decile (1..=10), national quintile (1..=5).
///
/// Buckets use the cumulative max-rank convention
/// `ceil(buckets * |{v <= x}| / n)`, so a total tie lands in the top bucket
/// and n distinct scores hit every bucket exactly evenly.
pub fn rank(scores: &[f64], geoids: &[GeoId]) -> Result<(Vec<u32>, Vec<u32>, Vec<u32>)> {
    if scores.len() != geoids.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} geoids",
            scores.len(),
            geoids.len()
        )));
    }
    let percentiles = stats::cume_buckets(scores, 100);
    let quintiles: Vec<u32> = percentiles.iter().map(|p| p.div_ceil(20)).collect();

    let mut by_state: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in geoids.iter().enumerate() {
        by_state.entry(g.state_fips()).or_default().push(i);
    }
    let mut deciles = vec![0u32; scores.len()];
    for indices in by_state.values() {
        let values: Vec<f64> = indices.iter().map(|&i| scores[i]).collect();
        let buckets = stats::cume_buckets(&values, 10);
        for (pos, &i) in indices.iter().enumerate() {
            deciles[i] = buckets[pos];
        }
    }
    Ok((percentiles, quintiles, deciles))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum IndexVariant {
    #[serde(rename = "bADI")]
    Badi,
    Adi,
}

impl std::fmt::Display for IndexVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IndexVariant::Badi => "bADI",
            IndexVariant::Adi => "ADI",
        })
    }
}

impl std::str::FromStr for IndexVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "badi" => Ok(IndexVariant::Badi),
            "adi" => Ok(IndexVariant::Adi),
            other => Err(Error::InvalidValue(format!(
                "unknown index variant `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub geoid: GeoId,
    pub raw: f64,
    pub rescaled: f64,
    pub percentile: u32,
    pub state_decile: u32,
    pub quintile: u32,
}

/// Per-block-group scores for one index variant, geoid-sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexScores {
    pub variant: IndexVariant,
    pub rows: Vec<ScoreRow>,
}

impl IndexScores {
    fn assemble(variant: IndexVariant, geoids: &[GeoId], raw: Vec<f64>) -> Result<IndexScores> {
        let rescaled = rescale(&raw)?;
        let (percentiles, quintiles, deciles) = rank(&rescaled, geoids)?;
        let rows = geoids
            .iter()
            .enumerate()
            .map(|(i, g)| ScoreRow {
                geoid: g.clone(),
                raw: raw[i],
                rescaled: rescaled[i],
                percentile: percentiles[i],
                state_decile: deciles[i],
                quintile: quintiles[i],
            })
            .collect();
        Ok(IndexScores { variant, rows })
    }

    pub fn rescaled_by_geoid(&self) -> BTreeMap<GeoId, f64> {
        self.rows
            .iter()
            .map(|r| (r.geoid.clone(), r.rescaled))
            .collect()
    }

    pub fn percentile_by_geoid(&self) -> BTreeMap<GeoId, u32> {
        self.rows
            .iter()
            .map(|r| (r.geoid.clone(), r.percentile))
            .collect()
    }

    pub fn quintile_by_geoid(&self) -> BTreeMap<GeoId, u32> {
        self.rows
            .iter()
            .map(|r| (r.geoid.clone(), r.quintile))
            .collect()
    }

    /// Delimited emission: geoid, variant, raw, rescaled, percentile,
    /// state_decile, quintile.
    pub fn write_csv<W: Write>(&self, writer: W, include_header: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if include_header {
            w.write_record([
                "geoid",
                "variant",
                "raw",
                "rescaled",
                "percentile",
                "state_decile",
                "quintile",
            ])?;
        }
        for r in &self.rows {
            w.write_record([
                r.geoid.to_string(),
                self.variant.to_string(),
                format!("{}", r.raw),
                format!("{}", r.rescaled),
                r.percentile.to_string(),
                r.state_decile.to_string(),
                r.quintile.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads one or more variants from the delimited emission.
    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<IndexScores>> {
        let mut csv_reader = csv::Reader::from_reader(reader);
        let mut by_variant: BTreeMap<String, Vec<ScoreRow>> = BTreeMap::new();
        for row in csv_reader.records() {
            let row = row?;
            let variant = row.get(1).unwrap_or_default().to_string();
            let parse_f = |i: usize| -> Result<f64> {
                row.get(i)
                    .unwrap_or_default()
                    .parse()
                    .map_err(|_| Error::InvalidValue(format!("bad number in column {i}")))
            };
            let parse_u = |i: usize| -> Result<u32> {
                row.get(i)
                    .unwrap_or_default()
                    .parse()
                    .map_err(|_| Error::InvalidValue(format!("bad integer in column {i}")))
            };
            by_variant.entry(variant).or_default().push(ScoreRow {
                geoid: GeoId::parse(row.get(0).unwrap_or_default())?,
                raw: parse_f(2)?,
                rescaled: parse_f(3)?,
                percentile: parse_u(4)?,
                state_decile: parse_u(5)?,
                quintile: parse_u(6)?,
            });
        }
        by_variant
            .into_iter()
            .map(|(name, rows)| {
                Ok(IndexScores {
                    variant: name.parse()?,
                    rows,
                })
            })
            .collect()
    }
}

/// Full bADI construction from imputed records.
pub fn build_badi(
    records: &[BlockGroupRecord],
    cfg: &FactorConfig,
) -> Result<(IndexScores, CoefficientSet)> {
    let zm = standardize(records)?;
    let coef = principal_factor(&zm, cfg)?;
    let scores = build_badi_with_coefficients(&zm, &coef)?;
    Ok((scores, coef))
}

/// bADI scoring with a precomputed coefficient set (cache path).
pub fn build_badi_with_coefficients(
    zm: &StandardizedMatrix,
    coef: &CoefficientSet,
) -> Result<IndexScores> {
    let raw = score(zm, coef)?;
    IndexScores::assemble(IndexVariant::Badi, &zm.geoids, raw)
}

/// Replication-mode ADI: external coefficients applied to the
/// unstandardized variables, then the shared rescale/rank tail.
pub fn replicate_adi(
    records: &[BlockGroupRecord],
    external_coefficients: &[f64],
) -> Result<IndexScores> {
    if external_coefficients.len() != VARIABLE_COUNT {
        return Err(Error::DimensionMismatch(format!(
            "expected {} ADI coefficients, got {}",
            VARIABLE_COUNT,
            external_coefficients.len()
        )));
    }
    let geoids: Vec<GeoId> = records.iter().map(|r| r.geoid.clone()).collect();
    let mut raw = Vec::with_capacity(records.len());
    for rec in records {
        let mut acc = 0.0;
        for j in 0..VARIABLE_COUNT {
            let Some(x) = rec.variables[j] else {
                return Err(Error::InvalidValue(format!(
                    "{}: variable {} missing; impute before scoring",
                    rec.geoid, j
                )));
            };
            acc += x * external_coefficients[j];
        }
        raw.push(acc);
    }
    IndexScores::assemble(IndexVariant::Adi, &geoids, raw)
}
