//! Covariate-adjusted quintile contrasts of cost and utilization.
//!
//! Beneficiaries are joined to index quintiles by block-group GEOID, a
//! design matrix with quintile indicators (Q3 reference) and the
//! demographic/clinical covariates is built per (program, state) stratum,
//! and gamma/poisson log-link fits produce Q1-vs-Q3 and Q5-vs-Q3
//! contrasts.

pub mod fit;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use fit::{fit_glm, wald_p_value, Family, FitConfig, GlmFit};

use crate::error::{Error, Result};
use crate::geo::GeoId;
use crate::index::IndexScores;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Program {
    #[serde(rename = "FFS")]
    Ffs,
    #[serde(rename = "MA")]
    Ma,
}

impl std::fmt::Display for Program {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Program::Ffs => "FFS",
            Program::Ma => "MA",
        })
    }
}

impl std::str::FromStr for Program {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FFS" => Ok(Program::Ffs),
            "MA" => Ok(Program::Ma),
            other => Err(Error::InvalidValue(format!("unknown program `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

impl std::str::FromStr for Sex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M" => Ok(Sex::M),
            "F" => Ok(Sex::F),
            other => Err(Error::InvalidValue(format!("unknown sex `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beneficiary {
    pub id: String,
    pub geoid: GeoId,
    pub program: Program,
    pub state: String,
    pub age: f64,
    pub sex: Sex,
    pub race: String,
    pub chronic_condition_count: u32,
    pub hcc_condition_count: u32,
    pub hcc_score: f64,
    pub total_cost: f64,
    pub er_visits: u32,
}

impl Beneficiary {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=120.0).contains(&self.age) {
            return Err(Error::InvalidValue(format!(
                "{}: age {} outside [0, 120]",
                self.id, self.age
            )));
        }
        if self.hcc_score <= 0.0 || !self.hcc_score.is_finite() {
            return Err(Error::InvalidValue(format!(
                "{}: hcc_score must be > 0",
                self.id
            )));
        }
        if self.total_cost < 0.0 || !self.total_cost.is_finite() {
            return Err(Error::InvalidValue(format!(
                "{}: total_cost must be >= 0",
                self.id
            )));
        }
        Ok(())
    }
}

pub const BENEFICIARY_HEADER: [&str; 12] = [
    "id",
    "geoid",
    "program",
    "state",
    "age",
    "sex",
    "race",
    "chronic_condition_count",
    "hcc_condition_count",
    "hcc_score",
    "total_cost",
    "er_visits",
];

pub fn write_beneficiaries<W: Write>(writer: W, beneficiaries: &[Beneficiary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(BENEFICIARY_HEADER)?;
    for b in beneficiaries {
        w.write_record([
            b.id.clone(),
            b.geoid.to_string(),
            b.program.to_string(),
            b.state.clone(),
            format!("{}", b.age),
            format!("{:?}", b.sex),
            b.race.clone(),
            b.chronic_condition_count.to_string(),
            b.hcc_condition_count.to_string(),
            format!("{}", b.hcc_score),
            format!("{}", b.total_cost),
            b.er_visits.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_beneficiaries<R: Read>(reader: R) -> Result<Vec<Beneficiary>> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let idx: Vec<usize> = BENEFICIARY_HEADER
        .iter()
        .map(|n| col(n))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (i, row) in csv_reader.records().enumerate() {
        let row = row?;
        let cell = |k: usize| row.get(idx[k]).unwrap_or_default().trim().to_string();
        let parse_err = |field: &str| Error::Row {
            row: i + 1,
            message: format!("cannot parse field `{field}`"),
        };
        let b = Beneficiary {
            id: cell(0),
            geoid: GeoId::parse(&cell(1)).map_err(|e| Error::Row {
                row: i + 1,
                message: e.to_string(),
            })?,
            program: cell(2).parse().map_err(|_| parse_err("program"))?,
            state: cell(3),
            age: cell(4).parse().map_err(|_| parse_err("age"))?,
            sex: cell(5).parse().map_err(|_| parse_err("sex"))?,
            race: cell(6),
            chronic_condition_count: cell(7)
                .parse()
                .map_err(|_| parse_err("chronic_condition_count"))?,
            hcc_condition_count: cell(8)
                .parse()
                .map_err(|_| parse_err("hcc_condition_count"))?,
            hcc_score: cell(9).parse().map_err(|_| parse_err("hcc_score"))?,
            total_cost: cell(10).parse().map_err(|_| parse_err("total_cost"))?,
            er_visits: cell(11).parse().map_err(|_| parse_err("er_visits"))?,
        };
        b.validate().map_err(|e| Error::Row {
            row: i + 1,
            message: e.to_string(),
        })?;
        out.push(b);
    }
    Ok(out)
}

/// Modeled outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    TotalCost,
    ErVisits,
}

impl Outcome {
    pub fn family(self) -> Family {
        match self {
            Outcome::TotalCost => Family::GammaLog,
            Outcome::ErVisits => Family::PoissonLog,
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::TotalCost => "total_cost",
            Outcome::ErVisits => "er_visits",
        })
    }
}

/// Design matrix plus bookkeeping from the join and column pruning.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    pub response: Vec<f64>,
    /// Column index of each quintile indicator that survived pruning.
    pub quintile_columns: BTreeMap<u32, usize>,
    /// Beneficiaries dropped because their GEOID has no index quintile.
    pub unmatched: usize,
    /// Zero-cost beneficiaries excluded under the gamma family.
    pub zero_response_excluded: usize,
    /// All-zero columns dropped, by name.
    pub dropped_columns: Vec<String>,
}

/// Builds the covariate design for one outcome: intercept, quintile
/// indicators (Q3 reference), age, male indicator, race one-hot with the
/// most frequent level as reference, condition counts, HCC score.
pub fn build_design(
    beneficiaries: &[Beneficiary],
    quintile_by_geoid: &BTreeMap<GeoId, u32>,
    outcome: Outcome,
) -> Result<Design> {
    let mut matched: Vec<(&Beneficiary, u32)> = Vec::with_capacity(beneficiaries.len());
    let mut unmatched = 0usize;
    for b in beneficiaries {
        match quintile_by_geoid.get(&b.geoid) {
            Some(&q) => matched.push((b, q)),
            None => unmatched += 1,
        }
    }
    let mut zero_response_excluded = 0usize;
    if outcome == Outcome::TotalCost {
        let before = matched.len();
        matched.retain(|(b, _)| b.total_cost > 0.0);
        zero_response_excluded = before - matched.len();
    }
    if matched.is_empty() {
        return Err(Error::TooFewObservations { need: 1, got: 0 });
    }

    // race reference: most frequent level, ties to the lexicographically
    // first among the maxima
    let mut race_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (b, _) in &matched {
        *race_counts.entry(b.race.as_str()).or_default() += 1;
    }
    let reference_race = race_counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(race, _)| race.to_string())
        .unwrap();
    let race_levels: Vec<String> = race_counts
        .keys()
        .filter(|r| **r != reference_race)
        .map(|r| r.to_string())
        .collect();

    let mut names = vec![
        "intercept".to_string(),
        "quintile_1".to_string(),
        "quintile_2".to_string(),
        "quintile_4".to_string(),
        "quintile_5".to_string(),
        "age".to_string(),
        "sex_male".to_string(),
    ];
    for level in &race_levels {
        names.push(format!("race_{level}"));
    }
    names.push("chronic_condition_count".to_string());
    names.push("hcc_condition_count".to_string());
    names.push("hcc_score".to_string());

    let n = matched.len();
    let p = names.len();
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut response = Vec::with_capacity(n);
    for (i, (b, q)) in matched.iter().enumerate() {
        let mut col = 0;
        x[(i, col)] = 1.0;
        col += 1;
        for quintile in [1u32, 2, 4, 5] {
            x[(i, col)] = if *q == quintile { 1.0 } else { 0.0 };
            col += 1;
        }
        x[(i, col)] = b.age;
        col += 1;
        x[(i, col)] = if b.sex == Sex::M { 1.0 } else { 0.0 };
        col += 1;
        for level in &race_levels {
            x[(i, col)] = if &b.race == level { 1.0 } else { 0.0 };
            col += 1;
        }
        x[(i, col)] = b.chronic_condition_count as f64;
        col += 1;
        x[(i, col)] = b.hcc_condition_count as f64;
        col += 1;
        x[(i, col)] = b.hcc_score;
        response.push(match outcome {
            Outcome::TotalCost => b.total_cost,
            Outcome::ErVisits => b.er_visits as f64,
        });
    }

    // prune all-zero columns (e.g. a quintile absent from the stratum)
    let mut keep: Vec<usize> = Vec::with_capacity(p);
    let mut dropped_columns = Vec::new();
    for j in 0..p {
        if (0..n).any(|i| x[(i, j)] != 0.0) {
            keep.push(j);
        } else {
            dropped_columns.push(names[j].clone());
        }
    }
    let kept_names: Vec<String> = keep.iter().map(|&j| names[j].clone()).collect();
    let x = x.select_columns(keep.iter());

    let mut quintile_columns = BTreeMap::new();
    for quintile in [1u32, 2, 4, 5] {
        let name = format!("quintile_{quintile}");
        if let Some(idx) = kept_names.iter().position(|n| *n == name) {
            quintile_columns.insert(quintile, idx);
        }
    }

    Ok(Design {
        x,
        names: kept_names,
        response,
        quintile_columns,
        unmatched,
        zero_response_excluded,
        dropped_columns,
    })
}

/// One quintile-vs-Q3 contrast.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuintileContrast {
    pub quintile: u32,
    pub exp_beta: f64,
    /// Standard error of the underlying log-scale coefficient.
    pub std_error: f64,
    /// exp(beta) - 1, exactly.
    pub percent_change: f64,
    /// Sample-averaged counterfactual difference in outcome units:
    /// mean over rows of prediction(quintile = q) - prediction(quintile = 3).
    pub avg_marginal_effect: f64,
    /// Prediction difference at the sample-mean covariate vector.
    pub effect_at_means: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Contrast of one quintile against the Q3 reference; `None` when the
/// quintile's indicator column was pruned (no members in the stratum).
pub fn contrast(fit: &GlmFit, design: &Design, quintile: u32) -> Option<QuintileContrast> {
    let &col = design.quintile_columns.get(&quintile)?;
    let beta = fit.estimates[col];
    let exp_beta = beta.exp();
    let p_value = fit.p_values[col];

    let quintile_cols: Vec<usize> = design.quintile_columns.values().copied().collect();
    let n = design.x.nrows();
    let p = design.x.ncols();

    let mut diff_sum = 0.0;
    let mut mean_row = vec![0.0; p];
    let mut row = vec![0.0; p];
    for i in 0..n {
        for j in 0..p {
            row[j] = design.x[(i, j)];
            mean_row[j] += design.x[(i, j)] / n as f64;
        }
        for &qc in &quintile_cols {
            row[qc] = 0.0;
        }
        let ref_pred = fit.predict_row(&row);
        row[col] = 1.0;
        let q_pred = fit.predict_row(&row);
        diff_sum += q_pred - ref_pred;
    }
    for &qc in &quintile_cols {
        mean_row[qc] = 0.0;
    }
    let ref_at_means = fit.predict_row(&mean_row);
    mean_row[col] = 1.0;
    let q_at_means = fit.predict_row(&mean_row);

    Some(QuintileContrast {
        quintile,
        exp_beta,
        std_error: fit.std_errors[col],
        percent_change: exp_beta - 1.0,
        avg_marginal_effect: diff_sum / n as f64,
        effect_at_means: q_at_means - ref_at_means,
        p_value,
        significant: p_value < 0.05,
    })
}

/// One (program, state, variant, outcome) cell of the contrast grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContrastCell {
    pub program: Program,
    pub state: String,
    pub variant: String,
    pub outcome: Outcome,
    pub n: usize,
    pub unmatched: usize,
    pub zero_response_excluded: usize,
    pub converged: bool,
    pub iterations: usize,
    pub dispersion: f64,
    pub q1: Option<QuintileContrast>,
    pub q5: Option<QuintileContrast>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedStratum {
    pub program: Program,
    pub state: String,
    pub variant: String,
    pub outcome: Outcome,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ContrastGrid {
    pub cells: Vec<ContrastCell>,
    pub skipped: Vec<SkippedStratum>,
}

impl ContrastGrid {
    /// Delimited emission mirroring the figure cells: program, state,
    /// variant, outcome, q1_effect, q1_p, q5_effect, q5_p, n. Effects are
    /// percent changes; absent quintiles leave empty cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "program",
            "state",
            "variant",
            "outcome",
            "q1_effect",
            "q1_p",
            "q5_effect",
            "q5_p",
            "n",
        ])?;
        let fmt_opt = |c: &Option<QuintileContrast>, f: fn(&QuintileContrast) -> f64| {
            c.as_ref().map(|v| format!("{}", f(v))).unwrap_or_default()
        };
        for c in &self.cells {
            w.write_record([
                c.program.to_string(),
                c.state.clone(),
                c.variant.clone(),
                c.outcome.to_string(),
                fmt_opt(&c.q1, |v| v.percent_change),
                fmt_opt(&c.q1, |v| v.p_value),
                fmt_opt(&c.q5, |v| v.percent_change),
                fmt_opt(&c.q5, |v| v.p_value),
                c.n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Minimum observations per parameter for a stratum to be fit.
pub const MIN_OBS_PER_PARAM: usize = 10;

/// Fits and contrasts every (program, state, index variant, outcome) cell.
/// Strata with too few observations, or whose fit fails, are recorded in
/// `skipped` and the run continues.
pub fn stratified_run(
    beneficiaries: &[Beneficiary],
    indices: &[IndexScores],
    cfg: &FitConfig,
) -> Result<ContrastGrid> {
    let mut strata: BTreeMap<(Program, &str), Vec<&Beneficiary>> = BTreeMap::new();
    for b in beneficiaries {
        strata
            .entry((b.program, b.state.as_str()))
            .or_default()
            .push(b);
    }

    let mut grid = ContrastGrid::default();
    for scores in indices {
        let variant = scores.variant.to_string();
        let quintiles = scores.quintile_by_geoid();
        for ((program, state), members) in &strata {
            for outcome in [Outcome::TotalCost, Outcome::ErVisits] {
                let owned: Vec<Beneficiary> = members.iter().map(|b| (*b).clone()).collect();
                let design = match build_design(&owned, &quintiles, outcome) {
                    Ok(d) => d,
                    Err(e) => {
                        grid.skipped.push(SkippedStratum {
                            program: *program,
                            state: state.to_string(),
                            variant: variant.clone(),
                            outcome,
                            reason: e.to_string(),
                        });
                        continue;
                    }
                };
                let n = design.x.nrows();
                let p = design.x.ncols();
                if n < MIN_OBS_PER_PARAM * p {
                    grid.skipped.push(SkippedStratum {
                        program: *program,
                        state: state.to_string(),
                        variant: variant.clone(),
                        outcome,
                        reason: format!("n = {n} < {} * {p} parameters", MIN_OBS_PER_PARAM),
                    });
                    continue;
                }
                let fit = match fit_glm(
                    &design.x,
                    &design.names,
                    &design.response,
                    outcome.family(),
                    cfg,
                ) {
                    Ok(f) => f,
                    Err(e) => {
                        grid.skipped.push(SkippedStratum {
                            program: *program,
                            state: state.to_string(),
                            variant: variant.clone(),
                            outcome,
                            reason: e.to_string(),
                        });
                        continue;
                    }
                };
                grid.cells.push(ContrastCell {
                    program: *program,
                    state: state.to_string(),
                    variant: variant.clone(),
                    outcome,
                    n,
                    unmatched: design.unmatched,
                    zero_response_excluded: design.zero_response_excluded,
                    converged: fit.converged,
                    iterations: fit.iterations,
                    dispersion: fit.dispersion,
                    q1: contrast(&fit, &design, 1),
                    q5: contrast(&fit, &design, 5),
                });
            }
        }
    }
    Ok(grid)
}
