//! Ranking and correlation primitives shared by the index and benchmark
//! stages.
//!
//! Two tie conventions live here on purpose. Index ranking uses the
//! cumulative max-rank bucket `ceil(buckets * |{v <= x}| / n)`, which puts a
//! total tie in the top bucket. Decile Spearman uses average ranks,
//! `ceil(buckets * avg_rank / n)`, matching how the statistic is defined.

use crate::error::{Error, Result};

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue(format!(
            "{what} contains a non-finite value"
        )));
    }
    Ok(())
}

/// Indices that sort `values` ascending; ties keep index order (stable).
fn sort_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    order
}

/// 1-based average ranks with ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let order = sort_order(values);
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) hold a tie group
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// For each element, the count of values less than or equal to it
/// (the cumulative max rank).
pub fn cumulative_ranks(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let order = sort_order(values);
    let mut ranks = vec![0usize; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            ranks[idx] = j + 1;
        }
        i = j + 1;
    }
    ranks
}

/// `ceil(buckets * rank / n)` clamped to 1..=buckets.
pub fn bucket_of(rank: f64, n: usize, buckets: u32) -> u32 {
    debug_assert!(n > 0);
    let raw = (buckets as f64 * rank / n as f64).ceil() as i64;
    raw.clamp(1, buckets as i64) as u32
}

/// Buckets each value with the cumulative max-rank convention.
pub fn cume_buckets(values: &[f64], buckets: u32) -> Vec<u32> {
    let n = values.len();
    cumulative_ranks(values)
        .into_iter()
        .map(|r| bucket_of(r as f64, n, buckets))
        .collect()
}

/// Buckets each value with the average-rank convention.
pub fn average_rank_buckets(values: &[f64], buckets: u32) -> Vec<u32> {
    let n = values.len();
    average_ranks(values)
        .into_iter()
        .map(|r| bucket_of(r, n, buckets))
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (divisor n).
pub fn population_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Minimum observations for any reported correlation.
pub const MIN_CORRELATION_N: usize = 3;

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "pearson: {} vs {} observations",
            x.len(),
            y.len()
        )));
    }
    if x.len() < MIN_CORRELATION_N {
        return Err(Error::TooFewObservations {
            need: MIN_CORRELATION_N,
            got: x.len(),
        });
    }
    check_finite(x, "x")?;
    check_finite(y, "y")?;
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "zero variance in at least one vector".to_string(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation: Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "spearman: {} vs {} observations",
            x.len(),
            y.len()
        )));
    }
    check_finite(x, "x")?;
    check_finite(y, "y")?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Spearman rank correlation after decile bucketing: both vectors are
/// mapped to deciles `ceil(10 * avg_rank / n)`, then the correlation is the
/// Pearson correlation of the average ranks of the decile labels.
pub fn spearman_decile(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "spearman_decile: {} vs {} observations",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 10 {
        return Err(Error::TooFewObservations {
            need: 10,
            got: x.len(),
        });
    }
    check_finite(x, "x")?;
    check_finite(y, "y")?;
    let dx: Vec<f64> = average_rank_buckets(x, 10)
        .into_iter()
        .map(f64::from)
        .collect();
    let dy: Vec<f64> = average_rank_buckets(y, 10)
        .into_iter()
        .map(f64::from)
        .collect();
    let rx = average_ranks(&dx);
    let ry = average_ranks(&dy);
    pearson(&rx, &ry)
}

/// Linear-interpolation quantile (R type 7) over unsorted data.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    debug_assert!(!values.is_empty() && (0.0..=1.0).contains(&p));
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Five-number summary (min, Q1, median, Q3, max).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuantileSummary {
    pub min: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn quantile_summary(values: &[f64]) -> QuantileSummary {
    QuantileSummary {
        min: quantile(values, 0.0),
        q1: quantile(values, 0.25),
        q2: quantile(values, 0.5),
        q3: quantile(values, 0.75),
        max: quantile(values, 1.0),
    }
}
