//! benchmark: housing correlations per county and metro, quantile
//! summaries, outcome correlations at county/tract level, and figure
//! scatter data.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use badi_core::benchmark::{
    aggregate, home_value_table, housing_correlation_by_county, housing_correlation_by_metro,
    outcome_correlations, CorrelationReport, GeoLevel, MetroCrosswalk, OutcomeTable, Statistic,
};
use badi_core::census::read_records;
use badi_core::geo::GeoId;
use badi_core::index::IndexScores;
use badi_core::stats::QuantileSummary;
use serde::Serialize;

use crate::config::{existing_file, require, FileConfig};
use crate::manifest::{RunManifest, StageClock};
use crate::outdir::{with_cleanup, OutputDir};
use crate::BenchmarkArgs;

fn detect_level(path: &Path) -> Result<GeoLevel> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let gi = headers
        .iter()
        .position(|h| h.trim() == "geoid")
        .ok_or_else(|| anyhow::anyhow!("{}: no geoid column", path.display()))?;
    let mut level: Option<GeoLevel> = None;
    for row in reader.records() {
        let row = row?;
        let len = row.get(gi).unwrap_or_default().trim().len();
        let this = match len {
            5 => GeoLevel::County,
            11 => GeoLevel::Tract,
            12 => GeoLevel::BlockGroup,
            other => bail!(
                "{}: geoid length {} is not a known level",
                path.display(),
                other
            ),
        };
        match level {
            None => level = Some(this),
            Some(found) if found != this => {
                bail!("{}: mixed geoid lengths", path.display())
            }
            _ => {}
        }
    }
    level.ok_or_else(|| anyhow::anyhow!("{}: empty outcome table", path.display()))
}

/// NAME=PATH argument for an externally supplied index table.
fn parse_extra_index(spec: &str) -> Result<(String, PathBuf)> {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => bail!("--extra-index expects NAME=PATH, got `{spec}`"),
    }
}

/// csv (geoid, value) -> map, with the detected level.
fn read_index_table(path: &Path) -> Result<(GeoLevel, BTreeMap<String, f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let gi = col("geoid").ok_or_else(|| anyhow::anyhow!("{}: no geoid column", path.display()))?;
    let vi = col("value").ok_or_else(|| anyhow::anyhow!("{}: no value column", path.display()))?;
    let mut map = BTreeMap::new();
    let mut level: Option<GeoLevel> = None;
    for row in reader.records() {
        let row = row?;
        let geoid = row.get(gi).unwrap_or_default().trim().to_string();
        let this = match geoid.len() {
            5 => GeoLevel::County,
            11 => GeoLevel::Tract,
            _ => bail!(
                "{}: geoid `{geoid}` is not county or tract level",
                path.display()
            ),
        };
        if *level.get_or_insert(this) != this {
            bail!("{}: mixed geoid lengths", path.display());
        }
        let value: f64 = row.get(vi).unwrap_or_default().trim().parse()?;
        map.insert(geoid, value);
    }
    let level = level.ok_or_else(|| anyhow::anyhow!("{}: empty index table", path.display()))?;
    Ok((level, map))
}

#[derive(Serialize)]
struct VariantSummary {
    variant: String,
    #[serde(flatten)]
    quantiles: QuantileSummary,
}

#[derive(Serialize)]
struct BenchmarkJson {
    schema_version: u32,
    housing_by_county: CorrelationReport,
    housing_quantiles: Vec<VariantSummary>,
    housing_by_metro: CorrelationReport,
    outcome_reports: BTreeMap<String, CorrelationReport>,
}

pub fn run(args: BenchmarkArgs) -> Result<()> {
    let file_config = FileConfig::load(args.config.as_deref())?;
    let section = file_config.benchmark.as_ref();

    let scores_path = require(
        args.scores,
        section.and_then(|s| s.scores.clone()),
        "scores",
    )?;
    let out_root = require(args.out, section.and_then(|s| s.out.clone()), "out")?;
    let records_path = args.records.or(section.and_then(|s| s.records.clone()));
    let crosswalk_path = args.crosswalk.or(section.and_then(|s| s.crosswalk.clone()));
    let mut outcome_paths = args.outcomes;
    if outcome_paths.is_empty() {
        outcome_paths = section.and_then(|s| s.outcomes.clone()).unwrap_or_default();
    }
    let mut extra_specs = args.extra_index;
    if extra_specs.is_empty() {
        extra_specs = section
            .and_then(|s| s.extra_index.clone())
            .unwrap_or_default();
    }
    let weighted = args.weighted_agg || section.and_then(|s| s.weighted_agg).unwrap_or(false);
    let percentile_agg =
        args.percentile_agg || section.and_then(|s| s.percentile_agg).unwrap_or(false);

    existing_file(&scores_path, "scores")?;
    let config_echo = serde_json::json!({
        "scores": scores_path.display().to_string(),
        "records": records_path.as_ref().map(|p| p.display().to_string()),
        "outcomes": outcome_paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "crosswalk": crosswalk_path.as_ref().map(|p| p.display().to_string()),
        "extra_index": extra_specs,
        "weighted_agg": weighted,
        "percentile_agg": percentile_agg,
    });
    let mut manifest = RunManifest::new("benchmark", config_echo);
    manifest.add_input("scores", &scores_path)?;

    let scores_file = std::fs::File::open(&scores_path)?;
    let all_scores =
        IndexScores::read_csv(BufReader::new(scores_file)).context("stage load: index scores")?;
    if all_scores.is_empty() {
        bail!("{}: no score rows", scores_path.display());
    }

    let records = match &records_path {
        Some(path) => {
            existing_file(path, "records")?;
            manifest.add_input("records", path)?;
            let f = std::fs::File::open(path)?;
            Some(read_records(BufReader::new(f)).context("stage load: imputed records")?)
        }
        None => None,
    };
    if weighted && records.is_none() {
        bail!("--weighted-agg needs --records for population weights");
    }

    let crosswalk = match &crosswalk_path {
        Some(path) => {
            existing_file(path, "crosswalk")?;
            manifest.add_input("crosswalk", path)?;
            let f = std::fs::File::open(path)?;
            Some(MetroCrosswalk::read_csv(BufReader::new(f)).context("stage load: crosswalk")?)
        }
        None => None,
    };

    let mut extra_tables: Vec<(String, GeoLevel, BTreeMap<String, f64>)> = Vec::new();
    for spec in &extra_specs {
        let (name, path) = parse_extra_index(spec)?;
        existing_file(&path, &name)?;
        manifest.add_input(&format!("extra_index:{name}"), &path)?;
        let (level, table) = read_index_table(&path)?;
        extra_tables.push((name, level, table));
    }

    let mut out = OutputDir::create(&out_root)?;
    with_cleanup(&mut out, |out| {
        let mut clock = StageClock::start();

        // ---- housing analyses (need block-group records) ----
        let mut housing_by_county = CorrelationReport::default();
        let mut housing_by_metro = CorrelationReport::default();
        let mut housing_quantiles: Vec<VariantSummary> = Vec::new();
        let mut county_corr_by_variant: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();

        if let Some(records) = &records {
            let housing = home_value_table(records).context("stage housing: home values")?;
            for scores in &all_scores {
                let (report, summary) = housing_correlation_by_county(scores, &housing)
                    .context("stage housing: county correlations")?;
                let per_county: BTreeMap<String, f64> = report
                    .rows
                    .iter()
                    .map(|r| (r.group.trim_start_matches("county:").to_string(), r.value))
                    .collect();
                county_corr_by_variant.insert(scores.variant.to_string(), per_county);
                housing_by_county.merge(report);
                if let Some(q) = summary {
                    housing_quantiles.push(VariantSummary {
                        variant: scores.variant.to_string(),
                        quantiles: q,
                    });
                }
                if let Some(cw) = &crosswalk {
                    let report = housing_correlation_by_metro(scores, &housing, cw)
                        .context("stage housing: metro correlations")?;
                    housing_by_metro.merge(report);
                }
            }
        }
        clock.lap(&mut manifest, "housing");

        // ---- outcome correlations per table ----
        let mut outcome_reports: BTreeMap<String, CorrelationReport> = BTreeMap::new();
        for path in &outcome_paths {
            existing_file(path, "outcomes")?;
            manifest.add_input(&format!("outcomes:{}", path.display()), path)?;
            let level = detect_level(path)?;
            if level == GeoLevel::BlockGroup {
                bail!(
                    "{}: outcome tables must be county or tract level",
                    path.display()
                );
            }
            let f = std::fs::File::open(path)?;
            let outcomes = OutcomeTable::read_csv(BufReader::new(f), level)
                .with_context(|| format!("stage outcomes: {}", path.display()))?;

            // index tables at the outcome level
            let weights: Option<BTreeMap<GeoId, f64>> = if weighted {
                records.as_ref().map(|recs| {
                    recs.iter()
                        .map(|r| (r.geoid.clone(), r.population as f64))
                        .collect()
                })
            } else {
                None
            };
            let mut tables: Vec<(String, BTreeMap<String, f64>)> = Vec::new();
            for scores in &all_scores {
                let values: BTreeMap<GeoId, f64> = scores
                    .rows
                    .iter()
                    .map(|r| {
                        let v = if percentile_agg {
                            r.percentile as f64
                        } else {
                            r.rescaled
                        };
                        (r.geoid.clone(), v)
                    })
                    .collect();
                tables.push((
                    scores.variant.to_string(),
                    aggregate(&values, level, weights.as_ref()),
                ));
            }
            for (name, table_level, table) in &extra_tables {
                if *table_level == level {
                    tables.push((name.clone(), table.clone()));
                }
            }

            let mut report = CorrelationReport::default();
            for statistic in [Statistic::Pearson, Statistic::SpearmanDecile] {
                report.merge(
                    outcome_correlations(&tables, &outcomes, statistic)
                        .context("stage outcomes: correlations")?,
                );
            }
            if report.rows.is_empty() && !report.suppressed.is_empty() {
                let zero_joins = report
                    .suppressed
                    .iter()
                    .all(|s| s.reason.contains("joined n = 0"));
                if zero_joins {
                    let index_sample: Vec<&String> = tables
                        .first()
                        .map(|(_, t)| t.keys().take(3).collect())
                        .unwrap_or_default();
                    let outcome_sample: Vec<String> = outcomes
                        .series(outcomes.measures().iter().next().unwrap())
                        .keys()
                        .take(3)
                        .cloned()
                        .collect();
                    bail!(
                        "{}: no common geoids between index and outcomes (index keys like {:?}, outcome keys like {:?})",
                        path.display(), index_sample, outcome_sample
                    );
                }
            }
            let name = format!("outcome_correlations_{level}.csv");
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            out.write(&name, &buf)?;
            let merged = outcome_reports.entry(level.to_string()).or_default();
            merged.merge(report);
        }
        clock.lap(&mut manifest, "outcomes");

        // ---- emission ----
        if !housing_by_county.rows.is_empty() || !housing_by_county.suppressed.is_empty() {
            let mut buf = Vec::new();
            housing_by_county.write_csv(&mut buf)?;
            out.write("county_correlations.csv", &buf)?;

            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["variant", "min", "q1", "q2", "q3", "max"])?;
            for s in &housing_quantiles {
                w.write_record([
                    s.variant.clone(),
                    format!("{}", s.quantiles.min),
                    format!("{}", s.quantiles.q1),
                    format!("{}", s.quantiles.q2),
                    format!("{}", s.quantiles.q3),
                    format!("{}", s.quantiles.max),
                ])?;
            }
            out.write("housing_quantiles.csv", &w.into_inner()?)?;

            // figure data: per-county scatter of ADI vs bADI correlations,
            // and the long-form per-variant series
            if let (Some(adi), Some(badi)) = (
                county_corr_by_variant.get("ADI"),
                county_corr_by_variant.get("bADI"),
            ) {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["county", "adi_correlation", "badi_correlation"])?;
                for (county, a) in adi {
                    if let Some(b) = badi.get(county) {
                        w.write_record([county.clone(), format!("{a}"), format!("{b}")])?;
                    }
                }
                out.write("fig1_scatter.csv", &w.into_inner()?)?;
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["county", "variant", "correlation"])?;
            for (variant, per_county) in &county_corr_by_variant {
                for (county, value) in per_county {
                    w.write_record([county.clone(), variant.clone(), format!("{value}")])?;
                }
            }
            out.write("figA1_scatter.csv", &w.into_inner()?)?;
        }
        if !housing_by_metro.rows.is_empty() || !housing_by_metro.suppressed.is_empty() {
            let mut buf = Vec::new();
            housing_by_metro.write_csv(&mut buf)?;
            out.write("metro_correlations.csv", &buf)?;
        }

        // suppressed rows, all sources
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["group", "measure", "variant", "reason"])?;
        let all_suppressed = housing_by_county
            .suppressed
            .iter()
            .chain(&housing_by_metro.suppressed)
            .chain(outcome_reports.values().flat_map(|r| &r.suppressed));
        let mut suppressed_count = 0u64;
        for s in all_suppressed {
            w.write_record([&s.group, &s.measure, &s.variant, &s.reason])?;
            suppressed_count += 1;
        }
        out.write("suppressed.csv", &w.into_inner()?)?;

        let json = BenchmarkJson {
            schema_version: 1,
            housing_by_county,
            housing_quantiles,
            housing_by_metro,
            outcome_reports,
        };
        out.write(
            "benchmark.json",
            serde_json::to_string_pretty(&json)?.as_bytes(),
        )?;
        clock.lap(&mut manifest, "emit");

        manifest
            .counts
            .insert("suppressed_rows".to_string(), suppressed_count);
        let mut outputs = out.written_names();
        outputs.push("manifest.json".to_string());
        manifest.outputs = outputs;
        out.write("manifest.json", manifest.to_json()?.as_bytes())?;
        Ok(())
    })?;

    eprintln!("benchmark: wrote {}", out_root.display());
    Ok(())
}
