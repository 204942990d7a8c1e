//! build-index: parse -> filter -> impute -> standardize -> factor ->
//! score -> rescale -> rank, with the imputation and coefficient stages
//! cached by input digest.

use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use badi_core::census::parse::{parse_block_groups, TableSchema};
use badi_core::census::{
    apply_filter, read_records, write_records, BlockGroupRecord, FilterReport,
};
use badi_core::impute::{knn_impute, ImputationAudit, ImputationConfig};
use badi_core::index::{
    build_badi_with_coefficients, principal_factor, replicate_adi, standardize, CoefficientSet,
    IndexScores, IndexVariant,
};
use serde::Deserialize;

use crate::config::{existing_file, require, FileConfig};
use crate::manifest::{sha256_hex, CacheInfo, RunManifest, StageClock};
use crate::outdir::{with_cleanup, OutputDir};
use crate::BuildIndexArgs;

/// External ADI coefficient file: {"coefficients": [17 numbers]}.
#[derive(Deserialize)]
struct ExternalCoefficients {
    coefficients: Vec<f64>,
}

fn load_external_coefficients(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read coefficient file {}", path.display()))?;
    let parsed: ExternalCoefficients = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse coefficient file {}", path.display()))?;
    Ok(parsed.coefficients)
}

fn filter_report_csv(report: &FilterReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["geoid", "status", "reason"])?;
    for g in &report.kept {
        w.write_record([g.as_str(), "kept", ""])?;
    }
    for (g, reason) in &report.removed {
        w.write_record([g.as_str(), "removed", &reason.to_string()])?;
    }
    Ok(w.into_inner()?)
}

struct CachedStages {
    imputed: Vec<BlockGroupRecord>,
    filter_csv: Vec<u8>,
    audit_csv: Vec<u8>,
    coefficients: Option<CoefficientSet>,
}

fn cache_dir(out_root: &Path, key: &str) -> PathBuf {
    out_root.join(".cache").join(key)
}

fn try_cache_load(dir: &Path) -> Option<CachedStages> {
    let imputed_file = std::fs::File::open(dir.join("imputed.jsonl")).ok()?;
    let imputed = read_records(BufReader::new(imputed_file)).ok()?;
    let filter_csv = std::fs::read(dir.join("filter_report.csv")).ok()?;
    let audit_csv = std::fs::read(dir.join("imputation_audit.csv")).ok()?;
    let coefficients = std::fs::File::open(dir.join("coefficients.json"))
        .ok()
        .and_then(|f| CoefficientSet::from_json(BufReader::new(f)).ok());
    Some(CachedStages {
        imputed,
        filter_csv,
        audit_csv,
        coefficients,
    })
}

pub fn run(args: BuildIndexArgs) -> Result<()> {
    let file_config = FileConfig::load(args.config.as_deref())?;
    let section = file_config.build_index.as_ref();

    let census = require(
        args.census,
        section.and_then(|s| s.census.clone()),
        "census",
    )?;
    let out_root = require(args.out, section.and_then(|s| s.out.clone()), "out")?;
    let delimiter = crate::config::parse_delimiter(
        args.delimiter
            .or_else(|| section.and_then(|s| s.delimiter.clone())),
    )?;
    let k = args.k.or(section.and_then(|s| s.k)).unwrap_or(5);
    let variant_names = args
        .variants
        .or_else(|| section.and_then(|s| s.variants.clone()))
        .unwrap_or_else(|| vec!["badi".to_string()]);
    let coefficients_path = args
        .coefficients
        .or(section.and_then(|s| s.coefficients.clone()));
    let factor_config = file_config.factor_config();

    existing_file(&census, "census")?;
    let mut variants: Vec<IndexVariant> = Vec::new();
    for name in &variant_names {
        let v: IndexVariant = name.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
        if !variants.contains(&v) {
            variants.push(v);
        }
    }
    if variants.contains(&IndexVariant::Adi) && coefficients_path.is_none() {
        bail!("the adi variant needs --coefficients (external weight file)");
    }
    if k == 0 {
        bail!("--k must be >= 1");
    }

    let config_echo = serde_json::json!({
        "census": census.display().to_string(),
        "delimiter": (delimiter as char).to_string(),
        "k": k,
        "variants": variant_names,
        "coefficients": coefficients_path.as_ref().map(|p| p.display().to_string()),
        "factor": {
            "condition_cap": factor_config.condition_cap,
            "refinement_iterations": factor_config.refinement_iterations,
        },
        "no_cache": args.no_cache,
    });
    let mut manifest = RunManifest::new("build-index", config_echo);
    manifest.add_input("census", &census)?;
    if let Some(path) = &coefficients_path {
        existing_file(path, "coefficients")?;
        manifest.add_input("coefficients", path)?;
    }

    // cache key: census bytes + every parameter the cached stages depend on
    let census_bytes = std::fs::read(&census)?;
    let cache_key = sha256_hex(
        format!(
            "{}|k={k}|d={delimiter}|cap={}|iters={}",
            sha256_hex(&census_bytes),
            factor_config.condition_cap,
            factor_config.refinement_iterations
        )
        .as_bytes(),
    );
    let cache_path = cache_dir(&out_root, &cache_key);

    let mut out = OutputDir::create(&out_root)?;
    with_cleanup(&mut out, |out| {
        let mut clock = StageClock::start();

        let cached = if args.no_cache {
            None
        } else {
            try_cache_load(&cache_path)
        };
        let cache_hit = cached.is_some();
        let stages = match cached {
            Some(stages) => {
                clock.lap(&mut manifest, "cache_load");
                stages
            }
            None => {
                let records =
                    parse_block_groups(census_bytes.as_slice(), &TableSchema::default(), delimiter)
                        .context("stage parse: census table")?;
                manifest
                    .counts
                    .insert("parsed_block_groups".to_string(), records.len() as u64);
                clock.lap(&mut manifest, "parse");

                let (kept, filter_report) = apply_filter(records);
                manifest
                    .counts
                    .insert("kept_block_groups".to_string(), kept.len() as u64);
                manifest.counts.insert(
                    "removed_block_groups".to_string(),
                    filter_report.removed.len() as u64,
                );
                clock.lap(&mut manifest, "filter");

                let (imputed, audit) = knn_impute(&kept, &ImputationConfig::with_k(k))
                    .context("stage impute: nested kNN")?;
                manifest
                    .counts
                    .insert("imputed_cells".to_string(), audit.entries.len() as u64);
                clock.lap(&mut manifest, "impute");

                let filter_csv = filter_report_csv(&filter_report)?;
                let audit_csv = audit_to_csv(&audit)?;
                CachedStages {
                    imputed,
                    filter_csv,
                    audit_csv,
                    coefficients: None,
                }
            }
        };

        let zm = standardize(&stages.imputed).context("stage standardize")?;
        clock.lap(&mut manifest, "standardize");

        let coefficients = match stages.coefficients {
            Some(c) => c,
            None => principal_factor(&zm, &factor_config).context("stage factor")?,
        };
        clock.lap(&mut manifest, "factor");

        let mut all_scores: Vec<IndexScores> = Vec::new();
        for variant in &variants {
            let scores = match variant {
                IndexVariant::Badi => {
                    build_badi_with_coefficients(&zm, &coefficients).context("stage score: bADI")?
                }
                IndexVariant::Adi => {
                    let weights = load_external_coefficients(coefficients_path.as_ref().unwrap())
                        .context("stage score: ADI coefficients")?;
                    replicate_adi(&stages.imputed, &weights).context("stage score: ADI")?
                }
            };
            all_scores.push(scores);
        }
        clock.lap(&mut manifest, "score_rank");

        // write cache for the next run
        if !cache_hit {
            std::fs::create_dir_all(&cache_path)?;
            let mut imputed_buf = Vec::new();
            write_records(&mut imputed_buf, &stages.imputed)?;
            std::fs::write(cache_path.join("imputed.jsonl"), &imputed_buf)?;
            std::fs::write(cache_path.join("filter_report.csv"), &stages.filter_csv)?;
            std::fs::write(cache_path.join("imputation_audit.csv"), &stages.audit_csv)?;
            std::fs::write(
                cache_path.join("coefficients.json"),
                coefficients.to_json()?,
            )?;
        }

        let mut imputed_buf = Vec::new();
        write_records(&mut imputed_buf, &stages.imputed)?;
        out.write("imputed_records.jsonl", &imputed_buf)?;
        out.write("filter_report.csv", &stages.filter_csv)?;
        out.write("imputation_audit.csv", &stages.audit_csv)?;
        out.write("coefficients.json", coefficients.to_json()?.as_bytes())?;

        let mut scores_buf = Vec::new();
        for (i, scores) in all_scores.iter().enumerate() {
            scores.write_csv(&mut scores_buf, i == 0)?;
        }
        out.write("index_scores.csv", &scores_buf)?;
        clock.lap(&mut manifest, "emit");

        manifest.cache = Some(CacheInfo {
            key: cache_key.clone(),
            hit: cache_hit,
        });
        manifest
            .counts
            .insert("scored_block_groups".to_string(), zm.n() as u64);
        if zm.n() < badi_core::index::PERCENTILE_WARN_N {
            manifest.notes.push(format!(
                "only {} block groups: percentiles are coarse",
                zm.n()
            ));
        }
        let mut outputs = out.written_names();
        outputs.push("manifest.json".to_string());
        manifest.outputs = outputs;
        out.write("manifest.json", manifest.to_json()?.as_bytes())?;
        Ok(())
    })?;

    eprintln!("build-index: wrote {}", out_root.display());
    Ok(())
}

fn audit_to_csv(audit: &ImputationAudit) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    audit.write_csv(&mut buf)?;
    Ok(buf)
}
