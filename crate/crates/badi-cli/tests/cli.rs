//! End-to-end runs of the `badi` binary: synth -> build-index ->
//! benchmark -> glm, plus determinism, caching, and failure contracts.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn badi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_badi"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn badi")
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn read_csv_column(path: &Path, column: &str) -> Vec<String> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let idx = reader
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == column)
        .unwrap_or_else(|| panic!("column {column} in {}", path.display()));
    reader
        .records()
        .map(|r| r.unwrap().get(idx).unwrap().to_string())
        .collect()
}

/// Everything but manifest.json, keyed by file name.
fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if !entry.file_type().unwrap().is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == "manifest.json" {
            continue;
        }
        out.insert(name, std::fs::read(entry.path()).unwrap());
    }
    out
}

#[test]
fn synth_is_byte_identical_under_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ok(&badi(&["synth", "--seed", "9", "--out", "a"], tmp.path()));
    assert_ok(&badi(&["synth", "--seed", "9", "--out", "b"], tmp.path()));
    assert_eq!(
        dir_bytes(&tmp.path().join("a")),
        dir_bytes(&tmp.path().join("b"))
    );

    assert_ok(&badi(&["synth", "--seed", "10", "--out", "c"], tmp.path()));
    assert_ne!(
        std::fs::read(tmp.path().join("a/census.csv")).unwrap(),
        std::fs::read(tmp.path().join("c/census.csv")).unwrap()
    );
}

#[test]
fn full_pipeline_produces_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_ok(&badi(&["synth", "--seed", "3", "--out", "synth"], dir));

    // build both variants; the adi variant needs a coefficient file
    std::fs::write(
        dir.join("weights.json"),
        serde_json::json!({
            "coefficients": [-2.0e-5, 0.05, 0.08, 0.07, 0.06, 0.05, 0.04, 0.03,
                             -0.05, 0.06, -1.0e-4, -1.5e-4, 1.0e-5, -0.06, 0.07, 0.08, -0.07]
        })
        .to_string(),
    )
    .unwrap();
    assert_ok(&badi(
        &[
            "build-index",
            "--census",
            "synth/census.csv",
            "--variants",
            "badi,adi",
            "--coefficients",
            "weights.json",
            "--out",
            "index",
        ],
        dir,
    ));

    // scores satisfy the published invariants
    let scores = dir.join("index/index_scores.csv");
    let variants = read_csv_column(&scores, "variant");
    assert!(variants.iter().any(|v| v == "bADI"));
    assert!(variants.iter().any(|v| v == "ADI"));
    let rescaled: Vec<f64> = read_csv_column(&scores, "rescaled")
        .iter()
        .zip(&variants)
        .filter(|(_, v)| *v == "bADI")
        .map(|(s, _)| s.parse().unwrap())
        .collect();
    let n = rescaled.len() as f64;
    let mean = rescaled.iter().sum::<f64>() / n;
    let sd = (rescaled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((mean - 100.0).abs() < 1e-6);
    assert!((sd - 20.0).abs() < 1e-6);

    // percentiles are monotone in the rescaled score
    let pct: Vec<u32> = read_csv_column(&scores, "percentile")
        .iter()
        .zip(&variants)
        .filter(|(_, v)| *v == "bADI")
        .map(|(s, _)| s.parse().unwrap())
        .collect();
    let mut order: Vec<usize> = (0..rescaled.len()).collect();
    order.sort_by(|&a, &b| rescaled[a].total_cmp(&rescaled[b]));
    for pair in order.windows(2) {
        assert!(pct[pair[0]] <= pct[pair[1]]);
    }

    // benchmark: the index against itself must correlate at 1.0
    let mut w = csv::Writer::from_path(dir.join("self_outcome.csv")).unwrap();
    w.write_record(["geoid", "measure", "value"]).unwrap();
    let geoids = read_csv_column(&scores, "geoid");
    let mut county_means: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for ((g, v), variant) in geoids.iter().zip(&rescaled).zip(&variants) {
        if variant == "bADI" {
            let entry = county_means.entry(g[..5].to_string()).or_insert((0.0, 0.0));
            entry.0 += v;
            entry.1 += 1.0;
        }
    }
    for (county, (sum, count)) in &county_means {
        w.write_record([county.as_str(), "self", &format!("{}", sum / count)])
            .unwrap();
    }
    w.flush().unwrap();
    drop(w);

    assert_ok(&badi(
        &[
            "benchmark",
            "--scores",
            "index/index_scores.csv",
            "--records",
            "index/imputed_records.jsonl",
            "--outcomes",
            "self_outcome.csv",
            "--out",
            "bench",
        ],
        dir,
    ));
    let bench = dir.join("bench/outcome_correlations_county.csv");
    let values: Vec<f64> = read_csv_column(&bench, "value")
        .iter()
        .zip(read_csv_column(&bench, "variant"))
        .zip(read_csv_column(&bench, "statistic"))
        .filter(|((_, v), s)| v == "bADI" && s == "pearson")
        .map(|((x, _), _)| x.parse().unwrap())
        .collect();
    assert_eq!(values.len(), 1);
    assert!(
        (values[0] - 1.0).abs() < 1e-9,
        "self-correlation {}",
        values[0]
    );

    // both-variant figure data exists
    assert!(dir.join("bench/fig1_scatter.csv").exists());
    assert!(dir.join("bench/figA1_scatter.csv").exists());

    // housing quantile summary is ordered
    let q = dir.join("bench/housing_quantiles.csv");
    let min: f64 = read_csv_column(&q, "min")[0].parse().unwrap();
    let q1: f64 = read_csv_column(&q, "q1")[0].parse().unwrap();
    let q2: f64 = read_csv_column(&q, "q2")[0].parse().unwrap();
    let q3: f64 = read_csv_column(&q, "q3")[0].parse().unwrap();
    let max: f64 = read_csv_column(&q, "max")[0].parse().unwrap();
    assert!(min <= q1 && q1 <= q2 && q2 <= q3 && q3 <= max);

    // glm: grid row count matches the stratum enumeration
    assert_ok(&badi(
        &[
            "glm",
            "--beneficiaries",
            "synth/beneficiaries.csv",
            "--scores",
            "index/index_scores.csv",
            "--out",
            "glm",
        ],
        dir,
    ));
    let grid: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("glm/contrast_grid.json")).unwrap())
            .unwrap();
    let cells = grid["cells"].as_array().unwrap().len();
    let skipped = grid["skipped"].as_array().unwrap().len();
    // 2 programs x 2 states x 2 variants x 2 outcomes
    assert_eq!(cells + skipped, 16, "cells {cells} skipped {skipped}");

    // report summarizes each run directory
    for run in ["synth", "index", "bench", "glm"] {
        let output = badi(&["report", "--run", run], dir);
        assert_ok(&output);
        let stdout = String::from_utf8_lossy(&output.stdout).into_owned();
        assert!(
            stdout.contains("status:     ok"),
            "report for {run}:\n{stdout}"
        );
    }
}

#[test]
fn build_index_is_deterministic_and_caches() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_ok(&badi(&["synth", "--seed", "5", "--out", "synth"], dir));

    assert_ok(&badi(
        &["build-index", "--census", "synth/census.csv", "--out", "a"],
        dir,
    ));
    assert_ok(&badi(
        &[
            "build-index",
            "--census",
            "synth/census.csv",
            "--out",
            "b",
            "--no-cache",
        ],
        dir,
    ));
    assert_eq!(dir_bytes(&dir.join("a")), dir_bytes(&dir.join("b")));

    // second run into the same directory hits the cache and leaves every
    // non-manifest artifact byte-identical
    let before = dir_bytes(&dir.join("a"));
    assert_ok(&badi(
        &["build-index", "--census", "synth/census.csv", "--out", "a"],
        dir,
    ));
    assert_eq!(before, dir_bytes(&dir.join("a")));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("a/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["cache"]["hit"], serde_json::Value::Bool(true));
}

#[test]
fn constant_variable_fails_with_stage_label() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let mut w = csv::Writer::from_path(dir.join("census.csv")).unwrap();
    let mut header = vec![
        "geoid".to_string(),
        "population".to_string(),
        "housing_units".to_string(),
        "group_quarters".to_string(),
    ];
    for v in badi_core::census::variables::VARIABLES {
        header.push(v.name.to_string());
    }
    w.write_record(&header).unwrap();
    for i in 0..120 {
        let mut row = vec![
            format!("01001{:06}{}", i / 4, 1 + i % 4),
            "500".to_string(),
            "200".to_string(),
            "10".to_string(),
        ];
        for j in 0..17 {
            // pct_unemployed (index 14) held constant
            let value = if j == 14 {
                7.0
            } else {
                10.0 + ((i * 13 + j * 7) % 50) as f64
            };
            row.push(format!("{value}"));
        }
        w.write_record(&row).unwrap();
    }
    w.flush().unwrap();
    drop(w);

    let output = badi(
        &["build-index", "--census", "census.csv", "--out", "out"],
        dir,
    );
    assert!(!output.status.success());
    let stderr = stderr_of(&output);
    assert!(stderr.contains("stage standardize"), "stderr: {stderr}");
    assert!(stderr.contains("pct_unemployed"), "stderr: {stderr}");
    // partial outputs were removed
    assert!(!dir.join("out/index_scores.csv").exists());
    assert!(!dir.join("out/manifest.json").exists());
}

#[test]
fn unjoinable_outcomes_are_fatal_with_key_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_ok(&badi(&["synth", "--seed", "4", "--out", "synth"], dir));
    assert_ok(&badi(
        &[
            "build-index",
            "--census",
            "synth/census.csv",
            "--out",
            "index",
        ],
        dir,
    ));

    let mut w = csv::Writer::from_path(dir.join("alien.csv")).unwrap();
    w.write_record(["geoid", "measure", "value"]).unwrap();
    for i in 0..12 {
        w.write_record([format!("99{:03}", i + 1), "m".to_string(), format!("{i}")])
            .unwrap();
    }
    w.flush().unwrap();
    drop(w);

    let output = badi(
        &[
            "benchmark",
            "--scores",
            "index/index_scores.csv",
            "--outcomes",
            "alien.csv",
            "--out",
            "bench",
        ],
        dir,
    );
    assert!(!output.status.success());
    let stderr = stderr_of(&output);
    assert!(stderr.contains("no common geoids"), "stderr: {stderr}");
    assert!(
        stderr.contains("99001"),
        "stderr should sample outcome keys: {stderr}"
    );
}

#[test]
fn empty_beneficiary_file_is_fatal_and_named() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_ok(&badi(&["synth", "--seed", "6", "--out", "synth"], dir));
    assert_ok(&badi(
        &[
            "build-index",
            "--census",
            "synth/census.csv",
            "--out",
            "index",
        ],
        dir,
    ));
    std::fs::write(
        dir.join("empty.csv"),
        "id,geoid,program,state,age,sex,race,chronic_condition_count,hcc_condition_count,hcc_score,total_cost,er_visits\n",
    )
    .unwrap();
    let output = badi(
        &[
            "glm",
            "--beneficiaries",
            "empty.csv",
            "--scores",
            "index/index_scores.csv",
            "--out",
            "glm",
        ],
        dir,
    );
    assert!(!output.status.success());
    assert!(stderr_of(&output).contains("empty.csv"));
}

#[test]
fn config_file_drives_synth_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("run.toml"),
        r#"
[synth]
seed = 77
n_states = 1
counties_per_state = 1
tracts_per_county = 15
block_groups_per_tract = 2
beneficiaries_per_stratum = 10
missing_rate = 0.0
filter_violation_rate = 0.0
"#,
    )
    .unwrap();
    assert_ok(&badi(&["synth", "--config", "run.toml", "--out", "a"], dir));
    let census = read_csv_column(&dir.join("a/census.csv"), "geoid");
    assert_eq!(census.len(), 30);

    // --seed beats the config seed
    assert_ok(&badi(
        &[
            "synth", "--config", "run.toml", "--seed", "78", "--out", "b",
        ],
        dir,
    ));
    assert_ne!(
        std::fs::read(dir.join("a/census.csv")).unwrap(),
        std::fs::read(dir.join("b/census.csv")).unwrap()
    );
}

#[test]
fn expected_filter_violation_rate_shows_up_in_kept_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("run.toml"),
        r#"
[synth]
seed = 123
n_states = 2
counties_per_state = 5
tracts_per_county = 25
block_groups_per_tract = 4
beneficiaries_per_stratum = 10
missing_rate = 0.02
filter_violation_rate = 0.10
"#,
    )
    .unwrap();
    assert_ok(&badi(&["synth", "--config", "run.toml", "--out", "s"], dir));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("s/manifest.json")).unwrap())
            .unwrap();
    let total = manifest["counts"]["block_groups"].as_u64().unwrap() as f64;
    let removed = manifest["counts"]["removed_block_groups"].as_u64().unwrap() as f64;
    let rate = removed / total;
    // binomial(2000, 0.1) +- 2% tolerance
    assert!((rate - 0.10).abs() < 0.02, "violation rate {rate}");
}
