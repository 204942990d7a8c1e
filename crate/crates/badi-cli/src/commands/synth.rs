//! synth: generate a census table, its latent factors, and a beneficiary
//! population whose quintiles come from running the index pipeline on the
//! generated census.

use anyhow::{Context, Result};
use badi_core::census::apply_filter;
use badi_core::census::parse::{write_block_groups, TableSchema};
use badi_core::glm::write_beneficiaries;
use badi_core::impute::{knn_impute, ImputationConfig};
use badi_core::index::build_badi;
use badi_core::synth::{synth_beneficiaries, synth_census};

use crate::config::{require, FileConfig};
use crate::manifest::{RunManifest, StageClock};
use crate::outdir::{with_cleanup, OutputDir};
use crate::SynthArgs;

pub fn run(args: SynthArgs) -> Result<()> {
    let file_config = FileConfig::load(args.config.as_deref())?;
    let section = file_config.synth.as_ref();
    let out_root = require(args.out, section.and_then(|s| s.out.clone()), "out")?;
    let synth_config = section
        .map(|s| s.to_synth_config(args.seed))
        .unwrap_or_else(|| {
            let mut cfg = badi_core::synth::SynthConfig::default();
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            cfg
        });
    synth_config
        .validate()
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    let config_echo = serde_json::to_value(&synth_config)?;
    let mut manifest = RunManifest::new("synth", config_echo);
    let factor_config = file_config.factor_config();

    let mut out = OutputDir::create(&out_root)?;
    with_cleanup(&mut out, |out| {
        let mut clock = StageClock::start();

        let (records, latent) = synth_census(&synth_config).context("stage generate: census")?;
        manifest
            .counts
            .insert("block_groups".to_string(), records.len() as u64);
        clock.lap(&mut manifest, "census");

        let mut census_buf = Vec::new();
        write_block_groups(&mut census_buf, &records, &TableSchema::default(), b',')?;
        out.write("census.csv", &census_buf)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["geoid", "latent"])?;
        for (geoid, d) in &latent {
            w.write_record([geoid.to_string(), format!("{d}")])?;
        }
        out.write("latent.csv", &w.into_inner()?)?;
        clock.lap(&mut manifest, "emit_census");

        // quintiles for the beneficiary generator come from the same
        // pipeline a later build-index run will apply to census.csv
        let (kept, filter_report) = apply_filter(records);
        manifest
            .counts
            .insert("kept_block_groups".to_string(), kept.len() as u64);
        manifest.counts.insert(
            "removed_block_groups".to_string(),
            filter_report.removed.len() as u64,
        );
        let (imputed, _) =
            knn_impute(&kept, &ImputationConfig::default()).context("stage impute")?;
        let (scores, _) = build_badi(&imputed, &factor_config).context("stage score")?;
        clock.lap(&mut manifest, "index");

        let beneficiaries =
            synth_beneficiaries(&synth_config, &scores).context("stage generate: beneficiaries")?;
        manifest
            .counts
            .insert("beneficiaries".to_string(), beneficiaries.len() as u64);
        let mut buf = Vec::new();
        write_beneficiaries(&mut buf, &beneficiaries)?;
        out.write("beneficiaries.csv", &buf)?;
        clock.lap(&mut manifest, "emit_beneficiaries");

        let mut outputs = out.written_names();
        outputs.push("manifest.json".to_string());
        manifest.outputs = outputs;
        out.write("manifest.json", manifest.to_json()?.as_bytes())?;
        Ok(())
    })?;

    eprintln!("synth: wrote {}", out_root.display());
    Ok(())
}
