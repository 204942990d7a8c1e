//! glm: stratified gamma/poisson quintile contrasts over a beneficiary
//! file joined to index scores.

use std::io::BufReader;

use anyhow::{bail, Context, Result};
use badi_core::glm::{read_beneficiaries, stratified_run, FitConfig};
use badi_core::index::IndexScores;

use crate::config::{existing_file, require, FileConfig};
use crate::manifest::{RunManifest, StageClock};
use crate::outdir::{with_cleanup, OutputDir};
use crate::GlmArgs;

pub fn run(args: GlmArgs) -> Result<()> {
    let file_config = FileConfig::load(args.config.as_deref())?;
    let section = file_config.glm.as_ref();

    let beneficiaries_path = require(
        args.beneficiaries,
        section.and_then(|s| s.beneficiaries.clone()),
        "beneficiaries",
    )?;
    let scores_path = require(
        args.scores,
        section.and_then(|s| s.scores.clone()),
        "scores",
    )?;
    let out_root = require(args.out, section.and_then(|s| s.out.clone()), "out")?;
    let quasi = args.quasi || section.and_then(|s| s.quasi).unwrap_or(false);

    existing_file(&beneficiaries_path, "beneficiaries")?;
    existing_file(&scores_path, "scores")?;

    let config_echo = serde_json::json!({
        "beneficiaries": beneficiaries_path.display().to_string(),
        "scores": scores_path.display().to_string(),
        "quasi": quasi,
    });
    let mut manifest = RunManifest::new("glm", config_echo);
    manifest.add_input("beneficiaries", &beneficiaries_path)?;
    manifest.add_input("scores", &scores_path)?;

    let beneficiaries =
        read_beneficiaries(BufReader::new(std::fs::File::open(&beneficiaries_path)?))
            .context("stage load: beneficiaries")?;
    if beneficiaries.is_empty() {
        bail!("beneficiary file {} is empty", beneficiaries_path.display());
    }
    let indices = IndexScores::read_csv(BufReader::new(std::fs::File::open(&scores_path)?))
        .context("stage load: index scores")?;
    if indices.is_empty() {
        bail!("score file {} has no rows", scores_path.display());
    }

    let fit_config = FitConfig {
        quasi_dispersion: quasi,
        ..Default::default()
    };

    let mut out = OutputDir::create(&out_root)?;
    with_cleanup(&mut out, |out| {
        let mut clock = StageClock::start();
        let grid = stratified_run(&beneficiaries, &indices, &fit_config)
            .context("stage fit: stratified contrasts")?;
        clock.lap(&mut manifest, "fit");

        let mut buf = Vec::new();
        grid.write_csv(&mut buf)?;
        out.write("contrast_grid.csv", &buf)?;
        out.write(
            "contrast_grid.json",
            serde_json::to_string_pretty(&serde_json::json!({
                "schema_version": 1,
                "cells": grid.cells,
                "skipped": grid.skipped,
            }))?
            .as_bytes(),
        )?;
        clock.lap(&mut manifest, "emit");

        manifest
            .counts
            .insert("beneficiaries".to_string(), beneficiaries.len() as u64);
        manifest
            .counts
            .insert("cells".to_string(), grid.cells.len() as u64);
        manifest
            .counts
            .insert("skipped_strata".to_string(), grid.skipped.len() as u64);
        manifest.counts.insert(
            "unconverged_cells".to_string(),
            grid.cells.iter().filter(|c| !c.converged).count() as u64,
        );
        for s in &grid.skipped {
            manifest.notes.push(format!(
                "skipped {} {} {} {}: {}",
                s.program, s.state, s.variant, s.outcome, s.reason
            ));
        }
        let mut outputs = out.written_names();
        outputs.push("manifest.json".to_string());
        manifest.outputs = outputs;
        out.write("manifest.json", manifest.to_json()?.as_bytes())?;
        Ok(())
    })?;

    eprintln!("glm: wrote {}", out_root.display());
    Ok(())
}
