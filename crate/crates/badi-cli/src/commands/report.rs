//! report: human-readable summary of a run directory's manifest.

use anyhow::{Context, Result};

use crate::manifest::RunManifest;
use crate::ReportArgs;

pub fn run(args: ReportArgs) -> Result<()> {
    let path = args.run.join("manifest.json");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("no manifest at {}", path.display()))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("bad manifest {}", path.display()))?;

    println!("run:        {}", args.run.display());
    println!("subcommand: {}", manifest.subcommand);
    println!("status:     {}", manifest.status);
    println!("created:    {} (unix)", manifest.created_unix);
    println!("config:     sha256:{}", &manifest.config_hash[..16]);
    if let Some(cache) = &manifest.cache {
        println!(
            "cache:      {} (key {})",
            if cache.hit { "hit" } else { "miss" },
            &cache.key[..16]
        );
    }
    if !manifest.inputs.is_empty() {
        println!("inputs:");
        for (name, digest) in &manifest.inputs {
            println!(
                "  {:<24} {} bytes  sha256:{}",
                name,
                digest.bytes,
                &digest.sha256[..16]
            );
        }
    }
    if !manifest.counts.is_empty() {
        println!("counts:");
        for (name, value) in &manifest.counts {
            println!("  {name:<24} {value}");
        }
    }
    if !manifest.timings.is_empty() {
        println!("timings (s):");
        for (stage, secs) in &manifest.timings {
            println!("  {stage:<24} {secs:.3}");
        }
    }
    if !manifest.outputs.is_empty() {
        println!("outputs:");
        for name in &manifest.outputs {
            let exists = args.run.join(name).exists();
            println!("  {}{}", name, if exists { "" } else { "  (missing)" });
        }
    }
    for note in &manifest.notes {
        println!("note: {note}");
    }
    Ok(())
}
