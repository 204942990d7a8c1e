//! Declarative run configuration: one TOML document with a section per
//! subcommand; command-line flags override file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use badi_core::index::FactorConfig;
use badi_core::synth::{OutcomeParams, SynthConfig};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub build_index: Option<BuildIndexSection>,
    pub benchmark: Option<BenchmarkSection>,
    pub glm: Option<GlmSection>,
    pub synth: Option<SynthSection>,
    pub factor: Option<FactorSection>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))
    }

    pub fn factor_config(&self) -> FactorConfig {
        let mut cfg = FactorConfig::default();
        if let Some(section) = &self.factor {
            if let Some(cap) = section.condition_cap {
                cfg.condition_cap = cap;
            }
            if let Some(iters) = section.refinement_iterations {
                cfg.refinement_iterations = iters;
            }
        }
        cfg
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildIndexSection {
    pub census: Option<PathBuf>,
    pub delimiter: Option<String>,
    pub out: Option<PathBuf>,
    pub k: Option<usize>,
    pub variants: Option<Vec<String>>,
    pub coefficients: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub scores: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub outcomes: Option<Vec<PathBuf>>,
    pub crosswalk: Option<PathBuf>,
    pub extra_index: Option<Vec<String>>,
    pub weighted_agg: Option<bool>,
    pub percentile_agg: Option<bool>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlmSection {
    pub beneficiaries: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub quasi: Option<bool>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n_states: Option<u32>,
    pub counties_per_state: Option<u32>,
    pub tracts_per_county: Option<u32>,
    pub block_groups_per_tract: Option<u32>,
    pub latent_loadings: Option<Vec<f64>>,
    pub noise_sd: Option<f64>,
    pub missing_rate: Option<f64>,
    pub filter_violation_rate: Option<f64>,
    pub beneficiaries_per_stratum: Option<u32>,
    pub zero_cost_rate: Option<f64>,
    pub cost_params: Option<OutcomeParams>,
    pub er_params: Option<OutcomeParams>,
}

impl SynthSection {
    pub fn to_synth_config(&self, seed_flag: Option<u64>) -> SynthConfig {
        let mut cfg = SynthConfig::default();
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(seed) = seed_flag {
            cfg.seed = seed;
        }
        if let Some(v) = self.n_states {
            cfg.n_states = v;
        }
        if let Some(v) = self.counties_per_state {
            cfg.counties_per_state = v;
        }
        if let Some(v) = self.tracts_per_county {
            cfg.tracts_per_county = v;
        }
        if let Some(v) = self.block_groups_per_tract {
            cfg.block_groups_per_tract = v;
        }
        if let Some(v) = &self.latent_loadings {
            cfg.latent_loadings = v.clone();
        }
        if let Some(v) = self.noise_sd {
            cfg.noise_sd = v;
        }
        if let Some(v) = self.missing_rate {
            cfg.missing_rate = v;
        }
        if let Some(v) = self.filter_violation_rate {
            cfg.filter_violation_rate = v;
        }
        if let Some(v) = self.beneficiaries_per_stratum {
            cfg.beneficiaries_per_stratum = v;
        }
        if let Some(v) = self.zero_cost_rate {
            cfg.zero_cost_rate = v;
        }
        if let Some(v) = &self.cost_params {
            cfg.cost_params = v.clone();
        }
        if let Some(v) = &self.er_params {
            cfg.er_params = v.clone();
        }
        cfg
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSection {
    pub condition_cap: Option<f64>,
    pub refinement_iterations: Option<usize>,
}

/// Flag value wins over config value; error when neither is present.
pub fn require<T: Clone>(flag: Option<T>, config: Option<T>, what: &str) -> Result<T> {
    match flag.or(config) {
        Some(v) => Ok(v),
        None => bail!("missing required input `{what}` (flag or config)"),
    }
}

/// "," by default; "tab" (or a literal tab) selects tab-separated input.
pub fn parse_delimiter(spec: Option<String>) -> Result<u8> {
    let Some(spec) = spec else { return Ok(b',') };
    match spec.as_str() {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        s if s.chars().count() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        other => bail!("delimiter must be a single ASCII character or `tab`, got `{other}`"),
    }
}

pub fn existing_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} file does not exist: {}", path.display());
    }
    Ok(())
}
