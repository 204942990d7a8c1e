//! Synthetic census block groups and beneficiary populations with known
//! ground truth, standing in for ACS extracts and restricted claims data.
//!
//! Every draw comes from a ChaCha8 stream keyed by (seed, entity tag,
//! entity identity): block groups key on their numeric GEOID, and
//! beneficiaries on (program, state, index within stratum). Growing the
//! geography or the population therefore never perturbs the draws of
//! entities that already existed.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::census::variables::{VariableKind, VARIABLES, VARIABLE_COUNT};
use crate::census::BlockGroupRecord;
use crate::error::{Error, Result};
use crate::geo::GeoId;
use crate::glm::{Beneficiary, Program, Sex};
use crate::index::IndexScores;

const TAG_CENSUS: u64 = 1;
const TAG_BENEFICIARY: u64 = 2;

fn stream(seed: u64, tag: u64, entity: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    key[16..24].copy_from_slice(&entity.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Per-variable affine placement of the latent factor: value =
/// offset + scale * (loading * d + noise). Dollar variables get large
/// offsets and scales to mimic the unit dominance the index is meant to
/// remove.
const VARIABLE_SCALE: [(f64, f64); VARIABLE_COUNT] = [
    (65_000.0, 8_000.0),   // median_family_income
    (2.5, 0.6),            // income_disparity
    (30.0, 4.0),           // pct_families_below_poverty
    (40.0, 5.0),           // pct_below_150_poverty
    (30.0, 4.0),           // pct_single_parent
    (25.0, 4.0),           // pct_no_vehicle
    (20.0, 3.0),           // pct_no_telephone
    (15.0, 3.0),           // pct_incomplete_plumbing
    (60.0, 5.0),           // pct_owner_occupied
    (15.0, 3.0),           // pct_crowded
    (1_600.0, 150.0),      // median_mortgage
    (1_100.0, 120.0),      // median_gross_rent
    (250_000.0, 40_000.0), // median_home_value
    (45.0, 5.0),           // pct_white_collar
    (20.0, 3.5),           // pct_unemployed
    (25.0, 4.5),           // pct_no_high_school
    (70.0, 4.5),           // pct_at_least_high_school
];

/// Default signed loadings of the latent disadvantage factor; positive
/// means the variable rises with disadvantage.
pub fn default_latent_loadings() -> Vec<f64> {
    vec![
        -0.7, // income falls with disadvantage
        0.6, 0.8, 0.8, 0.6, 0.6, 0.5, 0.4, -0.5, 0.5, -0.6, -0.5,
        -0.7, // home value falls with disadvantage
        -0.6, 0.6, 0.7, -0.7,
    ]
}

/// True generator coefficients for one outcome, in design-matrix terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeParams {
    pub intercept: f64,
    pub q1: f64,
    pub q2: f64,
    pub q4: f64,
    pub q5: f64,
    pub age: f64,
    pub sex_male: f64,
    /// Per-level effects; levels absent here (including the reference)
    /// contribute 0.
    pub race: BTreeMap<String, f64>,
    pub chronic: f64,
    pub hcc_count: f64,
    pub hcc_score: f64,
    /// Gamma shape for cost draws; unused for counts.
    pub gamma_shape: f64,
}

impl OutcomeParams {
    pub fn default_cost() -> Self {
        let mut race = BTreeMap::new();
        race.insert("black".to_string(), 0.05);
        race.insert("hispanic".to_string(), 0.03);
        race.insert("asian".to_string(), -0.02);
        race.insert("other".to_string(), 0.01);
        OutcomeParams {
            intercept: 7.5,
            q1: 1.08f64.ln(),
            q2: 0.02,
            q4: -0.02,
            q5: 0.85f64.ln(),
            age: 0.01,
            sex_male: 0.05,
            race,
            chronic: 0.08,
            hcc_count: 0.05,
            hcc_score: 0.35,
            gamma_shape: 1.5,
        }
    }

    pub fn default_er() -> Self {
        let mut race = BTreeMap::new();
        race.insert("black".to_string(), 0.03);
        race.insert("hispanic".to_string(), 0.02);
        OutcomeParams {
            intercept: -1.4,
            q1: 1.05f64.ln(),
            q2: 0.01,
            q4: -0.01,
            q5: 0.88f64.ln(),
            age: 0.005,
            sex_male: 0.03,
            race,
            chronic: 0.05,
            hcc_count: 0.04,
            hcc_score: 0.25,
            gamma_shape: 1.0,
        }
    }

    /// Zeroed quintile effects, for type-I calibration runs.
    pub fn with_null_quintiles(mut self) -> Self {
        self.q1 = 0.0;
        self.q2 = 0.0;
        self.q4 = 0.0;
        self.q5 = 0.0;
        self
    }

    fn quintile_effect(&self, q: u32) -> f64 {
        match q {
            1 => self.q1,
            2 => self.q2,
            4 => self.q4,
            5 => self.q5,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_states: u32,
    pub counties_per_state: u32,
    pub tracts_per_county: u32,
    /// At most 9: the block-group code is a single GEOID digit.
    pub block_groups_per_tract: u32,
    pub latent_loadings: Vec<f64>,
    pub noise_sd: f64,
    pub missing_rate: f64,
    /// Fraction of block groups drawn to violate one reliability rule.
    pub filter_violation_rate: f64,
    pub beneficiaries_per_stratum: u32,
    pub programs: Vec<Program>,
    /// Fraction of beneficiaries forced to zero cost.
    pub zero_cost_rate: f64,
    pub cost_params: OutcomeParams,
    pub er_params: OutcomeParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 20240901,
            n_states: 2,
            counties_per_state: 3,
            tracts_per_county: 10,
            block_groups_per_tract: 4,
            latent_loadings: default_latent_loadings(),
            noise_sd: 0.5,
            missing_rate: 0.05,
            filter_violation_rate: 0.02,
            beneficiaries_per_stratum: 2_000,
            programs: vec![Program::Ffs, Program::Ma],
            zero_cost_rate: 0.02,
            cost_params: OutcomeParams::default_cost(),
            er_params: OutcomeParams::default_er(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_states > 99 {
            return Err(Error::InvalidValue(
                "n_states must be in 1..=99".to_string(),
            ));
        }
        if self.counties_per_state == 0 || self.counties_per_state > 999 {
            return Err(Error::InvalidValue(
                "counties_per_state must be in 1..=999".to_string(),
            ));
        }
        if self.tracts_per_county == 0 || self.tracts_per_county > 999_999 {
            return Err(Error::InvalidValue(
                "tracts_per_county must be in 1..=999999".to_string(),
            ));
        }
        if self.block_groups_per_tract == 0 || self.block_groups_per_tract > 9 {
            return Err(Error::InvalidValue(
                "block_groups_per_tract must be in 1..=9".to_string(),
            ));
        }
        if self.latent_loadings.len() != VARIABLE_COUNT {
            return Err(Error::InvalidValue(format!(
                "latent_loadings must have {VARIABLE_COUNT} entries"
            )));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::InvalidValue(
                "missing_rate must be in [0, 1)".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.filter_violation_rate) {
            return Err(Error::InvalidValue(
                "filter_violation_rate must be in [0, 1]".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.zero_cost_rate) {
            return Err(Error::InvalidValue(
                "zero_cost_rate must be in [0, 1)".to_string(),
            ));
        }
        if self.noise_sd < 0.0 {
            return Err(Error::InvalidValue("noise_sd must be >= 0".to_string()));
        }
        if self.cost_params.gamma_shape <= 0.0 {
            return Err(Error::InvalidValue("gamma_shape must be > 0".to_string()));
        }
        if self.programs.is_empty() {
            return Err(Error::InvalidValue(
                "at least one program required".to_string(),
            ));
        }
        Ok(())
    }

    pub fn block_group_count(&self) -> u64 {
        self.n_states as u64
            * self.counties_per_state as u64
            * self.tracts_per_county as u64
            * self.block_groups_per_tract as u64
    }
}

fn clamp_domain(kind: VariableKind, value: f64) -> f64 {
    match kind {
        VariableKind::Percent => value.clamp(0.0, 100.0),
        VariableKind::Dollars => value.max(1.0),
        VariableKind::LogRatio => value,
    }
}

/// Generates block groups plus the latent disadvantage of each.
pub fn synth_census(cfg: &SynthConfig) -> Result<(Vec<BlockGroupRecord>, BTreeMap<GeoId, f64>)> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(cfg.block_group_count() as usize);
    let mut latent = BTreeMap::new();
    let standard = Normal::new(0.0, 1.0).unwrap();

    for s in 1..=cfg.n_states {
        for c in 1..=cfg.counties_per_state {
            for t in 1..=cfg.tracts_per_county {
                for b in 1..=cfg.block_groups_per_tract {
                    let key = format!("{s:02}{c:03}{t:06}{b}");
                    let geoid = GeoId::parse(&key)?;
                    // the 12-digit GEOID fits in u64 and is the stream key
                    let entity: u64 = key.parse().unwrap();
                    let mut rng = stream(cfg.seed, TAG_CENSUS, entity);

                    let d: f64 = standard.sample(&mut rng);
                    let mut values: Vec<Option<f64>> = Vec::with_capacity(VARIABLE_COUNT);
                    for j in 0..VARIABLE_COUNT {
                        let noise: f64 = standard.sample(&mut rng);
                        let (offset, scale) = VARIABLE_SCALE[j];
                        let raw =
                            offset + scale * (cfg.latent_loadings[j] * d + cfg.noise_sd * noise);
                        values.push(Some(clamp_domain(VARIABLES[j].kind, raw)));
                    }

                    // reliability fields; a configured fraction violates
                    // exactly one rule
                    let violate = rng.random::<f64>() < cfg.filter_violation_rate;
                    let (population, housing_units, gq_pct) = if violate {
                        match rng.random_range(0..3u32) {
                            0 => (
                                rng.random_range(10..100u64),
                                rng.random_range(100..1600u64),
                                rng.random_range(0.0..0.2),
                            ),
                            1 => (
                                rng.random_range(250..4000u64),
                                rng.random_range(0..30u64),
                                rng.random_range(0.0..0.2),
                            ),
                            _ => (
                                rng.random_range(250..4000u64),
                                rng.random_range(100..1600u64),
                                rng.random_range(0.34..0.8),
                            ),
                        }
                    } else {
                        (
                            rng.random_range(250..4000u64),
                            rng.random_range(100..1600u64),
                            rng.random_range(0.0..0.2),
                        )
                    };

                    // mask cells at the configured rate, but never all 17
                    if cfg.missing_rate > 0.0 {
                        let mut masked = 0;
                        for value in values.iter_mut() {
                            if rng.random::<f64>() < cfg.missing_rate && masked + 1 < VARIABLE_COUNT
                            {
                                *value = None;
                                masked += 1;
                            }
                        }
                    }

                    let rec = BlockGroupRecord::new(
                        geoid.clone(),
                        population,
                        housing_units,
                        gq_pct,
                        values,
                    )?;
                    latent.insert(geoid, d);
                    records.push(rec);
                }
            }
        }
    }
    Ok((records, latent))
}

const RACE_LEVELS: [(&str, f64); 5] = [
    ("white", 0.60),
    ("black", 0.15),
    ("hispanic", 0.15),
    ("asian", 0.06),
    ("other", 0.04),
];

fn draw_race(rng: &mut ChaCha8Rng) -> &'static str {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (level, w) in RACE_LEVELS {
        acc += w;
        if u < acc {
            return level;
        }
    }
    RACE_LEVELS[RACE_LEVELS.len() - 1].0
}

fn linear_predictor(params: &OutcomeParams, quintile: u32, b: &Beneficiary) -> f64 {
    params.intercept
        + params.quintile_effect(quintile)
        + params.age * b.age
        + params.sex_male * if b.sex == Sex::M { 1.0 } else { 0.0 }
        + params.race.get(&b.race).copied().unwrap_or(0.0)
        + params.chronic * b.chronic_condition_count as f64
        + params.hcc_count * b.hcc_condition_count as f64
        + params.hcc_score * b.hcc_score
}

/// Generates beneficiaries for every (program, state) stratum over the
/// states present in the index, with costs and ER visits drawn from the
/// configured generator truths.
pub fn synth_beneficiaries(cfg: &SynthConfig, index: &IndexScores) -> Result<Vec<Beneficiary>> {
    cfg.validate()?;
    if index.rows.is_empty() {
        return Err(Error::InvalidValue(
            "index has no scored block groups".to_string(),
        ));
    }
    let mut by_state: BTreeMap<&str, Vec<(&GeoId, u32)>> = BTreeMap::new();
    for row in &index.rows {
        by_state
            .entry(row.geoid.state_fips())
            .or_default()
            .push((&row.geoid, row.quintile));
    }

    let age_dist = Normal::new(72.0, 8.0).unwrap();
    let hcc_dist = Gamma::new(4.0, 0.3).unwrap();

    let mut out = Vec::new();
    for (p_idx, program) in cfg.programs.iter().enumerate() {
        for (s_idx, (state, members)) in by_state.iter().enumerate() {
            for i in 0..cfg.beneficiaries_per_stratum {
                let entity = ((p_idx as u64) << 48) | ((s_idx as u64) << 32) | i as u64;
                let mut rng = stream(cfg.seed, TAG_BENEFICIARY, entity);

                let (geoid, quintile) = members[rng.random_range(0..members.len())];
                let age: f64 = age_dist.sample(&mut rng);
                let age = age.clamp(22.0, 105.0);
                let sex = if rng.random::<f64>() < 0.45 {
                    Sex::M
                } else {
                    Sex::F
                };
                let race = draw_race(&mut rng).to_string();
                let chronic = Poisson::new(3.0).unwrap().sample(&mut rng) as u32;
                let hcc_count = Poisson::new(2.0).unwrap().sample(&mut rng) as u32;
                let hcc_score: f64 = hcc_dist.sample(&mut rng);
                let hcc_score = hcc_score.max(1e-3);

                let mut beneficiary = Beneficiary {
                    id: format!("{program}-{state}-{i:06}"),
                    geoid: geoid.clone(),
                    program: *program,
                    state: state.to_string(),
                    age,
                    sex,
                    race,
                    chronic_condition_count: chronic,
                    hcc_condition_count: hcc_count,
                    hcc_score,
                    total_cost: 0.0,
                    er_visits: 0,
                };

                let cost_mu = linear_predictor(&cfg.cost_params, quintile, &beneficiary).exp();
                let shape = cfg.cost_params.gamma_shape;
                let cost = Gamma::new(shape, cost_mu / shape)
                    .unwrap()
                    .sample(&mut rng)
                    .max(1e-6);
                beneficiary.total_cost = if rng.random::<f64>() < cfg.zero_cost_rate {
                    0.0
                } else {
                    cost
                };

                let er_mu = linear_predictor(&cfg.er_params, quintile, &beneficiary)
                    .exp()
                    .clamp(1e-12, 1e6);
                beneficiary.er_visits = Poisson::new(er_mu).unwrap().sample(&mut rng) as u32;

                beneficiary.validate()?;
                out.push(beneficiary);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::census::filter_reason;
    use crate::index::{build_badi, FactorConfig};

    fn tiny_config() -> SynthConfig {
        SynthConfig {
            n_states: 1,
            counties_per_state: 2,
            tracts_per_county: 5,
            block_groups_per_tract: 3,
            missing_rate: 0.0,
            filter_violation_rate: 0.0,
            beneficiaries_per_stratum: 50,
            ..Default::default()
        }
    }

    #[test]
    fn zero_missing_rate_has_no_missing_flags() {
        let (records, latent) = synth_census(&tiny_config()).unwrap();
        assert_eq!(records.len(), 30);
        assert_eq!(latent.len(), 30);
        assert!(records.iter().all(|r| r.missing_count() == 0));
    }

    #[test]
    fn records_always_satisfy_invariants() {
        let cfg = SynthConfig {
            missing_rate: 0.3,
            filter_violation_rate: 0.3,
            noise_sd: 2.0,
            ..tiny_config()
        };
        let (records, _) = synth_census(&cfg).unwrap();
        for rec in &records {
            rec.validate().unwrap();
        }
    }

    #[test]
    fn zero_noise_equal_loadings_make_variables_affine_in_latent() {
        let cfg = SynthConfig {
            noise_sd: 0.0,
            latent_loadings: vec![0.5; VARIABLE_COUNT],
            ..tiny_config()
        };
        let (records, latent) = synth_census(&cfg).unwrap();
        for rec in &records {
            let d = latent[&rec.geoid];
            for j in 0..VARIABLE_COUNT {
                let (offset, scale) = VARIABLE_SCALE[j];
                let expected = clamp_domain(VARIABLES[j].kind, offset + scale * 0.5 * d);
                assert!((rec.variables[j].unwrap() - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn near_deterministic_factor_gives_exact_percentile_monotonicity() {
        // exactly 100 kept block groups so percentiles are a permutation of
        // 1..=100; tiny noise keeps the correlation matrix numerically
        // invertible without disturbing the ordering
        let cfg = SynthConfig {
            n_states: 1,
            counties_per_state: 1,
            tracts_per_county: 25,
            block_groups_per_tract: 4,
            noise_sd: 1e-4,
            missing_rate: 0.0,
            filter_violation_rate: 0.0,
            latent_loadings: vec![0.5; VARIABLE_COUNT],
            ..Default::default()
        };
        let (records, latent) = synth_census(&cfg).unwrap();
        assert_eq!(records.len(), 100);
        let (scores, _) = build_badi(&records, &FactorConfig::default()).unwrap();
        let pct: Vec<f64> = scores.rows.iter().map(|r| r.percentile as f64).collect();
        let d: Vec<f64> = scores.rows.iter().map(|r| latent[&r.geoid]).collect();
        let rho = crate::stats::spearman(&pct, &d).unwrap();
        assert_eq!(rho, 1.0);
    }

    #[test]
    fn violation_rate_controls_filter_failures() {
        let cfg = SynthConfig {
            n_states: 2,
            counties_per_state: 5,
            tracts_per_county: 25,
            block_groups_per_tract: 4,
            filter_violation_rate: 0.1,
            ..tiny_config()
        };
        let (records, _) = synth_census(&cfg).unwrap();
        let violations = records
            .iter()
            .filter(|r| filter_reason(r).is_some())
            .count() as f64;
        let rate = violations / records.len() as f64;
        // binomial(1000, 0.1): +-3 sd ~ 0.028
        assert!((rate - 0.1).abs() < 0.03, "violation rate {rate}");
    }

    #[test]
    fn census_is_reproducible_and_stable_under_growth() {
        let cfg = tiny_config();
        let (a, _) = synth_census(&cfg).unwrap();
        let (b, _) = synth_census(&cfg).unwrap();
        assert_eq!(a, b);

        // growing the geography leaves existing block groups untouched
        let grown = SynthConfig {
            tracts_per_county: 8,
            ..tiny_config()
        };
        let (big, _) = synth_census(&grown).unwrap();
        for rec in &a {
            let twin = big.iter().find(|r| r.geoid == rec.geoid).unwrap();
            assert_eq!(twin, rec);
        }
    }

    #[test]
    fn beneficiaries_are_reproducible_and_valid() {
        let cfg = tiny_config();
        let (records, _) = synth_census(&cfg).unwrap();
        let (scores, _) = build_badi(&records, &FactorConfig::default()).unwrap();
        let a = synth_beneficiaries(&cfg, &scores).unwrap();
        let b = synth_beneficiaries(&cfg, &scores).unwrap();
        assert_eq!(a, b);
        // 2 programs x 1 state x 50
        assert_eq!(a.len(), 100);
        for beneficiary in &a {
            beneficiary.validate().unwrap();
            assert!(scores.rows.iter().any(|r| r.geoid == beneficiary.geoid));
        }
        // growing a stratum keeps the existing draws
        let grown = SynthConfig {
            beneficiaries_per_stratum: 80,
            ..tiny_config()
        };
        let big = synth_beneficiaries(&grown, &scores).unwrap();
        assert_eq!(&big[..50], &a[..50]);
    }

    #[test]
    fn zero_cost_rate_forces_zeros() {
        let cfg = SynthConfig {
            zero_cost_rate: 0.5,
            ..tiny_config()
        };
        let (records, _) = synth_census(&cfg).unwrap();
        let (scores, _) = build_badi(&records, &FactorConfig::default()).unwrap();
        let bens = synth_beneficiaries(&cfg, &scores).unwrap();
        let zeros = bens.iter().filter(|b| b.total_cost == 0.0).count() as f64;
        let rate = zeros / bens.len() as f64;
        assert!((rate - 0.5).abs() < 0.2);
    }

    #[test]
    fn config_validation_rejects_bad_counts() {
        let mut cfg = tiny_config();
        cfg.block_groups_per_tract = 10;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.missing_rate = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.latent_loadings = vec![0.5; 5];
        assert!(cfg.validate().is_err());
    }
}
