//! Replicated simulation studies.
//!
//! A study repeats a complete survey many times against a known truth and
//! summarises bias, spread and interval coverage. Each replication draws from
//! its own random stream derived from the master seed and the replication
//! index, so reports are identical whatever the thread count.

mod compare;
mod district;
mod method;
mod scenarios;
mod ssd;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::Scenario;
use crate::error::{Error, Result};
use crate::rng;
use crate::samplers::{SamplerRegistry, SamplerSettings};

pub use compare::{
    comparison_study, comparison_study_with, generate_comparison_scenario, CompareConfig, CompareReport,
    MethodAggregate, MethodScore, ScenarioComparison,
};
pub use district::{
    build_district_scenario, district_example, district_example_with, district_fixture, read_cellmap_csv,
    read_districts_csv, synthetic_districts, write_cellmap_csv, write_districts_csv, CellAssignment, District,
    DistrictConfig, DistrictReport, DistrictRow, FIXTURE_DISTRICTS, FIXTURE_GRID, FIXTURE_SEED,
};
pub use method::{build_method, Replicate, Stratification, StratifiedMethod, SurveyMethod, TwoStageMethod, STRATIFIED};
pub use scenarios::{series_e_base, series_e_scenario, series_r_scenario, unit_gamma_grid};
pub use ssd::{ssd_study, ssd_study_with, SsdConfig, SsdGroup, SsdSurface, TruthSetting};

/// Settings of one replicated run. The scenario is supplied separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplicationConfig {
    /// A registered sampler name, or `stratified`.
    pub method: String,
    pub sampler: SamplerSettings,
    pub r_positions: usize,
    pub n_total: u64,
    pub eta: f64,
    pub alpha: f64,
    pub replications: usize,
    pub master_seed: u64,
    /// Sample from `φ ∝ f_I` with the exact-optimal allocation.
    pub oracle: bool,
    /// Neighbourhood area used for the finite population correction, if any.
    pub fpc_area: Option<f64>,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self {
            method: "gls".into(),
            sampler: SamplerSettings::default(),
            r_positions: 50,
            n_total: 10_000,
            eta: 0.0,
            alpha: 0.05,
            replications: 200,
            master_seed: rng::DEFAULT_SEED,
            oracle: false,
            fpc_area: None,
        }
    }
}

impl ReplicationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::Config(format!(
                "need at least 2 replications, got {}",
                self.replications
            )));
        }
        if self.r_positions == 0 || self.n_total == 0 {
            return Err(Error::Config("r and n must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Config(format!("eta {} outside [0, 1]", self.eta)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: String,
    pub true_total: f64,
    pub t_hats: Vec<f64>,
    pub v_hats: Vec<f64>,
    pub covered: Vec<bool>,
    pub mean_t_hat: f64,
    pub relative_bias: f64,
    /// Sample standard deviation of `t_hats`.
    pub empirical_sd: f64,
    /// Monte Carlo standard error of `mean_t_hat`.
    pub mc_standard_error: f64,
    pub mean_v_hat: f64,
    pub ci_coverage: f64,
    /// Standardised standard deviation against an oracle run, when one was made.
    pub ssd: Option<f64>,
    pub settings: ReplicationConfig,
}

impl ExperimentReport {
    pub fn from_replicates(method: &str, true_total: f64, reps: &[Replicate], settings: &ReplicationConfig) -> Self {
        let k = reps.len() as f64;
        let t_hats: Vec<f64> = reps.iter().map(|r| r.t_hat).collect();
        let v_hats: Vec<f64> = reps.iter().map(|r| r.v_hat).collect();
        let covered: Vec<bool> = reps
            .iter()
            .map(|r| r.ci_low <= true_total && true_total <= r.ci_high)
            .collect();
        let mean_t_hat = t_hats.iter().sum::<f64>() / k;
        let variance = sample_variance(&t_hats);
        let relative_bias = if true_total != 0.0 {
            (mean_t_hat - true_total) / true_total
        } else if mean_t_hat == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            method: method.to_string(),
            true_total,
            mean_t_hat,
            relative_bias,
            empirical_sd: variance.sqrt(),
            mc_standard_error: (variance / k).sqrt(),
            mean_v_hat: v_hats.iter().sum::<f64>() / k,
            ci_coverage: covered.iter().filter(|&&c| c).count() as f64 / k,
            ssd: None,
            t_hats,
            v_hats,
            covered,
            settings: settings.clone(),
        }
    }

    pub fn empirical_variance(&self) -> f64 {
        self.empirical_sd * self.empirical_sd
    }

    /// Sets `ssd = sd / oracle_sd`.
    pub fn with_oracle(mut self, oracle: &ExperimentReport) -> Self {
        self.ssd = Some(standardised_sd(self.empirical_variance(), oracle.empirical_variance()));
        self
    }
}

/// `sqrt(var / oracle_var)`, defined as 1 when both vanish.
pub fn standardised_sd(var: f64, oracle_var: f64) -> f64 {
    if oracle_var > 0.0 {
        (var / oracle_var).sqrt()
    } else if var == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let k = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / k;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)
}

/// Runs `method` once per replication index, in parallel, merging by index.
pub fn replicate(method: &dyn SurveyMethod, replications: usize, master_seed: u64) -> Result<Vec<Replicate>> {
    let results: Vec<Result<Replicate>> = (0..replications)
        .into_par_iter()
        .map(|i| {
            let mut stream = rng::stream(master_seed, &[i as u64]);
            method.run_once(&mut stream).map_err(|e| e.in_replication(i))
        })
        .collect();
    results.into_iter().collect()
}

/// Full pipeline repeated `config.replications` times on `scenario`.
pub fn run_replications(
    scenario: &Scenario,
    strata: Option<&Stratification>,
    config: &ReplicationConfig,
) -> Result<ExperimentReport> {
    run_replications_with(&SamplerRegistry::builtin(), scenario, strata, config)
}

pub fn run_replications_with(
    registry: &SamplerRegistry,
    scenario: &Scenario,
    strata: Option<&Stratification>,
    config: &ReplicationConfig,
) -> Result<ExperimentReport> {
    config.validate()?;
    let method = build_method(registry, scenario, strata, config)?;
    let reps = replicate(method.as_ref(), config.replications, config.master_seed)?;
    Ok(ExperimentReport::from_replicates(
        method.name(),
        scenario.total_infections(),
        &reps,
        config,
    ))
}
