//! Head-to-head comparison of position samplers and the stratified baseline
//! on randomly generated scenarios.
//!
//! The unit square is split into equal sub-squares with uniform population.
//! Within each sub-square, cases and infections follow the same isotropic
//! normal bump centred in the sub-square and truncated to it; case totals and
//! the infection-to-case multiplier are drawn at random per sub-square.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use super::method::Stratification;
use super::ssd::fmt17;
use super::{run_replications_with, ExperimentReport, ReplicationConfig, STRATIFIED};
use crate::density::{GridDensity, Region, Scenario};
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed};
use crate::samplers::{SamplerRegistry, SamplerSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    pub n_scenarios: usize,
    pub replications: usize,
    pub seed: u64,
    /// Sub-squares along each axis.
    pub blocks_per_axis: usize,
    /// Raster cells along each axis; must be a multiple of `blocks_per_axis`.
    pub raster: usize,
    pub total_population: f64,
    /// Cases per sub-square, drawn uniformly from this range.
    pub cases_range: (f64, f64),
    /// Infections-to-cases multiplier per sub-square, drawn uniformly from this range.
    pub multiplier_range: (f64, f64),
    /// Normal bump standard deviation as a fraction of the sub-square width.
    pub sd_fraction: f64,
    pub r_positions: usize,
    pub n_total: u64,
    pub gamma_check: f64,
    pub alpha: f64,
    pub sampler: SamplerSettings,
    pub methods: Vec<String>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            n_scenarios: 20,
            replications: 200,
            seed: rng::DEFAULT_SEED,
            blocks_per_axis: 4,
            raster: 64,
            total_population: 8000e4,
            cases_range: (2e4, 8e4),
            multiplier_range: (1.0, 1.5),
            sd_fraction: 0.25,
            r_positions: 16,
            n_total: 10_000,
            gamma_check: 0.0,
            alpha: 0.05,
            sampler: SamplerSettings::default(),
            methods: ["gls", "sir", "mh", STRATIFIED].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: String,
    pub relative_bias: f64,
    pub ssd: f64,
    pub coverage: f64,
    pub report: ExperimentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioComparison {
    pub scenario_id: usize,
    pub true_total: f64,
    pub oracle_sd: f64,
    pub methods: Vec<MethodScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: String,
    pub mean_ssd: f64,
    pub mean_coverage: f64,
    /// Mean over scenarios of the per-scenario relative bias.
    pub mean_relative_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub scenarios: Vec<ScenarioComparison>,
    pub summary: Vec<MethodAggregate>,
    pub config: CompareConfig,
}

impl CompareReport {
    pub fn aggregate(&self, method: &str) -> Option<&MethodAggregate> {
        self.summary.iter().find(|a| a.method == method)
    }

    /// Long-format rows `method,scenario_id,metric,value`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "scenario_id", "metric", "value"])?;
        for s in &self.scenarios {
            for m in &s.methods {
                for (metric, value) in [
                    ("relative_bias", m.relative_bias),
                    ("ssd", m.ssd),
                    ("coverage", m.coverage),
                ] {
                    w.write_record([m.method.clone(), s.scenario_id.to_string(), metric.into(), fmt17(value)])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Mass of a normal(`center`, `sd`) bump in each of `cells` equal bins of `[lo, hi]`,
/// renormalised to sum to 1 (truncation to the interval).
fn truncated_bins(lo: f64, hi: f64, cells: usize, center: f64, sd: f64) -> Vec<f64> {
    let width = (hi - lo) / cells as f64;
    let masses: Vec<f64> = (0..cells)
        .map(|k| {
            let a = lo + k as f64 * width;
            normal_cdf((a + width - center) / sd) - normal_cdf((a - center) / sd)
        })
        .collect();
    let total: f64 = masses.iter().sum();
    masses.into_iter().map(|m| m / total).collect()
}

/// One random scenario and the sub-square stratification.
pub fn generate_comparison_scenario(config: &CompareConfig, scenario_id: usize) -> Result<(Scenario, Stratification)> {
    let b = config.blocks_per_axis;
    let n = config.raster;
    if b == 0 || !n.is_multiple_of(b) {
        return Err(Error::Config(format!("raster {n} is not a multiple of {b} blocks")));
    }
    let (c_lo, c_hi) = config.cases_range;
    let (m_lo, m_hi) = config.multiplier_range;
    if !(0.0 <= c_lo && c_lo <= c_hi) || !(1.0 <= m_lo && m_lo <= m_hi) {
        return Err(Error::Config(
            "cases range must be nonnegative and multipliers at least 1".into(),
        ));
    }

    let region = Region::unit(n, n)?;
    let per_block = n / b;
    let block_area = 1.0 / (b * b) as f64;
    let cell_area = region.cell_area();
    let block_pop = config.total_population / (b * b) as f64;

    let mut stream = rng::stream(config.seed, &[0xc0_4a_1e, scenario_id as u64]);
    let draws: Vec<(f64, f64)> = (0..b * b)
        .map(|_| (stream.random_range(c_lo..=c_hi), stream.random_range(m_lo..=m_hi)))
        .collect();

    let width = 1.0 / b as f64;
    let bins = truncated_bins(0.0, width, per_block, width / 2.0, config.sd_fraction * width);

    let mut pop = vec![0.0; n * n];
    let mut diag = vec![0.0; n * n];
    let mut inf = vec![0.0; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let cell = region.cell_index(ix, iy);
            let block = (iy / per_block) * b + ix / per_block;
            let shape = bins[ix % per_block] * bins[iy % per_block];
            let (cases, mult) = draws[block];
            pop[cell] = block_pop / block_area;
            diag[cell] = cases * shape / cell_area;
            inf[cell] = (cases * mult * shape / cell_area).min(pop[cell]);
        }
    }
    let scenario = Scenario::new(
        GridDensity::new(region.clone(), pop)?,
        GridDensity::new(region.clone(), diag)?,
        GridDensity::new(region, inf)?,
        config.gamma_check,
    )?;
    Ok((scenario, Stratification::blocks(n, n, b)?))
}

pub fn comparison_study(config: &CompareConfig) -> Result<CompareReport> {
    comparison_study_with(&SamplerRegistry::builtin(), config)
}

pub fn comparison_study_with(registry: &SamplerRegistry, config: &CompareConfig) -> Result<CompareReport> {
    if config.n_scenarios == 0 {
        return Err(Error::Config("need at least one scenario".into()));
    }
    let base = ReplicationConfig {
        sampler: config.sampler.clone(),
        r_positions: config.r_positions,
        n_total: config.n_total,
        alpha: config.alpha,
        replications: config.replications,
        ..ReplicationConfig::default()
    };

    let mut scenarios = Vec::with_capacity(config.n_scenarios);
    for id in 0..config.n_scenarios {
        let (scenario, strata) = generate_comparison_scenario(config, id)?;
        let oracle = run_replications_with(
            registry,
            &scenario,
            None,
            &ReplicationConfig {
                method: "gls".into(),
                oracle: true,
                master_seed: derive_seed(config.seed, &[id as u64, u64::MAX]),
                ..base.clone()
            },
        )?;
        let mut methods = Vec::with_capacity(config.methods.len());
        for (k, name) in config.methods.iter().enumerate() {
            let cfg = ReplicationConfig {
                method: name.clone(),
                master_seed: derive_seed(config.seed, &[id as u64, k as u64]),
                ..base.clone()
            };
            let report = run_replications_with(registry, &scenario, Some(&strata), &cfg)?.with_oracle(&oracle);
            methods.push(MethodScore {
                method: name.clone(),
                relative_bias: report.relative_bias,
                ssd: report.ssd.unwrap_or(f64::NAN),
                coverage: report.ci_coverage,
                report,
            });
        }
        scenarios.push(ScenarioComparison {
            scenario_id: id,
            true_total: scenario.total_infections(),
            oracle_sd: oracle.empirical_sd,
            methods,
        });
    }

    let k = scenarios.len() as f64;
    let summary = config
        .methods
        .iter()
        .enumerate()
        .map(|(j, name)| MethodAggregate {
            method: name.clone(),
            mean_ssd: scenarios.iter().map(|s| s.methods[j].ssd).sum::<f64>() / k,
            mean_coverage: scenarios.iter().map(|s| s.methods[j].coverage).sum::<f64>() / k,
            mean_relative_bias: scenarios.iter().map(|s| s.methods[j].relative_bias).sum::<f64>() / k,
        })
        .collect();

    Ok(CompareReport {
        scenarios,
        summary,
        config: config.clone(),
    })
}
