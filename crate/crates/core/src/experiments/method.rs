use std::fmt;

use serde::{Deserialize, Serialize};

use super::ReplicationConfig;
use crate::density::{GridDensity, Scenario};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::samplers::{PositionSampler, SamplerRegistry, SamplingTarget};
use crate::stratified::{
    neyman_allocate, simulate_stratified_tests, strata_from_labels, stratified_estimate, stratum_prevalence,
    StratumSpec,
};
use crate::survey::{self, SurveyResult};

/// Method name of the stratified baseline.
pub const STRATIFIED: &str = "stratified";

/// What a single replication reports back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub t_hat: f64,
    pub v_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// One complete survey design that can be replicated against a known truth.
pub trait SurveyMethod: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn run_once(&self, rng: &mut SimRng) -> Result<Replicate>;
}

/// Per-cell stratum labels plus stratum names.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratification {
    pub labels: Vec<Option<usize>>,
    pub ids: Vec<String>,
}

impl Stratification {
    /// Equal rectangular blocks, `per_axis` along each side; the grid must divide evenly.
    pub fn blocks(nx: usize, ny: usize, per_axis: usize) -> Result<Self> {
        if per_axis == 0 || !nx.is_multiple_of(per_axis) || !ny.is_multiple_of(per_axis) {
            return Err(Error::Config(format!(
                "{nx}x{ny} grid cannot be split into {per_axis}x{per_axis} blocks"
            )));
        }
        let (bx, by) = (nx / per_axis, ny / per_axis);
        let labels = (0..nx * ny)
            .map(|c| Some((c / nx / by) * per_axis + (c % nx) / bx))
            .collect();
        let ids = (0..per_axis * per_axis).map(|h| format!("block-{h}")).collect();
        Ok(Self { labels, ids })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Allocation {
    NearlyOptimal { eta: f64 },
    Optimal,
}

/// GLS/SIR/MH position sampling followed by binomial testing and estimation.
#[derive(Debug)]
pub struct TwoStageMethod {
    name: String,
    pop: GridDensity,
    inf: GridDensity,
    prevalence: GridDensity,
    target: SamplingTarget,
    sampler: Box<dyn PositionSampler>,
    allocation: Allocation,
    r: usize,
    n: u64,
    alpha: f64,
    fpc_area: Option<f64>,
}

impl TwoStageMethod {
    /// Nearly-optimal design: kernel `f̌_I`, allocation mixed by `eta`.
    pub fn nearly_optimal(
        scenario: &Scenario,
        sampler: Box<dyn PositionSampler>,
        r: usize,
        n: u64,
        eta: f64,
        alpha: f64,
    ) -> Result<Self> {
        let name = sampler.name().to_string();
        Self::build(
            scenario,
            scenario.rough()?,
            sampler,
            Allocation::NearlyOptimal { eta },
            r,
            n,
            alpha,
            name,
        )
    }

    /// Oracle design: kernel `f_I`, exact-optimal allocation.
    pub fn oracle(
        scenario: &Scenario,
        sampler: Box<dyn PositionSampler>,
        r: usize,
        n: u64,
        alpha: f64,
    ) -> Result<Self> {
        let name = format!("oracle-{}", sampler.name());
        Self::build(
            scenario,
            scenario.inf.clone(),
            sampler,
            Allocation::Optimal,
            r,
            n,
            alpha,
            name,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        scenario: &Scenario,
        kernel: GridDensity,
        sampler: Box<dyn PositionSampler>,
        allocation: Allocation,
        r: usize,
        n: u64,
        alpha: f64,
        name: String,
    ) -> Result<Self> {
        if r == 0 || n == 0 {
            return Err(Error::Config("r and n must be positive".into()));
        }
        Ok(Self {
            name,
            pop: scenario.pop.clone(),
            inf: scenario.inf.clone(),
            prevalence: scenario.prevalence()?,
            target: SamplingTarget::new(kernel)?,
            sampler,
            allocation,
            r,
            n,
            alpha,
            fpc_area: None,
        })
    }

    /// Enables the finite population correction with neighbourhoods of the given area.
    pub fn with_fpc_area(mut self, area: Option<f64>) -> Self {
        self.fpc_area = area;
        self
    }

    pub fn target(&self) -> &SamplingTarget {
        &self.target
    }

    /// One complete survey, keeping every intermediate.
    pub fn survey(&self, rng: &mut SimRng) -> Result<SurveyResult> {
        let draw = self.sampler.sample(&self.target, self.r, rng)?;
        let mut plan = match self.allocation {
            Allocation::NearlyOptimal { eta } => survey::allocate(&draw, &self.pop, self.target.kernel(), self.n, eta)?,
            Allocation::Optimal => survey::allocate_optimal(&draw, &self.pop, &self.inf, self.n)?,
        };
        if let Some(area) = self.fpc_area {
            let neighborhood = plan.draw.cells.iter().map(|&c| self.pop.value(c) * area).collect();
            plan = plan.with_fpc(neighborhood)?;
        }
        let outcome = survey::simulate_tests(&plan, &self.prevalence, rng)?;
        let estimate = survey::estimate(&plan, &outcome, &self.pop, self.alpha)?;
        Ok(SurveyResult {
            plan,
            outcome,
            estimate,
        })
    }
}

impl SurveyMethod for TwoStageMethod {
    fn name(&self) -> &str {
        &self.name
    }

    fn run_once(&self, rng: &mut SimRng) -> Result<Replicate> {
        let e = self.survey(rng)?.estimate;
        Ok(Replicate {
            t_hat: e.t_hat,
            v_hat: e.v_hat,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
        })
    }
}

/// Stratified simple random sampling with Neyman allocation on `f̌_I`.
#[derive(Debug, Clone)]
pub struct StratifiedMethod {
    strata: Vec<StratumSpec>,
    sizes: Vec<u64>,
    prevalence: Vec<f64>,
    alpha: f64,
    fpc: bool,
}

impl StratifiedMethod {
    pub fn new(scenario: &Scenario, strata: &Stratification, n: u64, alpha: f64, fpc: bool) -> Result<Self> {
        let specs = strata_from_labels(&scenario.pop, &scenario.rough()?, &strata.labels, &strata.ids)?;
        let sizes = neyman_allocate(&specs, n)?;
        let prevalence = stratum_prevalence(&specs, &scenario.inf);
        Ok(Self {
            strata: specs,
            sizes,
            prevalence,
            alpha,
            fpc,
        })
    }

    pub fn strata(&self) -> &[StratumSpec] {
        &self.strata
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }
}

impl SurveyMethod for StratifiedMethod {
    fn name(&self) -> &str {
        STRATIFIED
    }

    fn run_once(&self, rng: &mut SimRng) -> Result<Replicate> {
        let positives = simulate_stratified_tests(&self.prevalence, &self.sizes, rng)?;
        let e = stratified_estimate(&self.strata, &self.sizes, &positives, self.alpha, self.fpc)?;
        Ok(Replicate {
            t_hat: e.t_hat,
            v_hat: e.v_hat,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
        })
    }
}

/// Resolves `config.method` against the sampler registry (or the stratified baseline).
pub fn build_method(
    registry: &SamplerRegistry,
    scenario: &Scenario,
    strata: Option<&Stratification>,
    config: &ReplicationConfig,
) -> Result<Box<dyn SurveyMethod>> {
    if config.method == STRATIFIED {
        let strata = strata.ok_or_else(|| Error::Config("the stratified method needs a stratification".into()))?;
        return Ok(Box::new(StratifiedMethod::new(
            scenario,
            strata,
            config.n_total,
            config.alpha,
            config.fpc_area.is_some(),
        )?));
    }
    let sampler = registry.build(&config.method, &config.sampler)?;
    let method = if config.oracle {
        TwoStageMethod::oracle(scenario, sampler, config.r_positions, config.n_total, config.alpha)?
    } else {
        TwoStageMethod::nearly_optimal(
            scenario,
            sampler,
            config.r_positions,
            config.n_total,
            config.eta,
            config.alpha,
        )?
    };
    Ok(Box::new(method.with_fpc_area(config.fpc_area)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_labels() {
        let s = Stratification::blocks(4, 4, 2).unwrap();
        let expect = [0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3];
        assert_eq!(s.labels, expect.iter().map(|&h| Some(h)).collect::<Vec<_>>());
        assert!(Stratification::blocks(5, 4, 2).is_err());
    }
}
