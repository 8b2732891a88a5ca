//! Second stage of the survey: sample-size allocation, simulated testing, and
//! estimation of the total number of infections with its variance and CI.

use log::warn;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::density::GridDensity;
use crate::error::{Error, Result};
use crate::normal;
use crate::rng::SimRng;
use crate::samplers::PositionDraw;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub draw: PositionDraw,
    pub sizes: Vec<u64>,
    pub n_target: u64,
    pub eta: f64,
    pub fpc_enabled: bool,
    /// People in each position's neighbourhood; only read when `fpc_enabled`.
    pub neighborhood_population: Vec<f64>,
}

impl SamplingPlan {
    /// Turns on the finite population correction with the given neighbourhood sizes.
    pub fn with_fpc(mut self, neighborhood_population: Vec<f64>) -> Result<Self> {
        if neighborhood_population.len() != self.sizes.len() {
            return Err(Error::Config(format!(
                "{} neighbourhood populations for {} positions",
                neighborhood_population.len(),
                self.sizes.len()
            )));
        }
        if neighborhood_population.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Config("neighbourhood populations must be nonnegative".into()));
        }
        self.fpc_enabled = true;
        self.neighborhood_population = neighborhood_population;
        Ok(self)
    }

    /// Sampling fraction at position `i`, clamped to `[0, 1]`; zero without FPC.
    pub fn sampling_fraction(&self, i: usize) -> f64 {
        if !self.fpc_enabled {
            return 0.0;
        }
        let pop = self.neighborhood_population[i];
        if pop > 0.0 {
            (self.sizes[i] as f64 / pop).clamp(0.0, 1.0)
        } else {
            1.0
        }
    }

    pub fn total_size(&self) -> u64 {
        self.sizes.iter().sum()
    }

    fn from_raw(draw: &PositionDraw, raw: &[f64], n: u64, eta: f64) -> Self {
        Self {
            draw: draw.clone(),
            sizes: round_sizes(raw),
            n_target: n,
            eta,
            fpc_enabled: false,
            neighborhood_population: Vec::new(),
        }
    }
}

/// Rounds half away from zero; sizes that round to zero are raised to one.
pub fn round_sizes(raw: &[f64]) -> Vec<u64> {
    raw.iter()
        .enumerate()
        .map(|(i, &x)| {
            let s = x.round().max(0.0) as u64;
            if s == 0 {
                warn!("sample size at position {i} rounds to 0 (raw {x:.3}); using 1");
                1
            } else {
                s
            }
        })
        .collect()
}

/// `(1 - eta) * n * w_i / sum(w) + eta * n / r`, before rounding.
///
/// All-zero weights fall back to the equal split.
pub fn mixed_raw_sizes(weights: &[f64], n: u64, eta: f64) -> Vec<f64> {
    let r = weights.len() as f64;
    let n = n as f64;
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        warn!("all allocation weights are zero; splitting the sample equally");
        return vec![n / r; weights.len()];
    }
    weights
        .iter()
        .map(|w| (1.0 - eta) * n * w / total + eta * n / r)
        .collect()
}

/// Nearly-optimal allocation mixed with an equal split by `eta`.
///
/// Weights are `sqrt((f_P - f̌_I) / f̌_I)` at each drawn position.
pub fn allocate(draw: &PositionDraw, pop: &GridDensity, rough: &GridDensity, n: u64, eta: f64) -> Result<SamplingPlan> {
    pop.same_grid(rough)?;
    check_common(draw, n)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Config(format!("eta {eta} outside [0, 1]")));
    }
    let mut weights = Vec::with_capacity(draw.len());
    for (i, &cell) in draw.cells.iter().enumerate() {
        let (p, f) = (pop.value(cell), rough.value(cell));
        if !(f > 0.0) {
            return Err(Error::Degenerate(format!(
                "rough infection density is zero at position {i}"
            )));
        }
        if f >= p {
            warn!("rough infection density reaches the population density at position {i}; weight clamped to 0");
            weights.push(0.0);
        } else {
            weights.push(((p - f) / f).sqrt());
        }
    }
    Ok(SamplingPlan::from_raw(draw, &mixed_raw_sizes(&weights, n, eta), n, eta))
}

/// Exact-optimal allocation computed from the true infection density:
/// `n g(x) / (r ∫g φ(x))` with `g = sqrt(f_I (f_P - f_I))`.
pub fn allocate_optimal(draw: &PositionDraw, pop: &GridDensity, inf: &GridDensity, n: u64) -> Result<SamplingPlan> {
    pop.same_grid(inf)?;
    check_common(draw, n)?;
    let g = sd_kernel(pop, inf)?;
    let g_total = g.integrate();
    let r = draw.len() as f64;
    let raw: Vec<f64> = if g_total > 0.0 {
        draw.cells
            .iter()
            .zip(&draw.phi_values)
            .map(|(&c, &phi)| n as f64 * g.value(c) / (r * g_total * phi))
            .collect()
    } else {
        vec![n as f64 / r; draw.len()]
    };
    Ok(SamplingPlan::from_raw(draw, &raw, n, 0.0))
}

fn check_common(draw: &PositionDraw, n: u64) -> Result<()> {
    if draw.is_empty() {
        return Err(Error::Config("no sampling positions".into()));
    }
    if n == 0 {
        return Err(Error::Config("total sample size must be positive".into()));
    }
    Ok(())
}

/// `sqrt(f_I (f_P - f_I))`, cell-wise.
fn sd_kernel(pop: &GridDensity, inf: &GridDensity) -> Result<GridDensity> {
    let values = pop
        .values()
        .iter()
        .zip(inf.values())
        .map(|(&p, &i)| (i * (p - i)).max(0.0).sqrt())
        .collect();
    GridDensity::new(pop.region().clone(), values)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestOutcome {
    pub positives: Vec<u64>,
}

/// Binomial test results at every position under the true local prevalence.
pub fn simulate_tests(plan: &SamplingPlan, prevalence: &GridDensity, rng: &mut SimRng) -> Result<TestOutcome> {
    let positives = plan
        .draw
        .cells
        .iter()
        .zip(&plan.sizes)
        .map(|(&cell, &size)| {
            let p = prevalence.value(cell);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Invariant(format!("prevalence {p} outside [0, 1]")));
            }
            let dist = Binomial::new(size, p).map_err(|e| Error::Config(e.to_string()))?;
            Ok(dist.sample(rng))
        })
        .collect::<Result<_>>()?;
    Ok(TestOutcome { positives })
}

/// `f_P(x) * positives / size`.
pub fn estimate_point_density(pop_at: f64, size: u64, positives: u64) -> Result<f64> {
    if size == 0 {
        return Err(Error::Degenerate(
            "sample size 0 leaves the local density undefined".into(),
        ));
    }
    if positives > size {
        return Err(Error::Config(format!("{positives} positives out of {size} tests")));
    }
    Ok(pop_at * positives as f64 / size as f64)
}

/// Mean of `f̂_I(ξ_i) / φ(ξ_i)`.
pub fn estimate_total(draw: &PositionDraw, point_estimates: &[f64]) -> f64 {
    let r = draw.phi_values.len() as f64;
    point_estimates
        .iter()
        .zip(&draw.phi_values)
        .map(|(f, phi)| f / phi)
        .sum::<f64>()
        / r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub v0_hat: f64,
    pub v1_hat: f64,
    pub v_hat: f64,
}

/// Between-position (`v0`) and within-position (`v1`) variance estimates;
/// `v_hat = (v0 + v1) / r`.
pub fn estimate_variance(
    plan: &SamplingPlan,
    point_estimates: &[f64],
    pop_at: &[f64],
    t_hat: f64,
) -> Result<VarianceComponents> {
    let draw = &plan.draw;
    let r = draw.len();
    if r < 2 {
        return Err(Error::Degenerate(format!(
            "variance estimation needs at least 2 positions, got {r}"
        )));
    }
    let rf = r as f64;
    let v0_hat = point_estimates
        .iter()
        .zip(&draw.phi_values)
        .map(|(f, phi)| (f / phi - t_hat).powi(2))
        .sum::<f64>()
        / (rf - 1.0);
    let v1_hat = (0..r)
        .map(|i| {
            let (f, phi, p) = (point_estimates[i], draw.phi_values[i], pop_at[i]);
            (1.0 - plan.sampling_fraction(i)) * f * (p - f) / (plan.sizes[i] as f64 * phi * phi)
        })
        .sum::<f64>()
        / rf;
    Ok(VarianceComponents {
        v0_hat,
        v1_hat,
        v_hat: (v0_hat + v1_hat) / rf,
    })
}

/// Normal-approximation interval `t_hat ∓ z_{α/2} sqrt(v_hat)`.
pub fn confidence_interval(t_hat: f64, v_hat: f64, alpha: f64) -> (f64, f64) {
    let half = normal::upper_quantile(alpha / 2.0) * v_hat.max(0.0).sqrt();
    (t_hat - half, t_hat + half)
}

/// Smallest achievable `Var(T̂_I)`: `(∫ sqrt(f_I (f_P - f_I)))^2 / n`.
pub fn theoretical_minimum_variance(pop: &GridDensity, inf: &GridDensity, n: u64) -> Result<f64> {
    pop.same_grid(inf)?;
    if n == 0 {
        return Err(Error::Config("total sample size must be positive".into()));
    }
    if let Some(c) = (0..pop.values().len()).find(|&c| inf.value(c) > pop.value(c) * (1.0 + 1e-12)) {
        return Err(Error::Invariant(format!(
            "infection density exceeds population at cell {c}"
        )));
    }
    Ok(sd_kernel(pop, inf)?.integrate().powi(2) / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveyEstimate {
    pub t_hat: f64,
    pub v0_hat: f64,
    pub v1_hat: f64,
    pub v_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
}

/// Runs the full estimating procedure on one set of test results.
pub fn estimate(plan: &SamplingPlan, outcome: &TestOutcome, pop: &GridDensity, alpha: f64) -> Result<SurveyEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1)")));
    }
    if outcome.positives.len() != plan.sizes.len() {
        return Err(Error::Config("test outcome and plan disagree on r".into()));
    }
    let pop_at: Vec<f64> = plan.draw.cells.iter().map(|&c| pop.value(c)).collect();
    let point_estimates = pop_at
        .iter()
        .zip(&plan.sizes)
        .zip(&outcome.positives)
        .map(|((&p, &m), &k)| estimate_point_density(p, m, k))
        .collect::<Result<Vec<_>>>()?;
    let t_hat = estimate_total(&plan.draw, &point_estimates);
    let VarianceComponents { v0_hat, v1_hat, v_hat } = estimate_variance(plan, &point_estimates, &pop_at, t_hat)?;
    let (ci_low, ci_high) = confidence_interval(t_hat, v_hat, alpha);
    Ok(SurveyEstimate {
        t_hat,
        v0_hat,
        v1_hat,
        v_hat,
        ci_low,
        ci_high,
        alpha,
    })
}

/// A completed survey: where we tested, how many, what we found, and the estimate.
#[derive(Debug, Clone)]
pub struct SurveyResult {
    pub plan: SamplingPlan,
    pub outcome: TestOutcome,
    pub estimate: SurveyEstimate,
}

/// Wire form `{"t_hat","v0_hat","v1_hat","v_hat","ci":[lo,hi],"alpha","positions":[[x,y,phi,size,positives],..]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SurveyResultJson {
    pub t_hat: f64,
    pub v0_hat: f64,
    pub v1_hat: f64,
    pub v_hat: f64,
    pub ci: [f64; 2],
    pub alpha: f64,
    pub positions: Vec<[f64; 5]>,
}

impl From<&SurveyResult> for SurveyResultJson {
    fn from(s: &SurveyResult) -> Self {
        let e = &s.estimate;
        let d = &s.plan.draw;
        let positions = (0..d.len())
            .map(|i| {
                [
                    d.positions[i][0],
                    d.positions[i][1],
                    d.phi_values[i],
                    s.plan.sizes[i] as f64,
                    s.outcome.positives[i] as f64,
                ]
            })
            .collect();
        Self {
            t_hat: e.t_hat,
            v0_hat: e.v0_hat,
            v1_hat: e.v1_hat,
            v_hat: e.v_hat,
            ci: [e.ci_low, e.ci_high],
            alpha: e.alpha,
            positions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::Region;
    use crate::samplers::SamplingTarget;

    fn draw_at(values: Vec<f64>, nx: usize, cells: &[usize]) -> (SamplingTarget, PositionDraw) {
        let k = GridDensity::new(Region::unit(nx, 1).unwrap(), values).unwrap();
        let t = SamplingTarget::new(k).unwrap();
        let d = PositionDraw::at_cells(&t, cells, "fixed").unwrap();
        (t, d)
    }

    #[test]
    fn constant_densities_split_equally() {
        let (t, d) = draw_at(vec![2.0; 4], 4, &[0, 1, 2, 3, 3]);
        let pop = GridDensity::constant(t.kernel().region().clone(), 10.0).unwrap();
        for eta in [0.0, 0.3, 1.0] {
            let plan = allocate(&d, &pop, t.kernel(), 1000, eta).unwrap();
            assert_eq!(plan.sizes, vec![200; 5]);
        }
    }

    #[test]
    fn square_root_ratio() {
        // (P - F)/F = 4 in cell 0 and 1 in cell 1
        let (t, d) = draw_at(vec![1.0, 1.0], 2, &[0, 1]);
        let pop = GridDensity::new(t.kernel().region().clone(), vec![5.0, 2.0]).unwrap();
        let plan = allocate(&d, &pop, t.kernel(), 30, 0.0).unwrap();
        assert_eq!(plan.sizes, vec![20, 10]);
    }

    #[test]
    fn eta_one_is_equal_split() {
        let cells: Vec<usize> = (0..50).map(|i| i % 3).collect();
        let (t, d) = draw_at(vec![1.0, 3.0, 7.0], 3, &cells);
        let pop = GridDensity::new(t.kernel().region().clone(), vec![50.0, 9.0, 80.0]).unwrap();
        let plan = allocate(&d, &pop, t.kernel(), 10_000, 1.0).unwrap();
        assert!(plan.sizes.iter().all(|&s| s == 200));
    }

    #[test]
    fn allocation_guards() {
        let (t, d) = draw_at(vec![1.0, 1.0], 2, &[0, 1]);
        let pop = GridDensity::new(t.kernel().region().clone(), vec![5.0, 1.0]).unwrap();
        // second position has rough == pop: weight clamped to zero, size raised to one
        let plan = allocate(&d, &pop, t.kernel(), 30, 0.0).unwrap();
        assert_eq!(plan.sizes, vec![30, 1]);

        let zero = GridDensity::new(t.kernel().region().clone(), vec![0.0, 1.0]).unwrap();
        assert!(matches!(allocate(&d, &pop, &zero, 30, 0.0), Err(Error::Degenerate(_))));
        assert!(allocate(&d, &pop, t.kernel(), 30, 1.5).is_err());
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round_sizes(&[2.5, 3.5, 0.49, 0.5, 7.49999]), vec![3, 4, 1, 1, 7]);
    }

    #[test]
    fn point_density_estimates() {
        assert_eq!(estimate_point_density(100.0, 10, 0).unwrap(), 0.0);
        assert_eq!(estimate_point_density(100.0, 10, 10).unwrap(), 100.0);
        assert_eq!(estimate_point_density(100.0, 10, 3).unwrap(), 30.0);
        assert!(matches!(estimate_point_density(100.0, 0, 0), Err(Error::Degenerate(_))));
        assert!(estimate_point_density(100.0, 3, 4).is_err());
    }

    #[test]
    fn total_estimates() {
        let (_, d) = draw_at(vec![1.0, 3.0], 2, &[1]);
        let c = 17.0;
        assert!((estimate_total(&d, &[c * d.phi_values[0]]) - c).abs() < 1e-12);

        let (_, d) = draw_at(vec![1.0, 3.0], 2, &[0, 1, 1]);
        // f̂ proportional to phi: every summand equals the same total
        let n_i = 42.0;
        let f: Vec<f64> = d.phi_values.iter().map(|p| p * n_i).collect();
        assert!((estimate_total(&d, &f) - n_i).abs() < 1e-12);
    }

    #[test]
    fn variance_components() {
        let (_, d) = draw_at(vec![1.0, 3.0], 2, &[0, 1, 1]);
        let plan = SamplingPlan::from_raw(&d, &[10.0, 10.0, 10.0], 30, 0.0);
        let f: Vec<f64> = d.phi_values.iter().map(|p| p * 5.0).collect();
        let v = estimate_variance(&plan, &f, &[100.0; 3], 5.0).unwrap();
        assert!(v.v0_hat.abs() < 1e-20);
        assert!((v.v_hat - (v.v0_hat + v.v1_hat) / 3.0).abs() < 1e-15);

        let v = estimate_variance(&plan, &[0.0, 0.0, 0.0], &[100.0; 3], 0.0).unwrap();
        assert_eq!(v.v1_hat, 0.0);

        let single = SamplingPlan::from_raw(
            &PositionDraw::at_cells(
                &SamplingTarget::new(GridDensity::constant(Region::unit(1, 1).unwrap(), 1.0).unwrap()).unwrap(),
                &[0],
                "x",
            )
            .unwrap(),
            &[5.0],
            5,
            0.0,
        );
        assert!(matches!(
            estimate_variance(&single, &[1.0], &[2.0], 1.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn fpc_shrinks_within_variance() {
        let (_, d) = draw_at(vec![1.0, 1.0], 2, &[0, 1]);
        let plan = SamplingPlan::from_raw(&d, &[10.0, 10.0], 20, 0.0);
        let f = [30.0, 40.0];
        let base = estimate_variance(&plan, &f, &[100.0; 2], 35.0).unwrap();
        let fpc = plan.clone().with_fpc(vec![40.0, 20.0]).unwrap();
        assert_eq!(fpc.sampling_fraction(0), 0.25);
        assert_eq!(fpc.sampling_fraction(1), 0.5);
        let corrected = estimate_variance(&fpc, &f, &[100.0; 2], 35.0).unwrap();
        assert_eq!(corrected.v0_hat, base.v0_hat);
        assert!(corrected.v1_hat < base.v1_hat);
        assert!(plan.with_fpc(vec![1.0]).is_err());
    }

    #[test]
    fn intervals() {
        assert_eq!(confidence_interval(3.0, 0.0, 0.05), (3.0, 3.0));
        let (lo, hi) = confidence_interval(0.0, 1.0, 0.05);
        assert!((hi - 1.95996).abs() < 1e-4 && (lo + 1.95996).abs() < 1e-4);
    }

    #[test]
    fn minimum_variance_closed_forms() {
        let r = Region::unit(3, 2).unwrap();
        let pop = GridDensity::constant(r.clone(), 8.0).unwrap();
        let zero = GridDensity::constant(r.clone(), 0.0).unwrap();
        assert_eq!(theoretical_minimum_variance(&pop, &zero, 10).unwrap(), 0.0);
        assert_eq!(theoretical_minimum_variance(&pop, &pop, 10).unwrap(), 0.0);
        let half = GridDensity::constant(r, 4.0).unwrap();
        assert!((theoretical_minimum_variance(&pop, &half, 10).unwrap() - 16.0 / 10.0).abs() < 1e-12);
        assert!(matches!(
            theoretical_minimum_variance(&half, &pop, 10),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn simulated_tests_at_extremes() {
        let (t, d) = draw_at(vec![1.0, 1.0], 2, &[0, 1, 0]);
        let plan = SamplingPlan::from_raw(&d, &[7.0, 9.0, 3.0], 19, 0.0);
        let prev = GridDensity::new(t.kernel().region().clone(), vec![0.0, 1.0]).unwrap();
        let mut rng = crate::rng::stream(1, &[]);
        for _ in 0..20 {
            let out = simulate_tests(&plan, &prev, &mut rng).unwrap();
            assert_eq!(out.positives, vec![0, 9, 0]);
        }
    }
}
