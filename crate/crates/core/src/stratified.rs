//! Stratified simple random sampling with Neyman allocation.
//!
//! This is the textbook estimator `Σ N_h p̂_h` with variance
//! `Σ N_h² p̂_h (1 - p̂_h) / n_h`, used as the comparison baseline.

use log::warn;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::density::GridDensity;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::survey::confidence_interval;

/// Smallest size given to a stratum whose rough prevalence is 0 or 1.
pub const MIN_DEGENERATE_STRATUM_SIZE: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct StratumSpec {
    pub id: String,
    pub cells: Vec<usize>,
    pub population: f64,
    pub rough_prevalence: f64,
}

impl StratumSpec {
    pub fn rough_sd(&self) -> f64 {
        let p = self.rough_prevalence;
        (p * (1.0 - p)).max(0.0).sqrt()
    }
}

/// Builds strata from a per-cell label (`None` for cells outside the region).
///
/// Populations and rough prevalences are aggregated from `pop` and `rough`.
pub fn strata_from_labels(
    pop: &GridDensity,
    rough: &GridDensity,
    labels: &[Option<usize>],
    ids: &[String],
) -> Result<Vec<StratumSpec>> {
    pop.same_grid(rough)?;
    let region = pop.region();
    if labels.len() != region.n_cells() {
        return Err(Error::Config(format!(
            "{} stratum labels for {} cells",
            labels.len(),
            region.n_cells()
        )));
    }
    let mut strata: Vec<StratumSpec> = ids
        .iter()
        .map(|id| StratumSpec {
            id: id.clone(),
            cells: Vec::new(),
            population: 0.0,
            rough_prevalence: 0.0,
        })
        .collect();
    let mut rough_mass = vec![0.0; ids.len()];
    for (cell, label) in labels.iter().enumerate() {
        match (label, region.in_region(cell)) {
            (Some(h), true) => {
                let s = strata
                    .get_mut(*h)
                    .ok_or_else(|| Error::Config(format!("cell {cell} refers to unknown stratum {h}")))?;
                s.cells.push(cell);
                s.population += pop.cell_mass(cell);
                rough_mass[*h] += rough.cell_mass(cell);
            }
            (None, false) | (Some(_), false) => {}
            (None, true) => {
                let (ix, iy) = region.cell_coords(cell);
                return Err(Error::Config(format!("cell (ix={ix}, iy={iy}) belongs to no stratum")));
            }
        }
    }
    for (s, mass) in strata.iter_mut().zip(rough_mass) {
        s.rough_prevalence = if s.population > 0.0 {
            (mass / s.population).clamp(0.0, 1.0)
        } else {
            0.0
        };
    }
    Ok(strata)
}

/// Rounds nonnegative `targets` to integers summing to `total`, giving the
/// leftover units to the largest fractional parts (ties to the lower index).
pub fn largest_remainder(targets: &[f64], total: u64) -> Vec<u64> {
    let mut sizes: Vec<u64> = targets.iter().map(|t| t.max(0.0).floor() as u64).collect();
    let assigned: u64 = sizes.iter().sum();
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let leftover = total.saturating_sub(assigned) as usize;
    for &ix in order.iter().cycle().take(leftover) {
        sizes[ix] += 1;
    }
    sizes
}

/// Neyman allocation `n_h ∝ N_h S_h` with `S_h = sqrt(p̌_h (1 - p̌_h))`.
///
/// Populated strata with `S_h = 0` receive [`MIN_DEGENERATE_STRATUM_SIZE`];
/// when every `S_h` is zero the allocation is proportional to `N_h`.
pub fn neyman_allocate(strata: &[StratumSpec], n: u64) -> Result<Vec<u64>> {
    if strata.is_empty() {
        return Err(Error::Config("no strata".into()));
    }
    let weights: Vec<f64> = strata.iter().map(|s| s.population * s.rough_sd()).collect();
    if weights.iter().all(|&w| !(w > 0.0)) {
        warn!("every stratum has zero rough standard deviation; using proportional allocation");
        let total_pop: f64 = strata.iter().map(|s| s.population).sum();
        if !(total_pop > 0.0) {
            return Err(Error::Degenerate("strata have no population".into()));
        }
        let targets: Vec<f64> = strata.iter().map(|s| n as f64 * s.population / total_pop).collect();
        return Ok(largest_remainder(&targets, n));
    }

    let floor_strata: Vec<usize> = (0..strata.len())
        .filter(|&h| weights[h] <= 0.0 && strata[h].population > 0.0)
        .collect();
    let reserved = MIN_DEGENERATE_STRATUM_SIZE * floor_strata.len() as u64;
    if reserved >= n {
        return Err(Error::Config(format!(
            "n = {n} cannot cover the minimum size of {} degenerate strata",
            floor_strata.len()
        )));
    }
    let remaining = n - reserved;
    let total_w: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    let targets: Vec<f64> = weights
        .iter()
        .map(|&w| if w > 0.0 { remaining as f64 * w / total_w } else { 0.0 })
        .collect();
    let mut sizes = largest_remainder(&targets, remaining);
    for h in floor_strata {
        sizes[h] = MIN_DEGENERATE_STRATUM_SIZE;
    }
    Ok(sizes)
}

/// Positive counts per stratum under simple random sampling at each stratum's true prevalence.
pub fn simulate_stratified_tests(prevalence: &[f64], sizes: &[u64], rng: &mut SimRng) -> Result<Vec<u64>> {
    prevalence
        .iter()
        .zip(sizes)
        .map(|(&p, &m)| {
            let dist = Binomial::new(m, p.clamp(0.0, 1.0)).map_err(|e| Error::Config(e.to_string()))?;
            Ok(dist.sample(rng))
        })
        .collect()
}

/// True aggregate prevalence `N_I,h / N_h` of every stratum.
pub fn stratum_prevalence(strata: &[StratumSpec], inf: &GridDensity) -> Vec<f64> {
    strata
        .iter()
        .map(|s| {
            if s.population > 0.0 {
                let mass: f64 = s.cells.iter().map(|&c| inf.cell_mass(c)).sum();
                (mass / s.population).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratifiedEstimate {
    pub t_hat: f64,
    pub v_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
}

pub fn stratified_estimate(
    strata: &[StratumSpec],
    sizes: &[u64],
    positives: &[u64],
    alpha: f64,
    fpc: bool,
) -> Result<StratifiedEstimate> {
    if sizes.len() != strata.len() || positives.len() != strata.len() {
        return Err(Error::Config("strata, sizes and positives differ in length".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1)")));
    }
    let mut t_hat = 0.0;
    let mut v_hat = 0.0;
    for ((s, &m), &k) in strata.iter().zip(sizes).zip(positives) {
        if s.population <= 0.0 {
            continue;
        }
        if m == 0 {
            return Err(Error::Config(format!("stratum '{}' has sample size 0", s.id)));
        }
        if k > m {
            return Err(Error::Config(format!("stratum '{}': {k} positives out of {m}", s.id)));
        }
        let p_hat = k as f64 / m as f64;
        let correction = if fpc {
            (1.0 - m as f64 / s.population).max(0.0)
        } else {
            1.0
        };
        t_hat += s.population * p_hat;
        v_hat += correction * s.population.powi(2) * p_hat * (1.0 - p_hat) / m as f64;
    }
    let (ci_low, ci_high) = confidence_interval(t_hat, v_hat, alpha);
    Ok(StratifiedEstimate {
        t_hat,
        v_hat,
        ci_low,
        ci_high,
        alpha,
    })
}
