use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::{PositionDraw, PositionSampler, SamplingTarget};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Sampling importance resampling with a uniform proposal on the region.
#[derive(Debug, Clone)]
pub struct SirSampler {
    pool_factor: usize,
}

impl SirSampler {
    pub fn new(pool_factor: usize) -> Result<Self> {
        if pool_factor == 0 {
            return Err(Error::Config("SIR pool factor must be at least 1".into()));
        }
        Ok(Self { pool_factor })
    }
}

impl PositionSampler for SirSampler {
    fn name(&self) -> &'static str {
        "sir"
    }

    fn sample(&self, target: &SamplingTarget, r: usize, rng: &mut SimRng) -> Result<PositionDraw> {
        sir_sample(target, r, self.pool_factor * r, rng)
    }
}

/// Draws a uniform pool, weights it by the kernel and resamples `r` points with replacement.
pub fn sir_sample(target: &SamplingTarget, r: usize, pool_size: usize, rng: &mut SimRng) -> Result<PositionDraw> {
    if r == 0 {
        return Err(Error::Config("number of positions must be positive".into()));
    }
    if pool_size < r {
        return Err(Error::Config(format!(
            "SIR pool size {pool_size} is smaller than r = {r}"
        )));
    }
    let pool: Vec<_> = (0..pool_size)
        .map(|_| target.probe([rng.random(), rng.random()]))
        .collect();
    let index = WeightedIndex::new(pool.iter().map(|p| p.2))
        .map_err(|e| Error::Degenerate(format!("SIR pool has no usable weight: {e}")))?;
    let picks = (0..r)
        .map(|_| {
            let (pos, cell, _) = pool[index.sample(rng)];
            (pos, cell)
        })
        .collect();
    Ok(PositionDraw::new(target, picks, "sir"))
}
