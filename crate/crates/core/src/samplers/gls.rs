use std::sync::Arc;

use rand::Rng;

use super::{PositionDraw, PositionSampler, SamplingTarget};
use crate::design::{DesignPointSet, ShiftVector};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Shifts whose every point lands on zero kernel are redrawn this many times.
pub const MAX_SHIFT_ATTEMPTS: usize = 1000;

/// Global likelihood sampling over a randomly shifted uniform design.
#[derive(Debug, Clone)]
pub struct GlsSampler {
    design: Arc<DesignPointSet>,
}

impl GlsSampler {
    pub fn new(design: Arc<DesignPointSet>) -> Self {
        Self { design }
    }

    pub fn design(&self) -> &DesignPointSet {
        &self.design
    }
}

impl PositionSampler for GlsSampler {
    fn name(&self) -> &'static str {
        "gls"
    }

    fn sample(&self, target: &SamplingTarget, r: usize, rng: &mut SimRng) -> Result<PositionDraw> {
        gls_sample(target, &self.design, r, rng)
    }
}

/// Draws `r` independent positions.
///
/// Each draw shifts the whole design by a fresh uniform vector modulo 1,
/// weights the shifted points by the kernel, and picks one point from the
/// resulting multinomial.
pub fn gls_sample(
    target: &SamplingTarget,
    design: &DesignPointSet,
    r: usize,
    rng: &mut SimRng,
) -> Result<PositionDraw> {
    if r == 0 {
        return Err(Error::Config("number of positions must be positive".into()));
    }
    let mut candidates = Vec::with_capacity(design.len());
    let mut picks = Vec::with_capacity(r);
    for _ in 0..r {
        picks.push(draw_one(target, design, rng, &mut candidates)?);
    }
    Ok(PositionDraw::new(target, picks, "gls"))
}

fn draw_one(
    target: &SamplingTarget,
    design: &DesignPointSet,
    rng: &mut SimRng,
    candidates: &mut Vec<([f64; 2], usize, f64)>,
) -> Result<([f64; 2], usize)> {
    for _ in 0..MAX_SHIFT_ATTEMPTS {
        let shift = ShiftVector::new([rng.random(), rng.random()])?;
        candidates.clear();
        let mut total = 0.0;
        for &q in design.points() {
            let probe = target.probe(shift.apply(q));
            total += probe.2;
            candidates.push(probe);
        }
        if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let (pos, cell, _) = candidates[pick_weighted(candidates, u)];
            return Ok((pos, cell));
        }
    }
    Err(Error::Degenerate(format!(
        "kernel vanished on {MAX_SHIFT_ATTEMPTS} consecutive shifted designs"
    )))
}

/// Index of the first candidate whose cumulative weight exceeds `u`;
/// zero-weight entries are never chosen.
pub(crate) fn pick_weighted(candidates: &[([f64; 2], usize, f64)], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = None;
    for (ix, &(_, _, w)) in candidates.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_positive = Some(ix);
        if acc > u {
            return ix;
        }
    }
    // `u` can sit at the rounded-up total; fall back to the last positive entry.
    last_positive.expect("positive total weight")
}
