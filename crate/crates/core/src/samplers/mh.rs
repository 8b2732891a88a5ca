use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::gls::{pick_weighted, MAX_SHIFT_ATTEMPTS};
use super::{PositionDraw, PositionSampler, SamplingTarget};
use crate::design::{DesignPointSet, ShiftVector};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Random-walk Metropolis with isotropic Gaussian increments.
#[derive(Debug, Clone)]
pub struct MhSampler {
    proposal_sd: f64,
    burn_in: usize,
    thinning: usize,
    design: Arc<DesignPointSet>,
}

impl MhSampler {
    pub fn new(proposal_sd: f64, burn_in: usize, thinning: usize, design: Arc<DesignPointSet>) -> Result<Self> {
        if !(proposal_sd > 0.0 && proposal_sd.is_finite()) {
            return Err(Error::Config(format!(
                "MH proposal sd must be positive, got {proposal_sd}"
            )));
        }
        if thinning == 0 {
            return Err(Error::Config("MH thinning must be at least 1".into()));
        }
        Ok(Self {
            proposal_sd,
            burn_in,
            thinning,
            design,
        })
    }
}

impl PositionSampler for MhSampler {
    fn name(&self) -> &'static str {
        "mh"
    }

    fn sample(&self, target: &SamplingTarget, r: usize, rng: &mut SimRng) -> Result<PositionDraw> {
        mh_sample(
            target,
            r,
            self.proposal_sd,
            self.burn_in,
            self.thinning,
            &self.design,
            rng,
        )
    }
}

/// Runs one chain and keeps every `thinning`-th state after `burn_in` steps.
///
/// The chain lives on the unit square; proposals leaving it, or landing on
/// zero kernel, are rejected. The initial state is a kernel-weighted pick
/// from `design`.
pub fn mh_sample(
    target: &SamplingTarget,
    r: usize,
    proposal_sd: f64,
    burn_in: usize,
    thinning: usize,
    design: &DesignPointSet,
    rng: &mut SimRng,
) -> Result<PositionDraw> {
    if r == 0 {
        return Err(Error::Config("number of positions must be positive".into()));
    }
    if !(proposal_sd > 0.0) || thinning == 0 {
        return Err(Error::Config("MH needs a positive proposal sd and thinning".into()));
    }

    let (mut u, mut state) = initial_state(target, design, rng)?;
    let mut picks = Vec::with_capacity(r);
    let total_steps = burn_in + r * thinning;
    for step in 1..=total_steps {
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let prop = [u[0] + proposal_sd * z0, u[1] + proposal_sd * z1];
        // the acceptance uniform is drawn every step to keep streams aligned
        let accept_u: f64 = rng.random();
        if (0.0..1.0).contains(&prop[0]) && (0.0..1.0).contains(&prop[1]) {
            let cand = target.probe(prop);
            if cand.2 > 0.0 && accept_u * state.2 < cand.2 {
                u = prop;
                state = cand;
            }
        }
        if step > burn_in && (step - burn_in).is_multiple_of(thinning) {
            picks.push((state.0, state.1));
        }
    }
    Ok(PositionDraw::new(target, picks, "mh"))
}

type Probe = ([f64; 2], usize, f64);

fn initial_state(target: &SamplingTarget, design: &DesignPointSet, rng: &mut SimRng) -> Result<([f64; 2], Probe)> {
    let weighted = |pts: &mut dyn Iterator<Item = [f64; 2]>| -> (Vec<[f64; 2]>, Vec<Probe>, f64) {
        let units: Vec<[f64; 2]> = pts.collect();
        let probes: Vec<Probe> = units.iter().map(|&u| target.probe(u)).collect();
        let total = probes.iter().map(|p| p.2).sum();
        (units, probes, total)
    };

    let (mut units, mut probes, mut total) = weighted(&mut design.points().iter().copied());
    let mut attempts = 0;
    while !(total > 0.0) {
        attempts += 1;
        if attempts > MAX_SHIFT_ATTEMPTS {
            return Err(Error::Degenerate(
                "MH could not find a start with positive kernel".into(),
            ));
        }
        let shift = ShiftVector::new([rng.random(), rng.random()])?;
        (units, probes, total) = weighted(&mut design.points().iter().map(|&q| shift.apply(q)));
    }

    let u = rng.random::<f64>() * total;
    let ix = pick_weighted(&probes, u);
    Ok((units[ix], probes[ix]))
}
