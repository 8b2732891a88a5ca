//! First-stage position samplers.
//!
//! Every sampler draws `r` positions from the probability density
//! proportional to a piecewise-constant kernel. Implementations live behind
//! [`PositionSampler`] and are looked up by name in a [`SamplerRegistry`].

mod gls;
mod mh;
mod sir;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::density::{sampling_density, GridDensity};
use crate::design::{cached_design, DesignPointSet};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub use gls::{gls_sample, GlsSampler};
pub use mh::{mh_sample, MhSampler};
pub use sir::{sir_sample, SirSampler};

/// A kernel together with its normalised sampling density `phi`.
#[derive(Debug, Clone)]
pub struct SamplingTarget {
    kernel: GridDensity,
    phi: GridDensity,
    normalizer: f64,
}

impl SamplingTarget {
    pub fn new(kernel: GridDensity) -> Result<Self> {
        let (phi, normalizer) = sampling_density(&kernel)?;
        Ok(Self {
            kernel,
            phi,
            normalizer,
        })
    }

    pub fn kernel(&self) -> &GridDensity {
        &self.kernel
    }

    pub fn phi(&self) -> &GridDensity {
        &self.phi
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Region position, owning cell and kernel value of a unit-square point.
    #[inline]
    pub(crate) fn probe(&self, u: [f64; 2]) -> ([f64; 2], usize, f64) {
        let region = self.kernel.region();
        let pos = region.from_unit(u);
        let cell = region
            .locate(pos)
            .expect("unit-square points map inside the enclosing rectangle");
        (pos, cell, self.kernel.value(cell))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionDraw {
    pub positions: Vec<[f64; 2]>,
    pub cells: Vec<usize>,
    pub phi_values: Vec<f64>,
    pub sampler: String,
}

impl PositionDraw {
    pub(crate) fn new(target: &SamplingTarget, picks: Vec<([f64; 2], usize)>, sampler: &str) -> Self {
        let (positions, cells): (Vec<_>, Vec<_>) = picks.into_iter().unzip();
        let phi_values = cells.iter().map(|&c| target.phi.value(c)).collect();
        Self {
            positions,
            cells,
            phi_values,
            sampler: sampler.to_string(),
        }
    }

    /// Draw at explicit cells, placing each position at the cell centre.
    pub fn at_cells(target: &SamplingTarget, cells: &[usize], sampler: &str) -> Result<Self> {
        let region = target.kernel.region();
        let mut picks = Vec::with_capacity(cells.len());
        for &c in cells {
            if c >= region.n_cells() || target.kernel.value(c) <= 0.0 {
                return Err(Error::Config(format!("cell {c} has no sampling mass")));
            }
            picks.push((region.cell_center(c), c));
        }
        Ok(Self::new(target, picks, sampler))
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

pub trait PositionSampler: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn sample(&self, target: &SamplingTarget, r: usize, rng: &mut SimRng) -> Result<PositionDraw>;
}

/// Tunables shared by the built-in samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerSettings {
    /// Size `M` of the uniform design used by GLS (and to seed MH chains).
    pub m_design: usize,
    /// SIR pool size as a multiple of `r`.
    pub sir_pool_factor: usize,
    /// Per-axis standard deviation of MH increments, in unit-square coordinates.
    pub mh_proposal_sd: f64,
    pub mh_burn_in: usize,
    pub mh_thinning: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            m_design: 210,
            sir_pool_factor: 50,
            mh_proposal_sd: 0.25,
            mh_burn_in: 1000,
            mh_thinning: 50,
        }
    }
}

pub type SamplerFactory = fn(&SamplerSettings) -> Result<Box<dyn PositionSampler>>;

/// Name-keyed table of sampler constructors.
#[derive(Clone)]
pub struct SamplerRegistry {
    factories: BTreeMap<&'static str, SamplerFactory>,
}

impl fmt::Debug for SamplerRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl Default for SamplerRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl SamplerRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `gls`, `sir` and `mh`.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("gls", |s| {
            Ok(Box::new(GlsSampler::new(design_for(s)?)) as Box<dyn PositionSampler>)
        });
        reg.register("sir", |s| Ok(Box::new(SirSampler::new(s.sir_pool_factor)?)));
        reg.register("mh", |s| {
            Ok(Box::new(MhSampler::new(
                s.mh_proposal_sd,
                s.mh_burn_in,
                s.mh_thinning,
                design_for(s)?,
            )?))
        });
        reg
    }

    pub fn register(&mut self, name: &'static str, factory: SamplerFactory) {
        self.factories.insert(name, factory);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, name: &str, settings: &SamplerSettings) -> Result<Box<dyn PositionSampler>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            let known: Vec<_> = self.names().collect();
            Error::Config(format!("unknown sampler '{name}' (known: {})", known.join(", ")))
        })?;
        factory(settings)
    }
}

fn design_for(settings: &SamplerSettings) -> Result<Arc<DesignPointSet>> {
    cached_design(settings.m_design)
}
