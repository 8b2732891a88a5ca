//! Estimating the number of infections in a region from a two-stage
//! prevalence survey: positions are drawn from a density built from a rough
//! infection estimate, a sample of people is tested around each position,
//! and the total is estimated by importance weighting.
//!
//! The crate also contains the baselines and the replicated simulation
//! studies used to compare designs.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod design;
pub mod error;
pub mod experiments;
pub mod normal;
pub mod rng;
pub mod samplers;
pub mod stratified;
pub mod survey;

pub use density::{GridDensity, Region, Scenario};
pub use design::{cached_design, generate_design, DesignPointSet, ShiftVector};
pub use error::{Error, ErrorKind, Result};
pub use rng::{SimRng, DEFAULT_SEED};
pub use samplers::{PositionDraw, PositionSampler, SamplerRegistry, SamplerSettings, SamplingTarget};
pub use survey::{SamplingPlan, SurveyEstimate, SurveyResult};
