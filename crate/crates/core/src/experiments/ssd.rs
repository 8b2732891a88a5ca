//! Robustness of the rough-estimate weight `γ̌`.
//!
//! For each candidate true infection density and each `γ̌`, the spread of
//! `T̂_I` under `φ ∝ f̌_I` is compared with an oracle run under `φ ∝ f_I`.
//! The robust choice minimises the worst standardised standard deviation
//! over all truths.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scenarios::{series_r_scenario, unit_gamma_grid};
use super::{run_replications_with, standardised_sd, ReplicationConfig};
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed};
use crate::samplers::{SamplerRegistry, SamplerSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SsdGroup {
    E1,
    E2,
    E3,
    R1,
    R2,
    R3,
}

impl SsdGroup {
    /// Candidate `γ̌` values, as multiples of 0.05.
    pub fn gamma_checks(self) -> Vec<f64> {
        match self {
            SsdGroup::E1 | SsdGroup::R1 => unit_gamma_grid(1, 19),
            SsdGroup::E2 | SsdGroup::R2 => unit_gamma_grid(1, 10),
            SsdGroup::E3 | SsdGroup::R3 => unit_gamma_grid(10, 19),
        }
    }

    /// Range of the per-sub-square weights in the R groups.
    pub fn r_range(self) -> Option<(f64, f64)> {
        match self {
            SsdGroup::R1 => Some((0.02, 0.98)),
            SsdGroup::R2 => Some((0.02, 0.53)),
            SsdGroup::R3 => Some((0.47, 0.98)),
            _ => None,
        }
    }

    fn code(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for SsdGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for SsdGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "E1" => SsdGroup::E1,
            "E2" => SsdGroup::E2,
            "E3" => SsdGroup::E3,
            "R1" => SsdGroup::R1,
            "R2" => SsdGroup::R2,
            "R3" => SsdGroup::R3,
            _ => return Err(Error::Config(format!("unknown SSD group '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsdConfig {
    pub group: SsdGroup,
    pub method: String,
    pub sampler: SamplerSettings,
    pub r_positions: usize,
    pub n_total: u64,
    pub alpha: f64,
    pub replications: usize,
    pub seed: u64,
    /// Number of random truths in the R groups.
    pub r_settings: usize,
    /// Keep every k-th truth / every k-th `γ̌` (1 = full grid).
    pub truth_stride: usize,
    pub check_stride: usize,
}

impl Default for SsdConfig {
    fn default() -> Self {
        Self {
            group: SsdGroup::E1,
            method: "gls".into(),
            sampler: SamplerSettings::default(),
            r_positions: 50,
            n_total: 10_000,
            alpha: 0.05,
            replications: 200,
            seed: rng::DEFAULT_SEED,
            r_settings: 20,
            truth_stride: 1,
            check_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSetting {
    pub label: String,
    /// Infection weight in each sub-square (row-major from the bottom row).
    pub gammas: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsdSurface {
    pub group: SsdGroup,
    pub gamma_checks: Vec<f64>,
    pub truths: Vec<TruthSetting>,
    /// `ssd[t][c]` for truth `t` and `γ̌ = gamma_checks[c]`.
    pub ssd: Vec<Vec<f64>>,
    pub oracle_sd: Vec<f64>,
    /// Worst SSD over truths, per `γ̌`.
    pub max_ssd: Vec<f64>,
    pub minimax_gamma_check: f64,
    pub minimax_max_ssd: f64,
    pub config: SsdConfig,
}

impl SsdSurface {
    /// Rows `gamma_check,truth_id,ssd`, then one `max` row per `γ̌` and a
    /// final `minimax` row.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["gamma_check", "truth_id", "ssd"])?;
        for (c, &g) in self.gamma_checks.iter().enumerate() {
            for (t, truth) in self.truths.iter().enumerate() {
                w.write_record([fmt17(g), truth.label.clone(), fmt17(self.ssd[t][c])])?;
            }
        }
        for (c, &g) in self.gamma_checks.iter().enumerate() {
            w.write_record([fmt17(g), "max".into(), fmt17(self.max_ssd[c])])?;
        }
        w.write_record([
            fmt17(self.minimax_gamma_check),
            "minimax".into(),
            fmt17(self.minimax_max_ssd),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// Floats with 17 significant digits.
pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn truth_settings(config: &SsdConfig) -> Vec<TruthSetting> {
    match config.group.r_range() {
        None => config
            .group
            .gamma_checks()
            .into_iter()
            .map(|g| TruthSetting {
                label: format!("gamma={g:.2}"),
                gammas: [g; 4],
            })
            .collect(),
        Some((lo, hi)) => {
            let mut stream = rng::stream(config.seed, &[0x5e7_5e7, config.group.code()]);
            (0..config.r_settings)
                .map(|i| {
                    let mut gammas = [0.0; 4];
                    for g in &mut gammas {
                        *g = stream.random_range(lo..=hi);
                    }
                    TruthSetting {
                        label: format!("setting-{i:02}"),
                        gammas,
                    }
                })
                .collect()
        }
    }
}

pub fn ssd_study(config: &SsdConfig) -> Result<SsdSurface> {
    ssd_study_with(&SamplerRegistry::builtin(), config)
}

pub fn ssd_study_with(registry: &SamplerRegistry, config: &SsdConfig) -> Result<SsdSurface> {
    if config.truth_stride == 0 || config.check_stride == 0 {
        return Err(Error::Config("strides must be positive".into()));
    }
    let all_truths = truth_settings(config);
    let all_checks = config.group.gamma_checks();
    let truth_ix: Vec<usize> = (0..all_truths.len()).step_by(config.truth_stride).collect();
    let check_ix: Vec<usize> = (0..all_checks.len()).step_by(config.check_stride).collect();

    let base = ReplicationConfig {
        method: config.method.clone(),
        sampler: config.sampler.clone(),
        r_positions: config.r_positions,
        n_total: config.n_total,
        eta: 0.0,
        alpha: config.alpha,
        replications: config.replications,
        ..ReplicationConfig::default()
    };

    let mut ssd = Vec::with_capacity(truth_ix.len());
    let mut oracle_sd = Vec::with_capacity(truth_ix.len());
    for &t in &truth_ix {
        let truth = &all_truths[t];
        let scenario = series_r_scenario(truth.gammas, 0.5)?;
        let oracle_cfg = ReplicationConfig {
            oracle: true,
            master_seed: derive_seed(config.seed, &[t as u64, u64::MAX]),
            ..base.clone()
        };
        let oracle = run_replications_with(registry, &scenario, None, &oracle_cfg)?;
        let oracle_var = oracle.empirical_variance();
        oracle_sd.push(oracle.empirical_sd);

        let mut row = Vec::with_capacity(check_ix.len());
        for &c in &check_ix {
            let cfg = ReplicationConfig {
                master_seed: derive_seed(config.seed, &[t as u64, c as u64]),
                ..base.clone()
            };
            let report = run_replications_with(registry, &scenario.with_gamma_check(all_checks[c])?, None, &cfg)?;
            row.push(standardised_sd(report.empirical_variance(), oracle_var));
        }
        ssd.push(row);
    }

    let gamma_checks: Vec<f64> = check_ix.iter().map(|&c| all_checks[c]).collect();
    let max_ssd: Vec<f64> = (0..gamma_checks.len())
        .map(|c| ssd.iter().map(|row| row[c]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let (best, &best_val) = max_ssd
        .iter()
        .enumerate()
        .fold(None::<(usize, &f64)>, |acc, (i, v)| match acc {
            Some((_, b)) if *b <= *v => acc,
            _ => Some((i, v)),
        })
        .expect("at least one gamma_check");

    Ok(SsdSurface {
        group: config.group,
        minimax_gamma_check: gamma_checks[best],
        minimax_max_ssd: best_val,
        gamma_checks,
        truths: truth_ix.iter().map(|&t| all_truths[t].clone()).collect(),
        ssd,
        oracle_sd,
        max_ssd,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_grids() {
        assert_eq!(SsdGroup::E1.gamma_checks().len(), 19);
        assert_eq!(SsdGroup::E2.gamma_checks().last(), Some(&0.5));
        assert_eq!(SsdGroup::R3.gamma_checks()[0], 0.5);
        assert_eq!("r2".parse::<SsdGroup>().unwrap(), SsdGroup::R2);
        assert!("Q1".parse::<SsdGroup>().is_err());
    }

    #[test]
    fn r_truths_stay_in_range() {
        let cfg = SsdConfig {
            group: SsdGroup::R2,
            ..SsdConfig::default()
        };
        let truths = truth_settings(&cfg);
        assert_eq!(truths.len(), 20);
        assert!(truths.iter().flat_map(|t| t.gammas).all(|g| (0.02..=0.53).contains(&g)));
        assert_eq!(truths, truth_settings(&cfg));
    }
}
