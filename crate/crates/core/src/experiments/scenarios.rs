//! Fixed 2x2 test bed: four equal sub-squares of the unit square.
//!
//! Populations are 20, 40 (top row) and 60, 80 (bottom row) times 1e4;
//! diagnosed cases are 6, 8 (top) and 4, 2 (bottom) times 1e4. Densities
//! are the counts divided by the sub-square area 1/4.

use crate::density::{GridDensity, Region, Scenario};
use crate::error::Result;

const SUB_AREA: f64 = 0.25;

// row-major from the bottom row
const POPULATION: [f64; 4] = [60e4, 80e4, 20e4, 40e4];
const CASES: [f64; 4] = [4e4, 2e4, 6e4, 8e4];

/// Population and case densities of the 2x2 test bed.
pub fn series_e_base() -> Result<(GridDensity, GridDensity)> {
    let region = Region::unit(2, 2)?;
    let pop = GridDensity::new(region.clone(), POPULATION.iter().map(|p| p / SUB_AREA).collect())?;
    let diag = GridDensity::new(region, CASES.iter().map(|c| c / SUB_AREA).collect())?;
    Ok((pop, diag))
}

/// Infections `gamma f_P + (1 - gamma) f_D` with one weight for the whole region.
pub fn series_e_scenario(gamma: f64, gamma_check: f64) -> Result<Scenario> {
    series_r_scenario([gamma; 4], gamma_check)
}

/// Infections mixed with a separate weight in each sub-square.
pub fn series_r_scenario(gammas: [f64; 4], gamma_check: f64) -> Result<Scenario> {
    let (pop, diag) = series_e_base()?;
    let inf = GridDensity::new(
        pop.region().clone(),
        (0..4)
            .map(|c| gammas[c] * pop.value(c) + (1.0 - gammas[c]) * diag.value(c))
            .collect(),
    )?;
    Scenario::new(pop, diag, inf, gamma_check)
}

/// `{k / 20 : lo <= k <= hi}`, i.e. multiples of 0.05.
pub fn unit_gamma_grid(lo: u32, hi: u32) -> Vec<f64> {
    (lo..=hi).map(|k| k as f64 / 20.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals() {
        let (pop, diag) = series_e_base().unwrap();
        assert!((pop.integrate() - 200e4).abs() < 1e-6);
        assert!((diag.integrate() - 20e4).abs() < 1e-6);
        let s = series_e_scenario(0.5, 0.5).unwrap();
        assert!((s.total_infections() - 110e4).abs() < 1e-6);
        assert_eq!(unit_gamma_grid(1, 19).len(), 19);
        assert_eq!(unit_gamma_grid(10, 19)[0], 0.5);
    }
}
