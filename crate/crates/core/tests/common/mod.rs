#![allow(dead_code)]

use prevmap_core::{DesignPointSet, GridDensity, Region};

/// Kernel on the unit square with the given per-cell masses (cell index order).
pub fn kernel_from_masses(nx: usize, ny: usize, masses: &[f64]) -> GridDensity {
    let region = Region::unit(nx, ny).unwrap();
    let area = region.cell_area();
    GridDensity::new(region, masses.iter().map(|m| m / area).collect()).unwrap()
}

/// Exact GLS cell probabilities by midpoint integration over a `grid` x `grid`
/// lattice of shift vectors, for a kernel on an `nx` x `ny` unit-square raster.
///
/// For a fixed shift the draw is multinomial over the shifted design points,
/// so the cell probability is the shift-average of the kernel share falling
/// in that cell.
pub fn gls_cell_probabilities(values: &[f64], nx: usize, ny: usize, design: &DesignPointSet, grid: usize) -> Vec<f64> {
    let cell_of = |x: f64, y: f64| {
        let ix = ((x * nx as f64).floor() as usize).min(nx - 1);
        let iy = ((y * ny as f64).floor() as usize).min(ny - 1);
        iy * nx + ix
    };
    let mut probs = vec![0.0; values.len()];
    let mut share = vec![0.0; values.len()];
    for a in 0..grid {
        for b in 0..grid {
            let s = [(a as f64 + 0.5) / grid as f64, (b as f64 + 0.5) / grid as f64];
            share.iter_mut().for_each(|v| *v = 0.0);
            for q in design.points() {
                let x = (q[0] + s[0]).fract();
                let y = (q[1] + s[1]).fract();
                let c = cell_of(x, y);
                share[c] += values[c];
            }
            let total: f64 = share.iter().sum();
            for (p, v) in probs.iter_mut().zip(&share) {
                *p += v / total;
            }
        }
    }
    let k = (grid * grid) as f64;
    probs.iter_mut().for_each(|p| *p /= k);
    probs
}

/// Pearson statistic of observed counts against expected probabilities.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}
