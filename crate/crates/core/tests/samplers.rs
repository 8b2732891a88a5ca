mod common;

use common::{chi_square, gls_cell_probabilities, kernel_from_masses};
use prevmap_core::design::{centered_l2_discrepancy, generate_design, lattice};
use prevmap_core::rng::stream;
use prevmap_core::samplers::gls_sample;
use prevmap_core::{cached_design, SamplerRegistry, SamplerSettings, SamplingTarget};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn counts_per_cell(cells: &[usize], n_cells: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_cells];
    for &c in cells {
        counts[c] += 1;
    }
    counts
}

#[test]
fn gls_matches_shift_integration_oracle() {
    let masses = [1.0, 2.0, 3.0, 4.0];
    let kernel = kernel_from_masses(2, 2, &masses);
    let design = cached_design(210).unwrap();
    let oracle = gls_cell_probabilities(kernel.values(), 2, 2, &design, 512);

    let target = SamplingTarget::new(kernel).unwrap();
    let mut rng = stream(7, &[1]);
    let draw = gls_sample(&target, &design, 100_000, &mut rng).unwrap();
    let counts = counts_per_cell(&draw.cells, 4);
    for c in 0..4 {
        let freq = counts[c] as f64 / 1e5;
        assert!((freq - oracle[c]).abs() <= 0.01, "cell {c}: {freq} vs {}", oracle[c]);
    }
    let critical = ChiSquared::new(3.0).unwrap().inverse_cdf(0.999);
    assert!(chi_square(&counts, &oracle) < critical);
}

#[test]
fn finer_design_tracks_the_target_better() {
    // 8 x 8 checkerboard-like kernel where a coarse lattice is visibly biased
    let masses: Vec<f64> = (0..64)
        .map(|c| 1.0 + ((c * 7) % 5) as f64 + if c % 9 == 0 { 10.0 } else { 0.0 })
        .collect();
    let total: f64 = masses.iter().sum();
    let kernel = kernel_from_masses(8, 8, &masses);
    let err = |m: usize| {
        let d = generate_design(m).unwrap();
        let p = gls_cell_probabilities(kernel.values(), 8, 8, &d, 256);
        p.iter().zip(&masses).map(|(a, b)| (a - b / total).abs()).sum::<f64>()
    };
    let (coarse, fine) = (err(21), err(210));
    assert!(fine <= coarse, "M=210 error {fine} exceeds M=21 error {coarse}");
}

#[test]
fn baselines_follow_the_target() {
    let masses = [1.0, 2.0, 3.0, 4.0];
    let kernel = kernel_from_masses(2, 2, &masses);
    let target = SamplingTarget::new(kernel).unwrap();
    let registry = SamplerRegistry::builtin();
    let critical = ChiSquared::new(3.0).unwrap().inverse_cdf(0.999);
    let expected: Vec<f64> = masses.iter().map(|m| m / 10.0).collect();
    for name in ["sir", "mh"] {
        let sampler = registry.build(name, &SamplerSettings::default()).unwrap();
        // batches keep the draws nearly independent for the chi-square test
        let mut cells = Vec::new();
        for b in 0..40u64 {
            let mut rng = stream(11, &[b]);
            cells.extend(sampler.sample(&target, 250, &mut rng).unwrap().cells);
        }
        let counts = counts_per_cell(&cells, 4);
        let n = cells.len() as f64;
        for c in 0..4 {
            assert!((counts[c] as f64 / n - expected[c]).abs() < 0.02, "{name} cell {c}");
        }
        if name == "sir" {
            assert!(chi_square(&counts, &expected) < critical, "{name}");
        }
    }
}

#[test]
fn no_sampler_lands_on_zero_kernel() {
    // only two cells of a 4 x 4 raster carry mass
    let mut masses = vec![0.0; 16];
    masses[9] = 1.0;
    masses[3] = 0.5;
    let target = SamplingTarget::new(kernel_from_masses(4, 4, &masses)).unwrap();
    let registry = SamplerRegistry::builtin();
    for name in registry.names() {
        let sampler = registry.build(name, &SamplerSettings::default()).unwrap();
        let mut rng = stream(3, &[0]);
        let draw = sampler.sample(&target, 200, &mut rng).unwrap();
        assert_eq!(draw.len(), 200);
        assert!(draw.cells.iter().all(|&c| c == 9 || c == 3), "{name}");
        assert!(draw.phi_values.iter().all(|&p| p > 0.0));
    }
}

#[test]
fn lattice_points_fill_a_four_by_four_partition() {
    for m in [50, 210] {
        let d = generate_design(m).unwrap();
        let mut boxes = [0usize; 16];
        for p in d.points() {
            boxes[(p[1] * 4.0) as usize * 4 + (p[0] * 4.0) as usize] += 1;
        }
        for &b in &boxes {
            let dev = (b as f64 / m as f64 - 1.0 / 16.0).abs();
            assert!(dev <= 2.0 / m as f64, "m={m}: box count {b}");
        }
    }
}

/// Direct evaluation of the centred L2 discrepancy, term by term.
fn cd2_oracle(points: &[[f64; 2]]) -> f64 {
    let n = points.len() as f64;
    let mut a = 0.0;
    for p in points {
        let mut t = 1.0;
        for &x in p {
            let z = (x - 0.5).abs();
            t *= 1.0 + z / 2.0 - z * z / 2.0;
        }
        a += t;
    }
    let mut b = 0.0;
    for p in points {
        for q in points {
            let mut t = 1.0;
            for k in 0..2 {
                t *= 1.0 + (p[k] - 0.5).abs() / 2.0 + (q[k] - 0.5).abs() / 2.0 - (p[k] - q[k]).abs() / 2.0;
            }
            b += t;
        }
    }
    ((13.0f64 / 12.0).powi(2) - 2.0 * a / n + b / (n * n)).sqrt()
}

#[test]
fn discrepancy_matches_direct_evaluation() {
    assert!((centered_l2_discrepancy(&[[0.5, 0.5]]) - 5.0 / 12.0).abs() < 1e-14);
    let mut rng = stream(5, &[0]);
    for _ in 0..20 {
        let pts: Vec<[f64; 2]> = (0..37).map(|_| [rng.random(), rng.random()]).collect();
        assert!((centered_l2_discrepancy(&pts) - cd2_oracle(&pts)).abs() < 1e-12);
    }
}

#[test]
fn chosen_lattice_beats_random_point_sets() {
    let m = 50;
    let design = generate_design(m).unwrap();
    let cd = centered_l2_discrepancy(design.points());
    let mut rng = stream(9, &[0]);
    for _ in 0..100 {
        let pts: Vec<[f64; 2]> = (0..m).map(|_| [rng.random(), rng.random()]).collect();
        assert!(cd < centered_l2_discrepancy(&pts));
    }
    // and no other coprime generator does better
    for h in (1..m).filter(|&h| prevmap_core::design::gcd(h, m) == 1) {
        assert!(cd <= centered_l2_discrepancy(lattice(m, h).unwrap().points()));
    }
}
