mod common;

use common::kernel_from_masses;
use prevmap_core::experiments::{series_e_scenario, TwoStageMethod};
use prevmap_core::normal::{quantile, upper_quantile};
use prevmap_core::rng::stream;
use prevmap_core::survey::{self, allocate, simulate_tests, theoretical_minimum_variance};
use prevmap_core::{GridDensity, PositionDraw, Region, SamplerRegistry, SamplerSettings, SamplingTarget};
use statrs::function::erf::erfc;

/// Lower-tail normal quantile by bisection on the complementary error function.
fn quantile_by_bisection(p: f64) -> f64 {
    let cdf = |z: f64| 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn quantile_agrees_with_bisection() {
    for &p in &[
        1e-12, 1e-6, 0.001, 0.01, 0.025, 0.05, 0.16, 0.3, 0.4250, 0.5, 0.6, 0.9, 0.975, 0.999999,
    ] {
        let (z, o) = (quantile(p), quantile_by_bisection(p));
        assert!((z - o).abs() <= 1e-9 * (1.0 + o.abs()), "p={p}: {z} vs {o}");
    }
    // a 68% interval uses roughly one standard deviation
    assert!((upper_quantile(0.16) - 0.99446).abs() < 1e-5);
}

#[test]
fn binomial_counts_have_the_right_moments() {
    let pop = GridDensity::constant(Region::unit(2, 2).unwrap(), 100.0).unwrap();
    let prevalence = GridDensity::new(Region::unit(2, 2).unwrap(), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let rough = prevalence.combine(100.0, &pop, 0.0).unwrap();
    let target = SamplingTarget::new(rough.clone()).unwrap();
    let draw = PositionDraw::at_cells(&target, &[0, 1, 2, 3], "fixed").unwrap();
    let plan = allocate(&draw, &pop, &rough, 400, 1.0).unwrap();
    assert_eq!(plan.sizes, vec![100; 4]);

    let reps = 20_000;
    let mut sum = [0.0; 4];
    let mut sq = [0.0; 4];
    let mut rng = stream(1, &[0]);
    for _ in 0..reps {
        let out = simulate_tests(&plan, &prevalence, &mut rng).unwrap();
        for c in 0..4 {
            let k = out.positives[c] as f64;
            sum[c] += k;
            sq[c] += k * k;
        }
    }
    for c in 0..4 {
        let p = 0.1 * (c + 1) as f64;
        let mean = sum[c] / reps as f64;
        let var = sq[c] / reps as f64 - mean * mean;
        let (m0, v0) = (100.0 * p, 100.0 * p * (1.0 - p));
        assert!(
            (mean - m0).abs() < 4.0 * (v0 / reps as f64).sqrt(),
            "cell {c} mean {mean}"
        );
        assert!((var / v0 - 1.0).abs() < 0.05, "cell {c} var {var}");
    }
}

#[test]
fn kernel_scale_does_not_change_the_estimate() {
    let scenario = series_e_scenario(0.5, 0.5).unwrap();
    let registry = SamplerRegistry::builtin();
    let run = |factor: f64| {
        let s = &scenario;
        let rough = s.rough().unwrap().scaled(factor).unwrap();
        let target = SamplingTarget::new(rough.clone()).unwrap();
        let sampler = registry.build("gls", &SamplerSettings::default()).unwrap();
        let mut rng = stream(42, &[0]);
        let draw = sampler.sample(&target, 50, &mut rng).unwrap();
        let plan = allocate(&draw, &s.pop, &rough.scaled(1.0 / factor).unwrap(), 10_000, 0.0).unwrap();
        let out = simulate_tests(&plan, &s.prevalence().unwrap(), &mut rng).unwrap();
        (
            draw.cells.clone(),
            survey::estimate(&plan, &out, &s.pop, 0.05).unwrap().t_hat,
        )
    };
    let (cells1, t1) = run(1.0);
    for factor in [7.0, 8.0, 0.3] {
        let (cells, t) = run(factor);
        assert_eq!(cells1, cells, "factor {factor}");
        assert_eq!(t1.to_bits(), t.to_bits(), "factor {factor}");
    }
}

#[test]
fn minimum_variance_scales_inversely_with_n() {
    let scenario = series_e_scenario(0.3, 0.5).unwrap();
    let v1 = theoretical_minimum_variance(&scenario.pop, &scenario.inf, 10_000).unwrap();
    let v2 = theoretical_minimum_variance(&scenario.pop, &scenario.inf, 20_000).unwrap();
    assert_eq!(v1, 2.0 * v2);

    // hand computation: sqrt(f_I (f_P - f_I)) on a two-cell raster
    let pop = kernel_from_masses(2, 1, &[100.0, 50.0]);
    let inf = kernel_from_masses(2, 1, &[20.0, 10.0]);
    let g = 0.5 * ((40.0 * 160.0f64).sqrt() + (20.0 * 80.0f64).sqrt());
    let v = theoretical_minimum_variance(&pop, &inf, 100).unwrap();
    assert!((v - g * g / 100.0).abs() < 1e-9 * v);
}

#[test]
fn oracle_design_hits_the_minimum_on_average() {
    let scenario = series_e_scenario(0.5, 0.5).unwrap();
    let sampler = SamplerRegistry::builtin()
        .build("gls", &SamplerSettings::default())
        .unwrap();
    let method = TwoStageMethod::oracle(&scenario, sampler, 50, 10_000, 0.05).unwrap();
    let mut rng = stream(3, &[0]);
    let reps = 400;
    let t: Vec<f64> = (0..reps)
        .map(|_| method.survey(&mut rng).unwrap().estimate.t_hat)
        .collect();
    let mean = t.iter().sum::<f64>() / reps as f64;
    let var = t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let vmin = theoretical_minimum_variance(&scenario.pop, &scenario.inf, 10_000).unwrap();
    // loose: 400 replications give about 7% relative standard error on a variance
    assert!((var / vmin - 1.0).abs() < 0.3, "var {var} vs minimum {vmin}");
    assert!((mean / scenario.total_infections() - 1.0).abs() < 0.01);
}
