//! District-level practical example: administrative districts rasterised
//! onto a grid, surveyed with the two-stage design and with stratified
//! sampling over the districts.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::method::Stratification;
use super::ssd::fmt17;
use super::{run_replications_with, ExperimentReport, ReplicationConfig, STRATIFIED};
use crate::density::{GridDensity, Region, Scenario};
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed};
use crate::samplers::{SamplerRegistry, SamplerSettings};

/// One row of the district table: `id,population,cases[,infection_multiplier]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct District {
    pub id: String,
    pub population: f64,
    pub cases: f64,
    /// Synthetic truth: infections are `cases * multiplier`, capped at the population.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infection_multiplier: Option<f64>,
}

/// One row of the cell map: `cell_ix,cell_iy,stratum_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAssignment {
    pub cell_ix: usize,
    pub cell_iy: usize,
    pub stratum_id: String,
}

pub fn read_districts_csv<R: Read>(input: R) -> Result<Vec<District>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut rows = Vec::new();
    for (line, rec) in reader.deserialize::<District>().enumerate() {
        let d = rec.map_err(|e| Error::Ingest(format!("district row {}: {e}", line + 1)))?;
        if !(d.population >= 0.0) || !(d.cases >= 0.0) || d.cases > d.population {
            return Err(Error::Ingest(format!(
                "district '{}' needs 0 <= cases <= population, got {} / {}",
                d.id, d.cases, d.population
            )));
        }
        if let Some(m) = d.infection_multiplier {
            if !(m >= 1.0) {
                return Err(Error::Ingest(format!(
                    "district '{}' has infection multiplier {m} below 1",
                    d.id
                )));
            }
        }
        rows.push(d);
    }
    Ok(rows)
}

pub fn read_cellmap_csv<R: Read>(input: R) -> Result<Vec<CellAssignment>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    reader
        .deserialize::<CellAssignment>()
        .enumerate()
        .map(|(line, rec)| rec.map_err(|e| Error::Ingest(format!("cell map row {}: {e}", line + 1))))
        .collect()
}

pub fn write_districts_csv<W: Write>(districts: &[District], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "population", "cases", "infection_multiplier"])?;
    for d in districts {
        w.write_record([
            d.id.clone(),
            fmt17(d.population),
            fmt17(d.cases),
            d.infection_multiplier.map(fmt17).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cellmap_csv<W: Write>(cells: &[CellAssignment], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

/// Rasterises district totals uniformly over their cells on the unit square.
///
/// Every grid cell must be mapped to a known district and every district
/// must own at least one cell; offenders are listed in the error.
pub fn build_district_scenario(
    districts: &[District],
    cells: &[CellAssignment],
    default_multiplier: f64,
    gamma_check: f64,
) -> Result<(Scenario, Stratification)> {
    if districts.is_empty() || cells.is_empty() {
        return Err(Error::Ingest("district table and cell map must be non-empty".into()));
    }
    let mut index = HashMap::new();
    for (h, d) in districts.iter().enumerate() {
        if index.insert(d.id.as_str(), h).is_some() {
            return Err(Error::Ingest(format!("duplicate district id '{}'", d.id)));
        }
    }
    let nx = cells.iter().map(|c| c.cell_ix).max().unwrap_or(0) + 1;
    let ny = cells.iter().map(|c| c.cell_iy).max().unwrap_or(0) + 1;
    let region = Region::unit(nx, ny)?;

    let mut labels: Vec<Option<usize>> = vec![None; nx * ny];
    let mut unknown = Vec::new();
    for c in cells {
        let cell = region.cell_index(c.cell_ix, c.cell_iy);
        match index.get(c.stratum_id.as_str()) {
            Some(&h) => {
                if labels[cell].is_some_and(|prev| prev != h) {
                    return Err(Error::Ingest(format!(
                        "cell ({}, {}) is mapped to more than one district",
                        c.cell_ix, c.cell_iy
                    )));
                }
                labels[cell] = Some(h);
            }
            None => unknown.push(c.stratum_id.clone()),
        }
    }
    if !unknown.is_empty() {
        unknown.sort();
        unknown.dedup();
        return Err(Error::Ingest(format!(
            "unknown district ids in cell map: {}",
            unknown.join(", ")
        )));
    }
    let unmapped: Vec<String> = (0..nx * ny)
        .filter(|&c| labels[c].is_none())
        .map(|c| {
            let (ix, iy) = region.cell_coords(c);
            format!("({ix}, {iy})")
        })
        .collect();
    if !unmapped.is_empty() {
        return Err(Error::Ingest(format!("unmapped cells: {}", unmapped.join(", "))));
    }
    let mut counts = vec![0usize; districts.len()];
    for h in labels.iter().flatten() {
        counts[*h] += 1;
    }
    let empty: Vec<&str> = districts
        .iter()
        .zip(&counts)
        .filter(|(_, &k)| k == 0)
        .map(|(d, _)| d.id.as_str())
        .collect();
    if !empty.is_empty() {
        return Err(Error::Ingest(format!("districts without cells: {}", empty.join(", "))));
    }

    let cell_area = region.cell_area();
    let per_cell = |h: usize, total: f64| total / (counts[h] as f64 * cell_area);
    let mut pop = vec![0.0; nx * ny];
    let mut diag = vec![0.0; nx * ny];
    let mut inf = vec![0.0; nx * ny];
    for (cell, label) in labels.iter().enumerate() {
        let h = label.expect("all cells mapped");
        let d = &districts[h];
        let mult = d.infection_multiplier.unwrap_or(default_multiplier);
        pop[cell] = per_cell(h, d.population);
        diag[cell] = per_cell(h, d.cases);
        inf[cell] = per_cell(h, (d.cases * mult).min(d.population));
    }
    let scenario = Scenario::new(
        GridDensity::new(region.clone(), pop)?,
        GridDensity::new(region.clone(), diag)?,
        GridDensity::new(region, inf)?,
        gamma_check,
    )?;
    let ids = districts.iter().map(|d| d.id.clone()).collect();
    Ok((scenario, Stratification { labels, ids }))
}

/// Generator settings of the built-in district fixture.
pub const FIXTURE_DISTRICTS: usize = 51;
pub const FIXTURE_GRID: usize = 32;
pub const FIXTURE_SEED: u64 = 7;

/// The built-in synthetic district fixture used when no district data is supplied.
pub fn district_fixture() -> (Vec<District>, Vec<CellAssignment>) {
    synthetic_districts(FIXTURE_DISTRICTS, FIXTURE_GRID, FIXTURE_SEED)
}

/// A reproducible synthetic district map: Voronoi cells of random seeds on
/// a `grid` x `grid` raster with log-uniform populations.
pub fn synthetic_districts(n_districts: usize, grid: usize, seed: u64) -> (Vec<District>, Vec<CellAssignment>) {
    let mut stream = rng::stream(seed, &[0xd15_7c7]);
    let sites: Vec<[f64; 2]> = (0..n_districts)
        .map(|_| [stream.random::<f64>(), stream.random::<f64>()])
        .collect();

    let mut owner = vec![0usize; grid * grid];
    for iy in 0..grid {
        for ix in 0..grid {
            let c = [(ix as f64 + 0.5) / grid as f64, (iy as f64 + 0.5) / grid as f64];
            let (h, _) = sites
                .iter()
                .enumerate()
                .map(|(h, s)| (h, (s[0] - c[0]).powi(2) + (s[1] - c[1]).powi(2)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
            owner[iy * grid + ix] = h;
        }
    }
    // every district must own a cell; give empty ones the cell nearest their site
    for (h, site) in sites.iter().enumerate() {
        if !owner.contains(&h) {
            let ix = ((site[0] * grid as f64) as usize).min(grid - 1);
            let iy = ((site[1] * grid as f64) as usize).min(grid - 1);
            owner[iy * grid + ix] = h;
        }
    }

    let districts = (0..n_districts)
        .map(|h| {
            let population = (stream.random_range(13.0f64..17.5)).exp().round();
            let case_rate = stream.random_range(0.005..0.03);
            District {
                id: format!("D{h:02}"),
                population,
                cases: (population * case_rate).round(),
                infection_multiplier: Some(stream.random_range(2.0..6.0)),
            }
        })
        .collect();
    let cells = owner
        .iter()
        .enumerate()
        .map(|(c, &h)| CellAssignment {
            cell_ix: c % grid,
            cell_iy: c / grid,
            stratum_id: format!("D{h:02}"),
        })
        .collect();
    (districts, cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistrictConfig {
    pub method: String,
    pub sampler: SamplerSettings,
    pub r_positions: usize,
    pub n_total: u64,
    pub gamma_check: f64,
    pub eta: f64,
    pub alpha: f64,
    pub replications: usize,
    pub seed: u64,
    /// Multiplier used for districts whose row leaves it blank.
    pub default_multiplier: f64,
}

impl Default for DistrictConfig {
    fn default() -> Self {
        Self {
            method: "gls".into(),
            sampler: SamplerSettings::default(),
            r_positions: 250,
            n_total: 10_000,
            gamma_check: 0.05,
            eta: 0.0,
            alpha: 0.05,
            replications: 200,
            seed: rng::DEFAULT_SEED,
            default_multiplier: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistrictRow {
    pub method: String,
    pub sample_mean: f64,
    pub sample_sd: f64,
    pub coverage: f64,
    pub relative_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistrictReport {
    pub true_total: f64,
    pub ours: ExperimentReport,
    pub stratified: ExperimentReport,
    pub table: Vec<DistrictRow>,
    pub note: String,
    pub config: DistrictConfig,
}

impl DistrictReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "sample_mean", "sample_sd", "coverage", "relative_bias"])?;
        for row in &self.table {
            w.write_record([
                row.method.clone(),
                fmt17(row.sample_mean),
                fmt17(row.sample_sd),
                fmt17(row.coverage),
                fmt17(row.relative_bias),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn district_example(
    districts: &[District],
    cells: &[CellAssignment],
    config: &DistrictConfig,
) -> Result<DistrictReport> {
    district_example_with(&SamplerRegistry::builtin(), districts, cells, config)
}

pub fn district_example_with(
    registry: &SamplerRegistry,
    districts: &[District],
    cells: &[CellAssignment],
    config: &DistrictConfig,
) -> Result<DistrictReport> {
    let (scenario, strata) = build_district_scenario(districts, cells, config.default_multiplier, config.gamma_check)?;
    let base = ReplicationConfig {
        method: config.method.clone(),
        sampler: config.sampler.clone(),
        r_positions: config.r_positions,
        n_total: config.n_total,
        eta: config.eta,
        alpha: config.alpha,
        replications: config.replications,
        master_seed: derive_seed(config.seed, &[0]),
        ..ReplicationConfig::default()
    };
    let ours = run_replications_with(registry, &scenario, None, &base)?;
    let stratified = run_replications_with(
        registry,
        &scenario,
        Some(&strata),
        &ReplicationConfig {
            method: STRATIFIED.into(),
            master_seed: derive_seed(config.seed, &[1]),
            ..base.clone()
        },
    )?;
    let row = |r: &ExperimentReport| DistrictRow {
        method: r.method.clone(),
        sample_mean: r.mean_t_hat,
        sample_sd: r.empirical_sd,
        coverage: r.ci_coverage,
        relative_bias: r.relative_bias,
    };
    let table = vec![row(&ours), row(&stratified)];
    let mut per_district = BTreeMap::new();
    for h in strata.labels.iter().flatten() {
        *per_district.entry(*h).or_insert(0usize) += 1;
    }
    Ok(DistrictReport {
        true_total: scenario.total_infections(),
        note: format!(
            "{} districts on a {}x{} raster; stratified baseline is single-stage simple random sampling within each district (textbook estimator)",
            per_district.len(),
            scenario.region().nx(),
            scenario.region().ny()
        ),
        ours,
        stratified,
        table,
        config: config.clone(),
    })
}
