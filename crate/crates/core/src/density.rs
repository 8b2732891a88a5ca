//! Piecewise-constant densities on a rectangular grid.
//!
//! Cells are half-open `[lo, hi)` on both axes except the last cell of each
//! axis, which is closed. Cells are stored row-major with row 0 at the lower
//! edge `y0`, so the cell at column `ix` and row `iy` has index `iy * nx + ix`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack when checking cell-wise orderings between densities that
/// were produced by floating-point convex combinations.
const ORDER_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    nx: usize,
    ny: usize,
    mask: Vec<bool>,
}

impl Region {
    pub fn new(bounds: [f64; 4], nx: usize, ny: usize, mask: Vec<bool>) -> Result<Self> {
        let [x0, y0, x1, y1] = bounds;
        if !bounds.iter().all(|b| b.is_finite()) || !(x0 < x1) || !(y0 < y1) {
            return Err(Error::Config(format!("invalid bounds {bounds:?}")));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::Config(format!(
                "grid must have at least one cell, got {nx}x{ny}"
            )));
        }
        if mask.len() != nx * ny {
            return Err(Error::Ingest(format!(
                "mask has {} entries, expected {} for a {nx}x{ny} grid",
                mask.len(),
                nx * ny
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Config("region mask excludes every cell".into()));
        }
        Ok(Self {
            x0,
            y0,
            x1,
            y1,
            nx,
            ny,
            mask,
        })
    }

    /// The unit square split into `nx` by `ny` cells, all inside the region.
    pub fn unit(nx: usize, ny: usize) -> Result<Self> {
        Self::new([0.0, 0.0, 1.0, 1.0], nx, ny, vec![true; nx * ny])
    }

    pub fn bounds(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn in_region(&self, cell: usize) -> bool {
        self.mask[cell]
    }

    pub fn cell_area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0) / (self.nx * self.ny) as f64
    }

    pub fn area(&self) -> f64 {
        self.cell_area() * self.mask.iter().filter(|&&m| m).count() as f64
    }

    pub fn cell_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// Column and row of a cell index.
    pub fn cell_coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let (ix, iy) = self.cell_coords(cell);
        let dx = (self.x1 - self.x0) / self.nx as f64;
        let dy = (self.y1 - self.y0) / self.ny as f64;
        [self.x0 + (ix as f64 + 0.5) * dx, self.y0 + (iy as f64 + 0.5) * dy]
    }

    /// Index of the cell owning `point`.
    pub fn locate(&self, point: [f64; 2]) -> Result<usize> {
        let [x, y] = point;
        if !(x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1) {
            return Err(Error::Domain {
                x,
                y,
                x0: self.x0,
                y0: self.y0,
                x1: self.x1,
                y1: self.y1,
            });
        }
        let ix = axis_cell((x - self.x0) / (self.x1 - self.x0), self.nx);
        let iy = axis_cell((y - self.y0) / (self.y1 - self.y0), self.ny);
        Ok(self.cell_index(ix, iy))
    }

    /// Maps a point of the unit square affinely onto the enclosing rectangle.
    pub fn from_unit(&self, u: [f64; 2]) -> [f64; 2] {
        [
            self.x0 + u[0] * (self.x1 - self.x0),
            self.y0 + u[1] * (self.y1 - self.y0),
        ]
    }

    /// Maps a point of the enclosing rectangle onto the unit square.
    pub fn to_unit(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - self.x0) / (self.x1 - self.x0),
            (p[1] - self.y0) / (self.y1 - self.y0),
        ]
    }
}

fn axis_cell(t: f64, n: usize) -> usize {
    ((t * n as f64).floor() as usize).min(n - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    region: Region,
    values: Vec<f64>,
}

impl GridDensity {
    /// Builds a density, rejecting negative or non-finite values.
    ///
    /// Values on cells outside the region mask are forced to zero.
    pub fn new(region: Region, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != region.n_cells() {
            return Err(Error::Ingest(format!(
                "grid has {} values, expected {} for a {}x{} grid",
                values.len(),
                region.n_cells(),
                region.nx,
                region.ny
            )));
        }
        for (cell, v) in values.iter_mut().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                let (ix, iy) = region.cell_coords(cell);
                return Err(Error::Ingest(format!("invalid density {v} at cell (ix={ix}, iy={iy})")));
            }
            if !region.mask[cell] {
                *v = 0.0;
            }
        }
        Ok(Self { region, values })
    }

    pub fn from_fn(region: Region, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let values = (0..region.n_cells())
            .map(|c| {
                let (ix, iy) = region.cell_coords(c);
                f(ix, iy)
            })
            .collect();
        Self::new(region, values)
    }

    pub fn constant(region: Region, value: f64) -> Result<Self> {
        let n = region.n_cells();
        Self::new(region, vec![value; n])
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    /// Total mass: sum of value times cell area.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.region.cell_area()
    }

    /// Mass of a single cell.
    pub fn cell_mass(&self, cell: usize) -> f64 {
        self.values[cell] * self.region.cell_area()
    }

    pub fn evaluate(&self, point: [f64; 2]) -> Result<f64> {
        Ok(self.values[self.region.locate(point)?])
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.region.clone(), self.values.iter().map(|v| v * factor).collect())
    }

    /// Cell-wise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &GridDensity, b: f64) -> Result<Self> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self::new(self.region.clone(), values)
    }

    pub(crate) fn same_grid(&self, other: &GridDensity) -> Result<()> {
        if self.region != other.region {
            return Err(Error::Config("densities are defined on different grids".into()));
        }
        Ok(())
    }
}

/// `gamma_check * pop + (1 - gamma_check) * diag`, cell-wise.
pub fn rough_infection_density(pop: &GridDensity, diag: &GridDensity, gamma_check: f64) -> Result<GridDensity> {
    if !(0.0..=1.0).contains(&gamma_check) {
        return Err(Error::Config(format!("gamma_check {gamma_check} outside [0, 1]")));
    }
    pop.combine(gamma_check, diag, 1.0 - gamma_check)
}

/// Normalises a kernel into a probability density; returns it with the kernel's total mass.
pub fn sampling_density(kernel: &GridDensity) -> Result<(GridDensity, f64)> {
    let total = kernel.integrate();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Degenerate(format!("sampling kernel has total mass {total}")));
    }
    Ok((kernel.scaled(1.0 / total)?, total))
}

/// `inf / pop` cell-wise, with zero where the population density is zero.
pub fn local_prevalence(inf: &GridDensity, pop: &GridDensity) -> Result<GridDensity> {
    inf.same_grid(pop)?;
    let mut values = Vec::with_capacity(inf.values.len());
    for (cell, (&i, &p)) in inf.values.iter().zip(&pop.values).enumerate() {
        if i > p * (1.0 + ORDER_SLACK) {
            let (ix, iy) = inf.region.cell_coords(cell);
            return Err(Error::Invariant(format!(
                "infection density {i} exceeds population density {p} at cell (ix={ix}, iy={iy})"
            )));
        }
        values.push(if p > 0.0 { (i / p).min(1.0) } else { 0.0 });
    }
    GridDensity::new(inf.region.clone(), values)
}

/// Population, diagnosed cases, true infections, and the rough-estimate weight.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub pop: GridDensity,
    pub diag: GridDensity,
    pub inf: GridDensity,
    pub gamma_check: f64,
}

impl Scenario {
    pub fn new(pop: GridDensity, diag: GridDensity, inf: GridDensity, gamma_check: f64) -> Result<Self> {
        pop.same_grid(&diag)?;
        pop.same_grid(&inf)?;
        if !(0.0..=1.0).contains(&gamma_check) {
            return Err(Error::Config(format!("gamma_check {gamma_check} outside [0, 1]")));
        }
        for cell in 0..pop.values.len() {
            let (p, d, i) = (pop.values[cell], diag.values[cell], inf.values[cell]);
            let slack = ORDER_SLACK * p.max(1.0);
            if d > i + slack || i > p + slack {
                let (ix, iy) = pop.region.cell_coords(cell);
                return Err(Error::Invariant(format!(
                    "need cases <= infections <= population, got {d} / {i} / {p} at cell (ix={ix}, iy={iy})"
                )));
            }
        }
        Ok(Self {
            pop,
            diag,
            inf,
            gamma_check,
        })
    }

    pub fn with_gamma_check(&self, gamma_check: f64) -> Result<Self> {
        Self::new(self.pop.clone(), self.diag.clone(), self.inf.clone(), gamma_check)
    }

    pub fn region(&self) -> &Region {
        self.pop.region()
    }

    pub fn rough(&self) -> Result<GridDensity> {
        rough_infection_density(&self.pop, &self.diag, self.gamma_check)
    }

    pub fn prevalence(&self) -> Result<GridDensity> {
        local_prevalence(&self.inf, &self.pop)
    }

    pub fn total_infections(&self) -> f64 {
        self.inf.integrate()
    }
}

/// On-disk grid layout: `{"nx","ny","bounds","mask","values"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridJson {
    pub nx: usize,
    pub ny: usize,
    pub bounds: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<bool>>,
    pub values: Vec<f64>,
}

impl From<&GridDensity> for GridJson {
    fn from(d: &GridDensity) -> Self {
        Self {
            nx: d.region.nx,
            ny: d.region.ny,
            bounds: d.region.bounds(),
            mask: Some(d.region.mask.clone()),
            values: d.values.clone(),
        }
    }
}

impl TryFrom<GridJson> for GridDensity {
    type Error = Error;

    fn try_from(g: GridJson) -> Result<Self> {
        let mask = g.mask.unwrap_or_else(|| vec![true; g.nx * g.ny]);
        let region = Region::new(g.bounds, g.nx, g.ny, mask).map_err(as_ingest)?;
        GridDensity::new(region, g.values)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioJson {
    pub pop: GridJson,
    pub diag: GridJson,
    pub inf: GridJson,
    pub gamma_check: f64,
}

impl From<&Scenario> for ScenarioJson {
    fn from(s: &Scenario) -> Self {
        Self {
            pop: (&s.pop).into(),
            diag: (&s.diag).into(),
            inf: (&s.inf).into(),
            gamma_check: s.gamma_check,
        }
    }
}

impl TryFrom<ScenarioJson> for Scenario {
    type Error = Error;

    fn try_from(s: ScenarioJson) -> Result<Self> {
        Scenario::new(s.pop.try_into()?, s.diag.try_into()?, s.inf.try_into()?, s.gamma_check).map_err(as_ingest)
    }
}

/// Settings read from a file are data, not caller configuration.
fn as_ingest(e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Ingest(msg),
        other => other,
    }
}

pub fn read_grid_json(text: &str) -> Result<GridDensity> {
    serde_json::from_str::<GridJson>(text)?.try_into()
}

pub fn read_scenario_json(text: &str) -> Result<Scenario> {
    serde_json::from_str::<ScenarioJson>(text)?.try_into()
}
