//! Uniform designs on the unit square.
//!
//! The design is a rank-1 good-lattice-point set `{(k/m, {k h / m})}` whose
//! generator `h` is chosen, among all `h` coprime to `m`, to minimise the
//! centered L2 discrepancy. Ties go to the smallest `h`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DesignPointSet {
    points: Vec<[f64; 2]>,
    generator: Option<usize>,
}

impl DesignPointSet {
    /// Wraps arbitrary points of `[0, 1)^2`.
    pub fn from_points(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config(format!(
                "a design needs at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.iter().all(|c| (0.0..1.0).contains(c))) {
            return Err(Error::Config(format!("design point {p:?} outside [0, 1)^2")));
        }
        Ok(Self {
            points,
            generator: None,
        })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Lattice generator `h`, when the set is a rank-1 lattice.
    pub fn generator(&self) -> Option<usize> {
        self.generator
    }

    pub fn describe(&self) -> String {
        match self.generator {
            Some(h) => format!("rank-1 lattice (m={}, h={h})", self.points.len()),
            None => format!("explicit point set (m={})", self.points.len()),
        }
    }

    /// Adds `s` to every point modulo 1.
    pub fn shift(&self, s: ShiftVector) -> DesignPointSet {
        DesignPointSet {
            points: self.points.iter().map(|&p| s.apply(p)).collect(),
            generator: self.generator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftVector([f64; 2]);

impl ShiftVector {
    pub fn new(s: [f64; 2]) -> Result<Self> {
        if s.iter().all(|c| (0.0..1.0).contains(c)) {
            Ok(Self(s))
        } else {
            Err(Error::Config(format!("shift {s:?} outside [0, 1)^2")))
        }
    }

    pub fn components(&self) -> [f64; 2] {
        self.0
    }

    /// The shift that undoes this one.
    pub fn inverse(&self) -> ShiftVector {
        ShiftVector([frac(1.0 - self.0[0]), frac(1.0 - self.0[1])])
    }

    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [frac(p[0] + self.0[0]), frac(p[1] + self.0[1])]
    }
}

/// Fractional part, always in `[0, 1)`.
#[inline]
pub fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

pub fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// The rank-1 lattice with generator vector `(1, h)`.
pub fn lattice(m: usize, h: usize) -> Result<DesignPointSet> {
    if m < 2 {
        return Err(Error::Config(format!("design size must be at least 2, got {m}")));
    }
    if h == 0 || h >= m || gcd(h, m) != 1 {
        return Err(Error::Config(format!("generator {h} is not coprime to {m}")));
    }
    let points = (0..m)
        .map(|k| [k as f64 / m as f64, ((k * h) % m) as f64 / m as f64])
        .collect();
    Ok(DesignPointSet {
        points,
        generator: Some(h),
    })
}

/// Good-lattice-point design of size `m` with CD2-minimising generator.
///
/// The search is exhaustive and costs `O(m^3)`; the result is deterministic
/// whatever the thread count.
pub fn generate_design(m: usize) -> Result<DesignPointSet> {
    if m < 2 {
        return Err(Error::Config(format!("design size must be at least 2, got {m}")));
    }
    let candidates: Vec<usize> = (1..m).filter(|&h| gcd(h, m) == 1).collect();
    let scored: Vec<(usize, f64)> = candidates
        .par_iter()
        .map(|&h| {
            let d = lattice(m, h).expect("coprime generator");
            (h, centered_l2_discrepancy(d.points()))
        })
        .collect();
    let (best, _) = scored
        .into_iter()
        .fold(None::<(usize, f64)>, |acc, (h, cd)| match acc {
            Some((_, best_cd)) if best_cd <= cd => acc,
            _ => Some((h, cd)),
        })
        .expect("at least one coprime generator");
    lattice(m, best)
}

/// Process-wide memo of [`generate_design`], keyed by `m`.
pub fn cached_design(m: usize) -> Result<Arc<DesignPointSet>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<DesignPointSet>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(d) = cache.lock().expect("design cache poisoned").get(&m) {
        return Ok(Arc::clone(d));
    }
    let design = Arc::new(generate_design(m)?);
    cache
        .lock()
        .expect("design cache poisoned")
        .entry(m)
        .or_insert_with(|| Arc::clone(&design));
    Ok(design)
}

/// Centered L2 discrepancy of a point set in `[0, 1]^2`.
pub fn centered_l2_discrepancy(points: &[[f64; 2]]) -> f64 {
    let n = points.len() as f64;
    let dev: Vec<[f64; 2]> = points
        .iter()
        .map(|p| [(p[0] - 0.5).abs(), (p[1] - 0.5).abs()])
        .collect();

    let single: f64 = dev
        .iter()
        .map(|a| a.iter().map(|&z| 1.0 + 0.5 * z - 0.5 * z * z).product::<f64>())
        .sum();

    let mut pairs = 0.0;
    for (i, (pi, ai)) in points.iter().zip(&dev).enumerate() {
        // diagonal term, then twice the strict upper triangle
        pairs += (0..2).map(|k| 1.0 + ai[k]).product::<f64>();
        for (pj, aj) in points[i + 1..].iter().zip(&dev[i + 1..]) {
            let t: f64 = (0..2)
                .map(|k| 1.0 + 0.5 * ai[k] + 0.5 * aj[k] - 0.5 * (pi[k] - pj[k]).abs())
                .product();
            pairs += 2.0 * t;
        }
    }

    let sq = (13.0f64 / 12.0).powi(2) - 2.0 / n * single + pairs / (n * n);
    sq.max(0.0).sqrt()
}

/// Writes `x,y` rows with a header.
pub fn write_design_csv<W: std::io::Write>(design: &DesignPointSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y"])?;
    for p in design.points() {
        w.write_record([format!("{:.16e}", p[0]), format!("{:.16e}", p[1])])?;
    }
    w.flush()?;
    Ok(())
}
