//! Finite-volume grids and densities sampled on them.

use std::sync::Arc;

use thiserror::Error;

use crate::model::DomainInterval;
use crate::stationary::GibbsDensity;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("interfaces must be finite and strictly increasing")]
    NotIncreasing,
    #[error("need at least {min} cells, got {got}")]
    TooFewCells { min: usize, got: usize },
    #[error("infinite domain {0} needs the stationary density to locate a truncation")]
    TruncationUnavailable(DomainInterval),
    #[error("tail truncation search failed: {0}")]
    TruncationFailed(String),
    #[error("density fields live on different grids")]
    GridMismatch,
    #[error("density has no positive mass")]
    ZeroMass,
}

/// Largest growth factor between neighbouring graded cells.
pub const GRADING_RATIO: f64 = 1.05;

/// Log of the largest-to-smallest width ratio along one graded stretch.
pub const GRADING_SPAN: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    interfaces: Vec<f64>,
    centers: Vec<f64>,
    widths: Vec<f64>,
}

impl Grid {
    pub fn from_interfaces(interfaces: Vec<f64>) -> Result<Grid, GridError> {
        if interfaces.len() < 2 {
            return Err(GridError::TooFewCells {
                min: 1,
                got: interfaces.len().saturating_sub(1),
            });
        }
        if interfaces.iter().any(|v| !v.is_finite()) || interfaces.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GridError::NotIncreasing);
        }
        let centers = interfaces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let widths = interfaces.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Grid {
            interfaces,
            centers,
            widths,
        })
    }

    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Grid, GridError> {
        let h = (hi - lo) / n as f64;
        let mut v: Vec<f64> = (0..=n).map(|i| lo + h * i as f64).collect();
        v[n] = hi;
        Self::from_interfaces(v)
    }

    /// `n` cells on `[lo, hi]` growing geometrically away from the graded
    /// ends. The stretch is a fixed map of a uniform grid, so doubling `n`
    /// halves every cell once the cell ratio no longer binds.
    pub fn graded(lo: f64, hi: f64, n: usize, grade_lo: bool, grade_hi: bool) -> Result<Grid, GridError> {
        let ends = grade_lo as usize + grade_hi as usize;
        if ends == 0 {
            return Self::uniform(lo, hi, n);
        }
        let per = if ends == 2 { n as f64 / 2.0 } else { n as f64 };
        let beta = GRADING_SPAN.min(per * GRADING_RATIO.ln());
        let w = hi - lo;
        let stretch = |s: f64| (beta * s).exp_m1() / beta.exp_m1();
        let map = |s: f64| match (grade_lo, grade_hi) {
            (true, false) => lo + w * stretch(s),
            (false, true) => hi - w * stretch(1.0 - s),
            _ if s <= 0.5 => lo + 0.5 * w * stretch(2.0 * s),
            _ => hi - 0.5 * w * stretch(2.0 * (1.0 - s)),
        };
        let mut v: Vec<f64> = (0..=n).map(|i| map(i as f64 / n as f64)).collect();
        v[0] = lo;
        v[n] = hi;
        Self::from_interfaces(v)
    }

    pub fn n_cells(&self) -> usize {
        self.centers.len()
    }

    pub fn interfaces(&self) -> &[f64] {
        &self.interfaces
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn lo(&self) -> f64 {
        self.interfaces[0]
    }

    pub fn hi(&self) -> f64 {
        *self.interfaces.last().expect("non-empty")
    }

    /// Distance between the centers of cells `i` and `i + 1`.
    pub fn center_spacing(&self, i: usize) -> f64 {
        self.centers[i + 1] - self.centers[i]
    }

    /// Cell containing `y`; interfaces belong to the cell on their right,
    /// except the last one.
    pub fn locate(&self, y: f64) -> Option<usize> {
        if !(y >= self.lo() && y <= self.hi()) {
            return None;
        }
        let idx = self.interfaces.partition_point(|&v| v <= y);
        Some(idx.saturating_sub(1).min(self.n_cells() - 1))
    }
}

/// Builds the solver grid for a domain. Infinite ends are cut where the
/// stationary tail mass drops below `tail_mass_eps` (split evenly between
/// two infinite ends); finite degenerate ends get geometrically graded cells.
pub fn build_grid(
    domain: DomainInterval,
    n: usize,
    tail_mass_eps: f64,
    gibbs: Option<&GibbsDensity>,
) -> Result<Grid, GridError> {
    if n < 16 {
        return Err(GridError::TooFewCells { min: 16, got: n });
    }
    let (lo, hi) = if domain.left_finite() && domain.right_finite() {
        (domain.left, domain.right)
    } else {
        let g = gibbs.ok_or(GridError::TruncationUnavailable(domain))?;
        g.tail_truncation(tail_mass_eps)
            .map_err(|e| GridError::TruncationFailed(e.to_string()))?
    };
    let degenerate = |e: f64| match gibbs {
        Some(g) => g.potential().sde().b(e).abs() <= 1e-12,
        None => true,
    };
    let grade_lo = domain.left_finite() && degenerate(domain.left);
    let grade_hi = domain.right_finite() && degenerate(domain.right);
    Grid::graded(lo, hi, n, grade_lo, grade_hi)
}

/// Cell values of a probability density on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl DensityField {
    /// Wraps raw cell values without normalizing.
    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> DensityField {
        assert_eq!(grid.n_cells(), values.len(), "one value per cell");
        DensityField { grid, values }
    }

    /// Samples `f` at the cell centers and normalizes to unit mass.
    pub fn from_fn<F: Fn(f64) -> f64>(grid: Arc<Grid>, f: F) -> Result<DensityField, GridError> {
        let values = grid.centers().iter().map(|&y| f(y)).collect();
        let mut d = DensityField { grid, values };
        d.normalize()?;
        Ok(d)
    }

    /// Normalized Gaussian bump centered at `mean`.
    pub fn gaussian(grid: Arc<Grid>, mean: f64, sd: f64) -> Result<DensityField, GridError> {
        Self::from_fn(grid, |y| (-0.5 * ((y - mean) / sd).powi(2)).exp())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mass(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.widths())
            .map(|(u, w)| u * w)
            .sum()
    }

    pub fn normalize(&mut self) -> Result<(), GridError> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(GridError::ZeroMass);
        }
        self.values.iter_mut().for_each(|u| *u /= m);
        Ok(())
    }

    /// Convex combination `(1 - w) self + w other`.
    pub fn mix(&self, other: &DensityField, w: f64) -> Result<DensityField, GridError> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        Ok(DensityField {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn check_same_grid(&self, other: &DensityField) -> Result<(), GridError> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid {
            Ok(())
        } else {
            Err(GridError::GridMismatch)
        }
    }

    pub fn mean(&self) -> f64 {
        self.grid
            .centers()
            .iter()
            .zip(&self.values)
            .zip(self.grid.widths())
            .map(|((y, u), w)| y * u * w)
            .sum()
    }

    /// `y,u` CSV with header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("y,u\n");
        for (y, u) in self.grid.centers().iter().zip(&self.values) {
            s.push_str(&format!("{y:.12e},{u:.12e}\n"));
        }
        s
    }
}
