//! Finite-volume Fokker-Planck solver in relative-density form.
//!
//! With `h = u/u∞` the flux through interface `i+½` is
//! `κᵢ (h_{i+1} − h_i)` where `κᵢ = A u∞ / Δy` is evaluated at the interface
//! coordinate. Backward Euler then gives a symmetric M-matrix whose columns
//! sum to the cell masses, so one step
//!
//! - conserves mass exactly (up to rounding),
//! - keeps `u > 0`,
//! - leaves the sampled `u∞` fixed,
//! - never increases the discrete free energy.
//!
//! The matrix does not depend on time and is factored once.

use std::sync::Arc;

use thiserror::Error;

use crate::functionals::{kl_divergence, total_variation, FunctionalError};
use crate::grid::{DensityField, Grid, GridError};
use crate::stationary::{GibbsDensity, Potential, StationaryError};

pub use crate::grid::build_grid;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FpeError {
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("initial density must be positive: cell {cell} holds {value}")]
    NonPositive { cell: usize, value: f64 },
    #[error("linear solve failed at step {step}: diagonal dominance violated in row {row}")]
    LinearSolve { step: usize, row: usize },
    #[error("stationary density underflows in cell {cell} (y = {y}); shrink the grid")]
    Underflow { cell: usize, y: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Stationary(#[from] StationaryError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub kl: f64,
    pub tv: f64,
    pub free_energy: f64,
    pub entropy_production: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvolutionTrace {
    pub records: Vec<TraceRecord>,
}

impl EvolutionTrace {
    pub const CSV_HEADER: &'static str = "t,kl,tv,free_energy,entropy_production";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!(
                "{:.6},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                r.t, r.kl, r.tv, r.free_energy, r.entropy_production
            ));
        }
        s
    }

    /// Centered-difference `dF/dt` at interior records, paired with `J`.
    pub fn dissipation_pairs(&self) -> Vec<(f64, f64, f64)> {
        self.records
            .windows(3)
            .map(|w| {
                let dfdt = (w[2].free_energy - w[0].free_energy) / (w[2].t - w[0].t);
                (w[1].t, dfdt, w[1].entropy_production)
            })
            .collect()
    }
}

/// Per-step solver health.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepDiagnostics {
    pub steps: usize,
    pub max_mass_drift: f64,
    pub positivity_violations: usize,
    pub free_energy_increases: usize,
    pub max_free_energy_increase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveConfig {
    pub horizon: f64,
    pub dt: f64,
    pub observe_every: usize,
    /// Keep a density snapshot every this many records.
    pub snapshot_every: Option<usize>,
    /// Free-energy increase per step tolerated before counting a violation.
    pub free_energy_slack: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            horizon: 10.0,
            dt: 1e-3,
            observe_every: 10,
            snapshot_every: None,
            free_energy_slack: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub trace: EvolutionTrace,
    pub diagnostics: StepDiagnostics,
    pub snapshots: Vec<(f64, DensityField)>,
    pub final_density: DensityField,
}

/// Solver bound to one stationary density and one grid.
#[derive(Debug, Clone)]
pub struct FokkerPlanckSolver {
    grid: Arc<Grid>,
    potential: Potential,
    u_inf: DensityField,
    /// `ψ` at cell centers.
    psi: Vec<f64>,
    /// Interface conductances `A u∞ / Δy`, one per inner interface.
    kappa: Vec<f64>,
    /// Cell masses of `u∞`.
    m: Vec<f64>,
    log_z: f64,
}

impl FokkerPlanckSolver {
    pub fn new(gibbs: &GibbsDensity, grid: Arc<Grid>) -> Result<FokkerPlanckSolver, FpeError> {
        let p = gibbs.potential().clone();
        let centers = grid.centers();
        let lw: Vec<f64> = centers.iter().map(|&y| p.log_weight(y)).collect();
        let lmax = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let disc: f64 = lw
            .iter()
            .zip(grid.widths())
            .map(|(l, w)| (l - lmax).exp() * w)
            .sum();
        let log_z = lmax + disc.ln();
        let values: Vec<f64> = lw.iter().map(|l| (l - log_z).exp()).collect();
        for (i, (&v, &y)) in values.iter().zip(centers).enumerate() {
            if !(v > 1e-300) || !v.is_finite() {
                return Err(FpeError::Underflow { cell: i, y });
            }
        }
        let ifaces = grid.interfaces();
        let kappa: Vec<f64> = (0..grid.n_cells() - 1)
            .map(|i| {
                let y = ifaces[i + 1];
                let u = (p.log_weight(y) - log_z).exp();
                p.big_a(y) * u / grid.center_spacing(i)
            })
            .collect();
        if let Some(row) = kappa.iter().position(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(FpeError::LinearSolve { step: 0, row });
        }
        let psi: Vec<f64> = centers.iter().map(|&y| p.psi(y)).collect();
        let m = values.iter().zip(grid.widths()).map(|(u, w)| u * w).collect();
        let u_inf = DensityField::from_values(grid.clone(), values);
        Ok(FokkerPlanckSolver {
            grid,
            potential: p,
            u_inf,
            psi,
            kappa,
            m,
            log_z,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `u∞` sampled at cell centers, normalized on the grid.
    pub fn u_inf(&self) -> &DensityField {
        &self.u_inf
    }

    /// Discrete `log Z` matching [`Self::u_inf`]; the free energy of `u∞` is
    /// `−log_z`.
    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// Fluxes at the inner interfaces.
    pub fn fluxes(&self, u: &DensityField) -> Vec<f64> {
        let h = self.relative(u);
        self.kappa
            .iter()
            .enumerate()
            .map(|(i, k)| k * (h[i + 1] - h[i]))
            .collect()
    }

    fn relative(&self, u: &DensityField) -> Vec<f64> {
        u.values()
            .iter()
            .zip(self.u_inf.values())
            .map(|(a, b)| a / b)
            .collect()
    }

    /// `Σ u (log u + ψ) Δy` with `0 log 0 = 0`.
    pub fn free_energy(&self, u: &DensityField) -> f64 {
        u.values()
            .iter()
            .zip(&self.psi)
            .zip(self.grid.widths())
            .map(|((&v, &psi), &w)| if v == 0.0 { 0.0 } else { v * (v.ln() + psi) * w })
            .sum()
    }

    /// `Σ κ (Δh)² / h̄` with `h̄` the harmonic interface mean of `h`.
    pub fn entropy_production(&self, u: &DensityField) -> f64 {
        let h = self.relative(u);
        self.kappa
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let (a, b) = (h[i], h[i + 1]);
                if a <= 0.0 || b <= 0.0 {
                    return 0.0;
                }
                let hm = 2.0 * a * b / (a + b);
                k * (b - a) * (b - a) / hm
            })
            .sum()
    }

    fn record(&self, t: f64, u: &DensityField) -> Result<TraceRecord, FpeError> {
        Ok(TraceRecord {
            t,
            kl: kl_divergence(u, &self.u_inf)?,
            tv: total_variation(u, &self.u_inf)?,
            free_energy: self.free_energy(u),
            entropy_production: self.entropy_production(u),
        })
    }

    /// Backward-Euler evolution from `u0` to `cfg.horizon`.
    pub fn evolve(&self, u0: &DensityField, cfg: &EvolveConfig) -> Result<Evolution, FpeError> {
        if !(cfg.dt > 0.0) {
            return Err(FpeError::BadStep(cfg.dt));
        }
        if !(cfg.horizon > 0.0) {
            return Err(FpeError::BadHorizon(cfg.horizon));
        }
        u0.check_same_grid(&self.u_inf)?;
        if let Some((cell, &value)) = u0.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(FpeError::NonPositive { cell, value });
        }
        let n = self.grid.n_cells();
        let dt = cfg.dt;
        let n_steps = (cfg.horizon / dt - 1e-9).ceil() as usize;
        let observe = cfg.observe_every.max(1);

        // Thomas factorization of the constant matrix.
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let left = if i > 0 { self.kappa[i - 1] } else { 0.0 };
                let right = if i + 1 < n { self.kappa[i] } else { 0.0 };
                self.m[i] / dt + left + right
            })
            .collect();
        let mut c_prime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = diag[0];
        for i in 0..n {
            if i > 0 {
                denom[i] = diag[i] + self.kappa[i - 1] * c_prime[i - 1];
            }
            if !(denom[i] > 0.0) {
                return Err(FpeError::LinearSolve { step: 0, row: i });
            }
            if i + 1 < n {
                c_prime[i] = -self.kappa[i] / denom[i];
            }
        }

        let mut u = u0.clone();
        let mut h = self.relative(&u);
        let mut rhs = vec![0.0; n];
        let mut delta = vec![0.0; n];
        let mut trace = EvolutionTrace::default();
        let mut snapshots = Vec::new();
        let mut diag_out = StepDiagnostics::default();
        let first = self.record(0.0, &u)?;
        let mut f_prev = first.free_energy;
        let mut mass_prev = u.mass();
        trace.records.push(first);
        if cfg.snapshot_every.is_some() {
            snapshots.push((0.0, u.clone()));
        }
        for step in 1..=n_steps {
            // Solve for the increment against the flux divergence, so an
            // exactly constant h stays exactly constant.
            for i in 0..n {
                let left = if i > 0 { self.kappa[i - 1] * (h[i - 1] - h[i]) } else { 0.0 };
                let right = if i + 1 < n { self.kappa[i] * (h[i + 1] - h[i]) } else { 0.0 };
                rhs[i] = left + right;
            }
            // forward sweep (sub-diagonal entries are −κ)
            delta[0] = rhs[0] / denom[0];
            for i in 1..n {
                delta[i] = (rhs[i] + self.kappa[i - 1] * delta[i - 1]) / denom[i];
            }
            for i in (0..n - 1).rev() {
                delta[i] -= c_prime[i] * delta[i + 1];
            }
            for i in 0..n {
                h[i] += delta[i];
            }
            {
                let vals = u.values_mut();
                for i in 0..n {
                    vals[i] = h[i] * self.u_inf.values()[i];
                }
            }
            if let Some(row) = h.iter().position(|v| !v.is_finite()) {
                return Err(FpeError::LinearSolve { step, row });
            }
            let mass = u.mass();
            diag_out.max_mass_drift = diag_out.max_mass_drift.max((mass - mass_prev).abs());
            mass_prev = mass;
            if u.values().iter().any(|v| !(*v > 0.0)) {
                diag_out.positivity_violations += 1;
            }
            let f = self.free_energy(&u);
            if f - f_prev > cfg.free_energy_slack {
                diag_out.free_energy_increases += 1;
            }
            diag_out.max_free_energy_increase = diag_out.max_free_energy_increase.max(f - f_prev);
            f_prev = f;
            diag_out.steps = step;
            if step % observe == 0 || step == n_steps {
                let t = step as f64 * dt;
                trace.records.push(self.record(t, &u)?);
                if let Some(k) = cfg.snapshot_every {
                    if (trace.records.len() - 1) % k.max(1) == 0 {
                        snapshots.push((t, u.clone()));
                    }
                }
            }
        }
        Ok(Evolution {
            trace,
            diagnostics: diag_out,
            snapshots,
            final_density: u,
        })
    }
}

/// Free energy `Σ u (log u + ψ) Δy` of a density against a potential.
pub fn free_energy(u: &DensityField, potential: &Potential) -> f64 {
    u.grid()
        .centers()
        .iter()
        .zip(u.values())
        .zip(u.grid().widths())
        .map(|((&y, &v), &w)| if v == 0.0 { 0.0 } else { v * (v.ln() + potential.psi(y)) * w })
        .sum()
}

/// Entropy production of `u` against the stationary density on its grid.
pub fn entropy_production(u: &DensityField, gibbs: &GibbsDensity) -> Result<f64, FpeError> {
    let s = FokkerPlanckSolver::new(gibbs, u.grid().clone())?;
    Ok(s.entropy_production(u))
}

/// Convenience wrapper: builds the solver and evolves `u0`.
pub fn evolve(gibbs: &GibbsDensity, u0: &DensityField, cfg: &EvolveConfig) -> Result<Evolution, FpeError> {
    FokkerPlanckSolver::new(gibbs, u0.grid().clone())?.evolve(u0, cfg)
}

/// Weight of `u∞` mixed into bump starts so that every cell is positive.
pub const START_FLOOR: f64 = 1e-12;

/// Normalized Gaussian bump, mixed with a `START_FLOOR` fraction of `u∞`.
pub fn bump_start(u_inf: &DensityField, center: f64, width: f64) -> Result<DensityField, FpeError> {
    let bump = DensityField::gaussian(u_inf.grid().clone(), center, width)?;
    Ok(bump.mix(u_inf, START_FLOOR)?)
}

/// Mollified point mass at `x0`: a bump three local cell widths wide.
pub fn point_mass_start(u_inf: &DensityField, x0: f64) -> Result<DensityField, FpeError> {
    let grid = u_inf.grid();
    let cell = grid.locate(x0).ok_or(FpeError::Grid(GridError::ZeroMass))?;
    bump_start(u_inf, x0, 3.0 * grid.widths()[cell])
}
