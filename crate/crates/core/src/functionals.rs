//! Information functionals and the carré du champ calculus.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::ParseError;
use crate::fpe::EvolutionTrace;
use crate::grid::{DensityField, GridError};
use crate::jet::Jet;
use crate::model::{CoefficientFn, ScalarSde};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionalError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("finite-difference stencil around {y} with step {step} leaves the domain")]
    StencilOutside { y: f64, step: f64 },
    #[error("need at least 3 records in the window, found {0}")]
    TooFewRecords(usize),
    #[error("KL must be positive inside the fit window (t = {0})")]
    NonPositiveKl(f64),
}

/// A smooth function of the state variable `x` with a display label.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub label: String,
    f: CoefficientFn,
}

impl TestFunction {
    pub fn parse(label: &str, text: &str) -> Result<TestFunction, ParseError> {
        Ok(TestFunction {
            label: label.to_string(),
            f: CoefficientFn::parse(text, &BTreeMap::new())?,
        })
    }

    pub fn from_fn(label: &str, f: CoefficientFn) -> TestFunction {
        TestFunction {
            label: label.to_string(),
            f,
        }
    }

    /// `x`, `x²`, `sin x`, `e^{−x}`.
    pub fn standard_set() -> Vec<TestFunction> {
        [("id", "x"), ("square", "x^2"), ("sin", "sin(x)"), ("exp_neg", "exp(-x)")]
            .iter()
            .map(|(l, t)| TestFunction::parse(l, t).expect("standard test function"))
            .collect()
    }

    pub fn value(&self, y: f64) -> f64 {
        self.f.value(y)
    }

    pub fn jet(&self, y: f64) -> Jet {
        self.f.jet(y)
    }
}

/// Relative entropy `Σ Δy [f1 log(f1/f2) − f1 + f2]`. Each term is
/// non-negative and the sum equals `Σ f1 log(f1/f2) Δy` for densities of
/// equal mass. Cells with `f1 = 0` contribute `f2`; `f1 > 0 = f2` gives `+∞`.
pub fn kl_divergence(f1: &DensityField, f2: &DensityField) -> Result<f64, FunctionalError> {
    f1.check_same_grid(f2)?;
    let mut s = 0.0;
    for ((&p, &q), &w) in f1.values().iter().zip(f2.values()).zip(f1.grid().widths()) {
        if p > 0.0 {
            if q <= 0.0 {
                return Ok(f64::INFINITY);
            }
            s += w * (p * (p / q).ln() - p + q);
        } else {
            s += w * q;
        }
    }
    Ok(s.max(0.0))
}

/// `½ Σ |f1 − f2| Δy`, capped at 1.
pub fn total_variation(f1: &DensityField, f2: &DensityField) -> Result<f64, FunctionalError> {
    f1.check_same_grid(f2)?;
    let s: f64 = f1
        .values()
        .iter()
        .zip(f2.values())
        .zip(f1.grid().widths())
        .map(|((p, q), w)| (p - q).abs() * w)
        .sum();
    Ok((0.5 * s).min(1.0))
}

/// `Γ(f, g) = A f' g'`.
pub fn gamma(sde: &ScalarSde, f: &TestFunction, g: &TestFunction, y: f64) -> f64 {
    let big_a = sde.big_a_jet(y).v;
    big_a * f.jet(y).d1 * g.jet(y).d1
}

/// `Γ₁(f) = A f'²`.
pub fn gamma1(sde: &ScalarSde, f: &TestFunction, y: f64) -> f64 {
    let d = f.jet(y).d1;
    sde.big_a_jet(y).v * d * d
}

/// `Γ₂(f) = curvature · Γ₁(f) + (A f'' + ½ A' f')²`.
pub fn gamma2_closed(sde: &ScalarSde, f: &TestFunction, y: f64) -> f64 {
    let fj = f.jet(y);
    let big_a = sde.big_a_jet(y);
    let second = big_a.v * fj.d2 + 0.5 * big_a.d1 * fj.d1;
    sde.curvature_at(y) * big_a.v * fj.d1 * fj.d1 + second * second
}

/// Backward generator `A h'' + A' h' − ψ' A h'` applied to a function known
/// through its first two derivatives.
fn generator(sde: &ScalarSde, y: f64, d1: f64, d2: f64) -> f64 {
    let big_a = sde.big_a_jet(y);
    let a = sde.a(y);
    let psi_prime = big_a.d1 / big_a.v - a / big_a.v;
    big_a.v * d2 + big_a.d1 * d1 - psi_prime * big_a.v * d1
}

/// Fourth-order central differences `(F', F'')` at `y`.
fn central4<F: Fn(f64) -> f64>(f: F, y: f64, h: f64) -> (f64, f64) {
    let (m2, m1, c, p1, p2) = (f(y - 2.0 * h), f(y - h), f(y), f(y + h), f(y + 2.0 * h));
    let d1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
    let d2 = (-m2 + 16.0 * m1 - 30.0 * c + 16.0 * p1 - p2) / (12.0 * h * h);
    (d1, d2)
}

/// Step actually used by [`gamma2_oracle`]: `step` shrunk by the distance to
/// the nearest finite endpoint when that distance is below one.
pub fn oracle_step(sde: &ScalarSde, y: f64, step: f64) -> f64 {
    let dist = sde
        .domain
        .finite_endpoints()
        .iter()
        .map(|e| (y - e).abs())
        .fold(f64::INFINITY, f64::min);
    step * dist.min(1.0)
}

/// `½ (L*Γ₁(f) − 2 Γ(f, L*f))` with the outer generator and the derivative
/// of `L*f` taken by fourth-order central differences.
pub fn gamma2_oracle(sde: &ScalarSde, f: &TestFunction, y: f64, step: f64) -> Result<f64, FunctionalError> {
    let h = oracle_step(sde, y, step);
    let d = sde.domain;
    if !(d.contains_interior(y - 4.0 * h) && d.contains_interior(y + 4.0 * h)) || h <= 0.0 {
        return Err(FunctionalError::StencilOutside { y, step: h });
    }
    let g1 = |t: f64| gamma1(sde, f, t);
    let (g1_d1, g1_d2) = central4(g1, y, h);
    let l_gamma1 = generator(sde, y, g1_d1, g1_d2);
    let lf = |t: f64| {
        let j = f.jet(t);
        generator(sde, t, j.d1, j.d2)
    };
    let (lf_d1, _) = central4(lf, y, h);
    let cross = sde.big_a_jet(y).v * f.jet(y).d1 * lf_d1;
    Ok(0.5 * (l_gamma1 - 2.0 * cross))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdRow {
    pub label: String,
    pub y: f64,
    pub gamma1: f64,
    pub gamma2_closed: f64,
    /// Absent when the oracle stencil does not fit.
    pub gamma2_oracle: Option<f64>,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdReport {
    pub rho: f64,
    pub min_slack: f64,
    pub rows: Vec<CdRow>,
}

impl CdReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("f_label,y,gamma1,gamma2_closed,gamma2_oracle,slack\n");
        for r in &self.rows {
            let oracle = r.gamma2_oracle.map_or(String::new(), |v| format!("{v:.12e}"));
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{},{:.12e}\n",
                r.label, r.y, r.gamma1, r.gamma2_closed, oracle, r.slack
            ));
        }
        s
    }
}

/// Default oracle step.
pub const ORACLE_STEP: f64 = 1e-3;

/// `min Γ₂(f) − ρ Γ₁(f)` over test functions and probes; non-negative slack
/// certifies the curvature-dimension bound with constant `ρ` on the probes.
pub fn cd_check(sde: &ScalarSde, fs: &[TestFunction], rho: f64, probes: &[f64]) -> CdReport {
    let mut rows = Vec::with_capacity(fs.len() * probes.len());
    let mut min_slack = f64::INFINITY;
    for f in fs {
        for &y in probes {
            let g1 = gamma1(sde, f, y);
            let g2 = gamma2_closed(sde, f, y);
            let slack = g2 - rho * g1;
            min_slack = min_slack.min(slack);
            rows.push(CdRow {
                label: f.label.clone(),
                y,
                gamma1: g1,
                gamma2_closed: g2,
                gamma2_oracle: gamma2_oracle(sde, f, y, ORACLE_STEP).ok(),
                slack,
            });
        }
    }
    CdReport {
        rho,
        min_slack,
        rows,
    }
}

/// Least-squares slope of `log KL` against `t` over records with
/// `t ∈ [t0, t1]`.
pub fn fit_decay_rate(trace: &EvolutionTrace, window: (f64, f64)) -> Result<f64, FunctionalError> {
    let pts: Vec<(f64, f64)> = trace
        .records
        .iter()
        .filter(|r| r.t >= window.0 && r.t <= window.1)
        .map(|r| (r.t, r.kl))
        .collect();
    if pts.len() < 3 {
        return Err(FunctionalError::TooFewRecords(pts.len()));
    }
    if let Some(&(t, _)) = pts.iter().find(|p| !(p.1 > 0.0)) {
        return Err(FunctionalError::NonPositiveKl(t));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let lm = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, k) in &pts {
        sxy += (t - tm) * (k.ln() - lm);
        sxx += (t - tm) * (t - tm);
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpe::TraceRecord;
    use crate::grid::Grid;
    use crate::model::{make_model, ModelParams};
    use std::sync::Arc;

    #[test]
    fn kl_and_tv_basics() {
        let g = Arc::new(Grid::uniform(0.0, 2.0, 2).unwrap());
        let a = DensityField::from_values(g.clone(), vec![1.0, 0.0]);
        let b = DensityField::from_values(g, vec![0.0, 1.0]);
        assert_eq!(kl_divergence(&a, &a).unwrap(), 0.0);
        assert_eq!(kl_divergence(&a, &b).unwrap(), f64::INFINITY);
        assert_eq!(total_variation(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn cir_gamma_values() {
        let sde = make_model(ModelParams::Cir {
            k: 1.0,
            theta: 1.0,
            sigma: 1.0,
        })
        .unwrap();
        let id = TestFunction::parse("id", "x").unwrap();
        assert!((gamma1(&sde, &id, 1.0) - 0.5).abs() < 1e-15);
        assert!((gamma2_closed(&sde, &id, 1.0) - 0.5).abs() < 1e-15);
        let o = gamma2_oracle(&sde, &id, 1.0, 1e-3).unwrap();
        assert!((o - 0.5).abs() < 1e-6, "{o}");
    }

    #[test]
    fn synthetic_decay_fit() {
        let mut trace = EvolutionTrace::default();
        for i in 0..50 {
            let t = i as f64 * 0.1;
            trace.records.push(TraceRecord {
                t,
                kl: (-2.0 * t).exp(),
                tv: 0.0,
                free_energy: 0.0,
                entropy_production: 0.0,
            });
        }
        let s = fit_decay_rate(&trace, (0.0, 10.0)).unwrap();
        assert!((s + 2.0).abs() < 1e-12);
        assert!(matches!(
            fit_decay_rate(&trace, (0.0, 0.15)),
            Err(FunctionalError::TooFewRecords(2))
        ));
    }
}
