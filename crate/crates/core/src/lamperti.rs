//! Change of variables `Y = Q(X)` with `Q' = 1/b`, which turns the SDE into
//! one with unit additive noise and drift `c(y) = a(x)/b(x) − ½ b'(x)`,
//! `x = Q⁻¹(y)`. Differentiating gives `c'(Q(x)) = −curvature(x)`, so a
//! positive curvature bound is the same thing as a dissipative drift `c`.

use std::f64::consts::PI;
use std::sync::Arc;

use thiserror::Error;

use crate::hypotheses::search_interval;
use crate::model::{ModelParams, ScalarSde};
use crate::quadrature::{integrate, layout_nodes, Antiderivative, Integrand, QuadConfig};
use crate::search::chebyshev_points;
use crate::stationary::build_potential;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LampertiError {
    #[error("diffusion must be positive at the anchor {0}")]
    BadAnchor(f64),
    #[error("{y} is outside the image interval ({lo}, {hi})")]
    OutsideImage { y: f64, lo: f64, hi: f64 },
    #[error("{x} is not an interior state")]
    NotInterior { x: f64 },
    #[error("transformed drift is not finite at y = {y} (x = {x})")]
    Singular { y: f64, x: f64 },
    #[error("difference stencil around {y} leaves the image interval")]
    StencilOutside { y: f64 },
}

#[derive(Debug, Clone)]
enum Kind {
    Closed(ModelParams),
    Numeric(Arc<Antiderivative>),
}

#[derive(Debug, Clone)]
pub struct LampertiTransform {
    sde: ScalarSde,
    anchor: Option<f64>,
    kind: Kind,
    image: (f64, f64),
    notes: Vec<String>,
}

fn inv_b(sde: &ScalarSde) -> Integrand {
    let sde = sde.clone();
    Arc::new(move |x| 1.0 / sde.b(x))
}

/// Builds the transform. Built-in models use closed forms (and ignore the
/// anchor); other models integrate `1/b` from `anchor`, defaulting to the
/// mode of the stationary density.
pub fn build_transform(sde: &ScalarSde, anchor: Option<f64>) -> Result<LampertiTransform, LampertiError> {
    if let Some(p) = sde.params {
        let image = match p {
            ModelParams::Cir { .. } => (0.0, f64::INFINITY),
            ModelParams::WrightFisher { .. } => (0.0, PI),
            ModelParams::OrnsteinUhlenbeck { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            ModelParams::AitSahalia { p, .. } => {
                if p < 1.0 {
                    (0.0, f64::INFINITY)
                } else if p > 1.0 {
                    (f64::NEG_INFINITY, 0.0)
                } else {
                    (f64::NEG_INFINITY, f64::INFINITY)
                }
            }
        };
        return Ok(LampertiTransform {
            sde: sde.clone(),
            anchor: None,
            kind: Kind::Closed(p),
            image,
            notes: vec![],
        });
    }
    let d = sde.domain;
    let x0 = match anchor {
        Some(a) => a,
        None => build_potential(sde, None)
            .map(|p| p.mode())
            .unwrap_or_else(|_| match (d.left_finite(), d.right_finite()) {
                (true, true) => 0.5 * (d.left + d.right),
                (true, false) => d.left + 1.0,
                (false, true) => d.right - 1.0,
                (false, false) => 0.0,
            }),
    };
    if !d.contains_interior(x0) || !(sde.b(x0) > 0.0) {
        return Err(LampertiError::BadAnchor(x0));
    }
    let (lo, hi) = search_interval(sde);
    let lo = if d.left_finite() { d.left } else { lo.min(x0 - 1.0) };
    let hi = if d.right_finite() { d.right } else { hi.max(x0 + 1.0) };
    let nodes = layout_nodes(lo, hi, 512, d.left_finite(), d.right_finite());
    let q = Arc::new(Antiderivative::build(inv_b(sde), x0, nodes));
    let mut notes = Vec::new();
    let mut limit = |end: f64, finite: bool, dir: f64| -> f64 {
        let nodes = q.nodes();
        let base_x = if dir < 0.0 { nodes[0] } else { *nodes.last().expect("nodes") };
        let base = q.eval(base_x);
        let cfg = QuadConfig {
            max_intervals: 4000,
            ..Default::default()
        };
        if finite {
            let r = integrate(|x| q.integrand(x), base_x, end, &cfg);
            if r.converged && r.value.is_finite() {
                return base + r.value;
            }
            notes.push(format!("1/b is not integrable at {end}; image is unbounded on that side"));
            return dir * f64::INFINITY;
        }
        let mut x = base_x;
        let mut acc = base;
        let span = (base_x - x0).abs().max(1.0);
        for j in 0..60 {
            let nx = x0 + dir * span * 2f64.powi(j + 1);
            let r = integrate(|t| q.integrand(t), x, nx, &cfg);
            acc += r.value;
            if r.value.abs() <= 1e-12 * acc.abs().max(1.0) {
                return acc;
            }
            x = nx;
        }
        dir * f64::INFINITY
    };
    let image = (
        limit(d.left, d.left_finite(), -1.0),
        limit(d.right, d.right_finite(), 1.0),
    );
    Ok(LampertiTransform {
        sde: sde.clone(),
        anchor: Some(x0),
        kind: Kind::Numeric(q),
        image,
        notes,
    })
}

impl LampertiTransform {
    pub fn sde(&self) -> &ScalarSde {
        &self.sde
    }

    /// Anchor of the numeric transform; `None` for closed forms.
    pub fn anchor(&self) -> Option<f64> {
        self.anchor
    }

    pub fn image(&self) -> (f64, f64) {
        self.image
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self.kind, Kind::Closed(_))
    }

    pub fn q(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Closed(p) => match *p {
                ModelParams::Cir { sigma, .. } => 2.0 * x.sqrt() / sigma,
                ModelParams::WrightFisher { .. } => 2.0 * x.sqrt().asin(),
                ModelParams::OrnsteinUhlenbeck { sigma, .. } => x / sigma,
                ModelParams::AitSahalia { sigma, p, .. } => {
                    if p == 1.0 {
                        x.ln() / sigma
                    } else {
                        x.powf(1.0 - p) / ((1.0 - p) * sigma)
                    }
                }
            },
            Kind::Numeric(q) => q.eval(x),
        }
    }

    pub fn q_inverse(&self, y: f64) -> f64 {
        match &self.kind {
            Kind::Closed(p) => match *p {
                ModelParams::Cir { sigma, .. } => (0.5 * sigma * y).powi(2),
                ModelParams::WrightFisher { .. } => (0.5 * y).sin().powi(2),
                ModelParams::OrnsteinUhlenbeck { sigma, .. } => sigma * y,
                ModelParams::AitSahalia { sigma, p, .. } => {
                    if p == 1.0 {
                        (sigma * y).exp()
                    } else {
                        ((1.0 - p) * sigma * y).powf(1.0 / (1.0 - p))
                    }
                }
            },
            Kind::Numeric(_) => self.numeric_inverse(y),
        }
    }

    /// Monotone bisection on a bracketing interval, polished by Newton steps
    /// with `Q' = 1/b`.
    fn numeric_inverse(&self, y: f64) -> f64 {
        let d = self.sde.domain;
        let x0 = self.anchor.unwrap_or(0.0);
        let q0 = self.q(x0);
        let (mut a, mut b) = if y >= q0 {
            let mut hi = if d.right_finite() { d.right } else { x0 + 1.0 };
            let mut step = 1.0;
            while !d.right_finite() && self.q(hi) < y && step < 1e300 {
                step *= 2.0;
                hi = x0 + step;
            }
            (x0, hi)
        } else {
            let mut lo = if d.left_finite() { d.left } else { x0 - 1.0 };
            let mut step = 1.0;
            while !d.left_finite() && self.q(lo) > y && step < 1e300 {
                step *= 2.0;
                lo = x0 - step;
            }
            (lo, x0)
        };
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m == a || m == b || (b - a) <= 1e-10 * m.abs().max(1e-300) {
                break;
            }
            if self.q(m) < y {
                a = m;
            } else {
                b = m;
            }
        }
        let mut x = 0.5 * (a + b);
        for _ in 0..4 {
            let bx = self.sde.b(x);
            let nx = x - (self.q(x) - y) * bx;
            if !(nx >= a && nx <= b) || !nx.is_finite() {
                break;
            }
            x = nx;
        }
        x
    }

    fn check_image(&self, y: f64) -> Result<(), LampertiError> {
        let (lo, hi) = self.image;
        if y > lo && y < hi {
            Ok(())
        } else {
            Err(LampertiError::OutsideImage { y, lo, hi })
        }
    }

    /// `c(y) = a/b − ½ b'` at `x = Q⁻¹(y)`, in closed form where known.
    pub fn drift(&self, y: f64) -> Result<f64, LampertiError> {
        self.check_image(y)?;
        let v = match &self.kind {
            Kind::Closed(ModelParams::Cir { k, theta, sigma }) => {
                (4.0 * k * theta - sigma * sigma) / (2.0 * sigma * sigma * y) - 0.5 * k * y
            }
            Kind::Closed(ModelParams::WrightFisher { theta1, theta2 }) => {
                let (a1, a2) = (theta1 - 0.25, theta2 - 0.25);
                (a1 - (a1 + a2) * (0.5 * y).sin().powi(2)) / (0.5 * y.sin())
            }
            Kind::Closed(ModelParams::OrnsteinUhlenbeck { lambda, .. }) => -lambda * y,
            _ => return self.drift_from_coefficients(y),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(LampertiError::Singular {
                y,
                x: self.q_inverse(y),
            })
        }
    }

    /// `c(y)` assembled from the original coefficients, for any model.
    pub fn drift_from_coefficients(&self, y: f64) -> Result<f64, LampertiError> {
        self.check_image(y)?;
        let x = self.q_inverse(y);
        let b = self.sde.b_jet(x);
        let v = self.sde.a(x) / b.v - 0.5 * b.d1;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(LampertiError::Singular { y, x })
        }
    }

    /// `c'(y)` by fourth-order central differences. The step shrinks with the
    /// distance to a finite image endpoint.
    pub fn drift_derivative(&self, y: f64, step: f64) -> Result<f64, LampertiError> {
        let (lo, hi) = self.image;
        let dist = (y - lo).abs().min((hi - y).abs());
        let h = step * dist.min(1.0);
        if !(y - 2.0 * h > lo && y + 2.0 * h < hi) || h <= 0.0 {
            return Err(LampertiError::StencilOutside { y });
        }
        let c = |t: f64| self.drift(t);
        Ok((c(y - 2.0 * h)? - 8.0 * c(y - h)? + 8.0 * c(y + h)? - c(y + 2.0 * h)?) / (12.0 * h))
    }
}

/// Default difference step for `c'`.
pub const DRIFT_FD_STEP: f64 = 1e-3;

/// `|c'(Q(x)) + curvature(x)|`.
pub fn dissipativity_residual(t: &LampertiTransform, x: f64, fd_step: f64) -> Result<f64, LampertiError> {
    if !t.sde.domain.contains_interior(x) {
        return Err(LampertiError::NotInterior { x });
    }
    let dc = t.drift_derivative(t.q(x), fd_step)?;
    Ok((dc + t.sde.curvature_at(x)).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipativityEstimate {
    /// `sup c'` over the probes; `−sup` is the one-sided Lipschitz constant.
    pub sup: f64,
    pub at: f64,
}

pub fn dissipativity_estimate(t: &LampertiTransform, probes: &[f64]) -> DissipativityEstimate {
    let mut best = DissipativityEstimate {
        sup: f64::NEG_INFINITY,
        at: f64::NAN,
    };
    for &y in probes {
        if let Ok(d) = t.drift_derivative(y, DRIFT_FD_STEP) {
            if d > best.sup {
                best = DissipativityEstimate { sup: d, at: y };
            }
        }
    }
    best
}

/// `n` probes in the image: Chebyshev points of the curvature search interval
/// mapped through `Q`.
pub fn image_probes(t: &LampertiTransform, n: usize) -> Vec<f64> {
    let (lo, hi) = search_interval(&t.sde);
    chebyshev_points(lo, hi, n).into_iter().map(|x| t.q(x)).collect()
}

/// Audit table `x,q,c,dc,neg_curvature`.
pub fn audit_csv(t: &LampertiTransform, xs: &[f64]) -> String {
    let mut s = String::from("x,q,c,dc,neg_curvature\n");
    for &x in xs {
        let y = t.q(x);
        let c = t.drift(y).unwrap_or(f64::NAN);
        let dc = t.drift_derivative(y, DRIFT_FD_STEP).unwrap_or(f64::NAN);
        s.push_str(&format!(
            "{x:.12e},{y:.12e},{c:.12e},{dc:.12e},{:.12e}\n",
            -t.sde.curvature_at(x)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_model, DomainInterval};

    #[test]
    fn cir_closed_form() {
        let sde = make_model(ModelParams::Cir {
            k: 1.0,
            theta: 1.0,
            sigma: 1.0,
        })
        .unwrap();
        let t = build_transform(&sde, None).unwrap();
        assert_eq!(t.q(1.0), 2.0);
        assert!((t.drift(2.0).unwrap() + 0.25).abs() < 1e-15);
        assert!((t.drift_from_coefficients(2.0).unwrap() + 0.25).abs() < 1e-14);
        assert!(dissipativity_residual(&t, 1.0, DRIFT_FD_STEP).unwrap() < 1e-8);
    }

    #[test]
    fn numeric_transform_matches_closed_form() {
        let mut params = std::collections::BTreeMap::new();
        params.insert("sigma".to_string(), 1.0);
        let sde = ScalarSde::custom(
            "cir-like",
            "1 - x",
            "sigma*sqrt(x)",
            DomainInterval::new(0.0, f64::INFINITY).unwrap(),
            &params,
        )
        .unwrap();
        let t = build_transform(&sde, Some(1.0)).unwrap();
        assert!(!t.is_closed_form());
        for x in [0.01f64, 0.5, 2.0, 9.0] {
            let q = 2.0 * x.sqrt() - 2.0;
            assert!((t.q(x) - q).abs() < 1e-11, "{x}");
            assert!((t.q_inverse(t.q(x)) - x).abs() < 1e-10 * x.max(1.0));
        }
        assert!((t.image().0 + 2.0).abs() < 1e-9);
        assert_eq!(t.image().1, f64::INFINITY);
    }
}
