//! Potential, normalization constant and Gibbs stationary density.
//!
//! With `A = b²/2` and `G` an antiderivative of `a/A`, the potential is
//! `ψ = log A − G` and the stationary density is `u∞ = e^{−ψ}/Z`. All
//! evaluation happens in log space: `log u∞ = G − log A − log Z`.

use std::sync::Arc;

use thiserror::Error;

use crate::functionals::TestFunction;
use crate::grid::{DensityField, Grid, GridError};
use crate::hypotheses::Verdict;
use crate::model::ScalarSde;
use crate::quadrature::{integrate, layout_nodes, Antiderivative, Integrand, QuadConfig};
use crate::search::bisect;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StationaryError {
    #[error("anchor {0} is not an interior point with positive diffusion")]
    BadAnchor(f64),
    #[error("potential cannot be evaluated at {0} (non-integrable singularity on the way)")]
    Unevaluable(f64),
    #[error("normalization constant is infinite")]
    ZInfinite,
    #[error("normalization constant is indeterminate (quadrature did not converge)")]
    ZIndeterminate,
    #[error("integral of `{0}` diverges or failed to converge")]
    Divergent(String),
    #[error("tail truncation search failed")]
    Truncation,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Number of uniform cache nodes for `G`.
const CACHE_NODES: usize = 1024;
/// Region of interest ends where the log-integrand drops this far below its
/// maximum.
const REGION_LOG_DROP: f64 = 60.0;

/// The pair `(G, ψ)` for a model, anchored so that `G(anchor) = 0`.
#[derive(Debug, Clone)]
pub struct Potential {
    sde: ScalarSde,
    anchor: f64,
    g: Arc<Antiderivative>,
    region: (f64, f64),
    mode: f64,
    log_weight_max: f64,
    decay_found: [bool; 2],
}

fn drift_over_a(sde: &ScalarSde) -> Integrand {
    let sde = sde.clone();
    Arc::new(move |y| {
        let b = sde.b(y);
        2.0 * sde.a(y) / (b * b)
    })
}

fn default_anchor(sde: &ScalarSde) -> f64 {
    let d = sde.domain;
    match (d.left_finite(), d.right_finite()) {
        (true, true) => 0.5 * (d.left + d.right),
        (true, false) => d.left + 1.0,
        (false, true) => d.right - 1.0,
        (false, false) => 0.0,
    }
}

/// Walks outward from `y0` with doubling steps, accumulating `G`, until the
/// log-integrand has dropped `REGION_LOG_DROP` below the running maximum.
/// Returns `(end, decay_found)`.
fn scan_side(sde: &ScalarSde, f: &Integrand, y0: f64, dir: f64) -> (f64, bool) {
    let cfg = crate::quadrature::ANTIDERIVATIVE_QUAD;
    let lw = |y: f64, g: f64| g - (0.5 * sde.b(y).powi(2)).ln();
    let step0 = 1e-2 * y0.abs().max(1.0);
    let mut y_prev = y0;
    let mut g_prev = 0.0;
    let mut lw_prev = lw(y0, 0.0);
    let mut best = lw_prev;
    for j in 0..110 {
        let y = y0 + dir * step0 * 2f64.powi(j);
        let g = g_prev + integrate(|t| f(t), y_prev, y, &cfg).value;
        let l = lw(y, g);
        if !l.is_finite() {
            return (y_prev, l == f64::NEG_INFINITY);
        }
        best = best.max(l);
        if l < best - REGION_LOG_DROP && l < lw_prev {
            let target = best - REGION_LOG_DROP;
            let (yp, gp) = (y_prev, g_prev);
            let end = bisect(
                |m| lw(m, gp + integrate(|t| f(t), yp, m, &cfg).value) - target,
                yp,
                y,
                1e-12 * y.abs().max(1.0),
            )
            .unwrap_or(y);
            return (end, true);
        }
        y_prev = y;
        g_prev = g;
        lw_prev = l;
    }
    (y_prev, false)
}

/// Builds `G` and `ψ`. With `anchor = None` the anchor is the mode of
/// `e^{−ψ}` found on the cache nodes.
pub fn build_potential(sde: &ScalarSde, anchor: Option<f64>) -> Result<Potential, StationaryError> {
    let d = sde.domain;
    let y0 = anchor.unwrap_or_else(|| default_anchor(sde));
    if !d.contains_interior(y0) || !(sde.b(y0) > 0.0) || !sde.a(y0).is_finite() {
        return Err(StationaryError::BadAnchor(y0));
    }
    let f = drift_over_a(sde);
    let (lo, lo_decay) = if d.left_finite() {
        (d.left, true)
    } else {
        scan_side(sde, &f, y0, -1.0)
    };
    let (hi, hi_decay) = if d.right_finite() {
        (d.right, true)
    } else {
        scan_side(sde, &f, y0, 1.0)
    };
    let nodes = layout_nodes(lo, hi, CACHE_NODES, d.left_finite(), d.right_finite());
    let mut g = Antiderivative::build(f, y0, nodes);

    let log_a = |y: f64| (0.5 * sde.b(y).powi(2)).ln();
    let (mut mode, mut best) = (y0, -log_a(y0));
    for (&y, &gv) in g.nodes().iter().zip(g.node_values()) {
        let l = gv - log_a(y);
        if l > best {
            best = l;
            mode = y;
        }
    }
    let anchor = match anchor {
        Some(a) => a,
        None => {
            let shift = g.eval(mode);
            g.shift(shift);
            best -= shift;
            mode
        }
    };
    Ok(Potential {
        sde: sde.clone(),
        anchor,
        g: Arc::new(g),
        region: (lo, hi),
        mode,
        log_weight_max: best,
        decay_found: [lo_decay, hi_decay],
    })
}

impl Potential {
    pub fn sde(&self) -> &ScalarSde {
        &self.sde
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    /// Maximizer of `e^{−ψ}` on the cache nodes.
    pub fn mode(&self) -> f64 {
        self.mode
    }

    /// Interval carrying essentially all stationary mass: finite endpoints,
    /// or points where `e^{−ψ}` has fallen `e^{60}` below its maximum.
    pub fn region(&self) -> (f64, f64) {
        self.region
    }

    /// Whether the outward scan found decay on the (left, right) side.
    pub fn decay_found(&self) -> [bool; 2] {
        self.decay_found
    }

    pub fn log_weight_max(&self) -> f64 {
        self.log_weight_max
    }

    pub fn big_a(&self, y: f64) -> f64 {
        0.5 * self.sde.b(y).powi(2)
    }

    /// `G(y)`; NaN where it cannot be evaluated.
    pub fn g(&self, y: f64) -> f64 {
        self.g.eval(y)
    }

    pub fn try_g(&self, y: f64) -> Result<f64, StationaryError> {
        let v = self.g(y);
        if self.sde.domain.contains(y) && !v.is_nan() {
            Ok(v)
        } else {
            Err(StationaryError::Unevaluable(y))
        }
    }

    /// `ψ(y) = log A(y) − G(y)`.
    pub fn psi(&self, y: f64) -> f64 {
        self.big_a(y).ln() - self.g(y)
    }

    /// `log e^{−ψ(y)} = G(y) − log A(y)`.
    pub fn log_weight(&self, y: f64) -> f64 {
        self.g(y) - self.big_a(y).ln()
    }

    /// `ψ' = A'/A − a/A`, from the coefficient derivatives.
    pub fn psi_prime(&self, y: f64) -> f64 {
        let a = self.sde.a(y);
        let big_a = self.sde.big_a_jet(y);
        big_a.d1 / big_a.v - a / big_a.v
    }

    /// Backward generator `L*h = A h'' + A' h' − ψ' A h'`.
    pub fn backward_generator(&self, h: &TestFunction, y: f64) -> f64 {
        let hj = h.jet(y);
        let big_a = self.sde.big_a_jet(y);
        big_a.v * hj.d2 + big_a.d1 * hj.d1 - self.psi_prime(y) * big_a.v * hj.d1
    }
}

/// Result of the normalization search.
#[derive(Debug, Clone, PartialEq)]
pub struct ZEstimate {
    /// `∫ e^{−ψ}` in the anchor's convention; `inf` when divergent.
    pub value: f64,
    pub log_value: f64,
    pub finite: Verdict,
    /// Successive estimates while the integration range was enlarged.
    pub history: Vec<f64>,
}

struct Side {
    finite: bool,
    end: f64,
    cut: f64,
    prev_inc: Vec<f64>,
    settled: bool,
}

/// Integrates `e^{−ψ}` over ranges that grow toward each endpoint (toward a
/// finite endpoint by factors of 100 in distance, toward infinity by
/// doubling) until the added mass is below `quad.rel_tol` of the total.
pub fn normalization(potential: &Potential, quad: &QuadConfig) -> ZEstimate {
    let m = potential.mode;
    let lmax = potential.log_weight_max;
    let w = |y: f64| {
        let l = potential.log_weight(y) - lmax;
        if l == f64::NEG_INFINITY {
            0.0
        } else {
            l.exp()
        }
    };
    let (rlo, rhi) = potential.region;
    let d = potential.sde.domain;
    let mut sides = [
        Side {
            finite: d.left_finite(),
            end: d.left,
            cut: if d.left_finite() { d.left + (m - d.left) * 1e-2 } else { rlo },
            prev_inc: vec![],
            settled: false,
        },
        Side {
            finite: d.right_finite(),
            end: d.right,
            cut: if d.right_finite() { d.right - (d.right - m) * 1e-2 } else { rhi },
            prev_inc: vec![],
            settled: false,
        },
    ];
    let indeterminate = |history: Vec<f64>| ZEstimate {
        value: f64::NAN,
        log_value: f64::NAN,
        finite: Verdict::Indeterminate,
        history,
    };
    let quad_big = QuadConfig {
        max_intervals: quad.max_intervals.max(4000),
        ..*quad
    };
    let r1 = integrate(w, sides[0].cut, m, &quad_big);
    let r2 = integrate(w, m, sides[1].cut, &quad_big);
    let mut z = r1.value + r2.value;
    let mut history = vec![z];
    if !(r1.converged && r2.converged) || !z.is_finite() {
        return indeterminate(history);
    }
    for round in 0..64 {
        let mut any = false;
        for (k, s) in sides.iter_mut().enumerate() {
            if s.settled {
                continue;
            }
            let dir = if k == 0 { -1.0 } else { 1.0 };
            let next = if s.finite {
                if round >= 7 {
                    continue;
                }
                s.end - dir * (s.end - s.cut).abs() * 1e-2
            } else {
                m + (s.cut - m) * 2.0
            };
            if next == s.cut || next == s.end {
                continue;
            }
            any = true;
            let r = integrate(w, next.min(s.cut), next.max(s.cut), &quad_big);
            if r.value == f64::INFINITY {
                return ZEstimate {
                    value: f64::INFINITY,
                    log_value: f64::INFINITY,
                    finite: Verdict::Fail,
                    history,
                };
            }
            if !r.value.is_finite() || !r.converged {
                return indeterminate(history);
            }
            s.cut = next;
            z += r.value;
            let inc = r.value;
            if inc <= quad.rel_tol * z {
                s.settled = true;
            } else if s.finite && s.prev_inc.len() >= 2 {
                let n = s.prev_inc.len();
                let geometric = inc <= 0.25 * s.prev_inc[n - 1]
                    && s.prev_inc[n - 1] <= 0.25 * s.prev_inc[n - 2];
                if geometric {
                    // clearly convergent: take the remaining sliver in one go
                    let rest = integrate(w, s.end.min(s.cut), s.end.max(s.cut), &quad_big);
                    if rest.converged && rest.value.is_finite() {
                        z += rest.value;
                        s.settled = true;
                    }
                }
            }
            s.prev_inc.push(inc);
        }
        history.push(z);
        if sides.iter().all(|s| s.settled) || !any {
            break;
        }
    }
    if sides.iter().all(|s| s.settled) {
        ZEstimate {
            value: (z.ln() + lmax).exp(),
            log_value: z.ln() + lmax,
            finite: Verdict::Pass,
            history,
        }
    } else {
        ZEstimate {
            value: f64::INFINITY,
            log_value: f64::INFINITY,
            finite: Verdict::Fail,
            history,
        }
    }
}

/// Checks that `e^{G}` (the boundary flux weight `A e^{−ψ}`) decays toward
/// each endpoint, returning one verdict per side (left, right).
pub fn boundary_flux_zero(potential: &Potential) -> [Verdict; 2] {
    let m = potential.mode;
    let g_ref = potential.g(m);
    let d = potential.sde.domain;
    let (rlo, rhi) = potential.region;
    let side = |finite: bool, end: f64, region_end: f64| {
        let span = (region_end - m).abs().max(1.0);
        let pts: Vec<f64> = (1..=50)
            .map(|j| {
                if finite {
                    end - (end - m) * 0.5f64.powi(j)
                } else {
                    m + (region_end - m).signum() * span * 2f64.powi(j)
                }
            })
            .collect();
        let vals: Vec<f64> = pts.iter().map(|&y| potential.g(y) - g_ref).collect();
        if vals.iter().any(|v| v.is_nan()) {
            return Verdict::Indeterminate;
        }
        let tail = &vals[vals.len() - 10..];
        let monotone = tail.windows(2).all(|p| p[1] <= p[0] + 1e-12);
        if monotone && *tail.last().expect("non-empty") < 1e-10f64.ln() {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };
    [
        side(d.left_finite(), d.left, rlo),
        side(d.right_finite(), d.right, rhi),
    ]
}

/// Normalized stationary density with its first two moments.
#[derive(Debug, Clone)]
pub struct GibbsDensity {
    potential: Potential,
    z: ZEstimate,
    mean: f64,
    variance: f64,
    quad: QuadConfig,
}

/// Builds the potential with the default anchor and normalizes it.
pub fn stationary_density(sde: &ScalarSde, quad: &QuadConfig) -> Result<GibbsDensity, StationaryError> {
    let potential = build_potential(sde, None)?;
    GibbsDensity::new(potential, quad)
}

impl GibbsDensity {
    pub fn new(potential: Potential, quad: &QuadConfig) -> Result<GibbsDensity, StationaryError> {
        let z = normalization(&potential, quad);
        match z.finite {
            Verdict::Pass => {}
            Verdict::Fail => return Err(StationaryError::ZInfinite),
            Verdict::Indeterminate => return Err(StationaryError::ZIndeterminate),
        }
        let mut g = GibbsDensity {
            potential,
            z,
            mean: f64::NAN,
            variance: f64::NAN,
            quad: *quad,
        };
        g.mean = g.expectation("y", |y| y)?;
        let mean = g.mean;
        g.variance = g.expectation("(y - mean)²", |y| (y - mean).powi(2))?;
        Ok(g)
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// Normalization constant `Z` in the potential's anchor convention.
    pub fn z(&self) -> f64 {
        self.z.value
    }

    pub fn z_estimate(&self) -> &ZEstimate {
        &self.z
    }

    pub fn log_z(&self) -> f64 {
        self.z.log_value
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn log_density(&self, y: f64) -> f64 {
        self.potential.log_weight(y) - self.z.log_value
    }

    /// `u∞(y)`; zero outside the domain.
    pub fn density(&self, y: f64) -> f64 {
        if !self.potential.sde.domain.contains(y) {
            return 0.0;
        }
        let l = self.log_density(y);
        if l == f64::NEG_INFINITY {
            0.0
        } else {
            l.exp()
        }
    }

    /// `∫ h u∞` over the stationary region, split at the mode.
    pub fn expectation<H: Fn(f64) -> f64>(&self, label: &str, h: H) -> Result<f64, StationaryError> {
        let (lo, hi) = self.potential.region;
        let m = self.potential.mode;
        let cfg = QuadConfig {
            max_intervals: self.quad.max_intervals.max(4000),
            ..self.quad
        };
        let f = |y: f64| {
            let u = self.density(y);
            if u == 0.0 {
                0.0
            } else {
                h(y) * u
            }
        };
        let r1 = integrate(f, lo, m, &cfg);
        let r2 = integrate(f, m, hi, &cfg);
        let v = r1.value + r2.value;
        if !(r1.converged && r2.converged) || !v.is_finite() {
            return Err(StationaryError::Divergent(label.to_string()));
        }
        Ok(v)
    }

    /// Stationary mass outside `[lo, hi]` for a finite window inside the
    /// region; used by the tail truncation.
    fn mass_between(&self, a: f64, b: f64) -> f64 {
        let cfg = QuadConfig {
            max_intervals: 4000,
            ..self.quad
        };
        integrate(|y| self.density(y), a, b, &cfg).value
    }

    /// Truncation points for infinite ends: each infinite tail keeps mass
    /// `eps / (number of infinite ends)`. Finite ends are returned as is.
    pub fn tail_truncation(&self, eps: f64) -> Result<(f64, f64), StationaryError> {
        let d = self.potential.sde.domain;
        let n_inf = (!d.left_finite()) as i32 + (!d.right_finite()) as i32;
        let eps_side = eps / n_inf.max(1) as f64;
        let m = self.potential.mode;
        let (rlo, rhi) = self.potential.region;
        let cut = |far: f64| -> Result<f64, StationaryError> {
            let tail = |t: f64| {
                let (a, b) = if t < far { (t, far) } else { (far, t) };
                self.mass_between(a, b)
            };
            if tail(m) <= eps_side {
                return Ok(m);
            }
            bisect(
                |t| tail(t).max(1e-300).ln() - eps_side.ln(),
                m,
                far,
                1e-12 * far.abs().max(1.0),
            )
            .ok_or(StationaryError::Truncation)
        };
        let lo = if d.left_finite() { d.left } else { cut(rlo)? };
        let hi = if d.right_finite() { d.right } else { cut(rhi)? };
        Ok((lo, hi))
    }

    /// Point samples of `u∞` at the cell centers, normalized to unit discrete
    /// mass.
    pub fn on_grid(&self, grid: Arc<Grid>) -> Result<DensityField, StationaryError> {
        let lz = self.z.log_value;
        Ok(DensityField::from_fn(grid, |y| {
            (self.potential.log_weight(y) - lz).exp()
        })?)
    }
}

/// Largest probability flux `|−a u + ½ (b² u)'|` over interior cell centers,
/// with the derivative from second-order differences on the (possibly
/// non-uniform) centers.
pub fn stationarity_residual(sde: &ScalarSde, u: &DensityField) -> f64 {
    let grid = u.grid();
    let y = grid.centers();
    let v = u.values();
    let g: Vec<f64> = y.iter().zip(v).map(|(&yi, &ui)| sde.b(yi).powi(2) * ui).collect();
    let mut worst = 0.0f64;
    for i in 1..y.len() - 1 {
        let h1 = y[i] - y[i - 1];
        let h2 = y[i + 1] - y[i];
        let dg = -h2 / (h1 * (h1 + h2)) * g[i - 1]
            + (h2 - h1) / (h1 * h2) * g[i]
            + h1 / (h2 * (h1 + h2)) * g[i + 1];
        let flux = -sde.a(y[i]) * v[i] + 0.5 * dg;
        worst = worst.max(flux.abs());
    }
    worst
}

/// `|∫ f L*g dμ∞ − ∫ g L*f dμ∞|`.
pub fn reversibility_residual(
    gibbs: &GibbsDensity,
    f: &TestFunction,
    g: &TestFunction,
) -> Result<f64, StationaryError> {
    let p = gibbs.potential();
    let i1 = gibbs.expectation(&format!("f L*g ({}, {})", f.label, g.label), |y| {
        f.value(y) * p.backward_generator(g, y)
    })?;
    let i2 = gibbs.expectation(&format!("g L*f ({}, {})", f.label, g.label), |y| {
        g.value(y) * p.backward_generator(f, y)
    })?;
    Ok((i1 - i2).abs())
}
