//! Checks of the structural hypotheses: boundary behaviour, finiteness of the
//! normalization constant, the curvature bound and interior confinement.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{ModelParams, ScalarSde};
use crate::quadrature::QuadConfig;
use crate::search::{chebyshev_points, golden_section};
use crate::stationary::{boundary_flux_zero, build_potential, normalization, Potential, ZEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HypothesisError {
    #[error("curvature needs b(y) > 0, got b({y}) = {b}")]
    DegenerateDiffusion { y: f64, b: f64 },
    #[error("{y} is not an interior point")]
    NotInterior { y: f64 },
    #[error("non-finite {what} at probe {x}")]
    Evaluation { what: &'static str, x: f64 },
}

/// Tolerance for "b vanishes at the endpoint".
pub const BOUNDARY_B_TOL: f64 = 1e-12;
/// Infinite ends of the curvature search stop where the stationary integrand
/// is this small relative to its maximum.
pub const SEARCH_INTEGRAND_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointCheck {
    pub endpoint: f64,
    pub drift: f64,
    pub diffusion: f64,
    /// `a > 0` at a left endpoint, `a < 0` at a right endpoint.
    pub drift_points_inward: Verdict,
    pub diffusion_vanishes: Verdict,
    /// Not applied: the drift is singular at this endpoint.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryReport {
    pub left: Option<EndpointCheck>,
    pub right: Option<EndpointCheck>,
    pub interior_min_b: f64,
    pub interior_positive_b: Verdict,
}

impl BoundaryReport {
    pub fn passed(&self) -> bool {
        let ep = |e: &Option<EndpointCheck>| match e {
            None => true,
            Some(c) => c.skipped || (c.drift_points_inward.passed() && c.diffusion_vanishes.passed()),
        };
        ep(&self.left) && ep(&self.right) && self.interior_positive_b.passed()
    }
}

/// Window used for probes when no stationary information is available:
/// infinite ends are replaced by points 100 units beyond the finite data.
fn probe_window(sde: &ScalarSde) -> (f64, f64) {
    let d = sde.domain;
    match (d.left_finite(), d.right_finite()) {
        (true, true) => (d.left, d.right),
        (true, false) => (d.left, d.left + 100.0),
        (false, true) => (d.right - 100.0, d.right),
        (false, false) => (-100.0, 100.0),
    }
}

/// Boundary clause: drift points inward and diffusion vanishes at every
/// finite endpoint; diffusion is positive at `n_probe` interior Chebyshev
/// points.
pub fn check_boundary_conditions(sde: &ScalarSde, n_probe: usize) -> BoundaryReport {
    let d = sde.domain;
    let check = |e: f64, left: bool| {
        let skipped = sde.interior_singular && !sde.admits(e);
        let a = sde.a(e);
        let b = sde.b(e);
        let inward = if !a.is_finite() {
            Verdict::Indeterminate
        } else {
            Verdict::from_bool(if left { a > 0.0 } else { a < 0.0 })
        };
        let vanishes = if !b.is_finite() {
            Verdict::Indeterminate
        } else {
            Verdict::from_bool(b.abs() <= BOUNDARY_B_TOL)
        };
        EndpointCheck {
            endpoint: e,
            drift: a,
            diffusion: b,
            drift_points_inward: inward,
            diffusion_vanishes: vanishes,
            skipped,
        }
    };
    let (lo, hi) = probe_window(sde);
    let min_b = chebyshev_points(lo, hi, n_probe)
        .into_iter()
        .map(|x| sde.b(x))
        .fold(f64::INFINITY, |m, v| if v.is_nan() { f64::NAN } else { m.min(v) });
    BoundaryReport {
        left: d.left_finite().then(|| check(d.left, true)),
        right: d.right_finite().then(|| check(d.right, false)),
        interior_min_b: min_b,
        interior_positive_b: if min_b.is_nan() {
            Verdict::Indeterminate
        } else {
            Verdict::from_bool(min_b > 0.0)
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisB {
    pub z: ZEstimate,
    /// Decay of `A e^{−ψ}` toward the (left, right) endpoint.
    pub flux_zero: [Verdict; 2],
}

impl HypothesisB {
    pub fn passed(&self) -> bool {
        self.z.finite.passed() && self.flux_zero.iter().all(|v| v.passed())
    }
}

pub fn check_hypothesis_b_with(potential: &Potential, quad: &QuadConfig) -> HypothesisB {
    HypothesisB {
        z: normalization(potential, quad),
        flux_zero: boundary_flux_zero(potential),
    }
}

/// Normalization constant and boundary flux decay. A potential that cannot
/// be built is reported as indeterminate.
pub fn check_hypothesis_b(sde: &ScalarSde, quad: &QuadConfig) -> HypothesisB {
    match build_potential(sde, None) {
        Ok(p) => check_hypothesis_b_with(&p, quad),
        Err(_) => HypothesisB {
            z: ZEstimate {
                value: f64::NAN,
                log_value: f64::NAN,
                finite: Verdict::Indeterminate,
                history: vec![],
            },
            flux_zero: [Verdict::Indeterminate; 2],
        },
    }
}

/// `(1/2) b b'' − a' + a b'/b` at an interior point.
pub fn curvature(sde: &ScalarSde, y: f64) -> Result<f64, HypothesisError> {
    if !sde.domain.contains_interior(y) {
        return Err(HypothesisError::NotInterior { y });
    }
    let b = sde.b(y);
    if !(b.abs() > 0.0) {
        return Err(HypothesisError::DegenerateDiffusion { y, b });
    }
    Ok(sde.curvature_at(y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoSearch {
    pub n_coarse: usize,
    pub n_refine_rounds: usize,
    /// Overrides the search interval; `None` uses the stationary region.
    pub truncation: Option<(f64, f64)>,
}

impl Default for RhoSearch {
    fn default() -> Self {
        RhoSearch {
            n_coarse: 400,
            n_refine_rounds: 3,
            truncation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoEstimate {
    pub value: f64,
    pub location: f64,
    /// The minimum sits on an edge of the search interval.
    pub boundary_attained: bool,
    /// `value ≤ 0`: the curvature bound fails.
    pub failed: bool,
    pub search_interval: (f64, f64),
    pub note: Option<String>,
}

/// Search interval for the curvature infimum: finite endpoints, and for
/// infinite ends the points where `e^{−ψ}` has dropped to
/// `SEARCH_INTEGRAND_RATIO` of its maximum.
pub fn search_interval(sde: &ScalarSde) -> (f64, f64) {
    let d = sde.domain;
    if d.left_finite() && d.right_finite() {
        return (d.left, d.right);
    }
    let Ok(p) = build_potential(sde, None) else {
        return probe_window(sde);
    };
    let target = p.log_weight_max() + SEARCH_INTEGRAND_RATIO.ln();
    let (rlo, rhi) = p.region();
    let m = p.mode();
    let edge = |far: f64| {
        crate::search::bisect(|y| p.log_weight(y) - target, m, far, 1e-12 * far.abs().max(1.0))
            .unwrap_or(far)
    };
    let lo = if d.left_finite() { d.left } else { edge(rlo) };
    let hi = if d.right_finite() { d.right } else { edge(rhi) };
    (lo, hi)
}

/// Infimum of the curvature: Chebyshev scan, bracket rescans and a final
/// golden-section refinement. Finite endpoints are excluded, truncation
/// edges of infinite ends are included.
pub fn estimate_rho(sde: &ScalarSde, search: &RhoSearch) -> RhoEstimate {
    let d = sde.domain;
    let (lo, hi) = search.truncation.unwrap_or_else(|| search_interval(sde));
    let lo_open = d.left_finite() && lo <= d.left;
    let hi_open = d.right_finite() && hi >= d.right;
    let mut probes = chebyshev_points(lo, hi, search.n_coarse.max(8));
    if !lo_open {
        probes.insert(0, lo);
    }
    if !hi_open {
        probes.push(hi);
    }
    let kappa = |y: f64| {
        let v = sde.curvature_at(y);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let values: Vec<f64> = probes.par_iter().map(|&y| kappa(y)).collect();
    let (mut k, mut best) = (0, f64::INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v < best {
            best = v;
            k = i;
        }
    }
    let mut a = probes[k.saturating_sub(1)];
    let mut b = probes[(k + 1).min(probes.len() - 1)];
    let mut loc = probes[k];
    for _ in 0..search.n_refine_rounds {
        let n = 33;
        let pts: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
        let mut j = 0;
        for (i, &y) in pts.iter().enumerate() {
            if (lo_open && y <= lo) || (hi_open && y >= hi) {
                continue;
            }
            let v = kappa(y);
            if v < best {
                best = v;
                loc = y;
                j = i;
            } else if y == loc {
                j = i;
            }
        }
        let step = (b - a) / (n - 1) as f64;
        let (na, nb) = (pts[j] - step, pts[j] + step);
        a = na.max(lo);
        b = nb.min(hi);
    }
    let (ga, gb) = (a.max(lo), b.min(hi));
    if gb > ga {
        let (y, v) = golden_section(kappa, ga, gb, 1e-12);
        let inside = !((lo_open && y <= lo) || (hi_open && y >= hi));
        if v < best && inside {
            best = v;
            loc = y;
        }
    }
    let width = hi - lo;
    let at_lo = (loc - lo).abs() <= 1e-9 * width.max(1.0) || (lo_open && k == 0);
    let at_hi = (hi - loc).abs() <= 1e-9 * width.max(1.0) || (hi_open && k == probes.len() - 1);
    let boundary_attained = at_lo || at_hi;
    let note = if boundary_attained {
        let infinite_side = (at_hi && !d.right_finite()) || (at_lo && !d.left_finite());
        Some(if infinite_side {
            format!(
                "boundary minimum at truncation edge {loc}; the infimum may be attained at infinity and {best} is an upper bound"
            )
        } else {
            format!("minimum approached at the endpoint near {loc}; the infimum is a limit there")
        })
    } else {
        None
    };
    RhoEstimate {
        value: best,
        location: loc,
        boundary_attained,
        failed: !(best > 0.0),
        search_interval: (lo, hi),
        note,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfinementClass {
    ConstantPositive,
    PositiveNonConstant,
    NotPositive,
}

impl ConfinementClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ConfinementClass::ConstantPositive => "constant positive",
            ConfinementClass::PositiveNonConstant => "positive but non-constant",
            ConfinementClass::NotPositive => "not positive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InternalCondition {
    pub min: f64,
    pub max: f64,
    pub class: ConfinementClass,
}

/// `c(x) = −a'(x) + b''(x) b(x) + b'(x)²` over interior Chebyshev probes.
/// Only a constant positive `c` matches the confinement theorem; a positive
/// non-constant `c` is reported as such.
pub fn internal_condition(sde: &ScalarSde, n_probe: usize) -> Result<InternalCondition, HypothesisError> {
    let (lo, hi) = probe_window(sde);
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for x in chebyshev_points(lo, hi, n_probe) {
        let a = sde.a_jet(x);
        let b = sde.b_jet(x);
        let c = -a.d1 + b.d2 * b.v + b.d1 * b.d1;
        if !c.is_finite() {
            return Err(HypothesisError::Evaluation {
                what: "confinement function",
                x,
            });
        }
        min = min.min(c);
        max = max.max(c);
    }
    let class = if min <= 0.0 {
        ConfinementClass::NotPositive
    } else if max - min < 1e-10 {
        ConfinementClass::ConstantPositive
    } else {
        ConfinementClass::PositiveNonConstant
    };
    Ok(InternalCondition { min, max, class })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseNote {
    pub case: u8,
    pub applies: bool,
    pub condition: String,
    /// `None` when the case does not apply or the condition is undefined.
    pub holds: Option<bool>,
}

/// The three sufficient conditions for a positive curvature bound of the
/// Ait-Sahalia model (by diffusion exponent `p < 1`, `p > 1`, `p = 1`).
/// Advisory only: the rate itself comes from [`estimate_rho`].
pub fn ait_sahalia_cases(params: &ModelParams) -> Vec<CaseNote> {
    let ModelParams::AitSahalia {
        k,
        theta,
        alpha,
        sigma,
        r,
        p,
        ..
    } = *params
    else {
        return vec![];
    };
    let mut out = Vec::new();
    let c1 = (0.5..1.0).contains(&p);
    let (cond1, holds1) = if c1 && p > 0.5 {
        let y1 = (k * theta / (p * (1.0 - p) * sigma * sigma)).powf(1.0 / (2.0 * p - 1.0));
        let bound = theta * (2.0 * p - 1.0) / (2.0 * (1.0 - p));
        (format!("y1 = {y1:.6} > θ(2p−1)/(2(1−p)) = {bound:.6}"), Some(y1 > bound))
    } else if c1 {
        ("y1 undefined at p = 1/2".to_string(), None)
    } else {
        ("requires 1/2 ≤ p < 1".to_string(), None)
    };
    out.push(CaseNote {
        case: 1,
        applies: c1,
        condition: cond1,
        holds: holds1,
    });
    let c2 = p > 1.0;
    let (cond2, holds2) = if c2 {
        let y2 = (k * theta / (p * (p - 1.0) * sigma * sigma)).powf(1.0 / (2.0 * p - 1.0));
        let bound = theta * (2.0 * p - 1.0) / (2.0 * (p - 1.0));
        (format!("y2 = {y2:.6} < θ(2p−1)/(2(p−1)) = {bound:.6}"), Some(y2 < bound))
    } else {
        ("requires p > 1".to_string(), None)
    };
    out.push(CaseNote {
        case: 2,
        applies: c2,
        condition: cond2,
        holds: holds2,
    });
    let c3 = p == 1.0;
    let y3 = (k * theta / (alpha * (r - 1.0).powi(2))).powf(1.0 / r);
    out.push(CaseNote {
        case: 3,
        applies: c3,
        condition: if c3 {
            format!("y3 = {y3:.6}; q(y3) > 0 always")
        } else {
            "requires p = 1".to_string()
        },
        holds: c3.then_some(true),
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckConfig {
    pub n_probe: usize,
    pub quad: QuadConfig,
    pub rho: RhoSearch,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            n_probe: 200,
            quad: QuadConfig::default(),
            rho: RhoSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub model: String,
    pub boundary: BoundaryReport,
    pub hypothesis_b: HypothesisB,
    pub rho: Option<RhoEstimate>,
    pub internal: Option<InternalCondition>,
    pub cases: Vec<CaseNote>,
    pub notes: Vec<String>,
}

/// Runs every check. The curvature estimate is attempted only when the
/// boundary clause and the normalization both pass, or when the model is
/// flagged as singular at an endpoint.
pub fn check_all(sde: &ScalarSde, cfg: &CheckConfig) -> HypothesisReport {
    let boundary = check_boundary_conditions(sde, cfg.n_probe);
    let hb = check_hypothesis_b(sde, &cfg.quad);
    let mut notes = Vec::new();
    if sde.interior_singular {
        notes.push("drift singular at a finite endpoint; boundary clause not applied there".into());
    }
    let eligible = (boundary.passed() && hb.z.finite.passed()) || sde.interior_singular;
    let rho = if eligible {
        Some(estimate_rho(sde, &cfg.rho))
    } else {
        notes.push("curvature bound not estimated: preceding checks failed".into());
        None
    };
    if let Some(n) = rho.as_ref().and_then(|r| r.note.clone()) {
        notes.push(n);
    }
    let internal = match internal_condition(sde, cfg.n_probe) {
        Ok(c) => Some(c),
        Err(e) => {
            notes.push(format!("confinement function: {e}"));
            None
        }
    };
    let cases = sde.params.as_ref().map(ait_sahalia_cases).unwrap_or_default();
    HypothesisReport {
        model: sde.name.clone(),
        boundary,
        hypothesis_b: hb,
        rho,
        internal,
        cases,
        notes,
    }
}

impl HypothesisReport {
    /// Every hypothesis holds and the curvature bound is positive.
    pub fn passed(&self) -> bool {
        let boundary_ok = self.boundary.passed() || self.cases.iter().any(|c| c.applies);
        boundary_ok
            && self.hypothesis_b.passed()
            && self.rho.as_ref().is_some_and(|r| !r.failed)
    }

    /// Flat `key = value` block.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(s, "{k} = {v}");
        }
        for c in &self.cases {
            let holds = c.holds.map_or("n/a".to_string(), |h| h.to_string());
            let _ = writeln!(
                s,
                "case{} = applies: {}; {}; holds: {}",
                c.case, c.applies, c.condition, holds
            );
        }
        for n in &self.notes {
            let _ = writeln!(s, "note = {n}");
        }
        s
    }

    pub fn csv_header(&self) -> String {
        self.fields().iter().map(|(k, _)| *k).collect::<Vec<_>>().join(",")
    }

    pub fn csv_row(&self) -> String {
        self.fields()
            .iter()
            .map(|(_, v)| {
                if v.contains(',') {
                    format!("\"{v}\"")
                } else {
                    v.clone()
                }
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        let ep = |e: &Option<EndpointCheck>| match e {
            None => "n/a".to_string(),
            Some(c) if c.skipped => "skipped".to_string(),
            Some(c) => {
                if c.drift_points_inward.passed() && c.diffusion_vanishes.passed() {
                    "pass".to_string()
                } else if c.drift_points_inward == Verdict::Indeterminate
                    || c.diffusion_vanishes == Verdict::Indeterminate
                {
                    "indeterminate".to_string()
                } else {
                    "fail".to_string()
                }
            }
        };
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x}"));
        vec![
            ("model", self.model.clone()),
            ("boundary_left", ep(&self.boundary.left)),
            ("boundary_right", ep(&self.boundary.right)),
            ("interior_positive_b", self.boundary.interior_positive_b.to_string()),
            ("z_estimate", format!("{}", self.hypothesis_b.z.value)),
            ("z_finite", self.hypothesis_b.z.finite.to_string()),
            ("flux_zero_left", self.hypothesis_b.flux_zero[0].to_string()),
            ("flux_zero_right", self.hypothesis_b.flux_zero[1].to_string()),
            ("rho_estimate", opt(self.rho.as_ref().map(|r| r.value))),
            ("rho_argmin", opt(self.rho.as_ref().map(|r| r.location))),
            (
                "rho_boundary_attained",
                self.rho
                    .as_ref()
                    .map_or("n/a".to_string(), |r| r.boundary_attained.to_string()),
            ),
            ("internal_c_min", opt(self.internal.as_ref().map(|c| c.min))),
            ("internal_c_max", opt(self.internal.as_ref().map(|c| c.max))),
            (
                "internal_class",
                self.internal
                    .as_ref()
                    .map_or("n/a".to_string(), |c| c.class.as_str().to_string()),
            ),
            ("passed", self.passed().to_string()),
        ]
    }
}
