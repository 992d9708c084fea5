//! Scalar SDEs `dX = a(X) dt + b(X) dW` on an interval.
//!
//! Coefficients are expression trees evaluated either in plain `f64` or on
//! second-order [`Jet`]s, so drift and diffusion derivatives up to order two
//! are available everywhere without finite differencing. The built-in
//! models are defined through the same expression machinery.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::config::{ConfigError, KeyValueFile};
use crate::expr::{Expr, ParseError};
use crate::jet::Jet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter constraint violated: {0}")]
    Constraint(String),
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("{which}: {source}")]
    Parse {
        which: &'static str,
        #[source]
        source: ParseError,
    },
    #[error("clamped extension needs finite coefficient values at {endpoint}")]
    NonFiniteBoundary { endpoint: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("x = {x} lies outside the domain {domain}")]
    OutsideDomain { x: f64, domain: DomainInterval },
    #[error("non-finite {what} at x = {x} (derivative order {order})")]
    NonFinite {
        what: &'static str,
        x: f64,
        order: usize,
    },
    #[error("derivative order {0} is not available (max 2)")]
    Order(usize),
}

/// An interval `[left, right]` of the real line; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainInterval {
    pub left: f64,
    pub right: f64,
}

impl DomainInterval {
    pub fn new(left: f64, right: f64) -> Result<Self, ModelError> {
        if left.is_nan() || right.is_nan() || left >= right {
            return Err(ModelError::Domain(format!(
                "need left < right, got [{left}, {right}]"
            )));
        }
        if left == f64::INFINITY || right == f64::NEG_INFINITY {
            return Err(ModelError::Domain(format!(
                "endpoints point the wrong way: [{left}, {right}]"
            )));
        }
        Ok(DomainInterval { left, right })
    }

    pub fn real_line() -> Self {
        DomainInterval {
            left: f64::NEG_INFINITY,
            right: f64::INFINITY,
        }
    }

    pub fn left_finite(&self) -> bool {
        self.left.is_finite()
    }

    pub fn right_finite(&self) -> bool {
        self.right.is_finite()
    }

    /// Finite endpoints, left first.
    pub fn finite_endpoints(&self) -> Vec<f64> {
        [self.left, self.right]
            .into_iter()
            .filter(|e| e.is_finite())
            .collect()
    }

    /// True for `x` in the closed interval (finite endpoints included).
    pub fn contains(&self, x: f64) -> bool {
        x.is_finite() && x >= self.left && x <= self.right
    }

    pub fn contains_interior(&self, x: f64) -> bool {
        x.is_finite() && x > self.left && x < self.right
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn project(&self, x: f64) -> f64 {
        x.clamp(self.left, self.right)
    }
}

impl fmt::Display for DomainInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.left_finite() { "[" } else { "(" };
        let r = if self.right_finite() { "]" } else { ")" };
        write!(f, "{l}{}, {}{r}", self.left, self.right)
    }
}

#[derive(Debug)]
enum Repr {
    Expr(Expr),
    /// Inner coefficient inside `[lo, hi]`, frozen at the boundary value
    /// outside it.
    Clamped {
        inner: CoefficientFn,
        lo: f64,
        hi: f64,
    },
}

/// A coefficient function with derivative access up to order two.
///
/// Cheap to clone; the definition is shared.
#[derive(Debug, Clone)]
pub struct CoefficientFn {
    repr: Arc<Repr>,
}

impl CoefficientFn {
    pub fn parse(text: &str, params: &BTreeMap<String, f64>) -> Result<Self, ParseError> {
        Ok(Self::from_expr(Expr::parse(text, params)?))
    }

    pub fn from_expr(expr: Expr) -> Self {
        CoefficientFn {
            repr: Arc::new(Repr::Expr(expr)),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::parse(&format!("{c:e}"), &BTreeMap::new()).expect("literal parses")
    }

    /// Source text for parsed coefficients.
    pub fn source(&self) -> Option<&str> {
        match &*self.repr {
            Repr::Expr(e) => Some(e.source()),
            Repr::Clamped { inner, .. } => inner.source(),
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match &*self.repr {
            Repr::Expr(e) => e.eval(x),
            Repr::Clamped { inner, lo, hi } => inner.value(x.clamp(*lo, *hi)),
        }
    }

    #[inline]
    pub fn jet(&self, x: f64) -> Jet {
        match &*self.repr {
            Repr::Expr(e) => e.eval_jet(x),
            Repr::Clamped { inner, lo, hi } => {
                if x < *lo {
                    Jet::constant(inner.value(*lo))
                } else if x > *hi {
                    Jet::constant(inner.value(*hi))
                } else {
                    inner.jet(x)
                }
            }
        }
    }

    /// Value of the `order`-th derivative; non-finite results are errors.
    pub fn eval(&self, x: f64, order: usize) -> Result<f64, EvalError> {
        let v = match order {
            0 => self.value(x),
            1 | 2 => self.jet(x).order(order),
            o => return Err(EvalError::Order(o)),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite {
                what: "coefficient",
                x,
                order,
            })
        }
    }
}

/// Parameters of the built-in models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelParams {
    /// `dX = k(θ - X) dt + σ √X dW` on `[0, ∞)`.
    Cir { k: f64, theta: f64, sigma: f64 },
    /// `dX = [θ₁ - (θ₁ + θ₂) X] dt + √(X(1 - X)) dW` on `[0, 1]`.
    WrightFisher { theta1: f64, theta2: f64 },
    /// `dX = [k(θ - X) - α X^r + β/X] dt + σ X^p dW` on `(0, ∞)`.
    AitSahalia {
        k: f64,
        theta: f64,
        alpha: f64,
        beta: f64,
        sigma: f64,
        r: f64,
        p: f64,
    },
    /// `dX = -λ X dt + σ dW` on the real line.
    OrnsteinUhlenbeck { lambda: f64, sigma: f64 },
}

fn positive(name: &str, v: f64) -> Result<(), ModelError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::Constraint(format!(
            "{name} > 0 violated ({name} = {v})"
        )))
    }
}

impl ModelParams {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelParams::Cir { .. } => "cir",
            ModelParams::WrightFisher { .. } => "wright_fisher",
            ModelParams::AitSahalia { .. } => "ait_sahalia",
            ModelParams::OrnsteinUhlenbeck { .. } => "ou",
        }
    }

    /// Parameter names expected for a built-in kind.
    pub fn names(kind: &str) -> Option<&'static [&'static str]> {
        Some(match kind {
            "cir" => &["k", "theta", "sigma"],
            "wright_fisher" => &["theta1", "theta2"],
            "ait_sahalia" => &["k", "theta", "alpha", "beta", "sigma", "r", "p"],
            "ou" => &["lambda", "sigma"],
            _ => return None,
        })
    }

    /// Builds parameters for `kind` from a name → value map; every expected
    /// name must be present and no other names are accepted.
    pub fn from_map(kind: &str, map: &BTreeMap<String, f64>) -> Result<Self, ModelError> {
        let names = Self::names(kind)
            .ok_or_else(|| ModelError::Constraint(format!("unknown built-in model `{kind}`")))?;
        for key in map.keys() {
            if !names.contains(&key.as_str()) {
                return Err(ModelError::Constraint(format!(
                    "parameter `{key}` is not used by model `{kind}`"
                )));
            }
        }
        let get = |n: &str| {
            map.get(n)
                .copied()
                .ok_or_else(|| ModelError::Constraint(format!("missing parameter `{n}`")))
        };
        let params = match kind {
            "cir" => ModelParams::Cir {
                k: get("k")?,
                theta: get("theta")?,
                sigma: get("sigma")?,
            },
            "wright_fisher" => ModelParams::WrightFisher {
                theta1: get("theta1")?,
                theta2: get("theta2")?,
            },
            "ait_sahalia" => ModelParams::AitSahalia {
                k: get("k")?,
                theta: get("theta")?,
                alpha: get("alpha")?,
                beta: get("beta")?,
                sigma: get("sigma")?,
                r: get("r")?,
                p: get("p")?,
            },
            _ => ModelParams::OrnsteinUhlenbeck {
                lambda: get("lambda")?,
                sigma: get("sigma")?,
            },
        };
        Ok(params)
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match *self {
            ModelParams::Cir { k, theta, sigma } => vec![("k", k), ("theta", theta), ("sigma", sigma)],
            ModelParams::WrightFisher { theta1, theta2 } => {
                vec![("theta1", theta1), ("theta2", theta2)]
            }
            ModelParams::AitSahalia {
                k,
                theta,
                alpha,
                beta,
                sigma,
                r,
                p,
            } => vec![
                ("k", k),
                ("theta", theta),
                ("alpha", alpha),
                ("beta", beta),
                ("sigma", sigma),
                ("r", r),
                ("p", p),
            ],
            ModelParams::OrnsteinUhlenbeck { lambda, sigma } => {
                vec![("lambda", lambda), ("sigma", sigma)]
            }
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            ModelParams::Cir { k, theta, sigma } => {
                positive("k", k)?;
                positive("theta", theta)?;
                positive("sigma", sigma)?;
                if k * theta < sigma * sigma / 2.0 {
                    return Err(ModelError::Constraint(format!(
                        "kθ ≥ σ²/2 violated (kθ = {}, σ²/2 = {})",
                        k * theta,
                        sigma * sigma / 2.0
                    )));
                }
            }
            ModelParams::WrightFisher { theta1, theta2 } => {
                for (name, v) in [("θ₁", theta1), ("θ₂", theta2)] {
                    if !(v >= 0.5 && v.is_finite()) {
                        return Err(ModelError::Constraint(format!(
                            "{name} ≥ 1/2 violated ({name} = {v})"
                        )));
                    }
                }
            }
            ModelParams::AitSahalia {
                k,
                theta,
                alpha,
                beta,
                sigma,
                r,
                p,
            } => {
                for (name, v) in [
                    ("k", k),
                    ("theta", theta),
                    ("alpha", alpha),
                    ("beta", beta),
                    ("sigma", sigma),
                    ("r", r),
                    ("p", p),
                ] {
                    positive(name, v)?;
                }
                if r <= 1.0 {
                    return Err(ModelError::Constraint(format!("r > 1 violated (r = {r})")));
                }
                if p < 0.5 {
                    return Err(ModelError::Constraint(format!("p ≥ 1/2 violated (p = {p})")));
                }
                if r + 1.0 < 2.0 * p {
                    return Err(ModelError::Constraint(format!(
                        "r + 1 ≥ 2p violated (r + 1 = {}, 2p = {})",
                        r + 1.0,
                        2.0 * p
                    )));
                }
            }
            ModelParams::OrnsteinUhlenbeck { lambda, sigma } => {
                positive("lambda", lambda)?;
                positive("sigma", sigma)?;
            }
        }
        Ok(())
    }

    fn expressions(&self) -> (&'static str, &'static str) {
        match self {
            ModelParams::Cir { .. } => ("k*(theta - x)", "sigma*sqrt(x)"),
            ModelParams::WrightFisher { .. } => {
                ("theta1 - (theta1 + theta2)*x", "sqrt(x*(1 - x))")
            }
            ModelParams::AitSahalia { .. } => {
                ("k*(theta - x) - alpha*x^r + beta/x", "sigma*x^p")
            }
            ModelParams::OrnsteinUhlenbeck { .. } => ("-lambda*x", "sigma"),
        }
    }

    fn domain(&self) -> DomainInterval {
        match self {
            ModelParams::Cir { .. } | ModelParams::AitSahalia { .. } => DomainInterval {
                left: 0.0,
                right: f64::INFINITY,
            },
            ModelParams::WrightFisher { .. } => DomainInterval {
                left: 0.0,
                right: 1.0,
            },
            ModelParams::OrnsteinUhlenbeck { .. } => DomainInterval::real_line(),
        }
    }
}

/// Declared regularity of the coefficients (moduli of continuity), recorded
/// per built-in model rather than machine-checked.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityNote {
    pub drift_modulus: &'static str,
    pub diffusion_modulus: &'static str,
}

/// A scalar SDE with its state domain.
#[derive(Debug, Clone)]
pub struct ScalarSde {
    pub name: String,
    pub drift: CoefficientFn,
    pub diffusion: CoefficientFn,
    pub domain: DomainInterval,
    /// Drift diverges at a finite endpoint, which is therefore excluded.
    pub interior_singular: bool,
    pub params: Option<ModelParams>,
    /// Set on clamped extensions: the domain the dynamics actually lives on.
    pub extended_from: Option<DomainInterval>,
}

impl ScalarSde {
    /// User-defined model from expression strings.
    ///
    /// Only the domain is validated here; the boundary clause and positivity
    /// of the diffusion are reported by [`crate::hypotheses`].
    pub fn custom(
        name: &str,
        drift: &str,
        diffusion: &str,
        domain: DomainInterval,
        params: &BTreeMap<String, f64>,
    ) -> Result<Self, ModelError> {
        let drift = CoefficientFn::parse(drift, params)
            .map_err(|source| ModelError::Parse { which: "drift", source })?;
        let diffusion = CoefficientFn::parse(diffusion, params).map_err(|source| {
            ModelError::Parse {
                which: "diffusion",
                source,
            }
        })?;
        Ok(ScalarSde {
            name: name.to_string(),
            drift,
            diffusion,
            domain,
            interior_singular: false,
            params: None,
            extended_from: None,
        })
    }

    pub fn regularity(&self) -> Option<RegularityNote> {
        let note = match self.params? {
            ModelParams::Cir { .. } => RegularityNote {
                drift_modulus: "Lipschitz: L(r) = k r",
                diffusion_modulus: "1/2-Hölder: ρ_b(r) = σ √r",
            },
            ModelParams::WrightFisher { .. } => RegularityNote {
                drift_modulus: "Lipschitz: L(r) = (θ₁ + θ₂) r",
                diffusion_modulus: "1/2-Hölder: ρ_b(r) = √r",
            },
            ModelParams::OrnsteinUhlenbeck { .. } => RegularityNote {
                drift_modulus: "Lipschitz: L(r) = λ r",
                diffusion_modulus: "constant",
            },
            ModelParams::AitSahalia { .. } => RegularityNote {
                drift_modulus: "locally Lipschitz on (0, ∞) only",
                diffusion_modulus: "locally Lipschitz on (0, ∞)",
            },
        };
        Some(note)
    }

    /// True when `x` is a legal evaluation point: finite endpoints are legal
    /// unless the drift is singular there.
    pub fn admits(&self, x: f64) -> bool {
        if self.interior_singular {
            self.domain.contains_interior(x)
                || (x == self.domain.right && self.domain.right_finite())
        } else {
            self.domain.contains(x)
        }
    }

    #[inline]
    pub fn a(&self, x: f64) -> f64 {
        self.drift.value(x)
    }

    #[inline]
    pub fn b(&self, x: f64) -> f64 {
        self.diffusion.value(x)
    }

    #[inline]
    pub fn a_jet(&self, x: f64) -> Jet {
        self.drift.jet(x)
    }

    #[inline]
    pub fn b_jet(&self, x: f64) -> Jet {
        self.diffusion.jet(x)
    }

    /// `A = b²/2` with derivatives.
    #[inline]
    pub fn big_a_jet(&self, x: f64) -> Jet {
        let b = self.b_jet(x);
        b * b * 0.5
    }

    fn eval_checked(
        &self,
        f: &CoefficientFn,
        what: &'static str,
        x: f64,
        order: usize,
    ) -> Result<f64, EvalError> {
        if !self.admits(x) {
            return Err(EvalError::OutsideDomain {
                x,
                domain: self.domain,
            });
        }
        f.eval(x, order).map_err(|e| match e {
            EvalError::NonFinite { x, order, .. } => EvalError::NonFinite { what, x, order },
            other => other,
        })
    }

    pub fn eval_drift(&self, x: f64, order: usize) -> Result<f64, EvalError> {
        self.eval_checked(&self.drift, "drift", x, order)
    }

    pub fn eval_diffusion(&self, x: f64, order: usize) -> Result<f64, EvalError> {
        self.eval_checked(&self.diffusion, "diffusion", x, order)
    }

    /// `(1/2) b b'' - a' + a b'/b`, the curvature expression whose infimum is
    /// the exponential entropy-decay rate.
    pub fn curvature_at(&self, y: f64) -> f64 {
        let a = self.a_jet(y);
        let b = self.b_jet(y);
        0.5 * b.v * b.d2 - a.d1 + a.v * b.d1 / b.v
    }
}

/// Validates `params` and returns the corresponding built-in model.
pub fn make_model(params: ModelParams) -> Result<ScalarSde, ModelError> {
    params.validate()?;
    let map = params.to_map();
    let (drift, diffusion) = params.expressions();
    let drift = CoefficientFn::parse(drift, &map).expect("built-in drift parses");
    let diffusion = CoefficientFn::parse(diffusion, &map).expect("built-in diffusion parses");
    Ok(ScalarSde {
        name: params.kind().to_string(),
        drift,
        diffusion,
        domain: params.domain(),
        interior_singular: matches!(params, ModelParams::AitSahalia { .. }),
        params: Some(params),
        extended_from: None,
    })
}

/// Result of [`clamp_extension`].
#[derive(Debug, Clone)]
pub struct Extension {
    pub sde: ScalarSde,
    /// Both endpoints infinite: the input was returned unchanged.
    pub identity: bool,
}

/// Extends the coefficients to the whole line by freezing them at their
/// boundary values outside the domain.
pub fn clamp_extension(sde: &ScalarSde) -> Result<Extension, ModelError> {
    let d = sde.domain;
    if !d.left_finite() && !d.right_finite() {
        return Ok(Extension {
            sde: sde.clone(),
            identity: true,
        });
    }
    for e in d.finite_endpoints() {
        if !sde.a(e).is_finite() || !sde.b(e).is_finite() {
            return Err(ModelError::NonFiniteBoundary { endpoint: e });
        }
    }
    let clamp = |f: &CoefficientFn| CoefficientFn {
        repr: Arc::new(Repr::Clamped {
            inner: f.clone(),
            lo: d.left,
            hi: d.right,
        }),
    };
    Ok(Extension {
        sde: ScalarSde {
            name: format!("{} (clamped)", sde.name),
            drift: clamp(&sde.drift),
            diffusion: clamp(&sde.diffusion),
            domain: DomainInterval::real_line(),
            interior_singular: false,
            params: sde.params,
            extended_from: Some(d),
        },
        identity: false,
    })
}

fn parse_bound(s: &str) -> Option<f64> {
    match s.trim() {
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        t => t.parse().ok(),
    }
}

/// Keys consumed by [`model_from_config`].
pub fn is_model_key(key: &str) -> bool {
    matches!(key, "model" | "drift" | "diffusion" | "domain") || key.starts_with("param.")
}

/// Builds a model from the model keys of a config file
/// (`model`, `drift`, `diffusion`, `domain`, `param.<name>`).
pub fn model_from_config(file: &KeyValueFile) -> Result<ScalarSde, ConfigError> {
    let kind_entry = file.require("model")?;
    let kind = kind_entry.value.as_str();
    let mut params = BTreeMap::new();
    for e in file.entries().iter().filter(|e| e.key.starts_with("param.")) {
        let name = &e.key["param.".len()..];
        let v: f64 = e.value.parse().map_err(|_| ConfigError::Value {
            line: e.line,
            key: e.key.clone(),
            msg: format!("`{}` is not a number", e.value),
        })?;
        params.insert(name.to_string(), v);
    }
    let constraint = |err: ModelError| ConfigError::Constraint {
        line: kind_entry.line,
        key: "model".into(),
        msg: err.to_string(),
    };
    if kind == "custom" {
        let drift = file.require("drift")?;
        let diffusion = file.require("diffusion")?;
        let dom = file.require("domain")?;
        let bounds: Vec<_> = dom.value.split(',').map(parse_bound).collect();
        let domain = match bounds.as_slice() {
            [Some(lo), Some(hi)] => DomainInterval::new(*lo, *hi).map_err(|e| {
                ConfigError::Constraint {
                    line: dom.line,
                    key: "domain".into(),
                    msg: e.to_string(),
                }
            })?,
            _ => {
                return Err(ConfigError::Value {
                    line: dom.line,
                    key: "domain".into(),
                    msg: format!("expected `<lo>,<hi>`, got `{}`", dom.value),
                })
            }
        };
        return ScalarSde::custom("custom", &drift.value, &diffusion.value, domain, &params)
            .map_err(|e| {
                let (line, key) = match &e {
                    ModelError::Parse { which: "drift", .. } => (drift.line, "drift"),
                    _ => (diffusion.line, "diffusion"),
                };
                ConfigError::Value {
                    line,
                    key: key.into(),
                    msg: e.to_string(),
                }
            });
    }
    for key in ["drift", "diffusion", "domain"] {
        if let Some(e) = file.get(key) {
            return Err(ConfigError::UnknownKey {
                line: e.line,
                key: format!("{key} (only valid for model = custom)"),
            });
        }
    }
    if ModelParams::names(kind).is_none() {
        return Err(ConfigError::Value {
            line: kind_entry.line,
            key: "model".into(),
            msg: format!("unknown model `{kind}` (cir|wright_fisher|ait_sahalia|ou|custom)"),
        });
    }
    let mp = ModelParams::from_map(kind, &params).map_err(|e| {
        // point at the offending param line when there is one
        if let ModelError::Constraint(msg) = &e {
            for entry in file.entries().iter().filter(|x| x.key.starts_with("param.")) {
                let name = &entry.key["param.".len()..];
                if msg.starts_with(&format!("{name} ")) || msg.contains(&format!("`{name}`")) {
                    return ConfigError::Constraint {
                        line: entry.line,
                        key: entry.key.clone(),
                        msg: msg.clone(),
                    };
                }
            }
        }
        constraint(e)
    })?;
    make_model(mp).map_err(|e| {
        if let ModelError::Constraint(msg) = &e {
            for entry in file.entries().iter().filter(|x| x.key.starts_with("param.")) {
                let name = &entry.key["param.".len()..];
                if msg.starts_with(&format!("{name} ")) {
                    return ConfigError::Constraint {
                        line: entry.line,
                        key: entry.key.clone(),
                        msg: msg.clone(),
                    };
                }
            }
        }
        constraint(e)
    })
}
