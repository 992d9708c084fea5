//! Ergodicity diagnostics for scalar diffusions `dX = a(X) dt + b(X) dW`
//! whose diffusion coefficient may vanish at the boundary.
//!
//! The crate checks structural hypotheses, builds the Gibbs stationary
//! density, evolves the Fokker-Planck equation with a positivity-preserving
//! finite-volume scheme, evaluates curvature bounds through the carré du
//! champ calculus, and simulates paths under shared noise in Lamperti
//! coordinates.

// `!(x > 0.0)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod expr;
pub mod fpe;
pub mod functionals;
pub mod grid;
pub mod hypotheses;
pub mod jet;
pub mod lamperti;
pub mod model;
pub mod montecarlo;
pub mod quadrature;
pub mod search;
pub mod stationary;

pub use grid::{build_grid, DensityField, Grid};
pub use hypotheses::{check_all, estimate_rho, Verdict};
pub use lamperti::{build_transform, LampertiTransform};
pub use model::{make_model, DomainInterval, ModelParams, ScalarSde};
pub use stationary::{stationary_density, GibbsDensity};

/// Guide chapters, compiled so their examples run as doctests.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    pub mod models {}
    #[doc = include_str!("../../../book/src/hypotheses.md")]
    pub mod hypotheses {}
    #[doc = include_str!("../../../book/src/stationary.md")]
    pub mod stationary {}
    #[doc = include_str!("../../../book/src/fokker_planck.md")]
    pub mod fokker_planck {}
    #[doc = include_str!("../../../book/src/gamma2.md")]
    pub mod gamma2 {}
    #[doc = include_str!("../../../book/src/lamperti.md")]
    pub mod lamperti {}
    #[doc = include_str!("../../../book/src/monte_carlo.md")]
    pub mod monte_carlo {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
