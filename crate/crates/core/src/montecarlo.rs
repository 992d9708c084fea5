//! Path simulation with shared, reproducible noise.
//!
//! Brownian increments come from a counter-based generator: increment `j` of
//! stream `s` under seed `seed` depends only on `(seed, s, j)`, so any
//! sub-range can be regenerated without replaying the prefix. Ensembles use
//! one stream per path; pullback runs reuse stream 0 for every horizon.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{DensityField, Grid, GridError};
use crate::lamperti::{build_transform, LampertiError, LampertiTransform};
use crate::model::{clamp_extension, ModelParams, ScalarSde};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("start {0} is not an admissible state")]
    BadStart(f64),
    #[error("implicit step has no admissible root after {halvings} halvings (step {step})")]
    ImplicitFailure { step: usize, halvings: u32 },
    #[error("floor_eps must be non-negative")]
    BadFloor,
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("trajectory does not cover t = {0}")]
    TimeNotCovered(f64),
    #[error("starting points coincide")]
    ZeroSeparation,
    #[error(transparent)]
    Lamperti(#[from] LampertiError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Stream offset reserved for Brownian-bridge refinements.
const BRIDGE_STREAM: u64 = 1 << 62;

/// Sequential reader of one counter-based Gaussian stream.
pub struct NoiseStream {
    rng: ChaCha8Rng,
    sd: f64,
}

impl NoiseStream {
    /// Increments `start, start + 1, …` of stream `stream`, each `N(0, dt)`.
    pub fn new(seed: u64, stream: u64, start: u64, dt: f64) -> NoiseStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        // two u64 (four 32-bit words) per increment
        rng.set_word_pos(4 * start as u128);
        NoiseStream { rng, sd: dt.sqrt() }
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn next_increment(&mut self) -> f64 {
        self.sd * self.standard_normal()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub seed: u64,
    pub stream: u64,
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl NoisePath {
    pub fn n_steps(&self) -> usize {
        self.increments.len()
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.increments.len() as f64
    }
}

/// Steps needed to cover `horizon` with step `dt`.
pub fn step_count(horizon: f64, dt: f64) -> usize {
    (horizon / dt - 1e-9).ceil().max(0.0) as usize
}

/// `⌈T/dt⌉` increments of stream `stream` starting at counter `start`.
pub fn sample_noise_range(seed: u64, stream: u64, start: u64, n: usize, dt: f64) -> NoisePath {
    let mut s = NoiseStream::new(seed, stream, start, dt);
    NoisePath {
        seed,
        stream,
        dt,
        increments: (0..n).map(|_| s.next_increment()).collect(),
    }
}

pub fn sample_noise(seed: u64, horizon: f64, dt: f64) -> Result<NoisePath, McError> {
    if !(dt > 0.0) {
        return Err(McError::BadStep(dt));
    }
    if !(horizon > 0.0) {
        return Err(McError::BadHorizon(horizon));
    }
    Ok(sample_noise_range(seed, 0, 0, step_count(horizon, dt), dt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Euler-Maruyama on the clamped extension, projected onto the domain.
    ProjectedEuler,
    /// Euler in Lamperti coordinates, projected to `floor_eps` inside
    /// singular image endpoints.
    LampertiProjectedEuler,
    /// Drift-implicit Euler in Lamperti coordinates.
    LampertiImplicit,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::ProjectedEuler => "projected-euler",
            Scheme::LampertiProjectedEuler => "lamperti-projected-euler",
            Scheme::LampertiImplicit => "lamperti-implicit",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        match s {
            "projected-euler" => Some(Scheme::ProjectedEuler),
            "lamperti-projected-euler" => Some(Scheme::LampertiProjectedEuler),
            "lamperti-implicit" => Some(Scheme::LampertiImplicit),
            _ => None,
        }
    }

    pub fn is_lamperti(self) -> bool {
        !matches!(self, Scheme::ProjectedEuler)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub dt: f64,
    /// Distance kept from singular boundaries; `None` means `1e-6` times the
    /// image width (or `1e-6` for unbounded images).
    pub floor_eps: Option<f64>,
    /// Keep every this many states in a [`Trajectory`].
    pub record_every: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            scheme: Scheme::LampertiImplicit,
            dt: 1e-3,
            floor_eps: None,
            record_every: 1,
        }
    }
}

/// Maximum number of local step halvings for the implicit scheme.
const MAX_HALVINGS: u32 = 12;

/// A configured time stepper. States are held in the scheme's own
/// coordinates: `X` for projected Euler, `Y = Q(X)` otherwise.
#[derive(Debug, Clone)]
pub struct Simulator {
    sde: ScalarSde,
    stepping: ScalarSde,
    transform: Option<LampertiTransform>,
    cfg: SchemeConfig,
    /// Admissible interval of internal states.
    lo: f64,
    hi: f64,
    cir: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepEvents {
    /// Projections onto the domain or the floor.
    pub clamps: usize,
    /// Local step halvings of the implicit solver.
    pub halvings: usize,
}

impl Simulator {
    pub fn new(sde: &ScalarSde, cfg: &SchemeConfig) -> Result<Simulator, McError> {
        if !(cfg.dt > 0.0) {
            return Err(McError::BadStep(cfg.dt));
        }
        if cfg.floor_eps.is_some_and(|f| !(f >= 0.0)) {
            return Err(McError::BadFloor);
        }
        let d = sde.domain;
        if cfg.scheme.is_lamperti() {
            let t = build_transform(sde, None)?;
            let (ilo, ihi) = t.image();
            let width = ihi - ilo;
            let floor = cfg
                .floor_eps
                .unwrap_or(if width.is_finite() { 1e-6 * width } else { 1e-6 });
            let cir = match sde.params {
                Some(ModelParams::Cir { k, theta, sigma }) => {
                    Some((k, (4.0 * k * theta - sigma * sigma) / (2.0 * sigma * sigma)))
                }
                _ => None,
            };
            Ok(Simulator {
                sde: sde.clone(),
                stepping: sde.clone(),
                lo: if ilo.is_finite() { ilo + floor } else { ilo },
                hi: if ihi.is_finite() { ihi - floor } else { ihi },
                transform: Some(t),
                cfg: *cfg,
                cir,
            })
        } else {
            let floor = cfg.floor_eps.unwrap_or(1e-6);
            let (stepping, lo) = match clamp_extension(sde) {
                Ok(ext) => (ext.sde, d.left),
                // singular endpoint: keep a floor inside it
                Err(_) => (sde.clone(), d.left + floor),
            };
            let hi = if sde.interior_singular && d.right_finite() && !sde.admits(d.right) {
                d.right - floor
            } else {
                d.right
            };
            Ok(Simulator {
                sde: sde.clone(),
                stepping,
                transform: None,
                cfg: *cfg,
                lo,
                hi,
                cir: None,
            })
        }
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn transform(&self) -> Option<&LampertiTransform> {
        self.transform.as_ref()
    }

    pub fn to_internal(&self, x: f64) -> f64 {
        match &self.transform {
            Some(t) => t.q(x),
            None => x,
        }
    }

    pub fn to_state(&self, s: f64) -> f64 {
        match &self.transform {
            Some(t) => t.q_inverse(s),
            None => s,
        }
    }

    /// Validates a start and converts it to internal coordinates.
    pub fn start(&self, x0: f64) -> Result<f64, McError> {
        let d = self.sde.domain;
        let ok = if self.sde.interior_singular || self.cfg.scheme.is_lamperti() {
            d.contains(x0) && self.sde.admits(x0)
        } else {
            d.contains(x0)
        };
        if !ok || !x0.is_finite() {
            return Err(McError::BadStart(x0));
        }
        Ok(self.project(self.to_internal(x0)))
    }

    fn project(&self, s: f64) -> f64 {
        s.max(self.lo).min(self.hi)
    }

    fn c(&self, y: f64) -> f64 {
        let t = self.transform.as_ref().expect("Lamperti scheme");
        t.drift(y).unwrap_or(f64::NAN)
    }

    /// Root of `y − dt c(y) = z`, or `None` when no bracketed root exists.
    fn implicit_root(&self, z: f64, dt: f64) -> Option<f64> {
        if let Some((k, beta)) = self.cir {
            let g = 1.0 + 0.5 * k * dt;
            let disc = z * z + 4.0 * g * beta * dt;
            if disc < 0.0 {
                return None;
            }
            return Some((z + disc.sqrt()) / (2.0 * g));
        }
        let f = |y: f64| y - dt * self.c(y) - z;
        let (mut a, mut b);
        if self.lo.is_finite() && self.hi.is_finite() {
            a = self.lo;
            b = self.hi;
        } else {
            let start = z.max(self.lo).min(self.hi);
            let mut s = 1.0 + dt * self.c(start).abs();
            if !s.is_finite() {
                s = 1.0;
            }
            a = (start - s).max(self.lo);
            b = (start + s).min(self.hi);
            for _ in 0..80 {
                let (fa, fb) = (f(a), f(b));
                if fa < 0.0 && fb > 0.0 {
                    break;
                }
                s *= 2.0;
                if !(fa < 0.0) {
                    a = (start - s).max(self.lo);
                }
                if !(fb > 0.0) {
                    b = (start + s).min(self.hi);
                }
            }
        }
        let (mut fa, mut fb) = (f(a), f(b));
        if !(fa < 0.0 && fb > 0.0) {
            return None;
        }
        // Illinois false position
        let mut side = 0i8;
        for _ in 0..200 {
            let m = (a * fb - b * fa) / (fb - fa);
            let m = if m > a && m < b { m } else { 0.5 * (a + b) };
            let fm = f(m);
            if !fm.is_finite() {
                return None;
            }
            if fm == 0.0 || (b - a) <= 1e-14 * m.abs().max(1.0) {
                return Some(m);
            }
            if fm < 0.0 {
                a = m;
                fa = fm;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                b = m;
                fb = fm;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
        }
        Some(0.5 * (a + b))
    }

    fn implicit_step(
        &self,
        s: f64,
        dw: f64,
        dt: f64,
        depth: u32,
        bridge: &mut NoiseStream,
        ev: &mut StepEvents,
    ) -> Option<f64> {
        if let Some(y) = self.implicit_root(s + dw, dt) {
            return Some(y);
        }
        if depth >= MAX_HALVINGS {
            return None;
        }
        ev.halvings += 1;
        // split the increment with a Brownian bridge
        let half = 0.5 * dt;
        let dw1 = 0.5 * dw + (0.25 * dt).sqrt() * bridge.standard_normal();
        let mid = self.implicit_step(s, dw1, half, depth + 1, bridge, ev)?;
        self.implicit_step(mid, dw - dw1, half, depth + 1, bridge, ev)
    }

    /// One step of size `dt` with Brownian increment `dw`.
    pub fn step(
        &self,
        s: f64,
        dw: f64,
        dt: f64,
        bridge: &mut NoiseStream,
        ev: &mut StepEvents,
        step_index: usize,
    ) -> Result<f64, McError> {
        let raw = match self.cfg.scheme {
            Scheme::ProjectedEuler => {
                s + self.stepping.a(s) * dt + self.stepping.b(s) * dw
            }
            Scheme::LampertiProjectedEuler => s + self.c(s) * dt + dw,
            Scheme::LampertiImplicit => self
                .implicit_step(s, dw, dt, 0, bridge, ev)
                .ok_or(McError::ImplicitFailure {
                    step: step_index,
                    halvings: MAX_HALVINGS,
                })?,
        };
        let p = self.project(if raw.is_nan() { s } else { raw });
        if p != raw {
            ev.clamps += 1;
        }
        Ok(p)
    }

    /// Bridge stream paired with noise stream `stream`.
    pub fn bridge_stream(seed: u64, stream: u64) -> NoiseStream {
        NoiseStream::new(seed, BRIDGE_STREAM | stream, 0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// States in the original coordinates.
    pub states: Vec<f64>,
    /// States in Lamperti coordinates, for Lamperti schemes.
    pub lamperti: Option<Vec<f64>>,
    pub scheme: Scheme,
    pub events: StepEvents,
}

/// Simulates one path driven by `noise` from `x0`.
pub fn simulate(sde: &ScalarSde, x0: f64, noise: &NoisePath, cfg: &SchemeConfig) -> Result<Trajectory, McError> {
    let cfg = SchemeConfig { dt: noise.dt, ..*cfg };
    let sim = Simulator::new(sde, &cfg)?;
    simulate_with(&sim, x0, noise)
}

pub fn simulate_with(sim: &Simulator, x0: f64, noise: &NoisePath) -> Result<Trajectory, McError> {
    let dt = noise.dt;
    let every = sim.cfg.record_every.max(1);
    let mut s = sim.start(x0)?;
    let mut bridge = Simulator::bridge_stream(noise.seed, noise.stream);
    let mut ev = StepEvents::default();
    let lamperti = sim.cfg.scheme.is_lamperti();
    let mut times = vec![0.0];
    let mut states = vec![sim.to_state(s)];
    let mut ys = lamperti.then(|| vec![s]);
    for (j, &dw) in noise.increments.iter().enumerate() {
        s = sim.step(s, dw, dt, &mut bridge, &mut ev, j)?;
        let n = j + 1;
        if n % every == 0 || n == noise.increments.len() {
            times.push(n as f64 * dt);
            states.push(sim.to_state(s));
            if let Some(v) = ys.as_mut() {
                v.push(s);
            }
        }
    }
    Ok(Trajectory {
        times,
        states,
        lamperti: ys,
        scheme: sim.cfg.scheme,
        events: ev,
    })
}

/// Histogram of `states` on the grid cells, normalized to unit mass.
/// States outside the grid are ignored.
pub fn histogram(states: &[f64], grid: Arc<Grid>) -> Result<DensityField, McError> {
    if states.is_empty() {
        return Err(McError::EmptyEnsemble);
    }
    let mut counts = vec![0.0; grid.n_cells()];
    for &x in states {
        if let Some(i) = grid.locate(x) {
            counts[i] += 1.0;
        }
    }
    let values = counts.iter().zip(grid.widths()).map(|(c, w)| c / w).collect();
    let mut d = DensityField::from_values(grid, values);
    d.normalize()?;
    Ok(d)
}

/// Histogram of the ensemble's states at the record nearest to `t`.
pub fn empirical_density(ensemble: &[Trajectory], t: f64, grid: Arc<Grid>) -> Result<DensityField, McError> {
    if ensemble.is_empty() {
        return Err(McError::EmptyEnsemble);
    }
    let mut states = Vec::with_capacity(ensemble.len());
    for tr in ensemble {
        let i = tr.times.partition_point(|&s| s < t - 1e-9);
        let ok = i < tr.times.len() && (tr.times[i] - t).abs() <= 1e-9 * t.abs().max(1.0);
        if !ok {
            return Err(McError::TimeNotCovered(t));
        }
        states.push(tr.states[i]);
    }
    histogram(&states, grid)
}

/// States of many independent paths at a set of checkpoint times.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    /// `states[k][p]`: path `p` at `times[k]`.
    pub states: Vec<Vec<f64>>,
    pub events: StepEvents,
}

impl EnsembleResult {
    pub fn mean(&self, k: usize) -> f64 {
        let v = &self.states[k];
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self, k: usize) -> f64 {
        let v = &self.states[k];
        let m = self.mean(k);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
    }

    /// `t,mean,var,l1_to_stationary` rows; the last column is empty without a
    /// reference density.
    pub fn summary_csv(&self, reference: Option<&DensityField>) -> Result<String, McError> {
        let mut s = String::from("t,mean,var,l1_to_stationary\n");
        for k in 0..self.times.len() {
            let l1 = match reference {
                Some(r) => {
                    let h = histogram(&self.states[k], r.grid().clone())?;
                    format!("{:.12e}", l1_distance(&h, r)?)
                }
                None => String::new(),
            };
            s.push_str(&format!(
                "{:.6},{:.12e},{:.12e},{}\n",
                self.times[k],
                self.mean(k),
                self.variance(k),
                l1
            ));
        }
        Ok(s)
    }
}

/// `Σ |f − g| Δy`.
pub fn l1_distance(f: &DensityField, g: &DensityField) -> Result<f64, McError> {
    f.check_same_grid(g)?;
    Ok(f
        .values()
        .iter()
        .zip(g.values())
        .zip(f.grid().widths())
        .map(|((a, b), w)| (a - b).abs() * w)
        .sum())
}

/// Runs `starts.len()` paths (path `p` uses noise stream `p`) to the last
/// checkpoint, keeping states at each checkpoint. Paths run in parallel;
/// results do not depend on scheduling.
pub fn run_ensemble(
    sde: &ScalarSde,
    starts: &[f64],
    cfg: &SchemeConfig,
    checkpoints: &[f64],
    seed: u64,
) -> Result<EnsembleResult, McError> {
    if starts.is_empty() {
        return Err(McError::EmptyEnsemble);
    }
    let sim = Simulator::new(sde, cfg)?;
    let dt = cfg.dt;
    let marks: Vec<usize> = checkpoints.iter().map(|&t| step_count(t, dt)).collect();
    let n_steps = marks.iter().copied().max().unwrap_or(0);
    let per_path: Vec<Result<(Vec<f64>, StepEvents), McError>> = starts
        .par_iter()
        .enumerate()
        .map(|(p, &x0)| {
            let mut noise = NoiseStream::new(seed, p as u64, 0, dt);
            let mut bridge = Simulator::bridge_stream(seed, p as u64);
            let mut ev = StepEvents::default();
            let mut s = sim.start(x0)?;
            let mut out = vec![f64::NAN; marks.len()];
            for (k, &m) in marks.iter().enumerate() {
                if m == 0 {
                    out[k] = sim.to_state(s);
                }
            }
            for j in 0..n_steps {
                s = sim.step(s, noise.next_increment(), dt, &mut bridge, &mut ev, j)?;
                for (k, &m) in marks.iter().enumerate() {
                    if m == j + 1 {
                        out[k] = sim.to_state(s);
                    }
                }
            }
            Ok((out, ev))
        })
        .collect();
    let mut states = vec![Vec::with_capacity(starts.len()); marks.len()];
    let mut events = StepEvents::default();
    for r in per_path {
        let (out, ev) = r?;
        events.clamps += ev.clamps;
        events.halvings += ev.halvings;
        for (k, v) in out.into_iter().enumerate() {
            states[k].push(v);
        }
    }
    Ok(EnsembleResult {
        times: checkpoints.to_vec(),
        states,
        events,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contraction {
    /// `sup_t |ΔY_t| e^{ρ t} / |ΔY_0|`.
    pub ratio: f64,
    pub at: f64,
    /// Ordering of the two paths never flipped.
    pub ordered: bool,
}

/// Two Lamperti-coordinate paths from `y0` and `y1` under the same noise;
/// returns the worst normalized separation against the rate `rho`.
pub fn two_path_contraction(
    sim: &Simulator,
    y0: f64,
    y1: f64,
    noise: &NoisePath,
    rho: f64,
) -> Result<Contraction, McError> {
    let d0 = y1 - y0;
    if d0 == 0.0 {
        return Err(McError::ZeroSeparation);
    }
    let (mut a, mut b) = (sim.project(y0), sim.project(y1));
    let mut bridge_a = Simulator::bridge_stream(noise.seed, noise.stream);
    let mut bridge_b = Simulator::bridge_stream(noise.seed, noise.stream);
    let mut ev = StepEvents::default();
    let mut out = Contraction {
        ratio: ((b - a) / d0).abs(),
        at: 0.0,
        ordered: true,
    };
    let dt = noise.dt;
    for (j, &dw) in noise.increments.iter().enumerate() {
        a = sim.step(a, dw, dt, &mut bridge_a, &mut ev, j)?;
        b = sim.step(b, dw, dt, &mut bridge_b, &mut ev, j)?;
        let t = (j + 1) as f64 * dt;
        if (b - a) * d0 < 0.0 {
            out.ordered = false;
        }
        let r = ((b - a) / d0).abs() * (rho * t).exp();
        if r > out.ratio {
            out.ratio = r;
            out.at = t;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackRun {
    pub horizon: f64,
    /// Arrival states at time 0 in the scheme's coordinates (`Y` for
    /// Lamperti schemes).
    pub arrivals: Vec<f64>,
    pub diameter: f64,
    /// Same diameter measured in the original coordinates.
    pub diameter_x: f64,
    /// Start ordering preserved at every step.
    pub ordered: bool,
}

/// For each horizon `T`, runs every start from time `−T` to `0` with the
/// same noise: the increment over `[−(j+1)dt, −j dt]` is counter `j` of
/// stream 0 under `master_seed`.
pub fn pullback_diameter(
    sim: &Simulator,
    starts: &[f64],
    horizons: &[f64],
    master_seed: u64,
) -> Result<Vec<PullbackRun>, McError> {
    let dt = sim.cfg.dt;
    let mut order: Vec<usize> = (0..starts.len()).collect();
    order.sort_by(|&i, &j| starts[i].total_cmp(&starts[j]));
    let mut runs = Vec::with_capacity(horizons.len());
    for &t_h in horizons {
        if !(t_h > 0.0) {
            return Err(McError::BadHorizon(t_h));
        }
        let n = step_count(t_h, dt);
        let noise = sample_noise_range(master_seed, 0, 0, n, dt);
        let mut s: Vec<f64> = order.iter().map(|&i| sim.start(starts[i])).collect::<Result<_, _>>()?;
        let mut bridges: Vec<NoiseStream> = order
            .iter()
            .map(|_| Simulator::bridge_stream(master_seed, 0))
            .collect();
        let mut ev = StepEvents::default();
        let mut ordered = true;
        for j in (0..n).rev() {
            let dw = noise.increments[j];
            for (v, br) in s.iter_mut().zip(bridges.iter_mut()) {
                *v = sim.step(*v, dw, dt, br, &mut ev, n - 1 - j)?;
            }
            if s.windows(2).any(|w| w[1] < w[0]) {
                ordered = false;
            }
        }
        let xs: Vec<f64> = s.iter().map(|&v| sim.to_state(v)).collect();
        let spread = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        let mut arrivals = vec![0.0; starts.len()];
        for (k, &i) in order.iter().enumerate() {
            arrivals[i] = s[k];
        }
        runs.push(PullbackRun {
            horizon: t_h,
            diameter: spread(&s),
            diameter_x: spread(&xs),
            arrivals,
            ordered,
        });
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_model;

    #[test]
    fn noise_is_counter_based() {
        let a = sample_noise_range(7, 3, 0, 100, 0.01);
        let b = sample_noise_range(7, 3, 40, 60, 0.01);
        assert_eq!(&a.increments[40..], &b.increments[..]);
        let c = sample_noise_range(8, 3, 0, 100, 0.01);
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn cir_implicit_root_solves_the_step_equation() {
        let sde = make_model(ModelParams::Cir {
            k: 1.0,
            theta: 1.0,
            sigma: 1.0,
        })
        .unwrap();
        let sim = Simulator::new(&sde, &SchemeConfig::default()).unwrap();
        let t = sim.transform().unwrap();
        for z in [-0.5, 0.0, 0.1, 2.0] {
            let y = sim.implicit_root(z, 0.01).unwrap();
            let resid = y - 0.01 * t.drift(y).unwrap() - z;
            assert!(resid.abs() < 1e-12, "{z}: {resid}");
        }
    }

    #[test]
    fn generic_implicit_root_on_wright_fisher() {
        let sde = make_model(ModelParams::WrightFisher {
            theta1: 1.0,
            theta2: 1.0,
        })
        .unwrap();
        let sim = Simulator::new(&sde, &SchemeConfig::default()).unwrap();
        let t = sim.transform().unwrap();
        for z in [-0.3, 0.2, 1.5, 3.3] {
            let y = sim.implicit_root(z, 0.01).unwrap();
            let resid = y - 0.01 * t.drift(y).unwrap() - z;
            assert!(resid.abs() < 1e-10, "{z}: {resid}");
        }
    }
}
