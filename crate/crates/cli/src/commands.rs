//! One function per subcommand. Each writes its CSVs and returns whether
//! every checked bound held.

use std::error::Error;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use ergodic::fpe::{bump_start, point_mass_start, EvolveConfig, FokkerPlanckSolver};
use ergodic::functionals::{cd_check, fit_decay_rate, kl_divergence, TestFunction};
use ergodic::hypotheses::{check_all, estimate_rho, search_interval, CheckConfig, RhoSearch};
use ergodic::lamperti::{audit_csv, build_transform, dissipativity_estimate, dissipativity_residual, image_probes, DRIFT_FD_STEP};
use ergodic::montecarlo::{histogram, l1_distance, pullback_diameter, run_ensemble, SchemeConfig, Simulator};
use ergodic::quadrature::QuadConfig;
use ergodic::search::chebyshev_points;
use ergodic::stationary::{build_potential, stationarity_residual, GibbsDensity};
use ergodic::{build_grid, Grid};

use crate::settings::{Command, RunConfig, StartSpec};

pub type CmdResult = Result<bool, Box<dyn Error>>;

/// Tolerance for the Γ₂ slack and the Lamperti identity.
const SLACK_TOL: f64 = 1e-9;
const IDENTITY_TOL: f64 = 1e-8;
const MASS_TOL: f64 = 1e-12;

pub struct Writer<'a> {
    cfg: &'a RunConfig,
    command: Command,
}

impl<'a> Writer<'a> {
    pub fn new(cfg: &'a RunConfig, command: Command) -> Result<Writer<'a>, Box<dyn Error>> {
        fs::create_dir_all(&cfg.out)?;
        Ok(Writer { cfg, command })
    }

    pub fn manifest(&self) -> String {
        format!(
            "# ergodic {} config_sha256={} seed={} command={}\n",
            env!("CARGO_PKG_VERSION"),
            self.cfg.config_hash,
            self.cfg.seed,
            self.command.name()
        )
    }

    /// Writes `body` (header row first) under the output directory.
    pub fn write(&self, name: &str, body: &str) -> Result<(), Box<dyn Error>> {
        let path = self.cfg.out.join(name);
        fs::write(&path, format!("{}{}", self.manifest(), body))?;
        println!("wrote {}", display(&path));
        Ok(())
    }
}

fn display(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}

fn gibbs(cfg: &RunConfig) -> Result<GibbsDensity, Box<dyn Error>> {
    let potential = build_potential(&cfg.sde, cfg.anchor)?;
    Ok(GibbsDensity::new(potential, &QuadConfig::default())?)
}

fn solver_grid(cfg: &RunConfig, g: &GibbsDensity) -> Result<Arc<Grid>, Box<dyn Error>> {
    Ok(Arc::new(build_grid(cfg.sde.domain, cfg.grid, cfg.tail_eps, Some(g))?))
}

/// User override or the estimated curvature bound.
fn rate(cfg: &RunConfig) -> Result<f64, Box<dyn Error>> {
    if let Some(r) = cfg.rho {
        return Ok(r);
    }
    let est = estimate_rho(&cfg.sde, &RhoSearch::default());
    if est.failed {
        return Err(format!("no positive curvature bound found for {} (estimate {})", cfg.sde.name, est.value).into());
    }
    Ok(est.value)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

pub fn check(cfg: &RunConfig) -> CmdResult {
    let w = Writer::new(cfg, Command::Check)?;
    let check_cfg = CheckConfig {
        n_probe: cfg.probes.unwrap_or(200),
        ..CheckConfig::default()
    };
    let report = check_all(&cfg.sde, &check_cfg);
    w.write("check.csv", &format!("{}\n{}\n", report.csv_header(), report.csv_row()))?;
    print!("{}", report.to_key_value());
    Ok(report.passed())
}

pub fn stationary(cfg: &RunConfig) -> CmdResult {
    let w = Writer::new(cfg, Command::Stationary)?;
    let g = gibbs(cfg)?;
    let grid = solver_grid(cfg, &g)?;
    let u = g.on_grid(grid.clone())?;
    let residual = stationarity_residual(&cfg.sde, &u);
    w.write("stationary.csv", &u.to_csv())?;
    println!("model = {}", cfg.sde.name);
    println!("anchor = {}", g.potential().anchor());
    println!("z = {}", g.z());
    println!("log_z = {}", g.log_z());
    println!("mean = {}", g.mean());
    println!("variance = {}", g.variance());
    println!("grid = [{}, {}] with {} cells", grid.lo(), grid.hi(), grid.n_cells());
    println!("stationarity_residual = {residual:e}");
    Ok(g.z().is_finite())
}

pub fn evolve(cfg: &RunConfig) -> CmdResult {
    let w = Writer::new(cfg, Command::Evolve)?;
    let rho = rate(cfg)?;
    let g = gibbs(cfg)?;
    let grid = solver_grid(cfg, &g)?;
    let solver = FokkerPlanckSolver::new(&g, grid.clone())?;
    let u_inf = solver.u_inf();
    let sd = g.variance().sqrt();
    let center = cfg.start_center.unwrap_or_else(|| (g.mean() + sd).min(grid.hi()));
    let u0 = match cfg.start {
        StartSpec::Bump => bump_start(u_inf, center, cfg.start_width.unwrap_or(0.1 * sd))?,
        StartSpec::Point => point_mass_start(u_inf, center)?,
        StartSpec::Stationary => u_inf.clone(),
    };
    let run = solver.evolve(
        &u0,
        &EvolveConfig {
            horizon: cfg.horizon,
            dt: cfg.dt,
            observe_every: cfg.observe_every,
            snapshot_every: cfg.snapshot_every,
            ..EvolveConfig::default()
        },
    )?;
    w.write("trace.csv", &run.trace.to_csv())?;
    for (k, (t, u)) in run.snapshots.iter().enumerate() {
        w.write(&format!("snapshot_{k:04}.csv"), &format!("# t = {t}\n{}", u.to_csv()))?;
    }

    let recs = &run.trace.records;
    let kl0 = recs[0].kl;
    let envelope_breaks = recs
        .iter()
        .filter(|r| r.kl > (-rho * r.t).exp() * kl0 * cfg.envelope_slack)
        .count();
    let ckp_breaks = recs.iter().filter(|r| r.tv > (r.kl / 2.0).sqrt() + 1e-12).count();
    let d = &run.diagnostics;
    let solver_ok = d.max_mass_drift <= MASS_TOL && d.positivity_violations == 0 && d.free_energy_increases == 0;
    let slope = fit_decay_rate(&run.trace, (0.0, cfg.horizon)).ok();
    let final_kl = kl_divergence(&run.final_density, u_inf)?;

    println!("model = {}", cfg.sde.name);
    println!("rho = {rho}");
    println!("kl_initial = {kl0:e}");
    println!("kl_final = {final_kl:e}");
    println!("fitted_log_kl_slope = {}", slope.map_or("n/a".into(), |s| s.to_string()));
    println!("envelope_violations = {envelope_breaks} ({})", verdict(envelope_breaks == 0));
    println!("ckp_violations = {ckp_breaks} ({})", verdict(ckp_breaks == 0));
    println!("max_mass_drift = {:e}", d.max_mass_drift);
    println!("positivity_violations = {}", d.positivity_violations);
    println!(
        "free_energy_increases = {} (max {:e})",
        d.free_energy_increases, d.max_free_energy_increase
    );
    println!("solver = {}", verdict(solver_ok));
    Ok(envelope_breaks == 0 && ckp_breaks == 0 && solver_ok)
}

pub fn gamma2(cfg: &RunConfig) -> CmdResult {
    let w = Writer::new(cfg, Command::Gamma2)?;
    let rho = rate(cfg)?;
    let (lo, hi) = search_interval(&cfg.sde);
    let probes = chebyshev_points(lo, hi, cfg.probes.unwrap_or(20));
    let fs = TestFunction::standard_set();
    let report = cd_check(&cfg.sde, &fs, rho, &probes);
    w.write("cd.csv", &report.to_csv())?;
    let worst_oracle = report
        .rows
        .iter()
        .filter_map(|r| r.gamma2_oracle.map(|o| (o - r.gamma2_closed).abs() / r.gamma2_closed.abs().max(1.0)))
        .fold(0.0f64, f64::max);
    let ok = report.min_slack >= -SLACK_TOL;
    println!("model = {}", cfg.sde.name);
    println!("rho = {rho}");
    println!("probes = {} on [{lo}, {hi}]", probes.len());
    println!("min_slack = {:e} ({})", report.min_slack, verdict(ok));
    println!("max_oracle_relative_error = {worst_oracle:e}");
    Ok(ok)
}

pub fn lamperti(cfg: &RunConfig) -> CmdResult {
    let w = Writer::new(cfg, Command::Lamperti)?;
    let t = build_transform(&cfg.sde, cfg.anchor)?;
    let (lo, hi) = search_interval(&cfg.sde);
    let xs = chebyshev_points(lo, hi, cfg.probes.unwrap_or(50));
    let xs: Vec<f64> = xs.into_iter().filter(|&x| cfg.sde.domain.contains_interior(x)).collect();
    w.write("lamperti.csv", &audit_csv(&t, &xs))?;
    let mut worst = 0.0f64;
    for &x in &xs {
        let scale = cfg.sde.curvature_at(x).abs().max(1.0);
        worst = worst.max(dissipativity_residual(&t, x, DRIFT_FD_STEP)? / scale);
    }
    let est = dissipativity_estimate(&t, &image_probes(&t, 400));
    let rho = rate(cfg)?;
    let identity_ok = worst <= IDENTITY_TOL;
    let dissipative = est.sup <= -rho + 1e-6;
    println!("model = {}", cfg.sde.name);
    println!("closed_form = {}", t.is_closed_form());
    println!("image = [{}, {}]", t.image().0, t.image().1);
    println!("identity_residual = {worst:e} ({})", verdict(identity_ok));
    println!("sup_drift_derivative = {} at y = {}", est.sup, est.at);
    println!("rho = {rho} (dissipativity {})", verdict(dissipative));
    for n in t.notes() {
        println!("note = {n}");
    }
    Ok(identity_ok && dissipative)
}

fn scheme_config(cfg: &RunConfig) -> SchemeConfig {
    SchemeConfig {
        scheme: cfg.scheme,
        dt: cfg.dt,
        floor_eps: cfg.floor_eps,
        record_every: 1,
    }
}

pub fn simulate(cfg: &RunConfig) -> CmdResult {
    let w = Writer::new(cfg, Command::Simulate)?;
    let g = gibbs(cfg)?;
    let x0 = cfg.x0.unwrap_or_else(|| g.mean());
    let checkpoints = cfg
        .checkpoints
        .clone()
        .unwrap_or_else(|| (0..=10).map(|i| cfg.horizon * i as f64 / 10.0).collect());
    let ens = run_ensemble(&cfg.sde, &vec![x0; cfg.paths], &scheme_config(cfg), &checkpoints, cfg.seed)?;
    let (lo, hi) = if cfg.sde.domain.left_finite() && cfg.sde.domain.right_finite() {
        (cfg.sde.domain.left, cfg.sde.domain.right)
    } else {
        g.tail_truncation(cfg.tail_eps)?
    };
    let grid = Arc::new(Grid::uniform(lo, hi, cfg.bins)?);
    let reference = g.on_grid(grid.clone())?;
    w.write("summary.csv", &ens.summary_csv(Some(&reference))?)?;

    let last = ens.times.len() - 1;
    let hist = histogram(&ens.states[last], grid.clone())?;
    let mut body = String::from("y,empirical,stationary\n");
    for ((y, e), s) in grid.centers().iter().zip(hist.values()).zip(reference.values()) {
        body.push_str(&format!("{y:.12e},{e:.12e},{s:.12e}\n"));
    }
    w.write("histogram.csv", &body)?;
    println!("model = {}", cfg.sde.name);
    println!("scheme = {}", cfg.scheme.label());
    println!("paths = {}, x0 = {x0}, dt = {}", cfg.paths, cfg.dt);
    println!("final_mean = {} (stationary {})", ens.mean(last), g.mean());
    println!("final_variance = {} (stationary {})", ens.variance(last), g.variance());
    println!("final_l1_to_stationary = {}", l1_distance(&hist, &reference)?);
    println!("clamps = {}, halvings = {}", ens.events.clamps, ens.events.halvings);
    Ok(true)
}

pub fn pullback(cfg: &RunConfig) -> CmdResult {
    let w = Writer::new(cfg, Command::Pullback)?;
    let starts = match &cfg.starts {
        Some(s) => s.clone(),
        None => {
            let g = gibbs(cfg)?;
            let sd = g.variance().sqrt();
            let d = cfg.sde.domain;
            let inside = |x: f64| if d.contains_interior(x) { x } else { 0.5 * (x.clamp(d.left, d.right) + g.mean()) };
            vec![inside(g.mean() - sd), g.mean(), inside(g.mean() + sd)]
        }
    };
    if starts.len() < 2 {
        return Err("pullback needs at least two starts".into());
    }
    let sim = Simulator::new(&cfg.sde, &scheme_config(cfg))?;
    let mut internal: Vec<f64> = starts.iter().map(|&x| sim.to_internal(x)).collect();
    internal.sort_by(f64::total_cmp);
    let d0 = internal[internal.len() - 1] - internal[0];

    let mut body = String::from("seed,T,diameter_y,diameter_x,ordered\n");
    let mut all_ordered = true;
    let mut shrinks = true;
    for s in 0..cfg.seeds {
        let seed = cfg.seed.wrapping_add(s);
        let runs = pullback_diameter(&sim, &starts, &cfg.horizons, seed)?;
        for r in &runs {
            body.push_str(&format!("{seed},{},{:.12e},{:.12e},{}\n", r.horizon, r.diameter, r.diameter_x, r.ordered));
            all_ordered &= r.ordered;
        }
        if let Some(r) = runs.iter().max_by(|a, b| a.horizon.total_cmp(&b.horizon)) {
            shrinks &= r.diameter < d0;
        }
    }
    w.write("pullback.csv", &body)?;
    println!("model = {}", cfg.sde.name);
    println!("scheme = {}", cfg.scheme.label());
    println!("starts = {starts:?}, initial diameter = {d0}");
    println!("ordering preserved = {} ({})", all_ordered, verdict(all_ordered));
    println!("diameter shrinks by the longest horizon = {} ({})", shrinks, verdict(shrinks));
    Ok(all_ordered && shrinks)
}

pub fn dispatch(cfg: &RunConfig, command: Command) -> CmdResult {
    match command {
        Command::Check => check(cfg),
        Command::Stationary => stationary(cfg),
        Command::Evolve => evolve(cfg),
        Command::Gamma2 => gamma2(cfg),
        Command::Lamperti => lamperti(cfg),
        Command::Simulate => simulate(cfg),
        Command::Pullback => pullback(cfg),
    }
}
