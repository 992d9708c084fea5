//! Run configuration: model keys plus command keys, parsed strictly.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use ergodic::config::{ConfigError, Entry, KeyValueFile};
use ergodic::model::{is_model_key, model_from_config, ScalarSde};
use ergodic::montecarlo::Scheme;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Stationary,
    Evolve,
    Gamma2,
    Lamperti,
    Simulate,
    Pullback,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Stationary => "stationary",
            Command::Evolve => "evolve",
            Command::Gamma2 => "gamma2",
            Command::Lamperti => "lamperti",
            Command::Simulate => "simulate",
            Command::Pullback => "pullback",
        }
    }

    pub fn parse(s: &str) -> Option<Command> {
        [
            Command::Check,
            Command::Stationary,
            Command::Evolve,
            Command::Gamma2,
            Command::Lamperti,
            Command::Simulate,
            Command::Pullback,
        ]
        .into_iter()
        .find(|c| c.name() == s)
    }
}

/// Command keys: name, default (empty when derived from the model), meaning.
pub const RUN_KEYS: &[(&str, &str, &str)] = &[
    ("command", "", "command to run with `ergodic run`"),
    ("seed", "42", "master seed for every random draw"),
    ("out", "out", "output directory"),
    ("grid", "2000", "solver cells"),
    ("tail_eps", "1e-12", "stationary mass cut from infinite ends"),
    ("dt", "1e-3", "time step"),
    ("horizon", "10", "final time"),
    ("observe_every", "10", "evolve: steps between trace records"),
    ("snapshot_every", "", "evolve: records between density snapshots (off when unset)"),
    ("start", "bump", "evolve: bump | point | stationary"),
    ("start.center", "", "evolve: bump center (default: stationary mean + 1 sd)"),
    ("start.width", "", "evolve: bump width (default: 0.1 sd)"),
    ("rho", "", "curvature rate override (default: estimated)"),
    ("envelope_slack", "1.05", "tolerance factor on exponential envelopes"),
    ("anchor", "", "anchor of the potential (default: stationary mode)"),
    ("probes", "", "probe count (check 200, gamma2 20, lamperti 50)"),
    ("scheme", "lamperti-implicit", "projected-euler | lamperti-projected-euler | lamperti-implicit"),
    ("floor_eps", "", "distance kept from singular image endpoints"),
    ("paths", "1000", "simulate: ensemble size"),
    ("x0", "", "simulate: start (default: stationary mean)"),
    ("checkpoints", "", "simulate: comma list of times (default: 10 even steps)"),
    ("bins", "80", "simulate: histogram cells"),
    ("starts", "", "pullback: comma list of starts (default: mean - sd, mean, mean + sd)"),
    ("horizons", "1,2,5,10", "pullback: comma list of horizons"),
    ("seeds", "1", "pullback: number of master seeds, counting up from seed"),
];

pub fn keys_help() -> String {
    let mut s = String::from("Config keys (model keys: model, drift, diffusion, domain, param.<name>):\n");
    for (k, d, m) in RUN_KEYS {
        let d = if d.is_empty() { String::new() } else { format!(" [default: {d}]") };
        let _ = writeln!(s, "  {k:<16} {m}{d}");
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub enum StartSpec {
    Bump,
    Point,
    Stationary,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub sde: ScalarSde,
    pub seed: u64,
    pub out: PathBuf,
    pub grid: usize,
    pub tail_eps: f64,
    pub dt: f64,
    pub horizon: f64,
    pub observe_every: usize,
    pub snapshot_every: Option<usize>,
    pub start: StartSpec,
    pub start_center: Option<f64>,
    pub start_width: Option<f64>,
    pub rho: Option<f64>,
    pub envelope_slack: f64,
    pub anchor: Option<f64>,
    pub probes: Option<usize>,
    pub scheme: Scheme,
    pub floor_eps: Option<f64>,
    pub paths: usize,
    pub x0: Option<f64>,
    pub checkpoints: Option<Vec<f64>>,
    pub bins: usize,
    pub starts: Option<Vec<f64>>,
    pub horizons: Vec<f64>,
    pub seeds: u64,
    /// SHA-256 of the canonical effective configuration, `out` excluded.
    pub config_hash: String,
}

fn value_err(e: &Entry, msg: String) -> ConfigError {
    ConfigError::Value {
        line: e.line,
        key: e.key.clone(),
        msg,
    }
}

fn get<T: FromStr>(file: &KeyValueFile, key: &str) -> Result<Option<T>, ConfigError> {
    match file.get(key) {
        None => Ok(None),
        Some(e) => e
            .value
            .parse()
            .map(Some)
            .map_err(|_| value_err(e, format!("cannot parse `{}`", e.value))),
    }
}

fn get_or<T: FromStr>(file: &KeyValueFile, key: &str) -> Result<T, ConfigError> {
    let default = RUN_KEYS
        .iter()
        .find(|(k, _, _)| *k == key)
        .map(|(_, d, _)| *d)
        .expect("known key");
    match get(file, key)? {
        Some(v) => Ok(v),
        None => Ok(default.parse().ok().expect("valid default")),
    }
}

fn get_list(file: &KeyValueFile, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
    let Some(e) = file.get(key) else {
        return Ok(None);
    };
    e.value
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
        .map_err(|_| value_err(e, format!("expected a comma list of numbers, got `{}`", e.value)))
}

fn constraint(file: &KeyValueFile, key: &str, msg: &str) -> ConfigError {
    ConfigError::Constraint {
        line: file.get(key).map_or(0, |e| e.line),
        key: key.to_string(),
        msg: msg.to_string(),
    }
}

fn config_hash(file: &KeyValueFile) -> String {
    let text: String = file
        .canonical()
        .lines()
        .filter(|l| !l.starts_with("out = "))
        .map(|l| format!("{l}\n"))
        .collect();
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

impl RunConfig {
    /// Validates every key and fills defaults.
    pub fn from_file(file: &KeyValueFile) -> Result<RunConfig, ConfigError> {
        for e in file.entries() {
            if !is_model_key(&e.key) && !RUN_KEYS.iter().any(|(k, _, _)| *k == e.key) {
                return Err(ConfigError::UnknownKey {
                    line: e.line,
                    key: e.key.clone(),
                });
            }
        }
        let sde = model_from_config(file)?;
        let command = match file.get("command") {
            None => None,
            Some(e) => Some(
                Command::parse(&e.value)
                    .ok_or_else(|| value_err(e, format!("unknown command `{}`", e.value)))?,
            ),
        };
        let start = match file.get("start") {
            None => StartSpec::Bump,
            Some(e) => match e.value.as_str() {
                "bump" => StartSpec::Bump,
                "point" => StartSpec::Point,
                "stationary" => StartSpec::Stationary,
                other => return Err(value_err(e, format!("unknown start `{other}`"))),
            },
        };
        let scheme = match file.get("scheme") {
            None => Scheme::LampertiImplicit,
            Some(e) => Scheme::parse(&e.value).ok_or_else(|| value_err(e, format!("unknown scheme `{}`", e.value)))?,
        };
        let cfg = RunConfig {
            command,
            sde,
            seed: get_or(file, "seed")?,
            out: PathBuf::from(get_or::<String>(file, "out")?),
            grid: get_or(file, "grid")?,
            tail_eps: get_or(file, "tail_eps")?,
            dt: get_or(file, "dt")?,
            horizon: get_or(file, "horizon")?,
            observe_every: get_or(file, "observe_every")?,
            snapshot_every: get(file, "snapshot_every")?,
            start,
            start_center: get(file, "start.center")?,
            start_width: get(file, "start.width")?,
            rho: get(file, "rho")?,
            envelope_slack: get_or(file, "envelope_slack")?,
            anchor: get(file, "anchor")?,
            probes: get(file, "probes")?,
            scheme,
            floor_eps: get(file, "floor_eps")?,
            paths: get_or(file, "paths")?,
            x0: get(file, "x0")?,
            checkpoints: get_list(file, "checkpoints")?,
            bins: get_or(file, "bins")?,
            starts: get_list(file, "starts")?,
            horizons: get_list(file, "horizons")?.unwrap_or_else(|| vec![1.0, 2.0, 5.0, 10.0]),
            seeds: get_or(file, "seeds")?,
            config_hash: config_hash(file),
        };
        cfg.validate(file)?;
        Ok(cfg)
    }

    fn validate(&self, file: &KeyValueFile) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(constraint(file, key, &format!("{key} > 0 violated ({key} = {v})")))
            }
        };
        positive("dt", self.dt)?;
        positive("horizon", self.horizon)?;
        positive("tail_eps", self.tail_eps)?;
        positive("envelope_slack", self.envelope_slack)?;
        if let Some(r) = self.rho {
            positive("rho", r)?;
        }
        if let Some(w) = self.start_width {
            positive("start.width", w)?;
        }
        if self.floor_eps.is_some_and(|f| !(f >= 0.0)) {
            return Err(constraint(file, "floor_eps", "floor_eps ≥ 0 violated"));
        }
        if self.grid < 16 {
            return Err(constraint(file, "grid", "grid ≥ 16 violated"));
        }
        for (key, v) in [
            ("observe_every", self.observe_every),
            ("paths", self.paths),
            ("bins", self.bins),
            ("seeds", self.seeds as usize),
        ] {
            if v == 0 {
                return Err(constraint(file, key, &format!("{key} ≥ 1 violated")));
            }
        }
        if self.horizons.iter().any(|t| !(*t > 0.0)) {
            return Err(constraint(file, "horizons", "horizons must be positive"));
        }
        if let Some(c) = &self.checkpoints {
            if c.iter().any(|t| !(*t >= 0.0)) {
                return Err(constraint(file, "checkpoints", "checkpoints must be non-negative"));
            }
        }
        Ok(())
    }
}
