use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const CIR: &str = "model = cir\nparam.k = 1\nparam.theta = 1\nparam.sigma = 1\n";

fn ergodic(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergodic"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn with_config(text: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.cfg"), text).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(report: &str, key: &str) -> f64 {
    let prefix = format!("{key} = ");
    let line = report.lines().find(|l| l.starts_with(&prefix)).unwrap_or_else(|| panic!("no {key}"));
    line[prefix.len()..].split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn cir_check_passes() {
    let dir = with_config(CIR);
    let o = ergodic(dir.path(), &["check", "--config", "run.cfg"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("z_finite = pass"));
    assert!((value(&out, "internal_c_min") - 1.0).abs() < 1e-9);
    assert!((value(&out, "internal_c_max") - 1.0).abs() < 1e-9);
    let csv = fs::read_to_string(dir.path().join("out/check.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn wright_fisher_below_half_is_an_error() {
    let dir = with_config("model = wright_fisher\nparam.theta1 = 0.4\nparam.theta2 = 1\n");
    let o = ergodic(dir.path(), &["check", "--config", "run.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("θ₁ ≥ 1/2"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = with_config(&format!("{CIR}foo = 1\n"));
    let o = ergodic(dir.path(), &["check", "--config", "run.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 5") && err.contains("unknown key `foo`"), "{err}");
}

#[test]
fn negative_rate_constant_names_k() {
    let dir = with_config("model = cir\nparam.k = -1\nparam.theta = 1\nparam.sigma = 1\n");
    let o = ergodic(dir.path(), &["check", "--config", "run.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 2") && err.contains("k > 0"), "{err}");
}

#[test]
fn malformed_line_reports_its_number() {
    let dir = with_config("model = cir\nparam.k 1\n");
    let o = ergodic(dir.path(), &["check", "--config", "run.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn evolve_with_estimated_rate_passes() {
    let dir = with_config(CIR);
    let o = ergodic(dir.path(), &["evolve", "--config", "run.cfg", "--set", "start.center=2"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("envelope_violations = 0"));
}

#[test]
fn evolve_with_rate_above_true_decay_exits_2() {
    // The relative entropy of CIR(1,1,1) decays like e^{-2t}; 2.5 is too fast.
    let dir = with_config(CIR);
    let o = ergodic(dir.path(), &["evolve", "--config", "run.cfg", "--set", "rho=2.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("(FAIL)"));
    let dir = with_config("model = ou\nparam.lambda = 1\nparam.sigma = 1.4142135623730951\n");
    let o = ergodic(dir.path(), &["evolve", "--config", "run.cfg", "--set", "rho=3"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
}

#[test]
fn tripled_cir_rate_stays_below_observed_decay() {
    let dir = with_config(CIR);
    let o = ergodic(
        dir.path(),
        &["evolve", "--config", "run.cfg", "--set", "rho=1.5", "--set", "start.center=2"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(value(&stdout(&o), "fitted_log_kl_slope") < -1.9);
}

#[test]
fn run_dispatches_on_command_key_and_rejects_mismatch() {
    let dir = with_config(&format!("command = lamperti\n{CIR}"));
    let o = ergodic(dir.path(), &["run", "--config", "run.cfg"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("out/lamperti.csv").exists());
    let o = ergodic(dir.path(), &["check", "--config", "run.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    let dir = with_config(CIR);
    assert_eq!(ergodic(dir.path(), &["run", "--config", "run.cfg"]).status.code(), Some(1));
}

#[test]
fn config_can_come_from_flags_alone() {
    let dir = TempDir::new().unwrap();
    let o = ergodic(
        dir.path(),
        &[
            "gamma2", "--set", "model=wright_fisher", "--set", "param.theta1=1", "--set", "param.theta2=1",
            "--out", "g",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!((value(&stdout(&o), "rho") - 1.5).abs() < 1e-6);
    assert!(dir.path().join("g/cd.csv").exists());
}

fn every_command(dir: &Path, out: &str) {
    for c in ["check", "stationary", "evolve", "gamma2", "lamperti", "simulate", "pullback"] {
        let o = ergodic(
            dir,
            &[
                c, "--config", "run.cfg", "--out", out, "--seed", "7", "--horizon", "2", "--set", "paths=200",
                "--set", "snapshot_every=50",
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{c}: {}{}", stdout(&o), stderr(&o));
    }
}

#[test]
fn outputs_are_byte_identical_and_carry_a_manifest() {
    let dir = with_config(CIR);
    every_command(dir.path(), "a");
    every_command(dir.path(), "b");
    let mut names: Vec<_> = fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.len() >= 9, "{names:?}");
    let mut hash = None;
    for n in &names {
        let a = fs::read(dir.path().join("a").join(n)).unwrap();
        let b = fs::read(dir.path().join("b").join(n)).unwrap();
        assert_eq!(a, b, "{n} differs");
        let text = String::from_utf8(a).unwrap();
        assert!(!text.contains('\r'));
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("# ergodic ") && first.contains(" seed=7 "), "{n}: {first}");
        let h = first.split("config_sha256=").nth(1).unwrap().split(' ').next().unwrap().to_string();
        assert_eq!(h.len(), 64);
        assert_eq!(hash.get_or_insert(h.clone()), &h);
        let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
        assert!(header.contains(',') && header.chars().next().unwrap().is_ascii_alphabetic(), "{n}: {header}");
    }
}

#[test]
fn seed_changes_random_outputs_only() {
    let dir = with_config(CIR);
    for (seed, out) in [("1", "s1"), ("2", "s2")] {
        for c in ["stationary", "simulate"] {
            let o = ergodic(dir.path(), &[c, "--config", "run.cfg", "--seed", seed, "--out", out, "--set", "paths=100"]);
            assert_eq!(o.status.code(), Some(0));
        }
    }
    let body = |out: &str, f: &str| {
        let t = fs::read_to_string(dir.path().join(out).join(f)).unwrap();
        t.lines().skip(1).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(body("s1", "stationary.csv"), body("s2", "stationary.csv"));
    assert_ne!(body("s1", "summary.csv"), body("s2", "summary.csv"));
}

#[test]
fn help_documents_defaults() {
    let o = ergodic(Path::new("."), &["evolve", "--help"]);
    let out = stdout(&o);
    for key in ["seed", "grid", "dt", "horizon", "envelope_slack", "scheme"] {
        assert!(out.contains(key), "{key} missing from help");
    }
    assert!(out.contains("[default: 42]"));
}
