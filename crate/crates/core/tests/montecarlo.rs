use std::collections::BTreeMap;
use std::sync::Arc;

use ergodic::grid::{DensityField, Grid};
use ergodic::model::{make_model, DomainInterval, ModelParams, ScalarSde};
use ergodic::montecarlo::{
    empirical_density, histogram, l1_distance, pullback_diameter, run_ensemble, sample_noise, sample_noise_range,
    simulate, simulate_with, two_path_contraction, McError, Scheme, SchemeConfig, Simulator,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use statrs::distribution::{ContinuousCDF, Gamma as GammaLaw};

const SCHEMES: [Scheme; 3] = [Scheme::ProjectedEuler, Scheme::LampertiProjectedEuler, Scheme::LampertiImplicit];

fn cir() -> ScalarSde {
    make_model(ModelParams::Cir { k: 1.0, theta: 1.0, sigma: 1.0 }).unwrap()
}

fn wf(theta1: f64, theta2: f64) -> ScalarSde {
    make_model(ModelParams::WrightFisher { theta1, theta2 }).unwrap()
}

fn cfg(scheme: Scheme, dt: f64) -> SchemeConfig {
    SchemeConfig {
        scheme,
        dt,
        ..SchemeConfig::default()
    }
}

/// Cell averages of the CIR(1,1,1) stationary law on `grid`.
fn gamma_cells(grid: &Arc<Grid>) -> DensityField {
    let law = GammaLaw::new(2.0, 2.0).unwrap();
    let f = grid.interfaces();
    let values = (0..grid.n_cells())
        .map(|i| (law.cdf(f[i + 1]) - law.cdf(f[i])) / (f[i + 1] - f[i]))
        .collect();
    DensityField::from_values(grid.clone(), values)
}

#[test]
fn noise_is_reproducible_and_seeded() {
    let a = sample_noise(7, 2.0, 1e-2).unwrap();
    let b = sample_noise(7, 2.0, 1e-2).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_steps(), 200);
    let c = sample_noise(8, 2.0, 1e-2).unwrap();
    assert_ne!(a.increments, c.increments);
    let tail = sample_noise_range(7, 0, 150, 50, 1e-2);
    assert_eq!(&a.increments[150..], &tail.increments[..]);
    assert!(matches!(sample_noise(7, 1.0, 0.0), Err(McError::BadStep(_))));
    assert!(matches!(sample_noise(7, -1.0, 0.1), Err(McError::BadHorizon(_))));
}

#[test]
fn brownian_endpoint_clt_band() {
    let n = 10_000;
    let ends: Vec<f64> = (0..n)
        .map(|p| sample_noise_range(3, p, 0, 100, 1e-2).increments.iter().sum())
        .collect();
    let mean = ends.iter().sum::<f64>() / n as f64;
    let var = ends.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    assert!(mean.abs() <= 3.0 / (n as f64).sqrt(), "{mean}");
    assert!((var - 1.0).abs() <= 3.0 * (2.0 / n as f64).sqrt(), "{var}");
}

#[test]
fn cir_paths_stay_nonnegative_under_every_scheme() {
    let noise = sample_noise(11, 100.0, 1e-3).unwrap();
    assert_eq!(noise.n_steps(), 100_000);
    for scheme in SCHEMES {
        let tr = simulate(&cir(), 0.5, &noise, &cfg(scheme, 1e-3)).unwrap();
        assert_eq!(tr.states.len(), 100_001);
        let min = tr.states.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= 0.0, "{}: {min}", scheme.label());
        assert!(tr.states.iter().all(|x| x.is_finite()));
    }
}

#[test]
fn wright_fisher_paths_stay_in_unit_interval() {
    let noise = sample_noise(5, 20.0, 1e-3).unwrap();
    for scheme in SCHEMES {
        for x0 in [0.0, 0.01, 0.5, 1.0] {
            if scheme.is_lamperti() && (x0 == 0.0 || x0 == 1.0) {
                continue;
            }
            let tr = simulate(&wf(1.0, 1.0), x0, &noise, &cfg(scheme, 1e-3)).unwrap();
            assert!(tr.states.iter().all(|x| (0.0..=1.0).contains(x)), "{}", scheme.label());
        }
    }
}

#[test]
fn times_are_uniform() {
    let noise = sample_noise(1, 1.0, 1e-2).unwrap();
    let tr = simulate(&cir(), 1.0, &noise, &SchemeConfig { record_every: 10, ..cfg(Scheme::LampertiImplicit, 1e-2) }).unwrap();
    assert_eq!(tr.times.len(), 11);
    for (i, t) in tr.times.iter().enumerate() {
        assert!((t - 0.1 * i as f64).abs() < 1e-12);
    }
    assert_eq!(tr.lamperti.as_ref().unwrap().len(), 11);
}

#[test]
fn zero_diffusion_recovers_the_ode() {
    let sde = ScalarSde::custom("ode", "1 - x", "0", DomainInterval::new(0.0, f64::INFINITY).unwrap(), &BTreeMap::new())
        .unwrap();
    let dt = 1e-6;
    let noise = sample_noise(0, 1.0, dt).unwrap();
    let tr = simulate(&sde, 2.0, &noise, &SchemeConfig { record_every: 1000, ..cfg(Scheme::ProjectedEuler, dt) }).unwrap();
    let x1 = *tr.states.last().unwrap();
    assert!((x1 - (1.0 + (-1f64).exp())).abs() < 1e-6, "{x1}");
}

#[test]
fn starts_and_configs_are_validated() {
    assert!(matches!(Simulator::new(&cir(), &cfg(Scheme::ProjectedEuler, 0.0)), Err(McError::BadStep(_))));
    let bad_floor = SchemeConfig { floor_eps: Some(-1.0), ..SchemeConfig::default() };
    assert!(matches!(Simulator::new(&cir(), &bad_floor), Err(McError::BadFloor)));
    let sim = Simulator::new(&cir(), &SchemeConfig::default()).unwrap();
    assert!(matches!(sim.start(-1.0), Err(McError::BadStart(_))));
    assert!(matches!(sim.start(f64::NAN), Err(McError::BadStart(_))));
}

#[test]
fn empirical_density_of_stationary_starts() {
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let law = Gamma::new(2.0, 0.5).unwrap();
    let starts: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
    let grid = Arc::new(Grid::uniform(0.0, 10.0, 50).unwrap());
    let h = histogram(&starts, grid.clone()).unwrap();
    let l1 = l1_distance(&h, &gamma_cells(&grid)).unwrap();
    assert!(l1 <= 10.0 * 2.0 / (n as f64).sqrt(), "{l1}");
}

#[test]
fn empirical_density_edge_cases() {
    let grid = Arc::new(Grid::uniform(0.0, 2.0, 1).unwrap());
    let noise = sample_noise(2, 0.1, 1e-2).unwrap();
    let tr = simulate(&cir(), 1.0, &noise, &cfg(Scheme::LampertiImplicit, 1e-2)).unwrap();
    let d = empirical_density(std::slice::from_ref(&tr), 0.0, grid.clone()).unwrap();
    assert_eq!(d.values(), &[0.5]);
    assert!(matches!(empirical_density(&[], 0.0, grid.clone()), Err(McError::EmptyEnsemble)));
    assert!(matches!(empirical_density(&[tr], 5.0, grid), Err(McError::TimeNotCovered(_))));
}

#[test]
fn cir_ensemble_reaches_gamma_law() {
    let n = 100_000;
    let starts = vec![2.0; n];
    let res = run_ensemble(&cir(), &starts, &cfg(Scheme::LampertiImplicit, 1e-2), &[20.0], 2024).unwrap();
    let grid = Arc::new(Grid::uniform(0.0, 10.0, 50).unwrap());
    let h = histogram(&res.states[0], grid.clone()).unwrap();
    let l1 = l1_distance(&h, &gamma_cells(&grid)).unwrap();
    assert!(l1 <= 0.05, "{l1}");
}

#[test]
fn cir_ensemble_mean_follows_the_mean_ode() {
    let n = 10_000;
    let starts = vec![2.0; n];
    let times = [0.5, 1.0, 2.0];
    let res = run_ensemble(&cir(), &starts, &cfg(Scheme::LampertiImplicit, 1e-3), &times, 17).unwrap();
    for (k, &t) in times.iter().enumerate() {
        let expect = 1.0 + (2.0 - 1.0) * (-t).exp();
        let se = (res.variance(k) / n as f64).sqrt();
        assert!((res.mean(k) - expect).abs() <= 3.0 * se, "t={t}: {} vs {expect} (se {se})", res.mean(k));
    }
    let csv = res.summary_csv(None).unwrap();
    assert!(csv.starts_with("t,mean,var,l1_to_stationary\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn ensemble_is_deterministic_and_matches_single_paths() {
    let starts = [0.2, 1.0, 3.0, 5.0];
    for scheme in SCHEMES {
        let c = cfg(scheme, 1e-2);
        let a = run_ensemble(&cir(), &starts, &c, &[0.0, 1.0, 2.5], 5).unwrap();
        let b = run_ensemble(&cir(), &starts, &c, &[0.0, 1.0, 2.5], 5).unwrap();
        assert_eq!(a, b);
        for (p, &x0) in starts.iter().enumerate() {
            let noise = sample_noise_range(5, p as u64, 0, 250, 1e-2);
            let tr = simulate(&cir(), x0, &noise, &c).unwrap();
            assert_eq!(a.states[0][p], tr.states[0]);
            assert_eq!(a.states[1][p], tr.states[100]);
            assert_eq!(a.states[2][p], tr.states[250]);
        }
    }
}

#[test]
fn shared_noise_contraction() {
    let sim = Simulator::new(&cir(), &cfg(Scheme::LampertiImplicit, 1e-3)).unwrap();
    for seed in 0..10 {
        let noise = sample_noise(seed, 10.0, 1e-3).unwrap();
        let c = two_path_contraction(&sim, 1.0, 3.0, &noise, 0.5).unwrap();
        assert!(c.ratio <= 1.01 && c.ordered, "seed {seed}: {c:?}");
    }
    let noise = sample_noise(0, 1.0, 1e-3).unwrap();
    assert!(matches!(two_path_contraction(&sim, 1.0, 1.0, &noise, 0.5), Err(McError::ZeroSeparation)));
}

#[test]
fn identical_starts_never_separate() {
    let noise = sample_noise(4, 5.0, 1e-3).unwrap();
    for scheme in SCHEMES {
        let sim = Simulator::new(&wf(1.0, 1.0), &cfg(scheme, 1e-3)).unwrap();
        let a = simulate_with(&sim, 0.3, &noise).unwrap();
        let b = simulate_with(&sim, 0.3, &noise).unwrap();
        assert_eq!(a.states, b.states);
    }
}

#[test]
fn pullback_diameters_shrink_and_keep_order() {
    let sim = Simulator::new(&cir(), &cfg(Scheme::LampertiImplicit, 1e-3)).unwrap();
    let runs = pullback_diameter(&sim, &[0.1, 1.0, 4.0], &[1.0, 2.0, 5.0, 10.0], 8).unwrap();
    let d0 = 2.0 * 4f64.sqrt() - 2.0 * 0.1f64.sqrt();
    for w in runs.windows(2) {
        assert!(w[1].diameter <= w[0].diameter + 1e-9);
    }
    for r in &runs {
        assert!(r.ordered);
        assert!(r.diameter <= d0 * (-0.5 * r.horizon).exp() * 1.05, "T={}: {}", r.horizon, r.diameter);
        assert!(r.arrivals.windows(2).all(|w| w[1] >= w[0]));
    }
    assert!(matches!(pullback_diameter(&sim, &[1.0], &[0.0], 8), Err(McError::BadHorizon(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lamperti_schemes_preserve_order(
        x0 in 0.01f64..3.0,
        gap in 1e-6f64..2.0,
        seed in any::<u64>(),
        implicit in any::<bool>(),
    ) {
        let scheme = if implicit { Scheme::LampertiImplicit } else { Scheme::LampertiProjectedEuler };
        let noise = sample_noise(seed, 3.0, 1e-3).unwrap();
        let sim = Simulator::new(&cir(), &cfg(scheme, 1e-3)).unwrap();
        let a = simulate_with(&sim, x0, &noise).unwrap();
        let b = simulate_with(&sim, x0 + gap, &noise).unwrap();
        for (p, q) in a.states.iter().zip(&b.states) {
            prop_assert!(p <= q);
        }
    }

    #[test]
    fn wright_fisher_order_is_preserved(x0 in 0.01f64..0.9, gap in 1e-6f64..0.09, seed in any::<u64>()) {
        let noise = sample_noise(seed, 2.0, 1e-3).unwrap();
        let sim = Simulator::new(&wf(1.0, 2.0), &cfg(Scheme::LampertiImplicit, 1e-3)).unwrap();
        let a = simulate_with(&sim, x0, &noise).unwrap();
        let b = simulate_with(&sim, x0 + gap, &noise).unwrap();
        for (p, q) in a.lamperti.as_ref().unwrap().iter().zip(b.lamperti.as_ref().unwrap()) {
            prop_assert!(p <= q);
        }
    }
}
