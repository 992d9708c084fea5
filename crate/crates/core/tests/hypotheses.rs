use ergodic::hypotheses::{
    ait_sahalia_cases, check_all, check_boundary_conditions, check_hypothesis_b, curvature, estimate_rho,
    internal_condition, search_interval, CheckConfig, ConfinementClass, RhoSearch, Verdict,
};
use ergodic::model::{make_model, DomainInterval, ModelParams, ScalarSde};
use ergodic::quadrature::QuadConfig;
use ergodic::search::chebyshev_points;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn cir(k: f64, theta: f64, sigma: f64) -> ScalarSde {
    make_model(ModelParams::Cir { k, theta, sigma }).unwrap()
}

fn wf(theta1: f64, theta2: f64) -> ScalarSde {
    make_model(ModelParams::WrightFisher { theta1, theta2 }).unwrap()
}

fn ou(lambda: f64, sigma: f64) -> ScalarSde {
    make_model(ModelParams::OrnsteinUhlenbeck { lambda, sigma }).unwrap()
}

/// Curvature of Wright-Fisher derived by hand from the coefficients.
fn wf_curvature(t1: f64, t2: f64, y: f64) -> f64 {
    ((t1 - 0.25) * (1.0 - y) + (t2 - 0.25) * y) / (2.0 * y * (1.0 - y))
}

#[test]
fn boundary_clause_examples() {
    let r = check_boundary_conditions(&cir(1.0, 1.0, 1.0), 100);
    let left = r.left.as_ref().unwrap();
    assert_eq!(left.drift, 1.0);
    assert_eq!(left.drift_points_inward, Verdict::Pass);
    assert_eq!(left.diffusion_vanishes, Verdict::Pass);
    assert!(r.right.is_none());
    assert!(r.passed());

    let r = check_boundary_conditions(&wf(1.0, 1.0), 100);
    assert_eq!(r.left.as_ref().unwrap().drift, 1.0);
    assert_eq!(r.right.as_ref().unwrap().drift, -1.0);
    assert!(r.passed());

    let r = check_boundary_conditions(&ou(1.0, 2f64.sqrt()), 100);
    assert!(r.left.is_none() && r.right.is_none());
    assert!(r.passed());
}

#[test]
fn boundary_clause_detects_outward_drift() {
    let mut p = BTreeMap::new();
    p.insert("s".to_string(), 1.0);
    let sde = ScalarSde::custom("outward", "-1 - x", "s*sqrt(x)", DomainInterval::new(0.0, f64::INFINITY).unwrap(), &p)
        .unwrap();
    let r = check_boundary_conditions(&sde, 50);
    assert_eq!(r.left.unwrap().drift_points_inward, Verdict::Fail);
}

#[test]
fn normalization_examples() {
    let q = QuadConfig::default();
    let hb = check_hypothesis_b(&cir(1.0, 1.0, 1.0), &q);
    assert_eq!(hb.z.finite, Verdict::Pass);
    assert!(hb.z.value > 0.0);
    let hb = check_hypothesis_b(&wf(1.0, 1.0), &q);
    assert_eq!(hb.z.finite, Verdict::Pass);
    assert!(hb.passed());
}

#[test]
fn curvature_examples() {
    assert!((curvature(&cir(1.0, 1.0, 1.0), 1.0).unwrap() - 0.875).abs() < 1e-12);
    assert!((curvature(&wf(1.0, 1.0), 0.5).unwrap() - 1.5).abs() < 1e-12);
    let o = ou(1.0, 2f64.sqrt());
    for y in [-3.0, 0.0, 2.5] {
        assert!((curvature(&o, y).unwrap() - 1.0).abs() < 1e-14);
    }
    assert!(curvature(&cir(1.0, 1.0, 1.0), 0.0).is_err());
}

#[test]
fn wf_curvature_matches_derived_form() {
    for (t1, t2) in [(1.0, 1.0), (1.0, 2.0), (0.75, 3.0)] {
        let sde = wf(t1, t2);
        for y in chebyshev_points(0.0, 1.0, 100) {
            let c = curvature(&sde, y).unwrap();
            let e = wf_curvature(t1, t2, y);
            assert!((c - e).abs() <= 1e-10 * e.abs().max(1.0), "({t1},{t2}) y={y}: {c} vs {e}");
        }
    }
}

#[test]
fn wf_displayed_quadratic_form_agrees_only_at_midpoint_for_symmetric_parameters() {
    let quad = |t1: f64, t2: f64, y: f64| ((t1 - 0.25) * (y - 1.0).powi(2) + (t2 - 0.25) * y * y) / (y * (1.0 - y));
    let sde = wf(1.0, 1.0);
    assert!((curvature(&sde, 0.5).unwrap() - quad(1.0, 1.0, 0.5)).abs() < 1e-12);
    assert!((curvature(&sde, 0.1).unwrap() - quad(1.0, 1.0, 0.1)).abs() > 1.0);
}

#[test]
fn wf_infimum_matches_closed_form() {
    for (t1, t2) in [(1.0, 1.0), (1.0, 2.0), (2.0, 0.75)] {
        let est = estimate_rho(&wf(t1, t2), &RhoSearch::default());
        let (a1, a2) = (t1 - 0.25_f64, t2 - 0.25_f64);
        let expect = 0.5 * (a1.sqrt() + a2.sqrt()).powi(2);
        let at = a1.sqrt() / (a1.sqrt() + a2.sqrt());
        assert!((est.value - expect).abs() < 1e-6, "({t1},{t2}) {} vs {expect}", est.value);
        assert!((est.location - at).abs() < 1e-3);
        assert!(!est.failed && !est.boundary_attained);
        assert!(est.value >= 2.0 * (a1 * a2).sqrt() - 1e-12);
    }
    let est = estimate_rho(&wf(1.0, 1.0), &RhoSearch::default());
    assert!((est.value - 1.5).abs() < 1e-6 && (est.location - 0.5).abs() < 1e-6);
}

#[test]
fn ou_curvature_is_constant() {
    let est = estimate_rho(&ou(1.0, 2f64.sqrt()), &RhoSearch::default());
    assert!((est.value - 1.0).abs() < 1e-12);
}

#[test]
fn cir_truncated_search_reports_edge_minimum() {
    let search = RhoSearch {
        truncation: Some((0.0, 50.0)),
        ..RhoSearch::default()
    };
    let est = estimate_rho(&cir(1.0, 1.0, 1.0), &search);
    assert!((est.value - 0.5075).abs() < 1e-9, "{}", est.value);
    assert!((est.location - 50.0).abs() < 1e-9);
    assert!(est.boundary_attained);
    assert!(est.note.is_some());
}

#[test]
fn internal_condition_constants() {
    for (sde, c) in [(cir(1.0, 1.0, 1.0), 1.0), (cir(2.5, 1.0, 1.0), 2.5), (wf(1.0, 1.0), 1.0), (wf(2.0, 1.5), 2.5), (ou(1.0, 2f64.sqrt()), 1.0)] {
        let r = internal_condition(&sde, 200).unwrap();
        assert!((r.min - c).abs() < 1e-10, "{}: {}", sde.name, r.min);
        assert!(r.max - r.min < 1e-10);
        assert_eq!(r.class, ConfinementClass::ConstantPositive);
    }
}

#[test]
fn internal_condition_distinguishes_non_constant() {
    let as_model = make_model(ModelParams::AitSahalia {
        k: 1.0,
        theta: 1.0,
        alpha: 1.0,
        beta: 1.0,
        sigma: 1.0,
        r: 2.0,
        p: 1.0,
    })
    .unwrap();
    let r = internal_condition(&as_model, 200).unwrap();
    assert_eq!(r.class, ConfinementClass::PositiveNonConstant);
}

#[test]
fn ait_sahalia_case_notes() {
    let params = |p| ModelParams::AitSahalia {
        k: 1.0,
        theta: 1.0,
        alpha: 1.0,
        beta: 1.0,
        sigma: 1.0,
        r: 2.0,
        p,
    };
    let notes = ait_sahalia_cases(&params(1.0));
    assert_eq!(notes.len(), 3);
    assert!(notes[2].applies && notes[2].holds == Some(true));
    assert!(!notes[0].applies && !notes[1].applies);
    let notes = ait_sahalia_cases(&params(0.5));
    assert!(notes[0].applies && notes[0].holds.is_none());
    let notes = ait_sahalia_cases(&params(1.5));
    assert!(notes[1].applies && notes[1].holds.is_some());
    assert!(ait_sahalia_cases(&ModelParams::Cir { k: 1.0, theta: 1.0, sigma: 1.0 }).is_empty());
}

#[test]
fn full_report_round_trip() {
    let r = check_all(&cir(1.0, 1.0, 1.0), &CheckConfig::default());
    assert!(r.passed());
    let rho = r.rho.as_ref().unwrap();
    assert!(rho.value >= 0.5 && rho.value < 0.6);
    let kv = r.to_key_value();
    assert!(kv.lines().any(|l| l.starts_with("rho_estimate = ")));
    let header = r.csv_header();
    let row = r.csv_row();
    assert_eq!(header.split(',').count(), row.split(',').count());
}

#[test]
fn report_withholds_rate_when_normalization_fails() {
    let sde = ScalarSde::custom("flat", "0", "1", DomainInterval::real_line(), &BTreeMap::new()).unwrap();
    let r = check_all(&sde, &CheckConfig::default());
    assert!(r.rho.is_none());
    assert!(!r.passed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn cir_curvature_closed_form(k in 0.2f64..4.0, extra in 0.0f64..2.0, sigma in 0.2f64..2.0, x in 1e-3f64..30.0) {
        let theta = (sigma * sigma / 2.0 + extra) / k;
        let c = curvature(&cir(k, theta, sigma), x).unwrap();
        let e = k / 2.0 + (k * theta - sigma * sigma / 4.0) / (2.0 * x);
        prop_assert!((c - e).abs() <= 1e-10 * e.abs().max(1.0));
    }

    #[test]
    fn rho_is_below_every_probe(t1 in 0.5f64..3.0, t2 in 0.5f64..3.0) {
        let sde = wf(t1, t2);
        let est = estimate_rho(&sde, &RhoSearch { n_coarse: 100, ..RhoSearch::default() });
        let (lo, hi) = search_interval(&sde);
        for y in chebyshev_points(lo, hi, 300) {
            prop_assert!(est.value <= curvature(&sde, y).unwrap() + 1e-12);
        }
    }
}
