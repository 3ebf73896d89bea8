use lpball::analytic::{sigma2, variance_v, variance_w};
use lpball::bounds::{gaussish_constant, BoundConstants, KBE_SHEVTSOVA};
use lpball::experiments::{
    envelope_check, fit_rate, run_convergence, run_study, to_csv, ConvergenceRow, ExperimentConfig, RateAxis,
};
use lpball::ks::{dkw_radius, ks_one_sample_gaussian, Ecdf};
use lpball::samplers::sample_yn;
use lpball::validation::{qnorm_study, run_suite, sqrt_k_study, Context, Suite};
use lpball::{Executor, Mode, ModelSpec, PIndex, RngStream, WSpec};
use proptest::prelude::*;

fn p(x: f64) -> PIndex {
    PIndex::new(x).unwrap()
}

fn synthetic(ns: &[usize], f: impl Fn(f64) -> f64, shape: impl Fn(f64) -> f64) -> Vec<ConvergenceRow> {
    ns.iter()
        .map(|&n| ConvergenceRow {
            n,
            k_or_lambda: None,
            m: 100_000,
            ks: f(n as f64),
            dkw: 0.0,
            target_var: 1.0,
            bound_shape: shape(n as f64),
            wall_ms: 0,
            shape_terms: None,
            error: None,
        })
        .collect()
}

#[test]
fn published_constants() {
    assert!((gaussish_constant(KBE_SHEVTSOVA) - 3.1166).abs() < 1e-12);
    for pv in [1.0, 2.0, 3.5] {
        assert_eq!(variance_w(0.0, p(pv)).unwrap().value, 0.75);
        assert_eq!(variance_v(0.0, p(pv)).unwrap().value, 0.5);
    }
}

#[test]
fn qnorm_study_decays_by_three() {
    let rows = run_convergence(&qnorm_study(&[128, 512, 2048, 8192], 20_000), 1, &Executor::default()).unwrap();
    assert!(rows.iter().all(|r| r.is_ok()));
    let (first, last) = (rows[0].ks, rows[rows.len() - 1].ks);
    assert!(last <= first / 3.0, "{first} -> {last}");
    let fit = fit_rate(&rows, RateAxis::N).unwrap();
    assert!(fit.slope < -0.3, "{fit:?}");
}

#[test]
fn sqrt_k_study_reports_k_and_v0() {
    let cfg = sqrt_k_study(&[100, 400, 1600], 2_000);
    let report = run_study(&cfg, 2, &Executor::default()).unwrap();
    let ks: Vec<f64> = report.rows.iter().map(|r| r.k_or_lambda.unwrap()).collect();
    assert_eq!(ks, vec![10.0, 20.0, 40.0]);
    assert!(report.rows.iter().all(|r| r.target_var == 0.5));
    assert!(report.fit_k.is_some());
    // The fixed-ratio gap term vanishes only in the limit; it is reported.
    let terms = report.rows[0].shape_terms.unwrap();
    assert!(terms.lambda_gap.unwrap() > 0.0);
}

#[test]
fn config_round_trips_through_json() {
    let cfg = sqrt_k_study(&[64, 128], 1_000);
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
}

#[test]
fn study_csv_is_invariant_to_workers() {
    let cfg = qnorm_study(&[32, 64, 128], 3_000);
    let one = to_csv(&run_study(&cfg, 77, &Executor::new(1)).unwrap()).unwrap();
    let many = to_csv(&run_study(&cfg, 77, &Executor::new(6)).unwrap()).unwrap();
    let seq = to_csv(&run_study(&cfg, 77, &Executor::sequential()).unwrap()).unwrap();
    assert_eq!(one, many);
    assert_eq!(one, seq);
}

#[test]
fn qnorm_sample_matches_sigma2_in_ks() {
    let spec = ModelSpec::new(p(1.0), 4096, Mode::QNorm { q: 2.0 }, WSpec::uniform(p(1.0))).unwrap();
    let batch = sample_yn(&spec, 50_000, &RngStream::new(4, 4), &Executor::default()).unwrap();
    let target = sigma2(p(1.0), 2.0).unwrap().value;
    let rep = ks_one_sample_gaussian(&Ecdf::new(batch.values).unwrap(), target, 0.01).unwrap();
    // Finite-n bias is log(n)/sqrt(n) scale; allow the band plus that.
    assert!(rep.statistic < rep.dkw_radius + (4096f64).ln() / 64.0, "{rep:?}");
}

#[test]
fn quick_suite_passes() {
    let checks = run_suite(Suite::Quick, &Context::new(0, Executor::default()));
    for c in &checks {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_recovers_power_laws(slope in -1.5f64..-0.05, scale in 0.01f64..10.0) {
        let rows = synthetic(&[100, 300, 1000, 3000, 10000], |n| scale * n.powf(slope), |_| 1.0);
        let f = fit_rate(&rows, RateAxis::N).unwrap();
        prop_assert!((f.slope - slope).abs() < 1e-9);
        prop_assert!((f.intercept - scale.ln()).abs() < 1e-8);
        prop_assert!(f.r_squared > 1.0 - 1e-9);
    }

    #[test]
    fn envelope_constant_scales_linearly(c in 0.01f64..50.0, big_c in 0.1f64..10.0) {
        let consts = BoundConstants { big_c, ..BoundConstants::default() };
        let shape = |n: f64| n.ln() / n.sqrt();
        let rows = synthetic(&[128, 256, 512, 1024, 2048], |n| c * shape(n), |n| big_c * shape(n));
        let e = envelope_check(&rows, &consts);
        prop_assert!((e.fitted_c - c).abs() < 1e-9 * c);
        prop_assert!((e.stability_ratio - 1.0).abs() < 1e-9);
        prop_assert!(e.passes);
    }

    #[test]
    fn dkw_radius_shrinks(m in 1usize..1_000_000, alpha in 0.001f64..0.5) {
        let r = dkw_radius(m, alpha);
        prop_assert!(r > 0.0);
        prop_assert!(dkw_radius(4 * m, alpha) < r);
        prop_assert!((dkw_radius(4 * m, alpha) - r / 2.0).abs() < 1e-12);
    }

    #[test]
    fn yn_batches_are_prefix_stable(seed in any::<u64>(), n in 2usize..64, m in 1usize..40) {
        let spec = ModelSpec::new(p(1.5), n, Mode::GrassmannRandom { lambda: 0.4 }, WSpec::cone()).unwrap();
        let stream = RngStream::new(seed, 1);
        let short = sample_yn(&spec, m, &stream, &Executor::sequential()).unwrap();
        let long = sample_yn(&spec, m + 5, &stream, &Executor::new(3)).unwrap();
        prop_assert_eq!(&short.values[..], &long.values[..m]);
    }

    #[test]
    fn variance_functions_are_ordered(s in 0.0f64..1.0, pv in 1.0f64..6.0) {
        let v = variance_v(s, p(pv)).unwrap().value;
        let w = variance_w(s, p(pv)).unwrap().value;
        prop_assert!((w - v - 0.25 * (1.0 - s)).abs() < 1e-12);
        prop_assert!(v >= 0.0);
    }
}
