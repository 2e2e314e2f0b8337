mod common;

use blowsim::functionals::HittingTime;
use blowsim::montecarlo::{
    dufresne_yor_check, estimate_m_xi, estimate_tau_star_cdf, mean_interval, run_bound_suite,
    tau_records, wilson_interval, ExperimentConfig, StreamFactory,
};
use blowsim::noise::{CoefficientSpec, DependenceMode};
use common::{det_params, grid, mixed_params, LN2};
use proptest::prelude::*;
use rand::Rng;

fn cfg(
    params: blowsim::functionals::ModelParams,
    dependence: DependenceMode,
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> ExperimentConfig {
    ExperimentConfig {
        params,
        dependence,
        grid: grid(horizon, n_steps),
        n_paths,
        master_seed: seed,
    }
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let f = StreamFactory::new(42);
    let draw = |k: u64| -> Vec<f64> {
        let mut rng = f.stream(k);
        (0..8).map(|_| rng.gen::<f64>()).collect()
    };
    assert_eq!(draw(0), draw(0));
    assert_eq!(draw(9), draw(9));
    assert_ne!(draw(0), draw(1));
    // Different master seeds decorrelate the same trajectory index.
    let g = StreamFactory::new(43);
    let mut rng = g.stream(0);
    let other: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
    assert_ne!(draw(0), other);
}

#[test]
fn wilson_interval_tiny_samples() {
    let (lo, hi) = wilson_interval(0, 1);
    assert!(lo <= 1e-12);
    assert!(hi > 0.7, "one failure still leaves most of [0,1]: hi = {hi}");
    let (lo, hi) = wilson_interval(1, 1);
    assert!(hi >= 1.0 - 1e-12);
    assert!(lo < 0.3);
}

#[test]
fn deterministic_ensemble_cdf_is_a_step() {
    // a = b = 0: every path crosses at exactly ln 2.
    let c = cfg(det_params(), DependenceMode::Identical, 2.0, 1000, 64, 5);
    let ests = estimate_tau_star_cdf(&c, &[0.5, LN2 + 0.01, 2.0]).unwrap();
    assert_eq!(ests[0].estimate, 0.0);
    assert_eq!(ests[1].estimate, 1.0);
    assert_eq!(ests[2].estimate, 1.0);
    assert_eq!(ests[0].censored_fraction, 0.0);
    // Monotone in T with nested intervals ordered accordingly.
    assert!(ests[0].estimate <= ests[1].estimate);
    assert!(ests[0].ci.0 <= ests[1].ci.0);
}

#[test]
fn cdf_rejects_times_beyond_horizon() {
    let c = cfg(det_params(), DependenceMode::Identical, 1.0, 100, 8, 5);
    assert!(estimate_tau_star_cdf(&c, &[2.0]).is_err());
}

#[test]
fn tau_records_census() {
    // Short horizon on the mixed configuration: a blend of finite and
    // censored paths, all accounted for.
    let c = cfg(mixed_params(), DependenceMode::Identical, 0.7, 350, 400, 11);
    let records = tau_records(&c).unwrap();
    assert_eq!(records.len(), 400);
    let mut finite = 0;
    let mut censored = 0;
    for r in &records {
        match r.tau_star {
            HittingTime::Finite { value, bracket } => {
                assert!(value > 0.0 && value <= 0.7 + 1e-12);
                assert!(bracket.0 <= value && value <= bracket.1 + 1e-15);
                finite += 1;
            }
            HittingTime::Censored { horizon } => {
                assert!((horizon - 0.7).abs() < 1e-15);
                censored += 1;
            }
        }
        // tau_* never lands after tau* on the same path.
        assert!(r.tau_lower.value_or_horizon() <= r.tau_star.value_or_horizon() + 1e-12);
    }
    assert_eq!(finite + censored, 400);
    assert!(finite > 0, "expected some crossings by T = 0.7");
    assert!(censored > 0, "expected some censored paths at T = 0.7");
}

#[test]
fn m_xi_needs_the_identical_coupling() {
    let mut p = mixed_params();
    p.k = CoefficientSpec::Power { c: 1.0, e: 0.5 };
    let c = cfg(p, DependenceMode::Independent, 4.0, 200, 50, 3);
    let err = estimate_m_xi(&c).unwrap_err();
    assert!(
        err.to_string().contains("identical"),
        "message: {err}"
    );
    let c = cfg(p, DependenceMode::Identical, 4.0, 200, 200, 3);
    let est = estimate_m_xi(&c).unwrap();
    assert!(est.result.estimate >= 1.0);
    assert!(est.tail_ok_fraction >= 0.0 && est.tail_ok_fraction <= 1.0);
    // Reproducibility under the same seed.
    let again = estimate_m_xi(&c).unwrap();
    assert_eq!(est.result.estimate.to_bits(), again.result.estimate.to_bits());
}

#[test]
fn dy_strong_drift_concentrates() {
    // mu = 50: 1/(2 Z_mu) concentrates near 0.01 and the truncation tail is
    // microscopic already at horizon 1.
    let report = dufresne_yor_check(50.0, 2000, grid(1.0, 500), 77).unwrap();
    assert!(report.median < 0.02, "median = {}", report.median);
    assert!(report.median > 0.005, "median = {}", report.median);
    assert!(report.pass, "ks = {}, crit = {}", report.ks, report.ks_critical_95);
}

#[test]
fn dy_short_horizon_is_refused() {
    // mu = 0.1 leaves e^{2(B_T - mu T)} comparable to the integral at T = 1.
    let err = dufresne_yor_check(0.1, 200, grid(1.0, 200), 7).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("horizon"), "message: {msg}");
    assert!(dufresne_yor_check(-1.0, 10, grid(1.0, 10), 1).is_err());
    assert!(dufresne_yor_check(1.0, 0, grid(1.0, 10), 1).is_err());
}

/// A coupling and coefficient shape that disqualifies every specialised
/// theorem leaves exactly the always-valid integral bound applicable, with
/// no violations.
#[test]
fn suite_reports_inapplicability_as_data() {
    let mut p = mixed_params();
    p.a = CoefficientSpec::Power { c: 0.4, e: 0.5 };
    p.b = CoefficientSpec::Power { c: 0.4, e: 0.5 };
    let c = cfg(
        p,
        DependenceMode::Correlated { rho: 0.3 },
        1.0,
        200,
        300,
        2025,
    );
    let report = run_bound_suite(&c).unwrap();
    assert_eq!(report.violations(), 0);
    let applicable: Vec<&str> = report
        .rows
        .iter()
        .filter(|r| r.value.is_some())
        .map(|r| r.name.as_str())
        .collect();
    assert_eq!(applicable.len(), 1, "applicable rows: {applicable:?}");
    assert!(applicable[0].contains("part1"));
    for row in &report.rows {
        if row.value.is_none() {
            assert!(!row.note.is_empty(), "inapplicable row {} lacks a reason", row.name);
            assert!(!row.violation);
        }
    }
}

/// The full suite on the identical coupling: all rows evaluated twice with
/// the same seed must agree bit for bit.
#[test]
fn suite_is_bitwise_reproducible() {
    let c = cfg(mixed_params(), DependenceMode::Identical, 1.0, 200, 300, 99);
    let a = run_bound_suite(&c).unwrap();
    let b = run_bound_suite(&c).unwrap();
    assert_eq!(a.rows.len(), b.rows.len());
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.name, y.name);
        assert_eq!(x.value.map(f64::to_bits), y.value.map(f64::to_bits));
        match (&x.mc, &y.mc) {
            (Some(mx), Some(my)) => {
                assert_eq!(mx.estimate.to_bits(), my.estimate.to_bits());
                assert_eq!(mx.ci.0.to_bits(), my.ci.0.to_bits());
                assert_eq!(mx.ci.1.to_bits(), my.ci.1.to_bits());
            }
            (None, None) => {}
            _ => panic!("estimate presence differs on row {}", x.name),
        }
        assert_eq!(x.violation, y.violation);
    }
}

/// No spurious violations on an ordinary well-posed configuration.
#[test]
fn suite_clean_on_identical_coupling() {
    let c = cfg(mixed_params(), DependenceMode::Identical, 2.0, 400, 500, 12);
    let report = run_bound_suite(&c).unwrap();
    assert_eq!(report.violations(), 0, "rows: {:#?}", report.rows);
    // The remark row is inapplicable here (b != 0), the thm2 rows exist for
    // each of the three horizons.
    assert_eq!(report.rows.len(), 8);
}

#[test]
fn mean_interval_recovers_sample_mean() {
    let values: Vec<f64> = (0..1000).map(|i| (i % 7) as f64).collect();
    let est = mean_interval(&values, 0.25);
    let mean = values.iter().sum::<f64>() / 1000.0;
    assert!((est.estimate - mean).abs() < 1e-12);
    assert!(est.ci.0 < mean && mean < est.ci.1);
    assert_eq!(est.censored_fraction, 0.25);
    assert_eq!(est.n_effective, 1000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// The Wilson interval brackets the point estimate for any outcome.
    #[test]
    fn wilson_brackets_the_estimate(n in 1usize..100_000, frac in 0.0f64..1.0) {
        let successes = ((n as f64) * frac).round() as usize;
        let successes = successes.min(n);
        let (lo, hi) = wilson_interval(successes, n);
        let p = successes as f64 / n as f64;
        prop_assert!(lo >= 0.0 && hi <= 1.0);
        prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
        prop_assert!(hi - lo > 0.0);
    }
}
