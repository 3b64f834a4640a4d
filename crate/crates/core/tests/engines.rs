//! Simulation engines: determinism, record invariants and discretisation.

mod common;

use common::*;
use proptest::prelude::*;
use skorokhod::rules::{compile_naive, compile_tmax, compile_tmin, compile_tmod, StoppingRule};
use skorokhod::simulate::{monte_carlo, Engine, EulerParams, SampleSet};
use skorokhod::ScalarFunction;
use skorokhod::verify::{ks_two_sample, max_tail, pathwise_bound_violations};

fn euler(dt: f64, bridge: bool) -> Engine {
    Engine::Euler(EulerParams { dt, horizon: 1e9, bridge, dt_max: f64::INFINITY })
}

fn rules() -> Vec<(&'static str, StoppingRule)> {
    vec![
        ("tmax", compile_tmax(&five_atoms())),
        ("tmin", compile_tmin(&five_atoms())),
        ("tmax negative", compile_tmax(&negative_mean())),
        ("tmod", compile_tmod(&positive_mean(), &ScalarFunction::new("x^2", |x: f64| x * x)).unwrap()),
        ("naive", compile_naive(&two_point())),
        ("exit", StoppingRule::FirstExit { lower: -1.0, upper: 2.0 }),
    ]
}

fn mean_clock(s: &SampleSet) -> f64 {
    s.records.iter().map(|r| r.clock.unwrap()).sum::<f64>() / s.records.len() as f64
}

#[test]
fn worker_count_does_not_change_output() {
    for (name, rule) in rules() {
        for engine in [Engine::Exact, euler(1e-3, true)] {
            let n = if engine == Engine::Exact { 4000 } else { 300 };
            let one = monte_carlo(&rule, n, 77, engine, 1).unwrap().to_csv();
            for workers in [2, 8] {
                let other = monte_carlo(&rule, n, 77, engine, workers).unwrap().to_csv();
                assert!(one == other, "{name} {} workers={workers}", engine.name());
            }
        }
    }
}

#[test]
fn seeds_change_output() {
    let rule = compile_tmax(&five_atoms());
    let a = monte_carlo(&rule, 100, 1, Engine::Exact, 1).unwrap().to_csv();
    let b = monte_carlo(&rule, 100, 2, Engine::Exact, 1).unwrap().to_csv();
    assert_ne!(a, b);
}

#[test]
fn pathwise_inequality_holds() {
    let xs = [0.25, 0.5, 1.0, 2.0, 3.5, 6.0];
    let lambdas: Vec<f64> = (-40..24).map(|k| k as f64 * 0.25).collect();
    for (name, rule) in rules() {
        let s = monte_carlo(&rule, 5000, 3, Engine::Exact, 1).unwrap();
        assert_eq!(pathwise_bound_violations(&s, &xs, &lambdas), 0, "{name}");
    }
}

#[test]
fn euler_hitting_matches_ruin() {
    let s = monte_carlo(&StoppingRule::Hitting(-1.0), 20_000, 5, euler(1e-3, true), 1).unwrap();
    assert_eq!(s.censored_count(), 0);
    for y in [0.5, 1.0, 2.0] {
        let want = gamblers_ruin(0.0, -1.0, y);
        let got = max_tail(&s, y).unwrap();
        assert!((got - want).abs() < 4.0 * (want * (1.0 - want) / 2e4).sqrt(), "y={y}: {got}");
    }
}

#[test]
fn engines_agree_on_negative_mean_tmax() {
    let rule = compile_tmax(&negative_mean());
    let a = monte_carlo(&rule, 20_000, 1, Engine::Exact, 1).unwrap();
    let b = monte_carlo(&rule, 20_000, 2, euler(1e-3, true), 1).unwrap();
    let bt = |s: &SampleSet| s.records.iter().map(|r| r.b_t).collect::<Vec<_>>();
    let mt = |s: &SampleSet| s.records.iter().map(|r| r.m_t).collect::<Vec<_>>();
    // 1.63 sqrt(2/n) is the 1% two-sample critical value
    let crit = 1.63 * (2.0f64 / 2e4).sqrt();
    assert!(ks_two_sample(&bt(&a), &bt(&b)).unwrap() < crit);
    assert!(ks_two_sample(&mt(&a), &mt(&b)).unwrap() < crit);
}

#[test]
fn discrete_monitoring_bias_shrinks() {
    // exit time of (-1, 1) has mean 1; checking the levels only on the grid
    // lets the path overshoot and the exit time grows like sqrt(dt)
    let rule = StoppingRule::FirstExit { lower: -1.0, upper: 1.0 };
    let n = 6000;
    let bias: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&dt| mean_clock(&monte_carlo(&rule, n, 21, euler(dt, false), 1).unwrap()) - 1.0)
        .collect();
    let se = (2.0f64 / 3.0 / n as f64).sqrt();
    assert!(bias[0] > 0.07, "{bias:?}");
    assert!(bias[0] > bias[1] && bias[1] > bias[2], "{bias:?}");
    assert!(bias[2].abs() < 0.012 + 4.0 * se, "{bias:?}");

    let bridged = mean_clock(&monte_carlo(&rule, n, 21, euler(1e-2, true), 1).unwrap());
    assert!((bridged - 1.0).abs() < 4.0 * se, "{bridged}");
}

#[test]
fn centred_stopped_mean_is_zero() {
    let s = monte_carlo(&compile_tmax(&two_point()), 10_000, 31, euler(1e-3, true), 1).unwrap();
    let mean = s.records.iter().map(|r| r.b_t).sum::<f64>() / 1e4;
    assert!(mean.abs() <= 3.0 / 1e4f64.sqrt(), "{mean}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn records_are_ordered(seed in any::<u64>(), which in 0usize..6, exact in any::<bool>()) {
        let (_, rule) = rules().swap_remove(which);
        let engine = if exact { Engine::Exact } else { euler(1e-2, true) };
        let s = monte_carlo(&rule, 40, seed, engine, 1).unwrap();
        for r in &s.records {
            prop_assert!(r.j_t <= r.b_t && r.b_t <= r.m_t);
            prop_assert!(r.j_t <= 0.0 && r.m_t >= 0.0);
            prop_assert!(!r.censored);
        }
    }
}
