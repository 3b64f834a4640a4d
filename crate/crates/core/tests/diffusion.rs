//! Embedding in a diffusion through its scale function.

mod common;

use common::*;
use skorokhod::diffusion::{classify_embeddable, scale_function, DiffusionSpec, GridSpec};
use skorokhod::rules::compile_tmax;
use skorokhod::simulate::{euler_diffusion, euler_path, path_rng, run_paths, EulerParams};
use skorokhod::{ScalarFunction, TargetMeasure};

const LINE: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

fn params() -> EulerParams {
    EulerParams { dt: 1e-3, horizon: 1e9, bridge: true, dt_max: 1e-2 }
}

#[test]
fn natural_scale_reproduces_brownian_paths() {
    let spec = DiffusionSpec::brownian();
    // centred, so every path stays in [-3, 5]
    let mu = TargetMeasure::from_atoms([(-3.0, 0.2), (-0.5, 0.4), (1.0, 0.3), (5.0, 0.1)]).unwrap();
    let st = scale_function(&spec, GridSpec::around(&spec, &[-3.0, 5.0], 20_001)).unwrap();
    let rule = compile_tmax(&mu);
    let mut same = 0;
    let n = 400;
    for i in 0..n {
        let a = euler_diffusion(&spec, &st, &rule, params(), &mut path_rng(3, i)).unwrap();
        let b = euler_path(&rule, params(), &mut path_rng(3, i)).unwrap();
        assert!((a.x_t - a.scale.b_t).abs() < 1e-9);
        assert!(mu.atoms().iter().any(|t| (t.value - a.x_t).abs() < 1e-9), "{}", a.x_t);
        if a.scale.b_t == b.b_t {
            same += 1;
        }
    }
    // identical draws; rounding in the table can still push a path to the
    // other side of a threshold, after which the two runs part ways
    assert!(same as f64 >= 0.99 * n as f64, "{same}/{n}");
}

#[test]
fn ou_target_is_embedded() {
    let spec = DiffusionSpec::new(ScalarFunction::new("-x", |x: f64| -x), ScalarFunction::constant(1.0), LINE).unwrap();
    // s is odd for this drift, so a symmetric target maps to a centred one
    let mu_x = TargetMeasure::from_atoms([(-1.0, 0.25), (-0.3, 0.25), (0.3, 0.25), (1.0, 0.25)]).unwrap();
    let st = scale_function(&spec, GridSpec::around(&spec, &[-1.0, 1.0], 20_001)).unwrap();
    let class = classify_embeddable(&st, &mu_x).unwrap();
    assert!(class.embeddable, "{}", class.to_text());
    assert_eq!(class.scale_mean, 0.0);

    let mu_y = mu_x.pushforward(&st).unwrap();
    let rule = compile_tmax(&mu_y);
    let n = 8000;
    let recs = run_paths(n, 17, 1, |rng| euler_diffusion(&spec, &st, &rule, params(), rng)).unwrap();
    assert!(recs.iter().all(|r| !r.domain_exit && !r.scale.censored));
    for atom in mu_x.atoms() {
        let f = frequency(&recs, |r| (r.x_t - atom.value).abs() < 1e-6);
        let se = (atom.weight * (1.0 - atom.weight) / n as f64).sqrt();
        assert!((f - atom.weight).abs() < 4.0 * se, "atom {}: {f}", atom.value);
    }
}

#[test]
fn transient_drift_needs_nonnegative_mean() {
    let spec = DiffusionSpec::new(ScalarFunction::constant(1.0), ScalarFunction::constant(1.0), LINE).unwrap();
    let st = scale_function(&spec, GridSpec::around(&spec, &[2.0], 8001)).unwrap();
    // s(x) = (1 - e^{-2x})/2 never exceeds 1/2
    assert!((st.limits().1 - 0.5).abs() < 1e-9);
    assert_eq!(st.limits().0, f64::NEG_INFINITY);
    let centred = TargetMeasure::from_atoms([(-1.0, 0.5), (1.0, 0.5)]).unwrap();
    assert!(!classify_embeddable(&st, &centred).unwrap().embeddable);
    let up = TargetMeasure::from_atoms([(-0.1, 0.5), (2.0, 0.5)]).unwrap();
    assert!(classify_embeddable(&st, &up).unwrap().embeddable);
}
