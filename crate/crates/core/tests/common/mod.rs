//! Reference computations shared by the integration tests. Nothing here
//! calls into the potential or rule code it is used to check.

#![allow(dead_code)]

use skorokhod::TargetMeasure;

pub fn two_point() -> TargetMeasure {
    TargetMeasure::from_atoms([(-1.0, 0.5), (1.0, 0.5)]).unwrap()
}

pub fn negative_mean() -> TargetMeasure {
    TargetMeasure::from_atoms([(-2.0, 0.5), (0.0, 0.5)]).unwrap()
}

pub fn positive_mean() -> TargetMeasure {
    TargetMeasure::from_atoms([(0.0, 0.5), (2.0, 0.5)]).unwrap()
}

pub fn five_atoms() -> TargetMeasure {
    TargetMeasure::from_atoms([(-3.0, 0.1), (-1.0, 0.2), (0.0, 0.3), (1.5, 0.25), (4.0, 0.15)]).unwrap()
}

pub fn test_measures() -> Vec<(&'static str, TargetMeasure)> {
    vec![
        ("two-point centred", two_point()),
        ("{(-2,.5),(0,.5)}", negative_mean()),
        ("{(0,.5),(2,.5)}", positive_mean()),
        ("5-atom asymmetric", five_atoms()),
    ]
}

fn pairs(mu: &TargetMeasure) -> Vec<(f64, f64)> {
    mu.atoms().iter().map(|a| (a.value, a.weight)).collect()
}

/// `E|X - l| + |E X|` summed directly.
pub fn potential(mu: &TargetMeasure, l: f64) -> f64 {
    let p = pairs(mu);
    let m: f64 = p.iter().map(|(x, w)| x * w).sum();
    p.iter().map(|(x, w)| w * (x - l).abs()).sum::<f64>() + m.abs()
}

/// Half the smallest `(c(l) - l)/(x - l)` over `l = k/1000 < x`, down to
/// `l = -60`: the bound on `P(M >= x)` by scanning tangents.
pub fn tangent_bound(mu: &TargetMeasure, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut best = 2.0f64;
    let mut k = -60_000i64;
    loop {
        let l = k as f64 / 1000.0;
        if l >= x - 1e-9 {
            break;
        }
        best = best.min((potential(mu, l) - l) / (x - l));
        k += 1;
    }
    (0.5 * best).clamp(0.0, 1.0)
}

/// Probability that Brownian motion from `x` reaches `c` before `a`.
pub fn gamblers_ruin(x: f64, a: f64, c: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return 1.0;
    }
    if c == f64::INFINITY {
        return 0.0;
    }
    ((x - a) / (c - a)).clamp(0.0, 1.0)
}

/// `P(M_T >= y)` for a rule that stops at `rows[j].1` while the maximum is
/// in `(rows[j].0, rows[j+1].0]`, by chaining gambler's-ruin factors over
/// the rows.
pub fn max_tail_from_rows(rows: &[(f64, f64)], y: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    let mut p = 1.0;
    let mut at = 0.0f64;
    for (j, &(_, b)) in rows.iter().enumerate() {
        let next = rows.get(j + 1).map_or(f64::INFINITY, |r| r.0);
        if b >= at {
            // the rule stops on arrival
            return 0.0;
        }
        if y <= next {
            return p * gamblers_ruin(at, b, y);
        }
        p *= gamblers_ruin(at, b, next);
        at = next;
    }
    p
}

/// Empirical frequency of `pred` over a slice.
pub fn frequency<T>(items: &[T], pred: impl Fn(&T) -> bool) -> f64 {
    items.iter().filter(|t| pred(t)).count() as f64 / items.len() as f64
}
