//! Event-driven simulation of step-barrier rules.
//!
//! Between two rule levels `a < x < c` Brownian motion leaves through `c`
//! with probability `(x - a)/(c - a)`. Given a lower exit, the maximum `Y`
//! reached first satisfies `P(Y >= y) = (x - a)(c - y) / ((y - a)(c - x))`
//! for `x <= y < c`, the ratio of two hitting probabilities; the minimum
//! before an upper exit is the mirror image. Both are sampled by inversion.

use rand::Rng;

use super::{open_uniform, PathState, SampleRecord};
use crate::rules::StoppingRule;
use crate::{Error, Result};

/// Maximum before leaving `(a, c)` through `a`, from `x`, at uniform `u`.
pub(crate) fn max_before_lower_exit(x: f64, a: f64, c: f64, u: f64) -> f64 {
    if c == f64::INFINITY {
        return a + (x - a) / u;
    }
    let (p, q) = (x - a, c - x);
    (p * c + u * q * a) / (p + u * q)
}

/// Minimum before leaving `(a, c)` through `c`, from `x`, at uniform `u`.
pub(crate) fn min_before_upper_exit(x: f64, a: f64, c: f64, u: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return c - (c - x) / u;
    }
    let (p, q) = (x - a, c - x);
    (u * c * p + q * a) / (q + u * p)
}

pub fn exact_walk<R: Rng>(rule: &StoppingRule, rng: &mut R) -> Result<SampleRecord> {
    let mut path = PathState::new();
    while !path.settle(rule)? {
        let (lo, hi) = rule.levels(&path.state);
        let (a, c) = (lo.at, hi.at);
        let x = path.state.value;
        if a.is_infinite() && c.is_infinite() {
            return Err(Error::UnboundedSegment { lower: a, upper: c });
        }
        if !(a < x && x < c) {
            return Err(Error::InvalidStep(format!(
                "value {x} outside its segment ({a}, {c})"
            )));
        }
        let up = if a == f64::NEG_INFINITY {
            true
        } else if c == f64::INFINITY {
            false
        } else {
            rng.random::<f64>() * (c - a) < x - a
        };
        let u = open_uniform(rng);
        if up {
            let y = min_before_upper_exit(x, a, c, u);
            path.advance(c, c, y);
            if !hi.terminal {
                path.pass_threshold(true);
            }
        } else {
            let y = max_before_lower_exit(x, a, c, u);
            path.advance(a, y, a);
            if !lo.terminal {
                path.pass_threshold(false);
            }
        }
    }
    Ok(path.record(None, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::TargetMeasure;
    use crate::rules::compile_tmax;
    use crate::simulate::path_rng;

    #[test]
    fn conditional_extreme_inversion() {
        // P(Y >= y) evaluated at the sampled y gives back u
        let (x, a, c) = (0.3, -1.0, 2.0);
        for k in 1..20 {
            let u = k as f64 / 20.0;
            let y = max_before_lower_exit(x, a, c, u);
            let tail = (x - a) * (c - y) / ((y - a) * (c - x));
            assert!((tail - u).abs() < 1e-12);
            let y = min_before_upper_exit(x, a, c, u);
            let tail = (c - x) * (y - a) / ((c - y) * (x - a));
            assert!((tail - u).abs() < 1e-12);
        }
        assert!((max_before_lower_exit(x, a, c, 1.0) - x).abs() < 1e-15);
        assert!((min_before_upper_exit(x, f64::NEG_INFINITY, c, 1.0) - x).abs() < 1e-15);
        assert!((max_before_lower_exit(x, a, f64::INFINITY, 1.0) - x).abs() < 1e-15);
    }

    #[test]
    fn stops_on_atoms() {
        let mu = TargetMeasure::from_atoms([(-3.0, 0.1), (-1.0, 0.2), (0.0, 0.3), (1.5, 0.25), (4.0, 0.15)])
            .unwrap();
        let rule = compile_tmax(&mu);
        for i in 0..2000 {
            let r = exact_walk(&rule, &mut path_rng(7, i)).unwrap();
            assert!(mu.mass_at(r.b_t) > 0.0, "{}", r.b_t);
            assert!(r.j_t <= r.b_t && r.b_t <= r.m_t && r.j_t <= 0.0 && r.m_t >= 0.0);
        }
    }

    #[test]
    fn hitting_from_zero_is_immediate() {
        let r = exact_walk(&StoppingRule::Hitting(0.0), &mut path_rng(1, 0)).unwrap();
        assert_eq!((r.b_t, r.m_t, r.j_t), (0.0, 0.0, 0.0));
    }
}
