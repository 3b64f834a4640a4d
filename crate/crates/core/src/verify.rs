//! Statistical checks on simulated samples.
//!
//! Every estimator here works from terminal records alone: the stopped value
//! and the running extremes. The event that the path visited `-gamma` before
//! stopping is `j_T <= -gamma` because paths are continuous, and the value
//! of the path stopped at `T ^ H_x` is `x` if `m_T >= x` and `b_T` otherwise.

use std::fmt::Write as _;

use crate::format::fmt17;
use crate::measure::TargetMeasure;
use crate::potential::PotentialFunction;
use crate::simulate::SampleSet;
use crate::{Error, Result};

pub const DEFAULT_GAMMAS: [f64; 7] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

/// 20 log-spaced points up to `max(2 * support_hi, 4)`, two decades deep.
pub fn default_x_grid(support_hi: f64) -> Vec<f64> {
    let top = (2.0 * support_hi).max(4.0);
    (0..20)
        .map(|k| top * 10f64.powf(-2.0 + 2.0 * k as f64 / 19.0))
        .collect()
}

/// Which tail of the path the minimality diagnostics look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Excursions below: for targets with mean `<= 0`.
    Lower,
    /// Excursions above, the mirror image: for mean `>= 0`.
    Upper,
}

impl Orientation {
    pub fn for_mean(mean: f64) -> Self {
        if mean > 0.0 {
            Orientation::Upper
        } else {
            Orientation::Lower
        }
    }

    fn check(self, mean: f64) -> Result<()> {
        match self {
            Orientation::Lower if mean > 0.0 => Err(Error::WrongOrientation {
                requested: "lower",
                mean,
            }),
            Orientation::Upper if mean < 0.0 => Err(Error::WrongOrientation {
                requested: "upper",
                mean,
            }),
            _ => Ok(()),
        }
    }
}

fn stopped_values(samples: &SampleSet) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = samples.uncensored().map(|r| r.b_t).collect();
    if v.is_empty() {
        return Err(Error::NoSamples);
    }
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Empirical `P(X <= x)` and `P(X < x)` from sorted data.
fn ecdf(sorted: &[f64], x: f64) -> (f64, f64) {
    let n = sorted.len() as f64;
    let le = sorted.partition_point(|&v| v <= x) as f64;
    let lt = sorted.partition_point(|&v| v < x) as f64;
    (le / n, lt / n)
}

/// Sup distance between the empirical law of `b_T` and `mu`, over every
/// atom and sample point and their left limits.
pub fn ks_distance(samples: &SampleSet, mu: &TargetMeasure) -> Result<f64> {
    let values = stopped_values(samples)?;
    let mut d = 0.0f64;
    let points = mu.atoms().iter().map(|a| a.value).chain(values.iter().copied());
    for x in points {
        let (le, lt) = ecdf(&values, x);
        d = d.max((le - mu.cdf(x)).abs()).max((lt - mu.mass_lt(x)).abs());
    }
    Ok(d)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut d = 0.0f64;
    for &x in a.iter().chain(&b) {
        let (la, sa) = ecdf(&a, x);
        let (lb, sb) = ecdf(&b, x);
        d = d.max((la - lb).abs()).max((sa - sb).abs());
    }
    Ok(d)
}

/// `int |F_n - F|`, the L1 distance between the two quantile functions.
pub fn wasserstein1(samples: &SampleSet, mu: &TargetMeasure) -> Result<f64> {
    let values = stopped_values(samples)?;
    let mut points: Vec<f64> = mu
        .atoms()
        .iter()
        .map(|a| a.value)
        .chain(values.iter().copied())
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut total = 0.0;
    for w in points.windows(2) {
        let (fn_, _) = ecdf(&values, w[0]);
        total += (fn_ - mu.cdf(w[0])).abs() * (w[1] - w[0]);
    }
    Ok(total)
}

/// Empirical `P(m_T >= x)` over uncensored records.
pub fn max_tail(samples: &SampleSet, x: f64) -> Result<f64> {
    let mut n = 0usize;
    let mut hits = 0usize;
    for r in samples.uncensored() {
        n += 1;
        hits += usize::from(r.m_t >= x);
    }
    if n == 0 {
        return Err(Error::NoSamples);
    }
    Ok(hits as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPoint {
    pub x: f64,
    pub empirical: f64,
    pub bound: f64,
}

impl BoundPoint {
    pub fn deviation(&self) -> f64 {
        (self.empirical - self.bound).abs()
    }
}

/// Compares the empirical law of the maximum with the sharp upper bound.
pub fn max_law_sharpness(
    samples: &SampleSet,
    pf: &PotentialFunction,
    x_grid: &[f64],
) -> Result<(f64, Vec<BoundPoint>)> {
    let mut curve = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        curve.push(BoundPoint {
            x,
            empirical: max_tail(samples, x)?,
            bound: pf.max_law_bound(x),
        });
    }
    let worst = curve.iter().map(BoundPoint::deviation).fold(0.0, f64::max);
    Ok((worst, curve))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimalityPoint {
    pub gamma: f64,
    /// `gamma * P(path reached -gamma)` (mirrored for `Upper`).
    pub weighted_prob: f64,
    /// `-gamma P - E(b_T; reached)`; non-negative for a minimal rule.
    pub slack: f64,
}

pub fn minimality_diagnostic(
    samples: &SampleSet,
    mean: f64,
    orientation: Orientation,
    gammas: &[f64],
) -> Result<Vec<MinimalityPoint>> {
    orientation.check(mean)?;
    let n = samples.uncensored().count();
    if n == 0 {
        return Err(Error::NoSamples);
    }
    let nf = n as f64;
    let mut curve = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let mut count = 0usize;
        let mut sum = 0.0;
        for r in samples.uncensored() {
            let reached = match orientation {
                Orientation::Lower => r.j_t <= -gamma,
                Orientation::Upper => r.m_t >= gamma,
            };
            if reached {
                count += 1;
                sum += r.b_t;
            }
        }
        let p = count as f64 / nf;
        let e = sum / nf;
        let slack = match orientation {
            Orientation::Lower => -gamma * p - e,
            Orientation::Upper => e - gamma * p,
        };
        curve.push(MinimalityPoint {
            gamma,
            weighted_prob: gamma * p,
            slack,
        });
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppedMean {
    pub x: f64,
    pub mean: f64,
    pub std_err: f64,
}

/// Mean of the path stopped at `T ^ H_x` (`Lower`) or `T ^ H_{-x}`
/// (`Upper`), which is 0 for every `x > 0` when the rule is minimal.
pub fn stopped_mean_check(
    samples: &SampleSet,
    orientation: Orientation,
    x_grid: &[f64],
) -> Result<Vec<StoppedMean>> {
    let n = samples.uncensored().count();
    if n == 0 {
        return Err(Error::NoSamples);
    }
    let nf = n as f64;
    let mut out = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let (mut s1, mut s2) = (0.0, 0.0);
        for r in samples.uncensored() {
            let v = match orientation {
                Orientation::Lower if r.m_t >= x => x,
                Orientation::Upper if r.j_t <= -x => -x,
                _ => r.b_t,
            };
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / nf;
        let var = if n > 1 {
            ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        out.push(StoppedMean {
            x,
            mean,
            std_err: (var / nf).sqrt(),
        });
    }
    Ok(out)
}

/// Counts records violating
/// `1{m_T >= x} <= (v + (|b_T - l| - (b_T + l))/2) / (x - l)` for `l < x`,
/// where `v` is the value stopped at `T ^ H_x`.
pub fn pathwise_bound_violations(samples: &SampleSet, xs: &[f64], lambdas: &[f64]) -> usize {
    let mut bad = 0;
    for r in samples.uncensored() {
        for &x in xs {
            let v = if r.m_t >= x { x } else { r.b_t };
            let lhs = if r.m_t >= x { 1.0 } else { 0.0 };
            for &l in lambdas.iter().filter(|&&l| l < x) {
                let rhs = (v + 0.5 * ((r.b_t - l).abs() - (r.b_t + l))) / (x - l);
                if lhs > rhs + 1e-12 * (1.0 + rhs.abs()) {
                    bad += 1;
                }
            }
        }
    }
    bad
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusPoint {
    pub y: f64,
    /// Estimated `P(h(m_T) >= y or h(j_T) >= y)`.
    pub sup: f64,
    pub upper: f64,
    pub lower: f64,
    /// Paths on which both events happen.
    pub overlaps: usize,
}

/// The law of `sup h` along stopped paths, split by which extreme
/// attains it. `h` is assumed monotone on each side of 0, so the supremum
/// over the path is `max(h(m_T), h(j_T))`.
pub fn modulus_law<H: Fn(f64) -> f64>(samples: &SampleSet, h: H, ys: &[f64]) -> Result<Vec<ModulusPoint>> {
    let n = samples.uncensored().count();
    if n == 0 {
        return Err(Error::NoSamples);
    }
    let nf = n as f64;
    let mut out = Vec::with_capacity(ys.len());
    for &y in ys {
        let (mut sup, mut up, mut low, mut both) = (0usize, 0usize, 0usize, 0usize);
        for r in samples.uncensored() {
            let a = h(r.m_t) >= y;
            let b = h(r.j_t) >= y;
            sup += usize::from(a || b);
            up += usize::from(a);
            low += usize::from(b);
            both += usize::from(a && b);
        }
        out.push(ModulusPoint {
            y,
            sup: sup as f64 / nf,
            upper: up as f64 / nf,
            lower: low as f64 / nf,
            overlaps: both,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub ks: f64,
    pub max_law: f64,
    /// Largest acceptable `gamma * P` at the top of the gamma grid.
    pub minimality: f64,
    /// Stopped means must lie within this many standard errors of 0.
    pub stopped_mean_sigmas: f64,
}

impl Thresholds {
    pub fn exact() -> Self {
        Self {
            ks: 0.01,
            max_law: 0.015,
            minimality: 0.05,
            stopped_mean_sigmas: 3.0,
        }
    }

    pub fn euler() -> Self {
        Self {
            ks: 0.02,
            max_law: 0.02,
            ..Self::exact()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub check: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub ks: f64,
    pub w1: f64,
    pub max_law_max_abs_dev: Option<f64>,
    pub max_law_curve: Vec<BoundPoint>,
    pub orientation: Orientation,
    pub minimality_curve: Vec<MinimalityPoint>,
    pub stopped_mean_curve: Vec<StoppedMean>,
    pub censored_fraction: f64,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub x_grid: Vec<f64>,
    pub gammas: Vec<f64>,
    pub thresholds: Thresholds,
    /// Compare the maximum with the sharp bound; only meaningful for rules
    /// that attain it.
    pub check_max_law: bool,
}

impl VerifyOptions {
    pub fn defaults(mu: &TargetMeasure, thresholds: Thresholds) -> Self {
        Self {
            x_grid: default_x_grid(mu.support_hi()),
            gammas: DEFAULT_GAMMAS.to_vec(),
            thresholds,
            check_max_law: true,
        }
    }
}

/// Runs every check and collects pass/fail verdicts.
pub fn verify(samples: &SampleSet, mu: &TargetMeasure, opts: &VerifyOptions) -> Result<VerificationReport> {
    let pf = PotentialFunction::build(mu);
    let th = opts.thresholds;
    let ks = ks_distance(samples, mu)?;
    let w1 = wasserstein1(samples, mu)?;
    let mut verdicts = vec![Verdict {
        check: "ks",
        value: ks,
        threshold: th.ks,
        pass: ks <= th.ks,
    }];

    let (max_law_max_abs_dev, max_law_curve) = if opts.check_max_law {
        let (dev, curve) = max_law_sharpness(samples, &pf, &opts.x_grid)?;
        verdicts.push(Verdict {
            check: "max_law",
            value: dev,
            threshold: th.max_law,
            pass: dev <= th.max_law,
        });
        (Some(dev), curve)
    } else {
        (None, Vec::new())
    };

    let orientation = Orientation::for_mean(pf.mean());
    let minimality_curve = minimality_diagnostic(samples, pf.mean(), orientation, &opts.gammas)?;
    let tail = minimality_curve.last().map_or(0.0, |p| p.weighted_prob);
    verdicts.push(Verdict {
        check: "minimality_gamma",
        value: tail,
        threshold: th.minimality,
        pass: tail <= th.minimality,
    });

    let stopped_mean_curve = stopped_mean_check(samples, orientation, &opts.x_grid)?;
    let worst = stopped_mean_curve
        .iter()
        .map(|s| {
            if s.std_err > 0.0 {
                s.mean.abs() / s.std_err
            } else if s.mean.abs() <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    verdicts.push(Verdict {
        check: "stopped_mean",
        value: worst,
        threshold: th.stopped_mean_sigmas,
        pass: worst <= th.stopped_mean_sigmas,
    });

    Ok(VerificationReport {
        ks,
        w1,
        max_law_max_abs_dev,
        max_law_curve,
        orientation,
        minimality_curve,
        stopped_mean_curve,
        censored_fraction: samples.censored_fraction(),
        verdicts,
    })
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// One `PASS`/`FAIL` line per check.
    pub fn verdict_lines(&self) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            let _ = writeln!(
                out,
                "{} {} value={} threshold={}",
                if v.pass { "PASS" } else { "FAIL" },
                v.check,
                fmt17(v.value),
                fmt17(v.threshold)
            );
        }
        out
    }

    /// Summary and curves as CSV blocks separated by blank lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "ks,{}", fmt17(self.ks));
        let _ = writeln!(out, "w1,{}", fmt17(self.w1));
        if let Some(d) = self.max_law_max_abs_dev {
            let _ = writeln!(out, "max_law_max_abs_dev,{}", fmt17(d));
        }
        let _ = writeln!(out, "censored_fraction,{}", fmt17(self.censored_fraction));
        if !self.max_law_curve.is_empty() {
            out.push_str("\nx,empirical,bound,abs_dev\n");
            for p in &self.max_law_curve {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    fmt17(p.x),
                    fmt17(p.empirical),
                    fmt17(p.bound),
                    fmt17(p.deviation())
                );
            }
        }
        out.push_str("\ngamma,weighted_prob,slack\n");
        for p in &self.minimality_curve {
            let _ = writeln!(out, "{},{},{}", fmt17(p.gamma), fmt17(p.weighted_prob), fmt17(p.slack));
        }
        out.push_str("\nx,stopped_mean,std_err\n");
        for s in &self.stopped_mean_curve {
            let _ = writeln!(out, "{},{},{}", fmt17(s.x), fmt17(s.mean), fmt17(s.std_err));
        }
        out.push_str("\ncheck,value,threshold,verdict\n");
        for v in &self.verdicts {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                v.check,
                fmt17(v.value),
                fmt17(v.threshold),
                if v.pass { "PASS" } else { "FAIL" }
            );
        }
        out
    }
}
