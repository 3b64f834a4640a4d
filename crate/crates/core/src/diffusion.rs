//! Scale functions of one-dimensional diffusions.
//!
//! For `dX = b(X) dt + sigma(X) dW` on an open interval `I` containing 0 the
//! scale function `s(x) = int_0^x exp(-int_0^y 2b/sigma^2)` puts `X` in
//! natural scale: `s(X)` is a time-changed Brownian motion on `s(I)`. A
//! target for `X` is embedded by embedding its image under `s` in that
//! Brownian motion, so the question is which targets `s(I)` allows.

use std::fmt::Write as _;

use crate::format::fmt17;
use crate::measure::TargetMeasure;
use crate::scalar::ScalarFunction;
use crate::{Error, Result};

/// Largest exponent accepted before `exp` is considered to overflow.
const EXP_LIMIT: f64 = 700.0;
/// A tail increment below this (relative) size counts as converged; scale
/// means this small count as zero.
const FINITE_CUTOFF: f64 = 1e-6;
/// Partial sums beyond this are taken as divergent.
const DIVERGENT_SUM: f64 = 1e12;
const TAIL_BLOCKS: usize = 60;
const TAIL_CELLS: usize = 2000;
/// Default number of grid points.
pub const DEFAULT_GRID_POINTS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    pub drift: ScalarFunction,
    pub vol: ScalarFunction,
    /// Open interval `I`; endpoints may be infinite.
    pub domain: (f64, f64),
}

impl DiffusionSpec {
    pub fn new(drift: ScalarFunction, vol: ScalarFunction, domain: (f64, f64)) -> Result<Self> {
        let (lo, hi) = domain;
        if !(lo < 0.0 && 0.0 < hi) {
            return Err(Error::InvalidDiffusion(format!(
                "domain ({lo}, {hi}) does not contain 0"
            )));
        }
        Ok(Self { drift, vol, domain })
    }

    /// Brownian motion on the line.
    pub fn brownian() -> Self {
        Self {
            drift: ScalarFunction::constant(0.0),
            vol: ScalarFunction::constant(1.0),
            domain: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `2 b / sigma^2`.
    fn ratio(&self, x: f64) -> Result<f64> {
        let b = self.drift.eval(x)?;
        let s = self.vol.eval(x)?;
        if !(s > 0.0) {
            return Err(Error::InvalidDiffusion(format!("vol({x}) = {s} is not positive")));
        }
        Ok(2.0 * b / (s * s))
    }
}

/// Tabulation range and resolution for the scale function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    /// Total number of grid points; split between the two sides of 0.
    pub points: usize,
}

impl GridSpec {
    /// A range around the target atoms: `[-L, L]` with
    /// `L = 4 max(1, |atoms|)`, pulled inside a finite domain, and wide
    /// enough that every atom is at least ten cells from the edge.
    pub fn around(spec: &DiffusionSpec, atoms: &[f64], points: usize) -> Self {
        let reach = atoms.iter().fold(1.0f64, |r, a| r.max(a.abs()));
        let (dlo, dhi) = spec.domain;
        let pull = |edge: f64, target: f64| {
            if edge.is_finite() {
                // stay clear of the endpoint, where s' may blow up
                let inner = 0.99 * edge;
                if target.abs() > inner.abs() {
                    return inner;
                }
            }
            target
        };
        Self {
            lo: pull(dlo, -4.0 * reach),
            hi: pull(dhi, 4.0 * reach),
            points,
        }
    }
}

/// Tabulated scale function.
#[derive(Debug, Clone)]
pub struct ScaleTable {
    xs: Vec<f64>,
    s: Vec<f64>,
    /// Integral `int_0^x 2b/sigma^2` at the grid points.
    inner: Vec<f64>,
    domain: (f64, f64),
    limits: (f64, f64),
    /// Ends where the table was cut because `s` had stopped changing.
    saturated: (bool, bool),
}

/// Shape of the open scale interval `s(I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleCase {
    /// `s(I) = R`.
    Recurrent,
    /// `s(I) = (-inf, alpha)`.
    HalfLineAbove { alpha: f64 },
    /// `s(I) = (-alpha, inf)`, stored as the finite lower end.
    HalfLineBelow { lower: f64 },
    Bounded { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub case: ScaleCase,
    /// Mean of the image target.
    pub scale_mean: f64,
    pub embeddable: bool,
}

impl Classification {
    pub fn case_name(&self) -> &'static str {
        match self.case {
            ScaleCase::Recurrent => "CaseRecurrent",
            ScaleCase::HalfLineAbove { .. } | ScaleCase::HalfLineBelow { .. } => "CaseHalfLine",
            ScaleCase::Bounded { .. } => "CaseBounded",
        }
    }

    /// The sign condition on the scale mean that applies in this case.
    pub fn condition(&self) -> &'static str {
        match self.case {
            ScaleCase::Recurrent => "none",
            ScaleCase::HalfLineAbove { .. } => "m >= 0",
            ScaleCase::HalfLineBelow { .. } => "m <= 0",
            ScaleCase::Bounded { .. } => "m = 0",
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "case {}", self.case_name());
        match self.case {
            ScaleCase::Recurrent => {
                let _ = writeln!(out, "scale_interval -inf,inf");
            }
            ScaleCase::HalfLineAbove { alpha } => {
                let _ = writeln!(out, "side upper");
                let _ = writeln!(out, "scale_interval -inf,{}", fmt17(alpha));
            }
            ScaleCase::HalfLineBelow { lower } => {
                let _ = writeln!(out, "side lower");
                let _ = writeln!(out, "scale_interval {},inf", fmt17(lower));
            }
            ScaleCase::Bounded { lower, upper } => {
                let _ = writeln!(out, "scale_interval {},{}", fmt17(lower), fmt17(upper));
            }
        }
        let _ = writeln!(out, "scale_mean {}", fmt17(self.scale_mean));
        let _ = writeln!(out, "condition {}", self.condition());
        let verdict = if self.embeddable { "embeddable" } else { "not_embeddable" };
        let _ = writeln!(out, "verdict {verdict}");
        out
    }
}

fn simpson<F: FnMut(f64) -> Result<f64>>(a: f64, b: f64, mut f: F) -> Result<f64> {
    Ok((b - a) / 6.0 * (f(a)? + 4.0 * f(0.5 * (a + b))? + f(b)?))
}

fn checked_exp(arg: f64, x: f64) -> Result<f64> {
    if arg > EXP_LIMIT || arg.is_nan() {
        return Err(Error::QuadratureOverflow { x });
    }
    Ok(arg.exp())
}

/// Tabulates `s` on `grid` by composite Simpson quadrature, first of the
/// inner integral and then of `s'`; 0 is a grid point and `s(0) = 0`.
pub fn scale_function(spec: &DiffusionSpec, grid: GridSpec) -> Result<ScaleTable> {
    let (dlo, dhi) = spec.domain;
    if !(dlo <= grid.lo && grid.lo < 0.0 && 0.0 < grid.hi && grid.hi <= dhi) {
        return Err(Error::InvalidDiffusion(format!(
            "grid [{}, {}] must contain 0 and lie in the domain",
            grid.lo, grid.hi
        )));
    }
    if grid.points < 5 {
        return Err(Error::InvalidDiffusion("grid needs at least 5 points".into()));
    }
    let cells = grid.points - 1;
    let cells_lo = ((cells as f64 * -grid.lo / (grid.hi - grid.lo)).round() as usize).clamp(1, cells - 1);
    let cells_hi = cells - cells_lo;

    let mut xs = Vec::with_capacity(grid.points);
    for k in 0..cells_lo {
        xs.push(grid.lo * (cells_lo - k) as f64 / cells_lo as f64);
    }
    xs.push(0.0);
    for k in 1..=cells_hi {
        xs.push(grid.hi * k as f64 / cells_hi as f64);
    }
    let zero = cells_lo;

    let n = xs.len();
    let mut inner = vec![0.0; n];
    let mut s = vec![0.0; n];
    let ratio = |x: f64| spec.ratio(x);
    // sweep outwards from 0 in both directions
    for (range, step) in [((zero + 1..n).collect::<Vec<_>>(), -1isize), ((0..zero).rev().collect(), 1)] {
        for k in range {
            let prev = (k as isize + step) as usize;
            let (a, b) = (xs[prev], xs[k]);
            let mid = 0.5 * (a + b);
            let i_mid = inner[prev] + simpson(a, mid, ratio)?;
            inner[k] = inner[prev] + simpson(a, b, ratio)?;
            let d_a = checked_exp(-inner[prev], a)?;
            let d_mid = checked_exp(-i_mid, mid)?;
            let d_b = checked_exp(-inner[k], b)?;
            s[k] = s[prev] + (b - a) / 6.0 * (d_a + 4.0 * d_mid + d_b);
        }
    }
    if let Some(k) = (0..n).find(|&k| !s[k].is_finite()) {
        return Err(Error::NotMonotone { x: xs[k] });
    }
    // far from 0 the increments of a convergent s can drop below the
    // resolution of s itself; cut the table where it stops increasing
    let hi_end = (zero + 1..n).find(|&k| !(s[k] > s[k - 1])).unwrap_or(n);
    let lo_end = (0..zero).rev().find(|&k| !(s[k] < s[k + 1])).map_or(0, |k| k + 1);
    let saturated = (lo_end > 0, hi_end < n);
    if hi_end - zero < 2 {
        return Err(Error::NotMonotone { x: xs[hi_end] });
    }
    if zero - lo_end < 2 {
        return Err(Error::NotMonotone { x: xs[lo_end - 1] });
    }
    xs.truncate(hi_end);
    s.truncate(hi_end);
    inner.truncate(hi_end);
    xs.drain(..lo_end);
    s.drain(..lo_end);
    inner.drain(..lo_end);
    let n = xs.len();

    let upper = tail_limit(spec, xs[n - 1], inner[n - 1], s[n - 1], dhi)?;
    let lower = tail_limit(spec, xs[0], inner[0], s[0], dlo)?;
    Ok(ScaleTable {
        xs,
        s,
        inner,
        domain: spec.domain,
        limits: (lower, upper),
        saturated,
    })
}

/// Limit of `s` at the domain endpoint `edge`, continuing the quadrature
/// from `(x0, inner0, s0)` in blocks that double in length (or halve the
/// remaining distance for a finite endpoint). Converging increments are
/// extrapolated geometrically; anything else is infinite.
fn tail_limit(spec: &DiffusionSpec, x0: f64, inner0: f64, s0: f64, edge: f64) -> Result<f64> {
    let dir = if edge > x0 { 1.0 } else { -1.0 };
    let infinite = dir * f64::INFINITY;
    let mut a = x0;
    let mut inner = inner0;
    let mut total = s0;
    let mut prev_inc = f64::NAN;
    for block in 0..TAIL_BLOCKS {
        let b = if edge.is_finite() {
            a + 0.5 * (edge - a)
        } else {
            a + dir * (a.abs().max(1.0))
        };
        let h = (b - a) / TAIL_CELLS as f64;
        let mut inc = 0.0;
        let mut overflow = false;
        for c in 0..TAIL_CELLS {
            let (l, r) = (a + c as f64 * h, a + (c + 1) as f64 * h);
            let m = 0.5 * (l + r);
            let i_m = inner + simpson(l, m, |x| spec.ratio(x))?;
            let i_r = inner + simpson(l, r, |x| spec.ratio(x))?;
            let args = [-inner, -i_m, -i_r];
            if args.iter().any(|&g| g > EXP_LIMIT) {
                overflow = true;
                break;
            }
            inc += (r - l).abs() / 6.0 * (args[0].exp() + 4.0 * args[1].exp() + args[2].exp());
            inner = i_r;
        }
        // s' this large means the tail integral diverges
        if overflow || !inc.is_finite() {
            return Ok(infinite);
        }
        total += dir * inc;
        if total.abs() > DIVERGENT_SUM {
            return Ok(infinite);
        }
        if block > 0 && inc < FINITE_CUTOFF * total.abs().max(1.0) && inc <= prev_inc {
            let r = inc / prev_inc;
            let rest = if r < 1.0 { inc * r / (1.0 - r) } else { 0.0 };
            return Ok(total + dir * rest);
        }
        prev_inc = inc;
        a = b;
    }
    Ok(infinite)
}

fn bracket(xs: &[f64], x: f64) -> usize {
    // index k with xs[k] <= x < xs[k+1], clamped to the last cell
    let k = xs.partition_point(|&g| g <= x);
    k.saturating_sub(1).min(xs.len() - 2)
}

impl ScaleTable {
    /// Tabulated interval of `x`.
    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// The diffusion's full interval `I`.
    pub fn state_space(&self) -> (f64, f64) {
        self.domain
    }

    /// Tabulated interval of `s`.
    pub fn range(&self) -> (f64, f64) {
        (self.s[0], self.s[self.s.len() - 1])
    }

    /// `(inf s, sup s)` over `I`, with infinite ends where `s` diverges.
    pub fn limits(&self) -> (f64, f64) {
        self.limits
    }

    pub fn grid(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.s
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        let (dlo, dhi) = self.domain;
        if self.saturated.1 && x > hi && x < dhi {
            return Ok(self.s[self.s.len() - 1]);
        }
        if self.saturated.0 && x < lo && x > dlo {
            return Ok(self.s[0]);
        }
        if !(lo <= x && x <= hi) {
            return Err(Error::OutOfDomain { value: x, lo, hi });
        }
        let k = bracket(&self.xs, x);
        let t = (x - self.xs[k]) / (self.xs[k + 1] - self.xs[k]);
        Ok(self.s[k] + t * (self.s[k + 1] - self.s[k]))
    }

    /// `s'(x)`, interpolated.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(lo <= x && x <= hi) {
            return Err(Error::OutOfDomain { value: x, lo, hi });
        }
        let k = bracket(&self.xs, x);
        let t = (x - self.xs[k]) / (self.xs[k + 1] - self.xs[k]);
        // interpolate the exponent so the result stays positive
        let g = self.inner[k] + t * (self.inner[k + 1] - self.inner[k]);
        Ok((-g).exp())
    }

    pub fn invert(&self, y: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(lo <= y && y <= hi) {
            return Err(Error::OutOfRange { value: y, lo, hi });
        }
        let k = bracket(&self.s, y);
        let t = (y - self.s[k]) / (self.s[k + 1] - self.s[k]);
        Ok(self.xs[k] + t * (self.xs[k + 1] - self.xs[k]))
    }

    /// `x,s(x)` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,s\n");
        for (x, s) in self.xs.iter().zip(&self.s) {
            let _ = writeln!(out, "{},{}", fmt17(*x), fmt17(*s));
        }
        out
    }
}

/// Shape of `s(I)` and whether the image of `mu_x` can be embedded: any law
/// on the line, a non-negative mean below a finite upper end, a non-positive
/// mean above a finite lower end, mean zero on a bounded interval.
pub fn classify_embeddable(st: &ScaleTable, mu_x: &TargetMeasure) -> Result<Classification> {
    let mu_y = mu_x.pushforward(st)?;
    let scale_mean = snap_mean(&mu_y);
    let (lower, upper) = st.limits();
    let (case, embeddable) = match (lower.is_finite(), upper.is_finite()) {
        (false, false) => (ScaleCase::Recurrent, true),
        (false, true) => (ScaleCase::HalfLineAbove { alpha: upper }, scale_mean >= 0.0),
        (true, false) => (ScaleCase::HalfLineBelow { lower }, scale_mean <= 0.0),
        (true, true) => (ScaleCase::Bounded { lower, upper }, scale_mean == 0.0),
    };
    // the image must also lie inside the open scale interval
    let inside = mu_y.support_lo() > lower && mu_y.support_hi() < upper;
    Ok(Classification {
        case,
        scale_mean,
        embeddable: embeddable && inside,
    })
}

fn snap_mean(mu: &TargetMeasure) -> f64 {
    let m = mu.mean();
    let scale = mu.atoms().iter().fold(1.0f64, |s, a| s.max(a.value.abs()));
    // the table is only this accurate, so a centred target must not be
    // rejected over interpolation error
    if m.abs() <= FINITE_CUTOFF * scale {
        0.0
    } else {
        m
    }
}

/// `s^{-1}` as a scalar function, clamped to the tabulated range.
pub fn inverse_function(st: &ScaleTable) -> ScalarFunction {
    let table = st.clone();
    ScalarFunction::new("s^-1", move |y| {
        let (lo, hi) = table.range();
        table.invert(y.clamp(lo, hi)).unwrap_or(f64::NAN)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(drift: fn(f64) -> f64, points: usize, lo: f64, hi: f64) -> ScaleTable {
        let spec = DiffusionSpec::new(
            ScalarFunction::new("b", drift),
            ScalarFunction::constant(1.0),
            (f64::NEG_INFINITY, f64::INFINITY),
        )
        .unwrap();
        scale_function(&spec, GridSpec { lo, hi, points }).unwrap()
    }

    #[test]
    fn natural_scale() {
        let st = table(|_| 0.0, 10_001, -5.0, 5.0);
        for &x in st.grid() {
            assert!((st.eval(x).unwrap() - x).abs() < 1e-12);
        }
        assert_eq!(st.eval(0.0).unwrap(), 0.0);
        assert_eq!(st.limits(), (f64::NEG_INFINITY, f64::INFINITY));
        assert!((st.invert(1.234).unwrap() - 1.234).abs() < 1e-12);
    }

    #[test]
    fn unit_drift() {
        let st = table(|_| 1.0, 100_001, -4.0, 4.0);
        let exact = |x: f64| (1.0 - (-2.0 * x).exp()) / 2.0;
        assert!((st.eval(1.0).unwrap() - 0.43233236).abs() < 1e-8);
        for &x in st.grid().iter().step_by(997) {
            assert!((st.eval(x).unwrap() - exact(x)).abs() < 1e-9 * (1.0 + exact(x).abs()));
        }
        assert!((st.invert(0.2).unwrap() - (-0.5 * 0.6f64.ln())).abs() < 1e-6);
        assert!((st.invert(-0.2).unwrap() - (-0.5 * 1.4f64.ln())).abs() < 1e-6);
        let (lo, hi) = st.limits();
        assert_eq!(lo, f64::NEG_INFINITY);
        assert!((hi - 0.5).abs() < 1e-9, "{hi}");
    }

    #[test]
    fn ou_drift_is_odd() {
        let st = table(|x| -x, 20_001, -2.0, 2.0);
        for &x in st.grid().iter().step_by(101) {
            let d = st.eval(x).unwrap() + st.eval(-x).unwrap();
            assert!(d.abs() < 1e-9 * (1.0 + st.eval(x).unwrap().abs()));
        }
        assert!((st.derivative(1.5).unwrap() - 2.25f64.exp()).abs() < 1e-6);
        assert_eq!(st.limits(), (f64::NEG_INFINITY, f64::INFINITY));
    }

    #[test]
    fn overflow_reported() {
        let spec = DiffusionSpec::new(
            ScalarFunction::new("b", |x| -x * x * x),
            ScalarFunction::constant(1.0),
            (f64::NEG_INFINITY, f64::INFINITY),
        )
        .unwrap();
        let err = scale_function(&spec, GridSpec { lo: -10.0, hi: 10.0, points: 1001 }).unwrap_err();
        assert!(matches!(err, Error::QuadratureOverflow { .. }));
    }

    #[test]
    fn round_trip_within_spacing() {
        let st = table(|x| 0.5 * x.sin(), 1001, -3.0, 3.0);
        let h = 6.0 / 1000.0;
        for k in 0..1000 {
            let x = -3.0 + 6.0 * (k as f64 + 0.37) / 1000.0;
            assert!((st.invert(st.eval(x).unwrap()).unwrap() - x).abs() <= h);
        }
        assert!(matches!(st.invert(1e9), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn classification_cases() {
        let natural = table(|_| 0.0, 2001, -5.0, 5.0);
        let mu = TargetMeasure::from_atoms([(-1.0, 0.3), (2.0, 0.7)]).unwrap();
        let c = classify_embeddable(&natural, &mu).unwrap();
        assert_eq!((c.case, c.embeddable), (ScaleCase::Recurrent, true));

        let up = table(|_| 1.0, 100_001, -4.0, 4.0);
        let x_plus = -0.5 * 0.6f64.ln();
        let x_minus = -0.5 * 1.4f64.ln();
        let centred = TargetMeasure::from_atoms([(x_minus, 0.5), (x_plus, 0.5)]).unwrap();
        let c = classify_embeddable(&up, &centred).unwrap();
        assert_eq!(c.case_name(), "CaseHalfLine");
        assert_eq!(c.scale_mean, 0.0);
        assert!(c.embeddable);
        let positive = TargetMeasure::point_mass(x_plus);
        let c = classify_embeddable(&up, &positive).unwrap();
        assert!(c.embeddable && c.scale_mean > 0.0);
        let negative = TargetMeasure::point_mass(x_minus);
        assert!(!classify_embeddable(&up, &negative).unwrap().embeddable);
    }

    #[test]
    fn finite_domain_endpoint() {
        // b = 1/(2(1-x)) on (-inf, 1): s' = 1 - x near the right end... the
        // integral of 2b is -ln(1-x), so s' = 1 - x and s(1-) = 1/2
        let spec = DiffusionSpec::new(
            ScalarFunction::new("b", |x| 0.5 / (1.0 - x)),
            ScalarFunction::constant(1.0),
            (f64::NEG_INFINITY, 1.0),
        )
        .unwrap();
        let st = scale_function(&spec, GridSpec { lo: -2.0, hi: 0.9, points: 20_001 }).unwrap();
        let (lo, hi) = st.limits();
        assert_eq!(lo, f64::NEG_INFINITY);
        assert!((hi - 0.5).abs() < 1e-6, "{hi}");
    }

    #[test]
    fn saturated_tail_is_cut() {
        let spec = DiffusionSpec::new(ScalarFunction::constant(1.0), ScalarFunction::constant(1.0), (f64::NEG_INFINITY, f64::INFINITY))
            .unwrap();
        let st = scale_function(&spec, GridSpec { lo: -2.0, hi: 40.0, points: 4001 }).unwrap();
        let (_, hi) = st.domain();
        assert!(hi < 40.0 && hi > 10.0);
        assert_eq!(st.eval(30.0).unwrap(), st.range().1);
        assert!((st.limits().1 - 0.5).abs() < 1e-9);
        assert!(st.eval(-3.0).is_err());
    }
}
