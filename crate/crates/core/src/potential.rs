//! The convex potential `c(x) = E|X - x| + |m|` of an atomic target and the
//! objects read off its tangents.
//!
//! For an atomic law `c` is piecewise linear with a kink at every atom, slope
//! `-1` left of the support and `+1` right of it. A support line of slope
//! `theta` touches `c` at `u(theta)` and crosses the diagonals `y = x` and
//! `y = -x` at `z_plus(theta)` and `-z_minus(theta)`. The barrier `b(x)` is
//! the touch point of the tangent drawn from `(x, x)`; the same tangent gives
//! the sharp bound on `P(M_T >= x)`.

use crate::measure::TargetMeasure;
use crate::scalar::ScalarFunction;
use crate::{Error, Result};

/// Relative size below which a mean is treated as exactly zero.
const ZERO_MEAN_TOL: f64 = 1e-12;
/// Ties between tangent slopes closer than this resolve to the leftmost kink.
const SLOPE_TIE_TOL: f64 = 1e-12;
/// Bisection width for the crossing slope.
pub const THETA_TOL: f64 = 1e-12;
/// Distance within which a crossing slope is snapped to a kink slope.
pub const THETA_SNAP: f64 = 1e-10;
/// Grid points per half-line used to tabulate the normalised `h`.
pub const H_GRID_POINTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kink {
    pub x: f64,
    pub c: f64,
    pub slope_left: f64,
    pub slope_right: f64,
}

#[derive(Debug, Clone)]
pub struct PotentialFunction {
    mu: TargetMeasure,
    mean: f64,
    kinks: Vec<Kink>,
}

/// Support line of `c` with a given slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentFrame {
    pub theta: f64,
    /// Leftmost touch point; `-inf` for `theta = -1`.
    pub u: f64,
    /// Value of the line at 0, `c(u) - theta * u`.
    pub intercept: f64,
    pub z_plus: f64,
    pub z_minus: f64,
}

impl TangentFrame {
    pub fn line(&self, x: f64) -> f64 {
        self.intercept + self.theta * x
    }
}

/// One step of the barrier: for running maxima in `(threshold, next]` the
/// barrier is the atom with index `atom`, or `-inf` when `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierStep {
    pub threshold: f64,
    pub atom: Option<usize>,
}

impl PotentialFunction {
    pub fn build(mu: &TargetMeasure) -> Self {
        let atoms = mu.atoms();
        let n = atoms.len();
        let scale = atoms.iter().fold(1.0f64, |s, a| s.max(a.value.abs()));
        let mut mean = mu.mean();
        if mean.abs() <= ZERO_MEAN_TOL * scale {
            mean = 0.0;
        }

        // suffix[i] = mu([x_i, inf)), computed from the top so the last
        // right slope is exactly 1
        let mut suffix = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] + atoms[i].weight;
        }
        let kinks = atoms
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let c = atoms
                    .iter()
                    .map(|b| b.weight * (b.value - a.value).abs())
                    .sum::<f64>()
                    + mean.abs();
                let slope_left = if i == 0 { -1.0 } else { 1.0 - 2.0 * suffix[i] };
                let slope_right = 1.0 - 2.0 * suffix[i + 1];
                Kink {
                    x: a.value,
                    c,
                    slope_left,
                    slope_right,
                }
            })
            .collect();
        Self {
            mu: mu.clone(),
            mean,
            kinks,
        }
    }

    pub fn measure(&self) -> &TargetMeasure {
        &self.mu
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn kinks(&self) -> &[Kink] {
        &self.kinks
    }

    fn lo(&self) -> f64 {
        self.kinks[0].x
    }

    fn hi(&self) -> f64 {
        self.kinks[self.kinks.len() - 1].x
    }

    pub fn eval(&self, x: f64) -> f64 {
        let m = self.mean;
        if x <= self.lo() {
            return m + m.abs() - x;
        }
        if x >= self.hi() {
            return x - m + m.abs();
        }
        let i = self.kinks.partition_point(|k| k.x <= x) - 1;
        let k = &self.kinks[i];
        k.c + k.slope_right * (x - k.x)
    }

    /// `c'_-(x) = 1 - 2 mu([x, inf))`.
    pub fn left_derivative(&self, x: f64) -> f64 {
        let i = self.kinks.partition_point(|k| k.x < x);
        match i {
            0 => -1.0,
            _ => self.kinks[i - 1].slope_right,
        }
    }

    /// Leftmost touch point of the support line with slope `theta`.
    pub fn touch_point(&self, theta: f64) -> f64 {
        if theta <= -1.0 {
            return f64::NEG_INFINITY;
        }
        let i = self
            .kinks
            .iter()
            .position(|k| k.slope_right >= theta)
            .unwrap_or(self.kinks.len() - 1);
        self.kinks[i].x
    }

    pub fn tangent_frame(&self, theta: f64) -> TangentFrame {
        let theta = theta.clamp(-1.0, 1.0);
        let m = self.mean;
        if theta == -1.0 {
            let k = m + m.abs();
            return TangentFrame {
                theta,
                u: f64::NEG_INFINITY,
                intercept: k,
                z_plus: k / 2.0,
                z_minus: if k > 0.0 { f64::INFINITY } else { -self.lo() },
            };
        }
        if theta == 1.0 {
            let k = m.abs() - m;
            return TangentFrame {
                theta,
                u: self.hi(),
                intercept: k,
                z_plus: if k > 0.0 { f64::INFINITY } else { self.hi() },
                z_minus: k / 2.0,
            };
        }
        let u = self.touch_point(theta);
        let k = self.eval(u) - theta * u;
        TangentFrame {
            theta,
            u,
            intercept: k,
            z_plus: k / (1.0 - theta),
            z_minus: k / (1.0 + theta),
        }
    }

    /// Index of the touch point of the tangent from `(x, x)`, or `None` when
    /// that tangent is the left asymptote (`b(x) = -inf`).
    fn barrier_atom(&self, x: f64) -> Option<usize> {
        let mut best = -1.0;
        let mut arg = None;
        for (i, k) in self.kinks.iter().enumerate() {
            if k.x >= x {
                break;
            }
            let slope = (x - k.c) / (x - k.x);
            if slope > best + SLOPE_TIE_TOL {
                best = slope;
                arg = Some(i);
            }
        }
        arg
    }

    /// `b(x) = u(z_plus^{-1}(x))`.
    pub fn barrier(&self, x: f64) -> f64 {
        match self.barrier_atom(x) {
            Some(i) => self.kinks[i].x,
            None => f64::NEG_INFINITY,
        }
    }

    /// `b` as a step function of the running maximum.
    ///
    /// Step `j` applies to maxima in `(steps[j].threshold,
    /// steps[j + 1].threshold]`; the first step also covers a maximum of 0.
    /// The thresholds are `z_plus` at the slopes of the segments of `c`.
    pub fn barrier_steps(&self) -> Vec<BarrierStep> {
        let mut steps = Vec::with_capacity(self.kinks.len() + 1);
        if self.mean > 0.0 {
            steps.push(BarrierStep { threshold: 0.0, atom: None });
            steps.push(BarrierStep {
                threshold: self.mean,
                atom: Some(0),
            });
        } else {
            steps.push(BarrierStep {
                threshold: 0.0,
                atom: Some(0),
            });
        }
        for (i, k) in self.kinks.iter().enumerate().take(self.kinks.len() - 1) {
            let s = k.slope_right;
            let t = (k.c - s * k.x) / (1.0 - s);
            let last = steps.last_mut().expect("non-empty");
            if t <= last.threshold {
                last.atom = Some(i + 1);
            } else {
                steps.push(BarrierStep {
                    threshold: t,
                    atom: Some(i + 1),
                });
            }
        }
        steps
    }

    /// Barrier table with atom values substituted.
    pub fn barrier_table(&self) -> Vec<(f64, f64)> {
        self.barrier_steps()
            .into_iter()
            .map(|s| {
                let b = s.atom.map_or(f64::NEG_INFINITY, |i| self.kinks[i].x);
                (s.threshold, b)
            })
            .collect()
    }

    /// `1/2 inf_{lambda < x} (c(lambda) - lambda) / (x - lambda)`, the sharp
    /// upper bound on `P(M_T >= x)` over minimal embeddings.
    pub fn max_law_bound(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        // the lambda -> -inf limit of the ratio is 2
        let mut ratio = 2.0f64;
        for k in self.kinks.iter().take_while(|k| k.x < x) {
            ratio = ratio.min((k.c - k.x) / (x - k.x));
        }
        (0.5 * ratio).clamp(0.0, 1.0)
    }

    /// Slopes of the interior segments of `c`.
    pub fn segment_slopes(&self) -> Vec<f64> {
        self.kinks[..self.kinks.len() - 1]
            .iter()
            .map(|k| k.slope_right)
            .collect()
    }

    /// Finite diagonal crossings of the tangents at every kink slope; the
    /// places where the crossing slope can jump.
    pub fn crossing_points(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        let mut slopes = vec![-1.0, 1.0];
        slopes.extend(self.segment_slopes());
        for s in slopes {
            let f = self.tangent_frame(s);
            if f.z_plus.is_finite() {
                pts.push(f.z_plus);
            }
            if f.z_minus.is_finite() {
                pts.push(-f.z_minus);
            }
        }
        pts
    }
}

/// `h~(x) = max_{y between 0 and x} |h(y)| - |h(0)|`, tabulated.
///
/// Non-negative, zero at 0 and non-decreasing along each half-line. Between
/// tabulation nodes the running maximum is interpolated linearly; beyond the
/// last node it is constant.
#[derive(Debug, Clone)]
pub struct NormalizedH {
    h0: f64,
    pos: Vec<(f64, f64)>,
    neg: Vec<(f64, f64)>,
}

impl NormalizedH {
    pub fn eval(&self, x: f64) -> f64 {
        let (table, r) = if x >= 0.0 { (&self.pos, x) } else { (&self.neg, -x) };
        let i = table.partition_point(|&(t, _)| t <= r);
        let v = if i == table.len() {
            table[table.len() - 1].1
        } else {
            let (x0, v0) = table[i - 1];
            let (x1, v1) = table[i];
            v0 + (v1 - v0) * (r - x0) / (x1 - x0)
        };
        v - self.h0
    }

    pub fn extent(&self) -> f64 {
        self.pos[self.pos.len() - 1].0
    }

    pub fn to_scalar(&self) -> ScalarFunction {
        let me = self.clone();
        ScalarFunction::new("normalized h", move |x| me.eval(x))
    }
}

/// Tabulates `h~` on `grid_points` uniform nodes per half-line over
/// `[-extent, extent]`, merged with the exact points in `extra`.
pub fn normalize_h(
    h: &ScalarFunction,
    extent: f64,
    grid_points: usize,
    extra: &[f64],
) -> Result<NormalizedH> {
    let extent = if extent.is_finite() && extent > 0.0 { extent } else { 1.0 };
    let n = grid_points.max(2);
    let h0 = h.eval(0.0)?.abs();
    let side = |sign: f64| -> Result<Vec<(f64, f64)>> {
        let mut nodes: Vec<f64> = (0..=n).map(|k| extent * k as f64 / n as f64).collect();
        nodes.extend(
            extra
                .iter()
                .filter(|p| p.is_finite() && p.abs() <= extent && (**p * sign) > 0.0)
                .map(|p| p.abs()),
        );
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let mut running = 0.0f64;
        let mut out = Vec::with_capacity(nodes.len());
        for r in nodes {
            running = running.max(h.eval(sign * r)?.abs());
            out.push((r, running));
        }
        Ok(out)
    };
    Ok(NormalizedH {
        h0,
        pos: side(1.0)?,
        neg: side(-1.0)?,
    })
}

/// Default tabulation range for `h~`: twice the furthest atom or finite
/// diagonal crossing, at least 1.
pub fn h_extent(pf: &PotentialFunction) -> f64 {
    let atoms = pf.measure().atoms().iter().map(|a| a.value.abs());
    let crossings = pf.crossing_points().into_iter().map(f64::abs);
    2.0 * atoms.chain(crossings).fold(1.0f64, f64::max)
}

/// `h~` tabulated over the default range for `pf`, with every atom and
/// diagonal crossing as an exact node.
pub fn normalize_for(pf: &PotentialFunction, h: &ScalarFunction) -> Result<NormalizedH> {
    let mut extra = pf.crossing_points();
    extra.extend(pf.measure().atoms().iter().map(|a| a.value));
    normalize_h(h, h_extent(pf), H_GRID_POINTS, &extra)
}

/// The frame at `theta_0 = inf { theta : h~(z_plus) >= h~(-z_minus) }`.
pub fn theta_zero(pf: &PotentialFunction, h: &NormalizedH) -> Result<TangentFrame> {
    if pf.mean() < 0.0 {
        return Err(Error::MeanSignError { mean: pf.mean() });
    }
    let holds = |theta: f64| {
        let f = pf.tangent_frame(theta);
        h.eval(f.z_plus) >= h.eval(-f.z_minus)
    };
    if holds(-1.0) {
        return Ok(pf.tangent_frame(-1.0));
    }
    if !holds(1.0) {
        return Err(Error::NoCrossing);
    }
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while hi - lo > THETA_TOL {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut theta = hi;
    for s in pf.segment_slopes() {
        if (theta - s).abs() <= THETA_SNAP {
            theta = s;
            break;
        }
    }
    Ok(pf.tangent_frame(theta))
}
