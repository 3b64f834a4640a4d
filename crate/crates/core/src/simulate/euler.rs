//! Time-stepping engine.
//!
//! Each step draws a Gaussian increment. With the bridge correction on, the
//! maximum and minimum of the Brownian bridge between the two endpoints are
//! sampled as well, which both detects level crossings inside a step and
//! gives the running extremes their exact law. The step then shrinks with
//! the distance to the nearest rule level, never below `dt`: far from every
//! level a long step is as good as many short ones, and rules whose stopping
//! time has infinite mean stay affordable. Without the bridge the step is
//! fixed at `dt` and crossings are only seen at grid times.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{open_uniform, PathState, SampleRecord};
use crate::diffusion::{DiffusionSpec, ScaleTable};
use crate::rules::{Level, StoppingRule};
use crate::{Error, Result};

/// Step standard deviation as a fraction of the distance to the nearest level.
const STEP_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerParams {
    pub dt: f64,
    pub horizon: f64,
    pub bridge: bool,
    /// Largest adaptive step.
    pub dt_max: f64,
}

impl Default for EulerParams {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            horizon: 1e4,
            bridge: true,
            dt_max: f64::INFINITY,
        }
    }
}

impl EulerParams {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidStep(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidStep(format!(
                "horizon = {} must be positive",
                self.horizon
            )));
        }
        Ok(())
    }

    fn step(&self, lo: f64, hi: f64, value: f64, vol: f64) -> f64 {
        if !self.bridge {
            return self.dt;
        }
        let gap = (value - lo).min(hi - value);
        let wanted = (STEP_FRACTION * gap / vol).powi(2);
        wanted.min(self.dt_max.max(self.dt)).max(self.dt)
    }
}

/// What the engine steps: a value in rule coordinates plus whatever the
/// underlying process needs.
trait Walker {
    fn value(&self) -> f64;
    /// Diffusion coefficient of the rule coordinate at the current point.
    fn local_vol(&self) -> Result<f64>;
    /// Proposes the value after a step of length `dt`; `None` when the
    /// process leaves the region it can be tracked in.
    fn propose<R: Rng>(&mut self, rng: &mut R, dt: f64) -> Result<Option<f64>>;
    /// Takes the proposed step.
    fn accept(&mut self);
    /// Places the process at a rule level instead.
    fn place(&mut self, level: f64) -> Result<bool>;
}

enum Outcome {
    Stopped,
    Censored,
    Escaped,
}

fn bridge_extremes<R: Rng>(rng: &mut R, v0: f64, v1: f64, var: f64) -> (f64, f64) {
    let d2 = (v1 - v0) * (v1 - v0);
    let up = (d2 - 2.0 * var * open_uniform(rng).ln()).sqrt();
    let down = (d2 - 2.0 * var * open_uniform(rng).ln()).sqrt();
    (0.5 * (v0 + v1 + up), 0.5 * (v0 + v1 - down))
}

fn run<W: Walker, R: Rng>(
    rule: &StoppingRule,
    params: EulerParams,
    walker: &mut W,
    rng: &mut R,
) -> Result<(PathState, f64, Outcome)> {
    params.validate()?;
    let mut path = PathState::new();
    let mut clock = 0.0;
    loop {
        if path.settle(rule)? {
            return Ok((path, clock, Outcome::Stopped));
        }
        if clock >= params.horizon {
            return Ok((path, clock, Outcome::Censored));
        }
        let (lo, hi): (Level, Level) = rule.levels(&path.state);
        let v0 = walker.value();
        let vol = walker.local_vol()?;
        let dt = params.step(lo.at, hi.at, v0, vol);
        let Some(v1) = walker.propose(rng, dt)? else {
            return Ok((path, clock, Outcome::Escaped));
        };
        clock += dt;
        let (mx, mn) = if params.bridge {
            bridge_extremes(rng, v0, v1, vol * vol * dt)
        } else {
            (v0.max(v1), v0.min(v1))
        };
        let mut cross_hi = mx >= hi.at;
        let mut cross_lo = mn <= lo.at;
        if cross_hi && cross_lo {
            // order unknown inside the step; take the nearer level
            if v0 - lo.at < hi.at - v0 {
                cross_hi = false;
            } else {
                cross_lo = false;
            }
        }
        if cross_hi {
            if !walker.place(hi.at)? {
                return Ok((path, clock, Outcome::Escaped));
            }
            path.advance(hi.at, hi.at, v0);
            if !hi.terminal {
                path.pass_threshold(true);
            }
        } else if cross_lo {
            if !walker.place(lo.at)? {
                return Ok((path, clock, Outcome::Escaped));
            }
            path.advance(lo.at, v0, lo.at);
            if !lo.terminal {
                path.pass_threshold(false);
            }
        } else {
            walker.accept();
            path.advance(v1, mx, mn);
        }
    }
}

struct Brownian {
    value: f64,
    pending: f64,
}

impl Walker for Brownian {
    fn value(&self) -> f64 {
        self.value
    }

    fn local_vol(&self) -> Result<f64> {
        Ok(1.0)
    }

    fn propose<R: Rng>(&mut self, rng: &mut R, dt: f64) -> Result<Option<f64>> {
        let z: f64 = rng.sample(StandardNormal);
        self.pending = self.value + dt.sqrt() * z;
        Ok(Some(self.pending))
    }

    fn accept(&mut self) {
        self.value = self.pending;
    }

    fn place(&mut self, level: f64) -> Result<bool> {
        self.value = level;
        Ok(true)
    }
}

/// Simulates Brownian motion from 0 until `rule` stops or the clock reaches
/// the horizon.
pub fn euler_path<R: Rng>(rule: &StoppingRule, params: EulerParams, rng: &mut R) -> Result<SampleRecord> {
    let mut walker = Brownian {
        value: 0.0,
        pending: 0.0,
    };
    let (path, clock, outcome) = run(rule, params, &mut walker, rng)?;
    Ok(path.record(Some(clock), !matches!(outcome, Outcome::Stopped)))
}

/// A diffusion path: the record of `Y = s(X)` the rule saw, plus `X_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionRecord {
    pub scale: SampleRecord,
    pub x_t: f64,
    /// `X` left the tabulated part of its state space before stopping.
    pub domain_exit: bool,
}

struct Diffusion<'a> {
    spec: &'a DiffusionSpec,
    table: &'a ScaleTable,
    x: f64,
    y: f64,
    pending: (f64, f64),
}

impl Walker for Diffusion<'_> {
    fn value(&self) -> f64 {
        self.y
    }

    fn local_vol(&self) -> Result<f64> {
        Ok(self.table.derivative(self.x)? * self.spec.vol.eval(self.x)?)
    }

    fn propose<R: Rng>(&mut self, rng: &mut R, dt: f64) -> Result<Option<f64>> {
        let z: f64 = rng.sample(StandardNormal);
        let b = self.spec.drift.eval(self.x)?;
        let s = self.spec.vol.eval(self.x)?;
        let x1 = self.x + b * dt + s * dt.sqrt() * z;
        let (lo, hi) = self.table.domain();
        if !(lo < x1 && x1 < hi) {
            return Ok(None);
        }
        let y1 = self.table.eval(x1)?;
        self.pending = (x1, y1);
        Ok(Some(y1))
    }

    fn accept(&mut self) {
        (self.x, self.y) = self.pending;
    }

    fn place(&mut self, level: f64) -> Result<bool> {
        match self.table.invert(level) {
            Ok(x) => {
                self.x = x;
                self.y = level;
                Ok(true)
            }
            Err(Error::OutOfRange { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    }
}

/// Euler-Maruyama for `X` from 0 with `rule` read on `Y = s(X)`.
pub fn euler_diffusion<R: Rng>(
    spec: &DiffusionSpec,
    table: &ScaleTable,
    rule: &StoppingRule,
    params: EulerParams,
    rng: &mut R,
) -> Result<DiffusionRecord> {
    let mut walker = Diffusion {
        spec,
        table,
        x: 0.0,
        y: table.eval(0.0)?,
        pending: (0.0, 0.0),
    };
    let (path, clock, outcome) = run(rule, params, &mut walker, rng)?;
    let x_t = walker.x;
    Ok(DiffusionRecord {
        scale: path.record(Some(clock), !matches!(outcome, Outcome::Stopped)),
        x_t,
        domain_exit: matches!(outcome, Outcome::Escaped),
    })
}
