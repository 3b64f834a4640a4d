//! Executable stopping rules.
//!
//! A rule sees only the current value, the running maximum and minimum since
//! the current stage began, and the stage index. Every stopping time built
//! here is of that form, which is what lets the exact engine jump from one
//! interval exit to the next.

use std::fmt::Write as _;

use crate::format::fmt17;
use crate::measure::TargetMeasure;
use crate::potential::{normalize_for, theta_zero, PotentialFunction};
use crate::scalar::ScalarFunction;
use crate::{Error, Result};

/// Tolerance for the consistency of the exit probability with the slope.
const P_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Thresholds on the running maximum; stop when the value falls to the
    /// barrier.
    Up,
    /// Thresholds on the running minimum; stop when the value rises to the
    /// barrier.
    Down,
}

/// A barrier step function in absolute coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierTable {
    pub direction: Direction,
    /// Where the embedding starts; the table embeds the target from here.
    pub origin: f64,
    /// `(threshold, barrier)` rows. For `Up`, row `j` applies while the
    /// running maximum lies in `(threshold_j, threshold_{j+1}]`; thresholds
    /// increase. For `Down` the same with the minimum and decreasing
    /// thresholds. Barriers are atom values of the target, or `-inf`/`+inf`
    /// where the rule cannot stop yet.
    pub rows: Vec<(f64, f64)>,
}

impl BarrierTable {
    /// The extended Azema-Yor barrier for `mu`, started at `origin`.
    pub fn up(mu: &TargetMeasure, origin: f64) -> Self {
        let pf = PotentialFunction::build(&mu.shift(origin));
        let atoms = mu.atoms();
        let rows = pf
            .barrier_steps()
            .into_iter()
            .map(|s| {
                let b = s.atom.map_or(f64::NEG_INFINITY, |i| atoms[i].value);
                (origin + s.threshold, b)
            })
            .collect();
        Self {
            direction: Direction::Up,
            origin,
            rows,
        }
    }

    /// The mirror image: the `up` table of the reflected target, run on the
    /// reflected path.
    pub fn down(mu: &TargetMeasure, origin: f64) -> Self {
        let pf = PotentialFunction::build(&mu.shift(origin).reflect());
        let atoms = mu.atoms();
        let n = atoms.len();
        let rows = pf
            .barrier_steps()
            .into_iter()
            .map(|s| {
                let b = s.atom.map_or(f64::INFINITY, |j| atoms[n - 1 - j].value);
                (origin - s.threshold, b)
            })
            .collect();
        Self {
            direction: Direction::Down,
            origin,
            rows,
        }
    }

    /// Row in force for a running extreme.
    pub fn row_for(&self, extreme: f64) -> usize {
        match self.direction {
            Direction::Up => self.rows.iter().rposition(|&(t, _)| t < extreme),
            Direction::Down => self.rows.iter().rposition(|&(t, _)| t > extreme),
        }
        .unwrap_or(0)
    }

    pub fn barrier(&self, row: usize) -> f64 {
        self.rows[row].1
    }

    /// The extreme at which `row` hands over to the next one.
    pub fn next_threshold(&self, row: usize) -> f64 {
        match self.rows.get(row + 1) {
            Some(&(t, _)) => t,
            None if self.direction == Direction::Up => f64::INFINITY,
            None => f64::NEG_INFINITY,
        }
    }

    pub fn stops(&self, value: f64, extreme: f64) -> bool {
        let b = self.barrier(self.row_for(extreme));
        match self.direction {
            Direction::Up => value <= b,
            Direction::Down => value >= b,
        }
    }

    fn write_rows(&self, out: &mut String) {
        let label = match self.direction {
            Direction::Up => "max_threshold",
            Direction::Down => "min_threshold",
        };
        let _ = writeln!(out, "origin {}", fmt17(self.origin));
        let _ = writeln!(out, "{label},barrier");
        for &(t, b) in &self.rows {
            let _ = writeln!(out, "{},{}", fmt17(t), fmt17(b));
        }
    }
}

/// The two-stage rule maximising the law of `sup h(B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStage {
    /// `-z_minus(theta_0)`; `-inf` when the first stage is a hitting time.
    pub lower: f64,
    /// `z_plus(theta_0)`.
    pub upper: f64,
    pub upper_rule: StoppingRule,
    pub lower_rule: StoppingRule,
    pub theta0: f64,
    pub u: f64,
    /// Probability of leaving through `upper`.
    pub p: f64,
    /// Set when the target is centred, a case the optimality argument covers
    /// only by remark.
    pub centred: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoppingRule {
    ExtendedAY(BarrierTable),
    ReflectedAY(BarrierTable),
    TwoStageMod(Box<TwoStage>),
    Hitting(f64),
    FirstExit { lower: f64, upper: f64 },
    /// Reach `waypoint`, return to 0, then leave `(lower, upper)`. Embeds
    /// the exit law but is not minimal.
    NonMinimalControl { waypoint: f64, lower: f64, upper: f64 },
    /// Hit `level`, then run the Azema-Yor rule of the target from there.
    Naive { level: f64, then: BarrierTable },
}

/// Rule input: the value plus the running extremes since the current stage
/// began.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleState {
    pub value: f64,
    pub max: f64,
    pub min: f64,
    pub stage: u8,
}

impl RuleState {
    pub fn start(value: f64) -> Self {
        Self {
            value,
            max: value,
            min: value,
            stage: 0,
        }
    }

    fn in_stage(self, stage: u8) -> Self {
        Self { stage, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
    /// Move to the given stage; its running extremes restart at the value.
    AdvanceStage(u8),
}

/// An end of the interval a rule continues in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub at: f64,
    /// Reaching a terminal level stops the rule or ends the stage; reaching
    /// a non-terminal one only changes the barrier.
    pub terminal: bool,
}

impl Level {
    fn terminal(at: f64) -> Self {
        Self { at, terminal: true }
    }

    fn threshold(at: f64) -> Self {
        Self { at, terminal: false }
    }
}

fn reached(state: &RuleState, level: f64) -> bool {
    state.min <= level && level <= state.max
}

impl StoppingRule {
    pub fn kind_name(&self) -> &'static str {
        match self {
            StoppingRule::ExtendedAY(_) => "extended_ay",
            StoppingRule::ReflectedAY(_) => "reflected_ay",
            StoppingRule::TwoStageMod(_) => "two_stage_mod",
            StoppingRule::Hitting(_) => "hitting",
            StoppingRule::FirstExit { .. } => "first_exit",
            StoppingRule::NonMinimalControl { .. } => "non_minimal_control",
            StoppingRule::Naive { .. } => "naive",
        }
    }

    pub fn stop_decision(&self, state: &RuleState) -> Decision {
        let stop_if = |b: bool| if b { Decision::Stop } else { Decision::Continue };
        match self {
            StoppingRule::ExtendedAY(t) => stop_if(t.stops(state.value, state.max)),
            StoppingRule::ReflectedAY(t) => stop_if(t.stops(state.value, state.min)),
            StoppingRule::Hitting(level) => stop_if(reached(state, *level)),
            StoppingRule::FirstExit { lower, upper } => {
                stop_if(state.min <= *lower || state.max >= *upper)
            }
            StoppingRule::NonMinimalControl {
                waypoint,
                lower,
                upper,
            } => match state.stage {
                0 if reached(state, *waypoint) => Decision::AdvanceStage(1),
                1 if reached(state, 0.0) => Decision::AdvanceStage(2),
                2 => stop_if(state.min <= *lower || state.max >= *upper),
                _ => Decision::Continue,
            },
            StoppingRule::Naive { level, then } => match state.stage {
                0 if reached(state, *level) => Decision::AdvanceStage(1),
                1 => stop_if(then.stops(state.value, state.max)),
                _ => Decision::Continue,
            },
            StoppingRule::TwoStageMod(ts) => match state.stage {
                0 if state.max >= ts.upper => Decision::AdvanceStage(1),
                0 if state.min <= ts.lower => Decision::AdvanceStage(2),
                0 => Decision::Continue,
                1 => ts.upper_rule.stop_decision(&state.in_stage(0)),
                _ => ts.lower_rule.stop_decision(&state.in_stage(0)),
            },
        }
    }

    /// The interval around the current value in which the rule keeps
    /// running without any change to its barrier.
    pub fn levels(&self, state: &RuleState) -> (Level, Level) {
        let free_lo = Level::threshold(f64::NEG_INFINITY);
        let free_hi = Level::threshold(f64::INFINITY);
        let hitting = |level: f64| {
            if state.value < level {
                (free_lo, Level::terminal(level))
            } else {
                (Level::terminal(level), free_hi)
            }
        };
        let exit = |lower: f64, upper: f64| (Level::terminal(lower), Level::terminal(upper));
        match self {
            StoppingRule::ExtendedAY(t) => {
                let row = t.row_for(state.max);
                (
                    Level::terminal(t.barrier(row)),
                    Level::threshold(t.next_threshold(row)),
                )
            }
            StoppingRule::ReflectedAY(t) => {
                let row = t.row_for(state.min);
                (
                    Level::threshold(t.next_threshold(row)),
                    Level::terminal(t.barrier(row)),
                )
            }
            StoppingRule::Hitting(level) => hitting(*level),
            StoppingRule::FirstExit { lower, upper } => exit(*lower, *upper),
            StoppingRule::NonMinimalControl {
                waypoint,
                lower,
                upper,
            } => match state.stage {
                0 => hitting(*waypoint),
                1 => hitting(0.0),
                _ => exit(*lower, *upper),
            },
            StoppingRule::Naive { level, then } => match state.stage {
                0 => hitting(*level),
                _ => StoppingRule::ExtendedAY(then.clone()).levels(state),
            },
            StoppingRule::TwoStageMod(ts) => match state.stage {
                0 => exit(ts.lower, ts.upper),
                1 => ts.upper_rule.levels(&state.in_stage(0)),
                _ => ts.lower_rule.levels(&state.in_stage(0)),
            },
        }
    }

    /// Plain-text table: a `kind` header, parameters, then barrier rows.
    pub fn to_table_text(&self) -> String {
        let mut out = String::new();
        self.write_table(&mut out);
        out
    }

    fn write_table(&self, out: &mut String) {
        let _ = writeln!(out, "kind {}", self.kind_name());
        match self {
            StoppingRule::ExtendedAY(t) | StoppingRule::ReflectedAY(t) => t.write_rows(out),
            StoppingRule::Hitting(level) => {
                let _ = writeln!(out, "level {}", fmt17(*level));
            }
            StoppingRule::FirstExit { lower, upper } => {
                let _ = writeln!(out, "interval {},{}", fmt17(*lower), fmt17(*upper));
            }
            StoppingRule::NonMinimalControl {
                waypoint,
                lower,
                upper,
            } => {
                let _ = writeln!(out, "waypoint {}", fmt17(*waypoint));
                let _ = writeln!(out, "interval {},{}", fmt17(*lower), fmt17(*upper));
            }
            StoppingRule::Naive { level, then } => {
                let _ = writeln!(out, "level {}", fmt17(*level));
                then.write_rows(out);
            }
            StoppingRule::TwoStageMod(ts) => {
                let _ = writeln!(out, "interval {},{}", fmt17(ts.lower), fmt17(ts.upper));
                let _ = writeln!(out, "theta0 {}", fmt17(ts.theta0));
                let _ = writeln!(out, "u {}", fmt17(ts.u));
                let _ = writeln!(out, "p {}", fmt17(ts.p));
                let _ = writeln!(out, "centred {}", ts.centred);
                out.push_str("[upper]\n");
                ts.upper_rule.write_table(out);
                out.push_str("[lower]\n");
                ts.lower_rule.write_table(out);
            }
        }
    }
}

/// `T_max`: stop once the value falls to `b(running max)`.
pub fn compile_tmax(mu: &TargetMeasure) -> StoppingRule {
    if mu.is_point_mass() {
        return StoppingRule::Hitting(mu.support_lo());
    }
    StoppingRule::ExtendedAY(BarrierTable::up(mu, 0.0))
}

/// `T_min`: `T_max` of the reflected target run on the reflected path.
pub fn compile_tmin(mu: &TargetMeasure) -> StoppingRule {
    if mu.is_point_mass() {
        return StoppingRule::Hitting(mu.support_lo());
    }
    StoppingRule::ReflectedAY(BarrierTable::down(mu, 0.0))
}

/// Hit the mean, then run the Azema-Yor rule of the target from there.
pub fn compile_naive(mu: &TargetMeasure) -> StoppingRule {
    if mu.is_point_mass() {
        return StoppingRule::Hitting(mu.support_lo());
    }
    let m = mu.mean();
    StoppingRule::Naive {
        level: m,
        then: BarrierTable::up(mu, m),
    }
}

/// `T_mod` for a user function `h` (normalised internally).
///
/// Leave `(-z_minus, z_plus)` at the crossing slope `theta_0`; from the top
/// embed the upper quantile part with `T_max`, from the bottom embed the
/// lower part with `T_min`.
pub fn compile_tmod(mu: &TargetMeasure, h: &ScalarFunction) -> Result<StoppingRule> {
    let pf = PotentialFunction::build(mu);
    let m = pf.mean();
    if m < 0.0 {
        return Err(Error::MeanSignError { mean: m });
    }
    if mu.is_point_mass() {
        return Ok(StoppingRule::Hitting(mu.support_lo()));
    }
    let h_norm = normalize_for(&pf, h)?;
    let frame = theta_zero(&pf, &h_norm)?;

    let (z_plus, z_minus) = (frame.z_plus, frame.z_minus);
    let p = if z_minus.is_infinite() {
        1.0
    } else {
        z_minus / (z_plus + z_minus)
    };
    if (p - 0.5 * (1.0 - frame.theta)).abs() > P_TOL {
        return Err(Error::QuantileMismatch {
            p,
            u: frame.u,
            lower: 0.5 * (1.0 - frame.theta),
            upper: 0.5 * (1.0 - frame.theta),
        });
    }

    let upper_part = |part: &TargetMeasure| {
        if part.is_point_mass() {
            StoppingRule::Hitting(part.support_lo())
        } else {
            StoppingRule::ExtendedAY(BarrierTable::up(part, z_plus))
        }
    };
    let lower_part = |part: &TargetMeasure| {
        if part.is_point_mass() {
            StoppingRule::Hitting(part.support_lo())
        } else {
            StoppingRule::ReflectedAY(BarrierTable::down(part, -z_minus))
        }
    };
    // one branch is unreachable when p is 0 or 1
    let (upper_rule, lower_rule) = if p >= 1.0 - P_TOL {
        (upper_part(mu), StoppingRule::Hitting(mu.support_lo()))
    } else if p <= P_TOL {
        (StoppingRule::Hitting(mu.support_hi()), lower_part(mu))
    } else {
        let (plus, minus) = mu.quantile_split(p, frame.u)?;
        (upper_part(&plus), lower_part(&minus))
    };

    Ok(StoppingRule::TwoStageMod(Box::new(TwoStage {
        lower: -z_minus,
        upper: z_plus,
        upper_rule,
        lower_rule,
        theta0: frame.theta,
        u: frame.u,
        p,
        centred: m == 0.0,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(pairs: &[(f64, f64)]) -> TargetMeasure {
        TargetMeasure::from_atoms(pairs.iter().copied()).unwrap()
    }

    fn st(value: f64, max: f64, min: f64, stage: u8) -> RuleState {
        RuleState {
            value,
            max,
            min,
            stage,
        }
    }

    fn abs_h() -> ScalarFunction {
        ScalarFunction::new("abs", f64::abs)
    }

    #[test]
    fn tmax_tables() {
        let StoppingRule::ExtendedAY(t) = compile_tmax(&m(&[(-1.0, 0.5), (1.0, 0.5)])) else {
            panic!()
        };
        assert_eq!(t.rows, vec![(0.0, -1.0), (1.0, 1.0)]);
        let StoppingRule::ExtendedAY(t) = compile_tmax(&m(&[(-2.0, 0.5), (0.0, 0.5)])) else {
            panic!()
        };
        assert_eq!(t.rows, vec![(0.0, -2.0), (2.0, 0.0)]);
        assert_eq!(compile_tmax(&TargetMeasure::point_mass(-1.0)), StoppingRule::Hitting(-1.0));
    }

    #[test]
    fn tmin_mirrors_tmax() {
        let StoppingRule::ReflectedAY(t) = compile_tmin(&m(&[(0.0, 0.5), (2.0, 0.5)])) else {
            panic!()
        };
        assert_eq!(t.rows, vec![(0.0, 2.0), (-2.0, 0.0)]);
        assert_eq!(compile_tmin(&TargetMeasure::point_mass(1.0)), StoppingRule::Hitting(1.0));
    }

    #[test]
    fn decisions() {
        let rule = compile_tmax(&m(&[(-1.0, 0.5), (1.0, 0.5)]));
        assert_eq!(rule.stop_decision(&st(-1.0, 0.0, -1.0, 0)), Decision::Stop);
        assert_eq!(rule.stop_decision(&st(0.5, 0.5, -0.5, 0)), Decision::Continue);
        assert_eq!(rule.stop_decision(&st(1.0, 1.5, -0.5, 0)), Decision::Stop);

        let tmod = compile_tmod(&m(&[(0.0, 0.5), (2.0, 0.5)]), &abs_h()).unwrap();
        assert_eq!(tmod.stop_decision(&st(2.0, 2.0, -1.0, 0)), Decision::AdvanceStage(1));
        assert_eq!(tmod.stop_decision(&st(2.0, 2.0, 2.0, 1)), Decision::Stop);
        assert_eq!(tmod.stop_decision(&st(-2.0, 1.0, -2.0, 0)), Decision::AdvanceStage(2));
        assert_eq!(tmod.stop_decision(&st(-2.0, -2.0, -2.0, 2)), Decision::Continue);
        assert_eq!(tmod.stop_decision(&st(0.0, 0.0, -2.5, 2)), Decision::Stop);
    }

    #[test]
    fn tmod_example() {
        let StoppingRule::TwoStageMod(ts) =
            compile_tmod(&m(&[(0.0, 0.5), (2.0, 0.5)]), &abs_h()).unwrap()
        else {
            panic!()
        };
        assert_eq!((ts.lower, ts.upper, ts.p, ts.theta0), (-2.0, 2.0, 0.5, 0.0));
        assert_eq!(ts.upper_rule, StoppingRule::Hitting(2.0));
        assert_eq!(ts.lower_rule, StoppingRule::Hitting(0.0));
        assert!(!ts.centred);
    }

    #[test]
    fn tmod_rejects_negative_mean() {
        assert!(matches!(
            compile_tmod(&m(&[(-2.0, 0.5), (0.0, 0.5)]), &abs_h()),
            Err(Error::MeanSignError { .. })
        ));
    }

    #[test]
    fn tmod_mass_consistency() {
        let mu = m(&[(-3.0, 0.1), (-1.0, 0.2), (0.0, 0.3), (1.5, 0.25), (4.0, 0.15)]);
        for h in [abs_h(), ScalarFunction::new("x^2", |x| x * x), ScalarFunction::new("2|x| on left", |x| if x < 0.0 { -2.0 * x } else { x })] {
            let StoppingRule::TwoStageMod(ts) = compile_tmod(&mu, &h).unwrap() else {
                panic!()
            };
            assert!((ts.p - 0.5 * (1.0 - ts.theta0)).abs() < 1e-10);
            assert!(ts.lower < 0.0 && 0.0 < ts.upper);
            let (plus, minus) = mu.quantile_split(ts.p, ts.u).unwrap();
            // the upper exit level is the mean of the upper part, the lower
            // one lies strictly below the mean of the lower part
            assert!((plus.mean() - ts.upper).abs() < 1e-10);
            assert!(minus.mean() > ts.lower);
        }
    }

    #[test]
    fn point_targets_collapse_to_hitting() {
        for a in [-1.5, 0.0, 2.0] {
            let mu = TargetMeasure::point_mass(a);
            assert_eq!(compile_tmax(&mu), StoppingRule::Hitting(a));
            assert_eq!(compile_tmin(&mu), StoppingRule::Hitting(a));
            if a >= 0.0 {
                assert_eq!(compile_tmod(&mu, &abs_h()).unwrap(), StoppingRule::Hitting(a));
            }
        }
    }

    #[test]
    fn reflection_duality() {
        let mu = m(&[(-3.0, 0.1), (-1.0, 0.2), (0.0, 0.3), (1.5, 0.25), (4.0, 0.15)]);
        let tmin = compile_tmin(&mu);
        let tmax_reflected = compile_tmax(&mu.reflect());
        for i in 0..40 {
            for j in 0..40 {
                let max = i as f64 * 0.21;
                let min = -(j as f64) * 0.23;
                for k in 0..=10 {
                    let v = min + (max - min) * k as f64 / 10.0;
                    let a = tmin.stop_decision(&st(v, max, min, 0));
                    let b = tmax_reflected.stop_decision(&st(-v, -min, -max, 0));
                    assert_eq!(a, b, "v={v} max={max} min={min}");
                }
            }
        }
    }

    #[test]
    fn table_text() {
        let text = compile_tmax(&m(&[(-2.0, 0.5), (0.0, 0.5)])).to_table_text();
        assert_eq!(
            text,
            "kind extended_ay\norigin 0\nmax_threshold,barrier\n0,-2\n2,0\n"
        );
    }
}
