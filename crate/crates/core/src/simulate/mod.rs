//! Path engines and the Monte Carlo driver.
//!
//! Two engines run the same [`StoppingRule`]s. The exact engine jumps from
//! one level of the rule to the next with gambler's-ruin probabilities and
//! samples the running extreme reached in between, so stopped values and
//! extremes have no discretisation error. The Euler engine steps the path
//! (Brownian motion or a diffusion read through its scale function) and is
//! what the exact engine is checked against.
//!
//! Path `i` draws from ChaCha stream `i` of the master seed, so a sample set
//! does not depend on how paths are spread over worker threads.

mod euler;
mod exact;

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::format::fmt17;
use crate::rules::{Decision, RuleState, StoppingRule};
use crate::{Error, Result};

pub use euler::{euler_diffusion, euler_path, DiffusionRecord, EulerParams};
pub use exact::exact_walk;

/// Safety valve on the number of rule decisions along one path.
const MAX_EVENTS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub b_t: f64,
    pub m_t: f64,
    pub j_t: f64,
    /// Stages visited, starting with 0.
    pub stages: Vec<u8>,
    /// Elapsed time; Euler engine only.
    pub clock: Option<f64>,
    pub censored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Engine {
    Exact,
    Euler(EulerParams),
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::Exact => "exact",
            Engine::Euler(_) => "euler",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub records: Vec<SampleRecord>,
    pub master_seed: u64,
    pub n_requested: usize,
    pub engine: Engine,
}

impl SampleSet {
    pub fn dt(&self) -> Option<f64> {
        match self.engine {
            Engine::Exact => None,
            Engine::Euler(p) => Some(p.dt),
        }
    }

    pub fn uncensored(&self) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(|r| !r.censored)
    }

    pub fn censored_count(&self) -> usize {
        self.records.iter().filter(|r| r.censored).count()
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored_count() as f64 / self.records.len().max(1) as f64
    }

    /// CSV with header `path_index,b_T,m_T,j_T,censored,stage_count[,clock]`.
    pub fn to_csv(&self) -> String {
        let with_clock = matches!(self.engine, Engine::Euler(_));
        let mut out = String::from("path_index,b_T,m_T,j_T,censored,stage_count");
        if with_clock {
            out.push_str(",clock");
        }
        out.push('\n');
        for (i, r) in self.records.iter().enumerate() {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                i,
                fmt17(r.b_t),
                fmt17(r.m_t),
                fmt17(r.j_t),
                u8::from(r.censored),
                r.stages.len()
            );
            if with_clock {
                let _ = write!(out, ",{}", fmt17(r.clock.unwrap_or(f64::NAN)));
            }
            out.push('\n');
        }
        out
    }

    /// Reads the CSV written by [`SampleSet::to_csv`].
    pub fn from_csv(text: &str, master_seed: u64, engine: Engine) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty samples file")?;
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        let want = ["path_index", "b_T", "m_T", "j_T", "censored", "stage_count"];
        if columns.len() < want.len() || columns[..want.len()] != want {
            return Err(format!("unexpected samples header `{header}`"));
        }
        let mut records = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != columns.len() {
                return Err(format!("samples line {}: expected {} fields", k + 2, columns.len()));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| format!("samples line {}: bad number `{s}`", k + 2))
            };
            let stage_count: usize = f[5]
                .parse()
                .map_err(|_| format!("samples line {}: bad stage count", k + 2))?;
            records.push(SampleRecord {
                b_t: num(f[1])?,
                m_t: num(f[2])?,
                j_t: num(f[3])?,
                censored: f[4] == "1",
                stages: (0..stage_count).map(|s| s as u8).collect(),
                clock: if f.len() > 6 { Some(num(f[6])?) } else { None },
            });
        }
        Ok(Self {
            n_requested: records.len(),
            records,
            master_seed,
            engine,
        })
    }
}

/// The random stream of path `index`.
pub fn path_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Uniform on `(0, 1]`, safe to take logs of.
pub(crate) fn open_uniform<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Runs `path` for indices `0..n` on `workers` threads and returns the
/// results in index order.
pub fn run_paths<T, F>(n: usize, master_seed: u64, workers: usize, path: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidStep(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| path(&mut path_rng(master_seed, i as u64)))
            .collect()
    })
}

pub fn monte_carlo(
    rule: &StoppingRule,
    n: usize,
    master_seed: u64,
    engine: Engine,
    workers: usize,
) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::NoSamples);
    }
    let records = run_paths(n, master_seed, workers, |rng| match engine {
        Engine::Exact => exact_walk(rule, rng),
        Engine::Euler(params) => euler_path(rule, params, rng),
    })?;
    Ok(SampleSet {
        records,
        master_seed,
        n_requested: n,
        engine,
    })
}

/// Bookkeeping shared by both engines: the rule state plus global extremes.
#[derive(Debug, Clone)]
pub(crate) struct PathState {
    pub state: RuleState,
    pub max: f64,
    pub min: f64,
    pub stages: Vec<u8>,
    events: usize,
}

impl PathState {
    pub fn new() -> Self {
        Self {
            state: RuleState::start(0.0),
            max: 0.0,
            min: 0.0,
            stages: vec![0],
            events: 0,
        }
    }

    /// Applies rule decisions until the rule either stops (returns true) or
    /// wants the path to move.
    pub fn settle(&mut self, rule: &StoppingRule) -> Result<bool> {
        loop {
            self.events += 1;
            if self.events > MAX_EVENTS {
                return Err(Error::InvalidStep("rule made no progress".into()));
            }
            match rule.stop_decision(&self.state) {
                Decision::Stop => return Ok(true),
                Decision::Continue => return Ok(false),
                Decision::AdvanceStage(stage) => {
                    let v = self.state.value;
                    self.state = RuleState {
                        value: v,
                        max: v,
                        min: v,
                        stage,
                    };
                    self.stages.push(stage);
                }
            }
        }
    }

    /// Moves to a new value with the extremes seen on the way.
    pub fn advance(&mut self, value: f64, hi: f64, lo: f64) {
        let s = &mut self.state;
        s.value = value;
        s.max = s.max.max(hi);
        s.min = s.min.min(lo);
        self.max = self.max.max(hi);
        self.min = self.min.min(lo);
    }

    /// Arrival at a level the rule only uses to switch barriers: the
    /// running extreme has just passed it.
    pub fn pass_threshold(&mut self, upward: bool) {
        let s = &mut self.state;
        if upward {
            s.max = s.max.max(s.value.next_up());
        } else {
            s.min = s.min.min(s.value.next_down());
        }
    }

    pub fn record(self, clock: Option<f64>, censored: bool) -> SampleRecord {
        SampleRecord {
            b_t: self.state.value,
            m_t: self.max,
            j_t: self.min,
            stages: self.stages,
            clock,
            censored,
        }
    }
}
