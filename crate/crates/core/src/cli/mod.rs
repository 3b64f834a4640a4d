//! Command-line front end: `construct`, `simulate`, `verify`, `compare` and
//! `diffusion`, each driven by a config file and writing CSV into `--out`.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 usage or config error,
//! 3 infeasible embedding.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::diffusion::{classify_embeddable, inverse_function, scale_function, ScaleTable};
use crate::format::fmt17;
use crate::measure::TargetMeasure;
use crate::potential::PotentialFunction;
use crate::rules::{compile_naive, compile_tmax, compile_tmin, compile_tmod, StoppingRule};
use crate::simulate::{euler_diffusion, exact_walk, monte_carlo, run_paths, DiffusionRecord, Engine, SampleSet};
use crate::verify::{self, default_x_grid, ks_distance, max_tail, VerifyOptions};
use crate::Error;
use config::{Config, ConfigError, RuleConfig, RuleKind};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "skorokhod", version, about = "Optimal Skorokhod embeddings: construct, simulate, verify")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Potential, barrier and max-law bound of the target.
    Construct(Paths),
    /// Monte Carlo samples of the configured rule.
    Simulate(Paths),
    /// Simulate (or load samples) and run the statistical checks.
    Verify(Paths),
    /// Laws of the maximum under two configured rules.
    Compare(Paths),
    /// Embedding in a diffusion through its scale function.
    Diffusion(Paths),
}

#[derive(Debug, Args)]
pub struct Paths {
    /// Experiment config; `compare` takes two.
    #[arg(long, required = true)]
    pub config: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Library(Error),
    Infeasible(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::MeanSignError { .. } | Error::NoCrossing => Failure::Infeasible(e.to_string()),
            e => Failure::Library(e),
        }
    }
}

pub type Outcome = Result<i32, Failure>;

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Construct(p) => one_config(p).and_then(|c| cmd_construct(&c, &p.out)),
        Command::Simulate(p) => one_config(p).and_then(|c| cmd_simulate(&c, &p.out)),
        Command::Verify(p) => one_config(p).and_then(|c| cmd_verify(&c, &p.out)),
        Command::Compare(p) => two_configs(p).and_then(|(a, b)| cmd_compare(&a, &b, &p.out)),
        Command::Diffusion(p) => one_config(p).and_then(|c| cmd_diffusion(&c, &p.out)),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Library(e)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            EXIT_INFEASIBLE
        }
    }
}

fn one_config(p: &Paths) -> Result<Config, Failure> {
    match p.config.as_slice() {
        [path] => Ok(Config::load(path)?),
        _ => Err(Failure::Config("expected exactly one --config".into())),
    }
}

fn two_configs(p: &Paths) -> Result<(Config, Config), Failure> {
    match p.config.as_slice() {
        [a, b] => Ok((Config::load(a)?, Config::load(b)?)),
        _ => Err(Failure::Config("compare expects two --config files".into())),
    }
}

fn write(out: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(out)
        .and_then(|_| std::fs::write(out.join(name), contents))
        .map_err(|e| Failure::Config(format!("cannot write {}: {e}", out.join(name).display())))
}

/// Compiles the configured rule for `mu`.
pub fn compile_rule(rc: &RuleConfig, mu: &TargetMeasure) -> crate::Result<StoppingRule> {
    let value = |v: Option<f64>| v.expect("checked when the config was read");
    Ok(match rc.kind {
        RuleKind::Tmax => compile_tmax(mu),
        RuleKind::Tmin => compile_tmin(mu),
        RuleKind::Naive => compile_naive(mu),
        RuleKind::Tmod => compile_tmod(mu, rc.h.as_ref().expect("checked when the config was read"))?,
        RuleKind::Hitting => StoppingRule::Hitting(value(rc.level)),
        RuleKind::FirstExit => StoppingRule::FirstExit {
            lower: value(rc.lower),
            upper: value(rc.upper),
        },
        RuleKind::Control => StoppingRule::NonMinimalControl {
            waypoint: value(rc.waypoint),
            lower: value(rc.lower),
            upper: value(rc.upper),
        },
    })
}

fn potential_csv(pf: &PotentialFunction) -> String {
    let mu = pf.measure();
    let mut xs = vec![mu.support_lo() - 1.0];
    xs.extend(pf.kinks().iter().map(|k| k.x));
    xs.push(mu.support_hi() + 1.0);
    let mut out = String::from("x,c,left_derivative\n");
    for x in xs {
        let _ = writeln!(out, "{},{},{}", fmt17(x), fmt17(pf.eval(x)), fmt17(pf.left_derivative(x)));
    }
    out
}

fn barrier_csv(pf: &PotentialFunction) -> String {
    let mut out = String::from("threshold,barrier\n");
    for (t, b) in pf.barrier_table() {
        let _ = writeln!(out, "{},{}", fmt17(t), fmt17(b));
    }
    out
}

fn bound_csv(pf: &PotentialFunction) -> String {
    let top = (2.0 * pf.measure().support_hi()).max(4.0);
    let steps = (top / 0.25).ceil() as usize;
    let mut out = String::from("x,max_law_bound\n");
    for k in 0..=steps {
        let x = 0.25 * k as f64;
        let _ = writeln!(out, "{},{}", fmt17(x), fmt17(pf.max_law_bound(x)));
    }
    out
}

pub fn cmd_construct(cfg: &Config, out: &Path) -> Outcome {
    let mu = cfg.measure()?;
    let pf = PotentialFunction::build(&mu);
    write(out, "potential.csv", &potential_csv(&pf))?;
    write(out, "barrier.csv", &barrier_csv(&pf))?;
    write(out, "bound.csv", &bound_csv(&pf))?;
    if cfg.has("rule") {
        let rule = compile_rule(&cfg.rule()?, &mu)?;
        write(out, "rule.txt", &rule.to_table_text())?;
    }
    Ok(EXIT_PASS)
}

fn simulate_samples(cfg: &Config, mu: &TargetMeasure) -> Result<(RuleConfig, SampleSet), Failure> {
    let rc = cfg.rule()?;
    let sim = cfg.simulate(false)?;
    let rule = compile_rule(&rc, mu)?;
    let samples = monte_carlo(&rule, sim.n, sim.seed, sim.engine, sim.workers)?;
    Ok((rc, samples))
}

pub fn cmd_simulate(cfg: &Config, out: &Path) -> Outcome {
    let mu = cfg.measure()?;
    let (_, samples) = simulate_samples(cfg, &mu)?;
    write(out, "samples.csv", &samples.to_csv())?;
    Ok(EXIT_PASS)
}

pub fn cmd_verify(cfg: &Config, out: &Path) -> Outcome {
    let mu = cfg.measure()?;
    let rc = cfg.rule()?;
    let loaded = cfg.verify(Engine::Exact)?.samples;
    let samples = match loaded {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Failure::Config(format!("[verify] samples: cannot read {}: {e}", path.display())))?;
            let engine = if text.lines().next().is_some_and(|h| h.ends_with(",clock")) {
                Engine::Euler(Default::default())
            } else {
                Engine::Exact
            };
            SampleSet::from_csv(&text, 0, engine).map_err(Failure::Config)?
        }
        None => {
            let (_, samples) = simulate_samples(cfg, &mu)?;
            write(out, "samples.csv", &samples.to_csv())?;
            samples
        }
    };
    let vc = cfg.verify(samples.engine)?;
    let mut opts = VerifyOptions::defaults(&mu, vc.thresholds);
    if let Some(g) = vc.x_grid {
        opts.x_grid = g;
    }
    if let Some(g) = vc.gammas {
        opts.gammas = g;
    }
    opts.check_max_law = rc.kind == RuleKind::Tmax;
    let report = verify::verify(&samples, &mu, &opts)?;
    write(out, "verify.csv", &report.to_csv())?;
    print!("{}", report.verdict_lines());
    Ok(if report.passed() { EXIT_PASS } else { EXIT_FAIL })
}

pub fn cmd_compare(a: &Config, b: &Config, out: &Path) -> Outcome {
    let mu_a = a.measure()?;
    let mu_b = b.measure()?;
    let (_, sa) = simulate_samples(a, &mu_a)?;
    let (_, sb) = simulate_samples(b, &mu_b)?;
    let grid = match a.verify(sa.engine)?.x_grid {
        Some(g) => g,
        None => default_x_grid(mu_a.support_hi().max(mu_b.support_hi())),
    };
    let mut csv = String::from("x,p_a,p_b,difference\n");
    let (mut above, mut below, mut worst) = (0usize, 0usize, 0.0f64);
    for &x in &grid {
        let pa = max_tail(&sa, x)?;
        let pb = max_tail(&sb, x)?;
        let d = pa - pb;
        above += usize::from(d > 0.0);
        below += usize::from(d < 0.0);
        worst = worst.max(d.abs());
        let _ = writeln!(csv, "{},{},{},{}", fmt17(x), fmt17(pa), fmt17(pb), fmt17(d));
    }
    write(out, "compare.csv", &csv)?;
    println!(
        "points={} a_above={} b_above={} max_abs_difference={}",
        grid.len(),
        above,
        below,
        fmt17(worst)
    );
    Ok(EXIT_PASS)
}

/// The configured rule carried into scale coordinates.
fn scale_rule(rc: &RuleConfig, mu_y: &TargetMeasure, st: &ScaleTable) -> crate::Result<StoppingRule> {
    let s = |x: Option<f64>| st.eval(x.expect("checked when the config was read"));
    Ok(match rc.kind {
        RuleKind::Tmod => {
            let h = rc.h.as_ref().expect("checked when the config was read");
            compile_tmod(mu_y, &h.compose(inverse_function(st)))?
        }
        RuleKind::Hitting => StoppingRule::Hitting(s(rc.level)?),
        RuleKind::FirstExit => StoppingRule::FirstExit {
            lower: s(rc.lower)?,
            upper: s(rc.upper)?,
        },
        RuleKind::Control => StoppingRule::NonMinimalControl {
            waypoint: s(rc.waypoint)?,
            lower: s(rc.lower)?,
            upper: s(rc.upper)?,
        },
        _ => compile_rule(rc, mu_y)?,
    })
}

pub fn cmd_diffusion(cfg: &Config, out: &Path) -> Outcome {
    let mu_x = cfg.measure()?;
    let (spec, grid) = cfg.diffusion(&mu_x)?;
    let rc = cfg.rule()?;
    let sim = cfg.simulate(true)?;
    let st = scale_function(&spec, grid)?;
    write(out, "scale.csv", &st.to_csv())?;
    let class = classify_embeddable(&st, &mu_x)?;
    write(out, "classification.txt", &class.to_text())?;
    if !class.embeddable {
        return Err(Failure::Infeasible(format!(
            "{} with scale mean {} violates `{}`",
            class.case_name(),
            fmt17(class.scale_mean),
            class.condition()
        )));
    }
    let mu_y = mu_x.pushforward(&st)?;
    let rule = scale_rule(&rc, &mu_y, &st)?;
    let records: Vec<DiffusionRecord> = run_paths(sim.n, sim.seed, sim.workers, |rng| match sim.engine {
        Engine::Euler(params) => euler_diffusion(&spec, &st, &rule, params, rng),
        Engine::Exact => {
            let scale = exact_walk(&rule, rng)?;
            let (lo, hi) = st.range();
            let inside = (lo..=hi).contains(&scale.b_t);
            Ok(DiffusionRecord {
                x_t: if inside { st.invert(scale.b_t)? } else { f64::NAN },
                domain_exit: !inside,
                scale,
            })
        }
    })?;

    let mut csv = String::from("path_index,x_T,y_T,m_T,j_T,censored,domain_exit\n");
    for (i, r) in records.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            i,
            fmt17(r.x_t),
            fmt17(r.scale.b_t),
            fmt17(r.scale.m_t),
            fmt17(r.scale.j_t),
            u8::from(r.scale.censored),
            u8::from(r.domain_exit)
        );
    }
    write(out, "samples_x.csv", &csv)?;

    let scale_set = SampleSet {
        records: records.iter().map(|r| r.scale.clone()).collect(),
        master_seed: sim.seed,
        n_requested: sim.n,
        engine: sim.engine,
    };
    let thresholds = cfg.verify(sim.engine)?.thresholds;
    let ks = ks_distance(&scale_set, &mu_y)?;
    let (lower, upper) = st.limits();
    let crossings = records
        .iter()
        .filter(|r| r.scale.m_t >= upper || r.scale.j_t <= lower)
        .count();
    let exits = records.iter().filter(|r| r.domain_exit).count();
    let checks = [
        ("ks_scale", ks, thresholds.ks, ks <= thresholds.ks),
        ("endpoint_crossings", crossings as f64, 0.0, crossings == 0),
        ("domain_exits", exits as f64, 0.0, exits == 0),
    ];
    let mut pass = true;
    for (name, value, threshold, ok) in checks {
        pass &= ok;
        println!(
            "{} {} value={} threshold={}",
            if ok { "PASS" } else { "FAIL" },
            name,
            fmt17(value),
            fmt17(threshold)
        );
    }
    Ok(if pass { EXIT_PASS } else { EXIT_FAIL })
}
