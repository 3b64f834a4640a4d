//! Experiment configuration files.
//!
//! ```text
//! # negative-mean example
//! [measure]
//! atoms = -2:0.5, 0:0.5
//!
//! [rule]
//! kind = tmax
//!
//! [simulate]
//! engine = exact
//! n = 200000
//! seed = 7
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::diffusion::{DiffusionSpec, GridSpec, DEFAULT_GRID_POINTS};
use crate::exprlang::Expr;
use crate::measure::TargetMeasure;
use crate::scalar::ScalarFunction;
use crate::simulate::{Engine, EulerParams};
use crate::verify::Thresholds;

const SECTIONS: &[(&str, &[&str])] = &[
    ("measure", &["atoms", "file", "quantile", "count"]),
    ("rule", &["kind", "h", "level", "lower", "upper", "waypoint"]),
    (
        "simulate",
        &["engine", "n", "seed", "dt", "dt_max", "horizon", "bridge", "workers"],
    ),
    ("diffusion", &["drift", "vol", "domain", "grid"]),
    (
        "verify",
        &[
            "samples",
            "x_grid",
            "gammas",
            "ks",
            "max_law",
            "minimality",
            "stopped_mean_sigmas",
        ],
    ),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
    /// Directory relative paths are resolved against.
    base: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Tmax,
    Tmin,
    Tmod,
    Hitting,
    FirstExit,
    Control,
    Naive,
}

#[derive(Debug, Clone)]
pub struct RuleConfig {
    pub kind: RuleKind,
    pub h: Option<ScalarFunction>,
    pub level: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub waypoint: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SimulateConfig {
    pub engine: Engine,
    pub n: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub samples: Option<PathBuf>,
    pub x_grid: Option<Vec<f64>>,
    pub gammas: Option<Vec<f64>>,
    pub thresholds: Thresholds,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (k, raw) in text.lines().enumerate() {
            let lineno = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let Some(name) = name.strip_suffix(']') else {
                    return err(format!("line {lineno}: unterminated section header"));
                };
                let name = name.trim();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return err(format!("line {lineno}: unknown section [{name}]"));
                }
                if sections.contains_key(name) {
                    return err(format!("line {lineno}: duplicate section [{name}]"));
                }
                sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(format!("line {lineno}: expected `key = value`"));
            };
            let Some(section) = &current else {
                return err(format!("line {lineno}: key outside any section"));
            };
            let key = key.trim();
            let allowed = SECTIONS.iter().find(|(s, _)| s == section).map(|(_, k)| *k).unwrap_or(&[]);
            if !allowed.contains(&key) {
                return err(format!("line {lineno}: unknown key `{key}` in [{section}]"));
            }
            let entries = sections.get_mut(section).expect("section exists");
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return err(format!("line {lineno}: duplicate key `{key}` in [{section}]"));
            }
        }
        Ok(Self {
            sections,
            base: PathBuf::new(),
        })
    }

    pub fn has(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    fn require_section(&self, section: &str) -> Result<()> {
        if self.has(section) {
            Ok(())
        } else {
            err(format!("missing section [{section}]"))
        }
    }

    fn number(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.get(section, key).map(|v| parse_real(v, section, key)).transpose()
    }

    fn integer(&self, section: &str, key: &str) -> Result<Option<u64>> {
        self.get(section, key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| ConfigError(format!("[{section}] {key}: expected a non-negative integer, got `{v}`")))
            })
            .transpose()
    }

    fn list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(section, key)
            .map(|v| v.split(',').map(|p| parse_real(p.trim(), section, key)).collect())
            .transpose()
    }

    fn expr(&self, section: &str, key: &str) -> Result<Option<ScalarFunction>> {
        self.get(section, key)
            .map(|v| {
                Expr::parse(v)
                    .map(ScalarFunction::from_expr)
                    .map_err(|e| ConfigError(format!("[{section}] {key}: {e}")))
            })
            .transpose()
    }

    fn path(&self, section: &str, key: &str) -> Option<PathBuf> {
        self.get(section, key).map(|p| self.base.join(p))
    }

    pub fn measure(&self) -> Result<TargetMeasure> {
        self.require_section("measure")?;
        let sources = ["atoms", "file", "quantile"]
            .iter()
            .filter(|k| self.get("measure", k).is_some())
            .count();
        if sources != 1 {
            return err("[measure] needs exactly one of `atoms`, `file`, `quantile`");
        }
        if let Some(atoms) = self.get("measure", "atoms") {
            let mut pairs = Vec::new();
            for item in atoms.split(',') {
                let Some((v, w)) = item.split_once(':') else {
                    return err(format!("[measure] atoms: expected `value:weight`, got `{}`", item.trim()));
                };
                pairs.push((parse_real(v.trim(), "measure", "atoms")?, parse_real(w.trim(), "measure", "atoms")?));
            }
            return TargetMeasure::from_atoms(pairs).map_err(|e| ConfigError(format!("[measure] atoms: {e}")));
        }
        if let Some(path) = self.path("measure", "file") {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ConfigError(format!("[measure] file: cannot read {}: {e}", path.display())))?;
            return TargetMeasure::parse_text(&text).map_err(|e| ConfigError(format!("[measure] file: {e}")));
        }
        let quantile = self.expr("measure", "quantile")?.expect("checked above");
        let count = self
            .integer("measure", "count")?
            .ok_or_else(|| ConfigError("[measure] quantile needs `count`".into()))?;
        TargetMeasure::from_quantile(count as usize, |p| Ok(quantile.eval(p)?))
            .map_err(|e| ConfigError(format!("[measure] quantile: {e}")))
    }

    pub fn rule(&self) -> Result<RuleConfig> {
        let kind = match self.get("rule", "kind").unwrap_or("tmax") {
            "tmax" => RuleKind::Tmax,
            "tmin" => RuleKind::Tmin,
            "tmod" => RuleKind::Tmod,
            "hitting" => RuleKind::Hitting,
            "first_exit" => RuleKind::FirstExit,
            "control" => RuleKind::Control,
            "naive" => RuleKind::Naive,
            other => return err(format!("[rule] kind: unknown rule `{other}`")),
        };
        let rc = RuleConfig {
            kind,
            h: self.expr("rule", "h")?,
            level: self.number("rule", "level")?,
            lower: self.number("rule", "lower")?,
            upper: self.number("rule", "upper")?,
            waypoint: self.number("rule", "waypoint")?,
        };
        let need = |ok: bool, key: &str| {
            if ok {
                Ok(())
            } else {
                err(format!("[rule] kind = {}: missing `{key}`", self.get("rule", "kind").unwrap_or("tmax")))
            }
        };
        match kind {
            RuleKind::Tmod => need(rc.h.is_some(), "h")?,
            RuleKind::Hitting => need(rc.level.is_some(), "level")?,
            RuleKind::FirstExit => {
                need(rc.lower.is_some(), "lower")?;
                need(rc.upper.is_some(), "upper")?;
            }
            RuleKind::Control => {
                need(rc.waypoint.is_some(), "waypoint")?;
                need(rc.lower.is_some(), "lower")?;
                need(rc.upper.is_some(), "upper")?;
            }
            _ => {}
        }
        Ok(rc)
    }

    /// `diffusion` selects the default maximal Euler step for diffusions.
    pub fn simulate(&self, diffusion: bool) -> Result<SimulateConfig> {
        self.require_section("simulate")?;
        let engine = match self.get("simulate", "engine").unwrap_or("exact") {
            "exact" => Engine::Exact,
            "euler" => {
                let dt = self
                    .number("simulate", "dt")?
                    .ok_or_else(|| ConfigError("[simulate] engine = euler: missing `dt`".into()))?;
                let defaults = EulerParams::default();
                let bridge = match self.get("simulate", "bridge").unwrap_or("true") {
                    "true" | "on" | "1" => true,
                    "false" | "off" | "0" => false,
                    other => return err(format!("[simulate] bridge: expected true or false, got `{other}`")),
                };
                Engine::Euler(EulerParams {
                    dt,
                    horizon: self.number("simulate", "horizon")?.unwrap_or(defaults.horizon),
                    bridge,
                    dt_max: self
                        .number("simulate", "dt_max")?
                        .unwrap_or(if diffusion { 1e-2 } else { defaults.dt_max }),
                })
            }
            other => return err(format!("[simulate] engine: expected exact or euler, got `{other}`")),
        };
        let n = self
            .integer("simulate", "n")?
            .ok_or_else(|| ConfigError("[simulate] missing `n`".into()))?;
        if n == 0 {
            return err("[simulate] n must be at least 1");
        }
        Ok(SimulateConfig {
            engine,
            n: n as usize,
            seed: self
                .integer("simulate", "seed")?
                .ok_or_else(|| ConfigError("[simulate] missing `seed`".into()))?,
            workers: self.integer("simulate", "workers")?.unwrap_or(1).max(1) as usize,
        })
    }

    pub fn verify(&self, engine: Engine) -> Result<VerifyConfig> {
        let base = match engine {
            Engine::Exact => Thresholds::exact(),
            Engine::Euler(_) => Thresholds::euler(),
        };
        Ok(VerifyConfig {
            samples: self.path("verify", "samples"),
            x_grid: self.list("verify", "x_grid")?,
            gammas: self.list("verify", "gammas")?,
            thresholds: Thresholds {
                ks: self.number("verify", "ks")?.unwrap_or(base.ks),
                max_law: self.number("verify", "max_law")?.unwrap_or(base.max_law),
                minimality: self.number("verify", "minimality")?.unwrap_or(base.minimality),
                stopped_mean_sigmas: self
                    .number("verify", "stopped_mean_sigmas")?
                    .unwrap_or(base.stopped_mean_sigmas),
            },
        })
    }

    /// The diffusion and its tabulation grid around the target atoms.
    pub fn diffusion(&self, mu: &TargetMeasure) -> Result<(DiffusionSpec, GridSpec)> {
        self.require_section("diffusion")?;
        let drift = self.expr("diffusion", "drift")?.unwrap_or_else(|| ScalarFunction::constant(0.0));
        let vol = self.expr("diffusion", "vol")?.unwrap_or_else(|| ScalarFunction::constant(1.0));
        let domain = match self.list("diffusion", "domain")? {
            None => (f64::NEG_INFINITY, f64::INFINITY),
            Some(v) if v.len() == 2 => (v[0], v[1]),
            Some(_) => return err("[diffusion] domain: expected `lo, hi`"),
        };
        let spec = DiffusionSpec::new(drift, vol, domain).map_err(|e| ConfigError(format!("[diffusion] {e}")))?;
        let atoms: Vec<f64> = mu.atoms().iter().map(|a| a.value).collect();
        let grid = match self.list("diffusion", "grid")? {
            None => GridSpec::around(&spec, &atoms, DEFAULT_GRID_POINTS),
            Some(v) if v.len() == 1 => GridSpec::around(&spec, &atoms, v[0] as usize),
            Some(v) if v.len() == 3 => GridSpec {
                lo: v[0],
                hi: v[1],
                points: v[2] as usize,
            },
            Some(_) => return err("[diffusion] grid: expected `points` or `lo, hi, points`"),
        };
        Ok((spec, grid))
    }
}

fn parse_real(v: &str, section: &str, key: &str) -> Result<f64> {
    match v {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => v
            .parse::<f64>()
            .map_err(|_| ConfigError(format!("[{section}] {key}: expected a number, got `{v}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let cfg = Config::parse("# c\n[measure]\natoms = -2:0.5, 0:0.5 # trailing\n[rule]\nkind = tmax\n").unwrap();
        let mu = cfg.measure().unwrap();
        assert_eq!(mu.len(), 2);
        assert_eq!(cfg.rule().unwrap().kind, RuleKind::Tmax);
    }

    #[test]
    fn rejects_unknown_keys() {
        let e = Config::parse("[measure]\nweights = 1\n").unwrap_err();
        assert!(e.0.contains("unknown key `weights`"), "{e}");
        assert!(Config::parse("[bogus]\n").is_err());
        assert!(Config::parse("atoms = 1:1\n").is_err());
    }

    #[test]
    fn euler_needs_dt() {
        let cfg = Config::parse("[simulate]\nengine = euler\nn = 10\nseed = 1\n").unwrap();
        assert!(cfg.simulate(false).unwrap_err().0.contains("dt"));
    }

    #[test]
    fn missing_measure_named() {
        let cfg = Config::parse("[rule]\nkind = tmax\n").unwrap();
        assert!(cfg.measure().unwrap_err().0.contains("[measure]"));
    }

    #[test]
    fn quantile_measure() {
        let cfg = Config::parse("[measure]\nquantile = 2*x - 1\ncount = 4\n").unwrap();
        let mu = cfg.measure().unwrap();
        assert_eq!(mu.len(), 4);
        assert!(mu.mean().abs() < 1e-15);
    }
}
